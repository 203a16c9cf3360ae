//! Proximal maps of the per-slip nonsmooth terms.

use crate::error::{check_len, Result};
use crate::grid::SlipField;

/// Minimizer of `½ t⁻¹ (d - x)² + σ₀ |d| + ½ μk₂ (η_prev + |d|)²`.
///
/// Inputs exactly on the threshold return 0.
pub fn prox_scalar_iso(x: f64, t: f64, sigma0: f64, mu_k2: f64, eta_prev: f64) -> f64 {
    let thr = t * (sigma0 + mu_k2 * eta_prev);
    if x.abs() <= thr {
        0.0
    } else {
        x.signum() * (x.abs() - thr) / (1.0 + t * mu_k2)
    }
}

/// Soft threshold: minimizer of `½ t⁻¹ (d - x)² + σ₀ |d|`.
pub fn prox_scalar_kin(x: f64, t: f64, sigma0: f64) -> f64 {
    prox_scalar_iso(x, t, sigma0, 0.0, 0.0)
}

/// `η = η_prev + |Δγ|`: the smallest hardening variables compatible with the
/// increment, hence the optimal ones when the hardening energy increases in η.
pub fn eliminate_eta(dgamma: &SlipField, eta_prev: &SlipField) -> Result<SlipField> {
    check_len(eta_prev.n_slip(), dgamma.n_slip())?;
    check_len(eta_prev.values().len(), dgamma.values().len())?;
    let values = eta_prev
        .values()
        .iter()
        .zip(dgamma.values())
        .map(|(e, d)| e + d.abs())
        .collect();
    SlipField::from_vec(dgamma.n_slip(), values)
}

fn project(basis: &[Vec<f64>], x: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for v in basis {
        let s: f64 = v.iter().zip(x).map(|(a, b)| a * b).sum();
        for (o, a) in out.iter_mut().zip(v) {
            *o += s * a;
        }
    }
}

/// Minimizer of `½ |P(target - u)|²` over the box `|u_α| ≤ half_width_α`,
/// where `P` projects onto the span of the orthonormal vectors `basis`.
///
/// Accelerated projected gradient with unit step (P has norm 1) and restart.
pub(crate) fn box_projected_min(basis: &[Vec<f64>], target: &[f64], half_width: &[f64]) -> Vec<f64> {
    let n = target.len();
    let clip = |u: &mut [f64]| {
        for (x, w) in u.iter_mut().zip(half_width) {
            *x = x.clamp(-w, *w);
        }
    };
    let objective = |u: &[f64], scratch: &mut [f64]| {
        let r: Vec<f64> = target.iter().zip(u).map(|(t, a)| t - a).collect();
        project(basis, &r, scratch);
        0.5 * scratch.iter().map(|x| x * x).sum::<f64>()
    };
    let scale = 1.0 + target.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut x = vec![0.0; n];
    clip(&mut x);
    let mut y = x.clone();
    let mut scratch = vec![0.0; n];
    let mut fx = objective(&x, &mut scratch);
    let mut theta = 1.0f64;
    for _ in 0..20_000 {
        // gradient of ½|P(target - u)|² is P(u - target)
        let r: Vec<f64> = y.iter().zip(target).map(|(a, t)| a - t).collect();
        project(basis, &r, &mut scratch);
        let mut z: Vec<f64> = y.iter().zip(&scratch).map(|(a, g)| a - g).collect();
        clip(&mut z);
        let fz = objective(&z, &mut scratch);
        if fz > fx {
            if y != x {
                y.clone_from(&x);
                theta = 1.0;
                continue;
            }
            break;
        }
        let step = z.iter().zip(&x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let beta = (theta - 1.0) / next;
        y = z.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
        x = z;
        fx = fz;
        theta = next;
        if step <= 1e-17 * scale {
            break;
        }
    }
    x
}

/// Exact prox of `Σ w_α |d_α| + ½ c |d|²` with step `t`, restricted to the
/// span of `basis`.
pub(crate) fn subspace_prox(basis: &[Vec<f64>], x: &[f64], t: f64, weights: &[f64], c: f64) -> Vec<f64> {
    // min over d in S of ½ a |d - y|² + Σ w |d| with a = 1/t + c, y = x / (t a);
    // its dual is a box-constrained least-squares problem in u = z / a
    let a = 1.0 / t + c;
    let y: Vec<f64> = x.iter().map(|v| v / (t * a)).collect();
    let hw: Vec<f64> = weights.iter().map(|w| w / a).collect();
    let u = box_projected_min(basis, &y, &hw);
    let r: Vec<f64> = y.iter().zip(&u).map(|(p, q)| p - q).collect();
    let mut d = vec![0.0; x.len()];
    project(basis, &r, &mut d);
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds() {
        assert_eq!(prox_scalar_iso(0.3, 1.0, 0.2, 0.5, 0.2), 0.0);
        assert_eq!(prox_scalar_kin(0.2, 1.0, 0.2), 0.0);
        assert_eq!(prox_scalar_kin(-0.7, 2.0, 0.0), -0.7);
        assert!((prox_scalar_iso(1.0, 0.5, 0.2, 0.0, 3.0) - prox_scalar_kin(1.0, 0.5, 0.2)).abs() < 1e-16);
    }

    #[test]
    fn iso_closed_form_is_minimizer() {
        let (t, s0, k, e) = (0.7, 0.3, 1.1, 0.25);
        for x in [-2.0, -0.4, 0.1, 0.6, 3.0] {
            let d = prox_scalar_iso(x, t, s0, k, e);
            let g = crate::verify::prox_iso_reference(x, t, s0, k, e);
            assert!((d - g).abs() < 1e-12, "{x}: {d} vs {g}");
        }
    }

    #[test]
    fn eta_elimination() {
        let d = SlipField::from_vec(2, vec![0.0, -0.5, 0.25, 0.0]).unwrap();
        let e = SlipField::from_vec(2, vec![1.0, 0.0, 0.5, 0.5]).unwrap();
        let out = eliminate_eta(&d, &e).unwrap();
        assert_eq!(out.values(), &[1.0, 0.5, 0.75, 0.5]);
        let zero = SlipField::zeros(2, 2);
        assert_eq!(eliminate_eta(&zero, &e).unwrap(), e);
    }

    #[test]
    fn subspace_prox_full_space_is_separable() {
        let basis = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let x = [0.9, -0.05];
        let d = subspace_prox(&basis, &x, 0.5, &[0.4, 0.4], 0.3);
        let expect = [prox_scalar_iso(0.9, 0.5, 0.4, 0.3, 0.0), 0.0];
        for (a, b) in d.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn subspace_prox_on_a_line() {
        // S = span (1, 1)/√2: d = s (1, 1), objective ½(s-x1)²/t + ½(s-x2)²/t + 2 w |s|,
        // minimized by soft-thresholding the mean at t w
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let basis = vec![vec![r, r]];
        let (t, w) = (1.0, 0.1);
        for x in [[1.0, 0.4], [-0.05, 0.1], [-2.0, 0.3]] {
            let s = prox_scalar_kin(0.5 * (x[0] + x[1]), t, w);
            let d = subspace_prox(&basis, &x, t, &[w, w], 0.0);
            assert!((d[0] - s).abs() < 1e-14 && (d[1] - s).abs() < 1e-14, "{x:?}: {d:?} vs {s}");
        }
    }
}
