//! Predicted and sampled coercivity constants of the bilinear form.
//!
//! For `θ ∈ (0, 1)` and `z = (v, q, β)`,
//!
//! ```text
//! a(z, z) ≥ m₀(1-θ)|sym ∇v|² + (k + m₀c(1-1/θ))|q|² + k|β|² + μL_c²|Curl m̄q|²
//! ```
//!
//! where `m₀` is the ellipticity constant of the elasticity tensor, `c` bounds
//! `|sym m̄q|² ≤ c|q|²`, and `k` is half the isotropic modulus `½μk₂`
//! (using `β ≥ |q|`) or the smallest eigenvalue of the kinematic Hessian.
//! The middle coefficient is positive for `θ > m₀c/(m₀c + k)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::{Mat3, SlipBasis, Vec3};
use crate::constitutive::{bilinear_a, dislocation_density, MaterialParams, State};
use crate::error::{Error, Result};
use crate::grid::{grad, l2_norm_sq, GridSpec, SlipField, Vec3Field};

/// Largest eigenvalue of a symmetric positive semidefinite operator by power
/// iteration from a seeded random start; returns the largest Rayleigh
/// quotient encountered.
pub fn power_iteration_max_eigen(
    mut apply: impl FnMut(&[f64]) -> Vec<f64>,
    n: usize,
    iterations: usize,
    seed: u64,
) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nx = norm(&x);
    x.iter_mut().for_each(|a| *a /= nx);
    let mut best = 0.0f64;
    for _ in 0..iterations {
        let y = apply(&x);
        let rq: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        best = best.max(rq);
        let ny = norm(&y);
        if ny == 0.0 {
            break;
        }
        x = y.into_iter().map(|a| a / ny).collect();
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coercivity {
    /// Guaranteed lower bound `a(z, z) ≥ C N(z)`.
    pub constant: f64,
    pub theta: f64,
    pub m0: f64,
    /// The hardening coefficient `k` of the bound.
    pub k: f64,
    /// `c = max(1, λ_max(sym Gram))`.
    pub gram_constant: f64,
    /// Lower end of the admissible `θ` window.
    pub theta_min: f64,
    /// False when `L_c = 0`: the curl term is then dropped from both sides.
    pub includes_curl: bool,
}

/// `min{m₀(1-θ), k + m₀c(1-1/θ), k, μL_c²}` maximized over the admissible
/// window by golden-section search. `defect = None` drops the last entry.
pub fn coercivity_constant(m0: f64, k: f64, c: f64, defect: Option<f64>) -> Result<(f64, f64, f64)> {
    if !(k > 0.0) || !(m0 > 0.0) {
        return Err(Error::InvalidModel(format!(
            "empty coercivity window: need positive hardening and ellipticity, got k = {k}, m0 = {m0}"
        )));
    }
    let lo = m0 * c / (m0 * c + k);
    let f = |t: f64| {
        let mut v = (m0 * (1.0 - t)).min(k + m0 * c * (1.0 - 1.0 / t)).min(k);
        if let Some(d) = defect {
            v = v.min(d);
        }
        v
    };
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, 1.0);
    for _ in 0..200 {
        let x1 = b - r * (b - a);
        let x2 = a + r * (b - a);
        if f(x1) < f(x2) {
            a = x1;
        } else {
            b = x2;
        }
    }
    let theta = 0.5 * (a + b);
    Ok((f(theta), theta, lo))
}

pub fn predicted_coercivity(m: &MaterialParams, basis: &SlipBasis) -> Result<Coercivity> {
    let k = if m.hardening.is_isotropic() {
        0.5 * m.iso_modulus()
    } else {
        m.kinematic_min_eigen(basis)
    };
    let m0 = m.elastic.m0();
    let c = basis.sym_gram_max_eigen().max(1.0);
    let includes_curl = m.lc > 0.0;
    let (constant, theta, theta_min) =
        coercivity_constant(m0, k, c, includes_curl.then(|| m.defect_modulus()))?;
    Ok(Coercivity {
        constant,
        theta,
        m0,
        k,
        gram_constant: c,
        theta_min,
        includes_curl,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeReport {
    pub min_quotient: f64,
    pub samples: usize,
    pub seed: u64,
    pub includes_curl: bool,
}

/// The quotient `a(z, z) / N(z)` of one direction `z = (v, q, β)`.
pub fn rayleigh_quotient(
    v: &Vec3Field,
    q: &SlipField,
    beta: Option<&SlipField>,
    m: &MaterialParams,
    basis: &SlipBasis,
    spec: &GridSpec,
) -> Result<f64> {
    let z = State {
        u: v.clone(),
        applied_gradient: Mat3::ZERO,
        gamma: q.clone(),
        eta: beta.cloned(),
    };
    let a = bilinear_a(&z, &z, m, basis, spec)?;
    let sv = grad(v, spec)?.map(Mat3::sym);
    let mut nrm = l2_norm_sq(&sv, spec)? + l2_norm_sq(q, spec)?;
    if let (true, Some(b)) = (m.hardening.is_isotropic(), beta) {
        nrm += l2_norm_sq(b, spec)?;
    }
    if m.lc > 0.0 {
        nrm += l2_norm_sq(&dislocation_density(q, basis, spec)?, spec)?;
    }
    Ok(a / nrm)
}

/// Smallest sampled quotient over `n_samples` seeded random directions with
/// `v = 0` on Dirichlet cells and `β ≥ |q|`.
pub fn coercivity_probe_detailed(
    m: &MaterialParams,
    basis: &SlipBasis,
    spec: &GridSpec,
    n_samples: usize,
    seed: u64,
) -> Result<ProbeReport> {
    if n_samples == 0 {
        return Err(Error::InvalidModel("the probe needs at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = spec.cells();
    let n = basis.len();
    let free = spec.free_cells();
    let mut min_q = f64::INFINITY;
    for _ in 0..n_samples {
        let sv = 10f64.powf(rng.random_range(-1.0..1.0));
        let sq = 10f64.powf(rng.random_range(-1.0..1.0));
        let v = Vec3Field::from_vec(
            (0..cells)
                .map(|c| {
                    let r = Vec3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    ) * sv;
                    if free[c] {
                        r
                    } else {
                        Vec3::ZERO
                    }
                })
                .collect(),
        );
        let q = SlipField::from_fn(cells, n, |_, _| sq * rng.random_range(-1.0..1.0));
        let beta = m.hardening.is_isotropic().then(|| {
            SlipField::from_vec(
                n,
                q.values()
                    .iter()
                    .map(|x| x.abs() + sq * rng.random_range(0.0..1.0))
                    .collect(),
            )
            .expect("sized")
        });
        let rq = rayleigh_quotient(&v, &q, beta.as_ref(), m, basis, spec)?;
        min_q = min_q.min(rq);
    }
    Ok(ProbeReport {
        min_quotient: min_q,
        samples: n_samples,
        seed,
        includes_curl: m.lc > 0.0,
    })
}

pub fn coercivity_probe(m: &MaterialParams, basis: &SlipBasis, spec: &GridSpec, n_samples: usize, seed: u64) -> Result<f64> {
    Ok(coercivity_probe_detailed(m, basis, spec, n_samples, seed)?.min_quotient)
}
