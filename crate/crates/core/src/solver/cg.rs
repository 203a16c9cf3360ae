//! Conjugate gradients for the symmetric positive definite displacement block.

use crate::error::{Error, Result};
use crate::grid::{Field, Pointwise};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `A x = b` starting from the current `x`.
///
/// Stops once `|b - A x| ≤ tol |b|`. Hitting `max_iter` first is reported as
/// [`Error::CgStall`] together with a Lanczos estimate of the condition number
/// seen by the iteration.
pub fn conjugate_gradient<T: Pointwise>(
    mut apply: impl FnMut(&Field<T>) -> Field<T>,
    b: &Field<T>,
    x: &mut Field<T>,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let bnorm = b.dot_sum(b).sqrt();
    if bnorm == 0.0 {
        *x = Field::zeros(b.len());
        return Ok(CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = b.lin_comb(1.0, &apply(x), -1.0);
    let mut rr = r.dot_sum(&r);
    let target = tol * bnorm;
    if rr.sqrt() <= target {
        return Ok(CgOutcome {
            iterations: 0,
            relative_residual: rr.sqrt() / bnorm,
        });
    }
    let mut p = r.clone();
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    for k in 1..=max_iter {
        let ap = apply(&p);
        let pap = p.dot_sum(&ap);
        if !(pap > 0.0) {
            return Err(stall(k, rr.sqrt() / bnorm, &alphas, &betas));
        }
        let alpha = rr / pap;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        let rr_new = r.dot_sum(&r);
        alphas.push(alpha);
        if rr_new.sqrt() <= target {
            return Ok(CgOutcome {
                iterations: k,
                relative_residual: rr_new.sqrt() / bnorm,
            });
        }
        let beta = rr_new / rr;
        betas.push(beta);
        p = r.lin_comb(1.0, &p, beta);
        rr = rr_new;
    }
    Err(stall(max_iter, rr.sqrt() / bnorm, &alphas, &betas))
}

fn stall(iterations: usize, relative_residual: f64, alphas: &[f64], betas: &[f64]) -> Error {
    Error::CgStall {
        iterations,
        relative_residual,
        condition_estimate: lanczos_condition(alphas, betas),
    }
}

/// Condition number of the Lanczos tridiagonal matrix implied by the CG
/// coefficients.
pub(crate) fn lanczos_condition(alphas: &[f64], betas: &[f64]) -> f64 {
    let n = alphas.len();
    if n == 0 {
        return f64::NAN;
    }
    let mut t = nalgebra::DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        t[(k, k)] = 1.0 / alphas[k]
            + if k > 0 {
                betas[k - 1] / alphas[k - 1]
            } else {
                0.0
            };
        if k + 1 < n {
            let off = betas[k].sqrt() / alphas[k];
            t[(k, k + 1)] = off;
            t[(k + 1, k)] = off;
        }
    }
    let ev = t.symmetric_eigenvalues();
    ev.max() / ev.min()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ScalarField;

    fn laplace_1d(x: &ScalarField) -> ScalarField {
        let n = x.len();
        ScalarField::from_fn(n, |i| {
            let l = if i > 0 { x[i - 1] } else { 0.0 };
            let r = if i + 1 < n { x[i + 1] } else { 0.0 };
            2.0 * x[i] - l - r
        })
    }

    #[test]
    fn solves_tridiagonal_system() {
        let n = 40;
        let b = ScalarField::from_fn(n, |i| (i as f64).sin());
        let mut x = ScalarField::zeros(n);
        let out = conjugate_gradient(laplace_1d, &b, &mut x, 1e-12, 100).unwrap();
        let r = b.lin_comb(1.0, &laplace_1d(&x), -1.0);
        assert!(r.dot_sum(&r).sqrt() <= 1e-12 * b.dot_sum(&b).sqrt());
        assert!(out.iterations <= n);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let mut x = ScalarField::constant(5, 1.0);
        let out = conjugate_gradient(laplace_1d, &ScalarField::zeros(5), &mut x, 1e-10, 10).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(x.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn stall_reports_condition() {
        let n = 200;
        let b = ScalarField::from_fn(n, |i| 1.0 + i as f64);
        let mut x = ScalarField::zeros(n);
        match conjugate_gradient(laplace_1d, &b, &mut x, 1e-14, 5) {
            Err(Error::CgStall { iterations, condition_estimate, .. }) => {
                assert_eq!(iterations, 5);
                assert!(condition_estimate > 1.0);
            }
            other => panic!("expected stall, got {other:?}"),
        }
    }
}
