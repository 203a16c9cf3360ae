//! Huber smoothing with extrapolation to the nonsmooth limit.
//!
//! Each `w|d|` is replaced by `w h_ε(d)` with `h_ε(d) = d²/(2ε)` for
//! `|d| ≤ ε` and `|d| - ε/2` otherwise. The smoothed objective has a
//! gradient with Lipschitz constant `λ_max(Q) + max w / ε`, is minimized by
//! accelerated gradient descent, and the minimizers are extrapolated to
//! `ε = 0` through the Lagrange polynomial in `ε`. Once `ε` is below the
//! smallest nonzero slip the minimizer is affine in `ε`, so the
//! extrapolation is exact up to the descent tolerance.

use nalgebra::DVector;

use crate::constitutive::State;
use crate::error::{Error, Result};

use super::tiny::{QuadraticModel, TinyProblem};

const GRADIENT_TOLERANCE: f64 = 1e-12;
const MAX_ITERATIONS: usize = 2_000_000;

#[derive(Clone, Debug)]
pub struct SmoothedSolution {
    pub state: State,
    /// Minimal smoothed energies (without constant terms), one per `ε`.
    pub smoothed_energies: Vec<f64>,
    /// Descent iterations per `ε`.
    pub iterations: Vec<usize>,
}

fn huber(d: f64, eps: f64) -> f64 {
    if d.abs() <= eps {
        0.5 * d * d / eps
    } else {
        d.abs() - 0.5 * eps
    }
}

fn objective(model: &QuadraticModel, x: &DVector<f64>, eps: f64) -> f64 {
    model.smooth(x)
        + (0..model.gamma_dofs.len())
            .map(|k| model.weights[k] * huber(x[model.n_u + k], eps))
            .sum::<f64>()
}

fn gradient(model: &QuadraticModel, x: &DVector<f64>, eps: f64) -> DVector<f64> {
    let mut g = &model.q * x + &model.b;
    for k in 0..model.gamma_dofs.len() {
        g[model.n_u + k] += model.weights[k] * (x[model.n_u + k] / eps).clamp(-1.0, 1.0);
    }
    g
}

fn minimize(model: &QuadraticModel, eps: f64, x0: DVector<f64>, lmax: f64, lmin: f64) -> Result<(DVector<f64>, usize)> {
    let wmax = model.weights.iter().fold(0.0f64, |m, w| m.max(*w));
    let l = lmax + wmax / eps;
    let tol = GRADIENT_TOLERANCE * model.b.amax().max(wmax).max(f64::MIN_POSITIVE);
    let kappa = (l / lmin).sqrt();
    let momentum = (kappa - 1.0) / (kappa + 1.0);
    let mut x = x0;
    let mut y = x.clone();
    let mut fx = objective(model, &x, eps);
    for it in 0..MAX_ITERATIONS {
        let gx = gradient(model, &x, eps);
        if gx.amax() <= tol {
            return Ok((x, it));
        }
        let gy = gradient(model, &y, eps);
        let next = &y - gy / l;
        let fn_ = objective(model, &next, eps);
        if fn_ > fx && y != x {
            // restart the momentum from the last accepted point
            y.clone_from(&x);
            continue;
        }
        y = &next + (&next - &x) * momentum;
        x = next;
        fx = fn_;
    }
    Err(Error::NonConvergence {
        step: 0,
        iterations: MAX_ITERATIONS,
        residual: gradient(model, &x, eps).amax(),
        energy_decrease: f64::NAN,
    })
}

/// `eps_list` must be strictly decreasing and hold at least three positive
/// values.
pub fn oracle_smoothed(tp: &TinyProblem, eps_list: &[f64]) -> Result<SmoothedSolution> {
    if eps_list.len() < 3 || eps_list.iter().any(|e| !(*e > 0.0)) || eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidModel(
            "smoothing parameters must be positive, strictly decreasing and at least three".into(),
        ));
    }
    let model = tp.model()?;
    let eig = model.q.clone().symmetric_eigenvalues();
    let (lmin, lmax) = (eig.min(), eig.max());
    if !(lmin > 0.0) {
        return Err(Error::InvalidModel(format!(
            "the smooth part of the tiny problem is not positive definite (smallest eigenvalue {lmin})"
        )));
    }
    let mut xs = Vec::with_capacity(eps_list.len());
    let mut energies = Vec::with_capacity(eps_list.len());
    let mut iterations = Vec::with_capacity(eps_list.len());
    let mut x = DVector::zeros(model.dim());
    for &eps in eps_list {
        let (xe, it) = minimize(&model, eps, x, lmax, lmin)?;
        energies.push(objective(&model, &xe, eps));
        iterations.push(it);
        x = xe.clone();
        xs.push(xe);
    }
    // Lagrange interpolation evaluated at ε = 0
    let mut limit = DVector::zeros(model.dim());
    for (i, xi) in xs.iter().enumerate() {
        let mut c = 1.0;
        for (j, ej) in eps_list.iter().enumerate() {
            if j != i {
                c *= ej / (ej - eps_list[i]);
            }
        }
        limit += xi * c;
    }
    Ok(SmoothedSolution {
        state: model.state(tp, &limit),
        smoothed_energies: energies,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Mat3;
    use crate::grid::Vec3Field;

    #[test]
    fn zero_load_gives_zero_state() {
        let mut tp = TinyProblem::random(1);
        tp.prev = State::zero(&tp.spec, &tp.basis, &tp.m.hardening);
        tp.load.applied_gradient = Mat3::ZERO;
        tp.load.body_force = Vec3Field::zeros(tp.spec.cells());
        let sol = oracle_smoothed(&tp, &[1e-3, 5e-4, 2.5e-4]).unwrap();
        assert_eq!(sol.state.gamma.max_abs(), 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        let tp = TinyProblem::random(1);
        assert!(oracle_smoothed(&tp, &[1e-3, 1e-4]).is_err());
        assert!(oracle_smoothed(&tp, &[1e-4, 1e-3, 1e-5]).is_err());
    }
}
