//! Exhaustive sign enumeration.
//!
//! Fixing the sign pattern `s` of the slip increments turns every `|d_i|`
//! into `s_i d_i`, so the step functional becomes a quadratic whose
//! stationary point solves a linear system. A pattern is consistent when the
//! solution has the assumed signs and, where `s_i = 0`, the smooth gradient
//! lies in `[-w_i, w_i]`. By convexity the consistent solutions are exactly
//! the minimizers.

use nalgebra::{DMatrix, DVector};

use crate::constitutive::State;
use crate::error::{Error, Result};

use super::tiny::TinyProblem;

/// Relative slack of the consistency checks.
const SLACK: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct ActiveSetSolution {
    pub state: State,
    pub energy: f64,
    /// Signs of the free slip increments, in cell-major order.
    pub pattern: Vec<i8>,
    pub consistent_patterns: usize,
}

pub fn oracle_active_set(tp: &TinyProblem) -> Result<ActiveSetSolution> {
    let model = tp.model()?;
    let n_g = model.gamma_dofs.len();
    let n_u = model.n_u;
    let dim = model.dim();
    let gscale = model.b.amax().max(model.weights.iter().fold(0.0f64, |m, w| m.max(*w)));
    let mut best: Option<(f64, DVector<f64>, Vec<i8>)> = None;
    let mut consistent = 0;
    let mut pattern = vec![-1i8; n_g];
    for code in 0..3usize.pow(n_g as u32) {
        // lexicographic order over {-1, 0, 1}^n_g
        let mut c = code;
        for k in (0..n_g).rev() {
            pattern[k] = (c % 3) as i8 - 1;
            c /= 3;
        }
        let active: Vec<usize> = (0..n_u)
            .chain((0..n_g).filter(|k| pattern[*k] != 0).map(|k| n_u + k))
            .collect();
        let r = active.len();
        let mut a = DMatrix::zeros(r, r);
        let mut rhs = DVector::zeros(r);
        for (p, &i) in active.iter().enumerate() {
            rhs[p] = -model.b[i];
            if i >= n_u {
                rhs[p] -= pattern[i - n_u] as f64 * model.weights[i - n_u];
            }
            for (q, &j) in active.iter().enumerate() {
                a[(p, q)] = model.q[(i, j)];
            }
        }
        let Some(sol) = a.clone().cholesky().map(|ch| ch.solve(&rhs)).or_else(|| a.lu().solve(&rhs)) else {
            continue;
        };
        let mut x = DVector::zeros(dim);
        for (p, &i) in active.iter().enumerate() {
            x[i] = sol[p];
        }
        let xscale = x.amax();
        let grad = &model.q * &x + &model.b;
        let ok = (0..n_g).all(|k| {
            let d = x[n_u + k];
            match pattern[k] {
                0 => grad[n_u + k].abs() <= model.weights[k] + SLACK * gscale,
                s => s as f64 * d >= -SLACK * xscale,
            }
        });
        if !ok {
            continue;
        }
        consistent += 1;
        let state = model.state(tp, &x);
        let e = tp.energy(&state)?;
        if best.as_ref().is_none_or(|(be, _, _)| e < *be) {
            best = Some((e, x, pattern.clone()));
        }
    }
    let (energy, x, pattern) = best.ok_or(Error::NoConsistentPattern)?;
    Ok(ActiveSetSolution {
        state: model.state(tp, &x),
        energy,
        pattern,
        consistent_patterns: consistent,
    })
}
