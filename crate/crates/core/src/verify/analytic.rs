//! Homogeneous simple shear with one slip system.
//!
//! With slip direction `e₁`, plane normal `e₂` and the displacement `u₁ = g x₂`
//! imposed everywhere, every field is homogeneous, the curl terms vanish and
//! the resolved shear is `τ = μ (g - γ)`.

use crate::constitutive::{HardeningLaw, MaterialParams};
use crate::error::{Error, Result};

fn check_program(g_of_t: &[f64], m: &MaterialParams) -> Result<f64> {
    let HardeningLaw::Isotropic { k2 } = m.hardening else {
        return Err(Error::InvalidModel(format!(
            "the single-slip benchmark needs isotropic hardening, got {}",
            m.hardening.label()
        )));
    };
    let mut last = 0.0;
    for (k, g) in g_of_t.iter().enumerate() {
        if !(g.is_finite() && *g >= last) {
            return Err(Error::NonMonotoneLoad { index: k });
        }
        last = *g;
    }
    Ok(k2)
}

/// `γ(t) = max(0, μ g(t) - σ₀) / (μ (1 + k₂))`; the hardening variable equals `γ`.
pub fn analytic_single_slip(g_of_t: &[f64], m: &MaterialParams) -> Result<Vec<f64>> {
    let k2 = check_program(g_of_t, m)?;
    let mu = m.mu();
    Ok(g_of_t
        .iter()
        .map(|g| (mu * g - m.sigma0).max(0.0) / (mu * (1.0 + k2)))
        .collect())
}

/// Stepwise scalar return map: elastic trial, yield check and consistent
/// slip increment. Returns `(γ, η)` after every entry of `g_of_t`.
pub fn return_map_single_slip(g_of_t: &[f64], m: &MaterialParams) -> Result<Vec<(f64, f64)>> {
    let k2 = check_program(g_of_t, m)?;
    let mu = m.mu();
    let (mut gamma, mut eta) = (0.0f64, 0.0f64);
    let mut out = Vec::with_capacity(g_of_t.len());
    for g in g_of_t {
        let trial = mu * (g - gamma);
        let phi = trial.abs() - m.sigma0 - mu * k2 * eta;
        if phi > 0.0 {
            // φ(γ + Δ) = 0 with τ = μ(g - γ - Δ) and η + |Δ|
            let d = phi / (mu + mu * k2);
            gamma += d * trial.signum();
            eta += d;
        }
        out.push((gamma, eta));
    }
    Ok(out)
}
