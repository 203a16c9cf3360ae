//! Time-incremental solution of the evolution problem.
//!
//! Each load step minimizes the incremental functional
//!
//! ```text
//! E_n(u, γ) = ½ a(w, w) - <ℓ_n, u> + ∫ Σ_α σ₀ |γ^α - γ^α_{n-1}|
//! ```
//!
//! over displacements matching the Dirichlet data and slips satisfying the
//! micro-hard trace condition. For isotropic hardening the hardening variables
//! are eliminated as `η = η_{n-1} + |Δγ|`, which turns each step into an
//! unconstrained nonsmooth problem in `Δγ`.
//!
//! The minimization runs accelerated proximal gradient on the slips with the
//! displacement eliminated: every iteration solves the displacement block by
//! conjugate gradients, and the objective is monitored for monotone descent
//! with momentum restart.

mod cg;
mod coercivity;
mod problem;
mod prox;
mod step;

pub use cg::{conjugate_gradient, CgOutcome};
pub use coercivity::{
    coercivity_probe, coercivity_probe_detailed, power_iteration_max_eigen, predicted_coercivity, Coercivity,
    ProbeReport,
};
pub use prox::{eliminate_eta, prox_scalar_iso, prox_scalar_kin};
pub use step::{
    displacement_solve, incremental_energy, incremental_step, kkt_residual, lipschitz_estimate, run_evolution,
    run_evolution_streaming, slip_update, SlipUpdate, StepOutcome,
};

use crate::algebra::Mat3;
use crate::constitutive::EnergyBreakdown;
use crate::error::{Error, Result};
use crate::grid::{TraceMode, Vec3Field};

/// How the slip iteration of a step is started.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Initialization {
    /// From the previous slips.
    #[default]
    Previous,
    /// From the slips that minimize the step functional with the displacement
    /// frozen at the elastic predictor.
    BlockPredictor,
}

impl Initialization {
    pub fn label(self) -> &'static str {
        match self {
            Initialization::Previous => "previous",
            Initialization::BlockPredictor => "block-predictor",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "previous" => Some(Initialization::Previous),
            "block-predictor" => Some(Initialization::BlockPredictor),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Relative decrease of the step functional below which the iteration
    /// may stop.
    pub tol_energy: f64,
    /// KKT residual bound (residuals are already scaled by σ₀).
    pub tol_kkt: f64,
    pub max_outer: usize,
    /// `None` selects `10 √n_dof`.
    pub max_cg: Option<usize>,
    pub cg_tol: f64,
    /// Restart the momentum whenever the objective increases.
    pub fista_restart: bool,
    pub trace_mode: TraceMode,
    pub init: Initialization,
    pub power_iterations: usize,
    /// Seed of the power-iteration start vector.
    pub power_seed: u64,
    /// Safety factor applied to the power-iteration eigenvalue.
    pub lipschitz_margin: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_energy: 1e-10,
            tol_kkt: 1e-6,
            max_outer: 500,
            max_cg: None,
            cg_tol: 1e-10,
            fista_restart: true,
            trace_mode: TraceMode::Kernel,
            init: Initialization::Previous,
            power_iterations: 50,
            power_seed: 0x6772_6164,
            lipschitz_margin: 1.1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol_energy", self.tol_energy),
            ("tol_kkt", self.tol_kkt),
            ("cg_tol", self.cg_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidModel(format!("solver.{name} must be > 0, got {v}")));
            }
        }
        if self.max_outer == 0 || self.max_cg == Some(0) || self.power_iterations == 0 {
            return Err(Error::InvalidModel("solver iteration caps must be >= 1".into()));
        }
        if !(self.lipschitz_margin >= 1.0) {
            return Err(Error::InvalidModel(format!(
                "solver.lipschitz_margin must be >= 1, got {}",
                self.lipschitz_margin
            )));
        }
        Ok(())
    }
}

/// Load data of one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepLoad {
    pub time: f64,
    /// Homogeneous gradient `G` of the prescribed displacement `G·x`.
    pub applied_gradient: Mat3,
    pub body_force: Vec3Field,
}

/// Piecewise-constant-in-time load history starting from the unloaded state.
///
/// Dirichlet data are homogeneous: `u = G_n·x` on Dirichlet cells.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadProgram {
    times: Vec<f64>,
    applied_gradients: Vec<Mat3>,
    body_force: Vec3Field,
    body_force_scales: Vec<f64>,
}

impl LoadProgram {
    /// `times[0] = 0 < times[1] < …`; gradients and scales are given at every
    /// time and must vanish at `t₀`.
    pub fn new(
        times: Vec<f64>,
        applied_gradients: Vec<Mat3>,
        body_force: Vec3Field,
        body_force_scales: Vec<f64>,
    ) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidLoad("at least one load step is required".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidLoad(format!("the first time must be 0, got {}", times[0])));
        }
        for (k, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::InvalidLoad(format!(
                    "times must increase strictly: entry {} ({}) follows {}",
                    k + 1,
                    w[1],
                    w[0]
                )));
            }
        }
        if applied_gradients.len() != times.len() || body_force_scales.len() != times.len() {
            return Err(Error::InvalidLoad(format!(
                "expected {} applied gradients and body-force scales, got {} and {}",
                times.len(),
                applied_gradients.len(),
                body_force_scales.len()
            )));
        }
        if applied_gradients.iter().any(|g| !g.is_finite()) || body_force_scales.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidLoad("load values must be finite".into()));
        }
        if !body_force.all_finite() {
            return Err(Error::InvalidLoad("body force must be finite".into()));
        }
        if applied_gradients[0] != Mat3::ZERO || body_force_scales[0] != 0.0 {
            return Err(Error::InvalidLoad(
                "the load must vanish at t = 0 since the evolution starts from the zero state".into(),
            ));
        }
        Ok(Self {
            times,
            applied_gradients,
            body_force,
            body_force_scales,
        })
    }

    /// Simple shear `u_i = g(t) x_j` with no body force.
    pub fn shear(times: Vec<f64>, amplitudes: &[f64], plane: (usize, usize), cells: usize) -> Result<Self> {
        let grads = amplitudes
            .iter()
            .map(|g| {
                let mut m = Mat3::ZERO;
                m[plane] = *g;
                m
            })
            .collect();
        let n = times.len();
        Self::new(times, grads, Vec3Field::zeros(cells), vec![0.0; n])
    }

    /// `steps` equal increments of simple shear in the (1, 2) plane up to
    /// `g_max` at time 1.
    pub fn monotone_shear(steps: usize, g_max: f64, cells: usize) -> Result<Self> {
        let times: Vec<f64> = (0..=steps).map(|k| k as f64 / steps as f64).collect();
        let amps: Vec<f64> = times.iter().map(|t| t * g_max).collect();
        Self::shear(times, &amps, (0, 1), cells)
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn applied_gradients(&self) -> &[Mat3] {
        &self.applied_gradients
    }

    pub fn body_force(&self) -> &Vec3Field {
        &self.body_force
    }

    pub fn body_force_scales(&self) -> &[f64] {
        &self.body_force_scales
    }

    /// Load at time index `n` (`0 ≤ n ≤ steps`).
    pub fn step_load(&self, n: usize) -> StepLoad {
        StepLoad {
            time: self.times[n],
            applied_gradient: self.applied_gradients[n],
            body_force: self.body_force.scaled(self.body_force_scales[n]),
        }
    }
}

/// Optimality residuals of a step, all dimensionless.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KktResidual {
    /// `max (|τ_E| + g - σ₀)₊ / σ₀`.
    pub feasibility: f64,
    /// `max |Δγ| |φ| / (σ₀ |Δγ|_∞)`.
    pub complementarity: f64,
    /// Misalignment of `Δγ` and `τ_E` on plastifying components.
    pub alignment: f64,
    /// `max |Δη - |Δγ||`.
    pub eta_consistency: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.feasibility
            .max(self.complementarity)
            .max(self.alignment)
            .max(self.eta_consistency)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub time: f64,
    pub outer_iterations: usize,
    pub cg_iterations: usize,
    pub energies: EnergyBreakdown,
    /// `∫ Σ_α D(Δγ^α, Δη^α)`.
    pub dissipation: f64,
    /// Body-force work increment `<f_n, u_n - u_{n-1}>`.
    pub external_work: f64,
    /// Step functional at the new state.
    pub incremental_energy: f64,
    pub kkt: KktResidual,
    /// `E_n(w_n) - E_n(w_{n-1})`; nonpositive up to rounding.
    pub stability_gap: f64,
    pub lipschitz: f64,
}

pub const CSV_HEADER: &str = "step,time,outer_iterations,cg_iterations,elastic,defect,hardening,dissipation,external_work,kkt_feasibility,kkt_complementarity,kkt_alignment,kkt_eta_consistency,stability_gap";

impl StepReport {
    pub fn csv_row(&self) -> String {
        use crate::snapshot::format_number as f;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.step,
            f(self.time),
            self.outer_iterations,
            self.cg_iterations,
            f(self.energies.elastic),
            f(self.energies.defect),
            f(self.energies.hardening),
            f(self.dissipation),
            f(self.external_work),
            f(self.kkt.feasibility),
            f(self.kkt.complementarity),
            f(self.kkt.alignment),
            f(self.kkt.eta_consistency),
            f(self.stability_gap),
        )
    }
}
