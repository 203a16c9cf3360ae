//! Incremental steps and the evolution driver.

use crate::algebra::SlipBasis;
use crate::constitutive::{free_energy, load_ell, resolved_stresses, EnergyBreakdown, MaterialParams, State};
use crate::error::{check_len, Error, Result};
use crate::grid::{GridSpec, SlipField, TraceConstraint, Vec3Field};

use super::coercivity::power_iteration_max_eigen;
use super::problem::{kkt_core, Problem, StepData};
use super::{CgOutcome, Initialization, KktResidual, LoadProgram, SolverConfig, StepLoad, StepReport};

/// Maximum number of step-size doublings before giving up.
const MAX_DOUBLINGS: usize = 40;

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: State,
    pub report: StepReport,
}

/// Result of [`slip_update`].
#[derive(Clone, Debug, PartialEq)]
pub struct SlipUpdate {
    pub gamma: SlipField,
    /// Objective after every accepted iterate, starting with the initial one.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

enum Mode<'b> {
    Reduced,
    FixedU(&'b Vec3Field),
}

struct Fista {
    x: SlipField,
    w: Vec3Field,
    phi: f64,
    iterations: usize,
    cg_iterations: usize,
    kkt: KktResidual,
    history: Vec<f64>,
    converged: bool,
    last_decrease: f64,
}

/// Upper bound on the largest eigenvalue of the quadratic slip block.
pub fn lipschitz_estimate(m: &MaterialParams, basis: &SlipBasis, spec: &GridSpec) -> Result<f64> {
    let cfg = SolverConfig::default();
    let problem = Problem::new(spec, basis, m, &cfg);
    estimate_on(&problem, &cfg)
}

fn estimate_on(problem: &Problem, cfg: &SolverConfig) -> Result<f64> {
    let n = problem.basis.len();
    let cells = problem.cells();
    let mut err = None;
    let lam = power_iteration_max_eigen(
        |x| match SlipField::from_vec(n, x.to_vec()).and_then(|q| problem.gamma_block_apply(&q)) {
            Ok(y) => y.values().to_vec(),
            Err(e) => {
                err = Some(e);
                vec![0.0; x.len()]
            }
        },
        cells * n,
        cfg.power_iterations,
        cfg.power_seed,
    );
    match err {
        Some(e) => Err(e),
        None => Ok(cfg.lipschitz_margin * lam),
    }
}

fn energy_scale(problem: &Problem) -> f64 {
    let m = problem.m;
    problem.spec.volume() * m.sigma0 * m.sigma0 / m.mu()
}

fn fista(
    problem: &Problem,
    sd: &StepData,
    mode: Mode,
    x0: SlipField,
    w0: Vec3Field,
    lipschitz: &mut f64,
    cfg: &SolverConfig,
) -> Result<Fista> {
    let scale = energy_scale(problem);
    let solve = |gamma: &SlipField, warm: &Vec3Field| -> Result<(Vec3Field, CgOutcome)> {
        match mode {
            Mode::Reduced => problem.solve_u(sd, gamma, warm),
            Mode::FixedU(w) => Ok((
                w.clone(),
                CgOutcome {
                    iterations: 0,
                    relative_residual: 0.0,
                },
            )),
        }
    };
    let mut x = x0;
    let mut wx = w0;
    let mut phi_x = problem.energy(sd, &wx, &x)?.total;
    let mut y = x.clone();
    let mut wy = wx.clone();
    let mut theta = 1.0f64;
    let mut cg_total = 0;
    let mut history = vec![phi_x];
    let mut doublings = 0;
    let mut last_decrease = f64::INFINITY;
    let mut kkt;
    for it in 1..=cfg.max_outer {
        let t = 1.0 / *lipschitz;
        let tau_y = problem.tau(sd, &wy, &y)?;
        let v = y.lin_comb(1.0, &tau_y, t);
        let z = problem.prox(sd, &v, t);
        let (wz, out) = solve(&z, &wy)?;
        cg_total += out.iterations;
        let phi_z = problem.energy(sd, &wz, &z)?.total;
        let slack = 1e-13 * phi_x.abs().max(scale);
        let at_x = y == x;
        if phi_z > phi_x + slack {
            if !at_x && cfg.fista_restart {
                y.clone_from(&x);
                wy.clone_from(&wx);
                theta = 1.0;
                continue;
            }
            if at_x {
                let tau_x = problem.tau(sd, &wx, &x)?;
                kkt = problem.kkt(sd, &tau_x, &x);
                if kkt.max() <= cfg.tol_kkt {
                    return Ok(Fista {
                        x,
                        w: wx,
                        phi: phi_x,
                        iterations: it,
                        cg_iterations: cg_total,
                        kkt,
                        history,
                        converged: true,
                        last_decrease: 0.0,
                    });
                }
                doublings += 1;
                if doublings > MAX_DOUBLINGS {
                    break;
                }
                *lipschitz *= 2.0;
                continue;
            }
        }
        let decrease = (phi_x - phi_z).max(0.0) / phi_z.abs().max(scale);
        last_decrease = decrease;
        let next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let beta = (theta - 1.0) / next;
        y = z.lin_comb(1.0 + beta, &x, -beta);
        wy = wz.lin_comb(1.0 + beta, &wx, -beta);
        x = z;
        wx = wz;
        phi_x = phi_z;
        theta = next;
        history.push(phi_x);
        if decrease <= cfg.tol_energy {
            let tau_x = problem.tau(sd, &wx, &x)?;
            kkt = problem.kkt(sd, &tau_x, &x);
            if kkt.max() <= cfg.tol_kkt {
                return Ok(Fista {
                    x,
                    w: wx,
                    phi: phi_x,
                    iterations: it,
                    cg_iterations: cg_total,
                    kkt,
                    history,
                    converged: true,
                    last_decrease: decrease,
                });
            }
        }
    }
    let tau_x = problem.tau(sd, &wx, &x)?;
    let kkt = problem.kkt(sd, &tau_x, &x);
    let converged = kkt.max() <= cfg.tol_kkt && last_decrease <= cfg.tol_energy;
    Ok(Fista {
        x,
        w: wx,
        phi: phi_x,
        iterations: cfg.max_outer,
        cg_iterations: cg_total,
        kkt,
        history,
        converged,
        last_decrease,
    })
}

struct Driver<'a> {
    problem: Problem<'a>,
    lipschitz: f64,
    cfg: &'a SolverConfig,
}

impl<'a> Driver<'a> {
    fn new(m: &'a MaterialParams, basis: &'a SlipBasis, spec: &'a GridSpec, cfg: &'a SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let problem = Problem::new(spec, basis, m, cfg);
        let lipschitz = estimate_on(&problem, cfg)?;
        if !(lipschitz.is_finite() && lipschitz > 0.0) {
            return Err(Error::InvalidModel(format!(
                "slip block has no positive curvature estimate ({lipschitz})"
            )));
        }
        Ok(Self { problem, lipschitz, cfg })
    }

    fn step(&mut self, prev: &State, load: &StepLoad, index: usize) -> Result<StepOutcome> {
        let p = &self.problem;
        let sd = p.step_data(load, prev)?;
        let mut w_prev = prev.fluctuation(p.spec);
        p.mask(&mut w_prev);
        let competitor = p.energy(&sd, &w_prev, &sd.gamma_prev)?.total;
        let (w0, out0) = p.solve_u(&sd, &sd.gamma_prev, &w_prev)?;
        let mut cg_iterations = out0.iterations;
        let mut outer = 0;
        let (x0, wx0) = match self.cfg.init {
            Initialization::Previous => (sd.gamma_prev.clone(), w0),
            Initialization::BlockPredictor => {
                let mut l = self.lipschitz;
                let pred = fista(p, &sd, Mode::FixedU(&w0), sd.gamma_prev.clone(), w0.clone(), &mut l, self.cfg)?;
                outer += pred.iterations;
                let (w, out) = p.solve_u(&sd, &pred.x, &w0)?;
                cg_iterations += out.iterations;
                (pred.x, w)
            }
        };
        let mut lipschitz = self.lipschitz;
        let res = fista(p, &sd, Mode::Reduced, x0, wx0, &mut lipschitz, self.cfg)?;
        cg_iterations += res.cg_iterations;
        outer += res.iterations;
        if !res.converged {
            return Err(Error::NonConvergence {
                step: index,
                iterations: outer,
                residual: res.kkt.max(),
                energy_decrease: res.last_decrease,
            });
        }
        let en = p.energy(&sd, &res.w, &res.x)?;
        let dgamma = res.x.lin_comb(1.0, &sd.gamma_prev, -1.0);
        let eta = match &sd.eta_prev {
            Some(e) => Some(super::prox::eliminate_eta(&dgamma, e)?),
            None => None,
        };
        let state = State::from_fluctuation(&res.w, load.applied_gradient, res.x, eta, p.spec);
        let external_work = load_ell(&load.body_force, &state.u.lin_comb(1.0, &prev.u, -1.0), p.spec)?;
        let report = StepReport {
            step: index,
            time: load.time,
            outer_iterations: outer,
            cg_iterations,
            energies: EnergyBreakdown {
                elastic: en.elastic,
                defect: en.defect,
                hardening: en.hardening,
                total: en.elastic + en.defect + en.hardening,
            },
            dissipation: en.dissipation,
            external_work,
            incremental_energy: res.phi,
            kkt: res.kkt,
            stability_gap: res.phi - competitor,
            lipschitz,
        };
        Ok(StepOutcome { state, report })
    }
}

/// One incremental step from `prev` under `load`.
pub fn incremental_step(
    prev: &State,
    load: &StepLoad,
    step: usize,
    m: &MaterialParams,
    basis: &SlipBasis,
    spec: &GridSpec,
    cfg: &SolverConfig,
) -> Result<StepOutcome> {
    Driver::new(m, basis, spec, cfg)?.step(prev, load, step)
}

/// Runs the whole load program, handing every converged step to `on_step`
/// as soon as it is available. Returns the final state.
pub fn run_evolution_streaming(
    m: &MaterialParams,
    basis: &SlipBasis,
    spec: &GridSpec,
    load: &LoadProgram,
    cfg: &SolverConfig,
    mut on_step: impl FnMut(&StepOutcome) -> Result<()>,
) -> Result<State> {
    m.validate_hardening(basis)?;
    check_len(spec.cells(), load.body_force().len())?;
    let mut driver = Driver::new(m, basis, spec, cfg)?;
    let mut state = State::zero(spec, basis, &m.hardening);
    for n in 1..=load.steps() {
        let out = driver.step(&state, &load.step_load(n), n)?;
        on_step(&out)?;
        state = out.state;
    }
    Ok(state)
}

pub fn run_evolution(
    m: &MaterialParams,
    basis: &SlipBasis,
    spec: &GridSpec,
    load: &LoadProgram,
    cfg: &SolverConfig,
) -> Result<Vec<StepOutcome>> {
    let mut out = Vec::with_capacity(load.steps());
    run_evolution_streaming(m, basis, spec, load, cfg, |s| {
        out.push(s.clone());
        Ok(())
    })?;
    Ok(out)
}

/// Solves the displacement block for fixed slips and returns the total
/// displacement together with the conjugate-gradient statistics.
pub fn displacement_solve(
    gamma: &SlipField,
    load: &StepLoad,
    m: &MaterialParams,
    basis: &SlipBasis,
    spec: &GridSpec,
    cfg: &SolverConfig,
) -> Result<(Vec3Field, CgOutcome)> {
    let problem = Problem::new(spec, basis, m, cfg);
    let mut prev = State::zero(spec, basis, &m.hardening);
    check_len(prev.gamma.values().len(), gamma.values().len())?;
    prev.gamma = gamma.clone();
    let mut sd = problem.step_data(load, &prev)?;
    sd.gamma_prev = gamma.clone();
    let (w, out) = problem.solve_u(&sd, gamma, &Vec3Field::zeros(spec.cells()))?;
    let s = State::from_fluctuation(&w, load.applied_gradient, gamma.clone(), None, spec);
    Ok((s.u, out))
}

/// Minimizes the step functional over the slips with the total displacement
/// `u` held fixed.
pub fn slip_update(
    u: &Vec3Field,
    prev: &State,
    load: &StepLoad,
    m: &MaterialParams,
    basis: &SlipBasis,
    spec: &GridSpec,
    cfg: &SolverConfig,
) -> Result<SlipUpdate> {
    check_len(spec.cells(), u.len())?;
    let driver = Driver::new(m, basis, spec, cfg)?;
    let p = &driver.problem;
    let sd = p.step_data(load, prev)?;
    let fixed = State {
        u: u.clone(),
        applied_gradient: load.applied_gradient,
        gamma: prev.gamma.clone(),
        eta: None,
    };
    let mut w = fixed.fluctuation(spec);
    p.mask(&mut w);
    let mut l = driver.lipschitz;
    let res = fista(p, &sd, Mode::FixedU(&w), sd.gamma_prev.clone(), w.clone(), &mut l, driver.cfg)?;
    Ok(SlipUpdate {
        gamma: res.x,
        objective_history: res.history,
        iterations: res.iterations,
        converged: res.converged,
    })
}

/// `E_n` at `s`: free energy minus body-force work plus the dissipation of
/// the slip increment from `prev`.
pub fn incremental_energy(
    s: &State,
    prev: &State,
    load: &StepLoad,
    m: &MaterialParams,
    basis: &SlipBasis,
    spec: &GridSpec,
) -> Result<f64> {
    let en = free_energy(s, m, basis, spec)?;
    let work = load_ell(&load.body_force, &s.u, spec)?;
    let d = s.gamma.lin_comb(1.0, &prev.gamma, -1.0);
    let diss = m.sigma0 * spec.cell_volume() * d.values().iter().map(|x| x.abs()).sum::<f64>();
    Ok(en.total - work + diss)
}

/// KKT residuals of `s` as the outcome of a step from `prev`.
pub fn kkt_residual(
    s: &State,
    prev: &State,
    m: &MaterialParams,
    basis: &SlipBasis,
    spec: &GridSpec,
    trace: &TraceConstraint,
) -> Result<KktResidual> {
    s.check(spec, basis)?;
    prev.check(spec, basis)?;
    let (tau, _) = resolved_stresses(s, m, basis, spec)?;
    let eta = match (&s.eta, &prev.eta) {
        (Some(e), Some(ep)) => Some((e, ep)),
        _ => None,
    };
    Ok(kkt_core(&tau, &s.gamma, &prev.gamma, eta, m, trace))
}
