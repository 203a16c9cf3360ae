//! The checks behind `gradplast verify`.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::{Mat3, SlipBasis, Vec3};
use crate::constitutive::{free_energy, HardeningLaw, MaterialParams};
use crate::grid::{
    curl_adjoint, curl_mat, div_mat, grad, grad_adjoint, l2_inner, l2_norm_sq, FaceSet, GridSpec, Mat3Field,
    Vec3Field,
};
use crate::solver::{
    coercivity_probe_detailed, incremental_step, predicted_coercivity, prox_scalar_iso, prox_scalar_kin,
    run_evolution, LoadProgram, SolverConfig,
};

use super::{analytic_single_slip, oracle_active_set, oracle_smoothed, prox_iso_reference, prox_kin_reference, TinyProblem};
use crate::algebra::ElasticModuli;
use crate::grid::Face;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Measured quantity; compared against `tolerance`.
    pub value: f64,
    pub tolerance: f64,
    pub seconds: f64,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<44} {:>10.3e} (limit {:.1e}, {:.2} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.tolerance,
            self.seconds
        )?;
        if !self.detail.is_empty() {
            write!(f, " {}", self.detail)?;
        }
        Ok(())
    }
}

/// A user scenario whose model is checked in addition to the built-in cases.
#[derive(Clone, Debug)]
pub struct ScenarioModel {
    pub spec: GridSpec,
    pub basis: SlipBasis,
    pub m: MaterialParams,
}

#[derive(Clone, Debug)]
pub struct SuiteOptions {
    pub seed: u64,
    pub tiny_instances: usize,
    pub prox_samples: usize,
    pub probe_samples: usize,
    /// Negative control: perturb the curl stencil so the identity checks fail.
    pub corrupt_curl: bool,
    pub scenario: Option<ScenarioModel>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            tiny_instances: 10,
            prox_samples: 1000,
            probe_samples: 200,
            corrupt_curl: false,
            scenario: None,
        }
    }
}

/// Tolerances used when the solver is compared against the oracles.
pub(crate) fn verification_config() -> SolverConfig {
    SolverConfig {
        tol_energy: 1e-14,
        tol_kkt: 1e-10,
        cg_tol: 1e-13,
        max_outer: 20_000,
        ..SolverConfig::default()
    }
}

fn check(name: &str, start: Instant, value: f64, tolerance: f64, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed: value <= tolerance,
        value,
        tolerance,
        seconds: start.elapsed().as_secs_f64(),
        detail,
    }
}

fn failed(name: &str, start: Instant, tolerance: f64, err: impl fmt::Display) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed: false,
        value: f64::INFINITY,
        tolerance,
        seconds: start.elapsed().as_secs_f64(),
        detail: format!("error: {err}"),
    }
}

fn curl_under_test(x: &Mat3Field, spec: &GridSpec, corrupt: bool) -> Mat3Field {
    let mut c = curl_mat(x, spec).expect("sized");
    if corrupt {
        // an extra stencil term in the first row
        let row: Vec3Field = x.map(|m| m.row(0));
        let g = grad(&row, spec).expect("sized");
        for (out, d) in c.values_mut().iter_mut().zip(g.values()) {
            out[(0, 0)] += d[(1, 0)];
        }
    }
    c
}

fn random_vec_field(rng: &mut ChaCha8Rng, cells: usize) -> Vec3Field {
    Vec3Field::from_vec(
        (0..cells)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect(),
    )
}

fn random_mat_field(rng: &mut ChaCha8Rng, cells: usize) -> Mat3Field {
    Mat3Field::from_vec(
        (0..cells)
            .map(|_| Mat3::from_row_major([0; 9].map(|_| rng.random_range(-1.0..1.0))))
            .collect(),
    )
}

/// Relative defects of the discrete identities on `n³` grids with unit edge.
/// Returns `(curl∘grad, div∘curl, adjointness)`.
pub fn identity_defects(sizes: &[usize], fields: usize, seed: u64, corrupt_curl: bool) -> (f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut cg, mut dc, mut adj) = (0.0f64, 0.0f64, 0.0f64);
    for &n in sizes {
        let spec = GridSpec::new(n, n, n, 1.0 / n as f64, FaceSet::ALL).expect("valid grid");
        let cells = spec.cells();
        for _ in 0..fields {
            let u = random_vec_field(&mut rng, cells);
            let x = random_mat_field(&mut rng, cells);
            let y = random_mat_field(&mut rng, cells);
            let nu = l2_norm_sq(&u, &spec).expect("sized").sqrt();
            let nx = l2_norm_sq(&x, &spec).expect("sized").sqrt();
            let c = curl_under_test(&grad(&u, &spec).expect("sized"), &spec, corrupt_curl);
            cg = cg.max(l2_norm_sq(&c, &spec).expect("sized").sqrt() / nu);
            let d = div_mat(&curl_under_test(&x, &spec, corrupt_curl), &spec).expect("sized");
            dc = dc.max(l2_norm_sq(&d, &spec).expect("sized").sqrt() / nx);
            // <grad u, x> = <u, grad* x> and <curl x, y> = <x, curl* y>
            let gu = grad(&u, &spec).expect("sized");
            let lhs = l2_inner(&gu, &x, &spec).expect("sized");
            let rhs = l2_inner(&u, &grad_adjoint(&x, &spec).expect("sized"), &spec).expect("sized");
            let scale = l2_norm_sq(&gu, &spec).expect("sized").sqrt() * nx;
            adj = adj.max((lhs - rhs).abs() / scale);
            let cx = curl_under_test(&x, &spec, corrupt_curl);
            let lhs = l2_inner(&cx, &y, &spec).expect("sized");
            let rhs = l2_inner(&x, &curl_adjoint(&y, &spec).expect("sized"), &spec).expect("sized");
            let ny = l2_norm_sq(&y, &spec).expect("sized").sqrt();
            let scale = l2_norm_sq(&cx, &spec).expect("sized").sqrt() * ny;
            adj = adj.max((lhs - rhs).abs() / scale);
        }
    }
    (cg, dc, adj)
}

/// Largest deviation of the closed-form prox maps from the searches over
/// `samples` random instances each. Returns `(isotropic, kinematic)`.
pub fn prox_deviation(samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut iso, mut kin) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let x = rng.random_range(-2.0..2.0);
        let t = 10f64.powf(rng.random_range(-1.0..1.0));
        let s0 = rng.random_range(0.01..0.5);
        let k = rng.random_range(0.0..2.0);
        let eta = rng.random_range(0.0..0.5);
        iso = iso.max((prox_scalar_iso(x, t, s0, k, eta) - prox_iso_reference(x, t, s0, k, eta)).abs());
        kin = kin.max((prox_scalar_kin(x, t, s0) - prox_kin_reference(x, t, s0)).abs());
    }
    (iso, kin)
}

/// Worst gaps over `count` random tiny instances:
/// `(solver energy, solver state, smoothed state)`, all relative.
pub fn tiny_gaps(count: usize, seed: u64) -> crate::error::Result<(f64, f64, f64)> {
    let cfg_base = verification_config();
    let (mut e_gap, mut s_gap, mut sm_gap) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..count as u64 {
        let tp = TinyProblem::random(seed.wrapping_mul(1000).wrapping_add(k));
        let oracle = oracle_active_set(&tp)?;
        let cfg = SolverConfig {
            trace_mode: tp.trace_mode,
            ..cfg_base.clone()
        };
        let out = incremental_step(&tp.prev, &tp.load, 1, &tp.m, &tp.basis, &tp.spec, &cfg)?;
        let e = tp.energy(&out.state)?;
        e_gap = e_gap.max((e - oracle.energy).abs() / oracle.energy.abs());
        s_gap = s_gap.max(state_gap(&tp, &out.state, &oracle.state));
        let smooth = oracle_smoothed(&tp, &smoothing_parameters(&tp))?;
        sm_gap = sm_gap.max(state_gap(&tp, &smooth.state, &oracle.state));
    }
    Ok((e_gap, s_gap, sm_gap))
}

/// Smoothing parameters well below the slip scale `σ₀/μ` of the instance.
pub fn smoothing_parameters(tp: &TinyProblem) -> Vec<f64> {
    let base = 1e-4 * tp.m.sigma0 / tp.m.mu();
    vec![base, 0.5 * base, 0.25 * base]
}

/// `max(|Δu|_∞ / u_ref, |Δγ|_∞ / γ_ref)` with references floored at the
/// elastic strain scale `σ₀/μ` (times the cell size for displacements).
pub fn state_gap(tp: &TinyProblem, a: &crate::constitutive::State, b: &crate::constitutive::State) -> f64 {
    let strain = tp.m.sigma0 / tp.m.mu();
    let du = a
        .u
        .values()
        .iter()
        .zip(b.u.values())
        .fold(0.0f64, |m, (x, y)| m.max((*x - *y).norm()));
    let uref = b.u.values().iter().fold(strain * tp.spec.h(), |m, x| m.max(x.norm()));
    let dg = a.gamma.lin_comb(1.0, &b.gamma, -1.0).max_abs();
    let gref = b.gamma.max_abs().max(strain);
    (du / uref).max(dg / gref)
}

/// The homogeneous single-slip shear scenario on an `n³` grid.
pub fn shear_benchmark_model(n: usize) -> (GridSpec, SlipBasis, MaterialParams) {
    let spec = GridSpec::new(n, n, n, 1.0 / n as f64, FaceSet::ALL)
        .expect("valid grid")
        .with_hard_faces(FaceSet::from_faces(&[Face::YMin, Face::YMax]));
    let basis = SlipBasis::from_pairs(&[(Vec3::unit(0), Vec3::unit(1))]).expect("valid system");
    let m = MaterialParams::new(
        ElasticModuli::new(1.0, 1.5).expect("valid moduli"),
        0.5,
        0.1,
        HardeningLaw::Isotropic { k2: 0.5 },
        &basis,
    )
    .expect("valid material");
    (spec, basis, m)
}

/// Worst slip error and KKT residual of the shear benchmark.
pub fn shear_benchmark(n: usize, steps: usize, g_max: f64, cfg: &SolverConfig) -> crate::error::Result<(f64, f64, f64)> {
    let (spec, basis, m) = shear_benchmark_model(n);
    let load = LoadProgram::monotone_shear(steps, g_max, spec.cells())?;
    let out = run_evolution(&m, &basis, &spec, &load, cfg)?;
    let g: Vec<f64> = load.applied_gradients()[1..].iter().map(|x| x[(0, 1)]).collect();
    let expect = analytic_single_slip(&g, &m)?;
    let (mut err, mut kkt, mut gap) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    for (s, e) in out.iter().zip(&expect) {
        for v in s.state.gamma.values() {
            err = err.max((v - e).abs());
        }
        kkt = kkt.max(s.report.kkt.max());
        let scale = s.report.incremental_energy.abs();
        gap = gap.max(s.report.stability_gap - 1e-10 * scale);
    }
    Ok((err, kkt, gap))
}

pub fn run_suite(opts: &SuiteOptions) -> Vec<CheckResult> {
    let mut out = Vec::new();

    let t = Instant::now();
    let (cg, dc, adj) = identity_defects(&[4, 8], 5, opts.seed, opts.corrupt_curl);
    out.push(check("curl of grad vanishes", t, cg, 1e-13, String::new()));
    out.push(check("div of curl vanishes", t, dc, 1e-13, String::new()));
    out.push(check("grad and curl adjoints", t, adj, 1e-12, String::new()));

    let t = Instant::now();
    let (iso, kin) = prox_deviation(opts.prox_samples, opts.seed);
    out.push(check("isotropic prox matches search", t, iso, 1e-10, format!("{} samples", opts.prox_samples)));
    out.push(check("kinematic prox matches search", t, kin, 1e-10, format!("{} samples", opts.prox_samples)));

    let t = Instant::now();
    match tiny_gaps(opts.tiny_instances, opts.seed) {
        Ok((e, s, sm)) => {
            let d = format!("{} instances", opts.tiny_instances);
            out.push(check("solver energy matches active-set oracle", t, e, 1e-8, d.clone()));
            out.push(check("solver state matches active-set oracle", t, s, 1e-6, d.clone()));
            out.push(check("smoothed oracle matches active-set oracle", t, sm, 1e-6, d));
        }
        Err(e) => out.push(failed("tiny-instance oracles", t, 1e-8, e)),
    }

    let t = Instant::now();
    match shear_benchmark(8, 50, 0.3, &SolverConfig::default()) {
        Ok((err, kkt, gap)) => {
            out.push(check("shear benchmark slip error", t, err, 1e-6, "8^3 grid, 50 steps".into()));
            out.push(check("shear benchmark KKT residual", t, kkt, 1e-6, String::new()));
            out.push(check("shear benchmark stability estimate", t, gap.max(0.0), 0.0, String::new()));
        }
        Err(e) => out.push(failed("shear benchmark", t, 1e-6, e)),
    }

    let t = Instant::now();
    let (spec, basis, m) = match &opts.scenario {
        Some(s) => (s.spec.clone(), s.basis.clone(), s.m.clone()),
        None => shear_benchmark_model(4),
    };
    let name = if opts.scenario.is_some() {
        "scenario coercivity probe above bound"
    } else {
        "coercivity probe above bound"
    };
    match predicted_coercivity(&m, &basis).and_then(|c| {
        coercivity_probe_detailed(&m, &basis, &spec, opts.probe_samples, opts.seed).map(|p| (c, p))
    }) {
        // reported value: how far the bound exceeds the sampled minimum
        Ok((c, p)) => out.push(check(
            name,
            t,
            c.constant - p.min_quotient,
            0.0,
            format!("C = {:.4e}, sampled min = {:.4e}", c.constant, p.min_quotient),
        )),
        Err(e) => out.push(failed(name, t, 0.0, e)),
    }

    if let Some(s) = &opts.scenario {
        let t = Instant::now();
        let z = crate::constitutive::State::zero(&s.spec, &s.basis, &s.m.hardening);
        match free_energy(&z, &s.m, &s.basis, &s.spec) {
            Ok(e) => out.push(check("scenario zero state has zero energy", t, e.total.abs(), 0.0, String::new())),
            Err(e) => out.push(failed("scenario zero state has zero energy", t, 0.0, e)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrupted_curl_is_detected() {
        let (cg, dc, _) = identity_defects(&[4], 2, 5, true);
        assert!(cg > 1e-3 && dc > 1e-3);
        let (cg, dc, adj) = identity_defects(&[4], 2, 5, false);
        assert!(cg <= 1e-13 && dc <= 1e-13 && adj <= 1e-12);
    }
}
