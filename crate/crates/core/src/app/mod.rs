//! Scenario files and the command-line entry points.

mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

pub use config::{parse_config, OutputConfig, ProbeConfig, ScenarioConfig};

use crate::error::{Error, Result};
use crate::grid::{curl_mat, grad, FaceSet, GridSpec, Vec3Field};
use crate::snapshot::{write_snapshot, FieldData};
use crate::solver::{
    coercivity_probe_detailed, displacement_solve, predicted_coercivity, run_evolution_streaming, LoadProgram,
    SolverConfig, CSV_HEADER,
};
use crate::verify::{oracle_active_set, run_suite, shear_benchmark, ScenarioModel, SuiteOptions, TinyProblem};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NONCONVERGENCE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

/// Exit status for an error: 1 for I/O, 2 for solver failures, 3 for
/// invalid input.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => EXIT_USAGE,
        Error::NonConvergence { .. } | Error::CgStall { .. } => EXIT_NONCONVERGENCE,
        _ => EXIT_VALIDATION,
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn report(err: &mut impl Write, e: &Error) -> i32 {
    let _ = writeln!(err, "error: {e}");
    exit_code(e)
}

/// Runs the evolution, writing `summary.csv` and snapshots into the output
/// directory. Rows already written are kept when a step fails.
pub fn cmd_run(cfg: &ScenarioConfig, out: &mut impl Write, err: &mut impl Write) -> i32 {
    match run(cfg, out) {
        Ok(()) => EXIT_OK,
        Err(e) => report(err, &e),
    }
}

fn run(cfg: &ScenarioConfig, out: &mut impl Write) -> Result<()> {
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("summary.csv");
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut csv = BufWriter::new(file);
    let io = |e| Error::io(&path, e);
    writeln!(csv, "{CSV_HEADER}").map_err(io)?;
    csv.flush().map_err(io)?;
    let stride = cfg.output.snapshot_stride;
    let start = Instant::now();
    let spec = &cfg.spec;
    let result = run_evolution_streaming(&cfg.material, &cfg.basis, spec, &cfg.load, &cfg.solver, |s| {
        writeln!(csv, "{}", s.report.csv_row()).map_err(io)?;
        csv.flush().map_err(io)?;
        let n = s.report.step;
        if stride > 0 && n % stride == 0 {
            write_snapshot(&dir.join(format!("step_{n:05}_u.txt")), spec, &FieldData::Vec3(s.state.u.clone()))?;
            write_snapshot(
                &dir.join(format!("step_{n:05}_gamma.txt")),
                spec,
                &FieldData::Slip(s.state.gamma.clone()),
            )?;
            if let Some(eta) = &s.state.eta {
                write_snapshot(&dir.join(format!("step_{n:05}_eta.txt")), spec, &FieldData::Slip(eta.clone()))?;
            }
        }
        Ok(())
    });
    result?;
    let _ = writeln!(
        out,
        "{} steps in {:.2} s; summary written to {}",
        cfg.load.steps(),
        start.elapsed().as_secs_f64(),
        path.display()
    );
    Ok(())
}

/// Prints the predicted coercivity constant and the sampled minimum; exits 0
/// iff the sample stays above the prediction.
pub fn cmd_probe(cfg: &ScenarioConfig, out: &mut impl Write, err: &mut impl Write) -> i32 {
    let m = &cfg.material;
    let c = match predicted_coercivity(m, &cfg.basis) {
        Ok(c) => c,
        Err(e) => return report(err, &e),
    };
    let p = match coercivity_probe_detailed(m, &cfg.basis, &cfg.spec, cfg.probe.samples, cfg.probe.seed) {
        Ok(p) => p,
        Err(e) => return report(err, &e),
    };
    let passed = p.min_quotient >= c.constant;
    let _ = writeln!(out, "predicted coercivity C = {:.6e} at theta = {:.6} (window theta > {:.6})", c.constant, c.theta, c.theta_min);
    let _ = writeln!(out, "hardening constant k = {:.6e}, ellipticity m0 = {:.6e}, gram constant c = {:.6e}", c.k, c.m0, c.gram_constant);
    let _ = writeln!(
        out,
        "sampled minimum quotient = {:.6e} over {} samples (seed {})",
        p.min_quotient, p.samples, p.seed
    );
    let beta = if m.hardening.is_isotropic() { " + |beta|²" } else { "" };
    if p.includes_curl {
        let _ = writeln!(out, "norm: |sym grad v|² + |q|²{beta} + |Curl m q|²");
    } else {
        let _ = writeln!(out, "norm: |sym grad v|² + |q|²{beta}, the reduced seminorm without the curl term since L_c = 0");
    }
    let _ = writeln!(out, "{}", if passed { "PASS" } else { "FAIL" });
    if passed {
        EXIT_OK
    } else {
        EXIT_VALIDATION
    }
}

/// Runs the verification suite and prints one line per check.
pub fn cmd_verify(cfg: Option<&ScenarioConfig>, corrupt_curl: bool, out: &mut impl Write) -> i32 {
    let opts = SuiteOptions {
        corrupt_curl,
        scenario: cfg.map(|c| ScenarioModel {
            spec: c.spec.clone(),
            basis: c.basis.clone(),
            m: c.material.clone(),
        }),
        seed: cfg.map_or(1, |c| c.probe.seed),
        ..SuiteOptions::default()
    };
    let start = Instant::now();
    let results = run_suite(&opts);
    for r in &results {
        let _ = writeln!(out, "{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    let _ = writeln!(
        out,
        "{} of {} checks passed in {:.1} s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        EXIT_OK
    } else {
        EXIT_VALIDATION
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let t = Instant::now();
    let v = f()?;
    Ok((v, t.elapsed().as_secs_f64()))
}

/// Wall-clock timings of the main kernels.
pub fn cmd_bench(out: &mut impl Write, err: &mut impl Write) -> i32 {
    match bench(out) {
        Ok(()) => EXIT_OK,
        Err(e) => report(err, &e),
    }
}

fn bench(out: &mut impl Write) -> Result<()> {
    let threads = rayon::current_num_threads();
    let _ = writeln!(out, "threads: {threads}");
    for n in [16, 32, 64] {
        let spec = GridSpec::new(n, n, n, 1.0 / n as f64, FaceSet::ALL)?;
        let u = Vec3Field::from_fn(spec.cells(), |c| spec.center(c) * (c as f64).sin());
        let (g, tg) = timed(|| grad(&u, &spec))?;
        let (_, tc) = timed(|| curl_mat(&g, &spec))?;
        let _ = writeln!(out, "grad {n}^3: {:.4} s, curl: {:.4} s", tg, tc);
    }
    let (spec, basis, m) = crate::verify::shear_benchmark_model(16);
    let load = LoadProgram::monotone_shear(1, 0.3, spec.cells())?;
    let gamma = crate::grid::SlipField::from_fn(spec.cells(), 1, |c, _| 0.01 * (c as f64).cos());
    let ((_, cg), t) = timed(|| displacement_solve(&gamma, &load.step_load(1), &m, &basis, &spec, &SolverConfig::default()))?;
    let _ = writeln!(out, "displacement solve 16^3: {t:.3} s, {} CG iterations", cg.iterations);
    let (_, t) = timed(|| shear_benchmark(8, 50, 0.3, &SolverConfig::default()))?;
    let _ = writeln!(out, "shear benchmark 8^3, 50 steps: {t:.3} s");
    let (_, t) = timed(|| shear_benchmark(16, 10, 0.3, &SolverConfig::default()))?;
    let _ = writeln!(out, "shear benchmark 16^3, 10 steps: {t:.3} s");
    let tp = TinyProblem::random(0);
    let (sol, t) = timed(|| oracle_active_set(&tp))?;
    let _ = writeln!(
        out,
        "active-set oracle, {} slip unknowns: {t:.3} s ({} consistent patterns)",
        sol.pattern.len(),
        sol.consistent_patterns
    );
    Ok(())
}
