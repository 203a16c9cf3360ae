//! Scenario files.
//!
//! One `section.key = value` assignment per line; `#` starts a comment and
//! list values are separated by whitespace.
//!
//! ```text
//! grid.n = 8
//! grid.dirichlet_faces = all
//! grid.hard_faces = y- y+
//! material.mu = 1
//! material.lambda = 1.5
//! material.lc = 0.5
//! material.sigma0 = 0.1
//! hardening.kind = isotropic
//! hardening.k2 = 0.5
//! slip.systems = 1 0 0  0 1 0
//! load.steps = 50
//! load.shear_rate = 0.3
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::algebra::{ElasticModuli, Mat3, SlipBasis, SlipSystem, Vec3};
use crate::constitutive::{HardeningLaw, MaterialParams};
use crate::error::{Error, Result};
use crate::grid::{Face, FaceSet, GridSpec, TraceMode, Vec3Field};
use crate::solver::{Initialization, LoadProgram, SolverConfig};

const KEYS: &[&str] = &[
    "grid.n",
    "grid.h",
    "grid.dirichlet_faces",
    "grid.hard_faces",
    "grid.max_cells",
    "material.mu",
    "material.lambda",
    "material.lc",
    "material.sigma0",
    "hardening.kind",
    "hardening.k2",
    "hardening.h",
    "hardening.k1",
    "slip.systems",
    "load.times",
    "load.steps",
    "load.t_end",
    "load.shear",
    "load.shear_rate",
    "load.shear_plane",
    "load.body_force",
    "load.body_force_scales",
    "load.body_force_rate",
    "solver.tol_energy",
    "solver.tol_kkt",
    "solver.max_outer",
    "solver.max_cg",
    "solver.cg_tol",
    "solver.restart",
    "solver.trace_mode",
    "solver.init",
    "solver.power_iterations",
    "solver.power_seed",
    "solver.lipschitz_margin",
    "output.dir",
    "output.snapshot_stride",
    "probe.samples",
    "probe.seed",
];

#[derive(Clone, Debug, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write field snapshots every this many steps; 0 disables them.
    pub snapshot_stride: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub spec: GridSpec,
    pub basis: SlipBasis,
    pub material: MaterialParams,
    pub load: LoadProgram,
    pub solver: SolverConfig,
    pub output: OutputConfig,
    pub probe: ProbeConfig,
}

struct Entries {
    map: BTreeMap<String, (String, usize)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: format!("expected `section.key = value`, got `{content}`"),
            })?;
            let key = key.trim();
            if !key.contains('.') || key.split('.').any(|p| p.is_empty()) {
                return Err(Error::Parse {
                    line,
                    message: format!("key `{key}` must have the form `section.key`"),
                });
            }
            if !KEYS.contains(&key) {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown key `{key}`"),
                });
            }
            if let Some((_, first)) = map.get(key) {
                return Err(Error::Parse {
                    line,
                    message: format!("`{key}` is already set on line {first}"),
                });
            }
            map.insert(key.to_string(), (value.trim().to_string(), line));
        }
        Ok(Self { map })
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.map.get(key).map(|(_, l)| *l)
    }

    fn invalid(&self, key: &str, message: impl std::fmt::Display) -> Error {
        match self.line(key) {
            Some(l) => Error::Validation(format!("line {l}: {key} {message}")),
            None => Error::Validation(format!("{key} {message}")),
        }
    }

    fn has(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|(v, _)| v.as_str())
    }

    fn words(&self, key: &str) -> Option<Vec<&str>> {
        self.raw(key).map(|v| v.split_whitespace().collect())
    }

    fn numbers<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<Vec<T>>> {
        let Some(words) = self.words(key) else {
            return Ok(None);
        };
        if words.is_empty() {
            return Err(self.invalid(key, "needs a value"));
        }
        words
            .iter()
            .map(|w| w.parse::<T>().map_err(|_| self.invalid(key, format!("must be {what}, got `{w}`"))))
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    fn scalar<T: std::str::FromStr + Copy>(&self, key: &str, what: &str) -> Result<Option<T>> {
        match self.numbers::<T>(key, what)? {
            None => Ok(None),
            Some(v) if v.len() == 1 => Ok(Some(v[0])),
            Some(v) => Err(self.invalid(key, format!("takes a single value, got {}", v.len()))),
        }
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        let v = self.scalar::<f64>(key, "a number")?;
        if let Some(x) = v {
            if !x.is_finite() {
                return Err(self.invalid(key, format!("must be finite, got {x}")));
            }
        }
        Ok(v)
    }

    fn required_f64(&self, key: &str) -> Result<f64> {
        self.f64(key)?
            .ok_or_else(|| Error::Validation(format!("missing required key {key}")))
    }

    fn usize(&self, key: &str) -> Result<Option<usize>> {
        self.scalar::<usize>(key, "a nonnegative integer")
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let v = self.numbers::<f64>(key, "a list of numbers")?;
        if let Some(xs) = &v {
            if let Some(x) = xs.iter().find(|x| !x.is_finite()) {
                return Err(self.invalid(key, format!("must be finite, got {x}")));
            }
        }
        Ok(v)
    }

    fn bool(&self, key: &str) -> Result<Option<bool>> {
        match self.raw(key) {
            None => Ok(None),
            Some("true") => Ok(Some(true)),
            Some("false") => Ok(Some(false)),
            Some(v) => Err(self.invalid(key, format!("must be true or false, got `{v}`"))),
        }
    }

    fn faces(&self, key: &str) -> Result<Option<FaceSet>> {
        let Some(words) = self.words(key) else {
            return Ok(None);
        };
        let mut set = FaceSet::EMPTY;
        for w in words {
            match w {
                "all" => set = FaceSet::ALL,
                "none" => {}
                _ => {
                    let f = Face::from_label(w).ok_or_else(|| {
                        self.invalid(key, format!("lists faces among x- x+ y- y+ z- z+, all, none; got `{w}`"))
                    })?;
                    set = set.with(f);
                }
            }
        }
        Ok(Some(set))
    }
}

fn positive(e: &Entries, key: &str, v: f64, why: &str) -> Result<()> {
    if v > 0.0 {
        Ok(())
    } else {
        Err(e.invalid(key, format!("must be > 0, got {v}: {why}")))
    }
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let e = Entries::parse(text)?;
    let spec = parse_grid(&e)?;
    let basis = parse_slips(&e)?;
    let material = parse_material(&e, &basis)?;
    let load = parse_load(&e, &spec)?;
    let solver = parse_solver(&e)?;
    let output = OutputConfig {
        dir: PathBuf::from(e.raw("output.dir").unwrap_or("out")),
        snapshot_stride: e.usize("output.snapshot_stride")?.unwrap_or(0),
    };
    let samples = e.usize("probe.samples")?.unwrap_or(1000);
    if samples == 0 {
        return Err(e.invalid("probe.samples", "must be >= 1: the probe needs at least one direction"));
    }
    let probe = ProbeConfig {
        samples,
        seed: e.scalar::<u64>("probe.seed", "a nonnegative integer")?.unwrap_or(1),
    };
    Ok(ScenarioConfig {
        spec,
        basis,
        material,
        load,
        solver,
        output,
        probe,
    })
}

fn parse_grid(e: &Entries) -> Result<GridSpec> {
    let n = e.numbers::<usize>("grid.n", "a list of cell counts")?.unwrap_or(vec![8]);
    let dims = match n.as_slice() {
        [n] => [*n; 3],
        [a, b, c] => [*a, *b, *c],
        _ => return Err(e.invalid("grid.n", format!("takes 1 or 3 cell counts, got {}", n.len()))),
    };
    if dims.iter().any(|d| *d < 2) {
        return Err(e.invalid(
            "grid.n",
            format!("needs at least 2 cells per axis, got {dims:?}: forward differences need a neighbour"),
        ));
    }
    let h = e.f64("grid.h")?.unwrap_or(1.0 / *dims.iter().max().expect("three axes") as f64);
    positive(e, "grid.h", h, "the cell size sets the length scale of every difference quotient")?;
    let dirichlet = e.faces("grid.dirichlet_faces")?.unwrap_or(FaceSet::ALL);
    if dirichlet.is_empty() {
        return Err(e.invalid(
            "grid.dirichlet_faces",
            "must name at least one face: without clamped cells rigid motions make the displacement problem singular",
        ));
    }
    let max_cells = e.usize("grid.max_cells")?.unwrap_or(crate::grid::DEFAULT_MAX_CELLS);
    let spec = GridSpec::with_max_cells(dims[0], dims[1], dims[2], h, dirichlet, max_cells).map_err(|err| match err {
        Error::InvalidGrid(m) => e.invalid("grid.n", m),
        other => other,
    })?;
    Ok(match e.faces("grid.hard_faces")? {
        Some(hard) => spec.with_hard_faces(hard),
        None => spec,
    })
}

fn parse_slips(e: &Entries) -> Result<SlipBasis> {
    let v = e
        .list("slip.systems")?
        .ok_or_else(|| Error::Validation("missing required key slip.systems".into()))?;
    if v.len() % 6 != 0 {
        return Err(e.invalid(
            "slip.systems",
            format!("takes 6 numbers per system (direction, then plane normal), got {}", v.len()),
        ));
    }
    let systems = v
        .chunks(6)
        .enumerate()
        .map(|(k, c)| {
            SlipSystem::new(Vec3::new(c[0], c[1], c[2]), Vec3::new(c[3], c[4], c[5])).map_err(|err| {
                e.invalid(
                    "slip.systems",
                    format!("system {}: {err}; the slip direction must be a unit vector in the slip plane", k + 1),
                )
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SlipBasis::new(systems).map_err(|err| e.invalid("slip.systems", err))
}

fn parse_material(e: &Entries, basis: &SlipBasis) -> Result<MaterialParams> {
    let mu = e.required_f64("material.mu")?;
    positive(e, "material.mu", mu, "the shear modulus must be positive for the elastic energy to be coercive")?;
    let lambda = e.required_f64("material.lambda")?;
    let elastic = ElasticModuli::new(mu, lambda).map_err(|err| {
        e.invalid(
            "material.lambda",
            format!("{err}; the elasticity tensor must be positive definite on symmetric tensors (3 lambda + 2 mu > 0)"),
        )
    })?;
    let lc = e.f64("material.lc")?.unwrap_or(0.0);
    if lc < 0.0 {
        return Err(e.invalid("material.lc", format!("must be >= 0, got {lc}: it is a length")));
    }
    let sigma0 = e.required_f64("material.sigma0")?;
    positive(e, "material.sigma0", sigma0, "the initial yield stress fixes the size of the elastic domain")?;
    let kind = e
        .raw("hardening.kind")
        .ok_or_else(|| Error::Validation("missing required key hardening.kind".into()))?;
    let hardening = match kind {
        "isotropic" => {
            let k2 = e.required_f64("hardening.k2")?;
            positive(
                e,
                "hardening.k2",
                k2,
                "isotropic hardening must be positive for the incremental problem to be coercive",
            )?;
            HardeningLaw::Isotropic { k2 }
        }
        "quadratic" => {
            let n = basis.len();
            let h = e
                .list("hardening.h")?
                .ok_or_else(|| Error::Validation("missing required key hardening.h".into()))?;
            if h.len() != n * n {
                return Err(e.invalid(
                    "hardening.h",
                    format!("needs {} entries (row-major {n} x {n} for {n} slip systems), got {}", n * n, h.len()),
                ));
            }
            HardeningLaw::KinematicQuadratic { h }
        }
        "prager" => {
            let k1 = e.required_f64("hardening.k1")?;
            positive(e, "hardening.k1", k1, "Prager hardening must be positive to control the slips")?;
            if !basis.is_mutually_orthogonal() {
                return Err(e.invalid(
                    "hardening.kind",
                    "prager needs mutually orthogonal slip systems: otherwise |sym p|² vanishes on some slip combinations and is not positive definite in the slips",
                ));
            }
            HardeningLaw::KinematicPrager { k1 }
        }
        other => {
            return Err(e.invalid(
                "hardening.kind",
                format!("must be isotropic, quadratic or prager, got `{other}`"),
            ))
        }
    };
    MaterialParams::new(elastic, lc, sigma0, hardening, basis).map_err(|err| match kind {
        "quadratic" => e.invalid(
            "hardening.h",
            format!("is rejected ({err}): kinematic hardening must be positive definite in the slips"),
        ),
        _ => e.invalid("hardening.kind", err),
    })
}

fn parse_load(e: &Entries, spec: &GridSpec) -> Result<LoadProgram> {
    let times = match (e.list("load.times")?, e.usize("load.steps")?) {
        (Some(_), Some(_)) => {
            return Err(e.invalid("load.steps", "conflicts with load.times; give one of them"));
        }
        (Some(t), None) => t,
        (None, Some(n)) => {
            if n == 0 {
                return Err(e.invalid("load.steps", "must be >= 1"));
            }
            let t_end = e.f64("load.t_end")?.unwrap_or(1.0);
            positive(e, "load.t_end", t_end, "the load program must advance in time")?;
            (0..=n).map(|k| t_end * k as f64 / n as f64).collect()
        }
        (None, None) => return Err(Error::Validation("missing required key load.steps or load.times".into())),
    };
    let time_key = if e.has("load.times") { "load.times" } else { "load.steps" };
    let nt = times.len();
    let per_time = |key: &str, rate_key: &str| -> Result<Vec<f64>> {
        match (e.list(key)?, e.f64(rate_key)?) {
            (Some(_), Some(_)) => Err(e.invalid(rate_key, format!("conflicts with {key}; give one of them"))),
            (Some(v), None) if v.len() != nt => {
                Err(e.invalid(key, format!("needs one value per time ({nt}), got {}", v.len())))
            }
            (Some(v), None) => Ok(v),
            (None, r) => {
                let r = r.unwrap_or(if key == "load.body_force_scales" { 1.0 } else { 0.0 });
                Ok(times.iter().map(|t| r * t).collect())
            }
        }
    };
    let shear = per_time("load.shear", "load.shear_rate")?;
    let plane = match e.numbers::<usize>("load.shear_plane", "a pair of axis indices")? {
        None => (0, 1),
        Some(p) if p.len() == 2 && p[0] < 3 && p[1] < 3 && p[0] != p[1] => (p[0], p[1]),
        Some(_) => {
            return Err(e.invalid(
                "load.shear_plane",
                "takes two distinct axes i j in 0..3 for the shear u_i = g x_j",
            ))
        }
    };
    let gradients = shear
        .iter()
        .map(|g| {
            let mut m = Mat3::ZERO;
            m[plane] = *g;
            m
        })
        .collect();
    let f = match e.list("load.body_force")? {
        None => Vec3::ZERO,
        Some(v) if v.len() == 3 => Vec3::new(v[0], v[1], v[2]),
        Some(v) => return Err(e.invalid("load.body_force", format!("takes 3 components, got {}", v.len()))),
    };
    let scales = per_time("load.body_force_scales", "load.body_force_rate")?;
    LoadProgram::new(times, gradients, Vec3Field::constant(spec.cells(), f), scales).map_err(|err| {
        let msg = err.to_string();
        let key = if msg.contains("vanish") {
            if shear.first().is_some_and(|g| *g != 0.0) {
                "load.shear"
            } else {
                "load.body_force_scales"
            }
        } else {
            time_key
        };
        e.invalid(key, msg)
    })
}

fn parse_solver(e: &Entries) -> Result<SolverConfig> {
    let d = SolverConfig::default();
    let trace_mode = match e.raw("solver.trace_mode") {
        None => d.trace_mode,
        Some(v) => TraceMode::from_label(v)
            .ok_or_else(|| e.invalid("solver.trace_mode", format!("must be kernel or hard-zero, got `{v}`")))?,
    };
    let init = match e.raw("solver.init") {
        None => d.init,
        Some(v) => Initialization::from_label(v).ok_or_else(|| {
            e.invalid("solver.init", format!("must be previous or block-predictor, got `{v}`"))
        })?,
    };
    let cfg = SolverConfig {
        tol_energy: e.f64("solver.tol_energy")?.unwrap_or(d.tol_energy),
        tol_kkt: e.f64("solver.tol_kkt")?.unwrap_or(d.tol_kkt),
        max_outer: e.usize("solver.max_outer")?.unwrap_or(d.max_outer),
        max_cg: e.usize("solver.max_cg")?.or(d.max_cg),
        cg_tol: e.f64("solver.cg_tol")?.unwrap_or(d.cg_tol),
        fista_restart: e.bool("solver.restart")?.unwrap_or(d.fista_restart),
        trace_mode,
        init,
        power_iterations: e.usize("solver.power_iterations")?.unwrap_or(d.power_iterations),
        power_seed: e.scalar::<u64>("solver.power_seed", "a nonnegative integer")?.unwrap_or(d.power_seed),
        lipschitz_margin: e.f64("solver.lipschitz_margin")?.unwrap_or(d.lipschitz_margin),
    };
    cfg.validate().map_err(|err| match err {
        Error::InvalidModel(msg) => {
            let line = KEYS
                .iter()
                .filter(|k| k.starts_with("solver.") && msg.starts_with(**k))
                .find_map(|k| e.line(k));
            match line {
                Some(l) => Error::Validation(format!("line {l}: {msg}")),
                None => Error::Validation(msg),
            }
        }
        other => other,
    })?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
material.mu = 1
material.lambda = 1
material.sigma0 = 0.1
hardening.kind = isotropic
hardening.k2 = 0.5
slip.systems = 1 0 0 0 1 0
load.steps = 4
";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.spec.dims(), [8, 8, 8]);
        assert_eq!(c.spec.dirichlet_faces(), FaceSet::ALL);
        assert_eq!(c.material.lc, 0.0);
        assert_eq!(c.load.steps(), 4);
        assert_eq!(c.solver, SolverConfig::default());
        assert_eq!(c.output.dir, PathBuf::from("out"));
        assert_eq!(c.probe, ProbeConfig { samples: 1000, seed: 1 });
    }

    #[test]
    fn zero_k2_is_rejected_with_reason() {
        let text = MINIMAL.replace("hardening.k2 = 0.5", "hardening.k2 = 0");
        let msg = parse_config(&text).unwrap_err().to_string();
        assert!(msg.contains("line 5") && msg.contains("hardening.k2 must be > 0, got 0"), "{msg}");
        assert!(msg.contains("coercive"), "{msg}");
    }

    #[test]
    fn prager_needs_orthogonal_systems() {
        let text = MINIMAL
            .replace("hardening.kind = isotropic\nhardening.k2 = 0.5", "hardening.kind = prager\nhardening.k1 = 1")
            .replace("1 0 0 0 1 0", "1 0 0 0 1 0  0.6 0.8 0 0 0 1");
        let msg = parse_config(&text).unwrap_err().to_string();
        assert!(msg.contains("mutually orthogonal"), "{msg}");
        let ok = MINIMAL
            .replace("hardening.kind = isotropic\nhardening.k2 = 0.5", "hardening.kind = prager\nhardening.k1 = 1")
            .replace("1 0 0 0 1 0", "1 0 0 0 1 0  0 1 0 0 0 1");
        assert!(parse_config(&ok).is_ok());
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let bad = format!("{MINIMAL}\n# comment\nmaterial.mu 2\n");
        assert!(matches!(parse_config(&bad), Err(Error::Parse { line: 10, .. })));
        let dup = format!("{MINIMAL}material.mu = 2\n");
        assert!(matches!(parse_config(&dup), Err(Error::Parse { line: 8, .. })));
        let unknown = format!("{MINIMAL}material.nu = 0.3\n");
        assert!(parse_config(&unknown).unwrap_err().to_string().contains("unknown key"));
    }

    #[test]
    fn load_lists() {
        let text = MINIMAL.replace("load.steps = 4", "load.times = 0 0.5 1\nload.shear = 0 0.1 0.3\nload.shear_plane = 0 2");
        let c = parse_config(&text).unwrap();
        assert_eq!(c.load.applied_gradients()[2][(0, 2)], 0.3);
        let bad = MINIMAL.replace("load.steps = 4", "load.times = 0 0.5 1\nload.shear = 0 0.1");
        assert!(parse_config(&bad).unwrap_err().to_string().contains("one value per time"));
    }

    #[test]
    fn inline_comments_and_faces() {
        let text = format!("{MINIMAL}grid.n = 4 4 2  # thin\ngrid.dirichlet_faces = y- y+\ngrid.hard_faces = none\n");
        let c = parse_config(&text).unwrap();
        assert_eq!(c.spec.dims(), [4, 4, 2]);
        assert!(c.spec.hard_faces().is_empty());
        assert!(c.spec.dirichlet_faces().contains(Face::YMax));
    }
}
