//! Tiny problem instances and their dense quadratic model.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::{ElasticModuli, Mat3, SlipBasis, SlipSystem, Vec3};
use crate::constitutive::{free_energy, load_ell, HardeningLaw, MaterialParams, State};
use crate::error::{Error, Result};
use crate::grid::{build_trace_constraint, Face, FaceSet, GridSpec, SlipField, TraceMode, Vec3Field};
use crate::solver::{SolverConfig, StepLoad};

/// Largest number of free slip components the enumeration accepts (`3⁸`
/// sign patterns).
pub const MAX_TINY_DOFS: usize = 8;

const MAX_TINY_CELLS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TinyFamily {
    Isotropic,
    KinematicQuadratic,
    KinematicPrager,
}

/// One incremental step on a grid of a few cells.
#[derive(Clone, Debug)]
pub struct TinyProblem {
    pub spec: GridSpec,
    pub basis: SlipBasis,
    pub m: MaterialParams,
    pub prev: State,
    pub load: StepLoad,
    pub trace_mode: TraceMode,
}

impl TinyProblem {
    /// Checks the enumeration bounds: at most 8 cells, 2 slip systems and
    /// [`MAX_TINY_DOFS`] free slip components, all coordinate-constrained.
    pub fn new(
        spec: GridSpec,
        basis: SlipBasis,
        m: MaterialParams,
        prev: State,
        load: StepLoad,
        trace_mode: TraceMode,
    ) -> Result<Self> {
        if spec.cells() > MAX_TINY_CELLS || basis.len() > 2 {
            return Err(Error::InvalidModel(format!(
                "tiny problems allow at most {MAX_TINY_CELLS} cells and 2 slip systems, got {} and {}",
                spec.cells(),
                basis.len()
            )));
        }
        let trace = build_trace_constraint(&basis, &spec, trace_mode);
        if !trace.is_coordinate() {
            return Err(Error::InvalidModel(
                "tiny problems need diagonal trace projectors; use hard-zero mode".into(),
            ));
        }
        if trace.free_dofs() > MAX_TINY_DOFS {
            return Err(Error::InvalidModel(format!(
                "too many free slip components for enumeration: {} > {MAX_TINY_DOFS}",
                trace.free_dofs()
            )));
        }
        m.validate_hardening(&basis)?;
        prev.check(&spec, &basis)?;
        if load.body_force.len() != spec.cells() {
            return Err(Error::DimensionMismatch {
                expected: spec.cells(),
                got: load.body_force.len(),
            });
        }
        Ok(Self {
            spec,
            basis,
            m,
            prev,
            load,
            trace_mode,
        })
    }

    /// A random instance; the hardening family cycles with the seed.
    pub fn random(seed: u64) -> Self {
        let family = match seed % 3 {
            0 => TinyFamily::Isotropic,
            1 => TinyFamily::KinematicQuadratic,
            _ => TinyFamily::KinematicPrager,
        };
        Self::random_with(seed, family)
    }

    /// 2 × 2 × 2 cells of size ½ clamped on one random face, one or two slip
    /// systems, random material, previous slips and a load that plastifies.
    pub fn random_with(seed: u64, family: TinyFamily) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7469_6e79);
        let face = Face::ALL[rng.random_range(0..6)];
        let faces = FaceSet::from_faces(&[face]);
        let spec = GridSpec::new(2, 2, 2, 0.5, faces).expect("valid grid");
        let n_slip = rng.random_range(1..=2);
        let basis = match family {
            TinyFamily::KinematicPrager => {
                let r = random_rotation(&mut rng);
                let (e1, e2, e3) = (Vec3::unit(0), Vec3::unit(1), Vec3::unit(2));
                let pairs = [(e1, e2), (e2, e3)];
                SlipBasis::from_pairs(
                    &pairs[..n_slip]
                        .iter()
                        .map(|(l, n)| (r.mul_vec(l), r.mul_vec(n)))
                        .collect::<Vec<_>>(),
                )
            }
            _ => SlipBasis::new((0..n_slip).map(|_| random_system(&mut rng)).collect()),
        }
        .expect("valid slip systems");
        let mu = rng.random_range(0.5..2.0);
        let elastic = ElasticModuli::new(mu, rng.random_range(0.2..2.0)).expect("valid moduli");
        let lc = rng.random_range(0.1..1.0);
        let sigma0 = rng.random_range(0.05..0.2);
        let hardening = match family {
            TinyFamily::Isotropic => HardeningLaw::Isotropic {
                k2: rng.random_range(0.1..1.0),
            },
            TinyFamily::KinematicQuadratic => {
                let a: Vec<f64> = (0..n_slip * n_slip).map(|_| rng.random_range(-0.5..0.5)).collect();
                let mut h = vec![0.0; n_slip * n_slip];
                for i in 0..n_slip {
                    for j in 0..n_slip {
                        h[i * n_slip + j] = mu * (0..n_slip).map(|k| a[i * n_slip + k] * a[j * n_slip + k]).sum::<f64>();
                    }
                    h[i * n_slip + i] += mu * rng.random_range(0.1..0.5);
                }
                HardeningLaw::KinematicQuadratic { h }
            }
            TinyFamily::KinematicPrager => HardeningLaw::KinematicPrager {
                k1: rng.random_range(0.1..1.0),
            },
        };
        let m = MaterialParams::new(elastic, lc, sigma0, hardening, &basis).expect("valid material");
        let trace = build_trace_constraint(&basis, &spec, TraceMode::HardZero);
        let cells = spec.cells();
        let strain = sigma0 / mu;
        let mut gamma = SlipField::from_fn(cells, n_slip, |_, _| strain * rng.random_range(-1.0..1.0));
        trace.apply(&mut gamma);
        let eta = m.hardening.is_isotropic().then(|| {
            SlipField::from_vec(
                n_slip,
                gamma
                    .values()
                    .iter()
                    .map(|g| g.abs() + strain * rng.random_range(0.0..0.5))
                    .collect(),
            )
            .expect("sized")
        });
        let g_prev = random_mat(&mut rng, strain);
        let prev = State::from_fluctuation(&Vec3Field::zeros(cells), g_prev, gamma, eta, &spec);
        let amp = strain * rng.random_range(2.0..5.0);
        let g = random_mat(&mut rng, amp);
        let f = Vec3Field::from_vec(
            (0..cells)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    ) * sigma0
                })
                .collect(),
        );
        let load = StepLoad {
            time: 1.0,
            applied_gradient: g,
            body_force: f,
        };
        Self::new(spec, basis, m, prev, load, TraceMode::HardZero).expect("within tiny bounds")
    }

    /// Solver settings matching the trace handling of this instance.
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            trace_mode: self.trace_mode,
            ..SolverConfig::default()
        }
    }

    /// The step functional `E(s) = Ψ(s) - <f, u> + σ₀ ∫ Σ |γ - γ_prev|`, with
    /// `η = η_prev + |Δγ|` substituted for isotropic hardening.
    pub fn energy(&self, s: &State) -> Result<f64> {
        let mut full = s.clone();
        if let Some(ep) = &self.prev.eta {
            let d = s.gamma.lin_comb(1.0, &self.prev.gamma, -1.0);
            full.eta = Some(
                SlipField::from_vec(
                    d.n_slip(),
                    ep.values().iter().zip(d.values()).map(|(e, x)| e + x.abs()).collect(),
                )
                .expect("sized"),
            );
        }
        let psi = free_energy(&full, &self.m, &self.basis, &self.spec)?.total;
        let work = load_ell(&self.load.body_force, &s.u, &self.spec)?;
        let diss: f64 = s
            .gamma
            .values()
            .iter()
            .zip(self.prev.gamma.values())
            .map(|(a, b)| (a - b).abs())
            .sum();
        Ok(psi - work + self.m.sigma0 * self.spec.cell_volume() * diss)
    }

    pub(crate) fn model(&self) -> Result<QuadraticModel> {
        QuadraticModel::build(self)
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v * (1.0 / n);
        }
    }
}

fn random_system(rng: &mut ChaCha8Rng) -> SlipSystem {
    let l = random_unit(rng);
    let mut nu = random_unit(rng).cross(&l);
    while nu.norm() < 0.1 {
        nu = random_unit(rng).cross(&l);
    }
    SlipSystem::new(l, nu * (1.0 / nu.norm())).expect("orthogonal by construction")
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Mat3 {
    let q: [f64; 4] = loop {
        let q = [0; 4].map(|_| rng.random_range(-1.0..1.0));
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            break q.map(|x| x / n);
        }
    };
    let [w, x, y, z] = q;
    Mat3([
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ])
}

fn random_mat(rng: &mut ChaCha8Rng, scale: f64) -> Mat3 {
    Mat3::from_row_major([0; 9].map(|_| scale * rng.random_range(-1.0..1.0)))
}

/// `E(x) = ½ xᵀQx + bᵀx + c + Σ w_i |d_i|` over the unknowns
/// `x = (free displacement components, free slip increments d)`.
pub(crate) struct QuadraticModel {
    pub q: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Number of leading displacement unknowns.
    pub n_u: usize,
    /// `(cell, component)` of the displacement unknowns.
    pub u_dofs: Vec<(usize, usize)>,
    /// `(cell, slip)` of the slip unknowns.
    pub gamma_dofs: Vec<(usize, usize)>,
    /// Weights `vol (σ₀ + μk₂ η_prev)` of the absolute values.
    pub weights: Vec<f64>,
}

impl QuadraticModel {
    fn build(tp: &TinyProblem) -> Result<Self> {
        let spec = &tp.spec;
        let trace = build_trace_constraint(&tp.basis, spec, tp.trace_mode);
        let free = spec.free_cells();
        let u_dofs: Vec<(usize, usize)> = (0..spec.cells())
            .filter(|c| free[*c])
            .flat_map(|c| (0..3).map(move |i| (c, i)))
            .collect();
        let n = tp.basis.len();
        let gamma_dofs: Vec<(usize, usize)> = (0..spec.cells())
            .flat_map(|c| (0..n).map(move |a| (c, a)))
            .filter(|(c, a)| trace.projector(*c).is_free(*a))
            .collect();
        let vol = spec.cell_volume();
        let k = tp.m.iso_modulus();
        let weights = gamma_dofs
            .iter()
            .map(|(c, a)| {
                let ep = tp.prev.eta.as_ref().map_or(0.0, |e| e.cell(*c)[*a]);
                vol * (tp.m.sigma0 + k * ep)
            })
            .collect();
        let mut model = Self {
            q: DMatrix::zeros(0, 0),
            b: DVector::zeros(0),
            n_u: u_dofs.len(),
            u_dofs,
            gamma_dofs,
            weights,
        };
        // polarization of the smooth part: elastic, defect and kinematic
        // energies minus the body-force work
        let dim = model.dim();
        let smooth = |x: &DVector<f64>| -> Result<f64> {
            let s = model.state_without_eta(tp, x);
            let psi = free_energy(&s, &tp.m, &tp.basis, spec)?.total;
            Ok(psi - load_ell(&tp.load.body_force, &s.u, spec)?)
        };
        let e = |i: usize| {
            let mut v = DVector::zeros(dim);
            v[i] = 1.0;
            v
        };
        let f0 = smooth(&DVector::zeros(dim))?;
        let fi: Vec<f64> = (0..dim).map(|i| smooth(&e(i))).collect::<Result<_>>()?;
        let mut q = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..i {
                let v = smooth(&(e(i) + e(j)))? - fi[i] - fi[j] + f0;
                q[(i, j)] = v;
                q[(j, i)] = v;
            }
            let v = smooth(&(e(i) * 2.0))? - 2.0 * fi[i] + f0;
            q[(i, i)] = v;
        }
        let mut b = DVector::zeros(dim);
        for i in 0..dim {
            b[i] = fi[i] - f0 - 0.5 * q[(i, i)];
        }
        // ½ μk₂ vol (η_prev + |d|)² contributes ½ μk₂ vol d² beyond the weights
        for i in 0..model.gamma_dofs.len() {
            q[(model.n_u + i, model.n_u + i)] += vol * k;
        }
        model.q = q;
        model.b = b;
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.n_u + self.gamma_dofs.len()
    }

    fn state_without_eta(&self, tp: &TinyProblem, x: &DVector<f64>) -> State {
        let cells = tp.spec.cells();
        let mut w = Vec3Field::zeros(cells);
        for (k, (c, i)) in self.u_dofs.iter().enumerate() {
            w[*c][*i] = x[k];
        }
        let mut gamma = tp.prev.gamma.clone();
        for (k, (c, a)) in self.gamma_dofs.iter().enumerate() {
            gamma.cell_mut(*c)[*a] += x[self.n_u + k];
        }
        State::from_fluctuation(&w, tp.load.applied_gradient, gamma, None, &tp.spec)
    }

    /// The state for unknowns `x`, with `η = η_prev + |Δγ|`.
    pub fn state(&self, tp: &TinyProblem, x: &DVector<f64>) -> State {
        let mut s = self.state_without_eta(tp, x);
        if let Some(ep) = &tp.prev.eta {
            let mut eta = ep.clone();
            for (k, (c, a)) in self.gamma_dofs.iter().enumerate() {
                eta.cell_mut(*c)[*a] += x[self.n_u + k].abs();
            }
            s.eta = Some(eta);
        }
        s
    }

    /// Smooth part `½ xᵀQx + bᵀx` (constant dropped).
    pub fn smooth(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.b.dot(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_instances_respect_bounds() {
        for seed in 0..12 {
            let tp = TinyProblem::random(seed);
            let model = tp.model().unwrap();
            assert!(model.gamma_dofs.len() <= MAX_TINY_DOFS);
            assert_eq!(model.n_u, 12);
        }
    }

    #[test]
    fn model_reproduces_energy() {
        // E(x) - E(0) from the dense model against the direct evaluation
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..6 {
            let tp = TinyProblem::random(seed);
            let model = tp.model().unwrap();
            let x0 = DVector::zeros(model.dim());
            let e0 = tp.energy(&model.state(&tp, &x0)).unwrap();
            let x: DVector<f64> = DVector::from_fn(model.dim(), |_, _| 0.01 * rng.random_range(-1.0..1.0));
            let nonsmooth: f64 = (0..model.gamma_dofs.len())
                .map(|i| model.weights[i] * x[model.n_u + i].abs())
                .sum();
            let predicted = e0 + model.smooth(&x) + nonsmooth;
            let direct = tp.energy(&model.state(&tp, &x)).unwrap();
            assert!((predicted - direct).abs() <= 1e-12 * (1.0 + direct.abs()), "{predicted} vs {direct}");
        }
    }
}
