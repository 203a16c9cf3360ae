//! Discrete operators of one evolution problem, in the displacement
//! fluctuation `w` (zero on Dirichlet cells) and the slips `γ`.

use crate::algebra::{Mat3, SlipBasis};
use crate::constitutive::{HardeningLaw, MaterialParams, State};
use crate::error::{check_len, Result};
use crate::grid::{
    build_trace_constraint, curl_adjoint, curl_mat, grad, grad_adjoint, CellProjector, GridSpec, Mat3Field,
    SlipField, TraceConstraint, Vec3Field,
};

use super::cg::{conjugate_gradient, CgOutcome};
use super::prox::{box_projected_min, prox_scalar_iso, subspace_prox};
use super::{KktResidual, SolverConfig, StepLoad};

/// Slip components below this size count as zero in subspace-constrained
/// cells, where the prox does not produce exact zeros.
const SUBSPACE_ZERO: f64 = 1e-14;

pub(crate) struct Problem<'a> {
    pub spec: &'a GridSpec,
    pub basis: &'a SlipBasis,
    pub m: &'a MaterialParams,
    pub trace: TraceConstraint,
    pub free: Vec<bool>,
    pub cg_tol: f64,
    pub max_cg: usize,
}

/// Data fixed during one step.
pub(crate) struct StepData {
    pub g: Mat3,
    pub f: Vec3Field,
    /// `∫ f·(G x)`.
    pub affine_work: f64,
    pub gamma_prev: SlipField,
    pub eta_prev: Option<SlipField>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct StepEnergy {
    pub elastic: f64,
    pub defect: f64,
    pub hardening: f64,
    pub dissipation: f64,
    /// `<f, u>` with the total displacement.
    pub work: f64,
    pub total: f64,
}

impl<'a> Problem<'a> {
    pub fn new(spec: &'a GridSpec, basis: &'a SlipBasis, m: &'a MaterialParams, cfg: &SolverConfig) -> Self {
        let trace = build_trace_constraint(basis, spec, cfg.trace_mode);
        let free = spec.free_cells();
        let n_dof = 3 * free.iter().filter(|f| **f).count();
        let max_cg = cfg
            .max_cg
            .unwrap_or_else(|| ((10.0 * (n_dof as f64).sqrt()).ceil() as usize).max(1));
        Self {
            spec,
            basis,
            m,
            trace,
            free,
            cg_tol: cfg.cg_tol,
            max_cg,
        }
    }

    pub fn cells(&self) -> usize {
        self.spec.cells()
    }

    pub fn step_data(&self, load: &StepLoad, prev: &State) -> Result<StepData> {
        prev.check(self.spec, self.basis)?;
        check_len(self.cells(), load.body_force.len())?;
        let vol = self.spec.cell_volume();
        let affine_work = vol
            * (0..self.cells())
                .map(|c| load.body_force[c].dot(&load.applied_gradient.mul_vec(&self.spec.center(c))))
                .sum::<f64>();
        let mut gamma_prev = prev.gamma.clone();
        self.trace.apply(&mut gamma_prev);
        let eta_prev = match (&self.m.hardening, &prev.eta) {
            (HardeningLaw::Isotropic { .. }, Some(e)) => Some(e.clone()),
            (HardeningLaw::Isotropic { .. }, None) => Some(SlipField::zeros(self.cells(), self.basis.len())),
            _ => None,
        };
        Ok(StepData {
            g: load.applied_gradient,
            f: load.body_force.clone(),
            affine_work,
            gamma_prev,
            eta_prev,
        })
    }

    pub fn mask(&self, w: &mut Vec3Field) {
        for (v, free) in w.values_mut().iter_mut().zip(&self.free) {
            if !free {
                *v = Default::default();
            }
        }
    }

    /// `mask ∘ gradᵀ ∘ C sym ∘ grad` on masked fields.
    pub fn u_apply(&self, w: &Vec3Field) -> Vec3Field {
        let gw = grad(w, self.spec).expect("sized by construction");
        let s = gw.map(|x| self.m.elastic.apply(x));
        let mut out = grad_adjoint(&s, self.spec).expect("sized by construction");
        self.mask(&mut out);
        out
    }

    pub fn u_rhs(&self, sd: &StepData, p: &Mat3Field) -> Vec3Field {
        let s = p.map(|x| self.m.elastic.apply(&(sd.g - *x)));
        let mut out = sd.f.lin_comb(1.0, &grad_adjoint(&s, self.spec).expect("sized"), -1.0);
        self.mask(&mut out);
        out
    }

    pub fn solve_u(&self, sd: &StepData, gamma: &SlipField, warm: &Vec3Field) -> Result<(Vec3Field, CgOutcome)> {
        let p = gamma.distortion(self.basis)?;
        let b = self.u_rhs(sd, &p);
        let mut w = warm.clone();
        self.mask(&mut w);
        let out = conjugate_gradient(|x| self.u_apply(x), &b, &mut w, self.cg_tol, self.max_cg)?;
        Ok((w, out))
    }

    fn elastic_distortion(&self, sd: &StepData, w: &Vec3Field, p: &Mat3Field) -> Mat3Field {
        let gw = grad(w, self.spec).expect("sized");
        Mat3Field::from_fn(self.cells(), |c| sd.g + gw[c] - p[c])
    }

    /// Resolved Eshelby shear including the local backstress.
    pub fn tau(&self, sd: &StepData, w: &Vec3Field, gamma: &SlipField) -> Result<SlipField> {
        let p = gamma.distortion(self.basis)?;
        let e = self.elastic_distortion(sd, w, &p);
        let mut se = e.map(|x| self.m.elastic.apply(x));
        if self.m.lc != 0.0 {
            let cc = curl_adjoint(&curl_mat(&p, self.spec)?, self.spec)?;
            se.axpy(-self.m.defect_modulus(), &cc);
        }
        let mut tau = SlipField::project(&se, self.basis);
        self.add_backstress(gamma, &mut tau, 1.0);
        Ok(tau)
    }

    fn add_backstress(&self, gamma: &SlipField, out: &mut SlipField, scale: f64) {
        if self.m.hardening.is_isotropic() {
            return;
        }
        let mut s = vec![0.0; self.basis.len()];
        for c in 0..self.cells() {
            self.m.local_backstress(self.basis, gamma.cell(c), &mut s);
            for (o, x) in out.cell_mut(c).iter_mut().zip(&s) {
                *o += scale * x;
            }
        }
    }

    pub fn energy(&self, sd: &StepData, w: &Vec3Field, gamma: &SlipField) -> Result<StepEnergy> {
        let vol = self.spec.cell_volume();
        let p = gamma.distortion(self.basis)?;
        let e = self.elastic_distortion(sd, w, &p);
        let elastic = 0.5 * vol * e.values().iter().map(|x| self.m.elastic.apply(x).inner(&x.sym())).sum::<f64>();
        let defect = if self.m.lc == 0.0 {
            0.0
        } else {
            let a = curl_mat(&p, self.spec)?;
            0.5 * self.m.defect_modulus() * vol * a.dot_sum(&a)
        };
        let mut hardening = 0.0;
        let mut abs_sum = 0.0;
        for c in 0..self.cells() {
            let g = gamma.cell(c);
            let gp = sd.gamma_prev.cell(c);
            for a in 0..g.len() {
                let d = (g[a] - gp[a]).abs();
                abs_sum += d;
                if let Some(eta) = &sd.eta_prev {
                    let e = eta.cell(c)[a] + d;
                    hardening += 0.5 * self.m.iso_modulus() * e * e;
                }
            }
            if !self.m.hardening.is_isotropic() {
                hardening += self.m.kinematic_density(self.basis, g);
            }
        }
        hardening *= vol;
        let dissipation = self.m.sigma0 * vol * abs_sum;
        let work = vol * sd.f.dot_sum(w) + sd.affine_work;
        Ok(StepEnergy {
            elastic,
            defect,
            hardening,
            dissipation,
            work,
            total: elastic + defect + hardening - work + dissipation,
        })
    }

    /// Quadratic part of the slip block:
    /// `m̄ᵀ C sym m̄ q + μL² m̄ᵀ curl* curl m̄ q + Hessian of the kinematic energy`.
    pub fn gamma_block_apply(&self, q: &SlipField) -> Result<SlipField> {
        let p = q.distortion(self.basis)?;
        let mut s = p.map(|x| self.m.elastic.apply(x));
        if self.m.lc != 0.0 {
            let cc = curl_adjoint(&curl_mat(&p, self.spec)?, self.spec)?;
            s.axpy(self.m.defect_modulus(), &cc);
        }
        let mut out = SlipField::project(&s, self.basis);
        self.add_backstress(q, &mut out, -1.0);
        Ok(out)
    }

    /// Proximal step on `v = y + t τ(y)` with the trace constraint enforced
    /// exactly.
    pub fn prox(&self, sd: &StepData, v: &SlipField, t: f64) -> SlipField {
        let n = self.basis.len();
        let s0 = self.m.sigma0;
        let k = self.m.iso_modulus();
        let mut out = SlipField::zeros(self.cells(), n);
        for c in 0..self.cells() {
            let gp = sd.gamma_prev.cell(c);
            let eta = sd.eta_prev.as_ref().map(|e| e.cell(c));
            let vin = v.cell(c);
            let o = out.cell_mut(c);
            match self.trace.projector(c) {
                CellProjector::Subspace { basis } => {
                    let din: Vec<f64> = vin.iter().zip(gp).map(|(a, b)| a - b).collect();
                    let weights: Vec<f64> = (0..n).map(|a| s0 + k * eta.map_or(0.0, |e| e[a])).collect();
                    let d = subspace_prox(basis, &din, t, &weights, k);
                    for a in 0..n {
                        o[a] = gp[a] + d[a];
                    }
                }
                p => {
                    for a in 0..n {
                        if p.is_free(a) {
                            let d = prox_scalar_iso(vin[a] - gp[a], t, s0, k, eta.map_or(0.0, |e| e[a]));
                            o[a] = gp[a] + d;
                        }
                    }
                }
            }
        }
        out
    }

    pub fn kkt(&self, sd: &StepData, tau: &SlipField, gamma: &SlipField) -> KktResidual {
        let eta_new = sd.eta_prev.as_ref().map(|e| {
            let d = gamma.lin_comb(1.0, &sd.gamma_prev, -1.0);
            super::prox::eliminate_eta(&d, e).expect("sized")
        });
        kkt_core(
            tau,
            gamma,
            &sd.gamma_prev,
            eta_new.as_ref().zip(sd.eta_prev.as_ref()),
            self.m,
            &self.trace,
        )
    }
}

/// KKT residuals from resolved shears and the slip increment.
pub(crate) fn kkt_core(
    tau: &SlipField,
    gamma: &SlipField,
    gamma_prev: &SlipField,
    eta: Option<(&SlipField, &SlipField)>,
    m: &MaterialParams,
    trace: &TraceConstraint,
) -> KktResidual {
    let s0 = m.sigma0;
    let k = m.iso_modulus();
    let n = gamma.n_slip();
    let mut r = KktResidual::default();
    let mut comp = 0.0f64;
    let mut dmax = 0.0f64;
    for c in 0..gamma.cells() {
        let (g, gp, t) = (gamma.cell(c), gamma_prev.cell(c), tau.cell(c));
        let hard = |a: usize| eta.map_or(0.0, |(e, _)| -k * e.cell(c)[a]);
        if let Some((e, ep)) = eta {
            for a in 0..n {
                let de = e.cell(c)[a] - ep.cell(c)[a];
                r.eta_consistency = r.eta_consistency.max((de - (g[a] - gp[a]).abs()).abs());
            }
        }
        match trace.projector(c) {
            CellProjector::Subspace { basis } => {
                // distance of 0 from the projected subdifferential
                let mut target = vec![0.0; n];
                let mut hw = vec![0.0; n];
                for a in 0..n {
                    let d = g[a] - gp[a];
                    let radius = s0 - hard(a);
                    dmax = dmax.max(d.abs());
                    if d.abs() <= SUBSPACE_ZERO * (1.0 + g[a].abs()) {
                        target[a] = t[a];
                        hw[a] = radius;
                    } else {
                        target[a] = t[a] - d.signum() * radius;
                    }
                }
                let u = box_projected_min(basis, &target, &hw);
                let res: Vec<f64> = target.iter().zip(&u).map(|(x, y)| x - y).collect();
                let mut pr = vec![0.0; n];
                for v in basis {
                    let s: f64 = v.iter().zip(&res).map(|(a, b)| a * b).sum();
                    for (o, x) in pr.iter_mut().zip(v) {
                        *o += s * x;
                    }
                }
                let worst = pr.iter().fold(0.0f64, |mx, x| mx.max(x.abs()));
                r.feasibility = r.feasibility.max(worst / s0);
            }
            p => {
                for a in 0..n {
                    if !p.is_free(a) {
                        continue;
                    }
                    let d = g[a] - gp[a];
                    dmax = dmax.max(d.abs());
                    let phi = t[a].abs() + hard(a) - s0;
                    r.feasibility = r.feasibility.max(phi.max(0.0) / s0);
                    comp = comp.max(d.abs() * phi.abs());
                    if d != 0.0 {
                        let mis = d.abs() * t[a].abs() - d * t[a];
                        r.alignment = r.alignment.max(mis / (s0 * d.abs() + f64::EPSILON));
                    }
                }
            }
        }
    }
    r.complementarity = comp / (s0 * dmax + f64::EPSILON);
    r
}
