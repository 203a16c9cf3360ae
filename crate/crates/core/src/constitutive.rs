//! The material model: free energy, stresses, yield and dissipation, and the
//! bilinear and linear forms of the weak formulation.
//!
//! Displacements are written as `u = G·x + w`, where `G` is the applied
//! (homogeneous) displacement gradient that carries the Dirichlet data and
//! `w` vanishes on Dirichlet cells. The discrete displacement gradient is
//! `G + grad(w)`.

use crate::algebra::{ElasticModuli, Mat3, SlipBasis};
use crate::error::{check_len, Error, Result};
use crate::grid::{
    curl_adjoint, curl_mat, grad, l2_inner, l2_norm_sq, GridSpec, Mat3Field, SlipField, Vec3Field,
};

#[derive(Clone, Debug, PartialEq)]
pub enum HardeningLaw {
    /// `½ μ k₂ |η|²` with hardening variables `η`.
    Isotropic { k2: f64 },
    /// `½ <H γ, γ>` with `H` symmetric positive definite (row-major).
    KinematicQuadratic { h: Vec<f64> },
    /// `½ μ k₁ |sym p|²`; only admissible for mutually orthogonal systems.
    KinematicPrager { k1: f64 },
}

impl HardeningLaw {
    pub fn is_isotropic(&self) -> bool {
        matches!(self, HardeningLaw::Isotropic { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            HardeningLaw::Isotropic { .. } => "isotropic",
            HardeningLaw::KinematicQuadratic { .. } => "quadratic",
            HardeningLaw::KinematicPrager { .. } => "prager",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaterialParams {
    pub elastic: ElasticModuli,
    pub lc: f64,
    pub sigma0: f64,
    pub hardening: HardeningLaw,
}

impl MaterialParams {
    /// Validates the parameters against the slip basis they will be used with.
    pub fn new(
        elastic: ElasticModuli,
        lc: f64,
        sigma0: f64,
        hardening: HardeningLaw,
        basis: &SlipBasis,
    ) -> Result<Self> {
        if !(lc.is_finite() && lc >= 0.0) {
            return Err(Error::InvalidModel(format!("length scale must be >= 0, got {lc}")));
        }
        if !(sigma0.is_finite() && sigma0 > 0.0) {
            return Err(Error::InvalidModel(format!(
                "initial yield stress must be > 0, got {sigma0}"
            )));
        }
        let m = Self {
            elastic,
            lc,
            sigma0,
            hardening,
        };
        m.validate_hardening(basis)?;
        Ok(m)
    }

    /// Skips all checks. Used to probe degenerate models such as `k₂ = 0`.
    pub fn unchecked(elastic: ElasticModuli, lc: f64, sigma0: f64, hardening: HardeningLaw) -> Self {
        Self {
            elastic,
            lc,
            sigma0,
            hardening,
        }
    }

    pub fn validate_hardening(&self, basis: &SlipBasis) -> Result<()> {
        match &self.hardening {
            HardeningLaw::Isotropic { k2 } => {
                if !(k2.is_finite() && *k2 > 0.0) {
                    return Err(Error::InvalidModel(format!(
                        "isotropic hardening modulus k2 must be > 0, got {k2}"
                    )));
                }
            }
            HardeningLaw::KinematicQuadratic { h } => {
                let n = basis.len();
                check_len(n * n, h.len())?;
                for a in 0..n {
                    for b in 0..a {
                        let (x, y) = (h[a * n + b], h[b * n + a]);
                        if (x - y).abs() > 1e-12 * (1.0 + x.abs().max(y.abs())) {
                            return Err(Error::InvalidModel(format!(
                                "hardening matrix must be symmetric: H[{a}][{b}] = {x}, H[{b}][{a}] = {y}"
                            )));
                        }
                    }
                }
                let mat = nalgebra::DMatrix::from_row_slice(n, n, h);
                if mat.clone().cholesky().is_none() || min_eigen(h, n) <= 0.0 {
                    return Err(Error::InvalidModel(
                        "hardening matrix must be positive definite".into(),
                    ));
                }
            }
            HardeningLaw::KinematicPrager { k1 } => {
                if !(k1.is_finite() && *k1 > 0.0) {
                    return Err(Error::InvalidModel(format!(
                        "Prager hardening modulus k1 must be > 0, got {k1}"
                    )));
                }
                if !basis.is_mutually_orthogonal() {
                    return Err(Error::InvalidModel(
                        "Prager hardening needs mutually orthogonal slip systems; otherwise |sym p|² does not control every slip"
                            .into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn mu(&self) -> f64 {
        self.elastic.mu()
    }

    /// `μ L_c²`.
    pub fn defect_modulus(&self) -> f64 {
        self.mu() * self.lc * self.lc
    }

    /// `μ k₂` for the isotropic law, 0 otherwise.
    pub fn iso_modulus(&self) -> f64 {
        match self.hardening {
            HardeningLaw::Isotropic { k2 } => self.mu() * k2,
            _ => 0.0,
        }
    }

    /// Smallest eigenvalue of the slip Hessian of the kinematic hardening
    /// energy, 0 for the isotropic law.
    pub fn kinematic_min_eigen(&self, basis: &SlipBasis) -> f64 {
        let n = basis.len();
        match &self.hardening {
            HardeningLaw::Isotropic { .. } => 0.0,
            HardeningLaw::KinematicQuadratic { h } => min_eigen(h, n),
            HardeningLaw::KinematicPrager { k1 } => self.mu() * k1 * min_eigen(&basis.sym_gram(), n),
        }
    }

    /// Largest eigenvalue of that Hessian.
    pub fn kinematic_max_eigen(&self, basis: &SlipBasis) -> f64 {
        let n = basis.len();
        match &self.hardening {
            HardeningLaw::Isotropic { .. } => 0.0,
            HardeningLaw::KinematicQuadratic { h } => max_eigen(h, n),
            HardeningLaw::KinematicPrager { k1 } => self.mu() * k1 * max_eigen(&basis.sym_gram(), n),
        }
    }

    /// Local backstress `s = -∂Ψ_kin/∂γ` at one cell.
    pub fn local_backstress(&self, basis: &SlipBasis, gamma: &[f64], out: &mut [f64]) {
        match &self.hardening {
            HardeningLaw::Isotropic { .. } => out.fill(0.0),
            HardeningLaw::KinematicQuadratic { h } => {
                let n = gamma.len();
                for a in 0..n {
                    out[a] = -(0..n).map(|b| h[a * n + b] * gamma[b]).sum::<f64>();
                }
            }
            HardeningLaw::KinematicPrager { k1 } => {
                let sp = basis.apply_unchecked(gamma).sym();
                basis.project_into(&sp, out);
                for x in out.iter_mut() {
                    *x *= -self.mu() * k1;
                }
            }
        }
    }

    /// Kinematic hardening energy density at one cell.
    pub fn kinematic_density(&self, basis: &SlipBasis, gamma: &[f64]) -> f64 {
        match &self.hardening {
            HardeningLaw::Isotropic { .. } => 0.0,
            HardeningLaw::KinematicQuadratic { h } => {
                let n = gamma.len();
                let mut e = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        e += gamma[a] * h[a * n + b] * gamma[b];
                    }
                }
                0.5 * e
            }
            HardeningLaw::KinematicPrager { k1 } => {
                let sp = basis.apply_unchecked(gamma).sym();
                0.5 * self.mu() * k1 * sp.inner(&sp)
            }
        }
    }
}

fn sym_eigen(a: &[f64], n: usize) -> nalgebra::DVector<f64> {
    nalgebra::DMatrix::from_row_slice(n, n, a).symmetric_eigenvalues()
}

fn min_eigen(a: &[f64], n: usize) -> f64 {
    sym_eigen(a, n).min()
}

fn max_eigen(a: &[f64], n: usize) -> f64 {
    sym_eigen(a, n).max()
}

/// Discrete unknowns at one time instant.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    /// Total displacement at cell centers.
    pub u: Vec3Field,
    /// Homogeneous displacement gradient carrying the Dirichlet data.
    pub applied_gradient: Mat3,
    pub gamma: SlipField,
    /// Hardening variables, present for the isotropic law only.
    pub eta: Option<SlipField>,
}

impl State {
    pub fn zero(spec: &GridSpec, basis: &SlipBasis, law: &HardeningLaw) -> Self {
        let cells = spec.cells();
        Self {
            u: Vec3Field::zeros(cells),
            applied_gradient: Mat3::ZERO,
            gamma: SlipField::zeros(cells, basis.len()),
            eta: law
                .is_isotropic()
                .then(|| SlipField::zeros(cells, basis.len())),
        }
    }

    /// Builds a state from a displacement fluctuation `w` (zero on Dirichlet
    /// cells) and the applied gradient.
    pub fn from_fluctuation(
        w: &Vec3Field,
        applied_gradient: Mat3,
        gamma: SlipField,
        eta: Option<SlipField>,
        spec: &GridSpec,
    ) -> Self {
        let u = Vec3Field::from_fn(spec.cells(), |c| {
            w[c] + applied_gradient.mul_vec(&spec.center(c))
        });
        Self {
            u,
            applied_gradient,
            gamma,
            eta,
        }
    }

    /// `u - G·x`.
    pub fn fluctuation(&self, spec: &GridSpec) -> Vec3Field {
        Vec3Field::from_fn(self.u.len(), |c| {
            self.u[c] - self.applied_gradient.mul_vec(&spec.center(c))
        })
    }

    pub fn check(&self, spec: &GridSpec, basis: &SlipBasis) -> Result<()> {
        check_len(spec.cells(), self.u.len())?;
        check_len(spec.cells(), self.gamma.cells())?;
        check_len(basis.len(), self.gamma.n_slip())?;
        if let Some(eta) = &self.eta {
            check_len(self.gamma.values().len(), eta.values().len())?;
        }
        Ok(())
    }
}

/// `G + grad(u - G·x)`.
pub fn displacement_gradient(s: &State, spec: &GridSpec) -> Result<Mat3Field> {
    check_len(spec.cells(), s.u.len())?;
    let g = grad(&s.fluctuation(spec), spec)?;
    Ok(g.map(|x| *x + s.applied_gradient))
}

pub fn plastic_distortion(gamma: &SlipField, basis: &SlipBasis) -> Result<Mat3Field> {
    gamma.distortion(basis)
}

/// Elastic distortion `∇u - p`.
pub fn elastic_distortion(s: &State, basis: &SlipBasis, spec: &GridSpec) -> Result<Mat3Field> {
    s.check(spec, basis)?;
    let du = displacement_gradient(s, spec)?;
    let p = plastic_distortion(&s.gamma, basis)?;
    Ok(du.lin_comb(1.0, &p, -1.0))
}

pub fn cauchy_stress(s: &State, m: &MaterialParams, basis: &SlipBasis, spec: &GridSpec) -> Result<Mat3Field> {
    let e = elastic_distortion(s, basis, spec)?;
    Ok(e.map(|x| m.elastic.apply(x)))
}

/// `Curl p`.
pub fn dislocation_density(gamma: &SlipField, basis: &SlipBasis, spec: &GridSpec) -> Result<Mat3Field> {
    curl_mat(&plastic_distortion(gamma, basis)?, spec)
}

/// `σ - μ L_c² curl*(curl p)`.
pub fn eshelby_stress(s: &State, m: &MaterialParams, basis: &SlipBasis, spec: &GridSpec) -> Result<Mat3Field> {
    let sigma = cauchy_stress(s, m, basis, spec)?;
    if m.lc == 0.0 {
        return Ok(sigma);
    }
    let cc = curl_adjoint(&dislocation_density(&s.gamma, basis, spec)?, spec)?;
    Ok(sigma.lin_comb(1.0, &cc, -m.defect_modulus()))
}

/// Resolved Eshelby shear `τ_E` (including the local backstress) and, for the
/// isotropic law, the hardening force `g = -μ k₂ η`.
pub fn resolved_stresses(
    s: &State,
    m: &MaterialParams,
    basis: &SlipBasis,
    spec: &GridSpec,
) -> Result<(SlipField, Option<SlipField>)> {
    let se = eshelby_stress(s, m, basis, spec)?;
    let mut tau = SlipField::project(&se, basis);
    let n = basis.len();
    let mut loc = vec![0.0; n];
    for c in 0..spec.cells() {
        m.local_backstress(basis, s.gamma.cell(c), &mut loc);
        for (t, l) in tau.cell_mut(c).iter_mut().zip(&loc) {
            *t += l;
        }
    }
    let g = match (&m.hardening, &s.eta) {
        (HardeningLaw::Isotropic { .. }, Some(eta)) => Some(eta.scaled(-m.iso_modulus())),
        (HardeningLaw::Isotropic { .. }, None) => {
            return Err(Error::InvalidModel(
                "isotropic hardening needs hardening variables in the state".into(),
            ))
        }
        _ => None,
    };
    Ok((tau, g))
}

/// Every field derived from a [`State`].
#[derive(Clone, Debug, PartialEq)]
pub struct DerivedState {
    pub p: Mat3Field,
    pub eps_p: Mat3Field,
    pub sigma: Mat3Field,
    pub alpha: Mat3Field,
    pub sigma_e: Mat3Field,
    pub tau_e: SlipField,
    pub g: Option<SlipField>,
}

pub fn derive(s: &State, m: &MaterialParams, basis: &SlipBasis, spec: &GridSpec) -> Result<DerivedState> {
    let p = plastic_distortion(&s.gamma, basis)?;
    let eps_p = p.map(Mat3::sym);
    let sigma = cauchy_stress(s, m, basis, spec)?;
    let alpha = curl_mat(&p, spec)?;
    let sigma_e = if m.lc == 0.0 {
        sigma.clone()
    } else {
        sigma.lin_comb(1.0, &curl_adjoint(&alpha, spec)?, -m.defect_modulus())
    };
    let (tau_e, g) = resolved_stresses(s, m, basis, spec)?;
    Ok(DerivedState {
        p,
        eps_p,
        sigma,
        alpha,
        sigma_e,
        tau_e,
        g,
    })
}

/// `|τ_E| + g - σ₀`; pass `g = 0` for kinematic laws.
pub fn yield_function(tau_e: f64, g: f64, m: &MaterialParams) -> f64 {
    tau_e.abs() + g - m.sigma0
}

/// Admissibility of a generalized stress pair.
pub fn is_admissible(tau_e: f64, g: f64, m: &MaterialParams) -> bool {
    yield_function(tau_e, g, m) <= 0.0 && (!m.hardening.is_isotropic() || g <= 0.0)
}

/// `σ₀|q|` when `|q| ≤ β` (isotropic) or unconditionally (kinematic); `+∞`
/// otherwise.
pub fn dissipation_density(q: f64, beta: f64, m: &MaterialParams) -> f64 {
    if m.hardening.is_isotropic() && q.abs() > beta {
        f64::INFINITY
    } else {
        m.sigma0 * q.abs()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyBreakdown {
    pub elastic: f64,
    pub defect: f64,
    pub hardening: f64,
    pub total: f64,
}

pub fn free_energy(s: &State, m: &MaterialParams, basis: &SlipBasis, spec: &GridSpec) -> Result<EnergyBreakdown> {
    let e = elastic_distortion(s, basis, spec)?;
    let vol = spec.cell_volume();
    let elastic = 0.5 * vol * e.values().iter().map(|x| m.elastic.apply(x).inner(&x.sym())).sum::<f64>();
    let defect = if m.lc == 0.0 {
        0.0
    } else {
        0.5 * m.defect_modulus() * l2_norm_sq(&dislocation_density(&s.gamma, basis, spec)?, spec)?
    };
    let hardening = match (&m.hardening, &s.eta) {
        (HardeningLaw::Isotropic { .. }, Some(eta)) => 0.5 * m.iso_modulus() * l2_norm_sq(eta, spec)?,
        (HardeningLaw::Isotropic { .. }, None) => 0.0,
        _ => {
            vol * (0..spec.cells())
                .map(|c| m.kinematic_density(basis, s.gamma.cell(c)))
                .sum::<f64>()
        }
    };
    Ok(EnergyBreakdown {
        elastic,
        defect,
        hardening,
        total: elastic + defect + hardening,
    })
}

/// `a(w, z)`: the symmetric bilinear form whose quadratic form is twice the
/// free energy. Displacement gradients include the applied gradients.
pub fn bilinear_a(w: &State, z: &State, m: &MaterialParams, basis: &SlipBasis, spec: &GridSpec) -> Result<f64> {
    let ew = elastic_distortion(w, basis, spec)?;
    let ez = elastic_distortion(z, basis, spec)?;
    let vol = spec.cell_volume();
    let mut a = vol
        * ew.values()
            .iter()
            .zip(ez.values())
            .map(|(x, y)| m.elastic.apply(x).inner(&y.sym()))
            .sum::<f64>();
    if m.lc != 0.0 {
        let cw = dislocation_density(&w.gamma, basis, spec)?;
        let cz = dislocation_density(&z.gamma, basis, spec)?;
        a += m.defect_modulus() * l2_inner(&cw, &cz, spec)?;
    }
    match &m.hardening {
        HardeningLaw::Isotropic { .. } => {
            if let (Some(b), Some(c)) = (&w.eta, &z.eta) {
                a += m.iso_modulus() * l2_inner(b, c, spec)?;
            }
        }
        _ => {
            let mut s = vec![0.0; basis.len()];
            let mut h = 0.0;
            for c in 0..spec.cells() {
                m.local_backstress(basis, w.gamma.cell(c), &mut s);
                h -= s.iter().zip(z.gamma.cell(c)).map(|(x, y)| x * y).sum::<f64>();
            }
            a += vol * h;
        }
    }
    Ok(a)
}

/// `<ℓ, v> = ∫ f·v`.
pub fn load_ell(f: &Vec3Field, v: &Vec3Field, spec: &GridSpec) -> Result<f64> {
    l2_inner(f, v, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Vec3;
    use crate::grid::{div_mat, Face, FaceSet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn e(i: usize) -> Vec3 {
        Vec3::unit(i)
    }

    fn single() -> SlipBasis {
        SlipBasis::from_pairs(&[(e(0), e(1))]).unwrap()
    }

    fn coord3() -> SlipBasis {
        SlipBasis::from_pairs(&[(e(0), e(1)), (e(1), e(2)), (e(2), e(0))]).unwrap()
    }

    fn iso(basis: &SlipBasis, lc: f64) -> MaterialParams {
        MaterialParams::new(
            ElasticModuli::new(1.0, 1.3).unwrap(),
            lc,
            0.1,
            HardeningLaw::Isotropic { k2: 0.5 },
            basis,
        )
        .unwrap()
    }

    fn random_state(spec: &GridSpec, basis: &SlipBasis, law: &HardeningLaw, rng: &mut ChaCha8Rng) -> State {
        let mut r = |_: usize| rng.random_range(-1.0..1.0);
        let cells = spec.cells();
        let n = basis.len();
        let u: Vec<Vec3> = (0..cells).map(|c| Vec3::new(r(c), r(c), r(c))).collect();
        let g = Mat3::from_row_major(std::array::from_fn(|k| r(k) * 0.1));
        let gamma = SlipField::from_fn(cells, n, |c, _| r(c));
        let eta = law.is_isotropic().then(|| SlipField::from_fn(cells, n, |c, _| r(c).abs()));
        State::from_fluctuation(&Vec3Field::from_vec(u), g, gamma, eta, spec)
    }

    fn grid() -> GridSpec {
        GridSpec::new(3, 4, 3, 0.25, FaceSet::from_faces(&[Face::YMin])).unwrap()
    }

    #[test]
    fn hardening_validation() {
        let el = ElasticModuli::new(1.0, 1.0).unwrap();
        let b = single();
        let mk = |h| MaterialParams::new(el, 0.1, 0.1, h, &b);
        assert!(mk(HardeningLaw::Isotropic { k2: 0.0 }).is_err());
        assert!(mk(HardeningLaw::KinematicQuadratic { h: vec![-1.0] }).is_err());
        assert!(mk(HardeningLaw::KinematicQuadratic { h: vec![2.0] }).is_ok());
        assert!(mk(HardeningLaw::KinematicPrager { k1: 1.0 }).is_ok());
        let two = SlipBasis::from_pairs(&[(e(0), e(1)), (e(0), e(2))]).unwrap();
        let prager = MaterialParams::new(el, 0.1, 0.1, HardeningLaw::KinematicPrager { k1: 1.0 }, &two);
        assert!(matches!(prager, Err(Error::InvalidModel(_))));
        let asym = HardeningLaw::KinematicQuadratic { h: vec![1.0, 0.5, 0.0, 1.0] };
        assert!(MaterialParams::new(el, 0.1, 0.1, asym, &two).is_err());
        assert!(MaterialParams::new(el, 0.1, 0.0, HardeningLaw::Isotropic { k2: 1.0 }, &b).is_err());
        assert!(MaterialParams::new(el, -1.0, 0.1, HardeningLaw::Isotropic { k2: 1.0 }, &b).is_err());
    }

    #[test]
    fn zero_state_is_stress_free() {
        let spec = grid();
        let b = single();
        let m = iso(&b, 0.3);
        let s = State::zero(&spec, &b, &m.hardening);
        let d = derive(&s, &m, &b, &spec).unwrap();
        assert!(d.sigma.values().iter().all(|x| *x == Mat3::ZERO));
        assert!(d.tau_e.values().iter().all(|x| *x == 0.0));
        assert_eq!(free_energy(&s, &m, &b, &spec).unwrap(), EnergyBreakdown::default());
    }

    #[test]
    fn homogeneous_shear_stresses() {
        let spec = GridSpec::new(4, 4, 4, 0.25, FaceSet::ALL).unwrap();
        let b = single();
        let m = iso(&b, 0.7);
        let (g, gam, eta) = (0.3, 0.12, 0.2);
        let mut gr = Mat3::ZERO;
        gr[(0, 1)] = g;
        let s = State::from_fluctuation(
            &Vec3Field::zeros(spec.cells()),
            gr,
            SlipField::from_fn(spec.cells(), 1, |_, _| gam),
            Some(SlipField::from_fn(spec.cells(), 1, |_, _| eta)),
            &spec,
        );
        let d = derive(&s, &m, &b, &spec).unwrap();
        let k2 = 0.5;
        for c in 0..spec.cells() {
            assert!((d.sigma[c][(0, 1)] - m.mu() * (g - gam)).abs() < 1e-14);
            assert!((d.sigma[c] - d.sigma[c].transpose()).norm() < 1e-14);
            assert!((d.tau_e.cell(c)[0] - m.mu() * (g - gam)).abs() < 1e-13);
            assert!((d.g.as_ref().unwrap().cell(c)[0] + m.mu() * k2 * eta).abs() < 1e-15);
        }
        let en = free_energy(&s, &m, &b, &spec).unwrap();
        assert_eq!(en.defect, 0.0);
        assert!((en.elastic - 0.5 * m.mu() * (g - gam).powi(2)).abs() < 1e-14);
    }

    #[test]
    fn trace_of_stress() {
        let spec = grid();
        let b = single();
        let m = iso(&b, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = random_state(&spec, &b, &m.hardening, &mut rng);
        s.gamma = SlipField::zeros(spec.cells(), 1);
        let sigma = cauchy_stress(&s, &m, &b, &spec).unwrap();
        let du = displacement_gradient(&s, &spec).unwrap();
        let c3 = 2.0 * m.mu() + 3.0 * m.elastic.lambda();
        for c in 0..spec.cells() {
            assert!((sigma[c].trace() - c3 * du[c].trace()).abs() < 1e-12);
        }
    }

    #[test]
    fn dislocation_density_of_linear_slip() {
        let spec = GridSpec::new(4, 4, 4, 0.25, FaceSet::ALL).unwrap();
        let b = single();
        let gamma = SlipField::from_fn(spec.cells(), 1, |c, _| 2.0 * spec.center(c)[0]);
        let a = dislocation_density(&gamma, &b, &spec).unwrap();
        // Curl(γ e1⊗e2) has rows (∇γ × e2) ⊗ e1 → entry (0, 2) = ∂γ/∂x
        for c in 0..spec.cells() {
            if spec.coords(c)[0] < 3 {
                let mut expect = Mat3::ZERO;
                expect[(0, 2)] = 2.0;
                assert!((a[c] - expect).norm() < 1e-12);
            }
        }
        let uni = SlipField::from_fn(spec.cells(), 1, |_, _| 0.4);
        assert!(dislocation_density(&uni, &b, &spec).unwrap().values().iter().all(|x| *x == Mat3::ZERO));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rand = SlipField::from_fn(spec.cells(), 1, |_, _| rng.random_range(-1.0..1.0));
        let div = div_mat(&dislocation_density(&rand, &b, &spec).unwrap(), &spec).unwrap();
        assert!(div.values().iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn eshelby_adjoint_pairing() {
        let spec = grid();
        let b = coord3();
        let m = iso(&b, 0.8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = random_state(&spec, &b, &m.hardening, &mut rng);
        let q = SlipField::from_fn(spec.cells(), 3, |_, _| rng.random_range(-1.0..1.0));
        let se = eshelby_stress(&s, &m, &b, &spec).unwrap();
        let sigma = cauchy_stress(&s, &m, &b, &spec).unwrap();
        let mq = q.distortion(&b).unwrap();
        let lhs = l2_inner(&se.lin_comb(1.0, &sigma, -1.0), &mq, &spec).unwrap();
        let ca = dislocation_density(&s.gamma, &b, &spec).unwrap();
        let cq = dislocation_density(&q, &b, &spec).unwrap();
        let rhs = -m.defect_modulus() * l2_inner(&ca, &cq, &spec).unwrap();
        assert!((lhs - rhs).abs() < 1e-11 * (1.0 + rhs.abs()));
        let m0 = iso(&b, 0.0);
        assert_eq!(eshelby_stress(&s, &m0, &b, &spec).unwrap(), cauchy_stress(&s, &m0, &b, &spec).unwrap());
    }

    #[test]
    fn resolved_shear_ignores_pressure() {
        let b = coord3();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let s = Mat3::from_row_major(std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
            let t = b.project(&s);
            let td = b.project(&s.dev());
            for (x, y) in t.iter().zip(&td) {
                assert!((x - y).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn yield_and_dissipation() {
        let b = single();
        let m = iso(&b, 0.1);
        assert_eq!(yield_function(m.sigma0, 0.0, &m), 0.0);
        assert_eq!(yield_function(0.0, 0.0, &m), -m.sigma0);
        let eta = 0.3;
        let g = -m.iso_modulus() * eta;
        let tau = m.sigma0 + m.iso_modulus() * eta;
        assert!(yield_function(tau, g, &m).abs() < 1e-15);
        assert_eq!(dissipation_density(0.0, 0.0, &m), 0.0);
        assert_eq!(dissipation_density(0.2, 0.1, &m), f64::INFINITY);
        assert!((dissipation_density(-0.2, 0.3, &m) - 0.02).abs() < 1e-16);
        let c = 2.5;
        assert!((dissipation_density(c * 0.1, c * 0.3, &m) - c * dissipation_density(0.1, 0.3, &m)).abs() < 1e-15);
        let kin = MaterialParams::new(m.elastic, 0.1, 0.1, HardeningLaw::KinematicQuadratic { h: vec![1.0] }, &b).unwrap();
        assert!((dissipation_density(5.0, 0.0, &kin) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn admissible_set_is_convex() {
        let b = single();
        let m = iso(&b, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut draw = || loop {
            let t = rng.random_range(-0.5..0.5);
            let g = rng.random_range(-0.5..0.0);
            if is_admissible(t, g, &m) {
                return (t, g);
            }
        };
        for _ in 0..200 {
            let (a, b) = (draw(), draw());
            assert!(is_admissible(0.5 * (a.0 + b.0), 0.5 * (a.1 + b.1), &m));
        }
    }

    #[test]
    fn prager_energy_on_orthogonal_systems() {
        let spec = grid();
        let b = coord3();
        let k1 = 0.7;
        let m = MaterialParams::new(ElasticModuli::new(1.0, 1.0).unwrap(), 0.0, 0.1, HardeningLaw::KinematicPrager { k1 }, &b).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_state(&spec, &b, &m.hardening, &mut rng);
        let en = free_energy(&s, &m, &b, &spec).unwrap();
        let expect = 0.25 * m.mu() * k1 * l2_norm_sq(&s.gamma, &spec).unwrap();
        assert!((en.hardening - expect).abs() < 1e-12 * expect);
    }

    fn laws(b: &SlipBasis) -> Vec<MaterialParams> {
        let el = ElasticModuli::new(1.0, 0.8).unwrap();
        let n = b.len();
        let mut h = vec![0.0; n * n];
        for a in 0..n {
            for c in 0..n {
                h[a * n + c] = if a == c { 1.0 } else { 0.3 };
            }
        }
        vec![
            MaterialParams::new(el, 0.6, 0.1, HardeningLaw::Isotropic { k2: 0.5 }, b).unwrap(),
            MaterialParams::new(el, 0.6, 0.1, HardeningLaw::KinematicQuadratic { h }, b).unwrap(),
            MaterialParams::new(el, 0.6, 0.1, HardeningLaw::KinematicPrager { k1: 0.4 }, b).unwrap(),
        ]
    }

    #[test]
    fn bilinear_form_properties() {
        let spec = grid();
        let b = coord3();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for m in laws(&b) {
            let w = random_state(&spec, &b, &m.hardening, &mut rng);
            let z = random_state(&spec, &b, &m.hardening, &mut rng);
            let aww = bilinear_a(&w, &w, &m, &b, &spec).unwrap();
            assert!(aww >= 0.0);
            let en = free_energy(&w, &m, &b, &spec).unwrap();
            assert!((aww - 2.0 * en.total).abs() < 1e-12 * aww);
            let (x, y) = (bilinear_a(&w, &z, &m, &b, &spec).unwrap(), bilinear_a(&z, &w, &m, &b, &spec).unwrap());
            assert!((x - y).abs() < 1e-12 * (x.abs() + y.abs()));
        }
    }

    #[test]
    fn load_functional() {
        let spec = GridSpec::new(8, 8, 8, 0.125, FaceSet::ALL).unwrap();
        let f = Vec3Field::constant(spec.cells(), e(0));
        assert!((load_ell(&f, &f, &spec).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(load_ell(&Vec3Field::zeros(spec.cells()), &f, &spec).unwrap(), 0.0);
    }
}
