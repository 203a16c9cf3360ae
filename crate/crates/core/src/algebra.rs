//! Small-tensor algebra and slip-system geometry.
//!
//! [`Vec3`] and [`Mat3`] are plain value types; a [`Mat3`] is stored row-major
//! so that row `i` is the vector `X^i` used by the row-wise `Curl` and `Div`.
//! A [`SlipBasis`] stores the orientation tensors `m^α = l^α ⊗ ν^α` and offers
//! the two contraction modes of the third-order tensor they form:
//! [`SlipBasis::apply`] (slips to distortion) and [`SlipBasis::project`]
//! (distortion to resolved components).

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use crate::error::{check_len, Error, Result};

/// Tolerance on the unit-norm and orthogonality residuals of a slip system.
pub const SLIP_TOLERANCE: f64 = 1e-12;

/// Inputs whose residuals are below this threshold are renormalized; larger
/// residuals are rejected.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec3(pub [f64; 3]);

impl Vec3 {
    pub const ZERO: Vec3 = Vec3([0.0; 3]);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3([x, y, z])
    }

    /// Unit vector along coordinate axis `axis` (0, 1 or 2).
    pub fn unit(axis: usize) -> Self {
        let mut v = [0.0; 3];
        v[axis] = 1.0;
        Vec3(v)
    }

    pub fn dot(&self, other: &Vec3) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    pub fn cross(&self, other: &Vec3) -> Vec3 {
        let [a0, a1, a2] = self.0;
        let [b0, b1, b2] = other.0;
        Vec3([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn outer(&self, other: &Vec3) -> Mat3 {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = self.0[i] * other.0[j];
            }
        }
        Mat3(m)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Vec3 {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        self * -1.0
    }
}

/// Second-order tensor, row-major.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const ZERO: Mat3 = Mat3([[0.0; 3]; 3]);
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn from_rows(r0: Vec3, r1: Vec3, r2: Vec3) -> Self {
        Mat3([r0.0, r1.0, r2.0])
    }

    /// Builds a tensor from nine row-major entries.
    pub fn from_row_major(e: [f64; 9]) -> Self {
        Mat3([[e[0], e[1], e[2]], [e[3], e[4], e[5]], [e[6], e[7], e[8]]])
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    pub fn row(&self, i: usize) -> Vec3 {
        Vec3(self.0[i])
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn sym(&self) -> Mat3 {
        (*self + self.transpose()) * 0.5
    }

    pub fn skew(&self) -> Mat3 {
        (*self - self.transpose()) * 0.5
    }

    pub fn dev(&self) -> Mat3 {
        *self - Mat3::IDENTITY * (self.trace() / 3.0)
    }

    /// Frobenius pairing `tr[A B^T]`.
    pub fn inner(&self, other: &Mat3) -> f64 {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += self.0[i][j] * other.0[i][j];
            }
        }
        s
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn mul_vec(&self, v: &Vec3) -> Vec3 {
        Vec3([self.row(0).dot(v), self.row(1).dot(v), self.row(2).dot(v)])
    }

    /// Row-wise cross product with `n`: row `i` of the result is `X^i × n`.
    pub fn cross_rows(&self, n: &Vec3) -> Mat3 {
        Mat3::from_rows(
            self.row(0).cross(n),
            self.row(1).cross(n),
            self.row(2).cross(n),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }
}

impl Index<(usize, usize)> for Mat3 {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.0[i][j]
    }
}

impl IndexMut<(usize, usize)> for Mat3 {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.0[i][j]
    }
}

impl Add for Mat3 {
    type Output = Mat3;
    fn add(self, o: Mat3) -> Mat3 {
        let mut r = self;
        r += o;
        r
    }
}

impl AddAssign for Mat3 {
    fn add_assign(&mut self, o: Mat3) {
        for i in 0..3 {
            for j in 0..3 {
                self.0[i][j] += o.0[i][j];
            }
        }
    }
}

impl Sub for Mat3 {
    type Output = Mat3;
    fn sub(self, o: Mat3) -> Mat3 {
        let mut r = self;
        r -= o;
        r
    }
}

impl SubAssign for Mat3 {
    fn sub_assign(&mut self, o: Mat3) {
        for i in 0..3 {
            for j in 0..3 {
                self.0[i][j] -= o.0[i][j];
            }
        }
    }
}

impl Mul<f64> for Mat3 {
    type Output = Mat3;
    fn mul(self, s: f64) -> Mat3 {
        let mut r = self;
        for row in r.0.iter_mut() {
            for x in row.iter_mut() {
                *x *= s;
            }
        }
        r
    }
}

impl Neg for Mat3 {
    type Output = Mat3;
    fn neg(self) -> Mat3 {
        self * -1.0
    }
}

pub fn sym(a: &Mat3) -> Mat3 {
    a.sym()
}

pub fn skew(a: &Mat3) -> Mat3 {
    a.skew()
}

pub fn dev(a: &Mat3) -> Mat3 {
    a.dev()
}

pub fn tr(a: &Mat3) -> f64 {
    a.trace()
}

pub fn inner(a: &Mat3, b: &Mat3) -> f64 {
    a.inner(b)
}

/// Isotropic elastic moduli (Lamé parameters).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElasticModuli {
    mu: f64,
    lambda: f64,
}

impl ElasticModuli {
    /// Requires `mu > 0` and `3 lambda + 2 mu > 0`.
    pub fn new(mu: f64, lambda: f64) -> Result<Self> {
        if !(mu.is_finite() && lambda.is_finite()) {
            return Err(Error::InvalidModel("elastic moduli must be finite".into()));
        }
        if mu <= 0.0 {
            return Err(Error::InvalidModel(format!(
                "shear modulus mu must be > 0, got {mu}"
            )));
        }
        if 3.0 * lambda + 2.0 * mu <= 0.0 {
            return Err(Error::InvalidModel(format!(
                "3 lambda + 2 mu must be > 0 (positive bulk modulus), got {}",
                3.0 * lambda + 2.0 * mu
            )));
        }
        Ok(Self { mu, lambda })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Bulk modulus `lambda + 2 mu / 3`.
    pub fn kappa(&self) -> f64 {
        self.lambda + 2.0 * self.mu / 3.0
    }

    /// Sharp ellipticity constant on symmetric tensors: the smaller of the
    /// deviatoric eigenvalue `2 mu` and the spherical eigenvalue `2 mu + 3 lambda`.
    pub fn m0(&self) -> f64 {
        (2.0 * self.mu).min(2.0 * self.mu + 3.0 * self.lambda)
    }

    /// `C X = 2 mu sym X + lambda tr(X) id`.
    pub fn apply(&self, x: &Mat3) -> Mat3 {
        x.sym() * (2.0 * self.mu) + Mat3::IDENTITY * (self.lambda * x.trace())
    }
}

pub fn iso_elasticity_apply(c: &ElasticModuli, x: &Mat3) -> Mat3 {
    c.apply(x)
}

/// A slip direction `l` and slip-plane normal `nu`, both unit and orthogonal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlipSystem {
    l: Vec3,
    nu: Vec3,
}

impl SlipSystem {
    /// Validates the pair; inputs within [`RENORMALIZE_TOLERANCE`] of the
    /// invariants are cleaned up, anything further off is rejected.
    pub fn new(l: Vec3, nu: Vec3) -> Result<Self> {
        if !(l.is_finite() && nu.is_finite()) {
            return Err(Error::InvalidSlipSystem("non-finite components".into()));
        }
        let residuals = |l: &Vec3, nu: &Vec3| {
            (
                (l.norm() - 1.0).abs(),
                (nu.norm() - 1.0).abs(),
                l.dot(nu).abs(),
            )
        };
        let (rl, rn, ro) = residuals(&l, &nu);
        if rl <= SLIP_TOLERANCE && rn <= SLIP_TOLERANCE && ro <= SLIP_TOLERANCE {
            return Ok(Self { l, nu });
        }
        if rl > RENORMALIZE_TOLERANCE || rn > RENORMALIZE_TOLERANCE || ro > RENORMALIZE_TOLERANCE
        {
            return Err(Error::InvalidSlipSystem(format!(
                "l = {:?}, nu = {:?}: |l| - 1 = {rl:.2e}, |nu| - 1 = {rn:.2e}, <l, nu> = {ro:.2e}",
                l.0, nu.0
            )));
        }
        let l = l * (1.0 / l.norm());
        let nu = nu - l * l.dot(&nu);
        let nu = nu * (1.0 / nu.norm());
        let (rl, rn, ro) = residuals(&l, &nu);
        debug_assert!(rl <= SLIP_TOLERANCE && rn <= SLIP_TOLERANCE && ro <= SLIP_TOLERANCE);
        Ok(Self { l, nu })
    }

    pub fn l(&self) -> Vec3 {
        self.l
    }

    pub fn nu(&self) -> Vec3 {
        self.nu
    }

    /// `m = l ⊗ nu`.
    pub fn orientation(&self) -> Mat3 {
        self.l.outer(&self.nu)
    }
}

/// Validates `(l, nu)` and returns the orientation tensor `l ⊗ nu`.
pub fn orientation_tensor(l: Vec3, nu: Vec3) -> Result<Mat3> {
    Ok(SlipSystem::new(l, nu)?.orientation())
}

/// Ordered slip systems with cached orientation tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct SlipBasis {
    systems: Vec<SlipSystem>,
    m: Vec<Mat3>,
}

impl SlipBasis {
    pub fn new(systems: Vec<SlipSystem>) -> Result<Self> {
        if systems.is_empty() {
            return Err(Error::InvalidSlipSystem(
                "a slip basis needs at least one system".into(),
            ));
        }
        let m = systems.iter().map(SlipSystem::orientation).collect();
        Ok(Self { systems, m })
    }

    /// Convenience constructor from `(l, nu)` pairs.
    pub fn from_pairs(pairs: &[(Vec3, Vec3)]) -> Result<Self> {
        let systems = pairs
            .iter()
            .map(|&(l, nu)| SlipSystem::new(l, nu))
            .collect::<Result<Vec<_>>>()?;
        Self::new(systems)
    }

    pub fn len(&self) -> usize {
        self.systems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.systems.is_empty()
    }

    pub fn systems(&self) -> &[SlipSystem] {
        &self.systems
    }

    pub fn orientation_tensors(&self) -> &[Mat3] {
        &self.m
    }

    /// `Σ_α g^α m^α`.
    pub fn apply(&self, g: &[f64]) -> Result<Mat3> {
        check_len(self.len(), g.len())?;
        Ok(self.apply_unchecked(g))
    }

    pub(crate) fn apply_unchecked(&self, g: &[f64]) -> Mat3 {
        debug_assert_eq!(g.len(), self.m.len());
        let mut p = Mat3::ZERO;
        for (m, &ga) in self.m.iter().zip(g) {
            p += *m * ga;
        }
        p
    }

    /// Components `<A, m^α>`; the adjoint of [`SlipBasis::apply`].
    pub fn project(&self, a: &Mat3) -> Vec<f64> {
        self.m.iter().map(|m| a.inner(m)).collect()
    }

    pub(crate) fn project_into(&self, a: &Mat3, out: &mut [f64]) {
        for (o, m) in out.iter_mut().zip(&self.m) {
            *o = a.inner(m);
        }
    }

    /// True when distinct systems have orthogonal slip directions, orthogonal
    /// slip-plane normals, and `<l^α, ν^β> <ν^α, l^β> = 0`.
    ///
    /// These make the cross terms of `|sym(Σ g^α m^α)|²` vanish, so that it
    /// equals `½ Σ |g^α|²`. The three coordinate planes with slip along the
    /// axes qualify.
    pub fn is_mutually_orthogonal(&self) -> bool {
        for (a, sa) in self.systems.iter().enumerate() {
            for sb in &self.systems[a + 1..] {
                let checks = [
                    sa.l.dot(&sb.l),
                    sa.nu.dot(&sb.nu),
                    sa.l.dot(&sb.nu) * sa.nu.dot(&sb.l),
                ];
                if checks.iter().any(|x| x.abs() > SLIP_TOLERANCE) {
                    return false;
                }
            }
        }
        true
    }

    /// Gram matrix `<sym m^α, sym m^β>` (row-major, `n × n`).
    pub fn sym_gram(&self) -> Vec<f64> {
        let n = self.len();
        let s: Vec<Mat3> = self.m.iter().map(Mat3::sym).collect();
        let mut g = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                g[a * n + b] = s[a].inner(&s[b]);
            }
        }
        g
    }

    /// Largest eigenvalue of [`SlipBasis::sym_gram`]: the sharp constant in
    /// `|sym(Σ g^α m^α)|² ≤ c |g|²`.
    pub fn sym_gram_max_eigen(&self) -> f64 {
        let n = self.len();
        let g = nalgebra::DMatrix::from_row_slice(n, n, &self.sym_gram());
        g.symmetric_eigenvalues().max()
    }
}

pub fn basis_apply(b: &SlipBasis, g: &[f64]) -> Result<Mat3> {
    b.apply(g)
}

pub fn basis_project(b: &SlipBasis, a: &Mat3) -> Vec<f64> {
    b.project(a)
}

pub fn is_mutually_orthogonal(b: &SlipBasis) -> bool {
    b.is_mutually_orthogonal()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e(i: usize) -> Vec3 {
        Vec3::unit(i)
    }

    fn mat_strategy() -> impl Strategy<Value = Mat3> {
        proptest::array::uniform9(-10.0f64..10.0).prop_map(Mat3::from_row_major)
    }

    #[test]
    fn identity_parts() {
        assert_eq!(sym(&Mat3::IDENTITY), Mat3::IDENTITY);
        assert_eq!(dev(&Mat3::IDENTITY), Mat3::ZERO);
        assert_eq!(tr(&e(0).outer(&e(1))), 0.0);
    }

    #[test]
    fn iso_eigen_tensors() {
        let c = ElasticModuli::new(1.3, 0.7).unwrap();
        let sph = c.apply(&Mat3::IDENTITY);
        assert!((sph - Mat3::IDENTITY * (2.0 * 1.3 + 3.0 * 0.7)).norm() < 1e-14);
        let x = Mat3::from_row_major([1.0, 2.0, 0.0, 2.0, -0.5, 1.0, 0.0, 1.0, -0.5]);
        assert!((c.apply(&x) - x * 2.6).norm() < 1e-14);
    }

    #[test]
    fn moduli_validation() {
        assert!(ElasticModuli::new(0.0, 1.0).is_err());
        assert!(ElasticModuli::new(1.0, -0.7).is_err());
        let c = ElasticModuli::new(1.0, -0.5).unwrap();
        assert!((c.m0() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn canonical_dyad() {
        let m = orientation_tensor(e(0), e(1)).unwrap();
        let mut expected = Mat3::ZERO;
        expected[(0, 1)] = 1.0;
        assert_eq!(m, expected);
        let half = (e(0).outer(&e(1)) + e(1).outer(&e(0))) * 0.5;
        assert_eq!(m.sym(), half);
    }

    #[test]
    fn slip_system_rejects_and_renormalizes() {
        assert!(SlipSystem::new(Vec3::new(1.0, 0.1, 0.0), e(1)).is_err());
        assert!(SlipSystem::new(e(0), e(0)).is_err());
        let s = SlipSystem::new(Vec3::new(1.0 + 1e-9, 0.0, 0.0), Vec3::new(2e-9, 1.0, 0.0)).unwrap();
        assert!((s.l().norm() - 1.0).abs() <= SLIP_TOLERANCE);
        assert!(s.l().dot(&s.nu()).abs() <= SLIP_TOLERANCE);
    }

    #[test]
    fn basis_apply_project() {
        let b = SlipBasis::from_pairs(&[(e(0), e(1)), (e(1), e(2))]).unwrap();
        assert_eq!(b.apply(&[0.0, 0.0]).unwrap(), Mat3::ZERO);
        assert_eq!(b.apply(&[2.5, 0.0]).unwrap(), b.orientation_tensors()[0] * 2.5);
        assert!(matches!(
            b.apply(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert_eq!(b.project(&Mat3::ZERO), vec![0.0, 0.0]);
        assert_eq!(b.project(&b.orientation_tensors()[0])[0], 1.0);
    }

    #[test]
    fn mutual_orthogonality() {
        let three = SlipBasis::from_pairs(&[(e(0), e(1)), (e(1), e(2)), (e(2), e(0))]).unwrap();
        assert!(three.is_mutually_orthogonal());
        let shared = SlipBasis::from_pairs(&[(e(0), e(1)), (e(0), e(2))]).unwrap();
        assert!(!shared.is_mutually_orthogonal());
        let single = SlipBasis::from_pairs(&[(e(2), e(0))]).unwrap();
        assert!(single.is_mutually_orthogonal());
        assert!((three.sym_gram_max_eigen() - 0.5).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn inner_matches_componentwise_sum(a in mat_strategy()) {
            let s: f64 = a.to_row_major().iter().map(|x| x * x).sum();
            prop_assert!((a.inner(&a) - s).abs() <= 1e-13 * s.max(1.0));
        }

        #[test]
        fn decomposition_identities(a in mat_strategy(), b in mat_strategy()) {
            prop_assert!((a.sym() + a.skew() - a).norm() <= 1e-13 * a.norm().max(1.0));
            prop_assert!(a.skew().sym().norm() <= 1e-13 * a.norm().max(1.0));
            prop_assert!(a.dev().trace().abs() <= 1e-13 * a.norm().max(1.0));
            prop_assert!((a.dev().dev() - a.dev()).norm() <= 1e-13 * a.norm().max(1.0));
            prop_assert!(a.sym().inner(&b.skew()).abs() <= 1e-13 * (a.norm() * b.norm()).max(1.0));
        }

        #[test]
        fn elasticity_forms_agree_and_are_elliptic(
            a in mat_strategy(), mu in 0.1f64..10.0, ratio in -0.6f64..5.0
        ) {
            let c = ElasticModuli::new(mu, ratio * mu).unwrap();
            let lhs = c.apply(&a);
            let rhs = a.sym().dev() * (2.0 * c.mu()) + Mat3::IDENTITY * (c.kappa() * a.trace());
            prop_assert!((lhs - rhs).norm() <= 1e-13 * lhs.norm().max(1.0));
            let s = a.sym();
            prop_assert!(s.inner(&lhs) >= c.m0() * s.inner(&s) * (1.0 - 1e-12));
        }

        #[test]
        fn slip_maps(g in proptest::collection::vec(-5.0f64..5.0, 3), a in mat_strategy(),
                     angle in 0.0f64..std::f64::consts::TAU) {
            let (s, c) = angle.sin_cos();
            let l2 = Vec3::new(c, s, 0.0);
            let n2 = Vec3::new(-s, c, 0.0);
            let b = SlipBasis::from_pairs(&[(e(0), e(1)), (l2, n2), (Vec3::new(0.0, c, s), e(0))]).unwrap();
            let p = b.apply(&g).unwrap();
            prop_assert!(p.trace().abs() <= 1e-12);
            let lhs = p.inner(&a);
            let rhs: f64 = g.iter().zip(b.project(&a)).map(|(x, y)| x * y).sum();
            prop_assert!((lhs - rhs).abs() <= 1e-13 * (1.0 + lhs.abs()));
            // deviatoric projection does not change resolved components
            for (x, y) in b.project(&a.dev()).iter().zip(b.project(&a)) {
                prop_assert!((x - y).abs() <= 1e-13 * (1.0 + y.abs()));
            }
            for m in b.orientation_tensors() {
                prop_assert!(m.trace().abs() <= 1e-12 && (m.norm() - 1.0).abs() <= 1e-12);
            }
            let total: f64 = g.iter().map(|x| x.abs()).sum();
            prop_assert!(p.sym().norm() <= p.norm() + 1e-13);
            prop_assert!(p.norm() <= total + 1e-13);
        }

        #[test]
        fn orthogonal_slip_identity(g in proptest::collection::vec(-5.0f64..5.0, 3)) {
            let b = SlipBasis::from_pairs(&[(e(0), e(1)), (e(1), e(2)), (e(2), e(0))]).unwrap();
            let p = b.apply(&g).unwrap().sym();
            let half: f64 = 0.5 * g.iter().map(|x| x * x).sum::<f64>();
            prop_assert!((p.inner(&p) - half).abs() <= 1e-13 * half.max(1.0));
        }
    }
}
