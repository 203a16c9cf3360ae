//! Cell-collocated fields on a uniform box grid and the discrete operators
//! acting on them.
//!
//! Every operator is built from one per-axis forward difference
//!
//! ```text
//! (D_a f)(c) = (f(c + e_a) - f(c)) / h      if c is not in the last layer along a
//!            = 0                             otherwise (one-sided copy ghost)
//! ```
//!
//! The `D_a` act on distinct axes and therefore commute, which makes
//! `curl_mat ∘ grad = 0` and `div_mat ∘ curl_mat = 0` hold exactly (up to
//! rounding). Adjoint operators are the exact transposes with respect to
//! [`l2_inner`].
//!
//! Displacement fields handled by the solver vanish on Dirichlet cells, so the
//! copy ghost and a zero ghost beyond a Dirichlet face coincide for them.

use rayon::prelude::*;

use crate::algebra::{Mat3, SlipBasis, Vec3};
use crate::error::{check_len, Error, Result};

/// Default cap on `nx * ny * nz`.
pub const DEFAULT_MAX_CELLS: usize = 64 * 64 * 64;

/// Grids with at least this many cells evaluate stencils in parallel.
const PAR_MIN_CELLS: usize = 4096;

/// Tolerance of the pivoted elimination that computes trace-constraint ranks.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Face {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

impl Face {
    pub const ALL: [Face; 6] = [
        Face::XMin,
        Face::XMax,
        Face::YMin,
        Face::YMax,
        Face::ZMin,
        Face::ZMax,
    ];

    pub fn axis(self) -> usize {
        match self {
            Face::XMin | Face::XMax => 0,
            Face::YMin | Face::YMax => 1,
            Face::ZMin | Face::ZMax => 2,
        }
    }

    pub fn is_max(self) -> bool {
        matches!(self, Face::XMax | Face::YMax | Face::ZMax)
    }

    pub fn outward_normal(self) -> Vec3 {
        let n = Vec3::unit(self.axis());
        if self.is_max() {
            n
        } else {
            -n
        }
    }

    /// Short label used by the config format: `x-`, `x+`, ...
    pub fn label(self) -> &'static str {
        match self {
            Face::XMin => "x-",
            Face::XMax => "x+",
            Face::YMin => "y-",
            Face::YMax => "y+",
            Face::ZMin => "z-",
            Face::ZMax => "z+",
        }
    }

    pub fn from_label(s: &str) -> Option<Face> {
        Face::ALL.into_iter().find(|f| f.label() == s)
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

/// A subset of the six box faces.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct FaceSet(u8);

impl FaceSet {
    pub const EMPTY: FaceSet = FaceSet(0);
    pub const ALL: FaceSet = FaceSet(0b11_1111);

    pub fn from_faces(faces: &[Face]) -> Self {
        FaceSet(faces.iter().fold(0, |acc, f| acc | f.bit()))
    }

    pub fn contains(self, f: Face) -> bool {
        self.0 & f.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn with(self, f: Face) -> Self {
        FaceSet(self.0 | f.bit())
    }

    pub fn iter(self) -> impl Iterator<Item = Face> {
        Face::ALL.into_iter().filter(move |f| self.contains(*f))
    }
}

/// Uniform grid of `nx × ny × nz` cubic cells of edge `h`.
///
/// `dirichlet_faces` carry prescribed displacement; `hard_faces` carry the
/// micro-hard condition on the plastic distortion and default to the
/// Dirichlet faces.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    nx: usize,
    ny: usize,
    nz: usize,
    h: f64,
    dirichlet_faces: FaceSet,
    hard_faces: FaceSet,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, nz: usize, h: f64, dirichlet_faces: FaceSet) -> Result<Self> {
        Self::with_max_cells(nx, ny, nz, h, dirichlet_faces, DEFAULT_MAX_CELLS)
    }

    pub fn with_max_cells(
        nx: usize,
        ny: usize,
        nz: usize,
        h: f64,
        dirichlet_faces: FaceSet,
        max_cells: usize,
    ) -> Result<Self> {
        if nx < 2 || ny < 2 || nz < 2 {
            return Err(Error::InvalidGrid(format!(
                "every axis needs at least 2 cells, got {nx} x {ny} x {nz}"
            )));
        }
        let cells = nx
            .checked_mul(ny)
            .and_then(|c| c.checked_mul(nz))
            .unwrap_or(usize::MAX);
        if cells > max_cells {
            return Err(Error::InvalidGrid(format!(
                "{cells} cells exceed the maximum of {max_cells}"
            )));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidGrid(format!("cell size must be > 0, got {h}")));
        }
        if dirichlet_faces.is_empty() {
            return Err(Error::InvalidGrid(
                "at least one Dirichlet face is required".into(),
            ));
        }
        Ok(Self {
            nx,
            ny,
            nz,
            h,
            dirichlet_faces,
            hard_faces: dirichlet_faces,
        })
    }

    pub fn with_hard_faces(mut self, hard_faces: FaceSet) -> Self {
        self.hard_faces = hard_faces;
        self
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn cell_volume(&self) -> f64 {
        self.h * self.h * self.h
    }

    pub fn volume(&self) -> f64 {
        self.cell_volume() * self.cells() as f64
    }

    pub fn dirichlet_faces(&self) -> FaceSet {
        self.dirichlet_faces
    }

    pub fn hard_faces(&self) -> FaceSet {
        self.hard_faces
    }

    /// Cell index in x-fastest order.
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    pub fn coords(&self, c: usize) -> [usize; 3] {
        [c % self.nx, (c / self.nx) % self.ny, c / (self.nx * self.ny)]
    }

    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.nx,
            _ => self.nx * self.ny,
        }
    }

    pub fn center(&self, c: usize) -> Vec3 {
        let [i, j, k] = self.coords(c);
        Vec3::new(
            (i as f64 + 0.5) * self.h,
            (j as f64 + 0.5) * self.h,
            (k as f64 + 0.5) * self.h,
        )
    }

    pub fn on_face(&self, c: usize, face: Face) -> bool {
        let coords = self.coords(c);
        let a = face.axis();
        if face.is_max() {
            coords[a] + 1 == self.dims()[a]
        } else {
            coords[a] == 0
        }
    }

    pub fn is_dirichlet_cell(&self, c: usize) -> bool {
        self.dirichlet_faces.iter().any(|f| self.on_face(c, f))
    }

    pub fn hard_normals(&self, c: usize) -> Vec<Vec3> {
        self.hard_faces
            .iter()
            .filter(|f| self.on_face(c, *f))
            .map(Face::outward_normal)
            .collect()
    }

    /// Mask of unconstrained displacement cells.
    pub fn free_cells(&self) -> Vec<bool> {
        (0..self.cells()).map(|c| !self.is_dirichlet_cell(c)).collect()
    }
}

/// Pointwise values a field can hold.
pub trait Pointwise:
    Copy
    + Default
    + Send
    + Sync
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<f64, Output = Self>
{
    fn dot(&self, other: &Self) -> f64;
    fn all_finite(&self) -> bool;
}

impl Pointwise for f64 {
    fn dot(&self, other: &Self) -> f64 {
        self * other
    }
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

impl Pointwise for Vec3 {
    fn dot(&self, other: &Self) -> f64 {
        Vec3::dot(self, other)
    }
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

impl Pointwise for Mat3 {
    fn dot(&self, other: &Self) -> f64 {
        self.inner(other)
    }
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

/// One value per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    values: Vec<T>,
}

pub type ScalarField = Field<f64>;
pub type Vec3Field = Field<Vec3>;
pub type Mat3Field = Field<Mat3>;

impl<T: Pointwise> Field<T> {
    pub fn zeros(cells: usize) -> Self {
        Self {
            values: vec![T::default(); cells],
        }
    }

    pub fn constant(cells: usize, value: T) -> Self {
        Self {
            values: vec![value; cells],
        }
    }

    pub fn from_vec(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn from_fn(cells: usize, f: impl Fn(usize) -> T + Sync + Send) -> Self {
        Self {
            values: map_cells(cells, f),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn map<U: Pointwise>(&self, f: impl Fn(&T) -> U + Sync + Send) -> Field<U> {
        Field::from_fn(self.len(), |c| f(&self.values[c]))
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| *x * a + *y * b)
                .collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            values: self.values.iter().map(|x| *x * s).collect(),
        }
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &Self) {
        for (y, x) in self.values.iter_mut().zip(&x.values) {
            *y = *y + *x * a;
        }
    }

    pub fn dot_sum(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.dot(b))
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(Pointwise::all_finite)
    }
}

impl<T> std::ops::Index<usize> for Field<T> {
    type Output = T;
    fn index(&self, c: usize) -> &T {
        &self.values[c]
    }
}

impl<T> std::ops::IndexMut<usize> for Field<T> {
    fn index_mut(&mut self, c: usize) -> &mut T {
        &mut self.values[c]
    }
}

/// `n_slip` slip components per cell, stored contiguously per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SlipField {
    n_slip: usize,
    values: Vec<f64>,
}

impl SlipField {
    pub fn zeros(cells: usize, n_slip: usize) -> Self {
        Self {
            n_slip,
            values: vec![0.0; cells * n_slip],
        }
    }

    pub fn from_vec(n_slip: usize, values: Vec<f64>) -> Result<Self> {
        if n_slip == 0 || values.len() % n_slip != 0 {
            return Err(Error::DimensionMismatch {
                expected: n_slip.max(1) * (values.len() / n_slip.max(1) + 1),
                got: values.len(),
            });
        }
        Ok(Self { n_slip, values })
    }

    pub fn from_fn(cells: usize, n_slip: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(cells * n_slip);
        for c in 0..cells {
            for a in 0..n_slip {
                values.push(f(c, a));
            }
        }
        Self { n_slip, values }
    }

    pub fn n_slip(&self) -> usize {
        self.n_slip
    }

    pub fn cells(&self) -> usize {
        self.values.len() / self.n_slip
    }

    pub fn cell(&self, c: usize) -> &[f64] {
        &self.values[c * self.n_slip..(c + 1) * self.n_slip]
    }

    pub fn cell_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.values[c * self.n_slip..(c + 1) * self.n_slip]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Self {
        debug_assert_eq!(self.values.len(), other.values.len());
        Self {
            n_slip: self.n_slip,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            n_slip: self.n_slip,
            values: self.values.iter().map(|x| x * s).collect(),
        }
    }

    pub fn dot_sum(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &Self) {
        for (y, x) in self.values.iter_mut().zip(&x.values) {
            *y += a * x;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    /// `Σ_α γ^α m^α` per cell.
    pub fn distortion(&self, basis: &SlipBasis) -> Result<Mat3Field> {
        check_len(basis.len(), self.n_slip)?;
        Ok(Mat3Field::from_fn(self.cells(), |c| {
            basis.apply_unchecked(self.cell(c))
        }))
    }

    /// Resolved components `<A(c), m^α>` per cell.
    pub fn project(field: &Mat3Field, basis: &SlipBasis) -> SlipField {
        let n = basis.len();
        let mut out = SlipField::zeros(field.len(), n);
        for c in 0..field.len() {
            basis.project_into(&field[c], out.cell_mut(c));
        }
        out
    }
}

/// Fields paired by [`l2_inner`].
pub trait L2Field {
    fn cell_count(&self) -> usize;
    fn pointwise_sum(&self, other: &Self) -> Result<f64>;
}

impl<T: Pointwise> L2Field for Field<T> {
    fn cell_count(&self) -> usize {
        self.len()
    }
    fn pointwise_sum(&self, other: &Self) -> Result<f64> {
        check_len(self.len(), other.len())?;
        Ok(self.dot_sum(other))
    }
}

impl L2Field for SlipField {
    fn cell_count(&self) -> usize {
        self.cells()
    }
    fn pointwise_sum(&self, other: &Self) -> Result<f64> {
        check_len(self.n_slip, other.n_slip)?;
        check_len(self.values.len(), other.values.len())?;
        Ok(self.dot_sum(other))
    }
}

/// Discrete L² pairing `h³ Σ_cells <A(c), B(c)>`.
pub fn l2_inner<F: L2Field>(a: &F, b: &F, spec: &GridSpec) -> Result<f64> {
    check_len(spec.cells(), a.cell_count())?;
    check_len(spec.cells(), b.cell_count())?;
    Ok(spec.cell_volume() * a.pointwise_sum(b)?)
}

pub fn l2_norm_sq<F: L2Field>(a: &F, spec: &GridSpec) -> Result<f64> {
    l2_inner(a, a, spec)
}

fn map_cells<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    if n >= PAR_MIN_CELLS {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

/// Per-cell stencil geometry shared by all operators.
struct Stencil {
    dims: [usize; 3],
    strides: [usize; 3],
    inv_h: f64,
}

impl Stencil {
    fn new(spec: &GridSpec) -> Self {
        Self {
            dims: spec.dims(),
            strides: [spec.stride(0), spec.stride(1), spec.stride(2)],
            inv_h: 1.0 / spec.h(),
        }
    }

    fn coords(&self, c: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [c % nx, (c / nx) % ny, c / (nx * ny)]
    }

    #[inline]
    fn forward<T: Pointwise>(&self, f: &[T], c: usize, coords: &[usize; 3], axis: usize) -> T {
        if coords[axis] + 1 < self.dims[axis] {
            (f[c + self.strides[axis]] - f[c]) * self.inv_h
        } else {
            T::default()
        }
    }

    /// Transpose of [`Stencil::forward`].
    #[inline]
    fn forward_t<T: Pointwise>(&self, g: &[T], c: usize, coords: &[usize; 3], axis: usize) -> T {
        let mut r = T::default();
        if coords[axis] >= 1 {
            r = g[c - self.strides[axis]];
        }
        if coords[axis] + 1 < self.dims[axis] {
            r = r - g[c];
        }
        r * self.inv_h
    }
}

/// `(∇u)_{ij} = D_j u_i`.
pub fn grad(u: &Vec3Field, spec: &GridSpec) -> Result<Mat3Field> {
    check_len(spec.cells(), u.len())?;
    let st = Stencil::new(spec);
    let f = u.values();
    Ok(Mat3Field::from_fn(spec.cells(), |c| {
        let co = st.coords(c);
        let mut g = Mat3::ZERO;
        for j in 0..3 {
            let d = st.forward(f, c, &co, j);
            for i in 0..3 {
                g[(i, j)] = d[i];
            }
        }
        g
    }))
}

/// Adjoint of [`grad`] with respect to [`l2_inner`].
pub fn grad_adjoint(s: &Mat3Field, spec: &GridSpec) -> Result<Vec3Field> {
    check_len(spec.cells(), s.len())?;
    let st = Stencil::new(spec);
    let f = s.values();
    Ok(Vec3Field::from_fn(spec.cells(), |c| {
        let co = st.coords(c);
        let mut v = Vec3::ZERO;
        for j in 0..3 {
            let d = st.forward_t(f, c, &co, j);
            for i in 0..3 {
                v[i] += d[(i, j)];
            }
        }
        v
    }))
}

/// Row-wise curl: row `i` of the result is `curl` of row `i` of `x`.
pub fn curl_mat(x: &Mat3Field, spec: &GridSpec) -> Result<Mat3Field> {
    check_len(spec.cells(), x.len())?;
    let st = Stencil::new(spec);
    let f = x.values();
    Ok(Mat3Field::from_fn(spec.cells(), |c| {
        let co = st.coords(c);
        let d = [
            st.forward(f, c, &co, 0),
            st.forward(f, c, &co, 1),
            st.forward(f, c, &co, 2),
        ];
        let mut r = Mat3::ZERO;
        for i in 0..3 {
            r[(i, 0)] = d[1][(i, 2)] - d[2][(i, 1)];
            r[(i, 1)] = d[2][(i, 0)] - d[0][(i, 2)];
            r[(i, 2)] = d[0][(i, 1)] - d[1][(i, 0)];
        }
        r
    }))
}

/// Adjoint of [`curl_mat`] with respect to [`l2_inner`].
pub fn curl_adjoint(y: &Mat3Field, spec: &GridSpec) -> Result<Mat3Field> {
    check_len(spec.cells(), y.len())?;
    let st = Stencil::new(spec);
    let f = y.values();
    Ok(Mat3Field::from_fn(spec.cells(), |c| {
        let co = st.coords(c);
        let d = [
            st.forward_t(f, c, &co, 0),
            st.forward_t(f, c, &co, 1),
            st.forward_t(f, c, &co, 2),
        ];
        let mut r = Mat3::ZERO;
        for i in 0..3 {
            r[(i, 0)] = d[2][(i, 1)] - d[1][(i, 2)];
            r[(i, 1)] = d[0][(i, 2)] - d[2][(i, 0)];
            r[(i, 2)] = d[1][(i, 0)] - d[0][(i, 1)];
        }
        r
    }))
}

/// Row-wise divergence `(Div X)_i = Σ_j D_j X_{ij}`.
pub fn div_mat(x: &Mat3Field, spec: &GridSpec) -> Result<Vec3Field> {
    check_len(spec.cells(), x.len())?;
    let st = Stencil::new(spec);
    let f = x.values();
    Ok(Vec3Field::from_fn(spec.cells(), |c| {
        let co = st.coords(c);
        let mut v = Vec3::ZERO;
        for j in 0..3 {
            let d = st.forward(f, c, &co, j);
            for i in 0..3 {
                v[i] += d[(i, j)];
            }
        }
        v
    }))
}

/// How the micro-hard condition is realized on hard-face cells.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TraceMode {
    /// Project the slips onto `{g : (Σ g^α m^α) × n = 0}`.
    #[default]
    Kernel,
    /// Set all slips to zero.
    HardZero,
}

impl TraceMode {
    pub fn label(self) -> &'static str {
        match self {
            TraceMode::Kernel => "kernel",
            TraceMode::HardZero => "hard-zero",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "kernel" => Some(TraceMode::Kernel),
            "hard-zero" => Some(TraceMode::HardZero),
            _ => None,
        }
    }
}

/// Orthogonal projector acting on the slip vector of one cell.
#[derive(Clone, Debug, PartialEq)]
pub enum CellProjector {
    Identity,
    /// Diagonal 0/1 projector; `keep[α]` tells whether slip `α` is free.
    Coordinate { keep: Vec<bool> },
    /// General subspace with orthonormal basis vectors `basis`.
    Subspace { basis: Vec<Vec<f64>> },
}

impl CellProjector {
    pub fn apply(&self, g: &mut [f64]) {
        match self {
            CellProjector::Identity => {}
            CellProjector::Coordinate { keep } => {
                for (x, k) in g.iter_mut().zip(keep) {
                    if !k {
                        *x = 0.0;
                    }
                }
            }
            CellProjector::Subspace { basis } => {
                let mut out = vec![0.0; g.len()];
                for v in basis {
                    let s: f64 = v.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
                    for (o, a) in out.iter_mut().zip(v) {
                        *o += s * a;
                    }
                }
                g.copy_from_slice(&out);
            }
        }
    }

    /// Dense row-major `n × n` matrix.
    pub fn matrix(&self, n: usize) -> Vec<f64> {
        let mut m = vec![0.0; n * n];
        for col in 0..n {
            let mut e = vec![0.0; n];
            e[col] = 1.0;
            self.apply(&mut e);
            for row in 0..n {
                m[row * n + col] = e[row];
            }
        }
        m
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, CellProjector::Identity)
    }

    /// Whether slip component `a` is unconstrained by this projector.
    pub fn is_free(&self, a: usize) -> bool {
        match self {
            CellProjector::Identity => true,
            CellProjector::Coordinate { keep } => keep[a],
            CellProjector::Subspace { .. } => false,
        }
    }
}

/// Per-cell projectors realizing the micro-hard condition.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceConstraint {
    n_slip: usize,
    mode: TraceMode,
    cells: Vec<CellProjector>,
}

impl TraceConstraint {
    pub fn n_slip(&self) -> usize {
        self.n_slip
    }

    pub fn mode(&self) -> TraceMode {
        self.mode
    }

    pub fn projector(&self, c: usize) -> &CellProjector {
        &self.cells[c]
    }

    pub fn projectors(&self) -> &[CellProjector] {
        &self.cells
    }

    /// True when no cell is constrained.
    pub fn is_void(&self) -> bool {
        self.cells.iter().all(CellProjector::is_identity)
    }

    /// True when every projector is diagonal.
    pub fn is_coordinate(&self) -> bool {
        !self
            .cells
            .iter()
            .any(|p| matches!(p, CellProjector::Subspace { .. }))
    }

    pub fn apply(&self, g: &mut SlipField) {
        for (c, p) in self.cells.iter().enumerate() {
            p.apply(g.cell_mut(c));
        }
    }

    /// Number of unconstrained scalar slip components.
    pub fn free_dofs(&self) -> usize {
        self.cells
            .iter()
            .map(|p| match p {
                CellProjector::Identity => self.n_slip,
                CellProjector::Coordinate { keep } => keep.iter().filter(|k| **k).count(),
                CellProjector::Subspace { basis } => basis.len(),
            })
            .sum()
    }
}

pub fn build_trace_constraint(basis: &SlipBasis, spec: &GridSpec, mode: TraceMode) -> TraceConstraint {
    let n = basis.len();
    let cells = (0..spec.cells())
        .map(|c| {
            let normals = spec.hard_normals(c);
            if normals.is_empty() {
                return CellProjector::Identity;
            }
            match mode {
                TraceMode::HardZero => CellProjector::Coordinate {
                    keep: vec![false; n],
                },
                TraceMode::Kernel => kernel_projector(basis, &normals),
            }
        })
        .collect();
    TraceConstraint {
        n_slip: n,
        mode,
        cells,
    }
}

/// Projector onto the null space of `g ↦ (Σ g^α m^α) × n` for all `normals`.
fn kernel_projector(basis: &SlipBasis, normals: &[Vec3]) -> CellProjector {
    let n = basis.len();
    // constraint rows: 9 per normal, columns: slip systems
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(9 * normals.len());
    for normal in normals {
        let cols: Vec<[f64; 9]> = basis
            .orientation_tensors()
            .iter()
            .map(|m| m.cross_rows(normal).to_row_major())
            .collect();
        for r in 0..9 {
            rows.push(cols.iter().map(|col| col[r]).collect());
        }
    }
    let null = null_space(rows, n);
    if null.len() == n {
        return CellProjector::Identity;
    }
    let coordinate: Option<Vec<bool>> = {
        let mut keep = vec![false; n];
        let mut ok = true;
        for v in &null {
            let nz: Vec<usize> = (0..n).filter(|&a| v[a].abs() > 1e-12).collect();
            if nz.len() == 1 && (v[nz[0]].abs() - 1.0).abs() <= 1e-12 {
                keep[nz[0]] = true;
            } else {
                ok = false;
            }
        }
        ok.then_some(keep)
    };
    match coordinate {
        Some(keep) => CellProjector::Coordinate { keep },
        None => CellProjector::Subspace { basis: null },
    }
}

/// Orthonormal basis of `{x : A x = 0}` by partial-pivot row reduction.
fn null_space(mut a: Vec<Vec<f64>>, n: usize) -> Vec<Vec<f64>> {
    let m = a.len();
    let mut pivot_cols = Vec::new();
    let mut row = 0;
    for col in 0..n {
        if row == m {
            break;
        }
        let (best, val) = (row..m)
            .map(|r| (r, a[r][col].abs()))
            .fold((row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= RANK_TOLERANCE {
            continue;
        }
        a.swap(row, best);
        let p = a[row][col];
        for x in a[row].iter_mut() {
            *x /= p;
        }
        for r in 0..m {
            if r != row {
                let f = a[r][col];
                if f != 0.0 {
                    for k in 0..n {
                        a[r][k] -= f * a[row][k];
                    }
                }
            }
        }
        pivot_cols.push(col);
        row += 1;
    }
    let free: Vec<usize> = (0..n).filter(|c| !pivot_cols.contains(c)).collect();
    let mut raw: Vec<Vec<f64>> = free
        .iter()
        .map(|&f| {
            let mut v = vec![0.0; n];
            v[f] = 1.0;
            for (r, &pc) in pivot_cols.iter().enumerate() {
                v[pc] = -a[r][f];
            }
            v
        })
        .collect();
    // modified Gram-Schmidt, two passes
    for i in 0..raw.len() {
        for _ in 0..2 {
            for j in 0..i {
                let d: f64 = raw[i].iter().zip(&raw[j]).map(|(x, y)| x * y).sum();
                let rj = raw[j].clone();
                for (x, y) in raw[i].iter_mut().zip(&rj) {
                    *x -= d * y;
                }
            }
        }
        let norm = raw[i].iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in raw[i].iter_mut() {
            *x /= norm;
        }
    }
    raw
}
