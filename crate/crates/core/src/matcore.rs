//! Dense complex linear algebra used by every other module.
//!
//! Storage is row-major. Factorizations (LU, Hermitian and general
//! eigendecompositions, SVD) are delegated to `faer`; everything that
//! defines the numerical contract (pivot thresholds, residual checks,
//! clustering of repeated eigenvalues, the vec ordering) lives here.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, MatRef, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Dimension at or below which `svd_extremes` runs a full SVD.
pub const FULL_SVD_LIMIT: usize = 4096;

const INVERSE_ITERATIONS: usize = 50;
const INVERSE_ITERATION_TOL: f64 = 1e-8;

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

/// Dense complex column vector.
#[derive(Clone, Debug, PartialEq)]
pub struct CVector(Vec<C64>);

/// Eigenpairs with the eigenvectors stored as matrix columns.
#[derive(Clone, Debug)]
pub struct EigDecomp {
    pub values: Vec<C64>,
    pub vectors: CMatrix,
    pub kappa_e: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatFun {
    Sqrt,
    InvSqrt,
    Inv,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major data, rejecting NaN/Inf entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::from_row_major(r, c, rows.concat())
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let c = rows.first().map_or(0, |r| r.len());
        Self::from_fn(rows.len(), c, |i, j| C64::new(rows[i][j], 0.0))
    }

    pub fn diag(values: &[C64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn diag_real(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(*v, 0.0);
        }
        m
    }

    pub fn scalar(z: C64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![z],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> CVector {
        CVector((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    pub fn set_column(&mut self, j: usize, v: &CVector) {
        for i in 0..self.rows {
            self[(i, j)] = v[i];
        }
    }

    pub fn from_columns(cols: &[CVector]) -> Self {
        let r = cols.first().map_or(0, CVector::len);
        Self::from_fn(r, cols.len(), |i, j| cols[j][i])
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| f(*z)).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(|z| z * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn submatrix(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        Self::from_fn(nr, nc, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn set_submatrix(&mut self, r0: usize, c0: usize, block: &CMatrix) {
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }

    pub fn norm_max(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Spectral norm.
    pub fn norm2(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        svd_extremes(self).0
    }

    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn hermitian_defect(&self) -> f64 {
        assert!(self.is_square());
        let mut d = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                d = d.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        d
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && self.hermitian_defect() <= tol
    }

    /// (H + H^H) / 2.
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)] + self[(j, i)].conj()) * 0.5
        })
    }

    /// max |U^H U - I|.
    pub fn unitarity_defect(&self) -> f64 {
        let g = &self.adjoint() * self;
        g.max_abs_diff(&Self::identity(self.cols))
    }

    pub fn mul_vec(&self, v: &CVector) -> CVector {
        assert_eq!(self.cols, v.len(), "matrix-vector dimension mismatch");
        CVector(
            (0..self.rows)
                .map(|i| self.row(i).iter().zip(v.iter()).map(|(a, b)| a * b).sum())
                .collect(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub(crate) fn to_faer(&self) -> Mat<C64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self.data[i * self.cols + j])
    }

    pub(crate) fn from_faer(m: MatRef<'_, C64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    fn matmul(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, rhs.rows, "matrix product dimension mismatch");
        if self.rows * self.cols * rhs.cols <= 1 << 15 {
            let mut out = CMatrix::zeros(self.rows, rhs.cols);
            for i in 0..self.rows {
                for k in 0..self.cols {
                    let a = self[(i, k)];
                    if a == ZERO {
                        continue;
                    }
                    let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                    for (o, b) in out_row.iter_mut().zip(rhs.row(k)) {
                        *o += a * b;
                    }
                }
            }
            out
        } else {
            let prod = &self.to_faer() * &rhs.to_faer();
            CMatrix::from_faer(prod.as_ref())
        }
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(i) {
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CVector {
    pub fn new(entries: Vec<C64>) -> Self {
        Self(entries)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![ZERO; n])
    }

    pub fn from_real(entries: &[f64]) -> Self {
        Self(entries.iter().map(|x| C64::new(*x, 0.0)).collect())
    }

    pub fn basis(n: usize, k: usize) -> Self {
        let mut v = Self::zeros(n);
        v.0[k] = ONE;
        v
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, C64> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<C64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        self.scale_real(1.0 / n)
    }

    pub fn scale(&self, s: C64) -> Self {
        Self(self.0.iter().map(|z| z * s).collect())
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self(self.0.iter().map(|z| z * s).collect())
    }

    /// Conjugate-linear in `self`: <self|other>.
    pub fn dot(&self, other: &CVector) -> C64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn add(&self, other: &CVector) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &CVector) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Index<usize> for CVector {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for CVector {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.0[i]
    }
}

impl From<Vec<C64>> for CVector {
    fn from(v: Vec<C64>) -> Self {
        Self(v)
    }
}

/// Partial-pivoted LU factorization with the singularity threshold applied.
pub struct LuFactor {
    lu: faer::linalg::solvers::PartialPivLu<C64>,
    n: usize,
}

impl LuFactor {
    pub fn new(m: &CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "LU needs a square matrix, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        let n = m.rows();
        let lu = m.to_faer().partial_piv_lu();
        let threshold = 1e-13 * m.norm_max();
        let u = lu.U();
        let pivot = (0..n)
            .map(|i| u[(i, i)].norm())
            .fold(f64::INFINITY, f64::min);
        if n > 0 && !(pivot > threshold) {
            return Err(Error::SingularMatrix { pivot, threshold });
        }
        Ok(Self { lu, n })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &CVector) -> CVector {
        assert_eq!(b.len(), self.n);
        let rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        CVector((0..self.n).map(|i| x[(i, 0)]).collect())
    }

    /// Solves M^H x = b.
    pub fn solve_adjoint(&self, b: &CVector) -> CVector {
        assert_eq!(b.len(), self.n);
        let rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve_adjoint(&rhs);
        CVector((0..self.n).map(|i| x[(i, 0)]).collect())
    }

    pub fn solve_matrix(&self, b: &CMatrix) -> CMatrix {
        assert_eq!(b.rows(), self.n);
        let x = self.lu.solve(&b.to_faer());
        CMatrix::from_faer(x.as_ref())
    }

    pub fn inverse(&self) -> CMatrix {
        CMatrix::from_faer(self.lu.inverse().as_ref())
    }
}

/// Solves `M y = b` by partial-pivoted elimination.
pub fn lu_solve(m: &CMatrix, b: &CVector) -> Result<CVector> {
    if m.cols() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} system with right-hand side of length {}",
            m.rows(),
            m.cols(),
            b.len()
        )));
    }
    Ok(LuFactor::new(m)?.solve(b))
}

fn hermitian_tolerance(h: &CMatrix) -> f64 {
    1e-12 * h.norm_max().max(1.0)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn herm_eigvals(h: &CMatrix) -> Result<Vec<f64>> {
    check_hermitian(h)?;
    let sym = h.hermitian_part().to_faer();
    sym.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| Error::InvalidArgument("Hermitian eigensolver did not converge".into()))
}

fn check_hermitian(h: &CMatrix) -> Result<()> {
    if !h.is_square() {
        return Err(Error::DimensionMismatch(
            "Hermitian matrix must be square".into(),
        ));
    }
    let defect = h.hermitian_defect();
    if defect > hermitian_tolerance(h) {
        return Err(Error::NotHermitian { defect });
    }
    Ok(())
}

/// Hermitian eigendecomposition: real eigenvalues ascending, unitary eigenvectors.
pub fn herm_eig(h: &CMatrix) -> Result<EigDecomp> {
    check_hermitian(h)?;
    let sym = h.hermitian_part().to_faer();
    let evd = sym
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::InvalidArgument("Hermitian eigensolver did not converge".into()))?;
    let n = h.rows();
    let s = evd.S().column_vector();
    let values = (0..n).map(|i| C64::new(s[i].re, 0.0)).collect();
    let vectors = CMatrix::from_faer(evd.U());
    let (smax, smin) = svd_extremes(&vectors);
    Ok(EigDecomp {
        values,
        vectors,
        kappa_e: smax / smin,
    })
}

/// Applies `f` to the eigenvalues of a Hermitian matrix.
pub fn matfun_herm(h: &CMatrix, f: MatFun) -> Result<CMatrix> {
    let eig = herm_eig(h)?;
    let lams: Vec<f64> = eig.values.iter().map(|z| z.re).collect();
    let scale = lams.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let lmin = lams.first().copied().unwrap_or(0.0);
    let mapped: Vec<f64> = match f {
        MatFun::Sqrt | MatFun::InvSqrt => {
            if !(lmin > 1e-12 * scale) {
                return Err(Error::NotPositiveDefinite { min_eig: lmin });
            }
            lams.iter()
                .map(|x| {
                    if f == MatFun::Sqrt {
                        x.sqrt()
                    } else {
                        1.0 / x.sqrt()
                    }
                })
                .collect()
        }
        MatFun::Inv => {
            let smallest = lams.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
            if !(smallest > 1e-12 * scale) {
                return Err(Error::SingularMatrix {
                    pivot: smallest,
                    threshold: 1e-12 * scale,
                });
            }
            lams.iter().map(|x| 1.0 / x).collect()
        }
    };
    let v = &eig.vectors;
    let scaled = CMatrix::from_fn(v.rows(), v.cols(), |i, j| v[(i, j)] * mapped[j]);
    Ok((&scaled * &v.adjoint()).hermitian_part())
}

/// (sigma_max, sigma_min) of an arbitrary matrix.
///
/// Full SVD up to `FULL_SVD_LIMIT`; above that, power iteration for
/// sigma_max and LU-based inverse iteration for sigma_min.
pub fn svd_extremes(m: &CMatrix) -> (f64, f64) {
    if m.rows().max(m.cols()) <= FULL_SVD_LIMIT || !m.is_square() {
        singular_values(m).map_or((f64::NAN, f64::NAN), |s| {
            (
                s.first().copied().unwrap_or(0.0),
                s.last().copied().unwrap_or(0.0),
            )
        })
    } else {
        svd_extremes_iterative(m)
    }
}

/// All singular values, nonincreasing.
pub fn singular_values(m: &CMatrix) -> Option<Vec<f64>> {
    if m.rows() == 0 || m.cols() == 0 {
        return Some(Vec::new());
    }
    m.to_faer().singular_values().ok()
}

/// Iterative extremes: power iteration on M^H M and inverse iteration through
/// an LU factorization, both with Rayleigh-quotient estimates. A singular
/// square matrix reports sigma_min = 0.
pub fn svd_extremes_iterative(m: &CMatrix) -> (f64, f64) {
    let n = m.cols();
    let start = CVector::new(
        (0..n)
            .map(|i| {
                C64::new(
                    1.0 + (i as f64 * 0.618_033_988_75).fract(),
                    0.1 * (i % 7) as f64,
                )
            })
            .collect(),
    )
    .normalized();

    let mh = m.adjoint();
    let mut x = start.clone();
    let mut smax = 0.0f64;
    for _ in 0..500 {
        let y = mh.mul_vec(&m.mul_vec(&x));
        let rq = x.dot(&y).re.max(0.0).sqrt();
        let ny = y.norm();
        if ny == 0.0 {
            break;
        }
        x = y.scale_real(1.0 / ny);
        if (rq - smax).abs() <= 1e-12 * rq.max(1e-300) {
            smax = rq;
            break;
        }
        smax = rq;
    }

    if !m.is_square() {
        return (smax, f64::NAN);
    }
    let lu = match LuFactor::new(m) {
        Ok(lu) => lu,
        Err(_) => return (smax, 0.0),
    };
    let mut x = start;
    let mut prev = f64::INFINITY;
    let mut smin = f64::NAN;
    for _ in 0..INVERSE_ITERATIONS {
        // z = (M^H M)^{-1} x
        let w = lu.solve_adjoint(&x);
        let z = lu.solve(&w);
        // Rayleigh quotient of (M^H M)^{-1}: x^H z / x^H x.
        let rq = x.dot(&z).re;
        smin = 1.0 / rq.max(1e-300).sqrt();
        x = z.normalized();
        if (smin - prev).abs() < INVERSE_ITERATION_TOL * smin {
            break;
        }
        prev = smin;
    }
    (smax, smin)
}

/// Unitary DFT matrix with entries e^{2 pi i k l / p} / sqrt(p).
pub fn dft_matrix(p: usize) -> CMatrix {
    let s = 1.0 / (p as f64).sqrt();
    CMatrix::from_fn(p, p, |k, l| {
        let phase = 2.0 * PI * (((k * l) % p) as f64) / p as f64;
        C64::from_polar(s, phase)
    })
}

/// Kronecker product A (x) B.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (br, bc) = (b.rows(), b.cols());
    CMatrix::from_fn(a.rows() * br, a.cols() * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

/// Column-stacking vectorization: (a_11, ..., a_m1, ..., a_1n, ..., a_mn).
pub fn vec(a: &CMatrix) -> CVector {
    let mut out = Vec::with_capacity(a.rows() * a.cols());
    for j in 0..a.cols() {
        for i in 0..a.rows() {
            out.push(a[(i, j)]);
        }
    }
    CVector(out)
}

/// Inverse of [`vec`].
pub fn unvec(v: &CVector, rows: usize, cols: usize) -> CMatrix {
    assert_eq!(v.len(), rows * cols);
    CMatrix::from_fn(rows, cols, |i, j| v[j * rows + i])
}

/// Generalized eigendecomposition of the pencil (A, B) through B^{-1} A.
///
/// Eigenvalues are sorted by real part (then imaginary part). Eigenvectors
/// are unit-norm with their largest entry rotated to the positive real
/// axis. Numerically repeated eigenvalues get an orthonormal basis of the
/// null space of A - mu B, which keeps the eigenbasis well conditioned when
/// B^{-1} A has a multiple eigenvalue.
pub fn gen_eig(a: &CMatrix, b: &CMatrix) -> Result<EigDecomp> {
    if !a.is_square() || !b.is_square() || a.rows() != b.rows() {
        return Err(Error::DimensionMismatch(format!(
            "pencil of {}x{} and {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let n = a.rows();
    let (bmax, bmin) = svd_extremes(b);
    if !(bmin > 1e-13 * bmax) {
        return Err(Error::SingularB { ratio: bmin / bmax });
    }
    let lu = LuFactor::new(b).map_err(|_| Error::SingularB { ratio: bmin / bmax })?;
    let c = lu.solve_matrix(a);
    let evd = c
        .to_faer()
        .eigen()
        .map_err(|_| Error::InvalidArgument("eigensolver did not converge".into()))?;
    let s = evd.S().column_vector();
    let u = evd.U();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        s[i].re
            .partial_cmp(&s[j].re)
            .unwrap()
            .then(s[i].im.partial_cmp(&s[j].im).unwrap())
    });
    let values: Vec<C64> = order.iter().map(|&i| s[i]).collect();
    let mut vectors: Vec<CVector> = order
        .iter()
        .map(|&i| CVector::new((0..n).map(|r| u[(r, i)]).collect()))
        .collect();

    let anorm = a.norm_max();
    let bnorm = b.norm_max();
    let scale = values.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let cluster_tol = 1e-9 * scale;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (values[end] - values[end - 1]).norm() <= cluster_tol {
            end += 1;
        }
        if end - start > 1 {
            let mu: C64 = values[start..end].iter().sum::<C64>() / (end - start) as f64;
            let pencil = a - &b.scale(mu);
            let svd = pencil
                .to_faer()
                .svd()
                .map_err(|_| Error::InvalidArgument("SVD did not converge".into()))?;
            let v = svd.V();
            for (slot, col) in (start..end).zip((n - (end - start))..n) {
                vectors[slot] = CVector::new((0..n).map(|r| v[(r, col)]).collect());
            }
        }
        start = end;
    }
    let _ = (anorm, bnorm);

    for v in &mut vectors {
        *v = canonical_phase(&v.normalized());
    }
    let vectors = CMatrix::from_columns(&vectors);
    let (smax, smin) = svd_extremes(&vectors);
    let kappa_e = smax / smin;
    if !(kappa_e < 1e8) {
        return Err(Error::IllConditionedEigenbasis { kappa: kappa_e });
    }
    Ok(EigDecomp {
        values,
        vectors,
        kappa_e,
    })
}

/// Rotates a vector so that its largest-magnitude entry is real and positive.
pub fn canonical_phase(v: &CVector) -> CVector {
    let pivot = v.iter().copied().fold(ZERO, |best, z| {
        if z.norm() > best.norm() * (1.0 + 1e-12) {
            z
        } else {
            best
        }
    });
    if pivot == ZERO {
        return v.clone();
    }
    v.scale(pivot.conj() / pivot.norm())
}

/// Largest relative eigen-residual ||A e - l B e|| / (||A|| + |l| ||B||).
pub fn eig_residual(a: &CMatrix, b: &CMatrix, eig: &EigDecomp) -> f64 {
    let an = a.norm2();
    let bn = b.norm2();
    eig.values
        .iter()
        .enumerate()
        .map(|(j, lam)| {
            let e = eig.vectors.column(j);
            let r = a.mul_vec(&e).sub(&b.mul_vec(&e).scale(*lam));
            r.norm() / ((an + lam.norm() * bn) * e.norm())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{complex_gaussian_matrix, seeded_rng};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn lu_solve_identity_and_diagonal() {
        let y = lu_solve(&CMatrix::identity(2), &CVector::new(vec![ONE, c(0.0, 1.0)])).unwrap();
        assert_eq!(y, CVector::new(vec![ONE, c(0.0, 1.0)]));
        let y = lu_solve(
            &CMatrix::diag_real(&[2.0, 4.0]),
            &CVector::from_real(&[2.0, 4.0]),
        )
        .unwrap();
        assert!((y[0] - ONE).norm() < 1e-15 && (y[1] - ONE).norm() < 1e-15);
    }

    #[test]
    fn lu_solve_random_residual() {
        let mut rng = seeded_rng(11);
        let m = &complex_gaussian_matrix(8, 8, &mut rng) + &CMatrix::identity(8).scale_real(4.0);
        let b = complex_gaussian_matrix(8, 1, &mut rng).column(0);
        let y = lu_solve(&m, &b).unwrap();
        let r = m.mul_vec(&y).sub(&b).norm();
        assert!(r <= 1e-10 * m.norm2() * y.norm(), "residual {r}");
    }

    #[test]
    fn lu_solve_rejects_singular() {
        let m = CMatrix::from_real_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(
            lu_solve(&m, &CVector::from_real(&[1.0, 1.0])),
            Err(Error::SingularMatrix { .. })
        ));
        let z = CMatrix::zeros(3, 3);
        assert!(matches!(
            LuFactor::new(&z),
            Err(Error::SingularMatrix { .. })
        ));
    }

    #[test]
    fn herm_eig_small_cases() {
        let e = herm_eig(&CMatrix::diag_real(&[3.0, 1.0])).unwrap();
        assert!((e.values[0].re - 1.0).abs() < 1e-14 && (e.values[1].re - 3.0).abs() < 1e-14);

        let x = CMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let e = herm_eig(&x).unwrap();
        assert!((e.values[0].re + 1.0).abs() < 1e-14 && (e.values[1].re - 1.0).abs() < 1e-14);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = canonical_phase(&e.vectors.column(0));
        let v1 = canonical_phase(&e.vectors.column(1));
        // (1, -1)/sqrt2 and (1, 1)/sqrt2 up to phase
        assert!((v0[0].norm() - s).abs() < 1e-12 && (v0[0] + v0[1]).norm() < 1e-12);
        assert!((v1[0] - v1[1]).norm() < 1e-12 && (v1[0].norm() - s).abs() < 1e-12);
    }

    #[test]
    fn herm_eig_random_residual_and_unitarity() {
        let mut rng = seeded_rng(3);
        let g = complex_gaussian_matrix(6, 6, &mut rng);
        let h = (&g + &g.adjoint()).scale_real(0.5);
        let e = herm_eig(&h).unwrap();
        let lam = CMatrix::diag(&e.values);
        let res = (&(&h * &e.vectors) - &(&e.vectors * &lam)).norm2();
        assert!(res < 1e-9, "residual {res}");
        assert!(e.vectors.unitarity_defect() <= 1e-10);
        assert!(e.values.windows(2).all(|w| w[0].re <= w[1].re));
    }

    #[test]
    fn herm_eig_rejects_non_hermitian() {
        let m = CMatrix::from_real_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert!(matches!(herm_eig(&m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn gen_eig_trivial_pencils() {
        let e = gen_eig(&CMatrix::diag_real(&[1.0, 2.0]), &CMatrix::identity(2)).unwrap();
        assert!((e.values[0] - ONE).norm() < 1e-12 && (e.values[1] - c(2.0, 0.0)).norm() < 1e-12);

        let mut rng = seeded_rng(5);
        let b = &complex_gaussian_matrix(3, 3, &mut rng) + &CMatrix::identity(3).scale_real(3.0);
        let a = b.scale_real(2.0);
        let e = gen_eig(&a, &b).unwrap();
        for v in &e.values {
            assert!((v - c(2.0, 0.0)).norm() < 1e-10);
        }
        assert!(e.kappa_e < 1e3);
        assert!(eig_residual(&a, &b, &e) < 1e-8);
    }

    #[test]
    fn gen_eig_symmetric_pair_matches_reduction() {
        let mut rng = seeded_rng(17);
        let g = complex_gaussian_matrix(4, 4, &mut rng);
        let a = (&g + &g.adjoint()).scale_real(0.5);
        let h = complex_gaussian_matrix(4, 4, &mut rng);
        let b = &(&h * &h.adjoint()) + &CMatrix::identity(4);
        let e = gen_eig(&a, &b).unwrap();
        let bm = matfun_herm(&b, MatFun::InvSqrt).unwrap();
        let reduced = herm_eig(&(&(&bm * &a) * &bm)).unwrap();
        for (x, y) in e.values.iter().zip(&reduced.values) {
            assert!((x - y).norm() < 1e-9, "{x} vs {y}");
        }
        assert!(eig_residual(&a, &b, &e) < 1e-8);
        for j in 0..4 {
            assert!((e.vectors.column(j).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gen_eig_singular_b() {
        let b = CMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        assert!(matches!(
            gen_eig(&CMatrix::identity(2), &b),
            Err(Error::SingularB { .. })
        ));
    }

    #[test]
    fn svd_extremes_cases() {
        let (hi, lo) = svd_extremes(&CMatrix::diag_real(&[3.0, 1.0, 0.5]));
        assert!((hi - 3.0).abs() < 1e-14 && (lo - 0.5).abs() < 1e-14);
        let (hi, lo) = svd_extremes(&dft_matrix(7));
        assert!((hi - 1.0).abs() < 1e-12 && (lo - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iterative_extremes_agree_with_full_svd() {
        let mut rng = seeded_rng(23);
        let m = &complex_gaussian_matrix(10, 10, &mut rng) + &CMatrix::identity(10).scale_real(1.5);
        let full = singular_values(&m).unwrap();
        let (hi, lo) = svd_extremes_iterative(&m);
        assert!(
            (hi - full[0]).abs() <= 1e-8 * full[0],
            "{hi} vs {}",
            full[0]
        );
        assert!(
            (lo - full[9]).abs() <= 1e-6 * full[9],
            "{lo} vs {}",
            full[9]
        );
    }

    #[test]
    fn dft_small_cases() {
        assert_eq!(dft_matrix(1), CMatrix::scalar(ONE));
        let f2 = dft_matrix(2);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let want = CMatrix::from_real_rows(&[&[s, s], &[s, -s]]);
        assert!(f2.max_abs_diff(&want) < 1e-15);
        let f4 = dft_matrix(4);
        assert!((&f4 * &f4.adjoint()).max_abs_diff(&CMatrix::identity(4)) <= 1e-12);
    }

    #[test]
    fn kron_and_vec_basics() {
        let x = CMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let k = kron(&CMatrix::identity(2), &x);
        let v = CVector::new(vec![c(0.3, 0.1), c(-0.2, 0.5)]);
        let input = CVector::new(vec![v[0], v[1], ZERO, ZERO]);
        let out = k.mul_vec(&input);
        let xv = x.mul_vec(&v);
        assert_eq!(out, CVector::new(vec![xv[0], xv[1], ZERO, ZERO]));
        assert_eq!(
            vec(&CMatrix::identity(2)),
            CVector::from_real(&[1.0, 0.0, 0.0, 1.0])
        );
    }

    #[test]
    fn matfun_small_cases() {
        let r = matfun_herm(&CMatrix::diag_real(&[4.0, 9.0]), MatFun::Sqrt).unwrap();
        assert!(r.max_abs_diff(&CMatrix::diag_real(&[2.0, 3.0])) < 1e-14);
        let r = matfun_herm(&CMatrix::identity(3), MatFun::InvSqrt).unwrap();
        assert!(r.max_abs_diff(&CMatrix::identity(3)) < 1e-14);
        let indefinite = CMatrix::diag_real(&[1.0, -1.0]);
        assert!(matches!(
            matfun_herm(&indefinite, MatFun::Sqrt),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn matfun_inv_sqrt_identity_on_random_spd() {
        let mut rng = seeded_rng(29);
        let g = complex_gaussian_matrix(5, 5, &mut rng);
        let b = &(&g * &g.adjoint()) + &CMatrix::identity(5).scale_real(0.1);
        let m = matfun_herm(&b, MatFun::InvSqrt).unwrap();
        assert!((&(&m * &b) * &m).max_abs_diff(&CMatrix::identity(5)) < 1e-9);
        let s = matfun_herm(&b, MatFun::Sqrt).unwrap();
        assert!((&s * &s).max_abs_diff(&b) <= 1e-9 * b.norm_max());
    }
}
