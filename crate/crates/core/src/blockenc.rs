//! Explicit block-encodings: dilation, products, tensor products, LCU.
//!
//! A [`BlockEncoding`] stores the full unitary with ancilla index outermost
//! (`index = a·N + s`) and the encoded matrix in the `a = 0` block, scaled
//! by `1/alpha`. The physical ancilla dimension can be smaller than `2^q`:
//! unused levels of a declared qubit register act as the identity and are
//! not materialized.

use crate::error::{Error, Result};
use crate::instances::GepInstance;
use crate::matcore::{dft_matrix, herm_eig, kron, CMatrix, C64, ZERO};
use crate::spectral::{build_d, SpectralParams};

/// Largest `n·p` accepted by [`build_m_be`].
pub const BUILD_M_LIMIT: usize = 512;

/// Largest explicit unitary dimension materialized by [`build_m_be`].
pub const PHYSICAL_LIMIT: usize = 4096;

const UNITARY_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct BlockEncoding {
    pub u: CMatrix,
    pub anc_dim: usize,
    pub sys_dim: usize,
    pub alpha: f64,
    pub q: usize,
    pub err: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeVerification {
    /// ‖target - alpha·block‖ in operator norm.
    pub extraction_defect: f64,
    /// max |U^H U - I|.
    pub unitarity_defect: f64,
}

/// ⌈log₂ x⌉ for x ≥ 1.
pub fn ceil_log2(x: usize) -> usize {
    assert!(x >= 1);
    (usize::BITS - (x - 1).leading_zeros()) as usize
}

impl BlockEncoding {
    /// The encoded block `(⟨0| ⊗ I) U (|0⟩ ⊗ I)`.
    pub fn block(&self) -> CMatrix {
        self.u.submatrix(0, 0, self.sys_dim, self.sys_dim)
    }

    /// `alpha · block`, the matrix this encodes.
    pub fn encoded(&self) -> CMatrix {
        self.block().scale_real(self.alpha)
    }

    pub fn dim(&self) -> usize {
        self.u.rows()
    }

    /// Declares a larger ancilla register without touching the unitary.
    pub fn with_declared_q(mut self, q: usize) -> Self {
        self.q = self.q.max(q);
        self
    }

    /// Extends the physical ancilla with idle levels (direct sum with I).
    fn padded_u(&self, anc_dim: usize) -> CMatrix {
        if anc_dim == self.anc_dim {
            return self.u.clone();
        }
        let d = anc_dim * self.sys_dim;
        let mut out = CMatrix::identity(d);
        out.set_submatrix(0, 0, &self.u);
        out
    }
}

fn square_root_defect(m: &CMatrix) -> Result<CMatrix> {
    let eig = herm_eig(m)?;
    let mut vals = Vec::with_capacity(eig.values.len());
    for v in &eig.values {
        if v.re < -1e-12 {
            return Err(Error::AlphaTooSmall {
                alpha: f64::NAN,
                norm: f64::NAN,
            });
        }
        vals.push(v.re.max(0.0).sqrt());
    }
    let v = &eig.vectors;
    let scaled = CMatrix::from_fn(v.rows(), v.cols(), |i, j| v[(i, j)] * vals[j]);
    Ok((&scaled * &v.adjoint()).hermitian_part())
}

/// Unitary dilation `[[X, (I - XX†)^{1/2}], [(I - X†X)^{1/2}, -X†]]`, X = A/α.
pub fn dilate(a: &CMatrix, alpha: f64) -> Result<BlockEncoding> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(
            "dilation needs a square matrix".into(),
        ));
    }
    let norm = a.norm2();
    if !(alpha > 0.0) || norm > alpha * (1.0 + 1e-12) {
        return Err(Error::AlphaTooSmall { alpha, norm });
    }
    let n = a.rows();
    let x = a.scale_real(1.0 / alpha);
    let xh = x.adjoint();
    let id = CMatrix::identity(n);
    let s1 = square_root_defect(&(&id - &(&x * &xh)).hermitian_part())
        .map_err(|_| Error::AlphaTooSmall { alpha, norm })?;
    let s2 = square_root_defect(&(&id - &(&xh * &x)).hermitian_part())
        .map_err(|_| Error::AlphaTooSmall { alpha, norm })?;
    let mut u = CMatrix::zeros(2 * n, 2 * n);
    u.set_submatrix(0, 0, &x);
    u.set_submatrix(0, n, &s1);
    u.set_submatrix(n, 0, &s2);
    u.set_submatrix(n, n, &xh.scale_real(-1.0));
    let err = (a - &x.scale_real(alpha)).norm2();
    Ok(BlockEncoding {
        u,
        anc_dim: 2,
        sys_dim: n,
        alpha,
        q: 1,
        err,
    })
}

/// Encoding of `beta·A` from an encoding of `A`.
pub fn rescale_be(be: &BlockEncoding, beta: f64) -> Result<BlockEncoding> {
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "rescale factor must be positive, got {beta}"
        )));
    }
    let mut out = be.clone();
    out.alpha *= beta;
    out.err *= beta;
    Ok(out)
}

/// A unitary as its own encoding.
pub fn unitary_be(v: &CMatrix) -> Result<BlockEncoding> {
    if !v.is_square() {
        return Err(Error::DimensionMismatch("unitary must be square".into()));
    }
    let defect = v.unitarity_defect();
    if defect > UNITARY_TOL {
        return Err(Error::NotUnitary { defect });
    }
    Ok(BlockEncoding {
        u: v.clone(),
        anc_dim: 1,
        sys_dim: v.rows(),
        alpha: 1.0,
        q: 0,
        err: 0.0,
    })
}

/// Encoding of the p×p matrix whose first row is ⟨0|F^T and all other rows
/// vanish: `U = SWAP · (I ⊗ F^†)` on a p-level ancilla and p-level system.
pub fn projected_row_be(p: usize) -> Result<BlockEncoding> {
    if p == 0 {
        return Err(Error::InvalidArgument("p must be positive".into()));
    }
    let fh = dft_matrix(p).adjoint();
    // (SWAP · (I ⊗ F†))[(a,s),(a',s')] = δ_{s,a'} F†[a, s'].
    let u = CMatrix::from_fn(p * p, p * p, |row, col| {
        let (a, s) = (row / p, row % p);
        let (a2, s2) = (col / p, col % p);
        if s == a2 {
            fh[(a, s2)]
        } else {
            ZERO
        }
    });
    Ok(BlockEncoding {
        u,
        anc_dim: p,
        sys_dim: p,
        alpha: 1.0,
        q: ceil_log2(p),
        err: 0.0,
    })
}

/// Encoding of `A1 A2`; ancilla layout `(a1, a2)`.
pub fn product_be(be1: &BlockEncoding, be2: &BlockEncoding) -> Result<BlockEncoding> {
    if be1.sys_dim != be2.sys_dim {
        return Err(Error::DimensionMismatch(format!(
            "product of encodings with system dimensions {} and {}",
            be1.sys_dim, be2.sys_dim
        )));
    }
    let (d1, d2, n) = (be1.anc_dim, be2.anc_dim, be1.sys_dim);
    let dim = d1 * d2 * n;
    let split = |idx: usize| (idx / (d2 * n), (idx / n) % d2, idx % n);
    let u1 = CMatrix::from_fn(dim, dim, |r, c| {
        let (a1, a2, s) = split(r);
        let (b1, b2, t) = split(c);
        if a2 == b2 {
            be1.u[(a1 * n + s, b1 * n + t)]
        } else {
            ZERO
        }
    });
    let u2 = CMatrix::from_fn(dim, dim, |r, c| {
        let (a1, a2, s) = split(r);
        let (b1, b2, t) = split(c);
        if a1 == b1 {
            be2.u[(a2 * n + s, b2 * n + t)]
        } else {
            ZERO
        }
    });
    Ok(BlockEncoding {
        u: &u1 * &u2,
        anc_dim: d1 * d2,
        sys_dim: n,
        alpha: be1.alpha * be2.alpha,
        q: be1.q + be2.q,
        err: be1.alpha * be2.err + be2.alpha * be1.err + be1.err * be2.err,
    })
}

/// Encoding of `A1 ⊗ A2`; layout `(a1, a2, s1, s2)`.
pub fn tensor_be(be1: &BlockEncoding, be2: &BlockEncoding) -> Result<BlockEncoding> {
    let (d1, d2, n1, n2) = (be1.anc_dim, be2.anc_dim, be1.sys_dim, be2.sys_dim);
    let dim = d1 * d2 * n1 * n2;
    let split = |idx: usize| {
        let s2 = idx % n2;
        let s1 = (idx / n2) % n1;
        let a2 = (idx / (n1 * n2)) % d2;
        let a1 = idx / (d2 * n1 * n2);
        (a1, a2, s1, s2)
    };
    let u = CMatrix::from_fn(dim, dim, |r, c| {
        let (a1, a2, s1, s2) = split(r);
        let (b1, b2, t1, t2) = split(c);
        be1.u[(a1 * n1 + s1, b1 * n1 + t1)] * be2.u[(a2 * n2 + s2, b2 * n2 + t2)]
    });
    Ok(BlockEncoding {
        u,
        anc_dim: d1 * d2,
        sys_dim: n1 * n2,
        alpha: be1.alpha * be2.alpha,
        q: be1.q + be2.q,
        err: be1.alpha * be2.err + be2.alpha * be1.err + be1.err * be2.err,
    })
}

/// Real orthogonal reflector P (P = P^T = P^{-1}) with P e_0 = `a`.
fn householder_from_e0(a: &[f64]) -> CMatrix {
    let t = a.len();
    let mut v: Vec<f64> = a.to_vec();
    v[0] -= 1.0;
    let vv: f64 = v.iter().map(|x| x * x).sum();
    if vv < 1e-30 {
        return CMatrix::identity(t);
    }
    CMatrix::from_fn(t, t, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        C64::new(delta - 2.0 * v[i] * v[j] / vv, 0.0)
    })
}

/// Prepare-select-unprepare combination `Σ c_i A_i`.
///
/// The selection register has `T = |terms|` levels (declared as
/// `max(1, ⌈log₂ T⌉)` qubits). Every term is padded to the common ancilla
/// dimension; SELECT applies `sign(c_i) U_i` and PREP maps |0⟩ to the
/// amplitudes `sqrt(|c_i| α_i / alpha)`.
pub fn lcu_combine(terms: &[(f64, BlockEncoding)]) -> Result<BlockEncoding> {
    let first = terms.first().ok_or(Error::EmptyTerms)?;
    let n = first.1.sys_dim;
    if terms.iter().any(|(_, be)| be.sys_dim != n) {
        return Err(Error::DimensionMismatch(
            "LCU terms act on different systems".into(),
        ));
    }
    let weights: Vec<f64> = terms.iter().map(|(c, be)| c.abs() * be.alpha).collect();
    let alpha: f64 = weights.iter().sum();
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(
            "LCU coefficients are all zero".into(),
        ));
    }
    let t = terms.len();
    let amps: Vec<f64> = weights.iter().map(|w| (w / alpha).sqrt()).collect();
    let prep = householder_from_e0(&amps);
    let d = terms.iter().map(|(_, be)| be.anc_dim).max().unwrap();
    let inner = d * n;
    let padded: Vec<CMatrix> = terms
        .iter()
        .map(|(c, be)| {
            let u = be.padded_u(d);
            if *c < 0.0 {
                u.scale_real(-1.0)
            } else {
                u
            }
        })
        .collect();
    // U = (P ⊗ I) SELECT (P ⊗ I) = Σ_k (P e_k e_k^T P) ⊗ s_k U_k.
    let dim = t * inner;
    let mut u = CMatrix::zeros(dim, dim);
    for (k, uk) in padded.iter().enumerate() {
        for i in 0..t {
            for j in 0..t {
                let w = prep[(i, k)] * prep[(k, j)];
                if w == ZERO {
                    continue;
                }
                for x in 0..inner {
                    for y in 0..inner {
                        u[(i * inner + x, j * inner + y)] += w * uk[(x, y)];
                    }
                }
            }
        }
    }
    let q_common = terms.iter().map(|(_, be)| be.q).max().unwrap();
    let q_sel = ceil_log2(t).max(1);
    let err = terms.iter().map(|(c, be)| c.abs() * be.err).sum();
    Ok(BlockEncoding {
        u,
        anc_dim: t * d,
        sys_dim: n,
        alpha,
        q: q_common + q_sel,
        err,
    })
}

/// Encoding scale convention: 2‖X‖, or 1 for the zero matrix.
pub fn headroom_alpha(m: &CMatrix) -> f64 {
    crate::diagnostics::alpha_of(m.norm2())
}

/// Terms `(c_i, V_i)` of the five-term decomposition
/// `M = V1 - V2 + V3 - V4 + V5`, where
/// V1 = (F^T⊗I)(I⊗A), V2 = (F^T⊗I)(D/τ⊗B), V3 = |0⟩⟨0|F^T ⊗ I,
/// V4 = V3 (I⊗A), V5 = V3 (D/τ⊗B).
pub fn m_terms(inst: &GepInstance, params: &SpectralParams) -> Result<Vec<(f64, BlockEncoding)>> {
    let (n, p) = (inst.n, params.p);
    if p < 3 {
        return Err(Error::InvalidArgument(format!(
            "block-encoding of M needs p >= 3, got {p}"
        )));
    }
    if n * p > BUILD_M_LIMIT {
        return Err(Error::TooLarge(format!(
            "n·p = {} exceeds {BUILD_M_LIMIT}",
            n * p
        )));
    }
    let physical = 20 * n * p * p;
    if physical > PHYSICAL_LIMIT {
        return Err(Error::TooLarge(format!(
            "explicit LCU unitary would have dimension {physical} (limit {PHYSICAL_LIMIT})"
        )));
    }
    let l = ceil_log2(p);
    let alpha_a = headroom_alpha(&inst.a);
    let alpha_b = headroom_alpha(&inst.b);
    let alpha_d = (p - 1) as f64 / (2.0 * params.tau);
    let d_tau = build_d(p)?.scale_real(1.0 / params.tau);

    let ua = dilate(&inst.a, alpha_a)?;
    let ub = dilate(&inst.b, alpha_b)?;
    let ud = dilate(&d_tau, alpha_d)?.with_declared_q(l);
    let ft = unitary_be(&kron(&dft_matrix(p).transpose(), &CMatrix::identity(n)))?;
    let ip = unitary_be(&CMatrix::identity(p))?;
    let i_a = tensor_be(&ip, &ua)?;
    let d_b = tensor_be(&ud, &ub)?;
    let v3 = tensor_be(&projected_row_be(p)?, &unitary_be(&CMatrix::identity(n))?)?;

    let v1 = product_be(&ft, &i_a)?;
    let v2 = product_be(&ft, &d_b)?;
    let v4 = product_be(&v3, &i_a)?;
    let v5 = product_be(&v3, &d_b)?;
    Ok(vec![
        (1.0, v1),
        (-1.0, v2),
        (1.0, v3),
        (-1.0, v4),
        (1.0, v5),
    ])
}

/// LCU block-encoding of the collocation matrix M.
pub fn build_m_be(inst: &GepInstance, params: &SpectralParams) -> Result<BlockEncoding> {
    lcu_combine(&m_terms(inst, params)?)
}

/// `2 α_A + α_B (p-1)/τ + 1`.
pub fn expected_m_alpha(inst: &GepInstance, params: &SpectralParams) -> f64 {
    2.0 * headroom_alpha(&inst.a)
        + headroom_alpha(&inst.b) * (params.p - 1) as f64 / params.tau
        + 1.0
}

/// `max(q_A, q_B) + 2⌈log₂ p⌉ + 3` with single-qubit dilations of A and B.
pub fn expected_m_ancillas(params: &SpectralParams) -> usize {
    1 + 2 * ceil_log2(params.p) + 3
}

pub fn verify_be(be: &BlockEncoding, target: &CMatrix) -> Result<BeVerification> {
    if target.rows() != be.sys_dim || target.cols() != be.sys_dim {
        return Err(Error::DimensionMismatch(format!(
            "target is {}x{}, encoding acts on dimension {}",
            target.rows(),
            target.cols(),
            be.sys_dim
        )));
    }
    Ok(BeVerification {
        extraction_defect: (target - &be.encoded()).norm2(),
        unitarity_defect: be.u.unitarity_defect(),
    })
}
