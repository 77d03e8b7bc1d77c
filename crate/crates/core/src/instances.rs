//! Test pencils with known ground truth, plus the instance file format.
//!
//! File format (UTF-8):
//!
//! ```text
//! GEPINST v1 n=<n> family=<tag> seed=<u64>
//! A
//! <n rows of n whitespace-separated re,im pairs>
//! B
//! <n rows>
//! TRUTH                       (optional)
//! VALUES
//! <one row of n pairs>
//! VECTORS
//! <n rows>
//! KAPPA_E <real>
//! META theta=<real>           (optional)
//! Q2 / Q1 / Q0                (optional, quadratic coefficients)
//! END
//! ```

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matcore::{
    gen_eig, herm_eig, herm_eigvals, matfun_herm, svd_extremes, CMatrix, CVector, EigDecomp,
    LuFactor, MatFun, C64, ZERO,
};
use crate::random::{random_unitary, seeded_rng};

/// Eigenvector-matrix condition number used by the singular-A generator.
pub const SINGULAR_A_KAPPA_E: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Symmetric,
    DiagonalizableReal,
    DefiniteRotated,
    SingularA,
    QuadraticLinearized,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Symmetric,
        Family::DiagonalizableReal,
        Family::DefiniteRotated,
        Family::SingularA,
        Family::QuadraticLinearized,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Family::Symmetric => "symmetric",
            Family::DiagonalizableReal => "diagonalizable_real",
            Family::DefiniteRotated => "definite_rotated",
            Family::SingularA => "singular_A",
            Family::QuadraticLinearized => "quadratic_linearized",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Family> {
        match tag {
            "symmetric" => Some(Family::Symmetric),
            "diagonalizable_real" => Some(Family::DiagonalizableReal),
            "definite_rotated" => Some(Family::DefiniteRotated),
            "singular_A" | "singular_a" => Some(Family::SingularA),
            "quadratic_linearized" | "quadratic" => Some(Family::QuadraticLinearized),
            _ => None,
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Coefficients of `λ² A2 + λ A1 + A0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic {
    pub a2: CMatrix,
    pub a1: CMatrix,
    pub a0: CMatrix,
}

#[derive(Clone, Debug)]
pub struct GepInstance {
    pub a: CMatrix,
    pub b: CMatrix,
    pub n: usize,
    pub truth: Option<EigDecomp>,
    pub family: Family,
    pub seed: u64,
    /// Rotation angle for `definite_rotated` instances.
    pub theta: Option<f64>,
    pub quadratic: Option<Quadratic>,
}

impl GepInstance {
    /// Validates shapes and finiteness; symmetric instances must be a
    /// Hermitian pair with positive definite B.
    pub fn new(a: CMatrix, b: CMatrix, family: Family, seed: u64) -> Result<Self> {
        if !a.is_square() || !b.is_square() || a.rows() != b.rows() {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{}, B is {}x{}",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            )));
        }
        if !a.is_finite() {
            return Err(Error::NonFinite("A"));
        }
        if !b.is_finite() {
            return Err(Error::NonFinite("B"));
        }
        let n = a.rows();
        let inst = Self {
            a,
            b,
            n,
            truth: None,
            family,
            seed,
            theta: None,
            quadratic: None,
        };
        if family == Family::Symmetric {
            inst.check_symmetric_pair()?;
        }
        Ok(inst)
    }

    pub fn with_truth(mut self, truth: EigDecomp) -> Self {
        self.truth = Some(truth);
        self
    }

    /// Confirms that A, B are Hermitian and B is positive definite.
    pub fn check_symmetric_pair(&self) -> Result<()> {
        let tol = |m: &CMatrix| 1e-10 * m.norm_max().max(1.0);
        if !self.a.is_hermitian(tol(&self.a)) {
            return Err(Error::NotSymmetricPair("A is not Hermitian".into()));
        }
        if !self.b.is_hermitian(tol(&self.b)) {
            return Err(Error::NotSymmetricPair("B is not Hermitian".into()));
        }
        let ev = herm_eigvals(&self.b.hermitian_part())?;
        let lmin = ev.first().copied().unwrap_or(0.0);
        let lmax = ev.last().copied().unwrap_or(0.0);
        if !(lmin > 1e-14 * lmax.abs().max(f64::MIN_POSITIVE)) {
            return Err(Error::NotSymmetricPair(format!(
                "B is not positive definite (min eigenvalue {lmin:.3e})"
            )));
        }
        Ok(())
    }

    pub fn is_symmetric_pair(&self) -> bool {
        self.check_symmetric_pair().is_ok()
    }

    /// Real parts of the ground-truth eigenvalues, if known.
    pub fn truth_values(&self) -> Option<Vec<f64>> {
        self.truth
            .as_ref()
            .map(|t| t.values.iter().map(|z| z.re).collect())
    }

    /// sigma_max(B) / sigma_min(B).
    pub fn kappa_b(&self) -> f64 {
        let (hi, lo) = svd_extremes(&self.b);
        hi / lo
    }

    /// Eigenvalue magnitude bound: max |λ| from the truth when present,
    /// otherwise ‖A‖ / sigma_min(B).
    pub fn eigenvalue_bound(&self) -> f64 {
        match &self.truth {
            Some(t) => t.values.iter().map(|z| z.norm()).fold(0.0, f64::max),
            None => {
                let (_, bmin) = svd_extremes(&self.b);
                self.a.norm2() / bmin
            }
        }
    }

    /// `max(1, eigenvalue_bound())`.
    pub fn rho(&self) -> f64 {
        self.eigenvalue_bound().max(1.0)
    }

    /// Largest relative residual of the stored truth, if any.
    pub fn truth_residual(&self) -> Option<f64> {
        self.truth
            .as_ref()
            .map(|t| crate::matcore::eig_residual(&self.a, &self.b, t))
    }

    /// Short identifier used in reports.
    pub fn id(&self) -> String {
        format!("{}-n{}-s{}", self.family.tag(), self.n, self.seed)
    }
}

fn check_kappa(name: &str, k: f64) -> Result<()> {
    if !(k >= 1.0 && k.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "{name} must be a finite real >= 1, got {k}"
        )));
    }
    Ok(())
}

fn check_spectrum(n: usize, spectrum: &[f64]) -> Result<()> {
    if spectrum.len() != n {
        return Err(Error::BadSpectrumLength {
            expected: n,
            got: spectrum.len(),
        });
    }
    if spectrum.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("spectrum"));
    }
    Ok(())
}

/// Values from 1/kappa up to 1, geometrically spaced (ascending).
pub fn geometric_values(n: usize, kappa: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| kappa.powf(-((n - 1 - i) as f64) / (n - 1) as f64))
        .collect()
}

/// Sorts eigenpairs by eigenvalue.
fn sorted_pairs(spectrum: &[f64], vectors: &CMatrix) -> (Vec<f64>, CMatrix) {
    let mut order: Vec<usize> = (0..spectrum.len()).collect();
    order.sort_by(|&i, &j| spectrum[i].partial_cmp(&spectrum[j]).unwrap());
    let values = order.iter().map(|&i| spectrum[i]).collect();
    let cols: Vec<CVector> = order.iter().map(|&i| vectors.column(i)).collect();
    (values, CMatrix::from_columns(&cols))
}

fn kappa_of(m: &CMatrix) -> f64 {
    let (hi, lo) = svd_extremes(m);
    hi / lo
}

/// Hermitian pair with B = Q diag(d) Q^H, ‖B‖ = 1, cond(B) = kappa_b, and
/// A = B^{1/2} V Λ V^H B^{1/2}. Truth vectors are the B-orthonormal basis
/// E = B^{-1/2} V, whose condition number is sqrt(kappa_b).
pub fn gen_symmetric(n: usize, kappa_b: f64, spectrum: &[f64], seed: u64) -> Result<GepInstance> {
    check_spectrum(n, spectrum)?;
    check_kappa("kappa_b", kappa_b)?;
    let mut rng = seeded_rng(seed);
    let q = random_unitary(n, &mut rng);
    let v = random_unitary(n, &mut rng);
    let d = geometric_values(n, kappa_b);
    let with_diag = |f: &dyn Fn(f64) -> f64| {
        let scaled = CMatrix::from_fn(n, n, |i, j| q[(i, j)] * f(d[j]));
        (&scaled * &q.adjoint()).hermitian_part()
    };
    let b = with_diag(&|x| x);
    let b_half = with_diag(&|x| x.sqrt());
    let b_neg_half = with_diag(&|x| 1.0 / x.sqrt());
    let lam = CMatrix::diag_real(spectrum);
    let bv = &b_half * &v;
    let a = (&(&bv * &lam) * &bv.adjoint()).hermitian_part();
    let e = &b_neg_half * &v;
    let (values, vectors) = sorted_pairs(spectrum, &e);
    let kappa_e = kappa_of(&vectors);
    let truth = EigDecomp {
        values: values.iter().map(|x| C64::new(*x, 0.0)).collect(),
        vectors,
        kappa_e,
    };
    Ok(GepInstance::new(a, b, Family::Symmetric, seed)?.with_truth(truth))
}

/// Nonsymmetric pencil with real spectrum, cond(E) = kappa_e for the
/// unit-norm eigenbasis, cond(B) = kappa_b and ‖B‖ = 1.
pub fn gen_diagonalizable_real(
    n: usize,
    kappa_e: f64,
    spectrum: &[f64],
    kappa_b: f64,
    seed: u64,
) -> Result<GepInstance> {
    build_diagonalizable(
        n,
        kappa_e,
        spectrum,
        kappa_b,
        seed,
        Family::DiagonalizableReal,
    )
}

/// Diagonalizable pencil whose spectrum contains at least one zero.
pub fn gen_singular_a(n: usize, spectrum: &[f64], kappa_b: f64, seed: u64) -> Result<GepInstance> {
    check_spectrum(n, spectrum)?;
    if !spectrum.contains(&0.0) {
        return Err(Error::InvalidArgument(
            "singular_A spectrum must contain a zero".into(),
        ));
    }
    build_diagonalizable(
        n,
        SINGULAR_A_KAPPA_E.min(kappa_e_cap(n)),
        spectrum,
        kappa_b,
        seed,
        Family::SingularA,
    )
}

fn kappa_e_cap(n: usize) -> f64 {
    if n == 1 {
        1.0
    } else {
        f64::INFINITY
    }
}

fn build_diagonalizable(
    n: usize,
    kappa_e: f64,
    spectrum: &[f64],
    kappa_b: f64,
    seed: u64,
    family: Family,
) -> Result<GepInstance> {
    check_spectrum(n, spectrum)?;
    check_kappa("kappa_e", kappa_e)?;
    check_kappa("kappa_b", kappa_b)?;
    if n == 1 && kappa_e > 1.0 {
        return Err(Error::InvalidArgument(
            "a 1x1 eigenbasis always has kappa_e = 1".into(),
        ));
    }
    let mut rng = seeded_rng(seed);
    let u = random_unitary(n, &mut rng);
    // W = diag(phase) F diag(phase): unitary with all entries of modulus
    // 1/sqrt(n), so every column of U Σ W has the same norm.
    let f = crate::matcore::dft_matrix(n);
    let ph1: Vec<C64> = (0..n)
        .map(|_| C64::from_polar(1.0, rng.random::<f64>() * 2.0 * PI))
        .collect();
    let ph2: Vec<C64> = (0..n)
        .map(|_| C64::from_polar(1.0, rng.random::<f64>() * 2.0 * PI))
        .collect();
    let w = CMatrix::from_fn(n, n, |i, j| ph1[i] * f[(i, j)] * ph2[j]);
    let sigma: Vec<f64> = geometric_values(n, kappa_e).into_iter().rev().collect();
    let col_norm = (sigma.iter().map(|s| s * s).sum::<f64>() / n as f64).sqrt();
    let us = CMatrix::from_fn(n, n, |i, j| u[(i, j)] * sigma[j] / col_norm);
    let e = &us * &w;
    let us_inv = CMatrix::from_fn(n, n, |i, j| u[(j, i)].conj() * col_norm / sigma[i]);
    let e_inv = &w.adjoint() * &us_inv;

    let ub = random_unitary(n, &mut rng);
    let vb = random_unitary(n, &mut rng);
    let s = geometric_values(n, kappa_b);
    let ubs = CMatrix::from_fn(n, n, |i, j| ub[(i, j)] * s[j]);
    let b = &ubs * &vb.adjoint();

    let lam = CMatrix::diag_real(spectrum);
    let a = &(&(&b * &e) * &lam) * &e_inv;
    let (values, vectors) = sorted_pairs(spectrum, &e);
    let kappa = kappa_of(&vectors);
    let truth = EigDecomp {
        values: values.iter().map(|x| C64::new(*x, 0.0)).collect(),
        vectors,
        kappa_e: kappa,
    };
    Ok(GepInstance::new(a, b, family, seed)?.with_truth(truth))
}

/// Rotates a symmetric pair backwards by `theta`:
/// A' = A cos θ + B sin θ, B' = -A sin θ + B cos θ, so that
/// A' sin θ + B' cos θ = B. Eigenvectors are unchanged and every eigenvalue
/// maps to (λ cos θ + sin θ) / (cos θ - λ sin θ).
pub fn gen_definite_rotated(theta: f64, base: &GepInstance) -> Result<GepInstance> {
    if base.family != Family::Symmetric {
        return Err(Error::NotSymmetricPair(format!(
            "base instance has family {}",
            base.family
        )));
    }
    let (s, c) = theta.sin_cos();
    let a = (&base.a.scale_real(c) + &base.b.scale_real(s)).hermitian_part();
    let b = (&base.b.scale_real(c) - &base.a.scale_real(s)).hermitian_part();
    let mut inst = GepInstance::new(a, b, Family::DefiniteRotated, base.seed)?;
    inst.theta = Some(theta);
    if let Some(t) = &base.truth {
        let mut values = Vec::with_capacity(t.values.len());
        for lam in &t.values {
            let den = c - lam.re * s;
            if den.abs() < 1e-12 * (1.0 + lam.re.abs()) {
                return Err(Error::SingularB { ratio: den.abs() });
            }
            values.push((lam.re * c + s) / den);
        }
        let (values, vectors) = sorted_pairs(&values, &t.vectors);
        inst.truth = Some(EigDecomp {
            values: values.iter().map(|x| C64::new(*x, 0.0)).collect(),
            vectors,
            kappa_e: t.kappa_e,
        });
    }
    Ok(inst)
}

/// Shifts A by a multiple of B so that the Crawford angle of the pair is 0:
/// with x the lowest eigenvector of B, the new A satisfies x^H A x = 0.
/// Eigenvalues shift by the same constant; eigenvectors are unchanged.
pub fn centered_symmetric(base: &GepInstance) -> Result<GepInstance> {
    base.check_symmetric_pair()?;
    let eb = herm_eig(&base.b)?;
    let x = eb.vectors.column(0);
    let shift = x.dot(&base.a.mul_vec(&x)).re / eb.values[0].re;
    let a = (&base.a - &base.b.scale_real(shift)).hermitian_part();
    let mut inst = GepInstance::new(a, base.b.clone(), Family::Symmetric, base.seed)?;
    if let Some(t) = &base.truth {
        inst.truth = Some(EigDecomp {
            values: t.values.iter().map(|z| z - shift).collect(),
            vectors: t.vectors.clone(),
            kappa_e: t.kappa_e,
        });
    }
    Ok(inst)
}

/// Companion linearization A = [[0, I], [-A0, -A1]], B = [[I, 0], [0, A2]].
pub fn gen_quadratic_linearized(
    a2: &CMatrix,
    a1: &CMatrix,
    a0: &CMatrix,
    seed: u64,
) -> Result<GepInstance> {
    let m = a2.rows();
    for (name, c) in [("A2", a2), ("A1", a1), ("A0", a0)] {
        if c.rows() != m || c.cols() != m {
            return Err(Error::DimensionMismatch(format!("{name} must be {m}x{m}")));
        }
    }
    LuFactor::new(a2).map_err(|_| Error::SingularLeadingCoefficient)?;
    let (hi, lo) = svd_extremes(a2);
    if !(lo > 1e-13 * hi) {
        return Err(Error::SingularLeadingCoefficient);
    }
    let n = 2 * m;
    let mut a = CMatrix::zeros(n, n);
    a.set_submatrix(0, m, &CMatrix::identity(m));
    a.set_submatrix(m, 0, &a0.scale_real(-1.0));
    a.set_submatrix(m, m, &a1.scale_real(-1.0));
    let mut b = CMatrix::zeros(n, n);
    b.set_submatrix(0, 0, &CMatrix::identity(m));
    b.set_submatrix(m, m, a2);
    let mut inst = GepInstance::new(a, b, Family::QuadraticLinearized, seed)?;
    inst.truth = gen_eig(&inst.a, &inst.b).ok();
    inst.quadratic = Some(Quadratic {
        a2: a2.clone(),
        a1: a1.clone(),
        a0: a0.clone(),
    });
    Ok(inst)
}

/// Random overdamped quadratic `λ² I + λ A1 + A0` with Hermitian positive
/// definite A1, A0 and ‖A1‖ large enough for a real spectrum.
pub fn gen_quadratic_overdamped(m: usize, seed: u64) -> Result<GepInstance> {
    let mut rng = seeded_rng(seed);
    let u = random_unitary(m, &mut rng);
    let v = random_unitary(m, &mut rng);
    let k0: Vec<f64> = (0..m).map(|_| 0.2 + 0.8 * rng.random::<f64>()).collect();
    let c1: Vec<f64> = (0..m).map(|_| 3.0 + rng.random::<f64>()).collect();
    let herm = |q: &CMatrix, d: &[f64]| {
        (&CMatrix::from_fn(m, m, |i, j| q[(i, j)] * d[j]) * &q.adjoint()).hermitian_part()
    };
    let a0 = herm(&u, &k0);
    let a1 = herm(&v, &c1);
    gen_quadratic_linearized(&CMatrix::identity(m), &a1, &a0, seed)
}

/// `n` evenly spaced values across [-half_width, half_width] with a seeded
/// jitter of at most a fifth of the spacing.
pub fn jittered_spectrum(n: usize, half_width: f64, seed: u64) -> Vec<f64> {
    let mut rng = seeded_rng(seed ^ 0x5eed_5eed);
    if n == 1 {
        return vec![half_width * (rng.random::<f64>() - 0.5)];
    }
    let step = 2.0 * half_width / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let jitter = if i == 0 || i == n - 1 {
                0.0
            } else {
                (rng.random::<f64>() - 0.5) * 0.4 * step
            };
            -half_width + i as f64 * step + jitter
        })
        .collect()
}

/// Seeded instance of a family with the default sweep recipe: spectra
/// spread over [-2.5, 2.5] (rotated pairs: [-0.8, 0.8] before rotation by
/// an angle in [-0.4, 0.4]), κ_B drawn log-uniformly in [1, 100] and, for
/// nonsymmetric pencils, κ_E log-uniformly in [1, 20].
pub fn standard_instance(family: Family, n: usize, seed: u64) -> Result<GepInstance> {
    let mut rng = seeded_rng(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xA5A5);
    let kappa_b = 100f64.powf(rng.random::<f64>());
    let kappa_e = if n > 1 {
        20f64.powf(rng.random::<f64>())
    } else {
        1.0
    };
    match family {
        Family::Symmetric => gen_symmetric(n, kappa_b, &jittered_spectrum(n, 2.5, seed), seed),
        Family::DiagonalizableReal => {
            gen_diagonalizable_real(n, kappa_e, &jittered_spectrum(n, 2.5, seed), kappa_b, seed)
        }
        Family::SingularA => {
            let mut spectrum = jittered_spectrum(n, 2.5, seed);
            let zero_at = (seed as usize) % n;
            spectrum[zero_at] = 0.0;
            gen_singular_a(n, &spectrum, kappa_b, seed)
        }
        Family::DefiniteRotated => {
            let theta = (rng.random::<f64>() - 0.5) * 0.8;
            let base = gen_symmetric(n, kappa_b, &jittered_spectrum(n, 0.8, seed), seed)?;
            gen_definite_rotated(theta, &base)
        }
        Family::QuadraticLinearized => {
            if !n.is_multiple_of(2) {
                return Err(Error::InvalidArgument(
                    "quadratic instances need even n".into(),
                ));
            }
            gen_quadratic_overdamped(n / 2, seed)
        }
    }
}

fn fmt_pair(out: &mut String, z: C64) {
    let _ = write!(out, "{:.16e},{:.16e}", z.re, z.im);
}

fn write_matrix(out: &mut String, name: &str, m: &CMatrix) {
    out.push_str(name);
    out.push('\n');
    for i in 0..m.rows() {
        for (j, z) in m.row(i).iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            fmt_pair(out, *z);
        }
        out.push('\n');
    }
}

/// Serializes an instance in the versioned text format.
pub fn instance_to_string(inst: &GepInstance) -> String {
    let mut out = format!(
        "GEPINST v1 n={} family={} seed={}\n",
        inst.n,
        inst.family.tag(),
        inst.seed
    );
    write_matrix(&mut out, "A", &inst.a);
    write_matrix(&mut out, "B", &inst.b);
    if let Some(t) = &inst.truth {
        out.push_str("TRUTH\nVALUES\n");
        for (j, z) in t.values.iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            fmt_pair(&mut out, *z);
        }
        out.push('\n');
        write_matrix(&mut out, "VECTORS", &t.vectors);
        let _ = writeln!(out, "KAPPA_E {:.16e}", t.kappa_e);
    }
    if let Some(theta) = inst.theta {
        let _ = writeln!(out, "META theta={theta:.16e}");
    }
    if let Some(q) = &inst.quadratic {
        write_matrix(&mut out, "Q2", &q.a2);
        write_matrix(&mut out, "Q1", &q.a1);
        write_matrix(&mut out, "Q0", &q.a0);
    }
    out.push_str("END\n");
    out
}

pub fn save_instance(inst: &GepInstance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, instance_to_string(inst)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<GepInstance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_instance(&text)
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Option<(usize, &'a str)> {
        for (i, l) in self.inner.by_ref() {
            let t = l.trim();
            if !t.is_empty() && !t.starts_with('#') {
                return Some((i + 1, t));
            }
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.next()
            .ok_or_else(|| Error::Schema(format!("unexpected end of file, expected {what}")))
    }
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid number {s:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            msg: format!("non-finite number {s:?}"),
        });
    }
    Ok(v)
}

fn parse_row(text: &str, line: usize) -> Result<Vec<C64>> {
    text.split_whitespace()
        .map(|tok| {
            let (re, im) = tok.split_once(',').ok_or_else(|| Error::Parse {
                line,
                msg: format!("expected re,im pair, got {tok:?}"),
            })?;
            Ok(C64::new(parse_f64(re, line)?, parse_f64(im, line)?))
        })
        .collect()
}

fn parse_matrix(lines: &mut Lines<'_>, name: &str, rows: usize, cols: usize) -> Result<CMatrix> {
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let (ln, text) = lines.expect(&format!("row {r} of {name}"))?;
        let row = parse_row(text, ln)?;
        if row.len() != cols {
            return Err(Error::Schema(format!(
                "line {ln}: row {r} of {name} has {} entries, expected {cols}",
                row.len()
            )));
        }
        data.extend(row);
    }
    CMatrix::from_row_major(rows, cols, data)
}

fn expect_keyword(lines: &mut Lines<'_>, key: &str) -> Result<()> {
    let (ln, text) = lines.expect(key)?;
    if text != key {
        return Err(Error::Schema(format!(
            "line {ln}: expected {key}, found {text:?}"
        )));
    }
    Ok(())
}

/// Parses the versioned text format.
pub fn parse_instance(text: &str) -> Result<GepInstance> {
    let mut lines = Lines {
        inner: text.lines().enumerate().peekable(),
    };
    let (ln, header) = lines.expect("header")?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("GEPINST") {
        return Err(Error::Parse {
            line: ln,
            msg: "missing GEPINST header".into(),
        });
    }
    let version = parts.next().unwrap_or("");
    if version != "v1" {
        return Err(Error::SchemaVersionMismatch(version.to_string()));
    }
    let (mut n, mut family, mut seed) = (None, None, None);
    for kv in parts {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse {
            line: ln,
            msg: format!("bad header field {kv:?}"),
        })?;
        match k {
            "n" => {
                n = Some(v.parse::<usize>().map_err(|_| Error::Parse {
                    line: ln,
                    msg: format!("bad n {v:?}"),
                })?)
            }
            "family" => {
                family = Some(
                    Family::from_tag(v)
                        .ok_or_else(|| Error::Schema(format!("unknown family {v:?}")))?,
                )
            }
            "seed" => {
                seed = Some(v.parse::<u64>().map_err(|_| Error::Parse {
                    line: ln,
                    msg: format!("bad seed {v:?}"),
                })?)
            }
            _ => return Err(Error::Schema(format!("unknown header field {k:?}"))),
        }
    }
    let n = n.ok_or_else(|| Error::Schema("header lacks n".into()))?;
    let family = family.ok_or_else(|| Error::Schema("header lacks family".into()))?;
    let seed = seed.unwrap_or(0);

    expect_keyword(&mut lines, "A")?;
    let a = parse_matrix(&mut lines, "A", n, n)?;
    expect_keyword(&mut lines, "B")?;
    let b = parse_matrix(&mut lines, "B", n, n)?;
    let mut inst = GepInstance {
        a,
        b,
        n,
        truth: None,
        family,
        seed,
        theta: None,
        quadratic: None,
    };
    let mut q = [None, None, None];
    loop {
        let (ln, text) = lines.expect("END")?;
        match text {
            "END" => break,
            "TRUTH" => {
                expect_keyword(&mut lines, "VALUES")?;
                let (vl, vt) = lines.expect("eigenvalues")?;
                let values = parse_row(vt, vl)?;
                if values.len() != n {
                    return Err(Error::Schema(format!(
                        "line {vl}: {} eigenvalues, expected {n}",
                        values.len()
                    )));
                }
                expect_keyword(&mut lines, "VECTORS")?;
                let vectors = parse_matrix(&mut lines, "VECTORS", n, n)?;
                let (kl, kt) = lines.expect("KAPPA_E")?;
                let kappa_e = match kt.split_once(' ') {
                    Some(("KAPPA_E", v)) => parse_f64(v.trim(), kl)?,
                    _ => return Err(Error::Schema(format!("line {kl}: expected KAPPA_E"))),
                };
                inst.truth = Some(EigDecomp {
                    values,
                    vectors,
                    kappa_e,
                });
            }
            "Q2" | "Q1" | "Q0" => {
                let m = n / 2;
                let idx = match text {
                    "Q2" => 0,
                    "Q1" => 1,
                    _ => 2,
                };
                q[idx] = Some(parse_matrix(&mut lines, text, m, m)?);
            }
            t if t.starts_with("META") => {
                for kv in t.split_whitespace().skip(1) {
                    match kv.split_once('=') {
                        Some(("theta", v)) => inst.theta = Some(parse_f64(v, ln)?),
                        _ => {
                            return Err(Error::Schema(format!(
                                "line {ln}: unknown META field {kv:?}"
                            )))
                        }
                    }
                }
            }
            other => {
                return Err(Error::Schema(format!(
                    "line {ln}: unexpected section {other:?}"
                )))
            }
        }
    }
    if let [Some(a2), Some(a1), Some(a0)] = q {
        inst.quadratic = Some(Quadratic { a2, a1, a0 });
    }
    let GepInstance {
        a,
        b,
        truth,
        theta,
        quadratic,
        ..
    } = inst;
    let mut checked = GepInstance::new(a, b, family, seed)?;
    checked.truth = truth;
    checked.theta = theta;
    checked.quadratic = quadratic;
    Ok(checked)
}

/// Writes `%%MatrixMarket matrix array complex general` (column-major entries).
pub fn matrix_market_string(m: &CMatrix) -> String {
    let mut out = String::from("%%MatrixMarket matrix array complex general\n");
    let _ = writeln!(out, "{} {}", m.rows(), m.cols());
    for j in 0..m.cols() {
        for i in 0..m.rows() {
            let z = m[(i, j)];
            let _ = writeln!(out, "{:.16e} {:.16e}", z.re, z.im);
        }
    }
    out
}

pub fn save_matrix_market(m: &CMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, matrix_market_string(m)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a Matrix Market matrix: `array` or `coordinate` layout, real,
/// integer or complex field, general, symmetric or hermitian storage.
pub fn parse_matrix_market(text: &str) -> Result<CMatrix> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Schema("empty Matrix Market file".into()))?;
    let fields: Vec<String> = header
        .split_whitespace()
        .map(str::to_ascii_lowercase)
        .collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(Error::Schema(format!(
            "unsupported Matrix Market header {header:?}"
        )));
    }
    let coordinate = match fields[2].as_str() {
        "array" => false,
        "coordinate" => true,
        other => return Err(Error::Schema(format!("unsupported layout {other:?}"))),
    };
    let complex = match fields[3].as_str() {
        "complex" => true,
        "real" | "integer" => false,
        other => return Err(Error::Schema(format!("unsupported field type {other:?}"))),
    };
    let mirror: Option<fn(C64) -> C64> = match fields[4].as_str() {
        "general" => None,
        "symmetric" => Some(|z| z),
        "hermitian" => Some(|z: C64| z.conj()),
        other => return Err(Error::Schema(format!("unsupported symmetry {other:?}"))),
    };
    let mut body = lines.filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('%'));
    let (ln, dims) = body
        .next()
        .ok_or_else(|| Error::Schema("missing size line".into()))?;
    let dims: Vec<usize> = dims
        .split_whitespace()
        .map(|t| {
            t.parse().map_err(|_| Error::Parse {
                line: ln + 1,
                msg: format!("bad size {t:?}"),
            })
        })
        .collect::<Result<_>>()?;
    let want = if complex { 2 } else { 1 };
    let value = |toks: &[&str], ln: usize| -> Result<C64> {
        if toks.len() != want {
            return Err(Error::Parse {
                line: ln + 1,
                msg: format!("expected {want} value fields"),
            });
        }
        let re = parse_f64(toks[0], ln + 1)?;
        let im = if complex {
            parse_f64(toks[1], ln + 1)?
        } else {
            0.0
        };
        Ok(C64::new(re, im))
    };
    let mut m;
    if coordinate {
        if dims.len() != 3 {
            return Err(Error::Schema(
                "coordinate size line must have three entries".into(),
            ));
        }
        m = CMatrix::zeros(dims[0], dims[1]);
        for _ in 0..dims[2] {
            let (ln, text) = body
                .next()
                .ok_or_else(|| Error::Schema("too few entries".into()))?;
            let toks: Vec<&str> = text.split_whitespace().collect();
            if toks.len() < 2 {
                return Err(Error::Parse {
                    line: ln + 1,
                    msg: "expected row and column indices".into(),
                });
            }
            let index = |t: &str, bound: usize| match t.parse::<usize>() {
                Ok(k) if (1..=bound).contains(&k) => Ok(k - 1),
                _ => Err(Error::Parse {
                    line: ln + 1,
                    msg: format!("index {t:?} out of range"),
                }),
            };
            let (i, j) = (index(toks[0], dims[0])?, index(toks[1], dims[1])?);
            let z = value(&toks[2..], ln)?;
            m[(i, j)] += z;
            if let Some(f) = mirror.filter(|_| i != j) {
                m[(j, i)] += f(z);
            }
        }
    } else {
        if dims.len() != 2 {
            return Err(Error::Schema("size line must have two entries".into()));
        }
        let (rows, cols) = (dims[0], dims[1]);
        m = CMatrix::zeros(rows, cols);
        for j in 0..cols {
            // Symmetric storage lists only the lower triangle.
            let first = if mirror.is_some() { j } else { 0 };
            for i in first..rows {
                let (ln, text) = body
                    .next()
                    .ok_or_else(|| Error::Schema("too few entries".into()))?;
                let toks: Vec<&str> = text.split_whitespace().collect();
                let z = value(&toks, ln)?;
                m[(i, j)] = z;
                if let Some(f) = mirror.filter(|_| i != j) {
                    m[(j, i)] = f(z);
                }
            }
        }
    }
    if body.next().is_some() {
        return Err(Error::Schema("too many entries".into()));
    }
    Ok(m)
}

pub fn load_matrix_market(path: impl AsRef<Path>) -> Result<CMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_matrix_market(&text)
}

/// Builds an instance from a Matrix Market pair. The truth is computed with
/// the dense oracle when the pencil admits one.
pub fn load_matrix_market_pair(
    a_path: impl AsRef<Path>,
    b_path: impl AsRef<Path>,
    family: Family,
    seed: u64,
) -> Result<GepInstance> {
    let a = load_matrix_market(a_path)?;
    let b = load_matrix_market(b_path)?;
    let mut inst = GepInstance::new(a, b, family, seed)?;
    inst.truth = gen_eig(&inst.a, &inst.b).ok();
    Ok(inst)
}

/// Eigenvalues of `B^{-1/2} A B^{-1/2}` for a symmetric pair, ascending.
pub fn reduced_spectrum(inst: &GepInstance) -> Result<Vec<f64>> {
    let bm = matfun_herm(&inst.b, MatFun::InvSqrt)?;
    herm_eigvals(&(&(&bm * &inst.a) * &bm).hermitian_part())
}

/// The all-zero matrix helper used when callers need `A = 0`.
pub fn zero_matrix(n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| ZERO)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{eig_residual, singular_values};

    #[test]
    fn symmetric_trivial() {
        let inst = gen_symmetric(2, 1.0, &[1.0, -1.0], 3).unwrap();
        assert!(inst.b.max_abs_diff(&CMatrix::identity(2)) < 1e-14);
        let ev = herm_eigvals(&inst.a).unwrap();
        assert!((ev[0] + 1.0).abs() < 1e-12 && (ev[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_kappa_e_is_sqrt_kappa_b() {
        let inst = gen_symmetric(4, 100.0, &[1.0, 2.0, 3.0, 4.0], 7).unwrap();
        let t = inst.truth.as_ref().unwrap();
        assert!((t.kappa_e - 10.0).abs() < 1e-6, "{}", t.kappa_e);
        let ev = herm_eigvals(&inst.b).unwrap();
        assert!((ev[0] * 100.0 - ev[3]).abs() < 1e-8);
        assert!((ev[3] - 1.0).abs() < 1e-12);
        assert!(inst.a.hermitian_defect() <= 1e-10);
        let oracle = gen_eig(&inst.a, &inst.b).unwrap();
        for (x, y) in oracle.values.iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert!((x.re - y).abs() < 1e-7 && x.im.abs() < 1e-7);
        }
        assert!(inst.truth_residual().unwrap() < 1e-8);
    }

    #[test]
    fn symmetric_bad_spectrum() {
        assert!(matches!(
            gen_symmetric(3, 2.0, &[1.0], 0),
            Err(Error::BadSpectrumLength {
                expected: 3,
                got: 1
            })
        ));
    }

    #[test]
    fn diagonalizable_cases() {
        let inst = gen_diagonalizable_real(3, 1.0, &[0.5, -1.0, 2.0], 10.0, 1).unwrap();
        let e = gen_eig(&inst.a, &inst.b).unwrap();
        assert!(eig_residual(&inst.a, &inst.b, &e) < 1e-9);
        let zero = gen_diagonalizable_real(3, 5.0, &[0.0; 3], 10.0, 1).unwrap();
        assert!(zero.a.norm_max() == 0.0);
        let inst = gen_diagonalizable_real(4, 20.0, &[-2.0, -0.5, 1.0, 2.5], 30.0, 9).unwrap();
        let e = gen_eig(&inst.a, &inst.b).unwrap();
        assert!((e.kappa_e - 20.0).abs() <= 1.0, "{}", e.kappa_e);
        assert!((inst.truth.as_ref().unwrap().kappa_e - 20.0).abs() < 1e-8);
        assert!((inst.kappa_b() - 30.0).abs() < 1e-8);
        assert!(inst.truth_residual().unwrap() < 1e-8);
    }

    #[test]
    fn singular_a_cases() {
        let z = gen_singular_a(3, &[0.0; 3], 5.0, 2).unwrap();
        assert_eq!(z.a.norm_max(), 0.0);
        let inst = gen_singular_a(2, &[0.0, 1.0], 5.0, 2).unwrap();
        let s = singular_values(&inst.a).unwrap();
        assert!(s[1] < 1e-12 * s[0]);
        let e = gen_eig(&inst.a, &inst.b).unwrap();
        assert!(e.values[0].norm() < 1e-10 && (e.values[1] - 1.0).norm() < 1e-10);
        assert!(gen_singular_a(2, &[1.0, 2.0], 5.0, 2).is_err());
    }

    #[test]
    fn rotation_cases() {
        let base = gen_symmetric(3, 4.0, &[-1.0, 0.2, 1.0], 4).unwrap();
        let same = gen_definite_rotated(0.0, &base).unwrap();
        assert_eq!(same.a, base.a);
        assert_eq!(same.b, base.b);
        let quarter = gen_definite_rotated(PI / 2.0, &base).unwrap();
        assert!(quarter.a.max_abs_diff(&base.b) < 1e-15);
        let rot = gen_definite_rotated(0.3, &base).unwrap();
        assert!(rot.truth_residual().unwrap() < 1e-8);
        let oracle = gen_eig(&rot.a, &rot.b).unwrap();
        for (x, y) in oracle
            .values
            .iter()
            .zip(&rot.truth.as_ref().unwrap().values)
        {
            assert!((x - y).norm() < 1e-8);
        }
    }

    #[test]
    fn quadratic_scalar_cases() {
        let s = |x: f64| CMatrix::scalar(C64::new(x, 0.0));
        let inst = gen_quadratic_linearized(&s(1.0), &s(0.0), &s(-1.0), 0).unwrap();
        let v = inst.truth_values().unwrap();
        assert!((v[0] + 1.0).abs() < 1e-12 && (v[1] - 1.0).abs() < 1e-12);
        let inst = gen_quadratic_linearized(&s(1.0), &s(-3.0), &s(2.0), 0).unwrap();
        let v = inst.truth_values().unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12 && (v[1] - 2.0).abs() < 1e-12);
        assert!(matches!(
            gen_quadratic_linearized(&s(0.0), &s(1.0), &s(1.0), 0),
            Err(Error::SingularLeadingCoefficient)
        ));
    }

    #[test]
    fn text_round_trip_is_bitwise() {
        let inst = gen_diagonalizable_real(3, 4.0, &[0.1, 0.2, -0.7], 3.0, 12).unwrap();
        let back = parse_instance(&instance_to_string(&inst)).unwrap();
        assert_eq!(back.a, inst.a);
        assert_eq!(back.b, inst.b);
        let (t0, t1) = (inst.truth.unwrap(), back.truth.unwrap());
        assert_eq!(t0.values, t1.values);
        assert_eq!(t0.vectors, t1.vectors);
        assert_eq!(t0.kappa_e.to_bits(), t1.kappa_e.to_bits());
    }

    #[test]
    fn schema_errors() {
        let bad = "GEPINST v1 n=2 family=symmetric seed=0\nA\n1,0 0,0 0,0\n0,0 1,0\nB\n1,0 0,0\n0,0 1,0\nEND\n";
        assert!(matches!(parse_instance(bad), Err(Error::Schema(_))));
        let v2 = "GEPINST v2 n=1 family=symmetric seed=0\n";
        assert!(matches!(
            parse_instance(v2),
            Err(Error::SchemaVersionMismatch(_))
        ));
        let nan = "GEPINST v1 n=1 family=symmetric seed=0\nA\nx,0\nB\n1,0\nEND\n";
        assert!(matches!(
            parse_instance(nan),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn matrix_market_round_trip() {
        let inst = gen_diagonalizable_real(3, 2.0, &[1.0, 2.0, 3.0], 2.0, 5).unwrap();
        let m = parse_matrix_market(&matrix_market_string(&inst.a)).unwrap();
        assert_eq!(m, inst.a);
    }

    #[test]
    fn matrix_market_coordinate_and_symmetric() {
        let general =
            "%%MatrixMarket matrix coordinate real general\n% comment\n2 3 2\n1 3 4.5\n2 1 -1\n";
        let m = parse_matrix_market(general).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 3));
        assert_eq!(m[(0, 2)], C64::new(4.5, 0.0));
        assert_eq!(m[(1, 0)], C64::new(-1.0, 0.0));

        let herm = "%%MatrixMarket matrix coordinate complex hermitian\n2 2 2\n1 1 2 0\n2 1 1 1\n";
        let h = parse_matrix_market(herm).unwrap();
        assert_eq!(h[(0, 1)], C64::new(1.0, -1.0));
        assert!(h.is_hermitian(0.0));

        let sym = "%%MatrixMarket matrix array real symmetric\n2 2\n1\n2\n3\n";
        let s = parse_matrix_market(sym).unwrap();
        assert_eq!(s[(0, 1)], C64::new(2.0, 0.0));
        assert_eq!(s[(1, 1)], C64::new(3.0, 0.0));

        assert!(parse_matrix_market(
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1\n"
        )
        .is_err());
    }
}
