//! Phase-estimation baseline for symmetric pairs.
//!
//! The pencil is reduced to the Hermitian matrix `Ã = B^{-1/2} A B^{-1/2}`,
//! the initial state is mapped through `B^{1/2}`, phase estimation is
//! emulated with its exact closed-form kernel, and `B^{-1/2}` is applied to
//! the system register before read-out.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::instances::GepInstance;
use crate::matcore::{herm_eig, matfun_herm, CMatrix, CVector, MatFun, C64};
use crate::spectral::{
    extract_peaks_with, Extraction, Method, PhaseDistribution, Residuals, RunReport, SpectralParams,
};

/// Phase register size and the affine map θ = (λ - shift)·scale into [0, 1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QpeConfig {
    pub m: u32,
    pub shift: f64,
    pub scale: f64,
}

impl QpeConfig {
    pub fn new(m: u32, shift: f64, scale: f64) -> Result<Self> {
        if m == 0 || m > 24 {
            return Err(Error::InvalidArgument(format!(
                "phase register must have 1..=24 bits, got {m}"
            )));
        }
        if !(scale > 0.0 && scale.is_finite() && shift.is_finite()) {
            return Err(Error::InvalidArgument(
                "affine map must be finite and invertible".into(),
            ));
        }
        Ok(Self { m, shift, scale })
    }

    pub fn register_size(&self) -> usize {
        1usize << self.m
    }

    pub fn theta(&self, lambda: f64) -> f64 {
        (lambda - self.shift) * self.scale
    }

    pub fn lambda(&self, k: usize) -> f64 {
        k as f64 / (self.register_size() as f64 * self.scale) + self.shift
    }

    /// Eigenvalue spacing of adjacent register values.
    pub fn resolution(&self) -> f64 {
        1.0 / (self.register_size() as f64 * self.scale)
    }

    /// Padded Gershgorin range of `h` and m = ⌈log₂(range/ε)⌉ + 2.
    pub fn for_matrix(h: &CMatrix, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        let (lo, hi) = gershgorin(h);
        let range = hi - lo;
        let (lo, hi) = if range > 1e-12 {
            (lo - 0.05 * range, hi + 0.05 * range)
        } else {
            (lo - 0.5, hi + 0.5)
        };
        let range = hi - lo;
        let m = ((range / epsilon).log2().ceil() as i64 + 2).max(1) as u32;
        Self::new(m, lo, 1.0 / range)
    }
}

/// Real Gershgorin interval of a Hermitian matrix.
pub fn gershgorin(h: &CMatrix) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..h.rows() {
        let r: f64 = (0..h.cols())
            .filter(|&j| j != i)
            .map(|j| h[(i, j)].norm())
            .sum();
        let c = h[(i, i)].re;
        lo = lo.min(c - r);
        hi = hi.max(c + r);
    }
    (lo, hi)
}

#[derive(Clone, Debug)]
pub struct Reduced {
    pub atilde: CMatrix,
    pub bhalf: CMatrix,
    pub bneghalf: CMatrix,
}

pub fn reduce_symmetric(inst: &GepInstance) -> Result<Reduced> {
    inst.check_symmetric_pair()?;
    let bhalf = matfun_herm(&inst.b.hermitian_part(), MatFun::Sqrt)?;
    let bneghalf = matfun_herm(&inst.b.hermitian_part(), MatFun::InvSqrt)?;
    let atilde = (&(&bneghalf * &inst.a) * &bneghalf).hermitian_part();
    Ok(Reduced {
        atilde,
        bhalf,
        bneghalf,
    })
}

/// (1/M) Σ_{l<M} e^{2πilx}.
pub fn qpe_kernel(x: f64, big_m: usize) -> C64 {
    let mf = big_m as f64;
    let frac = x - x.round();
    if frac.abs() < 1e-15 {
        return C64::new(1.0, 0.0);
    }
    let ratio = (PI * mf * x).sin() / (mf * (PI * x).sin());
    C64::from_polar(ratio, PI * (mf - 1.0) * x)
}

/// Joint amplitudes over (register k, eigenvector j) of ideal phase estimation.
pub fn qpe_emulate(h: &CMatrix, phi: &CVector, cfg: &QpeConfig) -> Result<PhaseDistribution> {
    if phi.len() != h.rows() {
        return Err(Error::DimensionMismatch(format!(
            "state of length {}, matrix of size {}",
            phi.len(),
            h.rows()
        )));
    }
    if (phi.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument(
            "phase estimation input must have unit norm".into(),
        ));
    }
    let eig = herm_eig(h)?;
    let beta = eig.vectors.adjoint().mul_vec(phi);
    let thetas: Vec<f64> = eig.values.iter().map(|z| cfg.theta(z.re)).collect();
    Ok(kernel_distribution(&beta, &thetas, cfg))
}

fn kernel_distribution(beta: &CVector, thetas: &[f64], cfg: &QpeConfig) -> PhaseDistribution {
    let big_m = cfg.register_size();
    let amps = CMatrix::from_fn(big_m, thetas.len(), |k, j| {
        beta[j] * qpe_kernel(thetas[j] - k as f64 / big_m as f64, big_m)
    });
    marginals(amps)
}

fn marginals(amps: CMatrix) -> PhaseDistribution {
    let total: f64 = amps.data().iter().map(|z| z.norm_sqr()).sum();
    let probs = (0..amps.rows())
        .map(|k| amps.row(k).iter().map(|z| z.norm_sqr()).sum::<f64>() / total)
        .collect();
    PhaseDistribution { probs, amps }
}

/// Baseline run: B^{1/2} preparation, phase estimation on Ã, B^{-1/2} undo.
pub fn run_standard(inst: &GepInstance, phi0: &CVector, epsilon: f64) -> Result<RunReport> {
    run_standard_detailed(inst, phi0, epsilon).map(|(r, _)| r)
}

pub fn run_standard_detailed(
    inst: &GepInstance,
    phi0: &CVector,
    epsilon: f64,
) -> Result<(RunReport, QpeConfig)> {
    if phi0.len() != inst.n {
        return Err(Error::DimensionMismatch(format!(
            "phi0 has length {}, expected {}",
            phi0.len(),
            inst.n
        )));
    }
    let red = reduce_symmetric(inst)?;
    let cfg = QpeConfig::for_matrix(&red.atilde, epsilon)?;
    let phi1 = red.bhalf.mul_vec(phi0).normalized();
    let eig = herm_eig(&red.atilde)?;
    let beta = eig.vectors.adjoint().mul_vec(&phi1);
    let thetas: Vec<f64> = eig.values.iter().map(|z| cfg.theta(z.re)).collect();
    let eigen_basis = kernel_distribution(&beta, &thetas, &cfg);
    // Rotate the system register back to the standard basis and apply B^{-1/2}.
    let back = &red.bneghalf * &eig.vectors;
    let amps = &eigen_basis.amps * &back.transpose();
    let distribution = marginals(amps);

    let big_m = cfg.register_size();
    let params = SpectralParams {
        epsilon,
        rho: inst.rho(),
        h: cfg.scale,
        p: big_m,
        tau: big_m as f64 * cfg.scale,
    };
    let est = |k: usize| cfg.lambda(k);
    let centre = |lam: f64| (cfg.theta(lam) * big_m as f64).round() as i64;
    let estimates = extract_peaks_with(&distribution, Extraction::Blind, est, centre)
        .into_iter()
        .map(|pk| pk.estimate)
        .collect();
    let truth = inst.truth_values();
    let (assisted, peak_masses, truth_errors) = match &truth {
        Some(tv) => {
            let peaks = extract_peaks_with(&distribution, Extraction::Assisted(tv), est, centre);
            (
                peaks.iter().map(|pk| pk.estimate).collect(),
                peaks.iter().map(|pk| pk.mass).collect(),
                peaks
                    .iter()
                    .zip(tv)
                    .map(|(pk, l)| (pk.estimate - l).abs())
                    .collect(),
            )
        }
        None => (Vec::new(), Vec::new(), Vec::new()),
    };
    let report = RunReport {
        method: Method::Qpe,
        params,
        estimates,
        assisted,
        truth,
        truth_errors,
        peak_masses,
        kappa_m: None,
        bound_ratio: None,
        residuals: Residuals::default(),
        distribution,
    };
    Ok((report, cfg))
}
