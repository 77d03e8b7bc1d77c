//! Fourier collocation for `B x' = 2πi A x` and phase read-out.
//!
//! The solution on `[0, τ]` is expanded as
//! `x(t) = Σ_k c_k e^{2πi d_k t / τ}` with `d_k = k - (p-1)/2`. Enforcing
//! the ODE at `t_l = l h` for `l = 1..p-1` together with the initial
//! condition gives the `np × np` system `M vec(C) = (φ0, 0, …, 0)`, where
//! `vec(C)` stacks coefficient vectors with index `k·n + j`.
//! Post-processing with `F^{-1} U_p F` maps each coefficient with frequency
//! `d_k` to the register value `d_k mod p`, so an eigenvalue `λ` shows up
//! near `λτ mod p`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::instances::GepInstance;
use crate::matcore::{svd_extremes, CMatrix, CVector, LuFactor, C64, ONE, ZERO};
use crate::random::{random_unit_vector, seeded_rng};

/// Largest node count accepted by [`choose_params`].
pub const P_CAP: usize = 20001;

/// Lower threshold on a blind peak, relative to a single component.
pub const PEAK_FLOOR: f64 = 4.0 / (PI * PI);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralParams {
    pub epsilon: f64,
    pub rho: f64,
    pub h: f64,
    pub p: usize,
    pub tau: f64,
}

#[derive(Clone, Debug)]
pub struct SpectralSystem {
    pub m: CMatrix,
    pub rhs: CVector,
    pub params: SpectralParams,
    pub n: usize,
}

/// Marginal and joint read-out of the frequency register.
#[derive(Clone, Debug)]
pub struct PhaseDistribution {
    pub probs: Vec<f64>,
    /// `p × n` joint amplitudes.
    pub amps: CMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub k: usize,
    pub estimate: f64,
    pub mass: f64,
}

#[derive(Clone, Copy, Debug)]
pub enum Extraction<'a> {
    Blind,
    Assisted(&'a [f64]),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Ode,
    Qpe,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Ode => "ode",
            Method::Qpe => "qpe",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Residuals {
    pub solve: f64,
    pub truncation: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub method: Method,
    pub params: SpectralParams,
    /// Blind estimates, ascending.
    pub estimates: Vec<f64>,
    /// One assisted estimate per truth eigenvalue.
    pub assisted: Vec<f64>,
    pub truth: Option<Vec<f64>>,
    pub truth_errors: Vec<f64>,
    pub peak_masses: Vec<f64>,
    pub kappa_m: Option<f64>,
    pub bound_ratio: Option<f64>,
    pub residuals: Residuals,
    pub distribution: PhaseDistribution,
}

impl RunReport {
    pub fn max_error(&self) -> Option<f64> {
        if self.truth_errors.is_empty() {
            None
        } else {
            Some(self.truth_errors.iter().copied().fold(0.0, f64::max))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineConfig {
    pub epsilon: f64,
    pub solver_error: f64,
    pub seed: u64,
    /// Compute κ_M and the inverse-norm bound ratio (dense SVD of M).
    pub diagnostics: bool,
    /// Compute the truncation residual against the exact superposition.
    pub truncation: bool,
    /// Overrides the eigenvalue bound.
    pub rho: Option<f64>,
}

impl PipelineConfig {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            solver_error: 0.0,
            seed: 0,
            diagnostics: false,
            truncation: false,
            rho: None,
        }
    }
}

/// h = 1/(2ρ), p = smallest odd integer ≥ 2ρ/ε, τ = p h.
pub fn choose_params(epsilon: f64, rho: f64) -> Result<SpectralParams> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if !(rho >= 1.0 && rho.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "rho must be a finite real >= 1, got {rho}"
        )));
    }
    let required = 2.0 * rho / epsilon;
    if required > P_CAP as f64 {
        return Err(Error::ParamsTooLarge {
            required,
            cap: P_CAP,
        });
    }
    // Guard against 2ρ/ε landing a hair above an integer through roundoff.
    let mut p = (required * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    if p.is_multiple_of(2) {
        p += 1;
    }
    if p > P_CAP {
        return Err(Error::ParamsTooLarge {
            required,
            cap: P_CAP,
        });
    }
    let h = 1.0 / (2.0 * rho);
    Ok(SpectralParams {
        epsilon,
        rho,
        h,
        p,
        tau: p as f64 * h,
    })
}

/// Builds parameters for an explicit odd `p` and `h`.
pub fn params_with_p(epsilon: f64, rho: f64, p: usize) -> Result<SpectralParams> {
    if p.is_multiple_of(2) {
        return Err(Error::EvenP(p));
    }
    let h = 1.0 / (2.0 * rho);
    Ok(SpectralParams {
        epsilon,
        rho,
        h,
        p,
        tau: p as f64 * h,
    })
}

/// Frequency of register index k: k - (p-1)/2.
pub fn freq(k: usize, p: usize) -> f64 {
    k as f64 - ((p - 1) / 2) as f64
}

pub fn build_d(p: usize) -> Result<CMatrix> {
    if p.is_multiple_of(2) {
        return Err(Error::EvenP(p));
    }
    Ok(CMatrix::diag_real(
        &(0..p).map(|k| freq(k, p)).collect::<Vec<_>>(),
    ))
}

/// diag(e^{πi(1-p)l/p}).
pub fn build_up(p: usize) -> CMatrix {
    CMatrix::diag(&(0..p).map(|l| up_entry(l, p)).collect::<Vec<_>>())
}

fn up_entry(l: usize, p: usize) -> C64 {
    // (1-p) l / p reduced mod 2 before scaling by π keeps the phase exact.
    let num = ((p - 1) * l) % (2 * p);
    C64::from_polar(1.0, -PI * num as f64 / p as f64)
}

fn unit_check(phi0: &CVector, n: usize) -> Result<()> {
    if phi0.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "phi0 has length {}, expected {n}",
            phi0.len()
        )));
    }
    if !phi0.is_finite() {
        return Err(Error::NonFinite("phi0"));
    }
    if (phi0.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!(
            "phi0 must have unit norm, got {}",
            phi0.norm()
        )));
    }
    Ok(())
}

/// Assembles M and the right-hand side.
///
/// Row block 0 is `⟨0|F^T ⊗ I`; row block l ≥ 1, column block k is
/// `F[k,l] (A - (d_k/τ) B)`.
pub fn build_system(
    inst: &GepInstance,
    phi0: &CVector,
    params: &SpectralParams,
) -> Result<SpectralSystem> {
    let n = inst.n;
    unit_check(phi0, n)?;
    let p = params.p;
    if p.is_multiple_of(2) {
        return Err(Error::EvenP(p));
    }
    let np = n * p;
    let mut m = CMatrix::zeros(np, np);
    let s = 1.0 / (p as f64).sqrt();
    for k in 0..p {
        for j in 0..n {
            m[(j, k * n + j)] = C64::new(s, 0.0);
        }
    }
    let blocks: Vec<CMatrix> = (0..p)
        .map(|k| &inst.a - &inst.b.scale_real(freq(k, p) / params.tau))
        .collect();
    for l in 1..p {
        for (k, block) in blocks.iter().enumerate() {
            let f = C64::from_polar(s, 2.0 * PI * ((k * l) % p) as f64 / p as f64);
            for i in 0..n {
                for j in 0..n {
                    m[(l * n + i, k * n + j)] = f * block[(i, j)];
                }
            }
        }
    }
    let mut rhs = CVector::zeros(np);
    for j in 0..n {
        rhs[j] = phi0[j];
    }
    Ok(SpectralSystem {
        m,
        rhs,
        params: *params,
        n,
    })
}

/// Exact (unnormalized) solution of the collocation system.
pub fn exact_solution(sys: &SpectralSystem) -> Result<CVector> {
    LuFactor::new(&sys.m).map(|lu| lu.solve(&sys.rhs))
}

/// Normalized solution, optionally moved to chord distance exactly
/// `solver_error` along a random direction orthogonal to it.
pub fn solve_system(sys: &SpectralSystem, solver_error: f64, seed: u64) -> Result<CVector> {
    let y = exact_solution(sys)?;
    perturb_state(&y.normalized(), solver_error, seed)
}

/// Returns a unit vector at Euclidean distance `delta` from the unit vector `y`.
pub fn perturb_state(y: &CVector, delta: f64, seed: u64) -> Result<CVector> {
    if !(0.0..=2.0).contains(&delta) {
        return Err(Error::InvalidArgument(format!(
            "solver_error must lie in [0, 2], got {delta}"
        )));
    }
    if delta == 0.0 {
        return Ok(y.clone());
    }
    let mut rng = seeded_rng(seed);
    let w = loop {
        let r = random_unit_vector(y.len(), &mut rng);
        let w = r.sub(&y.scale(y.dot(&r)));
        if w.norm() > 1e-6 {
            break w.normalized();
        }
    };
    let cos = 1.0 - delta * delta / 2.0;
    let sin = (1.0 - cos * cos).max(0.0).sqrt();
    Ok(y.scale_real(cos).add(&w.scale_real(sin)))
}

/// Unitary DFT helpers built on FFT plans: `F v` and `F^{-1} v`.
struct Dft {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl Dft {
    fn new(p: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            fwd: planner.plan_fft_inverse(p),
            inv: planner.plan_fft_forward(p),
            scale: 1.0 / (p as f64).sqrt(),
        }
    }

    /// F v with F[k,l] = e^{2πikl/p}/√p.
    fn apply(&self, v: &mut [C64]) {
        self.fwd.process(v);
        v.iter_mut().for_each(|z| *z *= self.scale);
    }

    fn apply_inverse(&self, v: &mut [C64]) {
        self.inv.process(v);
        v.iter_mut().for_each(|z| *z *= self.scale);
    }
}

fn column_of_register(vec_c: &CVector, n: usize, p: usize, j: usize) -> Vec<C64> {
    (0..p).map(|k| vec_c[k * n + j]).collect()
}

/// Applies `F^{-1} U_p F ⊗ I` and returns joint amplitudes and marginals.
pub fn postprocess(
    vec_c: &CVector,
    params: &SpectralParams,
    n: usize,
) -> Result<PhaseDistribution> {
    let p = params.p;
    if vec_c.len() != n * p {
        return Err(Error::DimensionMismatch(format!(
            "state of length {}, expected {}",
            vec_c.len(),
            n * p
        )));
    }
    let dft = Dft::new(p);
    let up: Vec<C64> = (0..p).map(|l| up_entry(l, p)).collect();
    let mut amps = CMatrix::zeros(p, n);
    for j in 0..n {
        let mut col = column_of_register(vec_c, n, p, j);
        dft.apply(&mut col);
        col.iter_mut().zip(&up).for_each(|(z, u)| *z *= u);
        dft.apply_inverse(&mut col);
        for (k, z) in col.into_iter().enumerate() {
            amps[(k, j)] = z;
        }
    }
    let total: f64 = amps.data().iter().map(|z| z.norm_sqr()).sum();
    let probs = (0..p)
        .map(|k| amps.row(k).iter().map(|z| z.norm_sqr()).sum::<f64>() / total)
        .collect();
    Ok(PhaseDistribution { probs, amps })
}

/// Centered representative of k modulo p.
pub fn unwrap(k: usize, p: usize) -> i64 {
    if k <= (p - 1) / 2 {
        k as i64
    } else {
        k as i64 - p as i64
    }
}

/// Peak detection on the register marginal.
///
/// Blind mode keeps every local maximum whose mass reaches
/// `max(0.5·max_prob, 4/π²/(2n))`. Assisted mode picks, for each reference
/// eigenvalue, the heaviest of the three register values nearest `λτ mod p`.
pub fn extract_peaks(
    dist: &PhaseDistribution,
    params: &SpectralParams,
    mode: Extraction<'_>,
) -> Vec<Peak> {
    let p = dist.probs.len();
    let tau = params.tau;
    extract_peaks_with(
        dist,
        mode,
        |k| unwrap(k, p) as f64 / tau,
        |lam| (lam * tau).round() as i64,
    )
}

/// Peak detection with an arbitrary register-to-eigenvalue map `estimate`
/// and its (rounded) inverse `centre`.
pub fn extract_peaks_with(
    dist: &PhaseDistribution,
    mode: Extraction<'_>,
    estimate: impl Fn(usize) -> f64,
    centre: impl Fn(f64) -> i64,
) -> Vec<Peak> {
    let p = dist.probs.len();
    let peak = |k: usize| Peak {
        k,
        estimate: estimate(k),
        mass: dist.probs[k],
    };
    match mode {
        Extraction::Blind => {
            let n = dist.amps.cols().max(1);
            let pmax = dist.probs.iter().copied().fold(0.0, f64::max);
            let threshold = (0.5 * pmax).max(PEAK_FLOOR / (2.0 * n as f64));
            let mut peaks: Vec<Peak> = (0..p)
                .filter(|&k| {
                    let v = dist.probs[k];
                    if p == 1 {
                        return true;
                    }
                    let left = dist.probs[(k + p - 1) % p];
                    let right = dist.probs[(k + 1) % p];
                    v >= threshold && v > left && v >= right
                })
                .map(peak)
                .collect();
            peaks.sort_by(|a, b| a.estimate.partial_cmp(&b.estimate).unwrap());
            peaks
        }
        Extraction::Assisted(truth) => truth
            .iter()
            .map(|lam| {
                let c = centre(*lam);
                let k = (c - 1..=c + 1)
                    .map(|c| c.rem_euclid(p as i64) as usize)
                    .fold(None, |best: Option<usize>, k| match best {
                        Some(b) if dist.probs[b] >= dist.probs[k] => Some(b),
                        _ => Some(k),
                    })
                    .unwrap();
                peak(k)
            })
            .collect(),
    }
}

pub fn extract_eigs(
    dist: &PhaseDistribution,
    params: &SpectralParams,
    mode: Extraction<'_>,
) -> Vec<f64> {
    extract_peaks(dist, params, mode)
        .into_iter()
        .map(|pk| pk.estimate)
        .collect()
}

/// Draws `shots` register outcomes from the marginal; returns counts per k.
pub fn sample_shots(dist: &PhaseDistribution, shots: usize, seed: u64) -> Result<Vec<usize>> {
    let w = WeightedIndex::new(&dist.probs).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = seeded_rng(seed);
    let mut counts = vec![0usize; dist.probs.len()];
    for _ in 0..shots {
        counts[w.sample(&mut rng)] += 1;
    }
    Ok(counts)
}

/// Uniform superposition (1, …, 1)/√n.
pub fn uniform_phi0(n: usize) -> CVector {
    CVector::new(vec![ONE; n]).normalized()
}

/// Normalized sum of the truth eigenvectors: every eigencomponent gets the
/// same weight in the initial state.
pub fn balanced_phi0(inst: &GepInstance) -> Result<CVector> {
    let t = inst
        .truth
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("balanced phi0 needs a truth".into()))?;
    let mut v = CVector::zeros(inst.n);
    for j in 0..inst.n {
        let e = t.vectors.column(j);
        v = v.add(&e.normalized());
    }
    if v.norm() < 1e-12 {
        return Ok(uniform_phi0(inst.n));
    }
    Ok(v.normalized())
}

/// Normalized truth eigenvector j.
pub fn eigvec_phi0(inst: &GepInstance, j: usize) -> Result<CVector> {
    let t = inst
        .truth
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("eigvec phi0 needs a truth".into()))?;
    if j >= inst.n {
        return Err(Error::InvalidArgument(format!(
            "eigenvector index {j} out of range for n = {}",
            inst.n
        )));
    }
    Ok(t.vectors.column(j).normalized())
}

/// Distance between the normalized exact superposition sampled on the grid
/// and the normalized samples implied by the collocation solution.
pub fn truncation_residual(
    inst: &GepInstance,
    phi0: &CVector,
    params: &SpectralParams,
) -> Result<f64> {
    let sys = build_system(inst, phi0, params)?;
    let y = exact_solution(&sys)?.normalized();
    truncation_residual_from(inst, phi0, params, &y)
}

fn truncation_residual_from(
    inst: &GepInstance,
    phi0: &CVector,
    params: &SpectralParams,
    y: &CVector,
) -> Result<f64> {
    let t = inst
        .truth
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("truncation residual needs a truth".into()))?;
    let (n, p) = (inst.n, params.p);
    let beta = LuFactor::new(&t.vectors)?.solve(phi0);
    let mut exact = CVector::zeros(n * p);
    for l in 0..p {
        for (i, lam) in t.values.iter().enumerate() {
            let phase = (C64::new(0.0, 2.0 * PI) * lam * (l as f64 * params.h)).exp();
            let w = beta[i] * phase;
            for j in 0..n {
                exact[l * n + j] += w * t.vectors[(j, i)];
            }
        }
    }
    let exact = exact.normalized();
    let dft = Dft::new(p);
    let mut samples = CVector::zeros(n * p);
    for j in 0..n {
        let mut col = column_of_register(y, n, p, j);
        dft.apply(&mut col);
        for (l, z) in col.into_iter().enumerate() {
            samples[l * n + j] = z * up_entry(l, p);
        }
    }
    Ok(exact.sub(&samples.normalized()).norm())
}

/// Rejects pencils whose B is numerically singular.
pub fn check_b(inst: &GepInstance) -> Result<()> {
    let (hi, lo) = svd_extremes(&inst.b);
    if !(lo > 1e-10 * hi) {
        return Err(Error::SingularB { ratio: lo / hi });
    }
    Ok(())
}

/// ρ used by the pipeline: `max(1, bound + 2ε)`.
///
/// With `ρ` equal to the largest |λ|, eigenvalues at `+ρ` and `-ρ` land on
/// adjacent register values (`±p/2` wrap around). The `2ε` margin keeps
/// about four empty register values between them.
pub fn pipeline_rho(inst: &GepInstance, epsilon: f64) -> f64 {
    (inst.eigenvalue_bound() + 2.0 * epsilon).max(1.0)
}

/// Runs the full method: parameters, system, solve, post-process, extract.
pub fn run_pipeline(inst: &GepInstance, phi0: &CVector, cfg: &PipelineConfig) -> Result<RunReport> {
    check_b(inst)?;
    let rho = cfg.rho.unwrap_or_else(|| pipeline_rho(inst, cfg.epsilon));
    let params = choose_params(cfg.epsilon, rho)?;
    let sys = build_system(inst, phi0, &params)?;
    let lu = LuFactor::new(&sys.m)?;
    let y = lu.solve(&sys.rhs);
    let solve_residual = sys.m.mul_vec(&y).sub(&sys.rhs).norm();
    let y_exact = y.normalized();
    let state = perturb_state(&y_exact, cfg.solver_error, cfg.seed)?;
    let distribution = postprocess(&state, &params, inst.n)?;

    let estimates = extract_eigs(&distribution, &params, Extraction::Blind);
    let truth = inst.truth_values();
    let (assisted, peak_masses, truth_errors) = match &truth {
        Some(tv) => {
            let peaks = extract_peaks(&distribution, &params, Extraction::Assisted(tv));
            let errs = peaks
                .iter()
                .zip(tv)
                .map(|(pk, l)| (pk.estimate - l).abs())
                .collect();
            (
                peaks.iter().map(|pk| pk.estimate).collect(),
                peaks.iter().map(|pk| pk.mass).collect(),
                errs,
            )
        }
        None => (Vec::new(), Vec::new(), Vec::new()),
    };

    let truncation = if cfg.truncation && inst.truth.is_some() {
        Some(truncation_residual_from(inst, phi0, &params, &y_exact)?)
    } else {
        None
    };
    let (kappa_m, bound_ratio) = if cfg.diagnostics {
        match crate::diagnostics::cond_checks_for_system(inst, &sys) {
            Ok(c) => (Some(c.kappa_m), Some(c.inverse.ratio)),
            Err(_) => (None, None),
        }
    } else {
        (None, None)
    };

    Ok(RunReport {
        method: Method::Ode,
        params,
        estimates,
        assisted,
        truth,
        truth_errors,
        peak_masses,
        kappa_m,
        bound_ratio,
        residuals: Residuals {
            solve: solve_residual,
            truncation,
        },
        distribution,
    })
}

/// Outcome of one single-eigenvector run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeRecovery {
    pub j: usize,
    pub lambda: f64,
    pub estimate: f64,
    pub error: f64,
    pub mass: f64,
}

/// Runs the pipeline once per truth eigenvector, with `phi0 = E_j` and
/// assisted extraction of `λ_j`. The system matrix is factored once.
/// Run `j` perturbs with seed `cfg.seed + j`.
pub fn recover_modes(
    inst: &GepInstance,
    cfg: &PipelineConfig,
) -> Result<(SpectralParams, Vec<ModeRecovery>)> {
    check_b(inst)?;
    let tv = inst
        .truth_values()
        .ok_or_else(|| Error::InvalidArgument("mode recovery needs a truth".into()))?;
    let rho = cfg.rho.unwrap_or_else(|| pipeline_rho(inst, cfg.epsilon));
    let params = choose_params(cfg.epsilon, rho)?;
    let mut sys = build_system(inst, &uniform_phi0(inst.n), &params)?;
    let lu = LuFactor::new(&sys.m)?;
    let mut out = Vec::with_capacity(inst.n);
    for (j, &lambda) in tv.iter().enumerate() {
        let phi = eigvec_phi0(inst, j)?;
        let mut rhs = vec![ZERO; sys.rhs.len()];
        rhs[..inst.n].copy_from_slice(phi.as_slice());
        sys.rhs = CVector::new(rhs);
        let y = lu.solve(&sys.rhs).normalized();
        let state = perturb_state(&y, cfg.solver_error, cfg.seed.wrapping_add(j as u64))?;
        let dist = postprocess(&state, &params, inst.n)?;
        let pk = extract_peaks(&dist, &params, Extraction::Assisted(&[lambda]))[0];
        out.push(ModeRecovery {
            j,
            lambda,
            estimate: pk.estimate,
            error: (pk.estimate - lambda).abs(),
            mass: pk.mass,
        });
    }
    Ok((params, out))
}

/// Dense `(F^{-1} U_p F)` for reference and testing.
pub fn dense_postprocess_operator(p: usize) -> CMatrix {
    let f = crate::matcore::dft_matrix(p);
    &(&f.adjoint() * &build_up(p)) * &f
}

/// Exact collocation coefficients for a single mode `λ` with unit initial
/// value: c_k ∝ 1/(λτ - d_k), or a single spike when λτ is an integer.
pub fn single_mode_coefficients(lambda_tau: f64, p: usize) -> Vec<C64> {
    let on_grid = (0..p).find(|&k| (lambda_tau - freq(k, p)).abs() < 1e-12);
    let raw: Vec<C64> = match on_grid {
        Some(k0) => (0..p).map(|k| if k == k0 { ONE } else { ZERO }).collect(),
        None => (0..p)
            .map(|k| C64::new(1.0 / (lambda_tau - freq(k, p)), 0.0))
            .collect(),
    };
    let norm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    raw.into_iter().map(|z| z / norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{gen_symmetric, Family};
    use crate::matcore::{dft_matrix, kron};

    fn scalar_inst(a: f64, b: f64) -> GepInstance {
        let mut inst = GepInstance::new(
            CMatrix::scalar(C64::new(a, 0.0)),
            CMatrix::scalar(C64::new(b, 0.0)),
            Family::DiagonalizableReal,
            0,
        )
        .unwrap();
        inst.truth = crate::matcore::gen_eig(&inst.a, &inst.b).ok();
        inst
    }

    #[test]
    fn params_examples() {
        let p = choose_params(0.1, 1.0).unwrap();
        assert_eq!((p.p, p.h, p.tau), (21, 0.5, 10.5));
        assert_eq!(choose_params(0.5, 1.0).unwrap().p, 5);
        let p = choose_params(0.01, 4.0).unwrap();
        assert_eq!(p.p, 801);
        assert!((p.tau - 100.125).abs() < 1e-12);
        assert!(matches!(
            choose_params(1e-5, 1.0),
            Err(Error::ParamsTooLarge { .. })
        ));
    }

    #[test]
    fn d_and_up() {
        assert_eq!(build_d(3).unwrap(), CMatrix::diag_real(&[-1.0, 0.0, 1.0]));
        assert_eq!(
            build_d(5).unwrap(),
            CMatrix::diag_real(&[-2.0, -1.0, 0.0, 1.0, 2.0])
        );
        assert!(matches!(build_d(4), Err(Error::EvenP(4))));
        assert_eq!(build_up(1), CMatrix::identity(1));
        let u = build_up(9);
        assert_eq!(u[(0, 0)], ONE);
        assert!(u.unitarity_defect() <= 1e-14);
    }

    #[test]
    fn first_row_is_uniform() {
        let inst = scalar_inst(0.3, 1.0);
        let params = params_with_p(0.1, 1.0, 3).unwrap();
        let sys = build_system(&inst, &uniform_phi0(1), &params).unwrap();
        for k in 0..3 {
            assert!((sys.m[(0, k)] - C64::new(1.0 / 3f64.sqrt(), 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn lower_block_for_zero_a() {
        let inst = scalar_inst(0.0, 1.0);
        let params = params_with_p(0.1, 1.0, 5).unwrap();
        let sys = build_system(&inst, &uniform_phi0(1), &params).unwrap();
        let f = dft_matrix(5);
        for l in 1..5 {
            for k in 0..5 {
                let want = -f[(k, l)] * freq(k, 5) / params.tau;
                assert!((sys.m[(l, k)] - want).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn structure_matches_kronecker_form() {
        let inst = gen_symmetric(2, 3.0, &[-0.4, 0.7], 2).unwrap();
        let params = params_with_p(0.1, 1.0, 5).unwrap();
        let sys = build_system(&inst, &uniform_phi0(2), &params).unwrap();
        let ft = dft_matrix(5).transpose();
        let nmat = &kron(&CMatrix::identity(5), &inst.a)
            - &kron(&build_d(5).unwrap(), &inst.b).scale_real(1.0 / params.tau);
        let full = &kron(&ft, &CMatrix::identity(2)) * &nmat;
        let top = kron(&ft.submatrix(0, 0, 1, 5), &CMatrix::identity(2));
        assert!(sys.m.submatrix(0, 0, 2, 10).max_abs_diff(&top) <= 1e-14);
        assert!(
            sys.m
                .submatrix(2, 0, 8, 10)
                .max_abs_diff(&full.submatrix(2, 0, 8, 10))
                <= 1e-13 * full.norm_max()
        );
    }

    #[test]
    fn postprocess_is_cyclic_shift() {
        for p in [1usize, 3, 7, 21] {
            let g = dense_postprocess_operator(p);
            let shift = (p - 1) / 2;
            for k in 0..p {
                for kk in 0..p {
                    let want = if kk == (k + p - shift) % p { 1.0 } else { 0.0 };
                    assert!((g[(kk, k)] - C64::new(want, 0.0)).norm() < 1e-12);
                }
            }
            let params = params_with_p(0.1, 1.0, p).unwrap();
            let k0 = p / 3;
            let mut v = CVector::zeros(2 * p);
            v[k0 * 2 + 1] = ONE;
            let d = postprocess(&v, &params, 2).unwrap();
            let target = (k0 + p - shift) % p;
            assert!((d.amps[(target, 1)] - ONE).norm() < 1e-12);
            assert!((d.probs[target] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_mode_solution_matches_closed_form() {
        let lam = 0.37;
        let inst = scalar_inst(lam, 1.0);
        let params = params_with_p(0.1, 1.0, 11).unwrap();
        let sys = build_system(&inst, &uniform_phi0(1), &params).unwrap();
        let y = solve_system(&sys, 0.0, 0).unwrap();
        let want = single_mode_coefficients(lam * params.tau, 11);
        let phase = y[0] / y[0].norm() * (want[0].conj() / want[0].norm());
        for k in 0..11 {
            assert!((y[k] - want[k] * phase).norm() < 1e-10);
        }
    }

    #[test]
    fn zero_eigenvalue_is_exact() {
        let inst = scalar_inst(0.0, 1.0);
        let r = run_pipeline(&inst, &uniform_phi0(1), &PipelineConfig::new(0.1)).unwrap();
        assert_eq!(r.assisted, vec![0.0]);
        assert!((r.peak_masses[0] - 1.0).abs() < 1e-12);
        assert_eq!(r.estimates, vec![0.0]);
    }

    #[test]
    fn small_scalar_pipeline() {
        let inst = scalar_inst(0.5, 1.0);
        let r = run_pipeline(&inst, &uniform_phi0(1), &PipelineConfig::new(0.1)).unwrap();
        assert!(r.truth_errors[0] <= 0.1);
    }

    #[test]
    fn perturbation_distance_is_exact() {
        let y = uniform_phi0(6);
        let z = perturb_state(&y, 0.01, 3).unwrap();
        assert!((z.sub(&y).norm() - 0.01).abs() < 1e-12);
        assert!((z.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_a_truncation_is_tiny() {
        let inst = scalar_inst(0.0, 2.0);
        let params = params_with_p(0.1, 1.0, 7).unwrap();
        assert!(truncation_residual(&inst, &uniform_phi0(1), &params).unwrap() <= 1e-10);
    }
}
