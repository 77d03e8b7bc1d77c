//! Bound checks and pencil-conditioning measurements.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::instances::GepInstance;
use crate::matcore::{
    gen_eig, herm_eig, herm_eigvals, matfun_herm, svd_extremes, CMatrix, CVector, MatFun, C64,
};
use crate::random::{random_hermitian, random_unit_vector, seeded_rng};
use crate::spectral::{build_system, freq, SpectralParams, SpectralSystem};

/// Largest n·p handled by the dense condition-number checks.
pub const CONDM_LIMIT: usize = 4096;

/// Constant in the soft inverse-norm bound.
pub const SOFT_CONSTANT: f64 = 8.0 * PI;

const HARD_SLACK: f64 = 1e-9;
const CRAWFORD_GRID: usize = 1024;
const CRAWFORD_SAMPLES: usize = 100_000;

#[derive(Clone, Debug, PartialEq)]
pub struct BoundCheck {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub ratio: f64,
    pub pass: bool,
}

impl BoundCheck {
    /// `pass` when measured ≤ bound·(1 + slack).
    pub fn new(name: &str, measured: f64, bound: f64, slack: f64) -> Self {
        let ratio = if bound > 0.0 {
            measured / bound
        } else if measured == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Self {
            name: name.to_string(),
            measured,
            bound,
            ratio,
            pass: ratio <= 1.0 + slack,
        }
    }
}

/// Norm sandwich and inverse-norm bound for one collocation system.
#[derive(Clone, Debug)]
pub struct CondChecks {
    pub norm_lower: BoundCheck,
    pub norm_upper: BoundCheck,
    pub inverse: BoundCheck,
    pub norm_m: f64,
    pub norm_n: f64,
    pub inv_norm_m: f64,
    pub kappa_m: f64,
    pub kappa_e: f64,
    /// True when ‖A^{-1}‖ was unavailable and only ‖B^{-1}‖ entered the bound.
    pub used_b_only: bool,
}

impl CondChecks {
    pub fn hard_pass(&self) -> bool {
        self.norm_lower.pass && self.norm_upper.pass
    }
}

/// Builds M for (inst, φ0, params) and runs [`cond_checks_for_system`].
pub fn check_cond_m(
    inst: &GepInstance,
    phi0: &CVector,
    params: &SpectralParams,
) -> Result<CondChecks> {
    if inst.n * params.p > CONDM_LIMIT {
        return Err(Error::TooLarge(format!(
            "n·p = {} exceeds {CONDM_LIMIT}",
            inst.n * params.p
        )));
    }
    let sys = build_system(inst, phi0, params)?;
    cond_checks_for_system(inst, &sys)
}

/// ‖N‖ for N = I ⊗ A - τ^{-1} D ⊗ B, which is block diagonal.
pub fn norm_n(inst: &GepInstance, params: &SpectralParams) -> f64 {
    (0..params.p)
        .map(|k| (&inst.a - &inst.b.scale_real(freq(k, params.p) / params.tau)).norm2())
        .fold(0.0, f64::max)
}

/// Eigenbasis condition number: the stored truth when present, else the oracle.
pub fn kappa_e_of(inst: &GepInstance) -> Result<f64> {
    match &inst.truth {
        Some(t) => Ok(t.kappa_e),
        None => Ok(gen_eig(&inst.a, &inst.b)?.kappa_e),
    }
}

/// True when A is numerically singular (σ_min(A) ≤ 1e-12·max(‖A‖, ‖B‖)).
pub fn a_is_singular(inst: &GepInstance) -> bool {
    let (amax, amin) = svd_extremes(&inst.a);
    let (bmax, _) = svd_extremes(&inst.b);
    !(amin > 1e-12 * amax.max(bmax))
}

pub fn cond_checks_for_system(inst: &GepInstance, sys: &SpectralSystem) -> Result<CondChecks> {
    let params = &sys.params;
    let np = sys.m.rows();
    if np > CONDM_LIMIT {
        return Err(Error::TooLarge(format!("n·p = {np} exceeds {CONDM_LIMIT}")));
    }
    let p = params.p as f64;
    let (norm_m, sigma_min) = svd_extremes(&sys.m);
    let nn = norm_n(inst, params);
    let norm_lower = BoundCheck::new(
        "norm_lower",
        ((p - 1.0) / p).sqrt() * nn,
        norm_m,
        HARD_SLACK,
    );
    let norm_upper = BoundCheck::new("norm_upper", norm_m, (1.0 + nn * nn).sqrt(), HARD_SLACK);

    let kappa_e = kappa_e_of(inst)?;
    let (_, bmin) = svd_extremes(&inst.b);
    let b_inv = 1.0 / bmin;
    let used_b_only = a_is_singular(inst);
    let factor = if used_b_only {
        b_inv
    } else {
        let (_, amin) = svd_extremes(&inst.a);
        b_inv.min(1.0 / amin)
    };
    let inv_norm_m = 1.0 / sigma_min;
    let bound = SOFT_CONSTANT * kappa_e * factor / params.epsilon;
    let inverse = BoundCheck::new("inverse", inv_norm_m, bound, 0.0);
    Ok(CondChecks {
        norm_lower,
        norm_upper,
        inverse,
        norm_m,
        norm_n: nn,
        inv_norm_m,
        kappa_m: norm_m * inv_norm_m,
        kappa_e,
        used_b_only,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Crawford {
    pub gamma: f64,
    /// Angle maximizing λ_min(A sin θ + B cos θ), in [0, 2π); absent for
    /// pairs that are not definite.
    pub theta_star: Option<f64>,
}

/// λ_min(A sin θ + B cos θ).
pub fn rotated_min_eig(a: &CMatrix, b: &CMatrix, theta: f64) -> Result<f64> {
    let (s, c) = theta.sin_cos();
    let m = (&a.scale_real(s) + &b.scale_real(c)).hermitian_part();
    Ok(herm_eigvals(&m)?[0])
}

fn check_hermitian_pair(a: &CMatrix, b: &CMatrix) -> Result<()> {
    for m in [a, b] {
        let tol = 1e-12 * m.norm_max().max(1.0);
        let defect = m.hermitian_defect();
        if defect > tol {
            return Err(Error::NotHermitian { defect });
        }
    }
    if a.rows() != b.rows() {
        return Err(Error::DimensionMismatch(
            "Crawford pair of different sizes".into(),
        ));
    }
    Ok(())
}

/// Crawford number min_{‖x‖=1} |x^H A x + i x^H B x|.
///
/// For definite pairs this equals max_θ λ_min(A sin θ + B cos θ), found by
/// a 1024-point grid and golden-section refinement. Otherwise the minimum is
/// searched directly over random unit vectors followed by local descent.
pub fn crawford_number(a: &CMatrix, b: &CMatrix) -> Result<Crawford> {
    check_hermitian_pair(a, b)?;
    let f = |t: f64| rotated_min_eig(a, b, t);
    let step = 2.0 * PI / CRAWFORD_GRID as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for i in 0..CRAWFORD_GRID {
        let v = f(i as f64 * step)?;
        if v > best.1 {
            best = (i, v);
        }
    }
    if best.1 > 0.0 {
        let (mut lo, mut hi) = ((best.0 as f64 - 1.0) * step, (best.0 as f64 + 1.0) * step);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let (mut f1, mut f2) = (f(x1)?, f(x2)?);
        while hi - lo > 1e-8 {
            if f1 < f2 {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = f(x2)?;
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = f(x1)?;
            }
        }
        let theta = (0.5 * (lo + hi)).rem_euclid(2.0 * PI);
        return Ok(Crawford {
            gamma: f(theta)?,
            theta_star: Some(theta),
        });
    }
    Ok(Crawford {
        gamma: crawford_direct(a, b, 0xC0FFEE),
        theta_star: None,
    })
}

fn field_value(a: &CMatrix, b: &CMatrix, x: &CVector) -> (f64, f64) {
    (x.dot(&a.mul_vec(x)).re, x.dot(&b.mul_vec(x)).re)
}

/// Direct minimization of |x^H A x + i x^H B x| over unit vectors.
pub fn crawford_direct(a: &CMatrix, b: &CMatrix, seed: u64) -> f64 {
    let n = a.rows();
    let mut rng = seeded_rng(seed);
    let mut starts: Vec<(f64, CVector)> = Vec::new();
    for _ in 0..CRAWFORD_SAMPLES {
        let x = random_unit_vector(n, &mut rng);
        let (u, v) = field_value(a, b, &x);
        let val = u.hypot(v);
        if starts.len() < 8 || val < starts.last().unwrap().0 {
            starts.push((val, x));
            starts.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
            starts.truncate(8);
        }
    }
    let mut best = f64::INFINITY;
    for (mut val, mut x) in starts {
        let mut eta = 0.5 / (a.norm_max() + b.norm_max()).max(1e-300);
        for _ in 0..500 {
            let (u, v) = field_value(a, b, &x);
            let grad = a
                .mul_vec(&x)
                .scale_real(u)
                .add(&b.mul_vec(&x).scale_real(v));
            let mut improved = false;
            while eta > 1e-16 {
                let y = x.sub(&grad.scale_real(eta)).normalized();
                let (yu, yv) = field_value(a, b, &y);
                let yval = yu.hypot(yv);
                if yval < val {
                    x = y;
                    val = yval;
                    eta *= 1.5;
                    improved = true;
                    break;
                }
                eta *= 0.5;
            }
            if !improved || val < 1e-15 {
                break;
            }
        }
        best = best.min(val);
    }
    best
}

/// The inequality γ ≥ sqrt(‖A^{-1}‖^{-2} + ‖B^{-1}‖^{-2}) as a reported check.
pub fn crawford_inverse_norm_check(a: &CMatrix, b: &CMatrix, gamma: f64) -> BoundCheck {
    let (_, amin) = svd_extremes(a);
    let (_, bmin) = svd_extremes(b);
    let lower = amin.hypot(bmin);
    // Measured as lower/γ so that pass means the claimed inequality holds.
    BoundCheck::new("crawford_inverse_norm", lower, gamma, 1e-9)
}

/// Chordal distance |a - b| / (sqrt(1+|a|²) sqrt(1+|b|²)).
pub fn chord(a: impl Into<C64>, b: impl Into<C64>) -> f64 {
    let (a, b) = (a.into(), b.into());
    (a - b).norm() / ((1.0 + a.norm_sqr()).sqrt() * (1.0 + b.norm_sqr()).sqrt())
}

/// κ of the B-orthonormal eigenbasis E = B^{-1/2} V against sqrt(κ_B).
pub fn check_kappa_e(inst: &GepInstance) -> Result<BoundCheck> {
    inst.check_symmetric_pair()?;
    let bneg = matfun_herm(&inst.b, MatFun::InvSqrt)?;
    let at = (&(&bneg * &inst.a) * &bneg).hermitian_part();
    let v = herm_eig(&at)?.vectors;
    let e = &bneg * &v;
    let (hi, lo) = svd_extremes(&e);
    let kappa_e = hi / lo;
    let target = inst.kappa_b().sqrt();
    Ok(BoundCheck::new(
        "kappa_e",
        (kappa_e - target).abs(),
        1e-6 * target,
        0.0,
    ))
}

/// B-orthonormal eigenbasis condition number of a symmetric pair.
pub fn b_orthonormal_kappa_e(inst: &GepInstance) -> Result<f64> {
    inst.check_symmetric_pair()?;
    let bneg = matfun_herm(&inst.b, MatFun::InvSqrt)?;
    let at = (&(&bneg * &inst.a) * &bneg).hermitian_part();
    let e = &bneg * &herm_eig(&at)?.vectors;
    let (hi, lo) = svd_extremes(&e);
    Ok(hi / lo)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationReport {
    pub delta: f64,
    pub kappa_b: f64,
    /// |λ'_i - λ_i| in ascending eigenvalue order.
    pub shifts: Vec<f64>,
    /// max_i shift_i / ((1 + |λ_i|) δ κ_B).
    pub max_ratio: f64,
}

fn symmetric_spectrum(a: &CMatrix, b: &CMatrix) -> Result<Vec<f64>> {
    let bneg = matfun_herm(b, MatFun::InvSqrt)?;
    herm_eigvals(&(&(&bneg * a) * &bneg).hermitian_part())
}

/// Perturbs A and B by random Hermitian matrices of norm `delta`.
pub fn perturbation_probe(inst: &GepInstance, delta: f64, seed: u64) -> Result<PerturbationReport> {
    let mut rng = seeded_rng(seed);
    let da = random_hermitian(inst.n, delta, &mut rng);
    let db = random_hermitian(inst.n, delta, &mut rng);
    perturbation_probe_with(inst, &da, &db)
}

/// Eigenvalue shifts under the given Hermitian perturbations.
pub fn perturbation_probe_with(
    inst: &GepInstance,
    da: &CMatrix,
    db: &CMatrix,
) -> Result<PerturbationReport> {
    inst.check_symmetric_pair()?;
    let delta = da.norm2().max(db.norm2());
    let (bmax, bmin) = svd_extremes(&inst.b);
    if delta > 0.01 * bmin {
        return Err(Error::PerturbationTooLarge {
            delta,
            sigma_min: bmin,
        });
    }
    let kappa_b = bmax / bmin;
    let before = symmetric_spectrum(&inst.a, &inst.b)?;
    let after = symmetric_spectrum(&(&inst.a + da), &(&inst.b + db))?;
    let shifts: Vec<f64> = before
        .iter()
        .zip(&after)
        .map(|(x, y)| (x - y).abs())
        .collect();
    let max_ratio = before
        .iter()
        .zip(&shifts)
        .map(|(l, s)| {
            if *s == 0.0 {
                0.0
            } else {
                s / ((1.0 + l.abs()) * delta * kappa_b)
            }
        })
        .fold(0.0, f64::max);
    Ok(PerturbationReport {
        delta,
        kappa_b,
        shifts,
        max_ratio,
    })
}

/// Block-encoding scale convention: 2‖X‖, or 1 for the zero matrix.
pub fn alpha_of(norm: f64) -> f64 {
    if norm > 0.0 {
        2.0 * norm
    } else {
        1.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexityReport {
    pub epsilon: f64,
    pub kappa_b: f64,
    pub kappa_e: f64,
    pub norm_a: f64,
    pub alpha_a: f64,
    pub alpha_b: f64,
    pub rho: f64,
    /// κ_E (α_A + ρ α_B) κ_B / ε.
    pub ode: f64,
    /// α_A α_B κ_B^{2.5} / ε.
    pub qpe_product: f64,
    /// (α_A + ‖A‖ κ_B α_B) κ_B² / ε.
    pub qpe_sum: f64,
}

impl ComplexityReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "quantity,value");
        for (k, v) in [
            ("epsilon", self.epsilon),
            ("kappa_B", self.kappa_b),
            ("kappa_E", self.kappa_e),
            ("norm_A", self.norm_a),
            ("alpha_A", self.alpha_a),
            ("alpha_B", self.alpha_b),
            ("rho", self.rho),
            ("cost_ode", self.ode),
            ("cost_qpe_product", self.qpe_product),
            ("cost_qpe_sum", self.qpe_sum),
        ] {
            let _ = writeln!(s, "{k},{v:.6e}");
        }
        s
    }
}

/// Evaluates the three query-cost formulas with measured quantities.
pub fn complexity_report(inst: &GepInstance, epsilon: f64) -> Result<ComplexityReport> {
    let (bmax, bmin) = svd_extremes(&inst.b);
    let kappa_b = bmax / bmin;
    let kappa_e = kappa_e_of(inst)?;
    let norm_a = inst.a.norm2();
    let alpha_a = alpha_of(norm_a);
    let alpha_b = alpha_of(bmax);
    let rho = inst.rho();
    Ok(ComplexityReport {
        epsilon,
        kappa_b,
        kappa_e,
        norm_a,
        alpha_a,
        alpha_b,
        rho,
        ode: kappa_e * (alpha_a + rho * alpha_b) * kappa_b / epsilon,
        qpe_product: alpha_a * alpha_b * kappa_b.powf(2.5) / epsilon,
        qpe_sum: (alpha_a + norm_a * kappa_b * alpha_b) * kappa_b * kappa_b / epsilon,
    })
}

/// Random draw helper for property tests: a definite pair with known angle.
pub fn random_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    (rng.random::<f64>() - 0.5) * PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{
        centered_symmetric, gen_definite_rotated, gen_singular_a, gen_symmetric, Family,
    };
    use crate::spectral::{choose_params, params_with_p, uniform_phi0};

    #[test]
    fn chord_examples() {
        assert_eq!(chord(0.7, 0.7), 0.0);
        assert!((chord(1.0, 0.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((chord(1.0, -1.0) - 1.0).abs() < 1e-15);
        assert_eq!(chord(0.3, -2.0), chord(-2.0, 0.3));
    }

    #[test]
    fn crawford_examples() {
        let z = CMatrix::zeros(3, 3);
        let i = CMatrix::identity(3);
        let c = crawford_number(&z, &i).unwrap();
        assert!((c.gamma - 1.0).abs() < 1e-12);
        let t = c.theta_star.unwrap();
        assert!(t.min(2.0 * PI - t) < 1e-7);
        let c = crawford_number(&i, &i).unwrap();
        assert!((c.gamma - 2f64.sqrt()).abs() < 1e-12);
        assert!((c.theta_star.unwrap() - PI / 4.0).abs() < 1e-7);
    }

    #[test]
    fn crawford_indefinite_pair_has_no_angle() {
        let a = CMatrix::diag_real(&[1.0, -1.0]);
        let b = CMatrix::diag_real(&[1.0, -1.0]);
        let c = crawford_number(&a, &b).unwrap();
        assert!(c.theta_star.is_none());
        assert!(c.gamma < 1e-6);
    }

    #[test]
    fn crawford_recovers_rotation() {
        let base =
            centered_symmetric(&gen_symmetric(3, 4.0, &[-1.0, 0.3, 1.2], 8).unwrap()).unwrap();
        let c0 = crawford_number(&base.a, &base.b).unwrap();
        let rot = gen_definite_rotated(0.3, &base).unwrap();
        let c = crawford_number(&rot.a, &rot.b).unwrap();
        assert!((c.theta_star.unwrap() - 0.3).abs() < 1e-5);
        assert!((c.gamma - c0.gamma).abs() < 1e-6);
        assert!(
            (c.gamma - rotated_min_eig(&rot.a, &rot.b, c.theta_star.unwrap()).unwrap()).abs()
                < 1e-12
        );
    }

    #[test]
    fn condm_diagonal_case() {
        let inst = GepInstance::new(
            CMatrix::zeros(1, 1),
            CMatrix::identity(1),
            Family::Symmetric,
            0,
        )
        .unwrap();
        let params = params_with_p(0.1, 1.0, 5).unwrap();
        assert!((norm_n(&inst, &params) - 2.0 / params.tau).abs() < 1e-14);
        let c = check_cond_m(&inst, &uniform_phi0(1), &params).unwrap();
        assert!(c.hard_pass());
        assert!(c.used_b_only);
    }

    #[test]
    fn condm_symmetric_and_singular() {
        let inst = gen_symmetric(4, 10.0, &[-1.0, -0.3, 0.4, 1.0], 2).unwrap();
        for eps in [0.2, 0.1, 0.05] {
            let params = choose_params(eps, inst.rho()).unwrap();
            let c = check_cond_m(&inst, &uniform_phi0(4), &params).unwrap();
            assert!(c.hard_pass());
            assert!(c.inverse.pass, "ratio {}", c.inverse.ratio);
        }
        let inst = gen_singular_a(3, &[0.0, 0.5, -0.8], 5.0, 2).unwrap();
        let params = choose_params(0.1, inst.rho()).unwrap();
        let c = check_cond_m(&inst, &uniform_phi0(3), &params).unwrap();
        assert!(c.used_b_only && c.inverse.pass && c.hard_pass());
    }

    #[test]
    fn kappa_e_examples() {
        for (kb, want) in [(1.0, 1.0), (4.0, 2.0), (100.0, 10.0)] {
            let inst = gen_symmetric(3, kb, &[0.1, 0.2, 0.3], 5).unwrap();
            let c = check_kappa_e(&inst).unwrap();
            assert!(c.pass, "{c:?}");
            assert!((b_orthonormal_kappa_e(&inst).unwrap() - want).abs() < 1e-6 * want);
        }
    }

    #[test]
    fn perturbation_examples() {
        let inst = gen_symmetric(3, 1.0, &[0.1, 0.2, 0.3], 5).unwrap();
        let r = perturbation_probe(&inst, 0.0, 1).unwrap();
        assert!(r.shifts.iter().all(|s| *s < 1e-14));

        let a = CMatrix::diag_real(&[1.0, 2.0, 3.0]);
        let inst = GepInstance::new(a, CMatrix::identity(3), Family::Symmetric, 0).unwrap();
        let da = CMatrix::diag_real(&[1e-4, -2e-4, 5e-5]);
        let r = perturbation_probe_with(&inst, &da, &CMatrix::zeros(3, 3)).unwrap();
        for (s, want) in r.shifts.iter().zip([1e-4, 2e-4, 5e-5]) {
            assert!((s - want).abs() < 1e-13);
        }

        let inst = gen_symmetric(4, 10.0, &[-1.0, 0.0, 0.5, 1.0], 3).unwrap();
        let r = perturbation_probe(&inst, 1e-4, 9).unwrap();
        assert!(r.max_ratio <= 1.1, "{}", r.max_ratio);
        assert!(matches!(
            perturbation_probe(&inst, 1.0, 9),
            Err(Error::PerturbationTooLarge { .. })
        ));
    }

    #[test]
    fn complexity_examples() {
        let a = CMatrix::diag_real(&[1.0, 2.0]);
        let inst = GepInstance::new(a, CMatrix::identity(2), Family::Symmetric, 0).unwrap();
        let r = complexity_report(&inst, 0.1).unwrap();
        assert!((r.ode / r.qpe_product - 1.0).abs() < 1.0);
        assert!((r.qpe_sum / r.qpe_product - 1.0).abs() < 1e-12);
        let inst = gen_symmetric(4, 100.0, &[-1.0, 0.0, 0.5, 1.0], 3).unwrap();
        let r = complexity_report(&inst, 0.1).unwrap();
        assert!(r.ode <= r.qpe_product && r.ode <= r.qpe_sum);
        assert!(r.to_table().lines().count() == 11);
    }
}
