//! Seeded random constructions shared by the generators and diagnostics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::matcore::{CMatrix, CVector, C64};

pub type GepRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> GepRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard complex Gaussian (unit variance overall).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn complex_gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

/// Haar-distributed unitary: QR of a complex Gaussian matrix with the
/// diagonal of R made real and positive.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let g = complex_gaussian_matrix(n, n, rng);
    orthonormalize_columns(&g)
}

/// Gram-Schmidt with one reorthogonalization pass. The resulting Q is the
/// QR factor whose R has a positive real diagonal.
pub fn orthonormalize_columns(m: &CMatrix) -> CMatrix {
    let mut cols: Vec<CVector> = Vec::with_capacity(m.cols());
    for j in 0..m.cols() {
        let mut v = m.column(j);
        for _ in 0..2 {
            for q in &cols {
                let c = q.dot(&v);
                v = v.sub(&q.scale(c));
            }
        }
        cols.push(v.normalized());
    }
    CMatrix::from_columns(&cols)
}

pub fn random_unit_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVector {
    CVector::new((0..n).map(|_| complex_gaussian(rng)).collect()).normalized()
}

/// Random Hermitian matrix with spectral norm exactly `norm`.
pub fn random_hermitian<R: Rng + ?Sized>(n: usize, norm: f64, rng: &mut R) -> CMatrix {
    let g = complex_gaussian_matrix(n, n, rng);
    let h = (&g + &g.adjoint()).hermitian_part();
    let s = h.norm2();
    if s == 0.0 {
        return h;
    }
    h.scale_real(norm / s).hermitian_part()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unitary_is_unitary_and_seeded() {
        let u = random_unitary(6, &mut seeded_rng(1));
        assert!(u.unitarity_defect() < 1e-13);
        let v = random_unitary(6, &mut seeded_rng(1));
        assert_eq!(u, v);
    }

    #[test]
    fn hermitian_norm() {
        let h = random_hermitian(5, 0.25, &mut seeded_rng(2));
        assert!((h.norm2() - 0.25).abs() < 1e-12);
        assert!(h.hermitian_defect() == 0.0);
    }
}
