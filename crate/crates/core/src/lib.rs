//! Classical emulation of Fourier-spectral generalized eigenvalue estimation.
//!
//! The pencil `A x = λ B x` is turned into the ODE `B x' = 2πi A x`, whose
//! solution is expanded in a truncated Fourier basis. The resulting
//! collocation system is solved exactly (or with injected error), and a
//! discrete Fourier post-processing step exposes the eigenvalues as peaks
//! of a phase-register distribution.
//!
//! Modules:
//! - [`matcore`]: dense complex linear algebra.
//! - [`instances`]: seeded test pencils with known eigendecompositions.
//! - [`spectral`]: parameters, collocation system, post-processing, extraction.
//! - [`blockenc`]: explicit block-encodings and the LCU construction of M.
//! - [`baseline`]: phase estimation on `B^{-1/2} A B^{-1/2}`.
//! - [`diagnostics`]: condition-number bounds, Crawford number, chordal metric.
//! - [`cli`]: the `gepsim` command-line tool.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod blockenc;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod instances;
pub mod matcore;
pub mod random;
pub mod spectral;

pub use error::{Error, Result};
pub use matcore::{CMatrix, CVector, EigDecomp, C64};
