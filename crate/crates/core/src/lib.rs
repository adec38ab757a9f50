//! Anisotropic Mellin pseudodifferential calculus on the model cone `R+ x S^1`.
//!
//! The crate has two halves:
//!
//! * an exact symbolic layer ([`coeffring`], [`symbol`], [`expr`]) for
//!   differential-operator symbols `sum a(x,z) zeta^alpha sigma^j tau^k`,
//!   with the Mellin composition and adjoint expansions evaluated as exact
//!   finite sums over complex rationals;
//! * a numerical layer ([`quantize`], [`sobolev`], [`parametrix`],
//!   [`experiments`]) that quantizes symbols on a log-radial spectral grid
//!   `t = log x`, `z in [0, 2pi)` and runs ellipticity, parametrix, Sobolev
//!   and spectral studies on the truncated cone.
//!
//! Conventions: `D = -i d`, so `xD_x x^s = -i s x^s`, `D_z e^{ikz} = k e^{ikz}`,
//! and the symbol variable `tau` stands for multiplication by `x`.

pub mod aniso;
pub mod coeffring;
pub mod error;
pub mod experiments;
pub mod expr;
pub mod io;
pub mod linalg;
pub mod parametrix;
pub mod quantize;
pub mod sobolev;
pub mod symbol;

pub use aniso::{AnisotropyVector, CovarPoint};
pub use coeffring::{CRat, CoeffElement, TestMonomial};
pub use error::{Error, Result};
pub use quantize::{GridFunction, GridOperator, GridSpec, SymbolTable};
pub use symbol::{FormalSymbol, SymbolHomPart};

/// Complex scalar used by the numerical layer.
pub type C64 = num_complex::Complex64;
