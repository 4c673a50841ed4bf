//! Guaranteed-cost performance analysis and coherent controller synthesis
//! for linear quantum systems with uncertain quadratic Hamiltonian
//! perturbations.
//!
//! The crate is organised bottom-up:
//!
//! - [`qmodel`]: doubled-form system matrices, derived matrices and the
//!   degenerate parametric amplifier fixture.
//! - [`lmi`]: affine Hermitian matrix inequalities and a small dense
//!   barrier-method SDP engine with independent certification.
//! - [`analysis`] / [`synthesis`]: small-gain and Popov LMIs for cost
//!   bounds and for coherent controller design.
//! - [`oracle`]: exact steady-state cost via Lyapunov equations, used to
//!   falsify bounds over sampled perturbations.
//! - [`realize`]: static Bogoliubov squeezer realization of a single-mode
//!   controller Hamiltonian.
//!
//! Hamiltonian matrices (`M`, `K`, `Δ`) are stored without the ½
//! prefactor of the quadratic form; every formula consumes them directly.

pub mod analysis;
pub mod error;
pub mod linalg;
pub mod lmi;
pub mod oracle;
pub mod parallel;
pub mod qmodel;
pub mod realize;
pub mod synthesis;

pub use error::{Error, Result};
pub use linalg::{CMat, C64};
