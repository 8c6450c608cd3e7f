//! Random functional-linked neural networks and companion numerics.
//!
//! The crate is organized around four themes:
//!
//! * [`networks`] — ELM, BLS and stacked BLS models with closed-form ridge
//!   training and incremental enhancement-node growth via pseudoinverse block
//!   updates.
//! * [`spectrum`] — Fourier-domain instrumentation: preprocessing, a direct
//!   nonuniform DFT, peak tracking and per-peak relative-error traces that
//!   expose how these models fit low frequencies before high ones.
//! * [`freqgen`] — spectral analysis of the tanh activation and an expanding
//!   weight-interval schedule that injects high-frequency capacity into
//!   incrementally grown BLS models, plus a paired comparison harness.
//! * [`poisson`] — central-difference discretizations of two Poisson model
//!   problems, Jacobi iteration, and a hybrid solver that warm-starts Jacobi
//!   from a BLS least-squares fit of the discrete system.
//!
//! [`dataio`] supplies dataset ingestion (IDX, CSV) and synthetic generators
//! feeding the experiment drivers.

pub mod dataio;
pub mod error;
pub mod freqgen;
pub(crate) mod linalg;
pub mod networks;
pub mod poisson;
pub mod schedule;
pub mod spectrum;

pub use error::{Error, Result};
pub use linalg::Mat;
