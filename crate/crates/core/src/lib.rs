//! Numerical laboratory for matrix-valued cocycles driven by random processes.
//!
//! A cocycle over a driving sequence x = (x_0, x_1, ...) is the family of
//! matrix products
//!
//! ```text
//!     A(n, x) = A(x_{n-1}) · ... · A(x_1) · A(x_0),      A(0, x) = I,
//! ```
//!
//! where each step matrix is looked up from a generator map.  The crate
//! provides the pieces needed to study the asymptotics of these products at
//! desk scale:
//!
//! * [`driving`] — finite-alphabet Bernoulli and Markov samplers, a
//!   discretized Gaussian walk, and the shift map on sampled paths;
//! * [`cocycle`] — generator maps, overflow-protected long products and
//!   QR-based growth-rate accumulation;
//! * [`grassmann`] — subspaces, flags, Hausdorff distance between unit
//!   spheres of subspaces, and supporting subspace arithmetic;
//! * [`lyapunov`] — Lyapunov spectra, directional exponents, filtration
//!   estimates, limsup statistics and an end-to-end structure verifier;
//! * [`subadditive`] — subadditive sequence diagnostics: Kingman limits,
//!   sign equivalence trials and additive recurrence checks;
//! * [`counterexamples`] — hand-constructed driving words with
//!   non-exponential decay and the shear (Jordan block) minimum-gain series;
//! * [`stability`] — Monte Carlo certificates for conditional stability and
//!   truncated cost indices.
//!
//! All randomness flows through [`rng::SeededRng`], a counter-based generator
//! with a frozen algorithm identifier, so every result in this crate is
//! reproducible from `(spec, seed)` alone.

pub mod cocycle;
pub mod counterexamples;
pub mod driving;
pub mod error;
pub mod grassmann;
pub mod lyapunov;
pub mod norm;
pub mod parallel;
pub mod rng;
pub mod serde_ext;
pub mod stability;
pub mod subadditive;

pub use error::{Error, Result};
