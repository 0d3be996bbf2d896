//! Numerical laboratory for hierarchical random operators.
//!
//! The crate builds finite truncations of four model families on the dyadic
//! hierarchy — the hierarchical Laplacian, the hierarchical Anderson model,
//! the ultrametric Gaussian ensemble, and Rosenzweig-Porter matrices — and
//! provides the estimators used to probe them: exact spectra and level
//! statistics (gap ratios, rescaled point processes, density of states),
//! eigenfunction localization diagnostics (correlators, inverse
//! participation ratios, decay moments), the renormalization flow of
//! potential densities, and Dyson-Brownian-motion spectral evolution
//! including the recursive merge-and-evolve construction.
//!
//! The `harness` module and the `hierops` binary drive reproducible,
//! seed-stream-deterministic disorder-averaging experiments over all of the
//! above.

pub mod dbm;
pub mod density;
pub mod error;
pub mod harness;
pub mod hierarchy;
pub mod localization;
pub mod matrix;
pub mod models;
pub mod rgflow;
pub mod rng;
pub mod spectra;
pub mod stats;

pub use error::{Error, Result};
