//! Multi-label sample mining from single-positive-label generative models.
//!
//! The library draws samples from *joint classes* — label combinations like
//! "in A and B but not C" — using only models annotated with one positive
//! label per class. The target density of a joint class is recovered from
//! per-class densities by a min/max positive-part combination, and sampling
//! is done by independence Metropolis-Hastings filtering of generator
//! proposals, with density ratios supplied either analytically (closed-form
//! mixtures) or by a trained multi-head classifier.
//!
//! Start with the runnable programs under `examples/`; each covers one
//! capability end to end. The thin `jointmc` binary runs config-driven
//! experiments (`run`, `sweep`, `validate`, `report`).

pub mod adapt;
pub mod algebra;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod family;
pub mod gmm;
pub mod math;
pub mod net;
pub mod sampler;
pub mod worlds;

pub use error::{Error, Result};
