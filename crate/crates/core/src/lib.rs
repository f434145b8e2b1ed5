//! Modular, stateful MCMC: composable sampling blocks over a shared pool, a
//! declarative model language, generic kernels and a runtime validation pipeline.

pub mod error;
pub mod graph;
pub mod kernels;
pub mod model;
pub mod par;
pub mod spec;
pub mod stateful;
pub mod validation;

pub use error::{Diagnostic, Error, Result};
pub use model::{ModelSampler, SamplerConfig, StatefulModel};
