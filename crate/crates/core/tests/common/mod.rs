//! Oracles shared by the integration suites and the acceptance run.
#![allow(dead_code)]

pub mod densities;
pub mod diagnostics;
pub mod hmm;
pub mod nuts;
