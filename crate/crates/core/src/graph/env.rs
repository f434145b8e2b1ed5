use serde::{Deserialize, Serialize};

use super::VarId;

/// Flat row-major values of every graph variable, indexed by [`VarId`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Env {
    pub values: Vec<Vec<f64>>,
    /// Row width used for two-index access (1 for scalars and vectors).
    pub cols: Vec<usize>,
}

impl Env {
    pub fn get(&self, var: VarId) -> &[f64] {
        &self.values[var]
    }

    pub fn set(&mut self, var: VarId, values: &[f64]) {
        self.values[var].clear();
        self.values[var].extend_from_slice(values);
    }
}
