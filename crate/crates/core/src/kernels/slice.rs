use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stateful::McRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceSettings {
    /// Initial bracket width.
    pub w: f64,
    /// Maximum number of stepping-out expansions.
    pub m: usize,
}

impl Default for SliceSettings {
    fn default() -> Self {
        Self { w: 1.0, m: 50 }
    }
}

impl SliceSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.w > 0.0) || self.m < 1 {
            return Err(Error::InvalidArgument(format!(
                "slice settings need w > 0 and m >= 1 (got w = {}, m = {})",
                self.w, self.m
            )));
        }
        Ok(())
    }
}

/// One univariate slice-sampling update with stepping out and shrinkage.
pub fn slice_step_univariate(
    x0: f64,
    logpdf: &mut dyn FnMut(f64) -> Result<f64>,
    settings: &SliceSettings,
    rng: &mut McRng,
) -> Result<f64> {
    settings.validate()?;
    let f0 = logpdf(x0)?;
    if !f0.is_finite() {
        return Err(Error::Numerical(format!("slice start x = {x0} has log-density {f0}")));
    }
    let u: f64 = rng.random();
    let height = f0 + (1.0 - u).ln();

    let (w, m) = (settings.w, settings.m);
    let mut left = x0 - w * rng.random::<f64>();
    let mut right = left + w;
    let mut j = rng.random_range(0..m);
    let mut k = m - 1 - j;
    while j > 0 && logpdf(left)? > height {
        left -= w;
        j -= 1;
    }
    while k > 0 && logpdf(right)? > height {
        right += w;
        k -= 1;
    }

    loop {
        let x = left + (right - left) * rng.random::<f64>();
        let fx = logpdf(x)?;
        if fx > height {
            debug_assert!(fx >= height);
            return Ok(x);
        }
        if x < x0 {
            left = x;
        } else {
            right = x;
        }
        if right - left < 1e-12 {
            return Err(Error::Numerical(format!(
                "slice interval collapsed around x = {x0} (width {:e})",
                right - left
            )));
        }
    }
}
