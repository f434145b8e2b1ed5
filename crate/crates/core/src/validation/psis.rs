use serde::{Deserialize, Serialize};

use super::stats::sorted;
use crate::error::{Error, Result};

/// Shape estimate reported when every raw weight in the tail is equal.
pub const NO_VARIATION_K: f64 = f64::NEG_INFINITY;

/// Generalized Pareto fit by the Zhang–Stephens profile posterior mean, with the
/// weakly informative shrinkage of `k` toward 0.5. `x` must be ascending and
/// nonnegative. Returns `(k, sigma)`.
pub fn gpd_fit(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    let prior = 3.0;
    let m = 30 + (n as f64).sqrt().floor() as usize;
    let x_star = x[((n as f64) / 4.0 + 0.5).floor() as usize - 1];
    let x_max = x[n - 1];
    let theta: Vec<f64> = (1..=m)
        .map(|j| 1.0 / x_max + (1.0 - (m as f64 / (j as f64 - 0.5)).sqrt()) / prior / x_star)
        .collect();
    let profile: Vec<f64> = theta
        .iter()
        .map(|&t| {
            let k = x.iter().map(|&xi| (-t * xi).ln_1p()).sum::<f64>() / n as f64;
            n as f64 * ((-t / k).ln() - k - 1.0)
        })
        .collect();
    let top = profile.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = profile.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    let theta_hat = theta.iter().zip(&weights).map(|(t, w)| t * w).sum::<f64>() / total;
    let k = x.iter().map(|&xi| (-theta_hat * xi).ln_1p()).sum::<f64>() / n as f64;
    let sigma = -k / theta_hat;
    let k = (k * n as f64 + 0.5 * 10.0) / (n as f64 + 10.0);
    (k, sigma)
}

fn gpd_quantile(p: f64, k: f64, sigma: f64) -> f64 {
    if k == 0.0 {
        -sigma * (-p).ln_1p()
    } else {
        sigma * ((-p).ln_1p() * -k).exp_m1() / k
    }
}

/// Tail length used for the Pareto fit.
pub fn tail_len(s: usize) -> usize {
    let s = s as f64;
    (0.2 * s).ceil().min((3.0 * s.sqrt()).ceil()) as usize
}

/// Pareto-smoothed log weights and the fitted shape for one observation.
pub fn psis_smooth(log_ratios: &[f64]) -> Result<(Vec<f64>, f64)> {
    let s = log_ratios.len();
    if s < 25 {
        return Err(Error::InvalidArgument(format!("PSIS needs at least 25 draws, got {s}")));
    }
    let m = tail_len(s);
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| log_ratios[a].total_cmp(&log_ratios[b]));
    let cutoff = log_ratios[order[s - m - 1]];
    let max = log_ratios[order[s - 1]];
    let mut out = log_ratios.to_vec();
    if max - cutoff <= 0.0 {
        return Ok((out, NO_VARIATION_K));
    }
    let exp_cutoff = (cutoff - max).exp();
    let tail: Vec<f64> = order[s - m..].iter().map(|&i| (log_ratios[i] - max).exp() - exp_cutoff).collect();
    let (k, sigma) = gpd_fit(&sorted(&tail));
    if k.is_finite() {
        for (j, &i) in order[s - m..].iter().enumerate() {
            let p = (j as f64 + 0.5) / m as f64;
            let smoothed = (gpd_quantile(p, k, sigma) + exp_cutoff).ln() + max;
            out[i] = smoothed.min(max);
        }
    }
    Ok((out, k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoBuckets {
    pub good: usize,
    pub ok: usize,
    pub bad: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsisLoo {
    /// Shape estimate per observation.
    #[serde(with = "super::floats::seq")]
    pub pareto_k: Vec<f64>,
    pub buckets: ParetoBuckets,
    /// Estimated expected log pointwise predictive density.
    #[serde(with = "super::floats")]
    pub elpd_loo: f64,
}

/// PSIS-LOO from a `draws x observations` log-likelihood matrix (row-major rows per draw).
pub fn psis_loo(loglik: &[Vec<f64>]) -> Result<PsisLoo> {
    let s = loglik.len();
    if s < 25 {
        return Err(Error::InvalidArgument(format!("PSIS needs at least 25 draws, got {s}")));
    }
    let n = loglik[0].len();
    if loglik.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument("ragged log-likelihood matrix".into()));
    }
    let mut pareto_k = Vec::with_capacity(n);
    let mut elpd = 0.0;
    for i in 0..n {
        let col: Vec<f64> = loglik.iter().map(|r| r[i]).collect();
        let ratios: Vec<f64> = col.iter().map(|l| -l).collect();
        let (lw, k) = psis_smooth(&ratios)?;
        let top = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let norm: f64 = lw.iter().map(|w| (w - top).exp()).sum();
        let num: f64 = lw.iter().zip(&col).map(|(w, l)| (w - top + l).exp()).sum();
        elpd += (num / norm).ln();
        pareto_k.push(k);
    }
    let buckets = ParetoBuckets {
        good: pareto_k.iter().filter(|&&k| k < 0.5).count(),
        ok: pareto_k.iter().filter(|&&k| (0.5..0.7).contains(&k)).count(),
        bad: pareto_k.iter().filter(|&&k| k >= 0.7).count(),
    };
    Ok(PsisLoo {
        pareto_k,
        buckets,
        elpd_loo: elpd,
    })
}
