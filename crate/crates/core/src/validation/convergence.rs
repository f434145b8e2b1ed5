use serde::{Deserialize, Serialize};

use super::stats::{average_ranks, mean, median, normal_quantile, quantile, variance};
use crate::error::{Error, Result};
use crate::stateful::History;

/// Equal-length draws of the same parameters from two or more chains.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSet {
    names: Vec<String>,
    /// `draws[chain][param]` is one trajectory.
    draws: Vec<Vec<Vec<f64>>>,
}

impl ChainSet {
    pub fn new(names: Vec<String>, draws: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n = draws.first().and_then(|c| c.first()).map_or(0, Vec::len);
        for (c, chain) in draws.iter().enumerate() {
            if chain.len() != names.len() {
                return Err(Error::InvalidArgument(format!(
                    "chain {} has {} parameters, expected {}",
                    c + 1,
                    chain.len(),
                    names.len()
                )));
            }
            if let Some(bad) = chain.iter().find(|t| t.len() != n) {
                return Err(Error::InvalidArgument(format!(
                    "chain {} has {} draws, expected {n}",
                    c + 1,
                    bad.len()
                )));
            }
        }
        Ok(Self { names, draws })
    }

    /// Columns of each history become parameters, labelled like `beta.1`.
    pub fn from_histories(histories: &[&History]) -> Result<Self> {
        let names = histories.first().map(|h| h.labels()).unwrap_or_default();
        let draws = histories
            .iter()
            .map(|h| {
                if h.labels() != names {
                    return Err(Error::InvalidArgument("chains record different parameters".into()));
                }
                Ok((0..names.len()).map(|c| h.column(c)).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(names, draws)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_chains(&self) -> usize {
        self.draws.len()
    }

    pub fn n_draws(&self) -> usize {
        self.draws.first().and_then(|c| c.first()).map_or(0, Vec::len)
    }

    /// Per-chain trajectories of parameter `p`.
    pub fn param(&self, p: usize) -> Vec<&[f64]> {
        self.draws.iter().map(|c| c[p].as_slice()).collect()
    }
}

/// A diagnostic value plus whether it hit the degenerate-chain sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    #[serde(with = "super::floats")]
    pub value: f64,
    pub degenerate: bool,
}

impl Estimate {
    fn ok(value: f64) -> Self {
        Self { value, degenerate: false }
    }
}

fn check_shape(chains: &[&[f64]]) -> Result<usize> {
    if chains.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 chains, got {}", chains.len())));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidArgument("chains have different lengths".into()));
    }
    if n < 4 {
        return Err(Error::InvalidArgument(format!("need at least 4 draws per chain, got {n}")));
    }
    Ok(n)
}

/// Halves of every chain; the middle draw of an odd-length chain is dropped.
pub fn split_chains(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

/// Pooled average ranks, reshaped like `chains`.
fn pooled_ranks(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    let mut it = average_ranks(&pooled).into_iter();
    chains.iter().map(|c| c.iter().map(|_| it.next().unwrap()).collect()).collect()
}

/// Normal scores of pooled fractional ranks, `Phi^-1((r - 3/8) / (S + 1/4))`.
pub fn z_scale(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let s = chains.iter().map(Vec::len).sum::<usize>() as f64;
    pooled_ranks(chains)
        .into_iter()
        .map(|c| c.into_iter().map(|r| normal_quantile((r - 0.375) / (s + 0.25))).collect())
        .collect()
}

/// Classic potential scale reduction; `None` when within-chain variance vanishes.
fn basic_rhat(chains: &[Vec<f64>]) -> Option<f64> {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let within = chains.iter().map(|c| variance(c)).sum::<f64>() / chains.len() as f64;
    if !(within > 0.0) {
        return None;
    }
    let between = n * variance(&means);
    Some(((between / within + n - 1.0) / n).sqrt())
}

/// Rank-normalized split R-hat: the larger of the bulk and folded values.
///
/// Folding is done on the rank scale (`|r - median(r)|`, exact in floating
/// point) and then rank-normalized, so the result depends on the draws only
/// through their ranks.
pub fn rank_normalized_rhat(chains: &[&[f64]]) -> Result<Estimate> {
    check_shape(chains)?;
    let split = split_chains(chains);
    let ranks = pooled_ranks(&split);
    let med = median(&ranks.concat());
    let folded: Vec<Vec<f64>> = ranks.iter().map(|c| c.iter().map(|r| (r - med).abs()).collect()).collect();
    match (basic_rhat(&z_scale(&split)), basic_rhat(&z_scale(&folded))) {
        (Some(bulk), Some(fold)) => Ok(Estimate::ok(bulk.max(fold))),
        _ => Ok(Estimate {
            value: f64::INFINITY,
            degenerate: true,
        }),
    }
}

fn autocov(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    (0..n - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum::<f64>() / n as f64
}

/// Effective sample size of the mean, with Geyer's initial monotone sequence.
pub fn ess_of_chains(chains: &[Vec<f64>]) -> Estimate {
    let m = chains.len();
    let n = chains[0].len();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let mean_acov = |lag: usize| -> f64 {
        chains.iter().zip(&means).map(|(c, &mu)| autocov(c, mu, lag)).sum::<f64>() / m as f64
    };
    let mean_var = mean_acov(0) * n as f64 / (n as f64 - 1.0);
    if !(mean_var > 0.0) {
        return Estimate {
            value: 0.0,
            degenerate: true,
        };
    }
    let mut var_plus = mean_var * (n as f64 - 1.0) / n as f64;
    if m > 1 {
        var_plus += variance(&means);
    }
    let rho_at = |lag: usize| 1.0 - (mean_var - mean_acov(lag)) / var_plus;

    let mut rho = vec![0.0; n];
    rho[0] = 1.0;
    let mut even = 1.0;
    let mut odd = rho_at(1);
    rho[1] = odd;
    let mut t = 0;
    while t + 5 < n && even + odd > 0.0 {
        t += 2;
        even = rho_at(t);
        odd = rho_at(t + 1);
        if even + odd >= 0.0 {
            rho[t] = even;
            rho[t + 1] = odd;
        }
    }
    let max_t = t;
    if even > 0.0 {
        rho[max_t] = even;
    }
    let mut t = 0;
    while t + 4 <= max_t {
        t += 2;
        let prev = rho[t - 2] + rho[t - 1];
        if rho[t] + rho[t + 1] > prev {
            rho[t] = prev / 2.0;
            rho[t + 1] = prev / 2.0;
        }
    }
    let total = (m * n) as f64;
    let tau = (-1.0 + 2.0 * rho[..max_t].iter().sum::<f64>() + rho[max_t]).max(1.0 / total.log10());
    Estimate::ok(total / tau)
}

/// Bulk ESS: ESS of the rank-normalized split chains.
pub fn ess_bulk(chains: &[&[f64]]) -> Result<Estimate> {
    check_shape(chains)?;
    Ok(ess_of_chains(&z_scale(&split_chains(chains))))
}

/// Tail ESS: the smaller ESS of the 5% and 95% quantile indicators.
pub fn ess_tail(chains: &[&[f64]]) -> Result<Estimate> {
    check_shape(chains)?;
    let pooled: Vec<f64> = chains.iter().flat_map(|c| c.iter().copied()).collect();
    let mut worst: Option<Estimate> = None;
    for p in [0.05, 0.95] {
        let q = quantile(&pooled, p);
        let ind: Vec<Vec<f64>> = chains
            .iter()
            .map(|c| c.iter().map(|&x| f64::from(u8::from(x <= q))).collect())
            .collect();
        let refs: Vec<&[f64]> = ind.iter().map(Vec::as_slice).collect();
        let d = ess_of_chains(&split_chains(&refs));
        if worst.is_none_or(|w| d.value < w.value) {
            worst = Some(d);
        }
    }
    Ok(worst.expect("two quantiles"))
}
