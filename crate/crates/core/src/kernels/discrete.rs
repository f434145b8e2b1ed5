use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::transform::logistic;
use crate::stateful::McRng;

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Index drawn with probability `softmax(log_weights)`, 0-based.
pub fn sample_categorical(log_weights: &[f64], rng: &mut McRng) -> Result<usize> {
    if log_weights.iter().any(|w| w.is_nan()) {
        return Err(Error::Numerical("categorical log-weight is NaN".into()));
    }
    let m = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::Numerical(format!(
            "categorical weights are degenerate (largest log-weight {m})"
        )));
    }
    let w: Vec<f64> = log_weights.iter().map(|x| (x - m).exp()).collect();
    let mut u = rng.random::<f64>() * w.iter().sum::<f64>();
    let mut last = 0;
    for (k, &p) in w.iter().enumerate() {
        if p > 0.0 {
            if u < p {
                return Ok(k);
            }
            last = k;
        }
        u -= p;
    }
    Ok(last)
}

/// Independent draws of `Bernoulli(logistic(log_odds[j]))`.
pub fn sample_binary_vector(log_odds: &[f64], rng: &mut McRng) -> Result<Vec<i64>> {
    log_odds
        .iter()
        .map(|&l| {
            if l.is_nan() {
                return Err(Error::Numerical("binary log-odds is NaN".into()));
            }
            Ok(i64::from(rng.random::<f64>() < logistic(l)))
        })
        .collect()
}

fn check_hmm(log_init: &[f64], log_trans: &[f64], log_emit: &[f64]) -> Result<(usize, usize)> {
    let k = log_init.len();
    if k == 0 || log_trans.len() != k * k || log_emit.len() % k != 0 {
        return Err(Error::InvalidArgument(format!(
            "hmm dimensions disagree: {k} states, {} transition entries, {} emission entries",
            log_trans.len(),
            log_emit.len()
        )));
    }
    let normalized = |row: &[f64]| (row.iter().map(|x| x.exp()).sum::<f64>() - 1.0).abs() <= 1e-10;
    if !normalized(log_init) || !log_trans.chunks(k).all(normalized) {
        return Err(Error::InvalidArgument("hmm initial or transition probabilities do not sum to one".into()));
    }
    Ok((k, log_emit.len() / k))
}

/// Forward filter in log space: `alpha[t*K + k] = log p(obs_1..t, z_t = k)`.
fn forward(log_init: &[f64], log_trans: &[f64], log_emit: &[f64], k: usize, t_len: usize) -> Vec<f64> {
    let mut alpha = vec![0.0; t_len * k];
    for s in 0..k {
        alpha[s] = log_init[s] + log_emit[s];
    }
    let mut terms = vec![0.0; k];
    for t in 1..t_len {
        for s in 0..k {
            for (r, term) in terms.iter_mut().enumerate() {
                *term = alpha[(t - 1) * k + r] + log_trans[r * k + s];
            }
            alpha[t * k + s] = log_sum_exp(&terms) + log_emit[t * k + s];
        }
    }
    alpha
}

/// `log p(observations)` of an HMM by the forward recursion. `log_emit` is T x K, row-major.
pub fn hmm_log_marginal(log_init: &[f64], log_trans: &[f64], log_emit: &[f64]) -> Result<f64> {
    let (k, t_len) = check_hmm(log_init, log_trans, log_emit)?;
    if t_len == 0 {
        return Ok(0.0);
    }
    let alpha = forward(log_init, log_trans, log_emit, k, t_len);
    Ok(log_sum_exp(&alpha[(t_len - 1) * k..]))
}

/// Joint draw of the hidden path by forward filtering, backward sampling.
/// States are returned 0-based.
pub fn ffbs_hmm(log_init: &[f64], log_trans: &[f64], log_emit: &[f64], rng: &mut McRng) -> Result<Vec<usize>> {
    let (k, t_len) = check_hmm(log_init, log_trans, log_emit)?;
    if let Some(t) = (0..t_len).find(|&t| log_emit[t * k..(t + 1) * k].iter().all(|x| *x == f64::NEG_INFINITY)) {
        return Err(Error::Numerical(format!("hmm emission row {} is impossible in every state", t + 1)));
    }
    if t_len == 0 {
        return Ok(vec![]);
    }
    let alpha = forward(log_init, log_trans, log_emit, k, t_len);
    let mut path = vec![0; t_len];
    path[t_len - 1] = sample_categorical(&alpha[(t_len - 1) * k..], rng)?;
    let mut w = vec![0.0; k];
    for t in (0..t_len - 1).rev() {
        let next = path[t + 1];
        for (s, ws) in w.iter_mut().enumerate() {
            *ws = alpha[t * k + s] + log_trans[s * k + next];
        }
        path[t] = sample_categorical(&w, rng)?;
    }
    Ok(path)
}
