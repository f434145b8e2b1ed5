use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::dirichlet_draw;
use crate::stateful::McRng;

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Normal mean with a normal prior and `n` normal observations of known variance.
pub fn gibbs_normal_mean(
    prior_mean: f64,
    prior_var: f64,
    ybar: f64,
    n: usize,
    sigma2: f64,
    rng: &mut McRng,
) -> Result<f64> {
    positive("prior variance", prior_var)?;
    positive("observation variance", sigma2)?;
    if n == 0 {
        return Err(Error::InvalidArgument("normal mean update needs at least one observation".into()));
    }
    let v = 1.0 / (1.0 / prior_var + n as f64 / sigma2);
    let m = v * (prior_mean / prior_var + n as f64 * ybar / sigma2);
    let z: f64 = rng.sample(StandardNormal);
    Ok(m + v.sqrt() * z)
}

/// Variance with an inverse-gamma prior given the residual sum of squares of `n` normal terms.
pub fn gibbs_inv_gamma(a: f64, b: f64, residual_ss: f64, n: usize, rng: &mut McRng) -> Result<f64> {
    positive("shape", a)?;
    positive("scale", b)?;
    if n == 0 || !(residual_ss >= 0.0) {
        return Err(Error::InvalidArgument("inverse-gamma update needs n >= 1 and a nonnegative sum of squares".into()));
    }
    let shape = a + n as f64 / 2.0;
    let rate = b + residual_ss / 2.0;
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(1.0 / g.sample(rng))
}

/// Success probability with a beta prior given success and failure counts.
pub fn gibbs_beta(alpha: f64, beta: f64, successes: f64, failures: f64, rng: &mut McRng) -> Result<f64> {
    positive("alpha", alpha)?;
    positive("beta", beta)?;
    if successes < 0.0 || failures < 0.0 {
        return Err(Error::InvalidArgument("counts must be nonnegative".into()));
    }
    let d = Beta::new(alpha + successes, beta + failures).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(d.sample(rng))
}

/// Category probabilities with a Dirichlet prior given category counts.
pub fn gibbs_dirichlet(alpha: &[f64], counts: &[f64], rng: &mut McRng) -> Result<Vec<f64>> {
    if alpha.len() != counts.len() {
        return Err(Error::InvalidArgument(format!(
            "dirichlet update: {} concentrations but {} counts",
            alpha.len(),
            counts.len()
        )));
    }
    if alpha.iter().any(|a| !(*a > 0.0)) || counts.iter().any(|c| *c < 0.0) {
        return Err(Error::InvalidArgument("concentrations must be positive and counts nonnegative".into()));
    }
    let post: Vec<f64> = alpha.iter().zip(counts).map(|(a, c)| a + c).collect();
    dirichlet_draw(&post, rng).ok_or_else(|| Error::Numerical("dirichlet draw failed".into()))
}

/// Poisson rate with a gamma (shape, rate) prior given `n` counts summing to `total`.
pub fn gibbs_gamma_poisson(shape: f64, rate: f64, total: f64, n: usize, rng: &mut McRng) -> Result<f64> {
    positive("shape", shape)?;
    positive("rate", rate)?;
    if total < 0.0 {
        return Err(Error::InvalidArgument("counts must be nonnegative".into()));
    }
    let g = Gamma::new(shape + total, 1.0 / (rate + n as f64)).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(g.sample(rng))
}

/// Truncated stick-breaking weights given per-cluster counts.
///
/// Stick `k < K` is `Beta(1 + n_k, alpha + sum_{j>k} n_j)` and the last weight
/// takes the remainder, so the result sums to one.
pub fn stick_breaking_update(alpha: f64, counts: &[f64], rng: &mut McRng) -> Result<Vec<f64>> {
    positive("concentration", alpha)?;
    let k = counts.len();
    if k == 0 {
        return Err(Error::InvalidArgument("stick-breaking needs at least one component".into()));
    }
    if counts.iter().any(|c| *c < 0.0) {
        return Err(Error::InvalidArgument("counts must be nonnegative".into()));
    }
    let mut tail: f64 = counts.iter().sum();
    let mut w = Vec::with_capacity(k);
    let mut rest = 1.0;
    for &n in &counts[..k - 1] {
        tail -= n;
        let v = Beta::new(1.0 + n, alpha + tail.max(0.0))
            .map_err(|e| Error::Numerical(e.to_string()))?
            .sample(rng);
        w.push(rest * v);
        rest *= 1.0 - v;
    }
    w.push(rest);
    Ok(w)
}
