use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::check::parse_spec;
use super::data::DataSet;
use super::ast::ModelSpec;
use crate::error::{Error, Result};
use crate::stateful::{substream, McRng, Value};

/// A bundled model: source text plus a seeded generator of data under that model.
#[derive(Clone, Copy)]
pub struct Template {
    pub name: &'static str,
    pub source: &'static str,
    generate: fn(&mut McRng) -> DataSet,
}

impl std::fmt::Debug for Template {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Template").field("name", &self.name).finish()
    }
}

impl Template {
    pub fn spec(&self) -> Result<ModelSpec> {
        parse_spec(self.source).map_err(Error::Spec)
    }

    /// Data simulated from the model with fixed, known parameter values.
    pub fn generate(&self, seed: u64) -> DataSet {
        (self.generate)(&mut substream(seed, 0))
    }
}

const LINEAR_REGRESSION: &str = "\
model linear_regression
size N
size P
data X : real[N, P]
data y : real[N]
param beta : real[P] ~ normal(0, 10)
param sigma : real<lower=0> ~ half_cauchy(0, 5)
y[i] ~ linear_normal(X[i], beta, sigma)
";

const EIGHT_SCHOOLS_CENTERED: &str = "\
model eight_schools_centered
size J
data y : real[J]
data sigma : real<lower=0>[J]
param mu : real ~ normal(0, 5)
param tau : real<lower=0> ~ half_cauchy(0, 5)
latent theta : real[J]
theta[j] ~ normal(mu, tau)
y[j] ~ normal(theta[j], sigma[j])
";

const EIGHT_SCHOOLS_NONCENTERED: &str = "\
model eight_schools_noncentered
size J
data y : real[J]
data sigma : real<lower=0>[J]
param mu : real ~ normal(0, 5)
param tau : real<lower=0> ~ half_cauchy(0, 5)
latent eta : real[J] ~ normal(0, 1)
let theta[j] : real[J] = mu + tau * eta[j]
y[j] ~ normal(theta[j], sigma[j])
";

const NORMAL_MIXTURE: &str = "\
model normal_mixture
size N
size K = 2
data y : real[N]
param w : simplex[K] ~ dirichlet([1, 1])
param mu : real[K] ~ normal(0, 10) init [-3, 3]
param sigma : real<lower=0> ~ half_cauchy(0, 2)
latent z : int<lower=1, upper=2>[N] ~ categorical(w)
y[i] ~ mixture_normal(z[i], mu, sigma)
block w : dirichlet_gibbs
";

const HMM_GAUSSIAN_2STATE: &str = "\
model hmm_gaussian_2state
size T
data y : real[T]
data start : real[2] = [0.5, 0.5]
param A : simplex[2, 2] ~ dirichlet([1, 1])
param mu : real[2] ~ normal(0, 10) init [-2, 2]
param sigma : real<lower=0> ~ half_cauchy(0, 2)
latent z : int<lower=1, upper=2>[T] ~ hmm(start, A)
y[t] ~ normal(mu[z[t]], sigma)
";

const META_REGRESSION: &str = "\
model meta_regression
size N
size P
data X : real[N, P]
data s2 : real<lower=0>[N]
data y : real[N]
param beta : real[P] ~ normal(0, 10)
param omega : real<lower=0> ~ half_cauchy(0, 1)
let f[i] : real[N] = dot(X[i], beta)
latent mu : real[N]
mu[i] ~ normal(f[i], omega)
y[i] ~ normal(mu[i], sqrt(s2[i]))
";

const DP_MIXTURE_TRUNCATED: &str = "\
model dp_mixture_truncated
size N
size K = 4
data y : real[N]
data alpha : real = 0.1
param w : simplex[K] ~ stick_breaking(alpha)
param mu : real[K] ~ normal(0, 10) init [-4, 4, 0, 8]
param sigma : real<lower=0> ~ half_cauchy(0, 2)
latent z : int<lower=1, upper=4>[N] ~ categorical(w)
y[i] ~ mixture_normal(z[i], mu, sigma)
";

fn normal(rng: &mut McRng) -> f64 {
    rng.sample(StandardNormal)
}

fn gen_linear(rng: &mut McRng) -> DataSet {
    let (n, beta, sigma) = (50, [1.0, -2.0, 0.5], 0.7);
    let p = beta.len();
    let mut x = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..p).map(|j| if j == 0 { 1.0 } else { normal(rng) }).collect();
        y.push(row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + sigma * normal(rng));
        x.extend(row);
    }
    DataSet::new()
        .with("X", Value::RealMat { rows: n, cols: p, data: x })
        .with("y", Value::RealVec(y))
}

fn gen_schools(rng: &mut McRng) -> DataSet {
    let sigma = vec![15.0, 10.0, 16.0, 11.0, 9.0, 11.0, 10.0, 18.0];
    let (mu, tau) = (4.0, 3.0);
    let y = sigma
        .iter()
        .map(|s| {
            let theta = mu + tau * normal(rng);
            theta + s * normal(rng)
        })
        .collect();
    DataSet::new().with("y", Value::RealVec(y)).with("sigma", Value::RealVec(sigma))
}

fn gen_mixture(rng: &mut McRng, n: usize, weights: &[f64], means: &[f64], sd: f64) -> DataSet {
    let y = (0..n)
        .map(|_| {
            let mut u: f64 = rng.random();
            let mut k = 0;
            while k + 1 < weights.len() && u >= weights[k] {
                u -= weights[k];
                k += 1;
            }
            means[k] + sd * normal(rng)
        })
        .collect();
    DataSet::new().with("y", Value::RealVec(y))
}

fn gen_normal_mixture(rng: &mut McRng) -> DataSet {
    gen_mixture(rng, 100, &[0.4, 0.6], &[-3.0, 3.0], 1.0)
}

fn gen_dp_mixture(rng: &mut McRng) -> DataSet {
    gen_mixture(rng, 100, &[0.5, 0.5], &[-4.0, 4.0], 1.0)
}

fn gen_hmm(rng: &mut McRng) -> DataSet {
    let (t_len, stay, means, sd) = (100, 0.9, [-2.0, 2.0], 0.5);
    let mut state = usize::from(rng.random::<f64>() < 0.5);
    let y = (0..t_len)
        .map(|t| {
            if t > 0 && rng.random::<f64>() >= stay {
                state = 1 - state;
            }
            means[state] + sd * normal(rng)
        })
        .collect();
    DataSet::new().with("y", Value::RealVec(y))
}

fn gen_meta(rng: &mut McRng) -> DataSet {
    let (n, beta, omega) = (30, [0.5, 1.0], 0.3);
    let mut x = Vec::with_capacity(n * 2);
    let mut s2 = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let cov = normal(rng);
        let v = 0.05 + 0.2 * rng.random::<f64>();
        let mu = beta[0] + beta[1] * cov + omega * normal(rng);
        let obs = Normal::new(mu, v.sqrt()).expect("positive variance").sample(rng);
        x.extend([1.0, cov]);
        s2.push(v);
        y.push(obs);
    }
    DataSet::new()
        .with("X", Value::RealMat { rows: n, cols: 2, data: x })
        .with("s2", Value::RealVec(s2))
        .with("y", Value::RealVec(y))
}

pub const TEMPLATES: [Template; 7] = [
    Template { name: "linear_regression", source: LINEAR_REGRESSION, generate: gen_linear },
    Template { name: "eight_schools_centered", source: EIGHT_SCHOOLS_CENTERED, generate: gen_schools },
    Template { name: "eight_schools_noncentered", source: EIGHT_SCHOOLS_NONCENTERED, generate: gen_schools },
    Template { name: "normal_mixture", source: NORMAL_MIXTURE, generate: gen_normal_mixture },
    Template { name: "hmm_gaussian_2state", source: HMM_GAUSSIAN_2STATE, generate: gen_hmm },
    Template { name: "meta_regression", source: META_REGRESSION, generate: gen_meta },
    Template { name: "dp_mixture_truncated", source: DP_MIXTURE_TRUNCATED, generate: gen_dp_mixture },
];

pub fn template_names() -> Vec<&'static str> {
    TEMPLATES.iter().map(|t| t.name).collect()
}

/// Looks up a bundled template and parses its source.
pub fn load_template(name: &str) -> Result<(ModelSpec, Template)> {
    let t = TEMPLATES
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown template `{name}`; available: {}",
                template_names().join(", ")
            ))
        })?;
    Ok((t.spec()?, *t))
}
