use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Beta, Cauchy, Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::stateful::McRng;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
pub(crate) const SUM_TOL: f64 = 1e-12;

/// Factor kinds of the catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dist {
    Normal,
    Laplace,
    Cauchy,
    HalfCauchy,
    InvGamma,
    Gamma,
    Beta,
    Uniform,
    Dirichlet,
    Bernoulli,
    Categorical,
    Poisson,
    StickBreaking,
    Hmm,
}

/// How an argument is consumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgShape {
    Scalar,
    Vector,
    Matrix,
}

/// Support of the child a factor places density on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChildDomain {
    Real,
    Positive,
    UnitInterval,
    Bounded,
    Simplex,
    Binary,
    Category,
    Count,
    StatePath,
}

impl Dist {
    pub const ALL: [Dist; 14] = [
        Dist::Normal,
        Dist::Laplace,
        Dist::Cauchy,
        Dist::HalfCauchy,
        Dist::InvGamma,
        Dist::Gamma,
        Dist::Beta,
        Dist::Uniform,
        Dist::Dirichlet,
        Dist::Bernoulli,
        Dist::Categorical,
        Dist::Poisson,
        Dist::StickBreaking,
        Dist::Hmm,
    ];

    pub fn from_name(name: &str) -> Option<Dist> {
        Some(match name {
            "normal" => Dist::Normal,
            "laplace" => Dist::Laplace,
            "cauchy" => Dist::Cauchy,
            "half_cauchy" => Dist::HalfCauchy,
            "inv_gamma" => Dist::InvGamma,
            "gamma" => Dist::Gamma,
            "beta" => Dist::Beta,
            "uniform" => Dist::Uniform,
            "dirichlet" => Dist::Dirichlet,
            "bernoulli" => Dist::Bernoulli,
            "categorical" => Dist::Categorical,
            "poisson" => Dist::Poisson,
            "stick_breaking" => Dist::StickBreaking,
            "hmm" => Dist::Hmm,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Dist::Normal => "normal",
            Dist::Laplace => "laplace",
            Dist::Cauchy => "cauchy",
            Dist::HalfCauchy => "half_cauchy",
            Dist::InvGamma => "inv_gamma",
            Dist::Gamma => "gamma",
            Dist::Beta => "beta",
            Dist::Uniform => "uniform",
            Dist::Dirichlet => "dirichlet",
            Dist::Bernoulli => "bernoulli",
            Dist::Categorical => "categorical",
            Dist::Poisson => "poisson",
            Dist::StickBreaking => "stick_breaking",
            Dist::Hmm => "hmm",
        }
    }

    pub fn arg_shapes(self) -> &'static [ArgShape] {
        use ArgShape::*;
        match self {
            Dist::Normal
            | Dist::Laplace
            | Dist::Cauchy
            | Dist::HalfCauchy
            | Dist::InvGamma
            | Dist::Gamma
            | Dist::Beta
            | Dist::Uniform => &[Scalar, Scalar],
            Dist::Bernoulli | Dist::Poisson | Dist::StickBreaking => &[Scalar],
            Dist::Dirichlet | Dist::Categorical => &[Vector],
            Dist::Hmm => &[Vector, Matrix],
        }
    }

    /// True when the child is a whole vector rather than one scalar.
    pub fn is_vector_valued(self) -> bool {
        matches!(self, Dist::Dirichlet | Dist::StickBreaking | Dist::Hmm)
    }

    pub fn child_domain(self) -> ChildDomain {
        match self {
            Dist::Normal | Dist::Laplace | Dist::Cauchy => ChildDomain::Real,
            Dist::HalfCauchy | Dist::InvGamma | Dist::Gamma => ChildDomain::Positive,
            Dist::Beta => ChildDomain::UnitInterval,
            Dist::Uniform => ChildDomain::Bounded,
            Dist::Dirichlet | Dist::StickBreaking => ChildDomain::Simplex,
            Dist::Bernoulli => ChildDomain::Binary,
            Dist::Categorical => ChildDomain::Category,
            Dist::Poisson => ChildDomain::Count,
            Dist::Hmm => ChildDomain::StatePath,
        }
    }

    pub fn is_discrete(self) -> bool {
        matches!(
            self.child_domain(),
            ChildDomain::Binary | ChildDomain::Category | ChildDomain::Count | ChildDomain::StatePath
        )
    }

    /// Rejects probability vectors whose sums are off by more than the tolerance.
    pub fn check_normalization(self, x: &[f64], args: &[&[f64]]) -> Result<(), String> {
        let check = |v: &[f64], what: &str| {
            let s: f64 = v.iter().sum();
            if (s - 1.0).abs() > SUM_TOL {
                Err(format!("{what} sums to {s}, not 1"))
            } else {
                Ok(())
            }
        };
        match self {
            Dist::Dirichlet => check(x, "simplex"),
            Dist::Categorical => check(args[0], "probability vector"),
            Dist::Hmm => {
                let k = args[0].len();
                check(args[0], "initial distribution")?;
                for row in args[1].chunks(k) {
                    check(row, "transition row")?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Log-density of `x` given argument values. Out-of-support children give
    /// `-inf`; invalid arguments give NaN.
    pub fn logpdf(self, x: &[f64], args: &[&[f64]]) -> f64 {
        self.eval(x, args, None)
    }

    /// Log-density plus its gradient, accumulated into `gx` and `gargs`.
    pub fn logpdf_grad(
        self,
        x: &[f64],
        args: &[&[f64]],
        gx: &mut [f64],
        gargs: &mut [&mut [f64]],
    ) -> f64 {
        self.eval(x, args, Some((gx, gargs)))
    }

    fn eval(
        self,
        x: &[f64],
        args: &[&[f64]],
        grad: Option<(&mut [f64], &mut [&mut [f64]])>,
    ) -> f64 {
        let a0 = |i: usize| args[i][0];
        match self {
            Dist::Normal => {
                let (v, m, s) = (x[0], a0(0), a0(1));
                if !(s > 0.0) {
                    return f64::NAN;
                }
                let z = (v - m) / s;
                if let Some((gx, ga)) = grad {
                    gx[0] -= z / s;
                    ga[0][0] += z / s;
                    ga[1][0] += (z * z - 1.0) / s;
                }
                -LN_SQRT_2PI - s.ln() - 0.5 * z * z
            }
            Dist::Laplace => {
                let (v, m, b) = (x[0], a0(0), a0(1));
                if !(b > 0.0) {
                    return f64::NAN;
                }
                let d = v - m;
                if let Some((gx, ga)) = grad {
                    let sg = d.signum() * (d != 0.0) as u8 as f64;
                    gx[0] -= sg / b;
                    ga[0][0] += sg / b;
                    ga[1][0] += -1.0 / b + d.abs() / (b * b);
                }
                -(2.0 * b).ln() - d.abs() / b
            }
            Dist::Cauchy | Dist::HalfCauchy => {
                let (v, m, s) = (x[0], a0(0), a0(1));
                if !(s > 0.0) {
                    return f64::NAN;
                }
                if self == Dist::HalfCauchy && v < m {
                    return f64::NEG_INFINITY;
                }
                let z = (v - m) / s;
                let q = 1.0 + z * z;
                if let Some((gx, ga)) = grad {
                    gx[0] -= 2.0 * z / (s * q);
                    ga[0][0] += 2.0 * z / (s * q);
                    ga[1][0] += -1.0 / s + 2.0 * z * z / (s * q);
                }
                let half = if self == Dist::HalfCauchy { 2f64.ln() } else { 0.0 };
                half - (PI * s).ln() - q.ln()
            }
            Dist::InvGamma => {
                let (v, a, b) = (x[0], a0(0), a0(1));
                if !(a > 0.0 && b > 0.0) {
                    return f64::NAN;
                }
                if v <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                if let Some((gx, ga)) = grad {
                    gx[0] += -(a + 1.0) / v + b / (v * v);
                    ga[0][0] += b.ln() - digamma(a) - v.ln();
                    ga[1][0] += a / b - 1.0 / v;
                }
                a * b.ln() - ln_gamma(a) - (a + 1.0) * v.ln() - b / v
            }
            Dist::Gamma => {
                let (v, a, b) = (x[0], a0(0), a0(1));
                if !(a > 0.0 && b > 0.0) {
                    return f64::NAN;
                }
                if v <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                if let Some((gx, ga)) = grad {
                    gx[0] += (a - 1.0) / v - b;
                    ga[0][0] += b.ln() - digamma(a) + v.ln();
                    ga[1][0] += a / b - v;
                }
                a * b.ln() - ln_gamma(a) + (a - 1.0) * v.ln() - b * v
            }
            Dist::Beta => {
                let (v, a, b) = (x[0], a0(0), a0(1));
                if !(a > 0.0 && b > 0.0) {
                    return f64::NAN;
                }
                if v <= 0.0 || v >= 1.0 {
                    return f64::NEG_INFINITY;
                }
                if let Some((gx, ga)) = grad {
                    gx[0] += (a - 1.0) / v - (b - 1.0) / (1.0 - v);
                    ga[0][0] += digamma(a + b) - digamma(a) + v.ln();
                    ga[1][0] += digamma(a + b) - digamma(b) + (1.0 - v).ln();
                }
                ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
                    + (a - 1.0) * v.ln()
                    + (b - 1.0) * (1.0 - v).ln()
            }
            Dist::Uniform => {
                let (v, lo, hi) = (x[0], a0(0), a0(1));
                if !(hi > lo) {
                    return f64::NAN;
                }
                if v < lo || v > hi {
                    return f64::NEG_INFINITY;
                }
                if let Some((_, ga)) = grad {
                    ga[0][0] += 1.0 / (hi - lo);
                    ga[1][0] -= 1.0 / (hi - lo);
                }
                -(hi - lo).ln()
            }
            Dist::Dirichlet => {
                let alpha = args[0];
                if alpha.len() != x.len() || alpha.iter().any(|&a| !(a > 0.0)) {
                    return f64::NAN;
                }
                if x.iter().any(|&v| v < 0.0) {
                    return f64::NEG_INFINITY;
                }
                let total: f64 = alpha.iter().sum();
                let mut lp = ln_gamma(total);
                for (&v, &a) in x.iter().zip(alpha) {
                    lp -= ln_gamma(a);
                    if a != 1.0 {
                        lp += (a - 1.0) * v.ln();
                    }
                }
                if let Some((gx, ga)) = grad {
                    let dt = digamma(total);
                    for k in 0..x.len() {
                        gx[k] += (alpha[k] - 1.0) / x[k];
                        ga[0][k] += dt - digamma(alpha[k]) + x[k].ln();
                    }
                }
                lp
            }
            Dist::Bernoulli => {
                let (v, p) = (x[0], a0(0));
                if !(0.0..=1.0).contains(&p) {
                    return f64::NAN;
                }
                if v != 0.0 && v != 1.0 {
                    return f64::NEG_INFINITY;
                }
                if let Some((_, ga)) = grad {
                    ga[0][0] += if v == 1.0 { 1.0 / p } else { -1.0 / (1.0 - p) };
                }
                if v == 1.0 {
                    p.ln()
                } else {
                    (1.0 - p).ln()
                }
            }
            Dist::Categorical => {
                let w = args[0];
                if w.iter().any(|&p| p < 0.0) {
                    return f64::NAN;
                }
                let k = x[0];
                if k.fract() != 0.0 || k < 1.0 || k > w.len() as f64 {
                    return f64::NEG_INFINITY;
                }
                let k = k as usize - 1;
                if let Some((_, ga)) = grad {
                    ga[0][k] += 1.0 / w[k];
                }
                w[k].ln()
            }
            Dist::Poisson => {
                let (v, rate) = (x[0], a0(0));
                if !(rate > 0.0) {
                    return f64::NAN;
                }
                if v < 0.0 || v.fract() != 0.0 {
                    return f64::NEG_INFINITY;
                }
                if let Some((_, ga)) = grad {
                    ga[0][0] += v / rate - 1.0;
                }
                v * rate.ln() - rate - ln_gamma(v + 1.0)
            }
            Dist::StickBreaking => {
                let alpha = a0(0);
                if !(alpha > 0.0) {
                    return f64::NAN;
                }
                let k = x.len();
                if x.iter().any(|&v| v < 0.0) {
                    return f64::NEG_INFINITY;
                }
                if k == 1 {
                    return 0.0;
                }
                let last = x[k - 1];
                let mut lp = (k as f64 - 1.0) * alpha.ln();
                if alpha != 1.0 {
                    lp += (alpha - 1.0) * last.ln();
                }
                // Partial sums S_1..S_{K-2}.
                let mut partial = Vec::with_capacity(k.saturating_sub(2));
                let mut s = 0.0;
                for &v in &x[..k - 2] {
                    s += v;
                    partial.push(s);
                    lp -= (1.0 - s).ln();
                }
                if let Some((gx, ga)) = grad {
                    gx[k - 1] += (alpha - 1.0) / last;
                    let mut tail = 0.0;
                    for j in (0..k - 2).rev() {
                        tail += 1.0 / (1.0 - partial[j]);
                        gx[j] += tail;
                    }
                    ga[0][0] += (k as f64 - 1.0) / alpha + last.ln();
                }
                lp
            }
            Dist::Hmm => {
                let init = args[0];
                let trans = args[1];
                let k = init.len();
                if trans.len() != k * k || init.iter().chain(trans).any(|&p| p < 0.0) {
                    return f64::NAN;
                }
                let mut states = Vec::with_capacity(x.len());
                for &v in x {
                    if v.fract() != 0.0 || v < 1.0 || v > k as f64 {
                        return f64::NEG_INFINITY;
                    }
                    states.push(v as usize - 1);
                }
                let Some(&first) = states.first() else {
                    return 0.0;
                };
                let mut lp = init[first].ln();
                for w in states.windows(2) {
                    lp += trans[w[0] * k + w[1]].ln();
                }
                if let Some((_, ga)) = grad {
                    ga[0][first] += 1.0 / init[first];
                    for w in states.windows(2) {
                        let idx = w[0] * k + w[1];
                        ga[1][idx] += 1.0 / trans[idx];
                    }
                }
                lp
            }
        }
    }

    /// Draws a child value of length `len` (only used by vector-valued kinds).
    pub fn sample(self, args: &[&[f64]], len: usize, rng: &mut McRng) -> Result<Vec<f64>, String> {
        let a0 = |i: usize| args[i][0];
        let bad = || format!("invalid arguments for {}", self.name());
        let one = |v: f64| Ok(vec![v]);
        match self {
            Dist::Normal => {
                let z: f64 = rng.sample(StandardNormal);
                one(a0(0) + a0(1) * z)
            }
            Dist::Laplace => {
                let u: f64 = rng.random::<f64>() - 0.5;
                one(a0(0) - a0(1) * u.signum() * (1.0 - 2.0 * u.abs()).ln())
            }
            Dist::Cauchy => {
                let c = Cauchy::new(a0(0), a0(1)).map_err(|_| bad())?;
                one(c.sample(rng))
            }
            Dist::HalfCauchy => {
                let c = Cauchy::new(0.0, a0(1)).map_err(|_| bad())?;
                one(a0(0) + c.sample(rng).abs())
            }
            Dist::InvGamma => {
                let g = Gamma::new(a0(0), 1.0 / a0(1)).map_err(|_| bad())?;
                one(1.0 / g.sample(rng))
            }
            Dist::Gamma => {
                let g = Gamma::new(a0(0), 1.0 / a0(1)).map_err(|_| bad())?;
                one(g.sample(rng))
            }
            Dist::Beta => {
                let b = Beta::new(a0(0), a0(1)).map_err(|_| bad())?;
                one(b.sample(rng))
            }
            Dist::Uniform => {
                let u: f64 = rng.random();
                one(a0(0) + (a0(1) - a0(0)) * u)
            }
            Dist::Dirichlet => dirichlet_draw(args[0], rng).ok_or_else(bad),
            Dist::Bernoulli => {
                let u: f64 = rng.random();
                one(if u < a0(0) { 1.0 } else { 0.0 })
            }
            Dist::Categorical => one(categorical_draw(args[0], rng) as f64 + 1.0),
            Dist::Poisson => {
                let p = Poisson::new(a0(0)).map_err(|_| bad())?;
                one(p.sample(rng))
            }
            Dist::StickBreaking => {
                let alpha = a0(0);
                let stick = Beta::new(1.0, alpha).map_err(|_| bad())?;
                let mut w = Vec::with_capacity(len);
                let mut rest = 1.0;
                for _ in 0..len.saturating_sub(1) {
                    let v: f64 = stick.sample(rng);
                    w.push(rest * v);
                    rest *= 1.0 - v;
                }
                w.push(rest);
                Ok(w)
            }
            Dist::Hmm => {
                let init = args[0];
                let k = init.len();
                let mut path = Vec::with_capacity(len);
                let mut state = categorical_draw(init, rng);
                for t in 0..len {
                    if t > 0 {
                        state = categorical_draw(&args[1][state * k..(state + 1) * k], rng);
                    }
                    path.push(state as f64 + 1.0);
                }
                Ok(path)
            }
        }
    }
}

fn categorical_draw(p: &[f64], rng: &mut McRng) -> usize {
    let total: f64 = p.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, &w) in p.iter().enumerate() {
        if u < w {
            return k;
        }
        u -= w;
    }
    p.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

pub(crate) fn dirichlet_draw(alpha: &[f64], rng: &mut McRng) -> Option<Vec<f64>> {
    let mut g = Vec::with_capacity(alpha.len());
    for &a in alpha {
        g.push(Gamma::new(a, 1.0).ok()?.sample(rng));
    }
    let total: f64 = g.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    g.iter_mut().for_each(|v| *v /= total);
    Some(g)
}
