//! Reference log-densities and finite-difference gradients for every factor kind.

use blockmc::graph::Dist;
use blockmc::stateful::McRng;
use rand::Rng;
use statrs::distribution::{
    Bernoulli, Beta, Categorical, Cauchy, Continuous, Discrete, Gamma, InverseGamma, Laplace, Normal, Poisson, Uniform,
};
use statrs::function::gamma::ln_gamma;

/// A child value and its arguments, inside the support.
#[derive(Debug, Clone)]
pub struct Case {
    pub x: Vec<f64>,
    pub args: Vec<Vec<f64>>,
}

fn simplex(rng: &mut McRng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.1).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

pub fn random_case(d: Dist, rng: &mut McRng) -> Case {
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let (x, args) = match d {
        Dist::Normal | Dist::Laplace | Dist::Cauchy => (vec![u(-3.0, 3.0)], vec![vec![u(-2.0, 2.0)], vec![u(0.3, 3.0)]]),
        Dist::HalfCauchy => {
            let m = u(-1.0, 1.0);
            (vec![m + u(0.1, 3.0)], vec![vec![m], vec![u(0.3, 3.0)]])
        }
        Dist::InvGamma | Dist::Gamma => (vec![u(0.2, 4.0)], vec![vec![u(0.5, 5.0)], vec![u(0.5, 3.0)]]),
        Dist::Beta => (vec![u(0.05, 0.95)], vec![vec![u(0.5, 5.0)], vec![u(0.5, 5.0)]]),
        Dist::Uniform => {
            let (lo, hi) = (u(-2.0, 0.0), u(1.0, 3.0));
            (vec![u(lo, hi)], vec![vec![lo], vec![hi]])
        }
        Dist::Bernoulli => (vec![f64::from(u8::from(u(0.0, 1.0) < 0.5))], vec![vec![u(0.1, 0.9)]]),
        Dist::Poisson => (vec![u(0.0, 11.0).floor()], vec![vec![u(0.3, 6.0)]]),
        Dist::Dirichlet => {
            let alpha = (0..3).map(|_| u(0.5, 4.0)).collect();
            (simplex(rng, 3), vec![alpha])
        }
        Dist::Categorical => {
            let k = rng.random_range(1..=4) as f64;
            (vec![k], vec![simplex(rng, 4)])
        }
        Dist::StickBreaking => {
            let alpha = u(0.3, 3.0);
            (simplex(rng, 4), vec![vec![alpha]])
        }
        Dist::Hmm => {
            let path = (0..5).map(|_| rng.random_range(1..=2) as f64).collect();
            let init = simplex(rng, 2);
            let trans = [simplex(rng, 2), simplex(rng, 2)].concat();
            (path, vec![init, trans])
        }
    };
    Case { x, args }
}

/// Log-density written from the textbook form, mostly via `statrs`.
pub fn reference_logpdf(d: Dist, c: &Case) -> f64 {
    let x = c.x[0];
    let a = |i: usize| c.args[i][0];
    match d {
        Dist::Normal => Normal::new(a(0), a(1)).unwrap().ln_pdf(x),
        Dist::Laplace => Laplace::new(a(0), a(1)).unwrap().ln_pdf(x),
        Dist::Cauchy => Cauchy::new(a(0), a(1)).unwrap().ln_pdf(x),
        Dist::HalfCauchy => 2f64.ln() + Cauchy::new(a(0), a(1)).unwrap().ln_pdf(x),
        Dist::InvGamma => InverseGamma::new(a(0), a(1)).unwrap().ln_pdf(x),
        Dist::Gamma => Gamma::new(a(0), a(1)).unwrap().ln_pdf(x),
        Dist::Beta => Beta::new(a(0), a(1)).unwrap().ln_pdf(x),
        Dist::Uniform => Uniform::new(a(0), a(1)).unwrap().ln_pdf(x),
        Dist::Bernoulli => Bernoulli::new(a(0)).unwrap().ln_pmf(x as u64),
        Dist::Poisson => Poisson::new(a(0)).unwrap().ln_pmf(x as u64),
        Dist::Categorical => Categorical::new(&c.args[0]).unwrap().ln_pmf(x as u64 - 1),
        Dist::Dirichlet => {
            let alpha = &c.args[0];
            let total: f64 = alpha.iter().sum();
            ln_gamma(total)
                + alpha
                    .iter()
                    .zip(&c.x)
                    .map(|(&al, &v)| (al - 1.0) * v.ln() - ln_gamma(al))
                    .sum::<f64>()
        }
        Dist::StickBreaking => {
            // Beta(1, alpha) sticks v_j = w_j / (1 - S_{j-1}) times the Jacobian of w -> v.
            let alpha = a(0);
            let stick = Beta::new(1.0, alpha).unwrap();
            let k = c.x.len();
            let mut rest = 1.0;
            let mut lp = 0.0;
            for &w in &c.x[..k - 1] {
                lp += stick.ln_pdf(w / rest) - rest.ln();
                rest -= w;
            }
            lp
        }
        Dist::Hmm => {
            let (init, trans) = (&c.args[0], &c.args[1]);
            let s: Vec<usize> = c.x.iter().map(|&v| v as usize - 1).collect();
            init[s[0]].ln() + s.windows(2).map(|w| trans[w[0] * 2 + w[1]].ln()).sum::<f64>()
        }
    }
}

/// Largest relative disagreement between the analytic gradient (child and
/// every argument element) and central differences of `logpdf`.
pub fn gradient_error(d: Dist, c: &Case) -> f64 {
    let refs: Vec<&[f64]> = c.args.iter().map(Vec::as_slice).collect();
    let mut gx = vec![0.0; c.x.len()];
    let mut ga: Vec<Vec<f64>> = c.args.iter().map(|a| vec![0.0; a.len()]).collect();
    {
        let mut slots: Vec<&mut [f64]> = ga.iter_mut().map(Vec::as_mut_slice).collect();
        d.logpdf_grad(&c.x, &refs, &mut gx, &mut slots);
    }
    let rel = |analytic: f64, numeric: f64| (analytic - numeric).abs() / numeric.abs().max(1.0);
    let central = |f: &dyn Fn(f64) -> f64, v: f64| {
        let h = 1e-5 * v.abs().max(1.0);
        (f(v + h) - f(v - h)) / (2.0 * h)
    };
    let mut worst: f64 = 0.0;
    if !d.is_discrete() {
        for i in 0..c.x.len() {
            let f = |v: f64| {
                let mut x = c.x.clone();
                x[i] = v;
                d.logpdf(&x, &refs)
            };
            worst = worst.max(rel(gx[i], central(&f, c.x[i])));
        }
    }
    for (ai, arg) in c.args.iter().enumerate() {
        for j in 0..arg.len() {
            let f = |v: f64| {
                let mut args = c.args.clone();
                args[ai][j] = v;
                let r: Vec<&[f64]> = args.iter().map(Vec::as_slice).collect();
                d.logpdf(&c.x, &r)
            };
            worst = worst.max(rel(ga[ai][j], central(&f, arg[j])));
        }
    }
    worst
}
