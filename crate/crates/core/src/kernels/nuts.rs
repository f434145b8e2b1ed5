use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stateful::McRng;

/// A differentiable log-density in unconstrained coordinates.
pub trait Potential {
    fn dim(&self) -> usize;
    /// Log-density at `q`, writing its gradient into `grad`.
    fn logp_grad(&mut self, q: &[f64], grad: &mut [f64]) -> Result<f64>;
}

/// Adapts a closure into a [`Potential`].
pub struct FnPotential<F> {
    dim: usize,
    f: F,
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> FnPotential<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> Potential for FnPotential<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn logp_grad(&mut self, q: &[f64], grad: &mut [f64]) -> Result<f64> {
        Ok((self.f)(q, grad))
    }
}

/// A point in phase space with its cached density and gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub logp: f64,
}

impl Phase {
    pub fn at(q: &[f64], target: &mut dyn Potential) -> Result<Phase> {
        let mut grad = vec![0.0; q.len()];
        let logp = target.logp_grad(q, &mut grad)?;
        Ok(Phase {
            q: q.to_vec(),
            p: vec![0.0; q.len()],
            grad,
            logp,
        })
    }

    pub fn kinetic(&self, inv_metric: &[f64]) -> f64 {
        0.5 * self.p.iter().zip(inv_metric).map(|(p, m)| p * p * m).sum::<f64>()
    }

    pub fn hamiltonian(&self, inv_metric: &[f64]) -> f64 {
        -self.logp + self.kinetic(inv_metric)
    }

    fn sharp(&self, inv_metric: &[f64]) -> Vec<f64> {
        self.p.iter().zip(inv_metric).map(|(p, m)| p * m).collect()
    }
}

/// One leapfrog step of size `eps`. Returns `false` when the density or
/// gradient at the new point is not finite (a divergence); a target error
/// counts as a divergence too.
pub fn leapfrog(z: &mut Phase, eps: f64, inv_metric: &[f64], target: &mut dyn Potential) -> bool {
    for (p, g) in z.p.iter_mut().zip(&z.grad) {
        *p += 0.5 * eps * g;
    }
    for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(inv_metric) {
        *q += eps * m * p;
    }
    z.logp = target.logp_grad(&z.q, &mut z.grad).unwrap_or(f64::NAN);
    for (p, g) in z.p.iter_mut().zip(&z.grad) {
        *p += 0.5 * eps * g;
    }
    z.logp.is_finite() && z.grad.iter().all(|g| g.is_finite())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NutsSettings {
    pub target_accept: f64,
    pub gamma: f64,
    pub t0: f64,
    pub kappa: f64,
    pub max_depth: usize,
    pub max_delta_h: f64,
    pub warmup: u64,
}

impl Default for NutsSettings {
    fn default() -> Self {
        Self {
            target_accept: 0.8,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            max_depth: 10,
            max_delta_h: 1000.0,
            warmup: 1000,
        }
    }
}

/// Dual-averaging accumulators for the step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualAveraging {
    pub mu: f64,
    pub s_bar: f64,
    pub x_bar: f64,
    pub counter: f64,
}

impl DualAveraging {
    fn restart(eps: f64) -> Self {
        Self {
            mu: (10.0 * eps).ln(),
            s_bar: 0.0,
            x_bar: 0.0,
            counter: 0.0,
        }
    }

    fn learn(&mut self, accept: f64, s: &NutsSettings) -> f64 {
        self.counter += 1.0;
        let accept = accept.min(1.0);
        let eta = 1.0 / (self.counter + s.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (s.target_accept - accept);
        let x = self.mu - self.s_bar * self.counter.sqrt() / s.gamma;
        let w = self.counter.powf(-s.kappa);
        self.x_bar = (1.0 - w) * self.x_bar + w * x;
        x.exp()
    }
}

/// Running mean and variance for metric estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Welford {
    pub n: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn add(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    /// Sample variance shrunk towards 1e-3, as a diagonal inverse metric.
    fn regularized(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.m2
            .iter()
            .map(|s| (n / (n + 5.0)) * (s / (n - 1.0)) + 1e-3 * (5.0 / (n + 5.0)))
            .collect()
    }
}

/// Adaptation and integration state of a NUTS kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NutsState {
    pub settings: NutsSettings,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    pub dual: DualAveraging,
    pub welford: Welford,
    /// Transitions taken so far.
    pub iteration: u64,
    pub warmup_done: bool,
    pub initialized: bool,
    pub divergences: u64,
}

/// Per-transition diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NutsInfo {
    pub accept_stat: f64,
    pub depth: usize,
    pub leapfrogs: usize,
    pub divergent: bool,
}

struct Subtree {
    p_beg: Vec<f64>,
    p_end: Vec<f64>,
    sharp_beg: Vec<f64>,
    sharp_end: Vec<f64>,
    rho: Vec<f64>,
    log_w: f64,
    sample: Phase,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn no_uturn(sharp_a: &[f64], sharp_b: &[f64], rho: &[f64]) -> bool {
    dot(sharp_a, rho) > 0.0 && dot(sharp_b, rho) > 0.0
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

struct Walk<'a> {
    target: &'a mut dyn Potential,
    inv_metric: &'a [f64],
    eps: f64,
    h0: f64,
    max_delta_h: f64,
    leapfrogs: usize,
    metro_sum: f64,
    divergent: bool,
}

impl Walk<'_> {
    /// Extends the trajectory from `z` by 2^depth steps. `None` when the
    /// subtree diverged or turned back on itself.
    fn build(&mut self, z: &mut Phase, depth: usize, rng: &mut McRng) -> Option<Subtree> {
        if depth == 0 {
            let ok = leapfrog(z, self.eps, self.inv_metric, self.target);
            self.leapfrogs += 1;
            let mut h = z.hamiltonian(self.inv_metric);
            if !ok || h.is_nan() {
                h = f64::INFINITY;
            }
            if h - self.h0 > self.max_delta_h {
                self.divergent = true;
                return None;
            }
            let log_w = self.h0 - h;
            self.metro_sum += if log_w > 0.0 { 1.0 } else { log_w.exp() };
            let sharp = z.sharp(self.inv_metric);
            return Some(Subtree {
                p_beg: z.p.clone(),
                p_end: z.p.clone(),
                sharp_beg: sharp.clone(),
                sharp_end: sharp,
                rho: z.p.clone(),
                log_w,
                sample: z.clone(),
            });
        }
        let init = self.build(z, depth - 1, rng)?;
        let fin = self.build(z, depth - 1, rng)?;
        let log_w = log_add(init.log_w, fin.log_w);
        let take_final = fin.log_w > log_w || rng.random::<f64>() < (fin.log_w - log_w).exp();
        let rho = add(&init.rho, &fin.rho);
        let persist = no_uturn(&init.sharp_beg, &fin.sharp_end, &rho)
            && no_uturn(&init.sharp_beg, &fin.sharp_beg, &add(&init.rho, &fin.p_beg))
            && no_uturn(&init.sharp_end, &fin.sharp_end, &add(&fin.rho, &init.p_end));
        if !persist {
            return None;
        }
        Some(Subtree {
            p_beg: init.p_beg,
            p_end: fin.p_end,
            sharp_beg: init.sharp_beg,
            sharp_end: fin.sharp_end,
            rho,
            log_w,
            sample: if take_final { fin.sample } else { init.sample },
        })
    }
}

impl NutsState {
    pub fn new(dim: usize, settings: NutsSettings) -> Self {
        Self {
            settings,
            step_size: 1.0,
            inv_metric: vec![1.0; dim],
            dual: DualAveraging::restart(1.0),
            welford: Welford::new(dim),
            iteration: 0,
            warmup_done: settings.warmup == 0,
            initialized: false,
            divergences: 0,
        }
    }

    fn draw_momentum(&self, z: &mut Phase, rng: &mut McRng) {
        for (p, m) in z.p.iter_mut().zip(&self.inv_metric) {
            let n: f64 = rng.sample(StandardNormal);
            *p = n / m.sqrt();
        }
    }

    /// Doubles or halves the step size until one leapfrog step's acceptance crosses 0.8.
    fn init_step_size(&mut self, start: &Phase, target: &mut dyn Potential, rng: &mut McRng) -> Result<()> {
        let log_target = 0.8f64.ln();
        let mut trial = |eps: f64, rng: &mut McRng| {
            let mut z = start.clone();
            self.draw_momentum(&mut z, rng);
            let h0 = z.hamiltonian(&self.inv_metric);
            leapfrog(&mut z, eps, &self.inv_metric, target);
            let mut h = z.hamiltonian(&self.inv_metric);
            if h.is_nan() {
                h = f64::INFINITY;
            }
            h0 - h
        };
        let mut eps = self.step_size;
        let direction = if trial(eps, rng) > log_target { 1.0 } else { -1.0 };
        loop {
            let delta = trial(eps, rng);
            if direction > 0.0 && !(delta > log_target) || direction < 0.0 && !(delta < log_target) {
                break;
            }
            eps = if direction > 0.0 { 2.0 * eps } else { 0.5 * eps };
            if eps > 1e7 || eps < 1e-300 {
                return Err(Error::Numerical(format!(
                    "step size search diverged (epsilon = {eps:e}); the posterior may be improper"
                )));
            }
        }
        self.step_size = eps;
        Ok(())
    }

    /// One NUTS transition from `q`, adapting during warmup.
    pub fn transition(&mut self, q: &mut [f64], target: &mut dyn Potential, rng: &mut McRng) -> Result<NutsInfo> {
        let start = Phase::at(q, target)?;
        if !start.logp.is_finite() || start.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!(
                "log-density or gradient is not finite at the current point (log p = {})",
                start.logp
            )));
        }
        let snapshot = self.clone();
        let result = self.transition_from(start, q, target, rng);
        if result.is_err() {
            *self = snapshot;
        }
        result
    }

    fn transition_from(&mut self, start: Phase, q: &mut [f64], target: &mut dyn Potential, rng: &mut McRng) -> Result<NutsInfo> {
        if !self.initialized {
            self.init_step_size(&start, target, rng)?;
            self.dual = DualAveraging::restart(self.step_size);
            self.initialized = true;
        }
        let s = self.settings;
        let mut z0 = start;
        self.draw_momentum(&mut z0, rng);
        let h0 = z0.hamiltonian(&self.inv_metric);
        let sharp0 = z0.sharp(&self.inv_metric);
        let mut fwd = z0.clone();
        let mut bck = z0.clone();
        let (mut p_fwd, mut sharp_fwd) = (z0.p.clone(), sharp0.clone());
        let (mut p_bck, mut sharp_bck) = (z0.p.clone(), sharp0);
        let mut rho = z0.p.clone();
        let mut log_w = 0.0;
        let mut sample = z0;
        let inv = self.inv_metric.clone();
        let mut walk = Walk {
            target,
            inv_metric: &inv,
            eps: self.step_size,
            h0,
            max_delta_h: s.max_delta_h,
            leapfrogs: 0,
            metro_sum: 0.0,
            divergent: false,
        };
        let mut depth = 0;
        while depth < s.max_depth {
            let forward = rng.random::<f64>() > 0.5;
            walk.eps = if forward { self.step_size } else { -self.step_size };
            let sub = if forward {
                walk.build(&mut fwd, depth, rng)
            } else {
                walk.build(&mut bck, depth, rng)
            };
            let Some(sub) = sub else { break };
            depth += 1;
            if sub.log_w > log_w || rng.random::<f64>() < (sub.log_w - log_w).exp() {
                sample = sub.sample.clone();
            }
            log_w = log_add(log_w, sub.log_w);
            // (bck part, fwd part) of the merged trajectory.
            let (rho_b, rho_f, p_bf, sharp_bf, p_fb, sharp_fb, sharp_bb, sharp_ff);
            if forward {
                (rho_b, rho_f) = (rho.clone(), sub.rho.clone());
                (p_bf, sharp_bf) = (p_fwd.clone(), sharp_fwd.clone());
                (p_fb, sharp_fb) = (sub.p_beg.clone(), sub.sharp_beg.clone());
                sharp_bb = sharp_bck.clone();
                sharp_ff = sub.sharp_end.clone();
                p_fwd = sub.p_end;
                sharp_fwd = sub.sharp_end;
            } else {
                (rho_b, rho_f) = (sub.rho.clone(), rho.clone());
                (p_bf, sharp_bf) = (sub.p_beg.clone(), sub.sharp_beg.clone());
                (p_fb, sharp_fb) = (p_bck.clone(), sharp_bck.clone());
                sharp_bb = sub.sharp_end.clone();
                sharp_ff = sharp_fwd.clone();
                p_bck = sub.p_end;
                sharp_bck = sub.sharp_end;
            }
            rho = add(&rho_b, &rho_f);
            let persist = no_uturn(&sharp_bb, &sharp_ff, &rho)
                && no_uturn(&sharp_bb, &sharp_fb, &add(&rho_b, &p_fb))
                && no_uturn(&sharp_bf, &sharp_ff, &add(&rho_f, &p_bf));
            if !persist {
                break;
            }
        }
        let info = NutsInfo {
            accept_stat: if walk.leapfrogs > 0 { walk.metro_sum / walk.leapfrogs as f64 } else { 0.0 },
            depth,
            leapfrogs: walk.leapfrogs,
            divergent: walk.divergent,
        };
        q.copy_from_slice(&sample.q);
        if info.divergent {
            self.divergences += 1;
        }
        if !self.warmup_done {
            self.adapt(info.accept_stat, &sample, walk.target, rng)?;
        }
        self.iteration += 1;
        Ok(info)
    }

    /// Warmup schedule: step size adapts throughout; the metric is estimated
    /// over `[W/2, 3W/4)` and the step size is then re-tuned until `W`.
    fn adapt(&mut self, accept: f64, at: &Phase, target: &mut dyn Potential, rng: &mut McRng) -> Result<()> {
        let w = self.settings.warmup;
        let m = self.iteration;
        self.step_size = self.dual.learn(accept, &self.settings);
        let (lo, hi) = (w / 2, 3 * w / 4);
        if m >= lo && m < hi {
            self.welford.add(&at.q);
        }
        if m + 1 == hi && self.welford.n >= 3 {
            self.inv_metric = self.welford.regularized();
            self.welford = Welford::new(self.inv_metric.len());
            let mut fresh = at.clone();
            fresh.p.fill(0.0);
            self.init_step_size(&fresh, target, rng)?;
            self.dual = DualAveraging::restart(self.step_size);
        }
        if m + 1 >= w {
            self.step_size = self.dual.x_bar.exp();
            self.warmup_done = true;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stateful::substream;

    fn std_normal() -> impl Potential {
        FnPotential::new(1, |q: &[f64], g: &mut [f64]| {
            g[0] = -q[0];
            -0.5 * q[0] * q[0]
        })
    }

    #[test]
    fn leapfrog_hand_arithmetic() {
        let mut t = std_normal();
        let mut z = Phase::at(&[0.0], &mut t).unwrap();
        z.p[0] = 1.0;
        assert!(leapfrog(&mut z, 0.1, &[1.0], &mut t));
        assert!((z.q[0] - 0.1).abs() < 1e-15);
        assert!((z.p[0] - 0.995).abs() < 1e-15);
    }

    #[test]
    fn zero_step_is_identity() {
        let mut t = std_normal();
        let mut z = Phase::at(&[0.3], &mut t).unwrap();
        z.p[0] = -0.7;
        let before = z.clone();
        leapfrog(&mut z, 0.0, &[1.0], &mut t);
        assert_eq!(z, before);
    }

    #[test]
    fn adaptation_freezes() {
        let mut t = std_normal();
        let mut s = NutsState::new(1, NutsSettings { warmup: 100, ..Default::default() });
        let mut rng = substream(3, 0);
        let mut q = [0.5];
        for _ in 0..100 {
            s.transition(&mut q, &mut t, &mut rng).unwrap();
        }
        assert!(s.warmup_done);
        let (eps, metric) = (s.step_size, s.inv_metric.clone());
        for _ in 0..100 {
            s.transition(&mut q, &mut t, &mut rng).unwrap();
        }
        assert_eq!(eps.to_bits(), s.step_size.to_bits());
        assert_eq!(metric, s.inv_metric);
    }
}
