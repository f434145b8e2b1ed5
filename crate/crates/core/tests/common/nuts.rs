use blockmc::kernels::{FnPotential, NutsSettings, NutsState};
use blockmc::stateful::substream;
use rand::Rng;

pub fn correlated_normal(rho: f64) -> impl FnMut(&[f64], &mut [f64]) -> f64 {
    let d = 1.0 - rho * rho;
    move |q: &[f64], g: &mut [f64]| {
        g[0] = -(q[0] - rho * q[1]) / d;
        g[1] = -(q[1] - rho * q[0]) / d;
        -0.5 * (q[0] * q[0] - 2.0 * rho * q[0] * q[1] + q[1] * q[1]) / d
    }
}

pub struct NutsRun {
    pub draws: Vec<Vec<f64>>,
    pub frozen: bool,
}

pub fn nuts_chain(rho: f64, seed: u64, chain: u64, warmup: u64, keep: usize) -> NutsRun {
    let mut target = FnPotential::new(2, correlated_normal(rho));
    let mut state = NutsState::new(2, NutsSettings { warmup, ..Default::default() });
    let mut rng = substream(seed, 2 + chain);
    let mut q = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
    for _ in 0..warmup {
        state.transition(&mut q, &mut target, &mut rng).unwrap();
    }
    let (eps, metric) = (state.step_size.to_bits(), state.inv_metric.clone());
    let mut draws = vec![Vec::with_capacity(keep), Vec::with_capacity(keep)];
    for _ in 0..keep {
        state.transition(&mut q, &mut target, &mut rng).unwrap();
        draws[0].push(q[0]);
        draws[1].push(q[1]);
    }
    NutsRun {
        draws,
        frozen: state.step_size.to_bits() == eps && state.inv_metric == metric,
    }
}
