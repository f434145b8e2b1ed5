use blockmc::stateful::McRng;
use rand::Rng;

/// A random HMM as (log_init, log_trans, log_emit).
pub fn random_hmm(rng: &mut McRng, k: usize, t: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let simplex = |rng: &mut McRng| {
        let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| (x / s).ln()).collect::<Vec<_>>()
    };
    let init = simplex(rng);
    let trans = (0..k).flat_map(|_| simplex(rng)).collect();
    let emit = (0..k * t).map(|_| rng.random_range(-3.0..0.5)).collect();
    (init, trans, emit)
}

/// Log joint of every state path, indexed by the path read as base-K digits (first state most significant).
pub fn enumerate_paths(init: &[f64], trans: &[f64], emit: &[f64], k: usize, t: usize) -> Vec<f64> {
    (0..k.pow(t as u32))
        .map(|code| {
            let mut path = vec![0; t];
            let mut c = code;
            for s in path.iter_mut().rev() {
                *s = c % k;
                c /= k;
            }
            let mut lp = init[path[0]] + emit[path[0]];
            for i in 1..t {
                lp += trans[path[i - 1] * k + path[i]] + emit[i * k + path[i]];
            }
            lp
        })
        .collect()
}
