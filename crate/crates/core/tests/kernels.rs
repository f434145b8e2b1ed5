mod common;

use blockmc::kernels::{
    ffbs_hmm, gibbs_beta, gibbs_dirichlet, gibbs_gamma_poisson, gibbs_inv_gamma, gibbs_normal_mean, hmm_log_marginal,
    leapfrog, sample_binary_vector, sample_categorical, slice_step_univariate, stick_breaking_update, FnPotential,
    NutsSettings, NutsState, Phase, SliceSettings, Transform,
};
use blockmc::stateful::substream;
use blockmc::validation::rank_normalized_rhat;
use common::hmm::{enumerate_paths, random_hmm};
use common::nuts::{correlated_normal, nuts_chain, NutsRun};
use proptest::prelude::*;
use rand::Rng;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

fn draws(n: usize, mut f: impl FnMut() -> f64) -> Vec<f64> {
    (0..n).map(|_| f()).collect()
}

#[test]
fn normal_mean_matches_closed_form_posterior() {
    let mut rng = substream(11, 0);
    let xs = draws(20_000, || gibbs_normal_mean(0.0, 1.0, 2.0, 1, 1.0, &mut rng).unwrap());
    assert!((mean(&xs) - 1.0).abs() < 3.0 * (0.5f64 / 20_000.0).sqrt());
    assert!((var(&xs) / 0.5 - 1.0).abs() < 0.05);
}

#[test]
fn inverse_gamma_posterior_mean() {
    // shape 3 + 4/2 = 5, rate 2 + 4/2 = 4, mean 4 / (5 - 1) = 1
    let mut rng = substream(12, 0);
    let xs = draws(20_000, || gibbs_inv_gamma(3.0, 2.0, 4.0, 4, &mut rng).unwrap());
    assert!((mean(&xs) - 1.0).abs() < 0.03);
}

#[test]
fn beta_and_gamma_posterior_means() {
    let mut rng = substream(13, 0);
    let b = draws(20_000, || gibbs_beta(2.0, 3.0, 7.0, 8.0, &mut rng).unwrap());
    assert!((mean(&b) - 9.0 / 20.0).abs() < 0.005);
    let g = draws(20_000, || gibbs_gamma_poisson(2.0, 1.0, 18.0, 4, &mut rng).unwrap());
    assert!((mean(&g) - 4.0).abs() < 0.05);
}

#[test]
fn dirichlet_posterior_means() {
    let mut rng = substream(14, 0);
    let mut acc = [0.0; 3];
    for _ in 0..20_000 {
        let w = gibbs_dirichlet(&[1.0, 1.0, 1.0], &[3.0, 0.0, 5.0], &mut rng).unwrap();
        for (a, x) in acc.iter_mut().zip(&w) {
            *a += x / 20_000.0;
        }
    }
    for (a, want) in acc.iter().zip([4.0 / 11.0, 1.0 / 11.0, 6.0 / 11.0]) {
        assert!((a - want).abs() < 0.005, "{acc:?}");
    }
}

#[test]
fn stick_breaking_first_weight_mean() {
    // v_1 ~ Beta(1 + 6, 1 + 4) has mean 7/12
    let mut rng = substream(15, 0);
    let w1 = draws(20_000, || stick_breaking_update(1.0, &[6.0, 4.0, 0.0], &mut rng).unwrap()[0]);
    assert!((mean(&w1) - 7.0 / 12.0).abs() < 0.005);
}

#[test]
fn conjugate_updates_reject_bad_arguments() {
    let mut rng = substream(1, 0);
    assert!(gibbs_normal_mean(0.0, -1.0, 0.0, 3, 1.0, &mut rng).is_err());
    assert!(gibbs_inv_gamma(1.0, 1.0, -1.0, 3, &mut rng).is_err());
    assert!(gibbs_beta(1.0, 1.0, -1.0, 0.0, &mut rng).is_err());
    assert!(gibbs_dirichlet(&[1.0, 1.0], &[1.0], &mut rng).is_err());
    assert!(stick_breaking_update(0.0, &[1.0, 1.0], &mut rng).is_err());
}

#[test]
fn categorical_frequencies() {
    let mut rng = substream(21, 0);
    let p = [0.2, 0.5, 0.3];
    let logw: Vec<f64> = p.iter().map(|x: &f64| x.ln() + 40.0).collect();
    let mut counts = [0usize; 3];
    for _ in 0..50_000 {
        counts[sample_categorical(&logw, &mut rng).unwrap()] += 1;
    }
    for (c, want) in counts.iter().zip(p) {
        assert!((*c as f64 / 50_000.0 - want).abs() < 0.01, "{counts:?}");
    }
}

#[test]
fn binary_frequencies() {
    let mut rng = substream(22, 0);
    let log_odds = [0.0, 2.0f64.ln(), -3.0];
    let mut ones = [0.0; 3];
    for _ in 0..50_000 {
        for (o, b) in ones.iter_mut().zip(sample_binary_vector(&log_odds, &mut rng).unwrap()) {
            *o += b as f64 / 50_000.0;
        }
    }
    let want = log_odds.map(|l| 1.0 / (1.0 + (-l).exp()));
    for (o, w) in ones.iter().zip(want) {
        assert!((o - w).abs() < 0.01);
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[test]
fn forward_marginal_matches_path_enumeration() {
    let mut rng = substream(31, 0);
    for _ in 0..100 {
        let k = rng.random_range(1..=3);
        let t = rng.random_range(1..=5);
        let (init, trans, emit) = random_hmm(&mut rng, k, t);
        let brute = log_sum_exp(&enumerate_paths(&init, &trans, &emit, k, t));
        let fwd = hmm_log_marginal(&init, &trans, &emit).unwrap();
        assert!((fwd - brute).abs() < 1e-10, "k={k} t={t}: {fwd} vs {brute}");
    }
}

#[test]
fn ffbs_state_marginals_match_enumeration() {
    let mut rng = substream(32, 0);
    for _ in 0..5 {
        let (k, t) = (3, 4);
        let (init, trans, emit) = random_hmm(&mut rng, k, t);
        let joint = enumerate_paths(&init, &trans, &emit, k, t);
        let z = log_sum_exp(&joint);
        let mut exact = vec![0.0; t * k];
        for (code, lp) in joint.iter().enumerate() {
            let mut c = code;
            for i in (0..t).rev() {
                exact[i * k + c % k] += (lp - z).exp();
                c /= k;
            }
        }
        let n = 100_000;
        let mut freq = vec![0.0; t * k];
        for _ in 0..n {
            for (i, s) in ffbs_hmm(&init, &trans, &emit, &mut rng).unwrap().into_iter().enumerate() {
                freq[i * k + s] += 1.0 / n as f64;
            }
        }
        for (f, e) in freq.iter().zip(&exact) {
            assert!((f - e).abs() < 0.01, "{freq:?} vs {exact:?}");
        }
    }
}

#[test]
fn ffbs_rejects_impossible_emissions_and_bad_shapes() {
    let mut rng = substream(1, 0);
    let half = 0.5f64.ln();
    let emit = [0.0, 0.0, f64::NEG_INFINITY, f64::NEG_INFINITY];
    assert!(ffbs_hmm(&[half, half], &[half; 4], &emit, &mut rng).is_err());
    assert!(hmm_log_marginal(&[half, half], &[half; 3], &[0.0; 4]).is_err());
    assert!(hmm_log_marginal(&[0.0, 0.0], &[half; 4], &[0.0; 4]).is_err());
}

#[test]
fn nuts_correlated_normal() {
    let chains: Vec<NutsRun> = (0..2).map(|c| nuts_chain(0.9, 41, c, 1000, 4000)).collect();
    assert!(chains.iter().all(|c| c.frozen));
    for d in 0..2 {
        let per: Vec<&[f64]> = chains.iter().map(|c| c.draws[d].as_slice()).collect();
        let rhat = rank_normalized_rhat(&per).unwrap().value;
        assert!(rhat < 1.01, "coordinate {d}: {rhat}");
    }
    let x: Vec<f64> = chains.iter().flat_map(|c| c.draws[0].clone()).collect();
    let y: Vec<f64> = chains.iter().flat_map(|c| c.draws[1].clone()).collect();
    let (mx, my) = (mean(&x), mean(&y));
    let cov = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (x.len() - 1) as f64;
    for (est, truth) in [(var(&x), 1.0), (var(&y), 1.0), (cov, 0.9)] {
        assert!((est / truth - 1.0).abs() < 0.15, "{est} vs {truth}");
    }
}

#[test]
fn nuts_standard_normal_means() {
    let chains: Vec<NutsRun> = (0..2).map(|c| nuts_chain(0.0, 42, c, 1000, 4000)).collect();
    for d in 0..2 {
        let per: Vec<&[f64]> = chains.iter().map(|c| c.draws[d].as_slice()).collect();
        assert!(rank_normalized_rhat(&per).unwrap().value < 1.01);
        for c in &chains {
            assert!(mean(&c.draws[d]).abs() < 0.1);
        }
    }
}

#[test]
fn nuts_is_deterministic_per_stream() {
    let a = nuts_chain(0.5, 7, 0, 200, 300);
    let b = nuts_chain(0.5, 7, 0, 200, 300);
    assert_eq!(a.draws, b.draws);
}

#[test]
fn nuts_reports_non_finite_start() {
    let mut target = FnPotential::new(1, |q: &[f64], g: &mut [f64]| {
        g[0] = f64::NAN;
        q[0]
    });
    let mut state = NutsState::new(1, NutsSettings::default());
    let before = state.clone();
    assert!(state.transition(&mut [0.0], &mut target, &mut substream(1, 0)).is_err());
    assert_eq!(state, before);
}

#[test]
fn leapfrog_is_reversible() {
    let mut target = FnPotential::new(2, correlated_normal(0.6));
    let mut z = Phase::at(&[0.4, -1.1], &mut target).unwrap();
    z.p = vec![0.3, 0.8];
    let start = z.clone();
    let metric = [1.0, 0.5];
    for _ in 0..25 {
        assert!(leapfrog(&mut z, 0.1, &metric, &mut target));
    }
    let h_end = z.hamiltonian(&metric);
    assert!((h_end - start.hamiltonian(&metric)).abs() < 0.05);
    z.p.iter_mut().for_each(|p| *p = -*p);
    for _ in 0..25 {
        leapfrog(&mut z, 0.1, &metric, &mut target);
    }
    for i in 0..2 {
        assert!((z.q[i] - start.q[i]).abs() < 1e-12);
        assert!((z.p[i] + start.p[i]).abs() < 1e-12);
    }
}

#[test]
fn leapfrog_flags_divergence() {
    let mut target = FnPotential::new(1, |q: &[f64], g: &mut [f64]| {
        g[0] = if q[0] > 1.0 { f64::INFINITY } else { -q[0] };
        -0.5 * q[0] * q[0]
    });
    let mut z = Phase::at(&[0.0], &mut target).unwrap();
    z.p[0] = 20.0;
    assert!(!leapfrog(&mut z, 0.5, &[1.0], &mut target));
}

#[test]
fn slice_moments_standard_normal() {
    let mut rng = substream(51, 0);
    let mut x = 3.0;
    let settings = SliceSettings::default();
    let xs = draws(40_000, || {
        x = slice_step_univariate(x, &mut |v| Ok(-0.5 * v * v), &settings, &mut rng).unwrap();
        x
    });
    assert!(mean(&xs).abs() < 0.05);
    assert!((var(&xs) - 1.0).abs() < 0.05);
}

#[test]
fn slice_moments_bounded_gamma() {
    // Gamma(3, 1): mean 3, variance 3
    let mut rng = substream(52, 0);
    let mut x = 1.0;
    let settings = SliceSettings { w: 2.0, m: 20 };
    let xs = draws(40_000, || {
        x = slice_step_univariate(
            x,
            &mut |v| Ok(if v > 0.0 { 2.0 * v.ln() - v } else { f64::NEG_INFINITY }),
            &settings,
            &mut rng,
        )
        .unwrap();
        x
    });
    assert!(xs.iter().all(|&v| v > 0.0));
    assert!((mean(&xs) - 3.0).abs() < 0.1);
    assert!((var(&xs) - 3.0).abs() < 0.3);
}

fn transforms() -> impl Strategy<Value = Transform> {
    prop_oneof![
        Just(Transform::Identity),
        (-5.0..5.0f64).prop_map(|lower| Transform::Lower { lower }),
        (-5.0..5.0f64).prop_map(|upper| Transform::Upper { upper }),
        (-5.0..5.0f64, 0.5..10.0f64).prop_map(|(a, w)| Transform::Interval { a, b: a + w }),
        (2usize..6, 1usize..3).prop_map(|(k, rows)| Transform::Simplex { k, rows }),
    ]
}

fn point(t: Transform, seed: u64) -> Vec<f64> {
    let n = match t {
        Transform::Simplex { k, rows } => (k - 1) * rows,
        _ => 3,
    };
    let mut rng = substream(seed, 0);
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn forward(t: Transform, x: &[f64]) -> (Vec<f64>, f64) {
    let mut theta = vec![0.0; t.constrained_len(x.len())];
    let lj = t.forward(x, &mut theta).unwrap();
    (theta, lj)
}

/// Free coordinates of `theta`: all of them, or the first K-1 of each simplex row.
fn free(t: Transform, theta: &[f64]) -> Vec<f64> {
    match t {
        Transform::Simplex { k, .. } => theta.chunks(k).flat_map(|r| r[..k - 1].to_vec()).collect(),
        _ => theta.to_vec(),
    }
}

fn log_abs_det(mut m: Vec<Vec<f64>>) -> f64 {
    let n = m.len();
    let mut acc = 0.0;
    for c in 0..n {
        let p = (c..n).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        m.swap(c, p);
        acc += m[c][c].abs().ln();
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for j in c..n {
                m[r][j] -= f * m[c][j];
            }
        }
    }
    acc
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transform_round_trip(t in transforms(), seed in 0u64..1000) {
        let x = point(t, seed);
        let (theta, _) = forward(t, &x);
        let back = t.inverse(&theta).unwrap();
        for (a, b) in x.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-8, "{x:?} -> {back:?}");
        }
    }

    #[test]
    fn transform_log_jacobian_matches_finite_differences(t in transforms(), seed in 0u64..1000) {
        let x = point(t, seed);
        let (_, lj) = forward(t, &x);
        let h = 1e-6;
        let cols: Vec<Vec<f64>> = (0..x.len())
            .map(|j| {
                let (mut up, mut dn) = (x.clone(), x.clone());
                up[j] += h;
                dn[j] -= h;
                let a = free(t, &forward(t, &up).0);
                let b = free(t, &forward(t, &dn).0);
                a.iter().zip(&b).map(|(p, q)| (p - q) / (2.0 * h)).collect()
            })
            .collect();
        // Jacobian rows are constrained coordinates; block-diagonal per element or row.
        let m: Vec<Vec<f64>> = (0..x.len()).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        let fd = log_abs_det(m);
        prop_assert!((fd - lj).abs() < 1e-5 * lj.abs().max(1.0), "{fd} vs {lj}");
    }

    #[test]
    fn transform_backprop_matches_finite_differences(t in transforms(), seed in 0u64..1000) {
        let x = point(t, seed);
        let (theta, _) = forward(t, &x);
        let w: Vec<f64> = (0..theta.len()).map(|i| 0.3 + 0.1 * i as f64).collect();
        let f = |x: &[f64]| {
            let (th, lj) = forward(t, x);
            th.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + lj
        };
        let mut dx = vec![0.0; x.len()];
        t.backprop(&x, &w, &mut dx);
        let h = 1e-6;
        for j in 0..x.len() {
            let (mut up, mut dn) = (x.clone(), x.clone());
            up[j] += h;
            dn[j] -= h;
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            prop_assert!((fd - dx[j]).abs() < 1e-5 * fd.abs().max(1.0), "coordinate {j}: {fd} vs {}", dx[j]);
        }
    }

    #[test]
    fn transform_output_respects_support(t in transforms(), seed in 0u64..1000) {
        let x = point(t, seed);
        let (theta, _) = forward(t, &x);
        match t {
            Transform::Identity => {}
            Transform::Lower { lower } => prop_assert!(theta.iter().all(|&v| v > lower)),
            Transform::Upper { upper } => prop_assert!(theta.iter().all(|&v| v < upper)),
            Transform::Interval { a, b } => prop_assert!(theta.iter().all(|&v| a < v && v < b)),
            Transform::Simplex { k, .. } => {
                for row in theta.chunks(k) {
                    prop_assert!(row.iter().all(|&v| v > 0.0));
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn flat_prior_limit_of_normal_mean() {
    let mut rng = substream(16, 0);
    let xs = draws(20_000, || gibbs_normal_mean(0.0, 1e12, 3.0, 4, 2.0, &mut rng).unwrap());
    assert!((mean(&xs) - 3.0).abs() < 0.03);
    assert!((var(&xs) / 0.5 - 1.0).abs() < 0.05);
}

#[test]
fn inverse_gamma_from_two_residuals() {
    // InvGamma(3, 3) has mean 1.5
    let mut rng = substream(17, 0);
    let xs = draws(50_000, || gibbs_inv_gamma(2.0, 2.0, 2.0, 2, &mut rng).unwrap());
    assert!((mean(&xs) / 1.5 - 1.0).abs() < 0.02);
}

#[test]
fn beta_from_three_bernoulli_observations() {
    let mut rng = substream(18, 0);
    let xs = draws(50_000, || gibbs_beta(1.0, 1.0, 2.0, 1.0, &mut rng).unwrap());
    assert!((mean(&xs) - 0.6).abs() < 0.01);
}

#[test]
fn stick_breaking_with_one_occupied_cluster() {
    let mut rng = substream(19, 0);
    let mut counts = [0.0; 10];
    counts[0] = 100.0;
    let w1 = draws(50_000, || stick_breaking_update(1.0, &counts, &mut rng).unwrap()[0]);
    assert!((mean(&w1) - 101.0 / 102.0).abs() < 0.005);
    let prior = draws(50_000, || stick_breaking_update(1.0, &[0.0; 3], &mut rng).unwrap()[0]);
    assert!((mean(&prior) - 0.5).abs() < 0.01);
}

#[test]
fn categorical_uniform_and_overflow_safe() {
    let mut rng = substream(23, 0);
    let mut counts = [0usize; 4];
    for _ in 0..100_000 {
        counts[sample_categorical(&[0.0; 4], &mut rng).unwrap()] += 1;
    }
    assert!(counts.iter().all(|&c| (c as f64 / 100_000.0 - 0.25).abs() < 0.01), "{counts:?}");
    let mut second = 0usize;
    for _ in 0..100_000 {
        second += sample_categorical(&[1000.0, 1001.0], &mut rng).unwrap();
    }
    let want = 1.0 / (1.0 + (-1.0f64).exp());
    assert!((second as f64 / 100_000.0 - want).abs() < 0.01);
}

#[test]
fn fair_coin_from_zero_log_odds() {
    let mut rng = substream(24, 0);
    let ones: i64 = (0..100_000).map(|_| sample_binary_vector(&[0.0], &mut rng).unwrap()[0]).sum();
    assert!((ones as f64 / 100_000.0 - 0.5).abs() < 0.01);
    let extreme = sample_binary_vector(&[1000.0, -1000.0], &mut rng).unwrap();
    assert_eq!(extreme, vec![1, 0]);
}

#[test]
fn ffbs_single_step_is_a_categorical_draw() {
    let mut rng = substream(33, 0);
    let init = [0.3f64.ln(), 0.7f64.ln()];
    let trans = [0.5f64.ln(); 4];
    let emit = [0.9f64.ln(), 0.2f64.ln()];
    let p0 = 0.3 * 0.9 / (0.3 * 0.9 + 0.7 * 0.2);
    let zeros = (0..100_000).filter(|_| ffbs_hmm(&init, &trans, &emit, &mut rng).unwrap()[0] == 0).count();
    assert!((zeros as f64 / 100_000.0 - p0).abs() < 0.01);
}

#[test]
fn ffbs_symmetric_model_gives_uniform_paths() {
    let mut rng = substream(34, 0);
    let half = 0.5f64.ln();
    let mut counts = [0usize; 8];
    for _ in 0..80_000 {
        let p = ffbs_hmm(&[half, half], &[half; 4], &[0.0; 6], &mut rng).unwrap();
        counts[p[0] * 4 + p[1] * 2 + p[2]] += 1;
    }
    assert!(counts.iter().all(|&c| (c as f64 / 80_000.0 - 0.125).abs() < 0.006), "{counts:?}");
}

#[test]
fn ffbs_two_state_five_step_marginals() {
    let mut rng = substream(35, 0);
    let init = [0.6f64.ln(), 0.4f64.ln()];
    let trans = [0.8f64.ln(), 0.2f64.ln(), 0.3f64.ln(), 0.7f64.ln()];
    let emit: Vec<f64> = [0.7, 0.1, 0.2, 0.6, 0.5, 0.5, 0.9, 0.3, 0.1, 0.8].iter().map(|p: &f64| p.ln()).collect();
    let joint = enumerate_paths(&init, &trans, &emit, 2, 5);
    let z = log_sum_exp(&joint);
    let mut exact = [0.0; 5];
    for (code, lp) in joint.iter().enumerate() {
        for t in 0..5 {
            if (code >> (4 - t)) & 1 == 1 {
                exact[t] += (lp - z).exp();
            }
        }
    }
    let mut freq = [0.0; 5];
    for _ in 0..100_000 {
        for (t, s) in ffbs_hmm(&init, &trans, &emit, &mut rng).unwrap().into_iter().enumerate() {
            freq[t] += s as f64 / 100_000.0;
        }
    }
    for (f, e) in freq.iter().zip(&exact) {
        assert!((f - e).abs() < 0.005, "{freq:?} vs {exact:?}");
    }
}

#[test]
fn leapfrog_conserves_energy_over_long_runs() {
    let mut target = FnPotential::new(1, |q: &[f64], g: &mut [f64]| {
        g[0] = -q[0];
        -0.5 * q[0] * q[0]
    });
    let mut z = Phase::at(&[0.0], &mut target).unwrap();
    z.p[0] = 1.0;
    let h0 = z.hamiltonian(&[1.0]);
    for _ in 0..1000 {
        leapfrog(&mut z, 0.01, &[1.0], &mut target);
        assert!((z.hamiltonian(&[1.0]) - h0).abs() < 1e-3);
    }
}

#[test]
fn leapfrog_preserves_volume() {
    let h = 1e-6;
    let step = |x: [f64; 4]| {
        let mut target = FnPotential::new(2, correlated_normal(0.6));
        let mut z = Phase::at(&x[..2], &mut target).unwrap();
        z.p = x[2..].to_vec();
        leapfrog(&mut z, 0.2, &[1.0, 0.7], &mut target);
        [z.q[0], z.q[1], z.p[0], z.p[1]]
    };
    let x0 = [0.3, -0.8, 1.1, 0.4];
    let jac: Vec<Vec<f64>> = (0..4)
        .map(|j| {
            let (mut up, mut dn) = (x0, x0);
            up[j] += h;
            dn[j] -= h;
            let (a, b) = (step(up), step(dn));
            (0..4).map(|i| (a[i] - b[i]) / (2.0 * h)).collect()
        })
        .collect();
    assert!(log_abs_det(jac).abs() < 1e-6);
}

#[test]
fn slice_on_a_bounded_uniform() {
    let mut rng = substream(53, 0);
    let mut x = 0.5;
    let settings = SliceSettings::default();
    let mut xs = draws(20_000, || {
        x = slice_step_univariate(
            x,
            &mut |v| Ok(if (0.0..=1.0).contains(&v) { 0.0 } else { f64::NEG_INFINITY }),
            &settings,
            &mut rng,
        )
        .unwrap();
        x
    });
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &v)| ((i + 1) as f64 / n - v).abs().max((v - i as f64 / n).abs()))
        .fold(0.0, f64::max);
    assert!(ks < 0.02, "{ks}");
}

#[test]
fn slice_rejects_a_start_outside_the_support() {
    let mut rng = substream(54, 0);
    let r = slice_step_univariate(-1.0, &mut |v| Ok(if v > 0.0 { 0.0 } else { f64::NEG_INFINITY }), &SliceSettings::default(), &mut rng);
    assert!(r.is_err());
}
