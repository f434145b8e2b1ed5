//! Independent split R-hat / ESS reference and the frozen fixtures it was checked on.

use blockmc::stateful::substream;
use rand::Rng;
use rand_distr::StandardNormal;

pub mod reference {
    use statrs::distribution::{ContinuousCDF, Normal};

    pub fn split(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = chains[0].len();
        let h = n / 2;
        let mut out = vec![];
        for c in chains {
            out.push(c[0..h].to_vec());
            out.push(c[n - h..n].to_vec());
        }
        out
    }

    /// Average rank of every pooled value, computed by counting.
    fn rank(pooled: &[f64], x: f64) -> f64 {
        let below = pooled.iter().filter(|&&y| y < x).count() as f64;
        let ties = pooled.iter().filter(|&&y| y == x).count() as f64;
        below + (ties + 1.0) / 2.0
    }

    pub fn normal_scores(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let pooled: Vec<f64> = chains.concat();
        let s = pooled.len() as f64;
        let phi = Normal::new(0.0, 1.0).unwrap();
        chains
            .iter()
            .map(|c| c.iter().map(|&x| phi.inverse_cdf((rank(&pooled, x) - 3.0 / 8.0) / (s + 1.0 / 4.0))).collect())
            .collect()
    }

    fn avg(x: &[f64]) -> f64 {
        x.iter().sum::<f64>() / x.len() as f64
    }

    fn s2(x: &[f64]) -> f64 {
        let m = avg(x);
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
    }

    /// sqrt(var_plus / W), with var_plus = (n-1)/n W + B/n.
    pub fn psrf(chains: &[Vec<f64>]) -> f64 {
        let n = chains[0].len() as f64;
        let w = avg(&chains.iter().map(|c| s2(c)).collect::<Vec<_>>());
        let b = n * s2(&chains.iter().map(|c| avg(c)).collect::<Vec<_>>());
        if w == 0.0 {
            return f64::INFINITY;
        }
        (((n - 1.0) / n * w + b / n) / w).sqrt()
    }

    pub fn rhat(chains: &[Vec<f64>]) -> f64 {
        let halves = split(chains);
        let pooled = halves.concat();
        let ranks: Vec<Vec<f64>> = halves.iter().map(|c| c.iter().map(|&x| rank(&pooled, x)).collect()).collect();
        let mut sorted = ranks.concat();
        sorted.sort_by(f64::total_cmp);
        let k = sorted.len();
        let med = if k % 2 == 1 { sorted[k / 2] } else { 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]) };
        let folded: Vec<Vec<f64>> = ranks.iter().map(|c| c.iter().map(|r| (r - med).abs()).collect()).collect();
        psrf(&normal_scores(&halves)).max(psrf(&normal_scores(&folded)))
    }

    /// Multi-chain ESS with Geyer's initial positive and monotone sequences.
    pub fn ess(chains: &[Vec<f64>]) -> f64 {
        let m = chains.len() as f64;
        let n = chains[0].len();
        let nf = n as f64;
        let acov: Vec<Vec<f64>> = chains
            .iter()
            .map(|c| {
                let mu = avg(c);
                (0..n).map(|l| (0..n - l).map(|i| (c[i] - mu) * (c[i + l] - mu)).sum::<f64>() / nf).collect()
            })
            .collect();
        let w = acov.iter().map(|a| a[0]).sum::<f64>() / m * nf / (nf - 1.0);
        if w <= 0.0 {
            return 0.0;
        }
        let b_over_n = if chains.len() > 1 { s2(&chains.iter().map(|c| avg(c)).collect::<Vec<_>>()) } else { 0.0 };
        let var_plus = w * (nf - 1.0) / nf + b_over_n;
        let rho = |l: usize| 1.0 - (w - acov.iter().map(|a| a[l]).sum::<f64>() / m) / var_plus;

        // Pair sums P_k = rho(2k) + rho(2k+1), truncated at the first negative pair.
        let mut pairs = vec![(1.0, rho(1))];
        let mut t = 0;
        let mut last = (1.0, rho(1));
        while t + 5 < n && last.0 + last.1 > 0.0 {
            t += 2;
            last = (rho(t), rho(t + 1));
            if last.0 + last.1 >= 0.0 {
                pairs.push(last);
            }
        }
        let max_t = t;
        let mut r = vec![0.0; max_t + 2];
        for (k, (e, o)) in pairs.iter().enumerate() {
            r[2 * k] = *e;
            r[2 * k + 1] = *o;
        }
        if last.0 > 0.0 {
            r[max_t] = last.0;
        }
        let mut k = 2;
        while k + 2 <= max_t {
            let prev = r[k - 2] + r[k - 1];
            if r[k] + r[k + 1] > prev {
                r[k] = prev / 2.0;
                r[k + 1] = prev / 2.0;
            }
            k += 2;
        }
        let total = m * nf;
        let tau = (2.0 * r[..max_t].iter().sum::<f64>() + r[max_t] - 1.0).max(1.0 / total.log10());
        total / tau
    }

    pub fn ess_bulk(chains: &[Vec<f64>]) -> f64 {
        ess(&normal_scores(&split(chains)))
    }

    pub fn ess_tail(chains: &[Vec<f64>]) -> f64 {
        let mut pooled = chains.concat();
        pooled.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let h = (pooled.len() - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(pooled.len() - 1);
            pooled[lo] + (h - lo as f64) * (pooled[hi] - pooled[lo])
        };
        [q(0.05), q(0.95)]
            .iter()
            .map(|&cut| {
                let ind: Vec<Vec<f64>> =
                    chains.iter().map(|c| c.iter().map(|&x| if x <= cut { 1.0 } else { 0.0 }).collect()).collect();
                ess(&split(&ind))
            })
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn ar1(seed: u64, chains: usize, n: usize, phi: f64, offset: f64) -> Vec<Vec<f64>> {
    let mut rng = substream(seed, 0);
    let innov = (1.0 - phi * phi).sqrt();
    (0..chains)
        .map(|c| {
            let mut x: f64 = rng.sample(StandardNormal);
            (0..n)
                .map(|_| {
                    let e: f64 = rng.sample(StandardNormal);
                    x = phi * x + innov * e;
                    x + offset * c as f64
                })
                .collect()
        })
        .collect()
}

/// Three chains of nine draws (odd length, one tie).
pub fn small_fixture() -> Vec<Vec<f64>> {
    vec![
        vec![0.31, -1.20, 0.85, 0.02, 1.75, -0.44, 0.66, -0.91, 0.12],
        vec![1.10, 0.47, -0.25, 0.85, 2.01, 0.39, -0.08, 1.33, 0.95],
        vec![-0.62, 0.18, -1.47, 0.54, -0.33, -0.99, 0.27, -0.15, 0.71],
    ]
}

pub const SMALL_RHAT: f64 = 1.0396147377849665;
pub const SMALL_BULK: f64 = 33.12506980107854;
// The two largest draws sit in the dropped middle positions, so the upper
// tail indicator is constant on every half chain.
pub const SMALL_TAIL: f64 = 0.0;
pub const AR_RHAT: f64 = 1.0103820438762086;
pub const AR_BULK: f64 = 348.64040990843614;
pub const AR_TAIL: f64 = 614.1169823992292;
