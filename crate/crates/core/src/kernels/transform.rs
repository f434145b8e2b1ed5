use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Map from unconstrained coordinates to a constrained support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// `theta = lower + exp(x)`
    Lower { lower: f64 },
    /// `theta = upper - exp(x)`
    Upper { upper: f64 },
    /// `theta = a + (b - a) * logistic(x)`
    Interval { a: f64, b: f64 },
    /// Stick-breaking onto `rows` simplexes of length `k`.
    Simplex { k: usize, rows: usize },
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `log(logistic(x))` without overflow.
fn log_logistic(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

impl Transform {
    pub fn name(&self) -> &'static str {
        match self {
            Transform::Identity => "identity",
            Transform::Lower { .. } | Transform::Upper { .. } => "log",
            Transform::Interval { .. } => "logit",
            Transform::Simplex { .. } => "stick_breaking",
        }
    }

    /// Number of constrained values produced from `unconstrained_len` inputs.
    pub fn constrained_len(&self, unconstrained_len: usize) -> usize {
        match self {
            Transform::Simplex { k, rows } => k * rows,
            _ => unconstrained_len,
        }
    }

    pub fn unconstrained_len(&self, constrained_len: usize) -> usize {
        match self {
            Transform::Simplex { k, rows } => (k - 1) * rows,
            _ => constrained_len,
        }
    }

    /// Writes constrained values into `theta` and returns `log|det J|`.
    pub fn forward(&self, x: &[f64], theta: &mut [f64]) -> Result<f64> {
        if theta.len() != self.constrained_len(x.len()) || x.len() != self.unconstrained_len(theta.len()) {
            return Err(Error::InvalidArgument(format!(
                "{} transform: {} unconstrained values cannot fill {} constrained values",
                self.name(),
                x.len(),
                theta.len()
            )));
        }
        let mut log_j = 0.0;
        match *self {
            Transform::Identity => theta.copy_from_slice(x),
            Transform::Lower { lower } => {
                for (t, &v) in theta.iter_mut().zip(x) {
                    *t = lower + v.exp();
                    log_j += v;
                }
            }
            Transform::Upper { upper } => {
                for (t, &v) in theta.iter_mut().zip(x) {
                    *t = upper - v.exp();
                    log_j += v;
                }
            }
            Transform::Interval { a, b } => {
                for (t, &v) in theta.iter_mut().zip(x) {
                    *t = a + (b - a) * logistic(v);
                    log_j += (b - a).ln() + log_logistic(v) + log_logistic(-v);
                }
            }
            Transform::Simplex { k, .. } => {
                for (xr, tr) in x.chunks(k - 1).zip(theta.chunks_mut(k)) {
                    let mut rest = 1.0;
                    for j in 0..k - 1 {
                        let a = xr[j] - ((k - 1 - j) as f64).ln();
                        let z = logistic(a);
                        tr[j] = rest * z;
                        log_j += log_logistic(a) + log_logistic(-a) + rest.ln();
                        rest -= tr[j];
                    }
                    tr[k - 1] = rest;
                }
            }
        }
        Ok(log_j)
    }

    /// Unconstrained coordinates of a point in the support.
    pub fn inverse(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let out = match *self {
            Transform::Identity => theta.to_vec(),
            Transform::Lower { lower } => theta.iter().map(|t| (t - lower).ln()).collect(),
            Transform::Upper { upper } => theta.iter().map(|t| (upper - t).ln()).collect(),
            Transform::Interval { a, b } => theta.iter().map(|t| logit((t - a) / (b - a))).collect(),
            Transform::Simplex { k, rows } => {
                if theta.len() != k * rows {
                    return Err(Error::InvalidArgument(format!(
                        "stick_breaking transform expects {} values, got {}",
                        k * rows,
                        theta.len()
                    )));
                }
                let mut out = Vec::with_capacity((k - 1) * rows);
                for tr in theta.chunks(k) {
                    let mut rest = 1.0;
                    for (j, &t) in tr[..k - 1].iter().enumerate() {
                        out.push(logit(t / rest) + ((k - 1 - j) as f64).ln());
                        rest -= t;
                    }
                }
                out
            }
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{} transform inverse", self.name())));
        }
        Ok(out)
    }

    /// Chain rule: given `d f / d theta`, writes `d (f + log|det J|) / d x` into `dx`.
    pub fn backprop(&self, x: &[f64], dtheta: &[f64], dx: &mut [f64]) {
        match *self {
            Transform::Identity => dx.copy_from_slice(dtheta),
            Transform::Lower { .. } => {
                for ((d, &v), &g) in dx.iter_mut().zip(x).zip(dtheta) {
                    *d = g * v.exp() + 1.0;
                }
            }
            Transform::Upper { .. } => {
                for ((d, &v), &g) in dx.iter_mut().zip(x).zip(dtheta) {
                    *d = -g * v.exp() + 1.0;
                }
            }
            Transform::Interval { a, b } => {
                for ((d, &v), &g) in dx.iter_mut().zip(x).zip(dtheta) {
                    let s = logistic(v);
                    *d = g * (b - a) * s * (1.0 - s) + 1.0 - 2.0 * s;
                }
            }
            Transform::Simplex { k, .. } => {
                let mut z = vec![0.0; k - 1];
                let mut rest = vec![0.0; k];
                for ((xr, gr), dr) in x.chunks(k - 1).zip(dtheta.chunks(k)).zip(dx.chunks_mut(k - 1)) {
                    rest[0] = 1.0;
                    for j in 0..k - 1 {
                        z[j] = logistic(xr[j] - ((k - 1 - j) as f64).ln());
                        rest[j + 1] = rest[j] * (1.0 - z[j]);
                    }
                    // Adjoint of the remaining stick length after piece j.
                    let mut g_next = gr[k - 1];
                    for j in (0..k - 1).rev() {
                        let (zj, rj) = (z[j], rest[j]);
                        dr[j] = (gr[j] - g_next) * rj * zj * (1.0 - zj) + 1.0 - 2.0 * zj;
                        g_next = gr[j] * zj + g_next * (1.0 - zj) + 1.0 / rj;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_transform_at_zero() {
        let t = Transform::Lower { lower: 0.0 };
        let mut th = [0.0];
        let lj = t.forward(&[0.0], &mut th).unwrap();
        assert_eq!(th[0], 1.0);
        assert_eq!(lj, 0.0);
    }

    #[test]
    fn logit_transform_at_zero() {
        let t = Transform::Interval { a: 0.0, b: 1.0 };
        let mut th = [0.0];
        let lj = t.forward(&[0.0], &mut th).unwrap();
        assert_eq!(th[0], 0.5);
        assert!((lj - 0.25f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn simplex_length_mismatch() {
        let t = Transform::Simplex { k: 3, rows: 1 };
        let mut th = [0.0; 3];
        assert!(t.forward(&[0.0], &mut th).is_err());
    }

    #[test]
    fn simplex_zero_is_uniform() {
        let t = Transform::Simplex { k: 4, rows: 1 };
        let mut th = [0.0; 4];
        t.forward(&[0.0; 3], &mut th).unwrap();
        for v in th {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }
}
