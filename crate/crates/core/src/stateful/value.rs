use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element type of a [`Value`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Real,
    Int,
}

/// Tagged numeric payload exchanged between blocks through the shared pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Value {
    Real(f64),
    RealVec(Vec<f64>),
    RealMat {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    },
    Int(i64),
    IntVec(Vec<i64>),
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Real(_) | Value::RealVec(_) | Value::RealMat { .. } => ValueKind::Real,
            Value::Int(_) | Value::IntVec(_) => ValueKind::Int,
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        match self {
            Value::Real(_) | Value::Int(_) => vec![],
            Value::RealVec(v) => vec![v.len()],
            Value::IntVec(v) => vec![v.len()],
            Value::RealMat { rows, cols, .. } => vec![*rows, *cols],
        }
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when no real entry is NaN or infinite. Integer payloads are always finite.
    pub fn is_finite(&self) -> bool {
        match self {
            Value::Real(x) => x.is_finite(),
            Value::RealVec(v) => v.iter().all(|x| x.is_finite()),
            Value::RealMat { data, .. } => data.iter().all(|x| x.is_finite()),
            Value::Int(_) | Value::IntVec(_) => true,
        }
    }

    /// Row-major flattening to doubles.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len().max(1));
        self.extend_flat(&mut out);
        out
    }

    pub fn extend_flat(&self, out: &mut Vec<f64>) {
        match self {
            Value::Real(x) => out.push(*x),
            Value::RealVec(v) => out.extend_from_slice(v),
            Value::RealMat { data, .. } => out.extend_from_slice(data),
            Value::Int(i) => out.push(*i as f64),
            Value::IntVec(v) => out.extend(v.iter().map(|&i| i as f64)),
        }
    }

    /// Rebuilds a value from row-major doubles. Integer kinds are rounded.
    pub fn from_flat(kind: ValueKind, shape: &[usize], flat: &[f64]) -> Result<Value> {
        let n: usize = shape.iter().product();
        if flat.len() != n {
            return Err(Error::InvalidArgument(format!(
                "expected {n} entries for shape {shape:?}, got {}",
                flat.len()
            )));
        }
        Ok(match (kind, shape.len()) {
            (ValueKind::Real, 0) => Value::Real(flat[0]),
            (ValueKind::Real, 1) => Value::RealVec(flat.to_vec()),
            (ValueKind::Real, 2) => Value::RealMat {
                rows: shape[0],
                cols: shape[1],
                data: flat.to_vec(),
            },
            (ValueKind::Int, 0) => Value::Int(flat[0].round() as i64),
            (ValueKind::Int, 1) => Value::IntVec(flat.iter().map(|x| x.round() as i64).collect()),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unsupported {kind:?} shape {shape:?}"
                )))
            }
        })
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Real(x) => Some(*x),
            Value::Int(i) => Some(*i as f64),
            _ => None,
        }
    }
}

/// Flattened column labels for a named value: `mu`, `beta.1`, `trans.1.2` (1-based).
pub fn flat_labels(name: &str, shape: &[usize]) -> Vec<String> {
    match shape.len() {
        0 => vec![name.to_string()],
        1 => (1..=shape[0]).map(|i| format!("{name}.{i}")).collect(),
        _ => {
            let mut out = Vec::new();
            let cols: usize = shape[1..].iter().product();
            for r in 1..=shape[0] {
                for c in 1..=cols {
                    out.push(format!("{name}.{r}.{c}"));
                }
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_roundtrip_and_labels() {
        let v = Value::RealMat {
            rows: 2,
            cols: 2,
            data: vec![1.0, 2.0, 3.0, 4.0],
        };
        let back = Value::from_flat(v.kind(), &v.shape(), &v.to_flat()).unwrap();
        assert_eq!(v, back);
        assert_eq!(
            flat_labels("trans", &[2, 2]),
            vec!["trans.1.1", "trans.1.2", "trans.2.1", "trans.2.2"]
        );
        assert_eq!(flat_labels("mu", &[]), vec!["mu"]);
    }

    #[test]
    fn finiteness() {
        assert!(!Value::RealVec(vec![1.0, f64::NAN]).is_finite());
        assert!(Value::IntVec(vec![1, 2]).is_finite());
    }
}
