use serde::{Deserialize, Serialize};

use super::value::{flat_labels, Value, ValueKind};
use crate::error::{Error, Result};

/// Layout of one recorded quantity inside a history row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryField {
    pub name: String,
    pub kind: ValueKind,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

/// Append-only trajectory of draws, stored densely as `f64` rows.
///
/// With recording disabled only the latest draw is kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    fields: Vec<HistoryField>,
    width: usize,
    enabled: bool,
    iterations: Vec<u64>,
    data: Vec<f64>,
}

impl History {
    pub fn new(layout: &[(String, ValueKind, Vec<usize>)], enabled: bool) -> Self {
        let mut fields = Vec::with_capacity(layout.len());
        let mut offset = 0;
        for (name, kind, shape) in layout {
            let len = shape.iter().product::<usize>();
            fields.push(HistoryField {
                name: name.clone(),
                kind: *kind,
                shape: shape.clone(),
                offset,
                len,
            });
            offset += len;
        }
        Self {
            fields,
            width: offset,
            enabled,
            iterations: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn fields(&self) -> &[HistoryField] {
        &self.fields
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    pub fn iterations(&self) -> &[u64] {
        &self.iterations
    }

    /// Appends one draw; `values` follow the field order.
    pub fn record(&mut self, iteration: u64, values: &[&Value]) -> Result<()> {
        if values.len() != self.fields.len() {
            return Err(Error::InvalidArgument(format!(
                "history expects {} fields, got {}",
                self.fields.len(),
                values.len()
            )));
        }
        if !self.enabled {
            self.iterations.clear();
            self.data.clear();
        }
        let start = self.data.len();
        for (field, value) in self.fields.iter().zip(values) {
            if value.shape() != field.shape {
                self.data.truncate(start);
                return Err(Error::ShapeMismatch {
                    name: field.name.clone(),
                    expected: field.shape.clone(),
                    got: value.shape(),
                });
            }
            value.extend_flat(&mut self.data);
        }
        self.iterations.push(iteration);
        Ok(())
    }

    /// Appends a pre-flattened row.
    pub fn record_flat(&mut self, iteration: u64, row: &[f64]) -> Result<()> {
        if row.len() != self.width {
            return Err(Error::InvalidArgument(format!(
                "history row must have {} entries, got {}",
                self.width,
                row.len()
            )));
        }
        if !self.enabled {
            self.iterations.clear();
            self.data.clear();
        }
        self.data.extend_from_slice(row);
        self.iterations.push(iteration);
        Ok(())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.len()).map(move |i| self.row(i))
    }

    pub fn field(&self, name: &str) -> Option<&HistoryField> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn value_at(&self, i: usize, name: &str) -> Result<Value> {
        let field = self
            .field(name)
            .ok_or_else(|| Error::UnknownName(name.to_string()))?;
        let row = self.row(i);
        Value::from_flat(
            field.kind,
            &field.shape,
            &row[field.offset..field.offset + field.len],
        )
    }

    pub fn last(&self) -> Option<&[f64]> {
        (!self.is_empty()).then(|| self.row(self.len() - 1))
    }

    /// Trajectory of one flattened coordinate.
    pub fn column(&self, col: usize) -> Vec<f64> {
        self.rows().map(|r| r[col]).collect()
    }

    /// Column labels such as `beta.1`, in row order.
    pub fn labels(&self) -> Vec<String> {
        self.fields
            .iter()
            .flat_map(|f| flat_labels(&f.name, &f.shape))
            .collect()
    }

    /// Drops the first `n` draws.
    pub fn skip(&self, n: usize) -> History {
        let n = n.min(self.len());
        History {
            fields: self.fields.clone(),
            width: self.width,
            enabled: self.enabled,
            iterations: self.iterations[n..].to_vec(),
            data: self.data[n * self.width..].to_vec(),
        }
    }

    /// Keeps every `stride`-th draw, starting from the first.
    pub fn thin(&self, stride: usize) -> History {
        let stride = stride.max(1);
        let mut out = History {
            fields: self.fields.clone(),
            width: self.width,
            enabled: true,
            iterations: Vec::new(),
            data: Vec::new(),
        };
        for i in (0..self.len()).step_by(stride) {
            out.iterations.push(self.iterations[i]);
            out.data.extend_from_slice(self.row(i));
        }
        out
    }

    /// Concatenates histories with identical layouts.
    pub fn concat(parts: &[&History]) -> Result<History> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("no histories to concatenate".into()))?;
        let mut out = (*first).clone();
        out.enabled = true;
        for h in &parts[1..] {
            if h.fields != first.fields {
                return Err(Error::InvalidArgument(
                    "histories have different layouts".into(),
                ));
            }
            out.iterations.extend_from_slice(&h.iterations);
            out.data.extend_from_slice(&h.data);
        }
        Ok(out)
    }
}
