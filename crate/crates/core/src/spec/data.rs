use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stateful::Value;

/// Named data payloads supplied alongside a model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DataSet {
    values: BTreeMap<String, Value>,
}

impl DataSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Value) {
        self.values.insert(name.to_string(), value);
    }

    pub fn with(mut self, name: &str, value: Value) -> Self {
        self.insert(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn extend(&mut self, other: DataSet) {
        self.values.extend(other.values);
    }

    /// Reads a CSV whose columns are named `y` (vector) or `X.1`, `X.2`, ...
    /// (matrix columns). All columns must have the same number of rows.
    pub fn from_csv_str(text: &str) -> Result<DataSet> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Data(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data(e.to_string()))?;
            for (c, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Data(format!("row {}: `{field}` in column `{}` is not a number", r + 2, headers[c]))
                })?;
                columns[c].push(v);
            }
        }
        let mut groups: BTreeMap<String, Vec<(usize, Vec<f64>)>> = BTreeMap::new();
        for (h, col) in headers.iter().zip(columns) {
            match h.split_once('.') {
                Some((base, idx)) => {
                    let k: usize = idx
                        .parse()
                        .map_err(|_| Error::Data(format!("bad matrix column name `{h}`")))?;
                    groups.entry(base.to_string()).or_default().push((k, col));
                }
                None => groups.entry(h.clone()).or_default().push((0, col)),
            }
        }
        let mut out = DataSet::new();
        for (name, mut cols) in groups {
            cols.sort_by_key(|(k, _)| *k);
            if cols.len() == 1 && cols[0].0 == 0 {
                out.insert(&name, Value::RealVec(cols.pop().expect("one column").1));
                continue;
            }
            if cols.iter().enumerate().any(|(i, (k, _))| *k != i + 1) {
                return Err(Error::Data(format!("matrix `{name}` columns must be numbered 1..n")));
            }
            let rows = cols[0].1.len();
            let ncols = cols.len();
            let mut data = vec![0.0; rows * ncols];
            for (j, (_, col)) in cols.iter().enumerate() {
                for (i, v) in col.iter().enumerate() {
                    data[i * ncols + j] = *v;
                }
            }
            out.insert(&name, Value::RealMat { rows, cols: ncols, data });
        }
        Ok(out)
    }

    /// Reads `{"y": [..], "X": [[..], ..], "N": 8}`.
    pub fn from_json_str(text: &str) -> Result<DataSet> {
        let doc: serde_json::Value = serde_json::from_str(text)?;
        let obj = doc
            .as_object()
            .ok_or_else(|| Error::Data("data JSON must be an object".into()))?;
        let mut out = DataSet::new();
        for (k, v) in obj {
            out.insert(k, json_to_value(k, v)?);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut obj = serde_json::Map::new();
        for (k, v) in &self.values {
            let j = match v {
                Value::Real(x) => serde_json::json!(x),
                Value::Int(i) => serde_json::json!(i),
                Value::RealVec(xs) => serde_json::json!(xs),
                Value::IntVec(xs) => serde_json::json!(xs),
                Value::RealMat { cols, data, .. } => serde_json::json!(data.chunks(*cols).collect::<Vec<_>>()),
            };
            obj.insert(k.clone(), j);
        }
        serde_json::Value::Object(obj)
    }

    /// Loads `.json` files as JSON and anything else as CSV.
    pub fn load(path: &Path) -> Result<DataSet> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_csv_str(&text)
        }
    }
}

pub(crate) fn json_to_value(name: &str, v: &serde_json::Value) -> Result<Value> {
    let bad = || Error::Data(format!("`{name}` must be a number, a list of numbers or a list of rows"));
    let num = |x: &serde_json::Value| x.as_f64().ok_or_else(bad);
    match v {
        serde_json::Value::Number(n) => Ok(match n.as_i64() {
            Some(i) => Value::Int(i),
            None => Value::Real(n.as_f64().ok_or_else(bad)?),
        }),
        serde_json::Value::Array(items) if items.iter().all(|x| x.is_array()) && !items.is_empty() => {
            let rows = items.len();
            let mut data = Vec::new();
            let mut cols = None;
            for row in items {
                let row = row.as_array().ok_or_else(bad)?;
                if *cols.get_or_insert(row.len()) != row.len() {
                    return Err(Error::Data(format!("`{name}` has ragged rows")));
                }
                for x in row {
                    data.push(num(x)?);
                }
            }
            Ok(Value::RealMat {
                rows,
                cols: cols.unwrap_or(0),
                data,
            })
        }
        serde_json::Value::Array(items) => Ok(Value::RealVec(items.iter().map(num).collect::<Result<_>>()?)),
        _ => Err(bad()),
    }
}
