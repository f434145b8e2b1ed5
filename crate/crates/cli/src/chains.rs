//! Chain CSV files and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use blockmc::stateful::{History, ValueKind};
use serde::{Deserialize, Serialize};

use crate::Failure;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub chain_seconds: Vec<f64>,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub model: String,
    pub source: String,
    pub data: serde_json::Value,
    pub seed: u64,
    pub burnin: usize,
    pub keep: usize,
    pub chains: usize,
    pub history: bool,
    pub files: Vec<String>,
    pub columns: Vec<String>,
    pub timings: Timings,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, Failure> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("invalid manifest {}: {e}", path.display())))
    }
}

pub fn chain_file_name(chain: usize) -> String {
    format!("chain_{}.csv", chain + 1)
}

/// Header plus one line per draw; reals with 17 significant digits, integers as integers.
pub fn render_csv(history: &History) -> String {
    let mut out = history.labels().join(",");
    out.push('\n');
    let mut ints = vec![false; history.width()];
    for f in history.fields() {
        if f.kind == ValueKind::Int {
            ints[f.offset..f.offset + f.len].fill(true);
        }
    }
    for row in history.rows() {
        for (j, (&x, &int)) in row.iter().zip(&ints).enumerate() {
            if j > 0 {
                out.push(',');
            }
            if int {
                write!(out, "{}", x as i64).unwrap();
            } else {
                write!(out, "{x:.16e}").unwrap();
            }
        }
        out.push('\n');
    }
    out
}

/// A chain file: column labels and draws by row.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainFile {
    pub path: PathBuf,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl ChainFile {
    pub fn read(path: &Path) -> Result<Self, Failure> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
        let columns: Vec<String> = rdr
            .headers()
            .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
            let row = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Failure::config(format!("{} row {}: {e}", path.display(), i + 1)))?;
            rows.push(row);
        }
        Ok(Self {
            path: path.to_path_buf(),
            columns,
            rows,
        })
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[c]).collect()
    }
}
