use serde::{Deserialize, Serialize};

use super::stats::{mean, quantile, quantile_sorted, sd, sorted};
use crate::error::{Error, Result};
use crate::graph::{ChildMode, Dist, ModelGraph, NodeKind};
use crate::model::draw_env;
use crate::stateful::{History, McRng, ValueKind};

/// Number of replicated datasets drawn for a check.
pub const REPLICATES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Continuous,
    Binary,
    Count,
}

impl DataKind {
    pub fn statistics(self) -> &'static [&'static str] {
        match self {
            DataKind::Continuous => &["mean", "sd", "min", "max", "q25", "q75"],
            DataKind::Binary => &["mean"],
            DataKind::Count => &["mean", "sd", "max"],
        }
    }

    fn validate(self, data: &[f64]) -> Result<()> {
        let ok = match self {
            DataKind::Continuous => true,
            DataKind::Binary => data.iter().all(|&x| x == 0.0 || x == 1.0),
            DataKind::Count => data.iter().all(|&x| x >= 0.0 && x.fract() == 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("data do not match the {self:?} kind")))
        }
    }
}

pub fn statistic(name: &str, data: &[f64]) -> f64 {
    match name {
        "mean" => mean(data),
        "sd" => sd(data),
        "min" => data.iter().copied().fold(f64::INFINITY, f64::min),
        "max" => data.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "q25" => quantile(data, 0.25),
        "q75" => quantile(data, 0.75),
        other => panic!("unknown statistic `{other}`"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatCheck {
    pub statistic: String,
    #[serde(with = "super::floats")]
    pub observed: f64,
    #[serde(with = "super::floats")]
    pub lower: f64,
    #[serde(with = "super::floats")]
    pub upper: f64,
    pub inside: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcResult {
    pub node: String,
    pub kind: DataKind,
    /// Central interval mass, 0.90 or 0.96.
    pub level: f64,
    pub checks: Vec<StatCheck>,
    pub pass: bool,
}

/// Compares observed statistics with central intervals over replicated datasets.
pub fn check_replicates(
    node: &str,
    observed: &[f64],
    replicates: &[Vec<f64>],
    kind: DataKind,
    relax: bool,
) -> Result<PpcResult> {
    if replicates.is_empty() || observed.is_empty() {
        return Err(Error::InvalidArgument("posterior predictive check needs data and replicates".into()));
    }
    kind.validate(observed)?;
    let level = if relax { 0.96 } else { 0.90 };
    let tail = (1.0 - level) / 2.0;
    let checks: Vec<StatCheck> = kind
        .statistics()
        .iter()
        .map(|&s| {
            let reps = sorted(&replicates.iter().map(|r| statistic(s, r)).collect::<Vec<_>>());
            let lower = quantile_sorted(&reps, tail);
            let upper = quantile_sorted(&reps, 1.0 - tail);
            let obs = statistic(s, observed);
            StatCheck {
                statistic: s.to_string(),
                observed: obs,
                lower,
                upper,
                inside: lower <= obs && obs <= upper,
            }
        })
        .collect();
    Ok(PpcResult {
        node: node.to_string(),
        kind,
        level,
        pass: checks.iter().all(|c| c.inside),
        checks,
    })
}

/// Data kind implied by an observed node's factor and element type.
pub fn infer_kind(graph: &ModelGraph, node: &str) -> Result<DataKind> {
    let v = graph.id(node)?;
    let var = graph.var(v);
    let dist = var.factor.map(|f| graph.factors[f].dist);
    Ok(match (dist, var.value_kind) {
        (Some(Dist::Bernoulli), _) => DataKind::Binary,
        (_, ValueKind::Int) | (Some(Dist::Poisson), _) => DataKind::Count,
        _ => DataKind::Continuous,
    })
}

/// Replicates `node` once per thinned posterior draw, conditioning on the
/// drawn parameters and latents.
pub fn replicate(graph: &ModelGraph, draws: &History, node: &str, rng: &mut McRng) -> Result<Vec<Vec<f64>>> {
    let v = graph.id(node)?;
    let var = graph.var(v);
    let fid = match var.factor {
        Some(f) if var.kind == NodeKind::Observed && graph.factors[f].mode == ChildMode::Elements => f,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "`{node}` is not an exchangeable observed node"
            )))
        }
    };
    if draws.len() < REPLICATES {
        return Err(Error::InvalidArgument(format!(
            "posterior predictive check needs at least {REPLICATES} draws, got {}",
            draws.len()
        )));
    }
    let stride = draws.len() / REPLICATES;
    let dist = graph.factors[fid].dist;
    let mut out = Vec::with_capacity(REPLICATES);
    for r in 0..REPLICATES {
        let env = draw_env(graph, draws, r * stride)?;
        let count = graph.factors[fid].count(&env);
        let mut rep = Vec::with_capacity(count);
        for i in 1..=count {
            let (_, args) = graph.instance_values((fid, i), &env)?;
            let refs: Vec<&[f64]> = args.iter().map(Vec::as_slice).collect();
            let x = dist
                .sample(&refs, 1, rng)
                .map_err(|m| Error::Factor { factor: graph.factors[fid].label.clone(), message: m })?;
            rep.push(x[0]);
        }
        out.push(rep);
    }
    Ok(out)
}

pub fn posterior_predictive_check(
    graph: &ModelGraph,
    draws: &History,
    node: &str,
    kind: Option<DataKind>,
    relax: bool,
    rng: &mut McRng,
) -> Result<PpcResult> {
    let kind = match kind {
        Some(k) => k,
        None => infer_kind(graph, node)?,
    };
    let observed = graph.base_env().get(graph.id(node)?).to_vec();
    let reps = replicate(graph, draws, node, rng)?;
    check_replicates(node, &observed, &reps, kind, relax)
}
