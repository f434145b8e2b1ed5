use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::expr::eval;
use super::model::{Arg, ChildMode, ModelGraph, NodeKind, VarId};
use super::Env;
use crate::error::{Error, Result};
use crate::stateful::{History, McRng, Value, ValueKind};

/// Slot name for new values of a plate-local input.
pub fn input_slot(name: &str) -> String {
    format!("{name}_new")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DagNode {
    pub name: String,
    pub kind: NodeKind,
    /// Size name of the replicated dimension, for nodes that are per-unit.
    pub plate: Option<String>,
}

/// Nodes and parent edges used for predictive propagation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionDag {
    pub nodes: Vec<DagNode>,
    pub edges: BTreeSet<(String, String)>,
}

impl PredictionDag {
    pub fn from_graph(graph: &ModelGraph) -> Self {
        let plates = plates(graph);
        let nodes = graph
            .vars
            .iter()
            .map(|v| DagNode {
                name: v.name.clone(),
                kind: v.kind,
                plate: v
                    .dims
                    .first()
                    .cloned()
                    .flatten()
                    .filter(|d| plates.contains(d)),
            })
            .collect();
        let mut edges = BTreeSet::new();
        for v in &graph.vars {
            for &p in &v.parents {
                edges.insert((graph.vars[p].name.clone(), v.name.clone()));
            }
        }
        Self { nodes, edges }
    }

    /// Input slots that can be supplied, one per plate-local input node.
    pub fn input_slots(&self) -> Vec<String> {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Input && n.plate.is_some())
            .map(|n| input_slot(&n.name))
            .collect()
    }

    fn node(&self, name: &str) -> Option<&DagNode> {
        self.nodes.iter().find(|n| n.name == name)
    }

    /// Names of the nodes that become specified given the supplied input slots,
    /// in propagation order. Inputs themselves are not included.
    pub fn predictable(&self, supplied: &BTreeSet<String>, plate: &str) -> Vec<String> {
        let mut known: BTreeSet<&str> = BTreeSet::new();
        for n in &self.nodes {
            let local = n.plate.as_deref() == Some(plate);
            let given = match n.kind {
                NodeKind::Input => !local || supplied.contains(&n.name),
                NodeKind::Parameter | NodeKind::Latent => !local,
                NodeKind::Observed => false,
                NodeKind::Deterministic => false,
            };
            if given {
                known.insert(&n.name);
            }
        }
        let mut out = Vec::new();
        loop {
            let before = out.len();
            for n in &self.nodes {
                if known.contains(n.name.as_str()) || n.plate.as_deref() != Some(plate) || n.kind == NodeKind::Input {
                    continue;
                }
                let ready = self
                    .edges
                    .iter()
                    .filter(|(_, c)| c == &n.name)
                    .all(|(p, _)| known.contains(p.as_str()));
                if ready {
                    known.insert(&n.name);
                    out.push(n.name.clone());
                }
            }
            if out.len() == before {
                return out;
            }
        }
    }
}

/// Size names that index observed units.
pub fn plates(graph: &ModelGraph) -> BTreeSet<String> {
    graph
        .vars
        .iter()
        .filter(|v| v.kind == NodeKind::Observed)
        .filter_map(|v| v.dims.first().cloned().flatten())
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct PredictOptions {
    /// Use every `stride`-th draw (default 1).
    pub stride: usize,
    /// Number of new units when no input fixes it.
    pub size: Option<usize>,
    /// Plate to predict over; inferred from inputs or the first observed node.
    pub plate: Option<String>,
}

/// Predictions, one entry per used posterior draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Stochastic predicted nodes, keyed `<name>_new`.
    pub outputs: BTreeMap<String, Vec<Value>>,
    /// Deterministic nodes evaluated exactly, keyed `<name>_new`.
    pub deterministic: BTreeMap<String, Vec<Value>>,
    /// Per-unit nodes that could not be predicted from the supplied inputs.
    pub unpredictable: Vec<String>,
    pub draws: usize,
}

impl Prediction {
    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty() && self.deterministic.is_empty()
    }
}

/// Posterior predictive propagation over the prediction DAG.
///
/// Parameters come from each row of `draws`; `inputs` supplies new values for
/// per-unit inputs by slot name (`X_new`, or just `X`). Any node whose parents
/// are all specified is predicted, recursively.
pub fn predict_at(
    graph: &ModelGraph,
    draws: &History,
    inputs: &BTreeMap<String, Value>,
    options: &PredictOptions,
    rng: &mut McRng,
) -> Result<Prediction> {
    if draws.is_empty() {
        return Err(Error::Prediction("no posterior draws to predict from".into()));
    }
    let dag = PredictionDag::from_graph(graph);
    let plate_names = plates(graph);

    // Resolve input slots.
    let mut given: BTreeMap<VarId, &Value> = BTreeMap::new();
    for (slot, value) in inputs {
        let base = slot.strip_suffix("_new").unwrap_or(slot);
        let node = dag
            .node(base)
            .filter(|n| n.kind == NodeKind::Input && n.plate.is_some())
            .ok_or_else(|| {
                Error::Prediction(format!(
                    "`{slot}` is not a prediction input; available: {}",
                    dag.input_slots().join(", ")
                ))
            })?;
        given.insert(graph.id(&node.name)?, value);
    }
    let mut plate_of_inputs = given.keys().map(|&v| graph.var(v).dims[0].clone().expect("plate"));
    let plate = match (&options.plate, plate_of_inputs.next()) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => p,
        (None, None) => graph
            .vars
            .iter()
            .find(|v| v.kind == NodeKind::Observed && v.dims.first().is_some_and(Option::is_some))
            .and_then(|v| v.dims[0].clone())
            .ok_or_else(|| Error::Prediction("model has no per-unit observations".into()))?,
    };
    if !plate_names.contains(&plate) {
        return Err(Error::Prediction(format!("`{plate}` does not index observations")));
    }
    let mut size = options.size;
    for (&v, value) in &given {
        let node = graph.var(v);
        if node.dims[0].as_deref() != Some(plate.as_str()) {
            return Err(Error::Prediction(format!("`{}` is indexed by a different size than `{plate}`", node.name)));
        }
        let shape = value.shape();
        let kind_ok = value.kind() == node.value_kind || value.kind() == ValueKind::Int;
        if shape.len() != node.shape.len() || shape[1..] != node.shape[1..] || !kind_ok {
            return Err(Error::ShapeMismatch {
                name: input_slot(&node.name),
                expected: node.shape.clone(),
                got: shape,
            });
        }
        match size {
            Some(m) if m != shape[0] => {
                return Err(Error::Prediction(format!("inputs disagree on the number of new units ({m} vs {})", shape[0])))
            }
            _ => size = Some(shape[0]),
        }
        if !value.is_finite() {
            return Err(Error::NonFinite(input_slot(&node.name)));
        }
    }
    let m = size.unwrap_or(graph.sizes[&plate]);

    let supplied: BTreeSet<String> = given.keys().map(|&v| graph.var(v).name.clone()).collect();
    let order: Vec<VarId> = dag
        .predictable(&supplied, &plate)
        .iter()
        .map(|n| graph.id(n))
        .collect::<Result<_>>()?;
    let unpredictable = dag
        .nodes
        .iter()
        .filter(|n| n.plate.as_deref() == Some(plate.as_str()) && n.kind != NodeKind::Input)
        .filter(|n| !order.iter().any(|&v| graph.var(v).name == n.name))
        .map(|n| input_slot(&n.name))
        .collect();

    // Environment with every plate-local variable resized to `m` units.
    let mut env: Env = graph.base_env().clone();
    for (v, node) in graph.vars.iter().enumerate() {
        if node.dims.first().and_then(Option::as_deref) == Some(plate.as_str()) {
            let row: usize = node.shape[1..].iter().product();
            env.values[v] = match given.get(&v) {
                Some(val) => val.to_flat(),
                None => vec![f64::NAN; m * row],
            };
        }
    }

    let stride = options.stride.max(1);
    let mut outputs: BTreeMap<String, Vec<Value>> = BTreeMap::new();
    let mut deterministic: BTreeMap<String, Vec<Value>> = BTreeMap::new();
    let mut used = 0;
    for r in (0..draws.len()).step_by(stride) {
        for f in draws.fields() {
            let v = graph.id(&f.name)?;
            let local = graph.var(v).dims.first().and_then(Option::as_deref) == Some(plate.as_str());
            if !local {
                env.values[v].copy_from_slice(&draws.row(r)[f.offset..f.offset + f.len]);
            }
        }
        for &v in &order {
            predict_node(graph, v, &mut env, rng)?;
            let node = graph.var(v);
            let target = if node.kind == NodeKind::Deterministic { &mut deterministic } else { &mut outputs };
            target.entry(input_slot(&node.name)).or_default().push(graph.value_of(v, &env));
        }
        used += 1;
    }
    Ok(Prediction {
        outputs,
        deterministic,
        unpredictable,
        draws: used,
    })
}

fn predict_node(graph: &ModelGraph, v: VarId, env: &mut Env, rng: &mut McRng) -> Result<()> {
    let node = graph.var(v);
    if let Some(body) = &node.body {
        let n = env.values[v].len();
        let vals: Vec<f64> = (1..=n).map(|i| eval(body, env, i)).collect();
        if let Some(bad) = vals.iter().position(|x| !x.is_finite()) {
            return Err(Error::Prediction(format!("`{}[{}]` evaluated to a non-finite value", node.name, bad + 1)));
        }
        env.values[v] = vals;
        return Ok(());
    }
    let fid = node
        .factor
        .ok_or_else(|| Error::Prediction(format!("`{}` has no distribution to draw from", node.name)))?;
    let f = &graph.factors[fid];
    for i in 1..=f.count(env) {
        let (start, len) = f.child_range(env, i);
        let scalars: Vec<f64> = f
            .args
            .iter()
            .map(|a| match a {
                Arg::Scalar(e) => eval(e, env, i),
                _ => 0.0,
            })
            .collect();
        let mut slices: Vec<&[f64]> = Vec::with_capacity(f.args.len());
        for (k, a) in f.args.iter().enumerate() {
            slices.push(match a {
                Arg::Scalar(_) => std::slice::from_ref(&scalars[k]),
                Arg::Vector(r) => super::expr::vec_slice(env, r, i)
                    .ok_or_else(|| Error::Prediction(format!("{}: vector index out of range", f.label)))?,
                Arg::Matrix(m) => &env.values[*m],
            });
        }
        let draw = f
            .dist
            .sample(&slices, len, rng)
            .map_err(|m| Error::Prediction(format!("{}: {m}", f.label)))?;
        env.values[v][start..start + len].copy_from_slice(&draw);
        debug_assert!(f.mode != ChildMode::Whole || i == 1);
    }
    Ok(())
}
