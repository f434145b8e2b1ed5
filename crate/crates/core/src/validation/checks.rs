use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{
    mentioned, vec_mentioned, Arg, BlockTarget, Env, ModelGraph, NodeKind, PredictOptions, PredictionDag, Support,
};
use crate::model::StatefulModel;
use crate::spec::BlockPlan;
use crate::stateful::{substream, McRng, Value};

/// Steps run by the smoke test.
pub const SMOKE_STEPS: usize = 10;
pub const AUDIT_POINTS: usize = 25;
pub const AUDIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmokeResult {
    pub pass: bool,
    pub reasons: Vec<String>,
    pub gradient_audit: Option<GradientAudit>,
}

/// Prediction inputs filled with the observed values of every input slot.
fn echo_inputs(graph: &ModelGraph) -> BTreeMap<String, Value> {
    let dag = PredictionDag::from_graph(graph);
    dag.input_slots()
        .into_iter()
        .filter_map(|slot| {
            let base = slot.strip_suffix("_new")?;
            let v = graph.id(base).ok()?;
            Some((slot, graph.value_of(v, graph.base_env())))
        })
        .collect()
}

/// Parent sets of stochastic nodes with derived quantities expanded into
/// their own parents.
fn expanded_parents(dag: &PredictionDag) -> BTreeSet<(String, String)> {
    let kinds: BTreeMap<&str, NodeKind> = dag.nodes.iter().map(|n| (n.name.as_str(), n.kind)).collect();
    let direct = |child: &str| -> Vec<&str> {
        dag.edges.iter().filter(|(_, c)| c == child).map(|(p, _)| p.as_str()).collect()
    };
    let mut out = BTreeSet::new();
    for n in dag.nodes.iter().filter(|n| n.kind != NodeKind::Deterministic) {
        let mut stack = direct(&n.name);
        let mut seen = BTreeSet::new();
        while let Some(p) = stack.pop() {
            if !seen.insert(p) {
                continue;
            }
            if kinds.get(p) == Some(&NodeKind::Deterministic) {
                stack.extend(direct(p));
            } else {
                out.insert((p.to_string(), n.name.clone()));
            }
        }
    }
    out
}

/// The same relation read off the compiled factors.
fn factor_parents(graph: &ModelGraph) -> BTreeSet<(String, String)> {
    let mut out = BTreeSet::new();
    for f in &graph.factors {
        let mut m = Vec::new();
        for a in &f.args {
            match a {
                Arg::Scalar(e) => mentioned(e, &mut m),
                Arg::Vector(r) => vec_mentioned(r, &mut m),
                Arg::Matrix(v) => m.push(*v),
            }
        }
        let mut seen = BTreeSet::new();
        while let Some(p) = m.pop() {
            if p == f.child || !seen.insert(p) {
                continue;
            }
            match &graph.var(p).body {
                Some(body) if graph.var(p).kind == NodeKind::Deterministic => mentioned(body, &mut m),
                _ => {
                    out.insert((graph.var(p).name.clone(), graph.var(f.child).name.clone()));
                }
            }
        }
    }
    out
}

/// Runs a few steps and checks finiteness, prediction purity and the prediction DAG.
pub fn smoke_test(model: &mut dyn StatefulModel, graph: &ModelGraph) -> SmokeResult {
    let mut reasons = Vec::new();
    for k in 0..SMOKE_STEPS {
        if let Err(e) = model.step(1) {
            reasons.push(format!("sampling failed at step {}: {e}", k + 1));
            break;
        }
        let bad: Vec<String> = model
            .get_current()
            .into_iter()
            .filter(|(_, v)| !v.is_finite())
            .map(|(n, _)| n)
            .collect();
        if !bad.is_empty() {
            reasons.push(format!("non-finite parameter after step {}: {}", k + 1, bad.join(", ")));
            break;
        }
    }

    let before = model.snapshot();
    if let Err(e) = model.predict_at(&echo_inputs(graph), &PredictOptions::default()) {
        reasons.push(format!("predict_at failed: {e}"));
    }
    if model.snapshot() != before {
        reasons.push("predict_at mutated the sampler state".into());
    }

    let dag = PredictionDag::from_graph(graph);
    let names: BTreeSet<&str> = graph.vars.iter().map(|v| v.name.as_str()).collect();
    let dag_names: BTreeSet<&str> = dag.nodes.iter().map(|n| n.name.as_str()).collect();
    if names != dag_names {
        reasons.push("prediction DAG nodes differ from the model graph".into());
    }
    let from_dag = expanded_parents(&dag);
    let from_factors = factor_parents(graph);
    if from_dag != from_factors {
        let extra: Vec<String> = from_dag.symmetric_difference(&from_factors).map(|(p, c)| format!("{p} -> {c}")).collect();
        reasons.push(format!("prediction DAG edges differ from the model factors: {}", extra.join(", ")));
    }

    SmokeResult {
        pass: reasons.is_empty(),
        reasons,
        gradient_audit: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditStatus {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockAudit {
    pub block: String,
    pub status: AuditStatus,
    #[serde(with = "super::floats")]
    pub max_rel_error: f64,
    /// Factor with the largest disagreement, when the block fails.
    pub factor: Option<String>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientAudit {
    pub pass: bool,
    pub blocks: Vec<BlockAudit>,
}

/// `|a - b| / max(1, |a|, |b|)`.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// Central difference step for coordinate value `x`.
pub fn fd_step(x: f64) -> f64 {
    1e-5 * x.abs().max(1.0)
}

/// Random interior point: continuous unknowns uniform on `(-2, 2)` in
/// unconstrained space, discrete ones uniform over their range.
pub fn random_point(graph: &ModelGraph, rng: &mut McRng) -> crate::Result<Env> {
    let mut env = graph.base_env().clone();
    for v in graph.unknowns() {
        let node = graph.var(v);
        let n = node.len();
        if let Support::Integer { lower, upper } = node.support {
            let lo = lower.unwrap_or(0);
            let hi = upper.unwrap_or(lo + 5);
            let vals: Vec<f64> = (0..n).map(|_| rng.random_range(lo..=hi) as f64).collect();
            env.set(v, &vals);
            continue;
        }
        if let Some(t) = node.support.transform(n, node.row_len()) {
            let x: Vec<f64> = (0..t.unconstrained_len(n)).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut theta = vec![0.0; n];
            t.forward(&x, &mut theta)?;
            env.set(v, &theta);
        }
    }
    Ok(env)
}

/// Largest relative error between analytic and central-difference gradients at `u`.
pub fn compare_gradient(graph: &ModelGraph, target: &mut BlockTarget, u: &[f64], env: &Env) -> crate::Result<f64> {
    let mut scratch = env.clone();
    let mut grad = vec![0.0; u.len()];
    target.logp_grad(graph, u, &mut scratch, &mut grad)?;
    let mut worst: f64 = 0.0;
    let mut x = u.to_vec();
    for j in 0..u.len() {
        let h = fd_step(u[j]);
        x[j] = u[j] + h;
        let up = target.logp(graph, &x, &mut scratch)?;
        x[j] = u[j] - h;
        let down = target.logp(graph, &x, &mut scratch)?;
        x[j] = u[j];
        worst = worst.max(rel_error(grad[j], (up - down) / (2.0 * h)));
    }
    Ok(worst)
}

/// Analytic versus finite-difference gradients for every continuous block.
pub fn gradient_audit(graph: &ModelGraph, plan: &BlockPlan, seed: u64) -> GradientAudit {
    let mut rng = substream(seed, 0);
    let mut blocks = Vec::new();
    for b in &plan.blocks {
        let ids: Vec<_> = b.params.iter().filter_map(|p| graph.id(p).ok()).collect();
        let mut audit = BlockAudit {
            block: b.name.clone(),
            status: AuditStatus::Pass,
            max_rel_error: 0.0,
            factor: None,
            message: None,
        };
        if ids.iter().any(|&v| !graph.var(v).is_continuous()) {
            audit.status = AuditStatus::NotApplicable;
            blocks.push(audit);
            continue;
        }
        let mut target = match BlockTarget::new(graph, &ids) {
            Ok(t) => t,
            Err(e) => {
                audit.status = AuditStatus::Fail;
                audit.message = Some(e.to_string());
                blocks.push(audit);
                continue;
            }
        };
        for _ in 0..AUDIT_POINTS {
            let outcome = random_point(graph, &mut rng).and_then(|env| {
                let u = target.read(&env)?;
                let err = compare_gradient(graph, &mut target, &u, &env)?;
                Ok((env, u, err))
            });
            match outcome {
                Ok((env, u, err)) => {
                    audit.max_rel_error = audit.max_rel_error.max(err);
                    if err >= AUDIT_TOLERANCE && audit.factor.is_none() {
                        audit.factor = worst_factor(graph, &target, &u, &env);
                    }
                }
                Err(e) => {
                    audit.message = Some(e.to_string());
                    audit.status = AuditStatus::Fail;
                    break;
                }
            }
        }
        if audit.max_rel_error >= AUDIT_TOLERANCE {
            audit.status = AuditStatus::Fail;
        }
        blocks.push(audit);
    }
    GradientAudit {
        pass: blocks.iter().all(|b| b.status != AuditStatus::Fail),
        blocks,
    }
}

fn worst_factor(graph: &ModelGraph, target: &BlockTarget, u: &[f64], env: &Env) -> Option<String> {
    let factors: BTreeSet<usize> = target.instances().iter().map(|&(f, _)| f).collect();
    let mut best: Option<(f64, usize)> = None;
    for f in factors {
        let mut only = target.only_factor(f);
        if let Ok(err) = compare_gradient(graph, &mut only, u, env) {
            if best.is_none_or(|(e, _)| err > e) {
                best = Some((err, f));
            }
        }
    }
    best.map(|(_, f)| graph.factors[f].label.clone())
}
