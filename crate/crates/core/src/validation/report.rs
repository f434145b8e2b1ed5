use serde::{Deserialize, Serialize};

use super::checks::{gradient_audit, smoke_test, AuditStatus, SmokeResult};
use super::convergence::{ess_bulk, ess_tail, rank_normalized_rhat, ChainSet, Estimate};
use super::ppc::{posterior_predictive_check, PpcResult};
use super::psis::{psis_loo, PsisLoo};
use crate::error::Result;
use crate::graph::{build_graph, ModelGraph};
use crate::model::{draw_env, ModelSampler, SamplerConfig};
use crate::par::map_jobs;
use crate::spec::{BlockPlan, DataSet, ModelSpec};
use crate::stateful::{substream, History, ValueKind};

pub const RHAT_THRESHOLD: f64 = 1.05;
pub const ESS_WARN: f64 = 200.0;
pub const PARETO_K_WARN: f64 = 0.7;
/// Upper bound on the adaptation phase of gradient-based kernels.
pub const MAX_ADAPT: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub seed: u64,
    pub burnin: usize,
    pub keep: usize,
    pub extended_burnin: usize,
    pub extended_keep: usize,
    /// Rerun with the extended lengths when the first run does not converge.
    pub escalate: bool,
    pub chains: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            burnin: 4000,
            keep: 4000,
            extended_burnin: 20000,
            extended_keep: 20000,
            escalate: true,
            chains: 2,
        }
    }
}

impl ValidationConfig {
    pub fn seeded(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    /// Single run at the standard lengths, never escalated.
    pub fn short(seed: u64) -> Self {
        Self {
            seed,
            escalate: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedEstimate {
    pub name: String,
    #[serde(with = "super::floats")]
    pub value: f64,
    pub degenerate: bool,
}

impl NamedEstimate {
    fn new(name: &str, e: Estimate) -> Self {
        Self {
            name: name.to_string(),
            value: e.value,
            degenerate: e.degenerate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhatSection {
    pub params: Vec<NamedEstimate>,
    #[serde(with = "super::floats")]
    pub max: f64,
    /// Discrete coordinates, reported in ESS terms only.
    pub excluded: Vec<String>,
    /// Largest value of the first run, before any escalation.
    #[serde(with = "super::floats")]
    pub first_run_max: f64,
    pub extended: bool,
    pub error: Option<String>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssSection {
    pub bulk: Vec<NamedEstimate>,
    pub tail: Vec<NamedEstimate>,
    #[serde(with = "super::floats")]
    pub min: f64,
    pub warn: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcSection {
    pub level: f64,
    pub results: Vec<PpcResult>,
    pub errors: Vec<String>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsisSection {
    pub nodes: Vec<String>,
    #[serde(flatten)]
    pub loo: PsisLoo,
    pub warn: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Overall {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub burnin: usize,
    pub keep: usize,
    pub chains: usize,
    pub extended: bool,
    pub escalate: bool,
}

/// Outcome of the validation checklist. Sections after `smoke` are absent
/// when the smoke test fails, and `psis_loo` is absent without pointwise likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub smoke: SmokeResult,
    pub rhat: Option<RhatSection>,
    pub ess: Option<EssSection>,
    pub ppc: Option<PpcSection>,
    pub psis_loo: Option<PsisSection>,
    pub overall: Overall,
    pub config: RunConfig,
}

impl DiagnosticsReport {
    pub fn passed(&self) -> bool {
        self.overall != Overall::Fail
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| crate::Error::InvalidArgument(format!("invalid report: {e}")))
    }
}

/// True when the largest R-hat calls for the extended run.
pub fn needs_escalation(max_rhat: f64) -> bool {
    !(max_rhat < RHAT_THRESHOLD)
}

/// Continuous and discrete column labels of a history, in row order.
fn split_columns(h: &History) -> (Vec<(usize, String)>, Vec<String>) {
    let labels = h.labels();
    let mut cont = Vec::new();
    let mut disc = Vec::new();
    let mut col = 0;
    for f in h.fields() {
        for _ in 0..f.len {
            match f.kind {
                ValueKind::Real => cont.push((col, labels[col].clone())),
                ValueKind::Int => disc.push(labels[col].clone()),
            }
            col += 1;
        }
    }
    (cont, disc)
}

/// R-hat and ESS over the continuous columns of equal-layout histories.
pub fn convergence(histories: &[History]) -> Result<(RhatSection, EssSection)> {
    let (cont, excluded) = split_columns(&histories[0]);
    let names: Vec<String> = cont.iter().map(|(_, n)| n.clone()).collect();
    let draws = histories
        .iter()
        .map(|h| cont.iter().map(|&(c, _)| h.column(c)).collect())
        .collect();
    let set = ChainSet::new(names, draws)?;
    let per_param = map_jobs(set.names().len(), |p| {
        let chains = set.param(p);
        Ok::<_, crate::Error>((rank_normalized_rhat(&chains)?, ess_bulk(&chains)?, ess_tail(&chains)?))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut rhat = Vec::new();
    let mut bulk = Vec::new();
    let mut tail = Vec::new();
    for (name, (r, b, t)) in set.names().iter().zip(per_param) {
        rhat.push(NamedEstimate::new(name, r));
        bulk.push(NamedEstimate::new(name, b));
        tail.push(NamedEstimate::new(name, t));
    }
    let max = rhat.iter().map(|e| e.value).fold(f64::NEG_INFINITY, |a, b| if b.is_nan() { b } else { a.max(b) });
    let min = bulk.iter().chain(&tail).map(|e| e.value).fold(f64::INFINITY, f64::min);
    Ok((
        RhatSection {
            params: rhat,
            max,
            excluded,
            first_run_max: max,
            extended: false,
            error: None,
            pass: !needs_escalation(max),
        },
        EssSection {
            bulk,
            tail,
            min,
            warn: min < ESS_WARN,
        },
    ))
}

/// Pointwise log-likelihood of every exchangeable observation, one row per draw.
pub fn pointwise_loglik(graph: &ModelGraph, draws: &History) -> Result<Vec<Vec<f64>>> {
    let nodes = graph.exchangeable_observed();
    map_jobs(draws.len(), |d| {
        let env = draw_env(graph, draws, d)?;
        let mut row = Vec::new();
        for &v in &nodes {
            let fid = graph.var(v).factor.expect("observed node has a factor");
            for i in 1..=graph.factors[fid].count(&env) {
                row.push(graph.instance_logp((fid, i), &env, None)?);
            }
        }
        Ok(row)
    })
    .into_iter()
    .collect()
}

fn relaxed(plan: &BlockPlan) -> bool {
    plan.blocks.iter().any(|b| b.kernel.name == "joint_nuts")
}

/// Draws `keep` iterations after `burnin` for one validation chain.
pub fn run_chain(spec: &ModelSpec, graph: &ModelGraph, seed: u64, chain: u64, burnin: usize, keep: usize) -> Result<History> {
    let config = SamplerConfig {
        seed,
        chain: Some(chain),
        keep_history: true,
        warmup: burnin.min(MAX_ADAPT) as u64,
    };
    let mut model = ModelSampler::from_graph(spec, graph.clone(), &config)?;
    crate::model::StatefulModel::step(&mut model, burnin + keep)?;
    Ok(crate::model::StatefulModel::get_history(&model).skip(burnin))
}

/// The full checklist on a model built from data.
pub fn run_validation(spec: &ModelSpec, data: &DataSet, config: &ValidationConfig) -> Result<DiagnosticsReport> {
    run_validation_graph(spec, build_graph(spec, data)?, config)
}

/// The full checklist on an already compiled graph.
pub fn run_validation_graph(spec: &ModelSpec, graph: ModelGraph, config: &ValidationConfig) -> Result<DiagnosticsReport> {
    let runner = |chain: u64, burnin: usize, keep: usize| run_chain(spec, &graph, config.seed, chain, burnin, keep);
    validate_with(spec, &graph, config, runner)
}

/// The checklist with chains supplied by `runner(chain_id, burnin, keep)`.
pub fn validate_with<F>(spec: &ModelSpec, graph: &ModelGraph, config: &ValidationConfig, runner: F) -> Result<DiagnosticsReport>
where
    F: Fn(u64, usize, usize) -> Result<History> + Sync,
{
    let mut smoke_model = ModelSampler::from_graph(spec, graph.clone(), &SamplerConfig::seeded(config.seed))?;
    let mut smoke = smoke_test(&mut smoke_model, graph);
    let audit = gradient_audit(graph, smoke_model.plan(), config.seed);
    for b in audit.blocks.iter().filter(|b| b.status == AuditStatus::Fail) {
        let mut reason = format!("gradient audit failed for block `{}`", b.block);
        if let Some(f) = &b.factor {
            reason.push_str(&format!(" at factor {f}"));
        }
        if let Some(m) = &b.message {
            reason.push_str(&format!(": {m}"));
        }
        smoke.reasons.push(reason);
    }
    smoke.pass = smoke.reasons.is_empty();
    smoke.gradient_audit = Some(audit);

    let mut run_config = RunConfig {
        seed: config.seed,
        burnin: config.burnin,
        keep: config.keep,
        chains: config.chains,
        extended: false,
        escalate: config.escalate,
    };
    if !smoke.pass {
        return Ok(DiagnosticsReport {
            smoke,
            rhat: None,
            ess: None,
            ppc: None,
            psis_loo: None,
            overall: Overall::Fail,
            config: run_config,
        });
    }

    let run = |first_id: u64, burnin: usize, keep: usize| -> Result<Vec<History>> {
        map_jobs(config.chains, |c| runner(first_id + c as u64, burnin, keep)).into_iter().collect()
    };
    let failed = |e: crate::Error| RhatSection {
        params: Vec::new(),
        max: f64::NAN,
        excluded: Vec::new(),
        first_run_max: f64::NAN,
        extended: false,
        error: Some(e.to_string()),
        pass: false,
    };

    let mut chains = None;
    let (mut rhat, mut ess) = match run(0, config.burnin, config.keep).and_then(|h| {
        let c = convergence(&h)?;
        chains = Some(h);
        Ok(c)
    }) {
        Ok(c) => (c.0, Some(c.1)),
        Err(e) => (failed(e), None),
    };
    if rhat.error.is_none() && config.escalate && needs_escalation(rhat.max) {
        let first = rhat.max;
        run_config.burnin = config.extended_burnin;
        run_config.keep = config.extended_keep;
        run_config.extended = true;
        // A fresh pair of chains on their own substreams.
        match run(config.chains as u64, config.extended_burnin, config.extended_keep).and_then(|h| {
            let c = convergence(&h)?;
            chains = Some(h);
            Ok(c)
        }) {
            Ok((r, e)) => {
                rhat = r;
                ess = Some(e);
            }
            Err(e) => {
                rhat = failed(e);
                ess = None;
                chains = None;
            }
        }
        rhat.first_run_max = first;
        rhat.extended = true;
    }

    let (ppc, psis) = match &chains {
        Some(h) => (Some(ppc_section(spec, graph, &h[0], config.seed)?), psis_section(graph, h)),
        None => (None, None),
    };

    let fail = !rhat.pass || ppc.as_ref().is_none_or(|p| !p.pass);
    let warn = ess.as_ref().is_some_and(|e| e.warn) || psis.as_ref().is_some_and(|p| p.warn);
    Ok(DiagnosticsReport {
        smoke,
        rhat: Some(rhat),
        ess,
        ppc,
        psis_loo: psis,
        overall: if fail {
            Overall::Fail
        } else if warn {
            Overall::Warn
        } else {
            Overall::Pass
        },
        config: run_config,
    })
}

fn ppc_section(spec: &ModelSpec, graph: &ModelGraph, draws: &History, seed: u64) -> Result<PpcSection> {
    let plan = crate::spec::assign_blocks(spec, graph).map_err(crate::Error::Spec)?;
    let relax = relaxed(&plan);
    let mut rng = substream(seed, 1);
    let mut results = Vec::new();
    let mut errors = Vec::new();
    for v in graph.exchangeable_observed() {
        let name = &graph.var(v).name;
        match posterior_predictive_check(graph, draws, name, None, relax, &mut rng) {
            Ok(r) => results.push(r),
            Err(e) => errors.push(format!("{name}: {e}")),
        }
    }
    Ok(PpcSection {
        level: if relax { 0.96 } else { 0.90 },
        pass: errors.is_empty() && results.iter().all(|r| r.pass),
        results,
        errors,
    })
}

fn psis_section(graph: &ModelGraph, chains: &[History]) -> Option<PsisSection> {
    let nodes: Vec<String> = graph.exchangeable_observed().into_iter().map(|v| graph.var(v).name.clone()).collect();
    if nodes.is_empty() {
        return None;
    }
    let refs: Vec<&History> = chains.iter().collect();
    let pooled = History::concat(&refs).ok()?;
    let loo = psis_loo(&pointwise_loglik(graph, &pooled).ok()?).ok()?;
    Some(PsisSection {
        nodes,
        warn: loo.buckets.bad > 0,
        loo,
    })
}
