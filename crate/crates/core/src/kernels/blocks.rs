use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use super::conjugate::{
    gibbs_beta, gibbs_dirichlet, gibbs_gamma_poisson, gibbs_inv_gamma, gibbs_normal_mean, stick_breaking_update,
};
use super::discrete::{ffbs_hmm, sample_binary_vector, sample_categorical};
use super::nuts::{NutsSettings, NutsState, Potential};
use super::slice::{slice_step_univariate, SliceSettings};
use super::transform::Transform;
use crate::error::{Error, Result};
use crate::graph::{flat_index, Arg, BlockTarget, CExpr, Env, FactorId, Instance, ModelGraph, Support, VarId};
use crate::stateful::{KernelSpec, McRng, Transition, Value};

/// Owned values plus a private copy of everything the block conditions on.
struct Local {
    graph: Arc<ModelGraph>,
    env: Env,
    owns: Vec<VarId>,
}

impl Local {
    fn new(graph: Arc<ModelGraph>, env: &Env, owns: Vec<VarId>) -> Self {
        Self {
            graph,
            env: env.clone(),
            owns,
        }
    }

    fn current(&self) -> Vec<Value> {
        self.owns.iter().map(|&v| self.graph.value_of(v, &self.env)).collect()
    }

    fn condition(&mut self, name: &str, value: &Value) -> Result<VarId> {
        let v = self.graph.id(name)?;
        let flat = value.to_flat();
        if flat.len() != self.env.values[v].len() {
            return Err(Error::ShapeMismatch {
                name: name.to_string(),
                expected: self.graph.var(v).shape.clone(),
                got: value.shape(),
            });
        }
        self.env.set(v, &flat);
        Ok(v)
    }

    fn prior(&self, v: VarId) -> Result<FactorId> {
        self.graph
            .var(v)
            .factor
            .ok_or_else(|| Error::InvalidArgument(format!("`{}` has no prior", self.graph.var(v).name)))
    }

    /// Instances touching element `e` of `v`, other than its own prior.
    fn children_of(&self, v: VarId, e: usize) -> Vec<Instance> {
        let prior = self.graph.var(v).factor;
        self.graph
            .touching_element(v, e)
            .iter()
            .copied()
            .filter(|(f, _)| Some(*f) != prior)
            .collect()
    }

    /// Prior instance covering element `e` of `v`.
    fn prior_instance(&self, v: VarId, e: usize) -> Result<Instance> {
        let fid = self.prior(v)?;
        let f = &self.graph.factors[fid];
        let i = match f.mode {
            crate::graph::ChildMode::Elements => e + 1,
            crate::graph::ChildMode::Rows => e / self.env.cols[v].max(1) + 1,
            crate::graph::ChildMode::Whole => 1,
        };
        Ok((fid, i))
    }
}

struct TargetPotential<'a> {
    graph: &'a ModelGraph,
    target: &'a mut BlockTarget,
    env: &'a mut Env,
}

impl Potential for TargetPotential<'_> {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn logp_grad(&mut self, q: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.target.logp_grad(self.graph, q, self.env, grad)
    }
}

/// NUTS over the concatenated unconstrained coordinates of one or more variables.
pub struct NutsTransition {
    local: Local,
    scratch: Env,
    target: BlockTarget,
    state: NutsState,
    position: Option<Vec<f64>>,
}

impl NutsTransition {
    pub fn new(graph: Arc<ModelGraph>, env: &Env, owns: Vec<VarId>, settings: NutsSettings) -> Result<Self> {
        let target = BlockTarget::new(&graph, &owns)?;
        let state = NutsState::new(target.dim(), settings);
        Ok(Self {
            local: Local::new(graph, env, owns),
            scratch: env.clone(),
            target,
            state,
            position: None,
        })
    }

    pub fn state(&self) -> &NutsState {
        &self.state
    }
}

impl Transition for NutsTransition {
    fn current(&self) -> Vec<Value> {
        self.local.current()
    }

    fn condition(&mut self, name: &str, value: &Value) -> Result<()> {
        let v = self.local.condition(name, value)?;
        self.scratch.set(v, &self.local.env.values[v]);
        if self.local.owns.contains(&v) {
            self.position = None;
        }
        Ok(())
    }

    fn advance(&mut self, rng: &mut McRng) -> Result<()> {
        let mut q = match &self.position {
            Some(q) => q.clone(),
            None => self.target.read(&self.local.env)?,
        };
        let mut potential = TargetPotential {
            graph: &self.local.graph,
            target: &mut self.target,
            env: &mut self.scratch,
        };
        self.state.transition(&mut q, &mut potential, rng)?;
        self.target.write(&q, &mut self.local.env)?;
        for &v in &self.local.owns {
            self.scratch.set(v, &self.local.env.values[v]);
        }
        self.position = Some(q);
        Ok(())
    }

    fn kernel_state(&self) -> serde_json::Value {
        serde_json::to_value(&self.state).unwrap_or_default()
    }
}

/// Coordinate-wise slice sampling in unconstrained space.
pub struct SliceTransition {
    local: Local,
    transforms: Vec<Transform>,
    settings: SliceSettings,
}

impl SliceTransition {
    pub fn new(graph: Arc<ModelGraph>, env: &Env, owns: Vec<VarId>, settings: SliceSettings) -> Result<Self> {
        settings.validate()?;
        let mut transforms = Vec::new();
        for &v in &owns {
            let node = graph.var(v);
            match node.support.transform(node.len(), node.row_len()) {
                Some(t) if !matches!(t, Transform::Simplex { .. }) && node.is_continuous() => transforms.push(t),
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "slice sampling needs a continuous, elementwise-constrained variable; `{}` is not",
                        node.name
                    )))
                }
            }
        }
        Ok(Self {
            local: Local::new(graph, env, owns),
            transforms,
            settings,
        })
    }
}

impl Transition for SliceTransition {
    fn current(&self) -> Vec<Value> {
        self.local.current()
    }

    fn condition(&mut self, name: &str, value: &Value) -> Result<()> {
        self.local.condition(name, value).map(|_| ())
    }

    fn advance(&mut self, rng: &mut McRng) -> Result<()> {
        let graph = Arc::clone(&self.local.graph);
        let mut env = self.local.env.clone();
        for (k, &v) in self.local.owns.iter().enumerate() {
            let t = self.transforms[k];
            for e in 0..env.values[v].len() {
                let instances = graph.touching_element(v, e).to_vec();
                let x0 = t.inverse(&env.values[v][e..e + 1])?[0];
                let mut logpdf = |x: f64| -> Result<f64> {
                    let mut theta = [0.0];
                    let log_j = t.forward(&[x], &mut theta)?;
                    env.values[v][e] = theta[0];
                    Ok(graph.sum_logp(&env, &instances)? + log_j)
                };
                let x = slice_step_univariate(x0, &mut logpdf, &self.settings, rng)?;
                let mut theta = [0.0];
                t.forward(&[x], &mut theta)?;
                env.values[v][e] = theta[0];
            }
        }
        self.local.env = env;
        Ok(())
    }
}

/// Discrete kinds of exact conditional update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GibbsKind {
    Categorical,
    Binary,
    Hmm,
    StickBreaking,
    Dirichlet,
    Normal,
    InvGamma,
    Beta,
    Gamma,
}

/// Closed-form or enumerable conditional updates of a single variable.
pub struct GibbsTransition {
    local: Local,
    kind: GibbsKind,
}

impl GibbsTransition {
    pub fn new(graph: Arc<ModelGraph>, env: &Env, var: VarId, kind: GibbsKind) -> Self {
        Self {
            local: Local::new(graph, env, vec![var]),
            kind,
        }
    }

    fn var(&self) -> VarId {
        self.local.owns[0]
    }

    fn enumerate(&self, env: &mut Env, rng: &mut McRng) -> Result<()> {
        let v = self.var();
        let graph = &self.local.graph;
        let Support::Integer { lower: Some(lo), upper: Some(hi) } = graph.var(v).support else {
            return Err(Error::InvalidArgument("enumeration needs a bounded integer support".into()));
        };
        for e in 0..env.values[v].len() {
            let instances = graph.touching_element(v, e).to_vec();
            let mut lw = Vec::with_capacity((hi - lo + 1) as usize);
            for c in lo..=hi {
                env.values[v][e] = c as f64;
                lw.push(graph.sum_logp(env, &instances)?);
            }
            let pick = if self.kind == GibbsKind::Binary && lo == 0 && hi == 1 {
                sample_binary_vector(&[lw[1] - lw[0]], rng)?[0]
            } else {
                lo + sample_categorical(&lw, rng)? as i64
            };
            env.values[v][e] = pick as f64;
        }
        Ok(())
    }

    fn hmm(&self, env: &mut Env, rng: &mut McRng) -> Result<()> {
        let v = self.var();
        let graph = &self.local.graph;
        let prior = self.local.prior(v)?;
        let (_, args) = graph.instance_values((prior, 1), env)?;
        let log_init: Vec<f64> = args[0].iter().map(|p| p.ln()).collect();
        let log_trans: Vec<f64> = args[1].iter().map(|p| p.ln()).collect();
        let k = log_init.len();
        let t_len = env.values[v].len();
        let mut log_emit = vec![0.0; t_len * k];
        for t in 0..t_len {
            let saved = env.values[v][t];
            let children = self.local.children_of(v, t);
            for s in 0..k {
                env.values[v][t] = (s + 1) as f64;
                log_emit[t * k + s] = graph.sum_logp(env, &children)?;
            }
            env.values[v][t] = saved;
        }
        let path = ffbs_hmm(&log_init, &log_trans, &log_emit, rng)?;
        for (slot, s) in env.values[v].iter_mut().zip(path) {
            *slot = (s + 1) as f64;
        }
        Ok(())
    }

    /// Category counts over every categorical factor whose probabilities are `v`.
    fn counts(&self, env: &Env) -> Result<Vec<f64>> {
        let v = self.var();
        let mut counts = vec![0.0; env.values[v].len()];
        for inst in self.local.children_of(v, 0) {
            let (x, _) = self.local.graph.instance_values(inst, env)?;
            let c = x[0] as usize;
            if c < 1 || c > counts.len() {
                return Err(Error::Numerical(format!("category {c} out of range")));
            }
            counts[c - 1] += 1.0;
        }
        Ok(counts)
    }

    fn conjugate(&self, env: &mut Env, rng: &mut McRng) -> Result<()> {
        let v = self.var();
        let graph = Arc::clone(&self.local.graph);
        let n_elem = env.values[v].len();
        match self.kind {
            GibbsKind::StickBreaking | GibbsKind::Dirichlet => {
                let counts = self.counts(env)?;
                let (_, args) = graph.instance_values(self.local.prior_instance(v, 0)?, env)?;
                let w = if self.kind == GibbsKind::StickBreaking {
                    stick_breaking_update(args[0][0], &counts, rng)?
                } else {
                    gibbs_dirichlet(&args[0], &counts, rng)?
                };
                env.set(v, &w);
            }
            GibbsKind::Normal => {
                for e in 0..n_elem {
                    let (_, prior) = graph.instance_values(self.local.prior_instance(v, e)?, env)?;
                    let (m0, s0) = (prior[0][0], prior[1][0]);
                    let mut precision = 0.0;
                    let mut weighted = 0.0;
                    for inst in self.local.children_of(v, e) {
                        let f = &graph.factors[inst.0];
                        let Arg::Scalar(CExpr::Elem(_, idx)) = &f.args[0] else { continue };
                        if flat_index(env, v, idx, inst.1) != Some(e) {
                            continue;
                        }
                        let (x, args) = graph.instance_values(inst, env)?;
                        let p = 1.0 / (args[1][0] * args[1][0]);
                        precision += p;
                        weighted += p * x[0];
                    }
                    env.values[v][e] = if precision > 0.0 {
                        gibbs_normal_mean(m0, s0 * s0, weighted / precision, 1, 1.0 / precision, rng)?
                    } else {
                        m0 + s0 * rng.sample::<f64, _>(StandardNormal)
                    };
                }
            }
            GibbsKind::InvGamma | GibbsKind::Beta | GibbsKind::Gamma => {
                let (_, prior) = graph.instance_values(self.local.prior_instance(v, 0)?, env)?;
                let (a, b) = (prior[0][0], prior[1][0]);
                let mut n = 0usize;
                let mut total = 0.0;
                for inst in self.local.children_of(v, 0) {
                    let (x, args) = graph.instance_values(inst, env)?;
                    n += 1;
                    total += match self.kind {
                        GibbsKind::InvGamma => (x[0] - args[0][0]).powi(2),
                        _ => x[0],
                    };
                }
                let draw = match self.kind {
                    GibbsKind::InvGamma if n == 0 => gibbs_inv_gamma(a, b, 0.0, 1, rng).map(|_| ()).and(Err(
                        Error::InvalidArgument("inverse-gamma update without observations".into()),
                    ))?,
                    GibbsKind::InvGamma => gibbs_inv_gamma(a, b, total, n, rng)?,
                    GibbsKind::Beta => gibbs_beta(a, b, total, n as f64 - total, rng)?,
                    _ => gibbs_gamma_poisson(a, b, total, n, rng)?,
                };
                env.values[v][0] = draw;
            }
            _ => unreachable!("handled elsewhere"),
        }
        Ok(())
    }
}

impl Transition for GibbsTransition {
    fn current(&self) -> Vec<Value> {
        self.local.current()
    }

    fn condition(&mut self, name: &str, value: &Value) -> Result<()> {
        self.local.condition(name, value).map(|_| ())
    }

    fn advance(&mut self, rng: &mut McRng) -> Result<()> {
        let mut env = self.local.env.clone();
        match self.kind {
            GibbsKind::Categorical | GibbsKind::Binary => self.enumerate(&mut env, rng)?,
            GibbsKind::Hmm => self.hmm(&mut env, rng)?,
            _ => self.conjugate(&mut env, rng)?,
        }
        let v = self.var();
        if env.values[v].iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(self.local.graph.var(v).name.clone()));
        }
        self.local.env = env;
        Ok(())
    }
}

/// Builds the transition for a planned block.
pub fn make_transition(
    graph: Arc<ModelGraph>,
    env: &Env,
    params: &[String],
    kernel: &KernelSpec,
    default_warmup: u64,
) -> Result<Box<dyn Transition>> {
    let ids = params.iter().map(|p| graph.id(p)).collect::<Result<Vec<_>>>()?;
    let single = || -> Result<VarId> {
        match ids.as_slice() {
            [v] => Ok(*v),
            _ => Err(Error::InvalidArgument(format!("kernel `{}` updates exactly one variable", kernel.name))),
        }
    };
    let gibbs = |kind| -> Result<Box<dyn Transition>> {
        Ok(Box::new(GibbsTransition::new(Arc::clone(&graph), env, single()?, kind)))
    };
    match kernel.name.as_str() {
        "nuts" | "joint_nuts" => {
            let d = NutsSettings::default();
            let settings = NutsSettings {
                target_accept: kernel.setting("adapt_delta", d.target_accept),
                max_depth: kernel.setting("max_depth", d.max_depth as f64) as usize,
                warmup: kernel.setting("warmup", default_warmup as f64) as u64,
                ..d
            };
            Ok(Box::new(NutsTransition::new(Arc::clone(&graph), env, ids, settings)?))
        }
        "slice" => {
            let d = SliceSettings::default();
            let settings = SliceSettings {
                w: kernel.setting("w", d.w),
                m: kernel.setting("m", d.m as f64) as usize,
            };
            Ok(Box::new(SliceTransition::new(Arc::clone(&graph), env, ids, settings)?))
        }
        "categorical_gibbs" => gibbs(GibbsKind::Categorical),
        "binary_gibbs" => gibbs(GibbsKind::Binary),
        "hmm" => gibbs(GibbsKind::Hmm),
        "stick_breaking" => gibbs(GibbsKind::StickBreaking),
        "dirichlet_gibbs" => gibbs(GibbsKind::Dirichlet),
        "normal_gibbs" => gibbs(GibbsKind::Normal),
        "inv_gamma_gibbs" => gibbs(GibbsKind::InvGamma),
        "beta_gibbs" => gibbs(GibbsKind::Beta),
        "gamma_gibbs" => gibbs(GibbsKind::Gamma),
        other => Err(Error::InvalidArgument(format!("unknown kernel `{other}`"))),
    }
}
