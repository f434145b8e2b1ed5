use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{build_graph, predict_at, Env, ModelGraph, NodeKind, PredictOptions, Prediction, Support, VarId};
use crate::kernels::make_transition;
use crate::spec::{assign_blocks, load_template, parse_spec, BlockPlan, DataSet, ModelSpec};
use crate::stateful::{
    Block, BlockDescriptor, EntryRole, History, McRng, RngStreams, Sampler, SharedPool, StatefulBlock, Value,
};

/// The stateful surface shared by every front end.
pub trait StatefulModel {
    fn step(&mut self, n: usize) -> Result<()>;
    fn set_current(&mut self, inputs: &BTreeMap<String, Value>) -> Result<()>;
    fn get_current(&self) -> BTreeMap<String, Value>;
    fn get_history(&self) -> &History;
    fn predict_at(&mut self, inputs: &BTreeMap<String, Value>, options: &PredictOptions) -> Result<Prediction>;
    fn snapshot(&self) -> Vec<u8>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub seed: u64,
    /// Validation chain index; selects substream `2 + chain` instead of the default pair.
    pub chain: Option<u64>,
    pub keep_history: bool,
    /// Adaptation length handed to gradient-based kernels.
    pub warmup: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            chain: None,
            keep_history: true,
            warmup: 1000,
        }
    }
}

impl SamplerConfig {
    pub fn seeded(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }
}

/// A model compiled into a block sampler over a shared pool.
pub struct ModelSampler {
    spec: ModelSpec,
    graph: Arc<ModelGraph>,
    plan: BlockPlan,
    sampler: Sampler,
}

fn initial_env(graph: &ModelGraph, rng: &mut McRng) -> Result<Env> {
    let mut env = graph.base_env().clone();
    for v in graph.unknowns() {
        let node = graph.var(v);
        if let Some(init) = &node.init {
            env.set(v, init);
            continue;
        }
        let n = node.len();
        if let Support::Integer { lower, upper } = node.support {
            let start = lower.or(upper).unwrap_or(0) as f64;
            env.set(v, &vec![start; n]);
            continue;
        }
        let t = node
            .support
            .transform(n, node.row_len())
            .ok_or_else(|| Error::InvalidArgument(format!("no unconstrained form for `{}`", node.name)))?;
        let x: Vec<f64> = (0..t.unconstrained_len(n)).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut theta = vec![0.0; n];
        t.forward(&x, &mut theta)?;
        env.set(v, &theta);
    }
    Ok(env)
}

impl ModelSampler {
    pub fn new(spec: &ModelSpec, data: &DataSet, config: &SamplerConfig) -> Result<Self> {
        let graph = build_graph(spec, data)?;
        Self::from_graph(spec, graph, config)
    }

    pub fn from_source(source: &str, data: &DataSet, config: &SamplerConfig) -> Result<Self> {
        let spec = parse_spec(source).map_err(Error::Spec)?;
        Self::new(&spec, data, config)
    }

    /// A bundled template fitted to data simulated with `data_seed`.
    pub fn from_template(name: &str, data_seed: u64, config: &SamplerConfig) -> Result<Self> {
        let (spec, template) = load_template(name)?;
        Self::new(&spec, &template.generate(data_seed), config)
    }

    /// Builds from an already compiled graph (which may carry injected faults).
    pub fn from_graph(spec: &ModelSpec, graph: ModelGraph, config: &SamplerConfig) -> Result<Self> {
        let plan = assign_blocks(spec, &graph).map_err(Error::Spec)?;
        let graph = Arc::new(graph);
        let mut rng = match config.chain {
            Some(k) => RngStreams::for_chain(config.seed, k),
            None => RngStreams::new(config.seed),
        };
        let mut env = initial_env(&graph, rng.sampling())?;

        // Discrete latents start from one exact conditional draw given everything else.
        for b in &plan.blocks {
            let ids = b.params.iter().map(|p| graph.id(p)).collect::<Result<Vec<VarId>>>()?;
            if ids.iter().all(|&v| graph.var(v).support.is_discrete()) {
                let mut t = make_transition(Arc::clone(&graph), &env, &b.params, &b.kernel, config.warmup)?;
                t.advance(rng.sampling()).map_err(|e| e.in_block(&b.name))?;
                for (&v, value) in ids.iter().zip(t.current()) {
                    env.set(v, &value.to_flat());
                }
            }
        }

        let mut pool = SharedPool::new();
        let mut initial = BTreeMap::new();
        for (v, node) in graph.vars.iter().enumerate() {
            let role = match node.kind {
                NodeKind::Observed | NodeKind::Input => EntryRole::Data,
                NodeKind::Parameter | NodeKind::Latent => EntryRole::Owned,
                NodeKind::Deterministic => continue,
            };
            let value = graph.value_of(v, &env);
            pool.declare(&node.name, value.clone(), role)?;
            initial.insert(node.name.clone(), value);
        }

        let mut blocks: Vec<Box<dyn Block>> = Vec::with_capacity(plan.blocks.len());
        for b in &plan.blocks {
            let ids = b.params.iter().map(|p| graph.id(p)).collect::<Result<Vec<VarId>>>()?;
            let requires = graph
                .markov_blanket(&ids)
                .into_iter()
                .filter(|&v| graph.var(v).kind != NodeKind::Deterministic)
                .map(|v| graph.var(v).name.clone())
                .collect();
            let descriptor = BlockDescriptor {
                name: b.name.clone(),
                owns: b.params.clone(),
                requires,
                kernel: b.kernel.clone(),
            };
            let transition = make_transition(Arc::clone(&graph), &env, &b.params, &b.kernel, config.warmup)
                .map_err(|e| e.in_block(&b.name))?;
            blocks.push(Box::new(StatefulBlock::new(descriptor, transition, &initial, config.keep_history)?));
        }
        let sampler = Sampler::new(pool, blocks, rng, config.keep_history)?;
        Ok(Self {
            spec: spec.clone(),
            graph,
            plan,
            sampler,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn graph(&self) -> &ModelGraph {
        &self.graph
    }

    pub fn plan(&self) -> &BlockPlan {
        &self.plan
    }

    pub fn sampler(&self) -> &Sampler {
        &self.sampler
    }

    /// Graph environment holding the current pool values.
    pub fn current_env(&self) -> Result<Env> {
        let mut env = self.graph.base_env().clone();
        for (name, entry) in self.sampler.pool().iter() {
            env.set(self.graph.id(name)?, &entry.value.to_flat());
        }
        Ok(env)
    }
}

/// Graph environment for draw `i` of a history, with data from the graph.
pub fn draw_env(graph: &ModelGraph, history: &History, i: usize) -> Result<Env> {
    let mut env = graph.base_env().clone();
    let row = history.row(i);
    for f in history.fields() {
        env.set(graph.id(&f.name)?, &row[f.offset..f.offset + f.len]);
    }
    Ok(env)
}

impl StatefulModel for ModelSampler {
    fn step(&mut self, n: usize) -> Result<()> {
        self.sampler.step(n)
    }

    fn set_current(&mut self, inputs: &BTreeMap<String, Value>) -> Result<()> {
        self.sampler.set_current(inputs)
    }

    fn get_current(&self) -> BTreeMap<String, Value> {
        self.sampler.get_current()
    }

    fn get_history(&self) -> &History {
        self.sampler.get_history()
    }

    fn predict_at(&mut self, inputs: &BTreeMap<String, Value>, options: &PredictOptions) -> Result<Prediction> {
        let (history, rng) = self.sampler.history_and_prediction_rng();
        predict_at(&self.graph, history, inputs, options, rng)
    }

    fn snapshot(&self) -> Vec<u8> {
        self.sampler.snapshot()
    }
}
