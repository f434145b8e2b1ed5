use std::collections::{BTreeMap, BTreeSet};

use super::block::{Block, BlockDescriptor, KernelSpec};
use super::history::History;
use super::pool::{EntryRole, SharedPool};
use super::rng::{McRng, RngStreams};
use super::value::Value;
use crate::error::{Error, Result};

/// One outer iteration of the sequential scan: each block reads its
/// requirements, steps, and commits its owned values before the next block runs.
///
/// On failure returns the failing block's name; the pool keeps its last
/// committed values and the block is rolled back to them.
pub(crate) fn run_sweep(
    pool: &mut SharedPool,
    blocks: &mut [Box<dyn Block>],
    rng: &mut McRng,
) -> std::result::Result<(), (String, Error)> {
    for block in blocks.iter_mut() {
        let name = block.name().to_string();
        let fail = |e: Error| match e {
            Error::Block { block, source } if block == name => (name.clone(), *source),
            e => (name.clone(), e),
        };
        let mut inputs = BTreeMap::new();
        for req in &block.descriptor().requires {
            inputs.insert(req.clone(), pool.get(req).map_err(fail)?.clone());
        }
        block.set_current(&inputs).map_err(fail)?;
        block.step(rng).map_err(fail)?;
        let current = block.get_current();
        let checked = current
            .iter()
            .try_for_each(|(k, v)| pool.check_write(k, v));
        if let Err(e) = checked {
            let mut previous = BTreeMap::new();
            for k in current.keys() {
                previous.insert(k.clone(), pool.get(k).map_err(fail)?.clone());
            }
            block.set_current(&previous).map_err(fail)?;
            return Err(fail(e));
        }
        for (k, v) in current {
            pool.write(&k, v).map_err(fail)?;
        }
    }
    Ok(())
}

fn check_layout(pool: &SharedPool, blocks: &[Box<dyn Block>]) -> Result<()> {
    let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
    for block in blocks {
        let d = block.descriptor();
        d.validate()?;
        for name in d.owns.iter().chain(&d.requires) {
            if !pool.is_declared(name) {
                return Err(Error::Layout(format!(
                    "block `{}` references undeclared `{name}`",
                    d.name
                )));
            }
        }
        for name in &d.owns {
            if pool.entry(name)?.role == EntryRole::Data {
                return Err(Error::Layout(format!(
                    "block `{}` owns data entry `{name}`",
                    d.name
                )));
            }
            if let Some(other) = owner.insert(name, &d.name) {
                return Err(Error::Layout(format!(
                    "`{name}` is owned by both `{other}` and `{}`",
                    d.name
                )));
            }
        }
    }
    for (name, entry) in pool.iter() {
        if entry.role == EntryRole::Owned && !owner.contains_key(name) {
            return Err(Error::Layout(format!("`{name}` is not owned by any block")));
        }
    }
    Ok(())
}

fn owned_layout(
    blocks: &[Box<dyn Block>],
) -> Vec<(String, super::value::ValueKind, Vec<usize>)> {
    blocks
        .iter()
        .flat_map(|b| {
            let current = b.get_current();
            b.descriptor()
                .owns
                .iter()
                .map(|n| {
                    let v = &current[n];
                    (n.clone(), v.kind(), v.shape())
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

fn record_row(history: &mut History, pool: &SharedPool, iteration: u64) -> Result<()> {
    let mut row = Vec::with_capacity(history.width());
    for f in history.fields() {
        pool.get(&f.name)?.extend_flat(&mut row);
    }
    history.record_flat(iteration, &row)
}

/// Top-level sampler: a shared pool plus an ordered list of blocks.
pub struct Sampler {
    pool: SharedPool,
    blocks: Vec<Box<dyn Block>>,
    rng: RngStreams,
    history: History,
    iteration: u64,
}

impl Sampler {
    pub fn new(
        pool: SharedPool,
        blocks: Vec<Box<dyn Block>>,
        rng: RngStreams,
        keep_history: bool,
    ) -> Result<Self> {
        check_layout(&pool, &blocks)?;
        let history = History::new(&owned_layout(&blocks), keep_history);
        Ok(Self {
            pool,
            blocks,
            rng,
            history,
            iteration: 0,
        })
    }

    pub fn step(&mut self, n: usize) -> Result<()> {
        for _ in 0..n {
            let iteration = self.iteration + 1;
            run_sweep(&mut self.pool, &mut self.blocks, self.rng.sampling()).map_err(
                |(block, e)| Error::Iteration {
                    block,
                    iteration,
                    source: Box::new(e),
                },
            )?;
            self.iteration = iteration;
            record_row(&mut self.history, &self.pool, iteration)?;
        }
        Ok(())
    }

    /// Overrides pool entries. Owned names are also pushed into their owning
    /// block; data names are picked up by dependent blocks on the next sweep.
    pub fn set_current(&mut self, inputs: &BTreeMap<String, Value>) -> Result<()> {
        for (k, v) in inputs {
            self.pool.check_write(k, v)?;
        }
        for block in &mut self.blocks {
            let mine: BTreeMap<String, Value> = inputs
                .iter()
                .filter(|(k, _)| block.descriptor().owns.contains(k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            if !mine.is_empty() {
                block.set_current(&mine)?;
            }
        }
        for (k, v) in inputs {
            self.pool.write(k, v.clone())?;
        }
        Ok(())
    }

    /// Latest values of every owned quantity.
    pub fn get_current(&self) -> BTreeMap<String, Value> {
        self.history
            .fields()
            .iter()
            .map(|f| (f.name.clone(), self.pool.get(&f.name).expect("owned").clone()))
            .collect()
    }

    pub fn get_history(&self) -> &History {
        &self.history
    }

    pub fn pool(&self) -> &SharedPool {
        &self.pool
    }

    pub fn blocks(&self) -> &[Box<dyn Block>] {
        &self.blocks
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Draw history together with the prediction stream, for predictive sampling.
    pub fn history_and_prediction_rng(&mut self) -> (&History, &mut McRng) {
        (&self.history, self.rng.prediction())
    }

    pub fn rng_mut(&mut self) -> &mut RngStreams {
        &mut self.rng
    }

    /// Serialized sampling state: pool, blocks, sampling stream position and history.
    /// The prediction stream is deliberately absent.
    pub fn snapshot(&self) -> Vec<u8> {
        let state = serde_json::json!({
            "iteration": self.iteration,
            "pool": self.pool,
            "blocks": self.blocks.iter().map(|b| b.snapshot()).collect::<Vec<_>>(),
            "sampling_stream": self.rng.sampling_position(),
            "history": self.history,
        });
        serde_json::to_vec(&state).expect("state serializes")
    }
}

/// A block made of child blocks that share a child-scoped pool.
pub struct CompositeBlock {
    descriptor: BlockDescriptor,
    pool: SharedPool,
    children: Vec<Box<dyn Block>>,
    history: History,
    steps: u64,
}

impl CompositeBlock {
    /// `scope` must declare every name the children own or require.
    pub fn new(
        name: &str,
        scope: &SharedPool,
        children: Vec<Box<dyn Block>>,
        keep_history: bool,
    ) -> Result<Self> {
        if children.is_empty() {
            return Err(Error::Layout(format!("composite `{name}` has no children")));
        }
        let mut owns = Vec::new();
        let mut names = BTreeSet::new();
        for c in &children {
            owns.extend(c.descriptor().owns.iter().cloned());
            names.extend(c.descriptor().owns.iter().cloned());
            names.extend(c.descriptor().requires.iter().cloned());
        }
        let owned: BTreeSet<&String> = owns.iter().collect();
        let mut requires = Vec::new();
        for c in &children {
            for r in &c.descriptor().requires {
                if !owned.contains(r) && !requires.contains(r) {
                    requires.push(r.clone());
                }
            }
        }
        let mut pool = SharedPool::new();
        for n in &names {
            let e = scope.entry(n)?;
            let role = if owned.contains(n) {
                EntryRole::Owned
            } else {
                EntryRole::Data
            };
            pool.declare(n, e.value.clone(), role)?;
        }
        check_layout(&pool, &children)?;
        let history = History::new(&owned_layout(&children), keep_history);
        Ok(Self {
            descriptor: BlockDescriptor {
                name: name.to_string(),
                owns,
                requires,
                kernel: KernelSpec::new("composite_block"),
            },
            pool,
            children,
            history,
            steps: 0,
        })
    }

    pub fn children(&self) -> &[Box<dyn Block>] {
        &self.children
    }
}

impl Block for CompositeBlock {
    fn descriptor(&self) -> &BlockDescriptor {
        &self.descriptor
    }

    fn set_current(&mut self, inputs: &BTreeMap<String, Value>) -> Result<()> {
        for (k, v) in inputs {
            if !self.descriptor.owns.contains(k) && !self.descriptor.requires.contains(k) {
                return Err(Error::UnknownName(k.clone()));
            }
            self.pool.check_write(k, v)?;
        }
        for child in &mut self.children {
            let mine: BTreeMap<String, Value> = inputs
                .iter()
                .filter(|(k, _)| child.descriptor().owns.contains(k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            if !mine.is_empty() {
                child.set_current(&mine)?;
            }
        }
        for (k, v) in inputs {
            self.pool.write(k, v.clone())?;
        }
        Ok(())
    }

    fn step(&mut self, rng: &mut McRng) -> Result<()> {
        run_sweep(&mut self.pool, &mut self.children, rng)
            .map_err(|(child, e)| e.in_block(&child).in_block(&self.descriptor.name))?;
        self.steps += 1;
        record_row(&mut self.history, &self.pool, self.steps)
    }

    fn get_current(&self) -> BTreeMap<String, Value> {
        self.descriptor
            .owns
            .iter()
            .map(|n| (n.clone(), self.pool.get(n).expect("owned").clone()))
            .collect()
    }

    fn get_history(&self) -> &History {
        &self.history
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({
            "name": self.descriptor.name,
            "steps": self.steps,
            "pool": self.pool,
            "children": self.children.iter().map(|c| c.snapshot()).collect::<Vec<_>>(),
        })
    }
}
