use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::history::History;
use super::pool::check_compatible;
use super::rng::McRng;
use super::value::{Value, ValueKind};
use crate::error::{Error, Result};

/// Kernel identifier plus numeric settings, as requested by a block plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub name: String,
    #[serde(default)]
    pub settings: BTreeMap<String, f64>,
}

impl KernelSpec {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            settings: BTreeMap::new(),
        }
    }

    pub fn setting(&self, key: &str, default: f64) -> f64 {
        self.settings.get(key).copied().unwrap_or(default)
    }
}

/// What a block updates (`owns`) and what it conditions on (`requires`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDescriptor {
    pub name: String,
    pub owns: Vec<String>,
    pub requires: Vec<String>,
    pub kernel: KernelSpec,
}

impl BlockDescriptor {
    pub fn validate(&self) -> Result<()> {
        if self.owns.is_empty() {
            return Err(Error::Layout(format!("block `{}` owns nothing", self.name)));
        }
        let owns: BTreeSet<&str> = self.owns.iter().map(String::as_str).collect();
        if let Some(shared) = self.requires.iter().find(|r| owns.contains(r.as_str())) {
            return Err(Error::Layout(format!(
                "block `{}` both owns and requires `{shared}`",
                self.name
            )));
        }
        Ok(())
    }
}

/// The stateful contract every sampling unit exposes.
pub trait Block: Send {
    fn descriptor(&self) -> &BlockDescriptor;

    /// Replaces cached conditioning quantities (or overrides owned values)
    /// without touching adapted kernel state.
    fn set_current(&mut self, inputs: &BTreeMap<String, Value>) -> Result<()>;

    /// One transition of the owned quantities.
    fn step(&mut self, rng: &mut McRng) -> Result<()>;

    /// Latest owned values, keyed by name.
    fn get_current(&self) -> BTreeMap<String, Value>;

    fn get_history(&self) -> &History;

    /// Serializable view of all internal state, used for purity checks.
    fn snapshot(&self) -> serde_json::Value;

    fn name(&self) -> &str {
        &self.descriptor().name
    }
}

/// Kernel-side half of a block: the transition itself, free of bookkeeping.
///
/// `advance` must leave the owned values untouched when it returns an error.
pub trait Transition: Send {
    /// Current owned values in descriptor order.
    fn current(&self) -> Vec<Value>;

    /// Accepts one conditioning quantity, or an override of an owned value.
    fn condition(&mut self, name: &str, value: &Value) -> Result<()>;

    fn advance(&mut self, rng: &mut McRng) -> Result<()>;

    fn kernel_state(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

/// Wraps a [`Transition`] with input validation, conditioning bookkeeping and history.
pub struct StatefulBlock {
    descriptor: BlockDescriptor,
    declared: BTreeMap<String, (ValueKind, Vec<usize>)>,
    conditioned: BTreeSet<String>,
    cache: BTreeMap<String, Value>,
    transition: Box<dyn Transition>,
    history: History,
    steps: u64,
}

impl StatefulBlock {
    /// `initial` holds the starting value of every owned quantity and, optionally,
    /// initial conditioning values.
    pub fn new(
        descriptor: BlockDescriptor,
        transition: Box<dyn Transition>,
        initial: &BTreeMap<String, Value>,
        keep_history: bool,
    ) -> Result<Self> {
        descriptor.validate()?;
        let current = transition.current();
        if current.len() != descriptor.owns.len() {
            return Err(Error::Layout(format!(
                "block `{}` reports {} values for {} owned names",
                descriptor.name,
                current.len(),
                descriptor.owns.len()
            )));
        }
        let mut declared = BTreeMap::new();
        let mut layout = Vec::new();
        for (name, value) in descriptor.owns.iter().zip(&current) {
            declared.insert(name.clone(), (value.kind(), value.shape()));
            layout.push((name.clone(), value.kind(), value.shape()));
        }
        for name in &descriptor.requires {
            let v = initial
                .get(name)
                .ok_or_else(|| Error::MissingConditioning(name.clone()))?;
            declared.insert(name.clone(), (v.kind(), v.shape()));
        }
        let mut block = Self {
            descriptor,
            declared,
            conditioned: BTreeSet::new(),
            cache: BTreeMap::new(),
            transition,
            history: History::new(&layout, keep_history),
            steps: 0,
        };
        let inputs: BTreeMap<String, Value> = initial
            .iter()
            .filter(|(k, _)| block.declared.contains_key(*k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        block
            .set_current(&inputs)
            .map_err(|e| e.in_block(&block.descriptor.name))?;
        Ok(block)
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn check_input(&self, name: &str, value: &Value) -> Result<()> {
        let (kind, shape) = self
            .declared
            .get(name)
            .ok_or_else(|| Error::UnknownName(name.to_string()))?;
        let probe = Value::from_flat(*kind, shape, &vec![0.0; shape.iter().product()])?;
        check_compatible(name, &probe, value)
    }
}

impl Block for StatefulBlock {
    fn descriptor(&self) -> &BlockDescriptor {
        &self.descriptor
    }

    fn set_current(&mut self, inputs: &BTreeMap<String, Value>) -> Result<()> {
        for (name, value) in inputs {
            self.check_input(name, value)?;
        }
        for (name, value) in inputs {
            if self.cache.get(name) == Some(value) {
                continue;
            }
            self.transition.condition(name, value)?;
            if self.descriptor.requires.contains(name) {
                self.conditioned.insert(name.clone());
                self.cache.insert(name.clone(), value.clone());
            }
        }
        Ok(())
    }

    fn step(&mut self, rng: &mut McRng) -> Result<()> {
        if let Some(missing) = self
            .descriptor
            .requires
            .iter()
            .find(|r| !self.conditioned.contains(*r))
        {
            return Err(Error::MissingConditioning(missing.clone()).in_block(&self.descriptor.name));
        }
        self.transition
            .advance(rng)
            .map_err(|e| e.in_block(&self.descriptor.name))?;
        self.steps += 1;
        let current = self.transition.current();
        let refs: Vec<&Value> = current.iter().collect();
        self.history.record(self.steps, &refs)
    }

    fn get_current(&self) -> BTreeMap<String, Value> {
        self.descriptor
            .owns
            .iter()
            .cloned()
            .zip(self.transition.current())
            .collect()
    }

    fn get_history(&self) -> &History {
        &self.history
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({
            "name": self.descriptor.name,
            "steps": self.steps,
            "current": self.get_current(),
            "cache": self.cache,
            "history_len": self.history.len(),
            "kernel": self.transition.kernel_state(),
        })
    }
}
