use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::value::Value;
use crate::error::{Error, Result};

/// Whether a pool entry is fixed input or a quantity some block updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryRole {
    Data,
    Owned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub value: Value,
    pub version: u64,
    pub role: EntryRole,
}

/// Named, versioned store of the current values of all data, latents and parameters.
///
/// Shapes are fixed at declaration. Every write bumps the entry's version, and
/// no write may carry a non-finite real.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SharedPool {
    entries: BTreeMap<String, PoolEntry>,
}

impl SharedPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declare(&mut self, name: &str, value: Value, role: EntryRole) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::InvalidArgument(format!(
                "`{name}` is already declared in the pool"
            )));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        self.entries.insert(
            name.to_string(),
            PoolEntry {
                value,
                version: 0,
                role,
            },
        );
        Ok(())
    }

    pub fn is_declared(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Value> {
        self.entries
            .get(name)
            .map(|e| &e.value)
            .ok_or_else(|| Error::UnknownName(name.to_string()))
    }

    pub fn entry(&self, name: &str) -> Result<&PoolEntry> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::UnknownName(name.to_string()))
    }

    pub fn version(&self, name: &str) -> Result<u64> {
        Ok(self.entry(name)?.version)
    }

    /// Checks that `value` could be written to `name` without committing it.
    pub fn check_write(&self, name: &str, value: &Value) -> Result<()> {
        let entry = self
            .entries
            .get(name)
            .ok_or_else(|| Error::UnknownName(name.to_string()))?;
        check_compatible(name, &entry.value, value)
    }

    pub fn write(&mut self, name: &str, value: Value) -> Result<()> {
        self.check_write(name, &value)?;
        let entry = self.entries.get_mut(name).expect("checked above");
        entry.value = value;
        entry.version += 1;
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &PoolEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Copies the named entries into a fresh pool (used for child-scoped views).
    pub fn subset<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> Result<SharedPool> {
        let mut out = SharedPool::new();
        for name in names {
            if out.is_declared(name) {
                continue;
            }
            let e = self.entry(name)?;
            out.entries.insert(name.to_string(), e.clone());
        }
        Ok(out)
    }
}

pub(crate) fn check_compatible(name: &str, current: &Value, new: &Value) -> Result<()> {
    if current.shape() != new.shape() {
        return Err(Error::ShapeMismatch {
            name: name.to_string(),
            expected: current.shape(),
            got: new.shape(),
        });
    }
    if current.kind() != new.kind() {
        return Err(Error::InvalidArgument(format!(
            "`{name}` expects {:?} payload, got {:?}",
            current.kind(),
            new.kind()
        )));
    }
    if !new.is_finite() {
        return Err(Error::NonFinite(name.to_string()));
    }
    Ok(())
}
