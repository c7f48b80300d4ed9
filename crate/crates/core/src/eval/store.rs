use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EvalError;
use crate::crdt::MergeValue;
use crate::program::CheckedProgram;

/// Values of all source reactives on one device, indexed like
/// [`CheckedProgram::sources`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Store {
    values: Vec<MergeValue>,
}

impl Store {
    pub fn new(values: Vec<MergeValue>) -> Self {
        Store { values }
    }

    pub fn get(&self, i: usize) -> Option<&MergeValue> {
        self.values.get(i)
    }

    pub fn values(&self) -> &[MergeValue] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Merge `values[k]` into the source `targets[k]`; other sources are
    /// left unchanged.
    pub fn update(&self, targets: &[usize], values: &[MergeValue]) -> Result<Store, EvalError> {
        if targets.len() != values.len() {
            return Err(EvalError::Stuck(format!(
                "update of {} reactives with {} values",
                targets.len(),
                values.len()
            )));
        }
        let mut out = self.clone();
        for (&t, v) in targets.iter().zip(values) {
            let cur = out
                .values
                .get(t)
                .ok_or_else(|| EvalError::UnknownReactive(format!("#{t}")))?;
            out.values[t] = cur.merge(v)?;
        }
        Ok(out)
    }

    /// Pointwise merge of two stores over the same sources.
    pub fn merge(&self, other: &Store) -> Result<Store, EvalError> {
        if self.values.len() != other.values.len() {
            return Err(EvalError::DomainMismatch {
                left: self.values.len(),
                right: other.values.len(),
            });
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.merge(b))
            .collect::<Result<_, _>>()?;
        Ok(Store { values })
    }

    /// `self <= other` in the pointwise store order.
    pub fn leq(&self, other: &Store) -> Result<bool, EvalError> {
        Ok(&self.merge(other)? == other)
    }

    /// Equal after forgetting replication metadata: same set elements,
    /// counter values and register values.
    pub fn observably_equal(&self, other: &Store) -> bool {
        self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| match (a, b) {
                (MergeValue::AWSet(x), MergeValue::AWSet(y)) => x.elements().eq(y.elements()),
                (MergeValue::PNCounter(x), MergeValue::PNCounter(y)) => x.value() == y.value(),
                (MergeValue::LWWRegister(x), MergeValue::LWWRegister(y)) => x.value() == y.value(),
                _ => false,
            })
    }

    /// One `name = value` line per source.
    pub fn render(&self, p: &CheckedProgram) -> String {
        let mut out = String::new();
        for (s, v) in p.sources.iter().zip(&self.values) {
            writeln!(out, "{} = {v}", s.name).unwrap();
        }
        out
    }

    /// Canonical text form without names, the input of [`Store::digest`].
    pub fn canonical(&self) -> String {
        self.values
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" | ")
    }

    /// Short hex digest of the canonical form.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.canonical().as_bytes());
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

pub fn update_store(s: &Store, targets: &[usize], values: &[MergeValue]) -> Result<Store, EvalError> {
    s.update(targets, values)
}

pub fn merge_store(a: &Store, b: &Store) -> Result<Store, EvalError> {
    a.merge(b)
}
