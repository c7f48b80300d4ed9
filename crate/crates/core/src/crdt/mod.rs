//! State-based mergeable values.
//!
//! Every source reactive stores a [`MergeValue`]. Values form a join-semilattice
//! under [`MergeValue::merge`]; the induced order `a <= b` holds iff
//! `merge(a, b) == b`. All values are kept in a canonical form so that
//! structural equality coincides with semantic equality of replica states.

mod awset;
mod counter;
mod datum;
mod dot;
mod lww;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use awset::{awset_add, awset_elements, awset_remove, AWSet};
pub use counter::PNCounter;
pub use datum::Datum;
pub use dot::{CausalContext, Dot, ReplicaId};
pub use lww::{LwwRegister, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CrdtError {
    #[error("cannot merge a {left} with a {right}")]
    KindMismatch { left: CrdtKind, right: CrdtKind },
    #[error("dot {dot} is not fresh (replica already at counter {seen})")]
    StaleDot { dot: Dot, seen: u64 },
    #[error("negative amount {0} for counter operation")]
    NegativeAmount(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CrdtKind {
    AWSet,
    PNCounter,
    LWWRegister,
}

impl fmt::Display for CrdtKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CrdtKind::AWSet => "AWSet",
            CrdtKind::PNCounter => "PNCounter",
            CrdtKind::LWWRegister => "LWWRegister",
        })
    }
}

/// A replicated value: add-wins set, PN-counter, or last-writer-wins register.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MergeValue {
    AWSet(AWSet),
    PNCounter(PNCounter),
    LWWRegister(LwwRegister),
}

impl MergeValue {
    pub fn kind(&self) -> CrdtKind {
        match self {
            MergeValue::AWSet(_) => CrdtKind::AWSet,
            MergeValue::PNCounter(_) => CrdtKind::PNCounter,
            MergeValue::LWWRegister(_) => CrdtKind::LWWRegister,
        }
    }

    /// Least upper bound of two values of the same kind.
    pub fn merge(&self, other: &MergeValue) -> Result<MergeValue, CrdtError> {
        match (self, other) {
            (MergeValue::AWSet(a), MergeValue::AWSet(b)) => Ok(MergeValue::AWSet(a.merge(b))),
            (MergeValue::PNCounter(a), MergeValue::PNCounter(b)) => {
                Ok(MergeValue::PNCounter(a.merge(b)))
            }
            (MergeValue::LWWRegister(a), MergeValue::LWWRegister(b)) => {
                Ok(MergeValue::LWWRegister(a.merge(b)))
            }
            (a, b) => Err(CrdtError::KindMismatch {
                left: a.kind(),
                right: b.kind(),
            }),
        }
    }

    /// `self <= other` in the semilattice order, i.e. `merge(self, other) == other`.
    pub fn leq(&self, other: &MergeValue) -> Result<bool, CrdtError> {
        Ok(&self.merge(other)? == other)
    }

    /// Number of observable elements; used to order bounded enumerations.
    pub fn weight(&self) -> usize {
        match self {
            MergeValue::AWSet(s) => s.len(),
            MergeValue::PNCounter(c) => c.value().unsigned_abs() as usize,
            MergeValue::LWWRegister(r) => usize::from(r.timestamp() != Timestamp::ZERO),
        }
    }
}

/// Free-function form of [`MergeValue::merge`].
pub fn merge_value(a: &MergeValue, b: &MergeValue) -> Result<MergeValue, CrdtError> {
    a.merge(b)
}

/// Free-function form of [`MergeValue::leq`].
pub fn leq_value(a: &MergeValue, b: &MergeValue) -> Result<bool, CrdtError> {
    a.leq(b)
}

/// Canonical, deterministic text form used by golden files and digests.
impl fmt::Display for MergeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MergeValue::AWSet(s) => s.fmt(f),
            MergeValue::PNCounter(c) => c.fmt(f),
            MergeValue::LWWRegister(r) => r.fmt(f),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_mismatch_is_reported() {
        let a = MergeValue::AWSet(AWSet::new());
        let b = MergeValue::PNCounter(PNCounter::new());
        assert_eq!(
            a.merge(&b),
            Err(CrdtError::KindMismatch {
                left: CrdtKind::AWSet,
                right: CrdtKind::PNCounter
            })
        );
        assert!(a.leq(&b).is_err());
    }

    #[test]
    fn leq_reflexive_and_bottom() {
        let empty = MergeValue::AWSet(AWSet::new());
        let mut s = AWSet::new();
        s.add(Datum::Int(1), ReplicaId(1));
        let one = MergeValue::AWSet(s);
        assert!(one.leq(&one).unwrap());
        assert!(empty.leq(&one).unwrap());
        assert!(!one.leq(&empty).unwrap());
    }
}
