use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{CrdtError, ReplicaId};

/// Positive-negative counter: per-replica increment and decrement totals,
/// merged by pointwise maximum.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PNCounter {
    inc: BTreeMap<ReplicaId, u64>,
    dec: BTreeMap<ReplicaId, u64>,
}

impl PNCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self) -> i64 {
        let p: u64 = self.inc.values().sum();
        let n: u64 = self.dec.values().sum();
        p as i64 - n as i64
    }

    pub fn increment(&mut self, actor: ReplicaId, amount: i64) -> Result<(), CrdtError> {
        bump(&mut self.inc, actor, amount)
    }

    pub fn decrement(&mut self, actor: ReplicaId, amount: i64) -> Result<(), CrdtError> {
        bump(&mut self.dec, actor, amount)
    }

    pub fn merge(&self, other: &PNCounter) -> PNCounter {
        PNCounter {
            inc: join(&self.inc, &other.inc),
            dec: join(&self.dec, &other.dec),
        }
    }
}

fn bump(map: &mut BTreeMap<ReplicaId, u64>, actor: ReplicaId, amount: i64) -> Result<(), CrdtError> {
    if amount < 0 {
        return Err(CrdtError::NegativeAmount(amount));
    }
    if amount > 0 {
        *map.entry(actor).or_insert(0) += amount as u64;
    }
    Ok(())
}

fn join(a: &BTreeMap<ReplicaId, u64>, b: &BTreeMap<ReplicaId, u64>) -> BTreeMap<ReplicaId, u64> {
    let mut out = a.clone();
    for (&r, &v) in b {
        let e = out.entry(r).or_insert(0);
        *e = (*e).max(v);
    }
    out
}

impl fmt::Display for PNCounter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = |m: &BTreeMap<ReplicaId, u64>| {
            m.iter()
                .map(|(r, v)| format!("{r}:{v}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        write!(f, "pncounter{{+[{}] -[{}]}}", side(&self.inc), side(&self.dec))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concurrent_increments_add_up() {
        let mut a = PNCounter::new();
        a.increment(ReplicaId(1), 2).unwrap();
        let mut b = PNCounter::new();
        b.increment(ReplicaId(2), 3).unwrap();
        assert_eq!(a.merge(&b).value(), 5);
    }

    #[test]
    fn decrement_and_negative_amounts() {
        let mut a = PNCounter::new();
        a.decrement(ReplicaId(1), 4).unwrap();
        assert_eq!(a.value(), -4);
        assert_eq!(a.increment(ReplicaId(1), -1), Err(CrdtError::NegativeAmount(-1)));
        a.increment(ReplicaId(1), 0).unwrap();
        assert_eq!(a.to_string(), "pncounter{+[] -[1:4]}");
    }
}
