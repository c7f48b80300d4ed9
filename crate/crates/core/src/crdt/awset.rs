use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{CausalContext, CrdtError, Datum, Dot, ReplicaId};

/// Add-wins observed-remove set with dotted version vectors.
///
/// Each present element carries the dots of the adds that introduced it; the
/// causal context records every dot ever observed. A remove drops the dots
/// of the element but keeps them in the context, so an add concurrent with
/// the remove (an unseen dot) survives the merge.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AWSet {
    #[serde(with = "pairs")]
    entries: BTreeMap<Datum, BTreeSet<Dot>>,
    context: CausalContext,
}

impl AWSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, e: &Datum) -> bool {
        self.entries.contains_key(e)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn elements(&self) -> impl Iterator<Item = &Datum> {
        self.entries.keys()
    }

    pub fn element_set(&self) -> BTreeSet<Datum> {
        self.entries.keys().cloned().collect()
    }

    pub fn context(&self) -> &CausalContext {
        &self.context
    }

    pub fn dots_of(&self, e: &Datum) -> Option<&BTreeSet<Dot>> {
        self.entries.get(e)
    }

    /// Add `e` with the next dot of `actor`, returning the dot used.
    pub fn add(&mut self, e: Datum, actor: ReplicaId) -> Dot {
        let dot = self.context.next_dot(actor);
        self.insert_dot(e, dot);
        dot
    }

    /// Add `e` under an explicit dot, which must be newer than anything seen
    /// from its replica.
    pub fn add_with_dot(&mut self, e: Datum, dot: Dot) -> Result<(), CrdtError> {
        let seen = self.context.max_counter(dot.replica);
        if dot.counter <= seen {
            return Err(CrdtError::StaleDot { dot, seen });
        }
        self.insert_dot(e, dot);
        Ok(())
    }

    fn insert_dot(&mut self, e: Datum, dot: Dot) {
        // earlier dots of `e` are covered by the context and can be dropped
        self.entries.insert(e, BTreeSet::from([dot]));
        self.context.insert(dot);
    }

    /// Remove every currently observed dot of `e`.
    pub fn remove(&mut self, e: &Datum) {
        self.entries.remove(e);
    }

    pub fn merge(&self, other: &AWSet) -> AWSet {
        let mut entries = BTreeMap::new();
        let keys: BTreeSet<&Datum> = self.entries.keys().chain(other.entries.keys()).collect();
        let empty = BTreeSet::new();
        for key in keys {
            let mine = self.entries.get(key).unwrap_or(&empty);
            let theirs = other.entries.get(key).unwrap_or(&empty);
            let kept: BTreeSet<Dot> = mine
                .iter()
                .filter(|d| theirs.contains(d) || !other.context.contains(d))
                .chain(theirs.iter().filter(|d| !self.context.contains(d)))
                .copied()
                .collect();
            if !kept.is_empty() {
                entries.insert(key.clone(), kept);
            }
        }
        AWSet {
            entries,
            context: self.context.union(&other.context),
        }
    }
}

/// JSON object keys must be strings, so entries travel as `[element, dots]`
/// pairs.
mod pairs {
    use std::collections::{BTreeMap, BTreeSet};

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::{Datum, Dot};

    pub fn serialize<S: Serializer>(m: &BTreeMap<Datum, BTreeSet<Dot>>, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<(&Datum, &BTreeSet<Dot>)> = m.iter().collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Datum, BTreeSet<Dot>>, D::Error> {
        let v: Vec<(Datum, BTreeSet<Dot>)> = Vec::deserialize(d)?;
        Ok(v.into_iter().collect())
    }
}

/// Add `e` to a copy of `s` under `dot`.
pub fn awset_add(s: &AWSet, e: Datum, dot: Dot) -> Result<AWSet, CrdtError> {
    let mut out = s.clone();
    out.add_with_dot(e, dot)?;
    Ok(out)
}

pub fn awset_remove(s: &AWSet, e: &Datum) -> AWSet {
    let mut out = s.clone();
    out.remove(e);
    out
}

pub fn awset_elements(s: &AWSet) -> BTreeSet<Datum> {
    s.element_set()
}

impl fmt::Display for AWSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.entries.is_empty() && self.context == CausalContext::default() {
            return f.write_str("awset{}");
        }
        f.write_str("awset{")?;
        for (i, (e, dots)) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{e}@[")?;
            for (j, d) in dots.iter().enumerate() {
                if j > 0 {
                    f.write_str(" ")?;
                }
                write!(f, "{d}")?;
            }
            f.write_str("]")?;
        }
        write!(f, "; ctx {}}}", self.context)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const R1: ReplicaId = ReplicaId(1);
    const R2: ReplicaId = ReplicaId(2);

    fn e() -> Datum {
        Datum::Int(7)
    }

    #[test]
    fn add_then_elements() {
        let mut s = AWSet::new();
        s.add(e(), R1);
        assert_eq!(awset_elements(&s), BTreeSet::from([e()]));
    }

    #[test]
    fn sequential_remove_wins() {
        let mut s = AWSet::new();
        s.add(e(), R1);
        s.remove(&e());
        assert!(s.is_empty());
    }

    #[test]
    fn remove_then_concurrent_readd() {
        let added = awset_add(&AWSet::new(), e(), Dot::new(R1, 1)).unwrap();
        let removed = awset_remove(&added, &e());
        // the remove has seen dot (1,1), so the merge hides the element
        assert!(!added.merge(&removed).contains(&e()));
        // a concurrent re-add on replica 2 introduces an unseen dot
        let readd = awset_add(&added, e(), Dot::new(R2, 1)).unwrap();
        let merged = removed.merge(&readd);
        assert!(merged.contains(&e()));
        assert_eq!(merged, readd.merge(&removed));
    }

    #[test]
    fn stale_dot_rejected() {
        let s = awset_add(&AWSet::new(), e(), Dot::new(R1, 3)).unwrap();
        assert_eq!(
            awset_add(&s, Datum::Int(8), Dot::new(R1, 2)),
            Err(CrdtError::StaleDot {
                dot: Dot::new(R1, 2),
                seen: 3
            })
        );
        assert!(awset_add(&s, Datum::Int(8), Dot::new(R1, 3)).is_err());
        assert!(awset_add(&s, Datum::Int(8), Dot::new(R1, 4)).is_ok());
    }

    #[test]
    fn canonical_text() {
        let mut s = AWSet::new();
        s.add(Datum::Int(2), R2);
        s.add(Datum::Int(1), R1);
        assert_eq!(s.to_string(), "awset{1@[1.1], 2@[2.1]; ctx {1:1, 2:1}}");
    }

    #[test]
    fn json_round_trip() {
        let mut s = AWSet::new();
        s.add(Datum::record("P", vec![Datum::Int(1)]), R1);
        s.add(Datum::Int(3), R2);
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<AWSet>(&text).unwrap(), s);
    }
}
