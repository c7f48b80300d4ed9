use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Device ordinal. Devices are numbered from 1; replica 0 is reserved for
/// states that are materialized without a concrete history (initial values
/// and bounded enumeration).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct ReplicaId(pub u32);

impl fmt::Display for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A unique event identifier `(replica, counter)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Dot {
    pub replica: ReplicaId,
    pub counter: u64,
}

impl Dot {
    pub fn new(replica: ReplicaId, counter: u64) -> Self {
        Dot { replica, counter }
    }
}

impl fmt::Display for Dot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.replica, self.counter)
    }
}

/// Set of observed dots: a version vector for contiguous prefixes plus a
/// cloud of dots seen out of order. Always normalized, so equal contexts are
/// structurally equal.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CausalContext {
    vv: BTreeMap<ReplicaId, u64>,
    cloud: BTreeSet<Dot>,
}

impl CausalContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, dot: &Dot) -> bool {
        self.vv.get(&dot.replica).is_some_and(|&c| dot.counter <= c) || self.cloud.contains(dot)
    }

    /// Highest counter observed for `replica`, contiguous or not.
    pub fn max_counter(&self, replica: ReplicaId) -> u64 {
        let contiguous = self.vv.get(&replica).copied().unwrap_or(0);
        let cloud = self
            .cloud
            .range(Dot::new(replica, 0)..=Dot::new(replica, u64::MAX))
            .next_back()
            .map_or(0, |d| d.counter);
        contiguous.max(cloud)
    }

    pub fn next_dot(&self, replica: ReplicaId) -> Dot {
        Dot::new(replica, self.max_counter(replica) + 1)
    }

    pub fn insert(&mut self, dot: Dot) {
        if !self.contains(&dot) {
            self.cloud.insert(dot);
            self.normalize();
        }
    }

    pub fn union(&self, other: &CausalContext) -> CausalContext {
        let mut out = self.clone();
        for (&r, &c) in &other.vv {
            let e = out.vv.entry(r).or_insert(0);
            *e = (*e).max(c);
        }
        out.cloud.extend(other.cloud.iter().copied());
        out.normalize();
        out
    }

    pub fn dots(&self) -> impl Iterator<Item = Dot> + '_ {
        self.vv
            .iter()
            .flat_map(|(&r, &c)| (1..=c).map(move |k| Dot::new(r, k)))
            .chain(self.cloud.iter().copied())
    }

    fn normalize(&mut self) {
        loop {
            let mut progressed = false;
            let cloud = std::mem::take(&mut self.cloud);
            for dot in cloud {
                let seen = self.vv.get(&dot.replica).copied().unwrap_or(0);
                if dot.counter <= seen {
                    progressed = true;
                } else if dot.counter == seen + 1 {
                    self.vv.insert(dot.replica, dot.counter);
                    progressed = true;
                } else {
                    self.cloud.insert(dot);
                }
            }
            if !progressed {
                break;
            }
        }
        self.vv.retain(|_, c| *c > 0);
    }
}

impl fmt::Display for CausalContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        let mut first = true;
        for (r, c) in &self.vv {
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            write!(f, "{r}:{c}")?;
        }
        for d in &self.cloud {
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            write!(f, "+{d}")?;
        }
        f.write_str("}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cloud_compacts_into_vector() {
        let r = ReplicaId(1);
        let mut ctx = CausalContext::new();
        ctx.insert(Dot::new(r, 2));
        assert_eq!(ctx.to_string(), "{+1.2}");
        ctx.insert(Dot::new(r, 1));
        assert_eq!(ctx.to_string(), "{1:2}");
        assert_eq!(ctx.max_counter(r), 2);
        assert_eq!(ctx.next_dot(r), Dot::new(r, 3));
    }

    #[test]
    fn union_is_normalized() {
        let mut a = CausalContext::new();
        a.insert(Dot::new(ReplicaId(1), 1));
        let mut b = CausalContext::new();
        b.insert(Dot::new(ReplicaId(1), 2));
        b.insert(Dot::new(ReplicaId(0), 7));
        let u = a.union(&b);
        assert_eq!(u, b.union(&a));
        assert_eq!(u.to_string(), "{1:2, +0.7}");
        assert_eq!(u.dots().count(), 3);
    }
}
