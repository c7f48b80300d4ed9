use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Datum, ReplicaId};

/// Lamport-style timestamp; ties on the clock are broken by replica id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Timestamp {
    pub clock: u64,
    pub replica: ReplicaId,
}

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp {
        clock: 0,
        replica: ReplicaId(0),
    };
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LwwRegister {
    timestamp: Timestamp,
    value: Datum,
}

impl LwwRegister {
    pub fn new(initial: Datum) -> Self {
        LwwRegister {
            timestamp: Timestamp::ZERO,
            value: initial,
        }
    }

    pub fn value(&self) -> &Datum {
        &self.value
    }

    pub fn timestamp(&self) -> Timestamp {
        self.timestamp
    }

    pub fn with_timestamp(value: Datum, timestamp: Timestamp) -> Self {
        LwwRegister { timestamp, value }
    }

    pub fn set(&mut self, value: Datum, actor: ReplicaId) {
        self.timestamp = Timestamp {
            clock: self.timestamp.clock + 1,
            replica: actor,
        };
        self.value = value;
    }

    pub fn merge(&self, other: &LwwRegister) -> LwwRegister {
        // equal timestamps only arise from the same write, but compare the
        // value as well so the join stays commutative on arbitrary inputs
        if (other.timestamp, &other.value) > (self.timestamp, &self.value) {
            other.clone()
        } else {
            self.clone()
        }
    }
}

impl fmt::Display for LwwRegister {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "lww{{{} @{}.{}}}",
            self.value, self.timestamp.clock, self.timestamp.replica
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn later_write_wins_and_replica_breaks_ties() {
        let base = LwwRegister::new(Datum::Int(0));
        let mut a = base.clone();
        a.set(Datum::Int(1), ReplicaId(1));
        let mut b = base.clone();
        b.set(Datum::Int(2), ReplicaId(2));
        assert_eq!(a.merge(&b).value(), &Datum::Int(2));
        assert_eq!(b.merge(&a), a.merge(&b));
        let mut c = a.merge(&b);
        c.set(Datum::Int(3), ReplicaId(1));
        assert_eq!(c.merge(&b).value(), &Datum::Int(3));
    }
}
