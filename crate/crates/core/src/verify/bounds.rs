use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::VerifyError;
use crate::crdt::{AWSet, CrdtKind, Datum, LwwRegister, MergeValue, PNCounter, ReplicaId};
use crate::program::{appointment, CheckedProgram, Type, APPOINTMENT};

/// Finite domains for bounded checking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundConfig {
    /// Appointments range over start, end in `[0, time_bound)`.
    pub time_bound: i64,
    /// Extra appointments `(0, 0, d)` for each duration `d`.
    pub durations: Vec<i64>,
    /// Integers range over `[0, int_bound]`.
    pub int_bound: i64,
    pub strings: Vec<String>,
    /// Largest AWSet considered per source.
    pub max_set_size: usize,
    /// Largest total number of set elements in one store.
    pub max_store_elements: usize,
    /// Counters range over `[-counter_bound, counter_bound]`.
    pub counter_bound: i64,
    pub max_arg_candidates: usize,
    /// Upper limit on stores or cases enumerated for one obligation.
    pub enumeration_cap: u64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        BoundConfig {
            time_bound: 4,
            durations: vec![12, 20, 31],
            int_bound: 3,
            strings: vec!["a".into(), "b".into()],
            max_set_size: 2,
            max_store_elements: 2,
            counter_bound: 3,
            max_arg_candidates: 1024,
            enumeration_cap: 20_000_000,
        }
    }
}

impl BoundConfig {
    pub fn validate(&self) -> Result<(), VerifyError> {
        let ok = self.time_bound >= 1
            && self.int_bound >= 1
            && self.max_set_size >= 1
            && self.max_store_elements >= 1
            && self.counter_bound >= 1
            && self.max_arg_candidates >= 1
            && self.enumeration_cap >= 1;
        if ok {
            Ok(())
        } else {
            Err(VerifyError::InvalidBounds("all bounds must be at least 1".into()))
        }
    }

    /// Every datum of a first-order type within bounds, in ascending order.
    pub fn universe(&self, p: &CheckedProgram, t: &Type) -> Result<Vec<Datum>, VerifyError> {
        let out: Vec<Datum> = match t {
            Type::Bool => vec![Datum::Bool(false), Datum::Bool(true)],
            Type::Int => (0..=self.int_bound).map(Datum::Int).collect(),
            Type::Str => self.strings.iter().cloned().map(Datum::Str).collect(),
            Type::Record(n) if n == APPOINTMENT => {
                let mut set = BTreeSet::new();
                for s in 0..self.time_bound {
                    for e in 0..self.time_bound {
                        set.insert(appointment(0, s, e));
                    }
                }
                for &d in &self.durations {
                    set.insert(appointment(0, 0, d));
                }
                set.into_iter().collect()
            }
            Type::Record(n) => {
                let def = p
                    .records
                    .get(n)
                    .ok_or_else(|| VerifyError::InvalidBounds(format!("unknown record {n}")))?;
                let fields: Vec<Type> = def.fields.iter().map(|(_, t)| t.clone()).collect();
                self.product(p, &fields)?
                    .into_iter()
                    .map(|fs| Datum::record(n.clone(), fs))
                    .collect()
            }
            Type::Tuple(items) => self.product(p, items)?.into_iter().map(Datum::Tuple).collect(),
            other => {
                return Err(VerifyError::InvalidBounds(format!(
                    "no finite universe for {other}"
                )))
            }
        };
        if out.len() as u64 > self.enumeration_cap {
            return Err(VerifyError::BoundsTooLarge {
                what: format!("universe of {t}"),
                size: out.len() as u64,
                cap: self.enumeration_cap,
            });
        }
        Ok(out)
    }

    fn product(&self, p: &CheckedProgram, types: &[Type]) -> Result<Vec<Vec<Datum>>, VerifyError> {
        let mut acc: Vec<Vec<Datum>> = vec![Vec::new()];
        for t in types {
            let u = self.universe(p, t)?;
            let size = acc.len() as u64 * u.len() as u64;
            if size > self.enumeration_cap {
                return Err(VerifyError::BoundsTooLarge {
                    what: "record universe".into(),
                    size,
                    cap: self.enumeration_cap,
                });
            }
            acc = acc
                .iter()
                .flat_map(|prefix| {
                    u.iter().map(move |d| {
                        let mut v = prefix.clone();
                        v.push(d.clone());
                        v
                    })
                })
                .collect();
        }
        Ok(acc)
    }

    /// Candidate arguments for an interaction.
    pub fn arguments(&self, p: &CheckedProgram, t: &Type) -> Result<Vec<Datum>, VerifyError> {
        let u = self.universe(p, t)?;
        if u.len() > self.max_arg_candidates {
            return Err(VerifyError::BoundsTooLarge {
                what: format!("arguments of type {t}"),
                size: u.len() as u64,
                cap: self.max_arg_candidates as u64,
            });
        }
        Ok(u)
    }

    /// Values of one source, grouped by weight (`[w]` holds the values of
    /// weight `w`), each group in ascending order. Set elements are
    /// materialized with dots of replica 0.
    pub fn source_values(&self, p: &CheckedProgram, t: &Type) -> Result<Vec<Vec<MergeValue>>, VerifyError> {
        let Type::Crdt(kind, elem) = t else {
            return Err(VerifyError::InvalidBounds(format!("{t} is not replicated")));
        };
        Ok(match kind {
            CrdtKind::AWSet => {
                let u = self.universe(p, elem)?;
                let mut groups = vec![vec![MergeValue::AWSet(AWSet::new())]];
                let mut subsets: Vec<Vec<usize>> = vec![Vec::new()];
                for size in 1..=self.max_set_size.min(u.len()) {
                    subsets = subsets
                        .iter()
                        .flat_map(|s| {
                            let start = s.last().map_or(0, |&l| l + 1);
                            (start..u.len()).map(move |i| {
                                let mut n = s.clone();
                                n.push(i);
                                n
                            })
                        })
                        .collect();
                    let count = subsets.len() as u64;
                    if count > self.enumeration_cap {
                        return Err(VerifyError::BoundsTooLarge {
                            what: format!("subsets of size {size} of {elem}"),
                            size: count,
                            cap: self.enumeration_cap,
                        });
                    }
                    groups.push(
                        subsets
                            .iter()
                            .map(|s| {
                                let mut set = AWSet::new();
                                for &i in s {
                                    set.add(u[i].clone(), ReplicaId(0));
                                }
                                MergeValue::AWSet(set)
                            })
                            .collect(),
                    );
                }
                groups
            }
            CrdtKind::PNCounter => (0..=self.counter_bound)
                .map(|w| {
                    let mut vals = Vec::new();
                    for v in [-w, w] {
                        let mut c = PNCounter::new();
                        if v > 0 {
                            c.increment(ReplicaId(0), v).expect("positive");
                        } else if v < 0 {
                            c.decrement(ReplicaId(0), -v).expect("positive");
                        }
                        let m = MergeValue::PNCounter(c);
                        if !vals.contains(&m) {
                            vals.push(m);
                        }
                    }
                    vals
                })
                .collect(),
            CrdtKind::LWWRegister => vec![self
                .universe(p, elem)?
                .into_iter()
                .map(|d| MergeValue::LWWRegister(LwwRegister::new(d)))
                .collect()],
        })
    }
}
