//! Serialization of a device's final state: rewrite the trace from the
//! right until only interactions of the chosen device remain, then check
//! that running them in order on a single device reproduces its store.

use serde::{Deserialize, Serialize};

use super::{SimError, Trace};
use crate::crdt::{Datum, ReplicaId};
use crate::eval::{apply_interaction, Outcome, Store};
use crate::program::CheckedProgram;
use crate::runtime::{DeviceId, Label};

/// One interaction of a serialization. `actor` is the device that ran it
/// in the trace; replay stamps CRDT operations with it so that the result
/// is structurally comparable to the original.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerialStep {
    pub interaction: String,
    pub arg: Datum,
    pub actor: DeviceId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Serialization {
    pub device: DeviceId,
    pub steps: Vec<SerialStep>,
    /// Interactions dropped because, once reordered after a merge, they
    /// were disabled and contributed nothing the merge did not already show.
    pub idempotent_discards: usize,
    /// Syncs re-targeted to a third device.
    pub retargeted_syncs: usize,
    /// Final store of the serialization (equal to the device's).
    pub store: Store,
}

/// An interaction run as it appears in the rewritten trace. `key` lets a
/// caching backend identify the run without looking at its argument.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Run {
    pub device: DeviceId,
    pub interaction: String,
    pub arg: Datum,
    pub key: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Op {
    Interact(Run),
    Sync { from: DeviceId, to: DeviceId },
}

impl Op {
    fn affects(&self, d: DeviceId) -> bool {
        match self {
            Op::Interact(r) => r.device == d,
            Op::Sync { to, .. } => *to == d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Applied<S> {
    Done(S),
    Disabled(usize),
    Broken(usize),
}

/// The store operations the serializer needs. The explorer supplies a
/// backend working on interned stores.
pub(crate) trait Stores {
    type S: Clone + PartialEq;
    fn apply(&mut self, s: &Self::S, run: &Run) -> Result<Applied<Self::S>, SimError>;
    fn merge(&mut self, a: &Self::S, b: &Self::S) -> Result<Self::S, SimError>;
    fn leq(&mut self, a: &Self::S, b: &Self::S) -> Result<bool, SimError>;
}

struct Direct<'a>(&'a CheckedProgram);

impl Stores for Direct<'_> {
    type S = Store;

    fn apply(&mut self, s: &Store, run: &Run) -> Result<Applied<Store>, SimError> {
        let a = self
            .0
            .interaction(&run.interaction)
            .ok_or_else(|| SimError::InvalidSchedule(format!("unknown interaction `{}`", run.interaction)))?;
        Ok(
            match apply_interaction(self.0, s, ReplicaId(run.device as u32), a, &run.arg)? {
                Outcome::Disabled { clause } => Applied::Disabled(clause),
                Outcome::Applied {
                    failed_ensures: Some(clause),
                    ..
                } => Applied::Broken(clause),
                Outcome::Applied { store, .. } => Applied::Done(store),
            },
        )
    }

    fn merge(&mut self, a: &Store, b: &Store) -> Result<Store, SimError> {
        Ok(a.merge(b)?)
    }

    fn leq(&mut self, a: &Store, b: &Store) -> Result<bool, SimError> {
        Ok(a.leq(b)?)
    }
}

/// Stores after each prefix of the rewritten trace, computed lazily and
/// invalidated from the first changed position. Interactions disabled at
/// their position are skipped.
struct Prefixes<S> {
    states: Vec<Vec<S>>,
    skipped: Vec<bool>,
}

impl<S: Clone + PartialEq> Prefixes<S> {
    fn new(init: &S, n: usize) -> Self {
        Prefixes {
            states: vec![vec![init.clone(); n]],
            skipped: vec![false],
        }
    }

    /// Forget every state that depends on `ops[k..]`.
    fn invalidate(&mut self, k: usize) {
        self.states.truncate(k + 1);
        self.skipped.truncate(k + 1);
    }

    /// Stores after `ops[..j]`, and whether `ops[j - 1]` was skipped.
    fn after<B: Stores<S = S>>(&mut self, b: &mut B, ops: &[Op], j: usize) -> Result<(&[S], bool), SimError> {
        while self.states.len() <= j {
            let mut stores = self.states.last().expect("initial state").clone();
            let mut skipped = false;
            match &ops[self.states.len() - 1] {
                Op::Interact(run) => match b.apply(&stores[run.device - 1], run)? {
                    Applied::Done(s) => stores[run.device - 1] = s,
                    _ => skipped = true,
                },
                Op::Sync { from, to } => {
                    stores[to - 1] = b.merge(&stores[to - 1], &stores[from - 1])?;
                }
            }
            self.states.push(stores);
            self.skipped.push(skipped);
        }
        Ok((&self.states[j], self.skipped[j]))
    }
}

fn no_serialization(device: DeviceId, reason: impl Into<String>) -> SimError {
    SimError::NoSerialization {
        device,
        reason: reason.into(),
    }
}

pub(crate) struct Rewritten<S> {
    pub runs: Vec<Run>,
    pub discards: usize,
    pub retargeted: usize,
    pub store: S,
}

/// The rewriting itself, over `n` devices starting from `init`, ending
/// with the check that the sequential replay gives `expected`.
pub(crate) fn rewrite<B: Stores>(
    b: &mut B,
    init: &B::S,
    n: usize,
    mut c: Vec<Op>,
    d: DeviceId,
    expected: &B::S,
) -> Result<Rewritten<B::S>, SimError> {
    let cap = 64 + 16 * c.len() * c.len();
    let mut target = d;
    let mut rev: Vec<Run> = Vec::new();
    let mut discards = 0;
    let mut retargeted = 0;
    let mut iterations = 0;
    let mut pre = Prefixes::new(init, n);
    while let Some(last) = c.last() {
        iterations += 1;
        if iterations > cap {
            return Err(no_serialization(d, "rewriting did not terminate"));
        }
        match *last {
            Op::Interact(ref r) if r.device == target => {
                // The target's own interaction, unless reordering left it disabled.
                let (_, skipped) = pre.after(b, &c, c.len())?;
                let Some(Op::Interact(r)) = c.pop() else { unreachable!() };
                if skipped {
                    discards += 1;
                } else {
                    rev.push(r);
                }
                pre.invalidate(c.len());
            }
            // Other devices' interactions and syncs elsewhere never reach the target.
            Op::Interact(_) => {
                c.pop();
                pre.invalidate(c.len());
            }
            Op::Sync { to, .. } if to != target => {
                c.pop();
                pre.invalidate(c.len());
            }
            Op::Sync { from, .. } => {
                let (stores, _) = pre.after(b, &c, c.len() - 1)?;
                let (si, sd) = (stores[from - 1].clone(), stores[target - 1].clone());
                if b.leq(&si, &sd)? {
                    // The sync brought nothing new.
                    c.pop();
                    pre.invalidate(c.len());
                } else if b.leq(&sd, &si)? {
                    // The target adopted the sender's state; follow the sender.
                    c.pop();
                    pre.invalidate(c.len());
                    target = from;
                } else {
                    let t = c.len() - 1;
                    let Some(k) = c[..t].iter().rposition(|op| op.affects(target)) else {
                        return Err(no_serialization(d, "device changed without a transition"));
                    };
                    match c[k] {
                        Op::Interact(_) => {
                            // Move the interaction after the sync.
                            let op = c.remove(k);
                            c.push(op);
                        }
                        Op::Sync { from: k_from, .. } if k_from == from => {
                            // The later sync from the same sender subsumes it.
                            c.remove(k);
                        }
                        Op::Sync { from: k_from, .. } => {
                            // Route the third device through `from`.
                            c[k] = Op::Sync { from: k_from, to: from };
                            retargeted += 1;
                        }
                    }
                    pre.invalidate(k);
                }
            }
        }
    }
    rev.reverse();
    let store = replay_with(b, init, &rev)?.map_err(|reason| no_serialization(d, reason))?;
    if store != *expected {
        return Err(no_serialization(
            d,
            format!(
                "sequential replay of {} interactions does not reproduce the final store",
                rev.len()
            ),
        ));
    }
    Ok(Rewritten {
        runs: rev,
        discards,
        retargeted,
        store,
    })
}

/// Build a serialization for device `d` of `trace`.
pub fn serialize_device(p: &CheckedProgram, trace: &Trace, d: DeviceId) -> Result<Serialization, SimError> {
    let n = trace.initial.len();
    if d == 0 || d > n {
        return Err(SimError::InvalidSchedule(format!("no device D{d}")));
    }
    let ops: Vec<Op> = trace
        .transitions()
        .filter_map(|l| match l {
            Label::Interact {
                device,
                interaction,
                arg,
            } => Some(Op::Interact(Run {
                device: *device,
                interaction: interaction.clone(),
                arg: arg.clone(),
                key: 0,
            })),
            Label::Sync { from, to, .. } if from != to => Some(Op::Sync { from: *from, to: *to }),
            _ => None,
        })
        .collect();
    let init = &trace.initial[0].store;
    let r = rewrite(&mut Direct(p), init, n, ops, d, &trace.last()[d - 1].store)?;
    Ok(Serialization {
        device: d,
        steps: r.runs.into_iter().map(step_of).collect(),
        idempotent_discards: r.discards,
        retargeted_syncs: r.retargeted,
        store: r.store,
    })
}

fn step_of(r: Run) -> SerialStep {
    SerialStep {
        interaction: r.interaction,
        arg: r.arg,
        actor: r.device,
    }
}

fn replay_with<B: Stores>(b: &mut B, init: &B::S, runs: &[Run]) -> Result<Result<B::S, String>, SimError> {
    let mut s = init.clone();
    for (k, r) in runs.iter().enumerate() {
        match b.apply(&s, r)? {
            Applied::Done(next) => s = next,
            Applied::Broken(_) => return Ok(Err(format!("step {} breaks its ensures clause", k + 1))),
            Applied::Disabled(clause) => {
                return Ok(Err(format!(
                    "step {} ({}({})) is disabled by requires clause {}",
                    k + 1,
                    r.interaction,
                    r.arg,
                    clause + 1
                )))
            }
        }
    }
    Ok(Ok(s))
}

/// Run `steps` in order on one device starting from `init`. Every step
/// must be enabled and satisfy its ensures clauses.
pub fn replay_serialization(p: &CheckedProgram, init: &Store, steps: &[SerialStep]) -> Result<Store, String> {
    let runs: Vec<Run> = steps
        .iter()
        .map(|s| Run {
            device: s.actor,
            interaction: s.interaction.clone(),
            arg: s.arg.clone(),
            key: 0,
        })
        .collect();
    replay_with(&mut Direct(p), init, &runs).map_err(|e| e.to_string())?
}
