//! Devices and the two transition rules: Interact (run an interaction
//! locally, holding the tokens of everything it conflicts with) and Sync
//! (merge one device's store into another's, moving a set of tokens with
//! it). The token protocol that decides when tokens move lives in
//! [`locks`].

mod locks;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crdt::{Datum, ReplicaId};
use crate::eval::{apply_interaction, EvalError, Outcome, Store};
use crate::program::CheckedProgram;
use crate::verify::ConflictTable;

pub use locks::{LockProtocol, Message};

/// 1-based device number; device `d` stamps its operations with `ReplicaId(d)`.
pub type DeviceId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Device {
    pub id: DeviceId,
    pub store: Store,
    pub locks: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub crashed: bool,
}

impl Device {
    pub fn replica(&self) -> ReplicaId {
        ReplicaId(self.id as u32)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Label {
    Interact {
        device: DeviceId,
        interaction: String,
        arg: Datum,
    },
    Sync {
        from: DeviceId,
        to: DeviceId,
        locks: BTreeSet<String>,
    },
    Crash {
        device: DeviceId,
    },
    Recover {
        device: DeviceId,
    },
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Interact {
                device,
                interaction,
                arg,
            } => write!(f, "interact D{device} {interaction}({arg})"),
            Label::Sync { from, to, locks } => {
                let l: Vec<&str> = locks.iter().map(String::as_str).collect();
                write!(f, "sync D{from}->D{to} {{{}}}", l.join(","))
            }
            Label::Crash { device } => write!(f, "crash D{device}"),
            Label::Recover { device } => write!(f, "recover D{device}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum Refusal {
    MissingLocks { missing: BTreeSet<String> },
    /// Requires clause `clause` (0-based) is false.
    PreconditionFalse { clause: usize },
    DeviceCrashed,
}

impl fmt::Display for Refusal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Refusal::MissingLocks { missing } => {
                let l: Vec<&str> = missing.iter().map(String::as_str).collect();
                write!(f, "missing locks {{{}}}", l.join(","))
            }
            Refusal::PreconditionFalse { clause } => write!(f, "requires clause {} is false", clause + 1),
            Refusal::DeviceCrashed => f.write_str("device is crashed"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuntimeError {
    #[error("D{device}: ensures clause {} of `{interaction}` is false", clause + 1)]
    PostconditionFalse {
        device: DeviceId,
        interaction: String,
        clause: usize,
    },
    #[error("D{device} does not hold lock `{token}`")]
    LockNotHeld { device: DeviceId, token: String },
    #[error("no device D{0}")]
    UnknownDevice(DeviceId),
    #[error("`{0}` is not an executable interaction")]
    NotExecutable(String),
    #[error("`{0}` is not a lock")]
    UnknownLock(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// `n` devices with the initial store; device 1 holds every lock.
pub fn init_program(p: &CheckedProgram, n: usize) -> Vec<Device> {
    let store = p.initial_store();
    let all: BTreeSet<String> = p.interactions.iter().map(|a| a.name.clone()).collect();
    (1..=n.max(1))
        .map(|id| Device {
            id,
            store: store.clone(),
            locks: if id == 1 { all.clone() } else { BTreeSet::new() },
            crashed: false,
        })
        .collect()
}

fn device_index(devices: &[Device], d: DeviceId) -> Result<usize, RuntimeError> {
    if d >= 1 && d <= devices.len() {
        Ok(d - 1)
    } else {
        Err(RuntimeError::UnknownDevice(d))
    }
}

/// Interact rule on device `d`. On success only `devices[d]` changes.
pub fn interact(
    p: &CheckedProgram,
    devices: &mut [Device],
    d: DeviceId,
    a: &str,
    arg: &Datum,
    conflicts: &ConflictTable,
) -> Result<Result<(), Refusal>, RuntimeError> {
    let i = device_index(devices, d)?;
    let def = p.interaction(a).ok_or_else(|| RuntimeError::NotExecutable(a.to_string()))?;
    let dev = &devices[i];
    if dev.crashed {
        return Ok(Err(Refusal::DeviceCrashed));
    }
    let missing: BTreeSet<String> = conflicts.conflicts(a).difference(&dev.locks).cloned().collect();
    if !missing.is_empty() {
        return Ok(Err(Refusal::MissingLocks { missing }));
    }
    match apply_interaction(p, &dev.store, dev.replica(), def, arg)? {
        Outcome::Disabled { clause } => Ok(Err(Refusal::PreconditionFalse { clause })),
        Outcome::Applied {
            failed_ensures: Some(clause),
            ..
        } => Err(RuntimeError::PostconditionFalse {
            device: d,
            interaction: a.to_string(),
            clause,
        }),
        Outcome::Applied { store, .. } => {
            devices[i].store = store;
            Ok(Ok(()))
        }
    }
}

/// Sync rule: merge the sender's store into the receiver's and move
/// `locks` from sender to receiver.
pub fn sync(devices: &mut [Device], from: DeviceId, to: DeviceId, locks: &BTreeSet<String>) -> Result<(), RuntimeError> {
    let s = device_index(devices, from)?;
    let r = device_index(devices, to)?;
    if let Some(token) = locks.iter().find(|t| !devices[s].locks.contains(*t)) {
        return Err(RuntimeError::LockNotHeld {
            device: from,
            token: token.clone(),
        });
    }
    let merged = devices[r].store.merge(&devices[s].store)?;
    devices[r].store = merged;
    if s != r {
        for t in locks {
            devices[s].locks.remove(t);
            devices[r].locks.insert(t.clone());
        }
    }
    Ok(())
}

/// The device holding `token`, if exactly one does.
pub fn holder(devices: &[Device], token: &str) -> Option<DeviceId> {
    let mut it = devices.iter().filter(|d| d.locks.contains(token));
    match (it.next(), it.next()) {
        (Some(d), None) => Some(d.id),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::appointment;
    use crate::syntax::compile;
    use crate::verify::{compute_conflicts, BoundConfig};

    fn calendar() -> (CheckedProgram, ConflictTable) {
        let p = compile(include_str!("../../corpus/calendar.lore")).unwrap();
        let mut t = ConflictTable::empty(&p);
        t.insert("add_vacation", "add_vacation");
        (p, t)
    }

    #[test]
    fn init_assigns_all_locks_to_first_device() {
        let (p, _) = calendar();
        let ds = init_program(&p, 3);
        assert_eq!(ds[0].locks, BTreeSet::from(["add_vacation".into(), "add_work".into()]));
        assert!(ds[1].locks.is_empty() && ds[2].locks.is_empty());
        assert_eq!(init_program(&p, 1).len(), 1);
    }

    #[test]
    fn interact_and_sync() {
        let (p, t) = calendar();
        let mut ds = init_program(&p, 2);
        let v20 = appointment(1, 0, 20);
        assert_eq!(interact(&p, &mut ds, 1, "add_vacation", &v20, &t).unwrap(), Ok(()));
        let rv = crate::eval::read_derived(&p, "remaining_vacation", &ds[0].store).unwrap();
        assert_eq!(rv, crate::eval::Value::int(10));
        let refused = interact(&p, &mut ds, 2, "add_vacation", &appointment(2, 0, 12), &t).unwrap();
        assert!(matches!(refused, Err(Refusal::MissingLocks { .. })));
        assert_eq!(interact(&p, &mut ds, 2, "add_work", &appointment(2, 1, 2), &t).unwrap(), Ok(()));

        let token = BTreeSet::from(["add_vacation".to_string()]);
        assert!(matches!(
            sync(&mut ds, 2, 1, &token),
            Err(RuntimeError::LockNotHeld { .. })
        ));
        sync(&mut ds, 1, 2, &token).unwrap();
        assert!(ds[1].locks.contains("add_vacation"));
        assert!(ds[0].store.leq(&ds[1].store).unwrap());
        let again = interact(&p, &mut ds, 2, "add_vacation", &appointment(2, 0, 12), &t).unwrap();
        assert_eq!(again, Err(Refusal::PreconditionFalse { clause: 2 }));
    }

    #[test]
    fn computed_table_allows_work_without_locks() {
        let (p, _) = calendar();
        let t = compute_conflicts(&p, &BoundConfig::default()).unwrap();
        let mut ds = init_program(&p, 2);
        assert_eq!(interact(&p, &mut ds, 2, "add_work", &appointment(2, 0, 1), &t).unwrap(), Ok(()));
    }
}
