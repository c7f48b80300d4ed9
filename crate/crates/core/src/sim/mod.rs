//! Deterministic multi-device simulation: scripted or generated schedules
//! are run against the runtime, producing traces that are checked for
//! validity, token uniqueness, ordering of conflicting interactions, and
//! serializability.

mod explore;
mod random;
mod serialize;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::crdt::Datum;
use crate::eval::{violated_invariants, EvalError, Store};
use crate::program::CheckedProgram;
use crate::runtime::{
    init_program, interact, sync, Device, DeviceId, Label, LockProtocol, Message, Refusal, RuntimeError,
};
use crate::verify::ConflictTable;

pub use explore::{explore, trace_of, ExploreConfig, ExploreReport};
pub use random::{random_schedule, ArgumentPool, RandomConfig};
pub use serialize::{replay_serialization, serialize_device, Serialization, SerialStep};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("no serialization for D{device}: {reason}")]
    NoSerialization { device: DeviceId, reason: String },
}

/// One intended event of a schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Step {
    /// Attempt an interaction. Under coordination a device lacking tokens
    /// requests them and runs the interaction once they arrive.
    Interact {
        device: DeviceId,
        interaction: String,
        arg: Datum,
    },
    /// Anti-entropy sync, optionally handing over locks.
    Sync {
        from: DeviceId,
        to: DeviceId,
        #[serde(default)]
        locks: BTreeSet<String>,
    },
    /// Let the token protocol perform its next release and grant.
    Deliver,
    Crash {
        device: DeviceId,
    },
    Recover {
        device: DeviceId,
    },
    /// Failure detector fires for a crashed device.
    Timeout {
        device: DeviceId,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    #[serde(default)]
    pub seed: u64,
    pub devices: usize,
    pub coordination: bool,
    pub steps: Vec<Step>,
}

impl Schedule {
    pub fn from_json(text: &str) -> Result<Schedule, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::InvalidSchedule(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedules serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Event {
    Transition { label: Label },
    Refused {
        device: DeviceId,
        interaction: String,
        arg: Datum,
        refusal: Refusal,
    },
    /// A schedule step with no effect (nothing to deliver, a timeout for a
    /// live device, a sync involving a crashed device).
    Idle { note: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// 0-based index of the schedule step that caused this entry.
    pub step: usize,
    pub event: Event,
    /// Configuration after the event.
    pub devices: Vec<Device>,
}

impl TraceEntry {
    pub fn label(&self) -> Option<&Label> {
        match &self.event {
            Event::Transition { label } => Some(label),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub seed: u64,
    pub coordination: bool,
    pub conflicts: ConflictTable,
    pub initial: Vec<Device>,
    pub entries: Vec<TraceEntry>,
}

impl Trace {
    /// Configuration before entry `k` (0-based).
    pub fn before(&self, k: usize) -> &[Device] {
        if k == 0 {
            &self.initial
        } else {
            &self.entries[k - 1].devices
        }
    }

    pub fn last(&self) -> &[Device] {
        self.entries.last().map_or(&self.initial, |e| &e.devices)
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Label> {
        self.entries.iter().filter_map(TraceEntry::label)
    }

    /// One line per entry: number, event, then lock set and store digest
    /// of every device.
    pub fn log(&self) -> String {
        let mut out = String::new();
        writeln!(out, "0 init{}", config_text(&self.initial)).unwrap();
        for (k, e) in self.entries.iter().enumerate() {
            let what = match &e.event {
                Event::Transition { label } => label.to_string(),
                Event::Refused {
                    device,
                    interaction,
                    arg,
                    refusal,
                } => format!("refused D{device} {interaction}({arg}): {refusal}"),
                Event::Idle { note } => format!("idle: {note}"),
            };
            writeln!(out, "{} {what}{}", k + 1, config_text(&e.devices)).unwrap();
        }
        out
    }

    /// Digest of the text log; equal for identical runs.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.log().as_bytes());
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

fn config_text(devices: &[Device]) -> String {
    let mut out = String::new();
    for d in devices {
        let locks: Vec<&str> = d.locks.iter().map(String::as_str).collect();
        write!(
            out,
            " | D{}{} {{{}}} {}",
            d.id,
            if d.crashed { "!" } else { "" },
            locks.join(","),
            d.store.digest()
        )
        .unwrap();
    }
    out
}

struct Driver<'a> {
    p: &'a CheckedProgram,
    conflicts: &'a ConflictTable,
    coordination: bool,
    devices: Vec<Device>,
    protocol: LockProtocol,
    entries: Vec<TraceEntry>,
}

impl Driver<'_> {
    fn push(&mut self, step: usize, event: Event) {
        self.entries.push(TraceEntry {
            step,
            event,
            devices: self.devices.clone(),
        });
    }

    fn check_device(&self, d: DeviceId) -> Result<(), SimError> {
        if d == 0 || d > self.devices.len() {
            return Err(SimError::InvalidSchedule(format!("no device D{d}")));
        }
        Ok(())
    }

    fn attempt(&mut self, step: usize, d: DeviceId, a: &str, arg: &Datum) -> Result<(), SimError> {
        let outcome = interact(self.p, &mut self.devices, d, a, arg, self.conflicts)?;
        let event = match outcome {
            Ok(()) => Event::Transition {
                label: Label::Interact {
                    device: d,
                    interaction: a.to_string(),
                    arg: arg.clone(),
                },
            },
            Err(refusal) => {
                if let (true, Refusal::MissingLocks { .. }) = (self.coordination, &refusal) {
                    let needed = self.conflicts.conflicts(a);
                    let msgs = self.protocol.want(&self.devices, d, a, arg, needed)?;
                    self.expect_silent(msgs)?;
                }
                Event::Refused {
                    device: d,
                    interaction: a.to_string(),
                    arg: arg.clone(),
                    refusal,
                }
            }
        };
        self.push(step, event);
        Ok(())
    }

    fn expect_silent(&self, msgs: Vec<Message>) -> Result<(), SimError> {
        if msgs.is_empty() {
            Ok(())
        } else {
            Err(RuntimeError::ProtocolViolation(format!("unexpected messages {msgs:?}")).into())
        }
    }

    /// Realize a grant as a Sync carrying the token, then let the receiver
    /// run its waiting interaction or request its next token.
    fn grant(&mut self, step: usize, msg: Message) -> Result<(), SimError> {
        let Message::Grant { token, from, to } = &msg else {
            return Err(RuntimeError::ProtocolViolation(format!("expected a grant, got {msg:?}")).into());
        };
        let (token, from, to) = (token.clone(), *from, *to);
        let follow = self.protocol.step(&self.devices, msg)?;
        self.expect_silent(follow)?;
        let locks = BTreeSet::from([token]);
        sync(&mut self.devices, from, to, &locks)?;
        self.push(
            step,
            Event::Transition {
                label: Label::Sync { from, to, locks },
            },
        );
        if self.protocol.ready(&self.devices, to) {
            let intent = self.protocol.take_intent(to).expect("ready implies an intent");
            self.attempt(step, to, &intent.interaction, &intent.arg)?;
        } else {
            let msgs = self.protocol.request_next(&self.devices, to)?;
            self.expect_silent(msgs)?;
        }
        Ok(())
    }

    fn run(&mut self, k: usize, s: &Step) -> Result<(), SimError> {
        match s {
            Step::Interact {
                device,
                interaction,
                arg,
            } => {
                self.check_device(*device)?;
                if self.p.interaction(interaction).is_none() {
                    return Err(SimError::InvalidSchedule(format!("unknown interaction `{interaction}`")));
                }
                self.attempt(k, *device, interaction, arg)
            }
            Step::Sync { from, to, locks } => {
                self.check_device(*from)?;
                self.check_device(*to)?;
                if self.devices[from - 1].crashed || self.devices[to - 1].crashed {
                    self.push(
                        k,
                        Event::Idle {
                            note: format!("sync D{from}->D{to} skipped: device crashed"),
                        },
                    );
                    return Ok(());
                }
                sync(&mut self.devices, *from, *to, locks)?;
                self.push(
                    k,
                    Event::Transition {
                        label: Label::Sync {
                            from: *from,
                            to: *to,
                            locks: locks.clone(),
                        },
                    },
                );
                Ok(())
            }
            Step::Deliver => match self.protocol.next_release(&self.devices) {
                None => {
                    self.push(
                        k,
                        Event::Idle {
                            note: "deliver: no pending request".into(),
                        },
                    );
                    Ok(())
                }
                Some(release) => {
                    for g in self.protocol.step(&self.devices, release)? {
                        self.grant(k, g)?;
                    }
                    Ok(())
                }
            },
            Step::Crash { device } => {
                self.check_device(*device)?;
                self.devices[device - 1].crashed = true;
                self.push(k, Event::Transition { label: Label::Crash { device: *device } });
                Ok(())
            }
            Step::Recover { device } => {
                self.check_device(*device)?;
                self.devices[device - 1].crashed = false;
                self.push(k, Event::Transition { label: Label::Recover { device: *device } });
                Ok(())
            }
            Step::Timeout { device } => {
                self.check_device(*device)?;
                if !self.devices[device - 1].crashed {
                    self.push(
                        k,
                        Event::Idle {
                            note: format!("timeout for live D{device} ignored"),
                        },
                    );
                    return Ok(());
                }
                let grants = self.protocol.step(&self.devices, Message::TimeoutFired { device: *device })?;
                if grants.is_empty() {
                    self.push(
                        k,
                        Event::Idle {
                            note: format!("timeout for D{device}: nothing to reclaim"),
                        },
                    );
                }
                for g in grants {
                    self.grant(k, g)?;
                }
                Ok(())
            }
        }
    }
}

/// Run a schedule. With coordination off, interactions run without any
/// lock requirement (the empty conflict table) and `conflicts` is ignored.
pub fn run_schedule(p: &CheckedProgram, conflicts: &ConflictTable, sched: &Schedule) -> Result<Trace, SimError> {
    if sched.devices == 0 {
        return Err(SimError::InvalidSchedule("at least one device is required".into()));
    }
    let table = if sched.coordination {
        conflicts.clone()
    } else {
        ConflictTable::empty(p)
    };
    let initial = init_program(p, sched.devices);
    let mut driver = Driver {
        p,
        conflicts: &table,
        coordination: sched.coordination,
        devices: initial.clone(),
        protocol: LockProtocol::new(),
        entries: Vec::new(),
    };
    for (k, s) in sched.steps.iter().enumerate() {
        driver.run(k, s)?;
    }
    Ok(Trace {
        seed: sched.seed,
        coordination: sched.coordination,
        conflicts: table.clone(),
        initial,
        entries: driver.entries,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// 1-based trace entry; 0 is the initial configuration.
    pub step: usize,
    pub device: DeviceId,
    pub invariants: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub states_checked: usize,
    pub first_violation: Option<Violation>,
}

impl ValidityReport {
    pub fn valid(&self) -> bool {
        self.first_violation.is_none()
    }

    pub fn message(&self) -> String {
        match &self.first_violation {
            None => format!("valid: all invariants hold in {} states", self.states_checked),
            Some(v) => {
                let ids: Vec<String> = v.invariants.iter().map(|i| i.to_string()).collect();
                format!(
                    "invariant {} violated at step {} on D{}",
                    ids.join(", "),
                    v.step,
                    v.device
                )
            }
        }
    }
}

/// Evaluate every invariant on every device after every entry.
pub fn check_validity(p: &CheckedProgram, trace: &Trace) -> Result<ValidityReport, SimError> {
    let mut checked = 0;
    let configs = std::iter::once(&trace.initial).chain(trace.entries.iter().map(|e| &e.devices));
    let mut seen: std::collections::HashMap<&Store, Vec<usize>> = std::collections::HashMap::new();
    for (step, config) in configs.enumerate() {
        for d in config {
            checked += 1;
            let bad = match seen.get(&d.store) {
                Some(v) => v.clone(),
                None => {
                    let v = violated_invariants(p, &d.store)?;
                    seen.insert(&d.store, v.clone());
                    v
                }
            };
            if !bad.is_empty() {
                return Ok(ValidityReport {
                    states_checked: checked,
                    first_violation: Some(Violation {
                        step,
                        device: d.id,
                        invariants: bad,
                    }),
                });
            }
        }
    }
    Ok(ValidityReport {
        states_checked: checked,
        first_violation: None,
    })
}

/// Every lock is held by exactly one device in every configuration.
pub fn check_tokens(p: &CheckedProgram, trace: &Trace) -> Result<(), String> {
    let configs = std::iter::once(&trace.initial).chain(trace.entries.iter().map(|e| &e.devices));
    for (step, config) in configs.enumerate() {
        for a in &p.interactions {
            let n = config.iter().filter(|d| d.locks.contains(&a.name)).count();
            if n != 1 {
                return Err(format!("step {step}: lock `{}` held by {n} devices", a.name));
            }
        }
    }
    Ok(())
}

/// Any two Interact transitions of conflicting interactions are ordered:
/// one's starting store includes the other's result.
pub fn check_conflict_order(trace: &Trace) -> Result<(), String> {
    let mut runs: Vec<(usize, &str, &Store, &Store)> = Vec::new();
    for (k, e) in trace.entries.iter().enumerate() {
        if let Some(Label::Interact {
            device, interaction, ..
        }) = e.label()
        {
            let before = &trace.before(k)[device - 1].store;
            let after = &e.devices[device - 1].store;
            runs.push((k + 1, interaction, before, after));
        }
    }
    for (i, (s1, a1, b1, r1)) in runs.iter().enumerate() {
        for (s2, a2, b2, r2) in &runs[i + 1..] {
            if !trace.conflicts.conflict(a1, a2) {
                continue;
            }
            let ordered = r1.leq(b2).map_err(|e| e.to_string())? || r2.leq(b1).map_err(|e| e.to_string())?;
            if !ordered {
                return Err(format!("conflicting {a1} (step {s1}) and {a2} (step {s2}) ran concurrently"));
            }
        }
    }
    Ok(())
}

/// Every Interact and Sync moves the affected device weakly upward.
pub fn check_monotone(trace: &Trace) -> Result<(), String> {
    for (k, e) in trace.entries.iter().enumerate() {
        let d = match e.label() {
            Some(Label::Interact { device, .. }) => *device,
            Some(Label::Sync { to, .. }) => *to,
            _ => continue,
        };
        let before = &trace.before(k)[d - 1].store;
        if !before.leq(&e.devices[d - 1].store).map_err(|e| e.to_string())? {
            return Err(format!("step {}: D{d} moved down", k + 1));
        }
    }
    Ok(())
}
