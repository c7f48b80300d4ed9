use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{holder, Device, DeviceId, RuntimeError};
use crate::crdt::Datum;

/// Token protocol messages. A `Grant` is realized by the driver as a Sync
/// transition from `from` to `to` carrying exactly `{token}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "msg", rename_all = "kebab-case")]
pub enum Message {
    Request { token: String, requester: DeviceId },
    Grant { token: String, from: DeviceId, to: DeviceId },
    Release { token: String, holder: DeviceId },
    TimeoutFired { device: DeviceId },
}

/// An interaction a device wants to run once it holds `needed`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intent {
    pub interaction: String,
    pub arg: Datum,
    pub needed: BTreeSet<String>,
}

/// Protocol bookkeeping. Token ownership itself is read from the devices'
/// lock sets, so the protocol and the transition rules cannot disagree on
/// who holds what.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockProtocol {
    pending: BTreeMap<String, BTreeSet<DeviceId>>,
    intents: BTreeMap<DeviceId, Intent>,
}

fn violation(msg: String) -> RuntimeError {
    RuntimeError::ProtocolViolation(msg)
}

fn live(devices: &[Device], d: DeviceId) -> bool {
    devices.get(d.wrapping_sub(1)).is_some_and(|x| !x.crashed)
}

impl LockProtocol {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intent(&self, d: DeviceId) -> Option<&Intent> {
        self.intents.get(&d)
    }

    pub fn take_intent(&mut self, d: DeviceId) -> Option<Intent> {
        self.intents.remove(&d)
    }

    pub fn pending(&self, token: &str) -> BTreeSet<DeviceId> {
        self.pending.get(token).cloned().unwrap_or_default()
    }

    /// Register that `d` wants to run `interaction` and needs `needed`.
    /// Tokens are acquired one at a time in ascending name order; the
    /// returned messages request the smallest one still missing.
    pub fn want(
        &mut self,
        devices: &[Device],
        d: DeviceId,
        interaction: &str,
        arg: &Datum,
        needed: BTreeSet<String>,
    ) -> Result<Vec<Message>, RuntimeError> {
        self.intents.insert(
            d,
            Intent {
                interaction: interaction.to_string(),
                arg: arg.clone(),
                needed,
            },
        );
        self.request_next(devices, d)
    }

    /// Request the smallest token `d`'s intent still misses.
    pub fn request_next(&mut self, devices: &[Device], d: DeviceId) -> Result<Vec<Message>, RuntimeError> {
        let Some(intent) = self.intents.get(&d) else {
            return Ok(Vec::new());
        };
        let held = &devices[d - 1].locks;
        match intent.needed.iter().find(|t| !held.contains(*t)).cloned() {
            Some(token) => self.step(
                devices,
                Message::Request {
                    token,
                    requester: d,
                },
            ),
            None => Ok(Vec::new()),
        }
    }

    /// Does `d` hold everything its intent needs?
    pub fn ready(&self, devices: &[Device], d: DeviceId) -> bool {
        self.intents
            .get(&d)
            .is_some_and(|i| i.needed.is_subset(&devices[d - 1].locks))
    }

    /// The next release a holder would perform: the smallest token with a
    /// live requester and a live holder.
    pub fn next_release(&self, devices: &[Device]) -> Option<Message> {
        self.pending.iter().find_map(|(token, reqs)| {
            let h = holder(devices, token)?;
            (live(devices, h) && reqs.iter().any(|&r| live(devices, r))).then(|| Message::Release {
                token: token.clone(),
                holder: h,
            })
        })
    }

    pub fn step(&mut self, devices: &[Device], msg: Message) -> Result<Vec<Message>, RuntimeError> {
        match msg {
            Message::Request { token, requester } => {
                if devices[requester - 1].locks.contains(&token) {
                    return Ok(Vec::new());
                }
                self.pending.entry(token).or_default().insert(requester);
                Ok(Vec::new())
            }
            Message::Release { token, holder: h } => {
                if !devices[h - 1].locks.contains(&token) {
                    return Err(violation(format!("D{h} releases `{token}` it does not hold")));
                }
                let next = self
                    .pending
                    .get(&token)
                    .and_then(|reqs| reqs.iter().copied().find(|&r| r != h && live(devices, r)));
                Ok(next
                    .map(|to| Message::Grant {
                        token,
                        from: h,
                        to,
                    })
                    .into_iter()
                    .collect())
            }
            Message::Grant { token, from, to } => {
                if !devices[from - 1].locks.contains(&token) {
                    return Err(violation(format!("D{from} grants `{token}` it does not hold")));
                }
                if let Some(reqs) = self.pending.get_mut(&token) {
                    reqs.remove(&to);
                    if reqs.is_empty() {
                        self.pending.remove(&token);
                    }
                }
                Ok(Vec::new())
            }
            Message::TimeoutFired { device } => {
                if live(devices, device) {
                    return Err(violation(format!("timeout fired for live device D{device}")));
                }
                self.intents.remove(&device);
                for reqs in self.pending.values_mut() {
                    reqs.remove(&device);
                }
                self.pending.retain(|_, r| !r.is_empty());
                let Some(successor) = devices.iter().find(|d| !d.crashed).map(|d| d.id) else {
                    return Ok(Vec::new());
                };
                Ok(devices[device - 1]
                    .locks
                    .iter()
                    .map(|t| Message::Grant {
                        token: t.clone(),
                        from: device,
                        to: successor,
                    })
                    .collect())
            }
        }
    }
}
