use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Schedule, Step};
use crate::crdt::Datum;
use crate::program::{CheckedProgram, Type};
use crate::runtime::DeviceId;
use crate::verify::{BoundConfig, VerifyError};

/// Candidate arguments per interaction and device (`[name][device - 1]`).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgumentPool {
    pub args: BTreeMap<String, Vec<Vec<Datum>>>,
}

impl ArgumentPool {
    /// Use `templates[a]` for every device, with record `id` fields set to
    /// the device number. Distinct devices thus never create equal
    /// elements, matching fresh identifiers in a real deployment.
    pub fn stamped(p: &CheckedProgram, devices: usize, templates: &BTreeMap<String, Vec<Datum>>) -> Self {
        let mut args = BTreeMap::new();
        for (a, vs) in templates {
            let per: Vec<Vec<Datum>> = (1..=devices)
                .map(|d| {
                    let mut out: Vec<Datum> = Vec::new();
                    for v in vs {
                        let s = stamp(p, v, d);
                        if !out.contains(&s) {
                            out.push(s);
                        }
                    }
                    out
                })
                .collect();
            args.insert(a.clone(), per);
        }
        ArgumentPool { args }
    }

    /// Every argument within `cfg`, stamped.
    pub fn from_bounds(p: &CheckedProgram, devices: usize, cfg: &BoundConfig) -> Result<Self, VerifyError> {
        let mut templates = BTreeMap::new();
        for a in &p.interactions {
            templates.insert(a.name.clone(), cfg.arguments(p, &a.arg_type)?);
        }
        Ok(Self::stamped(p, devices, &templates))
    }

    pub fn for_device(&self, a: &str, d: DeviceId) -> &[Datum] {
        self.args
            .get(a)
            .and_then(|per| per.get(d - 1))
            .map_or(&[], Vec::as_slice)
    }
}

/// Replace the leading `id: Int` field of every record with `device`.
pub fn stamp(p: &CheckedProgram, v: &Datum, device: DeviceId) -> Datum {
    match v {
        Datum::Record { ty, fields } => {
            let has_id = p
                .records
                .get(ty)
                .and_then(|r| r.fields.first())
                .is_some_and(|(n, t)| n == "id" && *t == Type::Int);
            let fields = fields
                .iter()
                .enumerate()
                .map(|(k, f)| {
                    if k == 0 && has_id {
                        Datum::Int(device as i64)
                    } else {
                        stamp(p, f, device)
                    }
                })
                .collect();
            Datum::record(ty.clone(), fields)
        }
        Datum::Tuple(items) => Datum::Tuple(items.iter().map(|i| stamp(p, i, device)).collect()),
        other => other.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomConfig {
    pub devices: usize,
    pub steps: usize,
    pub coordination: bool,
    /// Also generate crash, recover and timeout steps.
    pub crashes: bool,
}

impl Default for RandomConfig {
    fn default() -> Self {
        RandomConfig {
            devices: 3,
            steps: 24,
            coordination: true,
            crashes: false,
        }
    }
}

/// A schedule drawn from `seed`; equal seeds give equal schedules.
pub fn random_schedule(p: &CheckedProgram, pool: &ArgumentPool, cfg: &RandomConfig, seed: u64) -> Schedule {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.devices.max(1);
    let names: Vec<&str> = p.interactions.iter().map(|a| a.name.as_str()).collect();
    let mut crashed = vec![false; n];
    let mut steps = Vec::with_capacity(cfg.steps);
    while steps.len() < cfg.steps {
        let roll: u32 = rng.gen_range(0..100);
        let device = rng.gen_range(1..=n);
        if cfg.crashes && roll >= 92 {
            let live = crashed.iter().filter(|c| !**c).count();
            let step = if crashed[device - 1] {
                if rng.gen_bool(0.5) {
                    Step::Timeout { device }
                } else {
                    crashed[device - 1] = false;
                    Step::Recover { device }
                }
            } else if live > 1 {
                crashed[device - 1] = true;
                Step::Crash { device }
            } else {
                continue;
            };
            steps.push(step);
        } else if roll < 45 {
            let Some(a) = names.choose(&mut rng) else {
                continue;
            };
            let Some(arg) = pool.for_device(a, device).choose(&mut rng) else {
                continue;
            };
            steps.push(Step::Interact {
                device,
                interaction: a.to_string(),
                arg: arg.clone(),
            });
        } else if roll < 70 || !cfg.coordination {
            if n < 2 {
                continue;
            }
            let mut to = rng.gen_range(1..n);
            if to >= device {
                to += 1;
            }
            steps.push(Step::Sync {
                from: device,
                to,
                locks: Default::default(),
            });
        } else {
            steps.push(Step::Deliver);
        }
    }
    Schedule {
        seed,
        devices: n,
        coordination: cfg.coordination,
        steps,
    }
}
