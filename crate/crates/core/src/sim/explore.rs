//! Exhaustive exploration of all transition sequences up to a length,
//! breadth first, merging paths that reach the same configuration. Each
//! configuration is inspected once, on the first (shortest) path found.
//!
//! Stores are interned, so a configuration is a handful of integers: one
//! store id and one lock bitmask per device.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::Serialize;

use super::serialize::{rewrite, Applied, Op, Run, Stores};
use super::{ArgumentPool, Event, SimError, Trace, TraceEntry, Violation};
use crate::crdt::ReplicaId;
use crate::eval::{apply_interaction, violated_invariants, Outcome, Store};
use crate::program::CheckedProgram;
use crate::runtime::{init_program, interact, sync, Label};
use crate::verify::ConflictTable;

#[derive(Debug, Clone)]
pub struct ExploreConfig {
    pub devices: usize,
    pub max_transitions: usize,
    pub pool: ArgumentPool,
    /// Serialize the affected device after every new configuration.
    pub check_serialization: bool,
    pub stop_at_violation: bool,
    /// Stop (with `truncated` set) once this many configurations are known.
    pub max_configurations: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ExploreReport {
    pub configurations: usize,
    pub transitions: u64,
    pub depth: usize,
    /// Distinct stores seen on any device.
    pub stores: usize,
    /// Shortest path to the first invalid configuration found.
    pub violation: Option<(Vec<Label>, Violation)>,
    pub token_failures: Vec<String>,
    pub order_failures: Vec<String>,
    pub serialization_failures: Vec<String>,
    pub serializations: usize,
    pub idempotent_discards: usize,
    pub truncated: bool,
}

impl ExploreReport {
    pub fn clean(&self) -> bool {
        self.violation.is_none()
            && self.token_failures.is_empty()
            && self.order_failures.is_empty()
            && self.serialization_failures.is_empty()
    }
}

/// Rebuild the trace of a path of labels with the runtime.
pub fn trace_of(p: &CheckedProgram, table: &ConflictTable, devices: usize, path: &[Label]) -> Result<Trace, SimError> {
    let initial = init_program(p, devices);
    let mut cur = initial.clone();
    let mut entries = Vec::with_capacity(path.len());
    for (k, l) in path.iter().enumerate() {
        match l {
            Label::Interact {
                device,
                interaction,
                arg,
            } => {
                if let Err(r) = interact(p, &mut cur, *device, interaction, arg, table)? {
                    return Err(SimError::InvalidSchedule(format!("path step {} refused: {r}", k + 1)));
                }
            }
            Label::Sync { from, to, locks } => sync(&mut cur, *from, *to, locks)?,
            Label::Crash { device } => cur[device - 1].crashed = true,
            Label::Recover { device } => cur[device - 1].crashed = false,
        }
        entries.push(TraceEntry {
            step: k,
            event: Event::Transition { label: l.clone() },
            devices: cur.clone(),
        });
    }
    Ok(Trace {
        seed: 0,
        coordination: true,
        conflicts: table.clone(),
        initial,
        entries,
    })
}

/// Interned stores with cached operations. `key` of a run is its index
/// in the label alphabet.
struct Interner<'a> {
    p: &'a CheckedProgram,
    stores: Vec<Store>,
    ids: HashMap<Store, u32>,
    apply: HashMap<(u32, usize), Applied<u32>>,
    merge: HashMap<(u32, u32), u32>,
    leq: HashMap<(u32, u32), bool>,
    invalid: Vec<Option<Vec<usize>>>,
}

impl Interner<'_> {
    fn intern(&mut self, s: Store) -> u32 {
        if let Some(&id) = self.ids.get(&s) {
            return id;
        }
        let id = self.stores.len() as u32;
        self.stores.push(s.clone());
        self.ids.insert(s, id);
        self.invalid.push(None);
        id
    }

    fn violated(&mut self, s: u32) -> Result<Vec<usize>, SimError> {
        if let Some(v) = &self.invalid[s as usize] {
            return Ok(v.clone());
        }
        let v = violated_invariants(self.p, &self.stores[s as usize])?;
        self.invalid[s as usize] = Some(v.clone());
        Ok(v)
    }
}

impl Stores for Interner<'_> {
    type S = u32;

    fn apply(&mut self, s: &u32, run: &Run) -> Result<Applied<u32>, SimError> {
        if let Some(a) = self.apply.get(&(*s, run.key)) {
            return Ok(a.clone());
        }
        let def = self
            .p
            .interaction(&run.interaction)
            .ok_or_else(|| SimError::InvalidSchedule(format!("unknown interaction `{}`", run.interaction)))?;
        let out = match apply_interaction(self.p, &self.stores[*s as usize], ReplicaId(run.device as u32), def, &run.arg)? {
            Outcome::Disabled { clause } => Applied::Disabled(clause),
            Outcome::Applied {
                failed_ensures: Some(clause),
                ..
            } => Applied::Broken(clause),
            Outcome::Applied { store, .. } => Applied::Done(self.intern(store)),
        };
        self.apply.insert((*s, run.key), out.clone());
        Ok(out)
    }

    fn merge(&mut self, a: &u32, b: &u32) -> Result<u32, SimError> {
        if a == b {
            return Ok(*a);
        }
        if let Some(&m) = self.merge.get(&(*a, *b)) {
            return Ok(m);
        }
        let m = self.stores[*a as usize].merge(&self.stores[*b as usize])?;
        let m = self.intern(m);
        self.merge.insert((*a, *b), m);
        Ok(m)
    }

    fn leq(&mut self, a: &u32, b: &u32) -> Result<bool, SimError> {
        if a == b {
            return Ok(true);
        }
        if let Some(&r) = self.leq.get(&(*a, *b)) {
            return Ok(r);
        }
        let r = self.stores[*a as usize].leq(&self.stores[*b as usize])?;
        self.leq.insert((*a, *b), r);
        Ok(r)
    }
}

/// Store ids of devices 1..=n followed by their lock bitmasks (bit `i`
/// for the `i`-th interaction's token).
type Config = Box<[u32]>;

enum Move {
    Interact { run: Run, needed: u32 },
    Sync { from: usize, to: usize, locks: u32 },
}

fn subsets(items: &[usize]) -> Vec<u32> {
    let mut out = vec![0u32];
    for &i in items {
        let with: Vec<u32> = out.iter().map(|m| m | (1 << i)).collect();
        out.extend(with);
    }
    out
}

struct Explorer<'a> {
    table: &'a ConflictTable,
    cfg: &'a ExploreConfig,
    n: usize,
    names: Vec<String>,
    moves: Vec<Move>,
    st: Interner<'a>,
    init: Config,
    report: ExploreReport,
}

impl<'a> Explorer<'a> {
    fn new(p: &'a CheckedProgram, table: &'a ConflictTable, cfg: &'a ExploreConfig) -> Self {
        let names: Vec<String> = p.interactions.iter().map(|a| a.name.clone()).collect();
        assert!(names.len() <= 32, "at most 32 interactions can be explored");
        let mask = |set: &BTreeSet<String>| -> u32 {
            names
                .iter()
                .enumerate()
                .filter(|(_, a)| set.contains(*a))
                .fold(0, |m, (i, _)| m | (1 << i))
        };
        let n = cfg.devices.max(1);
        let mut moves = Vec::new();
        for d in 1..=n {
            for a in &names {
                for arg in cfg.pool.for_device(a, d) {
                    moves.push(Move::Interact {
                        run: Run {
                            device: d,
                            interaction: a.clone(),
                            arg: arg.clone(),
                            key: moves.len(),
                        },
                        needed: mask(&table.conflicts(a)),
                    });
                }
            }
        }
        // Syncs carry any subset of the tokens some conflict set mentions;
        // other tokens never matter for enabledness and stay with D1.
        let relevant: BTreeSet<String> = table.iter().flat_map(|(_, s)| s.iter().cloned()).collect();
        let relevant: Vec<usize> = (0..names.len()).filter(|&i| relevant.contains(&names[i])).collect();
        for from in 1..=n {
            for to in (1..=n).filter(|&t| t != from) {
                for locks in subsets(&relevant) {
                    moves.push(Move::Sync { from, to, locks });
                }
            }
        }
        assert!(moves.len() < u16::MAX as usize, "label alphabet too large");
        let mut st = Interner {
            p,
            stores: Vec::new(),
            ids: HashMap::new(),
            apply: HashMap::new(),
            merge: HashMap::new(),
            leq: HashMap::new(),
            invalid: Vec::new(),
        };
        let s0 = st.intern(p.initial_store());
        let all = if names.len() == 32 { u32::MAX } else { (1u32 << names.len()) - 1 };
        let mut init = vec![s0; n];
        init.extend((1..=n).map(|d| if d == 1 { all } else { 0 }));
        Explorer {
            table,
            cfg,
            n,
            names,
            moves,
            st,
            init: init.into(),
            report: ExploreReport::default(),
        }
    }

    fn label(&self, li: u16) -> Label {
        match &self.moves[li as usize] {
            Move::Interact { run, .. } => Label::Interact {
                device: run.device,
                interaction: run.interaction.clone(),
                arg: run.arg.clone(),
            },
            Move::Sync { from, to, locks } => Label::Sync {
                from: *from,
                to: *to,
                locks: (0..self.names.len())
                    .filter(|i| locks & (1 << i) != 0)
                    .map(|i| self.names[i].clone())
                    .collect(),
            },
        }
    }

    fn labels_of(&self, path: &[u16]) -> Vec<Label> {
        path.iter().map(|&i| self.label(i)).collect()
    }

    /// Apply a move; `None` when it is not enabled or changes nothing.
    fn step(&mut self, c: &[u32], li: u16) -> Result<Option<Config>, SimError> {
        let n = self.n;
        match &self.moves[li as usize] {
            Move::Interact { run, needed } => {
                let d = run.device - 1;
                if c[n + d] & needed != *needed {
                    return Ok(None);
                }
                let run = run.clone();
                match self.st.apply(&c[d], &run)? {
                    Applied::Disabled(_) => Ok(None),
                    Applied::Broken(clause) => Err(crate::runtime::RuntimeError::PostconditionFalse {
                        device: run.device,
                        interaction: run.interaction,
                        clause,
                    }
                    .into()),
                    Applied::Done(s) => {
                        let mut next: Config = c.into();
                        next[d] = s;
                        Ok(Some(next))
                    }
                }
            }
            &Move::Sync { from, to, locks } => {
                let (f, t) = (from - 1, to - 1);
                if c[n + f] & locks != locks {
                    return Ok(None);
                }
                let merged = self.st.merge(&c[t], &c[f])?;
                if merged == c[t] && locks == 0 {
                    return Ok(None);
                }
                let mut next: Config = c.into();
                next[t] = merged;
                next[n + f] &= !locks;
                next[n + t] |= locks;
                Ok(Some(next))
            }
        }
    }

    /// Configurations along a path, starting with the initial one.
    fn replay(&mut self, path: &[u16]) -> Result<Vec<Config>, SimError> {
        let mut out = Vec::with_capacity(path.len() + 1);
        out.push(self.init.clone());
        for &li in path {
            let next = self
                .step(out.last().expect("nonempty"), li)?
                .expect("explored paths are enabled");
            out.push(next);
        }
        Ok(out)
    }

    /// Checks for a configuration reached by extending an already inspected
    /// path with one transition. Only the device that transition changed
    /// needs looking at: for every other device the last transition is
    /// irrelevant (the serializer drops it first) and the
    /// rest of the trace was inspected with the parent.
    fn inspect(&mut self, path: &[u16]) -> Result<(), SimError> {
        let n = self.n;
        let configs = self.replay(path)?;
        let k = path.len();
        let last = *path.last().expect("nonempty path");
        let d = match &self.moves[last as usize] {
            Move::Interact { run, .. } => run.device,
            Move::Sync { to, .. } => *to,
        };
        let config = &configs[k];
        let bad = self.st.violated(config[d - 1])?;
        if !bad.is_empty() {
            if self.report.violation.is_none() {
                self.report.violation = Some((
                    self.labels_of(path),
                    Violation {
                        step: k,
                        device: d,
                        invariants: bad,
                    },
                ));
            }
            return Ok(());
        }
        if let Move::Sync { .. } = self.moves[last as usize] {
            for (i, a) in self.names.iter().enumerate() {
                let holders = (0..n).filter(|&x| config[n + x] & (1 << i) != 0).count();
                if holders != 1 {
                    self.report.token_failures.push(format!(
                        "{:?}: lock `{a}` held by {holders} devices",
                        self.labels_of(path)
                    ));
                }
            }
        }
        if let Move::Interact { run, .. } = &self.moves[last as usize] {
            let a2 = run.interaction.clone();
            let (b2, r2) = (configs[k - 1][d - 1], config[d - 1]);
            for j in 0..k - 1 {
                let Move::Interact { run: r, .. } = &self.moves[path[j] as usize] else {
                    continue;
                };
                if !self.table.conflict(&r.interaction, &a2) {
                    continue;
                }
                let (a1, d1) = (r.interaction.clone(), r.device);
                let (b1, r1) = (configs[j][d1 - 1], configs[j + 1][d1 - 1]);
                if !(self.st.leq(&r1, &b2)? || self.st.leq(&r2, &b1)?) {
                    self.report.order_failures.push(format!(
                        "{:?}: {a1} (step {}) and {a2} (step {k}) unordered",
                        self.labels_of(path),
                        j + 1,
                    ));
                }
            }
        }
        if self.cfg.check_serialization {
            let ops: Vec<Op> = path
                .iter()
                .map(|&li| match &self.moves[li as usize] {
                    Move::Interact { run, .. } => Op::Interact(run.clone()),
                    Move::Sync { from, to, .. } => Op::Sync { from: *from, to: *to },
                })
                .collect();
            let init = self.init[0];
            match rewrite(&mut self.st, &init, n, ops, d, &config[d - 1]) {
                Ok(r) => {
                    self.report.serializations += 1;
                    self.report.idempotent_discards += r.discards;
                }
                Err(SimError::NoSerialization { reason, .. }) => self
                    .report
                    .serialization_failures
                    .push(format!("D{d} after {:?}: {reason}", self.labels_of(path))),
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    fn finish(mut self, visited: usize, depth: usize, truncated: bool) -> ExploreReport {
        self.report.configurations = visited;
        self.report.depth = depth;
        self.report.truncated = truncated;
        self.report.stores = self.st.stores.len();
        self.report
    }
}

/// Explore every configuration reachable in at most `max_transitions`
/// Interact/Sync transitions under `table`, checking validity, token
/// uniqueness, ordering of conflicting interactions and (optionally)
/// serializability along the shortest path to each.
pub fn explore(p: &CheckedProgram, table: &ConflictTable, cfg: &ExploreConfig) -> Result<ExploreReport, SimError> {
    let mut ex = Explorer::new(p, table, cfg);
    let bad = ex.st.violated(ex.init[0])?;
    if !bad.is_empty() {
        ex.report.violation = Some((
            Vec::new(),
            Violation {
                step: 0,
                device: 1,
                invariants: bad,
            },
        ));
        return Ok(ex.finish(1, 0, false));
    }
    let mut visited: HashSet<Config> = HashSet::from([ex.init.clone()]);
    let mut frontier: Vec<(Vec<u16>, Config)> = vec![(Vec::new(), ex.init.clone())];
    for depth in 1..=cfg.max_transitions {
        let mut next = Vec::new();
        for (path, config) in &frontier {
            for li in 0..ex.moves.len() as u16 {
                let Some(c) = ex.step(config, li)? else {
                    continue;
                };
                ex.report.transitions += 1;
                if visited.contains(&c) {
                    continue;
                }
                visited.insert(c.clone());
                let mut p2 = path.clone();
                p2.push(li);
                ex.inspect(&p2)?;
                if ex.report.violation.is_some() && cfg.stop_at_violation {
                    return Ok(ex.finish(visited.len(), depth, false));
                }
                if visited.len() > cfg.max_configurations {
                    return Ok(ex.finish(visited.len(), depth, true));
                }
                if depth < cfg.max_transitions {
                    next.push((p2, c));
                }
            }
        }
        ex.report.depth = depth;
        frontier = next;
    }
    let depth = ex.report.depth;
    Ok(ex.finish(visited.len(), depth, false))
}
