#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use lore::crdt::{AWSet, Datum, LwwRegister, MergeValue, PNCounter, ReplicaId};
use lore::eval::Store;
use lore::program::{appointment, CheckedProgram};
use lore::syntax::compile;
use proptest::prelude::*;

pub const REPLICAS: u8 = 3;

pub fn corpus(name: &str) -> String {
    let path = format!("{}/corpus/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub fn program(name: &str) -> CheckedProgram {
    compile(&corpus(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn calendar_days() -> Vec<Datum> {
    [12, 20, 31].iter().map(|&d| appointment(0, 0, d)).collect()
}

/// One step of a replicated history over `REPLICAS` replicas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Add { at: u8, elem: u8 },
    Remove { at: u8, elem: u8 },
    Inc { at: u8, by: u8 },
    Dec { at: u8, by: u8 },
    Write { at: u8, value: u8 },
    Sync { from: u8, to: u8 },
}

pub fn step() -> impl Strategy<Value = Step> {
    let r = 0..REPLICAS;
    prop_oneof![
        3 => (r.clone(), 0u8..4).prop_map(|(at, elem)| Step::Add { at, elem }),
        2 => (r.clone(), 0u8..4).prop_map(|(at, elem)| Step::Remove { at, elem }),
        2 => (r.clone(), 1u8..4).prop_map(|(at, by)| Step::Inc { at, by }),
        1 => (r.clone(), 1u8..4).prop_map(|(at, by)| Step::Dec { at, by }),
        2 => (r.clone(), 0u8..4).prop_map(|(at, value)| Step::Write { at, value }),
        3 => (r.clone(), r).prop_map(|(from, to)| Step::Sync { from, to }),
    ]
}

pub fn history() -> impl Strategy<Value = Vec<Step>> {
    prop::collection::vec(step(), 0..24)
}

fn actor(at: u8) -> ReplicaId {
    ReplicaId(u32::from(at) + 1)
}

/// Replica states after a history: one of each kind per replica.
#[derive(Debug, Clone)]
pub struct Replicas {
    pub sets: Vec<AWSet>,
    pub counters: Vec<PNCounter>,
    pub registers: Vec<LwwRegister>,
}

pub fn run(h: &[Step]) -> Replicas {
    let n = REPLICAS as usize;
    let mut r = Replicas {
        sets: vec![AWSet::new(); n],
        counters: vec![PNCounter::new(); n],
        registers: vec![LwwRegister::new(Datum::Int(0)); n],
    };
    for s in h {
        apply(&mut r, s);
    }
    r
}

pub fn apply(r: &mut Replicas, s: &Step) {
    match *s {
        Step::Add { at, elem } => {
            r.sets[at as usize].add(Datum::Int(elem.into()), actor(at));
        }
        Step::Remove { at, elem } => r.sets[at as usize].remove(&Datum::Int(elem.into())),
        Step::Inc { at, by } => r.counters[at as usize].increment(actor(at), by.into()).unwrap(),
        Step::Dec { at, by } => r.counters[at as usize].decrement(actor(at), by.into()).unwrap(),
        Step::Write { at, value } => r.registers[at as usize].set(Datum::Int(value.into()), actor(at)),
        Step::Sync { from, to } => {
            let (f, t) = (from as usize, to as usize);
            r.sets[t] = r.sets[t].merge(&r.sets[f]);
            r.counters[t] = r.counters[t].merge(&r.counters[f]);
            r.registers[t] = r.registers[t].merge(&r.registers[f]);
        }
    }
}

/// The store of replica `i` over sources (set, counter, register).
pub fn store_of(r: &Replicas, i: usize) -> Store {
    Store::new(vec![
        MergeValue::AWSet(r.sets[i].clone()),
        MergeValue::PNCounter(r.counters[i].clone()),
        MergeValue::LWWRegister(r.registers[i].clone()),
    ])
}

/// Reference observed-remove set with explicit tombstones: every add gets a
/// fresh tag, a remove tombstones the tags it can see, and merge is union.
#[derive(Debug, Clone, Default)]
pub struct TombstoneSet {
    adds: BTreeSet<(u8, (u8, u32))>,
    removed: BTreeSet<(u8, u32)>,
}

impl TombstoneSet {
    pub fn elements(&self) -> BTreeSet<Datum> {
        self.adds
            .iter()
            .filter(|(_, tag)| !self.removed.contains(tag))
            .map(|(e, _)| Datum::Int((*e).into()))
            .collect()
    }
}

/// Reference counter: the multiset of every increment and decrement seen.
#[derive(Debug, Clone, Default)]
pub struct OpLogCounter {
    ops: BTreeMap<(u8, u32), i64>,
}

impl OpLogCounter {
    pub fn value(&self) -> i64 {
        self.ops.values().sum()
    }
}

/// Run the reference models over a history.
pub fn run_reference(h: &[Step]) -> (Vec<TombstoneSet>, Vec<OpLogCounter>) {
    let n = REPLICAS as usize;
    let mut sets = vec![TombstoneSet::default(); n];
    let mut counters = vec![OpLogCounter::default(); n];
    let mut clock = vec![0u32; n];
    for s in h {
        match *s {
            Step::Add { at, elem } => {
                clock[at as usize] += 1;
                sets[at as usize].adds.insert((elem, (at, clock[at as usize])));
            }
            Step::Remove { at, elem } => {
                let set = &mut sets[at as usize];
                let tags: Vec<(u8, u32)> = set.adds.iter().filter(|(e, _)| *e == elem).map(|(_, t)| *t).collect();
                set.removed.extend(tags);
            }
            Step::Inc { at, by } | Step::Dec { at, by } => {
                clock[at as usize] += 1;
                let v = if matches!(s, Step::Inc { .. }) { by as i64 } else { -(by as i64) };
                counters[at as usize].ops.insert((at, clock[at as usize]), v);
            }
            Step::Write { .. } => {}
            Step::Sync { from, to } => {
                let (f, t) = (from as usize, to as usize);
                let src = sets[f].clone();
                sets[t].adds.extend(src.adds);
                sets[t].removed.extend(src.removed);
                let src = counters[f].ops.clone();
                counters[t].ops.extend(src);
            }
        }
    }
    (sets, counters)
}

pub trait Lattice: Clone + PartialEq + std::fmt::Debug {
    fn join(&self, other: &Self) -> Self;
    fn le(&self, other: &Self) -> bool;
}

impl Lattice for MergeValue {
    fn join(&self, other: &Self) -> Self {
        self.merge(other).unwrap()
    }
    fn le(&self, other: &Self) -> bool {
        self.leq(other).unwrap()
    }
}

impl Lattice for Store {
    fn join(&self, other: &Self) -> Self {
        self.merge(other).unwrap()
    }
    fn le(&self, other: &Self) -> bool {
        self.leq(other).unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Law {
    Commutative,
    Associative,
    Idempotent,
    Inflationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    AWSet,
    PNCounter,
    LWWRegister,
    Store,
}

pub const LAWS: [Law; 4] = [Law::Commutative, Law::Associative, Law::Idempotent, Law::Inflationary];
pub const KINDS: [Kind; 4] = [Kind::AWSet, Kind::PNCounter, Kind::LWWRegister, Kind::Store];

fn law_holds<T: Lattice>(law: Law, v: &[T], before: &T, after: &T) -> Result<(), TestCaseError> {
    let (a, b, c) = (&v[0], &v[1], &v[2]);
    match law {
        Law::Commutative => prop_assert_eq!(a.join(b), b.join(a)),
        Law::Associative => prop_assert_eq!(a.join(&b.join(c)), a.join(b).join(c)),
        Law::Idempotent => prop_assert_eq!(a.join(a), a.clone()),
        Law::Inflationary => {
            prop_assert!(before.le(after), "{before:?} is not below {after:?}");
            prop_assert!(a.le(&a.join(b)));
        }
    }
    Ok(())
}

fn value(kind: Kind, r: &Replicas, i: usize) -> MergeValue {
    match kind {
        Kind::AWSet => MergeValue::AWSet(r.sets[i].clone()),
        Kind::PNCounter => MergeValue::PNCounter(r.counters[i].clone()),
        Kind::LWWRegister => MergeValue::LWWRegister(r.registers[i].clone()),
        Kind::Store => unreachable!(),
    }
}

/// Check `law` for `kind` on the replica states after `h`; inflation uses
/// the replica `next` updates.
pub fn check_law(law: Law, kind: Kind, h: &[Step], next: &Step) -> Result<(), TestCaseError> {
    let mut r = run(h);
    let target = match *next {
        Step::Add { at, .. }
        | Step::Remove { at, .. }
        | Step::Inc { at, .. }
        | Step::Dec { at, .. }
        | Step::Write { at, .. } => at,
        Step::Sync { to, .. } => to,
    } as usize;
    let n = REPLICAS as usize;
    if kind == Kind::Store {
        let v: Vec<Store> = (0..n).map(|i| store_of(&r, i)).collect();
        let before = store_of(&r, target);
        apply(&mut r, next);
        law_holds(law, &v, &before, &store_of(&r, target))
    } else {
        let v: Vec<MergeValue> = (0..n).map(|i| value(kind, &r, i)).collect();
        let before = value(kind, &r, target);
        apply(&mut r, next);
        law_holds(law, &v, &before, &value(kind, &r, target))
    }
}
