mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use common::{calendar_days, corpus, program};
use lore::crdt::Datum;
use lore::eval::{is_valid, Store};
use lore::program::{appointment, CheckedProgram};
use lore::runtime::{init_program, interact, sync, Device, Label};
use lore::sim::{
    check_conflict_order, check_monotone, check_tokens, check_validity, explore, random_schedule,
    replay_serialization, run_schedule, serialize_device, trace_of, ArgumentPool, ExploreConfig, RandomConfig,
    Schedule, SimError, Step,
};
use lore::verify::{compute_conflicts, BoundConfig, ConflictTable};

fn calendar() -> (CheckedProgram, ConflictTable) {
    let p = program("calendar.lore");
    let t = compute_conflicts(&p, &BoundConfig::default()).unwrap();
    (p, t)
}

fn templates() -> BTreeMap<String, Vec<Datum>> {
    BTreeMap::from([
        ("add_vacation".to_string(), calendar_days()),
        ("add_work".to_string(), calendar_days()),
    ])
}

fn anomaly(coordination: bool) -> Schedule {
    let mut s = Schedule::from_json(&corpus("anomaly.json")).unwrap();
    s.coordination = coordination;
    s
}

#[test]
fn uncoordinated_anomaly_has_no_serialization() {
    let (p, t) = calendar();
    let trace = run_schedule(&p, &t, &anomaly(false)).unwrap();
    assert!(!check_validity(&p, &trace).unwrap().valid());
    for d in 1..=2 {
        assert!(matches!(
            serialize_device(&p, &trace, d),
            Err(SimError::NoSerialization { device, .. }) if device == d
        ));
    }
}

#[test]
fn coordinated_anomaly_refuses_second_booking() {
    let (p, t) = calendar();
    let trace = run_schedule(&p, &t, &anomaly(true)).unwrap();
    assert!(check_validity(&p, &trace).unwrap().valid());
    assert!(trace.log().contains("refused D2 add_vacation"), "{}", trace.log());
    for d in 1..=2 {
        let s = serialize_device(&p, &trace, d).unwrap();
        assert_eq!(s.steps.len(), 1);
        assert_eq!(replay_serialization(&p, &trace.initial[0].store, &s.steps).unwrap(), trace.last()[d - 1].store);
    }
}

#[test]
fn schedules_and_traces_are_deterministic() {
    let (p, t) = calendar();
    let pool = ArgumentPool::stamped(&p, 3, &templates());
    let cfg = RandomConfig::default();
    for seed in 0..20 {
        let a = random_schedule(&p, &pool, &cfg, seed);
        assert_eq!(a, random_schedule(&p, &pool, &cfg, seed));
        assert_eq!(Schedule::from_json(&a.to_json()).unwrap(), a);
        let (ta, tb) = (run_schedule(&p, &t, &a).unwrap(), run_schedule(&p, &t, &a).unwrap());
        assert_eq!(ta.digest(), tb.digest());
        let json = serde_json::to_string(&ta).unwrap();
        assert_eq!(serde_json::from_str::<lore::sim::Trace>(&json).unwrap(), ta);
    }
    let a = random_schedule(&p, &pool, &cfg, 1);
    let b = random_schedule(&p, &pool, &cfg, 2);
    assert_ne!(a, b);
}

#[test]
fn crash_suite_stays_valid() {
    let (p, t) = calendar();
    let pool = ArgumentPool::stamped(&p, 3, &templates());
    let cfg = RandomConfig {
        devices: 3,
        steps: 40,
        coordination: true,
        crashes: true,
    };
    let mut crashes = 0;
    for seed in 0..300 {
        let trace = run_schedule(&p, &t, &random_schedule(&p, &pool, &cfg, seed)).unwrap();
        crashes += trace.transitions().filter(|l| matches!(l, Label::Crash { .. })).count();
        assert!(check_validity(&p, &trace).unwrap().valid(), "seed {seed}");
        check_monotone(&trace).unwrap();
        check_conflict_order(&trace).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        for e in &trace.entries {
            for a in &p.interactions {
                let holders = e.devices.iter().filter(|d| d.locks.contains(&a.name)).count();
                assert!(holders <= 1, "seed {seed}: {} held {holders} times", a.name);
            }
        }
    }
    assert!(crashes > 0);
}

#[test]
fn tpcc_schedules_serialize() {
    let p = program("tpcc-mini.lore");
    let bounds: BoundConfig = serde_json::from_str(&corpus("tpcc-mini.bounds.json")).unwrap();
    let t = compute_conflicts(&p, &bounds).unwrap();
    assert!(t.conflicts("payment").is_empty());
    let pool = ArgumentPool::from_bounds(&p, 3, &bounds).unwrap();
    let cfg = RandomConfig {
        steps: 30,
        ..RandomConfig::default()
    };
    for seed in 0..100 {
        let trace = run_schedule(&p, &t, &random_schedule(&p, &pool, &cfg, seed)).unwrap();
        check_tokens(&p, &trace).unwrap();
        for d in 1..=3 {
            let s = serialize_device(&p, &trace, d).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            assert_eq!(s.store, trace.last()[d - 1].store);
        }
    }
}

type Key = Vec<(Store, BTreeSet<String>)>;

fn key(ds: &[Device]) -> Key {
    ds.iter().map(|d| (d.store.clone(), d.locks.clone())).collect()
}

fn subsets(items: &[String]) -> Vec<BTreeSet<String>> {
    (0..1u32 << items.len())
        .map(|m| items.iter().enumerate().filter(|(i, _)| m >> i & 1 == 1).map(|(_, t)| t.clone()).collect())
        .collect()
}

struct Reached {
    configurations: usize,
    stores: HashSet<Vec<Store>>,
    invalid: bool,
}

/// Breadth-first search over the runtime's own transition functions,
/// with syncs handing over any subset of `tokens`.
fn reference_search(
    p: &CheckedProgram,
    t: &ConflictTable,
    tokens: &[String],
    pool: &ArgumentPool,
    n: usize,
    k: usize,
) -> Reached {
    let start = init_program(p, n);
    let mut seen: HashSet<Key> = HashSet::from([key(&start)]);
    let mut frontier = vec![start];
    let mut invalid = false;
    for _ in 0..k {
        let mut next = Vec::new();
        for ds in &frontier {
            let mut succ = Vec::new();
            for d in 1..=n {
                for a in &p.interactions {
                    for arg in pool.for_device(&a.name, d) {
                        let mut c = ds.clone();
                        if interact(p, &mut c, d, &a.name, arg, t).unwrap().is_ok() {
                            succ.push(c);
                        }
                    }
                }
                for to in (1..=n).filter(|&to| to != d) {
                    let held: Vec<String> = tokens.iter().filter(|x| ds[d - 1].locks.contains(*x)).cloned().collect();
                    for locks in subsets(&held) {
                        let mut c = ds.clone();
                        sync(&mut c, d, to, &locks).unwrap();
                        succ.push(c);
                    }
                }
            }
            for c in succ {
                if seen.insert(key(&c)) {
                    invalid |= c.iter().any(|d| !is_valid(p, &d.store).unwrap());
                    next.push(c);
                }
            }
        }
        frontier = next;
    }
    Reached {
        configurations: seen.len(),
        stores: seen.iter().map(|c| c.iter().map(|(s, _)| s.clone()).collect()).collect(),
        invalid,
    }
}

/// Tokens some conflict set mentions.
fn relevant(t: &ConflictTable) -> Vec<String> {
    t.iter().flat_map(|(_, s)| s.iter().cloned()).collect::<BTreeSet<_>>().into_iter().collect()
}

fn explore_config(p: &CheckedProgram, n: usize, k: usize) -> ExploreConfig {
    ExploreConfig {
        devices: n,
        max_transitions: k,
        pool: ArgumentPool::stamped(p, n, &templates()),
        check_serialization: true,
        stop_at_violation: false,
        max_configurations: usize::MAX,
    }
}

#[test]
fn explorer_agrees_with_runtime_search() {
    let (p, t) = calendar();
    for table in [t.clone(), ConflictTable::empty(&p)] {
        for (n, k) in [(2, 4), (3, 3)] {
            let cfg = explore_config(&p, n, k);
            let r = explore(&p, &table, &cfg).unwrap();
            let reached = reference_search(&p, &table, &relevant(&table), &cfg.pool, n, k);
            assert_eq!(r.configurations, reached.configurations, "n={n} k={k}");
            assert_eq!(r.violation.is_some(), reached.invalid, "n={n} k={k}");
        }
    }
}

#[test]
fn irrelevant_tokens_do_not_change_reachable_stores() {
    let (p, t) = calendar();
    let all: Vec<String> = t.tokens().into_iter().collect();
    let pool = ArgumentPool::stamped(&p, 2, &templates());
    let narrow = reference_search(&p, &t, &relevant(&t), &pool, 2, 4);
    let wide = reference_search(&p, &t, &all, &pool, 2, 4);
    assert!(wide.configurations > narrow.configurations);
    assert!(narrow.stores == wide.stores);
    assert_eq!(narrow.invalid, wide.invalid);
}

#[test]
fn explorer_witness_replays() {
    let (p, _) = calendar();
    let empty = ConflictTable::empty(&p);
    let mut cfg = explore_config(&p, 2, 4);
    cfg.stop_at_violation = true;
    let r = explore(&p, &empty, &cfg).unwrap();
    let (path, v) = r.violation.expect("the empty table admits the anomaly");
    let trace = trace_of(&p, &empty, 2, &path).unwrap();
    let replayed = check_validity(&p, &trace).unwrap().first_violation.unwrap();
    assert_eq!(replayed, v);
    assert!(v.invariants.contains(&2));
}

#[test]
fn four_devices_stay_valid() {
    let (p, t) = calendar();
    let r = explore(&p, &t, &explore_config(&p, 4, 5)).unwrap();
    assert!(r.clean(), "{:?}", r.violation);
    assert!(!r.truncated);
}

#[test]
fn truncation_is_reported() {
    let (p, t) = calendar();
    let mut cfg = explore_config(&p, 3, 6);
    cfg.max_configurations = 500;
    let r = explore(&p, &t, &cfg).unwrap();
    assert!(r.truncated);
}

#[test]
fn invalid_schedules_are_rejected() {
    let (p, t) = calendar();
    let bad = Schedule {
        seed: 0,
        devices: 0,
        coordination: true,
        steps: Vec::new(),
    };
    assert!(matches!(run_schedule(&p, &t, &bad), Err(SimError::InvalidSchedule(_))));
    assert!(Schedule::from_json("{\"devices\": 2}").is_err());
    let unknown = Schedule {
        seed: 0,
        devices: 2,
        coordination: true,
        steps: vec![Step::Interact {
            device: 3,
            interaction: "add_work".into(),
            arg: appointment(3, 0, 1),
        }],
    };
    assert!(run_schedule(&p, &t, &unknown).is_err());
}
