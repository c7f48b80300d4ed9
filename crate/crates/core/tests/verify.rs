mod common;

use std::collections::BTreeSet;

use common::program;
use lore::program::CheckedProgram;
use lore::verify::{
    check_confluence, check_preservation, check_program, compute_conflicts, render_text, replay_witness,
    valid_stores, witness_merge, BoundConfig, Status, VerifyError,
};

/// Observable model of a calendar store: (start, end) pairs per calendar.
type App = (i64, i64);

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
struct Cal {
    work: BTreeSet<App>,
    vacation: BTreeSet<App>,
}

/// Independent enumeration of the appointment domain.
fn apps(cfg: &BoundConfig) -> Vec<App> {
    let mut out: BTreeSet<App> = BTreeSet::new();
    for s in 0..cfg.time_bound {
        for e in 0..cfg.time_bound {
            out.insert((s, e));
        }
    }
    out.extend(cfg.durations.iter().map(|&d| (0, d)));
    out.into_iter().collect()
}

fn subsets(u: &[App], max: usize) -> Vec<BTreeSet<App>> {
    let mut out = vec![BTreeSet::new()];
    for a in u {
        let grown: Vec<BTreeSet<App>> = out
            .iter()
            .filter(|s| s.len() < max)
            .map(|s| {
                let mut s = s.clone();
                s.insert(*a);
                s
            })
            .collect();
        out.extend(grown);
    }
    out
}

fn remaining(c: &Cal) -> i64 {
    30 - c.vacation.iter().map(|(s, e)| e - s).sum::<i64>()
}

fn inv1(c: &Cal) -> bool {
    c.work.iter().chain(&c.vacation).all(|(s, e)| s < e)
}

fn inv2(c: &Cal) -> bool {
    remaining(c) >= 0
}

fn stores(cfg: &BoundConfig) -> Vec<Cal> {
    let u = apps(cfg);
    let sets = subsets(&u, cfg.max_set_size);
    let mut out = Vec::new();
    for w in &sets {
        for v in &sets {
            if w.len() + v.len() <= cfg.max_store_elements {
                out.push(Cal {
                    work: w.clone(),
                    vacation: v.clone(),
                });
            }
        }
    }
    out
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Op {
    Vacation,
    Work,
}

/// `Some(result)` when enabled; `days_check` is false for the variant
/// without the allowance precondition.
fn apply(c: &Cal, op: Op, a: App, days_check: bool) -> Option<Cal> {
    if a.0 >= a.1 {
        return None;
    }
    let mut out = c.clone();
    match op {
        Op::Vacation => {
            if c.vacation.contains(&a) || (days_check && remaining(c) - (a.1 - a.0) < 0) {
                return None;
            }
            out.vacation.insert(a);
        }
        Op::Work => {
            if c.work.contains(&a) {
                return None;
            }
            out.work.insert(a);
        }
    }
    Some(out)
}

fn invariants(op: Op) -> Vec<fn(&Cal) -> bool> {
    match op {
        Op::Vacation => vec![inv1, inv2],
        Op::Work => vec![inv1],
    }
}

fn oracle_preservation(cfg: &BoundConfig, op: Op, days_check: bool) -> (bool, u64) {
    let mut cases = 0;
    for c in stores(cfg).iter().filter(|c| inv1(c) && inv2(c)) {
        for a in apps(cfg) {
            if let Some(next) = apply(c, op, a, days_check) {
                cases += 1;
                if !invariants(op).iter().all(|i| i(&next)) {
                    return (false, cases);
                }
            }
        }
    }
    (true, cases)
}

/// Whether some valid fork, with both interactions enabled, merges into a
/// store violating a shared invariant or lets re-execution diverge.
fn oracle_confluence(cfg: &BoundConfig, o1: Op, o2: Op) -> bool {
    let shared: Vec<fn(&Cal) -> bool> = if o1 == Op::Vacation && o2 == Op::Vacation {
        vec![inv1, inv2]
    } else {
        vec![inv1]
    };
    for c in stores(cfg).iter().filter(|c| inv1(c) && inv2(c)) {
        for a in apps(cfg) {
            let Some(s1) = apply(c, o1, a, true) else { continue };
            for b in apps(cfg) {
                let Some(s2) = apply(c, o2, b, true) else { continue };
                let merged = Cal {
                    work: s1.work.union(&s2.work).cloned().collect(),
                    vacation: s1.vacation.union(&s2.vacation).cloned().collect(),
                };
                if !shared.iter().all(|i| i(&merged)) {
                    return false;
                }
                let again = apply(&s1, o2, b, true);
                if again.is_none() && merged != s1 {
                    return false;
                }
            }
        }
    }
    true
}

fn small() -> BoundConfig {
    BoundConfig {
        time_bound: 3,
        durations: vec![12, 20],
        ..BoundConfig::default()
    }
}

#[test]
fn valid_store_count_matches_oracle() {
    let p = program("calendar.lore");
    for cfg in [small(), BoundConfig::default()] {
        let expected = stores(&cfg).iter().filter(|c| inv1(c) && inv2(c)).count();
        assert_eq!(valid_stores(&p, &cfg).unwrap().len(), expected, "{cfg:?}");
    }
}

#[test]
fn preservation_matches_oracle() {
    let cfg = BoundConfig::default();
    for (name, op) in [("add_vacation", Op::Vacation), ("add_work", Op::Work)] {
        let v = check_preservation(&program("calendar.lore"), name, &cfg).unwrap();
        let (holds, cases) = oracle_preservation(&cfg, op, true);
        assert!(holds);
        assert_eq!(v.status, Status::ProvedBounded);
        assert_eq!(v.cases, cases, "{name}");
    }
    let v = check_preservation(&program("calendar-no-days.lore"), "add_vacation", &cfg).unwrap();
    assert!(!oracle_preservation(&cfg, Op::Vacation, false).0);
    assert_eq!(v.status, Status::Refuted);
}

#[test]
fn confluence_matches_oracle() {
    let p = program("calendar.lore");
    for cfg in [small(), BoundConfig::default()] {
        for (a1, o1) in [("add_vacation", Op::Vacation), ("add_work", Op::Work)] {
            for (a2, o2) in [("add_vacation", Op::Vacation), ("add_work", Op::Work)] {
                let v = check_confluence(&p, a1, a2, &cfg).unwrap();
                let proved = oracle_confluence(&cfg, o1, o2);
                assert_eq!(v.status == Status::ProvedBounded, proved, "{a1},{a2} under {cfg:?}");
            }
        }
    }
}

#[test]
fn witnesses_replay() {
    for name in ["calendar.lore", "calendar-extended.lore"] {
        let p = program(name);
        let report = check_program(&p, name, &BoundConfig::default()).unwrap();
        for v in report.verdicts().filter(|v| v.status == Status::Refuted) {
            let w = v.witness.as_ref().expect("refuted verdicts carry a witness");
            assert_eq!(replay_witness(&p, v).unwrap().as_ref(), Some(&w.failure), "{}", v.obligation);
            if v.is_confluence() {
                assert!(witness_merge(&p, v).unwrap().is_some());
            }
        }
    }
}

fn conflict_pairs(p: &CheckedProgram, cfg: &BoundConfig) -> BTreeSet<(String, String)> {
    let t = compute_conflicts(p, cfg).unwrap();
    t.iter()
        .flat_map(|(a, cs)| cs.iter().map(move |b| (a.clone(), b.clone())))
        .collect()
}

#[test]
fn refutations_survive_larger_bounds() {
    let p = program("calendar-extended.lore");
    let tight = conflict_pairs(&p, &small());
    let wide = conflict_pairs(&p, &BoundConfig::default());
    assert!(tight.is_subset(&wide), "{tight:?} not within {wide:?}");
}

#[test]
fn checking_is_deterministic() {
    let p = program("calendar-extended.lore");
    let a = render_text(&p, &check_program(&p, "x", &BoundConfig::default()).unwrap());
    let b = render_text(&p, &check_program(&p, "x", &BoundConfig::default()).unwrap());
    assert_eq!(a, b);
}

#[test]
fn oversized_bounds_are_rejected() {
    let p = program("tpcc-mini.lore");
    let err = compute_conflicts(&p, &BoundConfig::default()).unwrap_err();
    assert!(matches!(err, VerifyError::BoundsTooLarge { .. }), "{err}");
    let bad = BoundConfig {
        max_set_size: 0,
        ..BoundConfig::default()
    };
    assert!(matches!(
        compute_conflicts(&program("calendar.lore"), &bad),
        Err(VerifyError::InvalidBounds(_))
    ));
}

#[test]
fn invalid_program_fails_preservation_check() {
    let p = program("calendar-no-days.lore");
    let report = check_program(&p, "no-days", &BoundConfig::default()).unwrap();
    assert!(!report.preservation_holds());
    let v = report.verdict("preservation:add_vacation").unwrap();
    assert_eq!(v.status, Status::Refuted);
}
