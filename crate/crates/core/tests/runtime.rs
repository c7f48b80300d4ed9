mod common;

use std::sync::OnceLock;

use common::program;
use lore::program::{appointment, CheckedProgram};
use lore::runtime::{holder, init_program, interact, sync, Label, Refusal, RuntimeError};
use lore::sim::{check_conflict_order, check_monotone, check_tokens, check_validity, run_schedule, Schedule, Step};
use lore::verify::{compute_conflicts, BoundConfig, ConflictTable};
use proptest::prelude::*;

fn table(p: &CheckedProgram) -> ConflictTable {
    compute_conflicts(p, &BoundConfig::default()).unwrap()
}

#[test]
fn interact_needs_the_conflict_locks() {
    let p = program("calendar.lore");
    let t = table(&p);
    let mut ds = init_program(&p, 2);
    let a = appointment(2, 0, 3);
    let refused = interact(&p, &mut ds, 2, "add_vacation", &a, &t).unwrap();
    assert!(matches!(refused, Err(Refusal::MissingLocks { missing }) if missing.contains("add_vacation")));
    // add_work conflicts with nothing and runs anywhere.
    assert!(interact(&p, &mut ds, 2, "add_work", &a, &t).unwrap().is_ok());

    let lock = ["add_vacation".to_string()].into();
    sync(&mut ds, 1, 2, &lock).unwrap();
    assert_eq!(holder(&ds, "add_vacation"), Some(2));
    assert!(interact(&p, &mut ds, 2, "add_vacation", &a, &t).unwrap().is_ok());
    assert!(matches!(
        sync(&mut ds, 1, 2, &lock),
        Err(RuntimeError::LockNotHeld { device: 1, .. })
    ));
}

#[test]
fn failed_precondition_is_a_refusal() {
    let p = program("calendar.lore");
    let mut ds = init_program(&p, 1);
    let t = table(&p);
    let long = appointment(1, 0, 31);
    let r = interact(&p, &mut ds, 1, "add_vacation", &long, &t).unwrap();
    assert!(matches!(r, Err(Refusal::PreconditionFalse { clause: 2 })), "{r:?}");
    assert_eq!(ds[0].store, p.initial_store());
}

#[test]
fn contended_requests_are_all_served() {
    let p = program("calendar.lore");
    let t = table(&p);
    let mut steps: Vec<Step> = (2..=3)
        .map(|d| Step::Interact {
            device: d,
            interaction: "add_vacation".into(),
            arg: appointment(d as i64, 0, 1),
        })
        .collect();
    steps.extend((0..8).map(|_| Step::Deliver));
    let sched = Schedule {
        seed: 0,
        devices: 3,
        coordination: true,
        steps,
    };
    let trace = run_schedule(&p, &t, &sched).unwrap();
    let ran: Vec<usize> = trace
        .transitions()
        .filter_map(|l| match l {
            Label::Interact { device, .. } => Some(*device),
            _ => None,
        })
        .collect();
    assert_eq!(ran.len(), 2, "{}", trace.log());
    assert!(ran.contains(&2) && ran.contains(&3));
    check_tokens(&p, &trace).unwrap();
    check_conflict_order(&trace).unwrap();
}

fn schedule_step() -> impl Strategy<Value = Step> {
    let d = 1usize..=3;
    prop_oneof![
        4 => (d.clone(), prop::bool::ANY, 0i64..3, prop::sample::select(vec![1i64, 2, 12, 20])).prop_map(
            |(device, vac, start, len)| Step::Interact {
                device,
                interaction: if vac { "add_vacation" } else { "add_work" }.into(),
                arg: appointment(device as i64, start, start + len),
            }
        ),
        3 => (d.clone(), d).prop_filter("distinct", |(a, b)| a != b).prop_map(|(from, to)| Step::Sync {
            from,
            to,
            locks: Default::default(),
        }),
        3 => Just(Step::Deliver),
    ]
}

fn calendar() -> &'static (CheckedProgram, ConflictTable) {
    static CALENDAR: OnceLock<(CheckedProgram, ConflictTable)> = OnceLock::new();
    CALENDAR.get_or_init(|| {
        let p = program("calendar.lore");
        let t = table(&p);
        (p, t)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn coordinated_schedules_keep_protocol_properties(steps in prop::collection::vec(schedule_step(), 0..40)) {
        let (p, t) = calendar();
        let sched = Schedule { seed: 0, devices: 3, coordination: true, steps };
        let trace = run_schedule(p, t, &sched).unwrap();
        prop_assert!(check_validity(p, &trace).unwrap().valid());
        prop_assert!(check_tokens(p, &trace).is_ok());
        prop_assert!(check_conflict_order(&trace).is_ok());
        prop_assert!(check_monotone(&trace).is_ok());
    }
}
