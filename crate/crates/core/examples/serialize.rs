//! Run a random coordinated schedule and rebuild, for every device, a
//! sequential history that reproduces its final store.

use std::collections::BTreeMap;

use lore::program::appointment;
use lore::sim::{random_schedule, replay_serialization, run_schedule, serialize_device, ArgumentPool, RandomConfig};
use lore::verify::{compute_conflicts, BoundConfig};

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let p = lore::syntax::compile(include_str!("../corpus/calendar.lore")).expect("calendar compiles");
    let table = compute_conflicts(&p, &BoundConfig::default()).expect("bounds fit");
    let days: Vec<_> = [2, 12, 20].iter().map(|&d| appointment(0, 0, d)).collect();
    let templates = BTreeMap::from([("add_vacation".to_string(), days.clone()), ("add_work".to_string(), days)]);
    let pool = ArgumentPool::stamped(&p, 3, &templates);
    let sched = random_schedule(&p, &pool, &RandomConfig::default(), seed);
    let trace = run_schedule(&p, &table, &sched).expect("schedule runs");
    print!("{}", trace.log());
    for d in 1..=3 {
        let s = serialize_device(&p, &trace, d).expect("coordinated traces serialize");
        println!("D{d}:");
        for step in &s.steps {
            println!("  {}({}) from D{}", step.interaction, step.arg, step.actor);
        }
        let replayed = replay_serialization(&p, &trace.initial[0].store, &s.steps).expect("replay");
        assert_eq!(replayed, trace.last()[d - 1].store);
    }
}
