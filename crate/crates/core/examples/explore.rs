//! Enumerate every configuration of a small calendar deployment, once with
//! the computed conflict table and once with no coordination at all.

use std::collections::BTreeMap;
use std::time::Instant;

use lore::program::appointment;
use lore::sim::{explore, ArgumentPool, ExploreConfig};
use lore::verify::{compute_conflicts, BoundConfig, ConflictTable};

fn main() {
    let p = lore::syntax::compile(include_str!("../corpus/calendar.lore")).expect("calendar compiles");
    let computed = compute_conflicts(&p, &BoundConfig::default()).expect("bounds fit");
    let days: Vec<_> = [12, 20, 31].iter().map(|&d| appointment(0, 0, d)).collect();
    let templates = BTreeMap::from([("add_vacation".to_string(), days.clone()), ("add_work".to_string(), days)]);
    let (devices, depth) = (3, 6);
    for (name, table) in [("computed", computed), ("empty", ConflictTable::empty(&p))] {
        let cfg = ExploreConfig {
            devices,
            max_transitions: depth,
            pool: ArgumentPool::stamped(&p, devices, &templates),
            check_serialization: true,
            stop_at_violation: false,
            max_configurations: usize::MAX,
        };
        let t0 = Instant::now();
        let r = explore(&p, &table, &cfg).expect("explores");
        println!(
            "{name} table: {} configurations, {} stores, {} serializations, {} failures, {:.1?}",
            r.configurations,
            r.stores,
            r.serializations,
            r.serialization_failures.len(),
            t0.elapsed()
        );
        if let Some((path, v)) = &r.violation {
            println!("  invariant {:?} broken on D{} after:", v.invariants, v.device);
            for l in path {
                println!("    {l}");
            }
        }
    }
}
