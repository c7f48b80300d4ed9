//! New orders, payments and deliveries across three warehouses. Payments
//! need no coordination; the year-to-date balance always matches the
//! replicated payment history.

use lore::sim::{check_validity, random_schedule, run_schedule, ArgumentPool, RandomConfig};
use lore::verify::{compute_conflicts, BoundConfig};

fn main() {
    let p = lore::syntax::compile(include_str!("../corpus/tpcc-mini.lore")).expect("tpcc compiles");
    let bounds: BoundConfig = serde_json::from_str(include_str!("../corpus/tpcc-mini.bounds.json")).expect("bounds");
    let table = compute_conflicts(&p, &bounds).expect("bounds fit");
    for (a, set) in table.iter() {
        println!("conflicts({a}) = {set:?}");
    }
    let pool = ArgumentPool::from_bounds(&p, 3, &bounds).expect("arguments");
    let cfg = RandomConfig {
        steps: 40,
        ..RandomConfig::default()
    };
    for seed in 0..5 {
        let trace = run_schedule(&p, &table, &random_schedule(&p, &pool, &cfg, seed)).expect("runs");
        let ytd: Vec<String> = trace
            .last()
            .iter()
            .map(|d| lore::eval::read_derived(&p, "district_ytd", &d.store).expect("derived").to_string())
            .collect();
        println!("seed {seed}: {} | {}", check_validity(&p, &trace).expect("evaluates").message(), ytd.join(" "));
    }
}
