//! Two devices book vacations while offline. Without coordination the
//! merged calendar overdraws the allowance; with the computed conflict
//! table the second booking is refused because D2 lacks the lock.

use lore::sim::{check_validity, run_schedule, Schedule};
use lore::verify::{compute_conflicts, BoundConfig};

fn main() {
    let p = lore::syntax::compile(include_str!("../corpus/calendar.lore")).expect("calendar compiles");
    let table = compute_conflicts(&p, &BoundConfig::default()).expect("bounds fit");
    let mut sched = Schedule::from_json(include_str!("../corpus/anomaly.json")).expect("valid schedule");
    for coordination in [false, true] {
        sched.coordination = coordination;
        let trace = run_schedule(&p, &table, &sched).expect("schedule runs");
        println!("coordination {coordination}:");
        print!("{}", trace.log());
        for d in trace.last() {
            let left = lore::eval::read_derived(&p, "remaining_vacation", &d.store).expect("derived");
            println!("  D{} remaining_vacation = {left}", d.id);
        }
        println!("  {}\n", check_validity(&p, &trace).expect("evaluates").message());
    }
}
