//! Verify the calendar program and print the conflict table it implies.

use lore::verify::{check_program, render_text, BoundConfig};

fn main() {
    let p = lore::syntax::compile(include_str!("../corpus/calendar.lore")).expect("calendar compiles");
    let report = check_program(&p, "calendar", &BoundConfig::default()).expect("bounds fit");
    print!("{}", render_text(&p, &report));
}
