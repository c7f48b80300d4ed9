use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{witness_merge, BoundConfig, ConflictTable, Status, Verdict};
use crate::program::CheckedProgram;

/// Everything `check` produces for one program.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    pub program: String,
    pub bounds: BoundConfig,
    pub valid_stores: usize,
    /// Reactives each interaction affects.
    pub reaches: BTreeMap<String, BTreeSet<String>>,
    /// Invariants each interaction overlaps.
    pub overlaps: BTreeMap<String, BTreeSet<usize>>,
    pub interaction_pairs: Vec<(String, String)>,
    pub warnings: Vec<String>,
    pub preservation: Vec<Verdict>,
    /// Empty when some preservation obligation is refuted.
    pub confluence: Vec<Verdict>,
    pub conflicts: Option<ConflictTable>,
}

impl CheckReport {
    pub fn preservation_holds(&self) -> bool {
        self.preservation.iter().all(|v| v.status == Status::ProvedBounded)
    }

    pub fn verdicts(&self) -> impl Iterator<Item = &Verdict> {
        self.preservation.iter().chain(&self.confluence)
    }

    pub fn verdict(&self, obligation: &str) -> Option<&Verdict> {
        self.verdicts().find(|v| v.obligation == obligation)
    }
}

/// Human-readable report; witnesses are printed with source names.
pub fn render_text(p: &CheckedProgram, r: &CheckReport) -> String {
    let mut out = String::new();
    let b = &r.bounds;
    writeln!(out, "program {}", r.program).unwrap();
    writeln!(
        out,
        "bounds: time < {}, durations {:?}, ints 0..={}, counters +-{}, sets <= {}, elements per store <= {}",
        b.time_bound, b.durations, b.int_bound, b.counter_bound, b.max_set_size, b.max_store_elements
    )
    .unwrap();
    writeln!(out, "valid stores: {}", r.valid_stores).unwrap();
    for w in &r.warnings {
        writeln!(out, "warning: {w}").unwrap();
    }
    for (a, reach) in &r.reaches {
        let reach: Vec<&str> = reach.iter().map(String::as_str).collect();
        let invs: Vec<String> = r.overlaps.get(a).into_iter().flatten().map(|i| i.to_string()).collect();
        writeln!(
            out,
            "reaches({a}) = {{{}}}, overlaps invariants {{{}}}",
            reach.join(", "),
            invs.join(", ")
        )
        .unwrap();
    }
    let pairs: Vec<String> = r
        .interaction_pairs
        .iter()
        .map(|(a, b)| format!("{a},{b}"))
        .collect();
    writeln!(out, "overlapping pairs: {}", if pairs.is_empty() { "none".into() } else { pairs.join(" ") }).unwrap();
    out.push('\n');
    for v in r.verdicts() {
        let invs: Vec<String> = v.invariants.iter().map(|i| i.to_string()).collect();
        writeln!(
            out,
            "{} {} ({} cases, invariants {{{}}})",
            v.obligation,
            v.status,
            v.cases,
            invs.join(", ")
        )
        .unwrap();
        if let Some(w) = &v.witness {
            writeln!(out, "  reason: {}", w.failure).unwrap();
            let args: Vec<String> = w.args.iter().map(|a| a.to_string()).collect();
            writeln!(out, "  arguments: {}", args.join("; ")).unwrap();
            writeln!(out, "  store:").unwrap();
            for line in w.store.render(p).lines() {
                writeln!(out, "    {line}").unwrap();
            }
            if let Ok(Some(m)) = witness_merge(p, v) {
                writeln!(out, "  merged:").unwrap();
                for line in m.render(p).lines() {
                    writeln!(out, "    {line}").unwrap();
                }
            }
        }
    }
    if !r.preservation_holds() {
        out.push_str("\nconfluence not checked: preservation fails\n");
    }
    if let Some(t) = &r.conflicts {
        out.push_str("\nconflicts:\n");
        for (a, cs) in t.iter() {
            let list: Vec<&str> = cs.iter().map(String::as_str).collect();
            writeln!(out, "  {a}: {}", if list.is_empty() { "-".into() } else { list.join(", ") }).unwrap();
        }
    }
    out
}
