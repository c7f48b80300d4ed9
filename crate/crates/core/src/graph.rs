//! Data-flow graph of a checked program and the overlap analysis that
//! decides which interaction pairs need a confluence check.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::Serialize;

use crate::program::{CheckedProgram, ReactiveRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Source,
    Derived,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DataflowGraph {
    pub nodes: Vec<Node>,
    /// `(from, to)`: `to` is a derived whose body reads `from`.
    pub edges: BTreeSet<(String, String)>,
    /// Reactives each invariant reads, derived bodies inlined one level.
    pub invariant_reads: BTreeMap<usize, BTreeSet<String>>,
    /// The modifies list of each executable interaction.
    pub interaction_writes: BTreeMap<String, BTreeSet<String>>,
    /// Executable interactions in declaration order.
    pub interactions: Vec<String>,
}

pub fn build_graph(p: &CheckedProgram) -> DataflowGraph {
    let mut nodes: Vec<Node> = p
        .sources
        .iter()
        .map(|s| Node {
            name: s.name.clone(),
            kind: NodeKind::Source,
        })
        .collect();
    nodes.extend(p.deriveds.iter().map(|d| Node {
        name: d.name.clone(),
        kind: NodeKind::Derived,
    }));
    let mut edges = BTreeSet::new();
    for d in &p.deriveds {
        for r in d.body.reads() {
            edges.insert((p.reactive_name(r).to_string(), d.name.clone()));
        }
    }
    let invariant_reads = p
        .invariants
        .iter()
        .map(|inv| {
            let mut reads = BTreeSet::new();
            for r in inv.formula.reads() {
                reads.insert(p.reactive_name(r).to_string());
                if let ReactiveRef::Derived(i) = r {
                    for inner in p.deriveds[i].body.reads() {
                        reads.insert(p.reactive_name(inner).to_string());
                    }
                }
            }
            (inv.id, reads)
        })
        .collect();
    let interaction_writes = p
        .interactions
        .iter()
        .map(|a| {
            let writes = a.modifies.iter().map(|&i| p.sources[i].name.clone()).collect();
            (a.name.clone(), writes)
        })
        .collect();
    DataflowGraph {
        nodes,
        edges,
        invariant_reads,
        interaction_writes,
        interactions: p.interactions.iter().map(|a| a.name.clone()).collect(),
    }
}

impl DataflowGraph {
    /// Least set containing `seeds` closed under outgoing edges.
    pub fn closure(&self, seeds: &BTreeSet<String>) -> BTreeSet<String> {
        let mut out = seeds.clone();
        let mut todo: Vec<String> = seeds.iter().cloned().collect();
        while let Some(n) = todo.pop() {
            for (from, to) in &self.edges {
                if *from == n && out.insert(to.clone()) {
                    todo.push(to.clone());
                }
            }
        }
        out
    }

    /// Render in DOT; sources are boxes, deriveds ellipses.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph dataflow {\n  rankdir=TB;\n");
        for n in &self.nodes {
            let shape = match n.kind {
                NodeKind::Source => "box",
                NodeKind::Derived => "ellipse",
            };
            writeln!(out, "  \"{}\" [shape={shape}];", n.name).unwrap();
        }
        for (from, to) in &self.edges {
            writeln!(out, "  \"{from}\" -> \"{to}\";").unwrap();
        }
        for (id, reads) in &self.invariant_reads {
            writeln!(out, "  \"invariant {id}\" [shape=note];").unwrap();
            for r in reads {
                writeln!(out, "  \"{r}\" -> \"invariant {id}\" [style=dashed];").unwrap();
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Reactives affected by `a`: its modified sources and everything derived
/// from them. Unknown interactions reach nothing.
pub fn reaches(g: &DataflowGraph, a: &str) -> BTreeSet<String> {
    match g.interaction_writes.get(a) {
        Some(w) => g.closure(w),
        None => BTreeSet::new(),
    }
}

/// Does some reactive read by invariant `inv` lie in `reaches(a)`?
pub fn overlaps(g: &DataflowGraph, a: &str, inv: usize) -> bool {
    let r = reaches(g, a);
    g.invariant_reads
        .get(&inv)
        .is_some_and(|reads| reads.iter().any(|x| r.contains(x)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OverlapReport {
    pub reaches: BTreeMap<String, BTreeSet<String>>,
    pub invariant_overlaps: BTreeMap<String, BTreeSet<usize>>,
    /// Pairs needing a confluence check, each ordered by declaration, the
    /// list sorted by declaration order.
    pub interaction_pairs: Vec<(String, String)>,
    /// Invariants shared by each pair.
    pub pair_invariants: BTreeMap<String, BTreeSet<usize>>,
    pub warnings: Vec<String>,
}

impl OverlapReport {
    pub fn shared_invariants(&self, a1: &str, a2: &str) -> BTreeSet<usize> {
        let (x, y) = (
            self.invariant_overlaps.get(a1).cloned().unwrap_or_default(),
            self.invariant_overlaps.get(a2).cloned().unwrap_or_default(),
        );
        x.intersection(&y).copied().collect()
    }

    pub fn contains_pair(&self, a1: &str, a2: &str) -> bool {
        self.interaction_pairs
            .iter()
            .any(|(x, y)| (x == a1 && y == a2) || (x == a2 && y == a1))
    }
}

pub fn pair_key(a1: &str, a2: &str) -> String {
    format!("{a1},{a2}")
}

pub fn overlapping_pairs(g: &DataflowGraph) -> OverlapReport {
    let mut reaches_map = BTreeMap::new();
    let mut inv_overlaps = BTreeMap::new();
    for a in &g.interactions {
        reaches_map.insert(a.clone(), reaches(g, a));
        let invs: BTreeSet<usize> = g
            .invariant_reads
            .keys()
            .copied()
            .filter(|&i| overlaps(g, a, i))
            .collect();
        inv_overlaps.insert(a.clone(), invs);
    }
    let mut warnings = Vec::new();
    for (id, reads) in &g.invariant_reads {
        if reads.is_empty() {
            warnings.push(format!("invariant {id} reads no reactive and overlaps no interaction"));
        }
    }
    let mut report = OverlapReport {
        reaches: reaches_map,
        invariant_overlaps: inv_overlaps,
        interaction_pairs: Vec::new(),
        pair_invariants: BTreeMap::new(),
        warnings,
    };
    for (i, a1) in g.interactions.iter().enumerate() {
        for a2 in &g.interactions[i..] {
            let shared = report.shared_invariants(a1, a2);
            if !shared.is_empty() {
                report.interaction_pairs.push((a1.clone(), a2.clone()));
                report.pair_invariants.insert(pair_key(a1, a2), shared);
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::compile;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn calendar_graph_and_pairs() {
        let p = compile(include_str!("../corpus/calendar.lore")).unwrap();
        let g = build_graph(&p);
        let edges: Vec<(&str, &str)> = g.edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        assert_eq!(
            edges,
            vec![
                ("vacation", "all_appointments"),
                ("vacation", "remaining_vacation"),
                ("work", "all_appointments")
            ]
        );
        assert_eq!(reaches(&g, "add_work"), set(&["work", "all_appointments"]));
        assert_eq!(
            reaches(&g, "add_vacation"),
            set(&["vacation", "all_appointments", "remaining_vacation"])
        );
        assert!(!overlaps(&g, "add_work", 2));
        assert!(overlaps(&g, "add_vacation", 2));
        let r = overlapping_pairs(&g);
        assert_eq!(r.interaction_pairs.len(), 3);
        assert_eq!(r.shared_invariants("add_vacation", "add_work"), BTreeSet::from([1]));
        assert_eq!(r.shared_invariants("add_vacation", "add_vacation"), BTreeSet::from([1, 2]));
        assert!(reaches(&g, "nothing").is_empty());
    }

    #[test]
    fn constant_invariant_overlaps_nothing() {
        let p = compile(
            "val s: Source[AWSet[Int]] = Source(AWSet())
             val put: Unit = Interaction[AWSet[Int]][Int].modifies(s).executes{ c => x => c.add(x) }
             invariant true",
        )
        .unwrap();
        let r = overlapping_pairs(&build_graph(&p));
        assert!(r.interaction_pairs.is_empty());
        assert_eq!(r.warnings.len(), 1);
    }
}
