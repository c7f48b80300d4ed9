//! Bounded discharge of the proof obligations of a program.
//!
//! Preservation: every interaction, run from a valid store with its
//! requires satisfied, yields a store satisfying its ensures and every
//! invariant it overlaps. Confluence: two concurrent runs of an
//! overlapping pair from a common store merge into a store that satisfies
//! their shared invariants and is also reached by running either
//! interaction after the other's effect.
//!
//! Obligations are checked over every store and argument within a
//! [`BoundConfig`]; "proved" always means proved within those bounds.

mod bounds;
mod enumerate;
mod report;
mod smt;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crdt::{Datum, ReplicaId};
use crate::eval::{apply_interaction, Env, EvalCtx, EvalError, Outcome, Store};
use crate::graph::{build_graph, overlapping_pairs, pair_key, OverlapReport};
use crate::program::{CheckedProgram, InteractionDef};

pub use bounds::BoundConfig;
pub use enumerate::{enumerate_stores, valid_stores};
pub use report::{render_text, CheckReport};
pub use smt::{emit_smt, SmtFile};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error("{what}: {size} candidates exceed the cap of {cap}")]
    BoundsTooLarge { what: String, size: u64, cap: u64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("preservation fails for {}", .0.join(", "))]
    PreservationFailed(Vec<String>),
    #[error("`{0}` is not an executable interaction")]
    NotExecutable(String),
    #[error("obligation `{0}` cannot be encoded: {1}")]
    NotEncodable(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    ProvedBounded,
    Refuted,
    SkippedByOverlap,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::ProvedBounded => "proved-bounded",
            Status::Refuted => "refuted",
            Status::SkippedByOverlap => "skipped-by-overlap",
        })
    }
}

/// Why a witness refutes its obligation. `run` is 1 or 2 and names the
/// interaction of a pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Failure {
    /// Ensures clause `clause` (0-based) is false after the run.
    PostconditionFalse { clause: usize },
    /// Invariant `id` is false after the run or in the merged store.
    InvariantViolated { id: usize },
    /// Re-running interaction `run` after the other one's effect yields a
    /// store different from the merge.
    ReexecutionDiverges { run: usize },
    /// Interaction `run` is disabled after the other one's effect although
    /// the merge differs from that store.
    ReexecutionDisabled { run: usize, clause: usize },
    /// Re-running interaction `run` breaks its ensures clause.
    ReexecutionPostconditionFalse { run: usize, clause: usize },
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::PostconditionFalse { clause } => {
                write!(f, "ensures clause {} is false after the interaction", clause + 1)
            }
            Failure::InvariantViolated { id } => write!(f, "invariant {id} is violated"),
            Failure::ReexecutionDiverges { run } => {
                write!(f, "re-running interaction {run} after the other does not reach the merge")
            }
            Failure::ReexecutionDisabled { run, clause } => write!(
                f,
                "interaction {run} is disabled after the other (requires clause {}) and the merge differs",
                clause + 1
            ),
            Failure::ReexecutionPostconditionFalse { run, clause } => write!(
                f,
                "re-running interaction {run} breaks its ensures clause {}",
                clause + 1
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    /// The starting store (the common fork for confluence).
    pub store: Store,
    /// One argument per interaction of the obligation.
    pub args: Vec<Datum>,
    pub failure: Failure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    /// `preservation:<a>` or `confluence:<a1>,<a2>`.
    pub obligation: String,
    pub interactions: Vec<String>,
    /// Invariants the obligation is about.
    pub invariants: Vec<usize>,
    pub status: Status,
    /// Enabled (store, argument) combinations examined.
    pub cases: u64,
    pub witness: Option<Witness>,
}

impl Verdict {
    pub fn is_confluence(&self) -> bool {
        self.interactions.len() == 2
    }
}

/// Symmetric conflict relation: `conflicts[a]` lists the interactions that
/// may not run concurrently with `a`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConflictTable {
    table: BTreeMap<String, BTreeSet<String>>,
}

impl ConflictTable {
    /// Table over the program's interactions with no conflicts.
    pub fn empty(p: &CheckedProgram) -> Self {
        ConflictTable {
            table: p.interactions.iter().map(|a| (a.name.clone(), BTreeSet::new())).collect(),
        }
    }

    /// Every interaction conflicts with every interaction.
    pub fn total(p: &CheckedProgram) -> Self {
        let all: BTreeSet<String> = p.interactions.iter().map(|a| a.name.clone()).collect();
        ConflictTable {
            table: all.iter().map(|a| (a.clone(), all.clone())).collect(),
        }
    }

    pub fn insert(&mut self, a1: &str, a2: &str) {
        self.table.entry(a1.to_string()).or_default().insert(a2.to_string());
        self.table.entry(a2.to_string()).or_default().insert(a1.to_string());
    }

    pub fn conflicts(&self, a: &str) -> BTreeSet<String> {
        self.table.get(a).cloned().unwrap_or_default()
    }

    pub fn conflict(&self, a1: &str, a2: &str) -> bool {
        self.table.get(a1).is_some_and(|s| s.contains(a2))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
        self.table.iter()
    }

    /// All tokens mentioned by the table.
    pub fn tokens(&self) -> BTreeSet<String> {
        self.table.keys().cloned().collect()
    }
}

/// Shared state of one verification run: the program, its bounds, the
/// overlap report and the valid stores.
pub struct Checker<'a> {
    p: &'a CheckedProgram,
    cfg: BoundConfig,
    overlaps: OverlapReport,
    stores: Vec<Store>,
    args: BTreeMap<String, Vec<Datum>>,
}

const ACTOR_1: ReplicaId = ReplicaId(1);
const ACTOR_2: ReplicaId = ReplicaId(2);

impl<'a> Checker<'a> {
    pub fn new(p: &'a CheckedProgram, cfg: &BoundConfig) -> Result<Self, VerifyError> {
        cfg.validate()?;
        let overlaps = overlapping_pairs(&build_graph(p));
        let mut args = BTreeMap::new();
        for a in &p.interactions {
            args.insert(a.name.clone(), cfg.arguments(p, &a.arg_type)?);
        }
        let stores = valid_stores(p, cfg)?;
        Ok(Checker {
            p,
            cfg: cfg.clone(),
            overlaps,
            stores,
            args,
        })
    }

    pub fn overlaps(&self) -> &OverlapReport {
        &self.overlaps
    }

    pub fn valid_store_count(&self) -> usize {
        self.stores.len()
    }

    fn interaction(&self, name: &str) -> Result<&'a InteractionDef, VerifyError> {
        self.p
            .interaction(name)
            .ok_or_else(|| VerifyError::NotExecutable(name.to_string()))
    }

    fn check_case_cap(&self, what: &str, size: u64) -> Result<(), VerifyError> {
        if size > self.cfg.enumeration_cap {
            return Err(VerifyError::BoundsTooLarge {
                what: what.to_string(),
                size,
                cap: self.cfg.enumeration_cap,
            });
        }
        Ok(())
    }

    pub fn preservation(&self, name: &str) -> Result<Verdict, VerifyError> {
        let a = self.interaction(name)?;
        let invs: Vec<usize> = self
            .overlaps
            .invariant_overlaps
            .get(name)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default();
        let args = &self.args[name];
        self.check_case_cap(
            &format!("preservation cases of {name}"),
            self.stores.len() as u64 * args.len() as u64,
        )?;
        let per_store: Vec<(u64, Option<Witness>)> = self
            .stores
            .par_iter()
            .map(|s| -> Result<_, VerifyError> {
                let mut cases = 0;
                for v in args {
                    let Outcome::Applied { store, failed_ensures } = apply_interaction(self.p, s, ACTOR_1, a, v)?
                    else {
                        continue;
                    };
                    cases += 1;
                    let failure = match failed_ensures {
                        Some(clause) => Some(Failure::PostconditionFalse { clause }),
                        None => first_violated(self.p, &store, &invs)?.map(|id| Failure::InvariantViolated { id }),
                    };
                    if let Some(failure) = failure {
                        return Ok((
                            cases,
                            Some(Witness {
                                store: s.clone(),
                                args: vec![v.clone()],
                                failure,
                            }),
                        ));
                    }
                }
                Ok((cases, None))
            })
            .collect::<Result<_, _>>()?;
        Ok(finish(format!("preservation:{name}"), vec![name.to_string()], invs, per_store))
    }

    pub fn confluence(&self, a1: &str, a2: &str) -> Result<Verdict, VerifyError> {
        let d1 = self.interaction(a1)?;
        let d2 = self.interaction(a2)?;
        let obligation = format!("confluence:{}", pair_key(a1, a2));
        let interactions = vec![a1.to_string(), a2.to_string()];
        if !self.overlaps.contains_pair(a1, a2) {
            return Ok(Verdict {
                obligation,
                interactions,
                invariants: Vec::new(),
                status: Status::SkippedByOverlap,
                cases: 0,
                witness: None,
            });
        }
        let invs: Vec<usize> = self.overlaps.shared_invariants(a1, a2).into_iter().collect();
        let (args1, args2) = (&self.args[a1], &self.args[a2]);
        self.check_case_cap(
            &format!("confluence cases of {a1}, {a2}"),
            self.stores.len() as u64 * args1.len() as u64 * args2.len() as u64,
        )?;
        let per_store: Vec<(u64, Option<Witness>)> = self
            .stores
            .par_iter()
            .map(|s| self.confluence_at(s, d1, d2, args1, args2, &invs))
            .collect::<Result<_, _>>()?;
        Ok(finish(obligation, interactions, invs, per_store))
    }

    fn confluence_at(
        &self,
        s: &Store,
        d1: &InteractionDef,
        d2: &InteractionDef,
        args1: &[Datum],
        args2: &[Datum],
        invs: &[usize],
    ) -> Result<(u64, Option<Witness>), VerifyError> {
        let e1 = enabled(self.p, s, d1, ACTOR_1, args1)?;
        let e2 = enabled(self.p, s, d2, ACTOR_2, args2)?;
        let mut cases = 0;
        for (v1, s1) in &e1 {
            for (v2, s2) in &e2 {
                cases += 1;
                if let Some(failure) = confluence_case(self.p, s, (d1, v1, s1), (d2, v2, s2), invs)? {
                    return Ok((
                        cases,
                        Some(Witness {
                            store: s.clone(),
                            args: vec![v1.clone(), v2.clone()],
                            failure,
                        }),
                    ));
                }
            }
        }
        Ok((cases, None))
    }

    /// Preservation for every interaction, then (when all hold) confluence
    /// for every unordered pair, skipped pairs included.
    pub fn run(&self, program_name: &str) -> Result<CheckReport, VerifyError> {
        let preservation: Vec<Verdict> = self
            .p
            .interactions
            .iter()
            .map(|a| self.preservation(&a.name))
            .collect::<Result<_, _>>()?;
        let preserved = preservation.iter().all(|v| v.status == Status::ProvedBounded);
        let mut confluence = Vec::new();
        let mut conflicts = None;
        if preserved {
            let names: Vec<&str> = self.p.interactions.iter().map(|a| a.name.as_str()).collect();
            let mut table = ConflictTable::empty(self.p);
            for (i, a1) in names.iter().enumerate() {
                for a2 in &names[i..] {
                    let v = self.confluence(a1, a2)?;
                    if v.status == Status::Refuted {
                        table.insert(a1, a2);
                    }
                    confluence.push(v);
                }
            }
            conflicts = Some(table);
        }
        Ok(CheckReport {
            program: program_name.to_string(),
            bounds: self.cfg.clone(),
            valid_stores: self.stores.len(),
            reaches: self.overlaps.reaches.clone(),
            overlaps: self.overlaps.invariant_overlaps.clone(),
            interaction_pairs: self.overlaps.interaction_pairs.clone(),
            warnings: self.overlaps.warnings.clone(),
            preservation,
            confluence,
            conflicts,
        })
    }
}

fn finish(obligation: String, interactions: Vec<String>, invariants: Vec<usize>, per_store: Vec<(u64, Option<Witness>)>) -> Verdict {
    let mut cases = 0;
    let mut witness = None;
    for (c, w) in per_store {
        cases += c;
        if w.is_some() {
            witness = w;
            break;
        }
    }
    Verdict {
        obligation,
        interactions,
        invariants,
        status: if witness.is_some() {
            Status::Refuted
        } else {
            Status::ProvedBounded
        },
        cases,
        witness,
    }
}

fn first_violated(p: &CheckedProgram, s: &Store, ids: &[usize]) -> Result<Option<usize>, EvalError> {
    let ctx = EvalCtx::new(p, s);
    for inv in p.invariants.iter().filter(|i| ids.contains(&i.id)) {
        if !ctx.eval_bool(&inv.formula, &Env::empty())? {
            return Ok(Some(inv.id));
        }
    }
    Ok(None)
}

/// Arguments for which `a` is enabled on `s`, with the resulting stores.
/// Runs breaking their ensures are dropped; preservation reports them.
fn enabled(
    p: &CheckedProgram,
    s: &Store,
    a: &InteractionDef,
    actor: ReplicaId,
    args: &[Datum],
) -> Result<Vec<(Datum, Store)>, EvalError> {
    let mut out = Vec::new();
    for v in args {
        if let Outcome::Applied {
            store,
            failed_ensures: None,
        } = apply_interaction(p, s, actor, a, v)?
        {
            out.push((v.clone(), store));
        }
    }
    Ok(out)
}

type Run<'r> = (&'r InteractionDef, &'r Datum, &'r Store);

fn confluence_case(
    p: &CheckedProgram,
    fork: &Store,
    (d1, v1, s1): Run<'_>,
    (d2, v2, s2): Run<'_>,
    invs: &[usize],
) -> Result<Option<Failure>, EvalError> {
    let merged = s1.merge(s2)?;
    if let Some(id) = first_violated(p, &merged, invs)? {
        return Ok(Some(Failure::InvariantViolated { id }));
    }
    let after2 = fork.merge(s2)?;
    if let Some(f) = rerun(p, &after2, d1, ACTOR_1, v1, &merged, 1)? {
        return Ok(Some(f));
    }
    let after1 = s1.merge(fork)?;
    rerun(p, &after1, d2, ACTOR_2, v2, &merged, 2)
}

/// Re-run one interaction of the pair on the store left by the other. An
/// enabled run must land exactly on the merge; a disabled one is accepted
/// when the merge shows nothing beyond what the store already shows.
fn rerun(
    p: &CheckedProgram,
    base: &Store,
    d: &InteractionDef,
    actor: ReplicaId,
    v: &Datum,
    merged: &Store,
    run: usize,
) -> Result<Option<Failure>, EvalError> {
    Ok(match apply_interaction(p, base, actor, d, v)? {
        Outcome::Applied {
            failed_ensures: Some(clause),
            ..
        } => Some(Failure::ReexecutionPostconditionFalse { run, clause }),
        Outcome::Applied { store, .. } => (store != *merged).then_some(Failure::ReexecutionDiverges { run }),
        Outcome::Disabled { clause } => {
            (!base.observably_equal(merged)).then_some(Failure::ReexecutionDisabled { run, clause })
        }
    })
}

pub fn check_preservation(p: &CheckedProgram, a: &str, cfg: &BoundConfig) -> Result<Verdict, VerifyError> {
    Checker::new(p, cfg)?.preservation(a)
}

pub fn check_confluence(p: &CheckedProgram, a1: &str, a2: &str, cfg: &BoundConfig) -> Result<Verdict, VerifyError> {
    Checker::new(p, cfg)?.confluence(a1, a2)
}

pub fn check_program(p: &CheckedProgram, name: &str, cfg: &BoundConfig) -> Result<CheckReport, VerifyError> {
    Checker::new(p, cfg)?.run(name)
}

/// The conflict table: every overlapping pair whose confluence obligation
/// is refuted conflicts. Fails if some interaction does not preserve the
/// invariants, since no coordination can repair that.
pub fn compute_conflicts(p: &CheckedProgram, cfg: &BoundConfig) -> Result<ConflictTable, VerifyError> {
    let report = check_program(p, "", cfg)?;
    report.conflicts.ok_or_else(|| {
        VerifyError::PreservationFailed(
            report
                .preservation
                .iter()
                .filter(|v| v.status == Status::Refuted)
                .map(|v| v.interactions[0].clone())
                .collect(),
        )
    })
}

/// Re-execute a verdict's witness and return the failure it exhibits, if
/// any. A sound witness reproduces exactly its recorded failure.
pub fn replay_witness(p: &CheckedProgram, v: &Verdict) -> Result<Option<Failure>, VerifyError> {
    let Some(w) = &v.witness else {
        return Ok(None);
    };
    let s = &w.store;
    let interaction = |k: usize| -> Result<&InteractionDef, VerifyError> {
        let name = v
            .interactions
            .get(k)
            .ok_or_else(|| VerifyError::InvalidBounds("witness names too few interactions".into()))?;
        p.interaction(name).ok_or_else(|| VerifyError::NotExecutable(name.clone()))
    };
    let arg = |k: usize| -> Result<&Datum, VerifyError> {
        w.args
            .get(k)
            .ok_or_else(|| VerifyError::InvalidBounds("witness has too few arguments".into()))
    };
    if !v.is_confluence() {
        return Ok(match apply_interaction(p, s, ACTOR_1, interaction(0)?, arg(0)?)? {
            Outcome::Disabled { .. } => None,
            Outcome::Applied {
                failed_ensures: Some(clause),
                ..
            } => Some(Failure::PostconditionFalse { clause }),
            Outcome::Applied { store, .. } => {
                first_violated(p, &store, &v.invariants)?.map(|id| Failure::InvariantViolated { id })
            }
        });
    }
    let (d1, d2) = (interaction(0)?, interaction(1)?);
    let (v1, v2) = (arg(0)?, arg(1)?);
    let run = |d: &InteractionDef, actor, v: &Datum| -> Result<Option<Store>, VerifyError> {
        Ok(match apply_interaction(p, s, actor, d, v)? {
            Outcome::Applied {
                store,
                failed_ensures: None,
            } => Some(store),
            _ => None,
        })
    };
    let (Some(s1), Some(s2)) = (run(d1, ACTOR_1, v1)?, run(d2, ACTOR_2, v2)?) else {
        return Ok(None);
    };
    Ok(confluence_case(p, s, (d1, v1, &s1), (d2, v2, &s2), &v.invariants)?)
}

/// The merged store of a confluence witness, for display.
pub fn witness_merge(p: &CheckedProgram, v: &Verdict) -> Result<Option<Store>, VerifyError> {
    let Some(w) = &v.witness else {
        return Ok(None);
    };
    if !v.is_confluence() || w.args.len() != 2 {
        return Ok(None);
    }
    let mut out = w.store.clone();
    for (k, actor) in [(0, ACTOR_1), (1, ACTOR_2)] {
        let d = p
            .interaction(&v.interactions[k])
            .ok_or_else(|| VerifyError::NotExecutable(v.interactions[k].clone()))?;
        match apply_interaction(p, &w.store, actor, d, &w.args[k])? {
            Outcome::Applied { store, .. } => out = out.merge(&store)?,
            Outcome::Disabled { .. } => return Ok(None),
        }
    }
    Ok(Some(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crdt::Datum;
    use crate::program::appointment;
    use crate::syntax::compile;

    fn calendar() -> CheckedProgram {
        compile(include_str!("../../corpus/calendar.lore")).unwrap()
    }

    #[test]
    fn calendar_conflicts() {
        let p = calendar();
        let r = check_program(&p, "calendar", &BoundConfig::default()).unwrap();
        assert!(r.preservation_holds(), "{}", render_text(&p, &r));
        let t = r.conflicts.clone().unwrap();
        assert_eq!(t.conflicts("add_vacation"), BTreeSet::from(["add_vacation".to_string()]));
        assert!(t.conflicts("add_work").is_empty());
        let v = r.verdict("confluence:add_vacation,add_vacation").unwrap();
        let w = v.witness.as_ref().unwrap();
        assert_eq!(w.failure, Failure::InvariantViolated { id: 2 });
        assert_eq!(replay_witness(&p, v).unwrap(), Some(w.failure.clone()));
        let days: i64 = w
            .args
            .iter()
            .map(|a| match a {
                Datum::Record { fields, .. } => match (&fields[1], &fields[2]) {
                    (Datum::Int(s), Datum::Int(e)) => e - s,
                    _ => unreachable!(),
                },
                _ => unreachable!(),
            })
            .sum();
        assert!(days > 30);
        assert_ne!(w.args[0], appointment(0, 0, 31));
        println!("{}", render_text(&p, &r));
    }
}
