//! SMT-LIB 2 encoding of the obligations, for discharging them without
//! bounds in an external solver. Each file asserts the negation of one
//! obligation, so `unsat` means it holds.
//!
//! Replicated sets are encoded as their element sets (`(Array T Bool)`),
//! counters as their value and registers as their content. Concurrent
//! set merges become unions, which is exact for sets that are only added
//! to and an approximation otherwise. The confluence files encode the
//! invariant half of the obligation: the merged store satisfies the
//! shared invariants.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::VerifyError;
use crate::crdt::{CrdtKind, Datum};
use crate::graph::{build_graph, overlapping_pairs, pair_key};
use crate::program::{Builtin, CheckedProgram, Clause, InteractionDef, Term, Type};
use crate::syntax::ast::{BinOp, Quantifier};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmtFile {
    /// `<program>.<obligation>.smt2`, with `:` and `,` replaced by `.`.
    pub file_name: String,
    pub obligation: String,
    pub text: String,
}

/// One file per preservation obligation and per overlapping pair.
pub fn emit_smt(p: &CheckedProgram, program_name: &str) -> Result<Vec<SmtFile>, VerifyError> {
    let overlaps = overlapping_pairs(&build_graph(p));
    let mut out = Vec::new();
    for a in &p.interactions {
        let obligation = format!("preservation:{}", a.name);
        let invs: Vec<usize> = overlaps.invariant_overlaps[&a.name].iter().copied().collect();
        let text = Enc::new(p, &obligation).preservation(a, &invs)?;
        out.push(file(program_name, obligation, text));
    }
    for (a1, a2) in &overlaps.interaction_pairs {
        let obligation = format!("confluence:{}", pair_key(a1, a2));
        let invs: Vec<usize> = overlaps.pair_invariants[&pair_key(a1, a2)].iter().copied().collect();
        let (d1, d2) = (p.interaction(a1).unwrap(), p.interaction(a2).unwrap());
        let text = Enc::new(p, &obligation).confluence(d1, d2, &invs)?;
        out.push(file(program_name, obligation, text));
    }
    Ok(out)
}

fn file(program: &str, obligation: String, text: String) -> SmtFile {
    SmtFile {
        file_name: format!("{program}.{}.smt2", obligation.replace([':', ','], ".")),
        obligation,
        text,
    }
}

/// Source values of one store, as SMT expressions.
type State = Vec<String>;

struct Enc<'a> {
    p: &'a CheckedProgram,
    obligation: String,
    tuples: BTreeMap<String, Vec<Type>>,
    sum_days: bool,
    card: BTreeMap<String, String>,
    decls: Vec<String>,
    asserts: Vec<String>,
}

impl<'a> Enc<'a> {
    fn new(p: &'a CheckedProgram, obligation: &str) -> Self {
        Enc {
            p,
            obligation: obligation.to_string(),
            tuples: BTreeMap::new(),
            sum_days: false,
            card: BTreeMap::new(),
            decls: Vec::new(),
            asserts: Vec::new(),
        }
    }

    fn unsupported(&self, what: impl Into<String>) -> VerifyError {
        VerifyError::NotEncodable(self.obligation.clone(), what.into())
    }

    fn sort(&mut self, t: &Type) -> Result<String, VerifyError> {
        Ok(match t {
            Type::Bool => "Bool".into(),
            Type::Int => "Int".into(),
            Type::Str => "String".into(),
            Type::Record(n) => n.clone(),
            Type::Tuple(items) => {
                for i in items {
                    self.sort(i)?;
                }
                let name = tuple_name(items);
                self.tuples.insert(name.clone(), items.clone());
                name
            }
            Type::Set(e) | Type::Crdt(CrdtKind::AWSet, e) => format!("(Array {} Bool)", self.sort(e)?),
            Type::Crdt(CrdtKind::PNCounter, _) => "Int".into(),
            Type::Crdt(CrdtKind::LWWRegister, e) => self.sort(e)?,
            Type::Fun(..) => return Err(self.unsupported("function values")),
        })
    }

    fn declare(&mut self, name: &str, t: &Type) -> Result<(), VerifyError> {
        let s = self.sort(t)?;
        self.decls.push(format!("(declare-const {name} {s})"));
        Ok(())
    }

    fn state(&mut self, tag: &str) -> Result<State, VerifyError> {
        let p = self.p;
        let mut out = Vec::new();
        for s in &p.sources {
            let name = format!("{}_{tag}", s.name);
            self.declare(&name, &s.ty)?;
            out.push(name);
        }
        Ok(out)
    }

    fn assert_all_invariants(&mut self, st: &State) -> Result<(), VerifyError> {
        let p = self.p;
        for inv in &p.invariants {
            let (e, _) = self.term(&inv.formula, st, &[])?;
            self.asserts.push(format!("; invariant {}\n(assert {e})", inv.id));
        }
        Ok(())
    }

    fn invariants(&mut self, st: &State, ids: &[usize]) -> Result<String, VerifyError> {
        let p = self.p;
        let mut parts = Vec::new();
        for inv in p.invariants.iter().filter(|i| ids.contains(&i.id)) {
            parts.push(self.term(&inv.formula, st, &[])?.0);
        }
        Ok(and(parts))
    }

    fn clause_vars(&self, c: &Clause, a: &InteractionDef, st: &State, arg: &str) -> Vec<(String, String, Type)> {
        let mut vars = Vec::new();
        for (name, &src) in c.params.iter().zip(&a.modifies) {
            vars.push((name.clone(), st[src].clone(), self.p.sources[src].ty.clone()));
        }
        if let Some(last) = c.params.last() {
            vars.push((last.clone(), arg.to_string(), a.arg_type.clone()));
        }
        vars
    }

    fn requires(&mut self, a: &InteractionDef, st: &State, arg: &str) -> Result<(), VerifyError> {
        for (k, c) in a.requires.iter().enumerate() {
            let vars = self.clause_vars(c, a, st, arg);
            let (e, _) = self.term(&c.body, st, &vars)?;
            self.asserts.push(format!("; {} requires {}\n(assert {e})", a.name, k + 1));
        }
        Ok(())
    }

    fn ensures(&mut self, a: &InteractionDef, st: &State, arg: &str) -> Result<String, VerifyError> {
        let mut parts = Vec::new();
        for c in &a.ensures {
            let vars = self.clause_vars(c, a, st, arg);
            parts.push(self.term(&c.body, st, &vars)?.0);
        }
        Ok(and(parts))
    }

    /// Store after running `a`: the executes results replace the modified
    /// sources.
    fn execute(&mut self, a: &InteractionDef, st: &State, arg: &str, tag: &str) -> Result<State, VerifyError> {
        let vars = self.clause_vars(&a.executes, a, st, arg);
        let results: Vec<String> = match (&a.executes.body, a.modifies.len()) {
            (body, 1) => vec![self.term(body, st, &vars)?.0],
            (Term::Tuple(items), n) if items.len() == n => items
                .iter()
                .map(|t| self.term(t, st, &vars).map(|r| r.0))
                .collect::<Result<_, _>>()?,
            (body, _) => {
                let (e, t) = self.term(body, st, &vars)?;
                let Type::Tuple(items) = t else {
                    return Err(self.unsupported("executes does not produce a tuple"));
                };
                let name = tuple_name(&items);
                (0..items.len()).map(|k| format!("({name}_{k} {e})")).collect()
            }
        };
        let p = self.p;
        let mut out = st.clone();
        for (&src, e) in a.modifies.iter().zip(results) {
            let name = format!("{}_{tag}", p.sources[src].name);
            let s = self.sort(&p.sources[src].ty)?;
            self.decls.push(format!("(define-fun {name} () {s} {e})"));
            out[src] = name;
        }
        Ok(out)
    }

    fn preservation(mut self, a: &InteractionDef, invs: &[usize]) -> Result<String, VerifyError> {
        let pre = self.state("pre")?;
        self.declare("arg", &a.arg_type)?;
        self.assert_all_invariants(&pre)?;
        self.requires(a, &pre, "arg")?;
        let post = self.execute(a, &pre, "post", "post")?;
        let goal = and(vec![self.ensures(a, &post, "arg")?, self.invariants(&post, invs)?]);
        self.asserts.push(format!("; negated goal\n(assert (not {goal}))"));
        Ok(self.finish(&format!("{} preserves invariants {invs:?} and its ensures", a.name)))
    }

    fn confluence(mut self, a1: &InteractionDef, a2: &InteractionDef, invs: &[usize]) -> Result<String, VerifyError> {
        let pre = self.state("pre")?;
        self.declare("arg1", &a1.arg_type)?;
        self.declare("arg2", &a2.arg_type)?;
        self.assert_all_invariants(&pre)?;
        self.requires(a1, &pre, "arg1")?;
        self.requires(a2, &pre, "arg2")?;
        let s1 = self.execute(a1, &pre, "arg1", "one")?;
        let s2 = self.execute(a2, &pre, "arg2", "two")?;
        let e1 = self.ensures(a1, &s1, "arg1")?;
        let e2 = self.ensures(a2, &s2, "arg2")?;
        self.asserts.push(format!("; ensures of both runs\n(assert {})", and(vec![e1, e2])));
        let p = self.p;
        let mut merged = Vec::new();
        for (k, src) in p.sources.iter().enumerate() {
            let name = format!("{}_merged", src.name);
            let s = self.sort(&src.ty)?;
            let (x0, x1, x2) = (&pre[k], &s1[k], &s2[k]);
            match &src.ty {
                Type::Crdt(CrdtKind::AWSet, e) => {
                    let es = self.sort(e)?;
                    self.decls.push(format!(
                        "(define-fun {name} () {s} (lambda ((x {es})) (or (select {x1} x) (select {x2} x))))"
                    ));
                }
                Type::Crdt(CrdtKind::PNCounter, _) => {
                    self.decls.push(format!("(define-fun {name} () {s} (- (+ {x1} {x2}) {x0}))"));
                }
                _ => {
                    self.decls.push(format!("(declare-const {name} {s})"));
                    self.asserts.push(format!("(assert (or (= {name} {x1}) (= {name} {x2})))"));
                }
            }
            merged.push(name);
        }
        let goal = self.invariants(&merged, invs)?;
        self.asserts.push(format!("; negated goal\n(assert (not {goal}))"));
        Ok(self.finish(&format!(
            "concurrent {} and {} merge into a store satisfying invariants {invs:?}",
            a1.name, a2.name
        )))
    }

    fn finish(self, claim: &str) -> String {
        let mut out = String::new();
        writeln!(out, "; obligation {}", self.obligation).unwrap();
        writeln!(out, "; claim: {claim}").unwrap();
        writeln!(out, "; unsat means the claim holds").unwrap();
        out.push_str("(set-logic ALL)\n");
        for r in self.p.records.values() {
            let fields: Vec<String> = r
                .fields
                .iter()
                .map(|(f, t)| format!("({}.{f} {})", r.name, plain_sort(t)))
                .collect();
            writeln!(
                out,
                "(declare-datatypes (({} 0)) (((mk-{} {}))))",
                r.name,
                r.name,
                fields.join(" ")
            )
            .unwrap();
        }
        for (name, items) in &self.tuples {
            let fields: Vec<String> = items
                .iter()
                .enumerate()
                .map(|(k, t)| format!("({name}_{k} {})", plain_sort(t)))
                .collect();
            writeln!(out, "(declare-datatypes (({name} 0)) (((mk-{name} {}))))", fields.join(" ")).unwrap();
        }
        out.push_str(
            "(define-fun days ((a Appointment)) Int (- (Appointment.end a) (Appointment.start a)))\n",
        );
        if self.sum_days {
            out.push_str(
                "(declare-fun sumDays ((Array Appointment Bool)) Int)\n\
                 (assert (= (sumDays ((as const (Array Appointment Bool)) false)) 0))\n\
                 (assert (forall ((s (Array Appointment Bool)) (a Appointment))\n  \
                 (=> (not (select s a)) (= (sumDays (store s a true)) (+ (sumDays s) (days a))))))\n",
            );
        }
        for (sort, f) in &self.card {
            writeln!(out, "(declare-fun {f} ((Array {sort} Bool)) Int)").unwrap();
            writeln!(out, "(assert (forall ((s (Array {sort} Bool))) (>= ({f} s) 0)))").unwrap();
        }
        for d in &self.decls {
            writeln!(out, "{d}").unwrap();
        }
        for a in &self.asserts {
            writeln!(out, "{a}").unwrap();
        }
        out.push_str("(check-sat)\n");
        out
    }

    fn term(&mut self, t: &Term, st: &State, vars: &[(String, String, Type)]) -> Result<(String, Type), VerifyError> {
        let p = self.p;
        Ok(match t {
            Term::Const(d) => {
                let ty = datum_type(d);
                self.sort(&ty)?;
                (datum(d), ty)
            }
            Term::Var(n) => {
                let (_, e, ty) = vars
                    .iter()
                    .rev()
                    .find(|(v, _, _)| v == n)
                    .ok_or_else(|| self.unsupported(format!("free variable {n}")))?;
                (e.clone(), ty.clone())
            }
            Term::Source(i) => (st[*i].clone(), p.sources[*i].ty.clone()),
            Term::Derived(i) => {
                let (e, _) = self.term(&p.deriveds[*i].body, st, &[])?;
                (e, p.deriveds[*i].ty.clone())
            }
            Term::Lambda(..) | Term::Apply(..) => return Err(self.unsupported("lambda or application")),
            Term::Record(name, fields) => {
                let parts = self.terms(fields, st, vars)?;
                (format!("(mk-{name} {})", parts.join(" ")), Type::Record(name.clone()))
            }
            Term::Tuple(items) => {
                let mut parts = Vec::new();
                let mut types = Vec::new();
                for i in items {
                    let (e, ty) = self.term(i, st, vars)?;
                    parts.push(e);
                    types.push(ty);
                }
                let ty = Type::Tuple(types);
                let name = self.sort(&ty)?;
                if parts.is_empty() {
                    (format!("mk-{name}"), ty)
                } else {
                    (format!("(mk-{name} {})", parts.join(" ")), ty)
                }
            }
            Term::Field(inner, k) => {
                let (e, ty) = self.term(inner, st, vars)?;
                match value_type(&ty) {
                    Type::Record(n) => {
                        let def = &p.records[&n];
                        let (f, fty) = &def.fields[*k];
                        (format!("({n}.{f} {e})"), fty.clone())
                    }
                    Type::Tuple(items) => (format!("({}_{k} {e})", tuple_name(&items)), items[*k].clone()),
                    other => return Err(self.unsupported(format!("field of {other}"))),
                }
            }
            Term::Not(inner) => (format!("(not {})", self.term(inner, st, vars)?.0), Type::Bool),
            Term::Neg(inner) => (format!("(- {})", self.term(inner, st, vars)?.0), Type::Int),
            Term::Binary(op, l, r) => {
                let (a, _) = self.term(l, st, vars)?;
                let (b, _) = self.term(r, st, vars)?;
                let f = match op {
                    BinOp::Iff | BinOp::Eq => "=",
                    BinOp::Implies => "=>",
                    BinOp::Or => "or",
                    BinOp::And => "and",
                    BinOp::Ne => "distinct",
                    BinOp::Lt => "<",
                    BinOp::Le => "<=",
                    BinOp::Gt => ">",
                    BinOp::Ge => ">=",
                    BinOp::In => return Ok((format!("(select {b} {a})"), Type::Bool)),
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "div",
                    BinOp::Mod => "mod",
                };
                let ty = match op {
                    BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Mod => Type::Int,
                    _ => Type::Bool,
                };
                (format!("({f} {a} {b})"), ty)
            }
            Term::Quant(q, x, ty, body) => {
                let s = self.sort(ty)?;
                let mut inner = vars.to_vec();
                let sym = format!("q_{x}");
                inner.push((x.clone(), sym.clone(), ty.clone()));
                let (b, _) = self.term(body, st, &inner)?;
                let kw = match q {
                    Quantifier::Forall => "forall",
                    Quantifier::Exists => "exists",
                };
                (format!("({kw} (({sym} {s})) {b})"), Type::Bool)
            }
            Term::Builtin(b, args) => self.builtin(*b, args, st, vars)?,
        })
    }

    fn terms(&mut self, ts: &[Term], st: &State, vars: &[(String, String, Type)]) -> Result<Vec<String>, VerifyError> {
        ts.iter().map(|t| self.term(t, st, vars).map(|r| r.0)).collect()
    }

    fn builtin(
        &mut self,
        b: Builtin,
        args: &[Term],
        st: &State,
        vars: &[(String, String, Type)],
    ) -> Result<(String, Type), VerifyError> {
        if b == Builtin::Filter {
            let (s, sty) = self.term(&args[0], st, vars)?;
            let elem = element(&sty).ok_or_else(|| self.unsupported("filter of a non-set"))?;
            let Term::Lambda(x, body) = &args[1] else {
                return Err(self.unsupported("filter with a non-literal function"));
            };
            let es = self.sort(&elem)?;
            let mut inner = vars.to_vec();
            let sym = format!("f_{x}");
            inner.push((x.clone(), sym.clone(), elem.clone()));
            let (cond, _) = self.term(body, st, &inner)?;
            return Ok((
                format!("(lambda (({sym} {es})) (and (select {s} {sym}) {cond}))"),
                Type::set(elem),
            ));
        }
        let mut parts = Vec::new();
        let mut types = Vec::new();
        for a in args {
            let (e, t) = self.term(a, st, vars)?;
            parts.push(e);
            types.push(t);
        }
        let set_of = |k: usize| Type::set(element(&types[k]).unwrap_or(Type::Bool));
        Ok(match b {
            Builtin::ToSet => (parts[0].clone(), set_of(0)),
            Builtin::Union | Builtin::Intersect | Builtin::Diff => {
                let elem = element(&types[0]).ok_or_else(|| self.unsupported("set operation"))?;
                let es = self.sort(&elem)?;
                let body = match b {
                    Builtin::Union => format!("(or (select {} x) (select {} x))", parts[0], parts[1]),
                    Builtin::Intersect => format!("(and (select {} x) (select {} x))", parts[0], parts[1]),
                    _ => format!("(and (select {} x) (not (select {} x)))", parts[0], parts[1]),
                };
                (format!("(lambda ((x {es})) {body})"), types[0].clone())
            }
            Builtin::Add => (format!("(store {} {} true)", parts[0], parts[1]), types[0].clone()),
            Builtin::Remove => (format!("(store {} {} false)", parts[0], parts[1]), types[0].clone()),
            Builtin::Contains => (format!("(select {} {})", parts[0], parts[1]), Type::Bool),
            Builtin::Size => {
                let elem = element(&types[0]).ok_or_else(|| self.unsupported("size"))?;
                let es = self.sort(&elem)?;
                let f = format!("card_{}", sanitize(&es));
                self.card.insert(es, f.clone());
                (format!("({f} {})", parts[0]), Type::Int)
            }
            Builtin::IsEmpty => {
                let s = self.sort(&set_of(0))?;
                (format!("(= {} ((as const {s}) false))", parts[0]), Type::Bool)
            }
            Builtin::GetStart => (format!("(Appointment.start {})", parts[0]), Type::Int),
            Builtin::GetEnd => (format!("(Appointment.end {})", parts[0]), Type::Int),
            Builtin::Days => (format!("(days {})", parts[0]), Type::Int),
            Builtin::SumDays => {
                self.sum_days = true;
                (format!("(sumDays {})", parts[0]), Type::Int)
            }
            Builtin::Inc => (format!("(+ {} {})", parts[0], parts[1]), types[0].clone()),
            Builtin::Dec => (format!("(- {} {})", parts[0], parts[1]), types[0].clone()),
            Builtin::Get => (parts[0].clone(), value_type(&types[0])),
            Builtin::Set => (parts[1].clone(), types[0].clone()),
            Builtin::MakeSet | Builtin::MakeAWSet if !parts.is_empty() => {
                let es = self.sort(&types[0])?;
                let mut e = format!("((as const (Array {es} Bool)) false)");
                for x in &parts {
                    e = format!("(store {e} {x} true)");
                }
                let ty = if b == Builtin::MakeSet {
                    Type::set(types[0].clone())
                } else {
                    Type::crdt(CrdtKind::AWSet, types[0].clone())
                };
                (e, ty)
            }
            Builtin::MakeCounter => (parts.first().cloned().unwrap_or_else(|| "0".into()), Type::crdt(CrdtKind::PNCounter, Type::Int)),
            Builtin::MakeLww => (parts[0].clone(), Type::crdt(CrdtKind::LWWRegister, types[0].clone())),
            other => return Err(self.unsupported(format!("builtin {}", other.name()))),
        })
    }
}

fn and(parts: Vec<String>) -> String {
    let parts: Vec<String> = parts.into_iter().filter(|p| p != "true").collect();
    match parts.len() {
        0 => "true".into(),
        1 => parts.into_iter().next().unwrap(),
        _ => format!("(and {})", parts.join(" ")),
    }
}

fn element(t: &Type) -> Option<Type> {
    match t {
        Type::Set(e) | Type::Crdt(CrdtKind::AWSet, e) => Some((**e).clone()),
        _ => None,
    }
}

/// Type of the value a replicated type shows to readers.
fn value_type(t: &Type) -> Type {
    match t {
        Type::Crdt(CrdtKind::AWSet, e) => Type::Set(e.clone()),
        Type::Crdt(CrdtKind::PNCounter, _) => Type::Int,
        Type::Crdt(CrdtKind::LWWRegister, e) => (**e).clone(),
        other => other.clone(),
    }
}

fn tuple_name(items: &[Type]) -> String {
    if items.is_empty() {
        return "Unit".into();
    }
    let parts: Vec<String> = items.iter().map(|t| sanitize(&plain_sort(t))).collect();
    format!("Tuple_{}", parts.join("_"))
}

/// Sort name without registering tuple datatypes; used for field sorts.
fn plain_sort(t: &Type) -> String {
    match t {
        Type::Bool => "Bool".into(),
        Type::Int => "Int".into(),
        Type::Str => "String".into(),
        Type::Record(n) => n.clone(),
        Type::Tuple(items) => tuple_name(items),
        Type::Set(e) | Type::Crdt(CrdtKind::AWSet, e) => format!("(Array {} Bool)", plain_sort(e)),
        Type::Crdt(CrdtKind::PNCounter, _) => "Int".into(),
        Type::Crdt(CrdtKind::LWWRegister, e) => plain_sort(e),
        Type::Fun(..) => "Fun".into(),
    }
}

fn sanitize(s: &str) -> String {
    s.chars().filter(|c| c.is_ascii_alphanumeric() || *c == '_').collect()
}

fn datum(d: &Datum) -> String {
    match d {
        Datum::Bool(b) => b.to_string(),
        Datum::Int(i) if *i < 0 => format!("(- {})", i.unsigned_abs()),
        Datum::Int(i) => i.to_string(),
        Datum::Str(s) => format!("\"{}\"", s.replace('"', "\"\"")),
        Datum::Record { ty, fields } => {
            let parts: Vec<String> = fields.iter().map(datum).collect();
            format!("(mk-{ty} {})", parts.join(" "))
        }
        Datum::Tuple(items) if items.is_empty() => "mk-Unit".into(),
        Datum::Tuple(items) => {
            let types: Vec<Type> = items.iter().map(datum_type).collect();
            let parts: Vec<String> = items.iter().map(datum).collect();
            format!("(mk-{} {})", tuple_name(&types), parts.join(" "))
        }
    }
}

fn datum_type(d: &Datum) -> Type {
    match d {
        Datum::Bool(_) => Type::Bool,
        Datum::Int(_) => Type::Int,
        Datum::Str(_) => Type::Str,
        Datum::Record { ty, .. } => Type::Record(ty.clone()),
        Datum::Tuple(items) => Type::Tuple(items.iter().map(datum_type).collect()),
    }
}
