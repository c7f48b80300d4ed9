//! Checked programs: resolved names, monomorphic types and the term
//! language shared by evaluation, graph analysis and verification.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::crdt::{CrdtKind, Datum, MergeValue};
use crate::syntax::ast::{BinOp, Quantifier};
use crate::syntax::{Pos, Program};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Type {
    Bool,
    Int,
    Str,
    Record(String),
    Tuple(Vec<Type>),
    Set(Box<Type>),
    /// A replicated value; the element type of a counter is `Int`.
    Crdt(CrdtKind, Box<Type>),
    Fun(Box<Type>, Box<Type>),
}

impl Type {
    pub fn unit() -> Type {
        Type::Tuple(Vec::new())
    }

    pub fn set(t: Type) -> Type {
        Type::Set(Box::new(t))
    }

    pub fn crdt(kind: CrdtKind, t: Type) -> Type {
        Type::Crdt(kind, Box::new(t))
    }

    pub fn fun(a: Type, b: Type) -> Type {
        Type::Fun(Box::new(a), Box::new(b))
    }

    /// Types whose values are plain data ([`Datum`]).
    pub fn is_first_order(&self) -> bool {
        match self {
            Type::Bool | Type::Int | Type::Str | Type::Record(_) => true,
            Type::Tuple(items) => items.iter().all(Type::is_first_order),
            _ => false,
        }
    }

    /// Element type of a set or set-like replicated value.
    pub fn element(&self) -> Option<&Type> {
        match self {
            Type::Set(t) | Type::Crdt(CrdtKind::AWSet, t) => Some(t),
            _ => None,
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Bool => f.write_str("Bool"),
            Type::Int => f.write_str("Int"),
            Type::Str => f.write_str("String"),
            Type::Record(n) => f.write_str(n),
            Type::Tuple(items) if items.is_empty() => f.write_str("Unit"),
            Type::Tuple(items) => {
                f.write_str("(")?;
                for (i, t) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{t}")?;
                }
                f.write_str(")")
            }
            Type::Set(t) => write!(f, "Set[{t}]"),
            Type::Crdt(CrdtKind::PNCounter, _) => f.write_str("PNCounter"),
            Type::Crdt(k, t) => write!(f, "{k}[{t}]"),
            Type::Fun(a, b) => write!(f, "({a} -> {b})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordDef {
    pub name: String,
    pub fields: Vec<(String, Type)>,
}

impl RecordDef {
    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|(f, _)| f == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Builtin {
    ToSet,
    Union,
    Intersect,
    Diff,
    Add,
    Remove,
    Contains,
    Size,
    IsEmpty,
    GetStart,
    GetEnd,
    Days,
    SumDays,
    SumBy,
    Map,
    Filter,
    Inc,
    Dec,
    Get,
    Set,
    MakeSet,
    MakeAWSet,
    MakeCounter,
    MakeLww,
}

impl Builtin {
    pub fn name(self) -> &'static str {
        match self {
            Builtin::ToSet => "toSet",
            Builtin::Union => "union",
            Builtin::Intersect => "intersect",
            Builtin::Diff => "diff",
            Builtin::Add => "add",
            Builtin::Remove => "remove",
            Builtin::Contains => "contains",
            Builtin::Size => "size",
            Builtin::IsEmpty => "isEmpty",
            Builtin::GetStart => "get_start",
            Builtin::GetEnd => "get_end",
            Builtin::Days => "days",
            Builtin::SumDays => "sumDays",
            Builtin::SumBy => "sumBy",
            Builtin::Map => "map",
            Builtin::Filter => "filter",
            Builtin::Inc => "inc",
            Builtin::Dec => "dec",
            Builtin::Get => "get",
            Builtin::Set => "set",
            Builtin::MakeSet => "Set",
            Builtin::MakeAWSet => "AWSet",
            Builtin::MakeCounter => "PNCounter",
            Builtin::MakeLww => "LWWRegister",
        }
    }

    /// Builtins callable by name, either as `f(x, ...)` or `x.f(...)`.
    pub fn by_name(name: &str) -> Option<Builtin> {
        Some(match name {
            "toSet" => Builtin::ToSet,
            "union" => Builtin::Union,
            "intersect" => Builtin::Intersect,
            "diff" => Builtin::Diff,
            "add" => Builtin::Add,
            "remove" => Builtin::Remove,
            "contains" => Builtin::Contains,
            "size" => Builtin::Size,
            "isEmpty" => Builtin::IsEmpty,
            "get_start" => Builtin::GetStart,
            "get_end" => Builtin::GetEnd,
            "days" => Builtin::Days,
            "sumDays" => Builtin::SumDays,
            "sumBy" => Builtin::SumBy,
            "map" => Builtin::Map,
            "filter" => Builtin::Filter,
            "inc" => Builtin::Inc,
            "dec" => Builtin::Dec,
            "get" => Builtin::Get,
            "set" => Builtin::Set,
            "Set" => Builtin::MakeSet,
            "AWSet" => Builtin::MakeAWSet,
            "PNCounter" => Builtin::MakeCounter,
            "LWWRegister" => Builtin::MakeLww,
            _ => return None,
        })
    }
}

/// Resolved term. Logic formulas are terms of type `Bool`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Const(Datum),
    Var(String),
    /// Read of a source reactive, by index into [`CheckedProgram::sources`].
    Source(usize),
    /// Read of a derived reactive, by index into [`CheckedProgram::deriveds`].
    Derived(usize),
    Lambda(String, Arc<Term>),
    Apply(Box<Term>, Box<Term>),
    Builtin(Builtin, Vec<Term>),
    Record(String, Vec<Term>),
    /// Record field or tuple component.
    Field(Box<Term>, usize),
    Tuple(Vec<Term>),
    Not(Box<Term>),
    Neg(Box<Term>),
    Binary(BinOp, Box<Term>, Box<Term>),
    Quant(Quantifier, String, Type, Box<Term>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReactiveRef {
    Source(usize),
    Derived(usize),
}

impl Term {
    pub fn boxed(self) -> Box<Term> {
        Box::new(self)
    }

    pub fn children(&self) -> Vec<&Term> {
        match self {
            Term::Const(_) | Term::Var(_) | Term::Source(_) | Term::Derived(_) => Vec::new(),
            Term::Lambda(_, b) => vec![&**b],
            Term::Apply(f, a) => vec![&**f, &**a],
            Term::Builtin(_, args) | Term::Record(_, args) | Term::Tuple(args) => args.iter().collect(),
            Term::Field(t, _) | Term::Not(t) | Term::Neg(t) | Term::Quant(_, _, _, t) => vec![&**t],
            Term::Binary(_, l, r) => vec![&**l, &**r],
        }
    }

    /// Reactives read directly by this term (no inlining of derived bodies).
    pub fn reads(&self) -> BTreeSet<ReactiveRef> {
        let mut out = BTreeSet::new();
        self.collect_reads(&mut out);
        out
    }

    fn collect_reads(&self, out: &mut BTreeSet<ReactiveRef>) {
        match self {
            Term::Source(i) => {
                out.insert(ReactiveRef::Source(*i));
            }
            Term::Derived(i) => {
                out.insert(ReactiveRef::Derived(*i));
            }
            _ => {
                for c in self.children() {
                    c.collect_reads(out);
                }
            }
        }
    }

    pub fn has_quantifier(&self) -> bool {
        matches!(self, Term::Quant(..)) || self.children().into_iter().any(Term::has_quantifier)
    }

    pub fn has_lambda(&self) -> bool {
        matches!(self, Term::Lambda(..)) || self.children().into_iter().any(Term::has_lambda)
    }
}

/// A clause with its curried parameters peeled off: the modified reactives'
/// values in `modifies` order, then the argument.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clause {
    pub params: Vec<String>,
    pub body: Term,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceDef {
    pub pos: Pos,
    pub name: String,
    pub ty: Type,
    pub init: MergeValue,
}

impl SourceDef {
    pub fn kind(&self) -> CrdtKind {
        match &self.ty {
            Type::Crdt(k, _) => *k,
            _ => unreachable!("sources are checked to be replicated values"),
        }
    }

    pub fn element_type(&self) -> &Type {
        match &self.ty {
            Type::Crdt(_, t) => t,
            _ => unreachable!("sources are checked to be replicated values"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivedDef {
    pub pos: Pos,
    pub name: String,
    pub ty: Type,
    pub body: Term,
    /// True when neither the body nor any derived it reads contains a
    /// quantifier; only such deriveds feed active-domain universes.
    pub quantifier_free: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionDef {
    pub pos: Pos,
    pub name: String,
    /// Source indices, in declaration order of the `modifies` clause.
    pub modifies: Vec<usize>,
    pub arg_type: Type,
    pub requires: Vec<Clause>,
    pub executes: Clause,
    pub ensures: Vec<Clause>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvariantDef {
    pub pos: Pos,
    pub id: usize,
    pub formula: Term,
}

/// A program that passed name resolution, cycle detection and type checking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckedProgram {
    pub records: BTreeMap<String, RecordDef>,
    pub sources: Vec<SourceDef>,
    pub deriveds: Vec<DerivedDef>,
    /// Derived indices in dependency order.
    pub derived_order: Vec<usize>,
    /// Executable (complete) interactions.
    pub interactions: Vec<InteractionDef>,
    /// Names of partial interactions, kept as templates only.
    pub templates: Vec<String>,
    pub invariants: Vec<InvariantDef>,
    pub surface: Program,
}

impl CheckedProgram {
    pub fn source_index(&self, name: &str) -> Option<usize> {
        self.sources.iter().position(|s| s.name == name)
    }

    pub fn derived_index(&self, name: &str) -> Option<usize> {
        self.deriveds.iter().position(|d| d.name == name)
    }

    pub fn interaction_index(&self, name: &str) -> Option<usize> {
        self.interactions.iter().position(|i| i.name == name)
    }

    pub fn interaction(&self, name: &str) -> Option<&InteractionDef> {
        self.interactions.iter().find(|i| i.name == name)
    }

    pub fn is_template(&self, name: &str) -> bool {
        self.templates.iter().any(|t| t == name)
    }

    pub fn reactive_name(&self, r: ReactiveRef) -> &str {
        match r {
            ReactiveRef::Source(i) => &self.sources[i].name,
            ReactiveRef::Derived(i) => &self.deriveds[i].name,
        }
    }

    pub fn initial_store(&self) -> crate::eval::Store {
        crate::eval::Store::new(self.sources.iter().map(|s| s.init.clone()).collect())
    }
}

/// Does `d` inhabit the first-order type `t`?
pub fn datum_has_type(d: &Datum, t: &Type) -> bool {
    match (d, t) {
        (Datum::Bool(_), Type::Bool) | (Datum::Int(_), Type::Int) | (Datum::Str(_), Type::Str) => true,
        (Datum::Record { ty, .. }, Type::Record(n)) => ty == n,
        (Datum::Tuple(items), Type::Tuple(ts)) => {
            items.len() == ts.len() && items.iter().zip(ts).all(|(d, t)| datum_has_type(d, t))
        }
        _ => false,
    }
}

pub const APPOINTMENT: &str = "Appointment";

pub fn appointment(id: i64, start: i64, end: i64) -> Datum {
    Datum::record(APPOINTMENT, vec![Datum::Int(id), Datum::Int(start), Datum::Int(end)])
}
