//! Big-step evaluation of terms and formulas against a source store.
//!
//! Reading a source yields its replicated value; reading a derived
//! re-evaluates its body under the same store. Within one [`EvalCtx`] the
//! store is fixed, so derived values are memoized per context.

mod interaction;
mod store;
mod value;

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use thiserror::Error;

use crate::crdt::{AWSet, CrdtError, Datum, LwwRegister, MergeValue, PNCounter, ReplicaId};
use crate::program::{datum_has_type, Builtin, CheckedProgram, RecordDef, Term, Type};
use crate::syntax::ast::{BinOp, Quantifier};

pub use interaction::{apply_interaction, check_argument, Outcome};
pub use store::{merge_store, update_store, Store};
pub use value::{Closure, Env, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("evaluation stuck: {0}")]
    Stuck(String),
    #[error("unknown reactive `{0}`")]
    UnknownReactive(String),
    #[error("no universe for quantified type {0}")]
    UniverseMissing(Type),
    #[error("integer overflow")]
    Overflow,
    #[error("division by zero")]
    DivisionByZero,
    #[error(transparent)]
    Crdt(#[from] CrdtError),
    #[error("stores have different domains ({left} and {right} sources)")]
    DomainMismatch { left: usize, right: usize },
    #[error("`{0}` is not an executable interaction")]
    NotExecutable(String),
    #[error("argument {arg} does not have type {expected}")]
    ArgumentType { arg: Datum, expected: Type },
}

/// Domains for quantified variables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum Universe {
    /// Every datum of the quantified type occurring in a source value, in a
    /// quantifier-free derived value, or in the interaction argument.
    #[default]
    ActiveDomain,
    /// Fixed finite domains; quantifying over a type without an entry is an
    /// error.
    Explicit(BTreeMap<Type, Vec<Datum>>),
}

/// Evaluation context: the program, the store all reactive reads refer to,
/// and the replica that stamps any CRDT operation.
pub struct EvalCtx<'a> {
    pub program: &'a CheckedProgram,
    pub store: &'a Store,
    pub actor: ReplicaId,
    pub universe: Universe,
    pub arg: Option<Datum>,
    derived_memo: RefCell<HashMap<usize, Value>>,
    domain_memo: RefCell<HashMap<Type, Arc<Vec<Datum>>>>,
}

impl<'a> EvalCtx<'a> {
    pub fn new(program: &'a CheckedProgram, store: &'a Store) -> Self {
        EvalCtx {
            program,
            store,
            actor: ReplicaId(0),
            universe: Universe::ActiveDomain,
            arg: None,
            derived_memo: RefCell::new(HashMap::new()),
            domain_memo: RefCell::new(HashMap::new()),
        }
    }

    pub fn with_actor(mut self, actor: ReplicaId) -> Self {
        self.actor = actor;
        self
    }

    pub fn with_universe(mut self, universe: Universe) -> Self {
        self.universe = universe;
        self
    }

    pub fn with_arg(mut self, arg: Option<Datum>) -> Self {
        self.arg = arg;
        self
    }

    pub fn eval(&self, t: &Term, env: &Env) -> Result<Value, EvalError> {
        match t {
            Term::Const(d) => Ok(Value::Data(d.clone())),
            Term::Var(x) => env
                .lookup(x)
                .cloned()
                .ok_or_else(|| EvalError::Stuck(format!("unbound variable `{x}`"))),
            Term::Source(i) => self
                .store
                .get(*i)
                .cloned()
                .map(Value::Crdt)
                .ok_or_else(|| EvalError::UnknownReactive(format!("source #{i}"))),
            Term::Derived(i) => self.derived(*i),
            Term::Lambda(x, body) => Ok(Value::Closure(Arc::new(Closure {
                param: x.clone(),
                body: body.clone(),
                env: env.clone(),
            }))),
            Term::Apply(f, a) => {
                let f = self.eval(f, env)?;
                let a = self.eval(a, env)?;
                self.apply(&f, a)
            }
            Term::Builtin(b, args) => self.builtin(*b, args, env),
            Term::Record(name, args) => {
                let fields = args
                    .iter()
                    .map(|a| self.eval(a, env)?.into_datum())
                    .collect::<Result<_, _>>()?;
                Ok(Value::Data(Datum::record(name.clone(), fields)))
            }
            Term::Field(t, k) => match self.eval(t, env)? {
                Value::Data(Datum::Record { fields: items, .. }) | Value::Data(Datum::Tuple(items)) => items
                    .get(*k)
                    .cloned()
                    .map(Value::Data)
                    .ok_or_else(|| EvalError::Stuck(format!("no component {k}"))),
                Value::Tuple(items) => items
                    .get(*k)
                    .cloned()
                    .ok_or_else(|| EvalError::Stuck(format!("no component {k}"))),
                v => Err(EvalError::Stuck(format!("field access on {v}"))),
            },
            Term::Tuple(items) => Ok(Value::tuple(
                items.iter().map(|i| self.eval(i, env)).collect::<Result<_, _>>()?,
            )),
            Term::Not(t) => Ok(Value::bool(!self.eval_bool(t, env)?)),
            Term::Neg(t) => {
                let i = self.eval_int(t, env)?;
                Ok(Value::int(i.checked_neg().ok_or(EvalError::Overflow)?))
            }
            Term::Binary(op, l, r) => self.binary(*op, l, r, env),
            Term::Quant(q, x, ty, body) => {
                let domain = self.domain(ty)?;
                for d in domain.iter() {
                    let holds = self.eval_bool(body, &env.bind(x, Value::Data(d.clone())))?;
                    match q {
                        Quantifier::Forall if !holds => return Ok(Value::bool(false)),
                        Quantifier::Exists if holds => return Ok(Value::bool(true)),
                        _ => {}
                    }
                }
                Ok(Value::bool(*q == Quantifier::Forall))
            }
        }
    }

    pub fn eval_bool(&self, t: &Term, env: &Env) -> Result<bool, EvalError> {
        match self.eval(t, env)? {
            Value::Data(Datum::Bool(b)) => Ok(b),
            v => Err(EvalError::Stuck(format!("expected a boolean, found {v}"))),
        }
    }

    pub fn eval_int(&self, t: &Term, env: &Env) -> Result<i64, EvalError> {
        match self.eval(t, env)? {
            Value::Data(Datum::Int(i)) => Ok(i),
            v => Err(EvalError::Stuck(format!("expected an integer, found {v}"))),
        }
    }

    pub fn derived(&self, i: usize) -> Result<Value, EvalError> {
        if let Some(v) = self.derived_memo.borrow().get(&i) {
            return Ok(v.clone());
        }
        let d = self
            .program
            .deriveds
            .get(i)
            .ok_or_else(|| EvalError::UnknownReactive(format!("derived #{i}")))?;
        let v = self.eval(&d.body, &Env::empty())?;
        self.derived_memo.borrow_mut().insert(i, v.clone());
        Ok(v)
    }

    pub fn apply(&self, f: &Value, arg: Value) -> Result<Value, EvalError> {
        match f {
            Value::Closure(c) => self.eval(&c.body, &c.env.bind(&c.param, arg)),
            v => Err(EvalError::Stuck(format!("cannot apply {v}"))),
        }
    }

    fn domain(&self, ty: &Type) -> Result<Arc<Vec<Datum>>, EvalError> {
        if let Some(d) = self.domain_memo.borrow().get(ty) {
            return Ok(d.clone());
        }
        let d = match &self.universe {
            Universe::Explicit(map) => Arc::new(
                map.get(ty)
                    .cloned()
                    .ok_or_else(|| EvalError::UniverseMissing(ty.clone()))?,
            ),
            Universe::ActiveDomain => Arc::new(self.active_domain(ty)?.into_iter().collect()),
        };
        self.domain_memo.borrow_mut().insert(ty.clone(), d.clone());
        Ok(d)
    }

    fn active_domain(&self, ty: &Type) -> Result<BTreeSet<Datum>, EvalError> {
        let mut out = BTreeSet::new();
        let mut take = |d: &Datum| {
            d.walk(&mut |x| {
                if datum_has_type(x, ty) {
                    out.insert(x.clone());
                }
            })
        };
        for v in self.store.values() {
            match v {
                MergeValue::AWSet(s) => s.elements().for_each(&mut take),
                MergeValue::LWWRegister(r) => take(r.value()),
                MergeValue::PNCounter(_) => {}
            }
        }
        if let Some(a) = &self.arg {
            take(a);
        }
        for (i, d) in self.program.deriveds.iter().enumerate() {
            if d.quantifier_free {
                self.derived(i)?.for_each_datum(&mut take);
            }
        }
        Ok(out)
    }

    fn binary(&self, op: BinOp, l: &Term, r: &Term, env: &Env) -> Result<Value, EvalError> {
        let int_op = |f: fn(i64, i64) -> Option<i64>| -> Result<Value, EvalError> {
            let a = self.eval_int(l, env)?;
            let b = self.eval_int(r, env)?;
            f(a, b).map(Value::int).ok_or(EvalError::Overflow)
        };
        let cmp = |f: fn(&i64, &i64) -> bool| -> Result<Value, EvalError> {
            let a = self.eval_int(l, env)?;
            let b = self.eval_int(r, env)?;
            Ok(Value::bool(f(&a, &b)))
        };
        match op {
            BinOp::And => Ok(Value::bool(self.eval_bool(l, env)? && self.eval_bool(r, env)?)),
            BinOp::Or => Ok(Value::bool(self.eval_bool(l, env)? || self.eval_bool(r, env)?)),
            BinOp::Implies => Ok(Value::bool(!self.eval_bool(l, env)? || self.eval_bool(r, env)?)),
            BinOp::Iff => Ok(Value::bool(self.eval_bool(l, env)? == self.eval_bool(r, env)?)),
            BinOp::Add => int_op(i64::checked_add),
            BinOp::Sub => int_op(i64::checked_sub),
            BinOp::Mul => int_op(i64::checked_mul),
            BinOp::Div | BinOp::Mod => {
                let a = self.eval_int(l, env)?;
                let b = self.eval_int(r, env)?;
                if b == 0 {
                    return Err(EvalError::DivisionByZero);
                }
                let v = if op == BinOp::Div { a.checked_div(b) } else { a.checked_rem(b) };
                v.map(Value::int).ok_or(EvalError::Overflow)
            }
            BinOp::Lt => cmp(i64::lt),
            BinOp::Le => cmp(i64::le),
            BinOp::Gt => cmp(i64::gt),
            BinOp::Ge => cmp(i64::ge),
            BinOp::Eq | BinOp::Ne => {
                let a = self.eval(l, env)?;
                let b = self.eval(r, env)?;
                if matches!(a, Value::Closure(_)) || matches!(b, Value::Closure(_)) {
                    return Err(EvalError::Stuck("comparison of functions".into()));
                }
                Ok(Value::bool((a == b) == (op == BinOp::Eq)))
            }
            BinOp::In => {
                let x = self.eval(l, env)?.into_datum()?;
                let s = self.eval(r, env)?;
                Ok(Value::bool(contains(&s, &x)?))
            }
        }
    }

    fn builtin(&self, b: Builtin, args: &[Term], env: &Env) -> Result<Value, EvalError> {
        let vals = args
            .iter()
            .map(|a| self.eval(a, env))
            .collect::<Result<Vec<_>, _>>()?;
        let stuck = || EvalError::Stuck(format!("bad arguments to `{}`", b.name()));
        let arg = |k: usize| vals.get(k).ok_or_else(stuck);
        match b {
            Builtin::ToSet => Ok(Value::Set(as_set(arg(0)?)?)),
            Builtin::Union | Builtin::Intersect | Builtin::Diff => {
                let x = as_set(arg(0)?)?;
                let y = as_set(arg(1)?)?;
                Ok(Value::Set(match b {
                    Builtin::Union => x.union(&y).cloned().collect(),
                    Builtin::Intersect => x.intersection(&y).cloned().collect(),
                    _ => x.difference(&y).cloned().collect(),
                }))
            }
            Builtin::Add | Builtin::Remove => {
                let e = arg(1)?.clone().into_datum()?;
                match arg(0)? {
                    Value::Crdt(MergeValue::AWSet(s)) => {
                        let mut s = s.clone();
                        if b == Builtin::Add {
                            s.add(e, self.actor);
                        } else {
                            s.remove(&e);
                        }
                        Ok(Value::Crdt(MergeValue::AWSet(s)))
                    }
                    Value::Set(s) => {
                        let mut s = s.clone();
                        if b == Builtin::Add {
                            s.insert(e);
                        } else {
                            s.remove(&e);
                        }
                        Ok(Value::Set(s))
                    }
                    _ => Err(stuck()),
                }
            }
            Builtin::Contains => {
                let e = arg(1)?.clone().into_datum()?;
                Ok(Value::bool(contains(arg(0)?, &e)?))
            }
            Builtin::Size => Ok(Value::int(as_set(arg(0)?)?.len() as i64)),
            Builtin::IsEmpty => Ok(Value::bool(as_set(arg(0)?)?.is_empty())),
            Builtin::GetStart | Builtin::GetEnd | Builtin::Days => {
                let (start, end) = appointment_span(arg(0)?)?;
                Ok(Value::int(match b {
                    Builtin::GetStart => start,
                    Builtin::GetEnd => end,
                    _ => end.checked_sub(start).ok_or(EvalError::Overflow)?,
                }))
            }
            Builtin::SumDays => {
                let mut total: i64 = 0;
                for a in as_set(arg(0)?)? {
                    let (start, end) = appointment_span(&Value::Data(a))?;
                    let days = end.checked_sub(start).ok_or(EvalError::Overflow)?;
                    total = total.checked_add(days).ok_or(EvalError::Overflow)?;
                }
                Ok(Value::int(total))
            }
            Builtin::SumBy => {
                let f = arg(1)?;
                let mut total: i64 = 0;
                for x in as_set(arg(0)?)? {
                    let v = match self.apply(f, Value::Data(x))? {
                        Value::Data(Datum::Int(i)) => i,
                        _ => return Err(stuck()),
                    };
                    total = total.checked_add(v).ok_or(EvalError::Overflow)?;
                }
                Ok(Value::int(total))
            }
            Builtin::Map => {
                let f = arg(1)?;
                let mut out = BTreeSet::new();
                for x in as_set(arg(0)?)? {
                    out.insert(self.apply(f, Value::Data(x))?.into_datum()?);
                }
                Ok(Value::Set(out))
            }
            Builtin::Filter => {
                let f = arg(1)?;
                let mut out = BTreeSet::new();
                for x in as_set(arg(0)?)? {
                    match self.apply(f, Value::Data(x.clone()))? {
                        Value::Data(Datum::Bool(true)) => {
                            out.insert(x);
                        }
                        Value::Data(Datum::Bool(false)) => {}
                        _ => return Err(stuck()),
                    }
                }
                Ok(Value::Set(out))
            }
            Builtin::Inc | Builtin::Dec => {
                let Value::Crdt(MergeValue::PNCounter(c)) = arg(0)? else {
                    return Err(stuck());
                };
                let Value::Data(Datum::Int(n)) = arg(1)? else {
                    return Err(stuck());
                };
                let up = (b == Builtin::Inc) == (*n >= 0);
                let amount = n.checked_abs().ok_or(EvalError::Overflow)?;
                let mut c = c.clone();
                if up {
                    c.increment(self.actor, amount)?;
                } else {
                    c.decrement(self.actor, amount)?;
                }
                Ok(Value::Crdt(MergeValue::PNCounter(c)))
            }
            Builtin::Get => match arg(0)? {
                Value::Crdt(MergeValue::PNCounter(c)) => Ok(Value::int(c.value())),
                Value::Crdt(MergeValue::LWWRegister(r)) => Ok(Value::Data(r.value().clone())),
                _ => Err(stuck()),
            },
            Builtin::Set => {
                let Value::Crdt(MergeValue::LWWRegister(r)) = arg(0)? else {
                    return Err(stuck());
                };
                let mut r = r.clone();
                r.set(arg(1)?.clone().into_datum()?, self.actor);
                Ok(Value::Crdt(MergeValue::LWWRegister(r)))
            }
            Builtin::MakeSet => Ok(Value::Set(
                vals.into_iter().map(Value::into_datum).collect::<Result<_, _>>()?,
            )),
            Builtin::MakeAWSet => {
                let mut s = AWSet::new();
                for v in vals {
                    s.add(v.into_datum()?, ReplicaId(0));
                }
                Ok(Value::Crdt(MergeValue::AWSet(s)))
            }
            Builtin::MakeCounter => {
                let mut c = PNCounter::new();
                if let Some(Value::Data(Datum::Int(n))) = vals.first() {
                    if *n >= 0 {
                        c.increment(ReplicaId(0), *n)?;
                    } else {
                        c.decrement(ReplicaId(0), n.checked_abs().ok_or(EvalError::Overflow)?)?;
                    }
                }
                Ok(Value::Crdt(MergeValue::PNCounter(c)))
            }
            Builtin::MakeLww => Ok(Value::Crdt(MergeValue::LWWRegister(LwwRegister::new(
                arg(0)?.clone().into_datum()?,
            )))),
        }
    }
}

fn as_set(v: &Value) -> Result<BTreeSet<Datum>, EvalError> {
    match v {
        Value::Set(s) => Ok(s.clone()),
        Value::Crdt(MergeValue::AWSet(s)) => Ok(s.element_set()),
        v => Err(EvalError::Stuck(format!("expected a set, found {v}"))),
    }
}

fn contains(s: &Value, x: &Datum) -> Result<bool, EvalError> {
    match s {
        Value::Set(s) => Ok(s.contains(x)),
        Value::Crdt(MergeValue::AWSet(s)) => Ok(s.contains(x)),
        v => Err(EvalError::Stuck(format!("membership test on {v}"))),
    }
}

fn appointment_span(v: &Value) -> Result<(i64, i64), EvalError> {
    match v {
        Value::Data(Datum::Record { ty, fields }) if ty == crate::program::APPOINTMENT => {
            match (fields.get(1), fields.get(2)) {
                (Some(Datum::Int(s)), Some(Datum::Int(e))) => Ok((*s, *e)),
                _ => Err(EvalError::Stuck("malformed appointment".into())),
            }
        }
        v => Err(EvalError::Stuck(format!("expected an appointment, found {v}"))),
    }
}

/// Evaluate a closed term that reads no reactives (initial values).
pub fn eval_closed(records: &BTreeMap<String, RecordDef>, t: &Term) -> Result<Value, EvalError> {
    let program = CheckedProgram {
        records: records.clone(),
        sources: Vec::new(),
        deriveds: Vec::new(),
        derived_order: Vec::new(),
        interactions: Vec::new(),
        templates: Vec::new(),
        invariants: Vec::new(),
        surface: Default::default(),
    };
    let store = Store::new(Vec::new());
    EvalCtx::new(&program, &store).eval(t, &Env::empty())
}

/// Evaluate a term under `store` with the active-domain universe.
pub fn eval_term(p: &CheckedProgram, t: &Term, store: &Store, env: &Env) -> Result<Value, EvalError> {
    EvalCtx::new(p, store).eval(t, env)
}

/// Evaluate a formula with quantifiers ranging over `universe`.
pub fn eval_logic(
    p: &CheckedProgram,
    l: &Term,
    store: &Store,
    env: &Env,
    universe: &Universe,
) -> Result<bool, EvalError> {
    EvalCtx::new(p, store).with_universe(universe.clone()).eval_bool(l, env)
}

/// Evaluate a derived reactive by name.
pub fn read_derived(p: &CheckedProgram, name: &str, store: &Store) -> Result<Value, EvalError> {
    let i = p
        .derived_index(name)
        .ok_or_else(|| EvalError::UnknownReactive(name.to_string()))?;
    EvalCtx::new(p, store).derived(i)
}

/// Ids of the invariants that do not hold in `store`.
pub fn violated_invariants(p: &CheckedProgram, store: &Store) -> Result<Vec<usize>, EvalError> {
    let ctx = EvalCtx::new(p, store);
    let mut out = Vec::new();
    for inv in &p.invariants {
        if !ctx.eval_bool(&inv.formula, &Env::empty())? {
            out.push(inv.id);
        }
    }
    Ok(out)
}

/// Validity of a single store: every invariant holds.
pub fn is_valid(p: &CheckedProgram, store: &Store) -> Result<bool, EvalError> {
    Ok(violated_invariants(p, store)?.is_empty())
}
