//! Name resolution, derived-cycle detection and monomorphic type checking.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use super::ast::{self, BinOp, Expr, TypeDef, TypeExpr, UnOp};
use super::{Error, Pos};
use crate::crdt::{CrdtKind, Datum};
use crate::eval::{self, Value};
use crate::program::*;

pub fn resolve_and_check(p: &ast::Program) -> Result<CheckedProgram, Error> {
    let mut c = Checker {
        surface: p,
        records: BTreeMap::new(),
        aliases: HashMap::new(),
        sources: Vec::new(),
        derived_types: vec![None; p.deriveds.len()],
        pos: Pos::default(),
    };
    c.records.insert(
        APPOINTMENT.to_string(),
        RecordDef {
            name: APPOINTMENT.to_string(),
            fields: ["id", "start", "end"]
                .iter()
                .map(|f| (f.to_string(), Type::Int))
                .collect(),
        },
    );
    c.types()?;
    c.reactive_names()?;
    c.sources()?;
    let order = c.derived_order()?;
    let mut deriveds: Vec<Option<DerivedDef>> = vec![None; p.deriveds.len()];
    for &i in &order {
        let d = c.derived(i)?;
        c.derived_types[i] = Some(d.ty.clone());
        deriveds[i] = Some(d);
    }
    let mut deriveds: Vec<DerivedDef> = deriveds.into_iter().map(|d| d.expect("all checked")).collect();
    mark_quantifier_free(&mut deriveds, &order);

    let mut interactions = Vec::new();
    let mut templates = Vec::new();
    for decl in &p.interactions {
        match c.interaction(decl)? {
            Some(def) => interactions.push(def),
            None => templates.push(decl.name.clone()),
        }
    }
    let mut invariants = Vec::new();
    for inv in &p.invariants {
        c.pos = inv.pos;
        let formula = c.check(&inv.formula, &Scope::default(), Some(&Type::Bool))?.0;
        invariants.push(InvariantDef {
            pos: inv.pos,
            id: inv.id,
            formula,
        });
    }
    Ok(CheckedProgram {
        records: c.records,
        sources: c.sources,
        deriveds,
        derived_order: order,
        interactions,
        templates,
        invariants,
        surface: p.clone(),
    })
}

fn mark_quantifier_free(deriveds: &mut [DerivedDef], order: &[usize]) {
    for &i in order {
        let free = !deriveds[i].body.has_quantifier()
            && deriveds[i].body.reads().iter().all(|r| match r {
                ReactiveRef::Derived(j) => deriveds[*j].quantifier_free,
                ReactiveRef::Source(_) => true,
            });
        deriveds[i].quantifier_free = free;
    }
}

#[derive(Default, Clone)]
struct Scope {
    vars: Vec<(String, Type)>,
}

impl Scope {
    fn lookup(&self, name: &str) -> Option<&Type> {
        self.vars.iter().rev().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    fn with(&self, name: &str, t: Type) -> Scope {
        let mut s = self.clone();
        s.vars.push((name.to_string(), t));
        s
    }
}

struct Checker<'a> {
    surface: &'a ast::Program,
    records: BTreeMap<String, RecordDef>,
    aliases: HashMap<String, TypeExpr>,
    sources: Vec<SourceDef>,
    derived_types: Vec<Option<Type>>,
    /// Position of the declaration being checked; expressions carry none.
    pos: Pos,
}

impl<'a> Checker<'a> {
    fn type_err(&self, msg: impl Into<String>) -> Error {
        Error::Type {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn types(&mut self) -> Result<(), Error> {
        for t in &self.surface.types {
            if t.name == APPOINTMENT || is_builtin_type(&t.name) {
                return Err(Error::DuplicateName {
                    pos: t.pos,
                    name: t.name.clone(),
                });
            }
            if let TypeDef::Alias(e) = &t.def {
                self.aliases.insert(t.name.clone(), e.clone());
            }
        }
        for t in &self.surface.types {
            self.pos = t.pos;
            if let TypeDef::Record(fields) = &t.def {
                // register the name first so records may nest other records
                self.records.insert(
                    t.name.clone(),
                    RecordDef {
                        name: t.name.clone(),
                        fields: Vec::new(),
                    },
                );
                let mut seen = BTreeSet::new();
                for (f, _) in fields {
                    if !seen.insert(f.clone()) {
                        return Err(Error::DuplicateName {
                            pos: t.pos,
                            name: f.clone(),
                        });
                    }
                }
            }
        }
        for t in &self.surface.types {
            self.pos = t.pos;
            if let TypeDef::Record(fields) = &t.def {
                let mut resolved = Vec::new();
                for (f, fty) in fields {
                    let ty = self.resolve_type(fty)?;
                    if !ty.is_first_order() {
                        return Err(self.type_err(format!("record field `{f}` must hold plain data, found {ty}")));
                    }
                    resolved.push((f.clone(), ty));
                }
                self.records.get_mut(&t.name).expect("registered").fields = resolved;
            } else {
                self.resolve_type(&TypeExpr::Named(t.name.clone()))?;
            }
        }
        Ok(())
    }

    fn resolve_type(&self, t: &TypeExpr) -> Result<Type, Error> {
        self.resolve_type_in(t, &mut Vec::new())
    }

    fn resolve_type_in(&self, t: &TypeExpr, visiting: &mut Vec<String>) -> Result<Type, Error> {
        let arg1 = |name: &str, args: &[TypeExpr], visiting: &mut Vec<String>| -> Result<Type, Error> {
            if args.len() != 1 {
                return Err(self.type_err(format!("`{name}` takes one type argument")));
            }
            self.resolve_type_in(&args[0], visiting)
        };
        match t {
            TypeExpr::Tuple(items) => Ok(Type::Tuple(
                items
                    .iter()
                    .map(|i| self.resolve_type_in(i, visiting))
                    .collect::<Result<_, _>>()?,
            )),
            TypeExpr::Named(n) => match n.as_str() {
                "Int" => Ok(Type::Int),
                "Bool" => Ok(Type::Bool),
                "String" => Ok(Type::Str),
                "Unit" => Ok(Type::unit()),
                "PNCounter" => Ok(Type::crdt(CrdtKind::PNCounter, Type::Int)),
                _ if self.records.contains_key(n) => Ok(Type::Record(n.clone())),
                _ => match self.aliases.get(n) {
                    Some(target) => {
                        if visiting.contains(n) {
                            let mut cycle = visiting.clone();
                            cycle.push(n.clone());
                            return Err(Error::Cycle { pos: self.pos, cycle });
                        }
                        visiting.push(n.clone());
                        let r = self.resolve_type_in(target, visiting);
                        visiting.pop();
                        r
                    }
                    None => Err(Error::UnknownIdentifier {
                        pos: self.pos,
                        name: n.clone(),
                    }),
                },
            },
            TypeExpr::App(n, args) => {
                let elem = match n.as_str() {
                    "Set" | "AWSet" | "LWWRegister" => arg1(n, args, visiting)?,
                    _ => {
                        return Err(Error::UnknownIdentifier {
                            pos: self.pos,
                            name: n.clone(),
                        })
                    }
                };
                if !elem.is_first_order() {
                    return Err(self.type_err(format!("elements of `{n}` must be plain data, found {elem}")));
                }
                Ok(match n.as_str() {
                    "Set" => Type::set(elem),
                    "AWSet" => Type::crdt(CrdtKind::AWSet, elem),
                    _ => Type::crdt(CrdtKind::LWWRegister, elem),
                })
            }
        }
    }

    /// Reactives and interactions share one namespace.
    fn reactive_names(&self) -> Result<(), Error> {
        let mut seen = BTreeSet::new();
        let p = self.surface;
        let decls = p
            .sources
            .iter()
            .map(|s| (s.pos, &s.name))
            .chain(p.deriveds.iter().map(|d| (d.pos, &d.name)))
            .chain(p.interactions.iter().map(|i| (i.pos, &i.name)));
        for (pos, name) in decls {
            if !seen.insert(name.clone()) {
                return Err(Error::DuplicateName { pos, name: name.clone() });
            }
        }
        Ok(())
    }

    fn sources(&mut self) -> Result<(), Error> {
        for s in &self.surface.sources {
            self.pos = s.pos;
            let ty = self.resolve_type(&s.ty)?;
            if !matches!(ty, Type::Crdt(..)) {
                return Err(self.type_err(format!(
                    "source `{}` must hold a replicated value (AWSet, PNCounter or LWWRegister), found {ty}",
                    s.name
                )));
            }
            let (init, _) = self.check(&s.init, &Scope::default(), Some(&ty))?;
            if !init.reads().is_empty() {
                return Err(self.type_err(format!("initial value of `{}` cannot read reactives", s.name)));
            }
            let value = eval::eval_closed(&self.records, &init).map_err(|e| self.type_err(e.to_string()))?;
            let init = match value {
                Value::Crdt(m) => m,
                other => return Err(self.type_err(format!("initial value of `{}` is not replicated: {other}", s.name))),
            };
            self.sources.push(SourceDef {
                pos: s.pos,
                name: s.name.clone(),
                ty,
                init,
            });
        }
        Ok(())
    }

    fn derived_order(&self) -> Result<Vec<usize>, Error> {
        let p = self.surface;
        let index: HashMap<&str, usize> = p
            .deriveds
            .iter()
            .enumerate()
            .map(|(i, d)| (d.name.as_str(), i))
            .collect();
        let deps: Vec<Vec<usize>> = p
            .deriveds
            .iter()
            .map(|d| {
                let mut free = BTreeSet::new();
                free_idents(&d.body, &mut Vec::new(), &mut free);
                free.iter().filter_map(|n| index.get(n.as_str()).copied()).collect()
            })
            .collect();

        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        fn visit(
            i: usize,
            deps: &[Vec<usize>],
            marks: &mut [Mark],
            stack: &mut Vec<usize>,
            order: &mut Vec<usize>,
        ) -> Result<(), Vec<usize>> {
            match marks[i] {
                Mark::Done => return Ok(()),
                Mark::Active => {
                    let start = stack.iter().position(|&s| s == i).expect("on stack");
                    let mut cycle = stack[start..].to_vec();
                    cycle.push(i);
                    return Err(cycle);
                }
                Mark::New => {}
            }
            marks[i] = Mark::Active;
            stack.push(i);
            for &d in &deps[i] {
                visit(d, deps, marks, stack, order)?;
            }
            stack.pop();
            marks[i] = Mark::Done;
            order.push(i);
            Ok(())
        }

        let mut marks = vec![Mark::New; deps.len()];
        let mut order = Vec::new();
        for i in 0..deps.len() {
            visit(i, &deps, &mut marks, &mut Vec::new(), &mut order).map_err(|cycle| Error::Cycle {
                pos: p.deriveds[cycle[0]].pos,
                cycle: cycle.iter().map(|&j| p.deriveds[j].name.clone()).collect(),
            })?;
        }
        Ok(order)
    }

    fn derived(&mut self, i: usize) -> Result<DerivedDef, Error> {
        let d = &self.surface.deriveds[i];
        self.pos = d.pos;
        let want = d.ty.as_ref().map(|t| self.resolve_type(t)).transpose()?;
        let (body, ty) = self.check(&d.body, &Scope::default(), want.as_ref())?;
        if let Type::Fun(..) = ty {
            return Err(self.type_err(format!("derived `{}` cannot hold a function", d.name)));
        }
        Ok(DerivedDef {
            pos: d.pos,
            name: d.name.clone(),
            ty,
            body,
            quantifier_free: false,
        })
    }

    /// Returns `None` for partial interactions (templates).
    fn interaction(&mut self, decl: &ast::InteractionDecl) -> Result<Option<InteractionDef>, Error> {
        self.pos = decl.pos;
        let modified: Vec<Type> = decl
            .modified_types
            .iter()
            .map(|t| self.resolve_type(t))
            .collect::<Result<_, _>>()?;
        for t in &modified {
            if !matches!(t, Type::Crdt(..)) {
                return Err(self.type_err(format!("modified type {t} of `{}` is not replicated", decl.name)));
            }
        }
        let arg_type = self.resolve_type(&decl.arg_type)?;
        if !arg_type.is_first_order() {
            return Err(self.type_err(format!("argument type {arg_type} of `{}` must be plain data", decl.name)));
        }
        let mut targets = Vec::new();
        for (k, name) in decl.modifies.iter().enumerate() {
            let Some(i) = self.sources.iter().position(|s| &s.name == name) else {
                if self.surface.deriveds.iter().any(|d| &d.name == name) {
                    return Err(self.type_err(format!("`{name}` is derived and cannot be modified")));
                }
                return Err(Error::UnknownIdentifier {
                    pos: decl.pos,
                    name: name.clone(),
                });
            };
            if targets.contains(&i) {
                return Err(Error::DuplicateName {
                    pos: decl.pos,
                    name: name.clone(),
                });
            }
            if let Some(t) = modified.get(k) {
                if *t != self.sources[i].ty {
                    return Err(self.type_err(format!(
                        "`{}` modifies `{name}` of type {} but declares {t}",
                        decl.name, self.sources[i].ty
                    )));
                }
            }
            targets.push(i);
        }
        if !decl.is_partial() && targets.len() != modified.len() {
            return Err(Error::Arity {
                pos: decl.pos,
                msg: format!(
                    "`{}` declares {} modified types but modifies {} reactives",
                    decl.name,
                    modified.len(),
                    targets.len()
                ),
            });
        }

        let mut param_types = modified.clone();
        param_types.push(arg_type.clone());
        let requires = decl
            .requires
            .iter()
            .map(|e| self.clause(&decl.name, e, &param_types, Some(&Type::Bool)))
            .collect::<Result<Vec<_>, _>>()?;
        let ensures = decl
            .ensures
            .iter()
            .map(|e| self.clause(&decl.name, e, &param_types, Some(&Type::Bool)))
            .collect::<Result<Vec<_>, _>>()?;
        let executes = match &decl.executes {
            Some(e) => {
                let (params, body) = self.peel(&decl.name, e, param_types.len())?;
                let arity = match body {
                    Expr::Tuple(items) => items.len(),
                    _ => {
                        let scope = bind(&params, &param_types);
                        match self.check(body, &scope, None)?.1 {
                            Type::Tuple(items) => items.len(),
                            _ => 1,
                        }
                    }
                };
                if arity != modified.len() {
                    return Err(Error::Arity {
                        pos: decl.pos,
                        msg: format!(
                            "executes of `{}` returns {arity} value(s) but {} reactive(s) are modified",
                            decl.name,
                            modified.len()
                        ),
                    });
                }
                let result = if modified.len() == 1 {
                    modified[0].clone()
                } else {
                    Type::Tuple(modified.clone())
                };
                Some(self.clause(&decl.name, e, &param_types, Some(&result))?)
            }
            None => None,
        };
        if decl.is_partial() {
            return Ok(None);
        }
        let Some(executes) = executes else {
            return Err(Error::Arity {
                pos: decl.pos,
                msg: format!("`{}` modifies reactives but has no executes clause", decl.name),
            });
        };
        Ok(Some(InteractionDef {
            pos: decl.pos,
            name: decl.name.clone(),
            modifies: targets,
            arg_type,
            requires,
            executes,
            ensures,
        }))
    }

    fn peel<'e>(&self, name: &str, e: &'e Expr, n: usize) -> Result<(Vec<String>, &'e Expr), Error> {
        let mut params = Vec::new();
        let mut body = e;
        while params.len() < n {
            match body {
                Expr::Lambda(x, b) => {
                    params.push(x.clone());
                    body = b;
                }
                _ => {
                    return Err(Error::Arity {
                        pos: self.pos,
                        msg: format!(
                            "clause of `{name}` must bind {n} parameter(s) (modified reactives, then the argument)"
                        ),
                    })
                }
            }
        }
        Ok((params, body))
    }

    fn clause(&mut self, name: &str, e: &Expr, params: &[Type], want: Option<&Type>) -> Result<Clause, Error> {
        let (names, body) = self.peel(name, e, params.len())?;
        let scope = bind(&names, params);
        let (body, _) = self.check(body, &scope, want)?;
        Ok(Clause { params: names, body })
    }

    fn check(&self, e: &Expr, scope: &Scope, want: Option<&Type>) -> Result<(Term, Type), Error> {
        let (term, ty) = self.infer(e, scope, want)?;
        match want {
            Some(w) => Ok((self.coerce(term, &ty, w)?, w.clone())),
            None => Ok((term, ty)),
        }
    }

    /// Insert implicit reads of replicated values (`AWSet[T]` as `Set[T]`,
    /// counters and registers as their current value).
    fn coerce(&self, term: Term, from: &Type, to: &Type) -> Result<Term, Error> {
        if from == to {
            return Ok(term);
        }
        match (from, to) {
            (Type::Crdt(CrdtKind::AWSet, a), Type::Set(b)) if a == b => Ok(Term::Builtin(Builtin::ToSet, vec![term])),
            (Type::Crdt(CrdtKind::PNCounter, _), Type::Int) => Ok(Term::Builtin(Builtin::Get, vec![term])),
            (Type::Crdt(CrdtKind::LWWRegister, a), b) if **a == *b => Ok(Term::Builtin(Builtin::Get, vec![term])),
            _ => Err(self.type_err(format!("expected {to}, found {from}"))),
        }
    }

    /// The plain-data view of a type (the target of implicit reads).
    fn read_type(t: &Type) -> Type {
        match t {
            Type::Crdt(CrdtKind::AWSet, e) => Type::set((**e).clone()),
            Type::Crdt(_, e) => (**e).clone(),
            other => other.clone(),
        }
    }

    fn infer(&self, e: &Expr, scope: &Scope, want: Option<&Type>) -> Result<(Term, Type), Error> {
        match e {
            Expr::Bool(b) => Ok((Term::Const(Datum::Bool(*b)), Type::Bool)),
            Expr::Int(i) => Ok((Term::Const(Datum::Int(*i)), Type::Int)),
            Expr::Str(s) => Ok((Term::Const(Datum::Str(s.clone())), Type::Str)),
            Expr::Ident(x) => self.ident(x, scope),
            Expr::Lambda(x, body) => match want {
                Some(Type::Fun(a, b)) => {
                    let (body, _) = self.check(body, &scope.with(x, (**a).clone()), Some(b))?;
                    Ok((Term::Lambda(x.clone(), Arc::new(body)), Type::Fun(a.clone(), b.clone())))
                }
                _ => Err(self.type_err(format!("cannot infer the parameter type of `{x} => ...`"))),
            },
            Expr::Tuple(items) => {
                let wants: Vec<Option<&Type>> = match want {
                    Some(Type::Tuple(ts)) if ts.len() == items.len() => ts.iter().map(Some).collect(),
                    _ => vec![None; items.len()],
                };
                let mut terms = Vec::new();
                let mut types = Vec::new();
                for (item, w) in items.iter().zip(wants) {
                    let (t, ty) = self.check(item, scope, w)?;
                    terms.push(t);
                    types.push(ty);
                }
                Ok((Term::Tuple(terms), Type::Tuple(types)))
            }
            Expr::Unary(UnOp::Not, x) => {
                let (t, _) = self.check(x, scope, Some(&Type::Bool))?;
                Ok((Term::Not(t.boxed()), Type::Bool))
            }
            Expr::Unary(UnOp::Neg, x) => {
                let (t, _) = self.check(x, scope, Some(&Type::Int))?;
                Ok((Term::Neg(t.boxed()), Type::Int))
            }
            Expr::Binary(op, l, r) => self.binary(*op, l, r, scope),
            Expr::Quant(q, x, ty, body) => {
                let ty = self.resolve_type(ty)?;
                if !ty.is_first_order() {
                    return Err(self.type_err(format!("cannot quantify over {ty}")));
                }
                let (body, _) = self.check(body, &scope.with(x, ty.clone()), Some(&Type::Bool))?;
                Ok((Term::Quant(*q, x.clone(), ty, body.boxed()), Type::Bool))
            }
            Expr::Call(f, args) => {
                if let Expr::Ident(name) = &**f {
                    if scope.lookup(name).is_none() {
                        if let Some(rec) = self.records.get(name) {
                            return self.construct(rec, args, scope);
                        }
                        if let Some(b) = Builtin::by_name(name) {
                            return self.builtin(b, args, scope, want);
                        }
                    }
                }
                let (mut term, mut ty) = self.check(f, scope, None)?;
                for a in args {
                    let Type::Fun(pa, pr) = ty else {
                        return Err(self.type_err(format!("cannot apply a value of type {ty}")));
                    };
                    let (at, _) = self.check(a, scope, Some(&pa))?;
                    term = Term::Apply(term.boxed(), at.boxed());
                    ty = *pr;
                }
                Ok((term, ty))
            }
            Expr::Method(recv, name, args) => {
                if let Expr::Ident(r) = &**recv {
                    if scope.lookup(r).is_none() && self.surface.interaction(r).is_some() {
                        return Err(self.type_err(format!("interaction `{r}` cannot be used as a value")));
                    }
                }
                if args.is_empty() {
                    let (rt, rty) = self.check(recv, scope, None)?;
                    if name == "value" && matches!(rt, Term::Source(_) | Term::Derived(_)) {
                        return Ok((rt, rty));
                    }
                    if let Type::Record(rn) = &rty {
                        let rec = &self.records[rn];
                        if let Some(k) = rec.field_index(name) {
                            let fty = rec.fields[k].1.clone();
                            return Ok((Term::Field(rt.boxed(), k), fty));
                        }
                    }
                    if let (Type::Tuple(ts), Some(k)) = (&rty, tuple_index(name)) {
                        if k < ts.len() {
                            return Ok((Term::Field(rt.boxed(), k), ts[k].clone()));
                        }
                    }
                }
                let Some(b) = Builtin::by_name(name) else {
                    return Err(Error::UnknownIdentifier {
                        pos: self.pos,
                        name: name.clone(),
                    });
                };
                let mut all = vec![(**recv).clone()];
                all.extend(args.iter().cloned());
                self.builtin(b, &all, scope, want)
            }
        }
    }

    fn ident(&self, x: &str, scope: &Scope) -> Result<(Term, Type), Error> {
        if let Some(t) = scope.lookup(x) {
            return Ok((Term::Var(x.to_string()), t.clone()));
        }
        if let Some(i) = self.sources.iter().position(|s| s.name == x) {
            return Ok((Term::Source(i), self.sources[i].ty.clone()));
        }
        if let Some(i) = self.surface.deriveds.iter().position(|d| d.name == x) {
            let ty = self.derived_types[i]
                .clone()
                .ok_or_else(|| self.type_err(format!("`{x}` is read before it is available")))?;
            return Ok((Term::Derived(i), ty));
        }
        if self.surface.sources.iter().any(|s| s.name == x) {
            return Err(self.type_err(format!("source `{x}` cannot be read in its own initial value")));
        }
        Err(Error::UnknownIdentifier {
            pos: self.pos,
            name: x.to_string(),
        })
    }

    fn construct(&self, rec: &RecordDef, args: &[Expr], scope: &Scope) -> Result<(Term, Type), Error> {
        if args.len() != rec.fields.len() {
            return Err(Error::Arity {
                pos: self.pos,
                msg: format!("`{}` has {} fields, {} given", rec.name, rec.fields.len(), args.len()),
            });
        }
        let mut terms = Vec::new();
        for (a, (_, fty)) in args.iter().zip(&rec.fields) {
            terms.push(self.check(a, scope, Some(fty))?.0);
        }
        Ok((Term::Record(rec.name.clone(), terms), Type::Record(rec.name.clone())))
    }

    fn binary(&self, op: BinOp, l: &Expr, r: &Expr, scope: &Scope) -> Result<(Term, Type), Error> {
        let mk = |a: Term, b: Term| Term::Binary(op, a.boxed(), b.boxed());
        match op {
            BinOp::Iff | BinOp::Implies | BinOp::Or | BinOp::And => {
                let (a, _) = self.check(l, scope, Some(&Type::Bool))?;
                let (b, _) = self.check(r, scope, Some(&Type::Bool))?;
                Ok((mk(a, b), Type::Bool))
            }
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Mod => {
                let (a, _) = self.check(l, scope, Some(&Type::Int))?;
                let (b, _) = self.check(r, scope, Some(&Type::Int))?;
                Ok((mk(a, b), Type::Int))
            }
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                let (a, _) = self.check(l, scope, Some(&Type::Int))?;
                let (b, _) = self.check(r, scope, Some(&Type::Int))?;
                Ok((mk(a, b), Type::Bool))
            }
            BinOp::Eq | BinOp::Ne => {
                let (a, ta) = self.check(l, scope, None)?;
                let want = Self::read_type(&ta);
                let a = self.coerce(a, &ta, &want)?;
                if matches!(want, Type::Fun(..)) {
                    return Err(self.type_err("functions cannot be compared"));
                }
                let (b, _) = self.check(r, scope, Some(&want))?;
                Ok((mk(a, b), Type::Bool))
            }
            BinOp::In => {
                let (s, ts) = self.check(r, scope, None)?;
                let Some(elem) = ts.element().cloned() else {
                    return Err(self.type_err(format!("`in` needs a set, found {ts}")));
                };
                let (x, _) = self.check(l, scope, Some(&elem))?;
                Ok((mk(x, s), Type::Bool))
            }
        }
    }

    fn builtin(&self, b: Builtin, args: &[Expr], scope: &Scope, want: Option<&Type>) -> Result<(Term, Type), Error> {
        let arity = |n: usize| -> Result<(), Error> {
            if args.len() == n {
                Ok(())
            } else {
                Err(Error::Arity {
                    pos: self.pos,
                    msg: format!("`{}` takes {} argument(s), {} given", b.name(), n, args.len()),
                })
            }
        };
        let set_arg = |e: &Expr| -> Result<(Term, Type), Error> {
            let (t, ty) = self.check(e, scope, None)?;
            match &ty {
                Type::Set(elem) | Type::Crdt(CrdtKind::AWSet, elem) => {
                    let st = Type::Set(elem.clone());
                    Ok((self.coerce(t, &ty, &st)?, (**elem).clone()))
                }
                _ => Err(self.type_err(format!("`{}` needs a set, found {ty}", b.name()))),
            }
        };
        let appt = Type::Record(APPOINTMENT.to_string());
        let out = |args: Vec<Term>, ty: Type| Ok((Term::Builtin(b, args), ty));
        match b {
            Builtin::ToSet => {
                arity(1)?;
                let (t, elem) = set_arg(&args[0])?;
                Ok((t, Type::set(elem)))
            }
            Builtin::Union | Builtin::Intersect | Builtin::Diff => {
                arity(2)?;
                let (a, elem) = set_arg(&args[0])?;
                let st = Type::set(elem);
                let (c, _) = self.check(&args[1], scope, Some(&st))?;
                out(vec![a, c], st)
            }
            Builtin::Add | Builtin::Remove | Builtin::Contains => {
                arity(2)?;
                let (s, ty) = self.check(&args[0], scope, None)?;
                let Some(elem) = ty.element().cloned() else {
                    return Err(self.type_err(format!("`{}` needs a set, found {ty}", b.name())));
                };
                let (x, _) = self.check(&args[1], scope, Some(&elem))?;
                let rty = if b == Builtin::Contains { Type::Bool } else { ty };
                out(vec![s, x], rty)
            }
            Builtin::Size | Builtin::IsEmpty => {
                arity(1)?;
                let (s, _) = set_arg(&args[0])?;
                out(vec![s], if b == Builtin::Size { Type::Int } else { Type::Bool })
            }
            Builtin::GetStart | Builtin::GetEnd | Builtin::Days => {
                arity(1)?;
                let (a, _) = self.check(&args[0], scope, Some(&appt))?;
                out(vec![a], Type::Int)
            }
            Builtin::SumDays => {
                arity(1)?;
                let (s, elem) = set_arg(&args[0])?;
                if elem != appt {
                    return Err(self.type_err(format!("`sumDays` needs a set of appointments, found Set[{elem}]")));
                }
                out(vec![s], Type::Int)
            }
            Builtin::SumBy | Builtin::Filter => {
                arity(2)?;
                let (s, elem) = set_arg(&args[0])?;
                let rty = if b == Builtin::SumBy { Type::Int } else { Type::Bool };
                let (f, _) = self.check(&args[1], scope, Some(&Type::fun(elem.clone(), rty)))?;
                let result = if b == Builtin::SumBy { Type::Int } else { Type::set(elem) };
                out(vec![s, f], result)
            }
            Builtin::Map => {
                arity(2)?;
                let (s, elem) = set_arg(&args[0])?;
                let Expr::Lambda(x, body) = &args[1] else {
                    return Err(self.type_err("`map` needs a lambda"));
                };
                let (bt, bty) = self.check(body, &scope.with(x, elem.clone()), None)?;
                let bty_read = Self::read_type(&bty);
                let bt = self.coerce(bt, &bty, &bty_read)?;
                if !bty_read.is_first_order() {
                    return Err(self.type_err(format!("`map` must produce plain data, found {bty_read}")));
                }
                let f = Term::Lambda(x.clone(), Arc::new(bt));
                out(vec![s, f], Type::set(bty_read))
            }
            Builtin::Inc | Builtin::Dec => {
                arity(2)?;
                let counter = Type::crdt(CrdtKind::PNCounter, Type::Int);
                let (c, ty) = self.check(&args[0], scope, None)?;
                if ty != counter {
                    return Err(self.type_err(format!("`{}` needs a PNCounter, found {ty}", b.name())));
                }
                let (n, _) = self.check(&args[1], scope, Some(&Type::Int))?;
                out(vec![c, n], counter)
            }
            Builtin::Get => {
                arity(1)?;
                let (c, ty) = self.check(&args[0], scope, None)?;
                match &ty {
                    Type::Crdt(CrdtKind::PNCounter, _) | Type::Crdt(CrdtKind::LWWRegister, _) => {
                        let rt = Self::read_type(&ty);
                        out(vec![c], rt)
                    }
                    _ => Err(self.type_err(format!("`get` needs a counter or register, found {ty}"))),
                }
            }
            Builtin::Set => {
                arity(2)?;
                let (r, ty) = self.check(&args[0], scope, None)?;
                let Type::Crdt(CrdtKind::LWWRegister, elem) = &ty else {
                    return Err(self.type_err(format!("`set` needs an LWWRegister, found {ty}")));
                };
                let (v, _) = self.check(&args[1], scope, Some(elem))?;
                out(vec![r, v], ty.clone())
            }
            Builtin::MakeSet | Builtin::MakeAWSet => {
                let elem = match want {
                    Some(Type::Set(e)) if b == Builtin::MakeSet => Some((**e).clone()),
                    Some(Type::Crdt(CrdtKind::AWSet, e)) if b == Builtin::MakeAWSet => Some((**e).clone()),
                    _ => None,
                };
                let elem = match (elem, args.first()) {
                    (Some(e), _) => e,
                    (None, Some(first)) => {
                        let (_, t) = self.check(first, scope, None)?;
                        Self::read_type(&t)
                    }
                    (None, None) => {
                        return Err(self.type_err(format!("cannot infer the element type of `{}()`", b.name())))
                    }
                };
                if !elem.is_first_order() {
                    return Err(self.type_err(format!("set elements must be plain data, found {elem}")));
                }
                let items = args
                    .iter()
                    .map(|a| self.check(a, scope, Some(&elem)).map(|r| r.0))
                    .collect::<Result<Vec<_>, _>>()?;
                let ty = if b == Builtin::MakeSet {
                    Type::set(elem)
                } else {
                    Type::crdt(CrdtKind::AWSet, elem)
                };
                out(items, ty)
            }
            Builtin::MakeCounter => {
                if args.len() > 1 {
                    arity(1)?;
                }
                let items = args
                    .iter()
                    .map(|a| self.check(a, scope, Some(&Type::Int)).map(|r| r.0))
                    .collect::<Result<Vec<_>, _>>()?;
                out(items, Type::crdt(CrdtKind::PNCounter, Type::Int))
            }
            Builtin::MakeLww => {
                arity(1)?;
                let elem = match want {
                    Some(Type::Crdt(CrdtKind::LWWRegister, e)) => Some((**e).clone()),
                    _ => None,
                };
                let (v, ty) = self.check(&args[0], scope, elem.as_ref())?;
                if !ty.is_first_order() {
                    return Err(self.type_err(format!("registers hold plain data, found {ty}")));
                }
                out(vec![v], Type::crdt(CrdtKind::LWWRegister, ty))
            }
        }
    }
}

fn bind(names: &[String], types: &[Type]) -> Scope {
    Scope {
        vars: names.iter().cloned().zip(types.iter().cloned()).collect(),
    }
}

fn tuple_index(name: &str) -> Option<usize> {
    let n: usize = name.strip_prefix('_')?.parse().ok()?;
    n.checked_sub(1)
}

fn is_builtin_type(name: &str) -> bool {
    matches!(
        name,
        "Int" | "Bool" | "String" | "Unit" | "Set" | "AWSet" | "PNCounter" | "LWWRegister" | "Source" | "Derived"
    )
}

/// Free identifiers of an expression, skipping lambda- and quantifier-bound
/// names and method names.
fn free_idents(e: &Expr, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    match e {
        Expr::Ident(x) => {
            if !bound.contains(x) {
                out.insert(x.clone());
            }
        }
        Expr::Bool(_) | Expr::Int(_) | Expr::Str(_) => {}
        Expr::Lambda(x, body) | Expr::Quant(_, x, _, body) => {
            bound.push(x.clone());
            free_idents(body, bound, out);
            bound.pop();
        }
        Expr::Call(f, args) => {
            free_idents(f, bound, out);
            args.iter().for_each(|a| free_idents(a, bound, out));
        }
        Expr::Method(r, _, args) => {
            free_idents(r, bound, out);
            args.iter().for_each(|a| free_idents(a, bound, out));
        }
        Expr::Tuple(items) => items.iter().for_each(|a| free_idents(a, bound, out)),
        Expr::Unary(_, x) => free_idents(x, bound, out),
        Expr::Binary(_, l, r) => {
            free_idents(l, bound, out);
            free_idents(r, bound, out);
        }
    }
}
