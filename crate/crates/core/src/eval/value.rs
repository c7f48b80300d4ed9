use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use super::EvalError;
use crate::crdt::{Datum, MergeValue};
use crate::program::Term;

#[derive(Debug, Clone)]
pub enum Value {
    /// Booleans, integers, strings, records and tuples of plain data.
    Data(Datum),
    Set(BTreeSet<Datum>),
    Crdt(MergeValue),
    /// A tuple with at least one component that is not plain data.
    Tuple(Vec<Value>),
    Closure(Arc<Closure>),
}

#[derive(Debug)]
pub struct Closure {
    pub param: String,
    pub body: Arc<Term>,
    pub env: Env,
}

impl PartialEq for Value {
    fn eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Data(a), Value::Data(b)) => a == b,
            (Value::Set(a), Value::Set(b)) => a == b,
            (Value::Crdt(a), Value::Crdt(b)) => a == b,
            (Value::Tuple(a), Value::Tuple(b)) => a == b,
            (Value::Closure(a), Value::Closure(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl Value {
    pub fn bool(b: bool) -> Value {
        Value::Data(Datum::Bool(b))
    }

    pub fn int(i: i64) -> Value {
        Value::Data(Datum::Int(i))
    }

    /// Build a tuple, collapsing to plain data when every component is data.
    pub fn tuple(items: Vec<Value>) -> Value {
        if items.iter().all(|v| matches!(v, Value::Data(_))) {
            Value::Data(Datum::Tuple(
                items
                    .into_iter()
                    .map(|v| match v {
                        Value::Data(d) => d,
                        _ => unreachable!(),
                    })
                    .collect(),
            ))
        } else {
            Value::Tuple(items)
        }
    }

    pub fn into_datum(self) -> Result<Datum, EvalError> {
        match self {
            Value::Data(d) => Ok(d),
            v => Err(EvalError::Stuck(format!("expected plain data, found {v}"))),
        }
    }

    /// Components of a value, for multi-target executes results.
    pub fn into_components(self) -> Vec<Value> {
        match self {
            Value::Tuple(items) => items,
            Value::Data(Datum::Tuple(items)) => items.into_iter().map(Value::Data).collect(),
            v => vec![v],
        }
    }

    /// Visit every plain datum stored in this value.
    pub fn for_each_datum(&self, f: &mut dyn FnMut(&Datum)) {
        match self {
            Value::Data(d) => f(d),
            Value::Set(s) => s.iter().for_each(f),
            Value::Crdt(MergeValue::AWSet(s)) => s.elements().for_each(f),
            Value::Crdt(MergeValue::LWWRegister(r)) => f(r.value()),
            Value::Crdt(MergeValue::PNCounter(_)) | Value::Closure(_) => {}
            Value::Tuple(items) => items.iter().for_each(|v| v.for_each_datum(f)),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Data(d) => d.fmt(f),
            Value::Set(s) => {
                f.write_str("{")?;
                for (i, d) in s.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    d.fmt(f)?;
                }
                f.write_str("}")
            }
            Value::Crdt(m) => m.fmt(f),
            Value::Tuple(items) => {
                f.write_str("(")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    v.fmt(f)?;
                }
                f.write_str(")")
            }
            Value::Closure(c) => write!(f, "<closure {} => ...>", c.param),
        }
    }
}

/// Persistent variable bindings.
#[derive(Debug, Clone, Default)]
pub struct Env(Option<Arc<Binding>>);

#[derive(Debug)]
pub struct Binding {
    name: String,
    value: Value,
    next: Env,
}

impl Env {
    pub fn empty() -> Env {
        Env(None)
    }

    pub fn bind(&self, name: &str, value: Value) -> Env {
        Env(Some(Arc::new(Binding {
            name: name.to_string(),
            value,
            next: self.clone(),
        })))
    }

    pub fn lookup(&self, name: &str) -> Option<&Value> {
        let mut cur = &self.0;
        while let Some(b) = cur {
            if b.name == name {
                return Some(&b.value);
            }
            cur = &b.next.0;
        }
        None
    }
}
