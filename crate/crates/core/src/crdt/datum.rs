use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// First-order data: everything that can be stored inside a replicated value
/// or passed as an interaction argument.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "DatumRepr", into = "DatumRepr")]
pub enum Datum {
    Bool(bool),
    Int(i64),
    Str(String),
    Tuple(Vec<Datum>),
    /// A record value; `ty` names a record type, `fields` are in declaration order.
    Record { ty: String, fields: Vec<Datum> },
}

impl Datum {
    pub fn record(ty: impl Into<String>, fields: Vec<Datum>) -> Datum {
        Datum::Record {
            ty: ty.into(),
            fields,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Datum::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Datum::Bool(b) => Some(*b),
            _ => None,
        }
    }

    /// Visit this datum and every nested component.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Datum)) {
        f(self);
        match self {
            Datum::Tuple(items) | Datum::Record { fields: items, .. } => {
                for item in items {
                    item.walk(f);
                }
            }
            _ => {}
        }
    }
}

impl fmt::Display for Datum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Datum::Bool(b) => write!(f, "{b}"),
            Datum::Int(i) => write!(f, "{i}"),
            Datum::Str(s) => write!(f, "{s:?}"),
            Datum::Tuple(items) => {
                f.write_str("(")?;
                write_list(f, items)?;
                f.write_str(")")
            }
            Datum::Record { ty, fields } => {
                write!(f, "{ty}(")?;
                write_list(f, fields)?;
                f.write_str(")")
            }
        }
    }
}

fn write_list(f: &mut fmt::Formatter<'_>, items: &[Datum]) -> fmt::Result {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{item}")?;
    }
    Ok(())
}

/// JSON form: booleans, numbers and strings map to themselves, tuples to
/// arrays, records to a single-key object `{"Type": [fields...]}`.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DatumRepr {
    Bool(bool),
    Int(i64),
    Str(String),
    Tuple(Vec<Datum>),
    Record(BTreeMap<String, Vec<Datum>>),
}

impl TryFrom<DatumRepr> for Datum {
    type Error = String;

    fn try_from(repr: DatumRepr) -> Result<Self, Self::Error> {
        Ok(match repr {
            DatumRepr::Bool(b) => Datum::Bool(b),
            DatumRepr::Int(i) => Datum::Int(i),
            DatumRepr::Str(s) => Datum::Str(s),
            DatumRepr::Tuple(items) => Datum::Tuple(items),
            DatumRepr::Record(map) => {
                if map.len() != 1 {
                    return Err(format!(
                        "record datum must have exactly one type key, found {}",
                        map.len()
                    ));
                }
                let (ty, fields) = map.into_iter().next().expect("one entry");
                Datum::Record { ty, fields }
            }
        })
    }
}

impl From<Datum> for DatumRepr {
    fn from(d: Datum) -> Self {
        match d {
            Datum::Bool(b) => DatumRepr::Bool(b),
            Datum::Int(i) => DatumRepr::Int(i),
            Datum::Str(s) => DatumRepr::Str(s),
            Datum::Tuple(items) => DatumRepr::Tuple(items),
            Datum::Record { ty, fields } => DatumRepr::Record(BTreeMap::from([(ty, fields)])),
        }
    }
}
