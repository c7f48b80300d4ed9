use super::{Env, EvalCtx, EvalError, Store, Value};
use crate::crdt::{Datum, MergeValue, ReplicaId};
use crate::program::{datum_has_type, CheckedProgram, Clause, InteractionDef};

/// Result of running one interaction on a store (locks are not considered
/// here; see the runtime).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    /// The requires clause with this 0-based index evaluated to false.
    Disabled { clause: usize },
    /// Executes ran and its values were merged into the store.
    /// `failed_ensures` names the first ensures clause that did not hold.
    Applied {
        store: Store,
        failed_ensures: Option<usize>,
    },
}

impl Outcome {
    pub fn store(&self) -> Option<&Store> {
        match self {
            Outcome::Applied { store, .. } => Some(store),
            Outcome::Disabled { .. } => None,
        }
    }
}

pub fn check_argument(a: &InteractionDef, arg: &Datum) -> Result<(), EvalError> {
    if datum_has_type(arg, &a.arg_type) {
        Ok(())
    } else {
        Err(EvalError::ArgumentType {
            arg: arg.clone(),
            expected: a.arg_type.clone(),
        })
    }
}

fn clause_env(clause: &Clause, store: &Store, a: &InteractionDef, arg: &Datum) -> Env {
    let mut env = Env::empty();
    for (name, &src) in clause.params.iter().zip(&a.modifies) {
        let v = store.get(src).cloned().expect("store matches program");
        env = env.bind(name, Value::Crdt(v));
    }
    if let Some(last) = clause.params.last() {
        env = env.bind(last, Value::Data(arg.clone()));
    }
    env
}

/// Interact rule without the lock check: evaluate the requires clauses on
/// `store`, run executes as `actor`, merge the results into the modified
/// sources, then evaluate the ensures clauses on the new store.
pub fn apply_interaction(
    p: &CheckedProgram,
    store: &Store,
    actor: ReplicaId,
    a: &InteractionDef,
    arg: &Datum,
) -> Result<Outcome, EvalError> {
    check_argument(a, arg)?;
    let ctx = EvalCtx::new(p, store).with_actor(actor).with_arg(Some(arg.clone()));
    for (k, clause) in a.requires.iter().enumerate() {
        if !ctx.eval_bool(&clause.body, &clause_env(clause, store, a, arg))? {
            return Ok(Outcome::Disabled { clause: k });
        }
    }
    let result = ctx.eval(&a.executes.body, &clause_env(&a.executes, store, a, arg))?;
    let parts = if a.modifies.len() == 1 {
        vec![result]
    } else {
        result.into_components()
    };
    if parts.len() != a.modifies.len() {
        return Err(EvalError::Stuck(format!(
            "executes of `{}` produced {} values for {} reactives",
            a.name,
            parts.len(),
            a.modifies.len()
        )));
    }
    let values = parts
        .into_iter()
        .map(|v| match v {
            Value::Crdt(m) => Ok(m),
            v => Err(EvalError::Stuck(format!("executes produced non-replicated value {v}"))),
        })
        .collect::<Result<Vec<MergeValue>, _>>()?;
    let next = store.update(&a.modifies, &values)?;
    let post = EvalCtx::new(p, &next).with_actor(actor).with_arg(Some(arg.clone()));
    let mut failed_ensures = None;
    for (k, clause) in a.ensures.iter().enumerate() {
        if !post.eval_bool(&clause.body, &clause_env(clause, &next, a, arg))? {
            failed_ensures = Some(k);
            break;
        }
    }
    Ok(Outcome::Applied {
        store: next,
        failed_ensures,
    })
}
