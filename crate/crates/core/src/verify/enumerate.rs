use rayon::prelude::*;

use super::{BoundConfig, VerifyError};
use crate::crdt::{CrdtKind, MergeValue};
use crate::eval::{self, Store};
use crate::program::CheckedProgram;

/// All stores within bounds, ordered by total weight, then
/// lexicographically by the per-source choice.
pub fn enumerate_stores(p: &CheckedProgram, cfg: &BoundConfig) -> Result<Vec<Store>, VerifyError> {
    let groups: Vec<Vec<Vec<MergeValue>>> = p
        .sources
        .iter()
        .map(|s| cfg.source_values(p, &s.ty))
        .collect::<Result<_, _>>()?;
    let budgeted: Vec<bool> = p.sources.iter().map(|s| s.kind() == CrdtKind::AWSet).collect();

    // choice per source: (weight, index within weight group)
    let mut out: Vec<(usize, Vec<(usize, usize)>)> = Vec::new();
    let mut current = Vec::new();
    build(&groups, &budgeted, cfg, 0, 0, &mut current, &mut out)?;
    out.sort();
    Ok(out
        .into_iter()
        .map(|(_, choice)| {
            Store::new(
                choice
                    .iter()
                    .enumerate()
                    .map(|(s, &(w, i))| groups[s][w][i].clone())
                    .collect(),
            )
        })
        .collect())
}

fn build(
    groups: &[Vec<Vec<MergeValue>>],
    budgeted: &[bool],
    cfg: &BoundConfig,
    used: usize,
    weight: usize,
    current: &mut Vec<(usize, usize)>,
    out: &mut Vec<(usize, Vec<(usize, usize)>)>,
) -> Result<(), VerifyError> {
    let s = current.len();
    if s == groups.len() {
        out.push((weight, current.clone()));
        if out.len() as u64 > cfg.enumeration_cap {
            return Err(VerifyError::BoundsTooLarge {
                what: "stores".into(),
                size: out.len() as u64,
                cap: cfg.enumeration_cap,
            });
        }
        return Ok(());
    }
    for (w, group) in groups[s].iter().enumerate() {
        let next_used = if budgeted[s] { used + w } else { used };
        if next_used > cfg.max_store_elements {
            break;
        }
        for i in 0..group.len() {
            current.push((w, i));
            build(groups, budgeted, cfg, next_used, weight + w, current, out)?;
            current.pop();
        }
    }
    Ok(())
}

/// Stores within bounds on which every invariant holds, in enumeration order.
pub fn valid_stores(p: &CheckedProgram, cfg: &BoundConfig) -> Result<Vec<Store>, VerifyError> {
    let all = enumerate_stores(p, cfg)?;
    let flags: Vec<bool> = all
        .par_iter()
        .map(|s| eval::is_valid(p, s))
        .collect::<Result<_, _>>()?;
    Ok(all
        .into_iter()
        .zip(flags)
        .filter_map(|(s, ok)| ok.then_some(s))
        .collect())
}
