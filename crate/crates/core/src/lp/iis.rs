use std::collections::HashSet;

use thiserror::Error;

use super::{LinearProgram, LpError, LpStatus, SimplexOptions, Tag};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IisError {
    #[error("LP is not infeasible")]
    NotInfeasible,
    #[error("infeasibility not caused by candidates")]
    NotCausedByCandidates,
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Shrinks the tagged rows of an infeasible LP to an irreducible set by
/// deletion filtering.
///
/// Untagged rows (and rows whose tag is not a candidate) stay in the model
/// throughout. Candidates are tried in the given order: each is dropped, and
/// put back only if the model becomes feasible without it. The returned tags
/// keep the model infeasible, and removing any single one restores
/// feasibility.
pub fn deletion_filter_iis(lp: &LinearProgram, candidates: &[Tag]) -> Result<Vec<Tag>, IisError> {
    let opts = SimplexOptions::default();
    let candidate_set: HashSet<Tag> = candidates.iter().copied().collect();
    let mut removed: HashSet<Tag> = HashSet::new();

    let mask_for = |removed: &HashSet<Tag>| -> Vec<bool> {
        lp.rows()
            .iter()
            .map(|r| r.tag.map_or(true, |t| !removed.contains(&t)))
            .collect()
    };
    let infeasible = |removed: &HashSet<Tag>| -> Result<bool, IisError> {
        let mask = mask_for(removed);
        Ok(lp.solve_with(&opts, None, Some(&mask))?.status == LpStatus::Infeasible)
    };

    if !infeasible(&removed)? {
        return Err(IisError::NotInfeasible);
    }
    if infeasible(&candidate_set)? {
        return Err(IisError::NotCausedByCandidates);
    }

    let mut seen = HashSet::new();
    for &c in candidates {
        if !seen.insert(c) {
            continue;
        }
        removed.insert(c);
        if !infeasible(&removed)? {
            removed.remove(&c);
        }
    }
    let mut seen = HashSet::new();
    Ok(candidates
        .iter()
        .copied()
        .filter(|c| !removed.contains(c) && seen.insert(*c))
        .collect())
}

/// True if the rows tagged `subset` (plus all rows not tagged by any of
/// `candidates`) are infeasible, and dropping any single member of `subset`
/// makes them feasible.
pub fn is_irreducible(lp: &LinearProgram, candidates: &[Tag], subset: &[Tag]) -> Result<bool, LpError> {
    let opts = SimplexOptions::default();
    let cand: HashSet<Tag> = candidates.iter().copied().collect();
    let keep: HashSet<Tag> = subset.iter().copied().collect();
    let solve = |drop: Option<Tag>| -> Result<bool, LpError> {
        let mask: Vec<bool> = lp
            .rows()
            .iter()
            .map(|r| match r.tag {
                Some(t) if cand.contains(&t) => keep.contains(&t) && Some(t) != drop,
                _ => true,
            })
            .collect();
        Ok(lp.solve_with(&opts, None, Some(&mask))?.status == LpStatus::Infeasible)
    };
    if !solve(None)? {
        return Ok(false);
    }
    for &t in subset {
        if solve(Some(t))? {
            return Ok(false);
        }
    }
    Ok(true)
}
