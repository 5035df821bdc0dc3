//! Best-bound branch and bound for LPs with binary variables.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use log::debug;

use crate::lp::{Constraint, LinearProgram, LpError, LpStatus, SimplexOptions, VarId, FEAS_TOL};

/// Integrality tolerance on binary values.
pub const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct MixedIntegerProgram {
    pub lp: LinearProgram,
    binaries: Vec<VarId>,
}

impl MixedIntegerProgram {
    pub fn new(lp: LinearProgram) -> Self {
        MixedIntegerProgram {
            lp,
            binaries: Vec::new(),
        }
    }

    /// Marks `v` binary and clamps its bounds to [0, 1].
    pub fn mark_binary(&mut self, v: VarId) {
        let var = self.lp.var(v);
        let (lo, hi) = (var.lower.max(0.0), var.upper.min(1.0));
        self.lp.set_bounds(v, lo, hi);
        if !self.binaries.contains(&v) {
            self.binaries.push(v);
            self.binaries.sort();
        }
    }

    pub fn add_binary(&mut self, name: impl Into<String>, cost: f64) -> VarId {
        let v = self.lp.add_var(name, 0.0, 1.0, cost);
        self.binaries.push(v);
        v
    }

    pub fn binaries(&self) -> &[VarId] {
        &self.binaries
    }

    pub fn is_integral(&self, x: &[f64]) -> bool {
        self.binaries.iter().all(|v| frac(x[v.0]) <= INT_TOL)
    }
}

fn frac(v: f64) -> f64 {
    (v - v.round()).abs()
}

/// Picks the most fractional binary, lowest id on ties. `None` when all
/// binaries are integral.
pub fn branch_select(values: &[f64], binaries: &[VarId]) -> Option<VarId> {
    let mut best: Option<(VarId, f64)> = None;
    for &v in binaries {
        let f = frac(values[v.0]);
        if f <= INT_TOL {
            continue;
        }
        match best {
            Some((b, bf)) if f < bf || (f == bf && b < v) => {}
            _ => best = Some((v, f)),
        }
    }
    best.map(|(v, _)| v)
}

#[derive(Debug, Clone)]
pub struct MipOptions {
    pub time_limit: Option<Duration>,
    /// Absolute gap, scaled by `max(1, |incumbent|)`.
    pub gap_tol: f64,
    pub node_limit: Option<usize>,
    pub simplex: SimplexOptions,
}

impl Default for MipOptions {
    fn default() -> Self {
        MipOptions {
            time_limit: None,
            gap_tol: 1e-6,
            node_limit: None,
            simplex: SimplexOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MipStatus {
    Optimal,
    Infeasible,
    /// Stopped by the time or node limit.
    TimeLimit,
}

#[derive(Debug, Clone)]
pub struct MipResult {
    pub status: MipStatus,
    pub values: Option<Vec<f64>>,
    pub objective: f64,
    pub bound: f64,
    pub nodes: usize,
    pub lazy_rows: usize,
}

/// Lazy-constraint callback: sees every integral candidate before it is
/// accepted and returns rows it violates (empty to accept).
pub trait LazyHook {
    fn check(&mut self, values: &[f64]) -> Vec<Constraint>;
}

impl<F: FnMut(&[f64]) -> Vec<Constraint>> LazyHook for F {
    fn check(&mut self, values: &[f64]) -> Vec<Constraint> {
        self(values)
    }
}

/// Accepts everything.
pub struct NoHook;

impl LazyHook for NoHook {
    fn check(&mut self, _: &[f64]) -> Vec<Constraint> {
        Vec::new()
    }
}

struct Node {
    bound: f64,
    id: usize,
    fixings: Vec<(VarId, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // max-heap: smallest bound first, then most recent
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.id.cmp(&other.id))
    }
}

fn push_row(lp: &mut LinearProgram, row: Constraint) {
    match row.tag {
        Some(tag) => lp.add_tagged_row(row.name, row.coeffs, row.sense, row.rhs, tag),
        None => lp.add_row(row.name, row.coeffs, row.sense, row.rhs),
    };
}

/// Solves `mip` to optimality (within `gap_tol`) or until a limit is hit.
///
/// Rows returned by the hook are appended to `mip.lp` and stay there, so the
/// caller sees every lazily added constraint afterwards. `warm_start`, when
/// feasible and accepted by the hook, primes the incumbent.
pub fn solve_bnb(
    mip: &mut MixedIntegerProgram,
    opts: &MipOptions,
    hook: &mut dyn LazyHook,
    warm_start: Option<&[f64]>,
) -> Result<MipResult, LpError> {
    let start = Instant::now();
    let base: Vec<(f64, f64)> = mip.lp.vars().iter().map(|v| (v.lower, v.upper)).collect();
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut lazy_rows = 0;

    if let Some(x) = warm_start {
        if x.len() == mip.lp.num_vars() && mip.is_integral(x) && mip.lp.max_violation(x) <= FEAS_TOL {
            let rows = hook.check(x);
            if rows.is_empty() {
                incumbent = Some((mip.lp.objective_value(x), x.to_vec()));
            } else {
                for r in rows {
                    lazy_rows += 1;
                    push_row(&mut mip.lp, r);
                }
                if mip.lp.max_violation(x) <= FEAS_TOL {
                    incumbent = Some((mip.lp.objective_value(x), x.to_vec()));
                }
            }
        }
    }

    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        id: 0,
        fixings: Vec::new(),
    });
    let mut next_id = 1;
    let mut nodes = 0;
    let mut global_bound = f64::NEG_INFINITY;
    let mut bounds = base.clone();

    let cutoff = |inc: &Option<(f64, Vec<f64>)>| -> f64 {
        match inc {
            Some((z, _)) => z - opts.gap_tol * z.abs().max(1.0),
            None => f64::INFINITY,
        }
    };

    while let Some(node) = heap.pop() {
        if node.bound >= cutoff(&incumbent) {
            continue;
        }
        global_bound = global_bound.max(node.bound);
        let out_of_time = opts.time_limit.is_some_and(|t| start.elapsed() >= t);
        let out_of_nodes = opts.node_limit.is_some_and(|n| nodes >= n);
        if out_of_time || out_of_nodes {
            heap.push(node);
            return Ok(finish(MipStatus::TimeLimit, incumbent, &heap, global_bound, nodes, lazy_rows));
        }
        nodes += 1;

        bounds.copy_from_slice(&base);
        for &(v, val) in &node.fixings {
            bounds[v.0] = (val, val);
        }
        loop {
            let sol = mip.lp.solve_with(&opts.simplex, Some(&bounds), None)?;
            match sol.status {
                LpStatus::Infeasible => break,
                LpStatus::Unbounded => {
                    return Err(LpError::Numerical("unbounded relaxation".into()));
                }
                LpStatus::Optimal => {}
            }
            if sol.objective >= cutoff(&incumbent) {
                break;
            }
            if let Some(v) = branch_select(&sol.values, &mip.binaries) {
                for val in [0.0, 1.0] {
                    let mut fixings = node.fixings.clone();
                    fixings.push((v, val));
                    heap.push(Node {
                        bound: sol.objective,
                        id: next_id,
                        fixings,
                    });
                    next_id += 1;
                }
                break;
            }
            let mut values = sol.values;
            for v in &mip.binaries {
                values[v.0] = values[v.0].round();
            }
            let rows = hook.check(&values);
            if rows.is_empty() {
                debug!(
                    "node {nodes}: incumbent {:.6} (bound {:.6}, open {})",
                    sol.objective,
                    global_bound,
                    heap.len()
                );
                incumbent = Some((sol.objective, values));
                break;
            }
            for r in rows {
                lazy_rows += 1;
                push_row(&mut mip.lp, r);
            }
        }
    }

    let status = if incumbent.is_some() {
        MipStatus::Optimal
    } else {
        MipStatus::Infeasible
    };
    Ok(finish(status, incumbent, &heap, global_bound, nodes, lazy_rows))
}

fn finish(
    status: MipStatus,
    incumbent: Option<(f64, Vec<f64>)>,
    heap: &BinaryHeap<Node>,
    global_bound: f64,
    nodes: usize,
    lazy_rows: usize,
) -> MipResult {
    let (objective, values) = match incumbent {
        Some((z, x)) => (z, Some(x)),
        None => (f64::INFINITY, None),
    };
    let open = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let bound = match status {
        MipStatus::Optimal => objective,
        MipStatus::Infeasible => f64::INFINITY,
        MipStatus::TimeLimit => open.min(objective).max(global_bound),
    };
    MipResult {
        status,
        values,
        objective,
        bound,
        nodes,
        lazy_rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::Sense;

    #[test]
    fn most_fractional_wins() {
        let vals = [0.5, 0.4, 1.0];
        let bins = [VarId(0), VarId(1), VarId(2)];
        assert_eq!(branch_select(&vals, &bins), Some(VarId(0)));
        let vals = [0.4, 0.5];
        assert_eq!(branch_select(&vals, &bins[..2]), Some(VarId(1)));
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let vals = [0.5, 0.5, 0.5];
        let bins = [VarId(2), VarId(1), VarId(0)];
        assert_eq!(branch_select(&vals, &bins), Some(VarId(0)));
    }

    #[test]
    fn integral_point_has_no_branch() {
        assert_eq!(branch_select(&[0.0, 1.0, 1.0 - 1e-9], &[VarId(0), VarId(1), VarId(2)]), None);
    }

    #[test]
    fn tiny_knapsack() {
        // max 3a + 2b, a + b <= 1
        let mut mip = MixedIntegerProgram::new(LinearProgram::new());
        let a = mip.add_binary("a", -3.0);
        let b = mip.add_binary("b", -2.0);
        mip.lp.add_row("cap", vec![(a, 1.0), (b, 1.0)], Sense::Le, 1.0);
        let r = solve_bnb(&mut mip, &MipOptions::default(), &mut NoHook, None).unwrap();
        assert_eq!(r.status, MipStatus::Optimal);
        assert!((r.objective + 3.0).abs() < 1e-9);
    }

    #[test]
    fn fractional_relaxation_is_branched() {
        // max 5a + 4b + 3c, 2a + 3b + c <= 5, 4a + b + 2c <= 11, 3a + 4b + 2c <= 8
        let mut mip = MixedIntegerProgram::new(LinearProgram::new());
        let x: Vec<VarId> = ["a", "b", "c"]
            .iter()
            .zip([-5.0, -4.0, -3.0])
            .map(|(n, c)| mip.add_binary(*n, c))
            .collect();
        mip.lp.add_row("r1", vec![(x[0], 2.0), (x[1], 3.0), (x[2], 1.0)], Sense::Le, 5.0);
        mip.lp.add_row("r2", vec![(x[0], 4.0), (x[1], 1.0), (x[2], 2.0)], Sense::Le, 11.0);
        mip.lp.add_row("r3", vec![(x[0], 3.0), (x[1], 4.0), (x[2], 2.0)], Sense::Le, 8.0);
        mip.lp.add_row("r4", vec![(x[0], 1.0), (x[1], 1.0), (x[2], 1.0)], Sense::Le, 2.5);
        let r = solve_bnb(&mut mip, &MipOptions::default(), &mut NoHook, None).unwrap();
        assert_eq!(r.status, MipStatus::Optimal);
        // a and b
        assert!((r.objective + 9.0).abs() < 1e-9);
        assert!(r.nodes > 1);
    }

    #[test]
    fn hook_rows_are_respected() {
        let mut mip = MixedIntegerProgram::new(LinearProgram::new());
        let a = mip.add_binary("a", -3.0);
        let b = mip.add_binary("b", -2.0);
        let mut seen = 0;
        let mut hook = |x: &[f64]| {
            seen += 1;
            if x[a.0] > 0.5 && x[b.0] > 0.5 {
                vec![Constraint {
                    name: "not both".into(),
                    coeffs: vec![(a, 1.0), (b, 1.0)],
                    sense: Sense::Le,
                    rhs: 1.0,
                    tag: None,
                }]
            } else {
                Vec::new()
            }
        };
        let r = solve_bnb(&mut mip, &MipOptions::default(), &mut hook, None).unwrap();
        assert!((r.objective + 3.0).abs() < 1e-9);
        assert_eq!(r.lazy_rows, 1);
        assert_eq!(mip.lp.num_rows(), 1);
        assert!(seen >= 2);
    }

    #[test]
    fn infeasible_program() {
        let mut mip = MixedIntegerProgram::new(LinearProgram::new());
        let a = mip.add_binary("a", 1.0);
        mip.lp.add_row("r", vec![(a, 2.0)], Sense::Eq, 1.0);
        let r = solve_bnb(&mut mip, &MipOptions::default(), &mut NoHook, None).unwrap();
        assert_eq!(r.status, MipStatus::Infeasible);
        assert!(r.values.is_none());
    }

    #[test]
    fn warm_start_prunes_the_root() {
        let mut mip = MixedIntegerProgram::new(LinearProgram::new());
        let a = mip.add_binary("a", 1.0);
        let b = mip.add_binary("b", 1.0);
        mip.lp.add_row("r", vec![(a, 1.0), (b, 1.0)], Sense::Ge, 1.0);
        let r = solve_bnb(&mut mip, &MipOptions::default(), &mut NoHook, Some(&[0.0, 1.0])).unwrap();
        assert_eq!(r.status, MipStatus::Optimal);
        assert!((r.objective - 1.0).abs() < 1e-9);
        assert_eq!(r.values.unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn zero_node_limit_reports_time_limit() {
        let mut mip = MixedIntegerProgram::new(LinearProgram::new());
        mip.add_binary("a", -1.0);
        let opts = MipOptions {
            node_limit: Some(0),
            ..MipOptions::default()
        };
        let r = solve_bnb(&mut mip, &opts, &mut NoHook, None).unwrap();
        assert_eq!(r.status, MipStatus::TimeLimit);
        assert!(r.values.is_none());
    }
}
