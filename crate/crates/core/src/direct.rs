//! Solving the complete MILP by branch and bound.

use std::time::Instant;

use thiserror::Error;

use crate::formulation::{build_full_milp, VarIndex};
use crate::lp::LpError;
use crate::mip::{solve_bnb, MipOptions, MipStatus, NoHook};
use crate::model::{Instance, TripId};
use crate::plan::{ChargingPlan, PlanError, CHARGE_TOL};

#[derive(Debug, Error)]
pub enum DirectError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Debug, Clone)]
pub struct DirectOutcome {
    pub status: MipStatus,
    pub plan: Option<ChargingPlan>,
    pub bound: f64,
    pub nodes: usize,
    pub wall_s: f64,
}

/// Full variable vector for `plan`, usable as a starting incumbent.
pub fn plan_values(inst: &Instance, idx: &VarIndex, n_vars: usize, plan: &ChargingPlan) -> Vec<f64> {
    let mut v = vec![0.0; n_vars];
    for i in inst.trip_ids() {
        if let Some(x) = idx.x(i) {
            v[x.0] = f64::from(u8::from(plan.is_charging(i)));
        }
        if let Some(t) = idx.t(i) {
            v[t.0] = plan.charge_min[i.0];
        }
        v[idx.p(i).0] = plan.plugin_min[i.0];
        v[idx.d(i).0] = plan.delay_min[i.0];
    }
    for a in plan.arcs(inst) {
        if let Some(y) = idx.y(a) {
            v[y.0] = 1.0;
        }
    }
    v
}

/// Charging plan read off a MILP solution: trips that actually charge are
/// queued in order of plug-in time.
pub fn plan_from_values(inst: &Instance, idx: &VarIndex, vals: &[f64]) -> Result<ChargingPlan, PlanError> {
    let mut charge = vec![0.0; inst.trips().len()];
    let mut sequences: Vec<Vec<TripId>> = vec![Vec::new(); inst.chargers().len()];
    for i in inst.trip_ids() {
        if let (Some(t), Some(l)) = (idx.t(i), inst.charger_after(i)) {
            let m = vals[t.0];
            if m > CHARGE_TOL {
                charge[i.0] = m.min(inst.tmax_min(l, i));
                sequences[l.0].push(i);
            }
        }
    }
    for seq in &mut sequences {
        seq.sort_by(|&a, &b| {
            vals[idx.p(a).0]
                .total_cmp(&vals[idx.p(b).0])
                .then_with(|| inst.key(a).cmp(&inst.key(b)))
        });
    }
    ChargingPlan::settle(inst, sequences, charge)
}

pub fn solve_direct(
    inst: &Instance,
    opts: &MipOptions,
    warm: Option<&ChargingPlan>,
) -> Result<DirectOutcome, DirectError> {
    let start = Instant::now();
    let (mut mip, idx, _) = build_full_milp(inst);
    let start_vals = warm.map(|p| plan_values(inst, &idx, mip.lp.num_vars(), p));
    let res = solve_bnb(&mut mip, opts, &mut NoHook, start_vals.as_deref())?;
    let plan = match &res.values {
        Some(v) => Some(plan_from_values(inst, &idx, v)?),
        None => None,
    };
    Ok(DirectOutcome {
        status: res.status,
        plan,
        bound: res.bound,
        nodes: res.nodes,
        wall_s: start.elapsed().as_secs_f64(),
    })
}
