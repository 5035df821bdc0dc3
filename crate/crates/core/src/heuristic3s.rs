//! Select, sequence, schedule: a randomized multi-start heuristic.
//!
//! Each iteration draws random charging costs, picks charging stops with one
//! small LP per bus that ignores the other buses, orders each charger's
//! queue by the resulting plug-in times and finally schedules that order
//! exactly.

use std::io::Write;
use std::ops::Range;
use std::time::Instant;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::formulation::build_schedule_lp;
use crate::lp::{LinearProgram, LpError, LpStatus, Sense, VarId};
use crate::model::{BusId, Instance, TripId};
use crate::plan::{charges_from, ChargingPlan, PlanError, CHARGE_TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicConfig {
    pub iterations: usize,
    pub theta_std: f64,
    pub seed: u64,
    pub stop_on_zero: bool,
    /// Plans within this fraction above the best are kept in the pool.
    pub keep_fraction_for_cuts: f64,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        HeuristicConfig {
            iterations: 500,
            theta_std: 0.5,
            seed: 0,
            stop_on_zero: true,
            keep_fraction_for_cuts: 0.5,
        }
    }
}

impl HeuristicConfig {
    pub fn validate(&self) -> Result<(), HeuristicError> {
        if self.iterations == 0 {
            return Err(HeuristicError::Config("iterations must be at least 1".into()));
        }
        if !(self.theta_std >= 0.0) || !self.theta_std.is_finite() {
            return Err(HeuristicError::Config(format!("theta_std {} must be >= 0", self.theta_std)));
        }
        if !(self.keep_fraction_for_cuts >= 0.0) {
            return Err(HeuristicError::Config("keep fraction must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum HeuristicError {
    #[error("bus {bus}: charge windows cannot be met")]
    Unreachable { bus: String },
    #[error("scheduling LP infeasible for a selected plan: {0}")]
    Schedule(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

/// First-stage decisions for every trip.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub charge_min: Vec<f64>,
    pub delay_min: Vec<f64>,
    pub charging: Vec<bool>,
    /// Expected plug-in time; meaningful only where `charging`.
    pub plugin_min: Vec<f64>,
}

/// Per-bus selection LP with placeholder costs on the charging times.
struct BusLp {
    bus: BusId,
    lp: LinearProgram,
    t: Vec<(TripId, VarId)>,
    d: Vec<(TripId, VarId)>,
}

fn bus_lp(inst: &Instance, b: BusId) -> BusLp {
    let mut lp = LinearProgram::new();
    let mut t = Vec::new();
    let mut d = Vec::new();
    let mut t_of = vec![None; inst.trips().len()];
    for i in inst.block(b) {
        let key = inst.key(i);
        d.push((i, lp.add_var(format!("d[{key}]"), 0.0, f64::INFINITY, 1.0)));
        if let Some(l) = inst.charger_after(i) {
            let v = lp.add_var(format!("t[{key}]"), 0.0, inst.tmax_min(l, i), 0.0);
            t.push((i, v));
            t_of[i.0] = Some(v);
        }
    }
    let d_of = |i: TripId| d.iter().find(|(k, _)| *k == i).map(|(_, v)| *v).unwrap();
    for i in inst.block(b) {
        if let Some(h) = inst.prev(i) {
            // d_i >= d_h + end_h + t_h - start_i
            let mut coeffs = vec![(d_of(i), 1.0), (d_of(h), -1.0)];
            if let Some(th) = t_of[h.0] {
                coeffs.push((th, -1.0));
            }
            let rhs = inst.trip(h).sched_end_min() - inst.trip(i).sched_start_min;
            lp.add_row(format!("delay[{}]", inst.key(i)), coeffs, Sense::Ge, rhs);
        }
    }
    for cp in inst.bounds().for_bus(b) {
        let coeffs: Vec<(VarId, f64)> = inst
            .block(b)
            .take(cp.covers)
            .filter_map(|j| t_of[j.0].map(|v| (v, inst.kwh_per_min(inst.charger_after(j).unwrap()))))
            .collect();
        if coeffs.is_empty() {
            continue;
        }
        let reach: f64 = inst
            .block(b)
            .take(cp.covers)
            .filter_map(|j| inst.charger_after(j).map(|l| inst.kwh_per_min(l) * inst.tmax_min(l, j)))
            .sum();
        if cp.alpha_kwh > 0.0 {
            lp.add_row("soc.lo", coeffs.clone(), Sense::Ge, cp.alpha_kwh);
        }
        if cp.beta_kwh < reach {
            lp.add_row("soc.hi", coeffs, Sense::Le, cp.beta_kwh);
        }
    }
    BusLp { bus: b, lp, t, d }
}

/// Random charging costs, one per trip that ends at a charger (zero
/// elsewhere).
pub fn draw_theta(inst: &Instance, std: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, std).expect("finite nonnegative std");
    inst.trip_ids()
        .map(|i| {
            if inst.charger_after(i).is_some() {
                normal.sample(rng)
            } else {
                0.0
            }
        })
        .collect()
}

/// Phase 1: one LP per bus minimizing its own delay plus the random
/// charging costs `theta`, ignoring the queues at chargers.
pub fn phase1_select(inst: &Instance, theta: &[f64]) -> Result<Selection, HeuristicError> {
    let lps: Vec<BusLp> = inst.bus_ids().map(|b| bus_lp(inst, b)).collect();
    select_with(inst, &lps, theta)
}

fn select_with(inst: &Instance, lps: &[BusLp], theta: &[f64]) -> Result<Selection, HeuristicError> {
    let n = inst.trips().len();
    let mut sel = Selection {
        charge_min: vec![0.0; n],
        delay_min: vec![0.0; n],
        charging: vec![false; n],
        plugin_min: inst.trips().iter().map(|t| t.sched_end_min()).collect(),
    };
    for bl in lps {
        let mut lp = bl.lp.clone();
        for &(i, v) in &bl.t {
            lp.set_cost(v, theta[i.0]);
        }
        let sol = lp.solve()?;
        if sol.status != LpStatus::Optimal {
            return Err(HeuristicError::Unreachable {
                bus: inst.bus(bl.bus).id.clone(),
            });
        }
        for &(i, v) in &bl.d {
            sel.delay_min[i.0] = sol.value(v).max(0.0);
        }
        for &(i, v) in &bl.t {
            let t = sol.value(v);
            if t > CHARGE_TOL {
                sel.charge_min[i.0] = t;
                sel.charging[i.0] = true;
            }
        }
    }
    for i in inst.trip_ids() {
        sel.plugin_min[i.0] = sel.delay_min[i.0] + inst.trip(i).sched_end_min();
    }
    Ok(sel)
}

/// Phase 2: each charger serves its selected trips in order of expected
/// plug-in time, ties by bus id and trip.
pub fn phase2_sequence(inst: &Instance, sel: &Selection) -> Vec<Vec<TripId>> {
    let mut out = vec![Vec::new(); inst.chargers().len()];
    for i in inst.trip_ids() {
        if sel.charging[i.0] {
            if let Some(l) = inst.charger_after(i) {
                out[l.0].push(i);
            }
        }
    }
    for seq in &mut out {
        seq.sort_by(|&a, &b| {
            sel.plugin_min[a.0]
                .total_cmp(&sel.plugin_min[b.0])
                .then_with(|| inst.key(a).cmp(&inst.key(b)))
        });
    }
    out
}

/// Phase 3: exact charging times and delays for fixed queues. Plug-in times
/// and delays are the earliest consistent with the optimal charging times.
pub fn phase3_schedule(inst: &Instance, sequences: Vec<Vec<TripId>>) -> Result<ChargingPlan, HeuristicError> {
    let probe = ChargingPlan {
        sequences,
        charge_min: Vec::new(),
        plugin_min: Vec::new(),
        delay_min: Vec::new(),
        objective: 0.0,
    };
    let arcs = probe.arcs(inst);
    let skip = probe.skipped(inst);
    let sp = build_schedule_lp(inst, &arcs, &skip, None);
    let sol = sp.lp.solve()?;
    if sol.status != LpStatus::Optimal {
        return Err(HeuristicError::Schedule(format!("{:?}", sol.status)));
    }
    let charge = charges_from(inst, &sp.index, &sol);
    let plan = ChargingPlan::settle(inst, probe.sequences, charge)?;
    if plan.objective > sol.objective + 1e-6 * sol.objective.abs().max(1.0) {
        return Err(HeuristicError::Schedule(format!(
            "earliest schedule has delay {} above LP optimum {}",
            plan.objective, sol.objective
        )));
    }
    Ok(plan)
}

/// One full pass with the given costs.
pub fn run_once(inst: &Instance, theta: &[f64]) -> Result<ChargingPlan, HeuristicError> {
    let sel = phase1_select(inst, theta)?;
    phase3_schedule(inst, phase2_sequence(inst, &sel))
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub best: f64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub iteration: usize,
    pub plan: ChargingPlan,
}

#[derive(Debug, Clone)]
pub struct HeuristicRun {
    pub best: ChargingPlan,
    pub best_iteration: usize,
    /// Seconds from start until the best plan was found.
    pub time_to_best_s: f64,
    pub total_s: f64,
    pub iterations_run: usize,
    /// Distinct plans within the keep fraction of the best, best first.
    pub pool: Vec<PoolEntry>,
    pub records: Vec<IterationRecord>,
    /// LPs solved in total: buses plus one per iteration.
    pub lp_solves: usize,
}

impl HeuristicRun {
    pub fn write_log<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// How iterations are spread over threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Uses the global rayon pool; same as sequential without the
    /// `parallel` feature.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Iterations are evaluated in fixed-size batches so that early stopping
/// gives the same answer however many threads run a batch.
const BATCH: usize = 16;

fn iteration_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

type Outcome = Result<(ChargingPlan, f64), HeuristicError>;

fn run_batch(inst: &Instance, lps: &[BusLp], cfg: &HeuristicConfig, ks: Range<usize>, start: Instant, exec: Execution) -> Vec<Outcome> {
    let one = |k: usize| -> Outcome {
        let mut rng = iteration_rng(cfg.seed, k);
        let theta = draw_theta(inst, cfg.theta_std, &mut rng);
        let sel = select_with(inst, lps, &theta)?;
        let plan = phase3_schedule(inst, phase2_sequence(inst, &sel))?;
        Ok((plan, start.elapsed().as_secs_f64()))
    };
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            ks.into_par_iter().map(one).collect()
        }
        _ => ks.map(one).collect(),
    }
}

// BusLp holds only plain data; shared read-only across worker threads.
#[cfg(feature = "parallel")]
const _: fn() = || {
    fn assert_sync<T: Sync>() {}
    assert_sync::<BusLp>();
};

pub fn run_3s(inst: &Instance, cfg: &HeuristicConfig) -> Result<HeuristicRun, HeuristicError> {
    run_3s_with(inst, cfg, Execution::default())
}

/// Runs up to `cfg.iterations` passes and keeps the best plan. With
/// `stop_on_zero` the run ends at the first zero-delay plan.
pub fn run_3s_with(inst: &Instance, cfg: &HeuristicConfig, exec: Execution) -> Result<HeuristicRun, HeuristicError> {
    cfg.validate()?;
    let start = Instant::now();
    let lps: Vec<BusLp> = inst.bus_ids().map(|b| bus_lp(inst, b)).collect();
    let mut plans: Vec<(usize, ChargingPlan, f64)> = Vec::new();
    let mut records = Vec::new();
    let mut best: Option<(f64, usize)> = None;
    let mut done = 0;
    'outer: while done < cfg.iterations {
        let end = (done + BATCH).min(cfg.iterations);
        let results = run_batch(inst, &lps, cfg, done..end, start, exec);
        for (off, r) in results.into_iter().enumerate() {
            let k = done + off;
            let (plan, at) = r?;
            if best.map_or(true, |(b, _)| plan.objective < b) {
                best = Some((plan.objective, k));
            }
            records.push(IterationRecord {
                iteration: k + 1,
                objective: plan.objective,
                best: best.unwrap().0,
                elapsed_s: at,
            });
            let zero = plan.objective <= 0.0;
            plans.push((k, plan, at));
            if zero && cfg.stop_on_zero {
                debug!("zero-delay plan on iteration {}", k + 1);
                break 'outer;
            }
        }
        done = end;
    }
    let iterations_run = plans.len();
    let (best_obj, best_k) = best.expect("at least one iteration");
    let time_to_best_s = plans[best_k].2;

    let limit = best_obj * (1.0 + cfg.keep_fraction_for_cuts);
    let mut kept: Vec<&(usize, ChargingPlan, f64)> =
        plans.iter().filter(|(_, p, _)| p.objective <= limit).collect();
    kept.sort_by(|a, b| a.1.objective.total_cmp(&b.1.objective).then(a.0.cmp(&b.0)));
    let mut pool: Vec<PoolEntry> = Vec::new();
    for (k, p, _) in kept {
        if !pool.iter().any(|e| e.plan.sequences == p.sequences) {
            pool.push(PoolEntry {
                iteration: k + 1,
                plan: p.clone(),
            });
        }
    }
    let best = plans[best_k].1.clone();
    info!(
        "3S: best {:.4} min after {} of {} iterations",
        best_obj,
        best_k + 1,
        iterations_run
    );
    Ok(HeuristicRun {
        best,
        best_iteration: best_k + 1,
        time_to_best_s,
        total_s: start.elapsed().as_secs_f64(),
        iterations_run,
        pool,
        records,
        lp_solves: iterations_run * (inst.buses().len() + 1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::{bus, charger, trip};
    use crate::model::InstanceFile;
    use crate::plan::tests::queue_example;

    #[test]
    fn positive_costs_mean_no_charging() {
        let inst = queue_example();
        let theta = vec![1.0; 4];
        let sel = phase1_select(&inst, &theta).unwrap();
        assert!(sel.charge_min.iter().all(|&t| t == 0.0));
        assert!(sel.delay_min.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn negative_costs_keep_delay_at_zero() {
        let inst = queue_example();
        let theta = vec![-0.5; 4];
        let sel = phase1_select(&inst, &theta).unwrap();
        assert!(sel.charging.iter().any(|&c| c));
        // charging is capped by the layover since delay costs more
        assert!(sel.delay_min.iter().all(|&d| d.abs() < 1e-9));
    }

    #[test]
    fn minimum_charge_before_second_trip() {
        // 25 kWh short before trip 2 at 450 kW
        let file = InstanceFile {
            chargers: vec![charger("L", "X", 450.0)],
            buses: vec![bus("A", 150.0, 75.0, 0.0)],
            trips: vec![
                trip("A", 1, 0.0, 30.0, 50.0, "Y", "X"),
                trip("A", 2, 60.0, 30.0, 50.0, "X", "Y"),
            ],
        };
        let inst = Instance::from_file(&file).unwrap();
        let sel = phase1_select(&inst, &[0.3, 0.0]).unwrap();
        assert!((sel.charge_min[0] - 25.0 * 60.0 / 450.0).abs() < 1e-9);
        assert!(sel.charging[0]);
    }

    #[test]
    fn sequence_sorted_by_plugin_time() {
        let inst = queue_example();
        let sel = Selection {
            charge_min: vec![5.0, 0.0, 5.0, 0.0],
            delay_min: vec![0.0; 4],
            charging: vec![true, false, true, false],
            plugin_min: vec![75.0, 120.0, 60.0, 130.0],
        };
        assert_eq!(phase2_sequence(&inst, &sel), vec![vec![TripId(2), TripId(0)]]);
        let tied = Selection {
            plugin_min: vec![60.0, 120.0, 60.0, 130.0],
            ..sel
        };
        // equal times: bus A before bus B
        assert_eq!(phase2_sequence(&inst, &tied), vec![vec![TripId(0), TripId(2)]]);
    }

    #[test]
    fn schedule_of_empty_queues_has_no_delay() {
        let inst = queue_example();
        let plan = phase3_schedule(&inst, vec![vec![]]).unwrap();
        assert_eq!(plan.objective, 0.0);
    }

    #[test]
    fn zero_alpha_stops_on_first_iteration() {
        let inst = queue_example();
        let run = run_3s(&inst, &HeuristicConfig::default()).unwrap();
        assert_eq!(run.best.objective, 0.0);
        assert_eq!(run.iterations_run, 1);
        assert_eq!(run.best_iteration, 1);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = HeuristicConfig {
            iterations: 0,
            ..HeuristicConfig::default()
        };
        assert!(run_3s(&queue_example(), &cfg).is_err());
    }
}
