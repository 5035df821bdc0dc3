//! Combinatorial Benders: a master problem over charger assignments and
//! queue arcs, priced by the scheduling LP. Rejected assignments are cut off
//! through minimal infeasible subsystems of that LP.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::time::{Duration, Instant};

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::formulation::{build_master, build_schedule_lp, ScheduleLp, ScheduleTag, VarIndex};
use crate::heuristic3s::{run_3s, run_once, HeuristicConfig, HeuristicError};
use crate::lp::{deletion_filter_iis, Constraint, IisError, LpError, LpStatus, Sense, Tag};
use crate::mip::{solve_bnb, MipOptions, MipStatus};
use crate::model::{ArcId, ChargerId, Instance, Node, TripId};
use crate::plan::{charges_from, sequences_from_arcs, ChargingPlan, PlanError};

#[derive(Debug, Error)]
pub enum BendersError {
    #[error("subtour elimination needs at least two trips, got {0}")]
    ShortCycle(usize),
    #[error("master problem repeated an assignment it had already rejected")]
    Repeated,
    #[error(transparent)]
    Heuristic(#[from] HeuristicError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Iis(#[from] IisError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Debug, Clone)]
pub struct CbConfig {
    pub heuristic: HeuristicConfig,
    /// Upper limit on subsystems extracted from one infeasible LP.
    pub max_cuts: usize,
    pub time_limit: Option<Duration>,
    /// Seeds the order in which subsystem candidates are tried.
    pub seed: u64,
    pub warm_start: bool,
}

impl Default for CbConfig {
    fn default() -> Self {
        CbConfig {
            heuristic: HeuristicConfig::default(),
            max_cuts: 10,
            time_limit: None,
            seed: 0,
            warm_start: true,
        }
    }
}

/// At least one of these binaries must flip: a trip in `mx` must charge or
/// an arc in `my` must go unused. Both empty means no assignment can beat
/// the incumbent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CbCut {
    pub mx: Vec<TripId>,
    pub my: Vec<ArcId>,
}

impl CbCut {
    fn from_tags(sp: &ScheduleLp, tags: &[Tag]) -> CbCut {
        let mut cut = CbCut {
            mx: Vec::new(),
            my: Vec::new(),
        };
        for &t in tags {
            match sp.decode(t) {
                ScheduleTag::Skip(i) => cut.mx.push(i),
                ScheduleTag::Queue(a) => cut.my.push(a),
            }
        }
        cut.mx.sort();
        cut.my.sort();
        cut
    }

    pub fn to_row(&self, idx: &VarIndex) -> Constraint {
        let mut coeffs: Vec<_> = self.mx.iter().map(|&i| (idx.x(i).expect("charging variable"), 1.0)).collect();
        coeffs.extend(self.my.iter().map(|&a| (idx.y(a).expect("arc variable"), -1.0)));
        Constraint {
            name: "cb".into(),
            coeffs,
            sense: Sense::Ge,
            rhs: 1.0 - self.my.len() as f64,
            tag: None,
        }
    }

    /// Whether an assignment given as charging trips and used arcs breaks
    /// this cut.
    pub fn excludes(&self, charging: &[bool], used: &[ArcId]) -> bool {
        self.mx.iter().all(|i| !charging[i.0]) && self.my.iter().all(|a| used.contains(a))
    }
}

/// Closed service loops among used arcs, one list of trips per loop in
/// walking order. The path out of each charger's source is not reported.
pub fn detect_subtours(inst: &Instance, used: &[ArcId]) -> Vec<(ChargerId, Vec<TripId>)> {
    let net = inst.network();
    let mut next: BTreeMap<(ChargerId, Node), Node> = BTreeMap::new();
    for &a in used {
        let arc = net.arc(a);
        next.insert((arc.charger, arc.from), arc.to);
    }
    let mut on_path: HashSet<(ChargerId, Node)> = HashSet::new();
    for l in inst.charger_ids() {
        let mut at = Node::Source;
        while let Some(&to) = next.get(&(l, at)) {
            if !on_path.insert((l, at)) {
                break;
            }
            at = to;
        }
    }
    let mut out = Vec::new();
    let mut seen: HashSet<(ChargerId, Node)> = HashSet::new();
    for (&(l, from), _) in &next {
        if on_path.contains(&(l, from)) || seen.contains(&(l, from)) {
            continue;
        }
        let mut cycle = Vec::new();
        let mut at = from;
        while seen.insert((l, at)) {
            if let Node::Trip(i) = at {
                cycle.push(i);
            }
            match next.get(&(l, at)) {
                Some(&to) => at = to,
                None => break,
            }
        }
        if cycle.len() >= 2 || (cycle.len() == 1 && next.get(&(l, from)) == Some(&from)) {
            out.push((l, cycle));
        }
    }
    out
}

/// Subtour elimination row: the arcs of `l` inside `cycle` carry at most
/// `|cycle| - 1` units.
pub fn make_sec(inst: &Instance, idx: &VarIndex, l: ChargerId, cycle: &[TripId]) -> Result<Constraint, BendersError> {
    if cycle.len() < 2 {
        return Err(BendersError::ShortCycle(cycle.len()));
    }
    let net = inst.network();
    let mut coeffs = Vec::new();
    for &i in cycle {
        for &j in cycle {
            if let Some(a) = net.find(l, Node::Trip(i), Node::Trip(j)) {
                coeffs.push((idx.y(a).expect("arc variable"), 1.0));
            }
        }
    }
    Ok(Constraint {
        name: format!("sec[{}:{}]", inst.charger(l).id, cycle.len()),
        coeffs,
        sense: Sense::Le,
        rhs: cycle.len() as f64 - 1.0,
        tag: None,
    })
}

/// Up to `max_cuts` distinct minimal infeasible subsystems of an infeasible
/// scheduling LP, as row tags.
///
/// After each subsystem one of its rows is removed at random and the search
/// repeats while the LP stays infeasible. Candidates are shuffled each time.
pub fn extract_mis(sp: &ScheduleLp, max_cuts: usize, rng: &mut impl Rng) -> Result<Vec<Vec<Tag>>, IisError> {
    let mut lp = sp.lp.clone();
    let mut found: Vec<Vec<Tag>> = Vec::new();
    while found.len() < max_cuts {
        let mut cands = lp.tags();
        cands.shuffle(rng);
        let mut mis = match deletion_filter_iis(&lp, &cands) {
            Ok(m) => m,
            Err(IisError::NotInfeasible) if !found.is_empty() => break,
            Err(IisError::NotCausedByCandidates) if !found.is_empty() => break,
            Err(e) => return Err(e),
        };
        let drop = mis[rng.gen_range(0..mis.len())];
        mis.sort();
        if !found.contains(&mis) {
            found.push(mis);
        }
        lp.remove_tagged(drop);
    }
    Ok(found)
}

/// Cuts from [`extract_mis`].
pub fn extract_mis_cuts(sp: &ScheduleLp, max_cuts: usize, rng: &mut impl Rng) -> Result<Vec<CbCut>, IisError> {
    Ok(extract_mis(sp, max_cuts, rng)?
        .iter()
        .map(|m| CbCut::from_tags(sp, m))
        .collect())
}

fn plan_sp(inst: &Instance, plan: &ChargingPlan, z: Option<f64>) -> ScheduleLp {
    build_schedule_lp(inst, &plan.arcs(inst), &plan.skipped(inst), z)
}

/// Cuts ruling out every pooled plan's assignment at its own objective.
pub fn warm_start_cuts(
    inst: &Instance,
    pool: &[ChargingPlan],
    keep_fraction: f64,
    max_cuts: usize,
    rng: &mut impl Rng,
) -> Result<Vec<CbCut>, IisError> {
    let Some(best) = pool.iter().map(|p| p.objective).min_by(f64::total_cmp) else {
        return Ok(Vec::new());
    };
    if best <= 0.0 {
        return Ok(Vec::new());
    }
    let limit = best * (1.0 + keep_fraction);
    let mut out: Vec<CbCut> = Vec::new();
    for plan in pool.iter().filter(|p| p.objective <= limit) {
        let sp = plan_sp(inst, plan, Some(plan.objective));
        match extract_mis_cuts(&sp, max_cuts, rng) {
            Ok(cuts) => {
                for c in cuts {
                    if !out.contains(&c) {
                        out.push(c);
                    }
                }
            }
            // no plan can beat this one at all
            Err(IisError::NotCausedByCandidates) => {
                let empty = CbCut {
                    mx: Vec::new(),
                    my: Vec::new(),
                };
                if !out.contains(&empty) {
                    out.push(empty);
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CbStats {
    pub iterations: usize,
    pub mp_nodes: usize,
    pub sp_solves: usize,
    pub mis_count: usize,
    pub sec_count: usize,
    pub warm_cuts: usize,
    pub wall_s: f64,
    pub time_to_best_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub mp_objective: Option<f64>,
    pub sp_status: &'static str,
    pub z_star: f64,
    pub cuts_added: usize,
    pub elapsed_s: f64,
}

/// Everything known at the end of a run.
#[derive(Debug, Clone)]
pub struct CbState {
    pub incumbent: ChargingPlan,
    pub z_star: f64,
    pub cut_pool: Vec<CbCut>,
    pub sec_pool: Vec<Constraint>,
    pub stats: CbStats,
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone)]
pub struct CbOutcome {
    pub state: CbState,
    pub proven_optimal: bool,
    /// The heuristic already reached zero delay so no master problem was
    /// built.
    pub skipped: bool,
}

impl CbOutcome {
    pub fn plan(&self) -> &ChargingPlan {
        &self.state.incumbent
    }

    pub fn write_trace<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.state.trace {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Runs the heuristic for a starting incumbent and cut pool, then the
/// Benders loop.
pub fn solve_cb(inst: &Instance, cfg: &CbConfig) -> Result<CbOutcome, BendersError> {
    let start = Instant::now();
    let (incumbent, pool) = match run_3s(inst, &cfg.heuristic) {
        Ok(run) => (run.best, run.pool.into_iter().map(|e| e.plan).collect()),
        Err(HeuristicError::Config(m)) => return Err(HeuristicError::Config(m).into()),
        Err(e) => {
            debug!("heuristic failed ({e}), falling back to zero costs");
            let zeros = vec![0.0; inst.trips().len()];
            let plan = run_once(inst, &zeros)?;
            (plan.clone(), vec![plan])
        }
    };
    solve_cb_from(inst, cfg, incumbent, &pool, start)
}

/// The Benders loop from a given incumbent; `pool` feeds the warm-start
/// cuts. Time is measured from `start`.
pub fn solve_cb_from(
    inst: &Instance,
    cfg: &CbConfig,
    incumbent: ChargingPlan,
    pool: &[ChargingPlan],
    start: Instant,
) -> Result<CbOutcome, BendersError> {
    let mut state = CbState {
        z_star: incumbent.objective,
        incumbent,
        cut_pool: Vec::new(),
        sec_pool: Vec::new(),
        stats: CbStats::default(),
        trace: Vec::new(),
    };
    state.stats.time_to_best_s = start.elapsed().as_secs_f64();
    if state.z_star <= 0.0 {
        info!("CB: incumbent has zero delay, nothing to improve");
        state.stats.wall_s = start.elapsed().as_secs_f64();
        return Ok(CbOutcome {
            state,
            proven_optimal: true,
            skipped: true,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut mp, idx, _) = build_master(inst);
    if cfg.warm_start {
        let cuts = warm_start_cuts(inst, pool, cfg.heuristic.keep_fraction_for_cuts, cfg.max_cuts, &mut rng)?;
        state.stats.warm_cuts = cuts.len();
        for c in cuts {
            add_cut(&mut mp.lp, &idx, &c);
            state.cut_pool.push(c);
        }
    }

    let mut seen: HashSet<(Vec<bool>, Vec<ArcId>)> = HashSet::new();
    let proven = loop {
        let remaining = match cfg.time_limit {
            Some(t) => match t.checked_sub(start.elapsed()) {
                Some(r) if !r.is_zero() => Some(r),
                _ => break false,
            },
            None => None,
        };
        state.stats.iterations += 1;
        let iteration = state.stats.iterations;
        let opts = MipOptions {
            time_limit: remaining,
            ..MipOptions::default()
        };
        let mut secs = Vec::new();
        let mut hook = |vals: &[f64]| -> Vec<Constraint> {
            let used = used_arcs(inst, &idx, vals);
            let rows: Vec<Constraint> = detect_subtours(inst, &used)
                .into_iter()
                .filter_map(|(l, cyc)| make_sec(inst, &idx, l, &cyc).ok())
                .collect();
            secs.extend(rows.iter().cloned());
            rows
        };
        let res = solve_bnb(&mut mp, &opts, &mut hook, None)?;
        state.stats.mp_nodes += res.nodes;
        state.stats.sec_count += secs.len();
        state.sec_pool.extend(secs);
        let vals = match (res.status, res.values) {
            (MipStatus::Infeasible, _) => {
                push_trace(&mut state, iteration, None, "mp_infeasible", 0, start);
                break true;
            }
            (MipStatus::Optimal, Some(v)) => v,
            _ => break false,
        };

        let used = used_arcs(inst, &idx, &vals);
        let charging: Vec<bool> = inst
            .trip_ids()
            .map(|i| idx.x(i).is_some_and(|v| vals[v.0] > 0.5))
            .collect();
        if !seen.insert((charging.clone(), used.clone())) {
            return Err(BendersError::Repeated);
        }
        let sequences = sequences_from_arcs(inst, &used).expect("subtour-free master solution");
        let skip: Vec<TripId> = inst
            .charging_opportunities()
            .map(|(_, i)| i)
            .filter(|i| !charging[i.0])
            .collect();

        let mut improved = false;
        let mut sp = build_schedule_lp(inst, &used, &skip, Some(state.z_star));
        loop {
            state.stats.sp_solves += 1;
            let sol = sp.lp.solve()?;
            if sol.status != LpStatus::Optimal {
                break;
            }
            let charge = charges_from(inst, &sp.index, &sol);
            let plan = ChargingPlan::settle(inst, sequences.clone(), charge)?;
            debug!("CB iteration {iteration}: incumbent {} -> {}", state.z_star, plan.objective);
            state.z_star = plan.objective.min(sol.objective);
            state.incumbent = plan;
            state.stats.time_to_best_s = start.elapsed().as_secs_f64();
            improved = true;
            if state.z_star <= 0.0 {
                break;
            }
            sp = build_schedule_lp(inst, &used, &skip, Some(state.z_star));
        }
        if state.z_star <= 0.0 {
            push_trace(&mut state, iteration, Some(res.objective), "feasible", 0, start);
            break true;
        }
        let cuts = match extract_mis_cuts(&sp, cfg.max_cuts, &mut rng) {
            Ok(c) => c,
            // no assignment at all can beat the incumbent: the empty cut
            // leaves the master without solutions
            Err(IisError::NotCausedByCandidates) => vec![CbCut {
                mx: Vec::new(),
                my: Vec::new(),
            }],
            Err(e) => return Err(e.into()),
        };
        state.stats.mis_count += cuts.len();
        let n = cuts.len();
        for c in cuts {
            add_cut(&mut mp.lp, &idx, &c);
            state.cut_pool.push(c);
        }
        let status = if improved { "feasible" } else { "infeasible" };
        push_trace(&mut state, iteration, Some(res.objective), status, n, start);
    };
    state.stats.wall_s = start.elapsed().as_secs_f64();
    info!(
        "CB: z* = {:.4} after {} iterations, proven optimal: {}",
        state.z_star, state.stats.iterations, proven
    );
    Ok(CbOutcome {
        state,
        proven_optimal: proven,
        skipped: false,
    })
}

fn add_cut(lp: &mut crate::lp::LinearProgram, idx: &VarIndex, c: &CbCut) {
    let row = c.to_row(idx);
    lp.add_row(row.name, row.coeffs, row.sense, row.rhs);
}

fn used_arcs(inst: &Instance, idx: &VarIndex, vals: &[f64]) -> Vec<ArcId> {
    inst.network()
        .ids()
        .filter(|&a| idx.y(a).is_some_and(|v| vals[v.0] > 0.5))
        .collect()
}

fn push_trace(state: &mut CbState, iteration: usize, mp: Option<f64>, status: &'static str, cuts: usize, start: Instant) {
    state.trace.push(TraceRecord {
        iteration,
        mp_objective: mp,
        sp_status: status,
        z_star: state.z_star,
        cuts_added: cuts,
        elapsed_s: start.elapsed().as_secs_f64(),
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::network::tests::two_bus_loop;
    use crate::plan::tests::queue_example;

    fn arc(inst: &Instance, from: Node, to: Node) -> ArcId {
        inst.network().find(ChargerId(0), from, to).unwrap()
    }

    #[test]
    fn simple_path_has_no_subtours() {
        let inst = queue_example();
        let (a1, b1) = (TripId(0), TripId(2));
        let used = vec![
            arc(&inst, Node::Source, Node::Trip(b1)),
            arc(&inst, Node::Trip(b1), Node::Trip(a1)),
            arc(&inst, Node::Trip(a1), Node::Sink),
        ];
        assert!(detect_subtours(&inst, &used).is_empty());
        assert!(detect_subtours(&inst, &[]).is_empty());
    }

    #[test]
    fn two_cycle_found_beside_path() {
        let inst = two_bus_loop();
        let (a1, b1, b2) = (TripId(0), TripId(2), TripId(3));
        let used = vec![
            arc(&inst, Node::Source, Node::Trip(b1)),
            arc(&inst, Node::Trip(b1), Node::Sink),
            arc(&inst, Node::Trip(a1), Node::Trip(b2)),
            arc(&inst, Node::Trip(b2), Node::Trip(a1)),
        ];
        let cycles = detect_subtours(&inst, &used);
        assert_eq!(cycles.len(), 1);
        let mut c = cycles[0].1.clone();
        c.sort();
        assert_eq!(c, vec![a1, b2]);
    }

    #[test]
    fn sec_row_shapes() {
        let inst = two_bus_loop();
        let (_, idx, _) = build_master(&inst);
        let l = ChargerId(0);
        let row = make_sec(&inst, &idx, l, &[TripId(0), TripId(2)]).unwrap();
        assert_eq!(row.coeffs.len(), 2);
        assert_eq!(row.rhs, 1.0);
        // A1, B1, B2: six arcs among cross pairs and B1->B2 only one way
        let row = make_sec(&inst, &idx, l, &[TripId(0), TripId(2), TripId(3)]).unwrap();
        assert_eq!(row.coeffs.len(), 5);
        assert_eq!(row.rhs, 2.0);
        assert!(matches!(make_sec(&inst, &idx, l, &[TripId(0)]), Err(BendersError::ShortCycle(1))));
    }

    #[test]
    fn max_cuts_caps_extraction() {
        let inst = queue_example();
        let plan = crate::heuristic3s::phase3_schedule(&inst, vec![vec![TripId(2), TripId(0)]]).unwrap();
        let sp = plan_sp(&inst, &plan, Some(plan.objective));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        match extract_mis_cuts(&sp, 1, &mut rng) {
            Ok(cuts) => assert_eq!(cuts.len(), 1),
            Err(e) => assert_eq!(e, IisError::NotCausedByCandidates),
        }
    }

    #[test]
    fn zero_incumbent_skips_loop() {
        let inst = queue_example();
        let out = solve_cb(&inst, &CbConfig::default()).unwrap();
        assert!(out.skipped && out.proven_optimal);
        assert_eq!(out.plan().objective, 0.0);
        assert_eq!(out.state.stats.iterations, 0);
    }
}
