//! Exhaustive solver for tiny instances, and a generator for them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::formulation::{build_schedule_lp, derive_mp_cuts};
use crate::heuristic3s::run_once;
use crate::lp::{LpError, LpStatus};
use crate::model::{BusRecord, ChargerRecord, Instance, InstanceFile, TripId, TripRecord};
use crate::plan::{charges_from, ChargingPlan, PlanError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_candidates: usize,
    pub max_per_charger: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_candidates: 12,
            max_per_charger: 6,
        }
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{found} charging opportunities exceed the limit of {limit}")]
    TooManyCandidates { found: usize, limit: usize },
    #[error("charger {charger} has {found} opportunities, limit {limit}")]
    TooManyAtCharger { charger: String, found: usize, limit: usize },
    #[error("no feasible plan")]
    Infeasible,
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub objective: f64,
    pub plan: ChargingPlan,
    /// Scheduling LPs solved.
    pub evaluated: usize,
}

/// Orders of `trips` in which each bus's trips keep their block order.
fn orders(inst: &Instance, trips: &[TripId]) -> Vec<Vec<TripId>> {
    fn rec(inst: &Instance, left: &mut Vec<TripId>, cur: &mut Vec<TripId>, out: &mut Vec<Vec<TripId>>) {
        if left.is_empty() {
            out.push(cur.clone());
            return;
        }
        for k in 0..left.len() {
            let i = left[k];
            let (bus, seq) = (inst.trip(i).bus, inst.trip(i).seq);
            if left.iter().any(|&j| inst.trip(j).bus == bus && inst.trip(j).seq < seq) {
                continue;
            }
            left.remove(k);
            cur.push(i);
            rec(inst, left, cur, out);
            cur.pop();
            left.insert(k, i);
        }
    }
    let mut out = Vec::new();
    rec(inst, &mut trips.to_vec(), &mut Vec::new(), &mut out);
    out
}

fn cartesian(lists: &[Vec<Vec<TripId>>]) -> Vec<Vec<Vec<TripId>>> {
    let mut acc: Vec<Vec<Vec<TripId>>> = vec![Vec::new()];
    for opts in lists {
        let mut next = Vec::with_capacity(acc.len() * opts.len());
        for a in &acc {
            for o in opts {
                let mut v = a.clone();
                v.push(o.clone());
                next.push(v);
            }
        }
        acc = next;
    }
    acc
}

/// Best plan for the charging subset encoded by `mask`, with its LP count.
fn best_for_subset(
    inst: &Instance,
    cands: &[TripId],
    mask: u32,
) -> Result<(Option<ChargingPlan>, usize), OracleError> {
    let charging: Vec<TripId> = cands
        .iter()
        .enumerate()
        .filter(|(k, _)| mask >> k & 1 == 1)
        .map(|(_, &i)| i)
        .collect();
    let skip: Vec<TripId> = cands.iter().copied().filter(|i| !charging.contains(i)).collect();
    let per_charger: Vec<Vec<Vec<TripId>>> = inst
        .charger_ids()
        .map(|l| {
            let mine: Vec<TripId> = charging
                .iter()
                .copied()
                .filter(|&i| inst.charger_after(i) == Some(l))
                .collect();
            orders(inst, &mine)
        })
        .collect();
    let mut best: Option<ChargingPlan> = None;
    let mut n = 0;
    for seqs in cartesian(&per_charger) {
        let probe = ChargingPlan {
            sequences: seqs,
            charge_min: Vec::new(),
            plugin_min: Vec::new(),
            delay_min: Vec::new(),
            objective: 0.0,
        };
        let sp = build_schedule_lp(inst, &probe.arcs(inst), &skip, None);
        n += 1;
        let sol = sp.lp.solve()?;
        if sol.status != LpStatus::Optimal {
            continue;
        }
        let plan = ChargingPlan::settle(inst, probe.sequences, charges_from(inst, &sp.index, &sol))?;
        if best.as_ref().map_or(true, |b| plan.objective < b.objective) {
            best = Some(plan);
        }
    }
    Ok((best, n))
}

/// Minimum total delay by enumeration of charging subsets and service
/// orders. Subsets that cannot meet the minimum stop counts are skipped.
pub fn brute_force(inst: &Instance, limits: &OracleLimits) -> Result<OracleResult, OracleError> {
    let cands: Vec<TripId> = inst.charging_opportunities().map(|(_, i)| i).collect();
    if cands.len() > limits.max_candidates.min(31) {
        return Err(OracleError::TooManyCandidates {
            found: cands.len(),
            limit: limits.max_candidates,
        });
    }
    for l in inst.charger_ids() {
        let found = inst.network().charger(l).nodes.len();
        if found > limits.max_per_charger {
            return Err(OracleError::TooManyAtCharger {
                charger: inst.charger(l).id.clone(),
                found,
                limit: limits.max_per_charger,
            });
        }
    }
    let cuts = derive_mp_cuts(inst);
    let masks: Vec<u32> = (0..1u32 << cands.len())
        .filter(|&m| {
            cuts.iter().all(|c| {
                let have = cands
                    .iter()
                    .enumerate()
                    .filter(|(k, i)| m >> k & 1 == 1 && c.trips.contains(i))
                    .count();
                have >= c.rhs
            })
        })
        .collect();

    let eval = |&m: &u32| best_for_subset(inst, &cands, m);
    #[cfg(feature = "parallel")]
    let results: Vec<_> = {
        use rayon::prelude::*;
        masks.par_iter().map(eval).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<_> = masks.iter().map(eval).collect();

    let mut best: Option<ChargingPlan> = None;
    let mut evaluated = 0;
    for r in results {
        let (plan, n) = r?;
        evaluated += n;
        if let Some(p) = plan {
            if best.as_ref().map_or(true, |b| p.objective < b.objective) {
                best = Some(p);
            }
        }
    }
    let plan = best.ok_or(OracleError::Infeasible)?;
    Ok(OracleResult {
        objective: plan.objective,
        plan,
        evaluated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToySize {
    pub buses: usize,
    pub trips: usize,
    pub chargers: usize,
}

impl Default for ToySize {
    fn default() -> Self {
        ToySize {
            buses: 2,
            trips: 4,
            chargers: 1,
        }
    }
}

const TOY_RETRIES: usize = 100;

fn draw_toy(rng: &mut ChaCha8Rng, size: &ToySize) -> InstanceFile {
    let mut file = InstanceFile::default();
    let power = 50.0 * rng.gen_range(3..=8) as f64;
    file.chargers.push(ChargerRecord {
        id: "CX".into(),
        terminal: "X".into(),
        power_kw: power,
    });
    if size.chargers > 1 {
        file.chargers.push(ChargerRecord {
            id: "CY".into(),
            terminal: "Y".into(),
            power_kw: 50.0 * rng.gen_range(3..=8) as f64,
        });
    }
    for b in 0..size.buses {
        let id = ((b'A' + b as u8) as char).to_string();
        let n = size.trips / size.buses + usize::from(b < size.trips % size.buses);
        let cap = 100.0;
        file.buses.push(BusRecord {
            id: id.clone(),
            usable_capacity_kwh: cap,
            initial_energy_kwh: rng.gen_range(40..=90) as f64,
            final_min_energy_kwh: rng.gen_range(0..=20) as f64,
        });
        let (mut here, mut there) = if b % 2 == 0 { ("Y", "X") } else { ("X", "Y") };
        let mut t = rng.gen_range(0..=10) as f64;
        for s in 0..n {
            let dur = rng.gen_range(20..=50) as f64;
            file.trips.push(TripRecord {
                bus: id.clone(),
                seq: s as u32 + 1,
                sched_start_min: t,
                sched_duration_min: dur,
                energy_kwh: rng.gen_range(30..=50) as f64,
                start_terminal: here.into(),
                end_terminal: there.into(),
            });
            t += dur + rng.gen_range(2..=12) as f64;
            std::mem::swap(&mut here, &mut there);
        }
    }
    file
}

/// A small random instance with a feasible charging plan. Terminals X and
/// Y alternate; one charger at X, a second at Y when asked for.
pub fn random_toy(seed: u64, size: &ToySize) -> InstanceFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = None;
    for _ in 0..TOY_RETRIES {
        let file = draw_toy(&mut rng, size);
        if let Ok(inst) = Instance::from_file(&file) {
            if run_once(&inst, &vec![0.0; inst.trips().len()]).is_ok() {
                return file;
            }
        }
        last = Some(file);
    }
    // give up on the charge windows: no energy use always works
    let mut file = last.expect("at least one draw");
    for t in &mut file.trips {
        t.energy_kwh = 0.0;
    }
    file
}
