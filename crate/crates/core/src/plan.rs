//! Charging plans: who charges where, in what order, for how long, and the
//! resulting plug-in times and delays.

use std::collections::{BTreeMap, VecDeque};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::LpSolution;
use crate::formulation::VarIndex;
use crate::model::{ArcId, ChargerId, Instance, Node, TripId, TripKey};

/// Charging below this many minutes counts as not charging.
pub const CHARGE_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("charger {charger} serves trip {trip}, which does not end at its terminal")]
    WrongCharger { charger: String, trip: String },
    #[error("trip {0} appears more than once in the charger sequences")]
    Repeated(String),
    #[error("trip {0} charges but is not in any charger sequence")]
    Unsequenced(String),
    #[error("charging after {trip} is {minutes} min, outside [0, {max}]")]
    ChargeRange { trip: String, minutes: f64, max: f64 },
    #[error("charger order conflicts with block order around trip {0}")]
    Cyclic(String),
    #[error("plan does not match instance: {0}")]
    Mismatch(String),
    #[error("could not read plan: {0}")]
    Io(String),
}

/// A complete schedule. `sequences[l]` lists the trips served by charger
/// `l` in service order; a trip is charged (x = 1) exactly when it appears
/// there, possibly with zero minutes.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargingPlan {
    pub sequences: Vec<Vec<TripId>>,
    pub charge_min: Vec<f64>,
    pub plugin_min: Vec<f64>,
    pub delay_min: Vec<f64>,
    pub objective: f64,
}

impl ChargingPlan {
    /// Builds a plan from sequences and charging times, computing plug-in
    /// times and delays as the earliest consistent schedule.
    pub fn settle(inst: &Instance, sequences: Vec<Vec<TripId>>, charge_min: Vec<f64>) -> Result<Self, PlanError> {
        check_shape(inst, &sequences, &charge_min)?;
        let (plugin_min, delay_min) = earliest_times(inst, &sequences, &charge_min)?;
        let objective = delay_min.iter().sum();
        Ok(ChargingPlan {
            sequences,
            charge_min,
            plugin_min,
            delay_min,
            objective,
        })
    }

    pub fn is_charging(&self, i: TripId) -> bool {
        self.sequences.iter().any(|s| s.contains(&i))
    }

    /// Trips that end at a charger but are not in its sequence.
    pub fn skipped(&self, inst: &Instance) -> Vec<TripId> {
        let mut on = vec![false; inst.trips().len()];
        for s in &self.sequences {
            for i in s {
                on[i.0] = true;
            }
        }
        inst.charging_opportunities()
            .filter(|(_, i)| !on[i.0])
            .map(|(_, i)| i)
            .collect()
    }

    /// Arcs traversed by the sequences, dummy arcs included.
    pub fn arcs(&self, inst: &Instance) -> Vec<ArcId> {
        let net = inst.network();
        let mut out = Vec::new();
        for (l, seq) in self.sequences.iter().enumerate() {
            let l = ChargerId(l);
            if seq.is_empty() {
                continue;
            }
            let nodes = std::iter::once(Node::Source)
                .chain(seq.iter().map(|&i| Node::Trip(i)))
                .chain(std::iter::once(Node::Sink));
            let nodes: Vec<Node> = nodes.collect();
            for w in nodes.windows(2) {
                if let Some(a) = net.find(l, w[0], w[1]) {
                    out.push(a);
                }
            }
        }
        out
    }

    pub fn delayed_trips(&self) -> usize {
        self.delay_min.iter().filter(|&&d| d > 1e-6).count()
    }

    pub fn total_charge_min(&self) -> f64 {
        self.charge_min.iter().sum()
    }

    /// Largest violation of any charge window, in kWh.
    pub fn soc_violation(&self, inst: &Instance) -> (f64, Option<String>) {
        let mut worst = (0.0, None);
        for b in inst.bus_ids() {
            for cp in inst.bounds().for_bus(b) {
                let gain: f64 = inst
                    .block(b)
                    .take(cp.covers)
                    .filter_map(|j| inst.charger_after(j).map(|l| inst.kwh_per_min(l) * self.charge_min[j.0]))
                    .sum();
                let v = (cp.alpha_kwh - gain).max(gain - cp.beta_kwh);
                if v > worst.0 {
                    let name = match cp.before {
                        Some(i) => inst.key(i).to_string(),
                        None => format!("{}#end", inst.bus(b).id),
                    };
                    worst = (v, Some(name));
                }
            }
        }
        worst
    }

    /// Binary signature used to tell plans apart.
    pub fn signature(&self) -> Vec<Vec<TripId>> {
        self.sequences.clone()
    }

    pub fn to_file(&self, inst: &Instance) -> PlanFile {
        PlanFile {
            objective_min: self.objective,
            chargers: inst
                .charger_ids()
                .map(|l| ChargerSequence {
                    charger: inst.charger(l).id.clone(),
                    sequence: self.sequences[l.0].iter().map(|&i| inst.key(i).to_string()).collect(),
                })
                .collect(),
            trips: inst
                .trip_ids()
                .map(|i| {
                    let k = inst.key(i);
                    TripSchedule {
                        bus: k.bus,
                        seq: k.seq,
                        charge_min: self.charge_min[i.0],
                        plugin_min: self.plugin_min[i.0],
                        delay_min: self.delay_min[i.0],
                    }
                })
                .collect(),
        }
    }
}

fn check_shape(inst: &Instance, sequences: &[Vec<TripId>], charge_min: &[f64]) -> Result<(), PlanError> {
    let n = inst.trips().len();
    if sequences.len() != inst.chargers().len() || charge_min.len() != n {
        return Err(PlanError::Mismatch(format!(
            "{} sequences and {} charge times for {} chargers and {n} trips",
            sequences.len(),
            charge_min.len(),
            inst.chargers().len()
        )));
    }
    let mut seen = vec![false; n];
    for (l, seq) in sequences.iter().enumerate() {
        for &i in seq {
            if i.0 >= n {
                return Err(PlanError::Mismatch(format!("trip index {} out of range", i.0)));
            }
            if inst.charger_after(i) != Some(ChargerId(l)) {
                return Err(PlanError::WrongCharger {
                    charger: inst.charger(ChargerId(l)).id.clone(),
                    trip: inst.key(i).to_string(),
                });
            }
            if seen[i.0] {
                return Err(PlanError::Repeated(inst.key(i).to_string()));
            }
            seen[i.0] = true;
        }
    }
    for i in inst.trip_ids() {
        let t = charge_min[i.0];
        let max = inst.charger_after(i).map_or(0.0, |l| inst.tmax_min(l, i));
        if !(-CHARGE_TOL..=max + CHARGE_TOL).contains(&t) {
            return Err(PlanError::ChargeRange {
                trip: inst.key(i).to_string(),
                minutes: t,
                max,
            });
        }
        if t > CHARGE_TOL && !seen[i.0] {
            return Err(PlanError::Unsequenced(inst.key(i).to_string()));
        }
    }
    Ok(())
}

/// Least solution of the plug-in and delay recurrences, evaluated in
/// dependency order.
fn earliest_times(
    inst: &Instance,
    sequences: &[Vec<TripId>],
    charge: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), PlanError> {
    let n = inst.trips().len();
    let mut queue_prev: Vec<Option<TripId>> = vec![None; n];
    let mut queue_next: Vec<Option<TripId>> = vec![None; n];
    for seq in sequences {
        for w in seq.windows(2) {
            queue_prev[w[1].0] = Some(w[0]);
            queue_next[w[0].0] = Some(w[1]);
        }
    }
    let mut indeg = vec![0usize; n];
    for i in inst.trip_ids() {
        indeg[i.0] = usize::from(inst.prev(i).is_some()) + usize::from(queue_prev[i.0].is_some());
    }
    let mut ready: VecDeque<TripId> = inst.trip_ids().filter(|i| indeg[i.0] == 0).collect();
    let (mut p, mut d) = (vec![0.0; n], vec![0.0; n]);
    let mut done = 0;
    while let Some(i) = ready.pop_front() {
        let tr = inst.trip(i);
        d[i.0] = match inst.prev(i) {
            Some(h) => (p[h.0] + charge[h.0] - tr.sched_start_min).max(0.0),
            None => 0.0,
        };
        let arrive = tr.sched_end_min() + d[i.0];
        p[i.0] = match queue_prev[i.0] {
            Some(h) => arrive.max(p[h.0] + charge[h.0]),
            None => arrive,
        };
        done += 1;
        for k in [inst.next(i), queue_next[i.0]].into_iter().flatten() {
            indeg[k.0] -= 1;
            if indeg[k.0] == 0 {
                ready.push_back(k);
            }
        }
    }
    if done < n {
        let stuck = inst.trip_ids().find(|i| indeg[i.0] > 0).unwrap();
        return Err(PlanError::Cyclic(inst.key(stuck).to_string()));
    }
    Ok((p, d))
}

/// Reads charging times out of a solved model, snapping round-off to zero.
pub fn charges_from(inst: &Instance, idx: &VarIndex, sol: &LpSolution) -> Vec<f64> {
    inst.trip_ids()
        .map(|i| match idx.t(i) {
            Some(v) => {
                let t = sol.value(v);
                if t <= CHARGE_TOL {
                    0.0
                } else {
                    t.min(inst.charger_after(i).map_or(0.0, |l| inst.tmax_min(l, i)))
                }
            }
            None => 0.0,
        })
        .collect()
}

/// Service order on each charger obtained by walking used arcs from the
/// source. Returns `None` if some used arc is not on these paths.
pub fn sequences_from_arcs(inst: &Instance, used: &[ArcId]) -> Option<Vec<Vec<TripId>>> {
    let net = inst.network();
    let mut next: BTreeMap<(ChargerId, Node), Node> = BTreeMap::new();
    for &a in used {
        let arc = net.arc(a);
        next.insert((arc.charger, arc.from), arc.to);
    }
    let mut out = vec![Vec::new(); inst.chargers().len()];
    let mut walked = 0;
    for l in inst.charger_ids() {
        let mut at = Node::Source;
        while let Some(&to) = next.get(&(l, at)) {
            walked += 1;
            match to {
                Node::Trip(i) => out[l.0].push(i),
                _ => break,
            }
            at = to;
            if out[l.0].len() > inst.trips().len() {
                return None;
            }
        }
    }
    (walked == used.len()).then_some(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargerSequence {
    pub charger: String,
    pub sequence: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripSchedule {
    pub bus: String,
    pub seq: u32,
    pub charge_min: f64,
    pub plugin_min: f64,
    pub delay_min: f64,
}

/// On-disk form of a plan, keyed by external ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub objective_min: f64,
    pub chargers: Vec<ChargerSequence>,
    pub trips: Vec<TripSchedule>,
}

impl PlanFile {
    pub fn from_reader<R: Read>(r: R) -> Result<Self, PlanError> {
        serde_json::from_reader(r).map_err(|e| PlanError::Io(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PlanError> {
        let f = std::fs::File::open(path.as_ref()).map_err(|e| PlanError::Io(e.to_string()))?;
        Self::from_reader(std::io::BufReader::new(f))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PlanError> {
        let mut f = std::fs::File::create(path.as_ref()).map_err(|e| PlanError::Io(e.to_string()))?;
        f.write_all(self.to_json().as_bytes())
            .map_err(|e| PlanError::Io(e.to_string()))
    }

    /// Sequences and charging times in instance indices. Plug-in times and
    /// delays in the file are ignored; callers recompute them.
    pub fn resolve(&self, inst: &Instance) -> Result<(Vec<Vec<TripId>>, Vec<f64>), PlanError> {
        let mut sequences = vec![Vec::new(); inst.chargers().len()];
        for cs in &self.chargers {
            let l = inst
                .find_charger(&cs.charger)
                .ok_or_else(|| PlanError::Mismatch(format!("unknown charger {}", cs.charger)))?;
            for name in &cs.sequence {
                let key = parse_key(name)?;
                let i = inst
                    .find_trip(&key)
                    .ok_or_else(|| PlanError::Mismatch(format!("unknown trip {name}")))?;
                sequences[l.0].push(i);
            }
        }
        let mut charge = vec![0.0; inst.trips().len()];
        let mut seen = vec![false; inst.trips().len()];
        for ts in &self.trips {
            let key = TripKey {
                bus: ts.bus.clone(),
                seq: ts.seq,
            };
            let i = inst
                .find_trip(&key)
                .ok_or_else(|| PlanError::Mismatch(format!("unknown trip {key}")))?;
            charge[i.0] = ts.charge_min;
            seen[i.0] = true;
        }
        if let Some(i) = inst.trip_ids().find(|i| !seen[i.0]) {
            return Err(PlanError::Mismatch(format!("trip {} missing from plan", inst.key(i))));
        }
        Ok((sequences, charge))
    }
}

fn parse_key(name: &str) -> Result<TripKey, PlanError> {
    let (bus, seq) = name
        .rsplit_once('#')
        .ok_or_else(|| PlanError::Mismatch(format!("bad trip name {name}")))?;
    let seq = seq
        .parse()
        .map_err(|_| PlanError::Mismatch(format!("bad trip name {name}")))?;
    Ok(TripKey { bus: bus.to_string(), seq })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::tests::{bus, charger, trip};
    use crate::model::InstanceFile;

    /// Bus B charges after B1, then A plugs in after A1 and must wait; A2
    /// leaves late.
    pub(crate) fn queue_example() -> Instance {
        let file = InstanceFile {
            chargers: vec![charger("L", "X", 450.0)],
            buses: vec![bus("A", 300.0, 300.0, 0.0), bus("B", 300.0, 300.0, 0.0)],
            trips: vec![
                trip("A", 1, 15.0, 60.0, 100.0, "Y", "X"),
                trip("A", 2, 90.0, 30.0, 100.0, "X", "Y"),
                trip("B", 1, 0.0, 60.0, 100.0, "Y", "X"),
                trip("B", 2, 100.0, 30.0, 100.0, "X", "Y"),
            ],
        };
        Instance::from_file(&file).unwrap()
    }

    #[test]
    fn waiting_bus_is_delayed() {
        let inst = queue_example();
        let (a1, a2, b1) = (TripId(0), TripId(1), TripId(2));
        let mut charge = vec![0.0; 4];
        charge[b1.0] = 20.0;
        charge[a1.0] = 10.0;
        let plan = ChargingPlan::settle(&inst, vec![vec![b1, a1]], charge).unwrap();
        assert_eq!(plan.plugin_min[b1.0], 60.0);
        // A arrives at 75 but the charger is busy until 80
        assert_eq!(plan.plugin_min[a1.0], 80.0);
        assert_eq!(plan.delay_min[a2.0], 80.0 + 10.0 - 90.0);
        assert_eq!(plan.objective, 0.0);
        let mut charge = vec![0.0; 4];
        charge[b1.0] = 25.0;
        charge[a1.0] = 10.0;
        let plan = ChargingPlan::settle(&inst, vec![vec![b1, a1]], charge).unwrap();
        assert_eq!(plan.delay_min[a2.0], 5.0);
        assert_eq!(plan.delayed_trips(), 1);
        assert_eq!(plan.arcs(&inst).len(), 3);
    }

    #[test]
    fn uncharged_schedule_has_no_delay() {
        let inst = queue_example();
        let plan = ChargingPlan::settle(&inst, vec![vec![]], vec![0.0; 4]).unwrap();
        assert_eq!(plan.objective, 0.0);
        assert_eq!(plan.skipped(&inst).len(), 2);
    }

    #[test]
    fn unsequenced_charge_is_rejected() {
        let inst = queue_example();
        let mut charge = vec![0.0; 4];
        charge[0] = 5.0;
        assert!(matches!(
            ChargingPlan::settle(&inst, vec![vec![]], charge),
            Err(PlanError::Unsequenced(_))
        ));
    }

    #[test]
    fn arcs_round_trip_to_sequences() {
        let inst = queue_example();
        let plan = ChargingPlan::settle(&inst, vec![vec![TripId(2), TripId(0)]], vec![0.0; 4]).unwrap();
        let seqs = sequences_from_arcs(&inst, &plan.arcs(&inst)).unwrap();
        assert_eq!(seqs, plan.sequences);
    }

    #[test]
    fn file_round_trip() {
        let inst = queue_example();
        let mut charge = vec![0.0; 4];
        charge[2] = 12.5;
        let plan = ChargingPlan::settle(&inst, vec![vec![TripId(2), TripId(0)]], charge).unwrap();
        let text = plan.to_file(&inst).to_json();
        let back = PlanFile::from_reader(text.as_bytes()).unwrap();
        let (seqs, charge) = back.resolve(&inst).unwrap();
        let again = ChargingPlan::settle(&inst, seqs, charge).unwrap();
        assert_eq!(again, plan);
    }
}
