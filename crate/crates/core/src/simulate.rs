//! Event-driven replay of a plan, delay scenarios and charging histograms.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use thiserror::Error;

use crate::model::{ChargerId, Instance, InstanceFile, ModelError, TripId};
use crate::plan::{ChargingPlan, CHARGE_TOL};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("replay stalled: {0} trips never ran (cyclic charger order)")]
    Deadlock(usize),
    #[error("plan does not fit the instance: {0}")]
    Mismatch(String),
}

/// How a charger picks the next bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueueMode {
    /// Serve buses in the order the plan lists them.
    Planned,
    /// Serve whoever arrived first; ties by bus id, then trip.
    Fifo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub plugin_min: Vec<f64>,
    pub delay_min: Vec<f64>,
    /// Service order actually used on each charger.
    pub served: Vec<Vec<TripId>>,
    pub total_delay_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Event {
    /// Bus finishes trip and reaches the terminal.
    Arrive(TripId),
    /// Charger done with the bus that finished this trip.
    Unplug(TripId),
}

#[derive(Debug, Clone, Copy)]
struct Timed {
    at: f64,
    order: u64,
    event: Event,
}

impl PartialEq for Timed {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Timed {}

impl PartialOrd for Timed {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Timed {
    fn cmp(&self, other: &Self) -> Ordering {
        other.at.total_cmp(&self.at).then(other.order.cmp(&self.order))
    }
}

struct Sim<'a> {
    inst: &'a Instance,
    charge: &'a [f64],
    mode: QueueMode,
    events: BinaryHeap<Timed>,
    order: u64,
    plugin: Vec<f64>,
    delay: Vec<f64>,
    departed: Vec<bool>,
    /// Planned order still to serve, per charger.
    planned: Vec<VecDeque<TripId>>,
    waiting: Vec<Vec<(f64, TripId)>>,
    busy: Vec<bool>,
    served: Vec<Vec<TripId>>,
}

impl Sim<'_> {
    fn schedule(&mut self, at: f64, event: Event) {
        self.order += 1;
        self.events.push(Timed {
            at,
            order: self.order,
            event,
        });
    }

    fn depart(&mut self, i: TripId, ready: f64) {
        let tr = self.inst.trip(i);
        let leave = ready.max(tr.sched_start_min);
        self.delay[i.0] = leave - tr.sched_start_min;
        self.departed[i.0] = true;
        self.schedule(leave + tr.sched_duration_min, Event::Arrive(i));
    }

    fn bus_ready(&mut self, i: TripId, at: f64) {
        if let Some(k) = self.inst.next(i) {
            self.depart(k, at);
        }
    }

    fn try_serve(&mut self, l: ChargerId, now: f64) {
        if self.busy[l.0] {
            return;
        }
        let pick = match self.mode {
            QueueMode::Planned => {
                let Some(&head) = self.planned[l.0].front() else {
                    return;
                };
                let Some(pos) = self.waiting[l.0].iter().position(|&(_, i)| i == head) else {
                    return;
                };
                self.planned[l.0].pop_front();
                pos
            }
            QueueMode::Fifo => {
                let inst = self.inst;
                let best = self.waiting[l.0].iter().enumerate().min_by(|(_, a), (_, b)| {
                    a.0.total_cmp(&b.0)
                        .then_with(|| inst.key(a.1).cmp(&inst.key(b.1)))
                });
                match best {
                    Some((pos, _)) => pos,
                    None => return,
                }
            }
        };
        let (_, i) = self.waiting[l.0].remove(pick);
        self.plugin[i.0] = now;
        self.served[l.0].push(i);
        self.busy[l.0] = true;
        self.schedule(now + self.charge[i.0], Event::Unplug(i));
    }

    fn run(&mut self, charging: &[bool]) {
        while let Some(Timed { at, event, .. }) = self.events.pop() {
            match event {
                Event::Arrive(i) => {
                    self.plugin[i.0] = at;
                    match self.inst.charger_after(i).filter(|_| charging[i.0]) {
                        Some(l) => {
                            self.waiting[l.0].push((at, i));
                            self.try_serve(l, at);
                        }
                        None => self.bus_ready(i, at),
                    }
                }
                Event::Unplug(i) => {
                    let l = self.inst.charger_after(i).expect("charging trip has a charger");
                    self.busy[l.0] = false;
                    self.bus_ready(i, at);
                    self.try_serve(l, at);
                }
            }
        }
    }
}

/// Replays `plan` event by event with its charging times and queue order.
pub fn replay(inst: &Instance, plan: &ChargingPlan) -> Result<Replay, SimError> {
    replay_with(inst, plan, QueueMode::Planned)
}

pub fn replay_with(inst: &Instance, plan: &ChargingPlan, mode: QueueMode) -> Result<Replay, SimError> {
    let n = inst.trips().len();
    if plan.charge_min.len() != n || plan.sequences.len() != inst.chargers().len() {
        return Err(SimError::Mismatch("sizes differ".into()));
    }
    let mut charging = vec![false; n];
    for (l, seq) in plan.sequences.iter().enumerate() {
        for &i in seq {
            if inst.charger_after(i) != Some(ChargerId(l)) {
                return Err(SimError::Mismatch(format!("{} is not served by charger {l}", inst.key(i))));
            }
            charging[i.0] = true;
        }
    }
    if mode == QueueMode::Fifo {
        // only trips that really charge occupy the charger
        for i in inst.trip_ids() {
            charging[i.0] = charging[i.0] && plan.charge_min[i.0] > CHARGE_TOL;
        }
    }
    let mut sim = Sim {
        inst,
        charge: &plan.charge_min,
        mode,
        events: BinaryHeap::new(),
        order: 0,
        plugin: vec![f64::NAN; n],
        delay: vec![0.0; n],
        departed: vec![false; n],
        planned: match mode {
            QueueMode::Planned => plan.sequences.iter().map(|s| s.iter().copied().collect()).collect(),
            QueueMode::Fifo => Vec::new(),
        },
        waiting: vec![Vec::new(); inst.chargers().len()],
        busy: vec![false; inst.chargers().len()],
        served: vec![Vec::new(); inst.chargers().len()],
    };
    for b in inst.bus_ids() {
        if let Some(first) = inst.block(b).next() {
            sim.depart(first, f64::NEG_INFINITY);
        }
    }
    sim.run(&charging);
    let stuck = inst.trip_ids().filter(|i| !sim.departed[i.0]).count()
        + sim.planned.iter().map(VecDeque::len).sum::<usize>();
    if stuck > 0 {
        return Err(SimError::Deadlock(stuck));
    }
    Ok(Replay {
        total_delay_min: sim.delay.iter().sum(),
        plugin_min: sim.plugin,
        delay_min: sim.delay,
        served: sim.served,
    })
}

/// Stretches trips that are scheduled to start inside a time window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioTransform {
    pub window_start_min: f64,
    pub window_end_min: f64,
    pub duration_multiplier: f64,
}

impl ScenarioTransform {
    pub fn new(start: f64, end: f64, multiplier: f64) -> Result<Self, String> {
        if !(start < end) {
            return Err(format!("window [{start}, {end}) is empty or inverted"));
        }
        if !(multiplier > 0.0) || !multiplier.is_finite() {
            return Err(format!("multiplier {multiplier} must be positive"));
        }
        Ok(ScenarioTransform {
            window_start_min: start,
            window_end_min: end,
            duration_multiplier: multiplier,
        })
    }

    /// Window is half open: a trip starting exactly at the end is untouched.
    pub fn covers(&self, start_min: f64) -> bool {
        start_min >= self.window_start_min && start_min < self.window_end_min
    }

    pub fn apply_file(&self, file: &InstanceFile) -> InstanceFile {
        let mut out = file.clone();
        for t in &mut out.trips {
            if self.covers(t.sched_start_min) {
                t.sched_duration_min *= self.duration_multiplier;
            }
        }
        out
    }
}

/// The instance with trip durations stretched. Charge bounds depend only on
/// energy, so they carry over unchanged. A stretched trip may now run into
/// its successor's departure; that only adds delay.
pub fn apply_scenario(inst: &Instance, transform: &ScenarioTransform) -> Result<Instance, ModelError> {
    Instance::from_file(&transform.apply_file(&inst.to_file()))
}

/// Charging minutes falling in each clock hour, indexed from hour 0.
pub fn hourly_charging_histogram(plan: &ChargingPlan) -> Vec<f64> {
    let mut hours: Vec<f64> = vec![0.0; 24];
    for (i, &t) in plan.charge_min.iter().enumerate() {
        if t <= 0.0 {
            continue;
        }
        let (mut from, to) = (plan.plugin_min[i], plan.plugin_min[i] + t);
        while from < to {
            let h = (from / 60.0).floor();
            let edge = ((h + 1.0) * 60.0).min(to);
            let slot = h.max(0.0) as usize;
            if slot >= hours.len() {
                hours.resize(slot + 1, 0.0);
            }
            hours[slot] += edge - from;
            from = edge;
        }
    }
    hours
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::tests::queue_example;

    #[test]
    fn waiting_bus_plugs_in_when_charger_frees() {
        let inst = queue_example();
        let (a1, a2, b1) = (TripId(0), TripId(1), TripId(2));
        let mut charge = vec![0.0; 4];
        charge[b1.0] = 25.0;
        charge[a1.0] = 10.0;
        let plan = ChargingPlan::settle(&inst, vec![vec![b1, a1]], charge).unwrap();
        let r = replay(&inst, &plan).unwrap();
        assert_eq!(r.plugin_min[a1.0], r.plugin_min[b1.0] + 25.0);
        assert_eq!(r.delay_min[a2.0], r.plugin_min[a1.0] + 10.0 - 90.0);
        assert_eq!(r.plugin_min, plan.plugin_min);
        assert_eq!(r.delay_min, plan.delay_min);
    }

    #[test]
    fn no_charging_no_delay() {
        let inst = queue_example();
        let plan = ChargingPlan::settle(&inst, vec![vec![]], vec![0.0; 4]).unwrap();
        let r = replay(&inst, &plan).unwrap();
        assert_eq!(r.total_delay_min, 0.0);
    }

    #[test]
    fn fifo_serves_first_arrival() {
        let inst = queue_example();
        let (a1, b1) = (TripId(0), TripId(2));
        let mut charge = vec![0.0; 4];
        charge[b1.0] = 25.0;
        charge[a1.0] = 10.0;
        // planned order puts A first, so B waits for A
        let plan = ChargingPlan::settle(&inst, vec![vec![a1, b1]], charge).unwrap();
        let planned = replay(&inst, &plan).unwrap();
        assert_eq!(planned.served[0], vec![a1, b1]);
        let fifo = replay_with(&inst, &plan, QueueMode::Fifo).unwrap();
        assert_eq!(fifo.served[0], vec![b1, a1]);
    }

    #[test]
    fn scenario_b_stretches_morning_trip() {
        let tr = ScenarioTransform::new(420.0, 540.0, 1.4).unwrap();
        assert!(tr.covers(430.0));
        assert!(!tr.covers(540.0));
        assert!((40.0 * tr.duration_multiplier - 56.0).abs() < 1e-12);
        assert!(ScenarioTransform::new(540.0, 420.0, 1.4).is_err());
    }

    #[test]
    fn histogram_splits_at_hour_boundary() {
        let plan = ChargingPlan {
            sequences: vec![],
            charge_min: vec![30.0],
            plugin_min: vec![7.0 * 60.0 + 45.0],
            delay_min: vec![0.0],
            objective: 0.0,
        };
        let h = hourly_charging_histogram(&plan);
        assert_eq!(h[7], 15.0);
        assert_eq!(h[8], 15.0);
        assert_eq!(h.iter().sum::<f64>(), 30.0);
    }

    #[test]
    fn empty_plan_histogram_is_zero() {
        let plan = ChargingPlan {
            sequences: vec![],
            charge_min: vec![],
            plugin_min: vec![],
            delay_min: vec![],
            objective: 0.0,
        };
        assert!(hourly_charging_histogram(&plan).iter().all(|&v| v == 0.0));
    }
}
