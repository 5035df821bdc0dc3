//! Problem data: buses, their fixed blocks of trips, terminal chargers, and
//! everything derived from them before any optimization happens.
//!
//! Units are minutes from midnight, kWh and kW throughout. Energy is tracked
//! on the usable scale `[0, usable_capacity]`; reserve floors are expected to
//! be folded into the input capacities by whoever prepares the instance.

mod bounds;
mod file;
pub(crate) mod network;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bounds::{derive_bounds, ChargeBounds, SocCheckpoint};
pub use file::{BusRecord, ChargerRecord, InstanceFile, TripRecord};
pub use network::{build_arc_network, Arc, ArcId, ArcNetwork, ChargerNetwork, Node};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BusId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TripId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChargerId(pub usize);

/// External name of a trip: the bus that runs it and its position in the block.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TripKey {
    pub bus: String,
    pub seq: u32,
}

impl fmt::Display for TripKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.bus, self.seq)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Charger {
    pub id: String,
    pub terminal: String,
    pub power_kw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    pub usable_capacity_kwh: f64,
    pub initial_energy_kwh: f64,
    pub final_min_energy_kwh: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trip {
    pub bus: BusId,
    pub seq: u32,
    pub sched_start_min: f64,
    pub sched_duration_min: f64,
    pub energy_kwh: f64,
    pub start_terminal: String,
    pub end_terminal: String,
}

impl Trip {
    pub fn sched_end_min(&self) -> f64 {
        self.sched_start_min + self.sched_duration_min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    Duration,
    Energy,
    Power,
    Capacity,
    InitialEnergy,
    FinalEnergy,
    SharedTerminal,
    DuplicateId,
    UnknownBus,
    Sequence,
    Layover,
    Terminal,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("could not parse instance: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("instance failed validation:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("trip {trip} cannot be served: {reason}")]
    InfeasibleBlock { trip: String, reason: String },
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Checks every structural invariant of an instance document and returns all
/// violations found. An empty list means the document is usable.
pub fn validate(file: &InstanceFile) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |kind, message: String| out.push(Violation { kind, message });

    let mut charger_ids = BTreeSet::new();
    let mut terminals: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for c in &file.chargers {
        if !charger_ids.insert(c.id.as_str()) {
            push(ViolationKind::DuplicateId, format!("charger id {} repeated", c.id));
        }
        if !c.power_kw.is_finite() || c.power_kw <= 0.0 {
            push(
                ViolationKind::Power,
                format!("charger {} has non-positive power {}", c.id, c.power_kw),
            );
        }
        terminals.entry(c.terminal.as_str()).or_default().push(c.id.as_str());
    }
    for (terminal, ids) in &terminals {
        if ids.len() > 1 {
            push(
                ViolationKind::SharedTerminal,
                format!(
                    "terminal {terminal} has {} chargers ({}); at most one is allowed",
                    ids.len(),
                    ids.join(", ")
                ),
            );
        }
    }

    let mut buses = BTreeMap::new();
    for b in &file.buses {
        if buses.insert(b.id.as_str(), b).is_some() {
            push(ViolationKind::DuplicateId, format!("bus id {} repeated", b.id));
        }
        let finite = [b.usable_capacity_kwh, b.initial_energy_kwh, b.final_min_energy_kwh]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            push(ViolationKind::NonFinite, format!("bus {} has non-finite energy", b.id));
            continue;
        }
        if b.usable_capacity_kwh <= 0.0 {
            push(
                ViolationKind::Capacity,
                format!("bus {} has non-positive capacity", b.id),
            );
        }
        if b.initial_energy_kwh < 0.0 || b.initial_energy_kwh > b.usable_capacity_kwh {
            push(
                ViolationKind::InitialEnergy,
                format!(
                    "bus {} initial energy {} outside [0, {}]",
                    b.id, b.initial_energy_kwh, b.usable_capacity_kwh
                ),
            );
        }
        if b.final_min_energy_kwh < 0.0 || b.final_min_energy_kwh > b.usable_capacity_kwh {
            push(
                ViolationKind::FinalEnergy,
                format!(
                    "bus {} final minimum {} outside [0, {}]",
                    b.id, b.final_min_energy_kwh, b.usable_capacity_kwh
                ),
            );
        }
    }

    let mut blocks: BTreeMap<&str, Vec<&TripRecord>> = BTreeMap::new();
    for t in &file.trips {
        let name = format!("{}#{}", t.bus, t.seq);
        let finite = [t.sched_start_min, t.sched_duration_min, t.energy_kwh]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            push(ViolationKind::NonFinite, format!("trip {name} has a non-finite field"));
        }
        if !(t.sched_duration_min > 0.0) {
            push(
                ViolationKind::Duration,
                format!("trip {name} has non-positive duration {}", t.sched_duration_min),
            );
        }
        if t.energy_kwh < 0.0 {
            push(
                ViolationKind::Energy,
                format!("trip {name} has negative energy {}", t.energy_kwh),
            );
        }
        if t.start_terminal.is_empty() || t.end_terminal.is_empty() {
            push(ViolationKind::Terminal, format!("trip {name} has an empty terminal"));
        }
        match buses.get(t.bus.as_str()) {
            None => push(
                ViolationKind::UnknownBus,
                format!("trip {name} references unknown bus {}", t.bus),
            ),
            Some(bus) => {
                if t.energy_kwh > bus.usable_capacity_kwh {
                    push(
                        ViolationKind::Energy,
                        format!(
                            "trip {name} needs {} kWh, more than the usable capacity {}",
                            t.energy_kwh, bus.usable_capacity_kwh
                        ),
                    );
                }
            }
        }
        blocks.entry(t.bus.as_str()).or_default().push(t);
    }

    for (bus, trips) in &mut blocks {
        trips.sort_by_key(|t| t.seq);
        for (k, t) in trips.iter().enumerate() {
            if t.seq as usize != k + 1 {
                push(
                    ViolationKind::Sequence,
                    format!(
                        "block {bus} trip numbers must run 1..{} consecutively (found {} at position {})",
                        trips.len(),
                        t.seq,
                        k + 1
                    ),
                );
                break;
            }
        }
        for pair in trips.windows(2) {
            let (prev, next) = (pair[0], pair[1]);
            let end = prev.sched_start_min + prev.sched_duration_min;
            if next.sched_start_min < end - 1e-9 {
                push(
                    ViolationKind::Layover,
                    format!(
                        "trip {bus}#{} starts at {} before trip {bus}#{} ends at {end}",
                        next.seq, next.sched_start_min, prev.seq
                    ),
                );
            }
        }
    }
    out
}

/// Validated problem data with all derived scheduling parameters.
///
/// Trips are stored block by block, in trip order, so the trips of a bus form
/// a contiguous range. Immutable once built.
#[derive(Debug, Clone)]
pub struct Instance {
    buses: Vec<Bus>,
    trips: Vec<Trip>,
    chargers: Vec<Charger>,
    blocks: Vec<Range<usize>>,
    charger_at_end: Vec<Option<ChargerId>>,
    bounds: ChargeBounds,
    network: ArcNetwork,
    horizon_end_min: f64,
    big_m: f64,
}

impl Instance {
    /// Validates the document, derives charge bounds and the arc network.
    ///
    /// Overlapping trips of one block are accepted with a warning: a trip that
    /// runs past the next departure just makes that departure late.
    pub fn from_file(file: &InstanceFile) -> Result<Self, ModelError> {
        let (overlaps, violations): (Vec<Violation>, Vec<Violation>) =
            validate(file).into_iter().partition(|v| v.kind == ViolationKind::Layover);
        if !violations.is_empty() {
            return Err(ModelError::Invalid(violations));
        }
        for v in &overlaps {
            log::warn!("{}", v.message);
        }

        let chargers: Vec<Charger> = file
            .chargers
            .iter()
            .map(|c| Charger {
                id: c.id.clone(),
                terminal: c.terminal.clone(),
                power_kw: c.power_kw,
            })
            .collect();
        let buses: Vec<Bus> = file
            .buses
            .iter()
            .map(|b| Bus {
                id: b.id.clone(),
                usable_capacity_kwh: b.usable_capacity_kwh,
                initial_energy_kwh: b.initial_energy_kwh,
                final_min_energy_kwh: b.final_min_energy_kwh,
            })
            .collect();
        let bus_index: HashMap<&str, usize> = buses
            .iter()
            .enumerate()
            .map(|(k, b)| (b.id.as_str(), k))
            .collect();

        let mut records: Vec<&TripRecord> = file.trips.iter().collect();
        records.sort_by_key(|t| (bus_index[t.bus.as_str()], t.seq));
        let trips: Vec<Trip> = records
            .iter()
            .map(|t| Trip {
                bus: BusId(bus_index[t.bus.as_str()]),
                seq: t.seq,
                sched_start_min: t.sched_start_min,
                sched_duration_min: t.sched_duration_min,
                energy_kwh: t.energy_kwh,
                start_terminal: t.start_terminal.clone(),
                end_terminal: t.end_terminal.clone(),
            })
            .collect();

        let mut blocks = vec![0..0; buses.len()];
        let mut start = 0;
        while start < trips.len() {
            let bus = trips[start].bus.0;
            let mut end = start;
            while end < trips.len() && trips[end].bus.0 == bus {
                end += 1;
            }
            blocks[bus] = start..end;
            start = end;
        }

        let terminal_charger: HashMap<&str, ChargerId> = chargers
            .iter()
            .enumerate()
            .map(|(k, c)| (c.terminal.as_str(), ChargerId(k)))
            .collect();
        let charger_at_end: Vec<Option<ChargerId>> = trips
            .iter()
            .map(|t| terminal_charger.get(t.end_terminal.as_str()).copied())
            .collect();

        let bounds = derive_bounds(&buses, &trips, &blocks, &charger_at_end)?;
        let network = build_arc_network(&trips, &chargers, &charger_at_end);

        let horizon_end_min = trips
            .iter()
            .map(Trip::sched_end_min)
            .fold(0.0_f64, f64::max);
        let tmax_total: f64 = (0..trips.len())
            .map(|i| {
                charger_at_end[i]
                    .map(|l| tmax(&buses[trips[i].bus.0], &chargers[l.0]))
                    .unwrap_or(0.0)
            })
            .sum();
        let big_m = horizon_end_min + tmax_total;

        Ok(Instance {
            buses,
            trips,
            chargers,
            blocks,
            charger_at_end,
            bounds,
            network,
            horizon_end_min,
            big_m,
        })
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn trips(&self) -> &[Trip] {
        &self.trips
    }

    pub fn chargers(&self) -> &[Charger] {
        &self.chargers
    }

    pub fn trip(&self, i: TripId) -> &Trip {
        &self.trips[i.0]
    }

    pub fn bus(&self, b: BusId) -> &Bus {
        &self.buses[b.0]
    }

    pub fn charger(&self, l: ChargerId) -> &Charger {
        &self.chargers[l.0]
    }

    pub fn trip_ids(&self) -> impl Iterator<Item = TripId> + '_ {
        (0..self.trips.len()).map(TripId)
    }

    pub fn charger_ids(&self) -> impl Iterator<Item = ChargerId> + '_ {
        (0..self.chargers.len()).map(ChargerId)
    }

    pub fn bus_ids(&self) -> impl Iterator<Item = BusId> + '_ {
        (0..self.buses.len()).map(BusId)
    }

    /// Trips of one block, in order.
    pub fn block(&self, b: BusId) -> impl DoubleEndedIterator<Item = TripId> + ExactSizeIterator {
        self.blocks[b.0].clone().map(TripId)
    }

    pub fn block_len(&self, b: BusId) -> usize {
        self.blocks[b.0].len()
    }

    /// Immediate predecessor on the same block.
    pub fn prev(&self, i: TripId) -> Option<TripId> {
        let range = &self.blocks[self.trips[i.0].bus.0];
        (i.0 > range.start).then(|| TripId(i.0 - 1))
    }

    /// Immediate successor on the same block.
    pub fn next(&self, i: TripId) -> Option<TripId> {
        let range = &self.blocks[self.trips[i.0].bus.0];
        (i.0 + 1 < range.end).then(|| TripId(i.0 + 1))
    }

    /// Strict predecessors of `i` on its block.
    pub fn predecessors(&self, i: TripId) -> impl Iterator<Item = TripId> {
        let range = &self.blocks[self.trips[i.0].bus.0];
        (range.start..i.0).map(TripId)
    }

    pub fn key(&self, i: TripId) -> TripKey {
        let t = &self.trips[i.0];
        TripKey {
            bus: self.buses[t.bus.0].id.clone(),
            seq: t.seq,
        }
    }

    pub fn find_trip(&self, key: &TripKey) -> Option<TripId> {
        let b = self.buses.iter().position(|b| b.id == key.bus)?;
        let range = &self.blocks[b];
        let i = range.start + (key.seq as usize).checked_sub(1)?;
        (i < range.end).then_some(TripId(i))
    }

    pub fn find_charger(&self, id: &str) -> Option<ChargerId> {
        self.chargers.iter().position(|c| c.id == id).map(ChargerId)
    }

    /// The charger at the terminal where trip `i` ends, if there is one.
    pub fn charger_after(&self, i: TripId) -> Option<ChargerId> {
        self.charger_at_end[i.0]
    }

    /// Longest possible charge at `l` after trip `i`, in minutes (zero when
    /// the trip does not end at the charger's terminal).
    pub fn tmax_min(&self, l: ChargerId, i: TripId) -> f64 {
        if self.charger_at_end[i.0] == Some(l) {
            tmax(&self.buses[self.trips[i.0].bus.0], &self.chargers[l.0])
        } else {
            0.0
        }
    }

    /// Energy gained per minute of charging at `l`.
    pub fn kwh_per_min(&self, l: ChargerId) -> f64 {
        self.chargers[l.0].power_kw / 60.0
    }

    /// All (charger, trip) pairs where charging is possible, in trip order.
    pub fn charging_opportunities(&self) -> impl Iterator<Item = (ChargerId, TripId)> + '_ {
        self.trip_ids()
            .filter_map(move |i| self.charger_at_end[i.0].map(|l| (l, i)))
    }

    pub fn bounds(&self) -> &ChargeBounds {
        &self.bounds
    }

    pub fn network(&self) -> &ArcNetwork {
        &self.network
    }

    pub fn horizon_end_min(&self) -> f64 {
        self.horizon_end_min
    }

    pub fn big_m(&self) -> f64 {
        self.big_m
    }

    /// Rebuilds the on-disk document for this instance.
    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            chargers: self
                .chargers
                .iter()
                .map(|c| ChargerRecord {
                    id: c.id.clone(),
                    terminal: c.terminal.clone(),
                    power_kw: c.power_kw,
                })
                .collect(),
            buses: self
                .buses
                .iter()
                .map(|b| BusRecord {
                    id: b.id.clone(),
                    usable_capacity_kwh: b.usable_capacity_kwh,
                    initial_energy_kwh: b.initial_energy_kwh,
                    final_min_energy_kwh: b.final_min_energy_kwh,
                })
                .collect(),
            trips: self
                .trips
                .iter()
                .map(|t| TripRecord {
                    bus: self.buses[t.bus.0].id.clone(),
                    seq: t.seq,
                    sched_start_min: t.sched_start_min,
                    sched_duration_min: t.sched_duration_min,
                    energy_kwh: t.energy_kwh,
                    start_terminal: t.start_terminal.clone(),
                    end_terminal: t.end_terminal.clone(),
                })
                .collect(),
        }
    }
}

fn tmax(bus: &Bus, charger: &Charger) -> f64 {
    bus.usable_capacity_kwh * 60.0 / charger.power_kw
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn trip(bus: &str, seq: u32, start: f64, dur: f64, energy: f64, from: &str, to: &str) -> TripRecord {
        TripRecord {
            bus: bus.into(),
            seq,
            sched_start_min: start,
            sched_duration_min: dur,
            energy_kwh: energy,
            start_terminal: from.into(),
            end_terminal: to.into(),
        }
    }

    pub fn bus(id: &str, cap: f64, init: f64, fin: f64) -> BusRecord {
        BusRecord {
            id: id.into(),
            usable_capacity_kwh: cap,
            initial_energy_kwh: init,
            final_min_energy_kwh: fin,
        }
    }

    pub fn charger(id: &str, terminal: &str, power: f64) -> ChargerRecord {
        ChargerRecord {
            id: id.into(),
            terminal: terminal.into(),
            power_kw: power,
        }
    }

    #[test]
    fn negative_duration_is_reported() {
        let file = InstanceFile {
            chargers: vec![],
            buses: vec![bus("A", 100.0, 100.0, 0.0)],
            trips: vec![trip("A", 1, 0.0, -5.0, 1.0, "X", "Y")],
        };
        let v = validate(&file);
        assert!(v.iter().any(|v| v.kind == ViolationKind::Duration));
    }

    #[test]
    fn shared_terminal_is_reported() {
        let file = InstanceFile {
            chargers: vec![charger("L1", "X", 300.0), charger("L2", "X", 450.0)],
            buses: vec![],
            trips: vec![],
        };
        let v = validate(&file);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::SharedTerminal);
    }

    #[test]
    fn all_violations_are_collected() {
        let file = InstanceFile {
            chargers: vec![charger("L1", "X", -1.0)],
            buses: vec![bus("A", 100.0, 120.0, 0.0)],
            trips: vec![
                trip("A", 1, 0.0, 0.0, 1.0, "X", "Y"),
                trip("A", 3, 10.0, 5.0, 1.0, "Y", "X"),
                trip("Z", 1, 0.0, 5.0, 1.0, "Y", "X"),
            ],
        };
        let kinds: BTreeSet<_> = validate(&file).iter().map(|v| format!("{:?}", v.kind)).collect();
        for k in ["Power", "InitialEnergy", "Duration", "Sequence", "UnknownBus"] {
            assert!(kinds.contains(k), "missing {k} in {kinds:?}");
        }
    }

    #[test]
    fn overlapping_trips_violate_layover() {
        let file = InstanceFile {
            chargers: vec![],
            buses: vec![bus("A", 100.0, 100.0, 0.0)],
            trips: vec![
                trip("A", 1, 0.0, 30.0, 1.0, "X", "Y"),
                trip("A", 2, 20.0, 30.0, 1.0, "Y", "X"),
            ],
        };
        assert!(validate(&file).iter().any(|v| v.kind == ViolationKind::Layover));
        let inst = Instance::from_file(&file).unwrap();
        assert!(inst.trips().len() == 2);
    }

    #[test]
    fn block_navigation() {
        let file = InstanceFile {
            chargers: vec![charger("L", "X", 450.0)],
            buses: vec![bus("B", 100.0, 100.0, 0.0), bus("A", 100.0, 100.0, 0.0)],
            trips: vec![
                trip("A", 2, 60.0, 30.0, 1.0, "Y", "X"),
                trip("B", 1, 0.0, 30.0, 1.0, "X", "Y"),
                trip("A", 1, 0.0, 30.0, 1.0, "X", "Y"),
            ],
        };
        let inst = Instance::from_file(&file).unwrap();
        let a2 = inst.find_trip(&TripKey { bus: "A".into(), seq: 2 }).unwrap();
        let a1 = inst.prev(a2).unwrap();
        assert_eq!(inst.key(a1).seq, 1);
        assert_eq!(inst.next(a2), None);
        assert_eq!(inst.charger_after(a2), Some(ChargerId(0)));
        assert_eq!(inst.charger_after(a1), None);
        // 100 kWh at 450 kW
        assert!((inst.tmax_min(ChargerId(0), a2) - 100.0 * 60.0 / 450.0).abs() < 1e-12);
        assert_eq!(inst.tmax_min(ChargerId(0), a1), 0.0);
        assert_eq!(inst.to_file().trips.len(), 3);
    }

    #[test]
    fn big_m_dominates_horizon_plus_charging() {
        let file = InstanceFile {
            chargers: vec![charger("L", "X", 400.0)],
            buses: vec![bus("A", 400.0, 400.0, 0.0)],
            trips: vec![
                trip("A", 1, 0.0, 40.0, 45.0, "X", "X"),
                trip("A", 2, 60.0, 40.0, 45.0, "X", "X"),
            ],
        };
        let inst = Instance::from_file(&file).unwrap();
        // 400 kWh at 400 kW is a 60 minute charge
        assert_eq!(inst.tmax_min(ChargerId(0), TripId(0)), 60.0);
        assert_eq!(inst.horizon_end_min(), 100.0);
        assert_eq!(inst.big_m(), 100.0 + 120.0);
    }
}
