//! The two-route test network: routes A and C share one charged terminal.

use crate::model::{BusRecord, ChargerRecord, InstanceFile, TripRecord};

pub const CHARGED_TERMINAL: &str = "T";

#[derive(Debug, Clone, PartialEq)]
pub struct RouteSpec {
    pub name: &'static str,
    pub far_terminal: &'static str,
    pub runs: usize,
    pub first_departure_min: f64,
    pub headway_min: f64,
    pub trip_min: f64,
    pub layover_min: f64,
    pub trips_per_run: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NotionalParams {
    pub power_kw: f64,
    pub routes: Vec<RouteSpec>,
    pub trip_miles: f64,
    pub kwh_per_mile: f64,
    pub usable_capacity_kwh: f64,
    pub initial_energy_kwh: f64,
    pub final_min_energy_kwh: f64,
    /// (route, run) pairs whose block is handed to a second bus.
    pub relief: Vec<(&'static str, usize)>,
    /// Trips driven by the first bus of a relieved run.
    pub relief_after: usize,
}

impl NotionalParams {
    pub fn new(power_kw: f64) -> Self {
        NotionalParams {
            power_kw,
            routes: vec![
                RouteSpec {
                    name: "A",
                    far_terminal: "A-END",
                    runs: 4,
                    first_departure_min: 360.0,
                    headway_min: 30.0,
                    trip_min: 40.0,
                    layover_min: 20.0,
                    trips_per_run: 14,
                },
                RouteSpec {
                    name: "C",
                    far_terminal: "C-END",
                    runs: 2,
                    first_departure_min: 360.0,
                    headway_min: 60.0,
                    trip_min: 45.0,
                    layover_min: 15.0,
                    trips_per_run: 14,
                },
            ],
            trip_miles: 15.0,
            kwh_per_mile: 3.0,
            usable_capacity_kwh: 400.0,
            initial_energy_kwh: 200.0,
            final_min_energy_kwh: 60.0,
            relief: vec![("A", 0), ("A", 2)],
            relief_after: 8,
        }
    }
}

/// Builds the instance. Every run leaves the charged terminal first and
/// alternates out and back, so charging is possible after each return trip.
pub fn generate(p: &NotionalParams) -> InstanceFile {
    let mut file = InstanceFile {
        chargers: vec![ChargerRecord {
            id: "T1".into(),
            terminal: CHARGED_TERMINAL.into(),
            power_kw: p.power_kw,
        }],
        ..InstanceFile::default()
    };
    let energy = p.trip_miles * p.kwh_per_mile;
    for r in &p.routes {
        for run in 0..r.runs {
            let split = p.relief.contains(&(r.name, run));
            let mut bus_id = format!("{}{}", r.name, run + 1);
            let mut seq = 0;
            let add_bus = |file: &mut InstanceFile, id: &str| {
                file.buses.push(BusRecord {
                    id: id.to_string(),
                    usable_capacity_kwh: p.usable_capacity_kwh,
                    initial_energy_kwh: p.initial_energy_kwh,
                    final_min_energy_kwh: p.final_min_energy_kwh,
                });
            };
            add_bus(&mut file, &bus_id);
            let start = r.first_departure_min + r.headway_min * run as f64;
            for k in 0..r.trips_per_run {
                if split && k == p.relief_after {
                    bus_id = format!("{}{}R", r.name, run + 1);
                    add_bus(&mut file, &bus_id);
                    seq = 0;
                }
                seq += 1;
                let (from, to) = if k % 2 == 0 {
                    (CHARGED_TERMINAL, r.far_terminal)
                } else {
                    (r.far_terminal, CHARGED_TERMINAL)
                };
                file.trips.push(TripRecord {
                    bus: bus_id.clone(),
                    seq,
                    sched_start_min: start + k as f64 * (r.trip_min + r.layover_min),
                    sched_duration_min: r.trip_min,
                    energy_kwh: energy,
                    start_terminal: from.into(),
                    end_terminal: to.into(),
                });
            }
        }
    }
    file
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Instance;

    #[test]
    fn fleet_size_and_energy() {
        let f = generate(&NotionalParams::new(400.0));
        assert_eq!(f.buses.len(), 8);
        assert_eq!(f.trips.len(), 84);
        assert!(f.trips.iter().all(|t| t.energy_kwh == 45.0));
        let inst = Instance::from_file(&f).unwrap();
        let l = inst.charger_ids().next().unwrap();
        let i = inst.network().charger(l).nodes[0];
        assert_eq!(inst.tmax_min(l, i), 60.0);
    }
}
