//! Delimited-text reports: per-trip schedule, hourly charging, run summary.

use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::model::Instance;
use crate::plan::ChargingPlan;

#[derive(Debug, Serialize)]
struct ScheduleRow<'a> {
    bus: &'a str,
    seq: u32,
    start_terminal: &'a str,
    end_terminal: &'a str,
    sched_start_min: f64,
    sched_end_min: f64,
    delay_min: f64,
    plugin_min: f64,
    charge_min: f64,
    charger: &'a str,
}

/// One row per trip with header
/// `bus,seq,start_terminal,end_terminal,sched_start_min,sched_end_min,delay_min,plugin_min,charge_min,charger`.
/// `charger` is empty when the bus does not charge after the trip.
pub fn write_schedule<W: Write>(inst: &Instance, plan: &ChargingPlan, w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for i in inst.trip_ids() {
        let tr = inst.trip(i);
        let charger = match inst.charger_after(i) {
            Some(l) if plan.is_charging(i) => inst.charger(l).id.as_str(),
            _ => "",
        };
        out.serialize(ScheduleRow {
            bus: &inst.bus(tr.bus).id,
            seq: tr.seq,
            start_terminal: &tr.start_terminal,
            end_terminal: &tr.end_terminal,
            sched_start_min: tr.sched_start_min,
            sched_end_min: tr.sched_end_min(),
            delay_min: plan.delay_min[i.0],
            plugin_min: plan.plugin_min[i.0],
            charge_min: plan.charge_min[i.0],
            charger,
        })?;
    }
    out.flush()?;
    Ok(())
}

/// Header `hour,charge_min`; hour 0 starts at midnight.
pub fn write_histogram<W: Write>(hist: &[f64], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["hour", "charge_min"])?;
    for (h, m) in hist.iter().enumerate() {
        out.write_record([h.to_string(), m.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Outcome of one solve, printed as `key=value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub method: String,
    pub status: String,
    pub objective_min: f64,
    pub time_to_best_s: f64,
    pub total_time_s: f64,
    pub delayed_trips: usize,
    pub total_charge_min: f64,
    pub proven_optimal: bool,
    pub iterations: usize,
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "method={}", self.method)?;
        writeln!(f, "status={}", self.status)?;
        writeln!(f, "objective_min={}", self.objective_min)?;
        writeln!(f, "time_to_best_s={:.3}", self.time_to_best_s)?;
        writeln!(f, "total_time_s={:.3}", self.total_time_s)?;
        writeln!(f, "delayed_trips={}", self.delayed_trips)?;
        writeln!(f, "total_charge_min={}", self.total_charge_min)?;
        writeln!(f, "proven_optimal={}", self.proven_optimal)?;
        writeln!(f, "iterations={}", self.iterations)
    }
}

/// Reads `key=value` lines back; unknown keys are ignored.
pub fn parse_key_values(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heuristic3s::phase3_schedule;
    use crate::model::TripId;
    use crate::plan::tests::queue_example;

    #[test]
    fn schedule_has_header_and_rows() {
        let inst = queue_example();
        let plan = phase3_schedule(&inst, vec![vec![TripId(2), TripId(0)]]).unwrap();
        let mut buf = Vec::new();
        write_schedule(&inst, &plan, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("bus,seq,start_terminal"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn summary_round_trips() {
        let s = Summary {
            method: "3s".into(),
            status: "ok".into(),
            objective_min: 7.5,
            time_to_best_s: 0.1,
            total_time_s: 0.2,
            delayed_trips: 2,
            total_charge_min: 30.0,
            proven_optimal: false,
            iterations: 500,
        };
        let kv = parse_key_values(&s.to_string());
        assert!(kv.contains(&("objective_min".into(), "7.5".into())));
        assert!(kv.contains(&("delayed_trips".into(), "2".into())));
    }
}
