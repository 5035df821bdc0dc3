use std::ops::Range;

use super::{Bus, BusId, ChargerId, ModelError, Trip, TripId};

/// Bounds on cumulative energy gained from charging before some point of a
/// block. The gain counted is the charging after the first `covers` trips of
/// the block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocCheckpoint {
    pub bus: BusId,
    /// Trip about to depart, or `None` for the return to the depot.
    pub before: Option<TripId>,
    pub covers: usize,
    pub alpha_kwh: f64,
    pub beta_kwh: f64,
}

/// Charge-gain windows for every trip plus one end-of-block window per bus.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeBounds {
    per_trip: Vec<SocCheckpoint>,
    block_end: Vec<SocCheckpoint>,
}

impl ChargeBounds {
    pub fn alpha(&self, i: TripId) -> f64 {
        self.per_trip[i.0].alpha_kwh
    }

    pub fn beta(&self, i: TripId) -> f64 {
        self.per_trip[i.0].beta_kwh
    }

    pub fn trip(&self, i: TripId) -> &SocCheckpoint {
        &self.per_trip[i.0]
    }

    pub fn block_end(&self, b: BusId) -> &SocCheckpoint {
        &self.block_end[b.0]
    }

    /// Checkpoints of one bus, in block order, ending with the depot return.
    pub fn for_bus(&self, b: BusId) -> impl Iterator<Item = &SocCheckpoint> {
        self.per_trip
            .iter()
            .filter(move |c| c.bus == b)
            .chain(std::iter::once(&self.block_end[b.0]))
    }

    pub fn all(&self) -> impl Iterator<Item = &SocCheckpoint> {
        self.per_trip.iter().chain(self.block_end.iter())
    }
}

/// Derives the charge-gain windows for every trip of every block.
///
/// With `E_k` the energy used by the first `k` trips of a block and `u0` the
/// starting energy, the gain before trip `k` must lie in
/// `[max(0, E_k - u0), cap - u0 + E_{k-1}]` so the bus can finish trip `k`
/// without running empty and never exceeds its capacity when it departs.
/// The depot return adds the final-minimum requirement over the whole block.
///
/// Rejects the instance when some lower bound cannot be reached with the
/// charging opportunities that precede it.
pub fn derive_bounds(
    buses: &[Bus],
    trips: &[Trip],
    blocks: &[Range<usize>],
    charger_at_end: &[Option<ChargerId>],
) -> Result<ChargeBounds, ModelError> {
    let mut per_trip = Vec::with_capacity(trips.len());
    let mut block_end = Vec::with_capacity(buses.len());

    for (b, bus) in buses.iter().enumerate() {
        let range = blocks[b].clone();
        let u0 = bus.initial_energy_kwh;
        let cap = bus.usable_capacity_kwh;
        let mut used_before = 0.0;
        for (k, i) in range.clone().enumerate() {
            let used_through = used_before + trips[i].energy_kwh;
            let beta = cap - u0 + used_before;
            let alpha = (used_through - u0).max(0.0).min(beta.max(0.0));
            per_trip.push(SocCheckpoint {
                bus: BusId(b),
                before: Some(TripId(i)),
                covers: k,
                alpha_kwh: alpha,
                beta_kwh: beta,
            });
            used_before = used_through;
        }
        let beta = cap - u0 + used_before;
        let alpha = (used_before + bus.final_min_energy_kwh - u0)
            .max(0.0)
            .min(beta.max(0.0));
        block_end.push(SocCheckpoint {
            bus: BusId(b),
            before: None,
            covers: range.len(),
            alpha_kwh: alpha,
            beta_kwh: beta,
        });
    }

    let bounds = ChargeBounds { per_trip, block_end };
    check_reachable(buses, trips, blocks, charger_at_end, &bounds)?;
    Ok(bounds)
}

/// Walks each block keeping the exact interval of reachable cumulative gain;
/// every charging stop can add at most one full battery.
fn check_reachable(
    buses: &[Bus],
    trips: &[Trip],
    blocks: &[Range<usize>],
    charger_at_end: &[Option<ChargerId>],
    bounds: &ChargeBounds,
) -> Result<(), ModelError> {
    const TOL: f64 = 1e-9;
    for (b, bus) in buses.iter().enumerate() {
        let (mut lo, mut hi) = (0.0_f64, 0.0_f64);
        let mut reachable_total = 0.0;
        for (cp, k) in bounds
            .for_bus(BusId(b))
            .zip(blocks[b].clone().map(Some).chain(std::iter::once(None)))
        {
            lo = lo.max(cp.alpha_kwh);
            hi = hi.min(cp.beta_kwh);
            if lo > hi + TOL {
                let name = match k {
                    Some(i) => format!("{}#{}", bus.id, trips[i].seq),
                    None => format!("{} (depot return)", bus.id),
                };
                let reason = if cp.alpha_kwh > reachable_total + TOL {
                    format!(
                        "needs {:.3} kWh of charging beforehand but at most {:.3} kWh is reachable",
                        cp.alpha_kwh, reachable_total
                    )
                } else {
                    format!(
                        "charge window [{:.3}, {:.3}] kWh conflicts with earlier bounds",
                        cp.alpha_kwh, cp.beta_kwh
                    )
                };
                return Err(ModelError::InfeasibleBlock { trip: name, reason });
            }
            if let Some(i) = k {
                if charger_at_end[i].is_some() {
                    // a full-length stop restores one whole battery
                    hi += bus.usable_capacity_kwh;
                    reachable_total += bus.usable_capacity_kwh;
                }
            }
        }
    }
    Ok(())
}
