//! Builds the optimization models for an instance: the complete MILP, the
//! master problem over charger assignments and queue arcs, and the
//! scheduling LP that prices a fixed assignment.

use std::fmt;

use crate::lp::{Constraint, LinearProgram, Sense, Tag, VarId};
use crate::mip::MixedIntegerProgram;
use crate::model::{ArcId, BusId, Instance, Node, SocCheckpoint, TripId};

/// Slack demanded of the scheduling LP when it must beat an incumbent.
pub const INCUMBENT_EPS: f64 = 1e-4;

/// Variable ids of one model. Charging variables exist only for trips that
/// end at a charger; at most one charger serves any terminal, so they are
/// keyed by trip.
#[derive(Debug, Clone, Default)]
pub struct VarIndex {
    pub x: Vec<Option<VarId>>,
    pub y: Vec<Option<VarId>>,
    pub t: Vec<Option<VarId>>,
    pub p: Vec<Option<VarId>>,
    pub d: Vec<Option<VarId>>,
}

impl VarIndex {
    fn empty(inst: &Instance) -> Self {
        let n = inst.trips().len();
        VarIndex {
            x: vec![None; n],
            y: vec![None; inst.network().len()],
            t: vec![None; n],
            p: vec![None; n],
            d: vec![None; n],
        }
    }

    pub fn x(&self, i: TripId) -> Option<VarId> {
        self.x[i.0]
    }

    pub fn y(&self, a: ArcId) -> Option<VarId> {
        self.y[a.0]
    }

    pub fn t(&self, i: TripId) -> Option<VarId> {
        self.t[i.0]
    }

    pub fn p(&self, i: TripId) -> VarId {
        self.p[i.0].expect("model has plugin times")
    }

    pub fn d(&self, i: TripId) -> VarId {
        self.d[i.0].expect("model has delays")
    }
}

/// Row and column counts of a built model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ModelStats {
    pub columns: usize,
    pub binaries: usize,
    pub rows: usize,
    pub queue_rows: usize,
    pub delay_rows: usize,
    pub flow_rows: usize,
    pub link_rows: usize,
    pub soc_rows: usize,
}

impl fmt::Display for ModelStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "columns={} binaries={} rows={} queue={} delay={} flow={} link={} soc={}",
            self.columns,
            self.binaries,
            self.rows,
            self.queue_rows,
            self.delay_rows,
            self.flow_rows,
            self.link_rows,
            self.soc_rows
        )
    }
}

fn add_timing_vars(inst: &Instance, lp: &mut LinearProgram, idx: &mut VarIndex) {
    for i in inst.trip_ids() {
        let tr = inst.trip(i);
        let key = inst.key(i);
        idx.d[i.0] = Some(lp.add_var(format!("d[{key}]"), 0.0, f64::INFINITY, 1.0));
        // a bus cannot plug in before it arrives
        idx.p[i.0] = Some(lp.add_var(format!("p[{key}]"), tr.sched_end_min(), f64::INFINITY, 0.0));
        if let Some(l) = inst.charger_after(i) {
            let cap = inst.tmax_min(l, i);
            idx.t[i.0] = Some(lp.add_var(format!("t[{key}]"), 0.0, cap, 0.0));
        }
    }
}

/// Plug-in floor and delay propagation rows; returns the number of delay rows.
fn add_timing_rows(inst: &Instance, lp: &mut LinearProgram, idx: &VarIndex) -> usize {
    let mut delay_rows = 0;
    for i in inst.trip_ids() {
        let tr = inst.trip(i);
        let key = inst.key(i);
        lp.add_row(
            format!("plugin[{key}]"),
            vec![(idx.p(i), 1.0), (idx.d(i), -1.0)],
            Sense::Ge,
            tr.sched_end_min(),
        );
        if let Some(prev) = inst.prev(i) {
            let mut coeffs = vec![(idx.d(i), 1.0), (idx.p(prev), -1.0)];
            if let Some(t) = idx.t(prev) {
                coeffs.push((t, -1.0));
            }
            lp.add_row(format!("delay[{key}]"), coeffs, Sense::Ge, -tr.sched_start_min);
            delay_rows += 1;
        }
    }
    delay_rows
}

/// Charge-window rows over the charging time variables of the covered
/// trips. Bounds that cannot bind are skipped.
fn soc_rows(inst: &Instance, t_of: impl Fn(TripId) -> Option<VarId>) -> Vec<Constraint> {
    let mut out = Vec::new();
    for b in inst.bus_ids() {
        for cp in inst.bounds().for_bus(b) {
            let (coeffs, reach) = soc_terms(inst, b, cp, &t_of);
            let name = match cp.before {
                Some(i) => format!("soc[{}]", inst.key(i)),
                None => format!("soc[{}#end]", inst.bus(b).id),
            };
            if coeffs.is_empty() {
                continue;
            }
            if cp.alpha_kwh > 0.0 {
                out.push(Constraint {
                    name: format!("{name}.lo"),
                    coeffs: coeffs.clone(),
                    sense: Sense::Ge,
                    rhs: cp.alpha_kwh,
                    tag: None,
                });
            }
            if cp.beta_kwh < reach {
                out.push(Constraint {
                    name: format!("{name}.hi"),
                    coeffs,
                    sense: Sense::Le,
                    rhs: cp.beta_kwh,
                    tag: None,
                });
            }
        }
    }
    out
}

fn soc_terms(
    inst: &Instance,
    b: BusId,
    cp: &SocCheckpoint,
    t_of: &impl Fn(TripId) -> Option<VarId>,
) -> (Vec<(VarId, f64)>, f64) {
    let mut coeffs = Vec::new();
    let mut reach = 0.0;
    for j in inst.block(b).take(cp.covers) {
        if let (Some(t), Some(l)) = (t_of(j), inst.charger_after(j)) {
            let rate = inst.kwh_per_min(l);
            coeffs.push((t, rate));
            reach += rate * inst.tmax_min(l, j);
        }
    }
    (coeffs, reach)
}

fn push(lp: &mut LinearProgram, row: Constraint) {
    match row.tag {
        Some(tag) => lp.add_tagged_row(row.name, row.coeffs, row.sense, row.rhs, tag),
        None => lp.add_row(row.name, row.coeffs, row.sense, row.rhs),
    };
}

fn add_binaries(inst: &Instance, mip: &mut MixedIntegerProgram, idx: &mut VarIndex, costs: Option<&[f64]>) {
    for (_, i) in inst.charging_opportunities().collect::<Vec<_>>() {
        idx.x[i.0] = Some(mip.add_binary(format!("x[{}]", inst.key(i)), 0.0));
    }
    for a in inst.network().ids() {
        let arc = inst.network().arc(a);
        let name = format!(
            "y[{}:{}>{}]",
            inst.charger(arc.charger).id,
            node_name(inst, arc.from),
            node_name(inst, arc.to)
        );
        let c = costs.map_or(0.0, |c| c[a.0]);
        idx.y[a.0] = Some(mip.add_binary(name, c));
    }
}

fn node_name(inst: &Instance, n: Node) -> String {
    match n {
        Node::Source => "s".into(),
        Node::Sink => "t".into(),
        Node::Trip(i) => inst.key(i).to_string(),
    }
}

/// Source, sink, balance and x-y link rows; returns (flow rows, link rows).
fn add_flow_rows(inst: &Instance, lp: &mut LinearProgram, idx: &VarIndex) -> (usize, usize) {
    let net = inst.network();
    let (mut flow, mut link) = (0, 0);
    for l in inst.charger_ids() {
        let cn = net.charger(l);
        if cn.nodes.is_empty() {
            continue;
        }
        let name = &inst.charger(l).id;
        let y = |a: ArcId| idx.y(a).expect("arc variable");
        let out_s: Vec<_> = net.outgoing(l, Node::Source).map(|a| (y(a), 1.0)).collect();
        lp.add_row(format!("source[{name}]"), out_s, Sense::Eq, 1.0);
        let in_t: Vec<_> = net.incoming(l, Node::Sink).map(|a| (y(a), 1.0)).collect();
        lp.add_row(format!("sink[{name}]"), in_t, Sense::Eq, 1.0);
        flow += 2;
        for &i in &cn.nodes {
            let key = inst.key(i);
            let mut bal: Vec<_> = net.incoming(l, Node::Trip(i)).map(|a| (y(a), 1.0)).collect();
            bal.extend(net.outgoing(l, Node::Trip(i)).map(|a| (y(a), -1.0)));
            lp.add_row(format!("balance[{name}:{key}]"), bal, Sense::Eq, 0.0);
            flow += 1;
            let mut lk = vec![(idx.x(i).expect("charging variable"), 1.0)];
            lk.extend(net.outgoing(l, Node::Trip(i)).map(|a| (y(a), -1.0)));
            lp.add_row(format!("link[{name}:{key}]"), lk, Sense::Eq, 0.0);
            link += 1;
        }
    }
    (flow, link)
}

/// The complete model: queue ordering through big-M rows on every
/// trip-to-trip arc, delays, flow on each charger network, charging caps
/// and charge windows.
pub fn build_full_milp(inst: &Instance) -> (MixedIntegerProgram, VarIndex, ModelStats) {
    let mut mip = MixedIntegerProgram::new(LinearProgram::new());
    let mut idx = VarIndex::empty(inst);
    add_binaries(inst, &mut mip, &mut idx, None);
    add_timing_vars(inst, &mut mip.lp, &mut idx);

    let delay_rows = add_timing_rows(inst, &mut mip.lp, &idx);
    let big_m = inst.big_m();
    let mut queue_rows = 0;
    for a in inst.network().ids() {
        let arc = inst.network().arc(a);
        if let (Node::Trip(i), Node::Trip(j)) = (arc.from, arc.to) {
            let mut coeffs = vec![(idx.p(j), 1.0), (idx.p(i), -1.0), (idx.y(a).unwrap(), -big_m)];
            if let Some(t) = idx.t(i) {
                coeffs.push((t, -1.0));
            }
            mip.lp.add_row(
                format!("queue[{}>{}]", inst.key(i), inst.key(j)),
                coeffs,
                Sense::Ge,
                -big_m,
            );
            queue_rows += 1;
        }
    }
    let (flow_rows, link_rows) = add_flow_rows(inst, &mut mip.lp, &idx);
    let mut cap_rows = 0;
    for i in inst.trip_ids() {
        if let (Some(t), Some(x)) = (idx.t(i), idx.x(i)) {
            let l = inst.charger_after(i).unwrap();
            mip.lp.add_row(
                format!("tcap[{}]", inst.key(i)),
                vec![(t, 1.0), (x, -inst.tmax_min(l, i))],
                Sense::Le,
                0.0,
            );
            cap_rows += 1;
        }
    }
    let soc = soc_rows(inst, |i| idx.t(i));
    let soc_count = soc.len();
    for r in soc {
        push(&mut mip.lp, r);
    }

    let stats = ModelStats {
        columns: mip.lp.num_vars(),
        binaries: mip.binaries().len(),
        rows: mip.lp.num_rows(),
        queue_rows,
        delay_rows,
        flow_rows,
        link_rows: link_rows + cap_rows,
        soc_rows: soc_count,
    };
    (mip, idx, stats)
}

/// Lower bound on the delay caused by serving `j` right after `i`: the next
/// trip of `j`'s bus cannot leave before `i` has arrived.
pub fn arc_cost(inst: &Instance, a: ArcId) -> f64 {
    let arc = inst.network().arc(a);
    match (arc.from, arc.to) {
        (Node::Trip(i), Node::Trip(j)) => match inst.next(j) {
            Some(jn) => (inst.trip(i).sched_end_min() - inst.trip(jn).sched_start_min).max(0.0),
            None => 0.0,
        },
        _ => 0.0,
    }
}

/// A bound `sum of x over trips <= some point of a block >= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct MpCut {
    pub before: Option<TripId>,
    pub bus: BusId,
    pub trips: Vec<TripId>,
    pub rhs: usize,
}

/// Minimum number of charging stops implied by each charge window, kept
/// only where the count increases along the block.
pub fn derive_mp_cuts(inst: &Instance) -> Vec<MpCut> {
    let mut out = Vec::new();
    for b in inst.bus_ids() {
        let cap = inst.bus(b).usable_capacity_kwh;
        let mut last = 0;
        for cp in inst.bounds().for_bus(b) {
            let need = (cp.alpha_kwh / cap - 1e-9).ceil().max(0.0) as usize;
            if need > last {
                let trips = inst
                    .block(b)
                    .take(cp.covers)
                    .filter(|&j| inst.charger_after(j).is_some())
                    .collect();
                out.push(MpCut {
                    before: cp.before,
                    bus: b,
                    trips,
                    rhs: need,
                });
                last = need;
            }
        }
    }
    out
}

/// The master problem: binaries only, arc costs as objective, flow and
/// minimum-stop rows. Subtour rows are left to the caller.
pub fn build_master(inst: &Instance) -> (MixedIntegerProgram, VarIndex, ModelStats) {
    let mut mip = MixedIntegerProgram::new(LinearProgram::new());
    let mut idx = VarIndex::empty(inst);
    let costs: Vec<f64> = inst.network().ids().map(|a| arc_cost(inst, a)).collect();
    add_binaries(inst, &mut mip, &mut idx, Some(&costs));
    let (flow_rows, link_rows) = add_flow_rows(inst, &mut mip.lp, &idx);
    for cut in derive_mp_cuts(inst) {
        let name = match cut.before {
            Some(i) => format!("stops[{}]", inst.key(i)),
            None => format!("stops[{}#end]", inst.bus(cut.bus).id),
        };
        let coeffs = cut.trips.iter().map(|&j| (idx.x(j).unwrap(), 1.0)).collect();
        mip.lp.add_row(name, coeffs, Sense::Ge, cut.rhs as f64);
    }
    let stats = ModelStats {
        columns: mip.lp.num_vars(),
        binaries: mip.binaries().len(),
        rows: mip.lp.num_rows(),
        flow_rows,
        link_rows,
        ..ModelStats::default()
    };
    (mip, idx, stats)
}

/// What a tagged row of the scheduling LP stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScheduleTag {
    /// Queue row of a used arc.
    Queue(ArcId),
    /// Charging forced to zero after this trip.
    Skip(TripId),
}

/// A scheduling LP together with its variable map.
#[derive(Debug, Clone)]
pub struct ScheduleLp {
    pub lp: LinearProgram,
    pub index: VarIndex,
    n_arcs: usize,
}

impl ScheduleLp {
    pub fn tag(&self, t: ScheduleTag) -> Tag {
        match t {
            ScheduleTag::Queue(a) => Tag(a.0),
            ScheduleTag::Skip(i) => Tag(self.n_arcs + i.0),
        }
    }

    pub fn decode(&self, t: Tag) -> ScheduleTag {
        if t.0 < self.n_arcs {
            ScheduleTag::Queue(ArcId(t.0))
        } else {
            ScheduleTag::Skip(TripId(t.0 - self.n_arcs))
        }
    }
}

/// The LP that schedules a fixed assignment: `arcs_used` fixes the service
/// order on each charger (only trip-to-trip arcs produce rows) and every trip
/// in `skip` may not charge. With `incumbent = Some(z)` the total delay must
/// come in at least [`INCUMBENT_EPS`] under `z`.
pub fn build_schedule_lp(
    inst: &Instance,
    arcs_used: &[ArcId],
    skip: &[TripId],
    incumbent: Option<f64>,
) -> ScheduleLp {
    let mut lp = LinearProgram::new();
    let mut idx = VarIndex::empty(inst);
    add_timing_vars(inst, &mut lp, &mut idx);
    add_timing_rows(inst, &mut lp, &idx);
    for r in soc_rows(inst, |i| idx.t(i)) {
        push(&mut lp, r);
    }
    let sp = ScheduleLp {
        lp,
        index: idx,
        n_arcs: inst.network().len(),
    };
    let mut lp = sp.lp;
    for &a in arcs_used {
        let arc = inst.network().arc(a);
        if let (Node::Trip(i), Node::Trip(j)) = (arc.from, arc.to) {
            let mut coeffs = vec![(sp.index.p(j), 1.0), (sp.index.p(i), -1.0)];
            if let Some(t) = sp.index.t(i) {
                coeffs.push((t, -1.0));
            }
            lp.add_tagged_row(
                format!("queue[{}>{}]", inst.key(i), inst.key(j)),
                coeffs,
                Sense::Ge,
                0.0,
                Tag(a.0),
            );
        }
    }
    for &i in skip {
        if let Some(t) = sp.index.t(i) {
            lp.add_tagged_row(
                format!("skip[{}]", inst.key(i)),
                vec![(t, 1.0)],
                Sense::Eq,
                0.0,
                Tag(sp.n_arcs + i.0),
            );
        }
    }
    if let Some(z) = incumbent {
        if z.is_finite() {
            let coeffs = inst.trip_ids().map(|i| (sp.index.d(i), 1.0)).collect();
            lp.add_row("incumbent", coeffs, Sense::Le, z - INCUMBENT_EPS);
        }
    }
    ScheduleLp { lp, ..sp }
}
