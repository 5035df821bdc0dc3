use std::collections::HashMap;

use super::{Charger, ChargerId, Trip, TripId};

/// A node in one charger's sequencing network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    Source,
    Trip(TripId),
    Sink,
}

impl Node {
    pub fn trip(self) -> Option<TripId> {
        match self {
            Node::Trip(i) => Some(i),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ArcId(pub usize);

/// Charger `charger` may serve `to` immediately after `from`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Arc {
    pub charger: ChargerId,
    pub from: Node,
    pub to: Node,
}

impl Arc {
    pub fn is_dummy(&self) -> bool {
        matches!(self.from, Node::Source) || matches!(self.to, Node::Sink)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ChargerNetwork {
    /// Trips ending at the charger's terminal, in instance order.
    pub nodes: Vec<TripId>,
    pub arcs: Vec<ArcId>,
}

/// Per-charger sequencing graphs over charging opportunities.
#[derive(Debug, Clone, Default)]
pub struct ArcNetwork {
    arcs: Vec<Arc>,
    per_charger: Vec<ChargerNetwork>,
    lookup: HashMap<(ChargerId, Node, Node), ArcId>,
}

impl ArcNetwork {
    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn arc(&self, a: ArcId) -> &Arc {
        &self.arcs[a.0]
    }

    pub fn len(&self) -> usize {
        self.arcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arcs.is_empty()
    }

    pub fn charger(&self, l: ChargerId) -> &ChargerNetwork {
        &self.per_charger[l.0]
    }

    pub fn find(&self, l: ChargerId, from: Node, to: Node) -> Option<ArcId> {
        self.lookup.get(&(l, from, to)).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ArcId> {
        (0..self.arcs.len()).map(ArcId)
    }

    pub fn outgoing(&self, l: ChargerId, from: Node) -> impl Iterator<Item = ArcId> + '_ {
        self.per_charger[l.0]
            .arcs
            .iter()
            .copied()
            .filter(move |a| self.arcs[a.0].from == from)
    }

    pub fn incoming(&self, l: ChargerId, to: Node) -> impl Iterator<Item = ArcId> + '_ {
        self.per_charger[l.0]
            .arcs
            .iter()
            .copied()
            .filter(move |a| self.arcs[a.0].to == to)
    }
}

/// Builds the sequencing network of every charger: each trip ending at the
/// charger's terminal is a node; trips of one bus are joined in block order
/// only, trips of different buses in both directions, and every node hangs
/// off the source and sink dummies.
pub fn build_arc_network(
    trips: &[Trip],
    chargers: &[Charger],
    charger_at_end: &[Option<ChargerId>],
) -> ArcNetwork {
    let mut net = ArcNetwork {
        arcs: Vec::new(),
        per_charger: vec![ChargerNetwork::default(); chargers.len()],
        lookup: HashMap::new(),
    };
    for (i, l) in charger_at_end.iter().enumerate() {
        if let Some(l) = l {
            net.per_charger[l.0].nodes.push(TripId(i));
        }
    }

    for l in (0..chargers.len()).map(ChargerId) {
        let nodes = net.per_charger[l.0].nodes.clone();
        let push = |from: Node, to: Node, net: &mut ArcNetwork| {
            let id = ArcId(net.arcs.len());
            net.arcs.push(Arc { charger: l, from, to });
            net.per_charger[l.0].arcs.push(id);
            net.lookup.insert((l, from, to), id);
        };
        for &i in &nodes {
            push(Node::Source, Node::Trip(i), &mut net);
        }
        for &i in &nodes {
            for &j in &nodes {
                if i == j {
                    continue;
                }
                let (ti, tj) = (&trips[i.0], &trips[j.0]);
                if ti.bus == tj.bus && ti.seq >= tj.seq {
                    continue;
                }
                push(Node::Trip(i), Node::Trip(j), &mut net);
            }
        }
        for &i in &nodes {
            push(Node::Trip(i), Node::Sink, &mut net);
        }
    }
    net
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::tests::{bus, charger, trip};
    use crate::model::{Instance, InstanceFile};

    /// Two buses sharing one charger; A has two trips and B three, all
    /// ending at the charged terminal.
    pub(crate) fn two_bus_loop() -> Instance {
        let file = InstanceFile {
            chargers: vec![charger("L", "X", 450.0)],
            buses: vec![bus("A", 300.0, 300.0, 0.0), bus("B", 300.0, 300.0, 0.0)],
            trips: vec![
                trip("A", 1, 0.0, 30.0, 30.0, "X", "X"),
                trip("A", 2, 60.0, 30.0, 30.0, "X", "X"),
                trip("B", 1, 10.0, 30.0, 30.0, "X", "X"),
                trip("B", 2, 70.0, 30.0, 30.0, "X", "X"),
                trip("B", 3, 130.0, 30.0, 30.0, "X", "X"),
            ],
        };
        Instance::from_file(&file).unwrap()
    }

    #[test]
    fn five_node_network_arc_count() {
        let inst = two_bus_loop();
        let net = inst.network();
        let trip_arcs = net.arcs().iter().filter(|a| !a.is_dummy()).count();
        let dummy = net.arcs().iter().filter(|a| a.is_dummy()).count();
        // A1->A2, three B arcs, six cross pairs both ways
        assert_eq!(trip_arcs, 1 + 3 + 12);
        assert_eq!(dummy, 10);
        assert_eq!(net.len(), 26);
    }

    #[test]
    fn same_bus_arcs_only_go_forward() {
        let inst = two_bus_loop();
        let net = inst.network();
        let l = ChargerId(0);
        let (a1, a2) = (TripId(0), TripId(1));
        assert!(net.find(l, Node::Trip(a1), Node::Trip(a2)).is_some());
        assert!(net.find(l, Node::Trip(a2), Node::Trip(a1)).is_none());
        let (b1, b3) = (TripId(2), TripId(4));
        assert!(net.find(l, Node::Trip(b1), Node::Trip(b3)).is_some());
    }

    #[test]
    fn cross_bus_arcs_are_symmetric() {
        let inst = two_bus_loop();
        let net = inst.network();
        for a in net.arcs() {
            if let (Node::Trip(i), Node::Trip(j)) = (a.from, a.to) {
                if inst.trip(i).bus != inst.trip(j).bus {
                    assert!(net.find(a.charger, a.to, a.from).is_some());
                }
            }
        }
    }

    #[test]
    fn single_trip_has_only_dummy_arcs() {
        let file = InstanceFile {
            chargers: vec![charger("L", "X", 450.0)],
            buses: vec![bus("A", 300.0, 300.0, 0.0)],
            trips: vec![trip("A", 1, 0.0, 30.0, 30.0, "Y", "X")],
        };
        let inst = Instance::from_file(&file).unwrap();
        let net = inst.network();
        assert_eq!(net.len(), 2);
        let l = ChargerId(0);
        assert!(net.find(l, Node::Source, Node::Trip(TripId(0))).is_some());
        assert!(net.find(l, Node::Trip(TripId(0)), Node::Sink).is_some());
    }

    #[test]
    fn unused_charger_has_empty_network() {
        let file = InstanceFile {
            chargers: vec![charger("L", "X", 450.0), charger("M", "Z", 450.0)],
            buses: vec![bus("A", 300.0, 300.0, 0.0)],
            trips: vec![trip("A", 1, 0.0, 30.0, 30.0, "Y", "X")],
        };
        let inst = Instance::from_file(&file).unwrap();
        assert!(inst.network().charger(ChargerId(1)).arcs.is_empty());
        assert!(inst.network().charger(ChargerId(1)).nodes.is_empty());
    }
}
