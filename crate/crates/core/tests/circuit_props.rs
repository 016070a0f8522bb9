use lvvc_core::circuit::{
    CableSegment, Ccp, Circuit, CircuitDoc, NodeId, PropertyKind, SwitchKind, SwitchState,
    SwitchableElement,
};
use lvvc_testkit::{brute_force_households_upstream, dijkstra, random_radial_doc};
use proptest::prelude::*;

fn with_households(mut doc: CircuitDoc, households: &[u32]) -> CircuitDoc {
    for (ccp, &h) in doc.ccps.iter_mut().zip(households.iter().cycle()) {
        ccp.households = h;
        ccp.kind = if h == 1 {
            PropertyKind::Single
        } else {
            PropertyKind::Multi
        };
    }
    doc
}

proptest! {
    #[test]
    fn distances_match_dijkstra(seed in any::<u64>(), nodes in 2usize..25) {
        let doc = random_radial_doc(seed, nodes);
        let c = Circuit::from_doc(doc.clone()).unwrap();
        let reference = dijkstra(&doc, &doc.source);
        for (i, id) in doc.nodes.iter().enumerate() {
            let d = c.path_distance(id).unwrap();
            prop_assert!((d - reference[i]).abs() <= 1e-9 * reference[i].max(1.0));
        }
        prop_assert_eq!(c.path_distance(&doc.source).unwrap(), 0.0);
    }

    #[test]
    fn upstream_households_match_path_walk(
        seed in any::<u64>(),
        nodes in 2usize..20,
        hh in proptest::collection::vec(1u32..7, 1..6),
    ) {
        let doc = with_households(random_radial_doc(seed, nodes), &hh);
        let c = Circuit::from_doc(doc.clone()).unwrap();
        let total = c.total_households();
        for id in &doc.nodes {
            let h = c.households_upstream(id).unwrap();
            prop_assert_eq!(Some(h), brute_force_households_upstream(&doc, id));
            prop_assert!(h <= total);
        }
    }

    #[test]
    fn tree_structure_and_monotone_paths(seed in any::<u64>(), nodes in 2usize..30) {
        let doc = random_radial_doc(seed, nodes);
        let c = Circuit::from_doc(doc).unwrap();
        let tree = c.tree();
        let enabled = (0..c.segments().len()).filter(|&s| c.is_segment_enabled(s)).count();
        prop_assert_eq!(enabled, tree.order().len() - 1);
        let mut seen = vec![0; c.node_count()];
        for &n in tree.order() {
            seen[n] += 1;
        }
        prop_assert!(seen.iter().all(|&k| k == 1));
        for &n in tree.order() {
            if let Some(p) = tree.parent(n) {
                prop_assert!(c.distance_of(p) <= c.distance_of(n));
                prop_assert!(c.households_upstream_of(p) <= c.households_upstream_of(n));
            }
        }
    }

    #[test]
    fn json_round_trip_is_identity(seed in any::<u64>(), nodes in 2usize..12) {
        let doc = random_radial_doc(seed, nodes);
        let c = Circuit::from_doc(doc).unwrap();
        let back = Circuit::from_doc(c.doc().clone()).unwrap();
        prop_assert_eq!(back.doc(), c.doc());
    }
}

fn seg(from: &str, to: &str, len: f64) -> CableSegment {
    CableSegment {
        from: from.into(),
        to: to.into(),
        length_m: len,
        r_per_m: 0.0005,
        x_per_m: 0.0001,
    }
}

/// Two rings sharing the source plus a fused spur.
fn ring_and_fuse() -> CircuitDoc {
    let nodes = ["S", "A", "B", "C", "D", "E", "F"];
    let single = |n: &str| Ccp {
        node: n.into(),
        households: 1,
        kind: PropertyKind::Single,
    };
    let sw = |kind, from: &str, to: &str, state| SwitchableElement {
        kind,
        from: from.into(),
        to: to.into(),
        state,
    };
    CircuitDoc {
        nominal_voltage: 230.0,
        source: "S".into(),
        nodes: nodes.iter().map(|&n| NodeId::from(n)).collect(),
        segments: vec![
            seg("S", "A", 40.0),
            seg("A", "B", 30.0),
            seg("B", "C", 25.0),
            seg("C", "S", 60.0),
            seg("S", "D", 20.0),
            seg("D", "E", 15.0),
            seg("E", "F", 10.0),
        ],
        ccps: vec![
            single("A"),
            single("B"),
            single("C"),
            single("E"),
            single("F"),
        ],
        switches: vec![
            sw(SwitchKind::LinkBox, "A", "B", SwitchState::Closed),
            sw(SwitchKind::LinkBox, "B", "C", SwitchState::Open),
            sw(SwitchKind::Fuse, "C", "S", SwitchState::Closed),
            sw(SwitchKind::Fuse, "E", "F", SwitchState::Closed),
        ],
    }
}

#[test]
fn enumeration_matches_brute_force() {
    let c = Circuit::from_doc(ring_and_fuse()).unwrap();
    let k = c.switches().len();
    let mut brute = Vec::new();
    for mask in 0..(1u32 << k) {
        let states: Vec<SwitchState> = (0..k)
            .map(|i| {
                if mask >> (k - 1 - i) & 1 == 1 {
                    SwitchState::Open
                } else {
                    SwitchState::Closed
                }
            })
            .collect();
        // Radial and every CCP fed: check independently via Dijkstra and an
        // edge count on the reachable component.
        let mut doc = ring_and_fuse();
        for (s, &st) in doc.switches.iter_mut().zip(&states) {
            s.state = st;
        }
        let reach = dijkstra(&doc, &doc.source);
        let reachable = reach.iter().filter(|d| d.is_finite()).count();
        let open: Vec<(NodeId, NodeId)> = doc
            .switches
            .iter()
            .filter(|s| s.state == SwitchState::Open)
            .map(|s| (s.from.clone(), s.to.clone()))
            .collect();
        let enabled_edges = doc
            .segments
            .iter()
            .filter(|s| {
                !open
                    .iter()
                    .any(|(a, b)| (a == &s.from && b == &s.to) || (a == &s.to && b == &s.from))
            })
            .count();
        let all_fed = doc.ccps.iter().all(|ccp| {
            let i = doc.nodes.iter().position(|n| n == &ccp.node).unwrap();
            reach[i].is_finite()
        });
        // This fixture has no isolated islands, so enabled edges == reachable - 1 means a tree.
        if all_fed && enabled_edges == reachable - 1 {
            brute.push(states);
        }
    }
    let options = c.enumerate_topology_options().unwrap();
    assert_eq!(options, brute);
    // Ring: exactly one of the three ring breaks open; spur fuse must stay closed.
    assert_eq!(options.len(), 3);
}
