use lvvc_core::circuit::{CableSegment, Ccp, Circuit, CircuitDoc, PropertyKind};
use lvvc_core::impedance::*;

fn segment(from: &str, to: &str, length_m: f64, r: f64, x: f64) -> CableSegment {
    CableSegment {
        from: from.into(),
        to: to.into(),
        length_m,
        r_per_m: r,
        x_per_m: x,
    }
}

fn ccp(node: &str) -> Ccp {
    Ccp {
        node: node.into(),
        households: 1,
        kind: PropertyKind::Single,
    }
}

#[test]
fn three_four_five() {
    let s = segment_impedance(0, &segment("S", "A", 1000.0, 0.0006, 0.0008));
    assert!((s.r - 0.6).abs() < 1e-12);
    assert!((s.x - 0.8).abs() < 1e-12);
    assert!((s.z - 1.0).abs() < 1e-12);
    let half = segment_impedance(0, &segment("S", "A", 500.0, 0.0003, 0.0004));
    assert!((half.z - 0.25).abs() < 1e-12);
}

#[test]
fn zero_reactance() {
    let s = segment_impedance(3, &segment("S", "A", 120.0, 0.001, 0.0));
    assert_eq!(s.z, s.r);
    assert_eq!(s.segment, 3);
}

#[test]
fn series_single_ccp() {
    let c = Circuit::from_doc(CircuitDoc {
        nominal_voltage: 230.0,
        source: "S".into(),
        nodes: vec!["S".into(), "A".into()],
        segments: vec![segment("S", "A", 500.0, 0.001, 0.0)],
        ccps: vec![ccp("A")],
        switches: vec![],
    })
    .unwrap();
    let s = thevenin_total_impedance(&c, DEFAULT_LOAD_OHM).unwrap();
    assert!((s.total_ohm - 53.4).abs() / 53.4 < 1e-12);
}

#[test]
fn two_identical_branches() {
    let c = Circuit::from_doc(CircuitDoc {
        nominal_voltage: 230.0,
        source: "S".into(),
        nodes: vec!["S".into(), "A".into(), "B".into()],
        segments: vec![
            segment("S", "A", 500.0, 0.001, 0.0),
            segment("S", "B", 500.0, 0.001, 0.0),
        ],
        ccps: vec![ccp("A"), ccp("B")],
        switches: vec![],
    })
    .unwrap();
    let s = thevenin_total_impedance(&c, DEFAULT_LOAD_OHM).unwrap();
    assert!((s.total_ohm - 26.7).abs() / 26.7 < 1e-12);
}

#[test]
fn errors() {
    let c = Circuit::from_doc(CircuitDoc {
        nominal_voltage: 230.0,
        source: "S".into(),
        nodes: vec!["S".into(), "A".into()],
        segments: vec![segment("S", "A", 1.0, 0.001, 0.0)],
        ccps: vec![],
        switches: vec![],
    })
    .unwrap();
    assert_eq!(
        thevenin_total_impedance(&c, 52.9),
        Err(ImpedanceError::NoCcps)
    );
    assert!(matches!(
        thevenin_total_impedance(&c, 0.0),
        Err(ImpedanceError::InvalidLoad(_))
    ));
}
