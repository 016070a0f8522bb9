use lvvc_core::circuit::{CableSegment, Ccp, Circuit, CircuitDoc, PropertyKind};
use lvvc_core::demand::assign_phases;
use lvvc_core::demand::{CcpPhaseLoad, Phase, PhaseAssignment};
use lvvc_core::features::*;
use lvvc_core::powerflow::VoltageSeries;

fn chain(lengths: &[f64]) -> Circuit {
    let mut doc = CircuitDoc {
        nominal_voltage: 230.0,
        source: "S".into(),
        nodes: vec!["S".into()],
        segments: vec![],
        ccps: vec![],
        switches: vec![],
    };
    let mut prev = String::from("S");
    for (i, &len) in lengths.iter().enumerate() {
        let id = format!("C{i}");
        doc.nodes.push(id.as_str().into());
        doc.segments.push(CableSegment {
            from: prev.as_str().into(),
            to: id.as_str().into(),
            length_m: len,
            r_per_m: 0.0005,
            x_per_m: 0.0001,
        });
        doc.ccps.push(Ccp {
            node: id.as_str().into(),
            households: 1,
            kind: PropertyKind::Single,
        });
        prev = id;
    }
    Circuit::from_doc(doc).unwrap()
}

#[test]
fn input_sizes() {
    let with = FeatureLayout {
        meters: 10,
        include_power: true,
    };
    let without = FeatureLayout {
        meters: 15,
        include_power: false,
    };
    assert_eq!(with.input_len(), 124);
    assert_eq!(without.input_len(), 109);
    assert_eq!(with.feature_names().len(), 124);
    assert_eq!(without.time_offsets().len(), 109);
}

#[test]
fn key_locations_on_chain() {
    let c = chain(&[10.0, 10.0, 10.0]);
    let a = assign_phases(&c, 3);
    let m = select_smart_meters(&c, &a, 2, &PlacementStrategy::KeyLocations, 0).unwrap();
    let ccps: Vec<usize> = m.meters().iter().map(|m| m.ccp).collect();
    assert_eq!(ccps, vec![0, 2]);
}

#[test]
fn full_coverage_and_range() {
    let c = chain(&[10.0, 10.0, 10.0, 10.0]);
    let a = assign_phases(&c, 3);
    let m = select_smart_meters(&c, &a, 4, &PlacementStrategy::Random, 5).unwrap();
    assert_eq!(m.len(), 4);
    for w in m.meters().windows(2) {
        assert!(w[0].distance_m <= w[1].distance_m);
    }
    assert!(matches!(
        select_smart_meters(&c, &a, 5, &PlacementStrategy::Random, 5),
        Err(FeatureError::CountOutOfRange { .. })
    ));
    assert!(matches!(
        select_smart_meters(&c, &a, 0, &PlacementStrategy::KeyLocations, 5),
        Err(FeatureError::CountOutOfRange { .. })
    ));
}

#[test]
fn explicit_unoccupied_phase_is_rejected() {
    let c = chain(&[10.0]);
    let a = PhaseAssignment::from_lists(vec![[vec![0], vec![], vec![]]]);
    let err = select_smart_meters(
        &c,
        &a,
        1,
        &PlacementStrategy::Explicit(vec![("C0".into(), Phase::L2)]),
        0,
    )
    .unwrap_err();
    assert!(matches!(err, FeatureError::UnoccupiedPhase { .. }));
}

#[test]
fn median_distance_on_chain() {
    let c = chain(&[10.0, 90.0]);
    let a = PhaseAssignment::from_lists(vec![[vec![0], vec![], vec![]]; 2]);
    let m = MeterSet::from_pairs(&c, &a, &[(0, Phase::L1), (1, Phase::L1)]).unwrap();
    assert_eq!(median_inter_meter_distance(&c, &m).unwrap(), 90.0);

    let c = chain(&[1.0, 10.0, 90.0]);
    let a = PhaseAssignment::from_lists(vec![[vec![0], vec![], vec![]]; 3]);
    let m =
        MeterSet::from_pairs(&c, &a, &[(0, Phase::L1), (1, Phase::L1), (2, Phase::L1)]).unwrap();
    assert_eq!(median_inter_meter_distance(&c, &m).unwrap(), 10.0);

    let single = MeterSet::from_pairs(&c, &a, &[(0, Phase::L1)]).unwrap();
    assert_eq!(
        median_inter_meter_distance(&c, &single),
        Err(FeatureError::TooFewMeters(1))
    );
}

#[test]
fn constant_series_and_insufficient_history() {
    let c = chain(&[10.0, 10.0]);
    let a = PhaseAssignment::from_lists(vec![[vec![0], vec![], vec![]]; 2]);
    let meters = MeterSet::from_pairs(&c, &a, &[(1, Phase::L1)]).unwrap();
    let steps = 14 * 48;
    let voltages = VoltageSeries {
        steps,
        v_pu: vec![[vec![0.98; steps], vec![0.98; steps], vec![0.98; steps]]; 2],
    };
    let loads = CcpPhaseLoad::zeros(2, steps);
    let ds = build_dataset(&voltages, &loads, &meters, &c, &a, 1.0, false).unwrap();
    for s in &ds.samples {
        assert_eq!(s.target, 0.98);
        assert!(s.inputs[4..9].iter().all(|&v| v == 0.98));
    }
    assert!(ds.split(Split::Train).all(|s| s.ccp == 1));
    assert_eq!(
        ds.split(Split::Evaluation).filter(|s| s.t == 400).count(),
        2
    );

    let short = VoltageSeries {
        steps: steps - 1,
        v_pu: vec![[vec![0.98; steps - 1], vec![], vec![]]; 2],
    };
    assert!(matches!(
        build_dataset(&short, &loads, &meters, &c, &a, 1.0, false),
        Err(FeatureError::InsufficientHistory { .. })
    ));
}

#[test]
fn normalizer_round_trip_and_degenerate_range() {
    let n = Normalizer {
        input_min: vec![0.0, 5.0],
        input_max: vec![2.0, 5.0],
        target_min: 0.9,
        target_max: 1.0,
    };
    let z = n.normalize_inputs(&[1.5, 5.0]);
    assert_eq!(z, vec![0.75, 0.0]);
    assert_eq!(n.denormalize_inputs(&z), vec![1.5, 5.0]);
    assert!((n.denormalize_target(n.normalize_target(0.95)) - 0.95).abs() < 1e-12);
    assert!((n.normalize_target(0.9) - TARGET_OFFSET).abs() < 1e-15);
}
