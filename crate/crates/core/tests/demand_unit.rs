use lvvc_core::circuit::{CableSegment, Ccp, Circuit, CircuitDoc, PropertyKind};
use lvvc_core::demand::*;

fn star(households: &[u32]) -> Circuit {
    let mut doc = CircuitDoc {
        nominal_voltage: 230.0,
        source: "S".into(),
        nodes: vec!["S".into()],
        segments: vec![],
        ccps: vec![],
        switches: vec![],
    };
    for (i, &h) in households.iter().enumerate() {
        let id = format!("C{i}");
        doc.nodes.push(id.as_str().into());
        doc.segments.push(CableSegment {
            from: "S".into(),
            to: id.as_str().into(),
            length_m: 10.0,
            r_per_m: 0.0005,
            x_per_m: 0.0001,
        });
        doc.ccps.push(Ccp {
            node: id.as_str().into(),
            households: h,
            kind: if h == 1 {
                PropertyKind::Single
            } else {
                PropertyKind::Multi
            },
        });
    }
    Circuit::from_doc(doc).unwrap()
}

fn counts(a: &PhaseAssignment, ccp: usize) -> [usize; 3] {
    Phase::ALL.map(|p| a.households_on(ccp, p).len())
}

#[test]
fn six_households_two_per_phase() {
    let a = assign_phases(&star(&[6]), 1);
    assert_eq!(counts(&a, 0), [2, 2, 2]);
}

#[test]
fn remainder_goes_to_lowest_phases() {
    let a = assign_phases(&star(&[4, 5, 2]), 1);
    assert_eq!(counts(&a, 0), [2, 1, 1]);
    assert_eq!(counts(&a, 1), [2, 2, 1]);
    assert_eq!(counts(&a, 2), [1, 1, 0]);
    assert_eq!(a.occupied_phases(2), vec![Phase::L1, Phase::L2]);
}

#[test]
fn single_household_occupies_one_phase() {
    let a = assign_phases(&star(&[1; 20]), 9);
    let mut seen = [false; 3];
    for c in 0..20 {
        let occupied = a.occupied_phases(c);
        assert_eq!(occupied.len(), 1);
        seen[occupied[0].index()] = true;
    }
    assert_eq!(seen, [true; 3]);
}

#[test]
fn horizon_too_short() {
    assert_eq!(
        generate_profiles(&star(&[1]), 0, 13, &DemandConfig::default()),
        Err(DemandError::HorizonTooShort(13))
    );
}

#[test]
fn profiles_are_deterministic_and_nonnegative() {
    let c = star(&[1, 3]);
    let cfg = DemandConfig::default();
    let a = generate_profiles(&c, 7, 14, &cfg).unwrap();
    let b = generate_profiles(&c, 7, 14, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.households.len(), 4);
    for h in &a.households {
        assert_eq!(h.p_kw.len(), 14 * 48);
        assert!(h.p_kw.iter().all(|p| p.is_finite() && *p >= 0.0));
    }
    let other = generate_profiles(&c, 8, 14, &cfg).unwrap();
    assert_ne!(a, other);
}

#[test]
fn constant_households_lump() {
    let c = star(&[2]);
    let a = assign_phases(&c, 0);
    let series = DemandSeries {
        days: 14,
        households: (0..2)
            .map(|h| HouseholdProfile {
                ccp: 0,
                household: h,
                p_kw: vec![1.0; 14 * 48],
            })
            .collect(),
    };
    let load = aggregate_to_ccp_phase(&series, &a).unwrap();
    assert!(load.series(0, Phase::L1).iter().all(|&p| p == 1.0));
    assert!(load.series(0, Phase::L3).iter().all(|&p| p == 0.0));

    let pair = PhaseAssignment::from_lists(vec![[vec![0, 1], vec![], vec![]]]);
    let load = aggregate_to_ccp_phase(&series, &pair).unwrap();
    assert!(load.series(0, Phase::L1).iter().all(|&p| p == 2.0));
}

#[test]
fn missing_household_assignment() {
    let series = DemandSeries {
        days: 14,
        households: vec![HouseholdProfile {
            ccp: 0,
            household: 4,
            p_kw: vec![0.0; 14 * 48],
        }],
    };
    let a = PhaseAssignment::from_lists(vec![[vec![0], vec![], vec![]]]);
    assert_eq!(
        aggregate_to_ccp_phase(&series, &a),
        Err(DemandError::MissingAssignment {
            ccp: 0,
            household: 4
        })
    );
}
