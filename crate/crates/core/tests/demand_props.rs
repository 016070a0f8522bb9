use lvvc_core::circuit::{CableSegment, Ccp, Circuit, CircuitDoc, PropertyKind};
use lvvc_core::demand::{
    aggregate_to_ccp_phase, assign_phases, generate_profiles, DemandConfig, DemandError, Phase,
    MIN_DAYS,
};
use lvvc_testkit::random_radial_doc;
use proptest::prelude::*;

/// A feeder with `ccps` CCPs of the given household counts hanging off one bus.
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
        let id = format!("N{i}");
        doc.nodes.push(id.as_str().into());
        doc.segments.push(CableSegment {
            from: "S".into(),
            to: id.as_str().into(),
            length_m: 10.0 + i as f64,
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

proptest! {
    #[test]
    fn phase_balance(h in 1u32..40, seed in any::<u64>()) {
        let c = star(&[h]);
        let a = assign_phases(&c, seed);
        let counts: Vec<usize> = Phase::ALL.iter().map(|&p| a.households_on(0, p).len()).collect();
        prop_assert_eq!(counts.iter().sum::<usize>(), h as usize);
        if h > 1 {
            let (k, r) = ((h / 3) as usize, (h % 3) as usize);
            for (i, &n) in counts.iter().enumerate() {
                prop_assert_eq!(n, k + usize::from(i < r));
            }
        }
        for hh in 0..h {
            prop_assert!(a.phase_of(0, hh).is_some());
        }
    }

    #[test]
    fn aggregation_conserves_energy(seed in any::<u64>(), nodes in 2usize..8) {
        let mut doc = random_radial_doc(seed, nodes);
        doc.ccps[0].households = 4;
        doc.ccps[0].kind = PropertyKind::Multi;
        let c = Circuit::from_doc(doc).unwrap();
        let a = assign_phases(&c, seed);
        let d = generate_profiles(&c, seed, MIN_DAYS, &DemandConfig::default()).unwrap();
        let load = aggregate_to_ccp_phase(&d, &a).unwrap();
        for t in (0..d.steps()).step_by(37) {
            let households: f64 = d.households.iter().map(|h| h.p_kw[t]).sum();
            let lumped: f64 = load.at_step(t).iter().flatten().sum();
            prop_assert!((households - lumped).abs() <= 1e-9 * households.max(1.0));
        }
        // Unoccupied phases carry nothing.
        for (ccp, phases) in load.p_kw.iter().enumerate() {
            for p in Phase::ALL {
                if a.households_on(ccp, p).is_empty() {
                    prop_assert!(phases[p.index()].iter().all(|&x| x == 0.0));
                }
            }
        }
    }
}

#[test]
fn same_seed_same_profiles() {
    let c = star(&[1, 3, 2]);
    let cfg = DemandConfig::default();
    let a = generate_profiles(&c, 17, 14, &cfg).unwrap();
    let b = generate_profiles(&c, 17, 14, &cfg).unwrap();
    assert_eq!(a, b);
    let other = generate_profiles(&c, 18, 14, &cfg).unwrap();
    assert_ne!(a, other);
    assert_eq!(assign_phases(&c, 4), assign_phases(&c, 4));
}

#[test]
fn profiles_are_non_negative_and_sized() {
    let c = star(&[2, 5]);
    let d = generate_profiles(&c, 1, 21, &DemandConfig::default()).unwrap();
    assert_eq!(d.households.len(), 7);
    assert!(d.households.iter().all(|h| h.p_kw.len() == 21 * 48));
    assert!(d.households.iter().flat_map(|h| &h.p_kw).all(|&p| p >= 0.0));
}

#[test]
fn horizon_shorter_than_two_weeks_is_rejected() {
    let c = star(&[1]);
    assert_eq!(
        generate_profiles(&c, 0, 13, &DemandConfig::default()),
        Err(DemandError::HorizonTooShort(13))
    );
}

#[test]
fn hundred_household_energy_is_frozen() {
    let c = star(&[1; 100]);
    let d = generate_profiles(&c, 2019, 28, &DemandConfig::default()).unwrap();
    let e = d.mean_daily_energy_kwh();
    let (lo, hi) = DemandConfig::default().daily_energy_band_kwh;
    assert!(e > lo && e < hi, "{e}");
    assert!((e - FROZEN_KWH).abs() < 1e-9, "{e}");
}

const FROZEN_KWH: f64 = 7.8260072163735055;
