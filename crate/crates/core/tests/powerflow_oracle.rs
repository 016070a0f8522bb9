use lvvc_core::circuit::Circuit;
use lvvc_core::demand::CcpPhaseLoad;
use lvvc_core::powerflow::{solve_series, solve_timestep, PowerFlowConfig};
use lvvc_testkit::{newton_power_flow, random_loads, random_radial_doc};
use proptest::prelude::*;

#[test]
fn sweep_matches_newton_on_random_trees() {
    let cfg = PowerFlowConfig::default();
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let nodes = 2 + (seed as usize % 9);
        let doc = random_radial_doc(seed, nodes);
        let c = Circuit::from_doc(doc.clone()).unwrap();
        let loads = random_loads(seed ^ 0xabcdef, c.ccps().len(), 10.0);
        let sweep = solve_timestep(&c, &loads, 1.0, &cfg).unwrap();
        let newton = newton_power_flow(&doc, &loads, 1.0, 1.0);
        for (a, b) in sweep.node_pu.iter().zip(&newton) {
            for p in 0..3 {
                worst = worst.max((a[p] - b[p]).abs());
            }
        }
    }
    assert!(worst < 1e-5, "max deviation {worst}");
}

#[test]
fn lagging_power_factor_matches_newton() {
    let doc = random_radial_doc(11, 8);
    let c = Circuit::from_doc(doc.clone()).unwrap();
    let loads = random_loads(3, c.ccps().len(), 8.0);
    let cfg = PowerFlowConfig {
        power_factor: 0.95,
        ..PowerFlowConfig::default()
    };
    let sweep = solve_timestep(&c, &loads, 1.02, &cfg).unwrap();
    let newton = newton_power_flow(&doc, &loads, 1.02, 0.95);
    for (a, b) in sweep.node_pu.iter().zip(&newton) {
        for p in 0..3 {
            assert!((a[p] - b[p]).abs() < 1e-6);
        }
    }
}

proptest! {
    #[test]
    fn voltage_never_rises_away_from_source(seed in any::<u64>(), nodes in 2usize..20) {
        let c = Circuit::from_doc(random_radial_doc(seed, nodes)).unwrap();
        let loads = random_loads(seed.wrapping_add(1), c.ccps().len(), 6.0);
        let sol = solve_timestep(&c, &loads, 1.0, &PowerFlowConfig::default()).unwrap();
        for &n in c.tree().order() {
            if let Some(p) = c.tree().parent(n) {
                for ph in 0..3 {
                    prop_assert!(sol.node_pu[n][ph] <= sol.node_pu[p][ph] + 1e-12);
                }
            }
        }
    }

    #[test]
    fn phases_are_independent(seed in any::<u64>(), nodes in 2usize..12) {
        let c = Circuit::from_doc(random_radial_doc(seed, nodes)).unwrap();
        let loads = random_loads(seed ^ 7, c.ccps().len(), 8.0);
        let rotated: Vec<[f64; 3]> = loads.iter().map(|l| [l[2], l[0], l[1]]).collect();
        let cfg = PowerFlowConfig::default();
        let a = solve_timestep(&c, &loads, 1.0, &cfg).unwrap();
        let b = solve_timestep(&c, &rotated, 1.0, &cfg).unwrap();
        for (x, y) in a.ccp_pu.iter().zip(&b.ccp_pu) {
            prop_assert_eq!([x[2], x[0], x[1]], *y);
        }
    }

    #[test]
    fn zero_impedance_keeps_source_voltage(seed in any::<u64>(), nodes in 2usize..12) {
        let mut doc = random_radial_doc(seed, nodes);
        for s in &mut doc.segments {
            s.r_per_m = 0.0;
            s.x_per_m = 0.0;
        }
        let c = Circuit::from_doc(doc).unwrap();
        let loads = random_loads(seed, c.ccps().len(), 10.0);
        let sol = solve_timestep(&c, &loads, 1.01, &PowerFlowConfig::default()).unwrap();
        prop_assert!(sol.ccp_pu.iter().all(|v| *v == [1.01; 3]));
    }
}

fn series_fixture(seed: u64, steps: usize, scale: f64) -> (Circuit, CcpPhaseLoad) {
    let c = Circuit::from_doc(random_radial_doc(seed, 9)).unwrap();
    let mut loads = CcpPhaseLoad::zeros(c.ccps().len(), steps);
    for t in 0..steps {
        let l = random_loads(seed * 1000 + t as u64, c.ccps().len(), 5.0);
        for (c_idx, per) in l.iter().enumerate() {
            for p in 0..3 {
                // Keep every phase loaded so each CCP voltage depends on it.
                loads.p_kw[c_idx][p][t] = scale * (0.2 + per[p]);
            }
        }
    }
    (c, loads)
}

#[test]
fn doubling_loads_lowers_every_voltage() {
    let cfg = PowerFlowConfig::default();
    let (c, loads) = series_fixture(5, 12, 1.0);
    let (_, doubled) = series_fixture(5, 12, 2.0);
    let (v1, _) = solve_series(&c, &loads, 1.0, &cfg).unwrap();
    let (v2, _) = solve_series(&c, &doubled, 1.0, &cfg).unwrap();
    for (a, b) in v1.v_pu.iter().zip(&v2.v_pu) {
        for p in 0..3 {
            for (x, y) in a[p].iter().zip(&b[p]) {
                assert!(y < x);
            }
        }
    }
}

#[test]
fn constant_loads_give_constant_voltages() {
    let c = Circuit::from_doc(random_radial_doc(2, 7)).unwrap();
    let per = random_loads(9, c.ccps().len(), 4.0);
    let mut loads = CcpPhaseLoad::zeros(c.ccps().len(), 6);
    for (i, l) in per.iter().enumerate() {
        for p in 0..3 {
            loads.p_kw[i][p] = vec![l[p]; 6];
        }
    }
    let (v, report) = solve_series(&c, &loads, 1.0, &PowerFlowConfig::default()).unwrap();
    for ccp in &v.v_pu {
        for p in 0..3 {
            assert!(ccp[p].iter().all(|&x| x == ccp[p][0]));
        }
    }
    assert_eq!(report.steps.len(), 6);
    assert!(report
        .steps
        .iter()
        .all(|s| s.max_mismatch_pu < 1e-8 && s.iterations <= 100));
}
