//! Per-phase backward/forward sweep power flow on the radial circuit.
//!
//! Loads are constant power. Phases are solved independently with no neutral
//! or mutual coupling; each phase sees the full cable impedance.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;
use crate::demand::{CcpPhaseLoad, Phase};
use crate::impedance::segment_impedance;

/// Statutory voltage band in per-unit, inclusive at both edges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatutoryBand {
    pub lower_pu: f64,
    pub upper_pu: f64,
}

impl Default for StatutoryBand {
    /// -6% / +10% around 1 pu.
    fn default() -> Self {
        StatutoryBand {
            lower_pu: 0.94,
            upper_pu: 1.10,
        }
    }
}

impl StatutoryBand {
    pub fn is_violation(&self, v_pu: f64) -> bool {
        v_pu < self.lower_pu || v_pu > self.upper_pu
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowConfig {
    pub tolerance_pu: f64,
    pub max_iterations: u32,
    /// Applied uniformly to every load, lagging.
    pub power_factor: f64,
    /// Any voltage at or below this is treated as voltage collapse.
    pub collapse_pu: f64,
    pub band: StatutoryBand,
}

impl Default for PowerFlowConfig {
    fn default() -> Self {
        PowerFlowConfig {
            tolerance_pu: 1e-8,
            max_iterations: 100,
            power_factor: 1.0,
            collapse_pu: 0.5,
            band: StatutoryBand::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error("phase {phase}: no convergence after {iterations} iterations (last mismatch {mismatch_pu:e} pu)")]
    NotConverged {
        phase: Phase,
        iterations: u32,
        mismatch_pu: f64,
    },
    #[error("phase {phase}: collapse, node {node} fell to {v_pu} pu")]
    Collapse {
        phase: Phase,
        node: usize,
        v_pu: f64,
    },
    #[error("invalid load {value} kW at ccp {ccp} phase {phase}")]
    InvalidLoad {
        ccp: usize,
        phase: Phase,
        value: f64,
    },
    #[error("source voltage must be finite and positive, got {0}")]
    InvalidSource(f64),
    #[error("power factor must be in (0, 1], got {0}")]
    InvalidPowerFactor(f64),
    #[error("expected loads for {expected} ccps, got {got}")]
    LoadShape { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, thiserror::Error)]
#[error("step {step}: {error}")]
pub struct PowerFlowError {
    pub step: usize,
    pub error: SolveError,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    /// Largest iteration count over the three phases.
    pub iterations: u32,
    pub max_mismatch_pu: f64,
    /// CCP phases outside the statutory band.
    pub violations: Vec<(usize, Phase)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepSolution {
    /// Voltage magnitude per node and phase; 0 for de-energised nodes.
    pub node_pu: Vec<[f64; 3]>,
    /// Voltage magnitude per CCP and phase.
    pub ccp_pu: Vec<[f64; 3]>,
    pub report: StepReport,
}

/// Solves one half-hour step. `loads_kw[ccp][phase]` is the lumped load.
pub fn solve_timestep(
    circuit: &Circuit,
    loads_kw: &[[f64; 3]],
    source_pu: f64,
    config: &PowerFlowConfig,
) -> Result<StepSolution, SolveError> {
    if !(source_pu.is_finite() && source_pu > 0.0) {
        return Err(SolveError::InvalidSource(source_pu));
    }
    let pf = config.power_factor;
    if !(pf > 0.0 && pf <= 1.0) {
        return Err(SolveError::InvalidPowerFactor(pf));
    }
    if loads_kw.len() != circuit.ccps().len() {
        return Err(SolveError::LoadShape {
            expected: circuit.ccps().len(),
            got: loads_kw.len(),
        });
    }
    for (ccp, per_phase) in loads_kw.iter().enumerate() {
        for phase in Phase::ALL {
            let value = per_phase[phase.index()];
            if !(value.is_finite() && value >= 0.0) {
                return Err(SolveError::InvalidLoad { ccp, phase, value });
            }
        }
    }

    let z: Vec<Complex64> = circuit
        .segments()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let imp = segment_impedance(i, s);
            Complex64::new(imp.r, imp.x)
        })
        .collect();
    let q_ratio = libm::sqrt(1.0 - pf * pf) / pf;

    let n = circuit.node_count();
    let mut node_pu = vec![[0.0; 3]; n];
    let mut iterations = 0;
    let mut max_mismatch_pu: f64 = 0.0;
    for phase in Phase::ALL {
        let mut s_va = vec![Complex64::new(0.0, 0.0); n];
        for (ccp, &node) in circuit.ccp_nodes().iter().enumerate() {
            let p = loads_kw[ccp][phase.index()] * 1000.0;
            s_va[node] = Complex64::new(p, p * q_ratio);
        }
        let sweep =
            sweep_phase(circuit, &z, &s_va, source_pu, config).map_err(|e| e.with_phase(phase))?;
        iterations = iterations.max(sweep.iterations);
        max_mismatch_pu = max_mismatch_pu.max(sweep.mismatch_pu);
        for &node in circuit.tree().order() {
            node_pu[node][phase.index()] = magnitude(sweep.v[node]) / circuit.nominal_voltage();
        }
    }

    let ccp_pu: Vec<[f64; 3]> = circuit.ccp_nodes().iter().map(|&n| node_pu[n]).collect();
    let violations = ccp_pu
        .iter()
        .enumerate()
        .flat_map(|(c, v)| {
            Phase::ALL
                .into_iter()
                .filter(move |p| config.band.is_violation(v[p.index()]))
                .map(move |p| (c, p))
        })
        .collect();
    Ok(StepSolution {
        node_pu,
        ccp_pu,
        report: StepReport {
            iterations,
            max_mismatch_pu,
            violations,
        },
    })
}

struct Sweep {
    v: Vec<Complex64>,
    iterations: u32,
    mismatch_pu: f64,
}

enum SweepFailure {
    NotConverged { iterations: u32, mismatch_pu: f64 },
    Collapse { node: usize, v_pu: f64 },
}

impl SweepFailure {
    fn with_phase(self, phase: Phase) -> SolveError {
        match self {
            SweepFailure::NotConverged {
                iterations,
                mismatch_pu,
            } => SolveError::NotConverged {
                phase,
                iterations,
                mismatch_pu,
            },
            SweepFailure::Collapse { node, v_pu } => SolveError::Collapse { phase, node, v_pu },
        }
    }
}

/// Phasor magnitude through libm so results do not depend on enabled std features.
fn magnitude(z: Complex64) -> f64 {
    libm::hypot(z.re, z.im)
}

fn sweep_phase(
    circuit: &Circuit,
    z: &[Complex64],
    s_va: &[Complex64],
    source_pu: f64,
    config: &PowerFlowConfig,
) -> Result<Sweep, SweepFailure> {
    let tree = circuit.tree();
    let order = tree.order();
    let base = circuit.nominal_voltage();
    let v_source = Complex64::new(source_pu * base, 0.0);
    let n = circuit.node_count();
    let mut v = vec![v_source; n];
    let mut branch = vec![Complex64::new(0.0, 0.0); n];
    let mut mismatch_pu = f64::INFINITY;

    for iteration in 1..=config.max_iterations {
        // Backward: load currents accumulated towards the source.
        for &node in order {
            let s = s_va[node];
            branch[node] = if s.re == 0.0 && s.im == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                (s / v[node]).conj()
            };
        }
        for &node in order.iter().rev() {
            if let Some(parent) = tree.parent(node) {
                let i = branch[node];
                branch[parent] += i;
            }
        }
        // Forward: voltage drops from the source outwards.
        mismatch_pu = 0.0;
        for &node in order {
            let next = match (tree.parent(node), tree.parent_segment(node)) {
                (Some(parent), Some(seg)) => v[parent] - branch[node] * z[seg],
                _ => v_source,
            };
            mismatch_pu = mismatch_pu.max(magnitude(next - v[node]) / base);
            v[node] = next;
            let v_pu = magnitude(next) / base;
            if !(v_pu > config.collapse_pu) {
                return Err(SweepFailure::Collapse { node, v_pu });
            }
        }
        if mismatch_pu < config.tolerance_pu {
            return Ok(Sweep {
                v,
                iterations: iteration,
                mismatch_pu,
            });
        }
    }
    Err(SweepFailure::NotConverged {
        iterations: config.max_iterations,
        mismatch_pu,
    })
}

/// Ground-truth voltage magnitudes per CCP phase over the horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoltageSeries {
    pub steps: usize,
    /// `v_pu[ccp][phase][t]`.
    pub v_pu: Vec<[Vec<f64>; 3]>,
}

impl VoltageSeries {
    pub fn series(&self, ccp: usize, phase: Phase) -> &[f64] {
        &self.v_pu[ccp][phase.index()]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub steps: Vec<StepReport>,
}

impl SolveReport {
    pub fn violation_count(&self) -> usize {
        self.steps.iter().map(|s| s.violations.len()).sum()
    }
}

pub fn solve_series(
    circuit: &Circuit,
    loads: &CcpPhaseLoad,
    source_pu: f64,
    config: &PowerFlowConfig,
) -> Result<(VoltageSeries, SolveReport), PowerFlowError> {
    let ccps = circuit.ccps().len();
    if loads.p_kw.len() != ccps {
        return Err(PowerFlowError {
            step: 0,
            error: SolveError::LoadShape {
                expected: ccps,
                got: loads.p_kw.len(),
            },
        });
    }
    let mut v_pu: Vec<[Vec<f64>; 3]> = (0..ccps)
        .map(|_| {
            [
                Vec::with_capacity(loads.steps),
                Vec::with_capacity(loads.steps),
                Vec::with_capacity(loads.steps),
            ]
        })
        .collect();
    let mut report = SolveReport::default();
    for step in 0..loads.steps {
        let solution = solve_timestep(circuit, &loads.at_step(step), source_pu, config)
            .map_err(|error| PowerFlowError { step, error })?;
        for (series, v) in v_pu.iter_mut().zip(&solution.ccp_pu) {
            for p in 0..3 {
                series[p].push(v[p]);
            }
        }
        report.steps.push(solution.report);
    }
    Ok((
        VoltageSeries {
            steps: loads.steps,
            v_pu,
        },
        report,
    ))
}
