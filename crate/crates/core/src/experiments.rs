//! End-to-end studies: simulate a month of feeder operation once, then for
//! each meter configuration select meters, build features, train a network
//! and summarise its errors over every occupied CCP phase in the evaluation
//! week, next to a nearest-meter persistence baseline.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;
use crate::demand::{
    aggregate_to_ccp_phase, assign_phases, generate_profiles, CcpPhaseLoad, DemandConfig,
    DemandError, DemandSeries, Phase, PhaseAssignment,
};
use crate::dlnn::{init_model, predict, train, DlnnError, TrainConfig};
use crate::features::{
    build_dataset, median_inter_meter_distance, select_smart_meters, FeatureError, FeatureSample,
    MeterSet, PlacementStrategy, Split,
};
use crate::impedance::{thevenin_total_impedance, ImpedanceError, DEFAULT_LOAD_OHM};
use crate::powerflow::{solve_series, PowerFlowConfig, PowerFlowError, SolveReport, VoltageSeries};
pub use crate::stats::{error_stats, ErrorStats, StatsError};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ExperimentError {
    #[error("demand generation: {0}")]
    Demand(#[from] DemandError),
    #[error("power flow: {0}")]
    PowerFlow(#[from] PowerFlowError),
    #[error("impedance: {0}")]
    Impedance(#[from] ImpedanceError),
    #[error("{context}: features: {error}")]
    Features {
        context: String,
        error: FeatureError,
    },
    #[error("{context}: training: {error}")]
    Training { context: String, error: DlnnError },
    #[error("{context}: statistics: {error}")]
    Stats { context: String, error: StatsError },
    #[error("placement sweep needs at least two placement seeds, got {0}")]
    TooFewPlacements(usize),
}

/// Everything needed to regenerate the simulated month.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub demand_seed: u64,
    pub phase_seed: u64,
    pub days: u32,
    pub source_pu: f64,
    pub load_ohm: f64,
    pub demand: DemandConfig,
    pub powerflow: PowerFlowConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            demand_seed: 0,
            phase_seed: 0,
            days: 28,
            source_pu: 1.0,
            load_ohm: DEFAULT_LOAD_OHM,
            demand: DemandConfig::default(),
            powerflow: PowerFlowConfig::default(),
        }
    }
}

/// A simulated month on one circuit.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub circuit: Circuit,
    pub assignment: PhaseAssignment,
    pub demand: DemandSeries,
    pub loads: CcpPhaseLoad,
    pub voltages: VoltageSeries,
    pub report: SolveReport,
    pub impedance_ohm: f64,
}

pub fn simulate(
    circuit: &Circuit,
    config: &SimulationConfig,
) -> Result<Simulation, ExperimentError> {
    let assignment = assign_phases(circuit, config.phase_seed);
    let demand = generate_profiles(circuit, config.demand_seed, config.days, &config.demand)?;
    let loads = aggregate_to_ccp_phase(&demand, &assignment)?;
    Simulation::from_parts(circuit.clone(), assignment, demand, loads, config)
}

impl Simulation {
    /// Solves the power flow for externally supplied demand.
    pub fn from_parts(
        circuit: Circuit,
        assignment: PhaseAssignment,
        demand: DemandSeries,
        loads: CcpPhaseLoad,
        config: &SimulationConfig,
    ) -> Result<Simulation, ExperimentError> {
        let (voltages, report) =
            solve_series(&circuit, &loads, config.source_pu, &config.powerflow)?;
        let impedance_ohm = thevenin_total_impedance(&circuit, config.load_ohm)?.total_ohm;
        Ok(Simulation {
            circuit,
            assignment,
            demand,
            loads,
            voltages,
            report,
            impedance_ohm,
        })
    }
}

/// Number of meters in a configuration: a count, or `"full"` for every
/// occupied CCP phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Coverage {
    Count(usize),
    Full,
}

impl Serialize for Coverage {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Coverage::Count(n) => s.serialize_u64(*n as u64),
            Coverage::Full => s.serialize_str("full"),
        }
    }
}

impl<'de> Deserialize<'de> for Coverage {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct Visitor;
        impl serde::de::Visitor<'_> for Visitor {
            type Value = Coverage;

            fn expecting(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
                f.write_str("a meter count or \"full\"")
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<Coverage, E> {
                Ok(Coverage::Count(v as usize))
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> Result<Coverage, E> {
                usize::try_from(v)
                    .map(Coverage::Count)
                    .map_err(|_| E::custom("meter count must be non-negative"))
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<Coverage, E> {
                if v == "full" {
                    Ok(Coverage::Full)
                } else {
                    Err(E::custom("expected a meter count or \"full\""))
                }
            }
        }
        d.deserialize_any(Visitor)
    }
}

impl Coverage {
    pub fn resolve(self, assignment: &PhaseAssignment) -> usize {
        match self {
            Coverage::Count(n) => n,
            Coverage::Full => assignment.occupied_ccp_phases().len(),
        }
    }
}

/// Placement label used in reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub strategy: PlacementStrategy,
    pub seed: u64,
}

impl Placement {
    pub fn label(&self) -> &'static str {
        match self.strategy {
            PlacementStrategy::Random => "random",
            PlacementStrategy::KeyLocations => "key_locations",
            PlacementStrategy::Explicit(_) => "explicit",
        }
    }
}

/// One trained-and-evaluated meter configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub coverage: Coverage,
    pub include_power: bool,
    pub placement: Placement,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub circuit_id: String,
    pub coverage: Coverage,
    /// Resolved meter count.
    pub meters: usize,
    pub with_power: bool,
    pub placement: String,
    pub placement_seed: u64,
    /// `None` with fewer than two meters.
    pub median_inter_meter_m: Option<f64>,
    /// False when the CCP nearest the source carries no meter.
    pub first_ccp_metered: bool,
    pub model: ErrorStats,
    pub baseline: ErrorStats,
    /// `model` in volts on the circuit's nominal voltage.
    pub model_volts: ErrorStats,
    pub baseline_volts: ErrorStats,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub spec: RunSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub simulation: SimulationConfig,
    pub impedance_ohm: f64,
    pub rows: Vec<ExperimentRow>,
}

/// Persistence forecast from the path-nearest meter: the prediction for
/// `(q, t + 1)` is the voltage of that meter at `t`. A metered query uses its
/// own reading; distance ties go to the earlier meter.
pub fn baseline_nearest_meter(
    voltages: &VoltageSeries,
    meters: &MeterSet,
    circuit: &Circuit,
    queries: &[(usize, Phase, usize)],
) -> Vec<f64> {
    queries
        .iter()
        .map(|&(ccp, phase, t)| {
            let m = nearest_meter(meters, circuit, ccp, phase);
            voltages.series(m.0, m.1)[t]
        })
        .collect()
}

/// `(ccp, phase)` of the meter the baseline reads for a query phase.
pub fn nearest_meter(
    meters: &MeterSet,
    circuit: &Circuit,
    ccp: usize,
    phase: Phase,
) -> (usize, Phase) {
    if meters.contains(ccp, phase) {
        return (ccp, phase);
    }
    let node = circuit.ccp_nodes()[ccp];
    let mut best: Option<(f64, usize, Phase)> = None;
    for m in meters.meters() {
        let d = circuit.tree_distance(node, circuit.ccp_nodes()[m.ccp]);
        if best.is_none_or(|(bd, _, _)| d < bd) {
            best = Some((d, m.ccp, m.phase));
        }
    }
    let (_, c, p) = best.expect("meter set is never empty");
    (c, p)
}

fn first_ccp(circuit: &Circuit) -> Option<usize> {
    (0..circuit.ccps().len()).min_by(|&a, &b| {
        let (na, nb) = (circuit.ccp_nodes()[a], circuit.ccp_nodes()[b]);
        circuit
            .distance_of(na)
            .total_cmp(&circuit.distance_of(nb))
            .then_with(|| circuit.node_id(na).cmp(circuit.node_id(nb)))
    })
}

/// Selects meters, trains, and evaluates one configuration.
pub fn run_configuration(
    sim: &Simulation,
    circuit_id: &str,
    spec: &RunSpec,
) -> Result<ExperimentRow, ExperimentError> {
    let context = || {
        alloc::format!(
            "circuit {circuit_id}, C={:?}, with_power={}, {} placement seed {}",
            spec.coverage,
            spec.include_power,
            spec.placement.label(),
            spec.placement.seed
        )
    };
    let features = |error| ExperimentError::Features {
        context: context(),
        error,
    };
    let count = spec.coverage.resolve(&sim.assignment);
    let meters = select_smart_meters(
        &sim.circuit,
        &sim.assignment,
        count,
        &spec.placement.strategy,
        spec.placement.seed,
    )
    .map_err(features)?;
    let dataset = build_dataset(
        &sim.voltages,
        &sim.loads,
        &meters,
        &sim.circuit,
        &sim.assignment,
        sim.impedance_ohm,
        spec.include_power,
    )
    .map_err(features)?;
    let training = |error| ExperimentError::Training {
        context: context(),
        error,
    };
    let model = init_model(dataset.layout.input_len(), spec.train.seed).map_err(training)?;
    let model = train(model, &dataset, &spec.train).map_err(training)?;

    let eval: Vec<&FeatureSample> = dataset.split(Split::Evaluation).collect();
    let predictions =
        predict(&model, eval.iter().map(|s| s.inputs.as_slice())).map_err(training)?;
    let queries: Vec<(usize, Phase, usize)> = eval.iter().map(|s| (s.ccp, s.phase, s.t)).collect();
    let baseline = baseline_nearest_meter(&sim.voltages, &meters, &sim.circuit, &queries);
    let model_errors: Vec<f64> = eval
        .iter()
        .zip(&predictions)
        .map(|(s, p)| libm::fabs(p - s.target))
        .collect();
    let baseline_errors: Vec<f64> = eval
        .iter()
        .zip(&baseline)
        .map(|(s, p)| libm::fabs(p - s.target))
        .collect();
    let stats = |errors: &[f64]| {
        error_stats(errors).map_err(|error| ExperimentError::Stats {
            context: context(),
            error,
        })
    };
    let model_stats = stats(&model_errors)?;
    let baseline_stats = stats(&baseline_errors)?;
    let volts = sim.circuit.nominal_voltage();
    let first_ccp_metered =
        first_ccp(&sim.circuit).is_some_and(|c| meters.meters().iter().any(|m| m.ccp == c));

    Ok(ExperimentRow {
        circuit_id: circuit_id.to_string(),
        coverage: spec.coverage,
        meters: meters.len(),
        with_power: spec.include_power,
        placement: spec.placement.label().to_string(),
        placement_seed: spec.placement.seed,
        median_inter_meter_m: median_inter_meter_distance(&sim.circuit, &meters).ok(),
        first_ccp_metered,
        model: model_stats,
        baseline: baseline_stats,
        model_volts: model_stats.scaled(volts),
        baseline_volts: baseline_stats.scaled(volts),
        epochs_run: model.history.len(),
        best_epoch: model.best_epoch.unwrap_or(0),
        spec: spec.clone(),
    })
}

fn power_modes(both: bool) -> Vec<bool> {
    if both {
        alloc::vec![false, true]
    } else {
        alloc::vec![true]
    }
}

/// Configurations of a coverage sweep, ordered by `(C, power mode, seed)`.
pub fn plan_coverage_sweep(
    coverages: &[Coverage],
    placement_seeds: &[u64],
    both_power_modes: bool,
    strategy: &PlacementStrategy,
    train: &TrainConfig,
) -> Vec<RunSpec> {
    let mut specs = Vec::new();
    for &coverage in coverages {
        for include_power in power_modes(both_power_modes) {
            for &seed in placement_seeds {
                specs.push(RunSpec {
                    coverage,
                    include_power,
                    placement: Placement {
                        strategy: strategy.clone(),
                        seed,
                    },
                    train: *train,
                });
            }
        }
    }
    specs
}

/// Configurations of a placement sweep: one random placement per seed plus a
/// key-location reference placement, in both power modes if requested.
pub fn plan_placement_sweep(
    count: usize,
    placement_seeds: &[u64],
    both_power_modes: bool,
    train: &TrainConfig,
) -> Result<Vec<RunSpec>, ExperimentError> {
    if placement_seeds.len() < 2 {
        return Err(ExperimentError::TooFewPlacements(placement_seeds.len()));
    }
    let mut specs = Vec::new();
    for include_power in power_modes(both_power_modes) {
        let key = Placement {
            strategy: PlacementStrategy::KeyLocations,
            seed: placement_seeds[0],
        };
        let placements = placement_seeds
            .iter()
            .map(|&seed| Placement {
                strategy: PlacementStrategy::Random,
                seed,
            })
            .chain(core::iter::once(key));
        for placement in placements {
            specs.push(RunSpec {
                coverage: Coverage::Count(count),
                include_power,
                placement,
                train: *train,
            });
        }
    }
    Ok(specs)
}

/// Orders placement-sweep rows by power mode, then median inter-meter
/// distance.
pub fn sort_placement_rows(rows: &mut [ExperimentRow]) {
    rows.sort_by(|a, b| {
        a.with_power
            .cmp(&b.with_power)
            .then_with(|| {
                let da = a.median_inter_meter_m.unwrap_or(0.0);
                let db = b.median_inter_meter_m.unwrap_or(0.0);
                da.total_cmp(&db)
            })
            .then_with(|| a.placement.cmp(&b.placement))
            .then(a.placement_seed.cmp(&b.placement_seed))
    });
}

/// Runs every spec in order; callers wanting parallelism can map
/// [`run_configuration`] themselves.
pub fn run_specs(
    sim: &Simulation,
    circuit_id: &str,
    specs: &[RunSpec],
) -> Result<Vec<ExperimentRow>, ExperimentError> {
    specs
        .iter()
        .map(|s| run_configuration(sim, circuit_id, s))
        .collect()
}

pub fn run_coverage_sweep(
    sim: &Simulation,
    sim_config: &SimulationConfig,
    circuit_id: &str,
    coverages: &[Coverage],
    placement_seeds: &[u64],
    both_power_modes: bool,
    strategy: &PlacementStrategy,
    train: &TrainConfig,
) -> Result<ExperimentReport, ExperimentError> {
    let specs = plan_coverage_sweep(
        coverages,
        placement_seeds,
        both_power_modes,
        strategy,
        train,
    );
    Ok(ExperimentReport {
        simulation: sim_config.clone(),
        impedance_ohm: sim.impedance_ohm,
        rows: run_specs(sim, circuit_id, &specs)?,
    })
}

pub fn run_placement_sweep(
    sim: &Simulation,
    sim_config: &SimulationConfig,
    circuit_id: &str,
    count: usize,
    placement_seeds: &[u64],
    both_power_modes: bool,
    train: &TrainConfig,
) -> Result<ExperimentReport, ExperimentError> {
    let specs = plan_placement_sweep(count, placement_seeds, both_power_modes, train)?;
    let mut rows = run_specs(sim, circuit_id, &specs)?;
    sort_placement_rows(&mut rows);
    Ok(ExperimentReport {
        simulation: sim_config.clone(),
        impedance_ohm: sim.impedance_ohm,
        rows,
    })
}
