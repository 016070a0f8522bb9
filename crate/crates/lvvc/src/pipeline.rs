//! End-to-end runs: simulate, sweep meter configurations, and write every
//! artefact with its provenance sidecar.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use lvvc_core::circuit::Circuit;
use lvvc_core::demand::{aggregate_to_ccp_phase, assign_phases, generate_profiles, Phase};
use lvvc_core::experiments::{
    plan_coverage_sweep, plan_placement_sweep, run_configuration, sort_placement_rows,
    ExperimentReport, ExperimentRow, RunSpec, Simulation, SimulationConfig,
};
use lvvc_core::powerflow::StatutoryBand;
use serde::{Deserialize, Serialize};

use crate::circuit_io::read_circuit_bytes;
use crate::config::LoadedConfig;
use crate::error::{Error, Result};
use crate::fsio;
use crate::meta::{sha256_hex, write_sidecar, Metadata};
use crate::parallel::{map_ordered, thread_count};
use crate::results::{write_results_csv, ReportFile, ReportKind};
use crate::svg;
use crate::timeseries::{timestamp, write_demand_csv, write_voltage_csv};

pub const INCOMPLETE_MARKER: &str = ".incomplete";
pub const MANIFEST_FILE: &str = "metadata.json";
pub const DEMAND_FILE: &str = "demand.csv";
pub const VOLTAGE_FILE: &str = "voltages.csv";
pub const SOLVE_REPORT_FILE: &str = "solve_report.json";

pub fn results_file(kind: ReportKind) -> String {
    format!("{}_results.csv", kind.name())
}

pub fn report_file(kind: ReportKind) -> String {
    format!("{}_report.json", kind.name())
}

pub const COVERAGE_FIGURE: &str = "fig3_coverage.svg";
pub const MEAN_ERROR_FIGURE: &str = "fig4_mean_error.svg";
pub const PLACEMENT_FIGURE: &str = "fig5_placement.svg";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub timestamp: String,
    pub ccp_id: String,
    pub phase: Phase,
    pub v_pu: f64,
}

/// Convergence and statutory-band summary of a simulated horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub steps: usize,
    pub max_iterations: u32,
    pub max_mismatch_pu: f64,
    pub band: StatutoryBand,
    #[serde(rename = "I_N")]
    pub impedance_ohm: f64,
    pub min_v_pu: f64,
    pub max_v_pu: f64,
    pub violation_count: usize,
    pub violations: Vec<Violation>,
    pub metadata: Metadata,
}

pub fn solve_summary(
    sim: &Simulation,
    band: StatutoryBand,
    start: DateTime<Utc>,
    metadata: Metadata,
) -> SolveSummary {
    let ids: Vec<String> = sim
        .circuit
        .ccps()
        .iter()
        .map(|c| c.node.to_string())
        .collect();
    let mut violations = Vec::new();
    for (t, step) in sim.report.steps.iter().enumerate() {
        for &(ccp, phase) in &step.violations {
            violations.push(Violation {
                timestamp: timestamp(start, t),
                ccp_id: ids[ccp].clone(),
                phase,
                v_pu: sim.voltages.series(ccp, phase)[t],
            });
        }
    }
    let occupied = sim.assignment.occupied_ccp_phases();
    let occupied_values = || {
        occupied
            .iter()
            .flat_map(|&(c, p)| sim.voltages.series(c, p).iter().copied())
    };
    SolveSummary {
        steps: sim.report.steps.len(),
        max_iterations: sim
            .report
            .steps
            .iter()
            .map(|s| s.iterations)
            .max()
            .unwrap_or(0),
        max_mismatch_pu: sim
            .report
            .steps
            .iter()
            .map(|s| s.max_mismatch_pu)
            .fold(0.0, f64::max),
        band,
        impedance_ohm: sim.impedance_ohm,
        min_v_pu: occupied_values().fold(f64::INFINITY, f64::min),
        max_v_pu: occupied_values().fold(f64::NEG_INFINITY, f64::max),
        violation_count: violations.len(),
        violations,
        metadata,
    }
}

/// Generates demand and solves the horizon, tagging failures with their stage.
pub fn simulate_circuit(circuit: &Circuit, config: &SimulationConfig) -> Result<Simulation> {
    let assignment = assign_phases(circuit, config.phase_seed);
    let demand = generate_profiles(circuit, config.demand_seed, config.days, &config.demand)
        .map_err(|e| Error::from(e).in_stage("demand"))?;
    let loads = aggregate_to_ccp_phase(&demand, &assignment)
        .map_err(|e| Error::from(e).in_stage("demand"))?;
    Simulation::from_parts(circuit.clone(), assignment, demand, loads, config)
        .map_err(|e| Error::from(e).in_stage("power flow"))
}

/// Runs the specs on up to `LVVC_THREADS` workers, keeping spec order.
pub fn run_specs_parallel(
    sim: &Simulation,
    circuit_id: &str,
    specs: &[RunSpec],
) -> Result<Vec<ExperimentRow>> {
    let threads = thread_count()?;
    map_ordered(specs, threads, |spec| {
        run_configuration(sim, circuit_id, spec)
    })
    .into_iter()
    .map(|r| r.map_err(Error::from))
    .collect()
}

pub fn run_experiment(
    lc: &LoadedConfig,
    sim: &Simulation,
    sim_config: &SimulationConfig,
    kind: ReportKind,
) -> Result<ExperimentReport> {
    let c = &lc.config;
    let train = c.train_config();
    let circuit_id = lc.circuit_id();
    let rows = match kind {
        ReportKind::Coverage => {
            let specs = plan_coverage_sweep(
                &c.coverage,
                &c.seeds.placement,
                c.both_power_modes,
                &c.strategy,
                &train,
            );
            run_specs_parallel(sim, &circuit_id, &specs)?
        }
        ReportKind::Placement => {
            let sweep = c.placement_sweep.ok_or_else(|| {
                Error::Config("placement experiment needs a placement_sweep section".to_string())
            })?;
            let specs =
                plan_placement_sweep(sweep.count, &c.seeds.placement, c.both_power_modes, &train)?;
            let mut rows = run_specs_parallel(sim, &circuit_id, &specs)?;
            sort_placement_rows(&mut rows);
            rows
        }
    };
    Ok(ExperimentReport {
        simulation: sim_config.clone(),
        impedance_ohm: sim.impedance_ohm,
        rows,
    })
}

fn write_text(path: &Path, text: &str, meta: &Metadata, written: &mut Vec<PathBuf>) -> Result<()> {
    fsio::write_bytes(path, text.as_bytes())?;
    write_sidecar(path, meta)?;
    written.push(path.to_path_buf());
    Ok(())
}

/// Writes the results CSV and figures derived from one or more reports.
pub fn render_reports(reports: &[ReportFile], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for kind in [ReportKind::Coverage, ReportKind::Placement] {
        let mine: Vec<&ReportFile> = reports.iter().filter(|r| r.kind == kind).collect();
        if mine.is_empty() {
            continue;
        }
        let meta = if let [single] = mine.as_slice() {
            single.metadata.clone()
        } else {
            let hashes: Vec<&str> = mine
                .iter()
                .map(|r| r.metadata.config_sha256.as_str())
                .collect();
            Metadata::new("report", &hashes)
        };
        let rows: Vec<ExperimentRow> = mine
            .iter()
            .flat_map(|r| r.report.rows.iter().cloned())
            .collect();
        let csv_path = out_dir.join(results_file(kind));
        write_results_csv(&csv_path, &rows)?;
        write_sidecar(&csv_path, &meta)?;
        written.push(csv_path);
        match kind {
            ReportKind::Coverage => {
                write_text(
                    &out_dir.join(COVERAGE_FIGURE),
                    &svg::coverage_plot(&rows),
                    &meta,
                    &mut written,
                )?;
                write_text(
                    &out_dir.join(MEAN_ERROR_FIGURE),
                    &svg::mean_error_plot(&rows),
                    &meta,
                    &mut written,
                )?;
            }
            ReportKind::Placement => {
                write_text(
                    &out_dir.join(PLACEMENT_FIGURE),
                    &svg::placement_plot(&rows),
                    &meta,
                    &mut written,
                )?;
            }
        }
    }
    Ok(written)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub metadata: Metadata,
    /// SHA-256 of every file written, keyed by name relative to the run
    /// directory.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub reports: Vec<ReportFile>,
    pub files: Vec<PathBuf>,
}

/// Simulates once, runs the requested experiments and writes everything
/// under `out_dir`. A marker file flags the directory as incomplete until
/// the last artefact is written; it is left in place, with the error, on
/// failure.
pub fn run_pipeline(
    lc: &LoadedConfig,
    out_dir: &Path,
    kinds: &[ReportKind],
    command: &str,
) -> Result<RunOutcome> {
    let marker = out_dir.join(INCOMPLETE_MARKER);
    fs::create_dir_all(out_dir).map_err(fsio::io_to_write(out_dir))?;
    fsio::write_bytes(&marker, b"run in progress\n")?;
    match run_inner(lc, out_dir, kinds, command) {
        Ok(outcome) => {
            fs::remove_file(&marker).map_err(fsio::io_to_write(&marker))?;
            Ok(outcome)
        }
        Err(e) => {
            let _ = fsio::write_bytes(&marker, format!("run failed: {e}\n").as_bytes());
            Err(e)
        }
    }
}

fn run_inner(
    lc: &LoadedConfig,
    out_dir: &Path,
    kinds: &[ReportKind],
    command: &str,
) -> Result<RunOutcome> {
    let c = &lc.config;
    let (circuit, circuit_text) =
        read_circuit_bytes(&lc.circuit_path()).map_err(|e| e.in_stage("circuit"))?;
    let meta = Metadata::new(command, c).with_input("circuit", circuit_text.as_bytes());
    let sim_config = c.simulation();
    let start = c.start();
    let sim = simulate_circuit(&circuit, &sim_config)?;
    if kinds.contains(&ReportKind::Placement) && c.placement_sweep.is_none() {
        return Err(Error::Config(
            "placement experiment needs a placement_sweep section".to_string(),
        ));
    }

    let mut files = Vec::new();
    let demand_path = out_dir.join(DEMAND_FILE);
    write_demand_csv(&demand_path, &circuit, &sim.assignment, &sim.demand, start)?;
    write_sidecar(&demand_path, &meta)?;
    files.push(demand_path);
    let voltage_path = out_dir.join(VOLTAGE_FILE);
    write_voltage_csv(&voltage_path, &circuit, &sim.voltages, start)?;
    write_sidecar(&voltage_path, &meta)?;
    files.push(voltage_path);
    let solve_path = out_dir.join(SOLVE_REPORT_FILE);
    fsio::write_json(
        &solve_path,
        &solve_summary(&sim, sim_config.powerflow.band, start, meta.clone()),
    )?;
    files.push(solve_path);

    let mut reports = Vec::new();
    for &kind in kinds {
        let stage = match kind {
            ReportKind::Coverage => "coverage experiment",
            ReportKind::Placement => "placement experiment",
        };
        let report = run_experiment(lc, &sim, &sim_config, kind).map_err(|e| e.in_stage(stage))?;
        let file = ReportFile::new(
            kind,
            &lc.circuit_id(),
            circuit.nominal_voltage(),
            report,
            meta.clone(),
        );
        let path = out_dir.join(report_file(kind));
        fsio::write_json(&path, &file)?;
        files.push(path);
        files.extend(render_reports(std::slice::from_ref(&file), out_dir)?);
        reports.push(file);
    }

    let mut outputs = BTreeMap::new();
    for f in &files {
        let bytes = fs::read(f).map_err(|source| Error::Read {
            path: f.clone(),
            source,
        })?;
        let name = f
            .strip_prefix(out_dir)
            .unwrap_or(f)
            .to_string_lossy()
            .into_owned();
        outputs.insert(name, sha256_hex(&bytes));
    }
    let manifest_path = out_dir.join(MANIFEST_FILE);
    fsio::write_json(
        &manifest_path,
        &Manifest {
            metadata: meta,
            outputs,
        },
    )?;
    files.push(manifest_path);
    Ok(RunOutcome {
        out_dir: out_dir.to_path_buf(),
        reports,
        files,
    })
}
