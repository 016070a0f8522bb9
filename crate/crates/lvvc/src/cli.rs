//! The `lvvc` command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lvvc_core::demand::{aggregate_to_ccp_phase, assign_phases, generate_profiles, DemandConfig};
use lvvc_core::dlnn::{init_model, predict, train, OutputActivation, TrainConfig};
use lvvc_core::experiments::{Coverage, Simulation, SimulationConfig};
use lvvc_core::features::{build_dataset, select_smart_meters, PlacementStrategy, Split};
use lvvc_core::impedance::{segment_impedances, thevenin_total_impedance, DEFAULT_LOAD_OHM};
use lvvc_core::powerflow::PowerFlowConfig;
use lvvc_core::stats::error_stats;
use serde::Serialize;

use crate::circuit_io::read_circuit_bytes;
use crate::config::LoadedConfig;
use crate::dataset_io::{read_dataset, write_dataset, DatasetInfo};
use crate::error::{Error, Result};
use crate::fsio;
use crate::meta::{write_sidecar, Metadata};
use crate::model_io::{
    read_model, write_model, write_predictions_csv, DatasetShape, ModelFile, PredictionRow,
};
use crate::pipeline::{render_reports, run_pipeline, solve_summary};
use crate::results::{read_report, ReportKind};
use crate::timeseries::{
    parse_timestamp, read_demand_csv, read_voltage_csv, write_demand_csv, write_voltage_csv,
    DEFAULT_START,
};

/// Prints a line, ignoring a closed stdout (e.g. output piped into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

#[derive(Debug, Parser)]
#[command(
    name = "lvvc",
    version,
    about = "Voltage prediction for low-voltage feeders from sparse smart meters"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a circuit file and print a summary.
    Validate(ValidateArgs),
    /// Print per-segment impedances and the total line impedance.
    Impedance(ImpedanceArgs),
    /// Generate half-hourly household demand.
    Demand(DemandArgs),
    /// Solve the power flow for a demand file.
    Simulate(SimulateArgs),
    /// Select meters and build a feature dataset.
    Dataset(DatasetArgs),
    /// Train a network on a dataset.
    Train(TrainArgs),
    /// Predict voltages for a dataset split.
    Predict(PredictArgs),
    /// Run one experiment sweep from a run configuration.
    Experiment(ExperimentArgs),
    /// Run every configured experiment end to end.
    Run(RunArgs),
    /// Regenerate results tables and figures from report files.
    Report(ReportArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    pub circuit: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ImpedanceArgs {
    pub circuit: PathBuf,
    /// Per-household load resistance (ohm).
    #[arg(long, default_value_t = DEFAULT_LOAD_OHM)]
    pub load_ohm: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct DemandArgs {
    pub circuit: PathBuf,
    /// Demand generator seed.
    #[arg(long)]
    pub seed: u64,
    /// Household phase assignment seed.
    #[arg(long)]
    pub phase_seed: u64,
    #[arg(long, default_value_t = 28)]
    pub days: u32,
    #[arg(long, default_value = DEFAULT_START)]
    pub start: String,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    pub circuit: PathBuf,
    #[arg(long)]
    pub demand: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub source_pu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub power_factor: f64,
    #[arg(long, default_value_t = DEFAULT_LOAD_OHM)]
    pub load_ohm: f64,
    /// Voltage CSV to write.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Convergence and violation summary (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyArg {
    Random,
    KeyLocations,
}

#[derive(Debug, Args, Serialize)]
pub struct DatasetArgs {
    #[arg(long)]
    pub circuit: PathBuf,
    #[arg(long)]
    pub demand: PathBuf,
    #[arg(long)]
    pub voltages: PathBuf,
    /// Meter count, or `full` for every occupied CCP phase.
    #[arg(long, value_parser = parse_coverage)]
    pub meters: CoverageArg,
    #[arg(long, value_enum, default_value_t = StrategyArg::KeyLocations)]
    pub strategy: StrategyArg,
    /// Placement seed.
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub with_power: bool,
    #[arg(long, default_value_t = DEFAULT_LOAD_OHM)]
    pub load_ohm: f64,
    /// Dataset directory to write.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, Serialize)]
#[serde(transparent)]
pub struct CoverageArg(pub Coverage);

fn parse_coverage(s: &str) -> std::result::Result<CoverageArg, String> {
    if s == "full" {
        return Ok(CoverageArg(Coverage::Full));
    }
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(CoverageArg(Coverage::Count(n))),
        _ => Err(format!(
            "expected a positive meter count or \"full\", got {s:?}"
        )),
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Initialisation and shuffling seed.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    pub batch_size: usize,
    #[arg(long, default_value_t = TrainConfig::default().max_epochs)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().patience)]
    pub patience: usize,
    /// Use a linear output neuron instead of SELU.
    #[arg(long)]
    pub linear_output: bool,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitArg {
    Train,
    Validation,
    Evaluation,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Evaluation)]
    pub split: SplitArg,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ExperimentKindArg {
    Coverage,
    Placement,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    pub kind: ExperimentKindArg,
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output_dir` from the configuration.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output_dir` from the configuration.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report JSON files written by `run` or `experiment`.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
}

/// Parses arguments, runs the command and maps failures to exit codes.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(crate::ExitClass::Config as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lvvc: error: {e}");
            e.class().into()
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Validate(a) => validate(&a),
        Command::Impedance(a) => impedance(&a),
        Command::Demand(a) => demand(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Dataset(a) => dataset(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Predict(a) => predict_cmd(&a),
        Command::Experiment(a) => {
            let kind = match a.kind {
                ExperimentKindArg::Coverage => ReportKind::Coverage,
                ExperimentKindArg::Placement => ReportKind::Placement,
            };
            run_config(
                &a.config,
                a.output.as_deref(),
                &[kind],
                &format!("experiment {}", kind.name()),
            )
        }
        Command::Run(a) => {
            let lc = LoadedConfig::load(&a.config)?;
            let mut kinds = vec![ReportKind::Coverage];
            if lc.config.placement_sweep.is_some() {
                kinds.push(ReportKind::Placement);
            }
            run_loaded(&lc, a.output.as_deref(), &kinds, "run")
        }
        Command::Report(a) => report(&a),
    }
}

fn validate(a: &ValidateArgs) -> Result<()> {
    let (circuit, _) = read_circuit_bytes(&a.circuit)?;
    let options = circuit.enumerate_topology_options()?;
    say!(
        "ok: {} nodes, {} segments, {} CCPs, {} households, {} switches, {} topology options",
        circuit.node_count(),
        circuit.segments().len(),
        circuit.ccps().len(),
        circuit.total_households(),
        circuit.switches().len(),
        options.len()
    );
    Ok(())
}

fn impedance(a: &ImpedanceArgs) -> Result<()> {
    let (circuit, _) = read_circuit_bytes(&a.circuit)?;
    let summary = thevenin_total_impedance(&circuit, a.load_ohm)?;
    say!("i_n_ohm,load_ohm_per_household");
    say!("{},{}", summary.total_ohm, summary.per_household_load_ohm);
    say!("");
    say!("segment,from,to,length_m,r_ohm,x_ohm,z_ohm,enabled");
    for s in segment_impedances(&circuit) {
        let seg = &circuit.segments()[s.segment];
        say!(
            "{},{},{},{},{},{},{},{}",
            s.segment,
            seg.from,
            seg.to,
            seg.length_m,
            s.r,
            s.x,
            s.z,
            circuit.is_segment_enabled(s.segment)
        );
    }
    Ok(())
}

fn parse_start(s: &str) -> Result<chrono::DateTime<chrono::Utc>> {
    parse_timestamp(s).map_err(Error::Config)
}

fn demand(a: &DemandArgs) -> Result<()> {
    let (circuit, text) = read_circuit_bytes(&a.circuit)?;
    let start = parse_start(&a.start)?;
    let assignment = assign_phases(&circuit, a.phase_seed);
    let series = generate_profiles(&circuit, a.seed, a.days, &DemandConfig::default())?;
    write_demand_csv(&a.output, &circuit, &assignment, &series, start)?;
    write_sidecar(
        &a.output,
        &Metadata::new("demand", a).with_input("circuit", text.as_bytes()),
    )?;
    say!(
        "wrote {} households x {} steps, mean daily energy {:.3} kWh",
        series.households.len(),
        series.steps(),
        series.mean_daily_energy_kwh()
    );
    Ok(())
}

fn sim_config(source_pu: f64, power_factor: f64, load_ohm: f64) -> SimulationConfig {
    SimulationConfig {
        source_pu,
        load_ohm,
        powerflow: PowerFlowConfig {
            power_factor,
            ..PowerFlowConfig::default()
        },
        ..SimulationConfig::default()
    }
}

/// Loads a circuit, its demand file and the resulting power flow.
fn simulate_from_files(
    circuit_path: &Path,
    demand_path: &Path,
    config: &SimulationConfig,
) -> Result<(Simulation, chrono::DateTime<chrono::Utc>, Metadata)> {
    let (circuit, text) = read_circuit_bytes(circuit_path)?;
    let file = read_demand_csv(demand_path, &circuit)?;
    let demand_bytes = std::fs::read(demand_path).map_err(|source| Error::Read {
        path: demand_path.to_path_buf(),
        source,
    })?;
    let loads = aggregate_to_ccp_phase(&file.demand, &file.assignment)?;
    let sim = Simulation::from_parts(circuit, file.assignment, file.demand, loads, config)
        .map_err(|e| Error::from(e).in_stage("power flow"))?;
    let meta = Metadata::new("simulate", config)
        .with_input("circuit", text.as_bytes())
        .with_input("demand", &demand_bytes);
    Ok((sim, file.start, meta))
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let config = sim_config(a.source_pu, a.power_factor, a.load_ohm);
    if !(config.powerflow.power_factor > 0.0 && config.powerflow.power_factor <= 1.0) {
        return Err(Error::Config("power factor must be in (0, 1]".to_string()));
    }
    let (sim, start, meta) = simulate_from_files(&a.circuit, &a.demand, &config)?;
    write_voltage_csv(&a.output, &sim.circuit, &sim.voltages, start)?;
    write_sidecar(&a.output, &meta)?;
    let summary = solve_summary(&sim, config.powerflow.band, start, meta);
    if let Some(report) = &a.report {
        fsio::write_json(report, &summary)?;
    }
    say!(
        "solved {} steps, I_N {:.4} ohm, voltage range {:.4}..{:.4} pu, {} band violations",
        summary.steps,
        summary.impedance_ohm,
        summary.min_v_pu,
        summary.max_v_pu,
        summary.violation_count
    );
    Ok(())
}

fn dataset(a: &DatasetArgs) -> Result<()> {
    let (circuit, text) = read_circuit_bytes(&a.circuit)?;
    let file = read_demand_csv(&a.demand, &circuit)?;
    let (voltages, v_start) = read_voltage_csv(&a.voltages, &circuit)?;
    if v_start != file.start || voltages.steps != file.demand.steps() {
        return Err(Error::Config(
            "demand and voltage files cover different horizons".to_string(),
        ));
    }
    let loads = aggregate_to_ccp_phase(&file.demand, &file.assignment)?;
    let i_n = thevenin_total_impedance(&circuit, a.load_ohm)?.total_ohm;
    let strategy = match a.strategy {
        StrategyArg::Random => PlacementStrategy::Random,
        StrategyArg::KeyLocations => PlacementStrategy::KeyLocations,
    };
    let count = a.meters.0.resolve(&file.assignment);
    let meters = select_smart_meters(&circuit, &file.assignment, count, &strategy, a.seed)?;
    let ds = build_dataset(
        &voltages,
        &loads,
        &meters,
        &circuit,
        &file.assignment,
        i_n,
        a.with_power,
    )?;
    let read = |p: &Path| {
        std::fs::read(p).map_err(|source| Error::Read {
            path: p.to_path_buf(),
            source,
        })
    };
    let meta = Metadata::new("dataset", a)
        .with_input("circuit", text.as_bytes())
        .with_input("demand", &read(&a.demand)?)
        .with_input("voltages", &read(&a.voltages)?);
    let label = match a.strategy {
        StrategyArg::Random => "random",
        StrategyArg::KeyLocations => "key_locations",
    };
    let sidecar = write_dataset(
        &a.output,
        &ds,
        DatasetInfo {
            circuit: &circuit,
            seed: a.seed,
            strategy: label,
            start: file.start,
            metadata: meta,
        },
    )?;
    say!(
        "wrote {} samples, C={}, N={}, I_N {:.4} ohm",
        sidecar.samples,
        sidecar.c,
        sidecar.n,
        sidecar.impedance_ohm
    );
    Ok(())
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let (ds, sidecar) = read_dataset(&a.dataset)?;
    let config = TrainConfig {
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        max_epochs: a.max_epochs,
        patience: a.patience,
        seed: a.seed,
        output_activation: if a.linear_output {
            OutputActivation::Linear
        } else {
            OutputActivation::Selu
        },
        ..TrainConfig::default()
    };
    if !(config.learning_rate > 0.0) || config.batch_size == 0 || config.max_epochs == 0 {
        return Err(Error::Config(
            "learning rate, batch size and max epochs must be positive".to_string(),
        ));
    }
    let model = init_model(sidecar.n, a.seed)?;
    let model = train(model, &ds, &config)?;
    let best = model.best_epoch.unwrap_or(0);
    let val = model
        .history
        .get(best)
        .map_or(f64::NAN, |h| h.validation_loss);
    let meta = Metadata::new(
        "train",
        &serde_json::json!({
            "args": a,
            "dataset_config_sha256": sidecar.metadata.config_sha256,
        }),
    );
    let epochs = model.history.len();
    let file = ModelFile::new(
        model,
        config,
        DatasetShape {
            n: sidecar.n,
            c: sidecar.c,
            include_power: sidecar.include_power,
            impedance_ohm: sidecar.impedance_ohm,
            feature_order: sidecar.feature_order.clone(),
        },
        meta.clone(),
    );
    write_model(&a.output, &file)?;
    write_sidecar(&a.output, &meta)?;
    say!("trained {epochs} epochs, best epoch {best}, validation loss {val:.6e}");
    Ok(())
}

fn predict_cmd(a: &PredictArgs) -> Result<()> {
    let model = read_model(&a.model)?;
    let (ds, sidecar) = read_dataset(&a.dataset)?;
    if model.dataset.feature_order != sidecar.feature_order {
        return Err(Error::Config(
            "model and dataset have different feature layouts".to_string(),
        ));
    }
    let split = match a.split {
        SplitArg::Train => Split::Train,
        SplitArg::Validation => Split::Validation,
        SplitArg::Evaluation => Split::Evaluation,
    };
    let samples: Vec<_> = ds.split(split).collect();
    let predicted = predict(&model.model, samples.iter().map(|s| s.inputs.as_slice()))?;
    let rows: Vec<PredictionRow> = samples
        .iter()
        .zip(&predicted)
        .map(|(s, &p)| PredictionRow {
            ccp_id: &sidecar.ccp_ids[s.ccp],
            phase: s.phase,
            t: s.t,
            predicted: p,
            actual: s.target,
        })
        .collect();
    write_predictions_csv(&a.output, sidecar.start()?, &rows)?;
    let meta = Metadata::new(
        "predict",
        &serde_json::json!({
            "args": a,
            "model_config_sha256": model.metadata.config_sha256,
            "dataset_config_sha256": sidecar.metadata.config_sha256,
        }),
    );
    write_sidecar(&a.output, &meta)?;
    let errors: Vec<f64> = rows
        .iter()
        .map(|r| (r.predicted - r.actual).abs())
        .collect();
    match error_stats(&errors) {
        Ok(s) => say!(
            "{} predictions, median absolute error {:.6} pu, mean {:.6} pu",
            s.count,
            s.median,
            s.mean
        ),
        Err(_) => say!("no samples in the requested split"),
    }
    Ok(())
}

fn run_config(
    config: &Path,
    output: Option<&Path>,
    kinds: &[ReportKind],
    command: &str,
) -> Result<()> {
    let lc = LoadedConfig::load(config)?;
    run_loaded(&lc, output, kinds, command)
}

fn run_loaded(
    lc: &LoadedConfig,
    output: Option<&Path>,
    kinds: &[ReportKind],
    command: &str,
) -> Result<()> {
    let out = lc.output_dir(output)?;
    let outcome = run_pipeline(lc, &out, kinds, command)?;
    for report in &outcome.reports {
        for row in &report.report.rows {
            say!(
                "{} C={} power={} {} seed {}: median {:.3} V (baseline {:.3} V)",
                row.circuit_id,
                row.meters,
                row.with_power,
                row.placement,
                row.placement_seed,
                row.model_volts.median,
                row.baseline_volts.median
            );
        }
    }
    say!("wrote {} files to {}", outcome.files.len(), out.display());
    Ok(())
}

fn report(a: &ReportArgs) -> Result<()> {
    let reports = a
        .reports
        .iter()
        .map(|p| read_report(p))
        .collect::<Result<Vec<_>>>()?;
    let files = render_reports(&reports, &a.output)?;
    say!("wrote {} files to {}", files.len(), a.output.display());
    Ok(())
}
