//! Experiment results: a flat CSV summary and the full JSON report it is
//! derived from.

use std::io::Write;
use std::path::Path;

use lvvc_core::experiments::{ExperimentReport, ExperimentRow};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;
use crate::meta::Metadata;

pub const FORMAT: &str = "lvvc-report";
pub const VERSION: u32 = 1;

pub const RESULTS_HEADER: [&str; 15] = [
    "circuit_id",
    "C",
    "with_power",
    "placement_seed",
    "median_inter_meter_m",
    "count",
    "median",
    "q1",
    "q3",
    "iqr",
    "mean",
    "sigma",
    "lower_2698",
    "upper_2698",
    "baseline_median",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Coverage,
    Placement,
}

impl ReportKind {
    pub fn name(self) -> &'static str {
        match self {
            ReportKind::Coverage => "coverage",
            ReportKind::Placement => "placement",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub format: String,
    pub version: u32,
    pub kind: ReportKind,
    pub circuit_id: String,
    pub nominal_voltage: f64,
    pub report: ExperimentReport,
    pub metadata: Metadata,
}

impl ReportFile {
    pub fn new(
        kind: ReportKind,
        circuit_id: &str,
        nominal_voltage: f64,
        report: ExperimentReport,
        metadata: Metadata,
    ) -> Self {
        ReportFile {
            format: FORMAT.to_string(),
            version: VERSION,
            kind,
            circuit_id: circuit_id.to_string(),
            nominal_voltage,
            report,
            metadata,
        }
    }
}

pub fn read_report(path: &Path) -> Result<ReportFile> {
    let file: ReportFile = fsio::read_json(path)?;
    if file.format != FORMAT || file.version != VERSION {
        return Err(Error::format(
            path,
            0,
            format!(
                "unsupported report format {} v{} (expected {FORMAT} v{VERSION})",
                file.format, file.version
            ),
        ));
    }
    Ok(file)
}

/// One CSV record; errors are in per-unit.
pub fn result_record(row: &ExperimentRow) -> Vec<String> {
    let m = &row.model;
    vec![
        row.circuit_id.clone(),
        row.meters.to_string(),
        row.with_power.to_string(),
        row.placement_seed.to_string(),
        row.median_inter_meter_m
            .map(|d| d.to_string())
            .unwrap_or_default(),
        m.count.to_string(),
        m.median.to_string(),
        m.q1.to_string(),
        m.q3.to_string(),
        m.iqr.to_string(),
        m.mean.to_string(),
        m.sigma.to_string(),
        m.lower.to_string(),
        m.upper.to_string(),
        row.baseline.median.to_string(),
    ]
}

pub fn write_results_csv(path: &Path, rows: &[ExperimentRow]) -> Result<()> {
    fsio::write_atomic(path, |w: &mut dyn Write| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(RESULTS_HEADER)
            .map_err(fsio::csv_to_write(path))?;
        for row in rows {
            csv.write_record(result_record(row))
                .map_err(fsio::csv_to_write(path))?;
        }
        csv.flush().map_err(fsio::io_to_write(path))
    })
}
