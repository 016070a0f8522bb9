//! Dataset directories: `samples.csv` with one row per sample and raw
//! (unnormalised) inputs, plus a `dataset.json` sidecar describing them.

use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use lvvc_core::circuit::Circuit;
use lvvc_core::demand::Phase;
use lvvc_core::features::{
    FeatureDataset, FeatureLayout, FeatureSample, MeterSet, Normalizer, Split, SplitBoundaries,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;
use crate::meta::Metadata;
use crate::timeseries::{parse_timestamp, timestamp};

pub const FORMAT: &str = "lvvc-dataset";
pub const VERSION: u32 = 1;
pub const SAMPLES_FILE: &str = "samples.csv";
pub const SIDECAR_FILE: &str = "dataset.json";

const LEADING_COLUMNS: [&str; 6] = ["split", "ccp", "ccp_id", "phase", "t", "target"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeterInfo {
    pub ccp_id: String,
    pub phase: Phase,
    pub distance_m: f64,
    pub households_upstream: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSidecar {
    pub format: String,
    pub version: u32,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "C")]
    pub c: usize,
    pub include_power: bool,
    pub feature_order: Vec<String>,
    pub normalization: Normalizer,
    pub split_boundaries: SplitBoundaries,
    /// Placement seed.
    pub seed: u64,
    pub strategy: String,
    #[serde(rename = "I_N")]
    pub impedance_ohm: f64,
    /// First step of the underlying time series.
    pub start: String,
    /// CCP node ids in circuit order; sample `ccp` columns index this list.
    pub ccp_ids: Vec<String>,
    pub meter_details: Vec<MeterInfo>,
    pub meters: MeterSet,
    pub samples: usize,
    pub metadata: Metadata,
}

impl DatasetSidecar {
    pub fn start(&self) -> Result<DateTime<Utc>> {
        parse_timestamp(&self.start).map_err(|m| Error::Config(format!("dataset start: {m}")))
    }
}

fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Validation => "validation",
        Split::Evaluation => "evaluation",
    }
}

pub fn parse_split(s: &str) -> Option<Split> {
    match s {
        "train" => Some(Split::Train),
        "validation" => Some(Split::Validation),
        "evaluation" => Some(Split::Evaluation),
        _ => None,
    }
}

pub struct DatasetInfo<'a> {
    pub circuit: &'a Circuit,
    pub seed: u64,
    pub strategy: &'a str,
    pub start: DateTime<Utc>,
    pub metadata: Metadata,
}

pub fn write_dataset(
    dir: &Path,
    dataset: &FeatureDataset,
    info: DatasetInfo,
) -> Result<DatasetSidecar> {
    let circuit = info.circuit;
    let ccp_ids: Vec<String> = circuit.ccps().iter().map(|c| c.node.to_string()).collect();
    let names = dataset.layout.feature_names();
    let samples_path = dir.join(SAMPLES_FILE);
    fsio::write_atomic(&samples_path, |w: &mut dyn Write| {
        let mut csv = csv::Writer::from_writer(w);
        let err = || fsio::csv_to_write(&samples_path);
        csv.write_record(
            LEADING_COLUMNS
                .iter()
                .copied()
                .chain(names.iter().map(String::as_str)),
        )
        .map_err(err())?;
        for s in &dataset.samples {
            let mut record = vec![
                split_name(s.split).to_string(),
                s.ccp.to_string(),
                ccp_ids[s.ccp].clone(),
                s.phase.number().to_string(),
                s.t.to_string(),
                s.target.to_string(),
            ];
            record.extend(s.inputs.iter().map(f64::to_string));
            csv.write_record(&record).map_err(err())?;
        }
        csv.flush().map_err(fsio::io_to_write(&samples_path))
    })?;
    let sidecar = DatasetSidecar {
        format: FORMAT.to_string(),
        version: VERSION,
        n: dataset.layout.input_len(),
        c: dataset.layout.meters,
        include_power: dataset.layout.include_power,
        feature_order: names,
        normalization: dataset.normalizer.clone(),
        split_boundaries: dataset.boundaries,
        seed: info.seed,
        strategy: info.strategy.to_string(),
        impedance_ohm: dataset.impedance_ohm,
        start: timestamp(info.start, 0),
        ccp_ids: ccp_ids.clone(),
        meter_details: dataset
            .meters
            .meters()
            .iter()
            .map(|m| MeterInfo {
                ccp_id: ccp_ids[m.ccp].clone(),
                phase: m.phase,
                distance_m: m.distance_m,
                households_upstream: m.households_upstream,
            })
            .collect(),
        meters: dataset.meters.clone(),
        samples: dataset.samples.len(),
        metadata: info.metadata,
    };
    fsio::write_json(&dir.join(SIDECAR_FILE), &sidecar)?;
    Ok(sidecar)
}

pub fn read_dataset(dir: &Path) -> Result<(FeatureDataset, DatasetSidecar)> {
    let sidecar_path = dir.join(SIDECAR_FILE);
    let sidecar: DatasetSidecar = fsio::read_json(&sidecar_path)?;
    if sidecar.format != FORMAT || sidecar.version != VERSION {
        return Err(Error::format(
            &sidecar_path,
            0,
            format!(
                "unsupported dataset format {} v{} (expected {FORMAT} v{VERSION})",
                sidecar.format, sidecar.version
            ),
        ));
    }
    let layout = FeatureLayout {
        meters: sidecar.c,
        include_power: sidecar.include_power,
    };
    if layout.input_len() != sidecar.n
        || layout.feature_names() != sidecar.feature_order
        || sidecar.meters.len() != sidecar.c
    {
        return Err(Error::format(
            &sidecar_path,
            0,
            "N, C and feature_order are inconsistent",
        ));
    }
    let path = dir.join(SAMPLES_FILE);
    let text = fsio::read_string(&path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::format(&path, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let expected: Vec<String> = LEADING_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(sidecar.feature_order.iter().cloned())
        .collect();
    if header != expected {
        return Err(Error::format(
            &path,
            1,
            "header does not match the sidecar feature_order",
        ));
    }
    let mut samples = Vec::with_capacity(sidecar.samples);
    for record in reader.records() {
        let record = record.map_err(|e| {
            Error::format(&path, e.position().map_or(0, |p| p.line()), e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::format(&path, line, format!("bad {what}"));
        let split = parse_split(&record[0]).ok_or_else(|| bad("split"))?;
        let ccp: usize = record[1].parse().map_err(|_| bad("ccp"))?;
        if ccp >= sidecar.ccp_ids.len() {
            return Err(bad("ccp"));
        }
        let phase = record[3]
            .parse::<u8>()
            .ok()
            .and_then(|n| Phase::try_from(n).ok())
            .ok_or_else(|| bad("phase"))?;
        let t: usize = record[4].parse().map_err(|_| bad("t"))?;
        let target: f64 = record[5].parse().map_err(|_| bad("target"))?;
        let inputs = record
            .iter()
            .skip(LEADING_COLUMNS.len())
            .map(|v| v.parse::<f64>().map_err(|_| bad("feature value")))
            .collect::<Result<Vec<f64>>>()?;
        samples.push(FeatureSample {
            inputs,
            target,
            ccp,
            phase,
            t,
            split,
        });
    }
    if samples.len() != sidecar.samples {
        return Err(Error::format(
            &path,
            0,
            format!(
                "{} samples, sidecar says {}",
                samples.len(),
                sidecar.samples
            ),
        ));
    }
    let dataset = FeatureDataset {
        layout,
        meters: sidecar.meters.clone(),
        impedance_ohm: sidecar.impedance_ohm,
        boundaries: sidecar.split_boundaries,
        normalizer: sidecar.normalization.clone(),
        samples,
    };
    Ok((dataset, sidecar))
}
