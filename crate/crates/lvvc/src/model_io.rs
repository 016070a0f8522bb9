//! Versioned model files and per-sample prediction tables.

use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use lvvc_core::demand::Phase;
use lvvc_core::dlnn::{MlpModel, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;
use crate::meta::Metadata;
use crate::timeseries::timestamp;

pub const FORMAT: &str = "lvvc-model";
pub const VERSION: u32 = 1;

/// Shape of the dataset a model was trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetShape {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "C")]
    pub c: usize,
    pub include_power: bool,
    #[serde(rename = "I_N")]
    pub impedance_ohm: f64,
    pub feature_order: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub tool_version: String,
    pub training: TrainConfig,
    pub dataset: DatasetShape,
    pub model: MlpModel,
    pub metadata: Metadata,
}

impl ModelFile {
    pub fn new(
        model: MlpModel,
        training: TrainConfig,
        dataset: DatasetShape,
        metadata: Metadata,
    ) -> Self {
        ModelFile {
            format: FORMAT.to_string(),
            version: VERSION,
            tool_version: crate::meta::VERSION.to_string(),
            training,
            dataset,
            model,
            metadata,
        }
    }
}

pub fn write_model(path: &Path, file: &ModelFile) -> Result<()> {
    fsio::write_json(path, file)
}

pub fn read_model(path: &Path) -> Result<ModelFile> {
    let file: ModelFile = fsio::read_json(path)?;
    if file.format != FORMAT || file.version != VERSION {
        return Err(Error::format(
            path,
            0,
            format!(
                "unsupported model format {} v{} (expected {FORMAT} v{VERSION})",
                file.format, file.version
            ),
        ));
    }
    if file.model.spec.inputs() != file.dataset.n {
        return Err(Error::format(
            path,
            0,
            "model input size differs from dataset N",
        ));
    }
    Ok(file)
}

pub struct PredictionRow<'a> {
    pub ccp_id: &'a str,
    pub phase: Phase,
    /// Measurement step; the prediction is for the step after.
    pub t: usize,
    pub predicted: f64,
    pub actual: f64,
}

pub fn write_predictions_csv(
    path: &Path,
    start: DateTime<Utc>,
    rows: &[PredictionRow],
) -> Result<()> {
    fsio::write_atomic(path, |w: &mut dyn Write| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["timestamp", "ccp_id", "phase", "v_pred_pu", "v_true_pu"])
            .map_err(fsio::csv_to_write(path))?;
        for r in rows {
            csv.write_record([
                timestamp(start, r.t + 1),
                r.ccp_id.to_string(),
                r.phase.number().to_string(),
                r.predicted.to_string(),
                r.actual.to_string(),
            ])
            .map_err(fsio::csv_to_write(path))?;
        }
        csv.flush().map_err(fsio::io_to_write(path))
    })
}
