use std::path::Path;

use lvvc_core::circuit::{Circuit, CircuitDoc};

use crate::error::{Error, Result};
use crate::fsio;

/// Parses and validates a circuit JSON file.
pub fn read_circuit(path: &Path) -> Result<Circuit> {
    Ok(read_circuit_bytes(path)?.0)
}

/// Like [`read_circuit`], also returning the raw file for hashing.
pub fn read_circuit_bytes(path: &Path) -> Result<(Circuit, String)> {
    let text = fsio::read_string(path)?;
    let doc: CircuitDoc = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    Ok((Circuit::from_doc(doc)?, text))
}

pub fn circuit_json(circuit: &Circuit) -> String {
    let mut s = serde_json::to_string_pretty(circuit.doc()).expect("circuit serialises");
    s.push('\n');
    s
}

pub fn write_circuit(path: &Path, circuit: &Circuit) -> Result<()> {
    fsio::write_bytes(path, circuit_json(circuit).as_bytes())
}
