//! Cable impedance magnitudes and the circuit-level scalar line impedance.
//!
//! Every cable segment is treated as a resistor of value `Z = sqrt(R² + X²)`.
//! All customers are lumped onto one phase, each CCP returning to a common
//! node through `load_ohm / H`, and the tree is reduced series/parallel from
//! the leaves up to give one equivalent impedance seen from the source.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::circuit::{CableSegment, Circuit};

/// Nominal per-household load impedance: 230² / 1000 W.
pub const DEFAULT_LOAD_OHM: f64 = 52.9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentImpedance {
    pub segment: usize,
    pub r: f64,
    pub x: f64,
    pub z: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpedanceSummary {
    /// Total line impedance of the circuit (ohm).
    pub total_ohm: f64,
    pub per_household_load_ohm: f64,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ImpedanceError {
    #[error("circuit has no customer connection points")]
    NoCcps,
    #[error("load impedance must be finite and positive, got {0}")]
    InvalidLoad(f64),
}

pub fn segment_impedance(index: usize, segment: &CableSegment) -> SegmentImpedance {
    let r = segment.r_per_m * segment.length_m;
    let x = segment.x_per_m * segment.length_m;
    SegmentImpedance {
        segment: index,
        r,
        x,
        z: libm::hypot(r, x),
    }
}

pub fn segment_impedances(circuit: &Circuit) -> Vec<SegmentImpedance> {
    circuit
        .segments()
        .iter()
        .enumerate()
        .map(|(i, s)| segment_impedance(i, s))
        .collect()
}

/// Parallel combination of impedances; `None` is an open circuit.
fn parallel(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) if a == 0.0 || b == 0.0 => Some(0.0),
        (Some(a), Some(b)) => Some(a * b / (a + b)),
    }
}

/// Scalar Thévenin impedance between the source and the common customer
/// return, with every customer on a single phase.
pub fn thevenin_total_impedance(
    circuit: &Circuit,
    per_household_load_ohm: f64,
) -> Result<ImpedanceSummary, ImpedanceError> {
    if !(per_household_load_ohm.is_finite() && per_household_load_ohm > 0.0) {
        return Err(ImpedanceError::InvalidLoad(per_household_load_ohm));
    }
    if circuit.ccps().is_empty() {
        return Err(ImpedanceError::NoCcps);
    }
    let tree = circuit.tree();
    let seg_z: Vec<f64> = segment_impedances(circuit).iter().map(|s| s.z).collect();
    // Impedance looking into each node's subtree towards the return node.
    let mut below: Vec<Option<f64>> = vec![None; circuit.node_count()];
    for &node in tree.order().iter().rev() {
        let mut z = circuit
            .ccp_at(node)
            .map(|c| per_household_load_ohm / f64::from(circuit.ccps()[c].households));
        for &child in tree.children(node) {
            let seg = tree
                .parent_segment(child)
                .expect("child has a parent segment");
            z = parallel(z, below[child].map(|zc| zc + seg_z[seg]));
        }
        below[node] = z;
    }
    let total_ohm = below[circuit.source()].ok_or(ImpedanceError::NoCcps)?;
    Ok(ImpedanceSummary {
        total_ohm,
        per_household_load_ohm,
    })
}
