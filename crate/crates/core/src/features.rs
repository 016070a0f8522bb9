//! Partial smart-meter coverage and supervised feature construction.
//!
//! A sample for query CCP phase `q` at measurement step `t` predicts the
//! voltage at `t + 1` from
//!
//! ```text
//! [d_q, H_q, t_enc, I_N]
//!   ++ for each meter: V(t), V(t-1), V(t-48), V(t-49), V(t-47)
//!                      (++ the same five lags of P when power is included)
//!   ++ for each meter: [d_c, H_c]
//! ```
//!
//! so the input length is `4 + 10·C + 2·C` with power and `4 + 5·C + 2·C`
//! without. Meters are ordered by distance from the source.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, NodeId};
use crate::demand::{CcpPhaseLoad, Phase, PhaseAssignment};
use crate::powerflow::VoltageSeries;
use crate::stats::quantile_sorted;
use crate::{STEPS_PER_DAY, STEPS_PER_WEEK};

/// Lag offsets (in half-hour steps) of every metered quantity: now, 30 min
/// ago, one day ago, one day and 30 min ago, one day ago plus 30 min.
pub const LAG_OFFSETS: [i64; 5] = [
    0,
    -1,
    -(STEPS_PER_DAY as i64),
    -(STEPS_PER_DAY as i64) - 1,
    -(STEPS_PER_DAY as i64) + 1,
];

/// Earliest measurement step whose lags all resolve.
pub const MIN_SAMPLE_STEP: usize = STEPS_PER_DAY + 1;

/// Normalised targets are shifted onto `[TARGET_OFFSET, TARGET_OFFSET + 1]`
/// so that a SELU output neuron sits in its linear regime.
pub const TARGET_OFFSET: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meter {
    pub ccp: usize,
    pub phase: Phase,
    pub distance_m: f64,
    pub households_upstream: u32,
}

/// Metered CCP phases, ordered by distance from the source, then CCP id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeterSet {
    meters: Vec<Meter>,
}

impl MeterSet {
    pub fn meters(&self) -> &[Meter] {
        &self.meters
    }

    pub fn len(&self) -> usize {
        self.meters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meters.is_empty()
    }

    pub fn contains(&self, ccp: usize, phase: Phase) -> bool {
        self.meters.iter().any(|m| m.ccp == ccp && m.phase == phase)
    }

    pub fn position(&self, ccp: usize, phase: Phase) -> Option<usize> {
        self.meters
            .iter()
            .position(|m| m.ccp == ccp && m.phase == phase)
    }

    /// Builds and orders a meter set from `(ccp, phase)` pairs.
    pub fn from_pairs(
        circuit: &Circuit,
        assignment: &PhaseAssignment,
        pairs: &[(usize, Phase)],
    ) -> Result<MeterSet, FeatureError> {
        if pairs.is_empty() {
            return Err(FeatureError::CountOutOfRange {
                requested: 0,
                max: 0,
            });
        }
        let mut seen = BTreeSet::new();
        let mut meters = Vec::with_capacity(pairs.len());
        for &(ccp, phase) in pairs {
            let node = *circuit
                .ccp_nodes()
                .get(ccp)
                .ok_or(FeatureError::UnknownCcp(format!("#{ccp}")))?;
            if assignment.households_on(ccp, phase).is_empty() {
                return Err(FeatureError::UnoccupiedPhase {
                    ccp: circuit.node_id(node).clone(),
                    phase,
                });
            }
            if !seen.insert((ccp, phase)) {
                return Err(FeatureError::DuplicateMeter {
                    ccp: circuit.node_id(node).clone(),
                    phase,
                });
            }
            meters.push(Meter {
                ccp,
                phase,
                distance_m: circuit.distance_of(node),
                households_upstream: circuit.households_upstream_of(node),
            });
        }
        meters.sort_by(|a, b| {
            a.distance_m
                .total_cmp(&b.distance_m)
                .then_with(|| {
                    let na = circuit.node_id(circuit.ccp_nodes()[a.ccp]);
                    let nb = circuit.node_id(circuit.ccp_nodes()[b.ccp]);
                    na.cmp(nb)
                })
                .then(a.phase.cmp(&b.phase))
        });
        Ok(MeterSet { meters })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementStrategy {
    Random,
    KeyLocations,
    Explicit(Vec<(NodeId, Phase)>),
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("meter count {requested} out of range 1..={max}")]
    CountOutOfRange { requested: usize, max: usize },
    #[error("unknown ccp {0}")]
    UnknownCcp(String),
    #[error("no household on phase {phase} at ccp {ccp}")]
    UnoccupiedPhase { ccp: NodeId, phase: Phase },
    #[error("ccp {ccp} phase {phase} metered twice")]
    DuplicateMeter { ccp: NodeId, phase: Phase },
    #[error("at least two meters are needed, got {0}")]
    TooFewMeters(usize),
    #[error("series cover {got} steps, at least {needed} are needed")]
    InsufficientHistory { got: usize, needed: usize },
    #[error("meter at ccp #{ccp} phase {phase} has no data")]
    MeterNotInData { ccp: usize, phase: Phase },
    #[error("voltage and load series disagree: {0}")]
    ShapeMismatch(String),
}

/// One occupied phase picked uniformly per CCP.
fn random_phases(assignment: &PhaseAssignment, rng: &mut ChaCha8Rng) -> Vec<Phase> {
    (0..assignment.ccp_count())
        .map(|c| {
            let occupied = assignment.occupied_phases(c);
            occupied[rng.random_range(0..occupied.len())]
        })
        .collect()
}

/// Picks `count` metered CCP phases.
///
/// Each chosen CCP contributes one randomly picked occupied phase; only once
/// every CCP carries a meter do further phases of the same CCPs get one.
pub fn select_smart_meters(
    circuit: &Circuit,
    assignment: &PhaseAssignment,
    count: usize,
    strategy: &PlacementStrategy,
    seed: u64,
) -> Result<MeterSet, FeatureError> {
    if let PlacementStrategy::Explicit(list) = strategy {
        let pairs = list
            .iter()
            .map(|(id, phase)| {
                let node = circuit
                    .node_index(id)
                    .ok_or_else(|| FeatureError::UnknownCcp(format!("{id}")))?;
                let ccp = circuit
                    .ccp_at(node)
                    .ok_or_else(|| FeatureError::UnknownCcp(format!("{id}")))?;
                Ok((ccp, *phase))
            })
            .collect::<Result<Vec<_>, FeatureError>>()?;
        if pairs.len() != count {
            return Err(FeatureError::CountOutOfRange {
                requested: count,
                max: pairs.len(),
            });
        }
        return MeterSet::from_pairs(circuit, assignment, &pairs);
    }

    let occupied = assignment.occupied_ccp_phases();
    if count == 0 || count > occupied.len() {
        return Err(FeatureError::CountOutOfRange {
            requested: count,
            max: occupied.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase_of = random_phases(assignment, &mut rng);
    let ccp_order: Vec<usize> = match strategy {
        PlacementStrategy::Random => {
            let mut order: Vec<usize> = (0..assignment.ccp_count()).collect();
            order.shuffle(&mut rng);
            order
        }
        _ => key_location_order(circuit),
    };
    let mut pairs: Vec<(usize, Phase)> = ccp_order
        .iter()
        .take(count)
        .map(|&c| (c, phase_of[c]))
        .collect();
    if pairs.len() < count {
        let mut rest: Vec<(usize, Phase)> = ccp_order
            .iter()
            .flat_map(|&c| {
                let chosen = phase_of[c];
                assignment
                    .occupied_phases(c)
                    .into_iter()
                    .filter(move |&p| p != chosen)
                    .map(move |p| (c, p))
            })
            .collect();
        if matches!(strategy, PlacementStrategy::Random) {
            rest.shuffle(&mut rng);
        }
        pairs.extend(rest.into_iter().take(count - pairs.len()));
    }
    MeterSet::from_pairs(circuit, assignment, &pairs)
}

/// CCPs ranked for key-location metering: the first CCP from the source, the
/// first and last CCP on every branch, then the remaining CCPs nearest the
/// source first.
///
/// A branch is the run of nodes between a fork (the source or any node with
/// two or more children) and a leaf below it.
pub fn key_location_order(circuit: &Circuit) -> Vec<usize> {
    let tree = circuit.tree();
    let by_distance = |a: &usize, b: &usize| {
        let (na, nb) = (circuit.ccp_nodes()[*a], circuit.ccp_nodes()[*b]);
        circuit
            .distance_of(na)
            .total_cmp(&circuit.distance_of(nb))
            .then_with(|| circuit.node_id(na).cmp(circuit.node_id(nb)))
    };
    let mut all: Vec<usize> = (0..circuit.ccps().len()).collect();
    all.sort_by(by_distance);

    let is_fork = |n: usize| n == circuit.source() || tree.children(n).len() >= 2;
    // (fork distance, first ccp, last ccp)
    let mut branches: Vec<(f64, usize, usize)> = Vec::new();
    for &leaf in tree.order() {
        if !tree.children(leaf).is_empty() || leaf == circuit.source() {
            continue;
        }
        let mut on_branch = Vec::new();
        let mut node = leaf;
        while !is_fork(node) {
            if let Some(c) = circuit.ccp_at(node) {
                on_branch.push(c);
            }
            node = tree.parent(node).expect("non-source node has a parent");
        }
        if let (Some(&last), Some(&first)) = (on_branch.first(), on_branch.last()) {
            branches.push((circuit.distance_of(node), first, last));
        }
    }
    branches.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| by_distance(&a.1, &b.1))
            .then_with(|| by_distance(&a.2, &b.2))
    });

    let mut order = Vec::with_capacity(all.len());
    let push = |c: usize, order: &mut Vec<usize>| {
        if !order.contains(&c) {
            order.push(c);
        }
    };
    if let Some(&first) = all.first() {
        push(first, &mut order);
    }
    for &(_, first, last) in &branches {
        push(first, &mut order);
        push(last, &mut order);
    }
    for &c in &all {
        push(c, &mut order);
    }
    order
}

/// Median over meters of the tree-path distance to the nearest other meter.
pub fn median_inter_meter_distance(
    circuit: &Circuit,
    meters: &MeterSet,
) -> Result<f64, FeatureError> {
    if meters.len() < 2 {
        return Err(FeatureError::TooFewMeters(meters.len()));
    }
    let nodes: Vec<usize> = meters
        .meters()
        .iter()
        .map(|m| circuit.ccp_nodes()[m.ccp])
        .collect();
    let mut nearest: Vec<f64> = nodes
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &b)| circuit.tree_distance(a, b))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    nearest.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&nearest, 0.5))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Evaluation,
}

/// Shape of the input vector for a given meter count and power flag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub meters: usize,
    pub include_power: bool,
}

impl FeatureLayout {
    pub fn lags_per_meter(&self) -> usize {
        LAG_OFFSETS.len() * if self.include_power { 2 } else { 1 }
    }

    pub fn input_len(&self) -> usize {
        4 + self.meters * self.lags_per_meter() + self.meters * 2
    }

    /// Human-readable name of each input, in order.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = ["d_q", "h_q", "t_enc", "i_n"]
            .iter()
            .map(|s| String::from(*s))
            .collect();
        for m in 0..self.meters {
            for lag in LAG_OFFSETS {
                names.push(format!("m{m}_v_lag{lag}"));
            }
            if self.include_power {
                for lag in LAG_OFFSETS {
                    names.push(format!("m{m}_p_lag{lag}"));
                }
            }
        }
        for m in 0..self.meters {
            names.push(format!("m{m}_d"));
            names.push(format!("m{m}_h"));
        }
        names
    }

    /// Time offset relative to the measurement step of every input that reads
    /// a time series; `None` for static inputs.
    pub fn time_offsets(&self) -> Vec<Option<i64>> {
        let mut out = Vec::with_capacity(self.input_len());
        out.extend([None; 4]);
        for _ in 0..self.meters {
            out.extend(LAG_OFFSETS.iter().map(|&l| Some(l)));
            if self.include_power {
                out.extend(LAG_OFFSETS.iter().map(|&l| Some(l)));
            }
        }
        out.extend(core::iter::repeat(None).take(self.meters * 2));
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSample {
    /// Raw (unnormalised) inputs.
    pub inputs: Vec<f64>,
    /// Voltage of the query phase at `t + 1` (pu).
    pub target: f64,
    pub ccp: usize,
    pub phase: Phase,
    /// Measurement step.
    pub t: usize,
    pub split: Split,
}

/// Per-feature min–max scaling fitted on the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub input_min: Vec<f64>,
    pub input_max: Vec<f64>,
    pub target_min: f64,
    pub target_max: f64,
}

fn scale(x: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (x - lo) / (hi - lo)
    } else {
        0.0
    }
}

impl Normalizer {
    pub fn fit<'a>(samples: impl IntoIterator<Item = &'a FeatureSample>, n: usize) -> Normalizer {
        let mut norm = Normalizer {
            input_min: alloc::vec![f64::INFINITY; n],
            input_max: alloc::vec![f64::NEG_INFINITY; n],
            target_min: f64::INFINITY,
            target_max: f64::NEG_INFINITY,
        };
        for s in samples {
            for ((lo, hi), &x) in norm
                .input_min
                .iter_mut()
                .zip(norm.input_max.iter_mut())
                .zip(&s.inputs)
            {
                *lo = lo.min(x);
                *hi = hi.max(x);
            }
            norm.target_min = norm.target_min.min(s.target);
            norm.target_max = norm.target_max.max(s.target);
        }
        norm
    }

    pub fn normalize_inputs(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.input_min.iter().zip(&self.input_max))
            .map(|(&x, (&lo, &hi))| scale(x, lo, hi))
            .collect()
    }

    pub fn denormalize_inputs(&self, scaled: &[f64]) -> Vec<f64> {
        scaled
            .iter()
            .zip(self.input_min.iter().zip(&self.input_max))
            .map(|(&z, (&lo, &hi))| if hi > lo { lo + z * (hi - lo) } else { lo })
            .collect()
    }

    pub fn normalize_target(&self, v: f64) -> f64 {
        TARGET_OFFSET + scale(v, self.target_min, self.target_max)
    }

    pub fn denormalize_target(&self, z: f64) -> f64 {
        let range = self.target_max - self.target_min;
        if range > 0.0 {
            self.target_min + (z - TARGET_OFFSET) * range
        } else {
            self.target_min
        }
    }
}

/// First and last (exclusive) measurement steps of each split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitBoundaries {
    pub train: (usize, usize),
    pub validation: (usize, usize),
}

impl Default for SplitBoundaries {
    /// Training targets fall in days 1–7, validation/evaluation targets in
    /// days 8–14.
    fn default() -> Self {
        SplitBoundaries {
            train: (MIN_SAMPLE_STEP, STEPS_PER_WEEK - 1),
            validation: (STEPS_PER_WEEK - 1, 2 * STEPS_PER_WEEK - 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureDataset {
    pub layout: FeatureLayout,
    pub meters: MeterSet,
    pub impedance_ohm: f64,
    pub boundaries: SplitBoundaries,
    pub normalizer: Normalizer,
    pub samples: Vec<FeatureSample>,
}

impl FeatureDataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &FeatureSample> {
        self.samples.iter().filter(move |s| s.split == split)
    }
}

/// Encodes a step as half-hour-of-week / 336.
pub fn time_encoding(t: usize) -> f64 {
    (t % STEPS_PER_WEEK) as f64 / STEPS_PER_WEEK as f64
}

/// Builds train, validation and evaluation samples.
///
/// Train and validation targets are the metered phases only; evaluation
/// covers every occupied CCP phase over the validation window.
#[allow(clippy::too_many_arguments)]
pub fn build_dataset(
    voltages: &VoltageSeries,
    loads: &CcpPhaseLoad,
    meters: &MeterSet,
    circuit: &Circuit,
    assignment: &PhaseAssignment,
    impedance_ohm: f64,
    include_power: bool,
) -> Result<FeatureDataset, FeatureError> {
    let boundaries = SplitBoundaries::default();
    let needed = boundaries.validation.1 + 1;
    if voltages.steps < needed {
        return Err(FeatureError::InsufficientHistory {
            got: voltages.steps,
            needed,
        });
    }
    if include_power && loads.steps < voltages.steps {
        return Err(FeatureError::ShapeMismatch(format!(
            "{} load steps for {} voltage steps",
            loads.steps, voltages.steps
        )));
    }
    for m in meters.meters() {
        if m.ccp >= voltages.v_pu.len() || (include_power && m.ccp >= loads.p_kw.len()) {
            return Err(FeatureError::MeterNotInData {
                ccp: m.ccp,
                phase: m.phase,
            });
        }
    }
    if meters.is_empty() {
        return Err(FeatureError::CountOutOfRange {
            requested: 0,
            max: 0,
        });
    }
    let layout = FeatureLayout {
        meters: meters.len(),
        include_power,
    };

    let meter_block = |t: usize, out: &mut Vec<f64>| {
        for m in meters.meters() {
            let v = voltages.series(m.ccp, m.phase);
            out.extend(LAG_OFFSETS.iter().map(|&l| v[(t as i64 + l) as usize]));
            if include_power {
                let p = loads.series(m.ccp, m.phase);
                out.extend(LAG_OFFSETS.iter().map(|&l| p[(t as i64 + l) as usize]));
            }
        }
        for m in meters.meters() {
            out.push(m.distance_m);
            out.push(f64::from(m.households_upstream));
        }
    };

    let all_targets = assignment.occupied_ccp_phases();
    let metered: Vec<(usize, Phase)> = meters.meters().iter().map(|m| (m.ccp, m.phase)).collect();
    let mut sorted_metered = metered.clone();
    sorted_metered.sort();

    let mut samples = Vec::new();
    let mut emit = |split: Split, range: (usize, usize), targets: &[(usize, Phase)]| {
        for t in range.0..range.1 {
            let mut shared = Vec::with_capacity(layout.input_len() - 4);
            meter_block(t, &mut shared);
            for &(ccp, phase) in targets {
                let node = circuit.ccp_nodes()[ccp];
                let mut inputs = Vec::with_capacity(layout.input_len());
                inputs.push(circuit.distance_of(node));
                inputs.push(f64::from(circuit.households_upstream_of(node)));
                inputs.push(time_encoding(t));
                inputs.push(impedance_ohm);
                inputs.extend_from_slice(&shared);
                samples.push(FeatureSample {
                    inputs,
                    target: voltages.series(ccp, phase)[t + 1],
                    ccp,
                    phase,
                    t,
                    split,
                });
            }
        }
    };
    emit(Split::Train, boundaries.train, &sorted_metered);
    emit(Split::Validation, boundaries.validation, &sorted_metered);
    emit(Split::Evaluation, boundaries.validation, &all_targets);

    let normalizer = Normalizer::fit(
        samples.iter().filter(|s| s.split == Split::Train),
        layout.input_len(),
    );
    Ok(FeatureDataset {
        layout,
        meters: meters.clone(),
        impedance_ohm,
        boundaries,
        normalizer,
        samples,
    })
}
