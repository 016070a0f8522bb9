//! Seeded synthetic domestic demand and its lumping onto CCP phases.
//!
//! Each household runs a two-state occupancy chain at half-hour resolution.
//! While active it starts appliance events from a small fixed catalogue, more
//! often in the morning and evening peaks. On top of that sits a constant
//! standby load. Households draw from independent ChaCha streams keyed by
//! their ordinal, so the output depends only on `(circuit, seed, days)`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, PropertyKind};
use crate::{STEPS_PER_DAY, STEP_MINUTES};

/// Minimum horizon: one training week plus one validation week.
pub const MIN_DAYS: u32 = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Phase {
    L1,
    L2,
    L3,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::L1, Phase::L2, Phase::L3];

    /// Zero-based index.
    pub fn index(self) -> usize {
        match self {
            Phase::L1 => 0,
            Phase::L2 => 1,
            Phase::L3 => 2,
        }
    }

    /// One-based phase number as used in files.
    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn from_index(i: usize) -> Option<Phase> {
        Phase::ALL.get(i).copied()
    }
}

impl From<Phase> for u8 {
    fn from(p: Phase) -> u8 {
        p.number()
    }
}

impl TryFrom<u8> for Phase {
    type Error = InvalidPhase;

    fn try_from(n: u8) -> Result<Self, Self::Error> {
        match n {
            1 => Ok(Phase::L1),
            2 => Ok(Phase::L2),
            3 => Ok(Phase::L3),
            _ => Err(InvalidPhase(n)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("phase must be 1, 2 or 3, got {0}")]
pub struct InvalidPhase(pub u8);

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// One appliance in the event catalogue.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Appliance {
    pub kw: f64,
    pub slots: u32,
}

/// Half-open window `[start_slot, end_slot)` within a day.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotWindow {
    pub start_slot: u32,
    pub end_slot: u32,
    pub value: f64,
}

impl SlotWindow {
    fn contains(&self, slot: u32) -> bool {
        (self.start_slot..self.end_slot).contains(&slot)
    }
}

/// All constants of the synthetic demand generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandConfig {
    pub standby_kw_min: f64,
    pub standby_kw_max: f64,
    pub appliances: Vec<Appliance>,
    /// Stationary probability of being active, by time of day. Slots outside
    /// every window use `base_active`.
    pub active_windows: Vec<SlotWindow>,
    pub base_active: f64,
    /// Fraction of the gap to the stationary probability closed per step.
    pub occupancy_mixing: f64,
    /// Per-appliance start probability per active slot.
    pub event_rate: f64,
    /// Multiplier on `event_rate`; `value` holds the multiplier.
    pub peak_windows: Vec<SlotWindow>,
    /// Expected band for mean household daily energy (kWh).
    pub daily_energy_band_kwh: (f64, f64),
}

impl Default for DemandConfig {
    fn default() -> Self {
        let w = |start_slot, end_slot, value| SlotWindow {
            start_slot,
            end_slot,
            value,
        };
        DemandConfig {
            standby_kw_min: 0.05,
            standby_kw_max: 0.15,
            appliances: vec![
                Appliance { kw: 2.0, slots: 1 },
                Appliance { kw: 0.5, slots: 3 },
                Appliance { kw: 1.5, slots: 2 },
            ],
            active_windows: vec![
                w(0, 13, 0.05),
                w(13, 18, 0.8),
                w(18, 34, 0.45),
                w(34, 44, 0.9),
                w(44, 48, 0.4),
            ],
            base_active: 0.45,
            occupancy_mixing: 0.5,
            event_rate: 0.04,
            // 07:00-09:00 and 17:00-21:00
            peak_windows: vec![w(14, 18, 3.0), w(34, 42, 3.0)],
            daily_energy_band_kwh: (5.0, 15.0),
        }
    }
}

impl DemandConfig {
    fn active_probability(&self, slot: u32) -> f64 {
        self.active_windows
            .iter()
            .find(|w| w.contains(slot))
            .map_or(self.base_active, |w| w.value)
    }

    fn rate_multiplier(&self, slot: u32) -> f64 {
        self.peak_windows
            .iter()
            .find(|w| w.contains(slot))
            .map_or(1.0, |w| w.value)
    }
}

/// Which phase each household of each CCP is connected to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseAssignment {
    /// Per CCP (circuit order), household indices on each phase.
    per_ccp: Vec<[Vec<u32>; 3]>,
}

impl PhaseAssignment {
    /// Builds an assignment from explicit household-to-phase lists.
    pub fn from_lists(per_ccp: Vec<[Vec<u32>; 3]>) -> Self {
        PhaseAssignment { per_ccp }
    }

    pub fn ccp_count(&self) -> usize {
        self.per_ccp.len()
    }

    pub fn households_on(&self, ccp: usize, phase: Phase) -> &[u32] {
        &self.per_ccp[ccp][phase.index()]
    }

    pub fn phase_of(&self, ccp: usize, household: u32) -> Option<Phase> {
        let lists = self.per_ccp.get(ccp)?;
        Phase::ALL
            .into_iter()
            .find(|p| lists[p.index()].contains(&household))
    }

    pub fn occupied_phases(&self, ccp: usize) -> Vec<Phase> {
        Phase::ALL
            .into_iter()
            .filter(|p| !self.per_ccp[ccp][p.index()].is_empty())
            .collect()
    }

    /// All occupied `(ccp, phase)` pairs in CCP order then phase order.
    pub fn occupied_ccp_phases(&self) -> Vec<(usize, Phase)> {
        (0..self.per_ccp.len())
            .flat_map(|c| self.occupied_phases(c).into_iter().map(move |p| (c, p)))
            .collect()
    }
}

/// Spreads households over phases.
///
/// Multi-household CCPs with `H = 3k + r` get `k` households per phase plus
/// one extra on each of the first `r` phases. Single-household CCPs land on a
/// phase drawn uniformly from the seeded stream.
pub fn assign_phases(circuit: &Circuit, seed: u64) -> PhaseAssignment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_ccp = circuit
        .ccps()
        .iter()
        .map(|ccp| {
            let mut lists: [Vec<u32>; 3] = Default::default();
            match ccp.kind {
                PropertyKind::Single => {
                    let phase = rng.random_range(0..3usize);
                    lists[phase].push(0);
                }
                PropertyKind::Multi => {
                    let (k, r) = (ccp.households / 3, ccp.households % 3);
                    let mut next = 0;
                    for (p, list) in lists.iter_mut().enumerate() {
                        let n = k + u32::from((p as u32) < r);
                        list.extend(next..next + n);
                        next += n;
                    }
                }
            }
            lists
        })
        .collect();
    PhaseAssignment { per_ccp }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HouseholdProfile {
    /// CCP index in circuit order.
    pub ccp: usize,
    /// Household index within the CCP.
    pub household: u32,
    /// Active power per half-hour step (kW).
    pub p_kw: Vec<f64>,
}

/// Per-household half-hourly active power over the horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandSeries {
    pub days: u32,
    pub households: Vec<HouseholdProfile>,
}

impl DemandSeries {
    pub fn steps(&self) -> usize {
        self.days as usize * STEPS_PER_DAY
    }

    pub fn step_minutes(&self) -> u32 {
        STEP_MINUTES
    }

    /// Grand mean of per-household daily energy (kWh).
    pub fn mean_daily_energy_kwh(&self) -> f64 {
        if self.households.is_empty() || self.days == 0 {
            return 0.0;
        }
        let hours_per_step = f64::from(STEP_MINUTES) / 60.0;
        let total: f64 = self
            .households
            .iter()
            .map(|h| h.p_kw.iter().sum::<f64>() * hours_per_step)
            .sum();
        total / (self.households.len() as f64 * f64::from(self.days))
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum DemandError {
    #[error("horizon of {0} days is shorter than the {MIN_DAYS}-day minimum")]
    HorizonTooShort(u32),
    #[error("household {household} of ccp {ccp} has no phase assignment")]
    MissingAssignment { ccp: usize, household: u32 },
    #[error("household {household} of ccp {ccp} has {got} steps, expected {expected}")]
    LengthMismatch {
        ccp: usize,
        household: u32,
        got: usize,
        expected: usize,
    },
}

pub fn generate_profiles(
    circuit: &Circuit,
    seed: u64,
    days: u32,
    config: &DemandConfig,
) -> Result<DemandSeries, DemandError> {
    if days < MIN_DAYS {
        return Err(DemandError::HorizonTooShort(days));
    }
    let steps = days as usize * STEPS_PER_DAY;
    let mut households = Vec::with_capacity(circuit.total_households() as usize);
    let mut ordinal = 0u64;
    for (c, ccp) in circuit.ccps().iter().enumerate() {
        for h in 0..ccp.households {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Stream 0 is left for other consumers of the same seed.
            rng.set_stream(ordinal + 1);
            ordinal += 1;
            households.push(HouseholdProfile {
                ccp: c,
                household: h,
                p_kw: household_profile(&mut rng, steps, config),
            });
        }
    }
    Ok(DemandSeries { days, households })
}

fn household_profile(rng: &mut ChaCha8Rng, steps: usize, config: &DemandConfig) -> Vec<f64> {
    let standby = config.standby_kw_min
        + (config.standby_kw_max - config.standby_kw_min) * rng.random::<f64>();
    let mut p = vec![standby; steps];
    let mut active = rng.random::<f64>() < config.active_probability(0);
    for t in 0..steps {
        let slot = (t % STEPS_PER_DAY) as u32;
        let target = config.active_probability(slot);
        let u: f64 = rng.random();
        active = if active {
            u >= (1.0 - target) * config.occupancy_mixing
        } else {
            u < target * config.occupancy_mixing
        };
        let rate = config.event_rate * config.rate_multiplier(slot);
        for appliance in &config.appliances {
            // Draw unconditionally so the stream advances identically.
            let u: f64 = rng.random();
            if active && u < rate {
                let end = (t + appliance.slots as usize).min(steps);
                for v in &mut p[t..end] {
                    *v += appliance.kw;
                }
            }
        }
    }
    p
}

/// Lumped active power per CCP phase, with zeros on unoccupied phases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcpPhaseLoad {
    pub steps: usize,
    /// `p_kw[ccp][phase][t]`.
    pub p_kw: Vec<[Vec<f64>; 3]>,
}

impl CcpPhaseLoad {
    pub fn zeros(ccps: usize, steps: usize) -> Self {
        CcpPhaseLoad {
            steps,
            p_kw: (0..ccps)
                .map(|_| [vec![0.0; steps], vec![0.0; steps], vec![0.0; steps]])
                .collect(),
        }
    }

    pub fn series(&self, ccp: usize, phase: Phase) -> &[f64] {
        &self.p_kw[ccp][phase.index()]
    }

    /// Loads of every CCP phase at one step.
    pub fn at_step(&self, t: usize) -> Vec<[f64; 3]> {
        self.p_kw
            .iter()
            .map(|ph| [ph[0][t], ph[1][t], ph[2][t]])
            .collect()
    }
}

pub fn aggregate_to_ccp_phase(
    profiles: &DemandSeries,
    assignment: &PhaseAssignment,
) -> Result<CcpPhaseLoad, DemandError> {
    let steps = profiles.steps();
    let mut load = CcpPhaseLoad::zeros(assignment.ccp_count(), steps);
    for h in &profiles.households {
        let phase =
            assignment
                .phase_of(h.ccp, h.household)
                .ok_or(DemandError::MissingAssignment {
                    ccp: h.ccp,
                    household: h.household,
                })?;
        if h.p_kw.len() != steps {
            return Err(DemandError::LengthMismatch {
                ccp: h.ccp,
                household: h.household,
                got: h.p_kw.len(),
                expected: steps,
            });
        }
        for (acc, &p) in load.p_kw[h.ccp][phase.index()].iter_mut().zip(&h.p_kw) {
            *acc += p;
        }
    }
    Ok(load)
}
