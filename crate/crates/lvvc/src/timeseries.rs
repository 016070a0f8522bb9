//! Half-hourly demand and voltage CSV files.
//!
//! ```text
//! timestamp,ccp_id,phase,household_idx,p_kw
//! timestamp,ccp_id,phase,v_pu
//! ```
//!
//! Timestamps are RFC 3339 on a 30-minute grid; phases are written `1`..`3`
//! (`L1`..`L3` is accepted on input).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Duration, SecondsFormat, Utc};
use lvvc_core::circuit::Circuit;
use lvvc_core::demand::{DemandSeries, HouseholdProfile, Phase, PhaseAssignment, MIN_DAYS};
use lvvc_core::powerflow::VoltageSeries;
use lvvc_core::{STEPS_PER_DAY, STEP_MINUTES};

use crate::error::{Error, Result};
use crate::fsio;

/// A Monday, so the weekly time encoding starts at zero.
pub const DEFAULT_START: &str = "2019-01-07T00:00:00Z";

pub fn parse_timestamp(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("bad timestamp {s:?}: {e}"))
}

pub fn default_start() -> DateTime<Utc> {
    parse_timestamp(DEFAULT_START).expect("valid constant")
}

fn step_duration() -> Duration {
    Duration::minutes(i64::from(STEP_MINUTES))
}

pub fn timestamp(start: DateTime<Utc>, step: usize) -> String {
    (start + step_duration() * step as i32).to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn parse_phase(s: &str) -> Option<Phase> {
    let s = s.trim();
    let digit = s.strip_prefix('L').unwrap_or(s);
    match digit {
        "1" => Some(Phase::L1),
        "2" => Some(Phase::L2),
        "3" => Some(Phase::L3),
        _ => None,
    }
}

fn ccp_lookup(circuit: &Circuit) -> BTreeMap<&str, usize> {
    circuit
        .ccps()
        .iter()
        .enumerate()
        .map(|(i, c)| (c.node.as_str(), i))
        .collect()
}

/// Rows of a time-series CSV with the timestamp already mapped to a step.
struct Rows<'a> {
    path: &'a Path,
    rows: Vec<(u64, usize, Vec<String>)>,
    start: DateTime<Utc>,
    steps: usize,
}

fn read_rows<'a>(path: &'a Path, header: &[&str]) -> Result<Rows<'a>> {
    let text = fsio::read_string(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let got: Vec<String> = reader
        .headers()
        .map_err(|e| Error::format(path, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if got != header {
        return Err(Error::format(
            path,
            1,
            format!(
                "expected header {}, found {}",
                header.join(","),
                got.join(",")
            ),
        ));
    }
    let mut raw = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::format(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let ts = parse_timestamp(&record[0]).map_err(|m| Error::format(path, line, m))?;
        raw.push((
            line,
            ts,
            record.iter().skip(1).map(str::to_string).collect(),
        ));
    }
    let start = raw
        .iter()
        .map(|r| r.1)
        .min()
        .ok_or_else(|| Error::format(path, 2, "no data rows"))?;
    let step_secs = step_duration().num_seconds();
    let mut rows = Vec::with_capacity(raw.len());
    let mut steps = 0;
    for (line, ts, rest) in raw {
        let offset = (ts - start).num_seconds();
        if offset % step_secs != 0 {
            return Err(Error::format(
                path,
                line,
                format!("timestamp is off the {STEP_MINUTES}-minute grid starting {start}"),
            ));
        }
        let step = (offset / step_secs) as usize;
        steps = steps.max(step + 1);
        rows.push((line, step, rest));
    }
    if steps % STEPS_PER_DAY != 0 {
        return Err(Error::format(
            path,
            0,
            format!("{steps} half-hour steps is not a whole number of days"),
        ));
    }
    Ok(Rows {
        path,
        rows,
        start,
        steps,
    })
}

fn resolve_ccp(rows: &Rows, ccps: &BTreeMap<&str, usize>, line: u64, id: &str) -> Result<usize> {
    ccps.get(id).copied().ok_or_else(|| {
        Error::format(
            rows.path,
            line,
            format!("{id:?} is not a CCP of the circuit"),
        )
    })
}

fn parse_value(path: &Path, line: u64, field: &str, s: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::format(path, line, format!("bad {field} value {s:?}")))?;
    if !v.is_finite() {
        return Err(Error::format(path, line, format!("non-finite {field}")));
    }
    Ok(v)
}

pub fn write_demand_csv(
    path: &Path,
    circuit: &Circuit,
    assignment: &PhaseAssignment,
    demand: &DemandSeries,
    start: DateTime<Utc>,
) -> Result<()> {
    let mut households: Vec<(&HouseholdProfile, Phase)> = Vec::new();
    for h in &demand.households {
        let phase = assignment.phase_of(h.ccp, h.household).ok_or(
            lvvc_core::demand::DemandError::MissingAssignment {
                ccp: h.ccp,
                household: h.household,
            },
        )?;
        households.push((h, phase));
    }
    fsio::write_atomic(path, |w: &mut dyn Write| {
        let mut csv = csv::Writer::from_writer(w);
        let err = fsio::csv_to_write(path);
        csv.write_record(["timestamp", "ccp_id", "phase", "household_idx", "p_kw"])
            .map_err(err)?;
        for t in 0..demand.steps() {
            let ts = timestamp(start, t);
            for (h, phase) in &households {
                let id = circuit.ccps()[h.ccp].node.as_str();
                csv.write_record([
                    ts.as_str(),
                    id,
                    &phase.number().to_string(),
                    &h.household.to_string(),
                    &h.p_kw[t].to_string(),
                ])
                .map_err(fsio::csv_to_write(path))?;
            }
        }
        csv.flush().map_err(fsio::io_to_write(path))
    })
}

/// Household demand read back from CSV, together with the phase each
/// household is connected to.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandFile {
    pub demand: DemandSeries,
    pub assignment: PhaseAssignment,
    pub start: DateTime<Utc>,
}

pub fn read_demand_csv(path: &Path, circuit: &Circuit) -> Result<DemandFile> {
    let rows = read_rows(
        path,
        &["timestamp", "ccp_id", "phase", "household_idx", "p_kw"],
    )?;
    let days = (rows.steps / STEPS_PER_DAY) as u32;
    if days < MIN_DAYS {
        return Err(Error::format(
            path,
            0,
            format!("{days} days of demand; at least {MIN_DAYS} are needed"),
        ));
    }
    let ccps = ccp_lookup(circuit);
    // Keyed by (ccp, household): phase and per-step values.
    let mut series: BTreeMap<(usize, u32), (Phase, Vec<Option<f64>>)> = BTreeMap::new();
    for (line, step, fields) in &rows.rows {
        let line = *line;
        let ccp = resolve_ccp(&rows, &ccps, line, &fields[0])?;
        let phase = parse_phase(&fields[1])
            .ok_or_else(|| Error::format(path, line, format!("bad phase {:?}", fields[1])))?;
        let household: u32 = fields[2]
            .parse()
            .map_err(|_| Error::format(path, line, format!("bad household_idx {:?}", fields[2])))?;
        if household >= circuit.ccps()[ccp].households {
            return Err(Error::format(
                path,
                line,
                format!(
                    "household_idx {household} but CCP {} has {} households",
                    fields[0],
                    circuit.ccps()[ccp].households
                ),
            ));
        }
        let p = parse_value(path, line, "p_kw", &fields[3])?;
        if p < 0.0 {
            return Err(Error::format(path, line, "negative p_kw"));
        }
        let entry = series
            .entry((ccp, household))
            .or_insert_with(|| (phase, vec![None; rows.steps]));
        if entry.0 != phase {
            return Err(Error::format(
                path,
                line,
                format!("household {household} of {} changes phase", fields[0]),
            ));
        }
        if entry.1[*step].replace(p).is_some() {
            return Err(Error::format(path, line, "duplicate row"));
        }
    }
    let mut per_ccp: Vec<[Vec<u32>; 3]> = vec![Default::default(); circuit.ccps().len()];
    let mut households = Vec::new();
    for (c, ccp) in circuit.ccps().iter().enumerate() {
        for h in 0..ccp.households {
            let (phase, values) = series.remove(&(c, h)).ok_or_else(|| {
                Error::format(
                    path,
                    0,
                    format!("no rows for household {h} of {}", ccp.node),
                )
            })?;
            let p_kw = values
                .into_iter()
                .enumerate()
                .map(|(t, v)| {
                    v.ok_or_else(|| {
                        Error::format(
                            path,
                            0,
                            format!(
                                "household {h} of {} has no value at {}",
                                ccp.node,
                                timestamp(rows.start, t)
                            ),
                        )
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            per_ccp[c][phase.index()].push(h);
            households.push(HouseholdProfile {
                ccp: c,
                household: h,
                p_kw,
            });
        }
    }
    Ok(DemandFile {
        demand: DemandSeries { days, households },
        assignment: PhaseAssignment::from_lists(per_ccp),
        start: rows.start,
    })
}

/// Writes every CCP and all three phases, including unoccupied ones.
pub fn write_voltage_csv(
    path: &Path,
    circuit: &Circuit,
    voltages: &VoltageSeries,
    start: DateTime<Utc>,
) -> Result<()> {
    fsio::write_atomic(path, |w: &mut dyn Write| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["timestamp", "ccp_id", "phase", "v_pu"])
            .map_err(fsio::csv_to_write(path))?;
        for t in 0..voltages.steps {
            let ts = timestamp(start, t);
            for (c, ccp) in circuit.ccps().iter().enumerate() {
                for phase in Phase::ALL {
                    csv.write_record([
                        ts.as_str(),
                        ccp.node.as_str(),
                        &phase.number().to_string(),
                        &voltages.series(c, phase)[t].to_string(),
                    ])
                    .map_err(fsio::csv_to_write(path))?;
                }
            }
        }
        csv.flush().map_err(fsio::io_to_write(path))
    })
}

/// Reads a voltage CSV; every CCP of the circuit must be present on all
/// three phases at every step.
pub fn read_voltage_csv(path: &Path, circuit: &Circuit) -> Result<(VoltageSeries, DateTime<Utc>)> {
    let rows = read_rows(path, &["timestamp", "ccp_id", "phase", "v_pu"])?;
    let ccps = ccp_lookup(circuit);
    let mut v: Vec<[Vec<Option<f64>>; 3]> = (0..circuit.ccps().len())
        .map(|_| std::array::from_fn(|_| vec![None; rows.steps]))
        .collect();
    for (line, step, fields) in &rows.rows {
        let line = *line;
        let ccp = resolve_ccp(&rows, &ccps, line, &fields[0])?;
        let phase = parse_phase(&fields[1])
            .ok_or_else(|| Error::format(path, line, format!("bad phase {:?}", fields[1])))?;
        let value = parse_value(path, line, "v_pu", &fields[2])?;
        if value <= 0.0 {
            return Err(Error::format(path, line, "v_pu must be positive"));
        }
        if v[ccp][phase.index()][*step].replace(value).is_some() {
            return Err(Error::format(path, line, "duplicate row"));
        }
    }
    let mut v_pu = Vec::with_capacity(v.len());
    for (c, phases) in v.into_iter().enumerate() {
        let mut out: [Vec<f64>; 3] = Default::default();
        for (p, series) in phases.into_iter().enumerate() {
            out[p] = series
                .into_iter()
                .enumerate()
                .map(|(t, x)| {
                    x.ok_or_else(|| {
                        Error::format(
                            path,
                            0,
                            format!(
                                "no voltage for {} phase {} at {}",
                                circuit.ccps()[c].node,
                                p + 1,
                                timestamp(rows.start, t)
                            ),
                        )
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
        }
        v_pu.push(out);
    }
    Ok((
        VoltageSeries {
            steps: rows.steps,
            v_pu,
        },
        rows.start,
    ))
}
