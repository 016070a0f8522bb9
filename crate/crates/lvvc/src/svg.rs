//! Box-whisker and line plots of experiment rows as standalone SVG.
//!
//! Boxes span the quartiles, a tick marks the median and whiskers span the
//! ±2.698σ band. Errors are drawn in volts.

use std::collections::BTreeSet;
use std::fmt::Write;

use lvvc_core::experiments::ExperimentRow;
use lvvc_core::stats::ErrorStats;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 460.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 90.0;

pub const WITH_POWER: &str = "#1f5fbf";
pub const WITHOUT_POWER: &str = "#c8322d";
const PALETTE: [&str; 6] = [
    "#1f5fbf", "#c8322d", "#2a9d46", "#8a4fbf", "#d98a1a", "#3b3b3b",
];

fn colour(with_power: bool) -> &'static str {
    if with_power {
        WITH_POWER
    } else {
        WITHOUT_POWER
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Tick spacing of 1, 2 or 5 times a power of ten giving about `target`
/// intervals.
fn nice_step(range: f64, target: f64) -> f64 {
    if !(range > 0.0) {
        return 1.0;
    }
    let raw = range / target;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let m = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn decimals(step: f64) -> usize {
    if step >= 1.0 {
        0
    } else {
        (-step.log10().floor()) as usize
    }
}

struct YAxis {
    lo: f64,
    hi: f64,
    step: f64,
}

impl YAxis {
    fn fit(values: impl IntoIterator<Item = f64>) -> YAxis {
        let (mut lo, mut hi) = (0.0f64, f64::NEG_INFINITY);
        for v in values.into_iter().filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !(hi > lo) {
            hi = lo + 1.0;
        }
        let step = nice_step(hi - lo, 6.0);
        YAxis {
            lo: (lo / step).floor() * step,
            hi: (hi / step).ceil() * step,
            step,
        }
    }

    fn y(&self, v: f64) -> f64 {
        let plot = HEIGHT - TOP - BOTTOM;
        TOP + plot * (1.0 - (v - self.lo) / (self.hi - self.lo))
    }
}

struct Canvas {
    out: String,
}

impl Canvas {
    fn new(title: &str) -> Canvas {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(
            out,
            r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            (LEFT + WIDTH - RIGHT) / 2.0,
            escape(title)
        );
        Canvas { out }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64, extra: &str) {
        let _ = writeln!(
            self.out,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}" stroke-width="{width}"{extra}/>"#
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, body: &str, extra: &str) {
        let _ = writeln!(
            self.out,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}"{extra}>{}</text>"#,
            escape(body)
        );
    }

    fn axes(&mut self, y: &YAxis, x_label: &str, y_label: &str) {
        let (x0, x1) = (LEFT, WIDTH - RIGHT);
        let d = decimals(y.step);
        let ticks = ((y.hi - y.lo) / y.step).round() as i64;
        for i in 0..=ticks {
            let v = y.lo + i as f64 * y.step;
            let py = y.y(v);
            self.line(x0, py, x1, py, "#dddddd", 1.0, "");
            self.text(x0 - 6.0, py + 4.0, "end", &format!("{v:.d$}"), "");
        }
        self.line(x0, TOP, x0, HEIGHT - BOTTOM, "black", 1.0, "");
        self.line(x0, HEIGHT - BOTTOM, x1, HEIGHT - BOTTOM, "black", 1.0, "");
        self.text((x0 + x1) / 2.0, HEIGHT - 20.0, "middle", x_label, "");
        let cy = (TOP + HEIGHT - BOTTOM) / 2.0;
        self.text(
            20.0,
            cy,
            "middle",
            y_label,
            &format!(r#" transform="rotate(-90 20 {cy:.2})""#),
        );
    }

    fn x_label(&mut self, x: f64, lines: &[String]) {
        for (i, l) in lines.iter().enumerate() {
            self.text(x, HEIGHT - BOTTOM + 18.0 + 14.0 * i as f64, "middle", l, "");
        }
    }

    fn boxplot(&mut self, x: f64, half: f64, s: &ErrorStats, y: &YAxis, stroke: &str) {
        let cap = half * 0.6;
        self.line(x, y.y(s.lower), x, y.y(s.upper), stroke, 1.0, "");
        self.line(
            x - cap,
            y.y(s.lower),
            x + cap,
            y.y(s.lower),
            stroke,
            1.0,
            "",
        );
        self.line(
            x - cap,
            y.y(s.upper),
            x + cap,
            y.y(s.upper),
            stroke,
            1.0,
            "",
        );
        let (top, bottom) = (y.y(s.q3), y.y(s.q1));
        let _ = writeln!(
            self.out,
            r#"<rect x="{:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{stroke}" fill-opacity="0.25" stroke="{stroke}"/>"#,
            x - half,
            2.0 * half,
            (bottom - top).max(0.5)
        );
        self.line(
            x - half,
            y.y(s.median),
            x + half,
            y.y(s.median),
            stroke,
            2.5,
            "",
        );
    }

    fn dot(&mut self, x: f64, y: f64, fill: &str) {
        let _ = writeln!(
            self.out,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{fill}"/>"#
        );
    }

    fn asterisk(&mut self, x: f64, y: f64, stroke: &str) {
        let r = 5.0;
        self.line(x - r, y, x + r, y, stroke, 1.5, "");
        let (dx, dy) = (r * 0.5, r * 0.866);
        self.line(x - dx, y - dy, x + dx, y + dy, stroke, 1.5, "");
        self.line(x - dx, y + dy, x + dx, y - dy, stroke, 1.5, "");
    }

    fn triangle(&mut self, x: f64, y: f64, stroke: &str) {
        let _ = writeln!(
            self.out,
            r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="none" stroke="{stroke}" stroke-width="1.5"/>"#,
            x,
            y - 5.0,
            x - 5.0,
            y + 4.0,
            x + 5.0,
            y + 4.0
        );
    }

    fn polyline(&mut self, points: &[(f64, f64)], stroke: &str, extra: &str) {
        if points.len() < 2 {
            return;
        }
        let pts: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{x:.2},{y:.2}"))
            .collect();
        let _ = writeln!(
            self.out,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="1.5"{extra}/>"#,
            pts.join(" ")
        );
    }

    fn legend(&mut self, entries: &[(&str, &str, Marker)]) {
        let x = WIDTH - RIGHT + 16.0;
        for (i, (label, col, marker)) in entries.iter().enumerate() {
            let y = TOP + 10.0 + 20.0 * i as f64;
            match marker {
                Marker::Box => {
                    let _ = writeln!(
                        self.out,
                        r#"<rect x="{:.2}" y="{:.2}" width="12" height="10" fill="{col}" fill-opacity="0.25" stroke="{col}"/>"#,
                        x,
                        y - 5.0
                    );
                }
                Marker::Dot => self.dot(x + 6.0, y, col),
                Marker::Asterisk => self.asterisk(x + 6.0, y, col),
                Marker::Triangle => self.triangle(x + 6.0, y, col),
            }
            self.text(x + 20.0, y + 4.0, "start", label, "");
        }
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

#[derive(Clone, Copy)]
enum Marker {
    Box,
    Dot,
    Asterisk,
    Triangle,
}

fn slot_x(i: usize, slots: usize) -> (f64, f64) {
    let w = (WIDTH - RIGHT - LEFT) / slots.max(1) as f64;
    (LEFT + w * (i as f64 + 0.5), w)
}

fn whisker_axis<'a>(rows: impl IntoIterator<Item = &'a ExperimentRow>) -> YAxis {
    YAxis::fit(
        rows.into_iter()
            .flat_map(|r| [r.model_volts.lower, r.model_volts.upper]),
    )
}

fn circuit_names(rows: &[ExperimentRow]) -> String {
    let ids: BTreeSet<&str> = rows.iter().map(|r| r.circuit_id.as_str()).collect();
    ids.into_iter().collect::<Vec<_>>().join(", ")
}

/// Error distribution per meter count, both power modes side by side, with
/// medians joined across counts.
pub fn coverage_plot(rows: &[ExperimentRow]) -> String {
    let counts: Vec<usize> = rows
        .iter()
        .map(|r| r.meters)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let y = whisker_axis(rows);
    let mut c = Canvas::new(&format!(
        "Prediction error by meter count ({})",
        circuit_names(rows)
    ));
    c.axes(&y, "smart meters C", "absolute error (V)");
    let mut medians: [Vec<(f64, f64)>; 2] = [Vec::new(), Vec::new()];
    for (i, &count) in counts.iter().enumerate() {
        let (cx, w) = slot_x(i, counts.len());
        let mut group: Vec<&ExperimentRow> = rows.iter().filter(|r| r.meters == count).collect();
        group.sort_by_key(|r| (!r.with_power, r.placement_seed));
        let step = w * 0.8 / group.len().max(1) as f64;
        let half = (step * 0.35).min(14.0);
        for power in [true, false] {
            let mine: Vec<f64> = group
                .iter()
                .enumerate()
                .filter(|(_, r)| r.with_power == power)
                .map(|(j, r)| {
                    let x = cx - w * 0.4 + step * (j as f64 + 0.5);
                    c.boxplot(x, half, &r.model_volts, &y, colour(power));
                    r.model_volts.median
                })
                .collect();
            if !mine.is_empty() {
                let m = mine.iter().sum::<f64>() / mine.len() as f64;
                medians[usize::from(power)].push((cx, y.y(m)));
            }
        }
        c.x_label(cx, &[count.to_string()]);
    }
    c.polyline(&medians[1], WITH_POWER, "");
    c.polyline(&medians[0], WITHOUT_POWER, r#" stroke-dasharray="5 3""#);
    c.legend(&[
        ("with power", WITH_POWER, Marker::Box),
        ("without power", WITHOUT_POWER, Marker::Box),
    ]);
    c.finish()
}

/// Mean error against meter count for one or more circuits.
pub fn mean_error_plot(rows: &[ExperimentRow]) -> String {
    let counts: Vec<usize> = rows
        .iter()
        .map(|r| r.meters)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let circuits: Vec<&str> = rows
        .iter()
        .map(|r| r.circuit_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let y = YAxis::fit(rows.iter().map(|r| r.model_volts.mean));
    let mut c = Canvas::new("Mean prediction error by meter count");
    c.axes(&y, "smart meters C", "mean absolute error (V)");
    for (i, &count) in counts.iter().enumerate() {
        c.x_label(slot_x(i, counts.len()).0, &[count.to_string()]);
    }
    let mut legend: Vec<(String, &str, Marker)> = Vec::new();
    for (k, circuit) in circuits.iter().enumerate() {
        let col = PALETTE[k % PALETTE.len()];
        for power in [true, false] {
            let mut pts = Vec::new();
            for (i, &count) in counts.iter().enumerate() {
                let means: Vec<f64> = rows
                    .iter()
                    .filter(|r| {
                        r.circuit_id == *circuit && r.meters == count && r.with_power == power
                    })
                    .map(|r| r.model_volts.mean)
                    .collect();
                if means.is_empty() {
                    continue;
                }
                let m = means.iter().sum::<f64>() / means.len() as f64;
                let (x, py) = (slot_x(i, counts.len()).0, y.y(m));
                if power {
                    c.dot(x, py, col);
                } else {
                    c.asterisk(x, py, col);
                }
                pts.push((x, py));
            }
            if pts.is_empty() {
                continue;
            }
            let dash = if power {
                ""
            } else {
                r#" stroke-dasharray="5 3""#
            };
            c.polyline(&pts, col, dash);
            let mode = if power { "with power" } else { "without power" };
            let marker = if power { Marker::Dot } else { Marker::Asterisk };
            legend.push((format!("{circuit}, {mode}"), col, marker));
        }
    }
    let entries: Vec<(&str, &str, Marker)> = legend
        .iter()
        .map(|(l, c, m)| (l.as_str(), *c, *m))
        .collect();
    c.legend(&entries);
    c.finish()
}

/// Error distribution per placement, ordered by median inter-meter
/// distance. Key-location placements are labelled and placements leaving
/// the CCP nearest the source unmetered are flagged.
pub fn placement_plot(rows: &[ExperimentRow]) -> String {
    let mut placements: Vec<(f64, &str, u64)> = Vec::new();
    for r in rows {
        let key = (
            r.median_inter_meter_m.unwrap_or(0.0),
            r.placement.as_str(),
            r.placement_seed,
        );
        if !placements.iter().any(|p| p.1 == key.1 && p.2 == key.2) {
            placements.push(key);
        }
    }
    placements.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)).then(a.2.cmp(&b.2)));
    let y = whisker_axis(rows);
    let mut c = Canvas::new(&format!(
        "Prediction error by meter placement ({})",
        circuit_names(rows)
    ));
    c.axes(&y, "median inter-meter distance (m)", "absolute error (V)");
    let mut flagged = false;
    for (i, (dist, label, seed)) in placements.iter().enumerate() {
        let (cx, w) = slot_x(i, placements.len());
        let half = (w * 0.15).min(12.0);
        let group: Vec<&ExperimentRow> = rows
            .iter()
            .filter(|r| r.placement == *label && r.placement_seed == *seed)
            .collect();
        for r in &group {
            let x = if r.with_power {
                cx - w * 0.2
            } else {
                cx + w * 0.2
            };
            c.boxplot(x, half, &r.model_volts, &y, colour(r.with_power));
        }
        if group.iter().any(|r| !r.first_ccp_metered) {
            flagged = true;
            let top = group
                .iter()
                .map(|r| r.model_volts.upper)
                .fold(f64::NEG_INFINITY, f64::max);
            c.triangle(cx, y.y(top) - 10.0, "black");
        }
        let mut lines = vec![format!("{dist:.1}")];
        if *label == "key_locations" {
            lines.push("key".to_string());
        }
        c.x_label(cx, &lines);
    }
    let mut legend = vec![
        ("with power", WITH_POWER, Marker::Box),
        ("without power", WITHOUT_POWER, Marker::Box),
    ];
    if flagged {
        legend.push(("first CCP unmetered", "black", Marker::Triangle));
    }
    c.legend(&legend);
    c.finish()
}
