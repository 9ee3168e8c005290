//! Sweep serialization: CSV and JSON tables plus a small hand-rolled SVG
//! plotter. All float formatting uses Rust's shortest-roundtrip `Debug`
//! form, so written files are byte-identical across reruns and machines.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::{measure_column, OutputSection, SweepOutcome};

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:?}"),
        None => String::new(),
    }
}

/// Quote a CSV field when it contains commas, quotes or newlines.
fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Render a sweep as CSV.
///
/// Columns: `swept_var,value,S_db,E_N,nu_minus,lambda_min[,mean_<target>,
/// std_<target>],error`. The ensemble columns appear only when the sweep
/// requested an ensemble; `error` is always last and empty on success.
pub fn csv_string(outcome: &SweepOutcome) -> String {
    let mut out = String::new();
    out.push_str("swept_var,value,S_db,E_N,nu_minus,lambda_min");
    if let Some(kind) = outcome.ensemble_kind {
        let col = measure_column(kind);
        let _ = write!(out, ",mean_{col},std_{col}");
    }
    out.push_str(",error\n");
    for row in &outcome.rows {
        let _ = write!(
            out,
            "{},{:?},{},{},{},{}",
            csv_escape(&outcome.variable),
            row.value,
            fmt_opt(row.s_db),
            fmt_opt(row.e_n),
            fmt_opt(row.nu_minus),
            fmt_opt(row.lambda_min),
        );
        if outcome.ensemble_kind.is_some() {
            let _ = write!(out, ",{},{}", fmt_opt(row.mean), fmt_opt(row.std));
        }
        let _ = write!(
            out,
            ",{}\n",
            csv_escape(row.error.as_deref().unwrap_or(""))
        );
    }
    out
}

fn json_opt(v: Option<f64>) -> serde_json::Value {
    match v {
        Some(x) if x.is_finite() => serde_json::json!(x),
        _ => serde_json::Value::Null,
    }
}

/// Render a sweep as a JSON document with the same field names as the CSV.
pub fn json_string(outcome: &SweepOutcome) -> String {
    let rows: Vec<serde_json::Value> = outcome
        .rows
        .iter()
        .map(|row| {
            let mut obj = serde_json::Map::new();
            obj.insert("swept_var".into(), serde_json::json!(outcome.variable));
            obj.insert("value".into(), serde_json::json!(row.value));
            obj.insert("S_db".into(), json_opt(row.s_db));
            obj.insert("E_N".into(), json_opt(row.e_n));
            obj.insert("nu_minus".into(), json_opt(row.nu_minus));
            obj.insert("lambda_min".into(), json_opt(row.lambda_min));
            if let Some(kind) = outcome.ensemble_kind {
                let col = measure_column(kind);
                obj.insert(format!("mean_{col}"), json_opt(row.mean));
                obj.insert(format!("std_{col}"), json_opt(row.std));
            }
            obj.insert(
                "error".into(),
                match &row.error {
                    Some(e) => serde_json::json!(e),
                    None => serde_json::Value::Null,
                },
            );
            serde_json::Value::Object(obj)
        })
        .collect();
    let doc = serde_json::json!({
        "sweep": outcome.name,
        "rows": rows,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("plain data serializes");
    text.push('\n');
    text
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn place(&self, v: f64, a: f64, b: f64) -> f64 {
        let (v, lo, hi) = if self.log {
            (v.log10(), self.lo.log10(), self.hi.log10())
        } else {
            (v, self.lo, self.hi)
        };
        let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
        a + (b - a) * t
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let lo = self.lo.log10().ceil() as i64;
            let hi = self.hi.log10().floor() as i64;
            if lo <= hi {
                return (lo..=hi).map(|d| 10f64.powi(d as i32)).collect();
            }
        }
        let n = 5;
        (0..n)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-3) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    }
}

/// Render the sweep's target curve as a standalone SVG plot.
///
/// Plots `S_db` (or, for ensembles, its mean with error bars) against the
/// swept value; rows with errors break the polyline. Intended as a quick
/// visual check, not publication output.
pub fn svg_string(outcome: &SweepOutcome) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const ML: f64 = 64.0;
    const MR: f64 = 20.0;
    const MT: f64 = 34.0;
    const MB: f64 = 48.0;

    let xs: Vec<f64> = outcome.rows.iter().map(|r| r.value).collect();
    let mut ys: Vec<f64> = Vec::new();
    for r in &outcome.rows {
        if let Some(y) = r.s_db {
            ys.push(y);
        }
        if let (Some(m), Some(s)) = (r.mean, r.std) {
            ys.push(m - s);
            ys.push(m + s);
        }
    }
    let (x_lo, x_hi) = match (
        xs.iter().cloned().fold(f64::INFINITY, f64::min),
        xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    ) {
        (lo, hi) if lo.is_finite() && hi.is_finite() && lo < hi => (lo, hi),
        _ => (0.0, 1.0),
    };
    let (mut y_lo, mut y_hi) = match (
        ys.iter().cloned().fold(f64::INFINITY, f64::min),
        ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    ) {
        (lo, hi) if lo.is_finite() && hi.is_finite() => (lo, hi),
        _ => (-1.0, 1.0),
    };
    if y_hi - y_lo < 1e-9 {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let pad = 0.06 * (y_hi - y_lo);
    let x_axis = Axis {
        lo: x_lo,
        hi: x_hi,
        log: outcome.log_x && x_lo > 0.0,
    };
    let y_axis = Axis {
        lo: y_lo - pad,
        hi: y_hi + pad,
        log: false,
    };
    let px = |v: f64| x_axis.place(v, ML, W - MR);
    let py = |v: f64| y_axis.place(v, H - MB, MT);

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(
        s,
        "  <rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        s,
        "  <text x=\"{:.1}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
        (ML + W - MR) / 2.0,
        outcome.name
    );

    for t in x_axis.ticks() {
        let x = px(t);
        let _ = writeln!(
            s,
            "  <line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" \
             stroke=\"#ddd\"/>",
            MT,
            H - MB
        );
        let _ = writeln!(
            s,
            "  <text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            H - MB + 16.0,
            tick_label(t)
        );
    }
    for t in y_axis.ticks() {
        let y = py(t);
        let _ = writeln!(
            s,
            "  <line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
             stroke=\"#ddd\"/>",
            ML,
            W - MR
        );
        let _ = writeln!(
            s,
            "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            ML - 6.0,
            y + 4.0,
            tick_label(t)
        );
    }
    // Zero line marks the classical squeezing boundary when visible.
    if y_axis.lo < 0.0 && y_axis.hi > 0.0 {
        let y = py(0.0);
        let _ = writeln!(
            s,
            "  <line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
             stroke=\"#888\" stroke-dasharray=\"4 3\"/>",
            ML,
            W - MR
        );
    }
    let _ = writeln!(
        s,
        "  <rect x=\"{ML}\" y=\"{MT}\" width=\"{:.1}\" height=\"{:.1}\" \
         fill=\"none\" stroke=\"black\"/>",
        W - ML - MR,
        H - MT - MB
    );
    let _ = writeln!(
        s,
        "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
        (ML + W - MR) / 2.0,
        H - 10.0,
        outcome.variable
    );
    let _ = writeln!(
        s,
        "  <text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {:.1})\">S (dB)</text>",
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0
    );

    // Line segments, broken at errored rows.
    let mut segments: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
    for r in &outcome.rows {
        match r.s_db {
            Some(y) => segments
                .last_mut()
                .expect("seeded with one segment")
                .push((px(r.value), py(y))),
            None => {
                if !segments.last().map_or(true, Vec::is_empty) {
                    segments.push(Vec::new());
                }
            }
        }
    }
    for seg in segments.iter().filter(|seg| seg.len() > 1) {
        let pts: Vec<String> = seg.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
        let _ = writeln!(
            s,
            "  <polyline points=\"{}\" fill=\"none\" stroke=\"#1f6fb2\" \
             stroke-width=\"1.5\"/>",
            pts.join(" ")
        );
    }
    for r in &outcome.rows {
        if let Some(y) = r.s_db {
            let _ = writeln!(
                s,
                "  <circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"2.5\" fill=\"#1f6fb2\"/>",
                px(r.value),
                py(y)
            );
        }
        if let (Some(m), Some(sd)) = (r.mean, r.std) {
            let x = px(r.value);
            let _ = writeln!(
                s,
                "  <line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" \
                 stroke=\"#b2441f\"/>",
                py(m - sd),
                py(m + sd)
            );
            let _ = writeln!(
                s,
                "  <circle cx=\"{x:.1}\" cy=\"{:.1}\" r=\"2\" fill=\"#b2441f\"/>",
                py(m)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Write a sweep's requested formats into `dir`, returning written paths.
pub fn write_outcome(
    dir: &Path,
    outcome: &SweepOutcome,
    output: &OutputSection,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for format in &output.formats {
        let (ext, body) = match format.as_str() {
            "csv" => ("csv", csv_string(outcome)),
            "json" => ("json", json_string(outcome)),
            other => {
                return Err(Error::Config(format!("unknown output format {other:?}")));
            }
        };
        let path = dir.join(format!("{}.{ext}", outcome.name));
        std::fs::write(&path, body)?;
        written.push(path);
    }
    if output.plot {
        let path = dir.join(format!("{}.svg", outcome.name));
        std::fs::write(&path, svg_string(outcome))?;
        written.push(path);
    }
    Ok(written)
}

/// Write all sweeps, honoring an optional directory override.
pub fn write_all(
    outcomes: &[SweepOutcome],
    output: &OutputSection,
    dir_override: Option<&Path>,
) -> Result<Vec<PathBuf>> {
    let dir = dir_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&output.dir));
    let mut written = Vec::new();
    for outcome in outcomes {
        written.extend(write_outcome(&dir, outcome, output)?);
    }
    Ok(written)
}
