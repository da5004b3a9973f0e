//! Report emission as JSON, CSV and SVG line charts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::experiment::MoscoReport;
use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
    Svg,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
            ReportFormat::Svg => "svg",
        }
    }
}

/// Writes `report.<ext>` into `dir` and returns its path.
pub fn emit_report(report: &MoscoReport, format: ReportFormat, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(format!("report.{}", format.extension()));
    let body = render(report, format)?;
    fs::write(&path, body).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

pub fn render(report: &MoscoReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => io::to_json(report),
        ReportFormat::Csv => to_csv(report),
        ReportFormat::Svg => Ok(to_svg(report)),
    }
}

pub fn load_report(path: &Path) -> Result<MoscoReport> {
    io::read_json(path)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// One line per `(plan, M, n)` cell.
pub fn to_csv(report: &MoscoReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record([
        "plan",
        "M",
        "n",
        "status",
        "pairing_limit",
        "pairing",
        "residual",
        "comp",
        "motion",
        "energy",
        "bound",
        "holds",
        "guaranteed",
        "inflation_factor",
        "error",
    ])
    .map_err(csv_err)?;
    for r in &report.rows {
        let d = r.duality.as_ref();
        w.write_record([
            r.plan.clone(),
            r.m.to_string(),
            r.n.to_string(),
            format!("{:?}", r.status).to_lowercase(),
            r.pairing_limit.to_string(),
            opt(r.pairing),
            opt(r.residual),
            opt(d.map(|d| d.comp)),
            opt(d.map(|d| d.motion)),
            opt(d.map(|d| d.energy)),
            opt(d.map(|d| d.bound)),
            d.map(|d| d.holds.to_string()).unwrap_or_default(),
            d.map(|d| d.guaranteed.to_string()).unwrap_or_default(),
            opt(r.inflation_factor),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// A line chart of `points` in a `w x h` box whose top-left corner is `(x0, y0)`.
fn chart(out: &mut String, title: &str, xlabel: &str, points: &[(f64, f64)], x0: f64, y0: f64) {
    let (w, h, pad) = (360.0, 240.0, 40.0);
    let _ = writeln!(out, r#"<g transform="translate({x0},{y0})">"#);
    let _ = writeln!(out, r#"<text x="{}" y="16" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#, w / 2.0, h - 8.0, escape(xlabel));
    let finite: Vec<(f64, f64)> = points.iter().copied().filter(|(a, b)| a.is_finite() && b.is_finite()).collect();
    if !finite.is_empty() {
        let (xmin, xmax) = finite.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), p| (l.min(p.0), u.max(p.0)));
        let (ymin, ymax) = finite.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), p| (l.min(p.1), u.max(p.1)));
        let sx = |x: f64| pad + if xmax > xmin { (x - xmin) / (xmax - xmin) } else { 0.5 } * (w - 2.0 * pad);
        let sy = |y: f64| h - pad - if ymax > ymin { (y - ymin) / (ymax - ymin) } else { 0.5 } * (h - 2.0 * pad);
        let path: Vec<String> = finite.iter().map(|(x, y)| format!("{:.3},{:.3}", sx(*x), sy(*y))).collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#, path.join(" "));
        for (x, y) in &finite {
            let _ = writeln!(out, r#"<circle cx="{:.3}" cy="{:.3}" r="3" fill="steelblue"/>"#, sx(*x), sy(*y));
        }
        let _ = writeln!(out, r#"<text x="{pad}" y="{}" font-size="10">{ymax:.4e}</text>"#, pad - 4.0);
        let _ = writeln!(out, r#"<text x="{pad}" y="{}" font-size="10">{ymin:.4e}</text>"#, h - pad + 12.0);
    }
    out.push_str("</g>\n");
}

/// Margin against the resolution and inflation factor against `M`.
pub fn to_svg(report: &MoscoReport) -> String {
    let l = &report.liminf;
    let margins: Vec<(f64, f64)> = report
        .energies
        .iter()
        .map(|e| (e.n as f64, l.limit - l.factor * e.energy))
        .collect();
    let mut ms: Vec<usize> = report.rows.iter().map(|r| r.m).collect();
    ms.sort_unstable();
    ms.dedup();
    let factors: Vec<(f64, f64)> = ms
        .iter()
        .map(|&m| {
            let f = report
                .rows
                .iter()
                .filter(|r| r.m == m)
                .filter_map(|r| r.inflation_factor)
                .fold(f64::NEG_INFINITY, f64::max);
            (m as f64, if f.is_finite() { f } else { 1.0 })
        })
        .collect();
    let mut out = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"740\" height=\"260\" viewBox=\"0 0 740 260\">\n",
    );
    chart(&mut out, "liminf margin", "n", &margins, 0.0, 0.0);
    chart(&mut out, "inflation factor", "M", &factors, 380.0, 0.0);
    out.push_str("</svg>\n");
    out
}
