//! Check records, run reports and plain-text artifact writers (CSV, SVG).

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// Reported but never gating.
    Diagnostic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    #[serde(deserialize_with = "nullable")]
    pub value: f64,
    #[serde(deserialize_with = "nullable")]
    pub bound: f64,
    #[serde(deserialize_with = "nullable")]
    pub margin: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

/// Non-finite numbers serialise as null; read them back as NaN.
fn nullable<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

impl Check {
    /// Passes iff value <= bound; margin = bound - value.
    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Check::from_margin(name, value, bound, bound - value)
    }

    /// Passes iff value >= bound; margin = value - bound.
    pub fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Check::from_margin(name, value, bound, value - bound)
    }

    pub fn from_margin(name: &str, value: f64, bound: f64, margin: f64) -> Self {
        let status = if margin >= 0.0 && margin.is_finite() { Status::Pass } else { Status::Fail };
        Check { name: name.to_string(), status, value, bound, margin, detail: String::new() }
    }

    pub fn flag(name: &str, ok: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.to_string(),
            status: if ok { Status::Pass } else { Status::Fail },
            value: if ok { 1.0 } else { 0.0 },
            bound: 1.0,
            margin: if ok { 0.0 } else { -1.0 },
            detail: detail.into(),
        }
    }

    pub fn diagnostic(mut self) -> Self {
        self.status = Status::Diagnostic;
        self
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub checks: Vec<Check>,
    pub artifacts: Vec<String>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    /// Aligned text table, one row per check.
    pub fn table(&self) -> String {
        let w = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(4).max(4);
        let mut out = format!("{:<w$}  {:<10}  {:>14}  {:>14}  {:>14}\n", "check", "status", "value", "bound", "margin");
        for c in &self.checks {
            let st = match c.status {
                Status::Pass => "pass",
                Status::Fail => "FAIL",
                Status::Diagnostic => "diagnostic",
            };
            let _ = writeln!(out, "{:<w$}  {:<10}  {:>14.6e}  {:>14.6e}  {:>14.6e}", c.name, st, c.value, c.bound, c.margin);
        }
        out
    }
}

/// Formats rows as CSV with a header. Numbers use the shortest round-trip
/// representation, so output is byte-stable.
pub fn csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> io::Result<()> {
    std::fs::write(path, csv(header, rows))
}

/// Self-contained SVG line plot. `series` holds (label, points); `log_x` and
/// `log_y` switch the axes to log10.
pub fn svg_plot(title: &str, series: &[(&str, Vec<(f64, f64)>)], log_x: bool, log_y: bool) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    let tx = |v: f64| if log_x { v.log10() } else { v };
    let ty = |v: f64| if log_y { v.abs().max(1e-300).log10() } else { v };
    let pts: Vec<(f64, f64)> = series.iter().flat_map(|s| s.1.iter().map(|&(x, y)| (tx(x), ty(y)))).filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if pts.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-300 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-300 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let py = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="monospace" font-size="11">"#);
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let lab = |v: f64, log: bool| if log { format!("1e{v:.1}") } else { format!("{v:.3e}") };
    let _ = writeln!(out, r#"<text x="{PAD}" y="{}">{}</text>"#, H - PAD + 15.0, lab(x0, log_x));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, W - PAD, H - PAD + 15.0, lab(x1, log_x));
    let _ = writeln!(out, r#"<text x="5" y="{}">{}</text>"#, H - PAD, lab(y0, log_y));
    let _ = writeln!(out, r#"<text x="5" y="{}">{}</text>"#, PAD + 4.0, lab(y1, log_y));
    for (k, (label, data)) in series.iter().enumerate() {
        let col = colors[k % colors.len()];
        let path: Vec<String> = data
            .iter()
            .map(|&(x, y)| (tx(x), ty(y)))
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        let _ = writeln!(out, r#"<text x="{}" y="{}" fill="{col}">{}</text>"#, W - PAD - 150.0, PAD + 15.0 * (k as f64 + 1.0), escape(label));
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
