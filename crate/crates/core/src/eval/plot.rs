//! Learning curves from training metrics logs, rendered as SVG.

use std::fmt::Write as _;

use super::EvalError;

/// Numeric CSV with a header row. Empty fields read as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl MetricsTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.headers.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn parse_metrics(text: &str) -> Result<MetricsTable, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let csv_err = |e: csv::Error| {
        let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
        EvalError::Csv { line, message: e.to_string() }
    };
    let headers: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(|h| h.trim().to_string()).collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(EvalError::Csv { line: 1, message: "missing header".into() });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let mut row = Vec::with_capacity(rec.len());
        for (field, name) in rec.iter().zip(&headers) {
            let f = field.trim();
            let v = if f.is_empty() {
                f64::NAN
            } else {
                f.parse::<f64>()
                    .map_err(|_| EvalError::Csv { line, message: format!("invalid number {f:?} in column {name}") })?
            };
            row.push(v);
        }
        rows.push(row);
    }
    Ok(MetricsTable { headers, rows })
}

/// Trailing moving average; a window of 1 returns the input.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for i in 0..xs.len() {
        sum += xs[i];
        if i >= w {
            sum -= xs[i - w];
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Curve {
    /// `y` against `frame`, dropping rows where `y` is not finite, then
    /// smoothed.
    pub fn from_table(label: &str, table: &MetricsTable, y: &str, window: usize) -> Result<Curve, EvalError> {
        let missing = |c: &str| EvalError::Csv { line: 1, message: format!("missing column {c}") };
        let xs = table.column("frame").ok_or_else(|| missing("frame"))?;
        let ys = table.column(y).ok_or_else(|| missing(y))?;
        let (xs, ys): (Vec<f64>, Vec<f64>) = xs.into_iter().zip(ys).filter(|(x, y)| x.is_finite() && y.is_finite()).unzip();
        let ys = moving_average(&ys, window);
        Ok(Curve { label: label.to_string(), points: xs.into_iter().zip(ys).collect() })
    }
}

const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
const PANEL_W: f64 = 560.0;
const PANEL_H: f64 = 300.0;
const MARGIN: f64 = 60.0;

fn panel(out: &mut String, top: f64, title: &str, curves: &[Curve]) {
    let pts = curves.iter().flat_map(|c| c.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in pts {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * PANEL_W;
    let sy = |y: f64| top + PANEL_H - (y - y0) / (y1 - y0) * PANEL_H;
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{top}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#444"/>"##
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{title}</text>"#, MARGIN + PANEL_W / 2.0, top - 8.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11">{y1:.3}</text>"#, 4.0, top + 10.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11">{y0:.3}</text>"#, 4.0, top + PANEL_H);
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="{}" font-size="11">{x0}</text><text x="{}" y="{}" font-size="11" text-anchor="end">{x1} frames</text>"#,
        top + PANEL_H + 14.0,
        MARGIN + PANEL_W,
        top + PANEL_H + 14.0
    );
    for (i, c) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = c.points.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
            pts.join(" "),
            escape(&c.label)
        );
        let ly = top + 16.0 + 14.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{ly}" font-size="11" fill="{color}">{}</text>"#,
            MARGIN + 8.0,
            escape(&c.label)
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Average return and average episode length against frames, one labeled
/// curve per run, smoothed with a trailing window.
pub fn plot_curves(runs: &[(String, MetricsTable)], window: usize) -> Result<String, EvalError> {
    let mut returns = Vec::new();
    let mut lengths = Vec::new();
    for (label, table) in runs {
        returns.push(Curve::from_table(label, table, "avg_return", window)?);
        lengths.push(Curve::from_table(label, table, "avg_episode_length", window)?);
    }
    let width = PANEL_W + 2.0 * MARGIN;
    let height = 2.0 * PANEL_H + 3.0 * MARGIN;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    panel(&mut out, MARGIN, "average return", &returns);
    panel(&mut out, 2.0 * MARGIN + PANEL_H, "average episode length", &lengths);
    out.push_str("</svg>\n");
    Ok(out)
}
