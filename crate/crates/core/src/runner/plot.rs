//! Minimal hand-written SVG charts.

use std::fmt::Write as _;

use super::experiment::{model_labels, RunArtifacts};
use super::report::{reports_for, ExperimentSummary};

const W: f64 = 520.0;
const H: f64 = 380.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Chart {
    svg: String,
    x: (f64, f64),
    y: (f64, f64),
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

impl Chart {
    fn new(title: &str, xlabel: &str, ylabel: &str, x: (f64, f64), y: (f64, f64)) -> Self {
        let x = if x.1 > x.0 { x } else { (x.0 - 0.5, x.0 + 0.5) };
        let y = if y.1 > y.0 { y } else { (y.0 - 0.5, y.0 + 0.5) };
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(svg, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{title}</text>"#, LEFT + (W - LEFT - RIGHT) / 2.0);
        let mut c = Chart { svg, x, y };
        let (x0, y0, x1, y1) = (LEFT, H - BOTTOM, W - RIGHT, TOP);
        let _ = writeln!(c.svg, r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y0 - y1);
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = c.x.0 + f * (c.x.1 - c.x.0);
            let yv = c.y.0 + f * (c.y.1 - c.y.0);
            let px = c.px(xv);
            let py = c.py(yv);
            let _ = writeln!(c.svg, r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, y0 + 15.0, tick(xv));
            let _ = writeln!(c.svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 5.0, py + 4.0, tick(yv));
        }
        let _ = writeln!(c.svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xlabel}</text>"#, (x0 + x1) / 2.0, H - 12.0);
        let _ = writeln!(
            c.svg,
            r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{ylabel}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0
        );
        c
    }

    fn px(&self, v: f64) -> f64 {
        LEFT + (v - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, v: f64) -> f64 {
        H - BOTTOM - (v - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str, dashed: bool) {
        let p: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect();
        let dash = if dashed { r#" stroke-dasharray="4 3""# } else { "" };
        let _ = writeln!(
            self.svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            p.join(" ")
        );
    }

    fn dot(&mut self, x: f64, y: f64, color: &str) {
        let _ = writeln!(
            self.svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}" fill-opacity="0.6"/>"#,
            self.px(x),
            self.py(y)
        );
    }

    fn legend(&mut self, row: usize, label: &str, color: &str) {
        let x = W - RIGHT + 10.0;
        let y = TOP + 10.0 + 16.0 * row as f64;
        let _ = writeln!(self.svg, r#"<rect x="{x}" y="{}" width="10" height="10" fill="{color}"/>"#, y - 8.0);
        let _ = writeln!(self.svg, r#"<text x="{}" y="{y}">{label}</text>"#, x + 14.0);
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

/// Mean empirical coverage against confidence level, one line per model.
pub fn calibration_svg(summary: &ExperimentSummary) -> String {
    let mut c = Chart::new("Calibration", "confidence level", "empirical coverage", (0.0, 1.0), (0.0, 1.0));
    c.polyline(&[(0.0, 0.0), (1.0, 1.0)], "#888888", true);
    for (i, m) in summary.models.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        if let Some(agg) = &m.aggregate {
            let pts: Vec<(f64, f64)> = agg.levels.iter().map(|l| (l.cl, l.coverage.mean)).collect();
            c.polyline(&pts, color, false);
        }
        c.legend(i, &m.model, color);
    }
    c.finish()
}

/// Box per model at the retrieval level: run-averaged min, quartiles, max.
pub fn widths_svg(artifacts: &RunArtifacts) -> String {
    let cl = artifacts.config.default_cl;
    let labels = model_labels(&artifacts.config);
    let mut boxes = Vec::new();
    for label in &labels {
        let stats: Vec<[f64; 5]> = reports_for(artifacts, label)
            .into_iter()
            .filter_map(|(_, r)| r.widths.iter().find(|w| (w.cl - cl).abs() < 1e-12))
            .filter_map(|w| Some([w.min?, w.q1?, w.median?, w.q3?, w.max?]))
            .collect();
        if stats.is_empty() {
            boxes.push(None);
            continue;
        }
        let n = stats.len() as f64;
        let mut avg = [0.0; 5];
        for s in &stats {
            for (a, v) in avg.iter_mut().zip(s) {
                *a += v / n;
            }
        }
        boxes.push(Some(avg));
    }
    let hi = boxes.iter().flatten().map(|b| b[4]).fold(0.0, f64::max);
    let mut c = Chart::new(
        &format!("Interval widths at confidence {cl}"),
        "model",
        "width",
        (0.0, labels.len().max(1) as f64),
        (0.0, if hi > 0.0 { hi * 1.05 } else { 1.0 }),
    );
    for (i, (label, b)) in labels.iter().zip(&boxes).enumerate() {
        let color = COLORS[i % COLORS.len()];
        c.legend(i, label, color);
        let Some([mn, q1, med, q3, mx]) = *b else { continue };
        let mid = i as f64 + 0.5;
        c.polyline(&[(mid, mn), (mid, q1)], color, false);
        c.polyline(&[(mid, q3), (mid, mx)], color, false);
        c.polyline(&[(mid - 0.3, q1), (mid + 0.3, q1), (mid + 0.3, q3), (mid - 0.3, q3), (mid - 0.3, q1)], color, false);
        c.polyline(&[(mid - 0.3, med), (mid + 0.3, med)], color, false);
    }
    c.finish()
}

/// Ensemble spread against absolute error for the first successful run of
/// each model.
pub fn variance_error_svg(artifacts: &RunArtifacts) -> String {
    let labels = model_labels(&artifacts.config);
    let series: Vec<Vec<(f64, f64)>> = labels
        .iter()
        .map(|l| {
            reports_for(artifacts, l)
                .first()
                .map(|(_, r)| r.variance_error.iter().map(|p| (p.sigma, p.abs_error)).collect())
                .unwrap_or_default()
        })
        .collect();
    let xmax = series.iter().flatten().map(|p| p.0).fold(0.0, f64::max);
    let ymax = series.iter().flatten().map(|p| p.1).fold(0.0, f64::max);
    let mut c = Chart::new("Spread against error", "ensemble std", "|error|", (0.0, xmax * 1.05), (0.0, ymax * 1.05));
    for (i, (label, pts)) in labels.iter().zip(&series).enumerate() {
        let color = COLORS[i % COLORS.len()];
        for &(x, y) in pts {
            c.dot(x, y, color);
        }
        c.legend(i, label, color);
    }
    c.finish()
}
