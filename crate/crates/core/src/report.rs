//! ROC CSV files, an SVG overlay of ROC curves and a Markdown summary.

use std::fmt::Write as _;

use thiserror::Error;

use crate::costmodel::UsageSummary;
use crate::metrics::{DeLongResult, MetricBundle};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("ROC CSV line {line}: {message}")]
    BadCsv { line: usize, message: String },
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Clone, Debug, PartialEq)]
pub struct RocSeries {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub auroc: f64,
}

pub fn roc_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("fpr,tpr\n");
    for (x, y) in points {
        let _ = writeln!(out, "{x},{y}");
    }
    out
}

pub fn parse_roc_csv(text: &str) -> Result<Vec<(f64, f64)>, ReportError> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line == "fpr,tpr") {
            continue;
        }
        let bad = |message: &str| ReportError::BadCsv { line: i + 1, message: message.to_string() };
        let (x, y) = line.split_once(',').ok_or_else(|| bad("expected two columns"))?;
        let x: f64 = x.trim().parse().map_err(|_| bad("fpr is not a number"))?;
        let y: f64 = y.trim().parse().map_err(|_| bad("tpr is not a number"))?;
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(bad("rates must lie in [0, 1]"));
        }
        points.push((x, y));
    }
    Ok(points)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Square ROC plot with every series overlaid and a chance diagonal.
pub fn roc_svg(series: &[RocSeries], title: &str) -> String {
    const SIZE: f64 = 520.0;
    const MARGIN: f64 = 60.0;
    let plot = SIZE - 2.0 * MARGIN;
    let px = |x: f64| MARGIN + x * plot;
    let py = |y: f64| SIZE - MARGIN - y * plot;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="30" text-anchor="middle" font-size="16">{}</text>"#,
        SIZE / 2.0,
        escape(title)
    );
    // grid and ticks
    for k in 0..=5 {
        let t = k as f64 / 5.0;
        let _ = writeln!(
            svg,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#e0e0e0"/>"##,
            px(t),
            py(0.0),
            px(t),
            py(1.0)
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#e0e0e0"/>"##,
            px(0.0),
            py(t),
            px(1.0),
            py(t)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">{t:.1}</text>"#,
            px(t),
            py(0.0) + 16.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="11">{t:.1}</text>"#,
            px(0.0) - 6.0,
            py(t) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{plot}" height="{plot}" fill="none" stroke="#333"/>"##
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#999" stroke-dasharray="4 4"/>"##,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">False positive rate</text>"#,
        SIZE / 2.0,
        SIZE - 18.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.1}" text-anchor="middle" font-size="13" transform="rotate(-90 18 {:.1})">True positive rate</text>"#,
        SIZE / 2.0,
        SIZE / 2.0
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ =
            writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        let ly = py(0.0) - 16.0 - 18.0 * (series.len() - 1 - i) as f64;
        let lx = px(0.45);
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="3"/>"#,
            lx + 22.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="12">{} (AUROC {:.3})</text>"#,
            lx + 28.0,
            ly + 4.0,
            escape(&s.label),
            s.auroc
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Metric table, plus the paired test and usage rows when available.
pub fn summary_markdown(
    rows: &[(String, MetricBundle)],
    delong: Option<&DeLongResult>,
    usage: Option<&UsageSummary>,
) -> String {
    let mut md = String::from("# Classification summary\n\n");
    md.push_str("| Experiment | Patients | AUROC | Precision | Recall | F1 | PR AUC |\n");
    md.push_str("|---|---:|---:|---:|---:|---:|---:|\n");
    for (name, m) in rows {
        let _ = writeln!(
            md,
            "| {name} | {} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} |",
            m.patients, m.auroc, m.precision, m.recall, m.f1, m.pr_auc
        );
    }
    if let Some(d) = delong {
        md.push_str("\n## DeLong paired AUC test\n\n");
        md.push_str("| AUC A | AUC B | Var(diff) | z | p-value |\n|---:|---:|---:|---:|---:|\n");
        let _ = writeln!(
            md,
            "| {:.4} | {:.4} | {:.3e} | {:.3} | {:.4} |",
            d.auc_a, d.auc_b, d.variance_of_difference, d.z_statistic, d.p_value
        );
    }
    if let Some(u) = usage {
        let _ = write!(
            md,
            "\n## Usage\n\nUnit: {}\n\n| Mode | Total | Cost (USD) |\n|---|---:|---:|\n| Long context | {} | {:.2} |\n| RAG | {} | {:.2} |\n\nSavings: {:.1}%\n",
            u.unit,
            u.total_words_long,
            u.cost_long_usd,
            u.total_words_rag,
            u.cost_rag_usd,
            100.0 * u.savings_fraction
        );
    }
    md
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Confusion;

    fn bundle(auroc: f64) -> MetricBundle {
        MetricBundle {
            patients: 10,
            positives: 5,
            negatives: 5,
            auroc,
            precision: 0.5,
            recall: 0.6,
            f1: 0.545,
            pr_auc: 0.7,
            threshold: 0.5,
            confusion: Confusion { tp: 3, fp: 3, tn: 2, fn_: 2 },
        }
    }

    #[test]
    fn roc_csv_round_trip() {
        let pts = vec![(0.0, 0.0), (0.25, 0.5), (1.0, 1.0)];
        let csv = roc_csv(&pts);
        assert!(csv.starts_with("fpr,tpr\n"));
        assert_eq!(parse_roc_csv(&csv).unwrap(), pts);
        assert!(matches!(parse_roc_csv("fpr,tpr\n0.1;0.2\n"), Err(ReportError::BadCsv { line: 2, .. })));
        assert!(parse_roc_csv("1.5,0.2").is_err());
    }

    #[test]
    fn svg_contains_one_polyline_per_series() {
        let series = vec![
            RocSeries { label: "RAG".into(), points: vec![(0.0, 0.0), (0.2, 0.7), (1.0, 1.0)], auroc: 0.75 },
            RocSeries { label: "Long <ctx>".into(), points: vec![(0.0, 0.0), (1.0, 1.0)], auroc: 0.5 },
        ];
        let svg = roc_svg(&series, "ROC");
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("Long &lt;ctx&gt;"));
        assert!(svg.contains("#1f77b4") && svg.contains("#d62728"));
    }

    #[test]
    fn markdown_table() {
        let md = summary_markdown(&[("RAG".into(), bundle(0.67)), ("LONG".into(), bundle(0.66))], None, None);
        assert!(md.contains("| RAG | 10 | 0.670 |"));
        assert!(md.contains("| LONG | 10 | 0.660 |"));
        assert!(!md.contains("DeLong"));
    }
}
