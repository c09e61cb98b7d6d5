//! Rendering a [`MetricsReport`] as a text table, JSON or CSV.
//!
//! CSV is one header row and one data row. Columns, in order:
//! `tp, fp, fn, duplicates, alarms, hazards, false_alarm_rate_pct,
//! missed_detection_rate_pct, mean_response_ms, max_response_ms`, then
//! `mae_<channel>` and `pct_error_<channel>` for every channel in
//! [`Channel::ALL`] order. Missing values are empty cells.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use super::metrics::MetricsReport;
use crate::types::Channel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Text,
    Json,
    Csv,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown report format `{0}` (expected text, json or csv)")]
pub struct UnknownFormat(pub String);

impl FromStr for ReportFormat {
    type Err = UnknownFormat;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(UnknownFormat(other.to_string())),
        }
    }
}

pub fn csv_header() -> Vec<String> {
    let mut cols: Vec<String> = [
        "tp",
        "fp",
        "fn",
        "duplicates",
        "alarms",
        "hazards",
        "false_alarm_rate_pct",
        "missed_detection_rate_pct",
        "mean_response_ms",
        "max_response_ms",
    ]
    .into_iter()
    .map(String::from)
    .collect();
    for c in Channel::ALL {
        cols.push(format!("mae_{}", c.name()));
        cols.push(format!("pct_error_{}", c.name()));
    }
    cols
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_row(m: &MetricsReport) -> Vec<String> {
    let c = &m.counts;
    let mut row = vec![
        c.tp.to_string(),
        c.fp.to_string(),
        c.fn_.to_string(),
        c.duplicates.to_string(),
        c.alarms.to_string(),
        c.hazards.to_string(),
        m.false_alarm_rate.to_string(),
        m.missed_detection_rate.to_string(),
        opt(m.mean_response_ms),
        opt(m.max_response_ms),
    ];
    for ch in Channel::ALL {
        let acc = m.detection_accuracy.get(&ch);
        row.push(opt(acc.map(|a| a.mae)));
        row.push(opt(acc.and_then(|a| a.mean_pct_error)));
    }
    row
}

pub fn render_csv(m: &MetricsReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(csv_header()).expect("in-memory write");
    w.write_record(csv_row(m)).expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub fn render_text(m: &MetricsReport) -> String {
    let c = &m.counts;
    let mut rows: Vec<(String, String)> = vec![
        ("true positives".into(), c.tp.to_string()),
        ("false positives".into(), c.fp.to_string()),
        ("false negatives".into(), c.fn_.to_string()),
        ("duplicates".into(), c.duplicates.to_string()),
        (
            "false alarm rate (%)".into(),
            format!("{:.2}", m.false_alarm_rate),
        ),
        (
            "missed detection rate (%)".into(),
            format!("{:.2}", m.missed_detection_rate),
        ),
        (
            "mean response (ms)".into(),
            m.mean_response_ms.map_or("-".into(), |v| format!("{v:.1}")),
        ),
        (
            "max response (ms)".into(),
            m.max_response_ms.map_or("-".into(), |v| v.to_string()),
        ),
    ];
    for (ch, acc) in &m.detection_accuracy {
        rows.push((
            format!("mae {} ({})", ch.name(), ch.unit()),
            format!("{:.4}", acc.mae),
        ));
        if let Some(p) = acc.mean_pct_error {
            rows.push((format!("error {} (%)", ch.name()), format!("{p:.2}")));
        }
    }
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    writeln!(out, "{:<width$}  value", "metric").unwrap();
    writeln!(out, "{}  {}", "-".repeat(width), "-".repeat(10)).unwrap();
    for (k, v) in rows {
        writeln!(out, "{k:<width$}  {v}").unwrap();
    }
    if !m.response_times.is_empty() {
        writeln!(out).unwrap();
        writeln!(out, "hazard  alert  response (ms)").unwrap();
        for r in &m.response_times {
            writeln!(
                out,
                "{:>6}  {:>5}  {}",
                r.hazard_id, r.alert_id.0, r.response_ms
            )
            .unwrap();
        }
    }
    out
}

pub fn render_json(m: &MetricsReport) -> String {
    serde_json::to_string_pretty(m).expect("metrics serialize")
}

pub fn render(m: &MetricsReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => render_text(m),
        ReportFormat::Json => render_json(m),
        ReportFormat::Csv => render_csv(m),
    }
}
