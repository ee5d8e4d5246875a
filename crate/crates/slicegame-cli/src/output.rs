//! Output envelopes: JSON with a metadata block, or CSV with `#`-prefixed
//! metadata comments ahead of the header row.

use std::fs;
use std::io;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use slicegame::experiments::{DeviationReport, Table};
use slicegame::model::Scenario;

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Serialize)]
pub struct Metadata {
    pub artifact: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    /// Absent under `--deterministic`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp_unix: Option<u64>,
}

impl Metadata {
    pub fn new<C: Serialize>(command: &'static str, config: Option<&C>, deterministic: bool) -> Self {
        Metadata {
            artifact: "slicegame",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config: config.map(|c| serde_json::to_value(c).expect("config serializes")),
            timestamp_unix: if deterministic {
                None
            } else {
                Some(SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default().as_secs())
            },
        }
    }

    fn csv_comments(&self) -> String {
        let mut lines = format!(
            "# artifact={} version={} command={}\n",
            self.artifact, self.version, self.command
        );
        if let Some(cfg) = &self.config {
            lines.push_str(&format!("# config={cfg}\n"));
        }
        if let Some(ts) = self.timestamp_unix {
            lines.push_str(&format!("# timestamp_unix={ts}\n"));
        }
        lines
    }
}

fn emit(out: Option<&Path>, text: &str) -> io::Result<()> {
    match out {
        Some(path) => fs::write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// JSON envelope: metadata, optional scenario echo, and the result payload.
pub fn write_json<T: Serialize>(
    out: Option<&Path>,
    metadata: &Metadata,
    scenario: Option<&Scenario>,
    result: &T,
) -> io::Result<()> {
    let mut doc = serde_json::Map::new();
    doc.insert("metadata".into(), serde_json::to_value(metadata).expect("metadata serializes"));
    if let Some(s) = scenario {
        doc.insert("scenario".into(), serde_json::to_value(s).expect("scenario serializes"));
    }
    doc.insert("result".into(), serde_json::to_value(result).expect("result serializes"));
    let mut text = serde_json::to_string_pretty(&doc).expect("document serializes");
    text.push('\n');
    emit(out, &text)
}

pub fn write_table(
    out: Option<&Path>,
    metadata: &Metadata,
    table: &Table,
    format: Format,
) -> io::Result<()> {
    match format {
        Format::Json => write_json(out, metadata, None, table),
        Format::Csv => {
            let mut text = metadata.csv_comments();
            text.push_str(&table.columns.join(","));
            text.push('\n');
            for row in &table.rows {
                let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                text.push_str(&cells.join(","));
                text.push('\n');
            }
            emit(out, &text)
        }
    }
}

/// CSV form of a deviation report: one row per recorded deviation, with the
/// percentile summary in the metadata comments. The JSON form carries the
/// full report including histograms.
pub fn write_deviation_report(
    out: Option<&Path>,
    metadata: &Metadata,
    report: &DeviationReport,
    format: Format,
) -> io::Result<()> {
    match format {
        Format::Json => write_json(out, metadata, None, report),
        Format::Csv => {
            let mut text = metadata.csv_comments();
            text.push_str(&format!(
                "# p90_abs_eps_rho={} p95_abs_eps_rho={} p90_abs_eps_sigma={} p95_abs_eps_sigma={}\n",
                report.p90_abs_eps_rho,
                report.p95_abs_eps_rho,
                report.p90_abs_eps_sigma,
                report.p95_abs_eps_sigma
            ));
            text.push_str(&format!(
                "# failed_replications={}\n",
                report.failed_replications.len()
            ));
            text.push_str("metric,replication,tenant,cell,eps\n");
            for d in &report.eps_sigma {
                text.push_str(&format!("sigma,{},,{},{}\n", d.replication, d.cell, d.value));
            }
            for d in &report.eps_rho {
                text.push_str(&format!(
                    "rho,{},{},{},{}\n",
                    d.replication, d.tenant, d.cell, d.value
                ));
            }
            emit(out, &text)
        }
    }
}

/// Histogram triples for both metrics, binned in percent.
pub fn write_histograms(path: &Path, report: &DeviationReport) -> io::Result<()> {
    let mut text = String::from("metric,bin_left,bin_right,count\n");
    for b in &report.sigma_histogram {
        text.push_str(&format!("sigma,{},{},{}\n", b.left, b.right, b.count));
    }
    for b in &report.rho_histogram {
        text.push_str(&format!("rho,{},{},{}\n", b.left, b.right, b.count));
    }
    fs::write(path, text)
}
