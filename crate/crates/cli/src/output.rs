//! Output documents and CSV tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use volbench::manifest::Split;
use volbench::{EvalSettings, EvaluationResult, PostprocessConfig, RankingDistribution};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodEvaluation {
    pub method_id: String,
    pub source: String,
    pub warnings: Vec<String>,
    pub result: EvaluationResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub dataset_id: String,
    pub split: Option<Split>,
    pub settings: EvalSettings,
    pub postprocess: Option<PostprocessConfig>,
    pub methods: Vec<MethodEvaluation>,
}

/// A fraction as points with two decimals.
pub fn pct(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per method: `method,dataset,mAP,FROC` in points.
pub fn evaluation_table(report: &EvaluationReport) -> String {
    let mut out = String::from("method,dataset,mAP,FROC\n");
    for m in &report.methods {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            csv_field(&m.method_id),
            csv_field(&report.dataset_id),
            pct(m.result.map),
            pct(m.result.froc_score)
        );
    }
    out
}

/// Rank mass per method and rank, plus its share of the iterations.
pub fn rank_histogram_csv(dists: &[RankingDistribution]) -> String {
    let mut out = String::from("metric,method,rank,mass,fraction\n");
    for d in dists {
        let metric = metric_name(d);
        for m in &d.methods {
            for (r, mass) in m.rank_histogram.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{metric},{},{},{mass},{}",
                    csv_field(&m.method_id),
                    r + 1,
                    mass / d.iterations as f64
                );
            }
        }
    }
    out
}

/// Point metric, delta against the baseline (both in points) and mean rank.
pub fn deltas_csv(dists: &[RankingDistribution]) -> String {
    let mut out = String::from("metric,method,value,delta_vs_baseline,mean_rank\n");
    for d in dists {
        let metric = metric_name(d);
        for m in &d.methods {
            let delta = m.delta_vs_baseline.map(pct).unwrap_or_default();
            let _ = writeln!(
                out,
                "{metric},{},{},{delta},{}",
                csv_field(&m.method_id),
                pct(m.point_metric),
                m.mean_rank
            );
        }
    }
    out
}

fn metric_name(d: &RankingDistribution) -> &'static str {
    match d.metric {
        volbench::RankMetric::Map => "mAP",
        volbench::RankMetric::Froc => "FROC",
    }
}

/// Methods as rows, datasets as column pairs, with a mean over datasets.
/// Cells for missing combinations stay empty and are left out of the mean.
pub fn combined_table(reports: &[EvaluationReport]) -> (String, String) {
    let mut datasets: Vec<&str> = Vec::new();
    let mut methods: Vec<&str> = Vec::new();
    let mut cells: BTreeMap<(&str, &str), (f64, f64)> = BTreeMap::new();
    for r in reports {
        if !datasets.contains(&r.dataset_id.as_str()) {
            datasets.push(&r.dataset_id);
        }
        for m in &r.methods {
            if !methods.contains(&m.method_id.as_str()) {
                methods.push(&m.method_id);
            }
            cells.insert((&m.method_id, &r.dataset_id), (m.result.map, m.result.froc_score));
        }
    }

    let mut header = vec!["method".to_string()];
    for d in &datasets {
        header.push(format!("{d} mAP"));
        header.push(format!("{d} FROC"));
    }
    header.push("mean mAP".into());
    header.push("mean FROC".into());

    let mut rows = Vec::new();
    for m in &methods {
        let mut row = vec![m.to_string()];
        let (mut sm, mut sf, mut n) = (0.0, 0.0, 0usize);
        for d in &datasets {
            match cells.get(&(*m, *d)) {
                Some(&(map, froc)) => {
                    row.push(pct(map));
                    row.push(pct(froc));
                    sm += map;
                    sf += froc;
                    n += 1;
                }
                None => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
        }
        row.push(pct(sm / n as f64));
        row.push(pct(sf / n as f64));
        rows.push(row);
    }

    let mut csv = String::new();
    let mut md = String::new();
    let _ = writeln!(csv, "{}", header.iter().map(|h| csv_field(h)).collect::<Vec<_>>().join(","));
    let _ = writeln!(md, "| {} |", header.join(" | "));
    let _ = writeln!(md, "|{}", "---|".repeat(header.len()));
    for row in &rows {
        let _ = writeln!(csv, "{}", row.iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(","));
        let _ = writeln!(md, "| {} |", row.join(" | "));
    }
    (csv, md)
}
