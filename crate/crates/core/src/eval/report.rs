use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One metric over a set of seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: String,
    pub metric: String,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub seeds: Vec<u64>,
    pub values: Vec<f64>,
    pub fingerprint: String,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl MetricsReport {
    pub fn new(task: &str, metric: &str, seeds: Vec<u64>, values: Vec<f64>, fingerprint: &str) -> Result<Self> {
        if values.is_empty() || seeds.len() != values.len() {
            return Err(Error::Argument(format!(
                "report {task}/{metric}: {} seeds for {} values",
                seeds.len(),
                values.len()
            )));
        }
        let (mean, std) = mean_std(&values);
        Ok(MetricsReport {
            task: task.to_string(),
            metric: metric.to_string(),
            mean,
            std,
            seeds,
            values,
            fingerprint: fingerprint.to_string(),
        })
    }
}

/// Merge reports sharing a task and metric, in first-seen order.
pub fn aggregate(reports: &[MetricsReport]) -> Result<Vec<MetricsReport>> {
    check_fingerprints(reports)?;
    let mut merged: Vec<MetricsReport> = Vec::new();
    for r in reports {
        match merged.iter_mut().find(|m| m.task == r.task && m.metric == r.metric) {
            Some(m) => {
                m.seeds.extend_from_slice(&r.seeds);
                m.values.extend_from_slice(&r.values);
                let (mean, std) = mean_std(&m.values);
                m.mean = mean;
                m.std = std;
            }
            None => merged.push(r.clone()),
        }
    }
    Ok(merged)
}

pub fn summary_table(reports: &[MetricsReport]) -> String {
    let width = reports.iter().map(|r| r.task.len()).max().unwrap_or(4).max(4);
    let mut out = format!("{:<width$}  {:<10}  {:>18}  {:>5}\n", "task", "metric", "mean ± std", "runs");
    for r in reports {
        let _ = writeln!(
            out,
            "{:<width$}  {:<10}  {:>18}  {:>5}",
            r.task,
            r.metric,
            format!("{:.4} ± {:.4}", r.mean, r.std),
            r.values.len()
        );
    }
    out
}

fn check_fingerprints(reports: &[MetricsReport]) -> Result<()> {
    if let Some(first) = reports.first() {
        if let Some(other) = reports.iter().find(|r| r.fingerprint != first.fingerprint) {
            return Err(Error::Incompatible(format!(
                "reports come from different configurations ({} vs {})",
                first.fingerprint, other.fingerprint
            )));
        }
    }
    Ok(())
}

/// Aggregate `reports`, write JSON to `path` and the aligned table next to it
/// with a `.txt` extension. Returns the table.
pub fn write_report(reports: &[MetricsReport], path: &Path) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::Argument("write_report: no reports".into()));
    }
    let merged = aggregate(reports)?;
    let table = summary_table(&merged);
    fs::write(path, serde_json::to_string_pretty(&merged)? + "\n")?;
    fs::write(path.with_extension("txt"), &table)?;
    Ok(table)
}

pub fn read_reports(path: &Path) -> Result<Vec<MetricsReport>> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    Ok(if value.is_array() {
        serde_json::from_value(value)?
    } else {
        vec![serde_json::from_value(value)?]
    })
}
