//! Run outputs: per-epoch metrics CSV, per-step trace CSV and JSON
//! summaries.

use std::fmt::Write as _;
use std::path::Path;

use ipcae_core::analysis::TraceRecord;
use ipcae_core::training::{MeanStd, MetricKind, MetricLog, RunSummary, SweepAxis, SweepRow};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str =
    "epoch,temperature,lr,train_loss,val_loss,val_metric,unique_pct,gjsd,alpha_norm,psi_norm,w_norm";

pub const TRACE_HEADER: &str = "step,epoch,alpha_norm,psi_norm,w_norm,psi_dot,transform_norm";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per epoch; floats use shortest round-trip formatting so equal
/// logs give byte-identical files.
pub fn metrics_csv(log: &MetricLog) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in &log.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.temperature,
            r.lr,
            r.train_loss,
            r.val_loss,
            r.val_metric,
            r.unique_pct,
            r.gjsd,
            r.alpha_norm,
            r.psi_norm,
            opt(r.w_norm)
        )
        .expect("writing to a String");
    }
    out
}

pub fn trace_csv(trace: &[TraceRecord]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for t in trace {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            t.step,
            t.epoch,
            t.alpha_norm,
            t.psi_norm,
            opt(t.w_norm),
            t.psi_dot,
            opt(t.transform_norm)
        )
        .expect("writing to a String");
    }
    out
}

/// Result of one or more seeded runs of the same config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub metric: MetricKind,
    pub runs: Vec<RunSummary>,
    pub test_metric: Option<MeanStd>,
    pub final_unique_pct: Option<MeanStd>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Summary {
    pub fn new(metric: MetricKind, runs: Vec<RunSummary>) -> Self {
        let test: Vec<f64> = runs.iter().map(|r| r.test_metric).collect();
        let up: Vec<f64> = runs.iter().map(|r| r.final_unique_pct).collect();
        Summary {
            metric,
            test_metric: MeanStd::of(&test),
            final_unique_pct: MeanStd::of(&up),
            runs,
            planted: None,
            warnings: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub metric: MetricKind,
    pub seeds: Vec<u64>,
    pub rows: Vec<SweepRow>,
}

fn cell(v: Option<MeanStd>) -> String {
    v.map(|m| format!("{:.6} ± {:.6}", m.mean, m.std))
        .unwrap_or_else(|| "-".into())
}

impl SweepReport {
    /// Human-readable table: one line per swept value.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<12} {:>4} {:>6}  {:<28} {:<28}\n",
            format!("{:?}", self.axis).to_lowercase(),
            "runs",
            "failed",
            format!("test {:?}", self.metric).to_lowercase(),
            "final unique %"
        );
        for row in &self.rows {
            writeln!(
                out,
                "{:<12} {:>4} {:>6}  {:<28} {:<28}",
                row.value,
                row.runs.len(),
                row.failures.len(),
                cell(row.test_metric),
                cell(row.final_unique_pct)
            )
            .expect("writing to a String");
        }
        out
    }

    pub fn csv(&self) -> String {
        let mut out =
            String::from("value,runs,failed,test_mean,test_std,unique_pct_mean,unique_pct_std\n");
        for row in &self.rows {
            let ms = |m: Option<MeanStd>| {
                m.map(|m| (m.mean.to_string(), m.std.to_string()))
                    .unwrap_or_default()
            };
            let (tm, ts) = ms(row.test_metric);
            let (um, us) = ms(row.final_unique_pct);
            writeln!(
                out,
                "{},{},{},{tm},{ts},{um},{us}",
                row.value,
                row.runs.len(),
                row.failures.len()
            )
            .expect("writing to a String");
        }
        out
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::write(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::write(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::input(format!("json: {e}")))?;
    text.push('\n');
    write_text(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ipcae_core::training::EpochRecord;

    #[test]
    fn metrics_columns_and_empty_weight_norm() {
        let rec = |w| EpochRecord {
            epoch: 0,
            temperature: 10.0,
            lr: 0.001,
            train_loss: 0.5,
            val_loss: 0.25,
            val_metric: 0.75,
            unique_pct: 100.0,
            gjsd: 0.1,
            alpha_norm: 1.0,
            psi_norm: 2.0,
            w_norm: w,
        };
        let log = MetricLog {
            metric: MetricKind::Accuracy,
            records: vec![rec(None), rec(Some(3.5))],
            best_epoch: 0,
            test_metric: 0.0,
            selection: Vec::new(),
            trace: Vec::new(),
        };
        let text = metrics_csv(&log);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER);
        assert_eq!(lines[1], "0,10,0.001,0.5,0.25,0.75,100,0.1,1,2,");
        assert!(lines[2].ends_with(",3.5"));
        assert_eq!(lines[1].split(',').count(), 11);
    }
}
