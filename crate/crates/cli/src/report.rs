//! Machine-readable experiment reports: a versioned JSON document with
//! the full config echo, plus plot-ready CSV series.

use lmrc_core::TrainMode;
use serde::Serialize;

use crate::config::ScenarioConfig;

pub const REPORT_SCHEMA: &str = "lmrc-report v1";

#[derive(Clone, Debug, Serialize)]
pub struct IncrementRecord {
    pub increment: usize,
    pub classes: Vec<usize>,
    pub acc_all_seen: f64,
    pub acc_old: Option<f64>,
    pub acc_new: Option<f64>,
    pub n_test: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeReport {
    pub mode: TrainMode,
    pub failed: bool,
    pub error: Option<String>,
    pub avg_incremental_accuracy: Option<f64>,
    pub increments: Vec<IncrementRecord>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub schema: &'static str,
    pub config: ScenarioConfig,
    pub modes: Vec<ModeReport>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Per-increment accuracy series, one row per (mode, increment).
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("mode,increment,acc_all_seen,acc_old,acc_new\n");
        for mode in &self.modes {
            for rec in &mode.increments {
                let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    mode.mode.name(),
                    rec.increment,
                    rec.acc_all_seen,
                    fmt_opt(rec.acc_old),
                    fmt_opt(rec.acc_new),
                ));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curves_csv_layout() {
        let report = ExperimentReport {
            schema: REPORT_SCHEMA,
            config: ScenarioConfig::default(),
            modes: vec![ModeReport {
                mode: TrainMode::Lmrc,
                failed: false,
                error: None,
                avg_incremental_accuracy: Some(0.75),
                increments: vec![IncrementRecord {
                    increment: 1,
                    classes: vec![0, 1],
                    acc_all_seen: 0.75,
                    acc_old: None,
                    acc_new: Some(0.75),
                    n_test: 80,
                }],
            }],
        };
        let csv = report.curves_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "mode,increment,acc_all_seen,acc_old,acc_new");
        assert_eq!(lines[1], "lmrc,1,0.75,,0.75");
        assert!(report.to_json().contains("\"schema\": \"lmrc-report v1\""));
    }
}
