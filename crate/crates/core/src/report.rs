//! Result tables: one row per task, four columns per class pair.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::EvalReport;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything written to the JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub reports: Vec<EvalReport>,
}

impl ReportFile {
    pub fn new(config: &RunConfig, reports: Vec<EvalReport>) -> Self {
        ReportFile {
            tool: "eegcog".into(),
            version: VERSION.into(),
            config: config.clone(),
            reports,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// `#` lines carrying the version and full config, then the table.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# eegcog {}\n# pipeline {}\n", self.version, self.config.pipeline);
        for line in self.config.to_toml().lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        let mut header = vec!["task".to_string()];
        for pair in &self.config.pairs {
            for col in ["acc", "acc_se", "f1", "f1_se"] {
                header.push(format!("{pair}_{col}"));
            }
        }
        out.push_str(&header.join(","));
        out.push('\n');
        for task in &self.config.tasks {
            let mut row = vec![task.to_string()];
            for pair in &self.config.pairs {
                match self.reports.iter().find(|r| r.task == *task && r.pair == *pair) {
                    Some(r) => {
                        for v in [r.accuracy.mean, r.accuracy.se, r.f1.mean, r.f1.se] {
                            row.push(format!("{v:.4}"));
                        }
                    }
                    None => row.extend(std::iter::repeat_n(String::new(), 4)),
                }
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Writes `report.csv` and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join("report.csv");
        fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let json = dir.join("report.json");
        fs::write(&json, self.to_json()).map_err(|e| Error::io(&json, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ClassPair;
    use crate::eval::MeanSe;
    use crate::config::Pipeline;
    use crate::signal::TaskKind;

    #[test]
    fn table_shape_and_embedded_config() {
        let cfg = RunConfig::default();
        let r = EvalReport {
            pipeline: Pipeline::Frequency,
            pair: ClassPair::ALL[1],
            task: TaskKind::MentalImagery,
            features_pre_selection: 120,
            accuracy: MeanSe { mean: 0.9, se: 0.01 },
            f1: MeanSe { mean: 0.8, se: 0.02 },
            folds: vec![],
        };
        let text = ReportFile::new(&cfg, vec![r]).to_csv();
        let table: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(table.len(), 6);
        assert_eq!(table[0].split(',').count(), 13);
        assert!(table[0].starts_with("task,NC-MCI_acc,NC-MCI_acc_se,NC-MCI_f1,NC-MCI_f1_se,NC-DEM_acc"));
        assert_eq!(table[2], "MI,,,,,0.9000,0.0100,0.8000,0.0200,,,,");
        assert!(text.contains(&format!("# eegcog {VERSION}")));
        let embedded: String = text
            .lines()
            .filter_map(|l| l.strip_prefix("# "))
            .skip(2)
            .map(|l| format!("{l}\n"))
            .collect();
        assert_eq!(RunConfig::from_toml(&embedded).unwrap(), cfg);
    }
}
