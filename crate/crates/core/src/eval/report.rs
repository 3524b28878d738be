use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::{ModelKind, ModelResult};
use super::metrics::mean_std;
use crate::domain::Domain;
use crate::error::{Error, Result};

/// Result of one seed: per-model test metrics, or the error that aborted it.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedOutcome {
    pub seed: u64,
    pub result: std::result::Result<Vec<ModelResult>, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mae,
    F1,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Mae => "mae",
            Metric::F1 => "f1",
        }
    }
}

/// One aggregated line of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: ModelKind,
    pub domain: Domain,
    pub metric: Metric,
    pub mean: f64,
    pub std: f64,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub outcomes: Vec<SeedOutcome>,
}

impl ExperimentReport {
    /// Aggregates successful seeds in model order, then domain, then metric.
    pub fn from_outcomes(models: &[ModelKind], outcomes: Vec<SeedOutcome>) -> Result<Self> {
        let ok: Vec<&[ModelResult]> = outcomes.iter().filter_map(|o| o.result.as_deref().ok()).collect();
        if ok.is_empty() {
            let reasons: Vec<String> = outcomes
                .iter()
                .filter_map(|o| o.result.as_ref().err().map(|e| format!("seed {}: {e}", o.seed)))
                .collect();
            return Err(Error::Eval(format!("no seed succeeded ({})", reasons.join("; "))));
        }
        let mut rows = Vec::new();
        for &model in models {
            for domain in Domain::BOTH {
                for metric in [Metric::Mae, Metric::F1] {
                    let values: Vec<f64> = ok
                        .iter()
                        .flat_map(|run| run.iter())
                        .filter(|r| r.model == model && r.domain == domain)
                        .map(|r| match metric {
                            Metric::Mae => r.metrics.mae_percent,
                            Metric::F1 => r.metrics.f1_percent,
                        })
                        .collect();
                    let (mean, std) = mean_std(&values);
                    rows.push(ReportRow {
                        model,
                        domain,
                        metric,
                        mean,
                        std,
                        n_seeds: values.len(),
                    });
                }
            }
        }
        Ok(Self { rows, outcomes })
    }

    pub fn get(&self, model: ModelKind, domain: Domain, metric: Metric) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.domain == domain && r.metric == metric)
    }

    /// Per-seed values of one metric, in seed order.
    pub fn values(&self, model: ModelKind, domain: Domain, metric: Metric) -> Vec<f64> {
        self.outcomes
            .iter()
            .filter_map(|o| o.result.as_ref().ok())
            .flat_map(|run| run.iter())
            .filter(|r| r.model == model && r.domain == domain)
            .map(|r| match metric {
                Metric::Mae => r.metrics.mae_percent,
                Metric::F1 => r.metrics.f1_percent,
            })
            .collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = (u64, &str)> {
        self.outcomes
            .iter()
            .filter_map(|o| o.result.as_ref().err().map(|e| (o.seed, e.as_str())))
    }

    /// Fixed-width table, one line per model and domain.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<12} {:<6} {:>16} {:>16} {:>6}\n", "model", "domain", "MAE(%)", "F1(%)", "runs");
        for pair in self.rows.chunks(2) {
            let [mae, f1] = pair else { continue };
            let _ = writeln!(
                out,
                "{:<12} {:<6} {:>16} {:>16} {:>6}",
                mae.model.name(),
                mae.domain.tag(),
                format!("{:.2}±{:.2}", mae.mean, mae.std),
                format!("{:.2}±{:.2}", f1.mean, f1.std),
                mae.n_seeds
            );
        }
        for (seed, e) in self.failures() {
            let _ = writeln!(out, "seed {seed} failed: {e}");
        }
        out
    }

    /// One JSON object per row.
    pub fn to_json_lines(&self) -> String {
        self.rows
            .iter()
            .map(|r| serde_json::to_string(r).expect("report rows serialize") + "\n")
            .collect()
    }

    /// Writes `report.txt` and `report.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [("report.txt", self.to_table()), ("report.jsonl", self.to_json_lines())] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::DomainMetrics;

    fn result(model: ModelKind, domain: Domain, mae: f64) -> ModelResult {
        ModelResult {
            model,
            domain,
            metrics: DomainMetrics {
                mae_percent: mae,
                f1_percent: 50.0,
                n_test: 10,
            },
            epochs: 3,
        }
    }

    fn outcome(seed: u64, mae: f64) -> SeedOutcome {
        SeedOutcome {
            seed,
            result: Ok(vec![result(ModelKind::Cmf, Domain::Source, mae), result(ModelKind::Cmf, Domain::Target, mae + 1.0)]),
        }
    }

    #[test]
    fn aggregates_with_sample_std_and_skips_failures() {
        let outcomes = vec![
            outcome(0, 10.0),
            SeedOutcome {
                seed: 1,
                result: Err("boom".into()),
            },
            outcome(2, 14.0),
        ];
        let r = ExperimentReport::from_outcomes(&[ModelKind::Cmf], outcomes).unwrap();
        let row = r.get(ModelKind::Cmf, Domain::Target, Metric::Mae).unwrap();
        assert_eq!(row.mean, 13.0);
        assert!((row.std - 8f64.sqrt()).abs() < 1e-12);
        assert_eq!(row.n_seeds, 2);
        assert_eq!(r.failures().collect::<Vec<_>>(), vec![(1, "boom")]);
        assert!(r.to_table().contains("seed 1 failed: boom"));
    }

    #[test]
    fn all_failed_is_eval_error() {
        let outcomes = vec![SeedOutcome {
            seed: 0,
            result: Err("x".into()),
        }];
        assert!(matches!(ExperimentReport::from_outcomes(&[ModelKind::Mf], outcomes), Err(Error::Eval(_))));
    }

    #[test]
    fn json_lines_have_all_fields() {
        let r = ExperimentReport::from_outcomes(&[ModelKind::Cmf], vec![outcome(0, 10.0)]).unwrap();
        let lines = r.to_json_lines();
        assert_eq!(lines.lines().count(), 4);
        let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
        assert_eq!(first["model"], "cmf");
        assert_eq!(first["domain"], "S");
        assert_eq!(first["metric"], "mae");
        assert_eq!(first["mean"], 10.0);
        assert_eq!(first["std"], 0.0);
        assert_eq!(first["n_seeds"], 1);
    }
}
