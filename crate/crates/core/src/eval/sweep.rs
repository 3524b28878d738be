use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiment::{evaluate_models, item_knowledge, split_for_seed, ExperimentConfig, KnowledgeInput, ModelKind, ModelResult};
use super::report::{ExperimentReport, SeedOutcome};
use crate::error::{Error, Result};
use crate::interactions::{RatingData, SplitMode};

/// Cold-start fractions of the default sweep.
pub const DEFAULT_COLD_FRACTIONS: [f64; 3] = [0.1, 0.2, 0.3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub cold_fractions: Vec<f64>,
    /// Models trained on the cold-start splits; empty means the experiment's models.
    pub cold_models: Vec<ModelKind>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            cold_fractions: DEFAULT_COLD_FRACTIONS.to_vec(),
            cold_models: Vec::new(),
        }
    }
}

/// Standard-split results plus one report per cold-start fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub standard: ExperimentReport,
    pub cold: Vec<(f64, ExperimentReport)>,
}

impl SweepReport {
    pub fn to_table(&self) -> String {
        let mut out = format!("standard split\n{}", self.standard.to_table());
        for (f, r) in &self.cold {
            out += &format!("\ncold start, fraction {f}\n{}", r.to_table());
        }
        out
    }

    /// JSON lines of every report, each row tagged with its split.
    pub fn to_json_lines(&self) -> String {
        let tagged = |split: String, r: &ExperimentReport| -> String {
            r.rows
                .iter()
                .map(|row| {
                    let mut v = serde_json::to_value(row).expect("report rows serialize");
                    v["split"] = serde_json::Value::String(split.clone());
                    v.to_string() + "\n"
                })
                .collect()
        };
        let mut out = tagged("standard".into(), &self.standard);
        for (f, r) in &self.cold {
            out += &tagged(format!("cold_{f}"), r);
        }
        out
    }
}

/// Runs the standard split and every cold-start fraction for each seed,
/// training stage 1 once per seed and sharing it across the splits.
pub fn run_sweep(data: &RatingData, knowledge: KnowledgeInput<'_>, base: &ExperimentConfig, sweep: &SweepConfig) -> Result<SweepReport> {
    base.validate()?;
    for &f in &sweep.cold_fractions {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!("cold fraction {f} must lie in (0, 1)")));
        }
    }
    let cold_cfg = ExperimentConfig {
        models: if sweep.cold_models.is_empty() {
            base.models.clone()
        } else {
            sweep.cold_models.clone()
        },
        ..base.clone()
    };
    let needs_kg = base.needs_kg() || cold_cfg.needs_kg();
    if needs_kg && matches!(knowledge, KnowledgeInput::None) {
        return Err(Error::Config("KG-aware models selected but no KG or embeddings given".into()));
    }
    let n_settings = 1 + sweep.cold_fractions.len();
    let run = |&seed: &u64| -> Vec<SeedOutcome> {
        let wrap = |result: Result<Vec<ModelResult>>| SeedOutcome {
            seed,
            result: result.map_err(|e| e.to_string()),
        };
        let k = if needs_kg {
            match item_knowledge(data, knowledge, &base.stage1, seed) {
                Ok(k) => k,
                Err(e) => {
                    let msg = e.to_string();
                    return (0..n_settings)
                        .map(|_| SeedOutcome {
                            seed,
                            result: Err(msg.clone()),
                        })
                        .collect();
                }
            }
        } else {
            None
        };
        let mut out = Vec::with_capacity(n_settings);
        out.push(wrap(
            split_for_seed(data, SplitMode::Standard, base.cold_fraction, seed).and_then(|s| evaluate_models(data, &s, k.clone(), base, seed)),
        ));
        for &f in &sweep.cold_fractions {
            out.push(wrap(
                split_for_seed(data, SplitMode::ColdStart, f, seed).and_then(|s| evaluate_models(data, &s, k.clone(), &cold_cfg, seed)),
            ));
        }
        out
    };
    let per_seed: Vec<Vec<SeedOutcome>> = if base.parallel {
        base.seeds.par_iter().map(run).collect()
    } else {
        base.seeds.iter().map(run).collect()
    };
    let mut by_setting: Vec<Vec<SeedOutcome>> = vec![Vec::new(); n_settings];
    for outcomes in per_seed {
        for (slot, o) in by_setting.iter_mut().zip(outcomes) {
            slot.push(o);
        }
    }
    let mut settings = by_setting.into_iter();
    let standard = ExperimentReport::from_outcomes(&base.models, settings.next().expect("standard setting"))?;
    let cold = sweep
        .cold_fractions
        .iter()
        .zip(settings)
        .map(|(&f, outcomes)| Ok((f, ExperimentReport::from_outcomes(&cold_cfg.models, outcomes)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { standard, cold })
}
