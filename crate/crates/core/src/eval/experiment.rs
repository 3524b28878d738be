use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{f1_at_threshold, mae};
use super::report::{ExperimentReport, SeedOutcome};
use crate::baselines::{cmf_train, mf_train, ncf_train, CmfModel, DomainData, FactorConfig, MfModel, NcfModel, CMF_KIND};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::interactions::{split_cold_start, split_standard, DatasetSplit, Rating, RatingData, SplitMode};
use crate::kg::{AlignmentTable, KnowledgeGraph};
use crate::kg_encoder::{train_kg_encoder, KgTrainConfig};
use crate::neucmf::{self, FusionVariant, ItemKnowledge, NeuCmfConfig, NeuCmfModel, TrainData};
use crate::numerics::{Checkpoint, Tensor2};
use crate::training::TrainLog;

/// Number of repeated runs when none are configured.
pub const DEFAULT_RUNS: usize = 20;

/// Recommenders the harness can train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Biased MF on each domain separately.
    Mf,
    /// Single-domain neural CF on each domain separately.
    Ncf,
    /// Collective MF with a shared user table.
    Cmf,
    /// Two-domain neural CMF without knowledge.
    Neucmf,
    /// Neural CMF with raw KG embeddings concatenated into the heads.
    NmfKg,
    /// Neural CMF with refined KG embeddings concatenated into the heads.
    NcmfKgT,
    /// Neural CMF coupled to the KG through the discriminator.
    NcmfKgMul,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Mf,
        ModelKind::Ncf,
        ModelKind::Cmf,
        ModelKind::Neucmf,
        ModelKind::NmfKg,
        ModelKind::NcmfKgT,
        ModelKind::NcmfKgMul,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mf => "mf",
            ModelKind::Ncf => "ncf",
            ModelKind::Cmf => "cmf",
            ModelKind::Neucmf => "neucmf",
            ModelKind::NmfKg => "nmf_kg",
            ModelKind::NcmfKgT => "ncmf_kg_t",
            ModelKind::NcmfKgMul => "ncmf_kg_mul",
        }
    }

    /// Fusion variant for the KG-aware models.
    pub fn fusion(self) -> Option<FusionVariant> {
        match self {
            ModelKind::NmfKg => Some(FusionVariant::RawConcat),
            ModelKind::NcmfKgT => Some(FusionVariant::RefinedConcat),
            ModelKind::NcmfKgMul => Some(FusionVariant::MutualInfo),
            _ => None,
        }
    }

    pub fn uses_kg(self) -> bool {
        self.fusion().is_some()
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub models: Vec<ModelKind>,
    /// One run per seed. Each seed drives the split, stage 1 and stage 2.
    pub seeds: Vec<u64>,
    pub split: SplitMode,
    /// Fraction of items held out entirely in a cold-start split.
    pub cold_fraction: f64,
    pub stage1: KgTrainConfig,
    /// Shared by every neural model; the fusion variant is set per model.
    pub stage2: NeuCmfConfig,
    pub factor: FactorConfig,
    /// Run seeds on the rayon pool.
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            models: vec![ModelKind::Ncf, ModelKind::Cmf, ModelKind::NcmfKgMul],
            seeds: (0..DEFAULT_RUNS as u64).collect(),
            split: SplitMode::Standard,
            cold_fraction: 0.2,
            stage1: KgTrainConfig::default(),
            stage2: NeuCmfConfig::default(),
            factor: FactorConfig::default(),
            parallel: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("no models selected".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds configured".into()));
        }
        if self.split == SplitMode::ColdStart && !(self.cold_fraction > 0.0 && self.cold_fraction < 1.0) {
            return Err(Error::Config(format!("cold_fraction {} must lie in (0, 1)", self.cold_fraction)));
        }
        self.stage1.validate()?;
        self.stage2.validate()?;
        self.factor.validate()
    }

    pub fn needs_kg(&self) -> bool {
        self.models.iter().any(|m| m.uses_kg())
    }
}

/// Side information available to the KG-aware models.
#[derive(Debug, Clone, Copy)]
pub enum KnowledgeInput<'a> {
    None,
    /// Stage 1 is trained for every seed.
    Graph {
        kg: &'a KnowledgeGraph,
        alignment: &'a AlignmentTable,
    },
    /// Embeddings pretrained once and reused by every seed.
    Pretrained {
        embeddings: &'a Tensor2,
        alignment: &'a AlignmentTable,
    },
}

/// Test metrics of one model on one domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainMetrics {
    pub mae_percent: f64,
    pub f1_percent: f64,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub model: ModelKind,
    pub domain: Domain,
    pub metrics: DomainMetrics,
    /// Epochs run before early stopping.
    pub epochs: usize,
}

/// Scores predictions for one domain's test ratings.
pub fn score(test: &[Rating], predict: impl Fn(&Rating) -> Result<f64>) -> Result<DomainMetrics> {
    let preds = test.iter().map(&predict).collect::<Result<Vec<f64>>>()?;
    let targets: Vec<f64> = test.iter().map(Rating::target).collect();
    let raw: Vec<u8> = test.iter().map(|r| r.value).collect();
    Ok(DomainMetrics {
        mae_percent: mae(&preds, &targets)?,
        f1_percent: f1_at_threshold(&preds, &raw)?,
        n_test: test.len(),
    })
}

/// Splits both domains for one run. The target domain uses a derived seed
/// so the two partitions are not shuffled identically.
pub fn split_for_seed(data: &RatingData, mode: SplitMode, cold_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    let seeds = [seed, seed ^ 0x9e37_79b9_7f4a_7c15];
    let split = |d: Domain| match mode {
        SplitMode::Standard => split_standard(data.matrix(d), seeds[d.index()]),
        SplitMode::ColdStart => split_cold_start(data.matrix(d), cold_fraction, seeds[d.index()]),
    };
    Ok(DatasetSplit {
        source: split(Domain::Source)?,
        target: split(Domain::Target)?,
    })
}

/// Item knowledge for one run, training stage 1 if needed.
pub fn item_knowledge(data: &RatingData, knowledge: KnowledgeInput<'_>, stage1: &KgTrainConfig, seed: u64) -> Result<Option<Arc<ItemKnowledge>>> {
    let (embeddings, alignment) = match knowledge {
        KnowledgeInput::None => return Ok(None),
        KnowledgeInput::Graph { kg, alignment } => {
            let cfg = KgTrainConfig {
                seed,
                ..stage1.clone()
            };
            (train_kg_encoder(kg, &cfg)?.embeddings, alignment)
        }
        KnowledgeInput::Pretrained { embeddings, alignment } => (embeddings.clone(), alignment),
    };
    let items = [&data.source.items, &data.target.items];
    Ok(Some(Arc::new(ItemKnowledge::from_alignment(alignment, embeddings, items)?)))
}

/// Trains and scores every configured model on an existing split.
/// A trained recommender of any kind.
#[derive(Debug, Clone)]
pub enum Trained {
    Mf(MfModel),
    Ncf(NcfModel),
    Cmf(CmfModel),
    Neural(NeuCmfModel),
}

impl Trained {
    /// The single domain a per-domain model was trained on.
    pub fn domain(&self) -> Option<Domain> {
        match self {
            Trained::Mf(m) => Some(m.domain),
            Trained::Ncf(m) => Some(m.domain),
            Trained::Cmf(_) | Trained::Neural(_) => None,
        }
    }

    pub fn predict(&self, user: usize, domain: Domain, item: usize) -> Result<f64> {
        if let Some(own) = self.domain().filter(|&own| own != domain) {
            return Err(Error::Lookup(format!("model trained on domain {own} asked about domain {domain}")));
        }
        match self {
            Trained::Mf(m) => m.predict(user, item),
            Trained::Ncf(m) => m.predict(user, item),
            Trained::Cmf(m) => m.predict(user, domain, item),
            Trained::Neural(m) => m.predict(user, domain, item),
        }
    }

    /// Checkpoint of the underlying parameters; per-domain models record
    /// their domain under the `trained_domain` key.
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = match self {
            Trained::Mf(m) => m.inner.to_checkpoint(),
            Trained::Ncf(m) => m.inner.to_checkpoint()?,
            Trained::Cmf(m) => m.to_checkpoint(),
            Trained::Neural(m) => m.to_checkpoint()?,
        };
        if let Some(d) = self.domain() {
            ck.metadata.insert("trained_domain".to_owned(), d.tag().to_owned());
        }
        Ok(ck)
    }

    /// Inverse of [`Trained::to_checkpoint`], dispatching on the `model` key.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let domain = ck.metadata.get("trained_domain").map(|t| t.parse::<Domain>()).transpose()?;
        match (ck.metadata.get("model").map(String::as_str), domain) {
            (Some(CMF_KIND), None) => Ok(Trained::Cmf(CmfModel::from_checkpoint(ck)?)),
            (Some(CMF_KIND), Some(domain)) => Ok(Trained::Mf(MfModel {
                domain,
                inner: CmfModel::from_checkpoint(ck)?,
            })),
            (Some(neucmf::MODEL_KIND), None) => Ok(Trained::Neural(NeuCmfModel::from_checkpoint(ck)?)),
            (Some(neucmf::MODEL_KIND), Some(domain)) => Ok(Trained::Ncf(NcfModel {
                domain,
                inner: NeuCmfModel::from_checkpoint(ck)?,
            })),
            (kind, _) => Err(Error::Config(format!("checkpoint holds unknown model kind {kind:?}"))),
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: ModelKind,
    pub trained: Trained,
    pub log: TrainLog,
}

/// Trains one model kind on the training and validation parts of `split`.
/// Per-domain baselines yield one model per domain, the others one model.
pub fn train_model(
    model: ModelKind,
    data: &RatingData,
    split: &DatasetSplit,
    knowledge: Option<Arc<ItemKnowledge>>,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<TrainedModel>> {
    let n_users = data.n_users();
    let n_items = [data.source.n_items(), data.target.n_items()];
    let two = TrainData {
        n_users,
        n_items,
        train: [&split.source.train, &split.target.train],
        validation: [&split.source.validation, &split.target.validation],
    };
    let one = |d: Domain| DomainData {
        domain: d,
        n_users,
        n_items: n_items[d.index()],
        train: &split.domain(d).train,
        validation: &split.domain(d).validation,
    };
    let factor = FactorConfig {
        seed,
        ..cfg.factor.clone()
    };
    let neural = |variant: FusionVariant, mi_weight: f64| NeuCmfConfig {
        variant,
        mi_weight,
        seed,
        ..cfg.stage2.clone()
    };
    let wrap = |trained: Trained, log: TrainLog| TrainedModel { model, trained, log };

    Ok(match model {
        ModelKind::Mf => Domain::BOTH
            .into_iter()
            .map(|d| mf_train(&one(d), &factor).map(|(m, log)| wrap(Trained::Mf(m), log)))
            .collect::<Result<_>>()?,
        ModelKind::Ncf => Domain::BOTH
            .into_iter()
            .map(|d| ncf_train(&one(d), &neural(FusionVariant::MutualInfo, 0.0)).map(|(m, log)| wrap(Trained::Ncf(m), log)))
            .collect::<Result<_>>()?,
        ModelKind::Cmf => {
            let (m, log) = cmf_train(&two, &factor)?;
            vec![wrap(Trained::Cmf(m), log)]
        }
        ModelKind::Neucmf => {
            let (m, log) = neucmf::train(&two, None, &neural(FusionVariant::MutualInfo, 0.0))?;
            vec![wrap(Trained::Neural(m), log)]
        }
        ModelKind::NmfKg | ModelKind::NcmfKgT | ModelKind::NcmfKgMul => {
            let k = knowledge.ok_or_else(|| Error::Config(format!("model {model} needs KG embeddings")))?;
            let variant = model.fusion().expect("KG model has a fusion variant");
            let (m, log) = neucmf::train(&two, Some(k), &neural(variant, cfg.stage2.mi_weight))?;
            vec![wrap(Trained::Neural(m), log)]
        }
    })
}

/// Scores `trained` on the test ratings of every domain it covers.
pub fn score_trained(trained: &[TrainedModel], split: &DatasetSplit) -> Result<Vec<ModelResult>> {
    let mut out = Vec::new();
    for d in Domain::BOTH {
        let Some(t) = trained.iter().find(|t| t.trained.domain().is_none_or(|own| own == d)) else {
            continue;
        };
        out.push(ModelResult {
            model: t.model,
            domain: d,
            metrics: score(&split.domain(d).test, |r| t.trained.predict(r.user, d, r.item))?,
            epochs: t.log.epochs_run(),
        });
    }
    Ok(out)
}

pub fn evaluate_models(
    data: &RatingData,
    split: &DatasetSplit,
    knowledge: Option<Arc<ItemKnowledge>>,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<ModelResult>> {
    let mut out = Vec::new();
    for &model in &cfg.models {
        let trained = train_model(model, data, split, knowledge.clone(), cfg, seed)?;
        out.extend(score_trained(&trained, split)?);
    }
    Ok(out)
}

pub fn run_seed(data: &RatingData, knowledge: KnowledgeInput<'_>, cfg: &ExperimentConfig, seed: u64) -> Result<Vec<ModelResult>> {
    let split = split_for_seed(data, cfg.split, cfg.cold_fraction, seed)?;
    let k = if cfg.needs_kg() {
        if matches!(knowledge, KnowledgeInput::None) {
            return Err(Error::Config("KG-aware models selected but no KG or embeddings given".into()));
        }
        item_knowledge(data, knowledge, &cfg.stage1, seed)?
    } else {
        None
    };
    evaluate_models(data, &split, k, cfg, seed)
}

/// Runs every seed and aggregates test metrics per model and domain.
///
/// A seed that fails is recorded in the report and excluded from the
/// aggregates; at least one seed must succeed.
pub fn run_experiment(data: &RatingData, knowledge: KnowledgeInput<'_>, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    if cfg.needs_kg() && matches!(knowledge, KnowledgeInput::None) {
        return Err(Error::Config("KG-aware models selected but no KG or embeddings given".into()));
    }
    let run = |&seed: &u64| {
        let result = run_seed(data, knowledge, cfg, seed);
        if let Err(e) = &result {
            log::warn!("seed {seed} failed: {e}");
        }
        SeedOutcome {
            seed,
            result: result.map_err(|e| e.to_string()),
        }
    };
    let outcomes: Vec<SeedOutcome> = if cfg.parallel {
        cfg.seeds.par_iter().map(run).collect()
    } else {
        cfg.seeds.iter().map(run).collect()
    };
    ExperimentReport::from_outcomes(&cfg.models, outcomes)
}
