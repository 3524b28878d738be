//! Command-line front end: a TOML run configuration, flag overrides, and one
//! subcommand per pipeline stage.
//!
//! Every run writes into a self-describing output directory:
//!
//! ```text
//! <output>/config.toml    effective configuration after overrides
//! <output>/data/          generated or preprocessed data files
//! <output>/logs/          per-epoch training logs
//! <output>/checkpoints/   model checkpoints
//! <output>/reports/       metric tables and JSON lines
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::eval::{
    generate_synthetic, item_knowledge, run_experiment, run_sweep, score_trained, split_for_seed, train_model,
    ExperimentConfig, KnowledgeInput, ModelKind, SweepConfig, SyntheticSpec,
};
use crate::interactions::{RatingData, SplitMode};
use crate::kg::{
    filter_kg, khop_subgraph, load_alignment, load_triples, write_triples, AlignmentTable, KnowledgeGraph, DEFAULT_KHOP,
    DEFAULT_MIN_ENTITY_FREQ, DEFAULT_MIN_RELATION_TRIPLES,
};
use crate::kg_encoder::{read_embeddings, train_kg_encoder, write_embeddings};
use crate::numerics::Tensor2;

#[derive(Debug, Parser)]
#[command(name = "kgcdr", version, about = "Knowledge-graph-aware cross-domain recommendation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Restrict the KG to the items' k-hop neighborhood and filter rare entities and relations.
    PrepareKg,
    /// Pretrain entity embeddings on the (prepared) KG.
    Pretrain,
    /// Train each configured model on the first seed's split and save checkpoints.
    Train,
    /// Repeated-seed evaluation of the configured models.
    Evaluate,
    /// Write a synthetic benchmark in the standard file formats.
    Synth,
    /// Standard split plus cold-start fractions.
    Sweep {
        /// Evaluate the three KG fusion variants instead of the configured models.
        #[arg(long)]
        ablation: bool,
    },
}

/// Flags that take precedence over the configuration file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML run configuration; relative paths inside it resolve against its directory.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true)]
    pub triples: Option<PathBuf>,
    #[arg(long, global = true)]
    pub alignment: Option<PathBuf>,
    #[arg(long, global = true)]
    pub ratings_source: Option<PathBuf>,
    #[arg(long, global = true)]
    pub ratings_target: Option<PathBuf>,
    #[arg(long, global = true)]
    pub embeddings: Option<PathBuf>,
    /// Model to run; repeat for several. Replaces the configured list.
    #[arg(long = "model", short, global = true)]
    pub models: Vec<ModelKind>,
    /// Comma-separated run seeds.
    #[arg(long, global = true, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Shorthand for seeds 0..N.
    #[arg(long, global = true, conflicts_with = "seeds")]
    pub runs: Option<u64>,
    #[arg(long, global = true, value_parser = parse_split)]
    pub split: Option<SplitMode>,
    #[arg(long, global = true)]
    pub cold_fraction: Option<f64>,
    /// Epoch cap for every stage-2 and baseline model.
    #[arg(long, global = true)]
    pub max_epochs: Option<usize>,
    #[arg(long, global = true)]
    pub stage1_epochs: Option<usize>,
    /// Pretrain stage 1 for every seed instead of reading an embedding file.
    #[arg(long, global = true)]
    pub retrain_kg: bool,
    /// Run seeds one after another.
    #[arg(long, global = true)]
    pub serial: bool,
}

fn parse_split(s: &str) -> std::result::Result<SplitMode, String> {
    match s {
        "standard" => Ok(SplitMode::Standard),
        "cold_start" | "cold-start" => Ok(SplitMode::ColdStart),
        other => Err(format!("unknown split {other:?} (standard or cold_start)")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub triples: Option<PathBuf>,
    /// `domain item entity` lines.
    pub alignment: Option<PathBuf>,
    pub ratings_source: Option<PathBuf>,
    pub ratings_target: Option<PathBuf>,
    /// Pretrained entity embeddings, one row per entity of `triples`.
    pub embeddings: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            triples: None,
            alignment: None,
            ratings_source: None,
            ratings_target: None,
            embeddings: None,
            output: PathBuf::from("runs/default"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KgSection {
    pub min_entity_freq: usize,
    pub min_relation_triples: usize,
    pub khop: usize,
    /// Train stage 1 once per seed rather than reading `paths.embeddings`.
    pub retrain_per_seed: bool,
}

impl Default for KgSection {
    fn default() -> Self {
        Self {
            min_entity_freq: DEFAULT_MIN_ENTITY_FREQ,
            min_relation_triples: DEFAULT_MIN_RELATION_TRIPLES,
            khop: DEFAULT_KHOP,
            retrain_per_seed: false,
        }
    }
}

/// Everything one invocation needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub kg: KgSection,
    pub experiment: ExperimentConfig,
    pub sweep: SweepConfig,
    pub synthetic: SyntheticSpec,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let p = &mut cfg.paths;
        for slot in [&mut p.triples, &mut p.alignment, &mut p.ratings_source, &mut p.ratings_target, &mut p.embeddings] {
            if let Some(rel) = slot.as_mut() {
                *rel = base.join(&*rel);
            }
        }
        p.output = base.join(&p.output);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        let p = &mut self.paths;
        let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
            if v.is_some() {
                slot.clone_from(v);
            }
        };
        set(&mut p.triples, &o.triples);
        set(&mut p.alignment, &o.alignment);
        set(&mut p.ratings_source, &o.ratings_source);
        set(&mut p.ratings_target, &o.ratings_target);
        set(&mut p.embeddings, &o.embeddings);
        if let Some(out) = &o.output {
            p.output.clone_from(out);
        }
        let e = &mut self.experiment;
        if !o.models.is_empty() {
            e.models.clone_from(&o.models);
        }
        if let Some(seeds) = &o.seeds {
            e.seeds.clone_from(seeds);
        }
        if let Some(n) = o.runs {
            e.seeds = (0..n).collect();
        }
        if let Some(split) = o.split {
            e.split = split;
        }
        if let Some(f) = o.cold_fraction {
            e.cold_fraction = f;
        }
        if let Some(n) = o.max_epochs {
            e.stage2.max_epochs = n;
            e.factor.max_epochs = n;
        }
        if let Some(n) = o.stage1_epochs {
            e.stage1.max_epochs = n;
        }
        if o.retrain_kg {
            self.kg.retrain_per_seed = true;
        }
        if o.serial {
            e.parallel = false;
        }
    }
}

/// Loads the configuration (or defaults) and applies the flags.
pub fn resolve_config(o: &Overrides) -> Result<RunConfig> {
    let mut cfg = match &o.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(o);
    Ok(cfg)
}

fn require<'a>(slot: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    let path = slot
        .as_deref()
        .ok_or_else(|| Error::Config(format!("paths.{key} is required for this command")))?;
    if !path.is_file() {
        return Err(Error::Config(format!("paths.{key} = {} does not exist", path.display())));
    }
    Ok(path)
}

/// Checks everything `command` needs before any output is written.
pub fn validate(cfg: &RunConfig, command: Command) -> Result<()> {
    let p = &cfg.paths;
    match command {
        Command::Synth => cfg.synthetic.validate(),
        Command::PrepareKg => {
            require(&p.triples, "triples")?;
            require(&p.alignment, "alignment")?;
            if cfg.kg.min_entity_freq == 0 || cfg.kg.min_relation_triples == 0 {
                return Err(Error::Config("kg thresholds must be at least 1".into()));
            }
            Ok(())
        }
        Command::Pretrain => {
            require(&p.triples, "triples")?;
            cfg.experiment.stage1.validate()
        }
        Command::Train | Command::Evaluate | Command::Sweep { .. } => {
            let e = experiment_for(cfg, command);
            e.validate()?;
            require(&p.ratings_source, "ratings_source")?;
            require(&p.ratings_target, "ratings_target")?;
            if let Command::Sweep { .. } = command {
                for &f in &cfg.sweep.cold_fractions {
                    if !(f > 0.0 && f < 1.0) {
                        return Err(Error::Config(format!("sweep cold fraction {f} must lie in (0, 1)")));
                    }
                }
            }
            let needs_kg = e.needs_kg() || (matches!(command, Command::Sweep { .. }) && cfg.sweep.cold_models.iter().any(|m| m.uses_kg()));
            if needs_kg {
                require(&p.triples, "triples")?;
                require(&p.alignment, "alignment")?;
                if !cfg.kg.retrain_per_seed {
                    require(&p.embeddings, "embeddings").map_err(|e| {
                        Error::Config(format!("{e}; KG-aware models need pretrained embeddings (run pretrain, or set kg.retrain_per_seed)"))
                    })?;
                }
            }
            Ok(())
        }
    }
}

fn experiment_for(cfg: &RunConfig, command: Command) -> ExperimentConfig {
    let mut e = cfg.experiment.clone();
    if let Command::Sweep { ablation: true } = command {
        e.models = vec![ModelKind::NmfKg, ModelKind::NcmfKgT, ModelKind::NcmfKgMul];
    }
    e
}

struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    /// Creates the fixed layout and records the effective configuration.
    fn create(cfg: &RunConfig) -> Result<Self> {
        let root = cfg.paths.output.clone();
        for sub in ["", "data", "logs", "checkpoints", "reports"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        let out = Self { root };
        out.write("config.toml", &cfg.to_toml())?;
        Ok(out)
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn write(&self, rel: &str, body: &str) -> Result<PathBuf> {
        let path = self.path(rel);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Validates, prepares the output directory and runs `command`.
/// Returns a short human-readable summary.
pub fn run(command: Command, cfg: &RunConfig) -> Result<String> {
    validate(cfg, command)?;
    let out = OutputDir::create(cfg)?;
    match command {
        Command::Synth => cmd_synth(cfg, &out),
        Command::PrepareKg => cmd_prepare_kg(cfg, &out),
        Command::Pretrain => cmd_pretrain(cfg, &out),
        Command::Train => cmd_train(cfg, &out),
        Command::Evaluate => cmd_evaluate(cfg, &out),
        Command::Sweep { .. } => cmd_sweep(cfg, command, &out),
    }
}

fn cmd_synth(cfg: &RunConfig, out: &OutputDir) -> Result<String> {
    let data = generate_synthetic(&cfg.synthetic)?;
    let kg = out.path("data/kg.tsv");
    write_triples(&kg, &data.kg)?;
    data.alignment.write(&out.path("data/alignment.tsv"), &data.kg)?;
    for d in Domain::BOTH {
        let path = out.path(&format!("data/ratings_{}.tsv", d.tag()));
        data.ratings.matrix(d).write(&path, &data.ratings.users)?;
    }
    Ok(format!(
        "wrote {} triples, {}+{} ratings to {}",
        data.kg.num_triples(),
        data.ratings.source.len(),
        data.ratings.target.len(),
        out.path("data").display()
    ))
}

/// One k-hop restriction followed by filtering, with the alignment carried along.
fn prepare_once(g: &KnowledgeGraph, alignment: &AlignmentTable, kg: &KgSection) -> Result<(KnowledgeGraph, AlignmentTable)> {
    let sub = khop_subgraph(g, &alignment.entities(), kg.khop);
    let filtered = filter_kg(&sub.raw_triples(), kg.min_entity_freq, kg.min_relation_triples)?;
    let (aligned, _) = alignment.remap(g, &filtered);
    Ok((filtered, aligned))
}

/// Repeats restriction and filtering until nothing changes, so running the
/// command on its own output reproduces it.
pub fn prepare_kg(g: &KnowledgeGraph, alignment: &AlignmentTable, kg: &KgSection) -> Result<(KnowledgeGraph, AlignmentTable)> {
    let (mut g, mut a) = prepare_once(g, alignment, kg)?;
    loop {
        let (g2, a2) = prepare_once(&g, &a, kg)?;
        let same = g2.num_triples() == g.num_triples() && Domain::BOTH.iter().all(|&d| a2.len(d) == a.len(d));
        g = g2;
        a = a2;
        if same {
            return Ok((g, a));
        }
    }
}

/// Entities, relations and triples within `k` hops of each domain's items.
pub fn kg_stats(g: &KnowledgeGraph, alignment: &AlignmentTable, k: usize) -> String {
    let mut out = String::from("domain\titems\tentities\trelations\ttriples\n");
    for d in Domain::BOTH {
        let seeds: Vec<_> = alignment.iter(d).map(|(_, e)| e).collect();
        let sub = khop_subgraph(g, &seeds, k);
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            d.tag(),
            seeds.len(),
            sub.num_entities(),
            sub.num_relations(),
            sub.num_triples()
        );
    }
    let _ = writeln!(out, "all\t{}\t{}\t{}\t{}", alignment.len(Domain::Source) + alignment.len(Domain::Target), g.num_entities(), g.num_relations(), g.num_triples());
    out
}

fn load_kg(path: &Path) -> Result<KnowledgeGraph> {
    let raw = load_triples(path)?;
    let g = KnowledgeGraph::from_raw(&raw);
    if g.is_empty() {
        return Err(Error::EmptyGraph(format!("{} holds no triples", path.display())));
    }
    Ok(g)
}

fn cmd_prepare_kg(cfg: &RunConfig, out: &OutputDir) -> Result<String> {
    let g = load_kg(require(&cfg.paths.triples, "triples")?)?;
    let (alignment, unknown) = load_alignment(require(&cfg.paths.alignment, "alignment")?, &g)?;
    if unknown > 0 {
        log::warn!("{unknown} alignment lines name entities absent from the KG");
    }
    let (filtered, aligned) = prepare_kg(&g, &alignment, &cfg.kg)?;
    write_triples(&out.path("data/kg_filtered.tsv"), &filtered)?;
    aligned.write(&out.path("data/alignment_filtered.tsv"), &filtered)?;
    let stats = kg_stats(&filtered, &aligned, cfg.kg.khop);
    out.write("reports/kg_stats.tsv", &stats)?;
    Ok(format!(
        "kept {} of {} triples, {} of {} entities\n{stats}",
        filtered.num_triples(),
        g.num_triples(),
        filtered.num_entities(),
        g.num_entities()
    ))
}

fn cmd_pretrain(cfg: &RunConfig, out: &OutputDir) -> Result<String> {
    let g = load_kg(require(&cfg.paths.triples, "triples")?)?;
    let outcome = train_kg_encoder(&g, &cfg.experiment.stage1)?;
    let path = out.path("data/embeddings.tsv");
    write_embeddings(&path, &outcome.embeddings)?;
    let mut log = String::from("epoch\tloss\treference_loss\n");
    for r in &outcome.log {
        let _ = writeln!(log, "{}\t{:?}\t{:?}", r.epoch, r.loss, r.reference_loss);
    }
    out.write("logs/stage1.tsv", &log)?;
    let last = outcome.log.last().map_or(f64::NAN, |r| r.reference_loss);
    Ok(format!(
        "{} x {} embeddings written to {} (final loss {last:.4})",
        outcome.embeddings.rows(),
        outcome.embeddings.cols(),
        path.display()
    ))
}

fn load_ratings(cfg: &RunConfig) -> Result<RatingData> {
    let (data, duplicates) = RatingData::load(
        require(&cfg.paths.ratings_source, "ratings_source")?,
        require(&cfg.paths.ratings_target, "ratings_target")?,
    )?;
    if duplicates > 0 {
        log::warn!("{duplicates} duplicate ratings ignored");
    }
    Ok(data)
}

/// The KG side inputs, loaded only when a KG-aware model runs.
struct Knowledge {
    kg: KnowledgeGraph,
    alignment: AlignmentTable,
    embeddings: Option<Tensor2>,
}

impl Knowledge {
    fn load(cfg: &RunConfig) -> Result<Self> {
        let kg = load_kg(require(&cfg.paths.triples, "triples")?)?;
        let (alignment, unknown) = load_alignment(require(&cfg.paths.alignment, "alignment")?, &kg)?;
        if unknown > 0 {
            log::warn!("{unknown} alignment lines name entities absent from the KG");
        }
        let embeddings = if cfg.kg.retrain_per_seed {
            None
        } else {
            let path = require(&cfg.paths.embeddings, "embeddings")?;
            let e = read_embeddings(path)?;
            if e.rows() != kg.num_entities() {
                return Err(Error::Shape(format!(
                    "{} has {} rows but the KG has {} entities",
                    path.display(),
                    e.rows(),
                    kg.num_entities()
                )));
            }
            Some(e)
        };
        Ok(Self { kg, alignment, embeddings })
    }

    fn input(&self) -> KnowledgeInput<'_> {
        match &self.embeddings {
            Some(embeddings) => KnowledgeInput::Pretrained {
                embeddings,
                alignment: &self.alignment,
            },
            None => KnowledgeInput::Graph {
                kg: &self.kg,
                alignment: &self.alignment,
            },
        }
    }
}

fn load_knowledge(cfg: &RunConfig, needed: bool) -> Result<Option<Knowledge>> {
    if needed {
        Knowledge::load(cfg).map(Some)
    } else {
        Ok(None)
    }
}

fn input_of(k: &Option<Knowledge>) -> KnowledgeInput<'_> {
    k.as_ref().map_or(KnowledgeInput::None, Knowledge::input)
}

fn cmd_train(cfg: &RunConfig, out: &OutputDir) -> Result<String> {
    let e = &cfg.experiment;
    let data = load_ratings(cfg)?;
    let knowledge = load_knowledge(cfg, e.needs_kg())?;
    let seed = e.seeds[0];
    let split = split_for_seed(&data, e.split, e.cold_fraction, seed)?;
    let k = if e.needs_kg() {
        item_knowledge(&data, input_of(&knowledge), &e.stage1, seed)?
    } else {
        None
    };
    let mut summary = String::new();
    let mut rows = String::new();
    for &model in &e.models {
        let trained = train_model(model, &data, &split, k.clone(), e, seed)?;
        for t in &trained {
            let name = match t.trained.domain() {
                Some(d) => format!("{model}_{}", d.tag()),
                None => model.to_string(),
            };
            t.log.write(&out.path(&format!("logs/{name}.tsv")))?;
            t.trained.to_checkpoint()?.save(&out.path(&format!("checkpoints/{name}.ckpt")))?;
        }
        for r in score_trained(&trained, &split)? {
            let _ = writeln!(
                summary,
                "{:<12} {}  MAE {:.2}  F1 {:.2}  epochs {}",
                model.name(),
                r.domain.tag(),
                r.metrics.mae_percent,
                r.metrics.f1_percent,
                r.epochs
            );
            rows += &(serde_json::to_string(&r).expect("results serialize") + "\n");
        }
    }
    out.write("reports/train.txt", &summary)?;
    out.write("reports/train.jsonl", &rows)?;
    Ok(summary)
}

fn cmd_evaluate(cfg: &RunConfig, out: &OutputDir) -> Result<String> {
    let e = &cfg.experiment;
    let data = load_ratings(cfg)?;
    let knowledge = load_knowledge(cfg, e.needs_kg())?;
    let report = run_experiment(&data, input_of(&knowledge), e)?;
    report.write(&out.path("reports"))?;
    Ok(report.to_table())
}

fn cmd_sweep(cfg: &RunConfig, command: Command, out: &OutputDir) -> Result<String> {
    let e = experiment_for(cfg, command);
    let needs_kg = e.needs_kg() || cfg.sweep.cold_models.iter().any(|m| m.uses_kg());
    let data = load_ratings(cfg)?;
    let knowledge = load_knowledge(cfg, needs_kg)?;
    let report = run_sweep(&data, input_of(&knowledge), &e, &cfg.sweep)?;
    let table = report.to_table();
    out.write("reports/sweep.txt", &table)?;
    out.write("reports/sweep.jsonl", &report.to_json_lines())?;
    Ok(table)
}

/// The line printed for a failed command, e.g. `error[config]: ...`.
pub fn error_line(e: &Error) -> String {
    format!("error[{}]: {}", e.kind().as_str(), e.detail())
}
