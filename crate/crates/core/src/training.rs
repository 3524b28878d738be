//! Epoch driver shared by every stage-2 model: early stopping on validation
//! loss, best-epoch restore and the line-oriented training log.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::ParameterStore;

pub const DEFAULT_MAX_EPOCHS: usize = 200;
pub const DEFAULT_EARLY_STOP_WINDOW: usize = 10;

/// Training losses of one epoch, averaged over its minibatches.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpochLosses {
    pub source: f64,
    pub target: f64,
    pub mi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: EpochLosses,
    pub validation: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_validation: f64,
}

impl TrainLog {
    pub fn epochs_run(&self) -> usize {
        self.records.len()
    }

    /// Tab-separated lines: `epoch train_S train_T L_mul validation`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\ttrain_source\ttrain_target\tmi\tvalidation\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{}\t{:?}\t{:?}\t{:?}\t{:?}",
                r.epoch, r.train.source, r.train.target, r.train.mi, r.validation
            );
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// Tracks the best validation loss and counts non-improving epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    window: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    /// An epoch improves only if its loss is strictly below the best so far.
    pub fn observe(&mut self, epoch: usize, validation: f64) -> Verdict {
        if validation < self.best {
            self.best = validation;
            self.best_epoch = epoch;
            self.stale = 0;
            return Verdict::Improved;
        }
        self.stale += 1;
        if self.stale >= self.window {
            Verdict::Stop
        } else {
            Verdict::Continue
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

/// Runs epochs until early stopping or `max_epochs`, then restores the
/// parameters of the best validation epoch into `store`.
///
/// `run_epoch` performs one epoch of updates on the store; `validate`
/// evaluates the validation loss afterwards.
pub fn fit<E, V>(
    store: &mut ParameterStore,
    max_epochs: usize,
    early_stop_window: usize,
    mut run_epoch: E,
    mut validate: V,
) -> Result<TrainLog>
where
    E: FnMut(&mut ParameterStore, usize) -> Result<EpochLosses>,
    V: FnMut(&ParameterStore) -> Result<f64>,
{
    if max_epochs == 0 {
        return Err(Error::Config("max_epochs must be at least 1".into()));
    }
    let mut stopper = EarlyStopping::new(early_stop_window);
    let mut best = store.clone();
    let mut log = TrainLog::default();
    for epoch in 1..=max_epochs {
        let train = run_epoch(store, epoch)?;
        let validation = validate(store)?;
        if !(train.source.is_finite() && train.target.is_finite() && train.mi.is_finite() && validation.is_finite()) {
            return Err(Error::Training(format!("non-finite loss at epoch {epoch}")));
        }
        log.records.push(EpochRecord { epoch, train, validation });
        match stopper.observe(epoch, validation) {
            Verdict::Improved => best.clone_from(store),
            Verdict::Continue => {}
            Verdict::Stop => break,
        }
    }
    store.copy_values_from(&best)?;
    log.best_epoch = stopper.best_epoch();
    log.best_validation = stopper.best();
    Ok(log)
}
