use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{InteractionMatrix, Rating};
use crate::domain::Domain;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Standard,
    ColdStart,
}

/// Train/validation/test partition of one domain's ratings.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSplit {
    pub domain: Domain,
    pub mode: SplitMode,
    pub cold_fraction: Option<f64>,
    /// Items whose ratings were all moved to the test set (cold-start only).
    pub cold_items: Vec<usize>,
    pub train: Vec<Rating>,
    pub validation: Vec<Rating>,
    pub test: Vec<Rating>,
}

impl DomainSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Splits for both domains.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub source: DomainSplit,
    pub target: DomainSplit,
}

impl DatasetSplit {
    pub fn domain(&self, d: Domain) -> &DomainSplit {
        match d {
            Domain::Source => &self.source,
            Domain::Target => &self.target,
        }
    }
}

/// Shuffles records with `seed` and cuts them 60/20/20. Validation and test
/// sizes round down; the remainder goes to train.
pub fn split_standard(m: &InteractionMatrix, seed: u64) -> Result<DomainSplit> {
    let n = m.records.len();
    if n < 5 {
        return Err(Error::Data(format!(
            "domain {} has {n} ratings, at least 5 are needed for a 6:2:2 split",
            m.domain
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = m.records.clone();
    records.shuffle(&mut rng);
    let n_val = n / 5;
    let n_test = n / 5;
    let n_train = n - n_val - n_test;
    let test = records.split_off(n_train + n_val);
    let validation = records.split_off(n_train);
    Ok(DomainSplit {
        domain: m.domain,
        mode: SplitMode::Standard,
        cold_fraction: None,
        cold_items: Vec::new(),
        train: records,
        validation,
        test,
    })
}

/// Holds out a random `cold_fraction` of the rated items: every rating of
/// those items becomes test data. The rest is cut 75/25 into train and
/// validation (validation rounds down).
pub fn split_cold_start(m: &InteractionMatrix, cold_fraction: f64, seed: u64) -> Result<DomainSplit> {
    if !(cold_fraction > 0.0 && cold_fraction < 1.0) {
        return Err(Error::Config(format!("cold_fraction {cold_fraction} must lie in (0, 1)")));
    }
    let mut rated: Vec<usize> = m.records.iter().map(|r| r.item).collect::<HashSet<_>>().into_iter().collect();
    rated.sort_unstable();
    let n_cold = (cold_fraction * rated.len() as f64).round() as usize;
    if n_cold == 0 || n_cold >= rated.len() {
        return Err(Error::Config(format!(
            "cold_fraction {cold_fraction} selects {n_cold} of {} rated items in domain {}",
            rated.len(),
            m.domain
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rated.shuffle(&mut rng);
    let mut cold_items: Vec<usize> = rated[..n_cold].to_vec();
    cold_items.sort_unstable();
    let cold: HashSet<usize> = cold_items.iter().copied().collect();

    let (test, mut warm): (Vec<Rating>, Vec<Rating>) = m.records.iter().partition(|r| cold.contains(&r.item));
    warm.shuffle(&mut rng);
    let n_val = warm.len() / 4;
    let validation = warm.split_off(warm.len() - n_val);
    Ok(DomainSplit {
        domain: m.domain,
        mode: SplitMode::ColdStart,
        cold_fraction: Some(cold_fraction),
        cold_items,
        train: warm,
        validation,
        test,
    })
}
