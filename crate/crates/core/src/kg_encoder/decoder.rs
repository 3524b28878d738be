use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, Triple};
use crate::numerics::sigmoid;

/// Maximum redraws when a corruption reproduces an existing triple.
pub const MAX_CORRUPTION_RETRIES: usize = 100;

/// Raw DistMult score `Σ_k h[k]·r[k]·t[k]`.
pub fn distmult_raw(e_h: &[f64], r_diag: &[f64], e_t: &[f64]) -> Result<f64> {
    if e_h.len() != r_diag.len() || e_t.len() != r_diag.len() {
        return Err(Error::Shape(format!(
            "distmult lengths {} / {} / {}",
            e_h.len(),
            r_diag.len(),
            e_t.len()
        )));
    }
    Ok(e_h.iter().zip(r_diag).zip(e_t).map(|((h, r), t)| (h * t) * r).sum())
}

/// DistMult score squashed to a probability.
pub fn distmult_score(e_h: &[f64], r_diag: &[f64], e_t: &[f64]) -> Result<f64> {
    distmult_raw(e_h, r_diag, e_t).map(sigmoid)
}

/// Positive triples with label 1 followed by their corruptions with label 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledTripleBatch {
    pub samples: Vec<(Triple, bool)>,
}

impl LabeledTripleBatch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.samples.iter().filter(|(_, y)| *y).count()
    }
}

/// Emits each positive plus one corruption with head or tail (fair coin)
/// replaced by a uniformly drawn entity.
///
/// Corruptions that land on an existing triple are redrawn up to
/// [`MAX_CORRUPTION_RETRIES`] times; after that the last draw is kept.
pub fn sample_negatives(g: &KnowledgeGraph, positives: &[Triple], seed: u64) -> LabeledTripleBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_negatives_with(g, positives, &mut rng)
}

pub fn sample_negatives_with<R: Rng + ?Sized>(g: &KnowledgeGraph, positives: &[Triple], rng: &mut R) -> LabeledTripleBatch {
    let n = g.num_entities();
    let mut samples: Vec<(Triple, bool)> = positives.iter().map(|&t| (t, true)).collect();
    if n == 0 {
        return LabeledTripleBatch { samples };
    }
    for &pos in positives {
        let replace_head = rng.gen_bool(0.5);
        let mut corrupt = pos;
        for _ in 0..=MAX_CORRUPTION_RETRIES {
            let e = EntityId(rng.gen_range(0..n));
            corrupt = if replace_head {
                Triple { head: e, ..pos }
            } else {
                Triple { tail: e, ..pos }
            };
            if !g.contains(&corrupt) {
                break;
            }
        }
        samples.push((corrupt, false));
    }
    LabeledTripleBatch { samples }
}
