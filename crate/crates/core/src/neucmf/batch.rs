use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::ItemKnowledge;
use crate::domain::Domain;
use crate::error::{Error, Result};

/// One item / KG-row pair for the discriminator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MiPair {
    pub domain: Domain,
    pub item: usize,
    /// Row of the frozen KG embedding matrix paired with the item.
    pub kg_row: usize,
    pub positive: bool,
}

/// Positives first (source half, then target half), then one negative per
/// positive in the same order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiBatch {
    pub pairs: Vec<MiPair>,
}

impl MiBatch {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|p| p.positive).count()
    }
}

pub fn make_mi_batch(knowledge: &ItemKnowledge, batch_size: usize, seed: u64) -> Result<MiBatch> {
    make_mi_batch_with(knowledge, batch_size, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Draws `batch_size / 2` aligned items per domain (with replacement) as
/// positives. Negatives keep the items but take the KG rows in a random
/// cyclic order, so no pair keeps its own row position.
pub fn make_mi_batch_with<R: Rng + ?Sized>(knowledge: &ItemKnowledge, batch_size: usize, rng: &mut R) -> Result<MiBatch> {
    let per_domain = batch_size / 2;
    if per_domain == 0 {
        return Err(Error::Config(format!("mi batch size {batch_size} leaves no positives per domain")));
    }
    let mut pairs = Vec::with_capacity(4 * per_domain);
    for d in Domain::BOTH {
        let aligned = knowledge.aligned_items(d);
        if aligned.is_empty() {
            return Err(Error::Config(format!("domain {d} has no items aligned to the KG")));
        }
        for _ in 0..per_domain {
            let item = aligned[rng.gen_range(0..aligned.len())];
            pairs.push(MiPair {
                domain: d,
                item,
                kg_row: knowledge.rows[d.index()][item].expect("aligned item"),
                positive: true,
            });
        }
    }
    let n = pairs.len();
    let perm = sattolo(n, rng);
    for k in 0..n {
        pairs.push(MiPair {
            kg_row: pairs[perm[k]].kg_row,
            positive: false,
            ..pairs[k]
        });
    }
    Ok(MiBatch { pairs })
}

/// Uniform random single-cycle permutation; `perm[k] != k` for `n >= 2`.
fn sattolo<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..i);
        perm.swap(i, j);
    }
    perm
}
