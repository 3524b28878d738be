use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::interactions::{InteractionMatrix, Rating, RatingData, Vocab};
use crate::kg::{AlignmentTable, KnowledgeGraph, RawTriple};
use crate::numerics::{dot, Tensor2};

/// Cumulative score quantiles separating ratings 1|2, 2|3, 3|4 and 4|5.
pub const RATING_QUANTILES: [f64; 4] = [0.1, 0.25, 0.5, 0.8];

/// Parameters of the planted-factor benchmark.
///
/// Users carry an offset coordinate, items a quality coordinate driven by
/// their KG community, and both carry `latent_dim - 2` interaction factors
/// scaled by `interaction`. Communities (genre hubs) are shared by the two
/// domains; attribute entities are per domain and track an item's quality
/// relative to its community.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_users: usize,
    /// Items in the source and target domain.
    pub n_items: [usize; 2],
    pub latent_dim: usize,
    pub n_communities: usize,
    /// Standard deviation of the Gaussian noise added to each score.
    pub noise: f64,
    /// Fraction of user–item pairs rated in each domain.
    pub density: [f64; 2],
    /// Spread of item factors around their community centroid.
    pub item_spread: f64,
    /// Scale of the user–item interaction factors.
    pub interaction: f64,
    /// Attribute entities per community and domain.
    pub attributes_per_community: usize,
    /// Probability that an item links to the attribute matching its quality tier.
    pub attribute_fidelity: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_users: 300,
            n_items: [200, 200],
            latent_dim: 8,
            n_communities: 4,
            noise: 0.3,
            density: [0.05, 0.02],
            item_spread: 0.5,
            interaction: 0.5,
            attributes_per_community: 3,
            attribute_fidelity: 0.8,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_items.contains(&0) || self.n_communities == 0 || self.attributes_per_community == 0 {
            return Err(Error::Config("synthetic counts must be positive".into()));
        }
        if self.latent_dim < 3 {
            return Err(Error::Config(format!("latent_dim {} must be at least 3", self.latent_dim)));
        }
        for v in [self.noise, self.item_spread, self.interaction] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("synthetic scale {v} must be finite and >= 0")));
            }
        }
        if !(0.0..=1.0).contains(&self.attribute_fidelity) {
            return Err(Error::Config("attribute_fidelity must lie in [0, 1]".into()));
        }
        for d in Domain::BOTH {
            let rho = self.density[d.index()];
            let n = (rho * (self.n_users * self.n_items[d.index()]) as f64).round();
            if !(rho > 0.0 && rho <= 1.0) || n < 1.0 {
                return Err(Error::Config(format!("density {rho} of domain {d} is infeasible")));
            }
        }
        Ok(())
    }
}

/// Planted parameters behind a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    pub user_factors: Tensor2,
    pub item_factors: [Tensor2; 2],
    pub communities: [Vec<usize>; 2],
    /// Score cut points per domain, ascending.
    pub thresholds: [[f64; 4]; 2],
}

impl SyntheticTruth {
    /// Noise-free rating implied by the planted factors.
    pub fn rating(&self, domain: Domain, user: usize, item: usize) -> u8 {
        let s = dot(self.user_factors.row(user), self.item_factors[domain.index()].row(item));
        quantize(s, &self.thresholds[domain.index()])
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub kg: KnowledgeGraph,
    pub alignment: AlignmentTable,
    pub ratings: RatingData,
    pub truth: SyntheticTruth,
}

fn quantize(score: f64, thresholds: &[f64; 4]) -> u8 {
    1 + thresholds.iter().filter(|&&t| score >= t).count() as u8
}

pub fn user_name(u: usize) -> String {
    format!("user_{u}")
}

pub fn item_name(d: Domain, i: usize) -> String {
    format!("{}_item_{i}", d.tag().to_lowercase())
}

fn item_entity(d: Domain, i: usize) -> String {
    format!("item:{}:{i}", d.tag())
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.latent_dim;
    let k = d - 2;
    let inter = spec.interaction / (k as f64).sqrt();
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };

    // Users: [offset, 1, interaction factors].
    let mut users = Tensor2::zeros(spec.n_users, d);
    for u in 0..spec.n_users {
        let row = users.row_mut(u);
        row[0] = normal(&mut rng);
        row[1] = 1.0;
        for v in &mut row[2..] {
            *v = inter * normal(&mut rng);
        }
    }
    // Community centroids: [1, quality, interaction factors], shared by both domains.
    let mut centroids = Tensor2::zeros(spec.n_communities, d);
    for c in 0..spec.n_communities {
        let row = centroids.row_mut(c);
        row[0] = 1.0;
        for v in &mut row[1..] {
            *v = normal(&mut rng);
        }
    }

    let mut raw = Vec::new();
    let mut alignment_pairs = Vec::new();
    let mut item_factors = [Tensor2::zeros(0, d), Tensor2::zeros(0, d)];
    let mut communities = [Vec::new(), Vec::new()];
    let n_attr = spec.attributes_per_community;
    // Equal-mass tiers of a standard normal.
    let tier_cuts: Vec<f64> = (1..n_attr).map(|j| normal_quantile(j as f64 / n_attr as f64)).collect();
    for dom in Domain::BOTH {
        let n = spec.n_items[dom.index()];
        let mut items = Tensor2::zeros(n, d);
        let mut comm = Vec::with_capacity(n);
        for i in 0..n {
            let c = rng.gen_range(0..spec.n_communities);
            comm.push(c);
            let deviation = normal(&mut rng);
            let row = items.row_mut(i);
            row.copy_from_slice(centroids.row(c));
            row[1] += spec.item_spread * deviation;
            for v in &mut row[2..] {
                *v += spec.item_spread * normal(&mut rng);
            }
            let entity = item_entity(dom, i);
            raw.push(RawTriple::new(entity.clone(), "has_genre", format!("genre:{c}")));
            raw.push(RawTriple::new(format!("genre:{c}"), "genre_of", entity.clone()));
            let tier = if rng.gen_bool(spec.attribute_fidelity) {
                tier_cuts.iter().filter(|&&t| deviation >= t).count()
            } else {
                rng.gen_range(0..n_attr)
            };
            let attr = format!("attr:{}:{c}:{tier}", dom.tag());
            raw.push(RawTriple::new(entity.clone(), "has_attribute", attr.clone()));
            raw.push(RawTriple::new(attr, "attribute_of", entity.clone()));
            alignment_pairs.push((dom, item_name(dom, i), entity));
        }
        item_factors[dom.index()] = items;
        communities[dom.index()] = comm;
    }
    let kg = KnowledgeGraph::from_raw(&raw);
    let mut alignment = AlignmentTable::new();
    for (dom, item, entity) in &alignment_pairs {
        alignment.insert(*dom, item, kg.entity_id(entity).expect("entity was just added"))?;
    }

    let mut user_vocab = Vocab::new();
    for u in 0..spec.n_users {
        user_vocab.intern(&user_name(u));
    }
    let mut thresholds = [[0.0; 4]; 2];
    let mut matrices = Vec::with_capacity(2);
    for dom in Domain::BOTH {
        let items = &item_factors[dom.index()];
        let n_items = items.rows();
        let mut scores = Vec::with_capacity(spec.n_users * n_items);
        for u in 0..spec.n_users {
            for i in 0..n_items {
                scores.push(dot(users.row(u), items.row(i)));
            }
        }
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        let cuts = RATING_QUANTILES.map(|q| sorted[((q * sorted.len() as f64) as usize).min(sorted.len() - 1)]);
        thresholds[dom.index()] = cuts;

        let total = spec.n_users * n_items;
        let n_rated = (spec.density[dom.index()] * total as f64).round() as usize;
        let mut picked = sample(&mut rng, total, n_rated).into_vec();
        picked.sort_unstable();
        let mut item_vocab = Vocab::new();
        for i in 0..n_items {
            item_vocab.intern(&item_name(dom, i));
        }
        let records = picked
            .into_iter()
            .map(|cell| {
                let (u, i) = (cell / n_items, cell % n_items);
                let noisy = scores[cell] + spec.noise * normal(&mut rng);
                Rating {
                    user: u,
                    item: i,
                    value: quantize(noisy, &cuts),
                }
            })
            .collect();
        matrices.push(InteractionMatrix::new(dom, spec.n_users, item_vocab, records)?);
    }
    let target = matrices.pop().unwrap();
    let source = matrices.pop().unwrap();
    Ok(SyntheticData {
        kg,
        alignment,
        ratings: RatingData {
            users: user_vocab,
            source,
            target,
        },
        truth: SyntheticTruth {
            user_factors: users,
            item_factors,
            communities,
            thresholds,
        },
    })
}

fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}
