use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::interactions::Rating;
use crate::numerics::{adam_step, finite_diff_report, sigmoid, uniform, AdamConfig, Tensor2};
use super::loss::total_loss_and_grad;

fn knowledge(rng: &mut ChaCha8Rng, kg_dim: usize) -> Arc<ItemKnowledge> {
    // Item 2 of each domain is unaligned.
    Arc::new(ItemKnowledge {
        embeddings: uniform(5, kg_dim, 1.0, rng),
        rows: [vec![Some(0), Some(1), None], vec![Some(2), Some(3), None]],
    })
}

fn ratings(rng: &mut ChaCha8Rng, n: usize) -> Vec<Rating> {
    let mut out: Vec<Rating> = Vec::new();
    while out.len() < n {
        let r = Rating {
            user: rng.gen_range(0..4),
            item: rng.gen_range(0..3),
            value: rng.gen_range(1..=5),
        };
        if !out.iter().any(|o| o.user == r.user && o.item == r.item) {
            out.push(r);
        }
    }
    out
}

/// 4 users, 3+3 items, parameters drawn at unit scale.
fn toy(variant: FusionVariant, seed: u64) -> (NeuCmfModel, Vec<Rating>, Vec<Rating>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = knowledge(&mut rng, 3);
    let mut m = NeuCmfModel::new(variant, 4, [3, 3], 4, Some(k), &mut rng).unwrap();
    let ids: Vec<_> = m.store.ids().collect();
    for id in ids {
        let (r, c) = m.store.value(id).shape();
        *m.store.value_mut(id) = uniform(r, c, 1.0, &mut rng);
    }
    let s = ratings(&mut rng, 6);
    let t = ratings(&mut rng, 5);
    (m, s, t)
}

#[test]
fn zero_tables_predict_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut m = NeuCmfModel::new(FusionVariant::MutualInfo, 3, [2, 2], 4, None, &mut rng).unwrap();
    for id in [m.layout.user_table, m.layout.item_tables[0], m.layout.item_tables[1]] {
        m.store.value_mut(id).fill(0.0);
    }
    for d in Domain::BOTH {
        for u in 0..3 {
            for i in 0..2 {
                assert_eq!(m.predict(u, d, i).unwrap(), 0.5);
            }
        }
    }
}

#[test]
fn hand_two_dim_prediction() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut m = NeuCmfModel::new(FusionVariant::MutualInfo, 1, [1, 1], 2, None, &mut rng).unwrap();
    *m.store.value_mut(m.layout.user_table) = Tensor2::row_vector(&[1.0, -2.0]);
    *m.store.value_mut(m.layout.item_tables[1]) = Tensor2::row_vector(&[0.5, 3.0]);
    let head = m.layout.heads[1];
    *m.store.value_mut(head.weight) = Tensor2::row_vector(&[0.2, 0.1, -0.4, 0.3]);
    m.store.value_mut(head.bias).set(0, 0, 0.05);
    // 0.2·1 + 0.1·(−2) + (−0.4)·0.5 + 0.3·3 + 0.05 = 0.75
    let expected = 1.0 / (1.0 + (-0.75f64).exp());
    assert!((m.predict(0, Domain::Target, 0).unwrap() - expected).abs() < 1e-15);
}

#[test]
fn out_of_range_ids() {
    let (m, _, _) = toy(FusionVariant::MutualInfo, 1);
    assert!(matches!(m.predict(4, Domain::Source, 0), Err(crate::Error::Lookup(_))));
    assert!(matches!(m.predict(0, Domain::Target, 3), Err(crate::Error::Lookup(_))));
}

#[test]
fn mse_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut m = NeuCmfModel::new(FusionVariant::MutualInfo, 2, [2, 2], 2, None, &mut rng).unwrap();
    for id in [m.layout.user_table, m.layout.item_tables[0]] {
        m.store.value_mut(id).fill(0.0);
    }
    let recs = [Rating { user: 0, item: 0, value: 1 }, Rating { user: 1, item: 1, value: 5 }];
    assert!((domain_loss(&m, Domain::Source, &recs).unwrap() - 0.25).abs() < 1e-15);

    // Bias at logit(0.75) predicts a rating of 4 exactly... up to rounding.
    m.store.value_mut(m.layout.heads[0].bias).set(0, 0, 3f64.ln());
    let fours = [Rating { user: 0, item: 1, value: 4 }, Rating { user: 1, item: 0, value: 4 }];
    assert!(domain_loss(&m, Domain::Source, &fours).unwrap() < 1e-30);
    assert!(domain_loss(&m, Domain::Source, &[]).is_err());
}

#[test]
fn domain_loss_ignores_record_order() {
    let (m, s, _) = toy(FusionVariant::RefinedConcat, 3);
    let mut rev = s.clone();
    rev.reverse();
    let a = domain_loss(&m, Domain::Source, &s).unwrap();
    let b = domain_loss(&m, Domain::Source, &rev).unwrap();
    assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
}

fn one_dim_disc(w: f64) -> NeuCmfModel {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let k = Arc::new(ItemKnowledge {
        embeddings: Tensor2::row_vector(&[1.0]),
        rows: [vec![Some(0)], vec![None]],
    });
    let mut m = NeuCmfModel::new(FusionVariant::MutualInfo, 1, [1, 1], 1, Some(k), &mut rng).unwrap();
    m.store.value_mut(m.layout.disc_weight.unwrap()).set(0, 0, w);
    m
}

#[test]
fn discriminator_oracles() {
    let m = one_dim_disc(0.5);
    let p = mi_discriminator(&m, &[2.0], &[1.0]).unwrap();
    assert!((p - 0.731_058_578_630_004_9).abs() < 1e-15);
    assert!((mi_discriminator(&m, &[2.0], &[-1.0]).unwrap() - (1.0 - p)).abs() < 1e-15);
    assert_eq!(mi_discriminator(&one_dim_disc(0.0), &[3.0], &[7.0]).unwrap(), 0.5);
    assert!(matches!(mi_discriminator(&m, &[1.0, 2.0], &[1.0]), Err(crate::Error::Shape(_))));
}

fn toy_mi_batch() -> MiBatch {
    let pair = |positive| MiPair {
        domain: Domain::Source,
        item: 0,
        kg_row: 0,
        positive,
    };
    MiBatch {
        pairs: vec![pair(true), pair(true), pair(false)],
    }
}

#[test]
fn mi_loss_oracles() {
    let zero = one_dim_disc(0.0);
    assert!((mi_loss(&zero, &toy_mi_batch()).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);

    let mut m = one_dim_disc(0.5);
    m.store.value_mut(m.layout.item_tables[0]).set(0, 0, 2.0);
    let p = sigmoid(1.0);
    let expected = -(2.0 * p.ln() + (1.0 - p).ln()) / 3.0;
    assert!((mi_loss(&m, &toy_mi_batch()).unwrap() - expected).abs() < 1e-15);

    // Flipping every label equals mapping scores p to 1 - p (here: w to -w).
    let mut flipped = toy_mi_batch();
    flipped.pairs.iter_mut().for_each(|p| p.positive = !p.positive);
    let mut neg = one_dim_disc(-0.5);
    neg.store.value_mut(neg.layout.item_tables[0]).set(0, 0, 2.0);
    assert!((mi_loss(&m, &flipped).unwrap() - mi_loss(&neg, &toy_mi_batch()).unwrap()).abs() < 1e-15);
}

#[test]
fn total_loss_is_sum_of_components() {
    let (m, s, t) = toy(FusionVariant::MutualInfo, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mi = make_mi_batch_with(m.knowledge.as_deref().unwrap(), 4, &mut rng).unwrap();
    let parts = domain_loss(&m, Domain::Source, &s).unwrap()
        + domain_loss(&m, Domain::Target, &t).unwrap()
        + mi_loss(&m, &mi).unwrap();
    let w0 = LossWeights { mi: 1.0, l2: 0.0 };
    assert_eq!(total_loss(&m, &s, &t, Some(&mi), w0).unwrap(), parts);
    let w = LossWeights { mi: 1.0, l2: 1e-4 };
    let l2 = 1e-4 * m.store.sum_squares();
    assert!((total_loss(&m, &s, &t, Some(&mi), w).unwrap() - (parts + l2)).abs() < 1e-14);
}

fn gradient_check(variant: FusionVariant, seed: u64) {
    let (mut m, s, t) = toy(variant, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let mi = m.knowledge.as_deref().map(|k| make_mi_batch_with(k, 4, &mut rng).unwrap());
    let mi = mi.filter(|_| variant.uses_discriminator());
    let weights = LossWeights { mi: 1.0, l2: 1e-3 };
    let k = m.knowledge.clone();
    total_loss_and_grad(&m.layout, &mut m.store, k.as_deref(), &s, &t, mi.as_ref(), weights);
    let layout = m.layout.clone();
    let ids: Vec<_> = m.store.ids().collect();
    for id in ids {
        let name = m.store.name(id).to_owned();
        let loss = |store: &crate::numerics::ParameterStore| {
            let view = NeuCmfModel {
                layout: layout.clone(),
                store: store.clone(),
                knowledge: k.clone(),
            };
            total_loss(&view, &s, &t, mi.as_ref(), weights).unwrap()
        };
        let n = m.store.value(id).len();
        let report = finite_diff_report(loss, &mut m.store, Some(&[id]), n.clamp(1, 50), 1e-6, seed);
        assert!(report.probes > 0, "{variant} {name}: no usable probes");
        assert!(report.max_relative_error < 1e-4, "{variant} {name}: {report:?}");
    }
}

#[test]
fn gradients_match_finite_differences_for_every_variant() {
    for v in FusionVariant::ALL {
        gradient_check(v, 21);
    }
}

#[test]
fn source_step_never_touches_target_items() {
    let (mut m, s, _) = toy(FusionVariant::MutualInfo, 8);
    let before = m.clone();
    let k = m.knowledge.clone();
    total_loss_and_grad(&m.layout, &mut m.store, k.as_deref(), &s, &[], None, LossWeights { mi: 0.0, l2: 0.0 });
    adam_step(&mut m.store, &AdamConfig::with_learning_rate(0.01), 1).unwrap();
    let l = &m.layout;
    assert_eq!(m.store.value(l.item_tables[1]), before.store.value(l.item_tables[1]));
    assert_eq!(m.store.value(l.heads[1].weight), before.store.value(l.heads[1].weight));
    for u in 0..4 {
        let touched = s.iter().any(|r| r.user == u);
        assert_eq!(m.user_row(u) != before.user_row(u), touched, "user {u}");
    }
}

#[test]
fn mul_variant_matches_predict_and_zero_kg_reduces() {
    let (m, _, _) = toy(FusionVariant::MutualInfo, 4);
    assert_eq!(
        predict_fused(FusionVariant::MutualInfo, &m, 1, Domain::Target, 2).unwrap().to_bits(),
        m.predict(1, Domain::Target, 2).unwrap().to_bits()
    );
    assert!(predict_fused(FusionVariant::RawConcat, &m, 1, Domain::Target, 2).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let zero_kg = Arc::new(ItemKnowledge {
        embeddings: Tensor2::zeros(6, 3),
        rows: [vec![Some(0), Some(1), Some(2)], vec![Some(3), Some(4), Some(5)]],
    });
    let mut raw = NeuCmfModel::new(FusionVariant::RawConcat, 4, [3, 3], 4, Some(zero_kg), &mut rng).unwrap();
    for name in ["user_table", "item_table_S", "item_table_T", "head_S.bias", "head_T.bias"] {
        let src = m.store.value(m.store.id(name).unwrap()).clone();
        *raw.store.value_mut(raw.store.id(name).unwrap()) = src;
    }
    for tag in ["S", "T"] {
        let w = m.store.value(m.store.id(&format!("head_{tag}.weight")).unwrap()).row(0).to_vec();
        let padded: Vec<f64> = w.iter().copied().chain([0.0; 3]).collect();
        *raw.store.value_mut(raw.store.id(&format!("head_{tag}.weight")).unwrap()) = Tensor2::row_vector(&padded);
    }
    for d in Domain::BOTH {
        for u in 0..4 {
            for i in 0..3 {
                assert_eq!(raw.predict(u, d, i).unwrap().to_bits(), m.predict(u, d, i).unwrap().to_bits());
            }
        }
    }
}

#[test]
fn checkpoint_round_trip_for_every_variant() {
    for v in FusionVariant::ALL {
        let (m, _, _) = toy(v, 13);
        let back = NeuCmfModel::from_checkpoint(&m.to_checkpoint().unwrap()).unwrap();
        assert_eq!(back.layout, m.layout);
        for d in Domain::BOTH {
            for u in 0..4 {
                for i in 0..3 {
                    assert_eq!(back.predict(u, d, i).unwrap().to_bits(), m.predict(u, d, i).unwrap().to_bits());
                }
            }
        }
    }
}

#[test]
fn variant_names_round_trip() {
    for v in FusionVariant::ALL {
        assert_eq!(v.name().parse::<FusionVariant>().unwrap(), v);
    }
    assert!("ncmf".parse::<FusionVariant>().is_err());
}

/// Planted bias-plus-factor data: 30 users, 20+20 items.
fn planted(seed: u64) -> ([Vec<Rating>; 2], [Vec<Rating>; 2], Arc<ItemKnowledge>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let user_bias: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let community: Vec<usize> = (0..40).map(|i| i % 4).collect();
    let quality = [-1.0, -0.3, 0.4, 1.0];
    let mut train = [Vec::new(), Vec::new()];
    let mut val = [Vec::new(), Vec::new()];
    for d in Domain::BOTH {
        for (u, ub) in user_bias.iter().enumerate() {
            for i in 0..20 {
                if rng.gen_bool(0.5) {
                    let score = ub + quality[community[20 * d.index() + i]];
                    let value = (3.0 + 1.5 * score).round().clamp(1.0, 5.0) as u8;
                    let r = Rating { user: u, item: i, value };
                    if rng.gen_bool(0.8) {
                        train[d.index()].push(r);
                    } else {
                        val[d.index()].push(r);
                    }
                }
            }
        }
    }
    let mut emb = Tensor2::zeros(40, 4);
    for (row, &c) in community.iter().enumerate() {
        emb.set(row, c, 1.0);
    }
    let k = ItemKnowledge {
        embeddings: emb,
        rows: [(0..20).map(Some).collect(), (20..40).map(Some).collect()],
    };
    (train, val, Arc::new(k))
}

fn val_mae(m: &NeuCmfModel, val: &[Vec<Rating>; 2]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0;
    for d in Domain::BOTH {
        for r in &val[d.index()] {
            sum += (m.predict(r.user, d, r.item).unwrap() - r.target()).abs();
            n += 1;
        }
    }
    sum / n as f64
}

fn planted_data<'a>(train: &'a [Vec<Rating>; 2], val: &'a [Vec<Rating>; 2]) -> TrainData<'a> {
    TrainData {
        n_users: 30,
        n_items: [20, 20],
        train: [&train[0], &train[1]],
        validation: [&val[0], &val[1]],
    }
}

#[test]
fn training_beats_initialization_on_planted_data() {
    let (train_r, val_r, k) = planted(2);
    let data = planted_data(&train_r, &val_r);
    let cfg = NeuCmfConfig {
        embedding_dim: 8,
        max_epochs: 60,
        learning_rate: 0.01,
        seed: 4,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = NeuCmfModel::new(cfg.variant, 30, [20, 20], 8, Some(k.clone()), &mut rng).unwrap();
    let (m, log) = train(&data, Some(k), &cfg).unwrap();
    assert!(val_mae(&m, &val_r) < 0.6 * val_mae(&init, &val_r), "{}", log.to_tsv());
    assert!(log.records.last().unwrap().train.mi < log.records[0].train.mi + 1e-9 || log.records.len() > 1);
}

#[test]
fn zero_learning_rate_is_a_fixed_point() {
    let (train_r, val_r, k) = planted(3);
    let data = planted_data(&train_r, &val_r);
    let cfg = NeuCmfConfig {
        embedding_dim: 4,
        max_epochs: 4,
        learning_rate: 0.0,
        seed: 1,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = NeuCmfModel::new(cfg.variant, 30, [20, 20], 4, Some(k.clone()), &mut rng).unwrap();
    let (m, log) = train(&data, Some(k), &cfg).unwrap();
    for id in m.store.ids() {
        assert_eq!(m.store.value(id), init.store.value(id));
    }
    let first = log.records[0];
    assert!(log
        .records
        .iter()
        .all(|r| r.train == first.train && r.validation == first.validation));
}

#[test]
fn training_is_bit_reproducible() {
    let (train_r, val_r, k) = planted(5);
    let data = planted_data(&train_r, &val_r);
    for variant in FusionVariant::ALL {
        let cfg = NeuCmfConfig {
            variant,
            embedding_dim: 4,
            max_epochs: 5,
            seed: 9,
            ..Default::default()
        };
        let (a, la) = train(&data, Some(k.clone()), &cfg).unwrap();
        let (b, lb) = train(&data, Some(k.clone()), &cfg).unwrap();
        assert_eq!(la.to_tsv(), lb.to_tsv());
        assert_eq!(a.to_checkpoint().unwrap().to_bytes(), b.to_checkpoint().unwrap().to_bytes());
    }
}

#[test]
fn mi_training_requires_knowledge() {
    let (train_r, val_r, _) = planted(5);
    let data = planted_data(&train_r, &val_r);
    assert!(matches!(train(&data, None, &NeuCmfConfig::default()), Err(crate::Error::Config(_))));
    let no_mi = NeuCmfConfig {
        mi_weight: 0.0,
        max_epochs: 2,
        ..Default::default()
    };
    assert!(train(&data, None, &no_mi).is_ok());
}

proptest! {
    #[test]
    fn predictions_lie_strictly_inside_unit_interval(seed in 0u64..1000, scale in 0.0f64..50.0) {
        let (mut m, _, _) = toy(FusionVariant::RefinedConcat, seed);
        let ids: Vec<_> = m.store.ids().collect();
        for id in ids {
            m.store.value_mut(id).scale(scale);
        }
        for d in Domain::BOTH {
            for u in 0..4 {
                for i in 0..3 {
                    let p = m.predict(u, d, i).unwrap();
                    prop_assert!(p > 0.0 && p < 1.0);
                }
            }
        }
    }
}
