use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cmf::cmf_loss_and_grad;
use super::*;
use crate::numerics::{adam_step, finite_diff_report, AdamConfig, Tensor2};

fn random_ratings(seed: u64, n_users: usize, n_items: usize, n: usize) -> Vec<Rating> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    while out.len() < n {
        let (user, item) = (rng.gen_range(0..n_users), rng.gen_range(0..n_items));
        if seen.insert((user, item)) {
            out.push(Rating {
                user,
                item,
                value: rng.gen_range(1..=5),
            });
        }
    }
    out
}

#[test]
fn mf_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut m = CmfModel::new(2, [1, 1], 1, &mut rng).unwrap();
    m.store.value_mut(m.layout.user_table).fill(0.0);
    let mf = MfModel {
        domain: Domain::Source,
        inner: m.clone(),
    };
    assert_eq!(mf.predict(0, 0).unwrap(), 0.5);

    m.store.value_mut(m.layout.user_table).set(0, 0, 1.0);
    m.store.value_mut(m.layout.domains[0].item_table).set(0, 0, 1.0);
    let mf = MfModel {
        domain: Domain::Source,
        inner: m.clone(),
    };
    assert!((mf_predict(&mf, 0, 0).unwrap() - crate::numerics::sigmoid(1.0)).abs() < 1e-15);

    // Another user's row has no influence.
    let before = mf.predict(0, 0).unwrap();
    let mut other = mf.clone();
    other.inner.store.value_mut(m.layout.user_table).set(1, 0, 42.0);
    assert_eq!(other.predict(0, 0).unwrap(), before);
    assert!(mf.predict(2, 0).is_err());
}

#[test]
fn cmf_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut m = CmfModel::new(4, [3, 3], 3, &mut rng).unwrap();
    let ids: Vec<_> = m.store.ids().collect();
    for id in ids {
        let (r, c) = m.store.value(id).shape();
        *m.store.value_mut(id) = crate::numerics::uniform(r, c, 1.0, &mut rng);
    }
    let recs = random_ratings(2, 4, 3, 7);
    let layout = m.layout.clone();
    cmf_loss_and_grad(&layout, &mut m.store, Domain::Target, &recs, 1e-3);
    let report = finite_diff_report(
        |s| {
            let mut s = s.clone();
            s.zero_grad();
            cmf_loss_and_grad(&layout, &mut s, Domain::Target, &recs, 1e-3)
        },
        &mut m.store,
        None,
        60,
        1e-6,
        3,
    );
    assert!(report.probes >= 50);
    assert!(report.max_relative_error < 1e-4, "{report:?}");
}

#[test]
fn target_step_leaves_source_items_alone() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut m = CmfModel::new(5, [4, 4], 3, &mut rng).unwrap();
    let before = m.store.clone();
    let layout = m.layout.clone();
    cmf_loss_and_grad(&layout, &mut m.store, Domain::Target, &random_ratings(4, 5, 4, 6), 0.0);
    adam_step(&mut m.store, &AdamConfig::with_learning_rate(0.05), 1).unwrap();
    let s = layout.domains[0];
    for id in [s.item_table, s.item_bias, s.global_bias] {
        assert_eq!(m.store.value(id), before.value(id));
    }
    assert_ne!(m.store.value(layout.user_table), before.value(layout.user_table));
}

fn fast_factor() -> FactorConfig {
    FactorConfig {
        embedding_dim: 4,
        max_epochs: 8,
        learning_rate: 0.01,
        seed: 6,
        ..Default::default()
    }
}

#[test]
fn cmf_without_target_data_is_mf() {
    let train = random_ratings(7, 20, 10, 80);
    let val = random_ratings(8, 20, 10, 20);
    let with_empty_t = TrainData {
        n_users: 20,
        n_items: [10, 7],
        train: [&train, &[]],
        validation: [&val, &[]],
    };
    let (cmf, _) = cmf_train(&with_empty_t, &fast_factor()).unwrap();
    let dd = DomainData {
        domain: Domain::Source,
        n_users: 20,
        n_items: 10,
        train: &train,
        validation: &val,
    };
    let (mf, _) = mf_train(&dd, &fast_factor()).unwrap();
    for u in 0..20 {
        for i in 0..10 {
            assert_eq!(
                cmf_predict(&cmf, u, Domain::Source, i).unwrap().to_bits(),
                mf.predict(u, i).unwrap().to_bits()
            );
        }
    }
}

#[test]
fn ncf_is_the_single_domain_reduction() {
    let train = random_ratings(9, 15, 8, 60);
    let val = random_ratings(10, 15, 8, 15);
    let cfg = NeuCmfConfig {
        embedding_dim: 4,
        max_epochs: 6,
        seed: 3,
        ..Default::default()
    };
    let dd = DomainData {
        domain: Domain::Target,
        n_users: 15,
        n_items: 8,
        train: &train,
        validation: &val,
    };
    let (ncf, ncf_log) = ncf_train(&dd, &cfg).unwrap();
    let reduced = TrainData {
        n_users: 15,
        n_items: [0, 8],
        train: [&[], &train],
        validation: [&[], &val],
    };
    let (full, full_log) = neucmf::train(&reduced, None, &NeuCmfConfig { mi_weight: 0.0, ..cfg.clone() }).unwrap();
    assert_eq!(ncf_log.to_tsv(), full_log.to_tsv());
    for u in 0..15 {
        for i in 0..8 {
            assert_eq!(
                ncf_predict(&ncf, u, i).unwrap().to_bits(),
                full.predict(u, Domain::Target, i).unwrap().to_bits()
            );
        }
    }
    let bad = NeuCmfConfig {
        variant: FusionVariant::RawConcat,
        ..cfg
    };
    assert!(ncf_train(&dd, &bad).is_err());
}

#[test]
fn ncf_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut inner = NeuCmfModel::new(FusionVariant::MutualInfo, 1, [0, 1], 1, None, &mut rng).unwrap();
    for id in [inner.layout.user_table, inner.layout.item_tables[1]] {
        inner.store.value_mut(id).fill(0.0);
    }
    let mut m = NcfModel {
        domain: Domain::Target,
        inner,
    };
    assert_eq!(m.predict(0, 0).unwrap(), 0.5);
    let l = m.inner.layout.clone();
    m.inner.store.value_mut(l.user_table).set(0, 0, 2.0);
    m.inner.store.value_mut(l.item_tables[1]).set(0, 0, -1.0);
    *m.inner.store.value_mut(l.heads[1].weight) = Tensor2::row_vector(&[0.5, 1.5]);
    m.inner.store.value_mut(l.heads[1].bias).set(0, 0, 0.25);
    // 0.5·2 + 1.5·(−1) + 0.25 = −0.25
    assert!((m.predict(0, 0).unwrap() - 1.0 / (1.0 + 0.25f64.exp())).abs() < 1e-15);
}

#[test]
fn cmf_checkpoint_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = CmfModel::new(3, [2, 4], 2, &mut rng).unwrap();
    let back = CmfModel::from_checkpoint(&m.to_checkpoint()).unwrap();
    assert_eq!(back.layout, m.layout);
    assert_eq!(back.predict(2, Domain::Target, 3).unwrap(), m.predict(2, Domain::Target, 3).unwrap());
}

#[test]
fn shared_users_transfer_to_the_sparser_domain() {
    use crate::eval::{generate_synthetic, mae, split_for_seed, SyntheticSpec};
    use crate::interactions::SplitMode;
    let data = generate_synthetic(&SyntheticSpec::default()).unwrap();
    let split = split_for_seed(&data.ratings, SplitMode::Standard, 0.2, 0).unwrap();
    let two = TrainData {
        n_users: data.ratings.n_users(),
        n_items: [200, 200],
        train: [&split.source.train, &split.target.train],
        validation: [&split.source.validation, &split.target.validation],
    };
    let cfg = FactorConfig::default();
    let (cmf, _) = cmf_train(&two, &cfg).unwrap();
    let one = DomainData {
        domain: Domain::Target,
        n_users: data.ratings.n_users(),
        n_items: 200,
        train: &split.target.train,
        validation: &split.target.validation,
    };
    let (mf, _) = mf_train(&one, &cfg).unwrap();
    let val = &split.target.validation;
    let targets: Vec<f64> = val.iter().map(Rating::target).collect();
    let p_cmf: Vec<f64> = val.iter().map(|r| cmf.predict(r.user, Domain::Target, r.item).unwrap()).collect();
    let p_mf: Vec<f64> = val.iter().map(|r| mf.predict(r.user, r.item).unwrap()).collect();
    let (a, b) = (mae(&p_cmf, &targets).unwrap(), mae(&p_mf, &targets).unwrap());
    assert!(a <= b, "cmf {a} vs mf {b}");
}
