use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use kgcdr::eval::{generate_synthetic, split_for_seed, train_model, ExperimentConfig, ModelKind, SyntheticSpec, Trained};
use kgcdr::interactions::SplitMode;
use kgcdr::neucmf::NeuCmfConfig;
use kgcdr::Domain;
use kgcdr_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(kgcdr_last_error_message()) }.to_string_lossy().into_owned()
}

/// Trains `model` on a small synthetic set and saves every resulting
/// checkpoint, returning the in-process models and their paths.
fn saved(dir: &Path, model: ModelKind) -> Vec<(Trained, CString)> {
    let data = generate_synthetic(&SyntheticSpec {
        n_users: 30,
        n_items: [20, 20],
        density: [0.3, 0.2],
        ..Default::default()
    })
    .unwrap();
    let cfg = ExperimentConfig {
        stage2: NeuCmfConfig {
            embedding_dim: 4,
            max_epochs: 3,
            ..Default::default()
        },
        ..Default::default()
    };
    let split = split_for_seed(&data.ratings, SplitMode::Standard, 0.2, 1).unwrap();
    train_model(model, &data.ratings, &split, None, &cfg, 1)
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let path = dir.join(format!("{}_{i}.ckpt", model.name()));
            t.trained.to_checkpoint().unwrap().save(&path).unwrap();
            (t.trained, CString::new(path.to_str().unwrap()).unwrap())
        })
        .collect()
}

fn open(path: &CString) -> *mut KgcdrModel {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { kgcdr_model_open(path.as_ptr(), &mut m) }, KgcdrStatus::Ok, "{}", last_error());
    assert!(!m.is_null());
    m
}

#[test]
fn reloaded_checkpoints_predict_like_the_trained_model() {
    let dir = tempfile::tempdir().unwrap();
    for kind in [ModelKind::Cmf, ModelKind::Ncf] {
        for (trained, path) in saved(dir.path(), kind) {
            let m = open(&path);
            let domains: Vec<Domain> = trained.domain().map_or(vec![Domain::Source, Domain::Target], |d| vec![d]);
            for d in domains {
                let cd = if d == Domain::Source { KgcdrDomain::Source } else { KgcdrDomain::Target };
                let users = [0usize, 3, 7, 29];
                let items = [0usize, 5, 19, 2];
                let mut batch = [0.0; 4];
                let st = unsafe { kgcdr_model_predict_batch(m, cd, users.as_ptr(), items.as_ptr(), 4, batch.as_mut_ptr()) };
                assert_eq!(st, KgcdrStatus::Ok, "{}", last_error());
                for k in 0..4 {
                    let want = trained.predict(users[k], d, items[k]).unwrap();
                    let mut one = f64::NAN;
                    assert_eq!(unsafe { kgcdr_model_predict(m, users[k], cd, items[k], &mut one) }, KgcdrStatus::Ok);
                    assert_eq!(one.to_bits(), want.to_bits());
                    assert_eq!(batch[k].to_bits(), want.to_bits());
                }
            }
            unsafe { kgcdr_model_free(m) };
        }
    }
}

#[test]
fn errors_carry_a_status_and_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = ptr::null_mut();
    let missing = CString::new(dir.path().join("nope.ckpt").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { kgcdr_model_open(missing.as_ptr(), &mut m) }, KgcdrStatus::Io);
    assert!(m.is_null());
    assert!(last_error().contains("nope.ckpt"), "{}", last_error());

    assert_eq!(unsafe { kgcdr_model_open(ptr::null(), &mut m) }, KgcdrStatus::NullPointer);
    assert_eq!(unsafe { kgcdr_model_open(missing.as_ptr(), ptr::null_mut()) }, KgcdrStatus::NullPointer);
    let mut out = 0.0;
    assert_eq!(unsafe { kgcdr_model_predict(ptr::null(), 0, KgcdrDomain::Source, 0, &mut out) }, KgcdrStatus::NullPointer);
    assert_eq!(last_error(), "model is NULL");

    let garbage = dir.path().join("garbage.ckpt");
    std::fs::write(&garbage, b"not a checkpoint").unwrap();
    let garbage = CString::new(garbage.to_str().unwrap()).unwrap();
    assert_ne!(unsafe { kgcdr_model_open(garbage.as_ptr(), &mut m) }, KgcdrStatus::Ok);

    // An MF checkpoint only answers for its own domain.
    let (trained, path) = saved(dir.path(), ModelKind::Mf).remove(1);
    assert_eq!(trained.domain(), Some(Domain::Target));
    let m = open(&path);
    assert_eq!(unsafe { kgcdr_model_predict(m, 0, KgcdrDomain::Source, 0, &mut out) }, KgcdrStatus::Lookup);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { kgcdr_model_predict(m, 0, KgcdrDomain::Target, 10_000, &mut out) }, KgcdrStatus::Lookup);

    // A bad pair leaves the output buffer untouched.
    let mut batch = [-1.0; 2];
    let st = unsafe { kgcdr_model_predict_batch(m, KgcdrDomain::Target, [0usize, 0].as_ptr(), [0usize, 10_000].as_ptr(), 2, batch.as_mut_ptr()) };
    assert_eq!(st, KgcdrStatus::Lookup);
    assert_eq!(batch, [-1.0; 2]);
    assert_eq!(unsafe { kgcdr_model_predict(m, 0, KgcdrDomain::Target, 0, &mut out) }, KgcdrStatus::Ok);
    assert_eq!(last_error(), "");
    unsafe {
        kgcdr_model_free(m);
        kgcdr_model_free(ptr::null_mut());
    }
}

#[test]
fn metrics_match_hand_computed_values() {
    let mut out = 0.0;
    let preds = [0.5, 0.8, 1.0];
    let targets = [0.25, 1.0, 1.0];
    assert_eq!(unsafe { kgcdr_mae(preds.as_ptr(), targets.as_ptr(), 3, &mut out) }, KgcdrStatus::Ok);
    assert!((out - 15.0).abs() < 1e-12, "{out}");

    // Predicted positive: 0.8, 0.9. Actual positive: raw 4, 5, 5.
    let preds = [0.8, 0.9, 0.1, 0.3];
    let raw = [4u8, 2, 5, 5];
    assert_eq!(unsafe { kgcdr_f1(preds.as_ptr(), raw.as_ptr(), 4, &mut out) }, KgcdrStatus::Ok);
    // precision 1/2, recall 1/3
    assert!((out - 40.0).abs() < 1e-12, "{out}");

    assert_eq!(unsafe { kgcdr_mae(ptr::null(), targets.as_ptr(), 3, &mut out) }, KgcdrStatus::NullPointer);
    assert_eq!(unsafe { kgcdr_mae(ptr::null(), ptr::null(), 0, &mut out) }, KgcdrStatus::Eval);

    assert_eq!(unsafe { kgcdr_normalize_rating(4, &mut out) }, KgcdrStatus::Ok);
    assert_eq!(out, 0.75);
    assert_eq!(unsafe { kgcdr_normalize_rating(6, &mut out) }, KgcdrStatus::Data);
    assert_eq!(unsafe { kgcdr_normalize_rating(1, ptr::null_mut()) }, KgcdrStatus::NullPointer);

    let v = unsafe { CStr::from_ptr(kgcdr_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn generated_header_declares_the_api() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/kgcdr.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "kgcdr_model_open",
        "kgcdr_model_predict",
        "kgcdr_model_predict_batch",
        "kgcdr_model_free",
        "kgcdr_mae",
        "kgcdr_f1",
        "kgcdr_normalize_rating",
        "kgcdr_last_error_message",
        "kgcdr_version",
        "KGCDR_STATUS_LOOKUP",
        "KGCDR_DOMAIN_TARGET",
        "typedef struct KgcdrModel KgcdrModel",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }

    // Type-check a C caller when a compiler is around.
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("caller.c");
    std::fs::write(
        &src,
        r#"#include "kgcdr.h"
int main(void) {
    KgcdrModel *m = NULL;
    double p = 0.0;
    if (kgcdr_model_open("x.ckpt", &m) != KGCDR_STATUS_OK) return 1;
    KgcdrStatus s = kgcdr_model_predict(m, 0, KGCDR_DOMAIN_TARGET, 0, &p);
    kgcdr_model_free(m);
    return (int)s;
}
"#,
    )
    .unwrap();
    let status = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
