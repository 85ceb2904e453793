use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use lazyreg::lazy_reg::lazy_update;
use lazyreg::{generate_synthetic, train, Algo, RegConfig, Schedule, ScheduleKind, TrainOptions};
use lazyreg_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(lr_last_error_message()) }.to_str().unwrap().to_owned()
}

fn generate(n: usize, d: usize, p: usize, seed: u64) -> *mut LrDataset {
    let mut data = ptr::null_mut();
    let status = unsafe { lr_dataset_generate(n, d, p, 0.1, seed, ptr::null_mut(), &mut data) };
    assert_eq!(status, LrStatus::Ok, "{}", last_error());
    data
}

fn weights(model: *const LrModel) -> Vec<f64> {
    let mut d = 0;
    unsafe {
        assert_eq!(lr_model_dims(model, &mut d), LrStatus::Ok);
        let mut buf = vec![0.0; d];
        assert_eq!(lr_model_weights(model, buf.as_mut_ptr(), d), LrStatus::Ok);
        buf
    }
}

#[test]
fn training_matches_the_rust_api() {
    let data = generate(400, 1000, 8, 3);
    let mut cfg = lr_train_config_default();
    cfg.algo = LrAlgo::Fobos;
    cfg.lambda1 = 1e-3;
    cfg.lambda2 = 1e-2;
    cfg.epochs = 2;
    cfg.seed = 9;

    let (mut lazy, mut dense) = (ptr::null_mut(), ptr::null_mut());
    let mut report = LrTrainReport::default();
    unsafe {
        assert_eq!(lr_train(data, &cfg, &mut lazy, &mut report), LrStatus::Ok);
        assert_eq!(lr_train_dense(data, &cfg, true, &mut dense, ptr::null_mut()), LrStatus::Ok);
    }
    assert_eq!(report.epochs_run, 2);
    assert_eq!(report.steps, 800);
    assert_eq!(report.flush_count, 2);

    let reference = generate_synthetic(400, 1000, 8, 0.1, 3).dataset;
    let reg = RegConfig::new(Algo::Fobos, 1e-3, 1e-2).unwrap();
    let sched = Schedule::new(ScheduleKind::InverseSqrtT, 0.1).unwrap();
    let opts = TrainOptions { epochs: 2, flush_budget: None, seed: 9 };
    let (expected, _) = train(&reference, &reg, &sched, &opts).unwrap();

    let (w_lazy, w_dense) = (weights(lazy), weights(dense));
    assert_eq!(w_lazy, expected.weights());
    let diff = w_lazy.iter().zip(&w_dense).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff <= 1e-10, "{diff:e}");
    assert_eq!(report.nonzero_weights as usize, w_lazy.iter().filter(|w| **w != 0.0).count());

    let x = &reference.examples()[0];
    let mut prob = 0.0;
    unsafe {
        let status = lr_model_predict(lazy, x.indices().as_ptr(), x.values().as_ptr(), x.nnz(), &mut prob);
        assert_eq!(status, LrStatus::Ok);
    }
    assert_eq!(prob, expected.predict(x).unwrap());

    unsafe {
        lr_model_free(lazy);
        lr_model_free(dense);
        lr_dataset_free(data);
    }
}

#[test]
fn model_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m").to_str().unwrap()).unwrap();
    let data = generate(200, 300, 6, 1);
    let cfg = LrTrainConfig { lambda1: 1e-4, lambda2: 1e-3, ..lr_train_config_default() };
    let (mut model, mut read) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(lr_train(data, &cfg, &mut model, ptr::null_mut()), LrStatus::Ok);
        assert_eq!(lr_model_write(model, path.as_ptr()), LrStatus::Ok);
        assert_eq!(lr_model_read(path.as_ptr(), &mut read), LrStatus::Ok);
    }
    assert_eq!(weights(model), weights(read));
    unsafe {
        lr_model_free(model);
        lr_model_free(read);
        lr_dataset_free(data);
    }
}

#[test]
fn datasets_from_text_and_pushes() {
    let text = b"1 1:0.5 3:2\n-1 2:1\n";
    let mut parsed = ptr::null_mut();
    let (mut n, mut d) = (0, 0);
    unsafe {
        assert_eq!(lr_dataset_parse_libsvm(text.as_ptr(), text.len(), 1, 0, &mut parsed), LrStatus::Ok);
        assert_eq!(lr_dataset_shape(parsed, &mut n, &mut d), LrStatus::Ok);
    }
    assert_eq!((n, d), (2, 3));

    let mut built = ptr::null_mut();
    unsafe {
        assert_eq!(lr_dataset_new(3, &mut built), LrStatus::Ok);
        assert_eq!(lr_dataset_push(built, [0, 2].as_ptr(), [0.5, 2.0].as_ptr(), 2, 1), LrStatus::Ok);
        assert_eq!(lr_dataset_push(built, [1].as_ptr(), [1.0].as_ptr(), 1, -1), LrStatus::Ok);
        assert_eq!(
            lr_dataset_push(built, [5].as_ptr(), [1.0].as_ptr(), 1, 1),
            LrStatus::DimensionMismatch
        );
        assert_eq!(
            lr_dataset_push(built, [2, 1].as_ptr(), [1.0, 1.0].as_ptr(), 2, 1),
            LrStatus::InvalidConfig
        );
        assert_eq!(lr_dataset_shape(built, &mut n, &mut d), LrStatus::Ok);
    }
    assert_eq!((n, d), (2, 3));

    let cfg = LrTrainConfig { epochs: 3, ..lr_train_config_default() };
    let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(lr_train(parsed, &cfg, &mut a, ptr::null_mut()), LrStatus::Ok);
        assert_eq!(lr_train(built, &cfg, &mut b, ptr::null_mut()), LrStatus::Ok);
    }
    assert_eq!(weights(a), weights(b));

    let bad = b"1 1:0.5\n1 3:1 2:1\n";
    let mut out = ptr::null_mut();
    let status = unsafe { lr_dataset_parse_libsvm(bad.as_ptr(), bad.len(), 1, 0, &mut out) };
    assert_eq!(status, LrStatus::Parse);
    assert!(last_error().contains("line 2"), "{}", last_error());
    assert!(out.is_null());

    unsafe {
        lr_model_free(a);
        lr_model_free(b);
        lr_dataset_free(parsed);
        lr_dataset_free(built);
    }
}

#[test]
fn cache_and_lazy_update_agree_with_core() {
    let sched = Schedule::new(ScheduleKind::InverseT, 0.3).unwrap();
    let reg = RegConfig::new(Algo::Sgd, 1e-2, 0.5).unwrap();
    let mut core = reg.cache(sched).unwrap();
    core.rebase(10);
    core.extend_to(59).unwrap();

    let mut cache = ptr::null_mut();
    unsafe {
        assert_eq!(lr_cache_new(LrSchedule::InverseT, 0.3, 0.5, false, &mut cache), LrStatus::Ok);
        assert_eq!(lr_cache_rebase(cache, 10), LrStatus::Ok);
        assert_eq!(lr_cache_extend(cache, 59), LrStatus::Ok);
    }
    for (table, lr) in lazyreg::Table::ALL.into_iter().zip([
        LrTable::S,
        LrTable::P,
        LrTable::B,
        LrTable::Phi,
        LrTable::Beta,
    ]) {
        for t in 9..60 {
            let mut v = f64::NAN;
            assert_eq!(unsafe { lr_cache_lookup(cache, lr, t, &mut v) }, LrStatus::Ok);
            assert_eq!(v, core.lookup(table, t).unwrap());
        }
    }

    let mut out = 0.0;
    let status = unsafe { lr_lazy_update(0.7, 12, 60, LrAlgo::Sgd, 1e-2, 0.5, cache, &mut out) };
    assert_eq!(status, LrStatus::Ok);
    assert_eq!(out, lazy_update(0.7, 12, 60, &reg, &core).unwrap());

    unsafe {
        let status = lr_cache_lookup(cache, LrTable::S, 60, &mut out);
        assert_eq!(status, LrStatus::OutOfRange, "{}", last_error());
        let status = lr_lazy_update(0.7, 12, 60, LrAlgo::Sgd, 1e-2, 0.4, cache, &mut out);
        assert_eq!(status, LrStatus::InvalidConfig);
        let status = lr_lazy_update(0.7, 61, 60, LrAlgo::Sgd, 1e-2, 0.5, cache, &mut out);
        assert_eq!(status, LrStatus::InvalidArgument);
        lr_cache_free(cache);
    }
}

#[test]
fn proximal_only_caches_refuse_sgd_tables() {
    let mut cache = ptr::null_mut();
    let mut out = 0.0;
    unsafe {
        assert_eq!(lr_cache_new(LrSchedule::Constant, 0.5, 4.0, true, &mut cache), LrStatus::Ok);
        assert_eq!(lr_cache_extend(cache, 20), LrStatus::Ok);
        assert_eq!(lr_cache_lookup(cache, LrTable::Phi, 20, &mut out), LrStatus::Ok);
        assert!(out > 0.0 && out < 1.0);
        assert_eq!(lr_cache_lookup(cache, LrTable::P, 20, &mut out), LrStatus::TableNotMaintained);
        let status = lr_lazy_update(1.0, 0, 20, LrAlgo::Sgd, 0.0, 4.0, cache, &mut out);
        assert_eq!(status, LrStatus::TableNotMaintained);
        let status = lr_lazy_update(1.0, 0, 20, LrAlgo::Fobos, 0.0, 4.0, cache, &mut out);
        assert_eq!(status, LrStatus::Ok);
        lr_cache_free(cache);
    }
}

#[test]
fn errors_are_reported_with_messages() {
    let mut model = ptr::null_mut();
    let cfg = LrTrainConfig { lambda2: 10.0, eta0: 0.2, ..lr_train_config_default() };
    let data = generate(10, 20, 3, 0);
    unsafe {
        assert_eq!(lr_train(data, &cfg, &mut model, ptr::null_mut()), LrStatus::InvalidRate);
        assert!(!last_error().is_empty());
        assert!(model.is_null());

        let fobos = LrTrainConfig { algo: LrAlgo::Fobos, ..cfg };
        assert_eq!(lr_train(data, &fobos, &mut model, ptr::null_mut()), LrStatus::Ok);
        assert_eq!(last_error(), "");
        lr_model_free(model);

        let bad = LrTrainConfig { lambda1: -1.0, ..lr_train_config_default() };
        assert_eq!(lr_train(data, &bad, &mut model, ptr::null_mut()), LrStatus::InvalidConfig);

        assert_eq!(lr_train(ptr::null(), &cfg, &mut model, ptr::null_mut()), LrStatus::InvalidArgument);
        assert!(last_error().contains("null"), "{}", last_error());

        let missing = CString::new("/nonexistent/model").unwrap();
        assert_eq!(lr_model_read(missing.as_ptr(), &mut model), LrStatus::Io);
        assert_eq!(lr_dataset_read_libsvm(missing.as_ptr(), 1, 0, ptr::null_mut()), LrStatus::Io);

        let mut cache = ptr::null_mut();
        assert_eq!(lr_cache_new(LrSchedule::Constant, 0.5, 4.0, false, &mut cache), LrStatus::InvalidRate);

        lr_dataset_free(data);
        lr_dataset_free(ptr::null_mut());
        lr_model_free(ptr::null_mut());
        lr_cache_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_every_entry_point() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/lazyreg.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "lr_last_error_message",
        "lr_train_config_default",
        "lr_dataset_read_libsvm",
        "lr_dataset_parse_libsvm",
        "lr_dataset_generate",
        "lr_dataset_new",
        "lr_dataset_push",
        "lr_dataset_shape",
        "lr_dataset_free",
        "lr_train",
        "lr_train_dense",
        "lr_model_predict",
        "lr_model_dims",
        "lr_model_weights",
        "lr_model_read",
        "lr_model_write",
        "lr_model_free",
        "lr_cache_new",
        "lr_cache_extend",
        "lr_cache_rebase",
        "lr_cache_lookup",
        "lr_lazy_update",
        "lr_cache_free",
    ] {
        let declared = text.contains(&format!(" {name}(")) || text.contains(&format!("*{name}("));
        assert!(declared, "{name} missing from the header");
    }

    // Compile a small translation unit against the header when a C compiler is around.
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let dir = tempfile::tempdir().unwrap();
    let source = dir.path().join("probe.c");
    std::fs::write(
        &source,
        "#include \"lazyreg.h\"\n\
         int probe(void) {\n\
           LrTrainConfig cfg = lr_train_config_default();\n\
           LrModel *m = 0;\n\
           LrStatus s = lr_train(0, &cfg, &m, 0);\n\
           return s == LR_STATUS_INVALID_ARGUMENT ? 0 : 1;\n\
         }\n",
    )
    .unwrap();
    let Ok(out) = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&source)
        .output()
    else {
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
