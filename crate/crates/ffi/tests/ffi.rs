//! Exercises the C surface from Rust: handle lifecycle, error paths, and
//! parity with the core library.

use std::ffi::{c_char, CStr, CString};
use std::ptr;

use fei3d::nn::{build_classifier_with, HeadKind, MlpConfig};
use fei3d::numerics::{Matrix, RngState};
use fei3d::training::{save_checkpoint, CheckpointMeta};
use fei3d_ffi::*;

fn last_error() -> String {
    unsafe {
        CStr::from_ptr(fei3d_last_error_message())
            .to_string_lossy()
            .into_owned()
    }
}

fn saved_model(dir: &std::path::Path) -> (std::path::PathBuf, fei3d::nn::MlpModel) {
    let cfg = MlpConfig {
        hidden_width: 12,
        ..Default::default()
    };
    let model = build_classifier_with(6, HeadKind::Affectnet8Va, &cfg, RngState::seed(5)).unwrap();
    let path = dir.join("m.ckpt");
    save_checkpoint(
        &model,
        &CheckpointMeta {
            epoch: 1,
            best_val_loss: Some(0.5),
            seed: 5,
        },
        &path,
    )
    .unwrap();
    (path, model)
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(fei3d_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn model_lifecycle_and_predict_parity() {
    let dir = tempfile::tempdir().unwrap();
    let (path, model) = saved_model(dir.path());
    let cpath = CString::new(path.to_str().unwrap()).unwrap();

    let mut handle: *mut FeiModel = ptr::null_mut();
    let status = unsafe { fei3d_model_load(cpath.as_ptr(), &mut handle) };
    assert_eq!(status, FeiStatus::Ok, "{}", last_error());
    assert!(!handle.is_null());

    let mut input_dim = 0usize;
    let mut output_dim = 0usize;
    let mut classes = 0usize;
    let mut has_va = false;
    unsafe {
        assert_eq!(fei3d_model_input_dim(handle, &mut input_dim), FeiStatus::Ok);
        assert_eq!(fei3d_model_output_dim(handle, &mut output_dim), FeiStatus::Ok);
        assert_eq!(
            fei3d_model_head_info(handle, &mut classes, &mut has_va),
            FeiStatus::Ok
        );
    }
    assert_eq!(input_dim, 6);
    assert_eq!(output_dim, 10);
    assert_eq!(classes, 8);
    assert!(has_va);

    let rows = 4;
    let mut rng = RngState::seed(9);
    let features: Vec<f64> = (0..rows * input_dim)
        .map(|_| rng.uniform(-1.0, 1.0).unwrap())
        .collect();
    let mut out = vec![0.0; rows * output_dim];
    let status = unsafe {
        fei3d_model_predict(
            handle,
            features.as_ptr(),
            rows,
            input_dim,
            out.as_mut_ptr(),
            out.len(),
        )
    };
    assert_eq!(status, FeiStatus::Ok, "{}", last_error());

    let batch = Matrix::from_vec(rows, input_dim, features).unwrap();
    let expected = model.forward_eval(&batch).unwrap();
    assert_eq!(out, expected.data());

    unsafe { fei3d_model_free(handle) };
}

#[test]
fn null_and_error_paths_report_messages() {
    let mut handle: *mut FeiModel = ptr::null_mut();
    assert_eq!(
        unsafe { fei3d_model_load(ptr::null(), &mut handle) },
        FeiStatus::NullPointer
    );
    assert!(last_error().contains("null"));

    let missing = CString::new("/nonexistent/path.ckpt").unwrap();
    assert_eq!(
        unsafe { fei3d_model_load(missing.as_ptr(), &mut handle) },
        FeiStatus::IoError
    );
    assert!(!last_error().is_empty());

    // truncated checkpoint is a format error
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ckpt");
    std::fs::write(&bad, b"FEI3D\0\x01\x00ga").unwrap();
    let cbad = CString::new(bad.to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { fei3d_model_load(cbad.as_ptr(), &mut handle) },
        FeiStatus::FormatError
    );

    // undersized output buffer
    let (path, _) = saved_model(dir.path());
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let status = unsafe { fei3d_model_load(cpath.as_ptr(), &mut handle) };
    assert_eq!(status, FeiStatus::Ok);
    let features = [0.0; 6];
    let mut tiny = vec![0.0; 3];
    assert_eq!(
        unsafe {
            fei3d_model_predict(handle, features.as_ptr(), 1, 6, tiny.as_mut_ptr(), tiny.len())
        },
        FeiStatus::InvalidArgument
    );
    unsafe { fei3d_model_free(handle) };
    // freeing null is a no-op
    unsafe { fei3d_model_free(ptr::null_mut()) };
}

#[test]
fn fusion_matches_core() {
    let a = [0.6, 0.4, 0.2, 0.8];
    let b = [0.2, 0.8, 0.5, 0.5];
    let mut out = [0.0; 4];
    let status = unsafe {
        fei3d_late_fuse_class(
            a.as_ptr(),
            b.as_ptr(),
            2,
            2,
            FeiFusionStrategy::Weighted,
            0.2,
            out.as_mut_ptr(),
        )
    };
    assert_eq!(status, FeiStatus::Ok, "{}", last_error());
    assert!((out[0] - 0.52).abs() < 1e-12);
    assert!((out[1] - 0.48).abs() < 1e-12);

    let core = fei3d::fusion::late_fuse_class(
        &Matrix::from_vec(2, 2, a.to_vec()).unwrap(),
        &Matrix::from_vec(2, 2, b.to_vec()).unwrap(),
        &fei3d::fusion::FusionStrategy::Weighted(0.2),
    )
    .unwrap();
    assert_eq!(out.as_slice(), core.data());

    // va fusion with a 0.4 share for the second source
    let va_a = [0.5, 0.0];
    let va_b = [0.0, 0.5];
    let mut va_out = [0.0; 2];
    let status = unsafe {
        fei3d_late_fuse_va(
            va_a.as_ptr(),
            va_b.as_ptr(),
            1,
            FeiFusionStrategy::Weighted,
            0.4,
            va_out.as_mut_ptr(),
        )
    };
    assert_eq!(status, FeiStatus::Ok);
    assert!((va_out[0] - 0.30).abs() < 1e-12);
    assert!((va_out[1] - 0.20).abs() < 1e-12);

    // logits are rejected with a data error
    let logits = [2.0, 1.0, 0.0, 0.5];
    assert_eq!(
        unsafe {
            fei3d_late_fuse_class(
                logits.as_ptr(),
                b.as_ptr(),
                2,
                2,
                FeiFusionStrategy::Mean,
                0.0,
                out.as_mut_ptr(),
            )
        },
        FeiStatus::DataError
    );
}

#[test]
fn softmax_rows_normalizes_in_place() {
    let mut data = [2.0, -1.0, 0.0, 0.0];
    assert_eq!(
        unsafe { fei3d_softmax_rows(data.as_mut_ptr(), 2, 2) },
        FeiStatus::Ok
    );
    assert!((data[0] + data[1] - 1.0).abs() < 1e-12);
    assert!((data[2] - 0.5).abs() < 1e-12);
}

#[test]
fn report_jsons_parse_and_match_core() {
    let truth: [u32; 6] = [0, 0, 1, 1, 2, 2];
    let pred: [u32; 6] = [0, 1, 1, 1, 2, 0];
    let mut json_ptr: *mut c_char = ptr::null_mut();
    let status = unsafe {
        fei3d_classification_report_json(truth.as_ptr(), pred.as_ptr(), 6, 3, &mut json_ptr)
    };
    assert_eq!(status, FeiStatus::Ok, "{}", last_error());
    let json = unsafe { CStr::from_ptr(json_ptr) }.to_str().unwrap().to_owned();
    unsafe { fei3d_string_free(json_ptr) };
    let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
    let core = fei3d::metrics::classification_report(
        &[0, 0, 1, 1, 2, 2],
        &[0, 1, 1, 1, 2, 0],
        3,
    )
    .unwrap();
    assert_eq!(
        parsed["classification"]["accuracy"].as_f64().unwrap(),
        core.accuracy
    );

    let pred_va = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
    let target_va = [0.15, 0.2, 0.25, 0.45, 0.5, 0.55];
    let mut json_ptr: *mut c_char = ptr::null_mut();
    let status = unsafe {
        fei3d_regression_report_json(pred_va.as_ptr(), target_va.as_ptr(), 3, &mut json_ptr)
    };
    assert_eq!(status, FeiStatus::Ok, "{}", last_error());
    let json = unsafe { CStr::from_ptr(json_ptr) }.to_str().unwrap().to_owned();
    unsafe { fei3d_string_free(json_ptr) };
    let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
    for field in ["mse", "mae", "rmse", "ccc"] {
        assert!(parsed["regression"]["valence"][field].is_number());
    }
}

#[test]
fn header_exists_with_exported_symbols() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("include")
        .join("fei3d.h");
    let text = std::fs::read_to_string(header).unwrap();
    for symbol in [
        "fei3d_model_load",
        "fei3d_model_free",
        "fei3d_model_predict",
        "fei3d_late_fuse_class",
        "fei3d_late_fuse_va",
        "fei3d_classification_report_json",
        "fei3d_regression_report_json",
        "fei3d_last_error_message",
        "fei3d_string_free",
        "typedef struct FeiModel FeiModel",
    ] {
        assert!(text.contains(symbol), "header lacks {symbol}");
    }
}
