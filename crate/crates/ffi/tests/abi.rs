use std::ffi::{CStr, CString};
use std::ptr;

use btd_core::heads::TrainedHead;
use btd_core::imageio::{save_pgm, GrayImage};
use btd_core::nn::{build_preset, init_parameters};
use btd_core::pipeline::{ModelArtifact, Preprocessing};
use btd_ffi::*;

fn model_bytes() -> Vec<u8> {
    let network = build_preset("tiny-32", 2).unwrap();
    let params = init_parameters(&network, 4).unwrap();
    ModelArtifact {
        network,
        params,
        preprocessing: Preprocessing::None,
        head: TrainedHead::Softmax,
        seed: 0,
        metrics: None,
    }
    .to_bytes()
}

fn last_error() -> String {
    let p = btd_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn load_predict_free() {
    let bytes = model_bytes();
    let mut model: *mut BtdModel = ptr::null_mut();
    let status = unsafe { btd_model_load_bytes(bytes.as_ptr(), bytes.len(), &mut model) };
    assert_eq!(status, BtdStatus::Ok);
    assert!(btd_last_error().is_null());

    let mut classes = 0usize;
    assert_eq!(unsafe { btd_model_num_classes(model, &mut classes) }, BtdStatus::Ok);
    assert_eq!(classes, 2);

    let pgm = save_pgm(&GrayImage::filled(48, 48, 0).unwrap());
    let mut class = 9u32;
    let mut scores = [0.0f64; 2];
    let status = unsafe { btd_model_predict_pgm(model, pgm.as_ptr(), pgm.len(), &mut class, scores.as_mut_ptr(), 2) };
    assert_eq!(status, BtdStatus::Ok);
    assert!(class < 2);
    assert!((scores[0] + scores[1] - 1.0).abs() < 1e-12);

    let mut again = [0.0f64; 2];
    unsafe { btd_model_predict_pgm(model, pgm.as_ptr(), pgm.len(), &mut class, again.as_mut_ptr(), 2) };
    assert_eq!(scores, again);

    let status = unsafe { btd_model_predict_pgm(model, pgm.as_ptr(), pgm.len(), &mut class, scores.as_mut_ptr(), 1) };
    assert_eq!(status, BtdStatus::BufferTooSmall);

    let status = unsafe { btd_model_predict_pgm(model, b"P2\n".as_ptr(), 3, &mut class, ptr::null_mut(), 0) };
    assert_eq!(status, BtdStatus::BadImage);
    assert!(last_error().contains("P5"));

    unsafe { btd_model_free(model) };
    unsafe { btd_model_free(ptr::null_mut()) };
}

#[test]
fn load_errors() {
    let mut model: *mut BtdModel = ptr::null_mut();
    let mut bytes = model_bytes();
    bytes[0] = b'Z';
    assert_eq!(
        unsafe { btd_model_load_bytes(bytes.as_ptr(), bytes.len(), &mut model) },
        BtdStatus::BadModel
    );
    assert!(last_error().contains("magic"));
    assert!(model.is_null());

    let path = CString::new("/nonexistent/model.btdm").unwrap();
    assert_eq!(unsafe { btd_model_load(path.as_ptr(), &mut model) }, BtdStatus::Io);
    assert_eq!(
        unsafe { btd_model_load(ptr::null(), &mut model) },
        BtdStatus::NullArgument
    );

    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("m.btdm");
    std::fs::write(&file, model_bytes()).unwrap();
    let path = CString::new(file.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { btd_model_load(path.as_ptr(), &mut model) }, BtdStatus::Ok);
    unsafe { btd_model_free(model) };
    assert_eq!(btd_format_version(), 1);
}

#[test]
fn metrics_from_counts() {
    let cm = BtdConfusion {
        tp: 170,
        fp: 3,
        tn: 53,
        fn_: 0,
    };
    let mut m = BtdMetrics::default();
    assert_eq!(unsafe { btd_metrics(&cm, &mut m) }, BtdStatus::Ok);
    assert_eq!(
        (m.precision.num, m.precision.den, m.precision.percent_bp),
        (170, 173, 9827)
    );
    assert_eq!(
        (m.accuracy.num, m.accuracy.den, m.accuracy.percent_bp),
        (223, 226, 9867)
    );
    assert_eq!(m.specificity.percent_bp, 9464);
    assert_eq!(m.sensitivity.percent_bp, 10000);

    let empty = BtdConfusion {
        tp: 0,
        fp: 0,
        tn: 4,
        fn_: 0,
    };
    assert_eq!(unsafe { btd_metrics(&empty, &mut m) }, BtdStatus::Ok);
    assert_eq!(m.sensitivity.defined, 0);
    assert_eq!(m.specificity.defined, 1);
}

#[test]
fn confusion_from_indices() {
    let preds = [1u32, 1, 0, 0];
    let labels = [1u32, 0, 0, 1];
    let mut cm = BtdConfusion::default();
    assert_eq!(
        unsafe { btd_confusion(preds.as_ptr(), labels.as_ptr(), 4, &mut cm) },
        BtdStatus::Ok
    );
    assert_eq!(
        cm,
        BtdConfusion {
            tp: 1,
            fp: 1,
            tn: 1,
            fn_: 1
        }
    );
    let bad = [2u32];
    assert_eq!(
        unsafe { btd_confusion(bad.as_ptr(), labels.as_ptr(), 1, &mut cm) },
        BtdStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { btd_confusion(preds.as_ptr(), labels.as_ptr(), 0, &mut cm) },
        BtdStatus::InvalidArgument
    );
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/btd.h");
    let Ok(out) = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c", header])
        .output()
    else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
