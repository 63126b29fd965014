use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::ptr;

use caet::model::{CaeModel, ModelConfig};
use caet::text::{Attribute, VocabOptions, Vocabulary};
use caet::training::save_checkpoint;
use caet_ffi::*;

fn last_error() -> String {
    let p = caet_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn fixture(dir: &std::path::Path) -> (CString, CaeModel, Vocabulary) {
    let texts = ["the cat sat", "a dog ran fast", "the dog sat"];
    let vocab = Vocabulary::build(texts, ["rude", "polite"], &VocabOptions::default()).unwrap();
    let mut cfg = ModelConfig::desk(vocab.len());
    cfg.d_model = 16;
    cfg.d_ff = 32;
    cfg.encoder_layers = 1;
    cfg.decoder_layers = 1;
    let model = CaeModel::new(cfg, 3).unwrap();
    let path = dir.join("m.ckpt");
    save_checkpoint(&path, &model, &vocab, 0, None, &BTreeMap::new()).unwrap();
    (CString::new(path.to_str().unwrap()).unwrap(), model, vocab)
}

#[test]
fn transfer_matches_the_rust_api() {
    let dir = tempfile::tempdir().unwrap();
    let (path, model, vocab) = fixture(dir.path());
    let mut handle: *mut CaetModel = ptr::null_mut();
    unsafe {
        assert_eq!(caet_model_load(path.as_ptr(), &mut handle), CaetStatus::Ok);
        assert!(!handle.is_null());
        assert_eq!(CStr::from_ptr(caet_model_attribute(handle, 1)).to_str().unwrap(), "polite");
        assert!(caet_model_attribute(handle, 2).is_null());

        let text = CString::new("the cat ran").unwrap();
        let to = CString::new("polite").unwrap();
        let mut out: *mut c_char = ptr::null_mut();
        assert_eq!(caet_transfer(handle, text.as_ptr(), to.as_ptr(), &mut out), CaetStatus::Ok);
        let got = CStr::from_ptr(out).to_str().unwrap().to_string();
        caet_string_free(out);
        let want = caet::cli::transfer_text(&model, &vocab, "the cat ran", Attribute::Second, 32).unwrap();
        assert_eq!(got, want);
        caet_model_free(handle);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _, _) = fixture(dir.path());
    let mut handle: *mut CaetModel = ptr::null_mut();
    unsafe {
        let missing = CString::new(dir.path().join("nope.ckpt").to_str().unwrap()).unwrap();
        assert_eq!(caet_model_load(missing.as_ptr(), &mut handle), CaetStatus::Io);
        assert!(handle.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(caet_model_load(ptr::null(), &mut handle), CaetStatus::NullPointer);
        assert_eq!(caet_model_load(path.as_ptr(), ptr::null_mut()), CaetStatus::NullPointer);

        assert_eq!(caet_model_load(path.as_ptr(), &mut handle), CaetStatus::Ok);
        let text = CString::new("the cat").unwrap();
        let bad = CString::new("sarcastic").unwrap();
        let mut out: *mut c_char = ptr::null_mut();
        assert_eq!(caet_transfer(handle, text.as_ptr(), bad.as_ptr(), &mut out), CaetStatus::Config);
        assert!(out.is_null());
        assert!(last_error().contains("sarcastic"));

        let invalid = [0xffu8, 0xfe, 0];
        assert_eq!(
            caet_transfer(handle, invalid.as_ptr().cast(), bad.as_ptr(), &mut out),
            CaetStatus::InvalidUtf8
        );
        assert_eq!(caet_transfer(ptr::null(), text.as_ptr(), bad.as_ptr(), &mut out), CaetStatus::NullPointer);
        caet_model_free(handle);
        caet_model_free(ptr::null_mut());
        caet_string_free(ptr::null_mut());
    }
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("junk.ckpt");
    std::fs::write(&p, b"not a checkpoint at all").unwrap();
    let path = CString::new(p.to_str().unwrap()).unwrap();
    let mut handle: *mut CaetModel = ptr::null_mut();
    let s = unsafe { caet_model_load(path.as_ptr(), &mut handle) };
    assert_eq!(s, CaetStatus::Checkpoint);
    assert!(handle.is_null());
}

#[test]
fn metrics_through_the_abi() {
    let mut gm = 0.0;
    unsafe {
        assert_eq!(caet_geometric_mean(0.75, 5.2, 0.70, &mut gm), CaetStatus::Ok);
        assert!((gm - 0.466).abs() < 0.002);
        assert_eq!(caet_geometric_mean(0.5, 0.0, 0.5, &mut gm), CaetStatus::Data);

        let cand = CString::new("The quick brown fox jumps").unwrap();
        let r1 = CString::new("the quick brown fox jumps").unwrap();
        let r2 = CString::new("a slow dog").unwrap();
        let refs = [r1.as_ptr(), r2.as_ptr()];
        let mut b = 0.0;
        assert_eq!(caet_bleu(cand.as_ptr(), refs.as_ptr(), 2, &mut b), CaetStatus::Ok);
        assert!((b - 100.0).abs() < 1e-9);
        assert_eq!(caet_bleu(cand.as_ptr(), refs.as_ptr(), 0, &mut b), CaetStatus::Data);
        assert_eq!(caet_bleu(cand.as_ptr(), ptr::null(), 1, &mut b), CaetStatus::NullPointer);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/caet.h")).unwrap();
    for f in [
        "caet_last_error",
        "caet_model_load",
        "caet_model_free",
        "caet_model_attribute",
        "caet_transfer",
        "caet_string_free",
        "caet_geometric_mean",
        "caet_bleu",
        "caet_version",
        "CAET_STATUS_INVALID_UTF8",
    ] {
        assert!(header.contains(&format!("{f}")), "{f} missing from header");
    }
    let v = unsafe { CStr::from_ptr(caet_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
