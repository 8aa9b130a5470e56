use std::ffi::{c_char, CStr, CString};
use std::ptr;

use persuakit_ffi::*;

struct Hierarchy(*mut PkHierarchy);

impl Hierarchy {
    fn bundled() -> Self {
        let mut h = ptr::null_mut();
        assert_eq!(unsafe { pk_hierarchy_default(&mut h) }, PkStatus::Ok);
        assert!(!h.is_null());
        Hierarchy(h)
    }
}

impl Drop for Hierarchy {
    fn drop(&mut self) {
        unsafe { pk_hierarchy_free(self.0) }
    }
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn take(out: *mut c_char) -> String {
    assert!(!out.is_null());
    let s = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    unsafe { pk_string_free(out) };
    s
}

fn last_error() -> String {
    let p = pk_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn json(s: &str) -> serde_json::Value {
    serde_json::from_str(s).unwrap()
}

const TOY: &str = r#"{"root":"R","edges":[["R","A"],["R","B"],["A","a1"],["A","a2"],["B","b1"]],"leaf_order":["a1","a2","b1"]}"#;

fn toy() -> Hierarchy {
    let mut h = ptr::null_mut();
    let doc = c(TOY);
    assert_eq!(unsafe { pk_hierarchy_from_json(doc.as_ptr(), &mut h) }, PkStatus::Ok);
    Hierarchy(h)
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(pk_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn bundled_hierarchy_has_twenty_leaves() {
    let h = Hierarchy::bundled();
    assert_eq!(unsafe { pk_hierarchy_leaf_count(h.0) }, 20);
    assert_eq!(unsafe { pk_hierarchy_leaf_count(ptr::null()) }, 0);
}

#[test]
fn score_partial_credit() {
    let h = toy();
    let gold = c(r#"[{"id":"x","labels":["a1"]}]"#);
    let pred = c(r#"[{"id":"x","labels":["a2"]}]"#);
    let mut out = ptr::null_mut();
    let st = unsafe { pk_score(h.0, gold.as_ptr(), pred.as_ptr(), &mut out) };
    assert_eq!(st, PkStatus::Ok);
    let report = json(&take(out));
    assert_eq!(report["h_f1"], 0.5);
    assert!(pk_last_error_message().is_null());
}

#[test]
fn null_and_bad_arguments() {
    let h = toy();
    let gold = c("[]");
    let mut out = ptr::null_mut();
    let st = unsafe { pk_score(h.0, gold.as_ptr(), ptr::null(), &mut out) };
    assert_eq!(st, PkStatus::InvalidArgument);
    assert!(last_error().contains("pred_json"));
    assert!(out.is_null());

    let st = unsafe { pk_score(ptr::null(), gold.as_ptr(), gold.as_ptr(), &mut out) };
    assert_eq!(st, PkStatus::InvalidArgument);

    let st = unsafe { pk_score(h.0, gold.as_ptr(), gold.as_ptr(), ptr::null_mut()) };
    assert_eq!(st, PkStatus::InvalidArgument);

    let bad = c("{not json");
    let st = unsafe { pk_score(h.0, bad.as_ptr(), gold.as_ptr(), &mut out) };
    assert_eq!(st, PkStatus::Malformed);

    let unknown = c(r#"[{"id":"x","labels":["zzz"]}]"#);
    let st = unsafe { pk_score(h.0, unknown.as_ptr(), unknown.as_ptr(), &mut out) };
    assert_eq!(st, PkStatus::Validation);
    assert!(last_error().contains("zzz"));

    let mut hh = ptr::null_mut();
    let cyclic = c(r#"{"root":"R","edges":[["R","A"],["A","B"],["B","A"]],"leaf_order":[]}"#);
    assert_eq!(
        unsafe { pk_hierarchy_from_json(cyclic.as_ptr(), &mut hh) },
        PkStatus::Validation
    );
    assert!(hh.is_null());
    unsafe { pk_string_free(ptr::null_mut()) };
    unsafe { pk_hierarchy_free(ptr::null_mut()) };
}

fn matrix(kind: &str, rows: &[(&str, [f64; 3])]) -> serde_json::Value {
    serde_json::json!({
        "kind": kind,
        "technique_order": ["a1", "a2", "b1"],
        "rows": rows.iter().map(|(id, v)| serde_json::json!({"id": id, "values": v})).collect::<Vec<_>>(),
    })
}

#[test]
fn ensemble_then_predict() {
    let h = toy();
    let m1 = matrix("probabilities", &[("x", [0.9, 0.1, 0.4]), ("y", [0.2, 0.6, 0.0])]);
    let m2 = matrix("probabilities", &[("y", [0.4, 0.2, 0.0]), ("x", [0.7, 0.3, 0.2])]);
    let members = c(&serde_json::json!([m1, m2]).to_string());

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { pk_ensemble(h.0, members.as_ptr(), &mut out) }, PkStatus::Ok);
    let avg = json(&take(out));
    assert_eq!(avg["rows"][0]["id"], "x");
    let x: Vec<f64> = serde_json::from_value(avg["rows"][0]["values"].clone()).unwrap();
    assert!((x[0] - 0.8).abs() < 1e-12 && (x[1] - 0.2).abs() < 1e-12 && (x[2] - 0.3).abs() < 1e-12);

    let profile = c(r#"{"a1":0.5,"a2":0.4,"b1":0.3,"grid":{"lo":0.01,"hi":0.7,"step":0.01}}"#);
    assert_eq!(
        unsafe { pk_predict(h.0, members.as_ptr(), profile.as_ptr(), &mut out) },
        PkStatus::Ok
    );
    let labels = json(&take(out));
    assert_eq!(
        labels,
        json(r#"[{"id":"x","labels":["a1","b1"]},{"id":"y","labels":["a2"]}]"#)
    );
}

#[test]
fn ensemble_rejects_mismatched_members() {
    let h = toy();
    let m1 = matrix("probabilities", &[("x", [0.9, 0.1, 0.4])]);
    let m2 = matrix("probabilities", &[("z", [0.9, 0.1, 0.4])]);
    let members = c(&serde_json::json!([m1, m2]).to_string());
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { pk_ensemble(h.0, members.as_ptr(), &mut out) }, PkStatus::Validation);
    let empty = c("[]");
    assert_eq!(unsafe { pk_ensemble(h.0, empty.as_ptr(), &mut out) }, PkStatus::Validation);
    assert!(out.is_null());
}

#[test]
fn tune_separable_logits() {
    let h = toy();
    // sigmoid(0) = 0.5, sigmoid(-3) ~ 0.047
    let m = matrix("logits", &[("x", [0.0, -3.0, -3.0]), ("y", [-3.0, 0.0, -3.0])]);
    let gold = c(r#"[{"id":"x","labels":["a1"]},{"id":"y","labels":["a2"]}]"#);
    let doc = c(&m.to_string());
    let mut out = ptr::null_mut();
    let st = unsafe { pk_tune_thresholds(h.0, doc.as_ptr(), gold.as_ptr(), 0.01, 0.7, 0.01, &mut out) };
    assert_eq!(st, PkStatus::Ok, "{}", last_error());
    let profile = json(&take(out));
    assert_eq!(profile["a1"], 0.05);
    assert_eq!(profile["a2"], 0.05);
    // b1 never positive: every grid point scores F1 0, so the smallest wins.
    assert_eq!(profile["b1"], 0.01);

    let st = unsafe { pk_tune_thresholds(h.0, doc.as_ptr(), gold.as_ptr(), 0.7, 0.01, 0.01, &mut out) };
    assert_eq!(st, PkStatus::InvalidArgument);
}

#[test]
fn plan_strategies() {
    let h = toy();
    let ds = c(r#"[
        {"id":"1","text":"one","labels":["a1"]},
        {"id":"2","text":"two","labels":["a1","b1"]},
        {"id":"3","text":"three","labels":[]}]"#);
    let mut out = ptr::null_mut();

    let p = c(r#"{"strategy":"para_n","n":2}"#);
    assert_eq!(unsafe { pk_plan_augment(h.0, ds.as_ptr(), p.as_ptr(), &mut out) }, PkStatus::Ok);
    let plan = json(&take(out));
    assert_eq!(plan["requests"].as_array().unwrap().len(), 3);

    let p = c(r#"{"strategy":"para_benef","benefit":["b1"],"m":4}"#);
    assert_eq!(unsafe { pk_plan_augment(h.0, ds.as_ptr(), p.as_ptr(), &mut out) }, PkStatus::Ok);
    let plan = json(&take(out));
    assert_eq!(plan["requests"], json(r#"[{"source_id":"2","count":4,"labels":["b1"]}]"#));

    let p = c(r#"{"strategy":"para_bal","target":3,"batch":1}"#);
    assert_eq!(unsafe { pk_plan_augment(h.0, ds.as_ptr(), p.as_ptr(), &mut out) }, PkStatus::Ok);
    let plan = json(&take(out));
    assert_eq!(plan["unsatisfiable"], json(r#"["a2"]"#));

    let p = c(r#"{"strategy":"para_n"}"#);
    assert_eq!(
        unsafe { pk_plan_augment(h.0, ds.as_ptr(), p.as_ptr(), &mut out) },
        PkStatus::InvalidArgument
    );
    let p = c(r#"{"strategy":"para_x","n":1}"#);
    assert_ne!(unsafe { pk_plan_augment(h.0, ds.as_ptr(), p.as_ptr(), &mut out) }, PkStatus::Ok);
}

#[test]
fn errors_are_thread_local() {
    let h = toy();
    let bad = c("{");
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { pk_score(h.0, bad.as_ptr(), bad.as_ptr(), &mut out) }, PkStatus::Malformed);
    std::thread::spawn(|| assert!(pk_last_error_message().is_null()))
        .join()
        .unwrap();
    assert!(!pk_last_error_message().is_null());
}
