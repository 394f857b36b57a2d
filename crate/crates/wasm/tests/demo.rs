use nullflow_wasm::{cone_entropy_json, flrw_witness_json, trapped_focal_json};
use serde_json::Value;

fn parse(s: Result<String, String>) -> Value {
    serde_json::from_str(&s.unwrap()).unwrap()
}

#[test]
fn cone_entropy_matches_the_closed_form() {
    let v = parse(cone_entropy_json(2.0, 9));
    let s = v["entropy"].as_array().unwrap();
    let e = v["exact"].as_array().unwrap();
    assert_eq!(s.len(), 9);
    for (a, b) in s.iter().zip(e) {
        let (a, b) = (a.as_f64().unwrap(), b.as_f64().unwrap());
        assert!((a - b).abs() < 1e-6 * b.abs());
    }
    assert_eq!(v["verdict"], "consistent");
    assert!(cone_entropy_json(1.0, 9).is_err());
}

#[test]
fn flrw_witness_reports_a_violation() {
    let v = parse(flrw_witness_json(3.0, 12));
    assert_eq!(v["outcome"], "violation");
    assert!((v["gap"].as_f64().unwrap() + 4.0).abs() < 1e-6);
    assert!(v["min_slack"].as_f64().unwrap() < 0.0);
}

#[test]
fn trapped_sphere_focal_times() {
    let v = parse(trapped_focal_json(1.5, 1.0));
    assert_eq!(v["verdict"], "trapped");
    assert!((v["focal"]["lbar"].as_f64().unwrap() - 1.5).abs() < 1e-6);
    assert!((v["focal"]["l"].as_f64().unwrap() - 9.0).abs() < 1e-5);
    let out = parse(trapped_focal_json(3.0, 1.0));
    assert_eq!(out["verdict"], "not_trapped");
    assert!(out["focal"]["l"].is_null());
}
