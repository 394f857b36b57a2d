//! Browser bindings for the demo page in `www/`.
//!
//! Each export returns a JSON string; the page plots it.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nullflow::congruence::{Congruence, CongruenceOptions, Generator, Orientation, SeedSurface};
use nullflow::energy::{converging_test, witness_violation, WitnessOptions};
use nullflow::geometry::builtins;
use nullflow::quadrature::{AxisRule, RuleKind};
use nullflow::transport::{convexity_report, uniform_grid, Measure};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn sphere(map: [String; 4], nodes: (usize, usize)) -> nullflow::Result<SeedSurface> {
    let axes = vec![
        AxisRule { lo: 0.0, hi: PI, nodes: nodes.0, kind: RuleKind::Gauss },
        AxisRule { lo: 0.0, hi: 2.0 * PI, nodes: nodes.1, kind: RuleKind::Uniform },
    ];
    SeedSurface::new(&map, 4, &BTreeMap::new(), axes, Orientation::Standard)
}

/// Entropy along the outgoing flat cone against `-(4 pi)^{1/N'} (1+t)^{2/N'}`.
pub fn cone_entropy_json(n_prime: f64, points: usize) -> Result<String, String> {
    let m = builtins::minkowski(4).map_err(|e| e.to_string())?;
    let map = ["0", "sin(u0)*cos(u1)", "sin(u0)*sin(u1)", "cos(u0)"].map(String::from);
    let seed = sphere(map, (6, 12)).map_err(|e| e.to_string())?;
    let c = Congruence::build(&m, &seed, CongruenceOptions::new(1.0)).map_err(|e| e.to_string())?;
    let mu = Measure::uniform(&c).map_err(|e| e.to_string())?;
    let grid = uniform_grid(points.max(3));
    let r = convexity_report(&mu, n_prime, &grid).map_err(|e| e.to_string())?;
    let exact: Vec<f64> = grid
        .iter()
        .map(|t| -(4.0 * PI).powf(1.0 / n_prime) * (1.0 + t).powf(2.0 / n_prime))
        .collect();
    Ok(json!({
        "t": r.t_grid,
        "entropy": r.entropy,
        "exact": exact,
        "slack": r.slack,
        "min_slack": r.min_slack,
        "verdict": r.verdict,
    })
    .to_string())
}

/// Witness for `a(t) = exp(t^2)` at the origin along `e0 + e1`.
pub fn flrw_witness_json(exponent: f64, max_halvings: usize) -> Result<String, String> {
    let m = builtins::flrw("exp(x0^2)", 4).map_err(|e| e.to_string())?;
    let mut opts = WitnessOptions::new(exponent);
    opts.max_halvings = max_halvings;
    let w = witness_violation(&m, &[0.0; 4], &[1.0, 1.0, 0.0, 0.0], &opts).map_err(|e| e.to_string())?;
    Ok(json!({
        "gap": w.gap,
        "outcome": w.outcome,
        "attempts": w.attempts,
        "t": w.report.interior_t(),
        "slack": w.report.slack,
        "min_slack": w.report.min_slack,
    })
    .to_string())
}

/// Converging test and latest focal times for the sphere `v = 0, r = radius`
/// in Schwarzschild of mass `mass`.
pub fn trapped_focal_json(radius: f64, mass: f64) -> Result<String, String> {
    let m = builtins::schwarzschild_ef(mass).map_err(|e| e.to_string())?;
    let map = ["0".to_string(), format!("{radius:?}"), "u0".into(), "u1".into()];
    let seed = sphere(map, (3, 6)).map_err(|e| e.to_string())?;
    let t = converging_test(&m, &seed, None).map_err(|e| e.to_string())?;
    let t_max = 20.0;
    let mut focal = serde_json::Map::new();
    for (g, key) in [(Generator::L, "l"), (Generator::LBar, "lbar")] {
        let c = Congruence::build(&m, &seed, CongruenceOptions::new(t_max).with_generator(g))
            .map_err(|e| e.to_string())?;
        let times: Option<Vec<f64>> = c.rays.iter().map(|r| r.focal_time()).collect();
        let latest = times.map(|v| v.into_iter().fold(0.0, f64::max));
        focal.insert(key.into(), json!(latest));
    }
    Ok(json!({
        "h_l": t.min_h_l,
        "h_lbar": t.min_h_lbar,
        "epsilon": t.epsilon,
        "verdict": t.verdict,
        "t_max": t_max,
        "focal": focal,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn cone_entropy(n_prime: f64, points: usize) -> Result<String, JsError> {
    cone_entropy_json(n_prime, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn flrw_witness(exponent: f64, max_halvings: usize) -> Result<String, JsError> {
    flrw_witness_json(exponent, max_halvings).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn trapped_focal(radius: f64, mass: f64) -> Result<String, JsError> {
    trapped_focal_json(radius, mass).map_err(|e| JsError::new(&e))
}
