//! Browser bindings. Every function takes and returns JSON strings so the
//! page can stay plain JavaScript.

use std::collections::BTreeMap;

use serde::Serialize;
use spectrum_partition::allocation::waterfill;
use spectrum_partition::io::ScenarioDocument;
use spectrum_partition::market::licensed_served_moments;
use spectrum_partition::montecarlo::McConfig;
use spectrum_partition::stackelberg::{solve_stage1, McRevenueOracle};
use spectrum_partition::{MarketParams, OperatorId, OperatorProfile, Osa};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Max-min fair split of `capacity` over comma-separated demands.
pub fn waterfill_text(capacity: f64, demands: &str) -> Result<String, String> {
    let mut map = BTreeMap::new();
    for (i, d) in demands.split(',').map(str::trim).filter(|s| !s.is_empty()).enumerate() {
        let v: f64 = d.parse().map_err(|_| format!("not a number: {d}"))?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(format!("demand must be finite and non-negative: {d}"));
        }
        map.insert(OperatorId(i as u32 + 1), v);
    }
    if !(capacity >= 0.0 && capacity.is_finite()) {
        return Err("capacity must be finite and non-negative".into());
    }
    let alloc: Vec<f64> = waterfill(capacity, &map).into_values().collect();
    Ok(serde_json::to_string(&alloc).unwrap())
}

#[derive(Serialize)]
struct CurvePoint {
    capacity: f64,
    mean: f64,
    sd: f64,
    cov: f64,
}

/// Served-demand moments of one licensed operator as its channel grows.
pub fn moment_curve_text(mu: f64, sigma: f64, max_capacity: f64, points: u32) -> Result<String, String> {
    let prof = OperatorProfile {
        id: OperatorId(1),
        mu_theta: mu,
        sigma_theta: sigma,
        revenue_slope: 1.0,
        revenue_cv: 0.5,
        rho: 0.8,
        omega: 0.9,
        mer_fraction: 0.0,
    };
    let points = points.clamp(2, 2000);
    let mut out = Vec::with_capacity(points as usize);
    for i in 1..=points {
        let cap = max_capacity * f64::from(i) / f64::from(points);
        let prm = MarketParams {
            m: 1,
            p: 1,
            t_slots: 1,
            d_total: cap,
            phi: 0,
            alpha_l: 1.0,
            alpha_u: 1.0,
            osa: Osa::Overlay,
            bandwidth_hz: None,
        };
        let m = licensed_served_moments(&prof, &prm).map_err(|e| e.to_string())?;
        out.push(CurvePoint { capacity: cap, mean: m.mu_x_lc_slot, sd: m.sigma_x_lc_slot, cov: m.phi_k });
    }
    Ok(serde_json::to_string(&out).unwrap())
}

/// Regulator's grid search for a scenario document, kept small so it runs
/// in the page's main thread.
pub fn solve_text(scenario_json: &str, m_max: u32, seed: u64) -> Result<String, String> {
    let doc = ScenarioDocument::from_json(scenario_json).map_err(|e| e.to_string())?;
    doc.validate().map_err(|e| e.to_string())?;
    if !(1..=8).contains(&m_max) {
        return Err("m_max must be between 1 and 8".into());
    }
    let scenario = doc.scenario();
    let cfg = McConfig { beta1: 5.0, r_min: 2_000, r_max: 20_000, seed, ..McConfig::default() };
    let oracle = McRevenueOracle::new(scenario.clone(), cfg);
    let sol = solve_stage1(&scenario, &doc.market, &oracle, m_max).map_err(|e| e.to_string())?;
    Ok(serde_json::to_string(&sol).unwrap())
}

#[wasm_bindgen]
pub fn waterfill_json(capacity: f64, demands: &str) -> Result<String, JsValue> {
    waterfill_text(capacity, demands).map_err(js_err)
}

#[wasm_bindgen]
pub fn moment_curve_json(mu: f64, sigma: f64, max_capacity: f64, points: u32) -> Result<String, JsValue> {
    moment_curve_text(mu, sigma, max_capacity, points).map_err(js_err)
}

#[wasm_bindgen]
pub fn solve_json(scenario_json: &str, m_max: u32, seed: f64) -> Result<String, JsValue> {
    solve_text(scenario_json, m_max, seed as u64).map_err(js_err)
}
