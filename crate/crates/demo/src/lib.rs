//! Browser bindings: schedules, Frobenius splits and small membership censuses.
//! Every export returns a JSON string; errors come back as `{"error": ...}`.

use mcm_core::finite_geometry::{core_lemma_census, CensusMode};
use mcm_core::product_coup::{frobenius_split, verify_semigroup_bound};
use mcm_core::schedule::{build_schedule, twist_ledger, validate_schedule, ProblemShape};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Exhaustive census cap for the page; q^{2b(a+1)} above this is refused.
const DEMO_CENSUS_BUDGET: u64 = 1 << 22;

fn respond(r: mcm_core::Result<Value>) -> String {
    r.unwrap_or_else(|e| json!({ "error": e.to_string() })).to_string()
}

pub fn schedule_value(n: usize, c: usize, r: usize, heart: u64) -> mcm_core::Result<Value> {
    let shape = ProblemShape::new(n, c, r)?;
    let s = build_schedule(shape, heart, &vec![1; shape.equations()])?;
    let v = validate_schedule(&s)?;
    let ledger = twist_ledger(&s)?;
    let sv = serde_json::to_value(&s)?;
    Ok(json!({
        "first_level": shape.first_level(),
        "mu": sv["mu"],
        "delta": sv["delta"],
        "d": sv["d"],
        "inequalities": v.checks.iter().map(|c| json!({ "name": c.name, "pass": c.pass })).collect::<Vec<_>>(),
        "twists": ledger.entries.iter().map(|e| e.value.to_string()).collect::<Vec<_>>(),
        "all_negative": ledger.all_negative,
    }))
}

pub fn split_value(d: u64, s: u64, horizon: u64) -> mcm_core::Result<Value> {
    let sg = verify_semigroup_bound(s, horizon)?;
    let split = frobenius_split(d, s).map(|(p, q)| json!({ "p": p, "q": q })).unwrap_or(Value::Null);
    Ok(json!({ "d": d, "s": s, "split": split, "unrepresentable": sg.unrepresentable, "threshold": sg.threshold, "pass": sg.pass }))
}

pub fn census_value(a: usize, b: usize, q: u64) -> mcm_core::Result<Value> {
    let dim = 2 * b * (a + 1);
    if (q as f64).powi(dim as i32) > DEMO_CENSUS_BUDGET as f64 {
        return Err(mcm_core::Error::BudgetExceeded(format!("{q}^{dim} matrices is too many for the page")));
    }
    Ok(serde_json::to_value(core_lemma_census(a, b, q, CensusMode::Exhaustive, DEMO_CENSUS_BUDGET)?)?)
}

/// Exponent schedule of shape (N, c, r) with ε ≡ 1.
#[wasm_bindgen]
pub fn schedule(n: usize, c: usize, r: usize, heart: u64) -> String {
    respond(schedule_value(n, c, r, heart))
}

/// d = p·s + q·(s+1) and the non-representable values for s.
#[wasm_bindgen]
pub fn semigroup(d: u64, s: u64, horizon: u64) -> String {
    respond(split_value(d, s, horizon))
}

/// Exhaustive count of the rank-condition variety over 𝔽_q.
#[wasm_bindgen]
pub fn census(a: usize, b: usize, q: u64) -> String {
    respond(census_value(a, b, q))
}
