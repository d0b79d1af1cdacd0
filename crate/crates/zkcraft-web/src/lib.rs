//! Browser bindings: the toy walkthrough, a row-score explorer and a
//! block-Vandermonde roundtrip. Each call returns a JSON string.

use num_rational::BigRational;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use zkcraft::circuit::parse_circuit_json;
use zkcraft::driver::{run_pipeline, RunConfig};
use zkcraft::ff::{test101, FieldElement};
use zkcraft::slicer::{select_pool, ScoreConvention, SlicerConfig};
use zkcraft::toy;
use zkcraft::vortex::{build_block_vandermonde, choose_nodes, default_degrees};

/// Largest pool the roundtrip demo accepts; `q = 101` needs `2k < 101`.
pub const MAX_DEMO_K: usize = 50;

fn strs(v: &[FieldElement]) -> Vec<String> {
    v.iter().map(|x| x.to_string()).collect()
}

/// Runs the full search on the three-row toy circuit with inputs `(a, b)`.
pub fn toy_walkthrough_json(a: u64, b: u64, seed: u64) -> Result<String, String> {
    let inst = toy::instance();
    let w = toy::honest_witness(&inst, a, b);
    let cfg = RunConfig { seed, attach_witness: true, ..RunConfig::default() };
    let out = run_pipeline(&inst, Some(toy::PROGRAM), Some(&w), &cfg).map_err(|e| e.to_string())?;
    let finding = out.findings.first().map(|f| {
        let cx: Value = serde_json::from_str(&f.counterexample.to_json()).expect("valid json");
        json!({
            "counterexample": cx,
            "proof_bytes": f.proof.as_ref().map(|p| p.to_bytes().len()),
        })
    });
    let manifest: Value = serde_json::from_str(&out.manifest.to_json()).expect("valid json");
    Ok(json!({
        "found": out.found(),
        "y_orig": strs(&w.outputs(&inst)),
        "finding": finding,
        "pool": manifest["pool"],
        "backend": manifest["backend"],
        "knowledge_error": manifest["knowledge_error"],
        "search": manifest["search"],
        "program": toy::PROGRAM,
    })
    .to_string())
}

/// Per-row counts, fingerprints and scores of a circuit in JSON form, with the
/// selected pool.
pub fn row_scores_json(
    circuit: &str,
    lambda: &str,
    mu: &str,
    convention: &str,
    pool_size: usize,
) -> Result<String, String> {
    let inst = parse_circuit_json(circuit.as_bytes()).map_err(|e| e.to_string())?;
    let rat = |s: &str| s.trim().parse::<BigRational>().map_err(|e| format!("bad rational {s:?}: {e}"));
    let cfg = SlicerConfig {
        score_lambda: rat(lambda)?,
        score_mu: rat(mu)?,
        pool_size,
        convention: convention.parse::<ScoreConvention>()?,
    };
    let pool = select_pool(&inst, &cfg).map_err(|e| e.to_string())?;
    Ok(json!({ "pool": pool.rows, "rows": pool.diagnostics }).to_string())
}

/// Encodes `δ ∥ c` with the block-Vandermonde matrix over `q = 101` and
/// decodes it again. `values` holds `2k` comma-separated integers.
pub fn vandermonde_roundtrip_json(k: usize, values: &str) -> Result<String, String> {
    if k == 0 || k > MAX_DEMO_K {
        return Err(format!("k must be in 1..={MAX_DEMO_K}"));
    }
    let q = test101();
    let v: Vec<FieldElement> = values
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<u64>().map(|x| FieldElement::from_u64(&q, x)).map_err(|e| format!("{s:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if v.len() != 2 * k {
        return Err(format!("expected {} values, got {}", 2 * k, v.len()));
    }
    let (d_row, d_sel) = default_degrees(k);
    let plan = choose_nodes(&q, k, d_row, d_sel).map_err(|e| e.to_string())?;
    let m = build_block_vandermonde(&plan).map_err(|e| e.to_string())?;
    let rho = m.apply(&v);
    let back = m.invert(&rho);
    Ok(json!({
        "alpha": strs(&plan.alpha),
        "beta": strs(&plan.beta),
        "det": m.det.to_string(),
        "input": strs(&v),
        "rho": strs(&rho),
        "decoded": strs(&back),
        "roundtrip": back == v,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn toy_walkthrough(a: u32, b: u32, seed: u32) -> Result<String, JsError> {
    toy_walkthrough_json(a as u64, b as u64, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn row_scores(circuit: &str, lambda: &str, mu: &str, convention: &str, pool_size: u32) -> Result<String, JsError> {
    row_scores_json(circuit, lambda, mu, convention, pool_size as usize).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn vandermonde_roundtrip(k: u32, values: &str) -> Result<String, JsError> {
    vandermonde_roundtrip_json(k as usize, values).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn toy_circuit_json() -> String {
    toy::CIRCUIT_JSON.to_string()
}
