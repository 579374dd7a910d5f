//! Browser bindings. Every operation takes the three input documents as
//! JSON text and returns a JSON report; the plain functions are usable (and
//! tested) off the browser too.

use provabs::abstraction::{loss_of_abstracted, AbstractedKExample, AbstractionTree, LossModel};
use provabs::consistency::ConsistencyCache;
use provabs::io::{database_from_str, example_from_str, tree_from_str, validate_inputs, InputDigests, Report};
use provabs::optimizer::{run, OptimizerConfig};
use provabs::privacy::compute_privacy;
use provabs::provenance::{KDatabase, KExample};
use serde_json::json;
use wasm_bindgen::prelude::*;

// Lower than the CLI defaults so a page never freezes for long.
const MAX_CONCRETIZATIONS: u128 = 200_000;
const MAX_ABSTRACTIONS: u128 = 20_000;

fn parse(db: &str, tree: &str, example: &str, labels: bool) -> Result<(KDatabase, AbstractionTree, KExample), String> {
    let db = database_from_str(db).map_err(|e| format!("database: {e}"))?;
    let tree = tree_from_str(tree).map_err(|e| format!("tree: {e}"))?;
    let ex = example_from_str(example).map_err(|e| format!("example: {e}"))?;
    validate_inputs(&db, &tree, &ex, labels).map_err(|e| e.to_string())?;
    Ok((db, tree, ex))
}

fn config(cfg: OptimizerConfig) -> OptimizerConfig {
    OptimizerConfig {
        max_concretizations: MAX_CONCRETIZATIONS,
        max_abstractions: MAX_ABSTRACTIONS,
        ..cfg
    }
}

/// Privacy of an abstracted example (node labels allowed) against `k`.
pub fn privacy_report(db: &str, tree: &str, example: &str, k: usize) -> Result<String, String> {
    let (db, tree, ex) = parse(db, tree, example, true)?;
    let cfg = config(OptimizerConfig::primal(k));
    let inputs = InputDigests::of(Some(&db), Some(&tree), Some(&ex));
    let abs = AbstractedKExample::from_labels(ex);
    let loi = loss_of_abstracted(&abs, &tree, &LossModel::Uniform).ok();
    let mut cache = ConsistencyCache::new();
    let report = match compute_privacy(&abs, &tree, &db, k, &mut cache, &cfg.privacy_config()) {
        Ok(out) => Report::from_privacy(inputs, &abs, loi, &cfg, &out),
        Err(e) if e.is_cap() => Report::capped("privacy", inputs, &cfg, e.to_string()),
        Err(e) => return Err(e.to_string()),
    };
    Ok(report.to_json())
}

fn search(command: &str, db: &str, tree: &str, example: &str, cfg: OptimizerConfig) -> Result<String, String> {
    let (db, tree, ex) = parse(db, tree, example, false)?;
    let cfg = config(cfg);
    let res = run(&ex, &tree, &db, &cfg).map_err(|e| e.to_string())?;
    let inputs = InputDigests::of(Some(&db), Some(&tree), Some(&ex));
    Ok(Report::from_search(command, inputs, &ex, &cfg, &res).to_json())
}

/// Least lossy abstraction with privacy at least `k`.
pub fn optimize_report(db: &str, tree: &str, example: &str, k: usize) -> Result<String, String> {
    search("optimize", db, tree, example, OptimizerConfig::primal(k))
}

/// Most private abstraction with loss at most `loi_max` nats.
pub fn dual_report(db: &str, tree: &str, example: &str, loi_max: f64) -> Result<String, String> {
    search("dual", db, tree, example, OptimizerConfig::dual(loi_max))
}

/// The running example's inputs, to prefill the page.
pub fn fixture_documents() -> String {
    use provabs::fixtures as f;
    json!({
        "db": f::DATABASE,
        "tree": f::TREE,
        "example": f::EX_REAL,
        "abstracted": f::EX_ABS1,
    })
    .to_string()
}

#[wasm_bindgen]
pub fn privacy(db: &str, tree: &str, example: &str, k: usize) -> Result<String, JsError> {
    privacy_report(db, tree, example, k).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn optimize(db: &str, tree: &str, example: &str, k: usize) -> Result<String, JsError> {
    optimize_report(db, tree, example, k).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn dual(db: &str, tree: &str, example: &str, loi_max: f64) -> Result<String, JsError> {
    dual_report(db, tree, example, loi_max).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn fixtures() -> String {
    fixture_documents()
}
