//! Ablation sweeps: every instance under the full search and with each
//! optimization switched off in turn, one CSV row per run.

use serde::Serialize;

use crate::abstraction::AbstractionTree;
use crate::error::Result;
use crate::optimizer::{ablation_run, OptimizerConfig, Toggle, Toggles};
use crate::provenance::{KDatabase, KExample};

pub struct BenchInstance {
    pub name: String,
    pub database: KDatabase,
    pub tree: AbstractionTree,
    pub example: KExample,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub instance: String,
    pub variant: String,
    pub loi: Option<f64>,
    pub privacy: Option<usize>,
    pub choices_examined: u64,
    pub privacy_calls: u64,
    pub cache_hits: u64,
    pub skipped: u64,
    pub complete: bool,
    /// Wall time; left empty unless timing was asked for, so that rows are
    /// reproducible.
    pub elapsed_ms: Option<f64>,
}

/// `all` followed by one variant per optimization switched off.
pub fn variants() -> Vec<(String, Toggles)> {
    let mut v = vec![("all".to_string(), Toggles::default())];
    v.extend(
        Toggle::ALL
            .iter()
            .map(|&t| (format!("no-{}", t.name()), Toggles::default().without(t))),
    );
    v
}

pub fn run_bench(instances: &[BenchInstance], cfg: &OptimizerConfig, timing: bool) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for inst in instances {
        for (variant, toggles) in variants() {
            let res = ablation_run(&inst.example, &inst.tree, &inst.database, cfg, toggles)?;
            rows.push(BenchRow {
                instance: inst.name.clone(),
                variant,
                loi: res.loi(),
                privacy: res.best.as_ref().map(|b| b.privacy),
                choices_examined: res.stats.choices_examined,
                privacy_calls: res.stats.privacy_calls_made,
                cache_hits: res.stats.cache_hits,
                skipped: res.stats.choices_skipped,
                complete: res.complete,
                elapsed_ms: timing.then(|| res.stats.elapsed.as_secs_f64() * 1e3),
            });
        }
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(std::io::Error::other)?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
