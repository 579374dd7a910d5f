//! Machine-readable run reports and their text rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::formats::{database_to_string, example_to_file, example_to_string, tree_to_string, ExampleFile};
use crate::abstraction::{AbstractedKExample, AbstractionTree, LossModel};
use crate::optimizer::{Mode, OptimizerConfig, SearchResult, SearchStats, Toggle};
use crate::privacy::{CimDefinition, PrivacyOutcome};
use crate::provenance::{KDatabase, KExample};
use crate::query::ConjunctiveQuery;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    NoSolution,
    BelowThreshold,
    Incomplete,
}

impl Status {
    /// Process exit code for this status.
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::NoSolution | Status::BelowThreshold => 1,
            Status::Incomplete => 3,
        }
    }
}

/// Short SHA-256 digests of the canonical serialization of each input.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigests {
    pub database: Option<String>,
    pub tree: Option<String>,
    pub example: Option<String>,
}

pub fn digest(text: &str) -> String {
    let hash = Sha256::digest(text.as_bytes());
    hash.iter().take(8).fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl InputDigests {
    pub fn of(db: Option<&KDatabase>, tree: Option<&AbstractionTree>, ex: Option<&KExample>) -> Self {
        InputDigests {
            database: db.map(|d| digest(&database_to_string(d))),
            tree: tree.map(|t| digest(&tree_to_string(t))),
            example: ex.map(|e| digest(&example_to_string(e))),
        }
    }
}

/// One abstracted occurrence: `row.position.repetition`, the annotation it
/// held, and the node replacing it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub occurrence: String,
    pub annotation: String,
    pub node: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConfigEcho {
    pub mode: String,
    pub threshold: Option<usize>,
    pub loi_max: Option<f64>,
    pub distribution: String,
    pub max_abstractions: u128,
    pub max_concretizations: u128,
    pub max_alignments: u128,
    pub disabled: Vec<String>,
    pub cim_def: CimDefinition,
    pub exclude_trivial: bool,
    pub seed: u64,
}

impl ConfigEcho {
    pub fn of(cfg: &OptimizerConfig) -> Self {
        let (mode, threshold, loi_max) = match cfg.mode {
            Mode::Primal { k } => ("primal", Some(k), None),
            Mode::Dual { loi_max } => ("dual", None, Some(loi_max)),
        };
        ConfigEcho {
            mode: mode.to_string(),
            threshold,
            loi_max,
            distribution: match &cfg.loss {
                LossModel::Uniform => "uniform".to_string(),
                LossModel::LeafWeighted => "weighted".to_string(),
                LossModel::Explicit(ps) => format!("explicit({} probabilities)", ps.len()),
            },
            max_abstractions: cfg.max_abstractions,
            max_concretizations: cfg.max_concretizations,
            max_alignments: cfg.max_alignments,
            disabled: Toggle::ALL
                .into_iter()
                .filter(|&t| cfg.toggles.without(t) == cfg.toggles)
                .map(|t| t.name().to_string())
                .collect(),
            cim_def: cfg.cim_def,
            exclude_trivial: cfg.exclude_trivial,
            seed: cfg.seed,
        }
    }
}

/// Row and count at which a privacy check fell short.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub row: usize,
    pub observed: usize,
}

/// Field order is fixed by declaration order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Report {
    pub command: String,
    pub status: Status,
    pub inputs: InputDigests,
    pub abstraction: Vec<Assignment>,
    pub abstracted_example: Option<ExampleFile>,
    pub loi: Option<f64>,
    pub privacy: Option<usize>,
    pub shortfall: Option<Shortfall>,
    /// Datalog text, one query per entry.
    pub cim: Vec<String>,
    pub stats: Option<SearchStats>,
    pub config: ConfigEcho,
    pub incomplete: bool,
    pub note: Option<String>,
}

fn cim_text(qs: &[ConjunctiveQuery]) -> Vec<String> {
    qs.iter().map(ToString::to_string).collect()
}

fn assignments(abs: &AbstractedKExample, original: &KExample) -> Vec<Assignment> {
    let Some(choice) = abs.choice() else {
        return Vec::new();
    };
    choice
        .iter()
        .map(|(k, node)| {
            let annotation = original.rows()[k.row]
                .provenance
                .occurrences()
                .find(|&(pos, rep, _)| pos == k.position && rep == k.repetition)
                .map(|(_, _, a)| a.to_string())
                .unwrap_or_default();
            Assignment {
                occurrence: k.to_string(),
                annotation,
                node: node.to_string(),
            }
        })
        .collect()
}

impl Report {
    fn empty(command: &str, inputs: InputDigests, cfg: &OptimizerConfig) -> Self {
        Report {
            command: command.to_string(),
            status: Status::Ok,
            inputs,
            abstraction: Vec::new(),
            abstracted_example: None,
            loi: None,
            privacy: None,
            shortfall: None,
            cim: Vec::new(),
            stats: None,
            config: ConfigEcho::of(cfg),
            incomplete: false,
            note: None,
        }
    }

    /// Report of an optimizer or brute-force run.
    pub fn from_search(
        command: &str,
        inputs: InputDigests,
        ex: &KExample,
        cfg: &OptimizerConfig,
        res: &SearchResult,
    ) -> Self {
        let mut r = Report::empty(command, inputs, cfg);
        r.stats = Some(res.stats.clone());
        r.incomplete = !res.complete;
        r.note = res.cap_note.clone();
        match &res.best {
            Some(s) => {
                r.abstraction = assignments(&s.abstracted, ex);
                r.abstracted_example = Some(example_to_file(s.abstracted.example()));
                r.loi = Some(s.loi);
                r.privacy = Some(s.privacy);
                r.cim = cim_text(&s.cim);
                r.status = if res.complete { Status::Ok } else { Status::Incomplete };
            }
            None => {
                r.status = if res.complete { Status::NoSolution } else { Status::Incomplete };
            }
        }
        r
    }

    /// Report of a privacy computation on a given abstracted example.
    pub fn from_privacy(
        inputs: InputDigests,
        abs: &AbstractedKExample,
        loi: Option<f64>,
        cfg: &OptimizerConfig,
        outcome: &PrivacyOutcome,
    ) -> Self {
        let mut r = Report::empty("privacy", inputs, cfg);
        r.abstracted_example = Some(example_to_file(abs.example()));
        r.loi = loi;
        r.cim = cim_text(outcome.queries());
        match outcome {
            PrivacyOutcome::Privacy { count, .. } => r.privacy = Some(*count),
            PrivacyOutcome::BelowThreshold { row, observed, .. } => {
                r.status = Status::BelowThreshold;
                r.shortfall = Some(Shortfall {
                    row: *row,
                    observed: *observed,
                });
            }
        }
        r
    }

    /// Report of a loss computation.
    pub fn from_loss(inputs: InputDigests, abs: &AbstractedKExample, loi: f64, cfg: &OptimizerConfig) -> Self {
        let mut r = Report::empty("loi", inputs, cfg);
        r.abstracted_example = Some(example_to_file(abs.example()));
        r.loi = Some(loi);
        r
    }

    /// Report for a run cut short by a cap before any result.
    pub fn capped(command: &str, inputs: InputDigests, cfg: &OptimizerConfig, note: String) -> Self {
        let mut r = Report::empty(command, inputs, cfg);
        r.status = Status::Incomplete;
        r.incomplete = true;
        r.note = Some(note);
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let status = serde_json::to_value(self.status).expect("status serializes");
        let _ = writeln!(s, "{}: {}", self.command, status.as_str().unwrap_or_default());
        if !self.abstraction.is_empty() {
            let _ = writeln!(s, "abstraction:");
            for a in &self.abstraction {
                let _ = writeln!(s, "  {} {} -> {}", a.occurrence, a.annotation, a.node);
            }
        }
        if let Some(loi) = self.loi {
            let _ = writeln!(s, "loi: {loi:.6}");
        }
        if let Some(p) = self.privacy {
            let _ = writeln!(s, "privacy: {p}");
        }
        if let Some(sf) = self.shortfall {
            let _ = writeln!(s, "below threshold: {} queries after row {}", sf.observed, sf.row);
        }
        if !self.cim.is_empty() {
            let _ = writeln!(s, "queries:");
            for q in &self.cim {
                let _ = writeln!(s, "  {q}");
            }
        }
        if let Some(st) = &self.stats {
            let _ = writeln!(
                s,
                "examined {} of {} choices, {} privacy calls, {} cache hits, {} skipped, {:.3}s",
                st.choices_examined,
                st.search_space,
                st.privacy_calls_made,
                st.cache_hits,
                st.choices_skipped,
                st.elapsed.as_secs_f64()
            );
        }
        if self.incomplete {
            let _ = writeln!(s, "incomplete: {}", self.note.as_deref().unwrap_or("cap reached"));
        }
        s
    }
}
