//! Search for the least lossy abstraction with privacy at least `k`, its dual,
//! and a brute-force reference.

use std::time::Duration;

// std's clock panics in the browser.
#[cfg(not(target_arch = "wasm32"))]
use std::time::Instant;
#[cfg(target_arch = "wasm32")]
use web_time::Instant;

use serde::{Deserialize, Serialize};

use crate::abstraction::{
    apply_abstraction, check_compatible, AbstractedKExample, AbstractionChoice, AbstractionTree, ChoiceSpace,
    LossModel, RankedChoice,
};
use crate::consistency::ConsistencyCache;
use crate::error::{Error, Result};
use crate::privacy::{compute_privacy, privacy_oracle, CimDefinition, PrivacyConfig, PrivacyOutcome};
use crate::provenance::{KDatabase, KExample};
use crate::query::ConjunctiveQuery;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Mode {
    /// Minimize loss subject to privacy ≥ k.
    Primal { k: usize },
    /// Maximize privacy subject to loss ≤ `loi_max`.
    Dual { loi_max: f64 },
}

/// The five optimizations that can be switched off one by one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Toggles {
    pub sort_choices: bool,
    pub loi_first: bool,
    pub row_by_row: bool,
    pub connectivity_filter: bool,
    pub caching: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Toggles {
            sort_choices: true,
            loi_first: true,
            row_by_row: true,
            connectivity_filter: true,
            caching: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Toggle {
    Sorting,
    LoiFirst,
    RowByRow,
    Connectivity,
    Caching,
}

impl Toggle {
    pub const ALL: [Toggle; 5] = [
        Toggle::Sorting,
        Toggle::LoiFirst,
        Toggle::RowByRow,
        Toggle::Connectivity,
        Toggle::Caching,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Toggle::Sorting => "sorting",
            Toggle::LoiFirst => "loi-first",
            Toggle::RowByRow => "row-by-row",
            Toggle::Connectivity => "connectivity",
            Toggle::Caching => "caching",
        }
    }
}

impl Toggles {
    pub fn without(mut self, t: Toggle) -> Self {
        match t {
            Toggle::Sorting => self.sort_choices = false,
            Toggle::LoiFirst => self.loi_first = false,
            Toggle::RowByRow => self.row_by_row = false,
            Toggle::Connectivity => self.connectivity_filter = false,
            Toggle::Caching => self.caching = false,
        }
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub mode: Mode,
    pub loss: LossModel,
    pub max_abstractions: u128,
    pub max_concretizations: u128,
    pub max_alignments: u128,
    pub toggles: Toggles,
    /// Unused by the search itself, which is deterministic; echoed in reports.
    pub seed: u64,
    pub cim_def: CimDefinition,
    pub exclude_trivial: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            mode: Mode::Primal { k: 2 },
            loss: LossModel::Uniform,
            max_abstractions: 1_000_000,
            max_concretizations: 1_000_000,
            max_alignments: 10_000,
            toggles: Toggles::default(),
            seed: 0,
            cim_def: CimDefinition::Algorithmic,
            exclude_trivial: false,
        }
    }
}

impl OptimizerConfig {
    pub fn primal(k: usize) -> Self {
        OptimizerConfig {
            mode: Mode::Primal { k },
            ..Self::default()
        }
    }

    pub fn dual(loi_max: f64) -> Self {
        OptimizerConfig {
            mode: Mode::Dual { loi_max },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            Mode::Primal { k } if k == 0 => {
                return Err(Error::InvalidConfig("threshold must be at least 1".into()));
            }
            Mode::Dual { loi_max } if !(loi_max >= 0.0) => {
                return Err(Error::InvalidConfig(format!("loss budget {loi_max} must be non-negative")));
            }
            _ => {}
        }
        if self.max_abstractions == 0 || self.max_concretizations == 0 || self.max_alignments == 0 {
            return Err(Error::InvalidConfig("caps must be positive".into()));
        }
        self.loss.validate()
    }

    pub fn privacy_config(&self) -> PrivacyConfig {
        PrivacyConfig {
            max_concretizations: self.max_concretizations,
            max_alignments: self.max_alignments,
            row_by_row: self.toggles.row_by_row,
            connectivity_filter: self.toggles.connectivity_filter,
            cim_def: self.cim_def,
            exclude_trivial: self.exclude_trivial,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SearchStats {
    pub choices_examined: u64,
    pub privacy_calls_made: u64,
    pub cache_hits: u64,
    /// Choices whose privacy could not be decided within the caps.
    pub choices_skipped: u64,
    pub search_space: u128,
    pub abstractable_occurrences: usize,
    #[serde(with = "duration_secs")]
    pub elapsed: Duration,
}

mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs_f64(f64::deserialize(d)?))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub choice: AbstractionChoice,
    pub abstracted: AbstractedKExample,
    pub loi: f64,
    pub privacy: usize,
    pub cim: Vec<ConjunctiveQuery>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub best: Option<Solution>,
    pub stats: SearchStats,
    /// False when caps cut the search short; `best` is then the best found.
    pub complete: bool,
    /// The first cap error met, if any.
    pub cap_note: Option<String>,
}

impl SearchResult {
    pub fn loi(&self) -> Option<f64> {
        self.best.as_ref().map(|s| s.loi)
    }
}

struct Search<'a> {
    ex: &'a KExample,
    tree: &'a AbstractionTree,
    db: &'a KDatabase,
    cfg: &'a OptimizerConfig,
    pcfg: PrivacyConfig,
    cache: ConsistencyCache,
    stats: SearchStats,
    complete: bool,
    cap_note: Option<String>,
    started: Instant,
}

impl<'a> Search<'a> {
    fn new(
        ex: &'a KExample,
        tree: &'a AbstractionTree,
        db: &'a KDatabase,
        cfg: &'a OptimizerConfig,
    ) -> Result<(Self, ChoiceSpace)> {
        cfg.validate()?;
        check_compatible(tree, db)?;
        ex.check_resolves(db)?;
        let space = ChoiceSpace::new(ex, tree, &cfg.loss)?;
        let stats = SearchStats {
            search_space: space.total(),
            abstractable_occurrences: space.dimensions(),
            ..SearchStats::default()
        };
        let search = Search {
            ex,
            tree,
            db,
            cfg,
            pcfg: cfg.privacy_config(),
            cache: if cfg.toggles.caching {
                ConsistencyCache::new()
            } else {
                ConsistencyCache::disabled()
            },
            stats,
            complete: true,
            cap_note: None,
            started: Instant::now(),
        };
        Ok((search, space))
    }

    /// Privacy of one choice against threshold `k`; `None` when a cap was hit.
    fn privacy(
        &mut self,
        space: &ChoiceSpace,
        levels: &[usize],
        k: usize,
    ) -> Result<Option<(AbstractedKExample, PrivacyOutcome)>> {
        let abs = apply_abstraction(&space.choice(levels), self.ex, self.tree)?;
        self.stats.privacy_calls_made += 1;
        let result = if self.cfg.toggles.caching {
            compute_privacy(&abs, self.tree, self.db, k, &mut self.cache, &self.pcfg)
        } else {
            let mut fresh = ConsistencyCache::disabled();
            compute_privacy(&abs, self.tree, self.db, k, &mut fresh, &self.pcfg)
        };
        match result {
            Ok(out) => Ok(Some((abs, out))),
            Err(e) if e.is_cap() => {
                self.stats.choices_skipped += 1;
                self.mark_incomplete(&e);
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    fn mark_incomplete(&mut self, e: &Error) {
        self.complete = false;
        if self.cap_note.is_none() {
            self.cap_note = Some(e.to_string());
        }
    }

    /// Counts one more examined choice, or reports that the cap is reached.
    fn examine(&mut self) -> bool {
        if self.stats.choices_examined as u128 >= self.cfg.max_abstractions {
            let e = Error::CapExceeded {
                what: "abstractions",
                count: self.stats.search_space,
                cap: self.cfg.max_abstractions,
            };
            self.mark_incomplete(&e);
            return false;
        }
        self.stats.choices_examined += 1;
        true
    }

    fn finish(mut self, best: Option<Solution>) -> SearchResult {
        self.stats.cache_hits = self.cache.hits();
        self.stats.elapsed = self.started.elapsed();
        SearchResult {
            best,
            stats: self.stats,
            complete: self.complete,
            cap_note: self.cap_note,
        }
    }
}

/// Candidate choices in scan order: sorted best-first, or plain odometer
/// order with keys computed on the fly.
fn scan_order(space: &ChoiceSpace, sorted: bool) -> Box<dyn Iterator<Item = RankedChoice> + '_> {
    if sorted {
        Box::new(space.sorted())
    } else {
        Box::new(space.odometer().map(|l| space.rank(l)))
    }
}

fn solution(space: &ChoiceSpace, r: &RankedChoice, abs: AbstractedKExample, out: PrivacyOutcome) -> Solution {
    let cim = out.queries().to_vec();
    Solution {
        choice: space.choice(&r.levels),
        abstracted: abs,
        loi: r.loi,
        privacy: cim.len(),
        cim,
    }
}

/// Scans choices by edges used and loss, computing privacy only for choices
/// that would improve on the best loss so far. Among equal-loss qualifying
/// choices the first one scanned wins.
pub fn find_optimal_abstraction(
    ex: &KExample,
    tree: &AbstractionTree,
    db: &KDatabase,
    cfg: &OptimizerConfig,
) -> Result<SearchResult> {
    let Mode::Primal { k } = cfg.mode else {
        return Err(Error::InvalidConfig("the optimizer needs a privacy threshold".into()));
    };
    let (mut s, space) = Search::new(ex, tree, db, cfg)?;
    let t = cfg.toggles;
    // With a monotone loss, every choice has a parent one edge lower with no
    // more loss, so once the cheapest choice of an edge level cannot beat the
    // best, nothing later can.
    let stop_early = t.loi_first && t.sort_choices && cfg.loss.is_monotone();
    let mut best: Option<Solution> = None;
    let mut level = None;
    for r in scan_order(&space, t.sort_choices) {
        if !s.examine() {
            break;
        }
        let level_start = level != Some(r.edges);
        level = Some(r.edges);
        if let Some(b) = &best {
            if stop_early && level_start && r.loi >= b.loi {
                break;
            }
            if t.loi_first && r.loi >= b.loi {
                continue;
            }
        }
        if let Some((abs, out @ PrivacyOutcome::Privacy { .. })) = s.privacy(&space, &r.levels, k)? {
            if best.as_ref().is_none_or(|b| r.loi < b.loi) {
                best = Some(solution(&space, &r, abs, out));
            }
        }
    }
    Ok(s.finish(best))
}

/// Among choices with loss at most the budget, the one with the largest
/// privacy; ties go to smaller loss, then to the first scanned. Choices with
/// privacy zero never qualify.
pub fn find_max_privacy(
    ex: &KExample,
    tree: &AbstractionTree,
    db: &KDatabase,
    cfg: &OptimizerConfig,
) -> Result<SearchResult> {
    let Mode::Dual { loi_max } = cfg.mode else {
        return Err(Error::InvalidConfig("the dual search needs a loss budget".into()));
    };
    let (mut s, space) = Search::new(ex, tree, db, cfg)?;
    let t = cfg.toggles;
    let stop_early = t.sort_choices && cfg.loss.is_monotone();
    let mut best: Option<Solution> = None;
    let mut level = None;
    for r in scan_order(&space, t.sort_choices) {
        if !s.examine() {
            break;
        }
        let level_start = level != Some(r.edges);
        level = Some(r.edges);
        if r.loi > loi_max {
            if stop_early && level_start {
                break;
            }
            continue;
        }
        // Asking only for what would beat the incumbent lets the privacy
        // computation give up early.
        let k = match (&best, t.loi_first) {
            (Some(b), true) if r.loi < b.loi => b.privacy,
            (Some(b), true) => b.privacy + 1,
            _ => 1,
        };
        if let Some((abs, out @ PrivacyOutcome::Privacy { .. })) = s.privacy(&space, &r.levels, k)? {
            let p = out.queries().len();
            let better = match &best {
                None => true,
                Some(b) => p > b.privacy || (p == b.privacy && r.loi < b.loi),
            };
            if better {
                best = Some(solution(&space, &r, abs, out));
            }
        }
    }
    Ok(s.finish(best))
}

/// Reference optimum: every choice, full privacy from the definitions, no
/// pruning of any kind. Cap errors are returned rather than skipped.
pub fn brute_force_optimal(
    ex: &KExample,
    tree: &AbstractionTree,
    db: &KDatabase,
    cfg: &OptimizerConfig,
) -> Result<SearchResult> {
    cfg.validate()?;
    check_compatible(tree, db)?;
    ex.check_resolves(db)?;
    let started = Instant::now();
    let space = ChoiceSpace::new(ex, tree, &cfg.loss)?;
    if space.total() > cfg.max_abstractions {
        return Err(Error::CapExceeded {
            what: "abstractions",
            count: space.total(),
            cap: cfg.max_abstractions,
        });
    }
    let pcfg = cfg.privacy_config();
    let mut stats = SearchStats {
        search_space: space.total(),
        abstractable_occurrences: space.dimensions(),
        ..SearchStats::default()
    };
    let mut best: Option<(RankedChoice, AbstractedKExample, Vec<ConjunctiveQuery>)> = None;
    for levels in space.odometer() {
        let r = space.rank(levels);
        stats.choices_examined += 1;
        stats.privacy_calls_made += 1;
        let abs = apply_abstraction(&space.choice(&r.levels), ex, tree)?;
        let cim = privacy_oracle(&abs, tree, db, &pcfg)?;
        let qualifies = match cfg.mode {
            Mode::Primal { k } => cim.len() >= k,
            Mode::Dual { loi_max } => r.loi <= loi_max && !cim.is_empty(),
        };
        if !qualifies {
            continue;
        }
        let better = match &best {
            None => true,
            Some((b, _, bcim)) => {
                let tie = (r.loi.total_cmp(&b.loi), r.edges.cmp(&b.edges), r.levels.cmp(&b.levels));
                let by_loss = tie.0.then(tie.1).then(tie.2).is_lt();
                match cfg.mode {
                    Mode::Primal { .. } => by_loss,
                    Mode::Dual { .. } => cim.len() > bcim.len() || (cim.len() == bcim.len() && by_loss),
                }
            }
        };
        if better {
            best = Some((r, abs, cim));
        }
    }
    stats.elapsed = started.elapsed();
    Ok(SearchResult {
        best: best.map(|(r, abs, cim)| Solution {
            choice: space.choice(&r.levels),
            abstracted: abs,
            loi: r.loi,
            privacy: cim.len(),
            cim,
        }),
        stats,
        complete: true,
        cap_note: None,
    })
}

/// Runs the search for `cfg.mode` with the given toggles.
pub fn ablation_run(
    ex: &KExample,
    tree: &AbstractionTree,
    db: &KDatabase,
    cfg: &OptimizerConfig,
    toggles: Toggles,
) -> Result<SearchResult> {
    let cfg = OptimizerConfig {
        toggles,
        ..cfg.clone()
    };
    run(ex, tree, db, &cfg)
}

/// Dispatches on the configured mode.
pub fn run(ex: &KExample, tree: &AbstractionTree, db: &KDatabase, cfg: &OptimizerConfig) -> Result<SearchResult> {
    match cfg.mode {
        Mode::Primal { .. } => find_optimal_abstraction(ex, tree, db, cfg),
        Mode::Dual { .. } => find_max_privacy(ex, tree, db, cfg),
    }
}
