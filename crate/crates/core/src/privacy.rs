//! Privacy of an abstracted K-example: the number of distinct connected,
//! inclusion-minimal queries consistent with some concretization.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::abstraction::{enumerate_concretizations, row_concretizations, AbstractedKExample, AbstractionTree};
use crate::consistency::{is_consistent, ConsistencyCache, QueryId};
use crate::error::{Error, Result};
use crate::provenance::{AnnotatedTuple, ExampleRow, KDatabase};
use crate::query::{contains, equivalent, ConjunctiveQuery, EquivalenceKey};

/// Which queries minimality is judged against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CimDefinition {
    /// Minimal among the connected consistent queries.
    #[default]
    Algorithmic,
    /// Minimal among all consistent queries, connected or not.
    Strict,
}

impl fmt::Display for CimDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CimDefinition::Algorithmic => "algorithmic",
            CimDefinition::Strict => "strict",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrivacyConfig {
    /// Concretizations (or row-prefix extensions) one call may materialize.
    pub max_concretizations: u128,
    pub max_alignments: u128,
    pub row_by_row: bool,
    pub connectivity_filter: bool,
    pub cim_def: CimDefinition,
    /// Drop queries without variables.
    pub exclude_trivial: bool,
}

impl Default for PrivacyConfig {
    fn default() -> Self {
        PrivacyConfig {
            max_concretizations: 1_000_000,
            max_alignments: 10_000,
            row_by_row: true,
            connectivity_filter: true,
            cim_def: CimDefinition::Algorithmic,
            exclude_trivial: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PrivacyOutcome {
    Privacy {
        count: usize,
        cim: Vec<ConjunctiveQuery>,
    },
    /// Fewer than `k` queries survived at `row` (0-based). `queries` are the
    /// survivors of the stage that failed.
    BelowThreshold {
        row: usize,
        observed: usize,
        queries: Vec<ConjunctiveQuery>,
    },
}

impl PrivacyOutcome {
    pub fn privacy(&self) -> Option<usize> {
        match self {
            PrivacyOutcome::Privacy { count, .. } => Some(*count),
            PrivacyOutcome::BelowThreshold { .. } => None,
        }
    }

    pub fn queries(&self) -> &[ConjunctiveQuery] {
        match self {
            PrivacyOutcome::Privacy { cim, .. } => cim,
            PrivacyOutcome::BelowThreshold { queries, .. } => queries,
        }
    }
}

/// Members of `ids` strictly containing no member of `against`.
fn minimal_ids(cache: &mut ConsistencyCache, ids: &[QueryId], against: &[QueryId]) -> Vec<QueryId> {
    let store = cache.store_mut();
    ids.iter()
        .copied()
        .filter(|&q| {
            !against
                .iter()
                .any(|&other| other != q && store.contains(q, other) && !store.contains(other, q))
        })
        .collect()
}

/// One id per equivalence class, first seen first.
fn distinct_ids(cache: &ConsistencyCache, ids: &[QueryId]) -> Vec<QueryId> {
    let store = cache.store();
    let mut buckets: HashMap<EquivalenceKey, Vec<QueryId>> = HashMap::new();
    let mut out = Vec::new();
    for &id in ids {
        let q = store.get(id);
        let bucket = buckets.entry(q.equivalence_key()).or_default();
        if !bucket.iter().any(|&b| equivalent(store.get(b), q)) {
            bucket.push(id);
            out.push(id);
        }
    }
    out
}

/// The ⊆-minimal members of `qs` after removing equivalent duplicates.
pub fn get_minimal_queries(qs: &[ConjunctiveQuery]) -> Vec<ConjunctiveQuery> {
    let mut distinct: Vec<&ConjunctiveQuery> = Vec::new();
    for q in qs {
        if !distinct.iter().any(|d| equivalent(d, q)) {
            distinct.push(q);
        }
    }
    distinct
        .iter()
        .filter(|q| !distinct.iter().any(|o| !std::ptr::eq(**q, *o) && contains(q, o)))
        .map(|q| (*q).clone())
        .collect()
}

fn expand(prefixes: &[Vec<ExampleRow>], row: &[ExampleRow], cap: u128) -> Result<Vec<Vec<ExampleRow>>> {
    let count = (prefixes.len() as u128).saturating_mul(row.len() as u128);
    if count > cap {
        return Err(Error::CapExceeded {
            what: "concretizations",
            count,
            cap,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    for p in prefixes {
        for r in row {
            let mut next = Vec::with_capacity(p.len() + 1);
            next.extend_from_slice(p);
            next.push(r.clone());
            out.push(next);
        }
    }
    Ok(out)
}

/// Algorithm for privacy with threshold `k`: rows are added one at a time,
/// keeping only concretization prefixes that can still support a connected
/// query. Threshold checks happen once all rows are in, where the counts are
/// exact; earlier rows only prune.
pub fn compute_privacy(
    abs: &AbstractedKExample,
    tree: &AbstractionTree,
    db: &KDatabase,
    k: usize,
    cache: &mut ConsistencyCache,
    cfg: &PrivacyConfig,
) -> Result<PrivacyOutcome> {
    if k == 0 {
        return Err(Error::InvalidConfig("privacy threshold must be at least 1".into()));
    }
    let n = abs.len();
    if n == 0 {
        return Err(Error::InvalidExample("no rows".into()));
    }
    // The strict definition needs disconnected queries too, so it sees every
    // concretization.
    let strict = cfg.cim_def == CimDefinition::Strict;
    let filter = cfg.connectivity_filter && !strict;
    let by_row = cfg.row_by_row && !strict;

    let mut per_row: Vec<Vec<ExampleRow>> = Vec::with_capacity(n);
    for r in abs.rows() {
        let mut concs = Vec::new();
        for m in row_concretizations(r, tree, cfg.max_concretizations)? {
            if !filter || cache.row_connected(&m, db)? {
                concs.push(ExampleRow {
                    output: r.output.clone(),
                    provenance: m,
                });
            }
        }
        per_row.push(concs);
    }

    let mut candidates: Vec<Vec<ExampleRow>> = per_row[0].iter().map(|r| vec![r.clone()]).collect();
    if by_row {
        for (i, row) in per_row.iter().enumerate().skip(1) {
            if i + 1 == n {
                candidates = expand(&candidates, row, cfg.max_concretizations)?;
                break;
            }
            let extended = expand(&candidates, row, cfg.max_concretizations)?;
            let mut good = Vec::new();
            for c in extended {
                let ids = cache.consistent(&c, db, cfg.max_alignments)?;
                if ids.iter().any(|&id| cache.store().is_weakly_connected(id)) {
                    good.push(c);
                }
            }
            if good.is_empty() {
                return Ok(PrivacyOutcome::BelowThreshold {
                    row: i,
                    observed: 0,
                    queries: Vec::new(),
                });
            }
            candidates = good;
        }
    } else {
        for row in &per_row[1..] {
            candidates = expand(&candidates, row, cfg.max_concretizations)?;
        }
    }

    let mut consistent: Vec<QueryId> = Vec::new();
    let mut seen = BTreeSet::new();
    for c in &candidates {
        for &id in cache.consistent(c, db, cfg.max_alignments)?.iter() {
            if seen.insert(id) {
                consistent.push(id);
            }
        }
    }
    let connected: Vec<QueryId> = consistent
        .iter()
        .copied()
        .filter(|&id| {
            let s = cache.store();
            s.is_connected(id) && (!cfg.exclude_trivial || s.get(id).has_variables())
        })
        .collect();
    let to_queries = |cache: &ConsistencyCache, ids: &[QueryId]| -> Vec<ConjunctiveQuery> {
        ids.iter().map(|&id| cache.store().get(id).clone()).collect()
    };
    let distinct = distinct_ids(cache, &connected);
    if distinct.len() < k {
        return Ok(PrivacyOutcome::BelowThreshold {
            row: n - 1,
            observed: distinct.len(),
            queries: to_queries(cache, &distinct),
        });
    }
    let against = if strict { consistent.clone() } else { connected.clone() };
    let minimal = minimal_ids(cache, &connected, &against);
    let cim = distinct_ids(cache, &minimal);
    let queries = to_queries(cache, &cim);
    if cim.len() < k {
        return Ok(PrivacyOutcome::BelowThreshold {
            row: n - 1,
            observed: cim.len(),
            queries,
        });
    }
    Ok(PrivacyOutcome::Privacy {
        count: cim.len(),
        cim: queries,
    })
}

/// Privacy without a threshold: the full CIM set.
pub fn privacy_of(
    abs: &AbstractedKExample,
    tree: &AbstractionTree,
    db: &KDatabase,
    cache: &mut ConsistencyCache,
    cfg: &PrivacyConfig,
) -> Result<Vec<ConjunctiveQuery>> {
    match compute_privacy(abs, tree, db, 1, cache, cfg)? {
        PrivacyOutcome::Privacy { cim, .. } => Ok(cim),
        PrivacyOutcome::BelowThreshold { .. } => Ok(Vec::new()),
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Reference computation straight from the definitions: materialize every
/// concretization, try every bijection between the first row's occurrences
/// and each other row's, keep the generalizations that evaluation confirms
/// consistent, and take the connected minimal ones. No pruning, filtering or
/// caching.
pub fn privacy_oracle(
    abs: &AbstractedKExample,
    tree: &AbstractionTree,
    db: &KDatabase,
    cfg: &PrivacyConfig,
) -> Result<Vec<ConjunctiveQuery>> {
    let mut consistent: Vec<ConjunctiveQuery> = Vec::new();
    for c in enumerate_concretizations(abs, tree, None, cfg.max_concretizations)? {
        let rows = c.rows();
        let tuples: Vec<Vec<&AnnotatedTuple>> = rows
            .iter()
            .map(|r| {
                r.provenance
                    .expanded()
                    .into_iter()
                    .map(|a| db.resolve(a.as_str()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let d = tuples[0].len();
        if tuples.iter().any(|t| t.len() != d) {
            continue;
        }
        let perms = permutations(d);
        let total = (perms.len() as u128).saturating_pow(rows.len() as u32 - 1);
        if total > cfg.max_alignments {
            return Err(Error::AlignmentExplosion {
                count: total,
                cap: cfg.max_alignments,
            });
        }
        for code in 0..total {
            // Digit r of `code` in base d! picks the bijection for row r + 1.
            let mut rest = code;
            let mut aligned = vec![tuples[0].clone()];
            for row in &tuples[1..] {
                let p = &perms[(rest % perms.len() as u128) as usize];
                rest /= perms.len() as u128;
                aligned.push(p.iter().map(|&i| row[i]).collect());
            }
            let relations_match = aligned
                .iter()
                .all(|row| row.iter().zip(&aligned[0]).all(|(a, b)| a.relation == b.relation));
            if !relations_match {
                continue;
            }
            if let Some(q) = oracle_generalize(&aligned, rows) {
                if !consistent.contains(&q) && is_consistent(&q, rows, db)? {
                    consistent.push(q);
                }
            }
        }
    }
    let keep = |q: &ConjunctiveQuery| q.join_graph().is_connected() && (!cfg.exclude_trivial || q.has_variables());
    let connected: Vec<&ConjunctiveQuery> = consistent.iter().filter(|q| keep(q)).collect();
    let against: Vec<&ConjunctiveQuery> = match cfg.cim_def {
        CimDefinition::Algorithmic => connected.clone(),
        CimDefinition::Strict => consistent.iter().collect(),
    };
    let mut cim: Vec<ConjunctiveQuery> = Vec::new();
    for q in connected {
        let minimal = !against.iter().any(|o| contains(q, o) && !contains(o, q));
        if minimal && !cim.iter().any(|x| equivalent(x, q)) {
            cim.push(q.clone());
        }
    }
    Ok(cim)
}

// Straightforward generalization of aligned tuples, written independently of
// the engine's anti-unification.
fn oracle_generalize(aligned: &[Vec<&AnnotatedTuple>], rows: &[ExampleRow]) -> Option<ConjunctiveQuery> {
    use crate::query::{Atom, Term};
    let mut classes: Vec<Vec<String>> = Vec::new();
    let mut term_for = |vector: Vec<String>| -> Term {
        if vector.windows(2).all(|w| w[0] == w[1]) {
            return Term::constant(vector[0].clone());
        }
        let i = match classes.iter().position(|c| *c == vector) {
            Some(i) => i,
            None => {
                classes.push(vector);
                classes.len() - 1
            }
        };
        Term::var(format!("x{i}"))
    };
    let body: Vec<Atom> = (0..aligned[0].len())
        .map(|s| {
            let terms = (0..aligned[0][s].values.len())
                .map(|j| term_for(aligned.iter().map(|row| row[s].values[j].clone()).collect()))
                .collect();
            Atom::new(aligned[0][s].relation.clone(), terms)
        })
        .collect();
    let mut head = Vec::new();
    for o in 0..rows[0].output.len() {
        let vector: Vec<String> = rows.iter().map(|r| r.output[o].clone()).collect();
        if vector.windows(2).all(|w| w[0] == w[1]) {
            head.push(Term::constant(vector[0].clone()));
        } else {
            let i = classes.iter().position(|c| *c == vector)?;
            head.push(Term::var(format!("x{i}")));
        }
    }
    ConjunctiveQuery::new(head, body).ok()
}

/// True iff the two lists hold the same queries up to equivalence.
pub fn same_query_set(a: &[ConjunctiveQuery], b: &[ConjunctiveQuery]) -> bool {
    a.iter().all(|x| b.iter().any(|y| equivalent(x, y))) && b.iter().all(|y| a.iter().any(|x| equivalent(x, y)))
}
