//! Consistent queries of a concretization.
//!
//! A query consistent with a concrete K-example maps its atoms, row by row,
//! onto the tuple occurrences of that row's monomial. Fixing the first row's
//! occurrences as atom slots, every such query is a generalization of the
//! anti-unification of one relation-respecting alignment of the other rows
//! onto those slots. Only these most specific candidates are produced.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use crate::abstraction::Concretization;
use crate::error::{Error, Result};
use crate::provenance::{AnnotatedTuple, ExampleRow, KDatabase, Monomial};
use crate::query::{contains, evaluate, Atom, ConjunctiveQuery, Term, UnionFind};

pub type QueryId = usize;

struct StoredQuery {
    query: ConjunctiveQuery,
    connected: bool,
    // Connected once atoms sharing a constant are also linked. A query over
    // a row prefix can only grow into a connected one if this holds.
    weakly_connected: bool,
}

/// Queries interned by their exact canonical form, with memoized
/// containment. Equivalent queries may get different ids: consistency and
/// connectivity both depend on the atoms themselves, not just on the
/// equivalence class.
#[derive(Default)]
pub struct QueryStore {
    queries: Vec<StoredQuery>,
    exact: HashMap<ConjunctiveQuery, QueryId>,
    containment: HashMap<(QueryId, QueryId), bool>,
}

impl QueryStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Id of `q`, adding it if new.
    pub fn intern(&mut self, q: ConjunctiveQuery) -> QueryId {
        if let Some(&id) = self.exact.get(&q) {
            return id;
        }
        let id = self.queries.len();
        self.exact.insert(q.clone(), id);
        self.queries.push(StoredQuery {
            connected: q.is_connected(),
            weakly_connected: is_weakly_connected(&q),
            query: q,
        });
        id
    }

    pub fn get(&self, id: QueryId) -> &ConjunctiveQuery {
        &self.queries[id].query
    }

    pub fn is_connected(&self, id: QueryId) -> bool {
        self.queries[id].connected
    }

    pub fn is_weakly_connected(&self, id: QueryId) -> bool {
        self.queries[id].weakly_connected
    }

    /// `contains(get(outer), get(inner))`, memoized.
    pub fn contains(&mut self, outer: QueryId, inner: QueryId) -> bool {
        if outer == inner {
            return true;
        }
        if let Some(&v) = self.containment.get(&(outer, inner)) {
            return v;
        }
        let v = contains(&self.queries[outer].query, &self.queries[inner].query);
        self.containment.insert((outer, inner), v);
        v
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

fn is_weakly_connected(q: &ConjunctiveQuery) -> bool {
    let n = q.body.len();
    if n <= 1 {
        return true;
    }
    let mut uf = UnionFind::new(n);
    let mut first: HashMap<&Term, usize> = HashMap::new();
    for (i, atom) in q.body.iter().enumerate() {
        for t in &atom.terms {
            match first.get(t) {
                Some(&j) => uf.union(i, j),
                None => {
                    first.insert(t, i);
                }
            }
        }
    }
    uf.components() == 1
}

/// Memo of consistent-query sets per concretization prefix and of row
/// connectivity per monomial.
pub struct ConsistencyCache {
    enabled: bool,
    store: QueryStore,
    queries: HashMap<Vec<ExampleRow>, Arc<[QueryId]>>,
    connectivity: HashMap<Monomial, bool>,
    hits: u64,
}

impl Default for ConsistencyCache {
    fn default() -> Self {
        Self::new()
    }
}

impl ConsistencyCache {
    pub fn new() -> Self {
        ConsistencyCache {
            enabled: true,
            store: QueryStore::new(),
            queries: HashMap::new(),
            connectivity: HashMap::new(),
            hits: 0,
        }
    }

    /// A cache that never remembers results; queries are still interned.
    pub fn disabled() -> Self {
        ConsistencyCache {
            enabled: false,
            ..Self::new()
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn store(&self) -> &QueryStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut QueryStore {
        &mut self.store
    }

    /// Ids of the consistent queries of the concrete rows `rows`.
    pub fn consistent(&mut self, rows: &[ExampleRow], db: &KDatabase, max_alignments: u128) -> Result<Arc<[QueryId]>> {
        if self.enabled {
            if let Some(ids) = self.queries.get(rows) {
                self.hits += 1;
                return Ok(ids.clone());
            }
        }
        let mut ids: Vec<QueryId> = Vec::new();
        for q in lgg_candidates(rows, db, max_alignments)? {
            let id = self.store.intern(q);
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
        let ids: Arc<[QueryId]> = ids.into();
        if self.enabled {
            self.queries.insert(rows.to_vec(), ids.clone());
        }
        Ok(ids)
    }

    /// Row connectivity, memoized per monomial.
    pub fn row_connected(&mut self, m: &Monomial, db: &KDatabase) -> Result<bool> {
        if self.enabled {
            if let Some(&v) = self.connectivity.get(m) {
                self.hits += 1;
                return Ok(v);
            }
        }
        let v = row_is_connected(m, db)?;
        if self.enabled {
            self.connectivity.insert(m.clone(), v);
        }
        Ok(v)
    }
}

/// True iff the distinct tuples of `m` form a connected graph, with an edge
/// between two tuples that share any value.
pub fn row_is_connected(m: &Monomial, db: &KDatabase) -> Result<bool> {
    let tuples: Vec<&AnnotatedTuple> = m
        .factors()
        .keys()
        .map(|a| db.resolve(a.as_str()))
        .collect::<Result<_>>()?;
    if tuples.len() <= 1 {
        return Ok(true);
    }
    let mut uf = UnionFind::new(tuples.len());
    let mut first: HashMap<&str, usize> = HashMap::new();
    for (i, t) in tuples.iter().enumerate() {
        for v in &t.values {
            match first.get(v.as_str()) {
                Some(&j) => uf.union(i, j),
                None => {
                    first.insert(v, i);
                }
            }
        }
    }
    Ok(uf.components() == 1)
}

/// True iff every row of `c` is connected. The answer is remembered on `c`.
pub fn concretization_is_connected(c: &Concretization, db: &KDatabase) -> Result<bool> {
    if let Some(&v) = c.connectivity_cell().get() {
        return Ok(v);
    }
    let mut v = true;
    for r in c.rows() {
        if !row_is_connected(&r.provenance, db)? {
            v = false;
            break;
        }
    }
    let _ = c.connectivity_cell().set(v);
    Ok(v)
}

/// Most specific query matching aligned rows. `rows[r][s]` holds the values
/// of the tuple row `r` places in slot `s`, and `relations[s]` names the
/// slot's relation. Values agreeing across all rows stay constants;
/// positions with identical value vectors share a variable. Returns `None`
/// when an output column is neither constant nor covered by a body position.
pub fn anti_unify(relations: &[&str], rows: &[Vec<&[String]>], outputs: &[&[String]]) -> Option<ConjunctiveQuery> {
    let first = rows.first()?;
    let mut vars: HashMap<Vec<&str>, String> = HashMap::new();
    let mut body = Vec::with_capacity(relations.len());
    for (s, rel) in relations.iter().enumerate() {
        let terms = (0..first[s].len())
            .map(|j| {
                let vector: Vec<&str> = rows.iter().map(|r| r[s][j].as_str()).collect();
                if vector.iter().all(|v| *v == vector[0]) {
                    Term::constant(vector[0])
                } else {
                    let next = vars.len();
                    Term::var(vars.entry(vector).or_insert_with(|| format!("v{next}")).clone())
                }
            })
            .collect();
        body.push(Atom::new(*rel, terms));
    }
    let arity = outputs.first().map_or(0, |o| o.len());
    let mut head = Vec::with_capacity(arity);
    for o in 0..arity {
        let vector: Vec<&str> = outputs.iter().map(|out| out[o].as_str()).collect();
        if vector.iter().all(|v| *v == vector[0]) {
            head.push(Term::constant(vector[0]));
        } else {
            head.push(Term::var(vars.get(&vector)?.clone()));
        }
    }
    let q = ConjunctiveQuery::new(head, body).expect("head variables come from the body");
    Some(q.with_canonical_names())
}

fn next_permutation<T: Ord>(v: &mut [T]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        v.reverse();
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

fn distinct_permutations(n: usize, counts: impl Iterator<Item = usize>) -> u128 {
    let mut total: u128 = 1;
    let mut placed: u128 = 0;
    for c in counts {
        for i in 1..=c as u128 {
            placed += 1;
            total = total.saturating_mul(placed) / i;
        }
    }
    debug_assert_eq!(placed, n as u128);
    total
}

/// Anti-unifications of every relation-respecting alignment of `rows` onto
/// the first row's occurrences, without repeats. Rows whose
/// relation skeletons differ have none.
pub fn lgg_candidates(rows: &[ExampleRow], db: &KDatabase, max_alignments: u128) -> Result<Vec<ConjunctiveQuery>> {
    let Some(first) = rows.first() else {
        return Ok(Vec::new());
    };
    let expand = |r: &ExampleRow| -> Result<Vec<&AnnotatedTuple>> {
        r.provenance
            .expanded()
            .into_iter()
            .map(|a| db.resolve(a.as_str()))
            .collect()
    };
    let slots = expand(first)?;
    let relations: Vec<&str> = slots.iter().map(|t| t.relation.as_str()).collect();
    let mut by_relation: Vec<(&str, Vec<usize>)> = Vec::new();
    for (s, rel) in relations.iter().enumerate() {
        match by_relation.iter_mut().find(|(r, _)| r == rel) {
            Some((_, v)) => v.push(s),
            None => by_relation.push((rel, vec![s])),
        }
    }

    // Per other row and relation: sorted tuple indices to permute.
    let mut others: Vec<(Vec<&AnnotatedTuple>, Vec<Vec<usize>>)> = Vec::new();
    let mut total: u128 = 1;
    for r in &rows[1..] {
        let tuples = expand(r)?;
        if tuples.len() != slots.len() {
            return Ok(Vec::new());
        }
        let mut groups = Vec::new();
        for (rel, slot_ids) in &by_relation {
            let mine: Vec<usize> = (0..tuples.len()).filter(|&i| tuples[i].relation == *rel).collect();
            if mine.len() != slot_ids.len() {
                return Ok(Vec::new());
            }
            let mut counts: Vec<usize> = Vec::new();
            let mut prev: Option<&str> = None;
            for &i in &mine {
                let a = tuples[i].annotation.as_str();
                if prev == Some(a) {
                    *counts.last_mut().unwrap() += 1;
                } else {
                    counts.push(1);
                    prev = Some(a);
                }
            }
            total = total.saturating_mul(distinct_permutations(mine.len(), counts.into_iter()));
            // Repeated annotations share one representative index so that
            // permutations only distinguish different tuples.
            let canon: Vec<usize> = mine
                .iter()
                .map(|&i| {
                    mine.iter()
                        .copied()
                        .find(|&j| tuples[j].annotation == tuples[i].annotation)
                        .unwrap_or(i)
                })
                .collect();
            groups.push(canon);
        }
        others.push((tuples, groups));
    }
    if total > max_alignments {
        return Err(Error::AlignmentExplosion {
            count: total,
            cap: max_alignments,
        });
    }

    // Odometer over the per-(row, relation) arrangements. Each group starts
    // sorted, and `next_permutation` visits every distinct arrangement once
    // before wrapping back to sorted order.
    let mut state: Vec<Vec<Vec<usize>>> = others.iter().map(|(_, g)| g.clone()).collect();
    let outputs: Vec<&[String]> = rows.iter().map(|r| r.output.as_slice()).collect();
    let mut store = QueryStore::new();
    let mut order: Vec<QueryId> = Vec::new();
    loop {
        let mut matrix: Vec<Vec<&[String]>> = Vec::with_capacity(rows.len());
        matrix.push(slots.iter().map(|t| t.values.as_slice()).collect());
        for (ri, (tuples, _)) in others.iter().enumerate() {
            let mut row = vec![&[][..]; slots.len()];
            for (gi, (_, slot_ids)) in by_relation.iter().enumerate() {
                for (k, &s) in slot_ids.iter().enumerate() {
                    row[s] = tuples[state[ri][gi][k]].values.as_slice();
                }
            }
            matrix.push(row);
        }
        if let Some(q) = anti_unify(&relations, &matrix, &outputs) {
            let before = store.len();
            let id = store.intern(q);
            if store.len() > before {
                order.push(id);
            }
        }

        let mut advanced = false;
        'odometer: for ri in (0..state.len()).rev() {
            for gi in (0..state[ri].len()).rev() {
                if next_permutation(&mut state[ri][gi]) {
                    advanced = true;
                    break 'odometer;
                }
                // Wrapped around: `next_permutation` left it sorted again.
            }
        }
        if !advanced {
            break;
        }
    }
    Ok(order.into_iter().map(|id| store.get(id).clone()).collect())
}

/// Consistent most-specific queries of a concretization, without caching.
pub fn consistent_queries(c: &Concretization, db: &KDatabase, max_alignments: u128) -> Result<Vec<ConjunctiveQuery>> {
    lgg_candidates(c.rows(), db, max_alignments)
}

/// Direct check: for every row, evaluating `q` over that row's tuples yields
/// the row's output with the row's monomial among its derivations.
pub fn is_consistent(q: &ConjunctiveQuery, rows: &[ExampleRow], db: &KDatabase) -> Result<bool> {
    for r in rows {
        if q.arity() != r.output.len() {
            return Ok(false);
        }
        let mut sub = KDatabase::new();
        for s in db.schemas() {
            sub.add_schema(s.clone())?;
        }
        let distinct: BTreeSet<&str> = r.provenance.factors().keys().map(|a| a.as_str()).collect();
        for a in distinct {
            let t = db.resolve(a)?;
            sub.insert(&t.relation, &t.values, a)?;
        }
        let result = evaluate(q, &sub)?;
        if !result.get(&r.output).is_some_and(|p| p.contains(&r.provenance)) {
            return Ok(false);
        }
    }
    Ok(true)
}
