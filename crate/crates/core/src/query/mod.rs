//! Conjunctive queries: representation, N[X] evaluation, join-graph
//! connectivity, and homomorphism-based containment.

mod parse;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::error::{Error, Result};
use crate::provenance::{Annotation, KDatabase, Monomial, Polynomial};

pub use parse::{parse_queries, parse_query};

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Term {
    Var(String),
    Const(String),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    pub fn constant(value: impl Into<String>) -> Self {
        Term::Const(value.into())
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Const(c) => {
                f.write_str("'")?;
                for ch in c.chars() {
                    if ch == '\'' || ch == '\\' {
                        f.write_str("\\")?;
                    }
                    write!(f, "{ch}")?;
                }
                f.write_str("'")
            }
        }
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Atom {
    pub relation: String,
    pub terms: Vec<Term>,
}

impl Atom {
    pub fn new(relation: impl Into<String>, terms: Vec<Term>) -> Self {
        Atom {
            relation: relation.into(),
            terms,
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.relation)?;
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{t}")?;
        }
        f.write_str(")")
    }
}

/// `Q(u) :- R1(v1), ..., Rl(vl)`; every head variable occurs in the body.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct ConjunctiveQuery {
    pub name: String,
    pub head: Vec<Term>,
    pub body: Vec<Atom>,
}

/// Edges between body atoms that share a variable.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct JoinGraph {
    pub nodes: usize,
    pub edges: Vec<(usize, usize)>,
}

impl JoinGraph {
    pub fn is_connected(&self) -> bool {
        if self.nodes <= 1 {
            return true;
        }
        let mut uf = UnionFind::new(self.nodes);
        for &(a, b) in &self.edges {
            uf.union(a, b);
        }
        uf.components() == 1
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }

    pub(crate) fn components(&mut self) -> usize {
        (0..self.parent.len()).filter(|&i| self.find(i) == i).count()
    }
}

/// Invariant of homomorphic equivalence: equivalent queries have the same
/// head arity, head constants, relation names and constants.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct EquivalenceKey {
    head: Vec<Option<String>>,
    relations: BTreeSet<String>,
    constants: BTreeSet<String>,
}

impl ConjunctiveQuery {
    pub fn new(head: Vec<Term>, body: Vec<Atom>) -> Result<Self> {
        let q = ConjunctiveQuery {
            name: "Q".to_string(),
            head,
            body,
        };
        q.check_safe()?;
        Ok(q)
    }

    fn check_safe(&self) -> Result<()> {
        let body_vars = self.body_variables();
        for t in &self.head {
            if let Term::Var(v) = t {
                if !body_vars.contains(v.as_str()) {
                    return Err(Error::SchemaMismatch(format!(
                        "head variable `{v}` does not occur in the body"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn arity(&self) -> usize {
        self.head.len()
    }

    fn body_variables(&self) -> BTreeSet<&str> {
        self.body
            .iter()
            .flat_map(|a| a.terms.iter().filter_map(Term::as_var))
            .collect()
    }

    pub fn variables(&self) -> BTreeSet<&str> {
        let mut vars = self.body_variables();
        vars.extend(self.head.iter().filter_map(Term::as_var));
        vars
    }

    pub fn constants(&self) -> BTreeSet<&str> {
        self.head
            .iter()
            .chain(self.body.iter().flat_map(|a| a.terms.iter()))
            .filter_map(|t| match t {
                Term::Const(c) => Some(c.as_str()),
                Term::Var(_) => None,
            })
            .collect()
    }

    pub fn has_variables(&self) -> bool {
        self.body.iter().any(|a| a.terms.iter().any(Term::is_var))
    }

    pub fn join_graph(&self) -> JoinGraph {
        let vars: Vec<BTreeSet<&str>> = self
            .body
            .iter()
            .map(|a| a.terms.iter().filter_map(Term::as_var).collect())
            .collect();
        let mut edges = Vec::new();
        for i in 0..vars.len() {
            for j in i + 1..vars.len() {
                if !vars[i].is_disjoint(&vars[j]) {
                    edges.push((i, j));
                }
            }
        }
        JoinGraph {
            nodes: self.body.len(),
            edges,
        }
    }

    /// True iff the join graph is connected; single-atom queries are connected.
    pub fn is_connected(&self) -> bool {
        let n = self.body.len();
        if n <= 1 {
            return true;
        }
        let mut uf = UnionFind::new(n);
        let mut first_seen: HashMap<&str, usize> = HashMap::new();
        for (i, atom) in self.body.iter().enumerate() {
            for v in atom.terms.iter().filter_map(Term::as_var) {
                match first_seen.get(v) {
                    Some(&j) => uf.union(i, j),
                    None => {
                        first_seen.insert(v, i);
                    }
                }
            }
        }
        uf.components() == 1
    }

    pub fn equivalence_key(&self) -> EquivalenceKey {
        EquivalenceKey {
            head: self
                .head
                .iter()
                .map(|t| match t {
                    Term::Const(c) => Some(c.clone()),
                    Term::Var(_) => None,
                })
                .collect(),
            relations: self.body.iter().map(|a| a.relation.clone()).collect(),
            constants: self.constants().into_iter().map(String::from).collect(),
        }
    }

    /// Renames variables to `a, b, c, ...` in order of first appearance
    /// (head first, then body).
    pub fn with_canonical_names(&self) -> ConjunctiveQuery {
        let mut names: HashMap<&str, String> = HashMap::new();
        let order = self
            .head
            .iter()
            .chain(self.body.iter().flat_map(|a| a.terms.iter()))
            .filter_map(Term::as_var);
        for v in order {
            let next = names.len();
            names.entry(v).or_insert_with(|| var_name(next));
        }
        let rename = |t: &Term| match t {
            Term::Var(v) => Term::Var(names[v.as_str()].clone()),
            c => c.clone(),
        };
        ConjunctiveQuery {
            name: self.name.clone(),
            head: self.head.iter().map(rename).collect(),
            body: self
                .body
                .iter()
                .map(|a| Atom::new(a.relation.clone(), a.terms.iter().map(rename).collect()))
                .collect(),
        }
    }
}

/// `a..z`, then `a1..z1`, and so on.
pub(crate) fn var_name(i: usize) -> String {
    let letter = (b'a' + (i % 26) as u8) as char;
    match i / 26 {
        0 => letter.to_string(),
        round => format!("{letter}{round}"),
    }
}

impl fmt::Display for ConjunctiveQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        for (i, t) in self.head.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{t}")?;
        }
        f.write_str(") :- ")?;
        for (i, a) in self.body.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

pub fn print_query(q: &ConjunctiveQuery) -> String {
    q.to_string()
}

pub fn is_connected_query(q: &ConjunctiveQuery) -> bool {
    q.is_connected()
}

/// Evaluates `q` over `db` in N[X]: each output tuple maps to the sum over its
/// derivations of the per-atom product of tuple annotations.
pub fn evaluate(q: &ConjunctiveQuery, db: &KDatabase) -> Result<BTreeMap<Vec<String>, Polynomial>> {
    for atom in &q.body {
        let schema = db
            .schema(&atom.relation)
            .ok_or_else(|| Error::SchemaMismatch(format!("unknown relation `{}`", atom.relation)))?;
        if schema.arity() != atom.terms.len() {
            return Err(Error::ArityMismatch {
                relation: atom.relation.clone(),
                expected: schema.arity(),
                found: atom.terms.len(),
            });
        }
    }
    let mut out: BTreeMap<Vec<String>, Polynomial> = BTreeMap::new();
    let mut binding: HashMap<&str, &str> = HashMap::new();
    let mut used: Vec<&Annotation> = Vec::with_capacity(q.body.len());
    derive(q, db, 0, &mut binding, &mut used, &mut |binding, used| {
        let tuple = q
            .head
            .iter()
            .map(|t| match t {
                Term::Var(v) => binding[v.as_str()].to_string(),
                Term::Const(c) => c.clone(),
            })
            .collect();
        out.entry(tuple)
            .or_default()
            .add(&Monomial::product(used.iter().map(|a| (*a).clone())));
    });
    Ok(out)
}

fn derive<'a>(
    q: &'a ConjunctiveQuery,
    db: &'a KDatabase,
    idx: usize,
    binding: &mut HashMap<&'a str, &'a str>,
    used: &mut Vec<&'a Annotation>,
    emit: &mut dyn FnMut(&HashMap<&'a str, &'a str>, &[&'a Annotation]),
) {
    let Some(atom) = q.body.get(idx) else {
        emit(binding, used);
        return;
    };
    'tuples: for tuple in db.tuples(&atom.relation) {
        let mut fresh: Vec<&str> = Vec::new();
        for (term, value) in atom.terms.iter().zip(&tuple.values) {
            let ok = match term {
                Term::Const(c) => c == value,
                Term::Var(v) => match binding.get(v.as_str()) {
                    Some(bound) => *bound == value.as_str(),
                    None => {
                        binding.insert(v, value);
                        fresh.push(v);
                        true
                    }
                },
            };
            if !ok {
                for v in fresh {
                    binding.remove(v);
                }
                continue 'tuples;
            }
        }
        used.push(&tuple.annotation);
        derive(q, db, idx + 1, binding, used, emit);
        used.pop();
        for v in fresh {
            binding.remove(v);
        }
    }
}

/// True iff `inner ⊆ outer`, i.e. there is a homomorphism from `outer` to
/// `inner` that maps head to head, constants to themselves and atoms to
/// atoms of the same relation.
pub fn contains(outer: &ConjunctiveQuery, inner: &ConjunctiveQuery) -> bool {
    if outer.head.len() != inner.head.len() {
        return false;
    }
    let inner_relations: BTreeSet<&str> = inner.body.iter().map(|a| a.relation.as_str()).collect();
    if outer
        .body
        .iter()
        .any(|a| !inner_relations.contains(a.relation.as_str()))
    {
        return false;
    }
    if !outer.constants().is_subset(&inner.constants()) {
        return false;
    }

    let mut map: HashMap<&str, &Term> = HashMap::new();
    for (o, i) in outer.head.iter().zip(&inner.head) {
        match o {
            Term::Const(_) => {
                if o != i {
                    return false;
                }
            }
            Term::Var(v) => match map.get(v.as_str()) {
                Some(prev) if *prev != i => return false,
                Some(_) => {}
                None => {
                    map.insert(v, i);
                }
            },
        }
    }

    // Candidate targets per outer atom, filtered on constants up front.
    let mut plan: Vec<(usize, Vec<usize>)> = Vec::with_capacity(outer.body.len());
    for (oi, oa) in outer.body.iter().enumerate() {
        let cands: Vec<usize> = inner
            .body
            .iter()
            .enumerate()
            .filter(|(_, ia)| {
                ia.relation == oa.relation
                    && ia.terms.len() == oa.terms.len()
                    && oa.terms.iter().zip(&ia.terms).all(|(o, i)| match o {
                        Term::Const(_) => o == i,
                        Term::Var(_) => true,
                    })
            })
            .map(|(ii, _)| ii)
            .collect();
        if cands.is_empty() {
            return false;
        }
        plan.push((oi, cands));
    }
    plan.sort_by(|(a, ca), (b, cb)| {
        ca.len()
            .cmp(&cb.len())
            .then_with(|| outer.body[*a].relation.cmp(&outer.body[*b].relation))
            .then(a.cmp(b))
    });
    extend_hom(outer, inner, &plan, 0, &mut map)
}

fn extend_hom<'a>(
    outer: &'a ConjunctiveQuery,
    inner: &'a ConjunctiveQuery,
    plan: &[(usize, Vec<usize>)],
    step: usize,
    map: &mut HashMap<&'a str, &'a Term>,
) -> bool {
    let Some((oi, cands)) = plan.get(step) else {
        return true;
    };
    let oa = &outer.body[*oi];
    'cands: for &ii in cands {
        let ia = &inner.body[ii];
        let mut fresh: Vec<&str> = Vec::new();
        for (o, i) in oa.terms.iter().zip(&ia.terms) {
            if let Term::Var(v) = o {
                match map.get(v.as_str()) {
                    Some(prev) if *prev != i => {
                        for f in fresh {
                            map.remove(f);
                        }
                        continue 'cands;
                    }
                    Some(_) => {}
                    None => {
                        map.insert(v, i);
                        fresh.push(v);
                    }
                }
            }
        }
        if extend_hom(outer, inner, plan, step + 1, map) {
            return true;
        }
        for f in fresh {
            map.remove(f);
        }
    }
    false
}

pub fn equivalent(q1: &ConjunctiveQuery, q2: &ConjunctiveQuery) -> bool {
    contains(q1, q2) && contains(q2, q1)
}
