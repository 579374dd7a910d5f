//! Annotated databases, N[X] provenance monomials and polynomials, and K-examples.
//!
//! Every tuple of a [`KDatabase`] carries a distinct [`Annotation`]. A query
//! derivation is described by the product of the annotations of the tuples it
//! used, one factor per body atom, so a tuple used by two atoms contributes its
//! annotation squared. Coefficients are carried but never consulted by the
//! privacy logic, which makes B[X] inputs behave exactly like N[X] ones.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A basic provenance token, or (in abstracted examples) a tree node label.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Annotation(String);

impl Annotation {
    pub fn new(label: impl Into<String>) -> Self {
        Annotation(label.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Annotation {
    fn from(s: &str) -> Self {
        Annotation(s.to_string())
    }
}

impl From<String> for Annotation {
    fn from(s: String) -> Self {
        Annotation(s)
    }
}

impl Borrow<str> for Annotation {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Annotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Annotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// Factor map of a monomial: annotation to (positive) power, in canonical order.
pub type Factors = BTreeMap<Annotation, u32>;

/// A product of annotations with positive powers and a positive coefficient.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Monomial {
    factors: Factors,
    coefficient: u64,
}

impl Default for Monomial {
    fn default() -> Self {
        Self::one()
    }
}

impl Monomial {
    /// The empty product.
    pub fn one() -> Self {
        Monomial {
            factors: Factors::new(),
            coefficient: 1,
        }
    }

    pub fn var(a: impl Into<Annotation>) -> Self {
        Self::from_factors([(a.into(), 1)])
    }

    /// Builds a monomial from (annotation, power) pairs; repeated annotations
    /// have their powers added and zero powers are dropped.
    pub fn from_factors<A, I>(factors: I) -> Self
    where
        A: Into<Annotation>,
        I: IntoIterator<Item = (A, u32)>,
    {
        let mut map = Factors::new();
        for (a, p) in factors {
            if p > 0 {
                *map.entry(a.into()).or_insert(0) += p;
            }
        }
        Monomial {
            factors: map,
            coefficient: 1,
        }
    }

    /// Product of the given annotations, each with power one per appearance.
    pub fn product<A, I>(annotations: I) -> Self
    where
        A: Into<Annotation>,
        I: IntoIterator<Item = A>,
    {
        Self::from_factors(annotations.into_iter().map(|a| (a, 1)))
    }

    pub fn with_coefficient(mut self, coefficient: u64) -> Self {
        self.coefficient = coefficient.max(1);
        self
    }

    pub fn coefficient(&self) -> u64 {
        self.coefficient
    }

    pub fn factors(&self) -> &Factors {
        &self.factors
    }

    pub fn power(&self, a: &str) -> u32 {
        self.factors.get(a).copied().unwrap_or(0)
    }

    /// Sum of powers.
    pub fn degree(&self) -> u32 {
        self.factors.values().sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut factors = self.factors.clone();
        for (a, p) in &other.factors {
            *factors.entry(a.clone()).or_insert(0) += p;
        }
        Monomial {
            factors,
            coefficient: self.coefficient.saturating_mul(other.coefficient),
        }
    }

    /// Factor occurrences in canonical order: each annotation repeated once per
    /// unit of power. Yields `(position, repetition, annotation)` where
    /// `position` indexes the canonical factor order.
    pub fn occurrences(&self) -> impl Iterator<Item = (usize, u32, &Annotation)> + '_ {
        self.factors
            .iter()
            .enumerate()
            .flat_map(|(pos, (a, p))| (0..*p).map(move |rep| (pos, rep, a)))
    }

    /// Annotation per occurrence, in canonical order.
    pub fn expanded(&self) -> Vec<&Annotation> {
        self.occurrences().map(|(_, _, a)| a).collect()
    }

    /// Equality of the factor maps, ignoring coefficients.
    pub fn same_factors(&self, other: &Monomial) -> bool {
        self.factors == other.factors
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coefficient != 1 {
            write!(f, "{}", self.coefficient)?;
            if !self.factors.is_empty() {
                f.write_str("·")?;
            }
        } else if self.factors.is_empty() {
            return f.write_str("1");
        }
        for (i, (a, p)) in self.factors.iter().enumerate() {
            if i > 0 {
                f.write_str("·")?;
            }
            write!(f, "{a}")?;
            if *p > 1 {
                write!(f, "^{p}")?;
            }
        }
        Ok(())
    }
}

/// A sum of monomials in canonical form: one entry per distinct factor map.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Polynomial {
    terms: BTreeMap<Factors, u64>,
}

impl Polynomial {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, m: &Monomial) {
        *self.terms.entry(m.factors.clone()).or_insert(0) += m.coefficient;
    }

    pub fn coefficient_of(&self, m: &Monomial) -> u64 {
        self.terms.get(&m.factors).copied().unwrap_or(0)
    }

    /// True if `m`'s factor map appears with coefficient at least one.
    pub fn contains(&self, m: &Monomial) -> bool {
        self.coefficient_of(m) >= 1
    }

    pub fn monomials(&self) -> impl Iterator<Item = Monomial> + '_ {
        self.terms.iter().map(|(f, c)| Monomial {
            factors: f.clone(),
            coefficient: *c,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, m) in self.monomials().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{m}")?;
        }
        Ok(())
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct RelationSchema {
    pub name: String,
    pub attributes: Vec<String>,
}

impl RelationSchema {
    pub fn arity(&self) -> usize {
        self.attributes.len()
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AnnotatedTuple {
    pub relation: String,
    pub values: Vec<String>,
    pub annotation: Annotation,
}

#[derive(Clone, PartialEq, Eq, Debug)]
struct Relation {
    schema: RelationSchema,
    tuples: Vec<AnnotatedTuple>,
}

/// An abstractly-tagged database: every tuple has its own annotation.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct KDatabase {
    relations: Vec<Relation>,
    by_name: HashMap<String, usize>,
    index: HashMap<Annotation, (usize, usize)>,
}

impl KDatabase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_relation(&mut self, name: &str, attributes: &[&str]) -> Result<()> {
        self.add_schema(RelationSchema {
            name: name.to_string(),
            attributes: attributes.iter().map(|s| s.to_string()).collect(),
        })
    }

    pub fn add_schema(&mut self, schema: RelationSchema) -> Result<()> {
        if self.by_name.contains_key(&schema.name) {
            return Err(Error::SchemaMismatch(format!(
                "relation `{}` declared twice",
                schema.name
            )));
        }
        self.by_name.insert(schema.name.clone(), self.relations.len());
        self.relations.push(Relation {
            schema,
            tuples: Vec::new(),
        });
        Ok(())
    }

    pub fn insert<S: AsRef<str>>(
        &mut self,
        relation: &str,
        values: &[S],
        annotation: impl Into<Annotation>,
    ) -> Result<()> {
        let annotation = annotation.into();
        if annotation.as_str().is_empty() {
            return Err(Error::InvalidExample("empty annotation".into()));
        }
        let ri = *self
            .by_name
            .get(relation)
            .ok_or_else(|| Error::SchemaMismatch(format!("unknown relation `{relation}`")))?;
        let rel = &mut self.relations[ri];
        if values.len() != rel.schema.arity() {
            return Err(Error::ArityMismatch {
                relation: relation.to_string(),
                expected: rel.schema.arity(),
                found: values.len(),
            });
        }
        if self.index.contains_key(&annotation) {
            return Err(Error::DuplicateAnnotation(annotation.to_string()));
        }
        self.index.insert(annotation.clone(), (ri, rel.tuples.len()));
        rel.tuples.push(AnnotatedTuple {
            relation: relation.to_string(),
            values: values.iter().map(|v| v.as_ref().to_string()).collect(),
            annotation,
        });
        Ok(())
    }

    pub fn tuple(&self, a: &str) -> Option<&AnnotatedTuple> {
        self.index
            .get(a)
            .map(|&(r, t)| &self.relations[r].tuples[t])
    }

    pub fn resolve(&self, a: &str) -> Result<&AnnotatedTuple> {
        self.tuple(a)
            .ok_or_else(|| Error::UnknownAnnotation(a.to_string()))
    }

    pub fn contains(&self, a: &str) -> bool {
        self.index.contains_key(a)
    }

    pub fn schema(&self, relation: &str) -> Option<&RelationSchema> {
        self.by_name
            .get(relation)
            .map(|&i| &self.relations[i].schema)
    }

    pub fn tuples(&self, relation: &str) -> &[AnnotatedTuple] {
        self.by_name
            .get(relation)
            .map(|&i| self.relations[i].tuples.as_slice())
            .unwrap_or(&[])
    }

    pub fn schemas(&self) -> impl Iterator<Item = &RelationSchema> {
        self.relations.iter().map(|r| &r.schema)
    }

    /// All tuples, relation by relation in declaration order.
    pub fn all_tuples(&self) -> impl Iterator<Item = &AnnotatedTuple> {
        self.relations.iter().flat_map(|r| r.tuples.iter())
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

/// One output tuple together with the monomial explaining it.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct ExampleRow {
    pub output: Vec<String>,
    pub provenance: Monomial,
}

impl ExampleRow {
    pub fn new<S: AsRef<str>>(output: &[S], provenance: Monomial) -> Self {
        ExampleRow {
            output: output.iter().map(|s| s.as_ref().to_string()).collect(),
            provenance,
        }
    }
}

/// Output tuples of a hidden query, each with its provenance monomial.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct KExample {
    arity: usize,
    rows: Vec<ExampleRow>,
}

impl KExample {
    pub fn new(arity: usize, rows: Vec<ExampleRow>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.output.len() != arity {
                return Err(Error::InvalidExample(format!(
                    "row {i} has {} output values, expected {arity}",
                    row.output.len()
                )));
            }
            if row.provenance.degree() == 0 {
                return Err(Error::InvalidExample(format!(
                    "row {i} has an empty provenance monomial"
                )));
            }
        }
        Ok(KExample { arity, rows })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn rows(&self) -> &[ExampleRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Union of factor annotations over all rows; powers are irrelevant.
    pub fn var_set(&self) -> BTreeSet<Annotation> {
        self.rows
            .iter()
            .flat_map(|r| r.provenance.factors().keys().cloned())
            .collect()
    }

    /// Checks that every factor names a database tuple.
    pub fn check_resolves(&self, db: &KDatabase) -> Result<()> {
        for a in self.var_set() {
            db.resolve(a.as_str())?;
        }
        Ok(())
    }

    /// The example restricted to its first `n` rows.
    pub fn prefix(&self, n: usize) -> KExample {
        KExample {
            arity: self.arity,
            rows: self.rows[..n.min(self.rows.len())].to_vec(),
        }
    }
}

impl fmt::Display for KExample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.rows {
            writeln!(f, "({}) : {}", row.output.join(", "), row.provenance)?;
        }
        Ok(())
    }
}

/// Sorted multiset of relation names touched by `m`, one entry per unit of power.
pub fn relation_skeleton(m: &Monomial, db: &KDatabase) -> Result<Vec<String>> {
    let mut out = Vec::with_capacity(m.degree() as usize);
    for (a, p) in m.factors() {
        let t = db.resolve(a.as_str())?;
        for _ in 0..*p {
            out.push(t.relation.clone());
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn var_set_of_running_example() {
        let ex = fixtures::ex_real();
        let vars: Vec<_> = ex.var_set().into_iter().map(|a| a.to_string()).collect();
        assert_eq!(vars, ["h1", "h2", "i1", "i2", "p1", "p2"]);
        assert!(KExample::new(1, vec![]).unwrap().var_set().is_empty());
    }

    #[test]
    fn var_set_ignores_powers() {
        let row = ExampleRow::new(&["1"], Monomial::from_factors([("yes", 3), ("ec", 2)]));
        let ex = KExample::new(1, vec![row]).unwrap();
        let vars: Vec<_> = ex.var_set().into_iter().map(|a| a.to_string()).collect();
        assert_eq!(vars, ["ec", "yes"]);
    }

    #[test]
    fn degrees() {
        assert_eq!(Monomial::product(["p1", "h1", "i1"]).degree(), 3);
        assert_eq!(Monomial::var("a").degree(), 1);
        assert_eq!(Monomial::from_factors([("yes", 3), ("ec", 2)]).degree(), 5);
    }

    #[test]
    fn skeletons() {
        let db = fixtures::database();
        let sk = relation_skeleton(&Monomial::product(["p1", "h1", "i1"]), &db).unwrap();
        assert_eq!(sk, ["Hobbies", "Interests", "Persons"]);
        let sk = relation_skeleton(&Monomial::product(["p1", "h1", "h6"]), &db).unwrap();
        assert_eq!(sk, ["Hobbies", "Hobbies", "Persons"]);
        let err = relation_skeleton(&Monomial::product(["p1", "zz"]), &db).unwrap_err();
        assert!(matches!(err, Error::UnknownAnnotation(a) if a == "zz"));
    }

    #[test]
    fn canonical_order_and_display() {
        let m = Monomial::product(["i1", "p1", "h1", "h1"]);
        assert_eq!(m.to_string(), "h1^2·i1·p1");
        let occ: Vec<_> = m.occurrences().map(|(p, r, a)| (p, r, a.to_string())).collect();
        assert_eq!(
            occ,
            [(0, 0, "h1".into()), (0, 1, "h1".into()), (1, 0, "i1".into()), (2, 0, "p1".into())]
        );
    }

    #[test]
    fn database_rejects_bad_tuples() {
        let mut db = KDatabase::new();
        db.add_relation("R", &["a", "b"]).unwrap();
        db.insert("R", &["1", "2"], "t1").unwrap();
        assert!(matches!(
            db.insert("R", &["1"], "t2"),
            Err(Error::ArityMismatch { .. })
        ));
        assert!(matches!(
            db.insert("R", &["1", "3"], "t1"),
            Err(Error::DuplicateAnnotation(_))
        ));
    }

    #[test]
    fn polynomial_merges_coefficients() {
        let mut p = Polynomial::new();
        p.add(&Monomial::product(["a", "b"]));
        p.add(&Monomial::product(["b", "a"]));
        p.add(&Monomial::var("c"));
        assert_eq!(p.len(), 2);
        assert_eq!(p.coefficient_of(&Monomial::product(["a", "b"])), 2);
        assert_eq!(p.to_string(), "2·a·b + c");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn monomial() -> impl Strategy<Value = Monomial> {
            prop::collection::vec(("[a-e]", 1u32..3), 0..5).prop_map(Monomial::from_factors)
        }

        proptest! {
            #[test]
            fn multiplication_commutes_and_associates(a in monomial(), b in monomial(), c in monomial()) {
                prop_assert_eq!(a.mul(&b), b.mul(&a));
                prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
                prop_assert_eq!(a.mul(&b).degree(), a.degree() + b.degree());
            }

            #[test]
            fn canonicalization_is_idempotent(a in monomial()) {
                let again = Monomial::from_factors(a.factors().iter().map(|(k, v)| (k.clone(), *v)));
                prop_assert_eq!(again, a);
            }
        }
    }
}
