//! Seeded synthetic workloads: a random database, a random connected query,
//! its K-example, and an abstraction tree over part of the annotations.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::abstraction::AbstractionTree;
use crate::error::{Error, Result};
use crate::provenance::{ExampleRow, KDatabase, KExample};
use crate::query::{evaluate, Atom, ConjunctiveQuery, Term};

/// How inner nodes share out the nodes of the level below.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchingProfile {
    /// Children split as evenly as possible.
    #[default]
    Balanced,
    /// Random split, every node keeping at least one child.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct WorkloadSpec {
    pub relation_count: usize,
    pub tuples_per_relation: usize,
    /// Values are drawn from `v0 .. v{domainSize-1}`.
    pub domain_size: usize,
    pub attributes: usize,
    pub tree_leaf_count: usize,
    pub tree_height: usize,
    pub branching_profile: BranchingProfile,
    pub query_atom_count: usize,
    pub join_count: usize,
    pub example_rows: usize,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            relation_count: 2,
            tuples_per_relation: 500,
            domain_size: 100,
            attributes: 2,
            tree_leaf_count: 1000,
            tree_height: 5,
            branching_profile: BranchingProfile::Balanced,
            query_atom_count: 2,
            join_count: 1,
            example_rows: 2,
            seed: 0,
        }
    }
}

/// Everything a generated instance consists of.
#[derive(Clone, Debug)]
pub struct Workload {
    pub database: KDatabase,
    pub tree: AbstractionTree,
    pub query: ConjunctiveQuery,
    pub example: KExample,
}

const QUERY_ATTEMPTS: usize = 64;

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("relationCount", self.relation_count),
            ("tuplesPerRelation", self.tuples_per_relation),
            ("domainSize", self.domain_size),
            ("attributes", self.attributes),
            ("treeLeafCount", self.tree_leaf_count),
            ("treeHeight", self.tree_height),
            ("queryAtomCount", self.query_atom_count),
            ("exampleRows", self.example_rows),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be positive")));
        }
        let tuples = self.relation_count * self.tuples_per_relation;
        if self.tree_leaf_count > tuples {
            return Err(Error::InfeasibleSpec(format!(
                "{} leaves requested from {tuples} tuples",
                self.tree_leaf_count
            )));
        }
        Ok(())
    }
}

/// Builds a workload; the same spec always gives the same workload.
pub fn generate_workload(spec: &WorkloadSpec) -> Result<Workload> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let database = random_database(spec, &mut rng)?;
    let mut found = None;
    for _ in 0..QUERY_ATTEMPTS {
        let query = random_query(spec, &mut rng)?;
        let results = evaluate(&query, &database)?;
        if results.len() >= spec.example_rows {
            found = Some((query, results));
            break;
        }
    }
    let Some((query, results)) = found else {
        return Err(Error::InfeasibleSpec(format!(
            "no query out of {QUERY_ATTEMPTS} yields {} output tuples",
            spec.example_rows
        )));
    };
    let outputs: Vec<_> = results.into_iter().collect();
    let rows: Vec<ExampleRow> = outputs
        .choose_multiple(&mut rng, spec.example_rows)
        .map(|(output, poly)| {
            let monomials: Vec<_> = poly.monomials().collect();
            let m = monomials.choose(&mut rng).expect("non-empty polynomial").clone();
            ExampleRow::new(output, m.with_coefficient(1))
        })
        .collect();
    let example = KExample::new(query.arity(), rows)?;
    let tree = random_tree(spec, &database, &example, &mut rng)?;
    Ok(Workload {
        database,
        tree,
        query,
        example,
    })
}

fn random_database(spec: &WorkloadSpec, rng: &mut ChaCha8Rng) -> Result<KDatabase> {
    let mut db = KDatabase::new();
    let attrs: Vec<String> = (0..spec.attributes).map(|a| format!("a{a}")).collect();
    let attrs: Vec<&str> = attrs.iter().map(String::as_str).collect();
    for r in 0..spec.relation_count {
        let name = format!("R{r}");
        db.add_relation(&name, &attrs)?;
        for t in 0..spec.tuples_per_relation {
            let values: Vec<String> = (0..spec.attributes)
                .map(|_| format!("v{}", rng.gen_range(0..spec.domain_size)))
                .collect();
            db.insert(&name, &values, format!("t{r}_{t}"))?;
        }
    }
    Ok(db)
}

/// Atom `i > 0` with `i <= joinCount` shares a variable with an earlier
/// atom, so `joinCount = atoms - 1` gives a connected query. Further joins
/// identify two more positions.
fn random_query(spec: &WorkloadSpec, rng: &mut ChaCha8Rng) -> Result<ConjunctiveQuery> {
    let n = spec.query_atom_count;
    let width = spec.attributes;
    let mut terms: Vec<Vec<usize>> = (0..n).map(|i| (0..width).map(|p| i * width + p).collect()).collect();
    let rename = |terms: &mut Vec<Vec<usize>>, from: usize, to: usize| {
        for t in terms.iter_mut().flatten() {
            if *t == from {
                *t = to;
            }
        }
    };
    for j in 0..spec.join_count {
        if j + 1 < n {
            let i = j + 1;
            let earlier = rng.gen_range(0..i);
            let to = terms[earlier][rng.gen_range(0..width)];
            let from = terms[i][rng.gen_range(0..width)];
            rename(&mut terms, from, to);
        } else if n * width > 1 {
            let a = rng.gen_range(0..n * width);
            let b = rng.gen_range(0..n * width);
            let (to, from) = (terms[a / width][a % width], terms[b / width][b % width]);
            rename(&mut terms, from, to);
        }
    }
    let body: Vec<Atom> = terms
        .iter()
        .map(|ts| {
            let rel = format!("R{}", rng.gen_range(0..spec.relation_count));
            Atom::new(rel, ts.iter().map(|v| Term::var(format!("x{v}"))).collect())
        })
        .collect();
    let first = terms[0][0];
    let last = *terms[n - 1].last().expect("atoms have terms");
    let mut head = vec![Term::var(format!("x{first}"))];
    if last != first {
        head.push(Term::var(format!("x{last}")));
    }
    Ok(ConjunctiveQuery::new(head, body)?.with_canonical_names())
}

/// Leaves are the example's annotations plus random others; every leaf sits
/// at depth `treeHeight`, level sizes growing geometrically from the root.
fn random_tree(
    spec: &WorkloadSpec,
    db: &KDatabase,
    ex: &KExample,
    rng: &mut ChaCha8Rng,
) -> Result<AbstractionTree> {
    let mut leaves: Vec<String> = ex.var_set().iter().map(|a| a.to_string()).collect();
    if leaves.len() > spec.tree_leaf_count {
        return Err(Error::InfeasibleSpec(format!(
            "the example uses {} annotations but the tree has {} leaves",
            leaves.len(),
            spec.tree_leaf_count
        )));
    }
    let mut others: Vec<String> = db
        .all_tuples()
        .map(|t| t.annotation.to_string())
        .filter(|a| !leaves.contains(a))
        .collect();
    others.sort();
    others.shuffle(rng);
    leaves.extend(others.into_iter().take(spec.tree_leaf_count - leaves.len()));
    leaves.shuffle(rng);

    let h = spec.tree_height;
    let l = leaves.len();
    let mut sizes: Vec<usize> = (0..=h)
        .map(|d| ((l as f64).powf(d as f64 / h as f64).round() as usize).clamp(1, l))
        .collect();
    sizes[h] = l;
    for d in 1..=h {
        sizes[d] = sizes[d].max(sizes[d - 1]);
    }
    let mut labels: Vec<Vec<String>> = (0..h).map(|d| (0..sizes[d]).map(|i| format!("g{d}_{i}")).collect()).collect();
    labels[0] = vec!["root".to_string()];
    labels.push(leaves);
    let mut edges: Vec<(String, String)> = Vec::new();
    for d in 0..h {
        let split = split_counts(sizes[d + 1], sizes[d], spec.branching_profile, rng);
        let mut child = 0;
        for (p, &c) in split.iter().enumerate() {
            for _ in 0..c {
                edges.push((labels[d][p].clone(), labels[d + 1][child].clone()));
                child += 1;
            }
        }
    }
    let edges: Vec<(&str, &str)> = edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    AbstractionTree::from_edges("root", &edges)
}

/// Splits `items` among `parents` (≤ items), each getting at least one.
fn split_counts(items: usize, parents: usize, profile: BranchingProfile, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match profile {
        BranchingProfile::Balanced => (0..parents)
            .map(|p| items / parents + usize::from(p < items % parents))
            .collect(),
        BranchingProfile::Random => {
            let mut counts = vec![1; parents];
            for _ in parents..items {
                counts[rng.gen_range(0..parents)] += 1;
            }
            counts
        }
    }
}
