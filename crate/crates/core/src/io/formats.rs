use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::abstraction::{check_compatible, AbstractionTree, LossModel, TreeNodeSpec};
use crate::error::{Error, Result};
use crate::provenance::{ExampleRow, KDatabase, KExample, Monomial, RelationSchema};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatabaseFile {
    pub relations: Vec<RelationFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationFile {
    pub name: String,
    pub attributes: Vec<String>,
    pub tuples: Vec<TupleFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TupleFile {
    pub ann: String,
    pub values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleFile {
    pub arity: usize,
    pub rows: Vec<RowFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowFile {
    pub output: Vec<String>,
    pub prov: Vec<FactorFile>,
}

fn one() -> u32 {
    1
}

fn is_one(p: &u32) -> bool {
    *p == 1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorFile {
    pub ann: String,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub pow: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct DistributionEntry {
    pub concretization_index: usize,
    pub probability: f64,
}

pub fn database_from_file(file: &DatabaseFile) -> Result<KDatabase> {
    let mut db = KDatabase::new();
    for r in &file.relations {
        db.add_schema(RelationSchema {
            name: r.name.clone(),
            attributes: r.attributes.clone(),
        })?;
        for t in &r.tuples {
            db.insert(&r.name, &t.values, t.ann.as_str())?;
        }
    }
    Ok(db)
}

pub fn database_to_file(db: &KDatabase) -> DatabaseFile {
    DatabaseFile {
        relations: db
            .schemas()
            .map(|s| RelationFile {
                name: s.name.clone(),
                attributes: s.attributes.clone(),
                tuples: db
                    .tuples(&s.name)
                    .iter()
                    .map(|t| TupleFile {
                        ann: t.annotation.to_string(),
                        values: t.values.clone(),
                    })
                    .collect(),
            })
            .collect(),
    }
}

pub fn example_from_file(file: &ExampleFile) -> Result<KExample> {
    let rows = file
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if let Some(f) = r.prov.iter().find(|f| f.pow == 0 || f.ann.is_empty()) {
                return Err(Error::InvalidExample(format!(
                    "row {i}: factor `{}` needs a non-empty name and a positive power",
                    f.ann
                )));
            }
            Ok(ExampleRow {
                output: r.output.clone(),
                provenance: Monomial::from_factors(r.prov.iter().map(|f| (f.ann.as_str(), f.pow))),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    KExample::new(file.arity, rows)
}

pub fn example_to_file(ex: &KExample) -> ExampleFile {
    ExampleFile {
        arity: ex.arity(),
        rows: ex
            .rows()
            .iter()
            .map(|r| RowFile {
                output: r.output.clone(),
                prov: r
                    .provenance
                    .factors()
                    .iter()
                    .map(|(a, &pow)| FactorFile {
                        ann: a.to_string(),
                        pow,
                    })
                    .collect(),
            })
            .collect(),
    }
}

/// Probabilities ordered by concretization index; indices must be exactly
/// `0..n`.
pub fn distribution_from_entries(entries: &[DistributionEntry]) -> Result<LossModel> {
    let mut ps = vec![None; entries.len()];
    for e in entries {
        let slot = ps.get_mut(e.concretization_index).ok_or_else(|| {
            Error::InvalidDistribution(format!("index {} out of range", e.concretization_index))
        })?;
        if slot.replace(e.probability).is_some() {
            return Err(Error::InvalidDistribution(format!(
                "index {} listed twice",
                e.concretization_index
            )));
        }
    }
    LossModel::explicit(ps.into_iter().map(|p| p.unwrap_or_default()).collect())
}

pub fn distribution_to_entries(model: &LossModel) -> Vec<DistributionEntry> {
    match model {
        LossModel::Explicit(ps) => ps
            .iter()
            .enumerate()
            .map(|(i, &p)| DistributionEntry {
                concretization_index: i,
                probability: p,
            })
            .collect(),
        _ => Vec::new(),
    }
}

pub fn database_from_str(text: &str) -> Result<KDatabase> {
    database_from_file(&serde_json::from_str(text)?)
}

pub fn tree_from_str(text: &str) -> Result<AbstractionTree> {
    AbstractionTree::from_spec(&serde_json::from_str::<TreeNodeSpec>(text)?)
}

pub fn example_from_str(text: &str) -> Result<KExample> {
    example_from_file(&serde_json::from_str(text)?)
}

pub fn distribution_from_str(text: &str) -> Result<LossModel> {
    distribution_from_entries(&serde_json::from_str::<Vec<DistributionEntry>>(text)?)
}

pub fn database_to_string(db: &KDatabase) -> String {
    serde_json::to_string_pretty(&database_to_file(db)).expect("database serializes")
}

pub fn tree_to_string(tree: &AbstractionTree) -> String {
    serde_json::to_string_pretty(&tree.to_spec()).expect("tree serializes")
}

pub fn example_to_string(ex: &KExample) -> String {
    serde_json::to_string_pretty(&example_to_file(ex)).expect("example serializes")
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

pub fn load_database(path: impl AsRef<Path>) -> Result<KDatabase> {
    database_from_str(&read(path.as_ref())?)
}

pub fn load_tree(path: impl AsRef<Path>) -> Result<AbstractionTree> {
    tree_from_str(&read(path.as_ref())?)
}

pub fn load_kexample(path: impl AsRef<Path>) -> Result<KExample> {
    example_from_str(&read(path.as_ref())?)
}

pub fn load_distribution(path: impl AsRef<Path>) -> Result<LossModel> {
    distribution_from_str(&read(path.as_ref())?)
}

pub fn save_database(db: &KDatabase, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, database_to_string(db) + "\n")?)
}

pub fn save_tree(tree: &AbstractionTree, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, tree_to_string(tree) + "\n")?)
}

pub fn save_kexample(ex: &KExample, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, example_to_string(ex) + "\n")?)
}

/// Cross-checks a database, a tree and an example: the tree must be
/// compatible, and every factor must be a tuple annotation or, when
/// `allow_labels` is set, a tree node label.
pub fn validate_inputs(db: &KDatabase, tree: &AbstractionTree, ex: &KExample, allow_labels: bool) -> Result<()> {
    check_compatible(tree, db)?;
    for a in ex.var_set() {
        if db.contains(a.as_str()) || (allow_labels && tree.id(a.as_str()).is_some()) {
            continue;
        }
        return Err(Error::UnknownAnnotation(a.to_string()));
    }
    Ok(())
}
