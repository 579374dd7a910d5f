use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::tree::{AbstractionTree, NodeId};
use crate::error::{Error, Result};
use crate::provenance::{Annotation, ExampleRow, KExample, Monomial};

/// Identifies one occurrence of one annotation in one row: the row index, the
/// annotation's position in the row's canonical factor order, and which unit
/// of its power this is.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct OccurrenceKey {
    pub row: usize,
    pub position: usize,
    pub repetition: u32,
}

impl fmt::Display for OccurrenceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.row, self.position, self.repetition)
    }
}

/// Occurrences of `ex` whose annotation is a leaf of `tree`, with that leaf.
pub fn abstractable_occurrences(ex: &KExample, tree: &AbstractionTree) -> Vec<(OccurrenceKey, NodeId)> {
    let mut out = Vec::new();
    for (row, r) in ex.rows().iter().enumerate() {
        for (position, repetition, a) in r.provenance.occurrences() {
            if let Some(id) = tree.id(a.as_str()).filter(|&id| tree.is_leaf(id)) {
                out.push((
                    OccurrenceKey {
                        row,
                        position,
                        repetition,
                    },
                    id,
                ));
            }
        }
    }
    out
}

/// Per-occurrence assignment of leaf annotations to tree nodes. Occurrences
/// without an entry keep their annotation.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct AbstractionChoice {
    assignments: BTreeMap<OccurrenceKey, Annotation>,
}

impl AbstractionChoice {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn assign(&mut self, key: OccurrenceKey, node: impl Into<Annotation>) {
        self.assignments.insert(key, node.into());
    }

    pub fn with(mut self, row: usize, position: usize, node: &str) -> Self {
        self.assign(
            OccurrenceKey {
                row,
                position,
                repetition: 0,
            },
            node,
        );
        self
    }

    pub fn get(&self, key: &OccurrenceKey) -> Option<&Annotation> {
        self.assignments.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&OccurrenceKey, &Annotation)> {
        self.assignments.iter()
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Assigns every occurrence of annotation `leaf` in `ex` to `node`.
    pub fn assign_all(&mut self, ex: &KExample, leaf: &str, node: &str) {
        for (row, r) in ex.rows().iter().enumerate() {
            for (position, repetition, a) in r.provenance.occurrences() {
                if a.as_str() == leaf {
                    self.assign(
                        OccurrenceKey {
                            row,
                            position,
                            repetition,
                        },
                        node,
                    );
                }
            }
        }
    }

    /// Σ over assignments of depth(leaf) − depth(assigned node).
    pub fn edges_used(&self, ex: &KExample, tree: &AbstractionTree) -> Result<usize> {
        let leaves = occurrence_map(ex);
        let mut total = 0;
        for (key, node) in &self.assignments {
            let leaf = leaves.get(key).ok_or_else(|| missing(key))?;
            let (l, n) = resolve_pair(tree, leaf, node)?;
            total += tree.depth(l) - tree.depth(n);
        }
        Ok(total)
    }
}

impl fmt::Display for AbstractionChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, v)) in self.assignments.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k} -> {v}")?;
        }
        f.write_str("}")
    }
}

fn occurrence_map(ex: &KExample) -> BTreeMap<OccurrenceKey, &Annotation> {
    let mut out = BTreeMap::new();
    for (row, r) in ex.rows().iter().enumerate() {
        for (position, repetition, a) in r.provenance.occurrences() {
            out.insert(
                OccurrenceKey {
                    row,
                    position,
                    repetition,
                },
                a,
            );
        }
    }
    out
}

fn missing(key: &OccurrenceKey) -> Error {
    Error::InvalidExample(format!("no occurrence {key} in the example"))
}

fn resolve_pair(tree: &AbstractionTree, leaf: &Annotation, node: &Annotation) -> Result<(NodeId, NodeId)> {
    let invalid = || Error::InvalidAncestor {
        leaf: leaf.to_string(),
        node: node.to_string(),
    };
    let l = tree
        .id(leaf.as_str())
        .filter(|&id| tree.is_leaf(id))
        .ok_or_else(invalid)?;
    let n = tree.id(node.as_str()).ok_or_else(invalid)?;
    if !tree.is_ancestor_or_self(l, n) {
        return Err(invalid());
    }
    Ok((l, n))
}

/// A K-example whose factors may be tree node labels.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AbstractedKExample {
    example: KExample,
    choice: Option<AbstractionChoice>,
}

impl AbstractedKExample {
    /// Wraps an example read from a file, where factors are already labels.
    pub fn from_labels(example: KExample) -> Self {
        AbstractedKExample {
            example,
            choice: None,
        }
    }

    pub fn example(&self) -> &KExample {
        &self.example
    }

    pub fn rows(&self) -> &[ExampleRow] {
        self.example.rows()
    }

    pub fn arity(&self) -> usize {
        self.example.arity()
    }

    pub fn len(&self) -> usize {
        self.example.len()
    }

    pub fn is_empty(&self) -> bool {
        self.example.is_empty()
    }

    pub fn choice(&self) -> Option<&AbstractionChoice> {
        self.choice.as_ref()
    }

    /// Factor labels that are not inner nodes of `tree`.
    pub fn var_set(&self, tree: &AbstractionTree) -> BTreeSet<Annotation> {
        self.example
            .var_set()
            .into_iter()
            .filter(|a| !tree.is_inner_label(a.as_str()))
            .collect()
    }
}

impl fmt::Display for AbstractedKExample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.example.fmt(f)
    }
}

/// Replaces each assigned occurrence by its node label.
pub fn apply_abstraction(
    choice: &AbstractionChoice,
    ex: &KExample,
    tree: &AbstractionTree,
) -> Result<AbstractedKExample> {
    let leaves = occurrence_map(ex);
    for (key, node) in choice.iter() {
        let leaf = leaves.get(key).ok_or_else(|| missing(key))?;
        if !tree.is_leaf_label(leaf.as_str()) {
            if leaf != &node {
                return Err(Error::InvalidAncestor {
                    leaf: leaf.to_string(),
                    node: node.to_string(),
                });
            }
            continue;
        }
        resolve_pair(tree, leaf, node)?;
    }
    let rows = ex
        .rows()
        .iter()
        .enumerate()
        .map(|(row, r)| {
            let labels = r.provenance.occurrences().map(|(position, repetition, a)| {
                let key = OccurrenceKey {
                    row,
                    position,
                    repetition,
                };
                choice.get(&key).unwrap_or(a).clone()
            });
            ExampleRow {
                output: r.output.clone(),
                provenance: Monomial::product(labels).with_coefficient(r.provenance.coefficient()),
            }
        })
        .collect();
    Ok(AbstractedKExample {
        example: KExample::new(ex.arity(), rows)?,
        choice: Some(choice.clone()),
    })
}
