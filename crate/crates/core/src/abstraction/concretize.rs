use std::sync::OnceLock;

use super::choice::{AbstractedKExample, OccurrenceKey};
use super::tree::{AbstractionTree, NodeId};
use crate::error::{Error, Result};
use crate::provenance::{Annotation, ExampleRow, KExample, Monomial};

/// A leaf-level K-example obtained by reversing an abstraction.
#[derive(Debug)]
pub struct Concretization {
    example: KExample,
    leaves: Vec<(OccurrenceKey, Annotation)>,
    connected: OnceLock<bool>,
}

impl Concretization {
    pub fn new(example: KExample, leaves: Vec<(OccurrenceKey, Annotation)>) -> Self {
        Concretization {
            example,
            leaves,
            connected: OnceLock::new(),
        }
    }

    pub fn example(&self) -> &KExample {
        &self.example
    }

    pub fn rows(&self) -> &[ExampleRow] {
        self.example.rows()
    }

    /// Leaf chosen for each abstracted occurrence.
    pub fn leaves(&self) -> &[(OccurrenceKey, Annotation)] {
        &self.leaves
    }

    pub(crate) fn connectivity_cell(&self) -> &OnceLock<bool> {
        &self.connected
    }
}

impl Clone for Concretization {
    fn clone(&self) -> Self {
        let c = Concretization::new(self.example.clone(), self.leaves.clone());
        if let Some(&v) = self.connected.get() {
            let _ = c.connected.set(v);
        }
        c
    }
}

impl PartialEq for Concretization {
    fn eq(&self, other: &Self) -> bool {
        self.example == other.example
    }
}

/// Leaves an occurrence labelled `label` may stand for: the leaves under the
/// node, or the label itself when it is not an inner node.
fn slot_leaves(tree: &AbstractionTree, label: &Annotation) -> Option<NodeId> {
    tree.id(label.as_str()).filter(|&id| !tree.is_leaf(id))
}

/// Number of concretizations of one row.
pub fn row_concretization_count(row: &ExampleRow, tree: &AbstractionTree) -> u128 {
    row.provenance
        .occurrences()
        .filter_map(|(_, _, a)| slot_leaves(tree, a))
        .fold(1u128, |acc, id| acc.saturating_mul(tree.leaf_count(id) as u128))
}

/// Product over abstracted occurrences of the leaf count of the assigned node.
/// Saturates at `u128::MAX`.
pub fn concretization_count(abs: &AbstractedKExample, tree: &AbstractionTree) -> u128 {
    abs.rows()
        .iter()
        .fold(1u128, |acc, r| acc.saturating_mul(row_concretization_count(r, tree)))
}

struct Slot {
    key: OccurrenceKey,
    fixed: Option<Annotation>,
    leaves: Vec<Annotation>,
}

/// Odometer over per-occurrence leaf choices. The last slot varies fastest and
/// leaves are taken in tree preorder.
pub struct Concretizations {
    arity: usize,
    outputs: Vec<Vec<String>>,
    // Slots grouped per row, in occurrence order.
    slots: Vec<Vec<Slot>>,
    digits: Vec<usize>,
    done: bool,
}

impl Concretizations {
    fn new(abs: &AbstractedKExample, tree: &AbstractionTree, rows: usize) -> Self {
        let slots: Vec<Vec<Slot>> = abs.rows()[..rows]
            .iter()
            .enumerate()
            .map(|(row, r)| {
                r.provenance
                    .occurrences()
                    .map(|(position, repetition, a)| {
                        let key = OccurrenceKey {
                            row,
                            position,
                            repetition,
                        };
                        match slot_leaves(tree, a) {
                            Some(id) => Slot {
                                key,
                                fixed: None,
                                leaves: tree.leaves_under(id).iter().map(|&l| tree.label(l).clone()).collect(),
                            },
                            None => Slot {
                                key,
                                fixed: Some(a.clone()),
                                leaves: Vec::new(),
                            },
                        }
                    })
                    .collect()
            })
            .collect();
        let free = slots.iter().flatten().filter(|s| s.fixed.is_none()).count();
        Concretizations {
            arity: abs.arity(),
            outputs: abs.rows()[..rows].iter().map(|r| r.output.clone()).collect(),
            slots,
            digits: vec![0; free],
            done: false,
        }
    }

    fn current(&self) -> Concretization {
        let mut d = 0;
        let mut leaves = Vec::new();
        let rows = self
            .slots
            .iter()
            .zip(&self.outputs)
            .map(|(slots, output)| {
                let labels: Vec<Annotation> = slots
                    .iter()
                    .map(|s| match &s.fixed {
                        Some(a) => a.clone(),
                        None => {
                            let leaf = s.leaves[self.digits[d]].clone();
                            d += 1;
                            leaves.push((s.key, leaf.clone()));
                            leaf
                        }
                    })
                    .collect();
                ExampleRow {
                    output: output.clone(),
                    provenance: Monomial::product(labels),
                }
            })
            .collect();
        let example = KExample::new(self.arity, rows).expect("concretization keeps row shape");
        Concretization::new(example, leaves)
    }

    fn advance(&mut self) {
        let radices: Vec<usize> = self
            .slots
            .iter()
            .flatten()
            .filter(|s| s.fixed.is_none())
            .map(|s| s.leaves.len())
            .collect();
        for i in (0..self.digits.len()).rev() {
            self.digits[i] += 1;
            if self.digits[i] < radices[i] {
                return;
            }
            self.digits[i] = 0;
        }
        self.done = true;
    }
}

impl Iterator for Concretizations {
    type Item = Concretization;

    fn next(&mut self) -> Option<Concretization> {
        if self.done {
            return None;
        }
        let c = self.current();
        self.advance();
        Some(c)
    }
}

/// Enumerates the concretizations of `abs`, restricted to its first
/// `row_prefix` rows when given. Fails with `CapExceeded` before producing
/// anything when the count exceeds `cap`.
pub fn enumerate_concretizations(
    abs: &AbstractedKExample,
    tree: &AbstractionTree,
    row_prefix: Option<usize>,
    cap: u128,
) -> Result<Concretizations> {
    let rows = row_prefix.unwrap_or(abs.len()).min(abs.len());
    let count = abs.rows()[..rows]
        .iter()
        .fold(1u128, |acc, r| acc.saturating_mul(row_concretization_count(r, tree)));
    if count > cap {
        return Err(Error::CapExceeded {
            what: "concretizations",
            count,
            cap,
        });
    }
    Ok(Concretizations::new(abs, tree, rows))
}

/// Concretizations of a single row, as monomials, in the same order the full
/// enumeration uses for that row.
pub fn row_concretizations(row: &ExampleRow, tree: &AbstractionTree, cap: u128) -> Result<Vec<Monomial>> {
    let count = row_concretization_count(row, tree);
    if count > cap {
        return Err(Error::CapExceeded {
            what: "concretizations",
            count,
            cap,
        });
    }
    let single = KExample::new(row.output.len(), vec![row.clone()])?;
    Ok(Concretizations::new(&AbstractedKExample::from_labels(single), tree, 1)
        .map(|c| c.rows()[0].provenance.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::AbstractionChoice;
    use crate::fixtures;

    #[test]
    fn counts_of_the_running_example() {
        let t = fixtures::tree();
        assert_eq!(concretization_count(&fixtures::ex_abs1(), &t), 15);
        assert_eq!(concretization_count(&fixtures::ex_abs2(), &t), 20);
        assert_eq!(concretization_count(&fixtures::ex_abs3(), &t), 4);
        let id = crate::abstraction::apply_abstraction(&AbstractionChoice::identity(), &fixtures::ex_real(), &t).unwrap();
        assert_eq!(concretization_count(&id, &t), 1);
    }

    #[test]
    fn abs3_concretizations_in_order() {
        let t = fixtures::tree();
        let cs: Vec<_> = enumerate_concretizations(&fixtures::ex_abs3(), &t, None, 100)
            .unwrap()
            .map(|c| c.rows()[0].provenance.to_string())
            .collect();
        assert_eq!(cs, ["h1·h6·p1", "h1·i1·p1", "h1·i4·p1", "h1·i6·p1"]);
    }

    #[test]
    fn abs1_concretizations_cover_the_cross_product() {
        let t = fixtures::tree();
        let cs: Vec<_> = enumerate_concretizations(&fixtures::ex_abs1(), &t, None, 100)
            .unwrap()
            .collect();
        assert_eq!(cs.len(), 15);
        let fb = ["h1", "h3", "h4", "i2", "i5"];
        let li = ["h2", "h5", "i3"];
        let mut seen = std::collections::BTreeSet::new();
        for c in &cs {
            let a = &c.leaves()[0].1;
            let b = &c.leaves()[1].1;
            assert!(fb.contains(&a.as_str()) && li.contains(&b.as_str()));
            seen.insert((a.clone(), b.clone()));
        }
        assert_eq!(seen.len(), 15);
        let prefix = enumerate_concretizations(&fixtures::ex_abs1(), &t, Some(1), 100).unwrap();
        assert_eq!(prefix.count(), 5);
    }

    #[test]
    fn identity_concretization_is_the_example() {
        let t = fixtures::tree();
        let ex = fixtures::ex_real();
        let abs = AbstractedKExample::from_labels(ex.clone());
        let cs: Vec<_> = enumerate_concretizations(&abs, &t, None, 1).unwrap().collect();
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].example(), &ex);
    }

    #[test]
    fn cap_is_enforced() {
        let t = fixtures::tree();
        assert!(matches!(
            enumerate_concretizations(&fixtures::ex_abs1(), &t, None, 14),
            Err(Error::CapExceeded { count: 15, .. })
        ));
    }

    #[test]
    fn row_concretizations_match_full_enumeration() {
        let t = fixtures::tree();
        let abs = fixtures::ex_abs2();
        let r1 = row_concretizations(&abs.rows()[1], &t, 100).unwrap();
        let full: Vec<_> = enumerate_concretizations(&abs, &t, None, 100)
            .unwrap()
            .take(r1.len())
            .map(|c| c.rows()[1].provenance.clone())
            .collect();
        assert_eq!(r1, full);
    }
}
