use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::choice::{abstractable_occurrences, AbstractionChoice, OccurrenceKey};
use super::loss::{ln_product, node_entropy, LossModel};
use super::tree::{AbstractionTree, NodeId};
use crate::error::{Error, Result};
use crate::provenance::KExample;

/// The space of abstraction choices of one example: every abstractable
/// occurrence picks a level on its path to the root (level 0 is the leaf).
#[derive(Clone, Debug)]
pub struct ChoiceSpace {
    keys: Vec<OccurrenceKey>,
    // Leaf-to-root path per occurrence.
    paths: Vec<Vec<NodeId>>,
    counts: Vec<Vec<usize>>,
    entropies: Option<Vec<Vec<f64>>>,
    labels: Vec<Vec<String>>,
}

/// A choice as a level vector plus its sort key.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedChoice {
    pub levels: Vec<usize>,
    pub edges: usize,
    pub loi: f64,
}

impl RankedChoice {
    fn cmp_key(&self, other: &Self) -> Ordering {
        self.edges
            .cmp(&other.edges)
            .then(self.loi.total_cmp(&other.loi))
            .then_with(|| self.levels.cmp(&other.levels))
    }
}

impl ChoiceSpace {
    pub fn new(ex: &KExample, tree: &AbstractionTree, model: &LossModel) -> Result<Self> {
        if let LossModel::Explicit(_) = model {
            return Err(Error::InvalidConfig(
                "an explicit distribution describes one abstraction, not a search space".into(),
            ));
        }
        let occ = abstractable_occurrences(ex, tree);
        let paths: Vec<Vec<NodeId>> = occ.iter().map(|&(_, leaf)| tree.path_to_root(leaf)).collect();
        let counts = paths
            .iter()
            .map(|p| p.iter().map(|&n| tree.leaf_count(n)).collect())
            .collect();
        let entropies = matches!(model, LossModel::LeafWeighted).then(|| {
            paths
                .iter()
                .map(|p| p.iter().map(|&n| node_entropy(tree, n)).collect())
                .collect()
        });
        let labels = paths
            .iter()
            .map(|p| p.iter().map(|&n| tree.label(n).to_string()).collect())
            .collect();
        Ok(ChoiceSpace {
            keys: occ.into_iter().map(|(k, _)| k).collect(),
            paths,
            counts,
            entropies,
            labels,
        })
    }

    /// Number of abstractable occurrences.
    pub fn dimensions(&self) -> usize {
        self.keys.len()
    }

    pub fn keys(&self) -> &[OccurrenceKey] {
        &self.keys
    }

    /// Highest level of each coordinate.
    pub fn max_levels(&self) -> Vec<usize> {
        self.paths.iter().map(|p| p.len() - 1).collect()
    }

    /// Π (path length + 1), saturating.
    pub fn total(&self) -> u128 {
        self.paths
            .iter()
            .fold(1u128, |acc, p| acc.saturating_mul(p.len() as u128))
    }

    pub fn loi(&self, levels: &[usize]) -> f64 {
        match &self.entropies {
            None => ln_product(levels.iter().enumerate().map(|(j, &l)| self.counts[j][l])),
            Some(h) => levels.iter().enumerate().map(|(j, &l)| h[j][l]).sum(),
        }
    }

    pub fn rank(&self, levels: Vec<usize>) -> RankedChoice {
        RankedChoice {
            edges: levels.iter().sum(),
            loi: self.loi(&levels),
            levels,
        }
    }

    pub fn choice(&self, levels: &[usize]) -> AbstractionChoice {
        let mut c = AbstractionChoice::identity();
        for (j, &l) in levels.iter().enumerate() {
            if l > 0 {
                c.assign(self.keys[j], self.labels[j][l].as_str());
            }
        }
        c
    }

    /// Lazily yields every choice by (edges, loi, level vector).
    pub fn sorted(&self) -> SortedChoices<'_> {
        let mut heap = BinaryHeap::new();
        heap.push(HeapEntry(self.rank(vec![0; self.dimensions()])));
        SortedChoices { space: self, heap }
    }

    /// Every choice in plain odometer order, last coordinate fastest.
    pub fn odometer(&self) -> Odometer {
        Odometer {
            max: self.max_levels(),
            next: Some(vec![0; self.dimensions()]),
        }
    }
}

struct HeapEntry(RankedChoice);

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.cmp_key(&self.0)
    }
}

/// Best-first enumeration. A vector's parent is the vector with its last
/// nonzero coordinate decremented, so children only raise coordinates at or
/// after the last nonzero one. Every vector has exactly one parent with
/// strictly fewer edges, hence pops come out in key order.
pub struct SortedChoices<'a> {
    space: &'a ChoiceSpace,
    heap: BinaryHeap<HeapEntry>,
}

impl Iterator for SortedChoices<'_> {
    type Item = RankedChoice;

    fn next(&mut self) -> Option<RankedChoice> {
        pop_next(self.space, &mut self.heap)
    }
}

fn pop_next(space: &ChoiceSpace, heap: &mut BinaryHeap<HeapEntry>) -> Option<RankedChoice> {
    let HeapEntry(top) = heap.pop()?;
    let start = top.levels.iter().rposition(|&l| l > 0).unwrap_or(0);
    for j in start..top.levels.len() {
        if top.levels[j] + 1 < space.paths[j].len() {
            let mut child = top.levels.clone();
            child[j] += 1;
            heap.push(HeapEntry(space.rank(child)));
        }
    }
    Some(top)
}

pub struct Odometer {
    max: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for Odometer {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let cur = self.next.take()?;
        let mut succ = cur.clone();
        for i in (0..succ.len()).rev() {
            if succ[i] < self.max[i] {
                succ[i] += 1;
                self.next = Some(succ);
                return Some(cur);
            }
            succ[i] = 0;
        }
        Some(cur)
    }
}

/// Every abstraction choice of `ex`, ordered by edges used, then loss, then
/// level vector.
pub fn enumerate_choices_sorted(
    ex: &KExample,
    tree: &AbstractionTree,
    model: &LossModel,
) -> Result<impl Iterator<Item = AbstractionChoice>> {
    let space = ChoiceSpace::new(ex, tree, model)?;
    let mut heap = BinaryHeap::new();
    heap.push(HeapEntry(space.rank(vec![0; space.dimensions()])));
    Ok(std::iter::from_fn(move || {
        pop_next(&space, &mut heap).map(|r| space.choice(&r.levels))
    }))
}
