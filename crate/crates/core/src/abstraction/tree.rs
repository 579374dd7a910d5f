use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::provenance::{Annotation, KDatabase};

/// Nested node description, as stored in tree files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeNodeSpec {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TreeNodeSpec>,
}

impl TreeNodeSpec {
    pub fn leaf(label: impl Into<String>) -> Self {
        TreeNodeSpec {
            label: label.into(),
            weight: None,
            children: Vec::new(),
        }
    }

    pub fn node(label: impl Into<String>, children: Vec<TreeNodeSpec>) -> Self {
        TreeNodeSpec {
            label: label.into(),
            weight: None,
            children,
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    label: Annotation,
    parent: Option<usize>,
    children: Vec<usize>,
    depth: usize,
    weight: f64,
    // Range into `leaf_order`.
    leaves: (usize, usize),
}

/// A rooted tree with unique labels whose leaves are tuple annotations.
///
/// Nodes are stored in preorder, so the leaves under any node form a
/// contiguous run of the preorder leaf sequence.
#[derive(Clone, Debug)]
pub struct AbstractionTree {
    nodes: Vec<Node>,
    by_label: HashMap<Annotation, usize>,
    leaf_order: Vec<usize>,
}

pub type NodeId = usize;

impl AbstractionTree {
    pub fn from_spec(spec: &TreeNodeSpec) -> Result<Self> {
        let mut tree = AbstractionTree {
            nodes: Vec::new(),
            by_label: HashMap::new(),
            leaf_order: Vec::new(),
        };
        tree.push(spec, None, 0)?;
        Ok(tree)
    }

    fn push(&mut self, spec: &TreeNodeSpec, parent: Option<usize>, depth: usize) -> Result<usize> {
        if spec.label.is_empty() {
            return Err(Error::InvalidTree("empty node label".into()));
        }
        let weight = spec.weight.unwrap_or(1.0);
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::InvalidTree(format!(
                "node `{}` has non-positive weight {weight}",
                spec.label
            )));
        }
        let label = Annotation::new(spec.label.clone());
        let id = self.nodes.len();
        if self.by_label.insert(label.clone(), id).is_some() {
            return Err(Error::InvalidTree(format!("duplicate label `{label}`")));
        }
        let first_leaf = self.leaf_order.len();
        self.nodes.push(Node {
            label,
            parent,
            children: Vec::new(),
            depth,
            weight,
            leaves: (first_leaf, first_leaf),
        });
        if spec.children.is_empty() {
            self.leaf_order.push(id);
        }
        for child in &spec.children {
            let c = self.push(child, Some(id), depth + 1)?;
            self.nodes[id].children.push(c);
        }
        self.nodes[id].leaves.1 = self.leaf_order.len();
        Ok(id)
    }

    /// Builds a tree from `(parent, child)` label pairs.
    pub fn from_edges(root: &str, edges: &[(&str, &str)]) -> Result<Self> {
        fn build(label: &str, kids: &HashMap<&str, Vec<&str>>, depth: usize) -> Result<TreeNodeSpec> {
            if depth > kids.len() + 1 {
                return Err(Error::InvalidTree("cycle in edge list".into()));
            }
            let children = kids
                .get(label)
                .map(|cs| cs.iter().map(|c| build(c, kids, depth + 1)).collect())
                .transpose()?
                .unwrap_or_default();
            Ok(TreeNodeSpec::node(label, children))
        }
        let mut kids: HashMap<&str, Vec<&str>> = HashMap::new();
        for (p, c) in edges {
            kids.entry(p).or_default().push(c);
        }
        let tree = Self::from_spec(&build(root, &kids, 0)?)?;
        if tree.len() != edges.len() + 1 {
            return Err(Error::InvalidTree("edge list is not a single rooted tree".into()));
        }
        Ok(tree)
    }

    pub fn to_spec(&self) -> TreeNodeSpec {
        self.spec_of(self.root())
    }

    fn spec_of(&self, id: NodeId) -> TreeNodeSpec {
        let n = &self.nodes[id];
        TreeNodeSpec {
            label: n.label.to_string(),
            weight: (n.weight != 1.0).then_some(n.weight),
            children: n.children.iter().map(|&c| self.spec_of(c)).collect(),
        }
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn id(&self, label: &str) -> Option<NodeId> {
        self.by_label.get(label).copied()
    }

    pub fn label(&self, id: NodeId) -> &Annotation {
        &self.nodes[id].label
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id].parent
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].children
    }

    pub fn depth(&self, id: NodeId) -> usize {
        self.nodes[id].depth
    }

    pub fn weight(&self, id: NodeId) -> f64 {
        self.nodes[id].weight
    }

    pub fn height(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.nodes[id].children.is_empty()
    }

    pub fn is_leaf_label(&self, label: &str) -> bool {
        self.id(label).is_some_and(|id| self.is_leaf(id))
    }

    pub fn is_inner_label(&self, label: &str) -> bool {
        self.id(label).is_some_and(|id| !self.is_leaf(id))
    }

    /// Number of leaves in the subtree rooted at `id`; 1 for a leaf.
    pub fn leaf_count(&self, id: NodeId) -> usize {
        let (a, b) = self.nodes[id].leaves;
        b - a
    }

    /// Leaf node ids under `id`, in preorder.
    pub fn leaves_under(&self, id: NodeId) -> &[NodeId] {
        let (a, b) = self.nodes[id].leaves;
        &self.leaf_order[a..b]
    }

    pub fn leaves(&self) -> &[NodeId] {
        &self.leaf_order
    }

    pub fn leaf_labels(&self) -> impl Iterator<Item = &Annotation> {
        self.leaf_order.iter().map(|&id| &self.nodes[id].label)
    }

    /// `id` followed by its ancestors up to the root.
    pub fn path_to_root(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path
    }

    /// `desc ≤_T anc`: `anc` is `desc` or one of its ancestors.
    pub fn is_ancestor_or_self(&self, desc: NodeId, anc: NodeId) -> bool {
        let (a, b) = self.nodes[anc].leaves;
        let (c, d) = self.nodes[desc].leaves;
        if self.nodes[desc].depth < self.nodes[anc].depth {
            return false;
        }
        // Preorder ranges nest; leaves have a one-element range.
        a <= c && d <= b && {
            let mut cur = desc;
            loop {
                if cur == anc {
                    break true;
                }
                match self.nodes[cur].parent {
                    Some(p) => cur = p,
                    None => break false,
                }
            }
        }
    }
}

/// Checks that no inner label annotates a database tuple. Every leaf must
/// resolve to a tuple; a dangling leaf is an error rather than `false`.
pub fn is_compatible(tree: &AbstractionTree, db: &KDatabase) -> Result<bool> {
    for leaf in tree.leaf_labels() {
        if !db.contains(leaf.as_str()) {
            return Err(Error::LeafNotInDatabase(leaf.to_string()));
        }
    }
    Ok((0..tree.len())
        .filter(|&id| !tree.is_leaf(id))
        .all(|id| !db.contains(tree.label(id).as_str())))
}

/// Like [`is_compatible`], but an incompatible tree is an error naming the
/// offending inner node.
pub fn check_compatible(tree: &AbstractionTree, db: &KDatabase) -> Result<()> {
    if is_compatible(tree, db)? {
        return Ok(());
    }
    let bad = (0..tree.len())
        .find(|&id| !tree.is_leaf(id) && db.contains(tree.label(id).as_str()))
        .map(|id| tree.label(id).to_string())
        .unwrap_or_default();
    Err(Error::Incompatible(bad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn running_example_tree_shape() {
        let t = fixtures::tree();
        assert_eq!(t.len(), 17);
        assert_eq!(t.height(), 3);
        let fb = t.id("Facebook").unwrap();
        assert_eq!(t.leaf_count(fb), 5);
        assert_eq!(t.leaf_count(t.id("LinkedIn").unwrap()), 3);
        assert_eq!(t.leaf_count(t.id("WikiLeaks").unwrap()), 4);
        assert_eq!(t.leaf_count(t.id("Social Network").unwrap()), 8);
        assert_eq!(t.leaf_count(t.root()), 12);
        assert_eq!(t.leaf_count(t.id("h1").unwrap()), 1);
        let leaves: Vec<_> = t
            .leaves_under(t.id("WikiLeaks").unwrap())
            .iter()
            .map(|&i| t.label(i).to_string())
            .collect();
        assert_eq!(leaves, ["h6", "i1", "i4", "i6"]);
        let path: Vec<_> = t
            .path_to_root(t.id("h1").unwrap())
            .into_iter()
            .map(|i| t.label(i).to_string())
            .collect();
        assert_eq!(path, ["h1", "Facebook", "Social Network", "*"]);
        assert!(t.is_ancestor_or_self(t.id("h1").unwrap(), fb));
        assert!(t.is_ancestor_or_self(fb, fb));
        assert!(!t.is_ancestor_or_self(t.id("h2").unwrap(), fb));
        assert!(!t.is_ancestor_or_self(fb, t.id("h1").unwrap()));
    }

    #[test]
    fn compatibility() {
        let db = fixtures::database();
        assert!(is_compatible(&fixtures::tree(), &db).unwrap());

        let clash = AbstractionTree::from_edges("root", &[("root", "h1"), ("h1", "h2")]).unwrap();
        assert!(!is_compatible(&clash, &db).unwrap());
        assert!(matches!(check_compatible(&clash, &db), Err(Error::Incompatible(l)) if l == "h1"));

        let dangling = AbstractionTree::from_edges("root", &[("root", "h1"), ("root", "zzz")]).unwrap();
        assert!(matches!(
            is_compatible(&dangling, &db),
            Err(Error::LeafNotInDatabase(l)) if l == "zzz"
        ));
    }

    #[test]
    fn rejects_bad_trees() {
        assert!(AbstractionTree::from_edges("r", &[("r", "a"), ("r", "a")]).is_err());
        assert!(AbstractionTree::from_edges("r", &[("r", "a"), ("x", "b")]).is_err());
        let mut spec = TreeNodeSpec::node("r", vec![TreeNodeSpec::leaf("a")]);
        spec.children[0].weight = Some(0.0);
        assert!(AbstractionTree::from_spec(&spec).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let t = fixtures::tree();
        let again = AbstractionTree::from_spec(&t.to_spec()).unwrap();
        assert_eq!(again.to_spec(), t.to_spec());
    }
}
