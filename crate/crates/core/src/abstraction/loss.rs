use super::choice::{AbstractedKExample, AbstractionChoice};
use super::concretize::concretization_count;
use super::tree::{AbstractionTree, NodeId};
use crate::error::{Error, Result};
use crate::provenance::KExample;

/// How likely each concretization of an abstraction is.
#[derive(Clone, Debug, PartialEq)]
pub enum LossModel {
    /// All concretizations equally likely.
    Uniform,
    /// Each occurrence independently picks a leaf under its node with
    /// probability proportional to the leaf's weight.
    LeafWeighted,
    /// One probability per concretization, in enumeration order.
    Explicit(Vec<f64>),
}

impl LossModel {
    pub fn explicit(probabilities: Vec<f64>) -> Result<Self> {
        let m = LossModel::Explicit(probabilities);
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if let LossModel::Explicit(ps) = self {
            if ps.is_empty() {
                return Err(Error::InvalidDistribution("no probabilities".into()));
            }
            if let Some(p) = ps.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
                return Err(Error::InvalidDistribution(format!("probability {p} is not positive")));
            }
            let total: f64 = ps.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidDistribution(format!("probabilities sum to {total}")));
            }
        }
        Ok(())
    }

    /// True when raising any occurrence to an ancestor never lowers the loss.
    pub fn is_monotone(&self) -> bool {
        matches!(self, LossModel::Uniform)
    }
}

/// −Σ p ln p.
pub fn entropy(ps: &[f64]) -> f64 {
    -ps.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// Entropy of the normalized leaf weights under `node`.
pub fn node_entropy(tree: &AbstractionTree, node: NodeId) -> f64 {
    let leaves = tree.leaves_under(node);
    if leaves.len() == 1 {
        return 0.0;
    }
    let total: f64 = leaves.iter().map(|&l| tree.weight(l)).sum();
    let ps: Vec<f64> = leaves.iter().map(|&l| tree.weight(l) / total).collect();
    entropy(&ps)
}

/// ln of a product of leaf counts. Equal products give bit-identical values.
pub(crate) fn ln_product(counts: impl IntoIterator<Item = usize>) -> f64 {
    let mut product: u128 = 1;
    let mut logs = 0.0;
    let mut overflow = false;
    for c in counts {
        logs += (c as f64).ln();
        if !overflow {
            match product.checked_mul(c as u128) {
                Some(p) => product = p,
                None => overflow = true,
            }
        }
    }
    if overflow {
        logs
    } else {
        (product as f64).ln()
    }
}

/// Loss of the nodes standing in each occurrence of an abstracted example.
fn loss_of_nodes(nodes: &[NodeId], count: u128, tree: &AbstractionTree, model: &LossModel) -> Result<f64> {
    model.validate()?;
    match model {
        LossModel::Uniform => Ok(ln_product(nodes.iter().map(|&n| tree.leaf_count(n)))),
        LossModel::LeafWeighted => Ok(nodes.iter().map(|&n| node_entropy(tree, n)).sum()),
        LossModel::Explicit(ps) => {
            if ps.len() as u128 != count {
                return Err(Error::InvalidDistribution(format!(
                    "{} probabilities for {count} concretizations",
                    ps.len()
                )));
            }
            Ok(entropy(ps))
        }
    }
}

fn inner_nodes(abs: &AbstractedKExample, tree: &AbstractionTree) -> Vec<NodeId> {
    abs.rows()
        .iter()
        .flat_map(|r| r.provenance.occurrences().map(|(_, _, a)| a))
        .filter_map(|a| tree.id(a.as_str()).filter(|&id| !tree.is_leaf(id)))
        .collect()
}

/// Loss of information, in nats, of an abstracted example.
pub fn loss_of_abstracted(abs: &AbstractedKExample, tree: &AbstractionTree, model: &LossModel) -> Result<f64> {
    loss_of_nodes(&inner_nodes(abs, tree), concretization_count(abs, tree), tree, model)
}

/// Loss of information, in nats, of applying `choice` to `ex`.
pub fn loss_of_information(
    choice: &AbstractionChoice,
    ex: &KExample,
    tree: &AbstractionTree,
    model: &LossModel,
) -> Result<f64> {
    let abs = super::apply_abstraction(choice, ex, tree)?;
    loss_of_abstracted(&abs, tree, model)
}
