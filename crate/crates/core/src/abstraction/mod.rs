//! Abstraction trees, per-occurrence abstraction choices, concretizations and
//! loss of information.

mod choice;
mod concretize;
mod loss;
mod order;
mod tree;

pub use choice::{abstractable_occurrences, apply_abstraction, AbstractedKExample, AbstractionChoice, OccurrenceKey};
pub use concretize::{
    concretization_count, enumerate_concretizations, row_concretization_count, row_concretizations, Concretization,
    Concretizations,
};
pub use loss::{entropy, loss_of_abstracted, loss_of_information, node_entropy, LossModel};
pub use order::{enumerate_choices_sorted, ChoiceSpace, Odometer, RankedChoice, SortedChoices};
pub use tree::{check_compatible, is_compatible, AbstractionTree, NodeId, TreeNodeSpec};
