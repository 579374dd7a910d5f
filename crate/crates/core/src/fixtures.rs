//! The running example: a small people/hobbies/interests database, its
//! abstraction tree, the hidden query's K-example and a few abstractions.

use crate::abstraction::{AbstractedKExample, AbstractionChoice, AbstractionTree, LossModel};
use crate::io::{database_from_str, distribution_from_str, example_from_str, tree_from_str};
use crate::provenance::{KDatabase, KExample};
use crate::query::{parse_queries, ConjunctiveQuery};

pub const DATABASE: &str = include_str!("../fixtures/db.json");
pub const TREE: &str = include_str!("../fixtures/tree.json");
pub const EX_REAL: &str = include_str!("../fixtures/ex_real.json");
pub const EX_FALSE1: &str = include_str!("../fixtures/ex_false1.json");
pub const EX_FALSE2: &str = include_str!("../fixtures/ex_false2.json");
pub const EX_ABS1: &str = include_str!("../fixtures/ex_abs1.json");
pub const EX_ABS2: &str = include_str!("../fixtures/ex_abs2.json");
pub const EX_ABS3: &str = include_str!("../fixtures/ex_abs3.json");
pub const QUERIES: &str = include_str!("../fixtures/queries.dl");
pub const ABS3_DISTRIBUTION: &str = include_str!("../fixtures/abs3_distribution.json");

pub fn database() -> KDatabase {
    database_from_str(DATABASE).expect("fixture database")
}

pub fn tree() -> AbstractionTree {
    tree_from_str(TREE).expect("fixture tree")
}

fn example(text: &str) -> KExample {
    example_from_str(text).expect("fixture example")
}

/// Output of the hidden query with its provenance.
pub fn ex_real() -> KExample {
    example(EX_REAL)
}

pub fn ex_false1() -> KExample {
    example(EX_FALSE1)
}

pub fn ex_false2() -> KExample {
    example(EX_FALSE2)
}

pub fn ex_abs1() -> AbstractedKExample {
    AbstractedKExample::from_labels(example(EX_ABS1))
}

pub fn ex_abs2() -> AbstractedKExample {
    AbstractedKExample::from_labels(example(EX_ABS2))
}

pub fn ex_abs3() -> AbstractedKExample {
    AbstractedKExample::from_labels(example(EX_ABS3))
}

// Factors sort as h < i < p, so position 0 is the hobby and 1 the interest.

/// h1 to Facebook and h2 to LinkedIn.
pub fn choice_abs1() -> AbstractionChoice {
    AbstractionChoice::identity()
        .with(0, 0, "Facebook")
        .with(1, 0, "LinkedIn")
}

/// i1 to WikiLeaks and i2 to Facebook.
pub fn choice_abs2() -> AbstractionChoice {
    AbstractionChoice::identity()
        .with(0, 1, "WikiLeaks")
        .with(1, 1, "Facebook")
}

/// i1 to WikiLeaks.
pub fn choice_abs3() -> AbstractionChoice {
    AbstractionChoice::identity().with(0, 1, "WikiLeaks")
}

fn query(i: usize) -> ConjunctiveQuery {
    parse_queries(QUERIES).expect("fixture queries")[i].clone()
}

/// People who dance and like music.
pub fn q_real() -> ConjunctiveQuery {
    query(0)
}

/// People who like trips and music.
pub fn q_false1() -> ConjunctiveQuery {
    query(1)
}

/// People who dance and like parties.
pub fn q_false2() -> ConjunctiveQuery {
    query(2)
}

/// People who dance, with any interest.
pub fn q_general() -> ConjunctiveQuery {
    query(3)
}

/// Probabilities 0.1, 0.2, 0.3, 0.4 over the four concretizations of `ex_abs3`.
pub fn abs3_distribution() -> LossModel {
    distribution_from_str(ABS3_DISTRIBUTION).expect("fixture distribution")
}
