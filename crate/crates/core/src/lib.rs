//! Provenance abstraction for query privacy.
//!
//! A K-example lists the outputs of a hidden conjunctive query together with
//! the provenance monomial of each output. Replacing annotations in those
//! monomials by ancestors in an abstraction tree hides which tuples were
//! used, and with them the query. This crate finds the abstraction that
//! loses the least information while leaving at least `k` candidate queries
//! (its privacy), and solves the dual problem of maximizing privacy under a
//! loss budget.

pub mod abstraction;
pub mod consistency;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod optimizer;
pub mod privacy;
pub mod provenance;
pub mod query;

pub use error::{Error, Result};
