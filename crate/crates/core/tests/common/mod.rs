#![allow(dead_code)]

use provabs::abstraction::{apply_abstraction, AbstractedKExample, ChoiceSpace, LossModel};
use provabs::io::{generate_workload, BranchingProfile, Workload, WorkloadSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tiny instance shapes: up to 3 relations of up to 8 tuples, trees of at
/// most 12 leaves and height at most 3, one or two atoms per row.
pub fn small_spec(seed: u64, rows: usize) -> WorkloadSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let relation_count = rng.gen_range(1..=3);
    let tuples_per_relation = rng.gen_range(3..=8);
    let atoms = rng.gen_range(1..=2);
    WorkloadSpec {
        relation_count,
        tuples_per_relation,
        domain_size: rng.gen_range(2..=4),
        attributes: 2,
        tree_leaf_count: rng.gen_range(4..=12).min(relation_count * tuples_per_relation),
        tree_height: rng.gen_range(1..=3),
        branching_profile: if rng.gen_bool(0.5) {
            BranchingProfile::Balanced
        } else {
            BranchingProfile::Random
        },
        query_atom_count: atoms,
        join_count: atoms - 1,
        example_rows: rows,
        seed,
    }
}

/// The instance for `seed`, or `None` when the spec is infeasible.
pub fn small_instance(seed: u64, rows: usize) -> Option<Workload> {
    generate_workload(&small_spec(seed, rows)).ok()
}

/// A random abstraction of the instance's example, if its concretization
/// count stays within `max_count`.
pub fn random_abstraction(w: &Workload, rng: &mut ChaCha8Rng, max_count: u128) -> Option<AbstractedKExample> {
    let space = ChoiceSpace::new(&w.example, &w.tree, &LossModel::Uniform).ok()?;
    let levels: Vec<usize> = space.max_levels().iter().map(|&m| rng.gen_range(0..=m)).collect();
    let abs = apply_abstraction(&space.choice(&levels), &w.example, &w.tree).ok()?;
    (provabs::abstraction::concretization_count(&abs, &w.tree) <= max_count).then_some(abs)
}
