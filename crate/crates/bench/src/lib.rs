//! Shared fixtures for the criterion benchmarks in `benches/`.

use nalista_core::dictionary::{compute_dictionary, DictionaryOptions};
use nalista_core::problems::ProblemEnsemble;
use nalista_core::solvers::Operators;
use nalista_core::Batch;

/// Ensemble, operators and a batch of `b` observations at the given size.
pub fn fixture(m: usize, n: usize, s: f64, b: usize) -> (ProblemEnsemble, Operators, Batch) {
    let ens = ProblemEnsemble::generate(m, n, s, Some(40.0), 0).expect("ensemble");
    let dict = compute_dictionary(&ens.phi, &DictionaryOptions::default()).expect("dictionary");
    let ops = Operators::new(ens.phi.clone(), dict.w).expect("operators");
    let batch = ens.sample_batch(b, 1).expect("batch");
    (ens, ops, batch)
}
