#![allow(dead_code)]

pub mod oracle;

use proptest::prelude::*;

/// Evidence vectors of 2 to 6 classes spanning several orders of magnitude.
pub fn evidence() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![Just(0.0), 0.0..1.0, 0.0..50.0, 0.0..1e4],
        2..=6,
    )
}

/// Evidence vectors of a fixed class count.
pub fn evidence_k(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0..1.0, 0.0..50.0, 0.0..1e3], k)
}

/// Two evidence vectors sharing a class count.
pub fn evidence_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..=6).prop_flat_map(|k| (evidence_k(k), evidence_k(k)))
}

pub fn evidence_triple() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2usize..=6).prop_flat_map(|k| (evidence_k(k), evidence_k(k), evidence_k(k)))
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}
