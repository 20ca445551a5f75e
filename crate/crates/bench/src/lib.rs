//! Fixtures shared by the benchmarks.

use dualev_core::edl::BranchNetwork;
use dualev_core::synth::{real_image, sample_rng, IMAGE_SIZE};
use dualev_core::{opinion_from_evidence, Evidence, ImageTensor, Opinion};
use ndarray::Array2;

/// Two opinions over `k` classes with uneven evidence.
pub fn opinion_pair(k: usize) -> (Opinion, Opinion) {
    let a: Vec<f64> = (0..k).map(|i| (i * 7 % 5) as f64 + 0.5).collect();
    let b: Vec<f64> = (0..k).map(|i| (i * 3 % 4) as f64 * 2.0).collect();
    (
        opinion_from_evidence(&Evidence::new(a).unwrap()),
        opinion_from_evidence(&Evidence::new(b).unwrap()),
    )
}

pub fn image(seed: u64) -> ImageTensor {
    real_image(&mut sample_rng(seed, 0))
}

/// A freshly initialized branch at the default size.
pub fn network(classes: usize) -> BranchNetwork {
    BranchNetwork::initialize(IMAGE_SIZE * IMAGE_SIZE, 128, classes, 7)
}

/// `n` image rows with labels cycling over `classes`.
pub fn batch(n: usize, classes: usize) -> (Array2<f64>, Vec<usize>) {
    let d = IMAGE_SIZE * IMAGE_SIZE;
    let mut x = Array2::zeros((n, d));
    for (i, mut row) in x.rows_mut().into_iter().enumerate() {
        row.assign(&ndarray::ArrayView1::from(image(i as u64).pixels()));
    }
    (x, (0..n).map(|i| i % classes).collect())
}
