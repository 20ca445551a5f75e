//! Branch inputs: what each network sees of an image, and the per-feature
//! standardization fitted on the training split.

use ndarray::{Array1, Array2, Axis};

use crate::error::{invalid, Error, Result};
use crate::spectrum::{frequency_map, ImageTensor};
use crate::synth::Sample;

/// Lower bound on a feature's standard deviation before it is inverted.
const MIN_STD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Spatial,
    Frequency,
}

impl Branch {
    /// Raw branch input: pixels for the spatial branch, the normalized
    /// log-magnitude spectrum for the frequency branch.
    pub fn raw_input(self, image: &ImageTensor) -> Vec<f64> {
        match self {
            Self::Spatial => image.pixels().to_vec(),
            Self::Frequency => frequency_map(image).values().to_vec(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Spatial => "spatial",
            Self::Frequency => "frequency",
        }
    }
}

/// Per-feature `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub inv_std: Array1<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            inv_std: Array1::ones(dim),
        }
    }

    /// Fits on the rows of `raw`; near-constant features get a floored deviation.
    pub fn fit(raw: &Array2<f64>) -> Result<Self> {
        if raw.nrows() == 0 {
            return Err(invalid("cannot fit a standardizer on zero rows"));
        }
        let mean = raw.mean_axis(Axis(0)).expect("non-empty");
        let inv_std = raw.std_axis(Axis(0), 0.0).mapv(|s| 1.0 / s.max(MIN_STD));
        Ok(Self { mean, inv_std })
    }

    pub fn from_parts(mean: Array1<f64>, inv_std: Array1<f64>) -> Result<Self> {
        if mean.len() != inv_std.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                actual: inv_std.len(),
                context: "standardizer mean vs. scale",
            });
        }
        if mean.iter().chain(inv_std.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("standardizer contains non-finite values"));
        }
        Ok(Self { mean, inv_std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: raw.len(),
                context: "standardizer input",
            });
        }
        Ok(raw
            .iter()
            .zip(self.mean.iter().zip(self.inv_std.iter()))
            .map(|(x, (m, s))| (x - m) * s)
            .collect())
    }

    pub fn apply_rows(&self, raw: &mut Array2<f64>) {
        for mut row in raw.outer_iter_mut() {
            row -= &self.mean;
            row *= &self.inv_std;
        }
    }
}

/// Stacks raw branch inputs of `samples` into a `samples x features` matrix.
pub fn raw_feature_matrix(samples: &[Sample], branch: Branch) -> Array2<f64> {
    let width = samples.first().map_or(0, |s| s.image.pixels().len());
    let mut m = Array2::zeros((samples.len(), width));
    for (mut row, s) in m.outer_iter_mut().zip(samples) {
        row.assign(&Array1::from(branch.raw_input(&s.image)));
    }
    m
}
