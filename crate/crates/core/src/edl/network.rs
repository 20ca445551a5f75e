//! One-hidden-layer ReLU network with hand-written backpropagation.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::total_loss_and_evidence_gradient;
use crate::error::{invalid, Error, Result};
use crate::evidence::{EvidenceFunction, Logits};

#[derive(Debug, Clone, PartialEq)]
pub struct BranchNetwork {
    /// `hidden_dim x input_dim`
    pub weights_1: Array2<f64>,
    pub bias_1: Array1<f64>,
    /// `class_count x hidden_dim`
    pub weights_2: Array2<f64>,
    pub bias_2: Array1<f64>,
}

/// Gradients with the same shapes as the parameters of a [`BranchNetwork`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights_1: Array2<f64>,
    pub bias_1: Array1<f64>,
    pub weights_2: Array2<f64>,
    pub bias_2: Array1<f64>,
}

impl BranchNetwork {
    pub fn zeros(input_dim: usize, hidden_dim: usize, class_count: usize) -> Self {
        Self {
            weights_1: Array2::zeros((hidden_dim, input_dim)),
            bias_1: Array1::zeros(hidden_dim),
            weights_2: Array2::zeros((class_count, hidden_dim)),
            bias_2: Array1::zeros(class_count),
        }
    }

    /// Glorot-uniform weights `U[-s, s]`, `s = sqrt(6 / (fan_in + fan_out))`; zero biases.
    pub fn initialize(input_dim: usize, hidden_dim: usize, class_count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut glorot = |rows: usize, cols: usize| {
            let s = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-s..=s))
        };
        let weights_1 = glorot(hidden_dim, input_dim);
        let weights_2 = glorot(class_count, hidden_dim);
        Self {
            weights_1,
            bias_1: Array1::zeros(hidden_dim),
            weights_2,
            bias_2: Array1::zeros(class_count),
        }
    }

    /// Builds a network from explicit parameters, checking shapes and finiteness.
    pub fn from_parts(
        weights_1: Array2<f64>,
        bias_1: Array1<f64>,
        weights_2: Array2<f64>,
        bias_2: Array1<f64>,
    ) -> Result<Self> {
        let net = Self {
            weights_1,
            bias_1,
            weights_2,
            bias_2,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        let (h, _) = self.weights_1.dim();
        let (k, h2) = self.weights_2.dim();
        if self.bias_1.len() != h || h2 != h || self.bias_2.len() != k {
            return Err(invalid("inconsistent network parameter shapes"));
        }
        if k < 2 {
            return Err(invalid("network needs at least 2 output classes"));
        }
        if !self.parameters().all(|v| v.is_finite()) {
            return Err(invalid("network parameters contain non-finite values"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.weights_1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.weights_1.nrows()
    }

    pub fn class_count(&self) -> usize {
        self.weights_2.nrows()
    }

    /// All parameters in the order `weights_1, bias_1, weights_2, bias_2`, row-major.
    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights_1
            .iter()
            .chain(self.bias_1.iter())
            .chain(self.weights_2.iter())
            .chain(self.bias_2.iter())
            .copied()
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.weights_1
            .iter_mut()
            .chain(self.bias_1.iter_mut())
            .chain(self.weights_2.iter_mut())
            .chain(self.bias_2.iter_mut())
    }

    pub fn parameter_count(&self) -> usize {
        self.weights_1.len() + self.bias_1.len() + self.weights_2.len() + self.bias_2.len()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: input.len(),
                context: "network input",
            });
        }
        Ok(())
    }

    fn hidden_preactivation(&self, input: &[f64]) -> Array1<f64> {
        let x = ndarray::aview1(input);
        self.weights_1.dot(&x) + &self.bias_1
    }

    /// `weights_2 . relu(weights_1 . input + bias_1) + bias_2`
    pub fn forward(&self, input: &[f64]) -> Result<Logits> {
        self.check_input(input)?;
        let hidden = self.hidden_preactivation(input).mapv_into(relu);
        let logits = self.weights_2.dot(&hidden) + &self.bias_2;
        Logits::new(logits.to_vec())
    }

    /// Per-sample loss and analytic gradient of `edl + avu_weight * avu`.
    pub fn loss_gradient(
        &self,
        input: &[f64],
        class: usize,
        avu_weight: f64,
        evidence_fn: EvidenceFunction,
    ) -> Result<(f64, Gradients)> {
        self.check_input(input)?;
        if class >= self.class_count() {
            return Err(invalid(format!("label {class} out of range")));
        }
        let pre = self.hidden_preactivation(input);
        let hidden = pre.mapv(relu);
        let logits = self.weights_2.dot(&hidden) + &self.bias_2;
        let evidence: Vec<f64> = logits.iter().map(|&z| evidence_fn.apply(z)).collect();
        let (loss, de) = total_loss_and_evidence_gradient(&evidence, class, avu_weight);

        let dz: Array1<f64> = logits
            .iter()
            .zip(&de)
            .map(|(&z, &g)| g * evidence_fn.derivative(z))
            .collect();
        let dh = self.weights_2.t().dot(&dz);
        let dpre: Array1<f64> = dh
            .iter()
            .zip(pre.iter())
            .map(|(&g, &p)| if p > 0.0 { g } else { 0.0 })
            .collect();
        let x = ndarray::aview1(input);
        let outer = |a: &Array1<f64>, b: ndarray::ArrayView1<f64>| {
            let a2 = a.view().insert_axis(Axis(1));
            let b2 = b.insert_axis(Axis(0));
            a2.dot(&b2)
        };
        Ok((
            loss,
            Gradients {
                weights_1: outer(&dpre, x),
                bias_1: dpre,
                weights_2: outer(&dz, hidden.view()),
                bias_2: dz,
            },
        ))
    }

    /// Mean loss and mean gradient over a mini-batch (rows of `inputs`).
    pub fn batch_loss_gradient(
        &self,
        inputs: ArrayView2<f64>,
        classes: &[usize],
        avu_weight: f64,
        evidence_fn: EvidenceFunction,
    ) -> Result<(f64, Gradients)> {
        let (n, d) = inputs.dim();
        if d != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: d,
                context: "batch input width",
            });
        }
        if n == 0 || classes.len() != n {
            return Err(invalid("batch is empty or label count differs from rows"));
        }
        let pre = inputs.dot(&self.weights_1.t()) + &self.bias_1;
        let hidden = pre.mapv(relu);
        let logits = hidden.dot(&self.weights_2.t()) + &self.bias_2;

        let scale = 1.0 / n as f64;
        let mut total = 0.0;
        let mut dz = Array2::<f64>::zeros(logits.dim());
        for (i, (row, mut drow)) in logits.outer_iter().zip(dz.outer_iter_mut()).enumerate() {
            let evidence: Vec<f64> = row.iter().map(|&z| evidence_fn.apply(z)).collect();
            let (loss, de) = total_loss_and_evidence_gradient(&evidence, classes[i], avu_weight);
            total += loss;
            for ((d, &z), g) in drow.iter_mut().zip(row.iter()).zip(de) {
                *d = g * evidence_fn.derivative(z) * scale;
            }
        }
        let mut dpre = dz.dot(&self.weights_2);
        Zip::from(&mut dpre).and(&pre).for_each(|g, &p| {
            if p <= 0.0 {
                *g = 0.0;
            }
        });
        Ok((
            total * scale,
            Gradients {
                weights_1: dpre.t().dot(&inputs),
                bias_1: dpre.sum_axis(Axis(0)),
                weights_2: dz.t().dot(&hidden),
                bias_2: dz.sum_axis(Axis(0)),
            },
        ))
    }

    /// In-place `params -= step * grads`.
    pub fn apply_gradients(&mut self, grads: &Gradients, step: f64) {
        self.weights_1.scaled_add(-step, &grads.weights_1);
        self.bias_1.scaled_add(-step, &grads.bias_1);
        self.weights_2.scaled_add(-step, &grads.weights_2);
        self.bias_2.scaled_add(-step, &grads.bias_2);
    }
}

impl Gradients {
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights_1
            .iter()
            .chain(self.bias_1.iter())
            .chain(self.weights_2.iter())
            .chain(self.bias_2.iter())
            .copied()
    }
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}
