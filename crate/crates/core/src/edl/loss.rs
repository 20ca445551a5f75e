use crate::error::{Error, Result};
use crate::evidence::{argmax, Evidence};

/// Offset keeping the AvU log terms finite at `u = 0` and `u = 1`.
pub const AVU_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneHotLabel {
    class: usize,
    class_count: usize,
}

impl OneHotLabel {
    pub fn new(class: usize, class_count: usize) -> Result<Self> {
        if class >= class_count {
            return Err(Error::InvalidInput(format!(
                "label {class} out of range for {class_count} classes"
            )));
        }
        Ok(Self { class, class_count })
    }

    pub fn class(&self) -> usize {
        self.class
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.class_count];
        y[self.class] = 1.0;
        y
    }
}

fn check_dims(evidence: &Evidence, label: &OneHotLabel) -> Result<()> {
    if evidence.class_count() != label.class_count() {
        return Err(Error::DimensionMismatch {
            expected: label.class_count(),
            actual: evidence.class_count(),
            context: "evidence vs. label",
        });
    }
    Ok(())
}

/// `sum_k y_k (log S - log(e_k + 1))`, which reduces to `log S - log(e_c + 1)`.
pub fn edl_loss(evidence: &Evidence, label: &OneHotLabel) -> Result<f64> {
    check_dims(evidence, label)?;
    let e = evidence.values();
    let strength: f64 = e.iter().map(|v| v + 1.0).sum();
    Ok(strength.ln() - (e[label.class()] + 1.0).ln())
}

/// Derivative of [`edl_loss`] with respect to each evidence entry.
pub fn edl_loss_evidence_gradient(evidence: &Evidence, label: &OneHotLabel) -> Result<Vec<f64>> {
    check_dims(evidence, label)?;
    let e = evidence.values();
    let strength: f64 = e.iter().map(|v| v + 1.0).sum();
    let mut grad = vec![1.0 / strength; e.len()];
    grad[label.class()] -= 1.0 / (e[label.class()] + 1.0);
    Ok(grad)
}

/// Accuracy-versus-uncertainty penalty on the improved uncertainty.
///
/// Correct predictions pay `-log(1 - u + eps)`, mistakes pay `-log(u + eps)`.
pub fn avu_regularizer(improved_u: f64, is_correct: bool) -> f64 {
    if is_correct {
        -(1.0 - improved_u + AVU_EPSILON).ln()
    } else {
        -(improved_u + AVU_EPSILON).ln()
    }
}

/// d/du of [`avu_regularizer`], correctness held fixed.
pub fn avu_regularizer_derivative(improved_u: f64, is_correct: bool) -> f64 {
    if is_correct {
        1.0 / (1.0 - improved_u + AVU_EPSILON)
    } else {
        -1.0 / (improved_u + AVU_EPSILON)
    }
}

/// Per-sample objective `edl + lambda * avu` and its gradient with respect to evidence.
///
/// The AvU term depends only on the largest evidence entry through
/// `u = 1 / (1 + e_max)`; the correctness indicator is treated as a constant.
pub fn total_loss_and_evidence_gradient(
    evidence: &[f64],
    class: usize,
    avu_weight: f64,
) -> (f64, Vec<f64>) {
    let strength: f64 = evidence.iter().map(|v| v + 1.0).sum();
    let mut grad = vec![1.0 / strength; evidence.len()];
    grad[class] -= 1.0 / (evidence[class] + 1.0);
    let mut loss = strength.ln() - (evidence[class] + 1.0).ln();

    if avu_weight != 0.0 {
        let top = argmax(evidence);
        let alpha_max = evidence[top] + 1.0;
        let u = 1.0 / alpha_max;
        let correct = top == class;
        loss += avu_weight * avu_regularizer(u, correct);
        grad[top] += avu_weight * avu_regularizer_derivative(u, correct) * (-u * u);
    }
    (loss, grad)
}
