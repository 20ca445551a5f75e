//! Dirichlet evidence calculus.
//!
//! A branch produces unbounded [`Logits`]; an evidence function maps them to
//! non-negative [`Evidence`], which parameterizes a Dirichlet with
//! `alpha = evidence + 1`. From the Dirichlet we read class probabilities,
//! a subjective-logic [`Opinion`], and two uncertainty scores:
//!
//! * standard: `K / S`, driven by the *mean* evidence,
//! * improved: `1 / max(alpha)`, driven by the *maximum* evidence.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Tolerance for the sum-to-one rule on opinions.
pub const SUM_TO_ONE_TOL: f64 = 1e-9;

/// Logits above this are clamped before `exp` in [`EvidenceFunction::Exp`].
const EXP_CLAMP: f64 = 60.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Logits(Vec<f64>);

impl Logits {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(invalid(format!("need at least 2 logits, got {}", values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("logit {i} is not finite ({})", values[i])));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn class_count(&self) -> usize {
        self.0.len()
    }

    /// Index of the largest logit, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evidence(Vec<f64>);

impl Evidence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("evidence vector is empty"));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(invalid(format!("evidence {i} is not finite ({v})")));
            }
            if v < 0.0 {
                return Err(invalid(format!("evidence {i} is negative ({v})")));
            }
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn class_count(&self) -> usize {
        self.0.len()
    }
}

/// Concentration parameters of a Dirichlet together with its strength.
///
/// The strength is stored rather than recomputed: for fused opinions it is
/// `K / u` and only agrees with `sum(alpha)` up to rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams {
    alpha: Vec<f64>,
    strength: f64,
}

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        let strength = alpha.iter().sum();
        Self::with_strength(alpha, strength)
    }

    pub fn with_strength(alpha: Vec<f64>, strength: f64) -> Result<Self> {
        if alpha.is_empty() {
            return Err(invalid("alpha vector is empty"));
        }
        for (i, &a) in alpha.iter().enumerate() {
            if !(a.is_finite() && a >= 1.0) {
                return Err(invalid(format!("alpha {i} must be finite and >= 1, got {a}")));
            }
        }
        let sum: f64 = alpha.iter().sum();
        if !strength.is_finite() || (strength - sum).abs() > 1e-9 * sum {
            return Err(invalid(format!(
                "strength {strength} does not match sum of alpha {sum}"
            )));
        }
        Ok(Self { alpha, strength })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn class_count(&self) -> usize {
        self.alpha.len()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        predictive_probabilities(self)
    }
}

/// Belief masses plus an uncertainty mass, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Opinion {
    beliefs: Vec<f64>,
    uncertainty: f64,
}

impl Opinion {
    pub fn new(beliefs: Vec<f64>, uncertainty: f64) -> Result<Self> {
        if beliefs.is_empty() {
            return Err(invalid("opinion has no classes"));
        }
        if beliefs.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(invalid("belief masses must be finite and non-negative"));
        }
        if !(uncertainty.is_finite() && uncertainty >= 0.0) {
            return Err(invalid(format!("uncertainty must be non-negative, got {uncertainty}")));
        }
        let total: f64 = beliefs.iter().sum::<f64>() + uncertainty;
        if (total - 1.0).abs() > SUM_TO_ONE_TOL {
            return Err(invalid(format!("beliefs + uncertainty = {total}, expected 1")));
        }
        Ok(Self {
            beliefs,
            uncertainty,
        })
    }

    /// Zero belief everywhere, full uncertainty.
    pub fn vacuous(class_count: usize) -> Self {
        Self {
            beliefs: vec![0.0; class_count],
            uncertainty: 1.0,
        }
    }

    pub fn beliefs(&self) -> &[f64] {
        &self.beliefs
    }

    pub fn uncertainty(&self) -> f64 {
        self.uncertainty
    }

    pub fn class_count(&self) -> usize {
        self.beliefs.len()
    }

    /// Inverts `b_k = e_k / S`, `u = K / S`.
    pub fn to_evidence(&self) -> Result<Evidence> {
        if self.uncertainty <= 0.0 {
            return Err(invalid("cannot recover evidence from a zero-uncertainty opinion"));
        }
        let strength = self.class_count() as f64 / self.uncertainty;
        Evidence::new(self.beliefs.iter().map(|b| b * strength).collect())
    }
}

/// Maps logits to non-negative evidence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvidenceFunction {
    #[default]
    Softplus,
    Exp,
    Relu,
}

impl EvidenceFunction {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Self::Softplus => softplus(x),
            Self::Exp => x.min(EXP_CLAMP).exp(),
            Self::Relu => x.max(0.0),
        }
    }

    /// Derivative with respect to the logit.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Self::Softplus => sigmoid(x),
            Self::Exp => {
                if x > EXP_CLAMP {
                    0.0
                } else {
                    x.exp()
                }
            }
            Self::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn evidence(self, logits: &Logits) -> Evidence {
        Evidence(logits.values().iter().map(|&x| self.apply(x)).collect())
    }

    pub(crate) fn code(self) -> u32 {
        match self {
            Self::Softplus => 0,
            Self::Exp => 1,
            Self::Relu => 2,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Self::Softplus),
            1 => Some(Self::Exp),
            2 => Some(Self::Relu),
            _ => None,
        }
    }
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus_evidence(logits: &Logits) -> Evidence {
    EvidenceFunction::Softplus.evidence(logits)
}

pub fn dirichlet_from_evidence(evidence: &Evidence) -> DirichletParams {
    let alpha: Vec<f64> = evidence.values().iter().map(|e| e + 1.0).collect();
    let strength = alpha.iter().sum();
    DirichletParams { alpha, strength }
}

pub fn opinion_from_evidence(evidence: &Evidence) -> Opinion {
    let k = evidence.class_count() as f64;
    let strength: f64 = evidence.values().iter().map(|e| e + 1.0).sum();
    Opinion {
        beliefs: evidence.values().iter().map(|e| e / strength).collect(),
        uncertainty: k / strength,
    }
}

pub fn predictive_probabilities(params: &DirichletParams) -> Vec<f64> {
    params.alpha.iter().map(|a| a / params.strength).collect()
}

/// `K / S`, equivalently `1 / (1 + mean(evidence))`.
pub fn standard_uncertainty(params: &DirichletParams) -> f64 {
    params.class_count() as f64 / params.strength
}

/// `1 / max(alpha)`, equivalently `1 / (1 + max(evidence))`.
pub fn improved_uncertainty(params: &DirichletParams) -> f64 {
    1.0 / max_of(&params.alpha)
}

pub fn predicted_class(params: &DirichletParams) -> usize {
    argmax(&params.alpha)
}

/// Lowest index wins ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

impl TryFrom<Vec<f64>> for Evidence {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(v: &[f64]) -> Evidence {
        Evidence::new(v.to_vec()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn softplus_examples() {
        let ln2 = 2f64.ln();
        let e = softplus_evidence(&Logits::new(vec![0.0, 0.0, 0.0]).unwrap());
        assert!(close(e.values(), &[ln2; 3], 1e-12));

        let e = softplus_evidence(&Logits::new(vec![100.0, 0.0, -100.0]).unwrap());
        assert_eq!(e.values()[0], 100.0);
        assert!((e.values()[1] - ln2).abs() < 1e-12);
        assert!(e.values()[2] > 0.0 && (e.values()[2] - 3.720075976020836e-44).abs() < 1e-56);

        // log(1 + e) and log(1 + 1/e)
        let e = softplus_evidence(&Logits::new(vec![1.0, -1.0]).unwrap());
        assert!(close(e.values(), &[1.31326, 0.31326], 1e-5));
    }

    #[test]
    fn softplus_branches_are_continuous() {
        for x in [-30.0f64, 30.0] {
            let below = softplus(x - 1e-9);
            let above = softplus(x + 1e-9);
            assert!((below - above).abs() < 1e-8, "jump at {x}");
        }
    }

    #[test]
    fn logits_reject_non_finite() {
        assert!(Logits::new(vec![0.0, f64::NAN]).is_err());
        assert!(Logits::new(vec![f64::INFINITY, 0.0]).is_err());
        assert!(Logits::new(vec![1.0]).is_err());
    }

    #[test]
    fn evidence_rejects_negative() {
        assert!(Evidence::new(vec![1.0, -0.5]).is_err());
        assert!(DirichletParams::new(vec![0.5, 1.0]).is_err());
    }

    #[test]
    fn dirichlet_examples() {
        let d = dirichlet_from_evidence(&ev(&[0.0, 0.0, 0.0]));
        assert_eq!(d.alpha(), &[1.0, 1.0, 1.0]);
        assert_eq!(d.strength(), 3.0);
        let d = dirichlet_from_evidence(&ev(&[4.0, 0.0, 0.0]));
        assert_eq!(d.alpha(), &[5.0, 1.0, 1.0]);
        assert_eq!(d.strength(), 7.0);
        let d = dirichlet_from_evidence(&ev(&[1.0, 2.0, 3.0]));
        assert_eq!(d.alpha(), &[2.0, 3.0, 4.0]);
        assert_eq!(d.strength(), 9.0);
    }

    #[test]
    fn opinion_examples() {
        let o = opinion_from_evidence(&ev(&[0.0, 0.0, 0.0]));
        assert_eq!(o, Opinion::vacuous(3));

        let o = opinion_from_evidence(&ev(&[4.0, 0.0, 0.0]));
        assert!(close(o.beliefs(), &[4.0 / 7.0, 0.0, 0.0], 1e-15));
        assert!((o.uncertainty() - 3.0 / 7.0).abs() < 1e-15);

        let o = opinion_from_evidence(&ev(&[1.0; 4]));
        assert!(close(o.beliefs(), &[0.125; 4], 1e-15));
        assert!((o.uncertainty() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn probability_and_uncertainty_examples() {
        let p = |a: &[f64]| DirichletParams::new(a.to_vec()).unwrap();
        assert!(close(&p(&[1.0, 1.0, 1.0]).probabilities(), &[1.0 / 3.0; 3], 1e-15));
        assert!(close(
            &p(&[5.0, 1.0, 1.0]).probabilities(),
            &[5.0 / 7.0, 1.0 / 7.0, 1.0 / 7.0],
            1e-15
        ));
        assert!(close(
            &p(&[2.0, 3.0, 4.0]).probabilities(),
            &[2.0 / 9.0, 3.0 / 9.0, 4.0 / 9.0],
            1e-15
        ));

        assert_eq!(standard_uncertainty(&p(&[1.0, 1.0, 1.0])), 1.0);
        assert!((standard_uncertainty(&p(&[5.0, 1.0, 1.0])) - 3.0 / 7.0).abs() < 1e-15);
        assert!((standard_uncertainty(&p(&[11.0, 11.0])) - 2.0 / 22.0).abs() < 1e-15);

        assert_eq!(improved_uncertainty(&p(&[1.0, 1.0, 1.0])), 1.0);
        assert_eq!(improved_uncertainty(&p(&[5.0, 1.0, 1.0])), 0.2);
        assert_eq!(improved_uncertainty(&p(&[2.0, 3.0, 4.0])), 0.25);
    }

    #[test]
    fn argmax_ties_go_low() {
        let p = |a: &[f64]| DirichletParams::new(a.to_vec()).unwrap();
        assert_eq!(predicted_class(&p(&[5.0, 1.0, 1.0])), 0);
        assert_eq!(predicted_class(&p(&[2.0, 2.0, 1.0])), 0);
        assert_eq!(predicted_class(&p(&[1.0, 1.0, 9.0])), 2);
    }

    #[test]
    fn opinion_round_trip() {
        let e = ev(&[0.3, 7.5, 0.0, 12.25]);
        let back = opinion_from_evidence(&e).to_evidence().unwrap();
        for (a, b) in e.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn evidence_function_variants() {
        assert_eq!(EvidenceFunction::Relu.apply(-2.0), 0.0);
        assert_eq!(EvidenceFunction::Relu.apply(2.0), 2.0);
        assert!((EvidenceFunction::Exp.apply(1.0) - 1f64.exp()).abs() < 1e-15);
        assert!(EvidenceFunction::Exp.apply(1e6).is_finite());
        assert!((EvidenceFunction::Softplus.derivative(0.0) - 0.5).abs() < 1e-15);
        for f in [EvidenceFunction::Softplus, EvidenceFunction::Exp, EvidenceFunction::Relu] {
            assert_eq!(EvidenceFunction::from_code(f.code()), Some(f));
        }
    }
}
