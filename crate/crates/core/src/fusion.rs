//! Dempster's rule of combination for two subjective-logic opinions.

use crate::error::{invalid, Error, Result};
use crate::evidence::{DirichletParams, Opinion};

/// Conflict mass at or above which two opinions are treated as irreconcilable.
pub const TOTAL_CONFLICT_LIMIT: f64 = 1.0 - 1e-12;

/// Result of combining two opinions.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedOpinion {
    pub beliefs: Vec<f64>,
    pub uncertainty: f64,
    /// Mass assigned to incompatible class pairs, `sum_{i != j} b_i^a b_j^b`.
    pub conflict: f64,
    /// Normalizer `1 / (1 - conflict)`.
    pub scale: f64,
}

impl FusedOpinion {
    pub fn class_count(&self) -> usize {
        self.beliefs.len()
    }

    pub fn to_opinion(&self) -> Result<Opinion> {
        Opinion::new(self.beliefs.clone(), self.uncertainty)
    }
}

pub fn dempster_combine(spatial: &Opinion, frequency: &Opinion) -> Result<FusedOpinion> {
    let k = spatial.class_count();
    if frequency.class_count() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: frequency.class_count(),
            context: "fused opinions must share the class count",
        });
    }
    let (bs, us) = (spatial.beliefs(), spatial.uncertainty());
    let (bf, uf) = (frequency.beliefs(), frequency.uncertainty());

    let mut conflict = 0.0;
    for (i, &a) in bs.iter().enumerate() {
        for (j, &b) in bf.iter().enumerate() {
            if i != j {
                conflict += a * b;
            }
        }
    }
    if conflict >= TOTAL_CONFLICT_LIMIT {
        return Err(Error::TotalConflict { conflict });
    }
    let scale = 1.0 / (1.0 - conflict);
    let beliefs = bs
        .iter()
        .zip(bf)
        .map(|(&a, &b)| scale * (a * b + a * uf + b * us))
        .collect();
    Ok(FusedOpinion {
        beliefs,
        uncertainty: scale * us * uf,
        conflict,
        scale,
    })
}

/// Left fold of pairwise [`dempster_combine`].
pub fn dempster_combine_all(opinions: &[Opinion]) -> Result<FusedOpinion> {
    let (first, rest) = opinions
        .split_first()
        .ok_or_else(|| invalid("no opinions to combine"))?;
    let mut acc = FusedOpinion {
        beliefs: first.beliefs().to_vec(),
        uncertainty: first.uncertainty(),
        conflict: 0.0,
        scale: 1.0,
    };
    for next in rest {
        let current = Opinion::new(acc.beliefs, acc.uncertainty)?;
        acc = dempster_combine(&current, next)?;
    }
    Ok(acc)
}

/// Joint Dirichlet from a fused opinion: `S = K / u`, `e_k = b_k S`, `alpha_k = e_k + 1`.
pub fn dirichlet_from_fused(fused: &FusedOpinion) -> Result<DirichletParams> {
    if !(fused.uncertainty > 0.0) {
        return Err(invalid(format!(
            "fused uncertainty must be positive, got {}",
            fused.uncertainty
        )));
    }
    let strength = fused.class_count() as f64 / fused.uncertainty;
    let alpha = fused.beliefs.iter().map(|b| b * strength + 1.0).collect();
    DirichletParams::with_strength(alpha, strength)
}
