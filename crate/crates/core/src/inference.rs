//! Joint, marginal and conditional proportions over a boundary/day slice of
//! documents, plus moving-average smoothing.
//!
//! Hard voting counts documents every model classifies as positive (strictly
//! above 0.5). Soft voting averages the product of per-model probabilities,
//! treating the attribute models as independent. The reported estimate is
//! `α·soft + (1 − α)·hard`.

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::corpus::FeatureVector;
use crate::error::{LlpError, Result};
use crate::model::ModelParameters;

/// Soft-voting weight for attribute pairs.
pub const DEFAULT_PAIR_ALPHA: f64 = 0.75;
/// Soft-voting weight for single (regional) attributes.
pub const DEFAULT_SINGLE_ALPHA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySlice {
    pub boundary_id: String,
    pub day: NaiveDate,
    pub document_ids: Vec<String>,
    pub features: Vec<FeatureVector>,
}

impl BoundarySlice {
    pub fn new(boundary_id: impl Into<String>, day: NaiveDate, document_ids: Vec<String>, features: Vec<FeatureVector>) -> Result<Self> {
        if document_ids.len() != features.len() {
            return Err(LlpError::Invalid("slice ids and features differ in length".into()));
        }
        Ok(Self {
            boundary_id: boundary_id.into(),
            day,
            document_ids,
            features,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    fn probabilities(&self, model: &ModelParameters) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(LlpError::Empty(format!("slice {} on {} has no documents", self.boundary_id, self.day)));
        }
        self.features.iter().map(|x| model.predict(x)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointEstimate {
    pub boundary_id: String,
    pub day: NaiveDate,
    pub attribute_a: String,
    /// `None` for a single-attribute (marginal) estimate.
    pub attribute_b: Option<String>,
    pub hard: f64,
    pub soft: f64,
    pub blended: f64,
    pub alpha: f64,
    pub n_documents: usize,
}

fn check_pair(a: &ModelParameters, b: &ModelParameters) -> Result<()> {
    match (&a.vocab_fingerprint, &b.vocab_fingerprint) {
        (Some(x), Some(y)) if x != y => Err(LlpError::VocabularyMismatch {
            model: x.clone(),
            other: y.clone(),
        }),
        _ => Ok(()),
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(LlpError::Invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(())
}

fn hard(pa: &[f64], pb: &[f64]) -> f64 {
    let hits = pa.iter().zip(pb).filter(|(a, b)| **a > 0.5 && **b > 0.5).count();
    hits as f64 / pa.len() as f64
}

fn soft(pa: &[f64], pb: &[f64]) -> f64 {
    pa.iter().zip(pb).map(|(a, b)| a * b).sum::<f64>() / pa.len() as f64
}

pub fn hard_vote_joint(slice: &BoundarySlice, a: &ModelParameters, b: &ModelParameters) -> Result<f64> {
    check_pair(a, b)?;
    Ok(hard(&slice.probabilities(a)?, &slice.probabilities(b)?))
}

pub fn soft_vote_joint(slice: &BoundarySlice, a: &ModelParameters, b: &ModelParameters) -> Result<f64> {
    check_pair(a, b)?;
    Ok(soft(&slice.probabilities(a)?, &slice.probabilities(b)?))
}

pub fn blended_joint(slice: &BoundarySlice, a: &ModelParameters, b: &ModelParameters, alpha: f64) -> Result<f64> {
    Ok(estimate_joint(slice, a, b, alpha)?.blended)
}

/// Hard, soft and blended joint estimates for the attribute pair.
pub fn estimate_joint(slice: &BoundarySlice, a: &ModelParameters, b: &ModelParameters, alpha: f64) -> Result<JointEstimate> {
    check_alpha(alpha)?;
    check_pair(a, b)?;
    let pa = slice.probabilities(a)?;
    let pb = slice.probabilities(b)?;
    let (h, s) = (hard(&pa, &pb), soft(&pa, &pb));
    Ok(JointEstimate {
        boundary_id: slice.boundary_id.clone(),
        day: slice.day,
        attribute_a: a.attribute.clone(),
        attribute_b: Some(b.attribute.clone()),
        hard: h,
        soft: s,
        blended: alpha * s + (1.0 - alpha) * h,
        alpha,
        n_documents: slice.len(),
    })
}

/// Single-attribute estimate: the joint with a second factor fixed to 1.
pub fn estimate_marginal(slice: &BoundarySlice, model: &ModelParameters, alpha: f64) -> Result<JointEstimate> {
    check_alpha(alpha)?;
    let p = slice.probabilities(model)?;
    let ones = vec![1.0; p.len()];
    let (h, s) = (hard(&p, &ones), soft(&p, &ones));
    Ok(JointEstimate {
        boundary_id: slice.boundary_id.clone(),
        day: slice.day,
        attribute_a: model.attribute.clone(),
        attribute_b: None,
        hard: h,
        soft: s,
        blended: alpha * s + (1.0 - alpha) * h,
        alpha,
        n_documents: slice.len(),
    })
}

pub fn marginal(slice: &BoundarySlice, model: &ModelParameters, alpha: f64) -> Result<f64> {
    Ok(estimate_marginal(slice, model, alpha)?.blended)
}

/// Chain rule: `P(A | B) = P(A, B) / P(B)`, clamped to `[0, 1]`.
///
/// Among the quotient and its neighbouring doubles, the one whose product
/// with `marginal` rounds back to `joint` is preferred, so the round trip
/// is exact whenever some double allows it.
pub fn conditional(joint: f64, marginal: f64) -> Result<f64> {
    if marginal == 0.0 {
        return Err(LlpError::UndefinedConditional);
    }
    if !(marginal > 0.0) || !(joint >= 0.0) {
        return Err(LlpError::Invalid(format!("invalid joint {joint} / marginal {marginal}")));
    }
    if joint > marginal + 1e-9 {
        return Err(LlpError::Invalid(format!("joint {joint} exceeds marginal {marginal}")));
    }
    let q = (joint / marginal).clamp(0.0, 1.0);
    if q * marginal == joint {
        return Ok(q);
    }
    // a small marginal moves the product by less than one ulp per step of q
    let (mut down, mut up) = (q, q);
    for _ in 0..16 {
        (down, up) = (down.next_down(), up.next_up());
        if let Some(c) = [down, up].into_iter().find(|c| (0.0..=1.0).contains(c) && c * marginal == joint) {
            return Ok(c);
        }
    }
    Ok(q)
}

/// Trailing moving average over calendar days: each output is the mean of
/// inputs dated within `(d − window_days, d]`. Early points use whatever is
/// available.
pub fn moving_average(series: &[(NaiveDate, f64)], window_days: u32) -> Result<Vec<(NaiveDate, f64)>> {
    if window_days == 0 {
        return Err(LlpError::Invalid("window must be at least one day".into()));
    }
    if series.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(LlpError::Invalid("series dates must be strictly increasing".into()));
    }
    let span = Duration::days(i64::from(window_days));
    let mut out = Vec::with_capacity(series.len());
    let mut start = 0;
    for (i, &(day, _)) in series.iter().enumerate() {
        while series[start].0 + span <= day {
            start += 1;
        }
        let sum: f64 = series[start..=i].iter().map(|(_, v)| v).sum();
        out.push((day, sum / (i - start + 1) as f64));
    }
    Ok(out)
}

/// Document-count-weighted average of per-boundary estimates.
pub fn aggregate_estimates(boundary_id: &str, estimates: &[JointEstimate]) -> Result<JointEstimate> {
    let first = estimates
        .first()
        .ok_or_else(|| LlpError::Empty("no estimates to aggregate".into()))?;
    let total: usize = estimates.iter().map(|e| e.n_documents).sum();
    if total == 0 {
        return Err(LlpError::Empty("estimates cover no documents".into()));
    }
    let avg = |f: fn(&JointEstimate) -> f64| estimates.iter().map(|e| f(e) * e.n_documents as f64).sum::<f64>() / total as f64;
    Ok(JointEstimate {
        boundary_id: boundary_id.to_string(),
        day: first.day,
        attribute_a: first.attribute_a.clone(),
        attribute_b: first.attribute_b.clone(),
        hard: avg(|e| e.hard),
        soft: avg(|e| e.soft),
        blended: avg(|e| e.blended),
        alpha: first.alpha,
        n_documents: total,
    })
}
