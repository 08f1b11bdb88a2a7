//! Trained coefficient vectors and their serialized form.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::corpus::{FeatureVector, Vocabulary};
use crate::error::{LlpError, Result};
use crate::{ridge, wlr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ridge,
    Wlr,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Ridge => "ridge",
            ModelKind::Wlr => "wlr",
        })
    }
}

impl FromStr for ModelKind {
    type Err = LlpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ridge" => Ok(ModelKind::Ridge),
            "wlr" => Ok(ModelKind::Wlr),
            other => Err(LlpError::Invalid(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

/// Coefficients `θ` (terms followed by the intercept) plus what they were
/// trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    pub attribute: String,
    pub kind: ModelKind,
    pub trained_on: Option<DateWindow>,
    pub vocab_fingerprint: Option<String>,
    pub theta: Vec<f64>,
}

impl ModelParameters {
    pub fn new(kind: ModelKind, theta: Vec<f64>) -> Self {
        Self {
            attribute: String::new(),
            kind,
            trained_on: None,
            vocab_fingerprint: None,
            theta,
        }
    }

    pub fn with_attribute(mut self, attribute: impl Into<String>) -> Self {
        self.attribute = attribute.into();
        self
    }

    pub fn with_window(mut self, start: NaiveDate, end: NaiveDate) -> Self {
        self.trained_on = Some(DateWindow { start, end });
        self
    }

    /// Binds the model to `vocab`; fails if the dimensions disagree.
    pub fn with_vocabulary(mut self, vocab: &Vocabulary) -> Result<Self> {
        if vocab.dimension() != self.theta.len() {
            return Err(LlpError::DimensionMismatch {
                expected: self.theta.len(),
                actual: vocab.dimension(),
            });
        }
        self.vocab_fingerprint = Some(vocab.fingerprint());
        Ok(self)
    }

    pub fn dimension(&self) -> usize {
        self.theta.len()
    }

    /// Checks that `vocab` is the vocabulary this model was trained against.
    pub fn check_vocabulary(&self, vocab: &Vocabulary) -> Result<()> {
        if vocab.dimension() != self.theta.len() {
            return Err(LlpError::DimensionMismatch {
                expected: self.theta.len(),
                actual: vocab.dimension(),
            });
        }
        match &self.vocab_fingerprint {
            Some(fp) if *fp != vocab.fingerprint() => Err(LlpError::VocabularyMismatch {
                model: fp.clone(),
                other: vocab.fingerprint(),
            }),
            _ => Ok(()),
        }
    }

    /// Instance-level probability of the positive class, using the link
    /// appropriate to the model kind.
    pub fn predict(&self, x: &FeatureVector) -> Result<f64> {
        match self.kind {
            ModelKind::Ridge => ridge::ridge_predict(x, self),
            ModelKind::Wlr => wlr::wlr_predict(x, self),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Rescales each vector to unit Euclidean norm.
pub fn normalize_coefficients<K: Clone + Ord>(
    theta_by_class: &std::collections::BTreeMap<K, Vec<f64>>,
) -> Result<std::collections::BTreeMap<K, Vec<f64>>> {
    theta_by_class
        .iter()
        .map(|(k, v)| Ok((k.clone(), unit_vector(v)?)))
        .collect()
}

pub(crate) fn unit_vector(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(LlpError::Invalid("cannot normalize a zero vector".into()));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn normalize_examples() {
        let mut m = BTreeMap::new();
        m.insert("d", vec![3.0, 4.0]);
        m.insert("u", vec![0.0, 1.0]);
        let out = normalize_coefficients(&m).unwrap();
        assert_eq!(out["d"], vec![0.6, 0.8]);
        assert_eq!(out["u"], vec![0.0, 1.0]);

        let scaled: BTreeMap<_, _> = m.iter().map(|(k, v)| (*k, v.iter().map(|x| x * 10.0).collect())).collect();
        assert_eq!(normalize_coefficients(&scaled).unwrap(), out);

        m.insert("z", vec![0.0, 0.0]);
        assert!(normalize_coefficients(&m).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = ModelParameters::new(ModelKind::Wlr, vec![0.25, -1.5, 3.0])
            .with_attribute("democratic")
            .with_window(
                NaiveDate::from_ymd_opt(2016, 10, 25).unwrap(),
                NaiveDate::from_ymd_opt(2016, 11, 1).unwrap(),
            );
        assert_eq!(ModelParameters::from_json(&m.to_json().unwrap()).unwrap(), m);
    }

    #[test]
    fn vocabulary_binding() {
        let vocab = Vocabulary::from_terms(vec!["a".into(), "b".into()]).unwrap();
        let other = Vocabulary::from_terms(vec!["a".into(), "c".into()]).unwrap();
        let m = ModelParameters::new(ModelKind::Ridge, vec![0.0; 3]).with_vocabulary(&vocab).unwrap();
        assert!(m.check_vocabulary(&vocab).is_ok());
        assert!(matches!(m.check_vocabulary(&other), Err(LlpError::VocabularyMismatch { .. })));
        assert!(ModelParameters::new(ModelKind::Ridge, vec![0.0; 2]).with_vocabulary(&vocab).is_err());
    }
}
