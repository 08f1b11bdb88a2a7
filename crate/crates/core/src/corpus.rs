//! Document ingestion: tokenization, vocabulary construction and sparse
//! term-frequency features.
//!
//! Every feature vector carries an intercept slot at position `|terms|`
//! whose value is always 1, so both the ridge and the logistic models get a
//! bias term through the ordinary coefficient vector.

use std::collections::{BTreeMap, HashMap, HashSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LlpError, Result};

/// Default vocabulary size cap.
pub const DEFAULT_MAX_TERMS: usize = 17_500;
/// Default minimum document frequency for a term to enter the vocabulary.
pub const DEFAULT_MIN_DOC_COUNT: usize = 2;

/// A single short text (e.g. a tweet) tagged with its day and region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub date: NaiveDate,
    pub region: String,
    pub text: String,
}

impl Document {
    pub fn new(
        id: impl Into<String>,
        date: NaiveDate,
        region: impl Into<String>,
        text: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            date,
            region: region.into(),
            text: text.into(),
        }
    }
}

/// Maps each sub-unit region (county) to its parent unit (state).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionTable {
    parents: BTreeMap<String, String>,
}

impl RegionTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, region: impl Into<String>, parent: impl Into<String>) {
        self.parents.insert(region.into(), parent.into());
    }

    pub fn parent(&self, region: &str) -> Result<&str> {
        self.parents
            .get(region)
            .map(String::as_str)
            .ok_or_else(|| LlpError::UnknownRegion(region.to_string()))
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.parents.iter().map(|(r, p)| (r.as_str(), p.as_str()))
    }
}

impl<R: Into<String>, P: Into<String>> FromIterator<(R, P)> for RegionTable {
    fn from_iter<T: IntoIterator<Item = (R, P)>>(iter: T) -> Self {
        let mut table = RegionTable::new();
        for (r, p) in iter {
            table.insert(r, p);
        }
        table
    }
}

/// Splits on whitespace, lowercases, drops mentions and URLs, keeps hashtags
/// and strips surrounding punctuation.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().filter_map(clean_token).collect()
}

fn clean_token(raw: &str) -> Option<String> {
    let lower = raw.to_lowercase();
    let token = lower.trim_start_matches(|c: char| !c.is_alphanumeric() && c != '#' && c != '@');
    if token.starts_with('@') || is_url(token) {
        return None;
    }
    let trim = |s: &str| s.trim_matches(|c: char| !c.is_alphanumeric()).to_string();
    let cleaned = match token.strip_prefix('#') {
        Some(body) => {
            let body = trim(body);
            if body.is_empty() {
                return None;
            }
            format!("#{body}")
        }
        None => trim(token),
    };
    (!cleaned.is_empty()).then_some(cleaned)
}

fn is_url(token: &str) -> bool {
    token.starts_with("http://") || token.starts_with("https://")
}

/// Ordered term list with a reserved trailing intercept column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_terms(terms: Vec<String>) -> Result<Self> {
        if terms.is_empty() {
            return Err(LlpError::Empty("vocabulary has no terms".into()));
        }
        let mut index = HashMap::with_capacity(terms.len());
        for (pos, term) in terms.iter().enumerate() {
            if index.insert(term.clone(), pos).is_some() {
                return Err(LlpError::Invalid(format!("duplicate vocabulary term `{term}`")));
            }
        }
        Ok(Self { terms, index })
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Number of feature columns including the intercept.
    pub fn dimension(&self) -> usize {
        self.terms.len() + 1
    }

    pub fn intercept(&self) -> usize {
        self.terms.len()
    }

    pub fn position(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// SHA-256 over the ordered terms; binds model coefficients to columns.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for term in &self.terms {
            hasher.update(term.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

/// Keeps the `max_terms` tokens with the highest document frequency, among
/// those seen in at least `min_doc_count` documents. Ties go to the
/// lexicographically smaller token.
pub fn build_vocabulary<'a, I>(token_lists: I, max_terms: usize, min_doc_count: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a [String]>,
{
    if max_terms == 0 || min_doc_count == 0 {
        return Err(LlpError::Invalid("max_terms and min_doc_count must be positive".into()));
    }
    let mut doc_freq: HashMap<&str, usize> = HashMap::new();
    let mut n_docs = 0usize;
    for tokens in token_lists {
        n_docs += 1;
        let unique: HashSet<&str> = tokens.iter().map(String::as_str).collect();
        for tok in unique {
            *doc_freq.entry(tok).or_default() += 1;
        }
    }
    if n_docs == 0 {
        return Err(LlpError::Empty("corpus has no documents".into()));
    }
    let mut ranked: Vec<(&str, usize)> = doc_freq
        .into_iter()
        .filter(|&(_, df)| df >= min_doc_count)
        .collect();
    if ranked.is_empty() {
        return Err(LlpError::EmptyVocabulary { min_doc_count });
    }
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_terms);
    Vocabulary::from_terms(ranked.into_iter().map(|(t, _)| t.to_string()).collect())
}

/// Sparse non-negative feature vector. Entries are sorted by position and
/// zeros are never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    entries: Vec<(usize, f64)>,
    dimension: usize,
}

impl FeatureVector {
    /// Builds a vector from `(position, value)` pairs; duplicates are summed.
    pub fn from_entries(dimension: usize, entries: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut map: BTreeMap<usize, f64> = BTreeMap::new();
        for (pos, value) in entries {
            if pos >= dimension {
                return Err(LlpError::DimensionMismatch {
                    expected: dimension,
                    actual: pos + 1,
                });
            }
            if !(value >= 0.0) || !value.is_finite() {
                return Err(LlpError::Invalid(format!("feature value {value} at {pos}")));
            }
            *map.entry(pos).or_default() += value;
        }
        Ok(Self {
            entries: map.into_iter().filter(|&(_, v)| v > 0.0).collect(),
            dimension,
        })
    }

    pub(crate) fn from_dense(dense: &[f64]) -> Self {
        Self {
            entries: dense
                .iter()
                .enumerate()
                .filter(|(_, &v)| v > 0.0)
                .map(|(i, &v)| (i, v))
                .collect(),
            dimension: dense.len(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn get(&self, pos: usize) -> f64 {
        self.entries
            .binary_search_by_key(&pos, |&(p, _)| p)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    /// Value of the trailing intercept column.
    pub fn intercept(&self) -> f64 {
        self.get(self.dimension - 1)
    }

    /// L1 norm over term columns only.
    pub fn term_mass(&self) -> f64 {
        let intercept = self.dimension - 1;
        self.entries.iter().filter(|(p, _)| *p != intercept).map(|(_, v)| v).sum()
    }

    pub fn dot(&self, dense: &[f64]) -> Result<f64> {
        self.check_dimension(dense.len())?;
        Ok(self.entries.iter().map(|&(p, v)| v * dense[p]).sum())
    }

    /// `acc += scale * self`
    pub fn add_scaled_to(&self, scale: f64, acc: &mut [f64]) {
        for &(p, v) in &self.entries {
            acc[p] += scale * v;
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dimension];
        self.add_scaled_to(1.0, &mut dense);
        dense
    }

    pub(crate) fn check_dimension(&self, dim: usize) -> Result<()> {
        if dim != self.dimension {
            return Err(LlpError::DimensionMismatch {
                expected: self.dimension,
                actual: dim,
            });
        }
        Ok(())
    }
}

/// Term-count vector over `vocab`; out-of-vocabulary tokens are dropped.
pub fn featurize<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> FeatureVector {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for tok in tokens {
        if let Some(pos) = vocab.position(tok.as_ref()) {
            *counts.entry(pos).or_default() += 1.0;
        }
    }
    counts.insert(vocab.intercept(), 1.0);
    FeatureVector {
        entries: counts.into_iter().collect(),
        dimension: vocab.dimension(),
    }
}

/// Element-wise arithmetic mean.
pub fn mean_feature_vector(vectors: &[FeatureVector]) -> Result<FeatureVector> {
    let weighted: Vec<(&FeatureVector, f64)> = vectors.iter().map(|v| (v, 1.0)).collect();
    weighted_mean_feature_vector(&weighted)
}

/// `Σ w·v / Σ w`. With integer-valued weights the intercept stays exactly 1.
pub fn weighted_mean_feature_vector(vectors: &[(&FeatureVector, f64)]) -> Result<FeatureVector> {
    let first = vectors
        .first()
        .ok_or_else(|| LlpError::Empty("cannot average an empty list of feature vectors".into()))?;
    let dim = first.0.dimension();
    let mut acc = vec![0.0; dim];
    let mut total = 0.0;
    for &(v, w) in vectors {
        v.check_dimension(dim)?;
        if !(w > 0.0) {
            return Err(LlpError::Invalid(format!("non-positive weight {w}")));
        }
        v.add_scaled_to(w, &mut acc);
        total += w;
    }
    for a in &mut acc {
        *a /= total;
    }
    Ok(FeatureVector::from_dense(&acc))
}

/// Documents plus their cached token lists and the region table.
#[derive(Debug, Clone)]
pub struct Corpus {
    documents: Vec<Document>,
    tokens: Vec<Vec<String>>,
    regions: RegionTable,
}

impl Corpus {
    /// Validates ids (nonempty, unique) and region membership, then tokenizes.
    pub fn new(documents: Vec<Document>, regions: RegionTable) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            if doc.id.is_empty() {
                return Err(LlpError::Invalid("document with empty id".into()));
            }
            if !seen.insert(doc.id.as_str()) {
                return Err(LlpError::Invalid(format!("duplicate document id `{}`", doc.id)));
            }
            regions.parent(&doc.region)?;
        }
        let tokens = documents.iter().map(|d| tokenize(&d.text)).collect();
        Ok(Self {
            documents,
            tokens,
            regions,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn tokens(&self, index: usize) -> &[String] {
        &self.tokens[index]
    }

    pub fn regions(&self) -> &RegionTable {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Indices of documents dated within `start..=end`, in corpus order.
    pub fn window(&self, start: NaiveDate, end: NaiveDate) -> Vec<usize> {
        self.documents
            .iter()
            .enumerate()
            .filter(|(_, d)| d.date >= start && d.date <= end)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn build_vocabulary(&self, indices: &[usize], max_terms: usize, min_doc_count: usize) -> Result<Vocabulary> {
        build_vocabulary(indices.iter().map(|&i| self.tokens[i].as_slice()), max_terms, min_doc_count)
    }

    pub fn featurize(&self, index: usize, vocab: &Vocabulary) -> FeatureVector {
        featurize(&self.tokens[index], vocab)
    }
}
