//! Daily sliding-window retraining.
//!
//! Every day `d` gets a fresh vocabulary, fresh bags and fresh models built
//! only from documents dated in `[d - window_days, d]`.

use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bags::{
    assign_census_proportions, assign_political_proportions, form_sub_bags_featurized, LabeledBag, PopulationData,
    Strategy, DEFAULT_COLLAPSE_THRESHOLD, NATIONAL,
};
use crate::corpus::{Corpus, Vocabulary, DEFAULT_MAX_TERMS, DEFAULT_MIN_DOC_COUNT};
use crate::error::{LlpError, Result};
use crate::inference::{
    aggregate_estimates, estimate_joint, estimate_marginal, moving_average, BoundarySlice, JointEstimate,
    DEFAULT_PAIR_ALPHA, DEFAULT_SINGLE_ALPHA,
};
use crate::model::{unit_vector, DateWindow, ModelKind, ModelParameters};
use crate::ridge::{ridge_cost, train_ridge, RidgeConfig};
use crate::wlr::{train_wlr, WlrConfig};

/// Where an attribute's bag proportions come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "source")]
pub enum ProportionSource {
    /// Per-region census shares.
    Census,
    /// Polls and partisan lean, combined per `strategy`.
    Political {
        #[serde(default = "default_strategy")]
        strategy: Strategy,
    },
}

fn default_strategy() -> Strategy {
    Strategy::Np
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeConfig {
    pub name: String,
    pub model: ModelKind,
    #[serde(flatten)]
    pub source: ProportionSource,
}

impl AttributeConfig {
    pub fn census(name: impl Into<String>, model: ModelKind) -> Self {
        Self {
            name: name.into(),
            model,
            source: ProportionSource::Census,
        }
    }

    pub fn political(name: impl Into<String>, model: ModelKind, strategy: Strategy) -> Self {
        Self {
            name: name.into(),
            model,
            source: ProportionSource::Political { strategy },
        }
    }
}

/// A marginal (`b` absent) or joint estimate to compute every day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateRequest {
    pub a: String,
    #[serde(default)]
    pub b: Option<String>,
    /// Soft-vote share; defaults to 0.75 for pairs and 1.0 for marginals.
    #[serde(default)]
    pub alpha: Option<f64>,
}

impl EstimateRequest {
    pub fn marginal(a: impl Into<String>) -> Self {
        Self {
            a: a.into(),
            b: None,
            alpha: None,
        }
    }

    pub fn joint(a: impl Into<String>, b: impl Into<String>) -> Self {
        Self {
            a: a.into(),
            b: Some(b.into()),
            alpha: None,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(if self.b.is_some() {
            DEFAULT_PAIR_ALPHA
        } else {
            DEFAULT_SINGLE_ALPHA
        })
    }
}

/// Trailing moving-average widths, in days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Smoothing {
    pub prediction_window: u32,
    pub coefficient_window: u32,
}

impl Default for Smoothing {
    fn default() -> Self {
        Self {
            prediction_window: 14,
            coefficient_window: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub window_days: u32,
    pub base_seed: u64,
    pub max_terms: usize,
    pub min_doc_count: usize,
    pub collapse_threshold: usize,
    pub national_boundary: String,
    pub attributes: Vec<AttributeConfig>,
    pub estimates: Vec<EstimateRequest>,
    pub smoothing: Smoothing,
    pub ridge: RidgeConfig,
    pub wlr: WlrConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window_days: 7,
            base_seed: 0,
            max_terms: DEFAULT_MAX_TERMS,
            min_doc_count: DEFAULT_MIN_DOC_COUNT,
            collapse_threshold: DEFAULT_COLLAPSE_THRESHOLD,
            national_boundary: NATIONAL.to_string(),
            attributes: Vec::new(),
            estimates: Vec::new(),
            smoothing: Smoothing::default(),
            ridge: RidgeConfig::default(),
            wlr: WlrConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_days == 0 {
            return Err(LlpError::Invalid("window_days must be at least 1".into()));
        }
        if self.attributes.is_empty() {
            return Err(LlpError::Invalid("no attributes configured".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for attr in &self.attributes {
            if !seen.insert(attr.name.as_str()) {
                return Err(LlpError::Invalid(format!("attribute `{}` configured twice", attr.name)));
            }
        }
        for req in &self.estimates {
            for name in std::iter::once(&req.a).chain(&req.b) {
                if !seen.contains(name.as_str()) {
                    return Err(LlpError::Invalid(format!("estimate refers to unconfigured attribute `{name}`")));
                }
            }
            let alpha = req.alpha();
            if !(0.0..=1.0).contains(&alpha) {
                return Err(LlpError::Invalid(format!("alpha must lie in [0, 1], got {alpha}")));
            }
        }
        if self.smoothing.prediction_window == 0 || self.smoothing.coefficient_window == 0 {
            return Err(LlpError::Invalid("smoothing windows must be at least 1 day".into()));
        }
        Ok(())
    }

    /// First day of the training window ending at `day`.
    pub fn window_start(&self, day: NaiveDate) -> Result<NaiveDate> {
        day.checked_sub_days(Days::new(self.window_days.into()))
            .ok_or_else(|| LlpError::Invalid(format!("window before {day} underflows the calendar")))
    }
}

/// Initialization seed for one attribute on one day.
pub fn derive_seed(base_seed: u64, day: NaiveDate, attribute: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base_seed.to_le_bytes());
    h.update(day.to_string().as_bytes());
    h.update([0]);
    h.update(attribute.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub bag_count: usize,
    pub cost: f64,
    pub iterations: usize,
}

/// Everything produced for one day.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyRun {
    pub day: NaiveDate,
    pub window: DateWindow,
    pub vocabulary: Vocabulary,
    pub n_documents: usize,
    pub models: BTreeMap<String, ModelParameters>,
    pub estimates: Vec<JointEstimate>,
    pub diagnostics: BTreeMap<String, Diagnostics>,
}

fn label_bags(
    attr: &AttributeConfig,
    sub_bags: &[crate::bags::SubBag],
    population: &PopulationData,
    day: NaiveDate,
) -> Result<Vec<LabeledBag>> {
    match attr.source {
        ProportionSource::Census => assign_census_proportions(sub_bags, population.census.attribute(&attr.name)?),
        ProportionSource::Political { strategy } => assign_political_proportions(
            sub_bags,
            strategy,
            day,
            population.national_poll(day),
            &population.state_polls(day),
            &population.pvi,
        ),
    }
}

/// Trains every configured attribute on the window ending at `day` and
/// computes the requested estimates over documents dated `day`.
pub fn run_day(day: NaiveDate, corpus: &Corpus, population: &PopulationData, config: &PipelineConfig) -> Result<DailyRun> {
    config.validate()?;
    let start = config.window_start(day)?;
    let indices = corpus.window(start, day);
    if indices.is_empty() {
        return Err(LlpError::NoDocuments { start, end: day });
    }
    let vocab = corpus.build_vocabulary(&indices, config.max_terms, config.min_doc_count)?;
    let features: Vec<_> = indices.iter().map(|&i| corpus.featurize(i, &vocab)).collect();
    let docs = corpus.documents();
    let sub_bags = form_sub_bags_featurized(
        indices.iter().zip(&features).map(|(&i, f)| (docs[i].region.as_str(), f.clone())),
        corpus.regions(),
        day,
        config.collapse_threshold,
    )?;

    let mut models = BTreeMap::new();
    let mut diagnostics = BTreeMap::new();
    for attr in &config.attributes {
        let bags = label_bags(attr, &sub_bags, population, day)?;
        let (model, diag) = match attr.model {
            ModelKind::Ridge => {
                let model = train_ridge(&bags, &config.ridge)?;
                let cost = ridge_cost(&model, &bags, config.ridge.lambda)?;
                (model, Diagnostics { bag_count: bags.len(), cost, iterations: 0 })
            }
            ModelKind::Wlr => {
                let wlr = WlrConfig {
                    init_seed: derive_seed(config.base_seed, day, &attr.name),
                    ..config.wlr.clone()
                };
                let fit = train_wlr(&bags, &wlr)?;
                let diag = Diagnostics {
                    bag_count: bags.len(),
                    cost: fit.cost,
                    iterations: fit.iterations,
                };
                (fit.model, diag)
            }
        };
        let model = model.with_attribute(&attr.name).with_window(start, day).with_vocabulary(&vocab)?;
        log::debug!("{day} {}: {} bags, cost {:.6}, {} iterations", attr.name, diag.bag_count, diag.cost, diag.iterations);
        models.insert(attr.name.clone(), model);
        diagnostics.insert(attr.name.clone(), diag);
    }

    let mut slices: BTreeMap<&str, (Vec<String>, Vec<_>)> = BTreeMap::new();
    for (&i, f) in indices.iter().zip(&features) {
        if docs[i].date == day {
            let parent = corpus.regions().parent(&docs[i].region)?;
            let slot = slices.entry(parent).or_default();
            slot.0.push(docs[i].id.clone());
            slot.1.push(f.clone());
        }
    }
    let slices = slices
        .into_iter()
        .map(|(parent, (ids, feats))| BoundarySlice::new(parent, day, ids, feats))
        .collect::<Result<Vec<_>>>()?;

    let mut estimates = Vec::new();
    for req in &config.estimates {
        let a = &models[&req.a];
        let per_boundary = slices
            .iter()
            .map(|slice| match &req.b {
                Some(b) => estimate_joint(slice, a, &models[b], req.alpha()),
                None => estimate_marginal(slice, a, req.alpha()),
            })
            .collect::<Result<Vec<_>>>()?;
        if !per_boundary.is_empty() {
            let national = aggregate_estimates(&config.national_boundary, &per_boundary)?;
            estimates.extend(per_boundary);
            estimates.push(national);
        }
    }

    Ok(DailyRun {
        day,
        window: DateWindow { start, end: day },
        vocabulary: vocab,
        n_documents: indices.len(),
        models,
        estimates,
        diagnostics,
    })
}

/// One smoothed `blended` series for a (boundary, attribute pair).
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSeries {
    pub boundary_id: String,
    pub attribute_a: String,
    pub attribute_b: Option<String>,
    pub points: Vec<(NaiveDate, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeRun {
    pub runs: Vec<DailyRun>,
    pub failures: Vec<(NaiveDate, String)>,
    pub smoothed: Vec<EstimateSeries>,
}

/// `run_day` for every day in `[start, end]`. Days that fail are logged and
/// skipped; the blended estimates are smoothed with `prediction_window`.
pub fn run_range(
    start: NaiveDate,
    end: NaiveDate,
    corpus: &Corpus,
    population: &PopulationData,
    config: &PipelineConfig,
) -> Result<RangeRun> {
    if start > end {
        return Err(LlpError::Invalid(format!("range start {start} is after end {end}")));
    }
    config.validate()?;
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for day in start.iter_days().take_while(|d| *d <= end) {
        match run_day(day, corpus, population, config) {
            Ok(run) => runs.push(run),
            Err(e) => {
                log::warn!("skipping {day}: {e}");
                failures.push((day, e.to_string()));
            }
        }
    }
    let smoothed = smooth_estimates(&runs, config.smoothing.prediction_window)?;
    Ok(RangeRun { runs, failures, smoothed })
}

/// Groups daily estimates into series and applies a trailing moving average.
pub fn smooth_estimates(runs: &[DailyRun], window_days: u32) -> Result<Vec<EstimateSeries>> {
    type Key = (String, String, Option<String>);
    let mut raw: BTreeMap<Key, Vec<(NaiveDate, f64)>> = BTreeMap::new();
    for run in runs {
        for e in &run.estimates {
            raw.entry((e.boundary_id.clone(), e.attribute_a.clone(), e.attribute_b.clone()))
                .or_default()
                .push((e.day, e.blended));
        }
    }
    raw.into_iter()
        .map(|((boundary_id, attribute_a, attribute_b), mut points)| {
            points.sort_by_key(|p| p.0);
            Ok(EstimateSeries {
                boundary_id,
                attribute_a,
                attribute_b,
                points: moving_average(&points, window_days)?,
            })
        })
        .collect()
}

/// Unit-normalized weight of `term` in each day's `attribute` model,
/// smoothed over `window_days`.
pub fn coefficient_trajectory(runs: &[DailyRun], term: &str, attribute: &str, window_days: u32) -> Result<Vec<(NaiveDate, f64)>> {
    let mut raw = Vec::with_capacity(runs.len());
    for run in runs {
        let pos = run
            .vocabulary
            .position(term)
            .ok_or_else(|| LlpError::UnknownTerm(format!("`{term}` is not in the vocabulary for {}", run.day)))?;
        let model = run
            .models
            .get(attribute)
            .ok_or_else(|| LlpError::Invalid(format!("no `{attribute}` model on {}", run.day)))?;
        raw.push((run.day, unit_vector(&model.theta)?[pos]));
    }
    raw.sort_by_key(|p| p.0);
    moving_average(&raw, window_days)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bags::CensusTable;
    use crate::corpus::{Document, RegionTable};

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2016, 10, day).unwrap()
    }

    fn corpus() -> Corpus {
        let regions: RegionTable = [("c1", "FL"), ("c2", "FL"), ("c3", "OH")].into_iter().collect();
        let mut docs = Vec::new();
        for day in 1..=12 {
            for (j, region) in ["c1", "c2", "c3"].iter().enumerate() {
                let text = if j == 0 { "vote red vote" } else { "blue wave today" };
                docs.push(Document::new(format!("{day}-{j}"), d(day), *region, text));
            }
        }
        Corpus::new(docs, regions).unwrap()
    }

    fn population() -> PopulationData {
        let mut census = CensusTable::default();
        for (r, p) in [("c1", 0.2), ("c2", 0.7), ("c3", 0.6)] {
            census.insert(r, "female", p).unwrap();
        }
        PopulationData {
            census,
            ..Default::default()
        }
    }

    fn config() -> PipelineConfig {
        PipelineConfig {
            min_doc_count: 1,
            collapse_threshold: 1,
            attributes: vec![AttributeConfig::census("female", ModelKind::Ridge)],
            estimates: vec![EstimateRequest::marginal("female")],
            ..Default::default()
        }
    }

    #[test]
    fn window_is_inclusive() {
        let run = run_day(d(10), &corpus(), &population(), &config()).unwrap();
        assert_eq!(run.window, DateWindow { start: d(3), end: d(10) });
        assert_eq!(run.n_documents, 8 * 3);
    }

    #[test]
    fn empty_window_is_an_error() {
        let cfg = PipelineConfig { window_days: 1, ..config() };
        let corpus = corpus();
        let err = run_day(NaiveDate::from_ymd_opt(2017, 1, 1).unwrap(), &corpus, &population(), &cfg).unwrap_err();
        assert!(matches!(err, LlpError::NoDocuments { .. }));
    }

    #[test]
    fn estimates_include_national_aggregate() {
        let run = run_day(d(10), &corpus(), &population(), &config()).unwrap();
        let ids: Vec<_> = run.estimates.iter().map(|e| e.boundary_id.as_str()).collect();
        assert_eq!(ids, ["FL", "OH", "US"]);
        assert_eq!(run.estimates[2].n_documents, 3);
    }

    #[test]
    fn range_skips_failed_days() {
        let cfg = PipelineConfig { window_days: 1, ..config() };
        let out = run_range(NaiveDate::from_ymd_opt(2016, 9, 29).unwrap(), d(2), &corpus(), &population(), &cfg).unwrap();
        assert_eq!(out.runs.len(), 2);
        assert_eq!(out.failures.len(), 2);
        assert!(run_range(d(2), d(1), &corpus(), &population(), &cfg).is_err());
    }

    #[test]
    fn unit_smoothing_keeps_raw_series() {
        let out = run_range(d(8), d(10), &corpus(), &population(), &config()).unwrap();
        let raw: Vec<_> = out.runs.iter().map(|r| (r.day, r.estimates[2].blended)).collect();
        let smoothed = smooth_estimates(&out.runs, 1).unwrap();
        let us = smoothed.iter().find(|s| s.boundary_id == "US").unwrap();
        assert_eq!(us.points, raw);
    }

    #[test]
    fn trajectory_requires_known_term() {
        let out = run_range(d(8), d(10), &corpus(), &population(), &config()).unwrap();
        assert!(matches!(
            coefficient_trajectory(&out.runs, "nope", "female", 30),
            Err(LlpError::UnknownTerm(msg)) if msg.contains("nope")
        ));
        // identical windows of identical text give identical models
        let t = coefficient_trajectory(&out.runs, "red", "female", 30).unwrap();
        assert!(t.windows(2).all(|w| w[0].1 == w[1].1));
    }

    #[test]
    fn seeds_depend_on_every_input() {
        let s = derive_seed(1, d(1), "dem");
        assert_eq!(s, derive_seed(1, d(1), "dem"));
        assert_ne!(s, derive_seed(2, d(1), "dem"));
        assert_ne!(s, derive_seed(1, d(2), "dem"));
        assert_ne!(s, derive_seed(1, d(1), "rep"));
    }

    #[test]
    fn config_from_toml() {
        let cfg: PipelineConfig = toml::from_str(
            r#"
            window_days = 7
            [[attributes]]
            name = "dem"
            model = "wlr"
            source = "political"
            strategy = "snp"
            [[attributes]]
            name = "female"
            model = "ridge"
            source = "census"
            [[estimates]]
            a = "dem"
            b = "female"
            [smoothing]
            prediction_window = 3
            "#,
        )
        .unwrap();
        assert_eq!(cfg.attributes[0], AttributeConfig::political("dem", ModelKind::Wlr, Strategy::Snp));
        assert_eq!(cfg.estimates[0].alpha(), 0.75);
        assert_eq!(cfg.smoothing.coefficient_window, 30);
        cfg.validate().unwrap();
        let back: PipelineConfig = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
