//! Synthetic corpora with known latent labels, and exact oracles.
//!
//! Every region gets a base rate per attribute; each document draws one
//! label per attribute from those rates and then `doc_length` tokens from a
//! term distribution proportional to
//! `background(t) · Π_k emission_k(label_k, t)`.
//!
//! A planted coefficient vector `θ*` maps to emissions
//! `positive ∝ exp(θ*/2)` and `negative ∝ exp(−θ*/2)`, so the per-token log
//! odds between classes are `θ*` up to a constant. Drift events swap a
//! term's positive and negative emission from a given day on.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bags::{CensusTable, PollRecord, PopulationData, PviEntry, NATIONAL};
use crate::corpus::{Document, RegionTable};
use crate::error::{LlpError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "emission", rename_all = "snake_case")]
pub enum Emission {
    Planted { theta: Vec<f64> },
    Explicit { positive: Vec<f64>, negative: Vec<f64> },
}

/// From `offset_days` after the start date on, `term` swaps its class
/// emissions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftEvent {
    pub term: usize,
    pub offset_days: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    #[serde(flatten)]
    pub emission: Emission,
    /// Region base rates are uniform in this range.
    pub base_rate: (f64, f64),
    #[serde(default)]
    pub drift: Vec<DriftEvent>,
}

impl AttributeSpec {
    pub fn planted(name: impl Into<String>, theta: Vec<f64>, base_rate: (f64, f64)) -> Self {
        Self {
            name: name.into(),
            emission: Emission::Planted { theta },
            base_rate,
            drift: Vec::new(),
        }
    }

    /// `(positive, negative)` emission distributions, each summing to 1.
    pub fn emissions(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.emission {
            Emission::Planted { theta } => {
                let pos: Vec<f64> = theta.iter().map(|t| (t / 2.0).exp()).collect();
                let neg: Vec<f64> = theta.iter().map(|t| (-t / 2.0).exp()).collect();
                (normalized(&pos), normalized(&neg))
            }
            Emission::Explicit { positive, negative } => (positive.clone(), negative.clone()),
        }
    }

    /// Per-term log odds `ln(positive / negative)`.
    pub fn true_theta(&self) -> Vec<f64> {
        let (pos, neg) = self.emissions();
        pos.iter().zip(&neg).map(|(p, n)| (p / n).ln()).collect()
    }
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub start: NaiveDate,
    #[serde(default = "one")]
    pub n_days: u32,
    pub vocab_size: usize,
    pub n_parents: usize,
    pub sub_bags_per_parent: usize,
    /// Documents per region per day.
    pub docs_per_sub_bag: usize,
    /// Per region-day counts are uniform in `docs ± jitter`.
    #[serde(default)]
    pub docs_jitter: usize,
    #[serde(default = "default_doc_length")]
    pub doc_length: usize,
    /// Term background weights; uniform when absent.
    #[serde(default)]
    pub background: Option<Vec<f64>>,
    pub attributes: Vec<AttributeSpec>,
}

fn one() -> u32 {
    1
}

fn default_doc_length() -> usize {
    12
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LlpError::Invalid(m));
        if self.vocab_size == 0 || self.n_parents == 0 || self.sub_bags_per_parent == 0 || self.docs_per_sub_bag == 0 || self.doc_length == 0 || self.n_days == 0 {
            return bad("generator counts must be positive".into());
        }
        if self.attributes.is_empty() {
            return bad("at least one attribute is required".into());
        }
        if let Some(bg) = &self.background {
            check_weights("background", bg, self.vocab_size, false)?;
        }
        for attr in &self.attributes {
            let (lo, hi) = attr.base_rate;
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return bad(format!("attribute `{}` base rate range ({lo}, {hi}) invalid", attr.name));
            }
            match &attr.emission {
                Emission::Planted { theta } => {
                    if theta.len() != self.vocab_size || theta.iter().any(|t| !t.is_finite()) {
                        return bad(format!("attribute `{}` planted theta must have {} finite entries", attr.name, self.vocab_size));
                    }
                }
                Emission::Explicit { positive, negative } => {
                    check_weights(&attr.name, positive, self.vocab_size, true)?;
                    check_weights(&attr.name, negative, self.vocab_size, true)?;
                }
            }
            if let Some(d) = attr.drift.iter().find(|d| d.term >= self.vocab_size) {
                return bad(format!("drift term {} outside vocabulary", d.term));
            }
        }
        Ok(())
    }

    pub fn term(index: usize) -> String {
        format!("w{index:04}")
    }

    pub fn region_id(parent: usize, region: usize) -> String {
        format!("P{parent:03}-R{region:02}")
    }

    pub fn parent_id(parent: usize) -> String {
        format!("P{parent:03}")
    }

    pub fn regions(&self) -> RegionTable {
        (0..self.n_parents)
            .flat_map(|p| (0..self.sub_bags_per_parent).map(move |r| (Self::region_id(p, r), Self::parent_id(p))))
            .collect()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        (0..self.n_days).map(|d| self.start + Duration::days(i64::from(d))).collect()
    }
}

fn check_weights(name: &str, w: &[f64], n: usize, must_sum_to_one: bool) -> Result<()> {
    if w.len() != n || w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(LlpError::Invalid(format!("`{name}` needs {n} non-negative weights")));
    }
    let s: f64 = w.iter().sum();
    if must_sum_to_one && (s - 1.0).abs() > 1e-9 {
        return Err(LlpError::Invalid(format!("`{name}` distribution sums to {s}, not 1")));
    }
    if s <= 0.0 {
        return Err(LlpError::Invalid(format!("`{name}` weights are all zero")));
    }
    Ok(())
}

/// A planted coefficient vector: `informative` terms alternate between
/// `+strength` and `−strength`, the rest are zero.
pub fn planted_theta(vocab_size: usize, informative: usize, strength: f64, offset: usize) -> Vec<f64> {
    let mut theta = vec![0.0; vocab_size];
    for k in 0..informative.min(vocab_size) {
        let idx = (offset + k) % vocab_size;
        theta[idx] = if k % 2 == 0 { strength } else { -strength };
    }
    theta
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub attributes: Vec<String>,
    /// Document id -> one label per attribute.
    pub labels: BTreeMap<String, Vec<bool>>,
    /// Region -> base rate per attribute.
    pub base_rates: BTreeMap<String, Vec<f64>>,
    /// Region -> exact positive fraction per attribute over the corpus.
    pub region_proportions: BTreeMap<String, Vec<f64>>,
    /// Parent -> exact positive fraction per attribute over the corpus.
    pub parent_proportions: BTreeMap<String, Vec<f64>>,
}

impl GroundTruth {
    pub fn attribute_index(&self, name: &str) -> Result<usize> {
        self.attributes
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| LlpError::Invalid(format!("unknown attribute `{name}`")))
    }

    pub fn label(&self, doc_id: &str, attribute: usize) -> Result<bool> {
        self.labels
            .get(doc_id)
            .map(|l| l[attribute])
            .ok_or_else(|| LlpError::Invalid(format!("unknown document `{doc_id}`")))
    }

    /// Census, daily national polls, per-parent lean and (for the first
    /// `polled_parents` parents) daily state polls, all derived exactly
    /// from the generated labels.
    pub fn population_data(&self, documents: &[Document], regions: &RegionTable, political: Option<&str>, polled_parents: usize) -> Result<PopulationData> {
        let mut census = CensusTable::default();
        for (region, props) in &self.region_proportions {
            for (attr, p) in self.attributes.iter().zip(props) {
                census.insert(region.clone(), attr.clone(), *p)?;
            }
        }
        let mut population = PopulationData {
            census,
            ..Default::default()
        };
        let Some(attr) = political else {
            return Ok(population);
        };
        let k = self.attribute_index(attr)?;

        // (positives, total) per day and per (day, parent)
        let mut national: BTreeMap<NaiveDate, (usize, usize)> = BTreeMap::new();
        let mut by_parent: BTreeMap<(NaiveDate, String), (usize, usize)> = BTreeMap::new();
        let (mut pos_all, mut n_all) = (0usize, 0usize);
        for doc in documents {
            let y = self.label(&doc.id, k)? as usize;
            let e = national.entry(doc.date).or_default();
            e.0 += y;
            e.1 += 1;
            let e = by_parent.entry((doc.date, regions.parent(&doc.region)?.to_string())).or_default();
            e.0 += y;
            e.1 += 1;
            pos_all += y;
            n_all += 1;
        }
        if n_all == 0 {
            return Err(LlpError::Empty("no documents".into()));
        }
        let overall = pos_all as f64 / n_all as f64;
        for (day, (pos, n)) in &national {
            let p = *pos as f64 / *n as f64;
            population.polls.push(PollRecord::new(*day, NATIONAL, 100.0 * p, 100.0 * (1.0 - p))?);
        }
        let polled: Vec<&String> = self.parent_proportions.keys().take(polled_parents).collect();
        for ((day, parent), (pos, n)) in &by_parent {
            if polled.contains(&parent) {
                let p = *pos as f64 / *n as f64;
                population.polls.push(PollRecord::new(*day, parent.clone(), 100.0 * p, 100.0 * (1.0 - p))?);
            }
        }
        for (parent, props) in &self.parent_proportions {
            let lean = (100.0 * (props[k] - overall)).clamp(-50.0, 50.0);
            population.pvi.insert(parent.clone(), PviEntry::new(parent.clone(), lean)?);
        }
        Ok(population)
    }
}

/// Draws a corpus and its ground truth. Deterministic in `spec.seed`.
pub fn generate(spec: &GeneratorSpec) -> Result<(Vec<Document>, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_attr = spec.attributes.len();
    let background = spec.background.clone().unwrap_or_else(|| vec![1.0; spec.vocab_size]);
    let emissions: Vec<(Vec<f64>, Vec<f64>)> = spec.attributes.iter().map(AttributeSpec::emissions).collect();
    let terms: Vec<String> = (0..spec.vocab_size).map(GeneratorSpec::term).collect();

    let mut base_rates = BTreeMap::new();
    for p in 0..spec.n_parents {
        for r in 0..spec.sub_bags_per_parent {
            let rates: Vec<f64> = spec
                .attributes
                .iter()
                .map(|a| {
                    let (lo, hi) = a.base_rate;
                    if hi > lo {
                        rng.gen_range(lo..=hi)
                    } else {
                        lo
                    }
                })
                .collect();
            base_rates.insert(GeneratorSpec::region_id(p, r), rates);
        }
    }

    let mut documents = Vec::new();
    let mut labels = BTreeMap::new();
    let mut counts: BTreeMap<String, (Vec<usize>, usize)> = BTreeMap::new();
    let mut parent_counts: BTreeMap<String, (Vec<usize>, usize)> = BTreeMap::new();

    for (day_index, date) in spec.dates().into_iter().enumerate() {
        let samplers = day_samplers(spec, &background, &emissions, day_index as u32)?;
        for p in 0..spec.n_parents {
            let parent = GeneratorSpec::parent_id(p);
            for r in 0..spec.sub_bags_per_parent {
                let region = GeneratorSpec::region_id(p, r);
                let rates = &base_rates[&region];
                let n_docs = if spec.docs_jitter > 0 {
                    let lo = spec.docs_per_sub_bag.saturating_sub(spec.docs_jitter);
                    rng.gen_range(lo..=spec.docs_per_sub_bag + spec.docs_jitter)
                } else {
                    spec.docs_per_sub_bag
                };
                for j in 0..n_docs {
                    let doc_labels: Vec<bool> = rates.iter().map(|&rate| rng.gen_bool(rate)).collect();
                    let combo = doc_labels.iter().enumerate().fold(0usize, |acc, (k, &y)| acc | ((y as usize) << k));
                    let sampler = samplers[combo].as_ref().ok_or_else(|| {
                        LlpError::Invalid(format!("label combination {combo:b} has an all-zero term distribution"))
                    })?;
                    let text = (0..spec.doc_length)
                        .map(|_| terms[sampler.sample(&mut rng)].as_str())
                        .collect::<Vec<_>>()
                        .join(" ");
                    let id = format!("{date}-{region}-{j:04}");
                    for (acc, map_key) in [(&mut counts, &region), (&mut parent_counts, &parent)] {
                        let e = acc.entry(map_key.clone()).or_insert_with(|| (vec![0; n_attr], 0));
                        for (c, &y) in e.0.iter_mut().zip(&doc_labels) {
                            *c += y as usize;
                        }
                        e.1 += 1;
                    }
                    labels.insert(id.clone(), doc_labels);
                    documents.push(Document::new(id, date, region.clone(), text));
                }
            }
        }
    }

    let ratios = |m: BTreeMap<String, (Vec<usize>, usize)>| -> BTreeMap<String, Vec<f64>> {
        m.into_iter()
            .map(|(k, (pos, n))| (k, pos.iter().map(|&c| c as f64 / n as f64).collect()))
            .collect()
    };
    Ok((
        documents,
        GroundTruth {
            attributes: spec.attributes.iter().map(|a| a.name.clone()).collect(),
            labels,
            base_rates,
            region_proportions: ratios(counts),
            parent_proportions: ratios(parent_counts),
        },
    ))
}

/// One sampler per label combination (bit k = label of attribute k).
fn day_samplers(spec: &GeneratorSpec, background: &[f64], emissions: &[(Vec<f64>, Vec<f64>)], day: u32) -> Result<Vec<Option<WeightedIndex<f64>>>> {
    let n_attr = spec.attributes.len();
    let mut out = Vec::with_capacity(1 << n_attr);
    for combo in 0..(1usize << n_attr) {
        let mut w = background.to_vec();
        for (k, (attr, (pos, neg))) in spec.attributes.iter().zip(emissions).enumerate() {
            let positive = combo >> k & 1 == 1;
            for (t, wt) in w.iter_mut().enumerate() {
                let flipped = attr.drift.iter().filter(|d| d.term == t && day >= d.offset_days).count() % 2 == 1;
                let use_pos = positive != flipped;
                *wt *= if use_pos { pos[t] } else { neg[t] };
            }
        }
        out.push(WeightedIndex::new(&w).ok());
    }
    Ok(out)
}

/// Exact positive fraction among `doc_ids`.
pub fn oracle_bag_proportion<'a>(truth: &GroundTruth, doc_ids: impl IntoIterator<Item = &'a str>, attribute: &str) -> Result<f64> {
    let k = truth.attribute_index(attribute)?;
    let (mut pos, mut n) = (0usize, 0usize);
    for id in doc_ids {
        pos += truth.label(id, k)? as usize;
        n += 1;
    }
    if n == 0 {
        return Err(LlpError::Empty("oracle bag has no documents".into()));
    }
    Ok(pos as f64 / n as f64)
}

/// Exact fraction of `doc_ids` positive on both attributes.
pub fn oracle_joint<'a>(truth: &GroundTruth, doc_ids: impl IntoIterator<Item = &'a str>, a: &str, b: &str) -> Result<f64> {
    let (ka, kb) = (truth.attribute_index(a)?, truth.attribute_index(b)?);
    let (mut both, mut n) = (0usize, 0usize);
    for id in doc_ids {
        both += (truth.label(id, ka)? && truth.label(id, kb)?) as usize;
        n += 1;
    }
    if n == 0 {
        return Err(LlpError::Empty("oracle slice has no documents".into()));
    }
    Ok(both as f64 / n as f64)
}

/// Central differences `(f(θ + h e_i) − f(θ − h e_i)) / 2h` per coordinate.
pub fn finite_difference_gradient<F: Fn(&[f64]) -> f64>(cost: F, theta: &[f64], step: f64) -> Vec<f64> {
    let mut x = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            x[i] = theta[i] + step;
            let up = cost(&x);
            x[i] = theta[i] - step;
            let down = cost(&x);
            x[i] = theta[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}
