//! Sub-bag formation and label-proportion assignment.
//!
//! Documents in a training window are grouped per region (county) into
//! sub-bags. Regions with too few documents are merged per parent unit
//! (state) into a single collapsed sub-bag. Proportions then come either
//! from census tables (one bag per sub-bag) or from polls and partisan lean
//! (one bag per parent unit).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::corpus::{featurize, tokenize, weighted_mean_feature_vector, Document, FeatureVector, RegionTable, Vocabulary};
use crate::error::{LlpError, Result};

/// Default minimum number of documents for a region to keep its own sub-bag.
pub const DEFAULT_COLLAPSE_THRESHOLD: usize = 40;

/// Unit id used for national polls.
pub const NATIONAL: &str = "US";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubBag {
    pub region_id: String,
    pub parent_id: String,
    pub day: NaiveDate,
    pub mean_features: FeatureVector,
    /// Document count.
    pub weight: f64,
    pub collapsed: bool,
    /// `(region, document count)` for every region merged into this sub-bag.
    pub members: Vec<(String, usize)>,
}

impl SubBag {
    pub fn new(region_id: impl Into<String>, parent_id: impl Into<String>, day: NaiveDate, mean_features: FeatureVector, weight: f64) -> Self {
        let region_id = region_id.into();
        Self {
            members: vec![(region_id.clone(), weight as usize)],
            region_id,
            parent_id: parent_id.into(),
            day,
            mean_features,
            weight,
            collapsed: false,
        }
    }
}

/// A set of sub-bags with a known positive-class proportion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledBag {
    pub bag_id: String,
    pub sub_bags: Vec<SubBag>,
    pub proportion: f64,
}

impl LabeledBag {
    pub fn new(bag_id: impl Into<String>, sub_bags: Vec<SubBag>, proportion: f64) -> Result<Self> {
        let bag_id = bag_id.into();
        if sub_bags.is_empty() {
            return Err(LlpError::Empty(format!("bag `{bag_id}` has no sub-bags")));
        }
        if !(0.0..=1.0).contains(&proportion) {
            return Err(LlpError::Invalid(format!("bag `{bag_id}` proportion {proportion} outside [0, 1]")));
        }
        Ok(Self {
            bag_id,
            sub_bags,
            proportion,
        })
    }

    pub fn total_weight(&self) -> f64 {
        self.sub_bags.iter().map(|s| s.weight).sum()
    }

    pub fn dimension(&self) -> usize {
        self.sub_bags[0].mean_features.dimension()
    }

    /// Weight-averaged mean of the sub-bag means.
    pub fn mean_features(&self) -> Result<FeatureVector> {
        let items: Vec<_> = self.sub_bags.iter().map(|s| (&s.mean_features, s.weight)).collect();
        weighted_mean_feature_vector(&items)
    }
}

/// Tokenizes and featurizes `documents`, then groups them as
/// [`form_sub_bags_featurized`] does.
pub fn form_sub_bags(
    documents: &[Document],
    vocab: &Vocabulary,
    regions: &RegionTable,
    day: NaiveDate,
    collapse_threshold: usize,
) -> Result<Vec<SubBag>> {
    let items: Vec<(&str, FeatureVector)> = documents
        .iter()
        .map(|d| (d.region.as_str(), featurize(&tokenize(&d.text), vocab)))
        .collect();
    form_sub_bags_featurized(items, regions, day, collapse_threshold)
}

/// One sub-bag per region holding at least `collapse_threshold` documents;
/// all smaller regions of a parent are merged into one collapsed sub-bag
/// named `<parent>-other`. Output is ordered by parent, then region, with
/// the collapsed sub-bag last within its parent.
pub fn form_sub_bags_featurized<'a, I>(items: I, regions: &RegionTable, day: NaiveDate, collapse_threshold: usize) -> Result<Vec<SubBag>>
where
    I: IntoIterator<Item = (&'a str, FeatureVector)>,
{
    if collapse_threshold == 0 {
        return Err(LlpError::Invalid("collapse threshold must be positive".into()));
    }
    // parent -> region -> member vectors
    let mut grouped: BTreeMap<String, BTreeMap<&'a str, Vec<FeatureVector>>> = BTreeMap::new();
    for (region, fv) in items {
        let parent = regions.parent(region)?;
        grouped
            .entry(parent.to_string())
            .or_default()
            .entry(region)
            .or_default()
            .push(fv);
    }

    let mut out = Vec::new();
    for (parent, by_region) in grouped {
        let mut small: Vec<(&str, Vec<FeatureVector>)> = Vec::new();
        for (region, vectors) in by_region {
            if vectors.len() >= collapse_threshold {
                let weight = vectors.len() as f64;
                let mean = mean_of(&vectors)?;
                out.push(SubBag::new(region, parent.clone(), day, mean, weight));
            } else {
                small.push((region, vectors));
            }
        }
        if !small.is_empty() {
            let members: Vec<(String, usize)> = small.iter().map(|(r, v)| (r.to_string(), v.len())).collect();
            let all: Vec<FeatureVector> = small.into_iter().flat_map(|(_, v)| v).collect();
            out.push(SubBag {
                region_id: format!("{parent}-other"),
                parent_id: parent.clone(),
                day,
                mean_features: mean_of(&all)?,
                weight: all.len() as f64,
                collapsed: true,
                members,
            });
        }
    }
    Ok(out)
}

fn mean_of(vectors: &[FeatureVector]) -> Result<FeatureVector> {
    crate::corpus::mean_feature_vector(vectors)
}

/// `positive / (positive + negative)`
pub fn normalize_two_party(positive_raw: f64, negative_raw: f64) -> Result<f64> {
    if !(positive_raw >= 0.0 && negative_raw >= 0.0) {
        return Err(LlpError::Invalid(format!("negative poll share ({positive_raw}, {negative_raw})")));
    }
    let total = positive_raw + negative_raw;
    if total <= 0.0 || !total.is_finite() {
        return Err(LlpError::Invalid("poll shares sum to zero".into()));
    }
    Ok(positive_raw / total)
}

/// Partisan lean of a unit, in percentage points toward the positive
/// (Democratic) class. `R+2` is stored as −2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PviEntry {
    pub unit_id: String,
    pub lean: f64,
}

impl PviEntry {
    pub fn new(unit_id: impl Into<String>, lean: f64) -> Result<Self> {
        if !(lean.abs() <= 50.0) {
            return Err(LlpError::Invalid(format!("PVI lean {lean} outside [-50, 50]")));
        }
        Ok(Self {
            unit_id: unit_id.into(),
            lean,
        })
    }

    /// Parses `"R+2"`, `"D+5"` or `"EVEN"`.
    pub fn parse(unit_id: impl Into<String>, lean: &str) -> Result<Self> {
        Self::new(unit_id, parse_lean(lean)?)
    }
}

pub fn parse_lean(s: &str) -> Result<f64> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("even") {
        return Ok(0.0);
    }
    let bad = || LlpError::Invalid(format!("unrecognized PVI `{s}`"));
    let (side, amount) = s.split_once('+').ok_or_else(bad)?;
    let amount: f64 = amount.trim().parse().map_err(|_| bad())?;
    if !(amount >= 0.0) {
        return Err(bad());
    }
    match side.trim() {
        "D" | "d" => Ok(amount),
        "R" | "r" => Ok(-amount),
        _ => Err(bad()),
    }
}

pub fn format_lean(lean: f64) -> String {
    if lean == 0.0 {
        "EVEN".to_string()
    } else if lean > 0.0 {
        format!("D+{lean}")
    } else {
        format!("R+{}", -lean)
    }
}

/// `national + lean / 100`, clamped to `[0, 1]`.
pub fn apply_pvi(national: f64, pvi: &PviEntry) -> f64 {
    (national + pvi.lean / 100.0).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollRecord {
    pub day: NaiveDate,
    pub unit_id: String,
    pub positive_raw: f64,
    pub negative_raw: f64,
}

impl PollRecord {
    pub fn new(day: NaiveDate, unit_id: impl Into<String>, positive_raw: f64, negative_raw: f64) -> Result<Self> {
        normalize_two_party(positive_raw, negative_raw)?;
        Ok(Self {
            day,
            unit_id: unit_id.into(),
            positive_raw,
            negative_raw,
        })
    }

    pub fn is_national(&self) -> bool {
        self.unit_id == NATIONAL
    }

    pub fn proportion(&self) -> Result<f64> {
        normalize_two_party(self.positive_raw, self.negative_raw)
    }
}

/// Which population sources supply political bag proportions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// National poll adjusted by partisan lean, for every unit.
    Np,
    /// Same-day state polls only; units without one are dropped.
    Sn,
    /// State polls where available, national poll plus lean elsewhere.
    Snp,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Np => "np",
            Strategy::Sn => "sn",
            Strategy::Snp => "snp",
        })
    }
}

impl FromStr for Strategy {
    type Err = LlpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "np" => Ok(Strategy::Np),
            "sn" => Ok(Strategy::Sn),
            "snp" => Ok(Strategy::Snp),
            other => Err(LlpError::Invalid(format!("unknown strategy `{other}`"))),
        }
    }
}

pub type PviTable = BTreeMap<String, PviEntry>;

/// Census proportions per attribute, keyed by region.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CensusTable {
    pub attributes: BTreeMap<String, BTreeMap<String, f64>>,
}

impl CensusTable {
    pub fn insert(&mut self, region: impl Into<String>, attribute: impl Into<String>, proportion: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&proportion) {
            return Err(LlpError::Invalid(format!("census proportion {proportion} outside [0, 1]")));
        }
        self.attributes
            .entry(attribute.into())
            .or_default()
            .insert(region.into(), proportion);
        Ok(())
    }

    pub fn attribute(&self, name: &str) -> Result<&BTreeMap<String, f64>> {
        self.attributes
            .get(name)
            .ok_or_else(|| LlpError::MissingPopulation(format!("no census attribute `{name}`")))
    }
}

/// All population-level inputs used to label bags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PopulationData {
    pub census: CensusTable,
    pub polls: Vec<PollRecord>,
    pub pvi: PviTable,
}

impl PopulationData {
    pub fn national_poll(&self, day: NaiveDate) -> Option<&PollRecord> {
        self.polls.iter().find(|p| p.day == day && p.is_national())
    }

    pub fn state_polls(&self, day: NaiveDate) -> Vec<PollRecord> {
        self.polls
            .iter()
            .filter(|p| p.day == day && !p.is_national())
            .cloned()
            .collect()
    }
}

/// One single-sub-bag [`LabeledBag`] per sub-bag, labeled from `census`.
/// A collapsed sub-bag gets the document-weighted mean of its member
/// regions' proportions.
pub fn assign_census_proportions(sub_bags: &[SubBag], census: &BTreeMap<String, f64>) -> Result<Vec<LabeledBag>> {
    let mut missing = BTreeSet::new();
    let mut out = Vec::with_capacity(sub_bags.len());
    for sb in sub_bags {
        let mut num = 0.0;
        let mut den = 0.0;
        for (region, count) in &sb.members {
            match census.get(region) {
                Some(&p) => {
                    num += p * *count as f64;
                    den += *count as f64;
                }
                None => {
                    missing.insert(region.clone());
                }
            }
        }
        if den > 0.0 {
            out.push(LabeledBag::new(sb.region_id.clone(), vec![sb.clone()], (num / den).clamp(0.0, 1.0))?);
        }
    }
    if !missing.is_empty() {
        return Err(LlpError::MissingCensus(missing.into_iter().collect()));
    }
    Ok(out)
}

/// Groups sub-bags by parent unit and labels each group per `strategy`.
///
/// `state_polls` entries not dated `day` are ignored; at most one poll per
/// unit per day is accepted.
pub fn assign_political_proportions(
    sub_bags: &[SubBag],
    strategy: Strategy,
    day: NaiveDate,
    national: Option<&PollRecord>,
    state_polls: &[PollRecord],
    pvi: &PviTable,
) -> Result<Vec<LabeledBag>> {
    let mut polls: BTreeMap<&str, f64> = BTreeMap::new();
    for poll in state_polls.iter().filter(|p| p.day == day && !p.is_national()) {
        if polls.insert(poll.unit_id.as_str(), poll.proportion()?).is_some() {
            return Err(LlpError::Invalid(format!("more than one poll for `{}` on {day}", poll.unit_id)));
        }
    }

    let national = match strategy {
        Strategy::Np | Strategy::Snp => {
            let poll = national
                .filter(|p| p.day == day)
                .ok_or_else(|| LlpError::MissingPopulation(format!("no national poll on {day}")))?;
            Some(poll.proportion()?)
        }
        Strategy::Sn => {
            if polls.is_empty() {
                return Err(LlpError::MissingPopulation(format!("no state polls on {day}")));
            }
            None
        }
    };

    let mut by_parent: BTreeMap<&str, Vec<SubBag>> = BTreeMap::new();
    for sb in sub_bags {
        by_parent.entry(sb.parent_id.as_str()).or_default().push(sb.clone());
    }

    let mut out = Vec::with_capacity(by_parent.len());
    for (parent, members) in by_parent {
        let with_lean = || -> Result<f64> {
            let entry = pvi
                .get(parent)
                .ok_or_else(|| LlpError::MissingPopulation(format!("no PVI for `{parent}`")))?;
            Ok(apply_pvi(national.expect("national set for NP/SNP"), entry))
        };
        let proportion = match (strategy, polls.get(parent)) {
            (Strategy::Np, _) => with_lean()?,
            (Strategy::Sn, Some(&p)) | (Strategy::Snp, Some(&p)) => p,
            (Strategy::Sn, None) => continue,
            (Strategy::Snp, None) => with_lean()?,
        };
        out.push(LabeledBag::new(parent, members, proportion)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use super::Strategy;

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2016, 11, 1).unwrap()
    }

    fn fv(v: f64) -> FeatureVector {
        FeatureVector::from_entries(2, [(0, v), (1, 1.0)]).unwrap()
    }

    fn regions() -> RegionTable {
        [("A", "P"), ("B", "P"), ("C", "P"), ("D", "Q")].into_iter().collect()
    }

    #[test]
    fn collapses_small_regions_per_parent() {
        let mut items = Vec::new();
        items.extend((0..50).map(|_| ("A", fv(1.0))));
        items.extend((0..10).map(|_| ("B", fv(2.0))));
        items.extend((0..10).map(|_| ("C", fv(4.0))));
        let bags = form_sub_bags_featurized(items, &regions(), day(), 40).unwrap();
        assert_eq!(bags.len(), 2);
        assert_eq!((bags[0].region_id.as_str(), bags[0].weight, bags[0].collapsed), ("A", 50.0, false));
        assert_eq!((bags[1].region_id.as_str(), bags[1].weight, bags[1].collapsed), ("P-other", 20.0, true));
        assert_eq!(bags[1].mean_features.get(0), 3.0);
        assert_eq!(bags[1].mean_features.intercept(), 1.0);
        assert_eq!(bags[1].members, vec![("B".to_string(), 10), ("C".to_string(), 10)]);
    }

    #[test]
    fn no_collapse_when_all_large() {
        let items: Vec<_> = (0..5).map(|_| ("A", fv(1.0))).chain((0..5).map(|_| ("D", fv(0.0)))).collect();
        let bags = form_sub_bags_featurized(items, &regions(), day(), 5).unwrap();
        assert_eq!(bags.len(), 2);
        assert!(bags.iter().all(|b| !b.collapsed));
        assert_eq!(bags.iter().map(|b| b.weight).sum::<f64>(), 10.0);
        assert!(form_sub_bags_featurized(Vec::new(), &regions(), day(), 40).unwrap().is_empty());
    }

    #[test]
    fn form_from_text() {
        let vocab = Vocabulary::from_terms(vec!["vote".into()]).unwrap();
        let docs = vec![
            Document::new("1", day(), "A", "vote vote"),
            Document::new("2", day(), "A", "@x nothing"),
        ];
        let bags = form_sub_bags(&docs, &vocab, &regions(), day(), 1).unwrap();
        assert_eq!(bags[0].mean_features.entries(), &[(0, 1.0), (1, 1.0)]);
    }

    #[test]
    fn two_party_normalization() {
        let p = normalize_two_party(47.5, 45.3).unwrap();
        assert!((p - 0.5118534482758621).abs() < 1e-15);
        assert_eq!((p * 1000.0).round() / 1000.0, 0.512);
        assert_eq!(normalize_two_party(50.0, 50.0).unwrap(), 0.5);
        assert_eq!(normalize_two_party(10.0, 0.0).unwrap(), 1.0);
        assert!(normalize_two_party(0.0, 0.0).is_err());
    }

    #[test]
    fn pvi_parsing_and_application() {
        let fl = PviEntry::parse("FL", "R+2").unwrap();
        assert_eq!(fl.lean, -2.0);
        assert_eq!(apply_pvi(0.512, &fl), 0.492);
        assert_eq!(PviEntry::parse("X", "D+5").unwrap().lean, 5.0);
        assert_eq!(PviEntry::parse("X", "EVEN").unwrap().lean, 0.0);
        assert!(PviEntry::parse("X", "Q+1").is_err());
        assert!(PviEntry::parse("X", "R+60").is_err());
        assert_eq!(apply_pvi(0.37, &PviEntry::new("X", 0.0).unwrap()), 0.37);
        assert_eq!(apply_pvi(0.01, &fl), 0.0);
        assert_eq!(format_lean(-2.0), "R+2");
        assert_eq!(format_lean(0.0), "EVEN");
    }

    fn sb(region: &str, parent: &str, weight: f64) -> SubBag {
        SubBag::new(region, parent, day(), fv(1.0), weight)
    }

    #[test]
    fn census_assignment() {
        let census: BTreeMap<String, f64> = [("A", 0.6), ("B", 0.4), ("C", 0.8)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let mut collapsed = sb("P-other", "P", 40.0);
        collapsed.collapsed = true;
        collapsed.members = vec![("B".into(), 10), ("C".into(), 30)];
        let bags = assign_census_proportions(&[sb("A", "P", 50.0), collapsed], &census).unwrap();
        assert_eq!(bags[0].proportion, 0.6);
        assert!((bags[1].proportion - 0.7).abs() < 1e-15);

        match assign_census_proportions(&[sb("Z", "P", 1.0)], &census) {
            Err(LlpError::MissingCensus(r)) => assert_eq!(r, vec!["Z".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    fn pvi() -> PviTable {
        [("FL", "R+2"), ("NY", "D+5")]
            .iter()
            .map(|(u, l)| (u.to_string(), PviEntry::parse(*u, l).unwrap()))
            .collect()
    }

    #[test]
    fn political_np() {
        let national = PollRecord::new(day(), NATIONAL, 47.5, 45.3).unwrap();
        let subs = [sb("c1", "FL", 10.0), sb("c2", "FL", 5.0), sb("c3", "NY", 3.0)];
        let bags = assign_political_proportions(&subs, Strategy::Np, day(), Some(&national), &[], &pvi()).unwrap();
        assert_eq!(bags.len(), 2);
        assert_eq!(bags[0].bag_id, "FL");
        assert_eq!(bags[0].sub_bags.len(), 2);
        assert!((bags[0].proportion - (0.5118534482758621 - 0.02)).abs() < 1e-15);
        assert!(assign_political_proportions(&subs, Strategy::Np, day(), None, &[], &pvi()).is_err());
    }

    #[test]
    fn political_sn_and_snp() {
        let national = PollRecord::new(day(), NATIONAL, 50.0, 50.0).unwrap();
        let polls = vec![PollRecord::new(day(), "NY", 60.0, 40.0).unwrap()];
        let subs = [sb("c1", "FL", 10.0), sb("c3", "NY", 3.0)];
        let sn = assign_political_proportions(&subs, Strategy::Sn, day(), None, &polls, &pvi()).unwrap();
        assert_eq!(sn.len(), 1);
        assert_eq!((sn[0].bag_id.as_str(), sn[0].proportion), ("NY", 0.6));

        let snp = assign_political_proportions(&subs, Strategy::Snp, day(), Some(&national), &polls, &pvi()).unwrap();
        assert_eq!(snp.len(), 2);
        assert_eq!(snp[1].proportion, 0.6);
        assert_eq!(snp[0].proportion, 0.48);

        let stale = vec![PollRecord::new(day().pred_opt().unwrap(), "NY", 60.0, 40.0).unwrap()];
        assert!(assign_political_proportions(&subs, Strategy::Sn, day(), None, &stale, &pvi()).is_err());
    }

    proptest! {
        #[test]
        fn two_party_complement(a in 0.0f64..100.0, b in 0.01f64..100.0) {
            let s = normalize_two_party(a, b).unwrap() + normalize_two_party(b, a).unwrap();
            prop_assert!((s - 1.0).abs() < 1e-15);
        }

        #[test]
        fn apply_pvi_in_unit_interval(p in 0.0f64..=1.0, lean in -50.0f64..=50.0) {
            let out = apply_pvi(p, &PviEntry::new("X", lean).unwrap());
            prop_assert!((0.0..=1.0).contains(&out));
        }

        #[test]
        fn collapsing_conserves_mass(counts in prop::collection::vec(0usize..30, 4), threshold in 1usize..25) {
            let names = ["A", "B", "C", "D"];
            let items: Vec<_> = names.iter().zip(&counts).flat_map(|(r, &n)| (0..n).map(move |_| (*r, fv(1.0)))).collect();
            let bags = form_sub_bags_featurized(items, &regions(), day(), threshold).unwrap();
            for parent in ["P", "Q"] {
                let expected: usize = names.iter().zip(&counts).filter(|(r, _)| regions().parent(r).unwrap() == parent).map(|(_, &n)| n).sum();
                let got: f64 = bags.iter().filter(|b| b.parent_id == parent).map(|b| b.weight).sum();
                prop_assert_eq!(got, expected as f64);
            }
        }

        #[test]
        fn snp_extends_sn(polled in prop::collection::vec(any::<bool>(), 2), share in 30.0f64..70.0) {
            let units = ["FL", "NY"];
            let subs = [sb("c1", "FL", 2.0), sb("c2", "NY", 2.0)];
            let national = PollRecord::new(day(), NATIONAL, 50.0, 50.0).unwrap();
            let polls: Vec<_> = units.iter().zip(&polled).filter(|(_, &p)| p).map(|(u, _)| PollRecord::new(day(), *u, share, 100.0 - share).unwrap()).collect();
            let np = assign_political_proportions(&subs, Strategy::Np, day(), Some(&national), &[], &pvi()).unwrap();
            let snp = assign_political_proportions(&subs, Strategy::Snp, day(), Some(&national), &polls, &pvi()).unwrap();
            if let Ok(sn) = assign_political_proportions(&subs, Strategy::Sn, day(), None, &polls, &pvi()) {
                for bag in &sn {
                    prop_assert!(snp.contains(bag));
                }
            }
            for bag in &snp {
                if !polls.iter().any(|p| p.unit_id == bag.bag_id) {
                    prop_assert!(np.contains(bag));
                }
            }
        }
    }
}
