//! File formats.
//!
//! | artifact            | format                                                         |
//! |---------------------|----------------------------------------------------------------|
//! | documents           | JSON lines `{id, date, region, text}`                          |
//! | region table        | CSV `region_id,parent_id`                                      |
//! | vocabulary          | one term per line, in column order                             |
//! | featurized corpus   | JSON lines `{id, date, region, parent, features}`              |
//! | census              | CSV `region_id,attribute,proportion`                           |
//! | polls               | CSV `date,unit_id,positive_raw,negative_raw` (`US` = national) |
//! | partisan lean       | CSV `unit_id,lean` with leans like `R+2`, `D+5`, `EVEN`        |
//! | model               | JSON [`ModelParameters`]                                       |
//! | training log        | CSV `iteration,cost,gradient_norm`                             |
//! | estimates           | CSV `date,boundary,attribute_a,attribute_b,hard,soft,blended,n_documents` |
//! | trajectory          | CSV `date,attribute,term,value`                                |
//! | evaluation input    | CSV `window,category,value`                                    |
//!
//! Dates are ISO-8601 days throughout.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bags::{format_lean, CensusTable, PollRecord, PopulationData, PviEntry, PviTable};
use crate::corpus::{Document, FeatureVector, RegionTable, Vocabulary};
use crate::error::{LlpError, Result};
use crate::inference::JointEstimate;
use crate::model::ModelParameters;
use crate::optim::IterationRecord;

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| LlpError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| LlpError::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| LlpError::io(path, e))?))
}

fn read_json_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| LlpError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| LlpError::parse(path, i + 1, e.to_string()))?);
    }
    if out.is_empty() {
        return Err(LlpError::Empty(format!("{} contains no records", path.display())));
    }
    Ok(out)
}

fn write_json_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        writeln!(w).map_err(|e| LlpError::io(path, e))?;
    }
    w.flush().map_err(|e| LlpError::io(path, e))
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let mut out = Vec::new();
    for record in reader.deserialize() {
        out.push(record.map_err(|e: csv::Error| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            LlpError::parse(path, line, e.to_string())
        })?);
    }
    Ok(out)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

pub fn read_documents(path: &Path) -> Result<Vec<Document>> {
    read_json_lines(path)
}

pub fn write_documents(path: &Path, docs: &[Document]) -> Result<()> {
    write_json_lines(path, docs)
}

#[derive(Serialize, Deserialize)]
struct RegionRow {
    region_id: String,
    parent_id: String,
}

pub fn read_region_table(path: &Path) -> Result<RegionTable> {
    let rows: Vec<RegionRow> = read_csv(path)?;
    Ok(rows.into_iter().map(|r| (r.region_id, r.parent_id)).collect())
}

pub fn write_region_table(path: &Path, table: &RegionTable) -> Result<()> {
    let mut w = csv_writer(path)?;
    for (region_id, parent_id) in table.iter() {
        w.serialize(RegionRow {
            region_id: region_id.to_string(),
            parent_id: parent_id.to_string(),
        })?;
    }
    w.flush().map_err(|e| LlpError::io(path, e))
}

pub fn read_vocabulary(path: &Path) -> Result<Vocabulary> {
    let text = fs::read_to_string(path).map_err(|e| LlpError::io(path, e))?;
    Vocabulary::from_terms(text.lines().filter(|l| !l.is_empty()).map(str::to_string).collect())
}

pub fn write_vocabulary(path: &Path, vocab: &Vocabulary) -> Result<()> {
    let mut w = create(path)?;
    for term in vocab.terms() {
        writeln!(w, "{term}").map_err(|e| LlpError::io(path, e))?;
    }
    w.flush().map_err(|e| LlpError::io(path, e))
}

/// A document after tokenization and featurization against a vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturizedDocument {
    pub id: String,
    pub date: NaiveDate,
    pub region: String,
    pub parent: String,
    pub features: FeatureVector,
}

pub fn read_featurized(path: &Path) -> Result<Vec<FeaturizedDocument>> {
    read_json_lines(path)
}

pub fn write_featurized(path: &Path, docs: &[FeaturizedDocument]) -> Result<()> {
    write_json_lines(path, docs)
}

#[derive(Serialize, Deserialize)]
struct CensusRow {
    region_id: String,
    attribute: String,
    proportion: f64,
}

pub fn read_census(path: &Path) -> Result<CensusTable> {
    let mut table = CensusTable::default();
    for (i, row) in read_csv::<CensusRow>(path)?.into_iter().enumerate() {
        table
            .insert(row.region_id, row.attribute, row.proportion)
            .map_err(|e| LlpError::parse(path, i + 2, e.to_string()))?;
    }
    Ok(table)
}

pub fn write_census(path: &Path, table: &CensusTable) -> Result<()> {
    let mut w = csv_writer(path)?;
    for (attribute, regions) in &table.attributes {
        for (region_id, proportion) in regions {
            w.serialize(CensusRow {
                region_id: region_id.clone(),
                attribute: attribute.clone(),
                proportion: *proportion,
            })?;
        }
    }
    w.flush().map_err(|e| LlpError::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct PollRow {
    date: NaiveDate,
    unit_id: String,
    positive_raw: f64,
    negative_raw: f64,
}

pub fn read_polls(path: &Path) -> Result<Vec<PollRecord>> {
    read_csv::<PollRow>(path)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            PollRecord::new(r.date, r.unit_id, r.positive_raw, r.negative_raw)
                .map_err(|e| LlpError::parse(path, i + 2, e.to_string()))
        })
        .collect()
}

pub fn write_polls(path: &Path, polls: &[PollRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for p in polls {
        w.serialize(PollRow {
            date: p.day,
            unit_id: p.unit_id.clone(),
            positive_raw: p.positive_raw,
            negative_raw: p.negative_raw,
        })?;
    }
    w.flush().map_err(|e| LlpError::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct PviRow {
    unit_id: String,
    lean: String,
}

pub fn read_pvi(path: &Path) -> Result<PviTable> {
    let mut table = PviTable::new();
    for (i, row) in read_csv::<PviRow>(path)?.into_iter().enumerate() {
        let entry = PviEntry::parse(row.unit_id.clone(), &row.lean).map_err(|e| LlpError::parse(path, i + 2, e.to_string()))?;
        table.insert(row.unit_id, entry);
    }
    Ok(table)
}

pub fn write_pvi(path: &Path, table: &PviTable) -> Result<()> {
    let mut w = csv_writer(path)?;
    for (unit, entry) in table {
        w.serialize(PviRow {
            unit_id: unit.clone(),
            lean: format_lean(entry.lean),
        })?;
    }
    w.flush().map_err(|e| LlpError::io(path, e))
}

/// Loads whichever population files are given.
pub fn read_population(census: Option<&Path>, polls: Option<&Path>, pvi: Option<&Path>) -> Result<PopulationData> {
    Ok(PopulationData {
        census: census.map(read_census).transpose()?.unwrap_or_default(),
        polls: polls.map(read_polls).transpose()?.unwrap_or_default(),
        pvi: pvi.map(read_pvi).transpose()?.unwrap_or_default(),
    })
}

pub fn write_population(dir: &Path, population: &PopulationData) -> Result<()> {
    write_census(&dir.join("census.csv"), &population.census)?;
    write_polls(&dir.join("polls.csv"), &population.polls)?;
    write_pvi(&dir.join("pvi.csv"), &population.pvi)
}

pub fn read_model(path: &Path) -> Result<ModelParameters> {
    let text = fs::read_to_string(path).map_err(|e| LlpError::io(path, e))?;
    ModelParameters::from_json(&text)
}

pub fn write_model(path: &Path, model: &ModelParameters) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(model.to_json()?.as_bytes()).map_err(|e| LlpError::io(path, e))?;
    w.flush().map_err(|e| LlpError::io(path, e))
}

pub fn write_training_log<W: Write>(out: W, history: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "cost", "gradient_norm"])?;
    for r in history {
        w.write_record([r.iteration.to_string(), r.cost.to_string(), r.gradient_norm.to_string()])?;
    }
    w.flush().map_err(|e| LlpError::io("<training log>", e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub date: NaiveDate,
    pub boundary: String,
    pub attribute_a: String,
    pub attribute_b: String,
    pub hard: f64,
    pub soft: f64,
    pub blended: f64,
    pub n_documents: usize,
}

impl From<&JointEstimate> for EstimateRow {
    fn from(e: &JointEstimate) -> Self {
        Self {
            date: e.day,
            boundary: e.boundary_id.clone(),
            attribute_a: e.attribute_a.clone(),
            attribute_b: e.attribute_b.clone().unwrap_or_default(),
            hard: e.hard,
            soft: e.soft,
            blended: e.blended,
            n_documents: e.n_documents,
        }
    }
}

pub fn write_estimates<W: Write>(out: W, estimates: &[JointEstimate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if estimates.is_empty() {
        w.write_record(["date", "boundary", "attribute_a", "attribute_b", "hard", "soft", "blended", "n_documents"])?;
    }
    for e in estimates {
        w.serialize(EstimateRow::from(e))?;
    }
    w.flush().map_err(|e| LlpError::io("<estimates>", e))
}

pub fn read_estimates(path: &Path) -> Result<Vec<EstimateRow>> {
    read_csv(path)
}

pub fn write_trajectory<W: Write>(out: W, attribute: &str, term: &str, series: &[(NaiveDate, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "attribute", "term", "value"])?;
    for (day, v) in series {
        w.write_record([day.to_string(), attribute.to_string(), term.to_string(), v.to_string()])?;
    }
    w.flush().map_err(|e| LlpError::io("<trajectory>", e))
}

/// One row of an evaluation file: a value for a category over a date window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub window: String,
    pub category: String,
    pub value: f64,
}

pub fn read_reference(path: &Path) -> Result<Vec<ReferenceRow>> {
    read_csv(path)
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| LlpError::io(path, e))?;
    toml::from_str(&text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
            .unwrap_or(0);
        LlpError::parse(path, line, e.message().to_string())
    })
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string_pretty(value).map_err(|e| LlpError::Invalid(e.to_string()))?;
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(|e| LlpError::io(path, e))?;
    w.flush().map_err(|e| LlpError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2016, 11, 1).unwrap()
    }

    #[test]
    fn documents_report_bad_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("docs.jsonl");
        let good = r#"{"id":"1","date":"2016-11-01","region":"c1","text":"hi"}"#;
        let mut text = String::new();
        for _ in 0..6 {
            text.push_str(good);
            text.push('\n');
        }
        text.push_str("{not json}\n");
        fs::write(&path, text).unwrap();
        match read_documents(&path) {
            Err(LlpError::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("{other:?}"),
        }
        fs::write(&path, "").unwrap();
        assert!(matches!(read_documents(&path), Err(LlpError::Empty(_))));
    }

    #[test]
    fn population_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut pop = PopulationData::default();
        pop.census.insert("c1", "male", 0.48).unwrap();
        pop.polls.push(PollRecord::new(day(), "US", 47.5, 45.3).unwrap());
        pop.pvi.insert("FL".into(), PviEntry::parse("FL", "R+2").unwrap());
        write_population(dir.path(), &pop).unwrap();
        let back = read_population(
            Some(&dir.path().join("census.csv")),
            Some(&dir.path().join("polls.csv")),
            Some(&dir.path().join("pvi.csv")),
        )
        .unwrap();
        assert_eq!(back, pop);
    }

    #[test]
    fn bad_csv_values_cite_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pvi.csv");
        fs::write(&path, "unit_id,lean\nFL,R+2\nOH,X+1\n").unwrap();
        match read_pvi(&path) {
            Err(LlpError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let path = dir.path().join("census.csv");
        fs::write(&path, "region_id,attribute,proportion\nc1,male,1.5\n").unwrap();
        assert!(matches!(read_census(&path), Err(LlpError::Parse { line: 2, .. })));
    }

    #[test]
    fn vocabulary_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let vocab = Vocabulary::from_terms(vec!["#trump".into(), "vote".into()]).unwrap();
        write_vocabulary(&path, &vocab).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "#trump\nvote\n");
        assert_eq!(read_vocabulary(&path).unwrap(), vocab);
    }

    #[test]
    fn estimates_csv_layout() {
        let e = JointEstimate {
            boundary_id: "FL".into(),
            day: day(),
            attribute_a: "dem".into(),
            attribute_b: None,
            hard: 0.5,
            soft: 0.25,
            blended: 0.25,
            alpha: 1.0,
            n_documents: 4,
        };
        let mut buf = Vec::new();
        write_estimates(&mut buf, &[e]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "date,boundary,attribute_a,attribute_b,hard,soft,blended,n_documents\n2016-11-01,FL,dem,,0.5,0.25,0.25,4\n"
        );
    }
}
