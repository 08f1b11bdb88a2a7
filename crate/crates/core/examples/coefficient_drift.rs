//! A term that flips sides halfway through a synthetic campaign, tracked by
//! its smoothed, unit-normalized WLR coefficient across daily retraining.
//!
//! ```text
//! cargo run --release --example coefficient_drift
//! ```

use chrono::NaiveDate;
use llp::bags::Strategy;
use llp::corpus::Corpus;
use llp::model::ModelKind;
use llp::pipeline::{coefficient_trajectory, run_range, AttributeConfig, EstimateRequest, PipelineConfig};
use llp::synth::{generate, planted_theta, AttributeSpec, DriftEvent, GeneratorSpec};

const FLIP_DAY: u32 = 60;

pub fn run_example() -> llp::Result<()> {
    let start = NaiveDate::from_ymd_opt(2016, 7, 1).unwrap();
    let mut dem = AttributeSpec::planted("dem", planted_theta(200, 100, 2.0, 0), (0.1, 0.9));
    dem.drift.push(DriftEvent { term: 0, offset_days: FLIP_DAY });
    let spec = GeneratorSpec {
        seed: 5,
        start,
        n_days: 120,
        vocab_size: 200,
        n_parents: 20,
        sub_bags_per_parent: 4,
        docs_per_sub_bag: 10,
        docs_jitter: 0,
        doc_length: 40,
        background: None,
        attributes: vec![dem],
    };
    let (docs, truth) = generate(&spec)?;
    let regions = spec.regions();
    let population = truth.population_data(&docs, &regions, Some("dem"), 0)?;
    let corpus = Corpus::new(docs, regions)?;

    let config = PipelineConfig {
        attributes: vec![AttributeConfig::political("dem", ModelKind::Wlr, Strategy::Np)],
        estimates: vec![EstimateRequest::marginal("dem")],
        ..Default::default()
    };
    let end = *spec.dates().last().unwrap();
    let out = run_range(start, end, &corpus, &population, &config)?;
    let term = GeneratorSpec::term(0);
    let trajectory = coefficient_trajectory(&out.runs, &term, "dem", config.smoothing.coefficient_window)?;

    let flip = start + chrono::Days::new(FLIP_DAY.into());
    println!("`{term}` flips on {flip}");
    for (day, w) in trajectory.iter().step_by(10) {
        println!("{day}  {w:+.4}");
    }
    let crossing = trajectory.windows(2).find(|p| p[0].1 > 0.0 && p[1].1 <= 0.0).map(|p| p[1].0);
    match crossing {
        Some(day) => println!("smoothed weight crosses zero on {day} ({:+} days)", (day - flip).num_days()),
        None => println!("smoothed weight never crosses zero"),
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> llp::Result<()> {
    run_example()
}
