//! A month of daily retraining with a census attribute and a poll-labelled
//! political attribute, writing the artifacts a command-line run would.

use llp::bags::Strategy;
use llp::corpus::Corpus;
use llp::model::ModelKind;
use llp::pipeline::{run_range, AttributeConfig, EstimateRequest, PipelineConfig, Smoothing};
use llp::synth::{generate, planted_theta, AttributeSpec, GeneratorSpec};

pub fn run_example() -> llp::Result<()> {
    let spec = GeneratorSpec {
        seed: 2,
        start: chrono::NaiveDate::from_ymd_opt(2016, 10, 1).unwrap(),
        n_days: 30,
        vocab_size: 120,
        n_parents: 12,
        sub_bags_per_parent: 3,
        docs_per_sub_bag: 8,
        docs_jitter: 3,
        doc_length: 25,
        background: None,
        attributes: vec![
            AttributeSpec::planted("dem", planted_theta(120, 40, 2.0, 0), (0.2, 0.8)),
            AttributeSpec::planted("female", planted_theta(120, 40, 2.0, 60), (0.4, 0.6)),
        ],
    };
    let (docs, truth) = generate(&spec)?;
    let regions = spec.regions();
    let population = truth.population_data(&docs, &regions, Some("dem"), 4)?;
    let corpus = Corpus::new(docs, regions)?;

    let config = PipelineConfig {
        attributes: vec![
            AttributeConfig::political("dem", ModelKind::Wlr, Strategy::Snp),
            AttributeConfig::census("female", ModelKind::Ridge),
        ],
        estimates: vec![EstimateRequest::marginal("dem"), EstimateRequest::joint("dem", "female")],
        smoothing: Smoothing { prediction_window: 7, coefficient_window: 14 },
        ..Default::default()
    };
    let dates = spec.dates();
    let out = run_range(dates[0], *dates.last().unwrap(), &corpus, &population, &config)?;
    println!("{} days trained, {} skipped", out.runs.len(), out.failures.len());
    let last = out.runs.last().expect("at least one day");
    for (attr, d) in &last.diagnostics {
        println!("{} {attr}: {} bags, cost {:.4}, {} iterations", last.day, d.bag_count, d.cost, d.iterations);
    }
    for s in out.smoothed.iter().filter(|s| s.boundary_id == "US") {
        let (day, v) = s.points.last().unwrap();
        let label = match &s.attribute_b {
            Some(b) => format!("P({}, {b})", s.attribute_a),
            None => format!("P({})", s.attribute_a),
        };
        println!("{day} US {label:<16} 7-day average {v:.3}");
    }

    let dir = tempfile::tempdir().map_err(|e| llp::LlpError::Invalid(e.to_string()))?;
    llp::io::write_toml(&dir.path().join("pipeline.toml"), &config)?;
    let estimates: Vec<_> = out.runs.iter().flat_map(|r| r.estimates.clone()).collect();
    llp::io::write_estimates(std::fs::File::create(dir.path().join("estimates.csv")).unwrap(), &estimates)?;
    println!("wrote {} estimate rows", estimates.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> llp::Result<()> {
    run_example()
}
