//! Ridge LLP on census-labelled county bags, closed form against conjugate
//! gradients.

use llp::bags::assign_census_proportions;
use llp::bags::form_sub_bags_featurized;
use llp::corpus::Corpus;
use llp::ridge::{ridge_cost, train_ridge, RidgeConfig, RidgeSolver};
use llp::synth::{generate, planted_theta, AttributeSpec, GeneratorSpec};

pub fn run_example() -> llp::Result<()> {
    let spec = GeneratorSpec {
        seed: 3,
        start: chrono::NaiveDate::from_ymd_opt(2016, 9, 1).unwrap(),
        n_days: 1,
        vocab_size: 60,
        n_parents: 10,
        sub_bags_per_parent: 6,
        docs_per_sub_bag: 40,
        docs_jitter: 0,
        doc_length: 30,
        background: None,
        attributes: vec![AttributeSpec::planted("female", planted_theta(60, 20, 1.5, 0), (0.2, 0.8))],
    };
    let (docs, truth) = generate(&spec)?;
    let population = truth.population_data(&docs, &spec.regions(), None, 0)?;
    let corpus = Corpus::new(docs, spec.regions())?;
    let all: Vec<usize> = (0..corpus.len()).collect();
    let vocab = corpus.build_vocabulary(&all, 17_500, 2)?;
    let items = all.iter().map(|&i| (corpus.documents()[i].region.as_str(), corpus.featurize(i, &vocab)));
    let sub_bags = form_sub_bags_featurized(items, corpus.regions(), spec.start, 40)?;
    // one bag per county, as the census is reported per county
    let bags = assign_census_proportions(&sub_bags, population.census.attribute("female")?)?;

    let closed = train_ridge(&bags, &RidgeConfig::default())?;
    let iterative = train_ridge(&bags, &RidgeConfig { solver: RidgeSolver::Iterative, ..Default::default() })?;
    let gap = closed.theta.iter().zip(&iterative.theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("{} bags, {} coefficients", bags.len(), closed.theta.len());
    println!("cost {:.6}, max |closed - iterative| = {gap:.2e}", ridge_cost(&closed, &bags, 0.01)?);

    let mae = bags
        .iter()
        .map(|b| Ok((closed.predict(&b.mean_features()?)? - b.proportion).abs()))
        .sum::<llp::Result<f64>>()?
        / bags.len() as f64;
    println!("in-sample bag MAE {mae:.4}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> llp::Result<()> {
    run_example()
}
