//! Hard, soft and blended joint estimates for two attributes, the conditional
//! derived from them, and the exact answer from the latent labels.

use llp::bags::{assign_census_proportions, form_sub_bags_featurized};
use llp::corpus::Corpus;
use llp::inference::{conditional, estimate_joint, marginal, BoundarySlice, DEFAULT_PAIR_ALPHA};
use llp::ridge::{train_ridge, RidgeConfig};
use llp::synth::{generate, oracle_bag_proportion, oracle_joint, planted_theta, AttributeSpec, GeneratorSpec};

pub fn run_example() -> llp::Result<()> {
    let spec = GeneratorSpec {
        seed: 21,
        start: chrono::NaiveDate::from_ymd_opt(2016, 10, 1).unwrap(),
        n_days: 1,
        vocab_size: 120,
        n_parents: 6,
        sub_bags_per_parent: 10,
        docs_per_sub_bag: 40,
        docs_jitter: 0,
        doc_length: 30,
        background: None,
        attributes: vec![
            AttributeSpec::planted("college", planted_theta(120, 40, 2.0, 0), (0.2, 0.8)),
            AttributeSpec::planted("dem", planted_theta(120, 40, 2.0, 60), (0.2, 0.8)),
        ],
    };
    let (docs, truth) = generate(&spec)?;
    let population = truth.population_data(&docs, &spec.regions(), None, 0)?;
    let corpus = Corpus::new(docs, spec.regions())?;
    let all: Vec<usize> = (0..corpus.len()).collect();
    let vocab = corpus.build_vocabulary(&all, 17_500, 2)?;
    let features: Vec<_> = all.iter().map(|&i| corpus.featurize(i, &vocab)).collect();
    let items = corpus.documents().iter().zip(features.iter().cloned()).map(|(d, f)| (d.region.as_str(), f));
    let sub_bags = form_sub_bags_featurized(items, corpus.regions(), spec.start, 40)?;

    let train = |attr: &str| -> llp::Result<_> {
        let bags = assign_census_proportions(&sub_bags, population.census.attribute(attr)?)?;
        train_ridge(&bags, &RidgeConfig::default())?.with_attribute(attr).with_vocabulary(&vocab)
    };
    let (college, dem) = (train("college")?, train("dem")?);

    let ids: Vec<String> = corpus.documents().iter().map(|d| d.id.clone()).collect();
    let slice = BoundarySlice::new("US", spec.start, ids.clone(), features)?;
    let joint = estimate_joint(&slice, &dem, &college, DEFAULT_PAIR_ALPHA)?;
    let p_college = marginal(&slice, &college, 1.0)?;
    println!("P(dem, college): hard {:.3}  soft {:.3}  blended {:.3}", joint.hard, joint.soft, joint.blended);
    println!("P(dem | college) = {:.3}", conditional(joint.blended, p_college)?);

    let ids = ids.iter().map(String::as_str);
    let true_joint = oracle_joint(&truth, ids.clone(), "dem", "college")?;
    let true_college = oracle_bag_proportion(&truth, ids, "college")?;
    println!("latent labels: P(dem, college) {true_joint:.3}  P(dem | college) {:.3}", true_joint / true_college);
    Ok(())
}

#[allow(dead_code)]
fn main() -> llp::Result<()> {
    run_example()
}
