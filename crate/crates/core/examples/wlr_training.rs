//! Weighted label regularization on state bags of county sub-bags, checked
//! against the latent labels the corpus was drawn from.

use llp::bags::{form_sub_bags_featurized, LabeledBag};
use llp::corpus::Corpus;
use llp::synth::{generate, planted_theta, AttributeSpec, GeneratorSpec};
use llp::wlr::{bag_estimate, train_wlr, WlrConfig};

pub fn run_example() -> llp::Result<()> {
    let spec = GeneratorSpec {
        seed: 8,
        start: chrono::NaiveDate::from_ymd_opt(2016, 9, 1).unwrap(),
        n_days: 1,
        vocab_size: 150,
        n_parents: 24,
        sub_bags_per_parent: 5,
        docs_per_sub_bag: 40,
        docs_jitter: 0,
        doc_length: 40,
        background: None,
        attributes: vec![AttributeSpec::planted("dem", planted_theta(150, 80, 2.0, 0), (0.1, 0.9))],
    };
    let (docs, truth) = generate(&spec)?;
    let corpus = Corpus::new(docs, spec.regions())?;
    let all: Vec<usize> = (0..corpus.len()).collect();
    let vocab = corpus.build_vocabulary(&all, 17_500, 2)?;
    let features: Vec<_> = all.iter().map(|&i| corpus.featurize(i, &vocab)).collect();
    let items = corpus.documents().iter().zip(features.iter().cloned()).map(|(d, f)| (d.region.as_str(), f));
    let sub_bags = form_sub_bags_featurized(items, corpus.regions(), spec.start, 40)?;

    let mut bags = Vec::new();
    for (parent, props) in &truth.parent_proportions {
        let members = sub_bags.iter().filter(|s| &s.parent_id == parent).cloned().collect();
        bags.push(LabeledBag::new(parent.clone(), members, props[0])?);
    }
    let (train, held_out) = bags.split_at(18);

    let fit = train_wlr(train, &WlrConfig::default())?;
    println!("{:?} after {} iterations, cost {:.5}", fit.termination, fit.iterations, fit.cost);
    for r in fit.history.iter().step_by(20) {
        println!("  iter {:>3}  cost {:.5}  |g| {:.2e}", r.iteration, r.cost, r.gradient_norm);
    }
    for b in held_out {
        let est = bag_estimate(b, &fit.model)?;
        println!("{}  true {:.3}  estimated {:.3}", b.bag_id, b.proportion, est.h_bar);
    }
    let correct = corpus
        .documents()
        .iter()
        .zip(&features)
        .map(|(d, x)| Ok((fit.model.predict(x)? > 0.5) == truth.label(&d.id, 0)?))
        .collect::<llp::Result<Vec<bool>>>()?
        .into_iter()
        .filter(|ok| *ok)
        .count();
    println!("instance accuracy {:.3}", correct as f64 / features.len() as f64);
    Ok(())
}

#[allow(dead_code)]
fn main() -> llp::Result<()> {
    run_example()
}
