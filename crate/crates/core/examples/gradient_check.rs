//! Analytic WLR gradient against central finite differences.

use chrono::NaiveDate;
use llp::bags::{LabeledBag, SubBag};
use llp::corpus::FeatureVector;
use llp::model::{ModelKind, ModelParameters};
use llp::synth::finite_difference_gradient;
use llp::wlr::{wlr_cost, wlr_gradient};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> llp::Result<()> {
    let day = NaiveDate::from_ymd_opt(2016, 11, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dim = 6;
    let bags = (0..3)
        .map(|b| {
            let subs = (0..3)
                .map(|s| {
                    let mut entries: Vec<(usize, f64)> = (0..dim - 1).map(|j| (j, rng.gen_range(0.0..2.0))).collect();
                    entries.push((dim - 1, 1.0));
                    let x = FeatureVector::from_entries(dim, entries)?;
                    Ok(SubBag::new(format!("b{b}s{s}"), format!("b{b}"), day, x, rng.gen_range(1..50) as f64))
                })
                .collect::<llp::Result<Vec<_>>>()?;
            LabeledBag::new(format!("b{b}"), subs, rng.gen_range(0.05..0.95))
        })
        .collect::<llp::Result<Vec<_>>>()?;
    let theta: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let lambda = 0.01;

    let analytic = wlr_gradient(&ModelParameters::new(ModelKind::Wlr, theta.clone()), &bags, lambda)?;
    let numeric = finite_difference_gradient(
        |t| wlr_cost(&ModelParameters::new(ModelKind::Wlr, t.to_vec()), &bags, lambda).unwrap(),
        &theta,
        1e-6,
    );
    for (j, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        println!("θ[{j}]  analytic {a:+.9}  numeric {n:+.9}");
    }
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
    println!("relative error {:.2e}", diff / scale);
    Ok(())
}

#[allow(dead_code)]
fn main() -> llp::Result<()> {
    run_example()
}
