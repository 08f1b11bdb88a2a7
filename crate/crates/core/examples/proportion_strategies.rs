//! Labelling state bags from a national poll, state polls and partisan lean.

use chrono::NaiveDate;
use llp::bags::{apply_pvi, assign_political_proportions, normalize_two_party, PollRecord, PviEntry, PviTable, Strategy, SubBag};
use llp::corpus::FeatureVector;

pub fn run_example() -> llp::Result<()> {
    let day = NaiveDate::from_ymd_opt(2016, 10, 20).unwrap();
    let national = PollRecord::new(day, "US", 47.5, 45.3)?;
    let p = normalize_two_party(47.5, 45.3)?;
    println!("national two-party share {p:.4}");
    let fl = PviEntry::parse("FL", "R+2")?;
    println!("FL with R+2 lean: {:.3}", apply_pvi(0.512, &fl));

    let mut pvi = PviTable::new();
    for (state, lean) in [("FL", "R+2"), ("OH", "R+3"), ("CA", "D+9")] {
        pvi.insert(state.to_string(), PviEntry::parse(state, lean)?);
    }
    let state_polls = vec![PollRecord::new(day, "OH", 44.0, 46.0)?];

    let x = FeatureVector::from_entries(2, [(0, 1.0), (1, 1.0)])?;
    let sub_bags: Vec<SubBag> = ["CA", "FL", "OH"]
        .iter()
        .map(|s| SubBag::new(format!("{s}-1"), *s, day, x.clone(), 50.0))
        .collect();

    for strategy in [Strategy::Np, Strategy::Sn, Strategy::Snp] {
        let bags = assign_political_proportions(&sub_bags, strategy, day, Some(&national), &state_polls, &pvi)?;
        let shown: Vec<String> = bags.iter().map(|b| format!("{}={:.3}", b.bag_id, b.proportion)).collect();
        println!("{strategy:<4} {}", shown.join("  "));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> llp::Result<()> {
    run_example()
}
