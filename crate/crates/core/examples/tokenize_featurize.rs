//! From raw tweets to sparse term-count vectors and per-county mean vectors.

use chrono::NaiveDate;
use llp::bags::form_sub_bags;
use llp::corpus::{build_vocabulary, featurize, tokenize, Document, RegionTable};

pub fn run_example() -> llp::Result<()> {
    let day = NaiveDate::from_ymd_opt(2016, 11, 1).unwrap();
    let docs = vec![
        Document::new("1", day, "12086", "@bob Vote #ImWithHer today! https://t.co/x"),
        Document::new("2", day, "12086", "early vote lines are long"),
        Document::new("3", day, "12011", "#MAGA rally tonight, vote!"),
        Document::new("4", day, "39035", "Vote. Then vote again"),
    ];
    let regions: RegionTable = [("12086", "FL"), ("12011", "FL"), ("39035", "OH")].into_iter().collect();

    let tokens: Vec<Vec<String>> = docs.iter().map(|d| tokenize(&d.text)).collect();
    for (d, t) in docs.iter().zip(&tokens) {
        println!("{:>2}  {:?}", d.id, t);
    }

    let vocab = build_vocabulary(tokens.iter().map(Vec::as_slice), 100, 1)?;
    println!("vocabulary ({} terms, intercept at {}): {:?}", vocab.len(), vocab.intercept(), vocab.terms());
    println!("fingerprint {}", &vocab.fingerprint()[..16]);

    let x = featurize(&tokens[3], &vocab);
    println!("doc 4 features: {:?}", x.entries());

    // threshold 2: the two single-document FL/OH counties stay or collapse
    for sb in form_sub_bags(&docs, &vocab, &regions, day, 2)? {
        println!(
            "{:<10} parent {} weight {} collapsed {} members {:?}",
            sb.region_id, sb.parent_id, sb.weight, sb.collapsed, sb.members
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> llp::Result<()> {
    run_example()
}
