#[path = "../examples/tokenize_featurize.rs"]
mod tokenize_featurize;

#[test]
fn tokenize_featurize_runs() {
    tokenize_featurize::run_example().expect("tokenize_featurize example should run");
}

#[path = "../examples/proportion_strategies.rs"]
mod proportion_strategies;

#[test]
fn proportion_strategies_runs() {
    proportion_strategies::run_example().expect("proportion_strategies example should run");
}

#[path = "../examples/ridge_census.rs"]
mod ridge_census;

#[test]
fn ridge_census_runs() {
    ridge_census::run_example().expect("ridge_census example should run");
}

#[path = "../examples/wlr_training.rs"]
mod wlr_training;

#[test]
fn wlr_training_runs() {
    wlr_training::run_example().expect("wlr_training example should run");
}

#[path = "../examples/gradient_check.rs"]
mod gradient_check;

#[test]
fn gradient_check_runs() {
    gradient_check::run_example().expect("gradient_check example should run");
}

#[path = "../examples/joint_estimates.rs"]
mod joint_estimates;

#[test]
fn joint_estimates_runs() {
    joint_estimates::run_example().expect("joint_estimates example should run");
}

#[path = "../examples/daily_pipeline.rs"]
mod daily_pipeline;

#[test]
fn daily_pipeline_runs() {
    daily_pipeline::run_example().expect("daily_pipeline example should run");
}

#[path = "../examples/coefficient_drift.rs"]
mod coefficient_drift;

#[test]
fn coefficient_drift_runs() {
    coefficient_drift::run_example().expect("coefficient_drift example should run");
}
