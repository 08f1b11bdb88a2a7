//! Weighted label regularization.
//!
//! Each sub-bag `u` of bag `i` gets a logistic prediction
//! `h_{u,i} = σ(X_{u,i}·θ)` on its mean features. The bag prediction is the
//! document-weighted average `h̄_i = Σ_u w_{u,i} h_{u,i} / Σ_u w_{u,i}`, and
//! training minimizes
//!
//! ```text
//! J(θ) = −Σ_i [ ỹ_i ln h̄_i + (1 − ỹ_i) ln(1 − h̄_i) ] + (λ/2)‖θ‖²
//! ```
//!
//! whose gradient is
//!
//! ```text
//! ∇J = Σ_{u,i} w_{u,i} h_{u,i}(1 − h_{u,i})(h̄_i − ỹ_i) / (h̄_i(1 − h̄_i) Σ_u w_{u,i}) · X_{u,i} + λθ
//! ```
//!
//! `h̄_i` is clamped to `[ε, 1 − ε]` in both the cost and the gradient.
//! Weights are normalized per bag before use, so scaling every weight of a
//! bag by a constant leaves cost and gradient unchanged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bags::LabeledBag;
use crate::corpus::FeatureVector;
use crate::error::{LlpError, Result};
use crate::model::{ModelKind, ModelParameters};
use crate::optim::{self, IterationRecord, Method, MinimizerConfig, Objective, Termination};
use crate::ridge::DEFAULT_LAMBDA;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WlrConfig {
    pub lambda: f64,
    pub max_iterations: usize,
    pub init_seed: u64,
    /// Initial coefficients are uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    /// ε used to clamp bag predictions away from 0 and 1.
    pub probability_floor: f64,
    /// Extra random starts; the lowest final cost wins.
    pub restarts: usize,
    pub method: Method,
    pub gradient_tolerance: f64,
}

impl Default for WlrConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            max_iterations: 100,
            init_seed: 0,
            init_scale: 0.01,
            probability_floor: 1e-9,
            restarts: 0,
            method: Method::default(),
            gradient_tolerance: 1e-9,
        }
    }
}

impl WlrConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(LlpError::Invalid(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if !(self.probability_floor > 0.0 && self.probability_floor <= 0.01) {
            return Err(LlpError::Invalid(format!(
                "probability floor {} outside (0, 0.01]",
                self.probability_floor
            )));
        }
        if !(self.init_scale >= 0.0) {
            return Err(LlpError::Invalid("init_scale must be non-negative".into()));
        }
        Ok(())
    }
}

/// Overflow-safe logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// σ clamped into the open interval (0, 1).
fn open_sigmoid(z: f64) -> f64 {
    sigmoid(z).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// `σ(X·θ)`, kept strictly inside (0, 1) even at extreme scores.
pub fn hypothesis(x: &FeatureVector, theta: &ModelParameters) -> Result<f64> {
    Ok(open_sigmoid(x.dot(&theta.theta)?))
}

/// Instance-level probability `σ(x·θ)`.
pub fn wlr_predict(x: &FeatureVector, theta: &ModelParameters) -> Result<f64> {
    hypothesis(x, theta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubEstimate {
    pub region_id: String,
    pub h: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BagEstimate {
    pub bag_id: String,
    pub h_bar: f64,
    pub sub_estimates: Vec<SubEstimate>,
}

pub fn bag_estimate(bag: &LabeledBag, theta: &ModelParameters) -> Result<BagEstimate> {
    let total: f64 = bag.total_weight();
    if !(total > 0.0) {
        return Err(LlpError::Invalid(format!("bag `{}` has zero total weight", bag.bag_id)));
    }
    let mut sub_estimates = Vec::with_capacity(bag.sub_bags.len());
    let mut h_bar = 0.0;
    for sb in &bag.sub_bags {
        let h = hypothesis(&sb.mean_features, theta)?;
        h_bar += sb.weight / total * h;
        sub_estimates.push(SubEstimate {
            region_id: sb.region_id.clone(),
            h,
            weight: sb.weight,
        });
    }
    Ok(BagEstimate {
        bag_id: bag.bag_id.clone(),
        h_bar,
        sub_estimates,
    })
}

/// The training objective over a fixed set of bags.
pub struct WlrObjective<'a> {
    bags: &'a [LabeledBag],
    /// Per bag, per sub-bag `w / Σw`.
    shares: Vec<Vec<f64>>,
    lambda: f64,
    floor: f64,
    dim: usize,
}

impl<'a> WlrObjective<'a> {
    pub fn new(bags: &'a [LabeledBag], lambda: f64, floor: f64) -> Result<Self> {
        let first = bags.first().ok_or_else(|| LlpError::Empty("no bags to train on".into()))?;
        let dim = first.dimension();
        let mut shares = Vec::with_capacity(bags.len());
        for bag in bags {
            if !(0.0..=1.0).contains(&bag.proportion) {
                return Err(LlpError::Invalid(format!("bag `{}` proportion outside [0, 1]", bag.bag_id)));
            }
            let total = bag.total_weight();
            if !(total > 0.0) {
                return Err(LlpError::Invalid(format!("bag `{}` has zero total weight", bag.bag_id)));
            }
            for sb in &bag.sub_bags {
                sb.mean_features.check_dimension(dim)?;
                if !(sb.weight > 0.0) {
                    return Err(LlpError::Invalid(format!("sub-bag `{}` has non-positive weight", sb.region_id)));
                }
            }
            shares.push(bag.sub_bags.iter().map(|s| s.weight / total).collect());
        }
        Ok(Self {
            bags,
            shares,
            lambda,
            floor,
            dim,
        })
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim {
            return Err(LlpError::DimensionMismatch {
                expected: self.dim,
                actual: theta.len(),
            });
        }
        Ok(())
    }
}

impl Objective for WlrObjective<'_> {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.check_theta(theta)?;
        for (g, t) in grad.iter_mut().zip(theta) {
            *g = self.lambda * t;
        }
        let (lo, hi) = (self.floor, 1.0 - self.floor);
        let mut cost = 0.0;
        let mut scores = Vec::new();
        for (bag, shares) in self.bags.iter().zip(&self.shares) {
            scores.clear();
            let mut h_bar = 0.0;
            for (sb, share) in bag.sub_bags.iter().zip(shares) {
                let z: f64 = sb.mean_features.entries().iter().map(|&(p, x)| x * theta[p]).sum();
                h_bar += share * sigmoid(z);
                scores.push(z);
            }
            let h_bar = h_bar.clamp(lo, hi);
            let y = bag.proportion;
            let term = -(y * h_bar.ln() + (1.0 - y) * (1.0 - h_bar).ln());
            let factor = (h_bar - y) / (h_bar * (1.0 - h_bar));
            if !term.is_finite() || !factor.is_finite() {
                return Err(LlpError::NonFinite { bag: bag.bag_id.clone() });
            }
            cost += term;
            for ((sb, share), &z) in bag.sub_bags.iter().zip(shares).zip(&scores) {
                let slope = sigmoid(z) * sigmoid(-z);
                sb.mean_features.add_scaled_to(factor * share * slope, grad);
            }
        }
        if grad.iter().any(|g| !g.is_finite()) {
            let bag = self.bags.last().map(|b| b.bag_id.clone()).unwrap_or_default();
            return Err(LlpError::NonFinite { bag });
        }
        let sq: f64 = theta.iter().map(|t| t * t).sum();
        Ok(cost + 0.5 * self.lambda * sq)
    }
}

pub fn wlr_cost(theta: &ModelParameters, bags: &[LabeledBag], lambda: f64) -> Result<f64> {
    wlr_cost_with_floor(theta, bags, lambda, WlrConfig::default().probability_floor)
}

pub fn wlr_cost_with_floor(theta: &ModelParameters, bags: &[LabeledBag], lambda: f64, floor: f64) -> Result<f64> {
    let objective = WlrObjective::new(bags, lambda, floor)?;
    let mut grad = vec![0.0; objective.dimension()];
    objective.check_theta(&theta.theta)?;
    objective.evaluate(&theta.theta, &mut grad)
}

pub fn wlr_gradient(theta: &ModelParameters, bags: &[LabeledBag], lambda: f64) -> Result<Vec<f64>> {
    let objective = WlrObjective::new(bags, lambda, WlrConfig::default().probability_floor)?;
    objective.check_theta(&theta.theta)?;
    let mut grad = vec![0.0; objective.dimension()];
    objective.evaluate(&theta.theta, &mut grad)?;
    Ok(grad)
}

/// Result of [`train_wlr`], including the per-iteration log.
#[derive(Debug, Clone, PartialEq)]
pub struct WlrFit {
    pub model: ModelParameters,
    pub cost: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub history: Vec<IterationRecord>,
}

pub fn initial_theta(dim: usize, seed: u64, scale: f64) -> Vec<f64> {
    if scale == 0.0 {
        return vec![0.0; dim];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| rng.gen_range(-scale..=scale)).collect()
}

/// Quasi-Newton minimization of [`wlr_cost`] from a seeded random start.
pub fn train_wlr(bags: &[LabeledBag], config: &WlrConfig) -> Result<WlrFit> {
    config.validate()?;
    let objective = WlrObjective::new(bags, config.lambda, config.probability_floor)?;
    let minimizer = MinimizerConfig {
        method: config.method,
        max_iterations: config.max_iterations,
        gradient_tolerance: config.gradient_tolerance,
        ..Default::default()
    };
    let mut best: Option<optim::Minimum> = None;
    for restart in 0..=config.restarts {
        let seed = config.init_seed.wrapping_add(restart as u64);
        let x0 = initial_theta(objective.dimension(), seed, config.init_scale);
        let found = optim::minimize(&objective, x0, &minimizer)?;
        if best.as_ref().is_none_or(|b| found.cost < b.cost) {
            best = Some(found);
        }
    }
    let best = best.expect("at least one start");
    Ok(WlrFit {
        model: ModelParameters::new(ModelKind::Wlr, best.x),
        cost: best.cost,
        iterations: best.iterations,
        termination: best.termination,
        history: best.history,
    })
}
