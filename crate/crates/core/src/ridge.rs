//! Ridge regression on bag mean features: the linear LLP baseline.
//!
//! Minimizes `(1/n) Σ_i (ỹ_i − X̄_i·θ)² + (λ/2)‖θ‖²` over `n` labeled bags,
//! where `X̄_i` is the document-weighted mean of the bag's sub-bag means.
//! The intercept coefficient is regularized like every other coefficient.

use serde::{Deserialize, Serialize};

use crate::bags::LabeledBag;
use crate::corpus::FeatureVector;
use crate::error::{LlpError, Result};
use crate::model::{ModelKind, ModelParameters};
use crate::optim::{dot, norm};

/// Default L2 strength, shared by both models.
pub const DEFAULT_LAMBDA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RidgeSolver {
    /// Cholesky on the regularized normal equations (or their dual when
    /// there are more features than bags).
    ClosedForm,
    /// Conjugate gradients on the normal equations.
    Iterative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RidgeConfig {
    pub lambda: f64,
    pub solver: RidgeSolver,
    pub max_iterations: usize,
    /// Gradient-norm stopping threshold for the iterative solver.
    pub tolerance: f64,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            solver: RidgeSolver::ClosedForm,
            max_iterations: 10_000,
            tolerance: 1e-10,
        }
    }
}

/// Bag means and targets laid out for solving.
struct Design {
    rows: Vec<FeatureVector>,
    targets: Vec<f64>,
    dim: usize,
}

impl Design {
    fn new(bags: &[LabeledBag]) -> Result<Self> {
        let first = bags.first().ok_or_else(|| LlpError::Empty("no bags to train on".into()))?;
        let dim = first.dimension();
        let mut rows = Vec::with_capacity(bags.len());
        for bag in bags {
            let mean = bag.mean_features()?;
            mean.check_dimension(dim)?;
            rows.push(mean);
        }
        Ok(Self {
            rows,
            targets: bags.iter().map(|b| b.proportion).collect(),
            dim,
        })
    }

    fn n(&self) -> usize {
        self.rows.len()
    }

    /// `Xᵀ(X v) + shift·v`
    fn normal_apply(&self, v: &[f64], shift: f64) -> Vec<f64> {
        let mut out: Vec<f64> = v.iter().map(|x| shift * x).collect();
        for row in &self.rows {
            let r: f64 = row.entries().iter().map(|&(p, x)| x * v[p]).sum();
            row.add_scaled_to(r, &mut out);
        }
        out
    }

    fn xt_y(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (row, &y) in self.rows.iter().zip(&self.targets) {
            row.add_scaled_to(y, &mut out);
        }
        out
    }
}

pub fn ridge_cost(theta: &ModelParameters, bags: &[LabeledBag], lambda: f64) -> Result<f64> {
    let design = Design::new(bags)?;
    if theta.dimension() != design.dim {
        return Err(LlpError::DimensionMismatch {
            expected: design.dim,
            actual: theta.dimension(),
        });
    }
    let mut sq = 0.0;
    for (row, y) in design.rows.iter().zip(&design.targets) {
        let r = y - row.dot(&theta.theta)?;
        sq += r * r;
    }
    Ok(sq / design.n() as f64 + 0.5 * lambda * dot(&theta.theta, &theta.theta))
}

/// Gradient of [`ridge_cost`].
pub fn ridge_gradient(theta: &ModelParameters, bags: &[LabeledBag], lambda: f64) -> Result<Vec<f64>> {
    let design = Design::new(bags)?;
    if theta.dimension() != design.dim {
        return Err(LlpError::DimensionMismatch {
            expected: design.dim,
            actual: theta.dimension(),
        });
    }
    Ok(gradient(&design, &theta.theta, lambda))
}

fn gradient(design: &Design, theta: &[f64], lambda: f64) -> Vec<f64> {
    let n = design.n() as f64;
    let mut g: Vec<f64> = theta.iter().map(|t| lambda * t).collect();
    for (row, y) in design.rows.iter().zip(&design.targets) {
        let r: f64 = row.entries().iter().map(|&(p, x)| x * theta[p]).sum::<f64>() - y;
        row.add_scaled_to(2.0 * r / n, &mut g);
    }
    g
}

pub fn train_ridge(bags: &[LabeledBag], config: &RidgeConfig) -> Result<ModelParameters> {
    if !(config.lambda >= 0.0) {
        return Err(LlpError::Invalid(format!("lambda must be non-negative, got {}", config.lambda)));
    }
    let design = Design::new(bags)?;
    let (n, d) = (design.n(), design.dim);
    if config.lambda == 0.0 && d > n {
        return Err(LlpError::Singular(format!(
            "{d} coefficients but only {n} bags; use lambda > 0"
        )));
    }
    // Stationarity: (XᵀX + (nλ/2) I) θ = Xᵀy
    let shift = n as f64 * config.lambda / 2.0;
    let theta = match config.solver {
        RidgeSolver::ClosedForm if d <= n => solve_primal(&design, shift)?,
        RidgeSolver::ClosedForm => solve_dual(&design, shift)?,
        RidgeSolver::Iterative => solve_cg(&design, shift, config)?,
    };
    Ok(ModelParameters::new(ModelKind::Ridge, theta))
}

fn solve_primal(design: &Design, shift: f64) -> Result<Vec<f64>> {
    let d = design.dim;
    let mut a = vec![0.0; d * d];
    for row in &design.rows {
        for &(i, xi) in row.entries() {
            for &(j, xj) in row.entries() {
                a[i * d + j] += xi * xj;
            }
        }
    }
    for i in 0..d {
        a[i * d + i] += shift;
    }
    let mut b = design.xt_y();
    cholesky_solve(&mut a, d, &mut b)?;
    Ok(b)
}

/// θ = Xᵀ (XXᵀ + shift·I)⁻¹ y, used when features outnumber bags.
fn solve_dual(design: &Design, shift: f64) -> Result<Vec<f64>> {
    let n = design.n();
    let dense: Vec<Vec<f64>> = design.rows.iter().map(FeatureVector::to_dense).collect();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = design.rows[i].dot(&dense[j]).expect("uniform dimension");
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
        k[i * n + i] += shift;
    }
    let mut alpha = design.targets.clone();
    cholesky_solve(&mut k, n, &mut alpha)?;
    let mut theta = vec![0.0; design.dim];
    for (row, a) in design.rows.iter().zip(&alpha) {
        row.add_scaled_to(*a, &mut theta);
    }
    Ok(theta)
}

fn solve_cg(design: &Design, shift: f64, config: &RidgeConfig) -> Result<Vec<f64>> {
    let n = design.n() as f64;
    let d = design.dim;
    let mut theta = vec![0.0; d];
    // residual of the normal equations; the cost gradient is -(2/n)·r
    let mut r = design.xt_y();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..config.max_iterations {
        if 2.0 / n * rr.sqrt() <= config.tolerance {
            return Ok(theta);
        }
        let ap = design.normal_apply(&p, shift);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(LlpError::Singular("normal equations are not positive definite; use lambda > 0".into()));
        }
        let step = rr / pap;
        for i in 0..d {
            theta[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..d {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    // Recompute the exact gradient before giving up.
    let g = gradient(design, &theta, 2.0 * shift / n);
    if norm(&g) <= config.tolerance {
        Ok(theta)
    } else {
        Err(LlpError::Invalid(format!(
            "conjugate gradients did not reach tolerance {} in {} iterations",
            config.tolerance, config.max_iterations
        )))
    }
}

/// In-place Cholesky factorization of the SPD matrix `a` (row-major `n×n`)
/// followed by forward and back substitution into `b`.
fn cholesky_solve(a: &mut [f64], n: usize, b: &mut [f64]) -> Result<()> {
    let max_diag = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
    let floor = 1e-12 * max_diag.max(f64::MIN_POSITIVE);
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if !(diag > floor) {
            return Err(LlpError::Singular(
                "normal equations are singular; use lambda > 0".into(),
            ));
        }
        let l_jj = diag.sqrt();
        a[j * n + j] = l_jj;
        for i in (j + 1)..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / l_jj;
        }
    }
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= a[i * n + k] * b[k];
        }
        b[i] = v / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in (i + 1)..n {
            v -= a[k * n + i] * b[k];
        }
        b[i] = v / a[i * n + i];
    }
    Ok(())
}

/// `clamp(x·θ, 0, 1)`
pub fn ridge_predict(x: &FeatureVector, theta: &ModelParameters) -> Result<f64> {
    Ok(x.dot(&theta.theta)?.clamp(0.0, 1.0))
}

/// Positive iff the truncated prediction is strictly above 0.5.
pub fn ridge_classify(x: &FeatureVector, theta: &ModelParameters) -> Result<bool> {
    Ok(ridge_predict(x, theta)? > 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bags::SubBag;
    use chrono::NaiveDate;

    fn bag(x: &[f64], y: f64) -> LabeledBag {
        let day = NaiveDate::from_ymd_opt(2016, 1, 1).unwrap();
        let fv = FeatureVector::from_entries(x.len(), x.iter().copied().enumerate()).unwrap();
        LabeledBag::new("b", vec![SubBag::new("r", "p", day, fv, 1.0)], y).unwrap()
    }

    fn model(theta: Vec<f64>) -> ModelParameters {
        ModelParameters::new(ModelKind::Ridge, theta)
    }

    #[test]
    fn cost_examples() {
        assert_eq!(ridge_cost(&model(vec![0.0, 0.0]), &[bag(&[1.0, 1.0], 0.5)], 0.0).unwrap(), 0.25);
        let fit = model(vec![0.6, 0.8]);
        let exact = bag(&[1.0, 0.0], 0.6);
        assert_eq!(ridge_cost(&fit, std::slice::from_ref(&exact), 0.0).unwrap(), 0.0);
        assert!((ridge_cost(&fit, std::slice::from_ref(&exact), 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            ridge_cost(&model(vec![0.0; 3]), &[exact], 0.0),
            Err(LlpError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn two_by_two_exact_fit() {
        let bags = [bag(&[1.0, 1.0], 1.0), bag(&[0.0, 1.0], 0.0)];
        for solver in [RidgeSolver::ClosedForm, RidgeSolver::Iterative] {
            let cfg = RidgeConfig {
                lambda: 0.0,
                solver,
                ..Default::default()
            };
            let m = train_ridge(&bags, &cfg).unwrap();
            assert!((m.theta[0] - 1.0).abs() < 1e-10 && m.theta[1].abs() < 1e-10, "{:?}", m.theta);
        }
    }

    #[test]
    fn singular_without_regularization() {
        let bags = [bag(&[1.0, 1.0, 0.0], 1.0)];
        let cfg = RidgeConfig {
            lambda: 0.0,
            ..Default::default()
        };
        assert!(matches!(train_ridge(&bags, &cfg), Err(LlpError::Singular(_))));
        let dup = [bag(&[1.0, 1.0], 1.0), bag(&[1.0, 1.0], 0.0)];
        assert!(matches!(train_ridge(&dup, &cfg), Err(LlpError::Singular(_))));
        assert!(train_ridge(&[], &RidgeConfig::default()).is_err());
    }

    #[test]
    fn dual_and_primal_agree() {
        // 2 bags, 4 columns -> dual path; compare to CG on the same system
        let bags = [bag(&[1.0, 0.0, 2.0, 1.0], 0.3), bag(&[0.0, 1.0, 1.0, 1.0], 0.7)];
        let closed = train_ridge(&bags, &RidgeConfig::default()).unwrap();
        let cg = train_ridge(
            &bags,
            &RidgeConfig {
                solver: RidgeSolver::Iterative,
                tolerance: 1e-13,
                ..Default::default()
            },
        )
        .unwrap();
        for (a, b) in closed.theta.iter().zip(&cg.theta) {
            assert!((a - b).abs() < 1e-9);
        }
        let g = ridge_gradient(&closed, &bags, 0.01).unwrap();
        assert!(norm(&g) < 1e-10);
    }

    #[test]
    fn norm_shrinks_with_lambda() {
        let bags = [bag(&[1.0, 2.0, 1.0], 0.2), bag(&[3.0, 0.5, 1.0], 0.9), bag(&[0.2, 0.1, 1.0], 0.5)];
        let mut last = f64::INFINITY;
        for lambda in [0.0, 0.01, 0.1, 1.0, 10.0, 1e3, 1e6] {
            let m = train_ridge(&bags, &RidgeConfig { lambda, ..Default::default() }).unwrap();
            let n = norm(&m.theta);
            assert!(n <= last + 1e-12);
            last = n;
        }
        assert!(last < 1e-5);
    }

    #[test]
    fn trained_cost_not_above_zero_model() {
        let bags = [bag(&[1.0, 2.0, 1.0], 0.2), bag(&[3.0, 0.5, 1.0], 0.9)];
        let m = train_ridge(&bags, &RidgeConfig::default()).unwrap();
        assert!(ridge_cost(&m, &bags, 0.01).unwrap() <= ridge_cost(&model(vec![0.0; 3]), &bags, 0.01).unwrap());
    }

    #[test]
    fn prediction_truncates_and_classifies_strictly() {
        let x = FeatureVector::from_entries(2, [(0, 1.0), (1, 1.0)]).unwrap();
        let p = |a: f64| ridge_predict(&x, &model(vec![a, 0.0])).unwrap();
        assert_eq!(p(1.7), 1.0);
        assert_eq!(p(-0.2), 0.0);
        assert_eq!(p(0.3), 0.3);
        let c = |a: f64| ridge_classify(&x, &model(vec![a, 0.0])).unwrap();
        assert!(c(0.51));
        assert!(!c(0.5));
        assert!(!c(0.0));
        assert!(ridge_predict(&x, &model(vec![0.0; 3])).is_err());
    }

    #[test]
    fn bag_order_does_not_matter() {
        let bags = vec![bag(&[1.0, 2.0, 1.0], 0.2), bag(&[3.0, 0.5, 1.0], 0.9), bag(&[0.2, 0.1, 1.0], 0.5)];
        let mut rev = bags.clone();
        rev.reverse();
        let a = train_ridge(&bags, &RidgeConfig::default()).unwrap();
        let b = train_ridge(&rev, &RidgeConfig::default()).unwrap();
        for (x, y) in a.theta.iter().zip(&b.theta) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
