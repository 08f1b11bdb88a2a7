//! Unconstrained smooth minimization: limited-memory BFGS (two-loop
//! recursion) or plain steepest descent, both with a backtracking
//! sufficient-decrease line search so accepted costs never increase.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// A differentiable cost. `evaluate` writes the gradient into `grad` and
/// returns the cost.
pub trait Objective {
    fn dimension(&self) -> usize;
    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Method {
    Lbfgs { memory: usize },
    GradientDescent,
}

impl Default for Method {
    fn default() -> Self {
        Method::Lbfgs { memory: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinimizerConfig {
    pub method: Method,
    pub max_iterations: usize,
    /// Stop once the gradient norm falls to this value.
    pub gradient_tolerance: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Step shrink factor per rejected trial.
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for MinimizerConfig {
    fn default() -> Self {
        Self {
            method: Method::default(),
            max_iterations: 100,
            gradient_tolerance: 1e-9,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: f64,
    pub gradient_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    /// No step satisfying sufficient decrease was found.
    LineSearchExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub cost: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Entry 0 is the starting point; one entry per accepted step after it.
    pub history: Vec<IterationRecord>,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Curvature {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

fn two_loop(history: &VecDeque<Curvature>, grad: &[f64]) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for c in history.iter().rev() {
        let alpha = c.rho * dot(&c.s, &q);
        for (qi, yi) in q.iter_mut().zip(&c.y) {
            *qi -= alpha * yi;
        }
        alphas.push(alpha);
    }
    if let Some(last) = history.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (c, alpha) in history.iter().zip(alphas.into_iter().rev()) {
        let beta = c.rho * dot(&c.y, &q);
        for (qi, si) in q.iter_mut().zip(&c.s) {
            *qi += (alpha - beta) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

pub fn minimize<O: Objective + ?Sized>(objective: &O, x0: Vec<f64>, config: &MinimizerConfig) -> Result<Minimum> {
    let n = objective.dimension();
    assert_eq!(x0.len(), n, "starting point has wrong dimension");
    let memory = match config.method {
        Method::Lbfgs { memory } => memory,
        Method::GradientDescent => 0,
    };

    let mut x = x0;
    let mut grad = vec![0.0; n];
    let mut cost = objective.evaluate(&x, &mut grad)?;
    let mut gnorm = norm(&grad);
    let mut history = vec![IterationRecord {
        iteration: 0,
        cost,
        gradient_norm: gnorm,
        step: 0.0,
    }];
    let mut curvature: VecDeque<Curvature> = VecDeque::with_capacity(memory);

    let mut x_trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        if gnorm <= config.gradient_tolerance {
            termination = Termination::GradientTolerance;
            break;
        }
        let mut direction = if curvature.is_empty() {
            grad.iter().map(|g| -g).collect()
        } else {
            two_loop(&curvature, &grad)
        };
        let mut slope = dot(&grad, &direction);
        if !(slope < 0.0) {
            curvature.clear();
            direction = grad.iter().map(|g| -g).collect();
            slope = -gnorm * gnorm;
        }

        let mut step = if curvature.is_empty() { 1.0 / gnorm.max(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            for ((xt, xi), di) in x_trial.iter_mut().zip(&x).zip(&direction) {
                *xt = xi + step * di;
            }
            let trial = objective.evaluate(&x_trial, &mut g_trial)?;
            if trial.is_finite() && trial <= cost + config.armijo * step * slope {
                accepted = Some(trial);
                break;
            }
            step *= config.backtrack;
        }
        let Some(new_cost) = accepted else {
            termination = Termination::LineSearchExhausted;
            break;
        };

        if memory > 0 {
            let s: Vec<f64> = x_trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g_trial.iter().zip(&grad).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
                if curvature.len() == memory {
                    curvature.pop_front();
                }
                curvature.push_back(Curvature { s, y, rho: 1.0 / sy });
            }
        }

        std::mem::swap(&mut x, &mut x_trial);
        std::mem::swap(&mut grad, &mut g_trial);
        cost = new_cost;
        gnorm = norm(&grad);
        iterations += 1;
        history.push(IterationRecord {
            iteration: iterations,
            cost,
            gradient_norm: gnorm,
            step,
        });
    }
    if iterations == config.max_iterations && gnorm <= config.gradient_tolerance {
        termination = Termination::GradientTolerance;
    }

    Ok(Minimum {
        x,
        cost,
        gradient_norm: gnorm,
        iterations,
        termination,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// f(x) = Σ a_i (x_i - c_i)^2
    struct Quadratic {
        a: Vec<f64>,
        c: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn dimension(&self) -> usize {
            self.a.len()
        }
        fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
            let mut f = 0.0;
            for i in 0..x.len() {
                let d = x[i] - self.c[i];
                f += self.a[i] * d * d;
                grad[i] = 2.0 * self.a[i] * d;
            }
            Ok(f)
        }
    }

    struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn dimension(&self) -> usize {
            2
        }
        fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
            let (a, b) = (x[0], x[1]);
            grad[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            grad[1] = 200.0 * (b - a * a);
            Ok((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2))
        }
    }

    #[test]
    fn lbfgs_solves_ill_conditioned_quadratic() {
        let q = Quadratic {
            a: vec![1.0, 10.0, 100.0, 1000.0],
            c: vec![1.0, -2.0, 3.0, 0.5],
        };
        let m = minimize(&q, vec![0.0; 4], &MinimizerConfig::default()).unwrap();
        assert_eq!(m.termination, Termination::GradientTolerance);
        for (x, c) in m.x.iter().zip(&q.c) {
            assert!((x - c).abs() < 1e-8);
        }
    }

    #[test]
    fn lbfgs_rosenbrock() {
        let cfg = MinimizerConfig {
            max_iterations: 500,
            ..Default::default()
        };
        let m = minimize(&Rosenbrock, vec![-1.2, 1.0], &cfg).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn costs_never_increase() {
        for method in [Method::GradientDescent, Method::Lbfgs { memory: 3 }] {
            let cfg = MinimizerConfig {
                method,
                max_iterations: 200,
                ..Default::default()
            };
            let m = minimize(&Rosenbrock, vec![-1.2, 1.0], &cfg).unwrap();
            assert!(m.history.windows(2).all(|w| w[1].cost <= w[0].cost));
            assert_eq!(m.history.len(), m.iterations + 1);
        }
    }

    #[test]
    fn zero_iterations_returns_start() {
        let cfg = MinimizerConfig {
            max_iterations: 0,
            ..Default::default()
        };
        let m = minimize(&Rosenbrock, vec![0.5, 0.5], &cfg).unwrap();
        assert_eq!(m.x, vec![0.5, 0.5]);
        assert_eq!(m.termination, Termination::MaxIterations);
    }
}
