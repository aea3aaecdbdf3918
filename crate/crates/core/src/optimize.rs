// Copyright 2026 qsens Contributors
// SPDX-License-Identifier: Apache-2.0

//! Limited-memory BFGS with Armijo backtracking and optional box projection.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LbfgsOptions {
    /// Number of curvature pairs kept.
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when `‖∇f‖_∞` falls below this.
    pub gradient_tolerance: f64,
    /// Stop as soon as `f` falls below this.
    pub target_value: f64,
    pub max_backtracks: usize,
    /// Sufficient-decrease constant.
    pub armijo: f64,
    /// Symmetric box `|x_i| ≤ bound`, enforced by projection.
    pub bound: Option<f64>,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 12,
            max_iterations: 1000,
            gradient_tolerance: 1e-9,
            target_value: f64::NEG_INFINITY,
            max_backtracks: 40,
            armijo: 1e-4,
            bound: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    TargetReached,
    GradientTolerance,
    MaxIterations,
    /// No step along the search direction decreased the objective.
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// Objective value after each accepted iterate (starting point first).
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Gradient with components that push against an active bound removed.
fn projected_gradient(x: &[f64], g: &[f64], bound: Option<f64>) -> Vec<f64> {
    match bound {
        None => g.to_vec(),
        Some(b) => x
            .iter()
            .zip(g)
            .map(|(&xi, &gi)| {
                if (xi >= b && gi < 0.0) || (xi <= -b && gi > 0.0) {
                    0.0
                } else {
                    gi
                }
            })
            .collect(),
    }
}

/// Two-loop recursion: `d = −H·g`.
fn two_loop(g: &[f64], pairs: &[(Vec<f64>, Vec<f64>, f64)]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.last() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|qi| *qi *= gamma);
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|qi| *qi = -*qi);
    q
}

/// Minimizes `f` from `x0`; `f` returns the value and gradient.
///
/// Accepted iterates never increase the objective.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if opts.memory == 0 {
        return Err(Error::InvalidArgument("L-BFGS memory must be ≥ 1".into()));
    }
    let project = |x: &mut Vec<f64>| {
        if let Some(b) = opts.bound {
            x.iter_mut().for_each(|xi| *xi = xi.clamp(-b, b));
        }
    };
    let mut x = x0;
    project(&mut x);
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() {
        return Err(Error::Numerical(
            "objective is not finite at the starting point".into(),
        ));
    }
    let mut evaluations = 1;
    let mut pairs: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(opts.memory);
    let mut history = vec![fx];
    let mut iterations = 0;

    let termination = loop {
        if fx < opts.target_value {
            break Termination::TargetReached;
        }
        if inf_norm(&projected_gradient(&x, &g, opts.bound)) <= opts.gradient_tolerance {
            break Termination::GradientTolerance;
        }
        if iterations >= opts.max_iterations {
            break Termination::MaxIterations;
        }

        let mut d = two_loop(&g, &pairs);
        if dot(&d, &g) >= 0.0 {
            pairs.clear();
            d = g.iter().map(|x| -x).collect();
        }
        let mut t = if pairs.is_empty() {
            1.0 / dot(&g, &g).sqrt().max(1.0)
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            project(&mut xn);
            let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &step);
            if decrease >= 0.0 {
                t *= 0.5;
                continue;
            }
            evaluations += 1;
            match f(&xn) {
                Ok((fn_, gn)) if fn_.is_finite() && fn_ <= fx + opts.armijo * decrease => {
                    accepted = Some((xn, fn_, gn, step));
                    break;
                }
                _ => t *= 0.5,
            }
        }

        let Some((xn, fn_, gn, s)) = accepted else {
            if pairs.is_empty() {
                break Termination::LineSearchFailed;
            }
            // retry from steepest descent before giving up
            pairs.clear();
            continue;
        };
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if pairs.len() == opts.memory {
                pairs.remove(0);
            }
            pairs.push((s, y, 1.0 / sy));
        }
        x = xn;
        fx = fn_;
        g = gn;
        iterations += 1;
        history.push(fx);
    };

    Ok(LbfgsOutcome {
        x,
        value: fx,
        gradient: g,
        iterations,
        evaluations,
        termination,
        history,
    })
}
