//! Limited-memory BFGS with backtracking line search.
//!
//! The objective may return `f64::INFINITY` to mark forbidden regions
//! (collisions); the line search simply backtracks out of them.

use std::collections::VecDeque;

#[derive(Clone, Debug)]
pub struct LbfgsOpts {
    /// Stop when the Euclidean gradient norm falls below this.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// History length of the two-loop recursion.
    pub memory: usize,
    /// Stop when the step and the relative decrease both stall.
    pub step_tol: f64,
}

impl Default for LbfgsOpts {
    fn default() -> Self {
        Self { grad_tol: 1e-10, max_iters: 600, memory: 10, step_tol: 1e-15 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LbfgsOutcome {
    GradientConverged,
    StepStalled,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Clone, Debug)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub outcome: LbfgsOutcome,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` starting from `x0`. `eval` returns the value and fills
/// the gradient slice; the starting point must have a finite value.
pub fn lbfgs_minimize(
    mut eval: impl FnMut(&[f64], &mut [f64]) -> f64,
    x0: &[f64],
    opts: &LbfgsOpts,
) -> LbfgsResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = eval(&x, &mut g);
    if !f.is_finite() {
        return LbfgsResult {
            x,
            f,
            grad_norm: f64::INFINITY,
            iterations: 0,
            outcome: LbfgsOutcome::LineSearchFailed,
        };
    }

    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new(); // (s, y, rho)
    let mut outcome = LbfgsOutcome::MaxIterations;
    let mut iter = 0;

    while iter < opts.max_iters {
        let gnorm = norm(&g);
        if gnorm <= opts.grad_tol {
            outcome = LbfgsOutcome::GradientConverged;
            break;
        }

        // two-loop recursion for the search direction
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            for i in 0..n {
                q[i] -= a * y[i];
            }
            alphas.push(a);
        }
        let gamma = history
            .back()
            .map(|(s, y, _)| dot(s, y) / dot(y, y).max(1e-300))
            .unwrap_or(1.0);
        for v in &mut q {
            *v *= gamma;
        }
        for ((s, y, rho), &a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for i in 0..n {
                q[i] += (a - b) * s[i];
            }
        }
        let mut p: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &p);
        if slope >= 0.0 {
            // not a descent direction; fall back to steepest descent
            p = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
            history.clear();
        }

        // backtracking Armijo search
        let mut alpha = 1.0;
        let c1 = 1e-4;
        let mut xt = vec![0.0; n];
        let mut gt = vec![0.0; n];
        let mut accepted = false;
        for _ in 0..48 {
            for i in 0..n {
                xt[i] = x[i] + alpha * p[i];
            }
            let ft = eval(&xt, &mut gt);
            if ft.is_finite() && ft <= f + c1 * alpha * slope {
                // curvature-guarded history update
                let s: Vec<f64> = (0..n).map(|i| xt[i] - x[i]).collect();
                let y: Vec<f64> = (0..n).map(|i| gt[i] - g[i]).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * norm(&s) * norm(&y) {
                    let rho = 1.0 / sy;
                    history.push_back((s, y, rho));
                    if history.len() > opts.memory {
                        history.pop_front();
                    }
                }
                let step = alpha * norm(&p);
                let df = f - ft;
                x.copy_from_slice(&xt);
                g.copy_from_slice(&gt);
                f = ft;
                accepted = true;
                if step <= opts.step_tol * (1.0 + norm(&x)) && df <= opts.step_tol * (1.0 + f.abs())
                {
                    outcome = LbfgsOutcome::StepStalled;
                    iter += 1;
                    return LbfgsResult { grad_norm: norm(&g), x, f, iterations: iter, outcome };
                }
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            outcome = LbfgsOutcome::LineSearchFailed;
            break;
        }
        iter += 1;
    }

    LbfgsResult { grad_norm: norm(&g), x, f, iterations: iter, outcome }
}
