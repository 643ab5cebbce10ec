//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! The search direction comes from the two-loop recursion over the most
//! recent `memory` curvature pairs, scaled by `γ = sᵀy / yᵀy`. The line
//! search brackets a step satisfying both Wolfe conditions and refines it by
//! safeguarded cubic interpolation.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop once `max_i |g_i|` drops below this.
    pub grad_tol: f64,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    /// Objective evaluations allowed per line search.
    pub max_line_search_steps: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iter: 200,
            grad_tol: 1e-5,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            max_line_search_steps: 40,
        }
    }
}

impl LbfgsOptions {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return Err(Error::Domain(format!(
                "Wolfe constants need 0 < c1 < c2 < 1 (got {} and {})",
                self.wolfe_c1, self.wolfe_c2
            )));
        }
        if self.memory == 0 {
            return Err(Error::Domain("L-BFGS memory must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    /// No acceptable step was found; the best iterate so far is returned.
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_max_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Two-loop recursion: returns `-H g`.
fn direction(grad: &[f64], pairs: &VecDeque<Pair>) -> Vec<f64> {
    let mut q: Vec<f64> = grad.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for p in pairs.iter().rev() {
        let a = p.rho * dot(&p.s, &q);
        for (qi, yi) in q.iter_mut().zip(&p.y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some(last) = pairs.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (p, a) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = p.rho * dot(&p.y, &q);
        for (qi, si) in q.iter_mut().zip(&p.s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

struct Probe {
    step: f64,
    value: f64,
    slope: f64,
    x: Vec<f64>,
    grad: Vec<f64>,
}

/// Minimizer of the cubic through `(a, fa, da)` and `(b, fb, db)`, kept
/// inside the interval away from its ends; falls back to bisection.
fn cubic_step(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (hi - lo);
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    let mut t = f64::NAN;
    if disc >= 0.0 {
        let d2 = (b - a).signum() * disc.sqrt();
        t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    }
    if !t.is_finite() || t < lo + margin || t > hi - margin {
        t = 0.5 * (lo + hi);
    }
    t
}

/// Differences in objective value below this are rounding noise.
fn value_noise(f0: f64) -> f64 {
    1e-12 * f0.abs().max(1.0)
}

fn sufficient_decrease(f0: f64, slope0: f64, c1: f64, p: &Probe) -> bool {
    if p.value <= f0 + c1 * p.step * slope0 {
        return true;
    }
    p.value <= f0 + value_noise(f0) && p.slope <= (2.0 * c1 - 1.0) * slope0
}

struct LineSearch<'a, F> {
    objective: &'a mut F,
    x: &'a [f64],
    dir: &'a [f64],
    f0: f64,
    slope0: f64,
    c1: f64,
    c2: f64,
    budget: usize,
    evaluations: usize,
}

impl<'a, F: FnMut(&[f64]) -> (f64, Vec<f64>)> LineSearch<'a, F> {
    fn probe(&mut self, step: f64) -> Option<Probe> {
        if self.evaluations >= self.budget {
            return None;
        }
        self.evaluations += 1;
        let x: Vec<f64> = self.x.iter().zip(self.dir).map(|(a, d)| a + step * d).collect();
        let (value, grad) = (self.objective)(&x);
        let slope = dot(&grad, self.dir);
        Some(Probe {
            step,
            value,
            slope,
            x,
            grad,
        })
    }

    /// Sufficient decrease, or its approximate form once the decrease is
    /// below the rounding error of the objective value.
    fn armijo(&self, p: &Probe) -> bool {
        sufficient_decrease(self.f0, self.slope0, self.c1, p)
    }

    fn curvature(&self, p: &Probe) -> bool {
        p.slope.abs() <= -self.c2 * self.slope0
    }

    fn run(&mut self, initial: f64) -> Option<Probe> {
        let mut prev = Probe {
            step: 0.0,
            value: self.f0,
            slope: self.slope0,
            x: self.x.to_vec(),
            grad: Vec::new(),
        };
        let mut step = initial;
        let mut first = true;
        loop {
            let mut p = self.probe(step)?;
            // back off from regions where the objective is not finite
            while !(p.value.is_finite() && all_finite(&p.grad)) {
                step = prev.step + 0.5 * (step - prev.step);
                p = self.probe(step)?;
            }
            if !self.armijo(&p) || (!first && p.value > prev.value + value_noise(self.f0)) {
                return self.zoom(prev, p);
            }
            if self.curvature(&p) {
                return Some(p);
            }
            if p.slope >= 0.0 {
                return self.zoom(p, prev);
            }
            step = p.step * 2.0;
            prev = p;
            first = false;
        }
    }

    /// `lo` satisfies Armijo and has the lower value; the minimizer lies
    /// between `lo` and `hi`.
    fn zoom(&mut self, mut lo: Probe, mut hi: Probe) -> Option<Probe> {
        loop {
            let step = cubic_step(lo.step, lo.value, lo.slope, hi.step, hi.value, hi.slope);
            if (hi.step - lo.step).abs() <= f64::EPSILON * lo.step.abs().max(1.0) {
                return None;
            }
            let p = self.probe(step)?;
            if !p.value.is_finite() || !self.armijo(&p) || p.value > lo.value + value_noise(self.f0) {
                hi = p;
                continue;
            }
            if self.curvature(&p) {
                return Some(p);
            }
            if p.slope * (hi.step - lo.step) >= 0.0 {
                hi = lo;
            }
            lo = p;
        }
    }
}

/// Minimizes `objective`, which returns `(value, gradient)` at a point.
pub fn lbfgs_minimize<F>(mut objective: F, x0: &[f64], opts: &LbfgsOptions) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    opts.validate()?;
    if !all_finite(x0) {
        return Err(Error::Optimizer("starting point is not finite".into()));
    }
    let mut x = x0.to_vec();
    let (mut f, mut g) = objective(&x);
    let mut evaluations = 1;
    if !f.is_finite() || !all_finite(&g) {
        return Err(Error::Optimizer(format!(
            "objective is not finite at the starting point (value {f})"
        )));
    }
    if g.len() != x.len() {
        return Err(Error::Dimension(format!(
            "gradient has {} entries for {} parameters",
            g.len(),
            x.len()
        )));
    }

    let mut pairs: VecDeque<Pair> = VecDeque::with_capacity(opts.memory);
    let mut iterations = 0;
    let termination = loop {
        if max_norm(&g) < opts.grad_tol {
            break Termination::Converged;
        }
        if iterations >= opts.max_iter {
            break Termination::MaxIterations;
        }

        let mut dir = direction(&g, &pairs);
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            pairs.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
        }
        let initial = if pairs.is_empty() {
            (1.0 / max_norm(&g)).min(1.0)
        } else {
            1.0
        };

        let mut search = LineSearch {
            objective: &mut objective,
            x: &x,
            dir: &dir,
            f0: f,
            slope0: slope,
            c1: opts.wolfe_c1,
            c2: opts.wolfe_c2,
            budget: opts.max_line_search_steps,
            evaluations: 0,
        };
        let found = search.run(initial);
        evaluations += search.evaluations;
        let Some(p) = found else {
            if !pairs.is_empty() {
                // retry once along steepest descent with fresh memory
                pairs.clear();
                continue;
            }
            break Termination::LineSearchFailed;
        };

        debug_assert!(sufficient_decrease(f, slope, opts.wolfe_c1, &p), "Armijo violated");
        debug_assert!(p.slope.abs() <= -opts.wolfe_c2 * slope, "curvature violated");

        let s: Vec<f64> = p.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = p.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > f64::EPSILON * dot(&y, &y) {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back(Pair { s, y, rho: 1.0 / sy });
        }
        x = p.x;
        f = p.value;
        g = p.grad;
        iterations += 1;
    };

    Ok(LbfgsResult {
        grad_max_norm: max_norm(&g),
        x,
        value: f,
        iterations,
        evaluations,
        termination,
    })
}
