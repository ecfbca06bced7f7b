//! Geometric programs in convex (log-variable) form, solved with a
//! damped-Newton barrier method.
//!
//! Every constraint has the shape
//!
//! ```text
//! sum_r s_r * log(sum_j c_rj exp(z_{k_rj})) + sum_i l_i z_i + b <= 0,   s_r > 0
//! ```
//!
//! where a term without a variable is the constant `c_rj`. This covers
//! posynomial upper bounds and, after taking logs, posynomial-over-monomial
//! ratios as well as monomial-times-posynomial products. Every variable also
//! carries a box `lower <= z <= upper`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `c * exp(z_var)`, or the constant `c` when `var` is `None`; stored as `ln c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub var: Option<usize>,
    pub log_coef: f64,
}

impl Term {
    pub fn var(var: usize, coef: f64) -> Self {
        Term {
            var: Some(var),
            log_coef: coef.ln(),
        }
    }

    pub fn constant(coef: f64) -> Self {
        Term {
            var: None,
            log_coef: coef.ln(),
        }
    }
}

/// `log(sum_j c_j exp(z_{k_j}))`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LogSumExp {
    pub terms: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Constraint {
    pub lse: Vec<(f64, LogSumExp)>,
    pub linear: Vec<(usize, f64)>,
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogGp {
    pub dim: usize,
    /// Minimized linear objective.
    pub objective: Vec<(usize, f64)>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierOptions {
    /// Target duality gap `m / t`.
    pub tol: f64,
    pub factor: f64,
    pub t0: f64,
    pub max_newton: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions {
            tol: 1e-8,
            factor: 10.0,
            t0: 1.0,
            max_newton: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierSolution {
    pub z: Vec<f64>,
    pub objective: f64,
    /// Duality gap bound `m / t` of the last centering step.
    pub gap: f64,
    /// Newton decrement of the last centering step.
    pub decrement: f64,
    pub newton_steps: usize,
}

impl LogSumExp {
    fn exponents(&self, z: &[f64]) -> Vec<f64> {
        self.terms
            .iter()
            .map(|t| t.log_coef + t.var.map_or(0.0, |k| z[k]))
            .collect()
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        let e = self.exponents(z);
        let top = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        top + e.iter().map(|&v| (v - top).exp()).sum::<f64>().ln()
    }

    /// Softmax weights of the terms.
    fn weights(&self, z: &[f64]) -> Vec<f64> {
        let e = self.exponents(z);
        let top = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = e.iter().map(|&v| (v - top).exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    }
}

impl Constraint {
    pub fn value(&self, z: &[f64]) -> f64 {
        self.constant
            + self.linear.iter().map(|&(i, c)| c * z[i]).sum::<f64>()
            + self.lse.iter().map(|(s, l)| s * l.value(z)).sum::<f64>()
    }

    /// Value, sparse gradient, and the Hessian as a list of weighted
    /// `(diag - p p^T)` blocks.
    fn derivatives(&self, z: &[f64]) -> (f64, Vec<(usize, f64)>, Vec<(f64, Vec<(usize, f64)>)>) {
        let mut grad: Vec<(usize, f64)> = self.linear.clone();
        let mut blocks = Vec::with_capacity(self.lse.len());
        for (s, l) in &self.lse {
            let w = l.weights(z);
            let mut p: Vec<(usize, f64)> = l
                .terms
                .iter()
                .zip(&w)
                .filter_map(|(t, &wj)| t.var.map(|k| (k, wj)))
                .collect();
            merge(&mut p);
            grad.extend(p.iter().map(|&(k, v)| (k, s * v)));
            blocks.push((*s, p));
        }
        merge(&mut grad);
        (self.value(z), grad, blocks)
    }
}

fn merge(v: &mut Vec<(usize, f64)>) {
    v.sort_by_key(|&(k, _)| k);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(v.len());
    for &(k, c) in v.iter() {
        match out.last_mut() {
            Some(last) if last.0 == k => last.1 += c,
            _ => out.push((k, c)),
        }
    }
    *v = out;
}

impl LogGp {
    pub fn objective_value(&self, z: &[f64]) -> f64 {
        self.objective.iter().map(|&(i, c)| c * z[i]).sum()
    }

    /// Largest constraint value and smallest box margin at `z`.
    pub fn feasibility(&self, z: &[f64]) -> (f64, f64) {
        let worst = self
            .constraints
            .iter()
            .map(|c| c.value(z))
            .fold(f64::NEG_INFINITY, f64::max);
        let margin = z
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| (v - lo).min(hi - v))
            .fold(f64::INFINITY, f64::min);
        (worst, margin)
    }

    fn strictly_feasible(&self, z: &[f64]) -> bool {
        let (worst, margin) = self.feasibility(z);
        worst < 0.0 && margin > 0.0
    }

    fn barrier_count(&self) -> usize {
        self.constraints.len() + 2 * self.dim
    }

    /// `t f0(z) - sum log(-f_i(z)) - sum log(box margins)`, or `None` outside
    /// the strict interior.
    fn merit(&self, z: &[f64], t: f64) -> Option<f64> {
        let mut v = t * self.objective_value(z);
        for c in &self.constraints {
            let f = c.value(z);
            if !(f < 0.0) {
                return None;
            }
            v -= (-f).ln();
        }
        for ((&zi, &lo), &hi) in z.iter().zip(&self.lower).zip(&self.upper) {
            if !(zi > lo && zi < hi) {
                return None;
            }
            v -= (zi - lo).ln() + (hi - zi).ln();
        }
        Some(v)
    }

    fn newton_system(&self, z: &[f64], t: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.dim;
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        for &(i, c) in &self.objective {
            g[i] += t * c;
        }
        for c in &self.constraints {
            let (f, grad, blocks) = c.derivatives(z);
            let inv = 1.0 / (-f);
            for &(i, gi) in &grad {
                g[i] += gi * inv;
                for &(j, gj) in &grad {
                    h[(i, j)] += gi * gj * inv * inv;
                }
            }
            for (s, p) in &blocks {
                let w = s * inv;
                for &(i, pi) in p {
                    h[(i, i)] += w * pi;
                    for &(j, pj) in p {
                        h[(i, j)] -= w * pi * pj;
                    }
                }
            }
        }
        for i in 0..n {
            let a = z[i] - self.lower[i];
            let b = self.upper[i] - z[i];
            g[i] += -1.0 / a + 1.0 / b;
            h[(i, i)] += 1.0 / (a * a) + 1.0 / (b * b);
        }
        (g, h)
    }

    /// Barrier method from the strictly feasible point `z0`.
    pub fn solve(&self, z0: &[f64], opts: &BarrierOptions) -> Result<BarrierSolution> {
        if z0.len() != self.dim || self.lower.len() != self.dim || self.upper.len() != self.dim {
            return Err(Error::DimensionMismatch("GP starting point and bounds must match its dimension".into()));
        }
        if !self.strictly_feasible(z0) {
            let (worst, margin) = self.feasibility(z0);
            return Err(Error::SolverFailure(format!(
                "starting point is not strictly feasible (max constraint {worst:e}, box margin {margin:e})"
            )));
        }
        let m = self.barrier_count() as f64;
        let mut z = z0.to_vec();
        let mut t = opts.t0;
        let mut steps = 0;
        loop {
            let decrement = self.center(&mut z, t, opts, &mut steps)?;
            let gap = m / t;
            if gap <= opts.tol {
                return Ok(BarrierSolution {
                    objective: self.objective_value(&z),
                    z,
                    gap,
                    decrement,
                    newton_steps: steps,
                });
            }
            t *= opts.factor;
        }
    }

    fn center(&self, z: &mut Vec<f64>, t: f64, opts: &BarrierOptions, steps: &mut usize) -> Result<f64> {
        let mut current = self.merit(z, t).expect("centering starts strictly inside");
        loop {
            if *steps >= opts.max_newton {
                return Err(Error::SolverFailure(format!(
                    "no convergence after {} Newton steps",
                    opts.max_newton
                )));
            }
            *steps += 1;
            let (g, h) = self.newton_system(z, t);
            let dir = match h.clone().cholesky() {
                Some(ch) => -ch.solve(&g),
                None => {
                    // Fall back to a shifted system when the Hessian is
                    // numerically singular.
                    let shift = 1e-12 * h.diagonal().amax().max(1.0);
                    let shifted = h + DMatrix::identity(self.dim, self.dim) * shift;
                    match shifted.cholesky() {
                        Some(ch) => -ch.solve(&g),
                        None => return Err(Error::SolverFailure("Newton system is not positive definite".into())),
                    }
                }
            };
            let slope = g.dot(&dir);
            let decrement_sq = -slope;
            if decrement_sq / 2.0 <= 1e-10 {
                return Ok(decrement_sq.max(0.0).sqrt());
            }
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..80 {
                let trial: Vec<f64> = z.iter().zip(dir.iter()).map(|(&a, &d)| a + step * d).collect();
                if let Some(v) = self.merit(&trial, t) {
                    if v <= current + 0.01 * step * slope {
                        let progress = current - v;
                        *z = trial;
                        current = v;
                        accepted = progress > 1e-14 * current.abs().max(1.0);
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                // No further progress at working precision.
                return Ok(decrement_sq.max(0.0).sqrt());
            }
        }
    }
}
