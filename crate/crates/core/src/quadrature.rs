//! Gauss–Legendre rules and an adaptive integrator for smooth 1-D integrands.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights mapped to `[0, 1]`.
pub fn gauss_legendre_unit(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = NonZeroUsize::new(order.max(1)).expect("order is at least one");
    let rule = GaussLegendre::new(n);
    let mut pairs: Vec<(f64, f64)> = rule.as_node_weight_pairs().to_vec();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w)).unzip()
}

/// Fixed-order rule on `[a, b]`.
#[derive(Debug, Clone)]
pub struct FixedRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl FixedRule {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre_unit(order);
        FixedRule { nodes, weights }
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = b - a;
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(a + h * x)).sum::<f64>() * h
    }
}

/// Adaptive bisection driven by the difference between one panel and its two
/// halves, each integrated with a 15-point Gauss–Legendre rule.
#[derive(Debug, Clone)]
pub struct Adaptive {
    rule: FixedRule,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: u32,
}

impl Default for Adaptive {
    fn default() -> Self {
        Adaptive { rule: FixedRule::new(15), abs_tol: 1e-12, rel_tol: 1e-12, max_depth: 40 }
    }
}

impl Adaptive {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        Adaptive { abs_tol, rel_tol, ..Self::default() }
    }

    pub fn integrate(&self, a: f64, b: f64, f: &mut impl FnMut(f64) -> f64) -> Result<f64> {
        let whole = self.rule.integrate(a, b, &mut *f);
        self.recurse(a, b, whole, self.abs_tol, 0, f)
    }

    fn recurse(&self, a: f64, b: f64, whole: f64, tol: f64, depth: u32, f: &mut impl FnMut(f64) -> f64) -> Result<f64> {
        let mid = 0.5 * (a + b);
        let left = self.rule.integrate(a, mid, &mut *f);
        let right = self.rule.integrate(mid, b, &mut *f);
        let both = left + right;
        if !both.is_finite() {
            return Err(Error::Quadrature(format!("non-finite integrand on [{a}, {b}]")));
        }
        if (both - whole).abs() <= tol.max(self.rel_tol * both.abs()) {
            return Ok(both);
        }
        if depth >= self.max_depth {
            return Err(Error::Quadrature(format!("no convergence on [{a}, {b}] after {depth} bisections")));
        }
        Ok(self.recurse(a, mid, left, 0.5 * tol, depth + 1, f)?
            + self.recurse(mid, b, right, 0.5 * tol, depth + 1, f)?)
    }

    /// `∫_a^∞ f` for integrands with (at least) exponential decay: panels of
    /// growing width are added until two consecutive ones fall below the
    /// absolute tolerance.
    pub fn integrate_to_infinity(&self, a: f64, f: &mut impl FnMut(f64) -> f64) -> Result<f64> {
        let mut total = 0.0;
        let mut lo = a;
        let mut width = 1.0;
        let mut quiet = 0;
        for _ in 0..200 {
            let part = self.integrate(lo, lo + width, f)?;
            total += part;
            lo += width;
            if part.abs() <= self.abs_tol.max(self.rel_tol * total.abs()) {
                quiet += 1;
                if quiet == 2 {
                    return Ok(total);
                }
            } else {
                quiet = 0;
            }
            width = (width * 1.5).min(50.0);
        }
        Err(Error::Quadrature(format!("tail beyond {lo} did not decay")))
    }
}
