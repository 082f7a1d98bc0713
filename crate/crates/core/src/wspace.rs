//! Truncated domain, bilinear finite elements and the weighted norms.
//!
//! The strip `ℝ × [a, ∞)` is cut to `[x_min, x_max] × [a, y_max]` and
//! covered by a uniform `nx × ny` cell grid. Discrete functions are
//! piecewise bilinear with zero values on the four edges, so only the
//! `(nx−1)(ny−1)` interior nodes carry unknowns, numbered row-major with `x`
//! fastest:
//!
//! ```text
//! index(i, j) = (j − 1)(nx − 1) + (i − 1),   1 ≤ i < nx, 1 ≤ j < ny
//! ```
//!
//! Norms are weighted with `φ²ψ²`, `φ(x) = e^{ν|x|}`, `ψ(y) = e^{μy²/2}`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HestonParams, OptionSpec};
use crate::quadrature::gauss_legendre_unit;
use crate::sum::pairwise;

/// Default variance cutoff `a`.
pub const DEFAULT_A: f64 = 1e-4;

pub fn weight_phi(x: f64, nu: f64) -> f64 {
    (nu * x.abs()).exp()
}

pub fn weight_psi(y: f64, mu: f64) -> f64 {
    (0.5 * mu * y * y).exp()
}

/// `φ²(x)ψ²(y)`.
pub fn weight_sq(x: f64, y: f64, nu: f64, mu: f64) -> f64 {
    (2.0 * nu * x.abs() + mu * y * y).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncatedDomain {
    pub x_min: f64,
    pub x_max: f64,
    pub a: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl TruncatedDomain {
    pub fn new(x_min: f64, x_max: f64, a: f64, y_max: f64, nx: usize, ny: usize) -> Result<Self> {
        let d = TruncatedDomain { x_min, x_max, a, y_max, nx, ny };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.a, self.y_max].iter().all(|v| v.is_finite());
        if !finite || !(self.x_min < self.x_max) || !(0.0 < self.a && self.a < self.y_max) {
            return Err(Error::invalid(format!("domain needs x_min < x_max and 0 < a < y_max (got {:?})", self)));
        }
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::invalid("domain needs at least 2 cells per axis"));
        }
        Ok(())
    }

    /// Default truncation for pricing: `ln K ± max(1, 6√(mT))` in `x`, and in
    /// `y` the larger of `4m` and `m` plus twelve stationary CIR standard
    /// deviations `σ√(m/(2κ))`, on a 128 × 96 grid.
    pub fn for_option(p: &HestonParams, spec: &OptionSpec) -> Self {
        let half = (6.0 * (p.m * spec.maturity).sqrt()).max(1.0);
        let centre = spec.strike.ln();
        let sd = p.sigma * (p.m / (2.0 * p.kappa)).sqrt();
        TruncatedDomain {
            x_min: centre - half,
            x_max: centre + half,
            a: DEFAULT_A,
            y_max: (4.0 * p.m).max(p.m + 12.0 * sd),
            nx: 128,
            ny: 96,
        }
    }

    pub fn with_cells(self, nx: usize, ny: usize) -> Self {
        TruncatedDomain { nx, ny, ..self }
    }

    pub fn hx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y_max - self.a) / self.ny as f64
    }

    pub fn x_node(&self, i: usize) -> f64 {
        if i == self.nx {
            self.x_max
        } else {
            self.x_min + i as f64 * self.hx()
        }
    }

    pub fn y_node(&self, j: usize) -> f64 {
        if j == self.ny {
            self.y_max
        } else {
            self.a + j as f64 * self.hy()
        }
    }

    pub fn n_interior(&self) -> usize {
        (self.nx - 1) * (self.ny - 1)
    }

    /// Unknown index of node `(i, j)`, or `None` on the boundary.
    pub fn index(&self, i: usize, j: usize) -> Option<usize> {
        if i == 0 || j == 0 || i >= self.nx || j >= self.ny {
            None
        } else {
            Some((j - 1) * (self.nx - 1) + (i - 1))
        }
    }

    /// Node `(i, j)` of unknown `k`.
    pub fn node_of(&self, k: usize) -> (usize, usize) {
        (k % (self.nx - 1) + 1, k / (self.nx - 1) + 1)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.a..=self.y_max).contains(&y)
    }

    /// Cell index and local coordinate in `[0, 1]` along `x`.
    pub(crate) fn locate_x(&self, x: f64) -> Option<(usize, f64)> {
        locate(x, self.x_min, self.x_max, self.nx)
    }

    pub(crate) fn locate_y(&self, y: f64) -> Option<(usize, f64)> {
        locate(y, self.a, self.y_max, self.ny)
    }

    /// Unknown ordering with `y` fastest; narrower band when `ny < nx`.
    pub fn y_major_permutation(&self) -> Vec<usize> {
        let (mx, my) = (self.nx - 1, self.ny - 1);
        (0..mx).flat_map(|i| (0..my).map(move |j| j * mx + i)).collect()
    }
}

fn locate(v: f64, lo: f64, hi: f64, n: usize) -> Option<(usize, f64)> {
    if !(lo..=hi).contains(&v) {
        return None;
    }
    let s = (v - lo) / (hi - lo) * n as f64;
    let c = (s.floor() as usize).min(n - 1);
    Some((c, s - c as f64))
}

/// Gauss–Legendre rule applied per cell and per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub const DEFAULT_ORDER: usize = 5;

    pub fn new(order: usize) -> Result<Self> {
        if order < 3 {
            return Err(Error::invalid(format!("quadrature order must be >= 3, got {order}")));
        }
        let (nodes, weights) = gauss_legendre_unit(order);
        Ok(QuadratureRule { order, nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Nodes on `[0, 1]`.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights on `[0, 1]`, summing to one.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        QuadratureRule::new(Self::DEFAULT_ORDER).expect("default order is valid")
    }
}

/// Nodal coefficients at the interior nodes; boundary values are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFunction {
    values: Vec<f64>,
}

impl DiscreteFunction {
    pub fn new(dom: &TruncatedDomain, values: Vec<f64>) -> Result<Self> {
        if values.len() != dom.n_interior() {
            return Err(Error::invalid(format!("expected {} coefficients, got {}", dom.n_interior(), values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite coefficient".into()));
        }
        Ok(DiscreteFunction { values })
    }

    pub fn zeros(dom: &TruncatedDomain) -> Self {
        DiscreteFunction { values: vec![0.0; dom.n_interior()] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, c: f64) -> Self {
        DiscreteFunction { values: self.values.iter().map(|v| c * v).collect() }
    }

    /// Value at node `(i, j)`, zero on the boundary.
    pub fn node_value(&self, dom: &TruncatedDomain, i: usize, j: usize) -> f64 {
        dom.index(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn min_max(&self) -> (f64, f64) {
        // boundary nodes are zero, so zero is always attained
        self.values.iter().fold((0.0f64, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Bilinear interpolant at `(x, y)`; `None` outside the domain.
pub fn evaluate(v: &DiscreteFunction, dom: &TruncatedDomain, x: f64, y: f64) -> Option<f64> {
    let (ci, sx) = dom.locate_x(x)?;
    let (cj, sy) = dom.locate_y(y)?;
    let f = |i, j| v.node_value(dom, i, j);
    Some(
        (1.0 - sx) * (1.0 - sy) * f(ci, cj)
            + sx * (1.0 - sy) * f(ci + 1, cj)
            + (1.0 - sx) * sy * f(ci, cj + 1)
            + sx * sy * f(ci + 1, cj + 1),
    )
}

/// Nodal interpolation at interior nodes.
pub fn project(f: impl Fn(f64, f64) -> f64, dom: &TruncatedDomain) -> DiscreteFunction {
    let values = (0..dom.n_interior())
        .map(|k| {
            let (i, j) = dom.node_of(k);
            f(dom.x_node(i), dom.y_node(j))
        })
        .collect();
    DiscreteFunction { values }
}

/// Squared pieces of the weighted norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormParts {
    /// `‖v‖²_{φ,ψ}`.
    pub l2_sq: f64,
    /// `‖√y ∂ₓv‖²_{φ,ψ}`.
    pub dx_sq: f64,
    /// `‖√y ∂_y v‖²_{φ,ψ}`.
    pub dy_sq: f64,
    /// `‖∂ₓv‖²_{φ,ψ}` (no `y` factor).
    pub dx_plain_sq: f64,
}

impl NormParts {
    pub fn v_norm_sq(&self) -> f64 {
        self.l2_sq + self.dx_sq + self.dy_sq
    }
}

/// Quadrature point data shared by norm evaluation and assembly.
pub(crate) struct CellQuadrature {
    /// Per point: local coordinates and weights in `[0,1]²`.
    pub sx: Vec<f64>,
    pub sy: Vec<f64>,
    pub w: Vec<f64>,
}

impl CellQuadrature {
    pub fn new(quad: &QuadratureRule) -> Self {
        let q = quad.order();
        let mut sx = Vec::with_capacity(q * q);
        let mut sy = Vec::with_capacity(q * q);
        let mut w = Vec::with_capacity(q * q);
        for (ny_, wy) in quad.nodes().iter().zip(quad.weights()) {
            for (nx_, wx) in quad.nodes().iter().zip(quad.weights()) {
                sx.push(*nx_);
                sy.push(*ny_);
                w.push(wx * wy);
            }
        }
        CellQuadrature { sx, sy, w }
    }
}

/// Bilinear shape functions on the reference cell, corners ordered
/// `(0,0), (1,0), (0,1), (1,1)`, with gradients scaled to physical cell size.
#[inline]
pub(crate) fn shape(sx: f64, sy: f64, hx: f64, hy: f64) -> ([f64; 4], [f64; 4], [f64; 4]) {
    let n = [(1.0 - sx) * (1.0 - sy), sx * (1.0 - sy), (1.0 - sx) * sy, sx * sy];
    let gx = [-(1.0 - sy) / hx, (1.0 - sy) / hx, -sy / hx, sy / hx];
    let gy = [-(1.0 - sx) / hy, -sx / hy, (1.0 - sx) / hy, sx / hy];
    (n, gx, gy)
}

pub fn norm_parts(v: &DiscreteFunction, dom: &TruncatedDomain, quad: &QuadratureRule, nu: f64, mu: f64) -> NormParts {
    let cq = CellQuadrature::new(quad);
    let (hx, hy) = (dom.hx(), dom.hy());
    let area = hx * hy;
    let ncell = dom.nx * dom.ny;
    let mut l2 = Vec::with_capacity(ncell);
    let mut dx = Vec::with_capacity(ncell);
    let mut dy = Vec::with_capacity(ncell);
    let mut dxp = Vec::with_capacity(ncell);
    for cj in 0..dom.ny {
        for ci in 0..dom.nx {
            let c = [
                v.node_value(dom, ci, cj),
                v.node_value(dom, ci + 1, cj),
                v.node_value(dom, ci, cj + 1),
                v.node_value(dom, ci + 1, cj + 1),
            ];
            if c.iter().all(|&x| x == 0.0) {
                l2.push(0.0);
                dx.push(0.0);
                dy.push(0.0);
                dxp.push(0.0);
                continue;
            }
            let (x0, y0) = (dom.x_node(ci), dom.y_node(cj));
            let (mut a, mut b, mut d, mut e) = (0.0, 0.0, 0.0, 0.0);
            for k in 0..cq.w.len() {
                let (sx, sy) = (cq.sx[k], cq.sy[k]);
                let (x, y) = (x0 + sx * hx, y0 + sy * hy);
                let (n, gx, gy) = shape(sx, sy, hx, hy);
                let u: f64 = (0..4).map(|l| c[l] * n[l]).sum();
                let ux: f64 = (0..4).map(|l| c[l] * gx[l]).sum();
                let uy: f64 = (0..4).map(|l| c[l] * gy[l]).sum();
                let w = cq.w[k] * area * weight_sq(x, y, nu, mu);
                a += w * u * u;
                b += w * y * ux * ux;
                d += w * y * uy * uy;
                e += w * ux * ux;
            }
            l2.push(a);
            dx.push(b);
            dy.push(d);
            dxp.push(e);
        }
    }
    NormParts { l2_sq: pairwise(&l2), dx_sq: pairwise(&dx), dy_sq: pairwise(&dy), dx_plain_sq: pairwise(&dxp) }
}

/// `‖v‖_{φ,ψ}` by tensor Gauss–Legendre quadrature.
pub fn weighted_l2_norm(v: &DiscreteFunction, dom: &TruncatedDomain, quad: &QuadratureRule, nu: f64, mu: f64) -> f64 {
    norm_parts(v, dom, quad, nu, mu).l2_sq.sqrt()
}

/// `‖v‖_V = (‖v‖² + ‖√y ∂ₓv‖² + ‖√y ∂_y v‖²)^{1/2}`.
pub fn v_norm(v: &DiscreteFunction, dom: &TruncatedDomain, quad: &QuadratureRule, nu: f64, mu: f64) -> f64 {
    norm_parts(v, dom, quad, nu, mu).v_norm_sq().sqrt()
}

/// CSV with header `x,y,value`, one row per node (boundary included),
/// `x` fastest.
pub fn write_csv(v: &DiscreteFunction, dom: &TruncatedDomain, mut w: impl Write) -> Result<()> {
    writeln!(w, "x,y,value")?;
    for j in 0..=dom.ny {
        for i in 0..=dom.nx {
            writeln!(w, "{},{},{}", dom.x_node(i), dom.y_node(j), v.node_value(dom, i, j))?;
        }
    }
    Ok(())
}
