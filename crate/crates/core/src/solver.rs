//! θ-scheme time stepping of the forward problem and price recovery.
//!
//! Each step solves
//!
//! ```text
//! (M + θΔt A) uⁿ⁺¹ = (M − (1−θ)Δt A) uⁿ + Δt F(t_{n+θ})
//! ```
//!
//! with the left-hand matrix factored once. The source line `x* = ln K − rt`
//! moves with `t`, so the load vector is rebuilt every step.

use serde::{Deserialize, Serialize};

use crate::coercivity::VariationalParams;
use crate::error::{Error, Result};
use crate::form::{dirac_source, FormMatrices};
use crate::model::{recover_price, HestonParams, OptionSpec};
use crate::sparse::{bicgstab, relative_residual, BandedLu, CsrMatrix};
use crate::wspace::{evaluate, DiscreteFunction, QuadratureRule, TruncatedDomain};

/// Relative residual every linear solve must reach.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub maturity: f64,
    pub steps: usize,
    #[serde(default = "default_theta")]
    pub theta: f64,
}

fn default_theta() -> f64 {
    1.0
}

impl TimeGrid {
    pub fn new(maturity: f64, steps: usize, theta: f64) -> Result<Self> {
        let tg = TimeGrid { maturity, steps, theta };
        tg.validate()?;
        Ok(tg)
    }

    pub fn implicit_euler(maturity: f64, steps: usize) -> Result<Self> {
        Self::new(maturity, steps, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.maturity > 0.0 && self.maturity.is_finite()) || self.steps < 1 {
            return Err(Error::invalid("time grid needs T > 0 and at least one step"));
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(Error::invalid(format!("theta must lie in [1/2, 1], got {}", self.theta)));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.maturity / self.steps as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LinearSolver {
    /// Banded LU with partial pivoting; BiCGSTAB polishes if the residual is large.
    #[default]
    BandedLu,
    /// Jacobi-preconditioned BiCGSTAB only.
    Bicgstab,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolverOptions {
    /// Replace the mass matrix by its row sums in the time stepping.
    pub lumped_mass: bool,
    pub linear_solver: LinearSolver,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    /// Forward times `t_n = nΔt`, `n = 0..=steps`.
    pub times: Vec<f64>,
    pub snapshots: Vec<DiscreteFunction>,
    /// `‖uⁿ‖_{φ,ψ}` from the consistent mass matrix.
    pub l2_norm_history: Vec<f64>,
    pub time_grid: TimeGrid,
}

impl SolveResult {
    /// Snapshot at forward time `T`, i.e. calendar time `0`.
    pub fn final_snapshot(&self) -> &DiscreteFunction {
        self.snapshots.last().expect("at least the initial snapshot")
    }
}

struct Stepper {
    lhs: CsrMatrix,
    rhs: CsrMatrix,
    lu: Option<BandedLu>,
    solver: LinearSolver,
}

impl Stepper {
    fn new(fm: &FormMatrices, dom: &TruncatedDomain, tg: &TimeGrid, opts: &SolverOptions) -> Result<Self> {
        if fm.a.dim() != dom.n_interior() || fm.mass.dim() != dom.n_interior() {
            return Err(Error::invalid("matrices were assembled on a different grid"));
        }
        let dt = tg.dt();
        let mass = if opts.lumped_mass { CsrMatrix::from_diagonal(&fm.mass.row_sums()) } else { fm.mass.clone() };
        let lhs = mass.linear_combination(1.0, &fm.a, tg.theta * dt);
        let rhs = mass.linear_combination(1.0, &fm.a, -(1.0 - tg.theta) * dt);
        let lu = match opts.linear_solver {
            LinearSolver::BandedLu => {
                let perm: Vec<usize> =
                    if dom.ny < dom.nx { dom.y_major_permutation() } else { (0..dom.n_interior()).collect() };
                Some(BandedLu::factor_permuted(&lhs, &perm)?)
            }
            LinearSolver::Bicgstab => None,
        };
        Ok(Stepper { lhs, rhs, lu, solver: opts.linear_solver })
    }

    fn step(&self, u: &[f64], load: Option<&[f64]>, dt: f64) -> Result<Vec<f64>> {
        let mut b = self.rhs.mul_vec(u);
        if let Some(f) = load {
            for (bi, fi) in b.iter_mut().zip(f) {
                *bi += dt * fi;
            }
        }
        if b.iter().all(|v| *v == 0.0) {
            return Ok(vec![0.0; b.len()]);
        }
        let mut x = match &self.lu {
            Some(lu) => lu.solve(&b),
            None => u.to_vec(),
        };
        let mut res = relative_residual(&self.lhs, &x, &b);
        if let (Some(lu), true) = (&self.lu, res > RESIDUAL_TOL) {
            // one round of iterative refinement
            let ax = self.lhs.mul_vec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
            for (xi, di) in x.iter_mut().zip(lu.solve(&r)) {
                *xi += di;
            }
            res = relative_residual(&self.lhs, &x, &b);
        }
        if res > RESIDUAL_TOL || self.solver == LinearSolver::Bicgstab {
            bicgstab(&self.lhs, &b, &mut x, RESIDUAL_TOL, 10_000).map_err(|e| match &self.lu {
                Some(lu) => Error::Singular { condition_estimate: lu.condition_estimate() },
                None => e,
            })?;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite value in time step".into()));
        }
        Ok(x)
    }
}

fn norm_from_mass(mass: &CsrMatrix, u: &[f64]) -> f64 {
    mass.bilinear(u, u).max(0.0).sqrt()
}

/// Time-steps the forward problem from zero initial data with the line source.
#[allow(clippy::too_many_arguments)]
pub fn solve(
    fm: &FormMatrices,
    dom: &TruncatedDomain,
    quad: &QuadratureRule,
    p: &HestonParams,
    vp: &VariationalParams,
    spec: &OptionSpec,
    tg: &TimeGrid,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    tg.validate()?;
    let source = |t: f64| dirac_source(t, dom, quad, p, vp, spec);
    run(fm, dom, tg, opts, DiscreteFunction::zeros(dom), Some(&source))
}

/// Time-steps `u⁰` with no source.
pub fn evolve(
    fm: &FormMatrices,
    dom: &TruncatedDomain,
    tg: &TimeGrid,
    opts: &SolverOptions,
    u0: DiscreteFunction,
) -> Result<SolveResult> {
    tg.validate()?;
    run(fm, dom, tg, opts, u0, None)
}

fn run(
    fm: &FormMatrices,
    dom: &TruncatedDomain,
    tg: &TimeGrid,
    opts: &SolverOptions,
    u0: DiscreteFunction,
    source: Option<&dyn Fn(f64) -> Vec<f64>>,
) -> Result<SolveResult> {
    if u0.values().len() != dom.n_interior() {
        return Err(Error::invalid("initial data does not match the grid"));
    }
    let stepper = Stepper::new(fm, dom, tg, opts)?;
    let dt = tg.dt();
    let mut times = Vec::with_capacity(tg.steps + 1);
    let mut snapshots = Vec::with_capacity(tg.steps + 1);
    let mut norms = Vec::with_capacity(tg.steps + 1);
    times.push(0.0);
    norms.push(norm_from_mass(&fm.mass, u0.values()));
    snapshots.push(u0);
    for n in 0..tg.steps {
        let load = source.map(|f| f((n as f64 + tg.theta) * dt));
        let prev = snapshots.last().expect("initial snapshot").values();
        let next = stepper.step(prev, load.as_deref(), dt)?;
        times.push(if n + 1 == tg.steps { tg.maturity } else { (n + 1) as f64 * dt });
        norms.push(norm_from_mass(&fm.mass, &next));
        snapshots.push(DiscreteFunction::new(dom, next)?);
    }
    Ok(SolveResult { times, snapshots, l2_norm_history: norms, time_grid: *tg })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub pass: bool,
    /// `max_n (1 + Δt c₂)‖uⁿ⁺¹‖ / ‖uⁿ‖` over steps with `uⁿ ≠ 0`.
    pub worst_ratio: f64,
}

/// Verifies `‖uⁿ⁺¹‖ ≤ (1 + Δt c₂)⁻¹ ‖uⁿ‖` at every step.
pub fn decay_check(sr: &SolveResult, c2: f64) -> Result<DecayReport> {
    let dt = sr.time_grid.dt();
    let factor = 1.0 + dt * c2;
    if sr.time_grid.theta != 1.0 {
        return Err(Error::invalid("decay check applies to implicit Euler (theta = 1)"));
    }
    if !(factor > 0.0) {
        return Err(Error::invalid(format!("1 + dt*c2 = {factor} must be positive")));
    }
    let mut worst = 0.0f64;
    let mut pass = true;
    for w in sr.l2_norm_history.windows(2) {
        let (prev, next) = (w[0], w[1]);
        if prev == 0.0 {
            pass &= next == 0.0;
            continue;
        }
        let ratio = factor * next / prev;
        worst = worst.max(ratio);
        // allow rounding in the norms themselves
        pass &= ratio <= 1.0 + 1e-12;
    }
    Ok(DecayReport { pass, worst_ratio: worst })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositivityReport {
    pub min_nodal_value: f64,
    pub max_nodal_value: f64,
    pub pass: bool,
}

/// Global nodal extremes over all snapshots; passes iff `min ≥ −1e−6·max`.
pub fn positivity_check(sr: &SolveResult) -> PositivityReport {
    let (lo, hi) = sr
        .snapshots
        .iter()
        .map(DiscreteFunction::min_max)
        .fold((0.0f64, 0.0f64), |(a, b), (c, d)| (a.min(c), b.max(d)));
    PositivityReport { min_nodal_value: lo, max_nodal_value: hi, pass: lo >= -1e-6 * hi }
}

/// Recovered prices `U(0, S, y)` on a tensor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSurface {
    pub s: Vec<f64>,
    pub y: Vec<f64>,
    /// `values[i * y.len() + j]` is the price at `(s[i], y[j])`; `None` outside the domain.
    pub values: Vec<Option<f64>>,
}

impl PriceSurface {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.y.len() + j]
    }
}

/// `U(0, S, y)` from the final snapshot.
pub fn price_at(
    sr: &SolveResult,
    dom: &TruncatedDomain,
    p: &HestonParams,
    vp: &VariationalParams,
    spec: &OptionSpec,
    s: f64,
    y: f64,
) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::invalid(format!("asset price must be > 0, got {s}")));
    }
    let u = evaluate(sr.final_snapshot(), dom, s.ln(), y)
        .ok_or_else(|| Error::invalid(format!("point (S={s}, y={y}) lies outside the truncated domain")))?;
    recover_price(u, 0.0, s, y, spec, p, vp.omega)
}

pub fn price_surface(
    sr: &SolveResult,
    dom: &TruncatedDomain,
    p: &HestonParams,
    vp: &VariationalParams,
    spec: &OptionSpec,
    s_grid: &[f64],
    y_grid: &[f64],
) -> PriceSurface {
    let values = s_grid
        .iter()
        .flat_map(|&s| y_grid.iter().map(move |&y| (s, y)))
        .map(|(s, y)| price_at(sr, dom, p, vp, spec, s, y).ok())
        .collect();
    PriceSurface { s: s_grid.to_vec(), y: y_grid.to_vec(), values }
}
