//! Deterministic grid search for a certifiable parameter tuple.

use rayon::prelude::*;

use super::{
    certify_with_margin, evaluate, rho_bound, threshold, CandidateTuple, CoercivityCertificate, ConstraintCheck,
    ConstraintId, EpsilonTriple, InfeasibilityReport, VariationalParams, DEFAULT_MARGIN,
};
use crate::error::{Error, Result};
use crate::model::HestonParams;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    /// Variance cutoff used for `c₁` (enters as `a³`).
    pub a: f64,
    pub points_per_axis: usize,
    pub nu_range: (f64, f64),
    pub mu_range: (f64, f64),
    /// Candidate `δ` as fractions of `δ*`; the first entry is the preferred one.
    pub delta_fractions: Vec<f64>,
    /// Position of `ε₂` inside its window `(2ρ²/(2−t̄), 1)`.
    pub eps2_fractions: Vec<f64>,
    /// `ε₁` as a fraction of `1 − ε₂`.
    pub eps1_fractions: Vec<f64>,
    /// Interior sample count for the `ε₃` and `ω` windows.
    pub window_points: usize,
    pub refine: bool,
    pub margin: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            a: crate::wspace::DEFAULT_A,
            points_per_axis: 32,
            nu_range: (1e-4, 10.0),
            mu_range: (1e-4, 10.0),
            delta_fractions: vec![0.5, 0.75, 0.9, 0.99],
            eps2_fractions: vec![0.25, 0.5, 0.75],
            eps1_fractions: vec![0.25, 0.5],
            window_points: 5,
            refine: true,
            margin: DEFAULT_MARGIN,
        }
    }
}

impl SearchOptions {
    /// A small grid for bulk use, e.g. sweeping many parameter sets.
    pub fn coarse() -> Self {
        SearchOptions {
            points_per_axis: 10,
            delta_fractions: vec![0.5, 0.9, 0.99],
            eps2_fractions: vec![0.5],
            eps1_fractions: vec![0.5],
            window_points: 3,
            refine: false,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let range_ok = |(lo, hi): (f64, f64)| lo > 0.0 && hi > lo && hi.is_finite();
        let fracs_ok = |v: &[f64]| !v.is_empty() && v.iter().all(|f| *f > 0.0 && *f < 1.0);
        if !(self.a > 0.0)
            || self.points_per_axis < 2
            || self.window_points < 1
            || !range_ok(self.nu_range)
            || !range_ok(self.mu_range)
            || !fracs_ok(&self.delta_fractions)
            || !fracs_ok(&self.eps2_fractions)
            || !fracs_ok(&self.eps1_fractions)
        {
            return Err(Error::invalid("malformed search options"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSet {
    pub variational: VariationalParams,
    pub epsilons: EpsilonTriple,
    pub delta: f64,
    pub certificate: CoercivityCertificate,
}

fn log_grid((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
    let (l0, l1) = (lo.ln(), hi.ln());
    (0..n).map(|i| (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp()).collect()
}

fn interior(n: usize) -> impl Iterator<Item = f64> {
    (1..=n).map(move |k| k as f64 / (n + 1) as f64)
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    vp: VariationalParams,
    eps: EpsilonTriple,
    delta: f64,
    c1: f64,
}

/// Closest miss seen so far. Fully evaluated tuples beat early exits; then
/// the later first failure in dependency order wins, then the larger slack.
#[derive(Debug, Clone)]
struct Miss {
    id: ConstraintId,
    slack: f64,
    checks: Option<(Vec<ConstraintCheck>, CandidateTuple)>,
}

impl Miss {
    fn better_than(&self, other: &Miss) -> bool {
        (self.checks.is_some(), self.id, self.slack) > (other.checks.is_some(), other.id, other.slack)
    }
}

#[derive(Debug, Clone, Default)]
struct Outcome {
    best: Option<Candidate>,
    miss: Option<Miss>,
}

impl Outcome {
    fn offer(&mut self, c: Candidate) {
        if self.best.map_or(true, |b| c.c1 > b.c1) {
            self.best = Some(c);
        }
    }

    fn miss(&mut self, id: ConstraintId, slack: f64, checks: Option<(&[ConstraintCheck], CandidateTuple)>) {
        let slack = if slack.is_nan() { f64::NEG_INFINITY } else { slack };
        let cand = Miss { id, slack, checks: checks.map(|(c, t)| (c.to_vec(), t)) };
        if self.miss.as_ref().map_or(true, |m| cand.better_than(m)) {
            self.miss = Some(cand);
        }
    }

    fn merge(mut self, other: Outcome) -> Outcome {
        if let Some(c) = other.best {
            self.offer(c);
        }
        if let Some(m) = other.miss {
            if self.miss.as_ref().map_or(true, |s| m.better_than(s)) {
                self.miss = Some(m);
            }
        }
        self
    }
}

struct Scan<'a> {
    p: &'a HestonParams,
    a: f64,
    margin: f64,
    window_points: usize,
}

impl Scan<'_> {
    /// Every `(ν, ε₃, ω)` combination for fixed `(δ, ε₁, ε₂, μ)`.
    fn run(&self, delta: f64, eps1: f64, eps2: f64, mu: f64, nus: &[f64]) -> Outcome {
        let p = self.p;
        let s2 = p.sigma * p.sigma;
        let k = p.feller_margin();
        let tbar = threshold(delta);
        let gamma = 2.0 * (1.0 - p.rho * p.rho / eps2) / tbar - 1.0;
        let t_cap = 1.0 + 1.0 / (1.0 + 2.0 * gamma);
        let mut out = Outcome::default();

        if !(gamma > self.margin) {
            out.miss(ConstraintId::GammaPositive, gamma, None);
            return out;
        }
        if !(t_cap > tbar) {
            out.miss(ConstraintId::Eps3Window, t_cap - tbar, None);
            return out;
        }
        for &nu in nus {
            let beta = nu * nu / (2.0 * eps1) + 0.5 * nu;
            // β grows with ν, so nothing further along this axis can pass.
            if beta >= mu * gamma * s2 {
                out.miss(ConstraintId::BetaCap, mu * gamma * s2 - beta, None);
                break;
            }
            for s3 in interior(self.window_points) {
                let t = tbar + s3 * (t_cap - tbar);
                let eps3 = t / (2.0 * mu);
                let (disc, lo_root, hi_root) = super::omega_roots(p, mu, eps3, beta);
                if disc < 0.0 {
                    out.miss(ConstraintId::DeltaOmega, disc, None);
                    continue;
                }
                let lo = lo_root.max(mu);
                let hi = hi_root.min(mu + (gamma * s2 * mu - beta) / k);
                let eps = EpsilonTriple { eps1, eps2, eps3 };
                let omegas: Vec<f64> = if hi > lo {
                    interior(self.window_points).map(|so| lo + so * (hi - lo)).collect()
                } else {
                    // empty window: still evaluate one tuple so a miss carries
                    // a complete constraint report
                    vec![(0.5 * (lo + hi)).max(mu * (1.0 + 1e-6))]
                };
                for omega in omegas {
                    let vp = VariationalParams { a: self.a, nu, mu, omega };
                    let ev = evaluate(p, &vp, &eps, delta, self.margin);
                    match ev.first_failure() {
                        None => out.offer(Candidate { vp, eps, delta, c1: ev.c1(self.a, eps3) }),
                        Some(f) => {
                            let tuple = CandidateTuple { variational: vp, epsilons: eps, delta };
                            out.miss(f.id, f.slack, Some((&ev.checks, tuple)));
                        }
                    }
                }
            }
        }
        out
    }
}

/// Grid search over `(δ, ε₁, ε₂, μ, ν, ε₃, ω)` maximizing `c₁`.
///
/// The grid is fixed by `opts`; ties keep the candidate with the smallest
/// lexicographic grid index, so results do not depend on the thread count.
pub fn search_feasible(p: &HestonParams, opts: &SearchOptions) -> Result<FeasibleSet> {
    p.validate()?;
    opts.validate()?;
    let k = p.feller_margin();
    if !(k > 0.0) {
        return Err(exhausted(ConstraintId::Feller, k, None));
    }
    let dmax = (k / (p.sigma * p.sigma)).powi(2);
    let widest = rho_bound(dmax) - p.rho.abs();
    if !(widest > opts.margin) {
        return Err(exhausted(ConstraintId::RhoWindow, widest, None));
    }

    let mut jobs = Vec::new();
    let mut pre = Outcome::default();
    for &fd in &opts.delta_fractions {
        let delta = fd * dmax;
        let rho_slack = rho_bound(delta) - p.rho.abs();
        if !(rho_slack > opts.margin) {
            pre.miss(ConstraintId::RhoWindow, rho_slack, None);
            continue;
        }
        let tbar = threshold(delta);
        let lo2 = 2.0 * p.rho * p.rho / (2.0 - tbar);
        for &f2 in &opts.eps2_fractions {
            let eps2 = lo2 + f2 * (1.0 - lo2);
            for &f1 in &opts.eps1_fractions {
                jobs.push((delta, f1 * (1.0 - eps2), eps2));
            }
        }
    }

    let scan = Scan { p, a: opts.a, margin: opts.margin, window_points: opts.window_points };
    let mus = log_grid(opts.mu_range, opts.points_per_axis);
    let nus = log_grid(opts.nu_range, opts.points_per_axis);
    let tasks: Vec<_> = jobs.iter().flat_map(|&(d, e1, e2)| mus.iter().map(move |&mu| (d, e1, e2, mu))).collect();
    let outcome = tasks
        .par_iter()
        .map(|&(d, e1, e2, mu)| scan.run(d, e1, e2, mu, &nus))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(pre, Outcome::merge);

    let Some(mut best) = outcome.best else {
        let miss = outcome.miss.unwrap_or(Miss { id: ConstraintId::RhoWindow, slack: widest, checks: None });
        return Err(exhausted(miss.id, miss.slack, miss.checks));
    };

    if opts.refine {
        let ratio = (opts.mu_range.1 / opts.mu_range.0).powf(1.0 / (opts.points_per_axis - 1) as f64);
        let local = |x: f64, (lo, hi): (f64, f64)| log_grid(((x / ratio).max(lo), (x * ratio).min(hi)), 9);
        let fine = Scan { window_points: 9, ..scan };
        let nus = local(best.vp.nu, opts.nu_range);
        let refined = local(best.vp.mu, opts.mu_range)
            .par_iter()
            .map(|&mu| fine.run(best.delta, best.eps.eps1, best.eps.eps2, mu, &nus))
            .collect::<Vec<_>>()
            .into_iter()
            .fold(Outcome::default(), Outcome::merge);
        if let Some(c) = refined.best {
            if c.c1 > best.c1 {
                best = c;
            }
        }
    }

    let certificate = certify_with_margin(p, &best.vp, &best.eps, best.delta, opts.margin)?;
    Ok(FeasibleSet { variational: best.vp, epsilons: best.eps, delta: best.delta, certificate })
}

fn exhausted(id: ConstraintId, slack: f64, checks: Option<(Vec<ConstraintCheck>, CandidateTuple)>) -> Error {
    let report = match checks {
        Some((constraint_report, tuple)) => {
            InfeasibilityReport { primary: id, constraint_report, closest: Some(tuple) }
        }
        None => InfeasibilityReport::single(id, slack),
    };
    Error::Infeasible(Box::new(report))
}
