//! Machine-checkable coercivity (Gårding) certificates for the weighted
//! Heston form.
//!
//! Given model parameters, the weight exponents `(ν, μ)`, the transform
//! exponent `ω`, a Feller slack `δ` and three Young parameters `(ε₁, ε₂, ε₃)`,
//! [`certify`] evaluates every sufficient condition behind the estimate
//!
//! ```text
//! Re a(v, v) ≥ c₁ ‖v‖²_V + c₂ ‖v‖²,   c₁ > 0,  c₂ = α₃
//! ```
//!
//! and either returns a [`CoercivityCertificate`] or an
//! [`InfeasibilityReport`] listing the slack of every constraint.
//!
//! Constants follow the estimate chain term by term:
//!
//! | constant | value |
//! |----------|-------|
//! | `t̄`  | `1 + 1/√(1+δ)` |
//! | `τ`  | `1 − ρ²/ε₂` |
//! | `γ`  | `2τ/t̄ − 1` |
//! | `β`  | `ν²/(2ε₁) + ν/2` |
//! | `c`  | `2β/(μσ²)` |
//! | `α₁` | `(1 − ε₁ − ε₂)/2` |
//! | `α₂` | `(σ²/2) τ` |
//! | `α₃` | `−rν − κ/2 − |ρ|σν + r` |
//! | `α₄` | `ωκ − κμ − ω|ρ|σν − 2|ρ|σνμ` |
//! | `α₅` | `ω(κm − σ²/2) + σ²μ + β − (κm − σ²/2)μ` |
//! | `α₆` | `μα₅ + ωμσ² − σ²μ² − ω²σ²/2` |
//!
//! The correlation enters `α₃` and `α₄` through `|ρ|`: both come from bounding
//! integrals whose sign is not controlled, so a negative correlation cannot
//! improve them.

mod search;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::HestonParams;

pub use search::{search_feasible, FeasibleSet, SearchOptions};

/// Default margin by which strict inequalities must hold.
pub const DEFAULT_MARGIN: f64 = 1e-10;

/// Weight, transform and truncation exponents of the variational setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariationalParams {
    /// Lower variance cutoff of the domain `ℝ × [a, ∞)`.
    pub a: f64,
    /// Exponent of the log-price weight `φ(x) = e^{ν|x|}`.
    pub nu: f64,
    /// Exponent of the variance weight `ψ(y) = e^{μy²/2}`.
    pub mu: f64,
    /// Exponent of the damping transform `e^{-ωy²/2}`.
    pub omega: f64,
}

impl VariationalParams {
    pub fn new(a: f64, nu: f64, mu: f64, omega: f64) -> Result<Self> {
        let vp = VariationalParams { a, nu, mu, omega };
        vp.validate()?;
        Ok(vp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.nu > 0.0 && self.mu > 0.0) {
            return Err(Error::invalid(format!(
                "variational parameters need a, nu, mu > 0 (got a={}, nu={}, mu={})",
                self.a, self.nu, self.mu
            )));
        }
        if !(self.omega > self.mu) || !self.omega.is_finite() {
            return Err(Error::invalid(format!("omega must exceed mu (got omega={}, mu={})", self.omega, self.mu)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonTriple {
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
}

impl EpsilonTriple {
    pub fn new(eps1: f64, eps2: f64, eps3: f64) -> Result<Self> {
        if !(eps1 > 0.0 && eps2 > 0.0 && eps3 > 0.0) {
            return Err(Error::invalid("epsilons must be positive"));
        }
        Ok(EpsilonTriple { eps1, eps2, eps3 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxConstants {
    pub delta: f64,
    pub tbar: f64,
    pub tau: f64,
    pub gamma: f64,
    pub beta: f64,
    /// `2β/(μσ²)`.
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaCoefficients {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub alpha5: f64,
    pub alpha6: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NuBound {
    Bounded(f64),
    /// No cap on `ν` is imposed for `ρ ≤ 0`; `α₄ ≥ 0` is checked directly.
    Unbounded,
}

impl NuBound {
    pub fn value(&self) -> f64 {
        match self {
            NuBound::Bounded(v) => *v,
            NuBound::Unbounded => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateValues {
    pub g: f64,
    pub f: f64,
    pub f_tilde: f64,
}

/// Admissible open interval for `ω` together with the discriminant `Δ_ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaInterval {
    pub omega_lo: f64,
    pub omega_hi: f64,
    pub delta_omega: f64,
}

impl OmegaInterval {
    pub fn contains(&self, omega: f64) -> bool {
        self.omega_lo < omega && omega < self.omega_hi
    }
}

/// Every condition the certificate checks, in dependency order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintId {
    Feller,
    DeltaRange,
    RhoWindow,
    Eps2Window,
    GammaPositive,
    Alpha5Positive,
    Eps3Window,
    NuBound,
    BetaCap,
    DeltaOmega,
    OmegaInterval,
    GateG,
    GateF,
    GateFTilde,
    Alpha2Eps3,
    Alpha6Eps3,
    Alpha4,
    C1Positive,
}

impl ConstraintId {
    pub const ALL: [ConstraintId; 18] = [
        ConstraintId::Feller,
        ConstraintId::DeltaRange,
        ConstraintId::RhoWindow,
        ConstraintId::Eps2Window,
        ConstraintId::GammaPositive,
        ConstraintId::Alpha5Positive,
        ConstraintId::Eps3Window,
        ConstraintId::NuBound,
        ConstraintId::BetaCap,
        ConstraintId::DeltaOmega,
        ConstraintId::OmegaInterval,
        ConstraintId::GateG,
        ConstraintId::GateF,
        ConstraintId::GateFTilde,
        ConstraintId::Alpha2Eps3,
        ConstraintId::Alpha6Eps3,
        ConstraintId::Alpha4,
        ConstraintId::C1Positive,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ConstraintId::Feller => "feller",
            ConstraintId::DeltaRange => "delta-range",
            ConstraintId::RhoWindow => "rho-window",
            ConstraintId::Eps2Window => "eps2-window",
            ConstraintId::GammaPositive => "gamma-positive",
            ConstraintId::Alpha5Positive => "alpha5-positive",
            ConstraintId::Eps3Window => "eps3-window",
            ConstraintId::NuBound => "nu-bound",
            ConstraintId::BetaCap => "beta-cap",
            ConstraintId::DeltaOmega => "delta-omega",
            ConstraintId::OmegaInterval => "omega-interval",
            ConstraintId::GateG => "gate-g",
            ConstraintId::GateF => "gate-f",
            ConstraintId::GateFTilde => "gate-f-tilde",
            ConstraintId::Alpha2Eps3 => "alpha2-eps3",
            ConstraintId::Alpha6Eps3 => "alpha6-eps3",
            ConstraintId::Alpha4 => "alpha4",
            ConstraintId::C1Positive => "c1-positive",
        }
    }

    /// Human-readable form of the inequality.
    pub fn describe(&self) -> &'static str {
        match self {
            ConstraintId::Feller => "κm − σ²/2 > 0",
            ConstraintId::DeltaRange => "0 < δ < ((κm − σ²/2)/σ²)²",
            ConstraintId::RhoWindow => "|ρ| < √(1/2 − 1/(2√(1+δ)))",
            ConstraintId::Eps2Window => "2ρ²/(2 − t̄) < ε₂ < 1 − ε₁",
            ConstraintId::GammaPositive => "γ = 2τ/t̄ − 1 > 0",
            ConstraintId::Alpha5Positive => "α₅ > 0",
            ConstraintId::Eps3Window => "t̄/(2μ) < ε₃ < min{2α₂/α₅, (1 + 1/(1+2γ))/(2μ)}",
            ConstraintId::NuBound => "ν ≤ κ(ω−μ)/(ρσ(ω+2μ)) when ρ > 0",
            ConstraintId::BetaCap => "β < min{μγσ², μ(κm − σ²/2) + μσ²/(2ε₃μ − 1)}",
            ConstraintId::DeltaOmega => "Δ_ω ≥ 0",
            ConstraintId::OmegaInterval => "ω ∈ (ω_lo, ω_hi)",
            ConstraintId::GateG => "g(2ε₃μ) ≤ δ",
            ConstraintId::GateF => "f(2ε₃μ) ≤ δ",
            ConstraintId::GateFTilde => "f̃(2ε₃μ) < δ",
            ConstraintId::Alpha2Eps3 => "α₂ − α₅ε₃/2 > 0",
            ConstraintId::Alpha6Eps3 => "α₆ − α₅/(2ε₃) ≥ 0",
            ConstraintId::Alpha4 => "α₄ ≥ 0",
            ConstraintId::C1Positive => "c₁ > 0",
        }
    }

    fn is_strict(&self) -> bool {
        !matches!(
            self,
            ConstraintId::NuBound
                | ConstraintId::DeltaOmega
                | ConstraintId::GateG
                | ConstraintId::GateF
                | ConstraintId::Alpha6Eps3
                | ConstraintId::Alpha4
        )
    }
}

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of one inequality. `slack` is positive when the inequality holds
/// and measures the distance to its boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintCheck {
    pub id: ConstraintId,
    pub satisfied: bool,
    pub slack: f64,
}

impl ConstraintCheck {
    fn new(id: ConstraintId, slack: f64, margin: f64) -> Self {
        let slack = if slack.is_nan() { f64::NEG_INFINITY } else { slack };
        let satisfied = if id.is_strict() { slack > margin } else { slack >= 0.0 };
        ConstraintCheck { id, satisfied, slack }
    }
}

/// A full parameter tuple that was evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateTuple {
    pub variational: VariationalParams,
    pub epsilons: EpsilonTriple,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibilityReport {
    /// First failing constraint in dependency order.
    pub primary: ConstraintId,
    pub constraint_report: Vec<ConstraintCheck>,
    /// The evaluated tuple behind `constraint_report`, when there is one.
    pub closest: Option<CandidateTuple>,
}

impl InfeasibilityReport {
    fn single(id: ConstraintId, slack: f64) -> Self {
        InfeasibilityReport {
            primary: id,
            constraint_report: vec![ConstraintCheck {
                id,
                satisfied: false,
                slack: if slack.is_nan() { f64::NEG_INFINITY } else { slack },
            }],
            closest: None,
        }
    }

    pub fn failing(&self) -> impl Iterator<Item = &ConstraintCheck> {
        self.constraint_report.iter().filter(|c| !c.satisfied)
    }
}

impl fmt::Display for InfeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let slack =
            self.constraint_report.iter().find(|c| c.id == self.primary).map(|c| c.slack).unwrap_or(f64::NEG_INFINITY);
        write!(f, "{} ({}), slack {:e}", self.primary, self.primary.describe(), slack)
    }
}

fn infeasible(id: ConstraintId, slack: f64) -> Error {
    Error::Infeasible(Box::new(InfeasibilityReport::single(id, slack)))
}

/// Supremum of admissible Feller slacks: `((κm − σ²/2)/σ²)²`.
pub fn delta_max(p: &HestonParams) -> Result<f64> {
    let margin = p.feller_margin();
    if !(margin > 0.0) {
        return Err(infeasible(ConstraintId::Feller, margin));
    }
    let s2 = p.sigma * p.sigma;
    Ok((margin / s2).powi(2))
}

/// Largest admissible `|ρ|` for a given `δ`.
pub fn rho_bound(delta: f64) -> f64 {
    (0.5 - 0.5 / (1.0 + delta).sqrt()).max(0.0).sqrt()
}

/// `t̄ = 1 + 1/√(1+δ)`.
pub fn threshold(delta: f64) -> f64 {
    1.0 + 1.0 / (1.0 + delta).sqrt()
}

pub fn aux_constants(p: &HestonParams, vp: &VariationalParams, eps: &EpsilonTriple, delta: f64) -> AuxConstants {
    let s2 = p.sigma * p.sigma;
    let tbar = threshold(delta);
    let tau = 1.0 - p.rho * p.rho / eps.eps2;
    let gamma = 2.0 * tau / tbar - 1.0;
    let beta = vp.nu * vp.nu / (2.0 * eps.eps1) + 0.5 * vp.nu;
    let c = 2.0 * beta / (vp.mu * s2);
    AuxConstants { delta, tbar, tau, gamma, beta, c }
}

pub fn alpha_coefficients(
    p: &HestonParams,
    vp: &VariationalParams,
    eps: &EpsilonTriple,
    aux: &AuxConstants,
) -> AlphaCoefficients {
    let HestonParams { kappa, m, sigma, r, .. } = *p;
    let rho = p.rho.abs();
    let VariationalParams { nu, mu, omega, .. } = *vp;
    let s2 = sigma * sigma;
    let margin = kappa * m - 0.5 * s2;

    let alpha1 = 0.5 * (1.0 - eps.eps1 - eps.eps2);
    let alpha2 = 0.5 * s2 * aux.tau;
    let alpha3 = -r * nu - 0.5 * kappa - rho * sigma * nu + r;
    let alpha4 = omega * kappa - kappa * mu - omega * rho * sigma * nu - 2.0 * rho * sigma * nu * mu;
    let alpha5 = omega * margin + s2 * mu + aux.beta - margin * mu;
    let alpha6 = mu * alpha5 + omega * mu * s2 - s2 * mu * mu - 0.5 * omega * omega * s2;
    AlphaCoefficients { alpha1, alpha2, alpha3, alpha4, alpha5, alpha6 }
}

/// Cap on `ν` that keeps `α₄ ≥ 0` for positive correlation.
pub fn nu_bound(p: &HestonParams, vp: &VariationalParams) -> NuBound {
    if p.rho <= 0.0 {
        return NuBound::Unbounded;
    }
    let VariationalParams { mu, omega, .. } = *vp;
    NuBound::Bounded(p.kappa * (omega - mu) / (p.rho * p.sigma * (omega + 2.0 * mu)))
}

const POLE_TOL: f64 = 1e-12;

/// The rational gates `g`, `f`, `f̃` evaluated at `t` (normally `t = 2ε₃μ`).
pub fn gating_functions(t: f64, aux: &AuxConstants) -> Result<GateValues> {
    let AuxConstants { gamma, c, .. } = *aux;
    let s = t - 1.0;
    let tilde_den = t * (1.0 + 2.0 * gamma) - (2.0 + 2.0 * gamma);
    if s.abs() < POLE_TOL || tilde_den.abs() < POLE_TOL {
        return Err(Error::Numerical(format!("gate functions evaluated at a pole (t = {t})")));
    }
    let g = ((2.0 + c) * t - (1.0 + c) * t * t) / (s * s);
    let lead = gamma - 0.5 * c;
    let f = t / s * lead;
    let f_tilde = t / tilde_den * lead * lead;
    Ok(GateValues { g, f, f_tilde })
}

/// `Δ_ω` together with the two roots of the quadratic in `ω` that encodes
/// `α₆ − α₅/(2ε₃) ≥ 0`.
fn omega_roots(p: &HestonParams, mu: f64, eps3: f64, beta: f64) -> (f64, f64, f64) {
    let s2 = p.sigma * p.sigma;
    let k = p.feller_margin();
    let d = mu - 0.5 / eps3;
    let delta_omega = k * k * d * d + mu * s2 * s2 * (mu - 1.0 / eps3) + 2.0 * beta * s2 * d;
    let centre = k * d + s2 * mu;
    let root = delta_omega.max(0.0).sqrt();
    (delta_omega, (centre - root) / s2, (centre + root) / s2)
}

/// Interval `(M, N)` of admissible `ω`.
pub fn omega_interval(
    p: &HestonParams,
    vp: &VariationalParams,
    eps: &EpsilonTriple,
    aux: &AuxConstants,
) -> Result<OmegaInterval> {
    let mu = vp.mu;
    let (delta_omega, lo_root, hi_root) = omega_roots(p, mu, eps.eps3, aux.beta);
    if !(delta_omega >= 0.0) {
        return Err(infeasible(ConstraintId::DeltaOmega, delta_omega));
    }
    let s2 = p.sigma * p.sigma;
    let omega_lo = lo_root.max(mu);
    let omega_hi = hi_root.min(mu + (aux.gamma * s2 * mu - aux.beta) / p.feller_margin());
    if !(omega_lo < omega_hi) {
        return Err(infeasible(ConstraintId::OmegaInterval, omega_hi - omega_lo));
    }
    Ok(OmegaInterval { omega_lo, omega_hi, delta_omega })
}

/// Open window `(t̄/(2μ), min{2α₂/α₅, (1 + 1/(1+2γ))/(2μ)})` for `ε₃`.
pub fn eps3_window(alphas: &AlphaCoefficients, aux: &AuxConstants, mu: f64) -> Result<(f64, f64)> {
    if !(alphas.alpha5 > 0.0) {
        return Err(Error::invalid(format!("eps3 window needs alpha5 > 0, got {}", alphas.alpha5)));
    }
    let lo = aux.tbar / (2.0 * mu);
    let cap = (1.0 + 1.0 / (1.0 + 2.0 * aux.gamma)) / (2.0 * mu);
    let hi = (2.0 * alphas.alpha2 / alphas.alpha5).min(cap);
    if !(lo < hi) {
        return Err(infeasible(ConstraintId::Eps3Window, hi - lo));
    }
    Ok((lo, hi))
}

/// Full evaluation of one parameter tuple; shared by [`certify`] and the search.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Evaluation {
    pub aux: AuxConstants,
    pub alphas: AlphaCoefficients,
    pub nu_bound: NuBound,
    pub delta_omega: f64,
    pub omega_lo: f64,
    pub omega_hi: f64,
    pub eps3_lo: f64,
    pub eps3_hi: f64,
    pub gates: GateValues,
    pub checks: [ConstraintCheck; 18],
}

impl Evaluation {
    pub fn first_failure(&self) -> Option<&ConstraintCheck> {
        self.checks.iter().find(|c| !c.satisfied)
    }

    /// `c₁ = min{α₁, α₂ − α₅ε₃/2, a³(α₆ − α₅/(2ε₃))}`.
    pub fn c1(&self, a: f64, eps3: f64) -> f64 {
        let AlphaCoefficients { alpha1, alpha2, alpha5, alpha6, .. } = self.alphas;
        alpha1.min(alpha2 - 0.5 * alpha5 * eps3).min(a.powi(3) * (alpha6 - alpha5 / (2.0 * eps3)))
    }
}

pub(crate) fn evaluate(
    p: &HestonParams,
    vp: &VariationalParams,
    eps: &EpsilonTriple,
    delta: f64,
    margin: f64,
) -> Evaluation {
    use ConstraintId as C;

    let s2 = p.sigma * p.sigma;
    let k = p.feller_margin();
    let VariationalParams { nu, mu, omega, .. } = *vp;
    let EpsilonTriple { eps1, eps2, eps3 } = *eps;

    let aux = aux_constants(p, vp, eps, delta);
    let alphas = alpha_coefficients(p, vp, eps, &aux);
    let nu_cap = nu_bound(p, vp);
    let t = 2.0 * eps3 * mu;

    let dmax = if k > 0.0 { (k / s2).powi(2) } else { 0.0 };
    let eps2_lo = 2.0 * p.rho * p.rho / (2.0 - aux.tbar);

    let (eps3_lo, eps3_hi) = {
        let lo = aux.tbar / (2.0 * mu);
        let cap = (1.0 + 1.0 / (1.0 + 2.0 * aux.gamma)) / (2.0 * mu);
        let hi = if alphas.alpha5 > 0.0 { (2.0 * alphas.alpha2 / alphas.alpha5).min(cap) } else { f64::NEG_INFINITY };
        (lo, hi)
    };

    let beta_cap = if t > 1.0 { (mu * aux.gamma * s2).min(mu * k + mu * s2 / (t - 1.0)) } else { f64::NEG_INFINITY };

    let (delta_omega, lo_root, hi_root) = omega_roots(p, mu, eps3, aux.beta);
    let (omega_lo, omega_hi) = if delta_omega >= 0.0 && k > 0.0 {
        (lo_root.max(mu), hi_root.min(mu + (aux.gamma * s2 * mu - aux.beta) / k))
    } else {
        (f64::NAN, f64::NAN)
    };

    let gates =
        gating_functions(t, &aux).unwrap_or(GateValues { g: f64::INFINITY, f: f64::INFINITY, f_tilde: f64::INFINITY });

    let a2e3 = alphas.alpha2 - 0.5 * alphas.alpha5 * eps3;
    let a6e3 = alphas.alpha6 - alphas.alpha5 / (2.0 * eps3);

    let slacks = [
        (C::Feller, k),
        (C::DeltaRange, delta.min(dmax - delta)),
        (C::RhoWindow, rho_bound(delta) - p.rho.abs()),
        (C::Eps2Window, (eps2 - eps2_lo).min(1.0 - eps1 - eps2)),
        (C::GammaPositive, aux.gamma),
        (C::Alpha5Positive, alphas.alpha5),
        (C::Eps3Window, (eps3 - eps3_lo).min(eps3_hi - eps3)),
        (C::NuBound, nu_cap.value() - nu),
        (C::BetaCap, beta_cap - aux.beta),
        (C::DeltaOmega, delta_omega),
        (C::OmegaInterval, (omega - omega_lo).min(omega_hi - omega)),
        (C::GateG, delta - gates.g),
        (C::GateF, delta - gates.f),
        (C::GateFTilde, delta - gates.f_tilde),
        (C::Alpha2Eps3, a2e3),
        (C::Alpha6Eps3, a6e3),
        (C::Alpha4, alphas.alpha4),
        (C::C1Positive, alphas.alpha1.min(a2e3).min(a6e3)),
    ];
    let checks = slacks.map(|(id, slack)| ConstraintCheck::new(id, slack, margin));

    Evaluation { aux, alphas, nu_bound: nu_cap, delta_omega, omega_lo, omega_hi, eps3_lo, eps3_hi, gates, checks }
}

/// A verified set of constants for the Gårding inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct CoercivityCertificate {
    pub params: HestonParams,
    pub variational: VariationalParams,
    pub epsilons: EpsilonTriple,
    pub aux: AuxConstants,
    pub alphas: AlphaCoefficients,
    pub nu_bound: NuBound,
    pub omega_interval: OmegaInterval,
    pub eps3_window: (f64, f64),
    pub gates: GateValues,
    pub c1: f64,
    pub c2: f64,
    pub constraint_report: Vec<ConstraintCheck>,
}

impl CoercivityCertificate {
    pub fn delta(&self) -> f64 {
        self.aux.delta
    }

    /// Flat `snake_case` key/value view with every number as a decimal string.
    pub fn to_flat_fields(&self) -> Vec<(String, String)> {
        let p = &self.params;
        let vp = &self.variational;
        let e = &self.epsilons;
        let aux = &self.aux;
        let al = &self.alphas;
        let mut out: Vec<(String, String)> = [
            ("certified", "true".to_string()),
            ("kappa", num(p.kappa)),
            ("m", num(p.m)),
            ("sigma", num(p.sigma)),
            ("rho", num(p.rho)),
            ("r", num(p.r)),
            ("eta", num(p.eta)),
            ("feller_margin", num(p.feller_margin())),
            ("bessel_dimension", num(p.bessel_dimension())),
            ("a", num(vp.a)),
            ("nu", num(vp.nu)),
            ("mu", num(vp.mu)),
            ("omega", num(vp.omega)),
            ("eps1", num(e.eps1)),
            ("eps2", num(e.eps2)),
            ("eps3", num(e.eps3)),
            ("delta", num(aux.delta)),
            ("rho_bound", num(rho_bound(aux.delta))),
            ("tbar", num(aux.tbar)),
            ("tau", num(aux.tau)),
            ("gamma", num(aux.gamma)),
            ("beta", num(aux.beta)),
            ("c", num(aux.c)),
            ("alpha1", num(al.alpha1)),
            ("alpha2", num(al.alpha2)),
            ("alpha3", num(al.alpha3)),
            ("alpha4", num(al.alpha4)),
            ("alpha5", num(al.alpha5)),
            ("alpha6", num(al.alpha6)),
            ("nu_bound", num(self.nu_bound.value())),
            ("omega_lo", num(self.omega_interval.omega_lo)),
            ("omega_hi", num(self.omega_interval.omega_hi)),
            ("delta_omega", num(self.omega_interval.delta_omega)),
            ("eps3_lo", num(self.eps3_window.0)),
            ("eps3_hi", num(self.eps3_window.1)),
            ("gate_g", num(self.gates.g)),
            ("gate_f", num(self.gates.f)),
            ("gate_f_tilde", num(self.gates.f_tilde)),
            ("c1", num(self.c1)),
            ("c2", num(self.c2)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        out.extend(report_fields(&self.constraint_report));
        out
    }
}

impl InfeasibilityReport {
    pub fn to_flat_fields(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("certified".to_string(), "false".to_string()),
            ("failing_constraint".to_string(), self.primary.as_str().to_string()),
        ];
        if let Some(c) = &self.closest {
            let v = &c.variational;
            let e = &c.epsilons;
            for (k, x) in [
                ("a", v.a),
                ("nu", v.nu),
                ("mu", v.mu),
                ("omega", v.omega),
                ("eps1", e.eps1),
                ("eps2", e.eps2),
                ("eps3", e.eps3),
                ("delta", c.delta),
            ] {
                out.push((k.to_string(), num(x)));
            }
        }
        out.extend(report_fields(&self.constraint_report));
        out
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn report_fields(report: &[ConstraintCheck]) -> Vec<(String, String)> {
    report
        .iter()
        .flat_map(|c| {
            let key = c.id.as_str().replace('-', "_");
            [(format!("{key}_satisfied"), c.satisfied.to_string()), (format!("{key}_slack"), num(c.slack))]
        })
        .collect()
}

/// Evaluate every constraint with the default margin.
pub fn certify(
    p: &HestonParams,
    vp: &VariationalParams,
    eps: &EpsilonTriple,
    delta: f64,
) -> Result<CoercivityCertificate> {
    certify_with_margin(p, vp, eps, delta, DEFAULT_MARGIN)
}

pub fn certify_with_margin(
    p: &HestonParams,
    vp: &VariationalParams,
    eps: &EpsilonTriple,
    delta: f64,
    margin: f64,
) -> Result<CoercivityCertificate> {
    p.validate()?;
    vp.validate()?;
    if !(eps.eps1 > 0.0 && eps.eps2 > 0.0 && eps.eps3 > 0.0) {
        return Err(Error::invalid("epsilons must be positive"));
    }
    if !delta.is_finite() {
        return Err(Error::invalid("delta must be finite"));
    }
    let ev = evaluate(p, vp, eps, delta, margin);
    let constraint_report = ev.checks.to_vec();
    if let Some(first) = ev.first_failure() {
        return Err(Error::Infeasible(Box::new(InfeasibilityReport {
            primary: first.id,
            constraint_report,
            closest: Some(CandidateTuple { variational: *vp, epsilons: *eps, delta }),
        })));
    }
    Ok(CoercivityCertificate {
        params: *p,
        variational: *vp,
        epsilons: *eps,
        aux: ev.aux,
        alphas: ev.alphas,
        nu_bound: ev.nu_bound,
        omega_interval: OmegaInterval { omega_lo: ev.omega_lo, omega_hi: ev.omega_hi, delta_omega: ev.delta_omega },
        eps3_window: (ev.eps3_lo, ev.eps3_hi),
        gates: ev.gates,
        c1: ev.c1(vp.a, eps.eps3),
        c2: ev.alphas.alpha3,
        constraint_report,
    })
}
