//! Heston model parameters, payoffs and the change of variables between the
//! backward pricing problem and the forward problem in `(t, x, y)`.
//!
//! With `S0 = 1` the log-price is `x = ln S`. The forward unknown is
//!
//! ```text
//! u(t, x, y) = exp(-(ω/2) y²) · ( U(T - t, S, y) - e^{-r(T-t)} h(S e^{r(T-t)}) )
//! ```
//!
//! i.e. the price in excess of the discounted payoff, damped in `y`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Risk-neutral Heston dynamics plus the physical drift `eta`.
///
/// `eta` never enters pricing; it is carried so a configuration can record the
/// real-world drift next to the pricing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HestonParams {
    /// Mean-reversion rate of the variance.
    pub kappa: f64,
    /// Long-run variance level.
    pub m: f64,
    /// Volatility of variance.
    pub sigma: f64,
    /// Correlation between the asset and variance noises.
    pub rho: f64,
    /// Risk-free rate.
    pub r: f64,
    #[serde(default)]
    pub eta: f64,
}

impl HestonParams {
    pub fn new(kappa: f64, m: f64, sigma: f64, rho: f64, r: f64) -> Result<Self> {
        let p = HestonParams { kappa, m, sigma, rho, r, eta: 0.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.kappa, self.m, self.sigma, self.rho, self.r, self.eta].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("Heston parameters must be finite"));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::invalid(format!("kappa must be > 0, got {}", self.kappa)));
        }
        if !(self.m > 0.0) {
            return Err(Error::invalid(format!("m must be > 0, got {}", self.m)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::invalid(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.r >= 0.0) {
            return Err(Error::invalid(format!("r must be >= 0, got {}", self.r)));
        }
        if self.rho.abs() > 1.0 {
            return Err(Error::invalid(format!("|rho| must be <= 1, got {}", self.rho)));
        }
        Ok(())
    }

    /// `κm − σ²/2`; the variance process stays away from zero iff this is positive.
    pub fn feller_margin(&self) -> f64 {
        self.kappa * self.m - 0.5 * self.sigma * self.sigma
    }

    /// Dimension `4κm/σ²` of the squared Bessel process behind the variance.
    pub fn bessel_dimension(&self) -> f64 {
        4.0 * self.kappa * self.m / (self.sigma * self.sigma)
    }

    /// Strict Feller condition. The equality case is not admissible.
    pub fn is_admissible(&self) -> bool {
        self.feller_margin() > 0.0
    }
}

pub fn feller_margin(p: &HestonParams) -> f64 {
    p.feller_margin()
}

pub fn bessel_dimension(p: &HestonParams) -> f64 {
    p.bessel_dimension()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

/// A European option on the asset, quoted for `S0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionSpec {
    pub strike: f64,
    pub maturity: f64,
    pub kind: OptionKind,
}

impl OptionSpec {
    pub fn new(strike: f64, maturity: f64, kind: OptionKind) -> Result<Self> {
        let spec = OptionSpec { strike, maturity, kind };
        spec.validate()?;
        Ok(spec)
    }

    pub fn call(strike: f64, maturity: f64) -> Result<Self> {
        Self::new(strike, maturity, OptionKind::Call)
    }

    pub fn put(strike: f64, maturity: f64) -> Result<Self> {
        Self::new(strike, maturity, OptionKind::Put)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strike > 0.0 && self.strike.is_finite()) {
            return Err(Error::invalid(format!("strike must be > 0, got {}", self.strike)));
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(Error::invalid(format!("maturity must be > 0, got {}", self.maturity)));
        }
        Ok(())
    }

    /// The same contract with the other payoff.
    pub fn flipped(&self) -> Self {
        let kind = match self.kind {
            OptionKind::Call => OptionKind::Put,
            OptionKind::Put => OptionKind::Call,
        };
        OptionSpec { kind, ..*self }
    }

    pub fn payoff(&self, s: f64) -> f64 {
        match self.kind {
            OptionKind::Call => (s - self.strike).max(0.0),
            OptionKind::Put => (self.strike - s).max(0.0),
        }
    }

    /// `e^{-rτ} h(S e^{rτ})` with `τ` the time to maturity.
    pub fn discounted_forward_payoff(&self, s: f64, tau: f64, r: f64) -> f64 {
        (-r * tau).exp() * self.payoff(s * (r * tau).exp())
    }
}

pub fn payoff(spec: &OptionSpec, s: f64) -> f64 {
    spec.payoff(s)
}

fn check_point(t: f64, s: f64, spec: &OptionSpec) -> Result<()> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::invalid(format!("asset price must be > 0, got {s}")));
    }
    if !(0.0..=spec.maturity).contains(&t) {
        return Err(Error::invalid(format!("calendar time {t} outside [0, {}]", spec.maturity)));
    }
    Ok(())
}

/// Price `U(t, S, y)` from the forward solution value `u(T - t, ln S, y)`.
pub fn recover_price(
    u_value: f64,
    t: f64,
    s: f64,
    y: f64,
    spec: &OptionSpec,
    p: &HestonParams,
    omega: f64,
) -> Result<f64> {
    check_point(t, s, spec)?;
    let tau = spec.maturity - t;
    Ok((0.5 * omega * y * y).exp() * u_value + spec.discounted_forward_payoff(s, tau, p.r))
}

/// Inverse of [`recover_price`]: the forward unknown for a given price.
pub fn forward_value(
    price: f64,
    t: f64,
    s: f64,
    y: f64,
    spec: &OptionSpec,
    p: &HestonParams,
    omega: f64,
) -> Result<f64> {
    check_point(t, s, spec)?;
    let tau = spec.maturity - t;
    Ok((-0.5 * omega * y * y).exp() * (price - spec.discounted_forward_payoff(s, tau, p.r)))
}
