//! Full-truncation Euler Monte Carlo under the risk-neutral measure.
//!
//! ```text
//! ln S += (r − Y⁺/2)Δt + √(Y⁺Δt) Z₁
//! Y    += κ(m − Y⁺)Δt + σ√(Y⁺Δt)(ρZ₁ + √(1−ρ²) Z₂),    Y⁺ = max(Y, 0)
//! ```
//!
//! Paths are split into fixed-size chunks; chunk `c` draws from the ChaCha8
//! stream `c` of the seed, and chunk sums are combined in chunk order, so the
//! result does not depend on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HestonParams, OptionSpec};

const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum McScheme {
    #[default]
    FullTruncationEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub scheme: McScheme,
}

impl McConfig {
    pub fn new(paths: usize, steps: usize, seed: u64) -> Result<Self> {
        let cfg = McConfig { paths, steps, seed, scheme: McScheme::FullTruncationEuler };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths < 1 || self.steps < 1 {
            return Err(Error::invalid("Monte Carlo needs at least one path and one step"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub paths: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Chan et al. pairwise update.
    fn merge(self, o: Moments) -> Moments {
        if self.n == 0 {
            return o;
        }
        if o.n == 0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n as f64 / n as f64,
            m2: self.m2 + o.m2 + d * d * (self.n as f64 * o.n as f64) / n as f64,
        }
    }
}

/// Simulates `(S_T, Y_T)` and estimates `E[f(S_T, Y_T)]`.
pub fn mc_expectation(
    p: &HestonParams,
    s0: f64,
    y0: f64,
    maturity: f64,
    cfg: &McConfig,
    f: impl Fn(f64, f64) -> f64 + Sync,
) -> Result<McEstimate> {
    p.validate()?;
    cfg.validate()?;
    if !(s0 > 0.0) || !(y0 >= 0.0) || !(maturity > 0.0) {
        return Err(Error::invalid("Monte Carlo needs S0 > 0, y0 >= 0 and T > 0"));
    }
    let HestonParams { kappa, m, sigma, rho, r, .. } = *p;
    let dt = maturity / cfg.steps as f64;
    let sq_dt = dt.sqrt();
    let rho_c = (1.0 - rho * rho).max(0.0).sqrt();
    let chunks = cfg.paths.div_ceil(CHUNK);
    let ln_s0 = s0.ln();

    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(c as u64);
            let n = CHUNK.min(cfg.paths - c * CHUNK);
            let mut acc = Moments::default();
            for _ in 0..n {
                let mut x = ln_s0;
                let mut y = y0;
                for _ in 0..cfg.steps {
                    let z1: f64 = StandardNormal.sample(&mut rng);
                    let z2: f64 = StandardNormal.sample(&mut rng);
                    let yp = y.max(0.0);
                    let vol = yp.sqrt() * sq_dt;
                    x += (r - 0.5 * yp) * dt + vol * z1;
                    y += kappa * (m - yp) * dt + sigma * vol * (rho * z1 + rho_c * z2);
                }
                acc.push(f(x.exp(), y));
            }
            acc
        })
        .collect();
    let total = parts.into_iter().fold(Moments::default(), Moments::merge);
    let var = if total.n > 1 { total.m2 / (total.n - 1) as f64 } else { 0.0 };
    Ok(McEstimate { mean: total.mean, std_error: (var / total.n as f64).sqrt(), paths: total.n })
}

/// Discounted payoff mean and its standard error.
pub fn mc_price(p: &HestonParams, spec: &OptionSpec, s0: f64, y0: f64, cfg: &McConfig) -> Result<McEstimate> {
    spec.validate()?;
    let df = (-p.r * spec.maturity).exp();
    mc_expectation(p, s0, y0, spec.maturity, cfg, |s, _| df * spec.payoff(s))
}
