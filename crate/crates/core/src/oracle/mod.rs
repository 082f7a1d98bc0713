//! Reference prices independent of the finite-element pipeline.

mod heston;
mod mc;

pub use heston::{black_scholes, heston_call, heston_price, heston_put, log_forward_cf};
pub use mc::{mc_expectation, mc_price, McConfig, McEstimate, McScheme};

#[cfg(test)]
mod tests;
