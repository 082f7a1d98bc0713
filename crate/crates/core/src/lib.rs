//! Weighted variational formulation of the Heston pricing PDE.
//!
//! The crate is organised along the pipeline:
//!
//! * [`model`]: parameters, payoffs and the change of variables between the
//!   backward pricing problem and a forward problem with a line source.
//! * [`coercivity`]: explicit Gårding constants for the weighted form,
//!   delivered as a [`coercivity::CoercivityCertificate`].
//! * [`wspace`]: truncated domain, bilinear finite elements and weighted norms.
//! * [`form`]: assembly of the mass matrix and the sesquilinear form, the
//!   line-source load vector and discrete checks of the form's properties.
//! * [`solver`]: θ-scheme time stepping and price recovery.
//! * [`oracle`]: semi-analytic and Monte Carlo reference prices.
//!
//! ```
//! use hestonvar::coercivity::{search_feasible, SearchOptions};
//! use hestonvar::model::{HestonParams, OptionSpec};
//! use hestonvar::oracle::heston_call;
//! use hestonvar::Error;
//!
//! let p = HestonParams::new(2.0, 0.04, 0.3, 0.1, 0.0)?;
//! let call = heston_call(&p, &OptionSpec::call(1.0, 1.0)?, 1.0, 0.04)?;
//! assert!((call - 0.0778).abs() < 1e-4);
//!
//! // A constraint set that cannot be met comes back as a diagnosis, together
//! // with the closest tuple the search evaluated.
//! match search_feasible(&p, &SearchOptions::coarse()) {
//!     Ok(set) => assert!(set.certificate.c1 > 0.0),
//!     Err(Error::Infeasible(report)) => println!("blocked by {}", report.primary.as_str()),
//!     Err(e) => return Err(e),
//! }
//! # Ok::<(), hestonvar::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coercivity;
pub mod error;
pub mod form;
pub mod model;
pub mod oracle;
pub mod quadrature;
pub mod solver;
pub mod sparse;
pub mod wspace;

mod sum;

pub use error::{Error, Result};

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/weighted-spaces.md")]
    mod weighted_spaces {}
    #[doc = include_str!("../../../book/src/form.md")]
    mod form {}
    #[doc = include_str!("../../../book/src/coercivity.md")]
    mod coercivity {}
    #[doc = include_str!("../../../book/src/time-stepping.md")]
    mod time_stepping {}
    #[doc = include_str!("../../../book/src/oracles.md")]
    mod oracles {}
}
