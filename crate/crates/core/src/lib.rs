//! Optimal investment when the drift is unknown and extra information can be
//! bought.
//!
//! The investor filters the drift from prices and from an extra signal
//! correlated with the price noise. How much is learned by time `t` is
//! summarized by the informative clock `tau(t) = t0 + int q^2`, in terms of
//! which value functions, the value of information and the optimal
//! acquisition schedule all have closed or semi-closed forms.

pub mod acquisition;
pub mod clock;
pub mod closed_form;
pub mod config;
pub mod error;
pub mod filtering;
pub mod info_econ;
pub mod io;
pub mod model;
pub mod montecarlo;
pub mod numerics;

pub use clock::{ClockSpec, CorrelationProfile, InformativeClock};
pub use error::{Error, Result};
pub use model::{classify, CostSpec, MarketParams, UtilitySpec, WellPosedness};
