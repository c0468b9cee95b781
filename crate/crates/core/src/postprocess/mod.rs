//! Prediction-stage processors.
//!
//! They take probabilities recentred so the upstream decision threshold sits
//! at 0.5 (see [`recenter`]) and return labels or calibrated probabilities.

pub mod eqodds;
pub mod platt;
pub mod reject;

pub use eqodds::{apply_eq_odds, fit_eq_odds, solve_eq_odds, EqOddsMix, EqOddsSolution};
pub use platt::{apply_group_platt, fit_group_platt, GroupPlatt};
pub use reject::{reject_option, RejectOptionParams};

/// Monotone piecewise-linear map sending `[0, tau]` onto `[0, 0.5]` and
/// `[tau, 1]` onto `[0.5, 1]`, so that `p > tau` iff `recenter(p, tau) > 0.5`.
pub fn recenter(p: f64, tau: f64) -> f64 {
    if p <= tau {
        (0.5 * p / tau.max(1e-12)).min(0.5)
    } else {
        0.5 + 0.5 * (p - tau) / (1.0 - tau).max(1e-12)
    }
}
