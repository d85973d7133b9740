//! Systematic error of the uniform insertion-delay model.
//!
//! A pixel ray at angle `θ` to the array axis, hitting a point at axial
//! distance `d`, sees its source leg shortened by
//! `S = √(α² + 2dΔd + Δd²) − α` (with `α = d/cosθ`) when the source moves
//! `Δd` towards the scene. The uniform model assumes `S = Δd`; to first order
//! `S ≈ Δd·cosθ`.

use serde::Serialize;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseShift {
    pub exact: f64,
    pub approx: f64,
}

/// Summary of one `(d, Δd, θ, N)` configuration, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorBudget {
    pub standoff: f64,
    pub delta_d: f64,
    pub theta: f64,
    pub num_sources: usize,
    pub exact_shift: f64,
    pub approx_shift: f64,
    pub remainder_bound: f64,
    pub max_systematic_error: f64,
    /// `2/(1 − cosθ)`; infinite at `θ = 0`.
    pub n_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Magnification {
    pub n_max_real: f64,
    pub n_max_integer: u64,
}

fn check(d: f64, delta_d: f64, theta: f64) -> Result<()> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(invalid(format!("distance d = {d} must be positive")));
    }
    if !(delta_d >= 0.0 && delta_d.is_finite()) {
        return Err(invalid(format!("Δd = {delta_d} must be nonnegative")));
    }
    check_theta(theta)
}

fn check_theta(theta: f64) -> Result<()> {
    if !(0.0..std::f64::consts::FRAC_PI_2).contains(&theta) {
        return Err(invalid(format!("θ = {theta} rad must lie in [0, π/2)")));
    }
    Ok(())
}

/// Exact shift `S` and its first-order form `Δd·cosθ`.
pub fn phase_insertion_shift(d: f64, delta_d: f64, theta: f64) -> Result<PhaseShift> {
    check(d, delta_d, theta)?;
    let cos = theta.cos();
    let alpha = d / cos;
    // (√(α²+u) − α) rewritten as u/(√(α²+u) + α) to avoid cancellation.
    let u = 2.0 * d * delta_d + delta_d * delta_d;
    let exact = if theta == 0.0 {
        delta_d
    } else {
        u / ((alpha * alpha + u).sqrt() + alpha)
    };
    Ok(PhaseShift {
        exact,
        approx: delta_d * cos,
    })
}

/// Lagrange bound on the second-order remainder:
/// `|(α² − β²/4)/(2α³)|·Δd²` with `α = d/cosθ`, `β = 2d`.
pub fn remainder_bound(d: f64, delta_d: f64, theta: f64) -> Result<f64> {
    check(d, delta_d, theta)?;
    let alpha = d / theta.cos();
    let beta = 2.0 * d;
    Ok(((alpha * alpha - beta * beta / 4.0) / (2.0 * alpha.powi(3))).abs() * delta_d * delta_d)
}

/// Largest array size whose systematic error stays within one `Δd`.
///
/// `θ = 0` has no bound and yields [`Error::Unbounded`].
pub fn max_magnification(theta: f64) -> Result<Magnification> {
    check_theta(theta)?;
    let one_minus_cos = 1.0 - theta.cos();
    if one_minus_cos == 0.0 {
        return Err(Error::Unbounded(format!(
            "magnification is unbounded at θ = {theta}"
        )));
    }
    let half_limit = 1.0 / one_minus_cos;
    if half_limit >= (u64::MAX / 2) as f64 {
        return Err(Error::Unbounded(format!(
            "magnification exceeds the integer range at θ = {theta}"
        )));
    }
    // ⌊N/2⌋ ≤ L holds for N ≤ 2⌊L⌋ + 1.
    let n_max_integer = 2 * half_limit.floor() as u64 + 1;
    Ok(Magnification {
        n_max_real: 2.0 * half_limit,
        n_max_integer,
    })
}

/// `⌊N/2⌋·Δd·(1 − cosθ)`.
pub fn max_systematic_error(num_sources: usize, delta_d: f64, theta: f64) -> Result<f64> {
    if num_sources == 0 {
        return Err(invalid("N must be at least 1"));
    }
    if !(delta_d >= 0.0 && delta_d.is_finite()) {
        return Err(invalid(format!("Δd = {delta_d} must be nonnegative")));
    }
    check_theta(theta)?;
    Ok((num_sources / 2) as f64 * delta_d * (1.0 - theta.cos()))
}

pub fn error_budget(num_sources: usize, d: f64, delta_d: f64, theta: f64) -> Result<ErrorBudget> {
    let shift = phase_insertion_shift(d, delta_d, theta)?;
    let n_max = match max_magnification(theta) {
        Ok(m) => m.n_max_real,
        Err(Error::Unbounded(_)) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    Ok(ErrorBudget {
        standoff: d,
        delta_d,
        theta,
        num_sources,
        exact_shift: shift.exact,
        approx_shift: shift.approx,
        remainder_bound: remainder_bound(d, delta_d, theta)?,
        max_systematic_error: max_systematic_error(num_sources, delta_d, theta)?,
        n_max,
    })
}

/// Budgets for `θ` from `0` to `theta_max` in `steps` equal increments.
pub fn sweep_theta(
    num_sources: usize,
    d: f64,
    delta_d: f64,
    theta_max: f64,
    steps: usize,
) -> Result<Vec<ErrorBudget>> {
    if steps == 0 {
        return Err(invalid("theta sweep needs at least one step"));
    }
    (0..=steps)
        .map(|i| error_budget(num_sources, d, delta_d, theta_max * i as f64 / steps as f64))
        .collect()
}

/// Budgets for `N = 1..=n_max` at fixed geometry.
pub fn sweep_sources(n_max: usize, d: f64, delta_d: f64, theta: f64) -> Result<Vec<ErrorBudget>> {
    if n_max == 0 {
        return Err(invalid("source sweep needs N ≥ 1"));
    }
    (1..=n_max)
        .map(|n| error_budget(n, d, delta_d, theta))
        .collect()
}
