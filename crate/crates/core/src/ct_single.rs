//! Continuous-time single integrators with delayed proportional feedback.
//!
//! Each decoupled subsystem obeys `dx = −λ x(t − τ) dt + dw`. It is mean-square
//! stable iff `λτ ∈ (0, π/2)`, with stationary variance
//!
//! ```text
//! σ²(λ, τ) = (1 + sin λτ) / (2λ cos λτ)
//! ```
//!
//! Substituting `β = λτ` gives `σ² = τ · G(β)` with `G(β) = (1 + sin β)/(2β cos β)`,
//! so the optimal normalized eigenvalue `β*` and constant `C* = G(β*)` do not
//! depend on the delay.

use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{eigenvalue_weights, NetworkSpec, Spectrum};

/// Delay-normalized variance `G(β)`, finite on `(0, π/2)`.
pub fn normalized_variance(beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < FRAC_PI_2) {
        return Err(Error::Unstable(format!(
            "normalized eigenvalue λτ = {beta} outside (0, π/2)"
        )));
    }
    Ok((1.0 + beta.sin()) / (2.0 * beta * beta.cos()))
}

/// Stationary variance of `dx = −λ x(t−τ) dt + dw`. `τ = 0` is the
/// undelayed Ornstein–Uhlenbeck case `1/(2λ)`.
pub fn variance_ct_single(lambda: f64, tau: f64) -> Result<f64> {
    variance_ct_single_derivatives(lambda, tau).map(|(v, _, _)| v)
}

/// Variance and its first two λ-derivatives.
///
/// With `s = sin λτ`, `c = cos λτ`: `(ln σ²)' = τ/c − 1/λ` and
/// `(ln σ²)'' = τ² s/c² + 1/λ²`.
pub fn variance_ct_single_derivatives(lambda: f64, tau: f64) -> Result<(f64, f64, f64)> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("delay must be non-negative, got {tau}")));
    }
    let beta = lambda * tau;
    if !(lambda > 0.0 && beta < FRAC_PI_2) || !lambda.is_finite() {
        return Err(Error::Unstable(format!(
            "λ = {lambda}, τ = {tau}: need λ > 0 and λτ < π/2"
        )));
    }
    let (s, c) = beta.sin_cos();
    let v = (1.0 + s) / (2.0 * lambda * c);
    let d_log = tau / c - 1.0 / lambda;
    let dd_log = tau * tau * s / (c * c) + 1.0 / (lambda * lambda);
    Ok((v, v * d_log, v * (d_log * d_log + dd_log)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtStabilityVerdict {
    pub stable: bool,
    /// `π/2 − max_{j≠1} λ_j τ`
    pub margin: f64,
}

pub fn stability_ct_single(spectrum: &Spectrum, tau: f64) -> CtStabilityVerdict {
    let margin = FRAC_PI_2 - spectrum.max_nontrivial() * tau;
    let stable = margin > 0.0 && spectrum.min_nontrivial() > 0.0;
    CtStabilityVerdict { stable, margin }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalPoint {
    pub beta_star: f64,
    pub c_star: f64,
    /// `β*/τ`
    pub lambda_star: f64,
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn beta_star() -> f64 {
    static BETA: OnceLock<f64> = OnceLock::new();
    *BETA.get_or_init(|| {
        let g = |b: f64| normalized_variance(b).unwrap_or(f64::INFINITY);
        let coarse = golden_section(g, 1e-6, FRAC_PI_2 - 1e-6, 1e-4);
        // d/dβ ln G = 1/cos β − 1/β changes sign once on (0, π/2).
        let slope = |b: f64| 1.0 / b.cos() - 1.0 / b;
        let (mut lo, mut hi) = (coarse - 1e-3, coarse + 1e-3);
        debug_assert!(slope(lo) < 0.0 && slope(hi) > 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if slope(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    })
}

/// Minimizer of the per-subsystem variance for delay `τ > 0`.
pub fn optimal_point(tau: f64) -> Result<OptimalPoint> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("delay must be positive, got {tau}")));
    }
    let beta = beta_star();
    Ok(OptimalPoint {
        beta_star: beta,
        c_star: normalized_variance(beta)?,
        lambda_star: beta / tau,
    })
}

/// `β*` alone; delay independent.
pub fn optimal_normalized_eigenvalue() -> f64 {
    beta_star()
}

/// `c̃_j*(n) = g_j(n)/(2n+1)` for `j = 2..N`: ratio of each eigenvalue under the
/// uniform quadratic-approximation gain to `λ*`.
pub fn suboptimal_ratios(agents: usize, radius: usize) -> Vec<f64> {
    let w = eigenvalue_weights(agents, radius);
    let alpha = 1.0 / (2 * radius + 1) as f64;
    (1..agents).map(|j| w.row(j).sum() * alpha).collect()
}

/// `C̃_j*(n) = G(c̃_j*(n) β*)`, `j = 2..N`. Delay independent.
pub fn suboptimal_coefficients(spec: &NetworkSpec) -> Result<Vec<f64>> {
    let beta = beta_star();
    suboptimal_ratios(spec.agents(), spec.radius())
        .into_iter()
        .enumerate()
        .map(|(idx, c)| {
            normalized_variance(c * beta).map_err(|_| {
                Error::Infeasible(format!(
                    "quadratic approximation destabilizes subsystem j = {} (c̃β* = {})",
                    idx + 2,
                    c * beta
                ))
            })
        })
        .collect()
}
