//! Discrete-time double integrators under PD control:
//!
//! ```text
//! x_{k+1} = x_k + z_k
//! z_{k+1} = (1 − η) z_k − ηλ x_{k−τ} + w_k
//! ```
//!
//! Eliminating `z` gives the AR recursion
//! `x_{k+1} = (2−η) x_k − (1−η) x_{k−1} − ηλ x_{k−τ−1} + w_{k−1}` whose
//! autocovariances `ρ_0..ρ_{τ+1}` solve a `(τ+2)`-dimensional moment system.

use serde::{Deserialize, Serialize};

use crate::dt_single::{root_radius, wiener_khintchine_adaptive, QuadraticPencil};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtPdSubsystem {
    pub eta: f64,
    pub lambda: f64,
    pub tau: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtVerdict {
    pub stable: bool,
    pub radius: f64,
}

impl DtPdSubsystem {
    pub fn new(eta: f64, lambda: f64, tau: usize) -> Self {
        Self { eta, lambda, tau }
    }

    /// `z^{τ+2} − (2−η) z^{τ+1} + (1−η) z^τ + ηλ`, highest power first.
    pub fn characteristic(&self) -> Vec<f64> {
        let tau = self.tau;
        let mut c = vec![0.0; tau + 3];
        c[0] += 1.0;
        c[1] -= 2.0 - self.eta;
        c[2] += 1.0 - self.eta;
        c[tau + 2] += self.eta * self.lambda;
        c
    }
}

pub fn stability_dt_double(sub: &DtPdSubsystem) -> Result<DtVerdict> {
    let radius = root_radius(&sub.characteristic())?;
    Ok(DtVerdict { stable: radius < 1.0, radius })
}

pub(crate) fn double_pencil(eta: f64, tau: usize) -> QuadraticPencil {
    let dim = tau + 2;
    let a = 2.0 - eta;
    let b = 1.0 - eta;
    let mut p = QuadraticPencil::zeros(dim);
    // Stationary second moment, moved to the form (…)·ρ = 1:
    // ρ_0 = (a² + b² + η²λ²) ρ_0 + 1 − 2ab ρ_1 − 2aηλ ρ_{τ+1} + 2bηλ ρ_τ
    p.a0[(0, 0)] += 1.0 - a * a - b * b;
    p.a2[(0, 0)] -= eta * eta;
    p.a0[(0, 1)] += 2.0 * a * b;
    p.a1[(0, tau + 1)] += 2.0 * a * eta;
    p.a1[(0, tau)] -= 2.0 * b * eta;
    // ρ_t = a ρ_{t−1} − b ρ_{|t−2|} − ηλ ρ_{|τ+2−t|}, t = 1..τ+1
    for t in 1..=tau + 1 {
        p.a0[(t, t)] -= 1.0;
        p.a0[(t, t - 1)] += a;
        p.a0[(t, t.abs_diff(2))] -= b;
        p.a1[(t, (tau + 2).abs_diff(t))] -= eta;
    }
    p
}

fn require_stable(sub: &DtPdSubsystem) -> Result<()> {
    if !(sub.eta > 0.0 && sub.eta.is_finite()) {
        return Err(Error::InvalidArgument(format!("η must be positive, got {}", sub.eta)));
    }
    let v = stability_dt_double(sub)?;
    if v.stable {
        Ok(())
    } else {
        Err(Error::Unstable(format!(
            "η = {}, λ = {}, τ = {}: root radius {}",
            sub.eta, sub.lambda, sub.tau, v.radius
        )))
    }
}

/// Position variance `ρ_0 = E[x²]` from the moment system.
pub fn moment_matching_dt_double(sub: &DtPdSubsystem) -> Result<f64> {
    moment_matching_dt_double_derivatives(sub).map(|(v, _, _)| v)
}

/// `ρ_0` with its first two derivatives in `λ` at fixed `η`.
pub fn moment_matching_dt_double_derivatives(sub: &DtPdSubsystem) -> Result<(f64, f64, f64)> {
    require_stable(sub)?;
    double_pencil(sub.eta, sub.tau)
        .solve_with_derivatives(sub.lambda)
        .map_err(|e| match e {
            Error::Singular(msg) => Error::Singular(format!(
                "{msg} (η = {}, τ = {})",
                sub.eta, sub.tau
            )),
            other => other,
        })
}

/// Position variance by Wiener–Khintchine quadrature.
pub fn quadrature_dt_double(sub: &DtPdSubsystem) -> Result<f64> {
    require_stable(sub)?;
    wiener_khintchine_adaptive(&sub.characteristic())
}

/// Upper end of the stable `λ` interval `(0, λ_th)` at fixed `η`, `τ`, found by
/// scanning up from `λ = 0⁺` and bisecting on the root radius.
/// `None` if no small positive `λ` is stable (e.g. `η ≥ 2`).
pub fn lambda_threshold(eta: f64, tau: usize) -> Option<f64> {
    let stable = |l: f64| {
        stability_dt_double(&DtPdSubsystem::new(eta, l, tau))
            .map(|v| v.stable)
            .unwrap_or(false)
    };
    let mut lo = 1e-9;
    if !stable(lo) {
        return None;
    }
    let mut hi = lo;
    while stable(hi) {
        lo = hi;
        hi = if hi < 1e-3 { 1e-3 } else { hi * 1.25 };
        if hi > 1e6 {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if stable(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}
