//! Continuous-time double integrators under PD control.
//!
//! After rescaling time by `τ_n` the decoupled error dynamics read
//! `x'' = −η x' − ηλ x(t − 1) + w'` with unit delay. The subsystem is stable iff
//! `0 < λ < φ(η) = β / sin β`, where `β ∈ (0, π/2)` solves `β tan β = η`.
//!
//! For large `η` the velocity settles quickly and the position follows the
//! first-order model `dx = −λ x(t − 1) dt + dw/η`, whose variance is the
//! single-integrator closed form divided by `η²`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::ct_single::variance_ct_single_derivatives;
use crate::error::{Error, Result};
use crate::topology::{circulant_eigenvalues, GainProfile, NetworkSpec, Spectrum};

/// PD loop expressed in delay-normalized time (unit delay).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedPdModel {
    /// `η τ_n`
    pub eta: f64,
    /// `τ_n k_ℓ`
    pub gains: Vec<f64>,
    /// Spectrum of the normalized gains, i.e. `τ_n λ_j`.
    pub lambdas: Spectrum,
    /// The delay that was normalized away.
    pub tau: f64,
}

impl NormalizedPdModel {
    /// Physical gains and derivative gain.
    pub fn to_physical(&self) -> GainProfile {
        GainProfile::with_eta(
            self.gains.iter().map(|k| k / self.tau).collect(),
            self.eta / self.tau,
        )
    }
}

pub fn normalize_double_integrator(spec: &NetworkSpec, gains: &GainProfile) -> Result<NormalizedPdModel> {
    let eta = gains
        .eta
        .ok_or_else(|| Error::InvalidArgument("double integrator needs a derivative gain η".into()))?;
    normalize_with_tau(spec, gains, eta, spec.tau())
}

fn normalize_with_tau(
    spec: &NetworkSpec,
    gains: &GainProfile,
    eta: f64,
    tau: f64,
) -> Result<NormalizedPdModel> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("delay must be positive, got {tau}")));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidArgument(format!("derivative gain must be positive, got {eta}")));
    }
    let spectrum = circulant_eigenvalues(spec, gains)?;
    Ok(NormalizedPdModel {
        eta: eta * tau,
        gains: gains.k.iter().map(|k| k * tau).collect(),
        lambdas: spectrum.scaled(tau),
        tau,
    })
}

/// `β ∈ (0, π/2)` with `β tan β = η`, by bisection then a Newton polish.
pub fn crossing_frequency(eta: f64) -> f64 {
    assert!(eta > 0.0, "η must be positive");
    let f = |b: f64| b * b.tan() - eta;
    let (mut lo, mut hi) = (0.0, FRAC_PI_2 - 1e-12);
    if f(hi) < 0.0 {
        return hi;
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut b = 0.5 * (lo + hi);
    for _ in 0..3 {
        let c = b.cos();
        let slope = b.tan() + b / (c * c);
        let next = b - f(b) / slope;
        if next > 0.0 && next < FRAC_PI_2 && f(next).abs() < f(b).abs() {
            b = next;
        } else {
            break;
        }
    }
    b
}

/// Stability bound `φ(η) = β/sin β`, increasing from 1 to π/2.
pub fn phi_of_eta(eta: f64) -> f64 {
    let b = crossing_frequency(eta);
    if b < 1e-8 {
        // β/sin β = 1 + β²/6 + O(β⁴)
        return 1.0 + b * b / 6.0;
    }
    b / b.sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdStabilityVerdict {
    pub stable: bool,
    /// `φ(η)`
    pub bound: f64,
    /// `φ(η) − max_{j≠1} λ_j`
    pub margin: f64,
}

pub fn stability_ct_double(model: &NormalizedPdModel) -> PdStabilityVerdict {
    let bound = phi_of_eta(model.eta);
    let margin = bound - model.lambdas.max_nontrivial();
    PdStabilityVerdict { stable: margin > 0.0 && model.lambdas.min_nontrivial() > 0.0, bound, margin }
}

/// Reduced first-order variance in normalized time; an approximation that
/// tightens as `η` grows.
pub fn reduced_model_variance(eta: f64, lambda: f64) -> Result<f64> {
    reduced_model_derivatives(eta, lambda).map(|(v, _, _)| v)
}

pub fn reduced_model_derivatives(eta: f64, lambda: f64) -> Result<(f64, f64, f64)> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidArgument(format!("derivative gain must be positive, got {eta}")));
    }
    let scale = 1.0 / (eta * eta);
    let (v, d1, d2) = variance_ct_single_derivatives(lambda, 1.0)?;
    Ok((v * scale, d1 * scale, d2 * scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ct_single::{optimal_normalized_eigenvalue, variance_ct_single};
    use crate::topology::DelayModel;
    use approx::assert_relative_eq;

    #[test]
    fn unit_delay_normalization_is_identity() {
        let spec = NetworkSpec::new(8, 2, DelayModel::constant(1.0)).unwrap();
        let gains = GainProfile::with_eta(vec![0.2, 0.1], 3.0);
        let m = normalize_double_integrator(&spec, &gains).unwrap();
        assert_eq!(m.eta, 3.0);
        assert_eq!(m.gains, gains.k);
        assert_eq!(m.to_physical(), gains);
    }

    #[test]
    fn normalized_eta_seventy() {
        let spec = NetworkSpec::new(8, 2, DelayModel::linear(1.0)).unwrap();
        let gains = GainProfile::with_eta(vec![0.2, 0.1], 35.0);
        let m = normalize_double_integrator(&spec, &gains).unwrap();
        assert_eq!(m.eta, 70.0);
        let back = m.to_physical();
        for (a, b) in back.k.iter().zip(&gains.k) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((back.eta.unwrap() - 35.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_missing_or_bad_eta() {
        let spec = NetworkSpec::new(8, 2, DelayModel::linear(1.0)).unwrap();
        assert!(normalize_double_integrator(&spec, &GainProfile::new(vec![0.1, 0.1])).is_err());
        assert!(normalize_double_integrator(&spec, &GainProfile::with_eta(vec![0.1, 0.1], -1.0)).is_err());
    }

    #[test]
    fn crossing_solves_the_transcendental_equation() {
        for eta in [1e-3, 0.1, 0.5, 1.0, 3.0, 10.0] {
            let b = crossing_frequency(eta);
            assert!((b * b.tan() - eta).abs() < 1e-12, "η = {eta}");
        }
        for eta in [70.0, 1e3] {
            let b = crossing_frequency(eta);
            assert!(((b * b.tan() - eta) / eta).abs() < 1e-12);
        }
    }

    #[test]
    fn phi_limits() {
        assert!((phi_of_eta(1e-9) - 1.0).abs() < 1e-8);
        assert!((phi_of_eta(1e9) - FRAC_PI_2).abs() < 1e-6);
    }

    #[test]
    fn phi_stays_inside_its_range() {
        for i in 1..=1000 {
            let eta = i as f64 * 0.1;
            let p = phi_of_eta(eta);
            assert!(p > 1.0 && p < FRAC_PI_2);
        }
    }

    #[test]
    fn stability_rule() {
        let model = |lambdas: Vec<f64>, eta: f64| NormalizedPdModel {
            eta,
            gains: vec![],
            lambdas: Spectrum::from_vec(lambdas),
            tau: 1.0,
        };
        assert!(!stability_ct_double(&model(vec![0.0, FRAC_PI_2, 1.0], 1e6)).stable);
        assert!(stability_ct_double(&model(vec![0.0, 1.0, 0.5], 0.01)).stable);
        assert!(!stability_ct_double(&model(vec![0.0, 0.0, 0.0], 5.0)).stable);
    }

    #[test]
    fn reduced_variance_scales_with_inverse_square_eta() {
        let a = reduced_model_variance(10.0, 0.6).unwrap();
        let b = reduced_model_variance(20.0, 0.6).unwrap();
        assert_relative_eq!(a / b, 4.0, epsilon = 1e-12);
        assert_relative_eq!(a, variance_ct_single(0.6, 1.0).unwrap() / 100.0, epsilon = 1e-15);
        assert!(reduced_model_variance(10.0, 1.6).is_err());
    }

    #[test]
    fn reduced_argmin_is_beta_star() {
        let beta = optimal_normalized_eigenvalue();
        for eta in [2.0, 70.0] {
            let (_, d1, _) = reduced_model_derivatives(eta, beta).unwrap();
            assert!(d1.abs() < 1e-9);
        }
    }
}
