//! Model selection shared by the optimizer, the trade-off sweep and the CLI.
//!
//! A [`VarianceModel`] fixes the delay (and derivative gain) for one
//! architecture and maps a physical eigenvalue `λ` of `K` to the steady-state
//! variance of that decoupled subsystem, with two λ-derivatives.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ct_double::{phi_of_eta, reduced_model_derivatives};
use crate::ct_single::{optimal_normalized_eigenvalue, variance_ct_single_derivatives};
use crate::dt_double::{lambda_threshold, moment_matching_dt_double_derivatives, DtPdSubsystem};
use crate::dt_single::{dt_single_threshold, moment_matching_derivatives, DtDelay};
use crate::error::{Error, Result};
use crate::topology::NetworkSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    CtSingle,
    CtDouble,
    DtSingle,
    DtDouble,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::CtSingle => "ct-single",
            ModelKind::CtDouble => "ct-double",
            ModelKind::DtSingle => "dt-single",
            ModelKind::DtDouble => "dt-double",
        }
    }

    pub fn is_discrete(self) -> bool {
        matches!(self, ModelKind::DtSingle | ModelKind::DtDouble)
    }

    pub fn is_double(self) -> bool {
        matches!(self, ModelKind::CtDouble | ModelKind::DtDouble)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ct-single" => Ok(ModelKind::CtSingle),
            "ct-double" => Ok(ModelKind::CtDouble),
            "dt-single" => Ok(ModelKind::DtSingle),
            "dt-double" => Ok(ModelKind::DtDouble),
            other => Err(Error::Config(format!(
                "unknown model `{other}` (expected ct-single, ct-double, dt-single or dt-double)"
            ))),
        }
    }
}

/// Derivative gain as given by the user. A normalized gain `η̃ = ητ_n` stays
/// fixed across architectures, a physical one does not.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeGain {
    Physical(f64),
    Normalized(f64),
}

/// Everything besides the ring itself needed to evaluate a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub eta: Option<DerivativeGain>,
    /// `T_s`, discrete models only.
    pub sampling_time: Option<f64>,
}

impl ModelParams {
    pub fn ct_single() -> Self {
        Self { kind: ModelKind::CtSingle, eta: None, sampling_time: None }
    }

    pub fn ct_double_normalized(eta_normalized: f64) -> Self {
        Self { kind: ModelKind::CtDouble, eta: Some(DerivativeGain::Normalized(eta_normalized)), sampling_time: None }
    }

    pub fn dt_single(sampling_time: f64) -> Self {
        Self { kind: ModelKind::DtSingle, eta: None, sampling_time: Some(sampling_time) }
    }

    pub fn dt_double(eta: f64, sampling_time: f64) -> Self {
        Self {
            kind: ModelKind::DtDouble,
            eta: Some(DerivativeGain::Physical(eta)),
            sampling_time: Some(sampling_time),
        }
    }

    fn steps(&self, spec: &NetworkSpec) -> Result<usize> {
        let ts = self
            .sampling_time
            .ok_or_else(|| Error::Config(format!("{} needs sampling_time", self.kind)))?;
        Ok(DtDelay::from_continuous(spec.tau(), ts)?.steps)
    }

    fn eta_value(&self) -> Result<DerivativeGain> {
        self.eta
            .ok_or_else(|| Error::Config(format!("{} needs gains.eta or gains.eta_normalized", self.kind)))
    }

    /// Bind the parameters to one architecture.
    pub fn variance_model(&self, spec: &NetworkSpec) -> Result<VarianceModel> {
        let tau = spec.tau();
        Ok(match self.kind {
            ModelKind::CtSingle => VarianceModel::CtSingle { tau },
            ModelKind::CtDouble => {
                let eta_normalized = match self.eta_value()? {
                    DerivativeGain::Physical(eta) => eta * tau,
                    DerivativeGain::Normalized(eta) => eta,
                };
                if !(eta_normalized > 0.0 && eta_normalized.is_finite()) {
                    return Err(Error::InvalidArgument(format!("η̃ must be positive, got {eta_normalized}")));
                }
                VarianceModel::CtDoubleReduced { eta_normalized, tau }
            }
            ModelKind::DtSingle => VarianceModel::DtSingle { steps: self.steps(spec)? },
            ModelKind::DtDouble => {
                let eta = match self.eta_value()? {
                    DerivativeGain::Physical(eta) => eta,
                    DerivativeGain::Normalized(_) => {
                        return Err(Error::Config("dt-double takes a physical gains.eta, not eta_normalized".into()))
                    }
                };
                if !(eta > 0.0 && eta.is_finite()) {
                    return Err(Error::InvalidArgument(format!("η must be positive, got {eta}")));
                }
                VarianceModel::DtDouble { eta, steps: self.steps(spec)? }
            }
        })
    }
}

/// Per-eigenvalue variance for a fixed architecture, in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum VarianceModel {
    CtSingle { tau: f64 },
    /// Reduced first-order surrogate, `τ³ · G(τλ)/η̃²`.
    CtDoubleReduced { eta_normalized: f64, tau: f64 },
    DtSingle { steps: usize },
    DtDouble { eta: f64, steps: usize },
}

impl VarianceModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            VarianceModel::CtSingle { .. } => ModelKind::CtSingle,
            VarianceModel::CtDoubleReduced { .. } => ModelKind::CtDouble,
            VarianceModel::DtSingle { .. } => ModelKind::DtSingle,
            VarianceModel::DtDouble { .. } => ModelKind::DtDouble,
        }
    }

    pub fn method_tag(&self) -> &'static str {
        match self {
            VarianceModel::CtSingle { .. } => "ct-single-closed-form",
            VarianceModel::CtDoubleReduced { .. } => "ct-double-reduced",
            VarianceModel::DtSingle { .. } => "dt-moment-matching",
            VarianceModel::DtDouble { .. } => "dt2-moment-matching",
        }
    }

    /// Upper end of the stable eigenvalue interval `(0, λ_max)`.
    pub fn upper_bound(&self) -> Result<f64> {
        match *self {
            VarianceModel::CtSingle { tau } => Ok(FRAC_PI_2 / tau),
            VarianceModel::CtDoubleReduced { eta_normalized, tau } => Ok(phi_of_eta(eta_normalized) / tau),
            VarianceModel::DtSingle { steps } => Ok(dt_single_threshold(steps)),
            VarianceModel::DtDouble { eta, steps } => lambda_threshold(eta, steps)
                .ok_or_else(|| Error::Infeasible(format!("no stabilizing gain for η = {eta}, τ = {steps}"))),
        }
    }

    /// `(σ², dσ²/dλ, d²σ²/dλ²)`.
    pub fn eval(&self, lambda: f64) -> Result<(f64, f64, f64)> {
        match *self {
            VarianceModel::CtSingle { tau } => variance_ct_single_derivatives(lambda, tau),
            VarianceModel::CtDoubleReduced { eta_normalized, tau } => {
                let (v, d1, d2) = reduced_model_derivatives(eta_normalized, lambda * tau)?;
                let t3 = tau * tau * tau;
                Ok((v * t3, d1 * t3 * tau, d2 * t3 * tau * tau))
            }
            VarianceModel::DtSingle { steps } => moment_matching_derivatives(lambda, steps),
            VarianceModel::DtDouble { eta, steps } => {
                moment_matching_dt_double_derivatives(&DtPdSubsystem::new(eta, lambda, steps))
            }
        }
    }

    pub fn variance(&self, lambda: f64) -> Result<f64> {
        self.eval(lambda).map(|(v, _, _)| v)
    }

    /// Minimizer `λ*` of the scalar variance over the stable interval.
    pub fn scalar_optimum(&self) -> Result<f64> {
        match *self {
            VarianceModel::CtSingle { tau } | VarianceModel::CtDoubleReduced { tau, .. } => {
                Ok(optimal_normalized_eigenvalue() / tau)
            }
            _ => {
                let upper = self.upper_bound()?;
                let slope = |l: f64| self.eval(l).map(|(_, d, _)| d);
                // convex on (0, upper): the slope changes sign exactly once
                let (mut lo, mut hi) = (upper * 1e-9, upper * (1.0 - 1e-9));
                if slope(lo)? >= 0.0 {
                    return Ok(lo);
                }
                match slope(hi) {
                    Ok(d) if d <= 0.0 => return Ok(hi),
                    _ => {}
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    match slope(mid) {
                        Ok(d) if d < 0.0 => lo = mid,
                        _ => hi = mid,
                    }
                }
                Ok(0.5 * (lo + hi))
            }
        }
    }

    /// Physical derivative gain to attach to designed gains.
    pub fn physical_eta(&self) -> Option<f64> {
        match *self {
            VarianceModel::CtDoubleReduced { eta_normalized, tau } => Some(eta_normalized / tau),
            VarianceModel::DtDouble { eta, .. } => Some(eta),
            _ => None,
        }
    }

    /// Delay in the model's own units: time for continuous, steps for discrete.
    pub fn delay(&self) -> f64 {
        match *self {
            VarianceModel::CtSingle { tau } | VarianceModel::CtDoubleReduced { tau, .. } => tau,
            VarianceModel::DtSingle { steps } | VarianceModel::DtDouble { steps, .. } => steps as f64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ct_single::optimal_point;
    use crate::topology::DelayModel;
    use approx::assert_relative_eq;

    #[test]
    fn kind_round_trips_through_strings() {
        for k in [ModelKind::CtSingle, ModelKind::CtDouble, ModelKind::DtSingle, ModelKind::DtDouble] {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        assert!("ct_single".parse::<ModelKind>().is_err());
    }

    #[test]
    fn physical_eta_normalizes_with_delay() {
        let spec = NetworkSpec::new(10, 2, DelayModel::linear(1.0)).unwrap();
        let p = ModelParams { kind: ModelKind::CtDouble, eta: Some(DerivativeGain::Physical(35.0)), sampling_time: None };
        match p.variance_model(&spec).unwrap() {
            VarianceModel::CtDoubleReduced { eta_normalized, tau } => {
                assert_eq!(eta_normalized, 70.0);
                assert_eq!(tau, 2.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_parameters_are_config_errors() {
        let spec = NetworkSpec::new(10, 2, DelayModel::linear(1.0)).unwrap();
        let p = ModelParams { kind: ModelKind::DtSingle, eta: None, sampling_time: None };
        assert!(matches!(p.variance_model(&spec), Err(Error::Config(_))));
        let p = ModelParams { kind: ModelKind::CtDouble, eta: None, sampling_time: None };
        assert!(matches!(p.variance_model(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn reduced_model_scales_with_cubed_delay() {
        let a = VarianceModel::CtDoubleReduced { eta_normalized: 70.0, tau: 1.0 };
        let b = VarianceModel::CtDoubleReduced { eta_normalized: 70.0, tau: 2.0 };
        assert_relative_eq!(b.variance(0.3).unwrap(), 8.0 * a.variance(0.6).unwrap(), max_relative = 1e-14);
        let h = 1e-6;
        let (_, d1, _) = b.eval(0.3).unwrap();
        let fd = (b.variance(0.3 + h).unwrap() - b.variance(0.3 - h).unwrap()) / (2.0 * h);
        assert_relative_eq!(d1, fd, max_relative = 1e-6);
    }

    #[test]
    fn scalar_optimum_of_discrete_models_is_stationary() {
        for m in [VarianceModel::DtSingle { steps: 3 }, VarianceModel::DtDouble { eta: 0.5, steps: 2 }] {
            let l = m.scalar_optimum().unwrap();
            assert!(l > 0.0 && l < m.upper_bound().unwrap());
            assert!(m.eval(l).unwrap().1.abs() < 1e-6 * m.variance(l).unwrap());
        }
        let ct = VarianceModel::CtSingle { tau: 2.0 };
        assert_eq!(ct.scalar_optimum().unwrap(), optimal_point(2.0).unwrap().lambda_star);
    }
}
