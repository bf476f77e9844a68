//! Ring network description, topology-dependent delay and the circulant
//! feedback matrix with its closed-form spectrum.
//!
//! Agent `i` hears from the `n` agents ahead and the `n` agents behind it on
//! a ring of `N` agents. Every measurement arrives with the same delay
//! `τ_n = f(n)`. The proportional law is `u_P = −K x̄(t − τ_n)` with
//!
//! ```text
//! K = circ(2Σ k_ℓ, −k_1, …, −k_n, 0, …, 0, −k_n, …, −k_1)
//! ```
//!
//! whose eigenvalues are `λ_j = Σ_ℓ 2 k_ℓ (1 − cos(2π(j−1)ℓ/N))`, `j = 1..N`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the delay grows with the neighborhood radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DelayKind {
    /// `f(n) = scale · n`
    Linear,
    /// `f(n) = scale · √n`
    Sqrt,
    /// `f(n) = scale · n^exponent`, `exponent ≥ 0`
    PowerLaw { exponent: f64 },
    /// `f(n) = scale · table[n − 1]`
    Table(Vec<f64>),
    /// `f(n) = scale`
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    pub kind: DelayKind,
    pub scale: f64,
}

impl DelayModel {
    pub fn new(kind: DelayKind, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidNetwork(format!(
                "delay scale must be a positive finite number, got {scale}"
            )));
        }
        match &kind {
            DelayKind::PowerLaw { exponent } if !(exponent.is_finite() && *exponent >= 0.0) => {
                return Err(Error::InvalidNetwork(format!(
                    "power-law exponent must be finite and non-negative, got {exponent}"
                )));
            }
            DelayKind::Table(values) => {
                if values.is_empty() {
                    return Err(Error::InvalidNetwork("delay table is empty".into()));
                }
                if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                    return Err(Error::InvalidNetwork(format!(
                        "delay table entries must be positive and finite, found {bad}"
                    )));
                }
                if values.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::InvalidNetwork(
                        "delay table must be non-decreasing in n".into(),
                    ));
                }
            }
            _ => {}
        }
        Ok(Self { kind, scale })
    }

    pub fn linear(scale: f64) -> Self {
        Self::new(DelayKind::Linear, scale).expect("positive scale")
    }

    pub fn sqrt(scale: f64) -> Self {
        Self::new(DelayKind::Sqrt, scale).expect("positive scale")
    }

    pub fn constant(scale: f64) -> Self {
        Self::new(DelayKind::Constant, scale).expect("positive scale")
    }

    /// Delay for neighborhood radius `n ≥ 1`.
    pub fn eval(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::InvalidArgument("neighborhood radius must be ≥ 1".into()));
        }
        let base = match &self.kind {
            DelayKind::Linear => n as f64,
            DelayKind::Sqrt => (n as f64).sqrt(),
            DelayKind::PowerLaw { exponent } => (n as f64).powf(*exponent),
            DelayKind::Table(values) => *values.get(n - 1).ok_or_else(|| {
                Error::InvalidNetwork(format!(
                    "delay table has {} entries but radius {n} was requested",
                    values.len()
                ))
            })?,
            DelayKind::Constant => 1.0,
        };
        let tau = self.scale * base;
        if tau.is_finite() && tau > 0.0 {
            Ok(tau)
        } else {
            Err(Error::InvalidNetwork(format!("delay f({n}) = {tau} is not positive")))
        }
    }
}

/// Ring of `agents` agents, each exchanging data with `radius` pairs of neighbors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    agents: usize,
    radius: usize,
    delay: DelayModel,
}

/// Largest radius that keeps the ring neighborhoods from overlapping;
/// this is the all-to-all ("fully connected") architecture.
pub fn max_radius(agents: usize) -> usize {
    agents.saturating_sub(1) / 2
}

impl NetworkSpec {
    pub fn new(agents: usize, radius: usize, delay: DelayModel) -> Result<Self> {
        if agents < 3 {
            return Err(Error::InvalidNetwork(format!("need at least 3 agents, got {agents}")));
        }
        if radius < 1 {
            return Err(Error::InvalidNetwork("neighborhood radius must be ≥ 1".into()));
        }
        if 2 * radius + 1 > agents {
            return Err(Error::InvalidNetwork(format!(
                "radius {radius} requires n < N/2 (N = {agents}); neighborhoods would wrap onto each other"
            )));
        }
        delay.eval(radius)?;
        Ok(Self { agents, radius, delay })
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn delay_model(&self) -> &DelayModel {
        &self.delay
    }

    /// `τ_n = f(n)` for this spec's radius.
    pub fn tau(&self) -> f64 {
        self.delay.eval(self.radius).expect("validated at construction")
    }

    pub fn is_fully_connected(&self) -> bool {
        self.radius == max_radius(self.agents)
    }

    /// Same ring and delay model, different radius.
    pub fn with_radius(&self, radius: usize) -> Result<Self> {
        Self::new(self.agents, radius, self.delay.clone())
    }
}

/// Per-offset proportional gains `k_1..k_n` and the optional derivative gain `η`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainProfile {
    pub k: Vec<f64>,
    pub eta: Option<f64>,
}

impl GainProfile {
    pub fn new(k: Vec<f64>) -> Self {
        Self { k, eta: None }
    }

    pub fn with_eta(k: Vec<f64>, eta: f64) -> Self {
        Self { k, eta: Some(eta) }
    }

    pub fn uniform(radius: usize, gain: f64) -> Self {
        Self::new(vec![gain; radius])
    }

    pub fn check(&self, spec: &NetworkSpec) -> Result<()> {
        if self.k.len() != spec.radius() {
            return Err(Error::DimensionMismatch { expected: spec.radius(), got: self.k.len() });
        }
        if let Some(bad) = self.k.iter().find(|g| !g.is_finite()) {
            return Err(Error::InvalidArgument(format!("gain {bad} is not finite")));
        }
        if let Some(eta) = self.eta {
            if !(eta.is_finite() && eta > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "derivative gain must be positive, got {eta}"
                )));
            }
        }
        Ok(())
    }
}

/// The `N` real eigenvalues of `K` in DFT order (`j = 1..N`, stored 0-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    lambdas: Vec<f64>,
}

impl Spectrum {
    pub fn from_vec(lambdas: Vec<f64>) -> Self {
        Self { lambdas }
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Eigenvalues of the controllable subsystems, `j = 2..N`.
    pub fn nontrivial(&self) -> &[f64] {
        &self.lambdas[1..]
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn max_nontrivial(&self) -> f64 {
        self.nontrivial().iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_nontrivial(&self) -> f64 {
        self.nontrivial().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { lambdas: self.lambdas.iter().map(|l| l * factor).collect() }
    }
}

/// `2(1 − cos(2π m / N))` with `m` reduced modulo `N` for accuracy.
fn offset_weight(agents: usize, m: usize) -> f64 {
    let m = m % agents;
    2.0 * (1.0 - (2.0 * PI * m as f64 / agents as f64).cos())
}

/// Weight of gain `k_ℓ` in eigenvalue `λ_j`: `λ_j = Σ_ℓ w_{jℓ} k_ℓ`.
///
/// Returns an `N × n` matrix; row 0 (`j = 1`) is identically zero. Rows `j` and
/// `N + 2 − j` are computed from the same index so the palindrome is exact.
pub fn eigenvalue_weights(agents: usize, radius: usize) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(agents, radius);
    for j in 1..agents {
        let mirror = agents - j;
        let base = j.min(mirror);
        for l in 0..radius {
            w[(j, l)] = offset_weight(agents, base * (l + 1));
        }
    }
    w
}

/// Closed-form spectrum of the circulant feedback matrix.
pub fn circulant_eigenvalues(spec: &NetworkSpec, gains: &GainProfile) -> Result<Spectrum> {
    gains.check(spec)?;
    let w = eigenvalue_weights(spec.agents(), spec.radius());
    let k = DVector::from_column_slice(&gains.k);
    let mut lambdas: Vec<f64> = (&w * k).iter().copied().collect();
    lambdas[0] = 0.0;
    Ok(Spectrum { lambdas })
}

/// Dense `K` for oracles and small-network simulation.
pub fn build_feedback_matrix(spec: &NetworkSpec, gains: &GainProfile) -> Result<DMatrix<f64>> {
    gains.check(spec)?;
    let n_agents = spec.agents();
    let mut first_row = vec![0.0; n_agents];
    first_row[0] = 2.0 * gains.k.iter().sum::<f64>();
    for (l, &k) in gains.k.iter().enumerate() {
        first_row[l + 1] = -k;
        first_row[n_agents - l - 1] = -k;
    }
    Ok(DMatrix::from_fn(n_agents, n_agents, |i, j| {
        first_row[(j + n_agents - i) % n_agents]
    }))
}

/// Agent-by-agent proportional input `u_P,i = −Σ_ℓ k_ℓ (m_i^{ℓ+} + m_i^{ℓ−})`
/// where `m_i^{ℓ±} = x_i − x_{i±ℓ}` with wrap-around. Equals `−K x`.
pub fn control_from_mismatches(
    spec: &NetworkSpec,
    gains: &GainProfile,
    states: &[f64],
) -> Result<Vec<f64>> {
    gains.check(spec)?;
    if states.len() != spec.agents() {
        return Err(Error::DimensionMismatch { expected: spec.agents(), got: states.len() });
    }
    let mut out = vec![0.0; states.len()];
    apply_control(&gains.k, states, &mut out);
    Ok(out)
}

/// Unchecked kernel of [`control_from_mismatches`], reused by the simulator.
pub(crate) fn apply_control(k: &[f64], states: &[f64], out: &mut [f64]) {
    let n_agents = states.len();
    for (i, slot) in out.iter_mut().enumerate() {
        let xi = states[i];
        let mut acc = 0.0;
        for (l, &gain) in k.iter().enumerate() {
            let ahead = states[(i + l + 1) % n_agents];
            let behind = states[(i + n_agents - l - 1) % n_agents];
            acc += gain * ((xi - ahead) + (xi - behind));
        }
        *slot = -acc;
    }
}

/// `Ω = I − 𝟙𝟙ᵀ/N`, mapping agent states to consensus mismatches.
pub fn error_projector(agents: usize) -> DMatrix<f64> {
    let inv = 1.0 / agents as f64;
    DMatrix::from_fn(agents, agents, |i, j| if i == j { 1.0 - inv } else { -inv })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ring(agents: usize, radius: usize) -> NetworkSpec {
        NetworkSpec::new(agents, radius, DelayModel::linear(1.0)).unwrap()
    }

    #[test]
    fn four_ring_spectrum() {
        let s = circulant_eigenvalues(&ring(4, 1), &GainProfile::new(vec![1.0])).unwrap();
        let expected = [0.0, 2.0, 4.0, 2.0];
        for (a, b) in s.lambdas().iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn five_ring_uniform_gains_flatten_the_spectrum() {
        let c = 0.37;
        let s = circulant_eigenvalues(&ring(5, 2), &GainProfile::uniform(2, c)).unwrap();
        assert_eq!(s.lambdas()[0], 0.0);
        for l in s.nontrivial() {
            assert_abs_diff_eq!(*l, 5.0 * c, epsilon = 1e-12);
        }
    }

    #[test]
    fn feedback_matrix_first_row() {
        let k = build_feedback_matrix(&ring(4, 1), &GainProfile::new(vec![1.0])).unwrap();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[2.0, -1.0, 0.0, -1.0, -1.0, 2.0, -1.0, 0.0, 0.0, -1.0, 2.0, -1.0, -1.0, 0.0, -1.0, 2.0],
        );
        assert_eq!(k, expected);
    }

    #[test]
    fn zero_gains_give_zero_matrix() {
        let k = build_feedback_matrix(&ring(7, 3), &GainProfile::uniform(3, 0.0)).unwrap();
        assert!(k.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn control_on_first_canonical_vector() {
        let u = control_from_mismatches(&ring(4, 1), &GainProfile::new(vec![1.0]), &[1.0, 0.0, 0.0, 0.0])
            .unwrap();
        assert_eq!(u, vec![-2.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn consensus_needs_no_control() {
        let u = control_from_mismatches(&ring(9, 3), &GainProfile::new(vec![0.3, -0.2, 1.1]), &[4.2; 9])
            .unwrap();
        assert!(u.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn projector_small_and_idempotent() {
        let p = error_projector(2);
        assert_eq!(p, DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]));
        let p = error_projector(10);
        let ones = DVector::from_element(10, 1.0);
        assert!((&p * ones).amax() < 1e-15);
        assert!((&p * &p - &p).amax() < 1e-12);
    }

    #[test]
    fn rejects_overlapping_neighborhoods() {
        assert!(matches!(
            NetworkSpec::new(4, 2, DelayModel::linear(1.0)),
            Err(Error::InvalidNetwork(_))
        ));
        assert!(NetworkSpec::new(5, 2, DelayModel::linear(1.0)).is_ok());
        assert!(NetworkSpec::new(2, 1, DelayModel::linear(1.0)).is_err());
    }

    #[test]
    fn gain_length_must_match_radius() {
        let err = circulant_eigenvalues(&ring(7, 2), &GainProfile::new(vec![1.0])).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 2, got: 1 });
    }

    #[test]
    fn delay_models() {
        assert_eq!(DelayModel::linear(0.5).eval(4).unwrap(), 2.0);
        assert_eq!(DelayModel::sqrt(1.0).eval(9).unwrap(), 3.0);
        assert_eq!(DelayModel::constant(2.0).eval(7).unwrap(), 2.0);
        let p = DelayModel::new(DelayKind::PowerLaw { exponent: 2.0 }, 1.0).unwrap();
        assert_eq!(p.eval(3).unwrap(), 9.0);
        let t = DelayModel::new(DelayKind::Table(vec![1.0, 1.5, 3.0]), 2.0).unwrap();
        assert_eq!(t.eval(2).unwrap(), 3.0);
        assert!(t.eval(4).is_err());
        assert!(DelayModel::new(DelayKind::Table(vec![2.0, 1.0]), 1.0).is_err());
        assert!(DelayModel::new(DelayKind::Linear, 0.0).is_err());
    }

    #[test]
    fn fully_connected_flag() {
        assert!(ring(11, 5).is_fully_connected());
        assert!(ring(10, 4).is_fully_connected());
        assert!(!ring(11, 4).is_fully_connected());
    }
}
