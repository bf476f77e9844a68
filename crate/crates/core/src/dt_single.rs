//! Discrete-time single integrators `x_{k+1} = x_k − λ x_{k−τ} + w_k`.
//!
//! Three independent routes to the stationary variance `ρ_0 = E[x_k²]`:
//!
//! * Wiener–Khintchine quadrature of `1/|h(e^{jθ})|²` on the unit circle,
//! * the Yule–Walker moment system `A^{(τ)} ρ = e_1` in the autocovariances
//!   `ρ_0..ρ_τ`,
//! * the determinant recursions for the cofactor `n_τ` and determinant `d_τ`
//!   of `A^{(τ)}`, with `ρ_0 = n_τ / d_τ`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Delay expressed in whole sampling periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DtDelay {
    pub steps: usize,
}

impl DtDelay {
    /// `⌈τ / T_s⌉`, ignoring floating-point noise below 1e−9 steps.
    pub fn from_continuous(tau: f64, sampling_time: f64) -> Result<Self> {
        if !(sampling_time > 0.0 && sampling_time.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sampling time must be positive, got {sampling_time}"
            )));
        }
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("delay must be non-negative, got {tau}")));
        }
        let steps = (tau / sampling_time - 1e-9).ceil().max(0.0);
        Ok(Self { steps: steps as usize })
    }
}

/// Upper end of the stable gain interval, `2 sin(π / (2(2τ + 1)))`.
pub fn dt_single_threshold(tau: usize) -> f64 {
    2.0 * (PI / (2.0 * (2 * tau + 1) as f64)).sin()
}

/// Monic characteristic polynomial `z^{τ+1} − z^τ + λ`, highest power first.
pub fn single_characteristic(lambda: f64, tau: usize) -> Vec<f64> {
    let mut c = vec![0.0; tau + 2];
    c[0] = 1.0;
    c[1] -= 1.0;
    c[tau + 1] += lambda;
    c
}

/// Largest root modulus of a real polynomial (coefficients highest power
/// first) from the eigenvalues of its companion matrix.
pub fn root_radius(coeffs: &[f64]) -> Result<f64> {
    let start = coeffs
        .iter()
        .position(|c| *c != 0.0)
        .ok_or_else(|| Error::InvalidArgument("all-zero polynomial has no roots".into()))?;
    let c = &coeffs[start..];
    let degree = c.len() - 1;
    if degree == 0 {
        return Err(Error::InvalidArgument("constant polynomial has no roots".into()));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("polynomial coefficients must be finite".into()));
    }
    let lead = c[0];
    let mut companion = DMatrix::<f64>::zeros(degree, degree);
    for j in 0..degree {
        companion[(0, j)] = -c[j + 1] / lead;
    }
    for i in 1..degree {
        companion[(i, i - 1)] = 1.0;
    }
    Ok(companion
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

fn horner(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs.iter().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// Sum of `1/|h(e^{jθ})|²` over `θ = 2π(offset + stride·i)/points`.
fn circle_sum(coeffs: &[f64], points: usize, offset: usize, stride: usize) -> f64 {
    (offset..points)
        .step_by(stride)
        .map(|i| {
            let theta = 2.0 * PI * i as f64 / points as f64;
            1.0 / horner(coeffs, Complex64::from_polar(1.0, theta)).norm_sqr()
        })
        .sum()
}

fn require_stable(coeffs: &[f64]) -> Result<()> {
    let r = root_radius(coeffs)?;
    if r < 1.0 {
        Ok(())
    } else {
        Err(Error::Unstable(format!("characteristic root radius {r} ≥ 1")))
    }
}

/// `(1/2π) ∫ |h(e^{jθ})|^{−2} dθ` by the trapezoid rule with `points` nodes.
/// The integrand is periodic, so the rule converges geometrically.
pub fn wiener_khintchine_variance(coeffs: &[f64], points: usize) -> Result<f64> {
    if points == 0 {
        return Err(Error::InvalidArgument("need at least one quadrature point".into()));
    }
    require_stable(coeffs)?;
    Ok(circle_sum(coeffs, points, 0, 1) / points as f64)
}

/// Trapezoid rule doubling the node count until successive estimates differ
/// by less than `1e−12` (relative once the value exceeds 1).
pub fn wiener_khintchine_adaptive(coeffs: &[f64]) -> Result<f64> {
    require_stable(coeffs)?;
    let mut points = 64;
    let mut sum = circle_sum(coeffs, points, 0, 1);
    let mut estimate = sum / points as f64;
    while points < 1 << 24 {
        // nodes of the doubled grid that are new: odd indices
        sum += circle_sum(coeffs, 2 * points, 1, 2);
        points *= 2;
        let next = sum / points as f64;
        if (next - estimate).abs() < 1e-12 * next.abs().max(1.0) {
            return Ok(next);
        }
        estimate = next;
    }
    Ok(estimate)
}

/// `A(λ) = A₀ + λA₁ + λ²A₂`; every moment system here is quadratic in λ.
#[derive(Debug, Clone)]
pub(crate) struct QuadraticPencil {
    pub a0: DMatrix<f64>,
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
}

impl QuadraticPencil {
    pub fn zeros(dim: usize) -> Self {
        Self { a0: DMatrix::zeros(dim, dim), a1: DMatrix::zeros(dim, dim), a2: DMatrix::zeros(dim, dim) }
    }

    pub fn at(&self, lambda: f64) -> DMatrix<f64> {
        &self.a0 + &self.a1 * lambda + &self.a2 * (lambda * lambda)
    }

    /// `ρ_0` and its first two λ-derivatives for `A(λ)ρ = e_1`, by implicit
    /// differentiation: `Aρ' = −A'ρ`, `Aρ'' = −(2A'ρ' + A''ρ)`.
    pub fn solve_with_derivatives(&self, lambda: f64) -> Result<(f64, f64, f64)> {
        let a = self.at(lambda);
        let dim = a.nrows();
        let mut rhs = DVector::zeros(dim);
        rhs[0] = 1.0;
        let lu = a.clone().lu();
        let rho = lu
            .solve(&rhs)
            .ok_or_else(|| Error::Singular(format!("moment system at λ = {lambda}")))?;
        let residual = (&a * &rho - &rhs).amax();
        let scale = a.amax() * rho.amax();
        if !(residual <= 1e-10 * scale.max(1.0)) {
            return Err(Error::Singular(format!(
                "moment system at λ = {lambda} solved with residual {residual:e}"
            )));
        }
        let da = &self.a1 + &self.a2 * (2.0 * lambda);
        let dda = &self.a2 * 2.0;
        let drho = lu.solve(&(-(&da * &rho))).expect("factorization already succeeded");
        let ddrho = lu
            .solve(&(-((&da * &drho) * 2.0 + &dda * &rho)))
            .expect("factorization already succeeded");
        Ok((rho[0], drho[0], ddrho[0]))
    }
}

/// Yule–Walker system for the single integrator.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSystem {
    pub tau: usize,
    pub lambda: f64,
    /// `A^{(τ)}`, `(τ+1) × (τ+1)`
    pub matrix: DMatrix<f64>,
    /// `e_1`
    pub rhs: DVector<f64>,
}

pub(crate) fn single_pencil(tau: usize) -> QuadraticPencil {
    let dim = tau + 1;
    let mut p = QuadraticPencil::zeros(dim);
    // 0 = λ²ρ_0 + 1 − 2λρ_τ, written as −λ²ρ_0 + 2λρ_τ = 1
    p.a2[(0, 0)] -= 1.0;
    p.a1[(0, tau)] += 2.0;
    // ρ_t = ρ_{t−1} − λ ρ_{|τ+1−t|}
    for t in 1..=tau {
        p.a0[(t, t - 1)] += 1.0;
        p.a0[(t, t)] -= 1.0;
        p.a1[(t, (tau + 1).abs_diff(t))] -= 1.0;
    }
    p
}

impl MomentSystem {
    pub fn single(lambda: f64, tau: usize) -> Self {
        let matrix = single_pencil(tau).at(lambda);
        let mut rhs = DVector::zeros(tau + 1);
        rhs[0] = 1.0;
        Self { tau, lambda, matrix, rhs }
    }

    /// Autocovariances `ρ_0..ρ_τ`.
    pub fn solve(&self) -> Result<DVector<f64>> {
        self.matrix
            .clone()
            .lu()
            .solve(&self.rhs)
            .ok_or_else(|| Error::Singular(format!("A^({}) at λ = {}", self.tau, self.lambda)))
    }
}

fn check_single_stable(lambda: f64, tau: usize) -> Result<()> {
    let upper = dt_single_threshold(tau);
    if lambda > 0.0 && lambda < upper {
        Ok(())
    } else {
        Err(Error::Unstable(format!("λ = {lambda} outside (0, {upper}) for τ = {tau}")))
    }
}

/// `ρ_0` from the Yule–Walker moment system.
pub fn moment_matching_variance(lambda: f64, tau: usize) -> Result<f64> {
    moment_matching_derivatives(lambda, tau).map(|(v, _, _)| v)
}

/// `ρ_0` with exact first and second λ-derivatives.
pub fn moment_matching_derivatives(lambda: f64, tau: usize) -> Result<(f64, f64, f64)> {
    check_single_stable(lambda, tau)?;
    single_pencil(tau).solve_with_derivatives(lambda)
}

/// `ρ_0 = n_τ / d_τ` from the cofactor and determinant recursions of `A^{(τ)}`.
pub fn recursive_variance(lambda: f64, tau: usize) -> Result<f64> {
    check_single_stable(lambda, tau)?;
    let (num, den) = cofactor_and_determinant(lambda, tau);
    if den == 0.0 || !den.is_finite() {
        return Err(Error::Unstable(format!("d_τ = {den} at λ = {lambda}, τ = {tau}")));
    }
    Ok(num / den)
}

/// `(n_τ, d_τ)`; `n_τ` is the top-left minor of `A^{(τ)}` and `d_τ` its determinant.
pub fn cofactor_and_determinant(lambda: f64, tau: usize) -> (f64, f64) {
    let l2 = lambda * lambda;
    // auxiliary ñ_t, stored at t + 3 so that index 0 is t = −3
    let mut aux = vec![0.0; tau + 4];
    aux[0] = -1.0 + l2;
    // ñ_{−2} = −λ²; with +λ² the even chain drifts from the true minors at τ = 3
    aux[1] = -l2;
    aux[2] = -1.0;
    aux[3] = 0.0;
    for t in 1..=tau {
        let i = t + 3;
        aux[i] = (2.0 - l2) * aux[i - 2] - aux[i - 4];
    }
    let aux_at = |t: usize| aux[t + 3];

    // n_t and d_t stored at t + 1 so that index 0 is t = −1
    let mut num = vec![0.0; tau + 2];
    let mut den = vec![0.0; tau + 2];
    num[0] = 0.0;
    num[1] = 1.0;
    den[0] = -2.0 * lambda;
    den[1] = 2.0 * lambda - l2;
    for t in 1..=tau {
        let i = t + 1;
        num[i] = if t % 2 == 1 {
            (-1.0 - lambda) * num[i - 1] + aux_at(t - 1)
        } else {
            -(1.0 - lambda) * num[i - 1] - lambda * aux_at(t - 1)
        };
        den[i] = den[i - 2] - l2 * (num[i] + num[i - 2]);
    }
    (num[tau + 1], den[tau + 1])
}

/// Second central differences of `ρ_0(λ)` on `grid_size` interior points of
/// the stability interval, all above `−1e−9`.
pub fn numeric_convexity_check(tau: usize, grid_size: usize) -> bool {
    let upper = dt_single_threshold(tau);
    let spacing = upper / (grid_size + 1) as f64;
    let h = 0.25 * spacing;
    (1..=grid_size).all(|i| {
        let lambda = spacing * i as f64;
        let f = |l: f64| moment_matching_variance(l, tau);
        match (f(lambda - h), f(lambda), f(lambda + h)) {
            (Ok(a), Ok(b), Ok(c)) => a - 2.0 * b + c > -1e-9,
            _ => false,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tau_one_closed_form(l: f64) -> f64 {
        (1.0 + l) / (l * (1.0 - l) * (2.0 + l))
    }

    #[test]
    fn thresholds() {
        assert_relative_eq!(dt_single_threshold(1), 1.0, epsilon = 1e-15);
        assert_relative_eq!(dt_single_threshold(0), 2.0, epsilon = 1e-15);
        assert!(10.0 * dt_single_threshold(10) < std::f64::consts::FRAC_PI_2);
        for t in 0..50 {
            assert!(dt_single_threshold(t + 1) < dt_single_threshold(t));
        }
    }

    #[test]
    fn delay_ceiling() {
        assert_eq!(DtDelay::from_continuous(2.0, 1.0).unwrap().steps, 2);
        assert_eq!(DtDelay::from_continuous(2.1, 1.0).unwrap().steps, 3);
        assert_eq!(DtDelay::from_continuous(0.3, 0.1).unwrap().steps, 3);
        assert_eq!(DtDelay::from_continuous(0.0, 0.1).unwrap().steps, 0);
        assert!(DtDelay::from_continuous(1.0, 0.0).is_err());
    }

    #[test]
    fn radius_of_simple_polynomials() {
        // λ = 0: τ-fold root at 0 and a simple root at 1
        for tau in 1..6 {
            let r = root_radius(&single_characteristic(0.0, tau)).unwrap();
            assert!((r - 1.0).abs() < 1e-9);
        }
        assert!(root_radius(&single_characteristic(1.0, 0)).unwrap().abs() < 1e-15);
        assert!(root_radius(&[0.0, 0.0]).is_err());
        assert!(root_radius(&[3.0]).is_err());
        // leading zeros are skipped
        assert_relative_eq!(root_radius(&[0.0, 1.0, -0.5]).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn radius_crosses_one_at_the_threshold() {
        for tau in 1..=6 {
            let th = dt_single_threshold(tau);
            assert!(root_radius(&single_characteristic(th - 1e-6, tau)).unwrap() < 1.0);
            assert!(root_radius(&single_characteristic(th + 1e-6, tau)).unwrap() > 1.0);
        }
    }

    #[test]
    fn quadrature_ar1_and_tau_one() {
        let v = wiener_khintchine_adaptive(&single_characteristic(0.5, 0)).unwrap();
        assert_relative_eq!(v, 4.0 / 3.0, epsilon = 1e-12);
        let v = wiener_khintchine_adaptive(&single_characteristic(0.5, 1)).unwrap();
        assert_relative_eq!(v, 2.4, epsilon = 1e-10);
        let c = single_characteristic(0.5, 1);
        let a = wiener_khintchine_variance(&c, 1 << 12).unwrap();
        let b = wiener_khintchine_variance(&c, 1 << 13).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn quadrature_refuses_unstable_polynomials() {
        let err = wiener_khintchine_variance(&single_characteristic(1.5, 1), 256).unwrap_err();
        assert!(matches!(err, Error::Unstable(_)));
    }

    #[test]
    fn middle_rows_follow_the_parity_rule() {
        let l = 0.3;
        let a3 = MomentSystem::single(l, 3).matrix;
        let row: Vec<f64> = a3.row(2).iter().copied().collect();
        assert_eq!(row, vec![0.0, 1.0, -1.0 - l, 0.0]);
        let a4 = MomentSystem::single(l, 4).matrix;
        let row: Vec<f64> = a4.row(3).iter().copied().collect();
        assert_eq!(row, vec![0.0, 0.0, 1.0 - l, -1.0, 0.0]);
    }

    #[test]
    fn first_rows_and_corners() {
        let l = 0.2;
        let a = MomentSystem::single(l, 5).matrix;
        assert_eq!(a[(0, 0)], -l * l);
        assert_eq!(a[(0, 5)], 2.0 * l);
        assert_eq!(a[(1, 0)], 1.0);
        assert_eq!(a[(1, 1)], -1.0);
        assert_eq!(a[(1, 5)], -l);
        assert_eq!(a[(5, 1)], -l);
        assert_eq!(a[(5, 4)], 1.0);
        assert_eq!(a[(5, 5)], -1.0);
    }

    #[test]
    fn moment_matching_tau_one() {
        for l in [0.1, 0.5, 0.9] {
            assert_relative_eq!(moment_matching_variance(l, 1).unwrap(), tau_one_closed_form(l), max_relative = 1e-13);
        }
        assert_relative_eq!(moment_matching_variance(0.5, 1).unwrap(), 2.4, epsilon = 1e-13);
    }

    #[test]
    fn moment_system_residual() {
        for tau in 1..=20 {
            let lambda = 0.5 * dt_single_threshold(tau);
            let sys = MomentSystem::single(lambda, tau);
            let rho = sys.solve().unwrap();
            assert!((&sys.matrix * &rho - &sys.rhs).amax() < 1e-10);
            assert!(rho[0] > 0.0);
        }
    }

    #[test]
    fn recursion_base_cases() {
        let l: f64 = 0.37;
        let (n0, d0) = cofactor_and_determinant(l, 0);
        assert_eq!(n0, 1.0);
        assert_relative_eq!(d0, 2.0 * l - l * l);
        let (n1, d1) = cofactor_and_determinant(l, 1);
        assert_relative_eq!(n1, -1.0 - l, epsilon = 1e-15);
        assert_relative_eq!(d1, -2.0 * l + l * l + l * l * l, epsilon = 1e-15);
        assert_relative_eq!(recursive_variance(l, 1).unwrap(), tau_one_closed_form(l), max_relative = 1e-13);
        assert_relative_eq!(recursive_variance(l, 0).unwrap(), 1.0 / (2.0 * l - l * l), max_relative = 1e-14);
    }

    #[test]
    fn recursion_tracks_the_linear_solve() {
        assert_relative_eq!(
            recursive_variance(0.2, 7).unwrap(),
            moment_matching_variance(0.2, 7).unwrap(),
            max_relative = 1e-9
        );
        for tau in 1..=25 {
            for frac in [0.1, 0.5, 0.9] {
                let l = frac * dt_single_threshold(tau);
                assert_relative_eq!(
                    recursive_variance(l, tau).unwrap(),
                    moment_matching_variance(l, tau).unwrap(),
                    max_relative = 1e-9
                );
            }
        }
    }

    #[test]
    fn cofactor_matches_dense_minor() {
        for tau in 1..=9 {
            let l = 0.6 * dt_single_threshold(tau);
            let a = MomentSystem::single(l, tau).matrix;
            let minor = a.view((1, 1), (tau, tau)).clone_owned().determinant();
            let (n, d) = cofactor_and_determinant(l, tau);
            assert_relative_eq!(n, minor, max_relative = 1e-10, epsilon = 1e-13);
            assert_relative_eq!(d, a.determinant(), max_relative = 1e-10, epsilon = 1e-13);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for tau in [1usize, 4, 12] {
            let l = 0.4 * dt_single_threshold(tau);
            let (_, d1, d2) = moment_matching_derivatives(l, tau).unwrap();
            let h = 1e-5 * l;
            let f = |x: f64| moment_matching_variance(x, tau).unwrap();
            assert_relative_eq!(d1, (f(l + h) - f(l - h)) / (2.0 * h), max_relative = 1e-6);
            assert_relative_eq!(d2, (f(l + h) - 2.0 * f(l) + f(l - h)) / (h * h), max_relative = 1e-3);
        }
    }

    #[test]
    fn unstable_inputs_are_rejected() {
        assert!(matches!(moment_matching_variance(1.0, 1), Err(Error::Unstable(_))));
        assert!(matches!(recursive_variance(-0.1, 3), Err(Error::Unstable(_))));
    }

    #[test]
    fn convexity_small_delays() {
        assert!(numeric_convexity_check(0, 50));
        assert!(numeric_convexity_check(1, 50));
        assert!(numeric_convexity_check(15, 50));
    }
}
