//! Minimum-variance gain design.
//!
//! The eigenvalues are linear in the gains, `λ = W k`, and every per-eigenvalue
//! variance is convex on its stability interval, so the total variance
//! `Σ_{j≥2} σ²(λ_j)` is convex in `k` on the feasible polytope. The exact design
//! runs damped Newton with gradient `Wᵀσ'(λ)` and Hessian `Wᵀ diag(σ''(λ)) W`;
//! the line search rejects any step that leaves the stability box.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::VarianceModel;
use crate::topology::{circulant_eigenvalues, eigenvalue_weights, GainProfile, NetworkSpec, Spectrum};

pub const GRADIENT_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignMethod {
    Exact,
    QuadraticApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub gains: GainProfile,
    pub spectrum: Spectrum,
    /// `Σ_{j≥2} σ²(λ_j)`
    pub objective: f64,
    pub method: DesignMethod,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    /// Which per-eigenvalue variance was minimized.
    pub model: String,
}

/// Objective, gradient and Hessian at `k`, or an error if any nontrivial
/// eigenvalue is outside the stability interval.
pub struct Evaluation {
    pub objective: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub lambdas: Vec<f64>,
}

/// Design problem for one architecture.
pub struct Problem {
    weights: DMatrix<f64>,
    model: VarianceModel,
    upper: f64,
}

impl Problem {
    pub fn new(spec: &NetworkSpec, model: VarianceModel) -> Result<Self> {
        let weights = eigenvalue_weights(spec.agents(), spec.radius());
        let upper = model.upper_bound()?;
        Ok(Self { weights, model, upper })
    }

    pub fn model(&self) -> &VarianceModel {
        &self.model
    }

    pub fn upper_bound(&self) -> f64 {
        self.upper
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    fn lambdas(&self, k: &DVector<f64>) -> Vec<f64> {
        let lam = &self.weights * k;
        let mut out: Vec<f64> = lam.iter().copied().collect();
        out[0] = 0.0;
        out
    }

    /// Strict feasibility in eigenvalue space.
    pub fn is_feasible(&self, k: &DVector<f64>) -> bool {
        self.lambdas(k)[1..].iter().all(|&l| l > 0.0 && l < self.upper)
    }

    pub fn evaluate(&self, k: &DVector<f64>) -> Result<Evaluation> {
        if k.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: k.len() });
        }
        let lambdas = self.lambdas(k);
        let n = self.dim();
        let mut objective = 0.0;
        let mut d1 = DVector::zeros(lambdas.len());
        let mut d2 = DVector::zeros(lambdas.len());
        for (j, &l) in lambdas.iter().enumerate().skip(1) {
            if !(l > 0.0 && l < self.upper) {
                return Err(Error::Unstable(format!(
                    "λ_{} = {l} outside (0, {})",
                    j + 1,
                    self.upper
                )));
            }
            let (v, a, b) = self.model.eval(l)?;
            objective += v;
            d1[j] = a;
            d2[j] = b;
        }
        let gradient = self.weights.transpose() * &d1;
        let mut scaled = self.weights.clone();
        for (j, mut row) in scaled.row_iter_mut().enumerate() {
            row *= d2[j];
        }
        let hessian = self.weights.transpose() * scaled;
        debug_assert_eq!(hessian.nrows(), n);
        Ok(Evaluation { objective, gradient, hessian, lambdas })
    }

    pub fn objective(&self, k: &DVector<f64>) -> Result<f64> {
        if k.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: k.len() });
        }
        let lambdas = self.lambdas(k);
        let mut total = 0.0;
        for &l in &lambdas[1..] {
            if !(l > 0.0 && l < self.upper) {
                return Err(Error::Unstable(format!("λ = {l} outside (0, {})", self.upper)));
            }
            total += self.model.variance(l)?;
        }
        Ok(total)
    }

    /// Uniform gain placing the spectrum around the scalar optimum `λ*`.
    pub fn quadratic_approx_gains(&self) -> Result<DVector<f64>> {
        let lambda_star = self.model.scalar_optimum()?;
        let n = self.dim();
        Ok(DVector::from_element(n, lambda_star / (2 * n + 1) as f64))
    }

    fn result(&self, spec: &NetworkSpec, k: &DVector<f64>, method: DesignMethod, iterations: usize, converged: bool, gradient_norm: f64) -> Result<DesignResult> {
        let gains = match self.model.physical_eta() {
            Some(eta) => GainProfile::with_eta(k.iter().copied().collect(), eta),
            None => GainProfile::new(k.iter().copied().collect()),
        };
        let spectrum = circulant_eigenvalues(spec, &gains)?;
        Ok(DesignResult {
            gains,
            spectrum,
            objective: self.objective(k)?,
            method,
            iterations,
            converged,
            gradient_norm,
            model: self.model.method_tag().to_string(),
        })
    }
}

/// Closed-form uniform design `k̃ = λ*/(2n+1)`.
pub fn design_quadratic_approx(spec: &NetworkSpec, model: VarianceModel) -> Result<DesignResult> {
    let problem = Problem::new(spec, model)?;
    let k = problem.quadratic_approx_gains()?;
    if !problem.is_feasible(&k) {
        let worst = problem.lambdas(&k)[1..].iter().copied().fold(0.0, f64::max);
        return Err(Error::Infeasible(format!(
            "uniform gain {} gives λ = {worst} outside (0, {}) at n = {}",
            k[0],
            problem.upper,
            spec.radius()
        )));
    }
    let grad = problem.evaluate(&k)?.gradient.norm();
    problem.result(spec, &k, DesignMethod::QuadraticApprox, 0, true, grad)
}

/// Feasible starting point: the uniform design, halved until stable.
pub fn feasible_start(problem: &Problem) -> Result<DVector<f64>> {
    let mut k = problem.quadratic_approx_gains()?;
    for _ in 0..200 {
        if problem.is_feasible(&k) && problem.objective(&k).is_ok() {
            return Ok(k);
        }
        k *= 0.5;
    }
    Err(Error::Infeasible("no feasible starting gains found".into()))
}

/// Minimize the total variance over the gains.
pub fn design_exact(spec: &NetworkSpec, model: VarianceModel) -> Result<DesignResult> {
    let problem = Problem::new(spec, model)?;
    let start = feasible_start(&problem)?;
    let out = minimize(&problem, start)?;
    out.into_result(&problem, spec)
}

/// As [`design_exact`] but from a caller-supplied feasible point.
pub fn design_exact_from(spec: &NetworkSpec, model: VarianceModel, start: &[f64]) -> Result<DesignResult> {
    let problem = Problem::new(spec, model)?;
    let k = DVector::from_column_slice(start);
    if k.len() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), got: k.len() });
    }
    if !problem.is_feasible(&k) {
        return Err(Error::Infeasible("starting gains are not stabilizing".into()));
    }
    let out = minimize(&problem, k)?;
    out.into_result(&problem, spec)
}

pub struct Minimized {
    pub k: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
}

impl Minimized {
    fn into_result(self, problem: &Problem, spec: &NetworkSpec) -> Result<DesignResult> {
        if !self.converged {
            return Err(Error::NoConvergence { iterations: self.iterations, gradient_norm: self.gradient_norm });
        }
        problem.result(spec, &self.k, DesignMethod::Exact, self.iterations, true, self.gradient_norm)
    }
}

/// Newton direction, falling back to steepest descent when the Hessian is
/// not numerically positive definite.
fn descent_direction(eval: &Evaluation) -> DVector<f64> {
    if let Some(chol) = eval.hessian.clone().cholesky() {
        let d = -chol.solve(&eval.gradient);
        if d.dot(&eval.gradient) < 0.0 && d.iter().all(|x| x.is_finite()) {
            return d;
        }
    }
    -eval.gradient.clone()
}

/// Damped Newton with Armijo backtracking inside the stability box.
///
/// Stops at `‖∇‖ < 1e−8`, or when the objective no longer changes in floating
/// point and the Newton decrement is at roundoff level.
pub fn minimize(problem: &Problem, start: DVector<f64>) -> Result<Minimized> {
    let mut k = start;
    let mut eval = problem.evaluate(&k)?;
    let mut iterations = 0;
    loop {
        let gnorm = eval.gradient.norm();
        if gnorm < GRADIENT_TOLERANCE {
            return Ok(Minimized { k, iterations, converged: true, gradient_norm: gnorm });
        }
        if iterations >= MAX_ITERATIONS {
            return Ok(Minimized { k, iterations, converged: false, gradient_norm: gnorm });
        }
        let d = descent_direction(&eval);
        let slope = d.dot(&eval.gradient);
        // Once the predicted decrease is below the objective's roundoff,
        // objective comparisons are noise; judge steps by the gradient instead.
        let near = -slope <= 1e-10 * eval.objective.abs().max(1.0);
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-20 {
            let trial = &k + &d * t;
            if problem.is_feasible(&trial) {
                if let Ok(next) = problem.evaluate(&trial) {
                    let better = if near {
                        next.gradient.norm() < gnorm
                    } else {
                        next.objective <= eval.objective + 1e-4 * t * slope
                    };
                    if better {
                        accepted = Some((trial, next));
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((trial, next)) => {
                k = trial;
                eval = next;
            }
            None => return Ok(Minimized { k, iterations, converged: false, gradient_norm: gnorm }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ct_single::optimal_point;
    use crate::topology::DelayModel;
    use approx::assert_relative_eq;

    fn ct(spec: &NetworkSpec) -> VarianceModel {
        VarianceModel::CtSingle { tau: spec.tau() }
    }

    #[test]
    fn three_ring_optimum() {
        let spec = NetworkSpec::new(3, 1, DelayModel::constant(1.0)).unwrap();
        let opt = optimal_point(1.0).unwrap();
        let exact = design_exact(&spec, ct(&spec)).unwrap();
        assert_relative_eq!(exact.gains.k[0], opt.lambda_star / 3.0, max_relative = 1e-9);
        assert_relative_eq!(exact.objective, 2.0 * opt.c_star, max_relative = 1e-12);
        assert!(exact.converged);
    }

    #[test]
    fn uniform_design_at_unit_radius() {
        let spec = NetworkSpec::new(10, 1, DelayModel::constant(1.0)).unwrap();
        let d = design_quadratic_approx(&spec, ct(&spec)).unwrap();
        assert_relative_eq!(d.gains.k[0], optimal_point(1.0).unwrap().beta_star / 3.0, epsilon = 1e-15);
        let spec2 = NetworkSpec::new(10, 1, DelayModel::constant(2.0)).unwrap();
        let d2 = design_quadratic_approx(&spec2, ct(&spec2)).unwrap();
        assert_relative_eq!(d2.gains.k[0], d.gains.k[0] / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn fully_connected_uniform_is_optimal() {
        let spec = NetworkSpec::new(7, 3, DelayModel::linear(1.0)).unwrap();
        let opt = optimal_point(3.0).unwrap();
        let approx = design_quadratic_approx(&spec, ct(&spec)).unwrap();
        for &l in approx.spectrum.nontrivial() {
            assert_relative_eq!(l, opt.lambda_star, max_relative = 1e-12);
        }
        assert_relative_eq!(approx.objective, 6.0 * opt.c_star * 3.0, max_relative = 1e-12);
        let exact = design_exact(&spec, ct(&spec)).unwrap();
        assert_relative_eq!(exact.objective, approx.objective, max_relative = 1e-12);
    }

    #[test]
    fn exact_never_loses_to_uniform() {
        for n in 1..=4 {
            let spec = NetworkSpec::new(10, n, DelayModel::linear(1.0)).unwrap();
            let exact = design_exact(&spec, ct(&spec)).unwrap();
            let approx = design_quadratic_approx(&spec, ct(&spec)).unwrap();
            assert!(exact.objective <= approx.objective + 1e-12, "n = {n}");
        }
    }

    #[test]
    fn discrete_models_converge() {
        let spec = NetworkSpec::new(12, 2, DelayModel::linear(1.0)).unwrap();
        for model in [VarianceModel::DtSingle { steps: 2 }, VarianceModel::DtDouble { eta: 0.5, steps: 2 }] {
            let exact = design_exact(&spec, model).unwrap();
            let approx = design_quadratic_approx(&spec, model);
            if let Ok(a) = approx {
                assert!(exact.objective <= a.objective + 1e-12);
            }
            assert!(exact.gradient_norm < 1e-6);
        }
    }

    #[test]
    fn rejects_wrong_start() {
        let spec = NetworkSpec::new(10, 2, DelayModel::linear(1.0)).unwrap();
        assert!(matches!(design_exact_from(&spec, ct(&spec), &[0.1]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(design_exact_from(&spec, ct(&spec), &[5.0, 5.0]), Err(Error::Infeasible(_))));
    }
}
