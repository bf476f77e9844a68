//! Architecture sweep over the neighborhood radius `n`.
//!
//! For the continuous single integrator the uniform design's variance factors
//! as `f(n) · Σ_j C̃_j*(n)`, which splits into a latency term
//! `J_latency = (N−1) C* f(n)` (the cost of delay at the ideal spectrum) and a
//! network term `J_network ≥ 0` (the excess from imperfect spectrum placement).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ct_single::{optimal_point, suboptimal_coefficients};
use crate::error::{Error, Result};
use crate::model::{ModelKind, ModelParams};
use crate::optimizer::{design_exact, design_quadratic_approx, DesignResult};
use crate::report::{Cell, Table};
use crate::topology::{max_radius, DelayModel, NetworkSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub j_network: f64,
    pub j_latency: f64,
    /// `f(n) · Σ_j C̃_j*(n)`
    pub product_form: f64,
    pub sum_coefficients: f64,
}

/// Split the uniform-design variance of a continuous single-integrator ring.
pub fn decompose(spec: &NetworkSpec) -> Result<Decomposition> {
    let tau = spec.tau();
    let c_star = optimal_point(tau)?.c_star;
    let coeffs = suboptimal_coefficients(spec)?;
    let sum: f64 = coeffs.iter().sum();
    let j_latency = (spec.agents() - 1) as f64 * c_star * tau;
    let j_network = tau * coeffs.iter().map(|c| c - c_star).sum::<f64>();
    Ok(Decomposition { j_network, j_latency, product_form: tau * sum, sum_coefficients: sum })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub n: usize,
    /// Delay in model units: time for continuous models, steps for discrete.
    pub tau: f64,
    pub objective_exact: Option<f64>,
    pub objective_approx: Option<f64>,
    pub j_network: Option<f64>,
    pub j_latency: Option<f64>,
    pub sum_coefficients: Option<f64>,
    /// Why a design is missing, if one is.
    pub note: Option<String>,
    #[serde(skip)]
    pub exact: Option<DesignResult>,
}

impl TradeoffRow {
    pub fn feasible(&self) -> bool {
        self.objective_exact.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffCurve {
    pub agents: usize,
    pub model: ModelKind,
    pub rows: Vec<TradeoffRow>,
    pub n_star_exact: Option<usize>,
    pub n_star_approx: Option<usize>,
    /// Every `n` whose exact objective is no larger than its feasible
    /// neighbors'; plateaus report their smallest `n`.
    pub local_minima_exact: Vec<usize>,
}

/// `n` of the smallest value, ties toward smaller `n`.
fn argmin(points: &[(usize, f64)]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &(n, v) in points {
        if best.map_or(true, |(_, b)| v < b) {
            best = Some((n, v));
        }
    }
    best.map(|(n, _)| n)
}

fn local_minima(points: &[(usize, f64)]) -> Vec<usize> {
    let mut out = Vec::new();
    for (i, &(n, v)) in points.iter().enumerate() {
        let left_ok = i == 0 || points[i - 1].1 > v;
        let right_ok = i + 1 == points.len() || points[i + 1].1 >= v;
        if left_ok && right_ok {
            out.push(n);
        }
    }
    out
}

fn sweep_row(agents: usize, delay: &DelayModel, params: &ModelParams, n: usize) -> Result<TradeoffRow> {
    let spec = NetworkSpec::new(agents, n, delay.clone())?;
    let model = params.variance_model(&spec)?;
    let mut notes = Vec::new();
    let exact = match design_exact(&spec, model) {
        Ok(d) => Some(d),
        Err(e @ (Error::Infeasible(_) | Error::NoConvergence { .. } | Error::Unstable(_))) => {
            notes.push(format!("exact: {e}"));
            None
        }
        Err(e) => return Err(e),
    };
    let approx = match design_quadratic_approx(&spec, model) {
        Ok(d) => Some(d.objective),
        Err(e @ (Error::Infeasible(_) | Error::Unstable(_))) => {
            notes.push(format!("approx: {e}"));
            None
        }
        Err(e) => return Err(e),
    };
    let dec = if params.kind == ModelKind::CtSingle { decompose(&spec).ok() } else { None };
    Ok(TradeoffRow {
        n,
        tau: model.delay(),
        objective_exact: exact.as_ref().map(|d| d.objective),
        objective_approx: approx,
        j_network: dec.map(|d| d.j_network),
        j_latency: dec.map(|d| d.j_latency),
        sum_coefficients: dec.map(|d| d.sum_coefficients),
        note: if notes.is_empty() { None } else { Some(notes.join("; ")) },
        exact,
    })
}

/// One row per `n`, computed in parallel and returned in order of `n`.
pub fn sweep(
    agents: usize,
    delay: &DelayModel,
    params: &ModelParams,
    n_range: impl IntoIterator<Item = usize>,
) -> Result<TradeoffCurve> {
    let ns: Vec<usize> = n_range.into_iter().collect();
    if ns.is_empty() {
        return Err(Error::InvalidArgument("empty n range".into()));
    }
    let limit = max_radius(agents);
    if let Some(&bad) = ns.iter().find(|&&n| n == 0 || n > limit) {
        return Err(Error::InvalidNetwork(format!("n = {bad} outside 1..={limit} for N = {agents}")));
    }
    let rows: Vec<TradeoffRow> = ns
        .par_iter()
        .map(|&n| sweep_row(agents, delay, params, n))
        .collect::<Result<_>>()?;
    let exact_pts: Vec<(usize, f64)> = rows.iter().filter_map(|r| r.objective_exact.map(|v| (r.n, v))).collect();
    let approx_pts: Vec<(usize, f64)> = rows.iter().filter_map(|r| r.objective_approx.map(|v| (r.n, v))).collect();
    Ok(TradeoffCurve {
        agents,
        model: params.kind,
        n_star_exact: argmin(&exact_pts),
        n_star_approx: argmin(&approx_pts),
        local_minima_exact: local_minima(&exact_pts),
        rows,
    })
}

/// Sweep every admissible radius `1..=⌊(N−1)/2⌋`.
pub fn sweep_all(agents: usize, delay: &DelayModel, params: &ModelParams) -> Result<TradeoffCurve> {
    sweep(agents, delay, params, 1..=max_radius(agents))
}

impl TradeoffCurve {
    pub const COLUMNS: [&'static str; 6] = ["n", "tau", "objective_exact", "objective_approx", "j_network", "j_latency"];

    pub fn table(&self) -> Table {
        let mut t = Table::new(Self::COLUMNS);
        for r in &self.rows {
            t.push(vec![
                Cell::from(r.n),
                r.tau.into(),
                r.objective_exact.into(),
                r.objective_approx.into(),
                r.j_network.into(),
                r.j_latency.into(),
            ]);
        }
        t
    }

    pub fn to_csv(&self) -> String {
        self.table().to_csv()
    }
}
