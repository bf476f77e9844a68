//! Monte Carlo estimates of the steady-state consensus-error variance.
//!
//! Continuous models are integrated by delayed Euler–Maruyama on a grid with
//! `Δt = τ/m`, so the delayed state is always a stored grid point. Discrete
//! models are iterated exactly. Histories start at zero. The estimate is the
//! time average of `‖Ωx̄‖²` after burn-in, averaged over replicates; the
//! standard error comes from the replicate spread and ignores autocorrelation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dt_single::DtDelay;
use crate::error::{Error, Result};
use crate::model::ModelKind;
use crate::topology::{apply_control, GainProfile, NetworkSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `Δt = τ/m`.
    PerDelay(usize),
    /// Requested `Δt`; snapped to `τ/round(τ/Δt)` when `τ > 0`.
    Size(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub step: StepRule,
    /// Total simulated time (continuous) or number of steps (discrete).
    pub horizon: f64,
    /// Fraction of the run discarded before averaging.
    pub burn_in: f64,
    pub seed: u64,
    pub replicates: usize,
    /// Running `‖x‖²` above this flags divergence.
    pub ceiling: f64,
    /// Record every `stride`-th state of replicate 0.
    pub trajectory_stride: Option<usize>,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            step: StepRule::PerDelay(64),
            horizon: 1000.0,
            burn_in: 0.5,
            seed: 0,
            replicates: 8,
            ceiling: 1e12,
            trajectory_stride: None,
        }
    }
}

impl RunSettings {
    fn check(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::Config(format!("sim.burn_in must lie in [0, 1), got {}", self.burn_in)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("sim.horizon must be positive, got {}", self.horizon)));
        }
        if self.replicates == 0 {
            return Err(Error::Config("sim.replicates must be at least 1".into()));
        }
        if self.trajectory_stride == Some(0) {
            return Err(Error::Config("sim.trajectory_stride must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub model: ModelKind,
    pub spec: NetworkSpec,
    /// Physical gains; `eta` is required by double-integrator models.
    pub gains: GainProfile,
    /// `T_s`, discrete models only.
    pub sampling_time: Option<f64>,
    pub settings: RunSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub time: f64,
    /// Consensus error `Ωx̄`.
    pub error: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub variance_estimate: f64,
    pub standard_error: f64,
    pub replicate_estimates: Vec<f64>,
    pub diverged: bool,
    /// Largest ratio, over replicates, of mean `‖x‖²` in the last quarter of
    /// the run to the quarter before it.
    pub growth_ratio: f64,
    pub warnings: Vec<String>,
    pub step_size: f64,
    pub delay_steps: usize,
    pub steps: usize,
    pub trajectory: Option<Vec<TrajectoryPoint>>,
}

impl SimResult {
    /// `|estimate − target| ≤ z · SE`.
    pub fn agrees_with(&self, target: f64, z: f64) -> bool {
        !self.diverged && (self.variance_estimate - target).abs() <= z * self.standard_error
    }
}

/// Growth between the last two quarters that counts as divergence.
pub const GROWTH_LIMIT: f64 = 10.0;

#[derive(Debug, Clone)]
enum Feedback {
    Scalar(f64),
    Ring(Vec<f64>),
}

impl Feedback {
    fn dim(&self, agents: usize) -> usize {
        match self {
            Feedback::Scalar(_) => 1,
            Feedback::Ring(_) => agents,
        }
    }

    /// `out = −K x`.
    fn control(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Feedback::Scalar(l) => out[0] = -l * x[0],
            Feedback::Ring(k) => apply_control(k, x, out),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    CtSingle { dt: f64 },
    CtDouble { dt: f64, eta: f64 },
    DtSingle,
    DtDouble { eta: f64 },
}

struct Plant {
    kind: Kind,
    feedback: Feedback,
    dim: usize,
    delay: usize,
    steps: usize,
}

struct Outcome {
    estimate: f64,
    diverged: bool,
    growth: f64,
    trajectory: Option<Vec<TrajectoryPoint>>,
}

fn error_norm_sq(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (s, s2) = x.iter().fold((0.0, 0.0), |(s, s2), v| (s + v, s2 + v * v));
    if x.len() == 1 {
        s2
    } else {
        s2 - s * s / n
    }
}

fn project(x: &[f64]) -> Vec<f64> {
    if x.len() == 1 {
        return x.to_vec();
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - mean).collect()
}

fn run_replicate(plant: &Plant, settings: &RunSettings, replicate: usize) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    rng.set_stream(replicate as u64);
    let d = plant.dim;
    let slots = plant.delay + 1;
    let mut hist = vec![0.0; slots * d];
    let mut vel = vec![0.0; d];
    let mut u = vec![0.0; d];
    let mut next = vec![0.0; d];

    let (dt, time_unit) = match plant.kind {
        Kind::CtSingle { dt } | Kind::CtDouble { dt, .. } => (dt, dt),
        Kind::DtSingle | Kind::DtDouble { .. } => (1.0, 1.0),
    };
    let sqrt_dt = dt.sqrt();
    let burn = ((plant.steps as f64) * settings.burn_in).floor() as usize;
    let quarter = (plant.steps / 4).max(1);
    let mut quarter_sums = [0.0f64; 2];
    let mut sum = 0.0;
    let mut count = 0usize;
    let record = if replicate == 0 { settings.trajectory_stride } else { None };
    let mut trajectory = record.map(|_| Vec::new());

    for i in 0..plant.steps {
        let cur = (i % slots) * d;
        let old = ((i + 1) % slots) * d;
        plant.feedback.control(&hist[old..old + d], &mut u);
        {
            let x = &hist[cur..cur + d];
            match plant.kind {
                Kind::CtSingle { .. } => {
                    for a in 0..d {
                        let w: f64 = StandardNormal.sample(&mut rng);
                        next[a] = x[a] + dt * u[a] + sqrt_dt * w;
                    }
                }
                Kind::CtDouble { eta, .. } => {
                    for a in 0..d {
                        let w: f64 = StandardNormal.sample(&mut rng);
                        next[a] = x[a] + dt * vel[a];
                        vel[a] += dt * (eta * u[a] - eta * vel[a]) + sqrt_dt * w;
                    }
                }
                Kind::DtSingle => {
                    for a in 0..d {
                        let w: f64 = StandardNormal.sample(&mut rng);
                        next[a] = x[a] + u[a] + w;
                    }
                }
                Kind::DtDouble { eta } => {
                    for a in 0..d {
                        let w: f64 = StandardNormal.sample(&mut rng);
                        next[a] = x[a] + vel[a];
                        vel[a] = (1.0 - eta) * vel[a] + eta * u[a] + w;
                    }
                }
            }
        }
        hist[old..old + d].copy_from_slice(&next);
        let e = error_norm_sq(&next);
        let step = i + 1;
        if !(e <= settings.ceiling) {
            return Outcome { estimate: f64::INFINITY, diverged: true, growth: f64::INFINITY, trajectory };
        }
        if step > burn {
            sum += e;
            count += 1;
        }
        if plant.steps >= 8 {
            if step > plant.steps - quarter {
                quarter_sums[1] += e;
            } else if step > plant.steps - 2 * quarter {
                quarter_sums[0] += e;
            }
        }
        if let (Some(stride), Some(t)) = (record, trajectory.as_mut()) {
            if step % stride == 0 {
                t.push(TrajectoryPoint { time: step as f64 * time_unit, error: project(&next) });
            }
        }
    }
    let growth = if plant.steps >= 8 && quarter_sums[0] > 0.0 { quarter_sums[1] / quarter_sums[0] } else { 1.0 };
    Outcome {
        estimate: if count > 0 { sum / count as f64 } else { f64::NAN },
        diverged: growth > GROWTH_LIMIT,
        growth,
        trajectory,
    }
}

fn run(plant: Plant, settings: &RunSettings, mut warnings: Vec<String>) -> SimResult {
    let outcomes: Vec<Outcome> = (0..settings.replicates)
        .into_par_iter()
        .map(|r| run_replicate(&plant, settings, r))
        .collect();
    let estimates: Vec<f64> = outcomes.iter().map(|o| o.estimate).collect();
    let diverged = outcomes.iter().any(|o| o.diverged);
    let growth = outcomes.iter().map(|o| o.growth).fold(0.0, f64::max);
    let r = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / r;
    let se = if estimates.len() > 1 {
        let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (r - 1.0);
        (var / r).sqrt()
    } else {
        warnings.push("one replicate: standard error unavailable".into());
        f64::NAN
    };
    let step_size = match plant.kind {
        Kind::CtSingle { dt } | Kind::CtDouble { dt, .. } => dt,
        _ => 1.0,
    };
    let trajectory = outcomes.into_iter().next().and_then(|o| o.trajectory);
    SimResult {
        variance_estimate: mean,
        standard_error: se,
        replicate_estimates: estimates,
        diverged,
        growth_ratio: growth,
        warnings,
        step_size,
        delay_steps: plant.delay,
        steps: plant.steps,
        trajectory,
    }
}

/// Grid for a continuous delay: `(Δt, m)` with `m Δt = τ`.
fn continuous_grid(tau: f64, rule: StepRule, warnings: &mut Vec<String>) -> Result<(f64, usize)> {
    let (dt, m) = match rule {
        StepRule::PerDelay(m) => {
            if m == 0 {
                return Err(Error::Config("sim.steps_per_delay must be positive".into()));
            }
            if tau == 0.0 {
                return Err(Error::Config("undelayed runs need sim.step_size".into()));
            }
            (tau / m as f64, m)
        }
        StepRule::Size(dt) => {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::Config(format!("sim.step_size must be positive, got {dt}")));
            }
            if tau == 0.0 {
                (dt, 0)
            } else {
                let m = ((tau / dt).round() as usize).max(1);
                (tau / m as f64, m)
            }
        }
    };
    if tau > 0.0 && m < 10 {
        warnings.push(format!("delay resolved by only {m} steps"));
    }
    Ok((dt, m))
}

fn continuous_plant(
    feedback: Feedback,
    agents: usize,
    tau: f64,
    eta: Option<f64>,
    settings: &RunSettings,
) -> Result<(Plant, Vec<String>)> {
    settings.check()?;
    let mut warnings = Vec::new();
    let (dt, delay) = continuous_grid(tau, settings.step, &mut warnings)?;
    let kind = match eta {
        None => Kind::CtSingle { dt },
        Some(eta) => {
            if eta * dt > 0.1 {
                warnings.push(format!("η Δt = {} is coarse for the velocity loop", eta * dt));
            }
            Kind::CtDouble { dt, eta }
        }
    };
    let steps = (settings.horizon / dt).ceil() as usize;
    let dim = feedback.dim(agents);
    Ok((Plant { kind, feedback, dim, delay, steps }, warnings))
}

fn discrete_plant(
    feedback: Feedback,
    agents: usize,
    delay: usize,
    eta: Option<f64>,
    settings: &RunSettings,
) -> Result<(Plant, Vec<String>)> {
    settings.check()?;
    let kind = match eta {
        None => Kind::DtSingle,
        Some(eta) => Kind::DtDouble { eta },
    };
    let steps = settings.horizon.ceil() as usize;
    let dim = feedback.dim(agents);
    Ok((Plant { kind, feedback, dim, delay, steps }, Vec::new()))
}

fn require_eta(gains: &GainProfile) -> Result<f64> {
    match gains.eta {
        Some(eta) if eta > 0.0 && eta.is_finite() => Ok(eta),
        Some(eta) => Err(Error::InvalidArgument(format!("derivative gain must be positive, got {eta}"))),
        None => Err(Error::Config("double-integrator simulation needs gains.eta".into())),
    }
}

fn ring(cfg: &SimConfig) -> Result<Feedback> {
    cfg.gains.check(&cfg.spec)?;
    Ok(Feedback::Ring(cfg.gains.k.clone()))
}

pub fn simulate_ct_single(cfg: &SimConfig) -> Result<SimResult> {
    let (plant, w) = continuous_plant(ring(cfg)?, cfg.spec.agents(), cfg.spec.tau(), None, &cfg.settings)?;
    Ok(run(plant, &cfg.settings, w))
}

pub fn simulate_ct_double(cfg: &SimConfig) -> Result<SimResult> {
    let eta = require_eta(&cfg.gains)?;
    let (plant, w) = continuous_plant(ring(cfg)?, cfg.spec.agents(), cfg.spec.tau(), Some(eta), &cfg.settings)?;
    Ok(run(plant, &cfg.settings, w))
}

/// Discrete single or double integrator, chosen by `cfg.model`.
pub fn simulate_dt(cfg: &SimConfig) -> Result<SimResult> {
    let ts = cfg
        .sampling_time
        .ok_or_else(|| Error::Config("discrete simulation needs sampling_time".into()))?;
    let steps = DtDelay::from_continuous(cfg.spec.tau(), ts)?.steps;
    let eta = match cfg.model {
        ModelKind::DtSingle => None,
        ModelKind::DtDouble => Some(require_eta(&cfg.gains)?),
        other => return Err(Error::InvalidArgument(format!("{other} is not a discrete model"))),
    };
    let (plant, w) = discrete_plant(ring(cfg)?, cfg.spec.agents(), steps, eta, &cfg.settings)?;
    Ok(run(plant, &cfg.settings, w))
}

pub fn simulate(cfg: &SimConfig) -> Result<SimResult> {
    match cfg.model {
        ModelKind::CtSingle => simulate_ct_single(cfg),
        ModelKind::CtDouble => simulate_ct_double(cfg),
        ModelKind::DtSingle | ModelKind::DtDouble => simulate_dt(cfg),
    }
}

/// One decoupled subsystem `x' = −λ x(t−τ) + w'` (or its double/discrete
/// analogues). `delay` is time for continuous kinds and steps for discrete.
pub fn simulate_scalar(
    kind: ModelKind,
    lambda: f64,
    eta: Option<f64>,
    delay: f64,
    settings: &RunSettings,
) -> Result<SimResult> {
    if kind.is_double() && eta.is_none() {
        return Err(Error::Config(format!("{kind} needs η")));
    }
    let eta = if kind.is_double() { eta } else { None };
    let fb = Feedback::Scalar(lambda);
    let (plant, w) = if kind.is_discrete() {
        if delay < 0.0 || delay.fract() != 0.0 {
            return Err(Error::InvalidArgument(format!("discrete delay must be a whole number of steps, got {delay}")));
        }
        discrete_plant(fb, 1, delay as usize, eta, settings)?
    } else {
        if !(delay >= 0.0 && delay.is_finite()) {
            return Err(Error::InvalidArgument(format!("delay must be non-negative, got {delay}")));
        }
        continuous_plant(fb, 1, delay, eta, settings)?
    };
    Ok(run(plant, settings, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::DelayModel;

    fn quick(seed: u64) -> RunSettings {
        RunSettings { horizon: 2000.0, replicates: 4, seed, ..RunSettings::default() }
    }

    #[test]
    fn grid_alignment() {
        let mut w = Vec::new();
        assert_eq!(continuous_grid(2.0, StepRule::PerDelay(64), &mut w).unwrap(), (2.0 / 64.0, 64));
        let (dt, m) = continuous_grid(1.0, StepRule::Size(0.3), &mut w).unwrap();
        assert_eq!(m, 3);
        assert!((dt * 3.0 - 1.0).abs() < 1e-15);
        assert_eq!(w.len(), 1);
        assert!(continuous_grid(0.0, StepRule::PerDelay(64), &mut w).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = simulate_scalar(ModelKind::DtSingle, 0.5, None, 1.0, &quick(7)).unwrap();
        let b = simulate_scalar(ModelKind::DtSingle, 0.5, None, 1.0, &quick(7)).unwrap();
        let c = simulate_scalar(ModelKind::DtSingle, 0.5, None, 1.0, &quick(8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.replicate_estimates, c.replicate_estimates);
        assert_ne!(a.replicate_estimates[0], a.replicate_estimates[1]);
    }

    #[test]
    fn discrete_unstable_diverges() {
        let s = RunSettings { horizon: 20_000.0, ..quick(1) };
        let r = simulate_scalar(ModelKind::DtSingle, 1.2, None, 1.0, &s).unwrap();
        assert!(r.diverged);
    }

    #[test]
    fn network_error_is_mean_free() {
        let spec = NetworkSpec::new(6, 1, DelayModel::constant(2.0)).unwrap();
        let cfg = SimConfig {
            model: ModelKind::DtSingle,
            spec,
            gains: GainProfile::new(vec![0.1]),
            sampling_time: Some(1.0),
            settings: RunSettings { horizon: 200.0, replicates: 1, trajectory_stride: Some(1), ..quick(3) },
        };
        let r = simulate(&cfg).unwrap();
        let traj = r.trajectory.unwrap();
        assert_eq!(traj.len(), 200);
        for p in &traj {
            assert!(p.error.iter().sum::<f64>().abs() < 1e-10);
        }
    }

    #[test]
    fn config_errors() {
        let bad = RunSettings { burn_in: 1.0, ..quick(0) };
        assert!(matches!(simulate_scalar(ModelKind::CtSingle, 1.0, None, 1.0, &bad), Err(Error::Config(_))));
        assert!(simulate_scalar(ModelKind::CtDouble, 1.0, None, 1.0, &quick(0)).is_err());
        assert!(simulate_scalar(ModelKind::DtSingle, 0.5, None, 1.5, &quick(0)).is_err());
    }
}
