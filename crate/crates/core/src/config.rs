//! Run configuration: one TOML file plus `key=value` overrides.
//!
//! ```toml
//! model = "ct-single"          # ct-single | ct-double | dt-single | dt-double
//! N = 50
//! n = 2
//! sampling_time = 1.0          # discrete models
//!
//! [delay]
//! kind = "linear"              # linear | sqrt | power-law | table | constant
//! scale = 1.0
//! exponent = 0.5               # power-law
//! table = [1.0, 1.5, 2.5]      # table, indexed by n
//!
//! [gains]
//! k = [0.2, 0.1]
//! eta = 35.0                   # physical derivative gain, or
//! eta_normalized = 70.0        # η·τ_n (ct-double only), never both
//! ```
//!
//! Optional sections: `[variance]`, `[optimize]`, `[tradeoff]`,
//! `[stability]` and `[sim]`; see [`KEYS`].

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{DerivativeGain, ModelKind, ModelParams};
use crate::sim::{RunSettings, SimConfig, StepRule};
use crate::topology::{DelayKind, DelayModel, GainProfile, NetworkSpec};

/// Every key the configuration understands, with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("model", "ct-single | ct-double | dt-single | dt-double"),
    ("N", "number of agents on the ring (≥ 3)"),
    ("n", "neighborhood radius, 1 ≤ n ≤ ⌊(N−1)/2⌋ (not read by tradeoff)"),
    ("sampling_time", "T_s for discrete models; delay steps = ⌈τ_n/T_s⌉"),
    ("delay.kind", "linear | sqrt | power-law | table | constant"),
    ("delay.scale", "positive multiplier of f(n) (default 1)"),
    ("delay.exponent", "power-law exponent"),
    ("delay.table", "delays for n = 1, 2, … (table kind)"),
    ("gains.k", "proportional gains k_1..k_n"),
    ("gains.eta", "physical derivative gain η (double integrators)"),
    ("gains.eta_normalized", "normalized derivative gain η·τ_n (ct-double)"),
    ("variance.method", "closed-form | quadrature | moment-matching | recursive | monte-carlo"),
    ("optimize.method", "exact | approx | both (default both)"),
    ("tradeoff.n_min", "first radius of the sweep (default 1)"),
    ("tradeoff.n_max", "last radius of the sweep (default ⌊(N−1)/2⌋)"),
    ("stability.lambdas", "scalar eigenvalues to classify instead of the ring spectrum"),
    ("stability.delays", "delays (time or steps) for the scalar grid (default τ_n)"),
    ("sim.steps_per_delay", "Euler–Maruyama steps per delay (default 64)"),
    ("sim.step_size", "Euler–Maruyama Δt, snapped to τ/round(τ/Δt)"),
    ("sim.horizon", "simulated time (continuous) or steps (discrete)"),
    ("sim.burn_in", "discarded fraction of the run (default 0.5)"),
    ("sim.seed", "64-bit seed"),
    ("sim.replicates", "independent replicates (default 8)"),
    ("sim.ceiling", "divergence threshold on ‖x‖² (default 1e12)"),
    ("sim.trajectory_stride", "record every k-th state of replicate 0"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySection {
    pub kind: String,
    pub scale: Option<f64>,
    pub exponent: Option<f64>,
    pub table: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSection {
    pub k: Option<Vec<f64>>,
    pub eta: Option<f64>,
    pub eta_normalized: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceSection {
    pub method: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    pub method: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TradeoffSection {
    pub n_min: Option<usize>,
    pub n_max: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySection {
    pub lambdas: Option<Vec<f64>>,
    pub delays: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub steps_per_delay: Option<usize>,
    pub step_size: Option<f64>,
    pub horizon: Option<f64>,
    pub burn_in: Option<f64>,
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub ceiling: Option<f64>,
    pub trajectory_stride: Option<usize>,
}

/// File layout, keys exactly as written in TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelKind,
    #[serde(rename = "N")]
    pub agents: usize,
    /// Not needed by `tradeoff`, which sweeps it.
    pub n: Option<usize>,
    pub sampling_time: Option<f64>,
    pub delay: DelaySection,
    #[serde(default)]
    pub gains: GainsSection,
    #[serde(default)]
    pub variance: VarianceSection,
    #[serde(default)]
    pub optimize: OptimizeSection,
    #[serde(default)]
    pub tradeoff: TradeoffSection,
    #[serde(default)]
    pub stability: StabilitySection,
    #[serde(default)]
    pub sim: SimSection,
}

/// Set `a.b.c = value` in a TOML table, creating tables on the way.
fn set_path(root: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let mut parts = path.split('.').peekable();
    let mut table = root;
    while let Some(part) = parts.next() {
        if part.is_empty() {
            return Err(Error::Config(format!("bad override key `{path}`")));
        }
        if parts.peek().is_none() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{path}`: `{part}` is not a section")))?;
    }
    Ok(())
}

/// Parse the right-hand side of `key=value` as a TOML value, falling back to
/// a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::with_overrides(text, &[])
    }

    /// Parse `text`, then apply `key=value` overrides; overrides win.
    pub fn with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            // straight from text so errors carry line and column
            let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
            cfg.validate()?;
            return Ok(cfg);
        }
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
            set_path(&mut table, key.trim(), parse_override_value(value.trim()))?;
        }
        let cfg: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.gains.eta.is_some() && self.gains.eta_normalized.is_some() {
            return Err(Error::Config("gains.eta and gains.eta_normalized are mutually exclusive".into()));
        }
        if self.gains.eta_normalized.is_some() && self.model != ModelKind::CtDouble {
            return Err(Error::Config("gains.eta_normalized applies to ct-double only".into()));
        }
        if self.sim.step_size.is_some() && self.sim.steps_per_delay.is_some() {
            return Err(Error::Config("sim.step_size and sim.steps_per_delay are mutually exclusive".into()));
        }
        if self.model.is_discrete() && self.sampling_time.is_none() {
            return Err(Error::Config(format!("missing field `sampling_time` (required by {})", self.model)));
        }
        self.delay_model()?;
        if self.n.is_some() {
            self.spec()?;
        }
        Ok(())
    }

    /// Canonical TOML of the effective configuration.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of [`Config::canonical`], hex encoded.
    pub fn digest(&self) -> String {
        Sha256::digest(self.canonical().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn delay_model(&self) -> Result<DelayModel> {
        let d = &self.delay;
        let scale = d.scale.unwrap_or(1.0);
        let kind = match d.kind.as_str() {
            "linear" => DelayKind::Linear,
            "sqrt" => DelayKind::Sqrt,
            "constant" => DelayKind::Constant,
            "power-law" => DelayKind::PowerLaw {
                exponent: d
                    .exponent
                    .ok_or_else(|| Error::Config("missing field `delay.exponent` (power-law)".into()))?,
            },
            "table" => DelayKind::Table(
                d.table
                    .clone()
                    .ok_or_else(|| Error::Config("missing field `delay.table` (table)".into()))?,
            ),
            other => {
                return Err(Error::Config(format!(
                    "delay.kind: unknown `{other}` (expected linear, sqrt, power-law, table or constant)"
                )))
            }
        };
        DelayModel::new(kind, scale).map_err(|e| Error::Config(format!("delay: {e}")))
    }

    pub fn spec(&self) -> Result<NetworkSpec> {
        let n = self.n.ok_or_else(|| Error::Config("missing field `n`".into()))?;
        NetworkSpec::new(self.agents, n, self.delay_model()?).map_err(|e| Error::Config(format!("N/n: {e}")))
    }

    fn derivative_gain(&self) -> Option<DerivativeGain> {
        match (self.gains.eta, self.gains.eta_normalized) {
            (Some(e), _) => Some(DerivativeGain::Physical(e)),
            (None, Some(e)) => Some(DerivativeGain::Normalized(e)),
            _ => None,
        }
    }

    pub fn model_params(&self) -> ModelParams {
        ModelParams { kind: self.model, eta: self.derivative_gain(), sampling_time: self.sampling_time }
    }

    /// Physical gains; the derivative gain is de-normalized with `τ_n`.
    pub fn gains(&self) -> Result<GainProfile> {
        let k = self.gains.k.clone().ok_or_else(|| Error::Config("missing field `gains.k`".into()))?;
        let spec = self.spec()?;
        if k.len() != spec.radius() {
            return Err(Error::Config(format!("gains.k has {} entries but n = {}", k.len(), spec.radius())));
        }
        let eta = match self.derivative_gain() {
            Some(DerivativeGain::Physical(e)) => Some(e),
            Some(DerivativeGain::Normalized(e)) => Some(e / spec.tau()),
            None if self.model.is_double() => {
                return Err(Error::Config(format!("missing field `gains.eta` (required by {})", self.model)))
            }
            None => None,
        };
        let g = GainProfile { k, eta };
        g.check(&spec).map_err(|e| Error::Config(format!("gains: {e}")))?;
        Ok(g)
    }

    pub fn run_settings(&self) -> RunSettings {
        let s = &self.sim;
        let d = RunSettings::default();
        RunSettings {
            step: match (s.step_size, s.steps_per_delay) {
                (Some(dt), _) => StepRule::Size(dt),
                (None, Some(m)) => StepRule::PerDelay(m),
                (None, None) => d.step,
            },
            horizon: s.horizon.unwrap_or(d.horizon),
            burn_in: s.burn_in.unwrap_or(d.burn_in),
            seed: s.seed.unwrap_or(d.seed),
            replicates: s.replicates.unwrap_or(d.replicates),
            ceiling: s.ceiling.unwrap_or(d.ceiling),
            trajectory_stride: s.trajectory_stride,
        }
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        Ok(SimConfig {
            model: self.model,
            spec: self.spec()?,
            gains: self.gains()?,
            sampling_time: self.sampling_time,
            settings: self.run_settings(),
        })
    }
}
