// Simulated ring against the analytic variance.

use consensus_latency::ct_single::variance_ct_single;
use consensus_latency::model::ModelKind;
use consensus_latency::sim::{simulate, RunSettings, SimConfig, StepRule};
use consensus_latency::topology::{circulant_eigenvalues, DelayModel, GainProfile, NetworkSpec};
use consensus_latency::Result;

pub fn run_example() -> Result<()> {
    let spec = NetworkSpec::new(6, 1, DelayModel::constant(0.5))?;
    let gains = GainProfile::new(vec![0.4]);
    let analytic: f64 = circulant_eigenvalues(&spec, &gains)?
        .nontrivial()
        .iter()
        .map(|&l| variance_ct_single(l, spec.tau()))
        .sum::<Result<f64>>()?;
    let cfg = SimConfig {
        model: ModelKind::CtSingle,
        spec,
        gains,
        sampling_time: None,
        settings: RunSettings {
            step: StepRule::PerDelay(32),
            horizon: 2000.0,
            seed: 42,
            replicates: 8,
            ..RunSettings::default()
        },
    };
    let r = simulate(&cfg)?;
    println!(
        "simulated {:.4} ± {:.4}, analytic {:.4}, diverged = {}",
        r.variance_estimate, r.standard_error, analytic, r.diverged
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
