// Minimum-variance gain design: exact Newton solve against the quadratic
// approximation, for a continuous and a discrete model.

use consensus_latency::model::ModelParams;
use consensus_latency::optimizer::{design_exact, design_quadratic_approx};
use consensus_latency::topology::{DelayModel, NetworkSpec};
use consensus_latency::Result;

pub fn run_example() -> Result<()> {
    let spec = NetworkSpec::new(30, 4, DelayModel::sqrt(1.0))?;
    for params in [ModelParams::ct_single(), ModelParams::dt_single(0.5)] {
        let model = params.variance_model(&spec)?;
        let exact = design_exact(&spec, model)?;
        let approx = design_quadratic_approx(&spec, model)?;
        println!(
            "{}: exact {:.6} in {} iterations, approx {:.6}",
            exact.model, exact.objective, exact.iterations, approx.objective
        );
        println!("  k = {:?}", exact.gains.k);
        assert!(exact.objective <= approx.objective * (1.0 + 1e-12));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
