// Discrete-time double integrators: stable lambda range for several
// derivative gains and the variance along it.

use consensus_latency::dt_double::{lambda_threshold, moment_matching_dt_double, quadrature_dt_double, DtPdSubsystem};
use consensus_latency::Result;

pub fn run_example() -> Result<()> {
    let tau = 1;
    for eta in [0.2, 0.5, 1.0] {
        let Some(top) = lambda_threshold(eta, tau) else {
            println!("eta = {eta}: no stable lambda");
            continue;
        };
        let sub = DtPdSubsystem::new(eta, 0.5 * top, tau);
        let mm = moment_matching_dt_double(&sub)?;
        let q = quadrature_dt_double(&sub)?;
        println!("eta = {eta}: lambda < {top:.6}; variance at half = {mm:.8} (quadrature {q:.8})");
        assert!((mm - q).abs() < 1e-6 * mm);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
