// Discrete-time single integrators: threshold, and three variance methods
// that must agree.

use consensus_latency::dt_single::{
    dt_single_threshold, moment_matching_variance, recursive_variance, single_characteristic,
    wiener_khintchine_adaptive,
};
use consensus_latency::Result;

pub fn run_example() -> Result<()> {
    for tau in 0..=5 {
        println!("tau = {tau}: lambda threshold = {:.10}", dt_single_threshold(tau));
    }
    let (lambda, tau) = (0.3, 2);
    let mm = moment_matching_variance(lambda, tau)?;
    let rec = recursive_variance(lambda, tau)?;
    let wk = wiener_khintchine_adaptive(&single_characteristic(lambda, tau))?;
    println!("moment matching {mm:.12}, recursive {rec:.12}, quadrature {wk:.12}");
    assert!((mm - rec).abs() < 1e-9 * mm && (mm - wk).abs() < 1e-7 * mm);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
