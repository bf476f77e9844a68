// Continuous-time single integrators: stability margin, per-mode variance
// and the scalar optimum.

use consensus_latency::ct_single::{optimal_point, stability_ct_single, variance_ct_single};
use consensus_latency::topology::{circulant_eigenvalues, DelayModel, GainProfile, NetworkSpec};
use consensus_latency::Result;

pub fn run_example() -> Result<()> {
    let spec = NetworkSpec::new(20, 3, DelayModel::linear(0.2))?;
    let tau = spec.tau();
    let gains = GainProfile::uniform(3, 0.1);
    let spectrum = circulant_eigenvalues(&spec, &gains)?;

    let verdict = stability_ct_single(&spectrum, tau);
    println!("tau = {tau}, stable = {verdict:?}");

    let total: f64 = spectrum.nontrivial().iter().map(|&l| variance_ct_single(l, tau)).sum::<Result<f64>>()?;
    println!("total steady-state variance = {total:.6}");

    let opt = optimal_point(tau)?;
    println!("beta* = {:.12}, C* = {:.12}, lambda* = {:.6}", opt.beta_star, opt.c_star, opt.lambda_star);
    let lower = (spec.agents() - 1) as f64 * opt.c_star * tau;
    assert!(total >= lower);
    println!("lower bound (N-1) C* tau = {lower:.6}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
