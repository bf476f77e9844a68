// Double integrators with PD control: the stability bound phi(eta) and the
// reduced-model variance in normalized time.

use consensus_latency::ct_double::{
    normalize_double_integrator, phi_of_eta, reduced_model_variance, stability_ct_double,
};
use consensus_latency::topology::{DelayModel, GainProfile, NetworkSpec};
use consensus_latency::Result;

pub fn run_example() -> Result<()> {
    for eta in [1.0, 10.0, 70.0] {
        println!("phi({eta}) = {:.6}", phi_of_eta(eta));
    }

    let spec = NetworkSpec::new(12, 1, DelayModel::linear(0.5))?;
    let gains = GainProfile::with_eta(vec![0.5], 140.0);
    let model = normalize_double_integrator(&spec, &gains)?;
    let verdict = stability_ct_double(&model);
    println!("normalized eta = {}, verdict = {verdict:?}", model.eta);

    let v: f64 = model
        .lambdas
        .nontrivial()
        .iter()
        .map(|&l| reduced_model_variance(model.eta, l))
        .sum::<Result<f64>>()?;
    println!("reduced-model variance (normalized units) = {v:.6}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
