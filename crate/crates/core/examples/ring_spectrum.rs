// Ring topology: feedback matrix, its spectrum, and the closed-form
// eigenvalues agreeing with a dense eigensolver.

use consensus_latency::topology::{build_feedback_matrix, circulant_eigenvalues, DelayModel, GainProfile, NetworkSpec};
use consensus_latency::Result;

pub fn run_example() -> Result<()> {
    let spec = NetworkSpec::new(8, 2, DelayModel::linear(0.5))?;
    let gains = GainProfile::new(vec![0.3, 0.1]);
    let k = build_feedback_matrix(&spec, &gains)?;
    let spectrum = circulant_eigenvalues(&spec, &gains)?;

    let mut dense: Vec<f64> = k.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    dense.sort_by(f64::total_cmp);
    let mut closed = spectrum.lambdas().to_vec();
    closed.sort_by(f64::total_cmp);
    for (a, b) in dense.iter().zip(&closed) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    println!("N = {}, n = {}, tau_n = {}", spec.agents(), spec.radius(), spec.tau());
    println!("row 0 of K: {:?}", k.row(0).iter().collect::<Vec<_>>());
    println!("lambda_j: {:?}", spectrum.lambdas());
    println!("nontrivial range [{:.4}, {:.4}]", spectrum.min_nontrivial(), spectrum.max_nontrivial());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
