// Connectivity against latency: optimal variance over the neighborhood
// radius for three delay growth laws.

use consensus_latency::model::ModelParams;
use consensus_latency::topology::DelayModel;
use consensus_latency::tradeoff::sweep_all;
use consensus_latency::Result;

pub fn run_example() -> Result<()> {
    for (name, delay) in [
        ("linear", DelayModel::linear(1.0)),
        ("sqrt", DelayModel::sqrt(1.0)),
        ("constant", DelayModel::constant(1.0)),
    ] {
        let curve = sweep_all(50, &delay, &ModelParams::ct_single())?;
        println!("f = {name}: n* = {:?}, local minima {:?}", curve.n_star_exact, curve.local_minima_exact);
    }
    let curve = sweep_all(50, &DelayModel::linear(1.0), &ModelParams::ct_single())?;
    print!("{}", curve.to_csv().lines().take(6).collect::<Vec<_>>().join("\n"));
    println!();
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
