// Window length and threshold sweeps.
//
// ```text
// cargo run --release --example hyperparameter_sweep
// ```

use swapprune::config::{Axis, ExperimentConfig};
use swapprune::experiment::sweep_rows;
use swapprune::scenario::ScenarioConfig;

pub fn run_example() -> swapprune::Result<()> {
    let cfg = ExperimentConfig {
        batch_size: 10,
        scenario: None,
        scenarios: vec![
            ScenarioConfig::with_episodes("d4", &[(20, 4), (64, 3)]),
            ScenarioConfig::with_episodes("d8", &[(20, 8), (64, 6)]),
            ScenarioConfig::with_episodes("d16", &[(20, 16), (64, 10)]),
        ],
        ..ExperimentConfig::default()
    };
    for (axis, values) in [
        (Axis::Duration, vec![0.0, 1.0, 5.0, 10.0, 20.0, 40.0]),
        (Axis::Tau, vec![0.0, 0.25, 0.5, 0.75, 0.9]),
        (Axis::KDec, vec![16.0, 32.0, 48.0, 96.0, 144.0]),
    ] {
        println!("{axis:>6} {:>8} {:>8}", "success", "active");
        for r in sweep_rows(&cfg, axis, &values, None)? {
            println!("{:>6} {:>8.3} {:>8.3}", r.value, r.success_rate.unwrap_or(f64::NAN), r.mean_active_ratio);
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> swapprune::Result<()> {
    run_example()
}
