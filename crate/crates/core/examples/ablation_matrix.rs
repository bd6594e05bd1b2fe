// Detector x swap strategy matrix on a shifting ensemble.
//
// ```text
// cargo run --release --example ablation_matrix
// ```

use swapprune::config::ExperimentConfig;
use swapprune::experiment::ablation_rows;
use swapprune::scenario::ScenarioConfig;

pub fn run_example() -> swapprune::Result<()> {
    let cfg = ExperimentConfig {
        batch_size: 12,
        scenario: None,
        scenarios: vec![
            ScenarioConfig::with_episodes("short", &[(20, 4), (64, 4)]),
            ScenarioConfig::with_episodes("long", &[(20, 12), (64, 8), (108, 16)]),
        ],
        ..ExperimentConfig::default()
    };
    println!("{:<14} {:>8} {:>8} {:>9}", "method", "success", "active", "triggers");
    for r in ablation_rows(&cfg, None)? {
        let rate = r.success_rate.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
        println!("{:<14} {:>8} {:>8.3} {:>9.2}", r.method, rate, r.mean_active_ratio, r.mean_triggers);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> swapprune::Result<()> {
    run_example()
}
