// Batch diagnostics over vanilla runs: event histogram, timing, spread.
//
// ```text
// cargo run --example diagnostics
// ```

use swapprune::analytics::BatchReport;
use swapprune::engine::{run_batch, RunSpec};
use swapprune::scenario::ScenarioConfig;

pub fn run_example() -> swapprune::Result<()> {
    let families = [
        ScenarioConfig::static_default(),
        ScenarioConfig::with_episodes("one", &[(40, 2)]),
        ScenarioConfig::with_episodes("two", &[(20, 2), (80, 1)]),
        ScenarioConfig::with_episodes("long", &[(30, 12), (90, 6)]),
    ];
    let specs: Vec<RunSpec> = families.iter().map(|f| RunSpec::vanilla(f.name.clone(), f.clone()).with_attention()).collect();
    let seeds: Vec<u64> = (0..10).collect();
    let batch = run_batch(&specs, &seeds)?;

    let report = BatchReport::build(&batch.traces, 0.7, Some(&[0, 100, 200]))?;
    println!("{} traces at tau {}", report.traces, report.tau);
    println!("events 0/1/2/3+   {:?}", report.rvis_histogram);
    println!("temporal deciles  {:?}", report.temporal);
    for (t, p) in &report.retention {
        println!("stays >= {t:.2}: {p:.2}");
    }
    println!("event entropy {:.3} (uniform would be {:.3})", report.mean_entropy.unwrap_or(f64::NAN), (144f64).ln());
    println!("pairwise diversity {:.3}", report.mean_pairwise_diversity.unwrap_or(f64::NAN));
    Ok(())
}

#[allow(dead_code)]
fn main() -> swapprune::Result<()> {
    run_example()
}
