// Offline shift events: dips of the full-attention similarity below a threshold.
//
// ```text
// cargo run --example shift_events
// ```

use swapprune::analytics::trace_events;
use swapprune::detect::count_rvis_events;
use swapprune::engine::run_vanilla;
use swapprune::scenario::{build_scenario, ScenarioConfig};

pub fn run_example() -> swapprune::Result<()> {
    // hand-made series: the plateau counts once, the endpoint dip counts too
    let series = [0.95, 0.6, 0.6, 0.9, 0.85, 0.92, 0.4];
    let events = count_rvis_events(&series, 0.7)?;
    println!("toy series events at {:?}", events.iter().map(|e| e.step).collect::<Vec<_>>());

    let cfg = ScenarioConfig { steps: 96, ..ScenarioConfig::with_episodes("two-short", &[(20, 1), (60, 2)]) };
    for seed in 0..4 {
        let scenario = build_scenario(&cfg, seed)?;
        let trace = run_vanilla(&scenario, false)?;
        let ev = trace_events(&trace, 0.7)?;
        let shown: Vec<String> = ev.iter().map(|e| format!("{}({:.2})", e.step, e.similarity)).collect();
        println!("seed {seed}: {} events {}", ev.len(), shown.join(" "));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> swapprune::Result<()> {
    run_example()
}
