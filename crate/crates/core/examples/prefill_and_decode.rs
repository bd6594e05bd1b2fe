// Prune a synthetic bank at prefill, then decode through an attention shift.
//
// Attention starts on one region of the bank; at step 24 it moves to a
// second region for ten steps and comes back. Static pruning keeps only the
// first region. The swap picks up the second one when the shift is detected.
//
// ```text
// cargo run --example prefill_and_decode
// ```

use swapprune::engine::{run_decode, run_prefill, EngineConfig};
use swapprune::prefill::PruneStrategy;
use swapprune::scenario::{build_scenario, judge_success, ScenarioConfig};

pub fn run_example() -> swapprune::Result<()> {
    let cfg = ScenarioConfig { steps: 64, ..ScenarioConfig::with_episodes("one-episode", &[(24, 10)]) };
    let scenario = build_scenario(&cfg, 7)?;
    println!("bank {} tokens, base region {:?}", scenario.n_visual(), scenario.phases[0].region);
    println!("episode region {:?}", scenario.phases[1].region);

    for strategy in [PruneStrategy::Topk, PruneStrategy::Diversity, PruneStrategy::Random] {
        let mut engine = EngineConfig::default();
        engine.prune.strategy = strategy;
        let state = run_prefill(&scenario, &engine)?;
        let kept = scenario.phases[0].region.iter().filter(|t| state.pruned().contains(t)).count();
        println!("{strategy:>9}: k = {}, keeps {kept}/8 of the base region", state.k());
    }

    let engine = EngineConfig::default();
    let state = run_prefill(&scenario, &engine)?;
    for (name, cfg) in [("static", engine.base_pruning()), ("swap", engine)] {
        let trace = run_decode(&scenario, &state, &cfg)?;
        let ok = judge_success(&scenario, &trace, cfg.coverage)?;
        let fired: Vec<usize> = trace.records.iter().filter(|r| r.triggered).map(|r| r.step).collect();
        println!("{name:>6}: triggers at {fired:?}, solved {ok}, mean active {:.3}", trace.summary.mean_active_ratio);
        if name == "swap" {
            for r in &trace.records[21..36] {
                let s = r.similarity.map(|s| format!("{s:.3}")).unwrap_or_else(|| "  -  ".into());
                println!("  step {:>2}  s {s}  k* {:>3}  window {:>2}", r.step, r.k_star, r.window_remaining);
            }
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> swapprune::Result<()> {
    run_example()
}
