// Config file in, trace files out, CSV tables back.
//
// Same steps as `swapprune simulate` followed by `swapprune analyze`.
//
// ```text
// cargo run --example trace_files
// ```

use swapprune::config::ExperimentConfig;
use swapprune::experiment::{cmd_analyze, cmd_simulate};
use swapprune::trace::read_trace;

pub fn run_example() -> swapprune::Result<()> {
    let cfg = ExperimentConfig::from_toml_str(include_str!("experiment.toml"))?;
    let dir = std::env::temp_dir().join(format!("swapprune-example-{}", std::process::id()));
    let sim = cmd_simulate(&cfg, None, &dir.join("traces"))?;
    println!("wrote {} traces to {}", sim.traces.len(), sim.dir.display());

    let first = sim.dir.join("long-episodes-000000.jsonl");
    let back = read_trace(&first)?;
    assert_eq!(back, sim.traces[16]);
    println!("{} round-trips exactly", first.display());

    let pattern = format!("{}/*.jsonl", sim.dir.display());
    let report = cmd_analyze(&pattern, cfg.analysis.tau, None, &dir.join("report"))?;
    println!("events 0/1/2/3+ {:?}, success by bin {:?}", report.rvis_histogram, report.success_by_rvis);
    for f in std::fs::read_dir(dir.join("report")).map_err(|e| swapprune::Error::Io { path: dir.clone(), source: e })? {
        let f = f.map_err(|e| swapprune::Error::Io { path: dir.clone(), source: e })?;
        println!("  {}", f.file_name().to_string_lossy());
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}

#[allow(dead_code)]
fn main() -> swapprune::Result<()> {
    run_example()
}
