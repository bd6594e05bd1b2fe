use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use swapprune::analytics::CostParams;
use swapprune::config::{default_out_dir, Axis, ExperimentConfig};
use swapprune::experiment::{cmd_ablate, cmd_analyze, cmd_cost, cmd_simulate, cmd_sweep};
use swapprune::Error;

/// Decoding-time visual token pruning simulator.
///
/// Output directories default to $SWAPPRUNE_OUT_DIR, else ./swapprune-out.
/// Exit status: 0 ok, 1 invalid input, 2 runtime failure.
#[derive(Parser)]
#[command(name = "swapprune", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a seeded batch and write one JSONL trace per sample.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// First seed; overrides the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Diagnostic tables (CSV) over a set of trace files.
    Analyze {
        /// Glob such as 'out/traces/*.jsonl'.
        traces: String,
        #[arg(long, default_value_t = 0.7)]
        tau: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated step-count bucket edges.
        #[arg(long, value_delimiter = ',')]
        length_edges: Option<Vec<usize>>,
    },
    /// Vary one engine parameter: tau, L, k_dec or ratio.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to every [[sweep]] entry of the config.
        #[arg(long, requires = "values")]
        axis: Option<String>,
        #[arg(long, value_delimiter = ',', requires = "axis")]
        values: Option<Vec<f64>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Detector x swap-strategy matrix plus vanilla and static pruning rows.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prefill and decoding FLOPs of a decoder-only transformer.
    Cost {
        #[arg(long, default_value_t = 36)]
        layers: u64,
        #[arg(long, default_value_t = 2560)]
        hidden: u64,
        #[arg(long, default_value_t = 9728)]
        intermediate: u64,
        #[arg(long, default_value_t = 576)]
        tokens: u64,
        #[arg(long, default_value_t = 1000)]
        gen: u64,
    },
}

fn out_or(out: Option<PathBuf>, cfg: Option<&ExperimentConfig>, sub: &str) -> PathBuf {
    out.unwrap_or_else(|| cfg.map(|c| c.out_dir()).unwrap_or_else(default_out_dir).join(sub))
}

fn fmt_rate(r: Option<f64>) -> String {
    r.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.cmd {
        Cmd::Simulate { config, seed, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out_or(out, Some(&cfg), "traces");
            let res = cmd_simulate(&cfg, seed, &out)?;
            let trig: usize = res.rows.iter().map(|r| r.triggers).sum();
            let ok = res.rows.iter().filter(|r| r.success).count();
            println!("{} traces -> {}", res.traces.len(), res.dir.display());
            println!("solved {ok}/{}  triggers {trig}", res.rows.len());
        }
        Cmd::Analyze { traces, tau, out, length_edges } => {
            let out = out_or(out, None, "report");
            let r = cmd_analyze(&traces, tau, length_edges.as_deref(), &out)?;
            println!("{} traces, tau {tau} -> {}", r.traces, out.display());
            println!("events 0/1/2/3+: {:?}", r.rvis_histogram);
            let by: Vec<String> = r.success_by_rvis.iter().map(|&x| fmt_rate(x)).collect();
            println!("success by events: {}", by.join(" "));
            println!("temporal: {:?}", r.temporal);
            println!(
                "entropy {}  pairwise diversity {}  active ratio {:.3}",
                fmt_rate(r.mean_entropy),
                fmt_rate(r.mean_pairwise_diversity),
                r.mean_active_ratio
            );
        }
        Cmd::Sweep { config, axis, values, seed, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let axes: Vec<(Axis, Vec<f64>)> = match (axis, values) {
                (Some(a), Some(v)) => vec![(a.parse()?, v)],
                _ => cfg.sweep.iter().map(|s| (s.axis, s.values.clone())).collect(),
            };
            if axes.is_empty() {
                return Err(Error::InvalidConfig {
                    field: "sweep".into(),
                    reason: "give --axis and --values or a [[sweep]] entry".into(),
                });
            }
            for (axis, values) in axes {
                let dir = out_or(out.clone(), Some(&cfg), "sweep").join(axis.as_str());
                let rows = cmd_sweep(&cfg, axis, &values, seed, &dir)?;
                println!("{axis:>8} {:>8} {:>9} {:>8}", "success", "triggers", "active");
                for r in rows {
                    println!("{:>8} {:>8} {:>9.2} {:>8.3}", r.value, fmt_rate(r.success_rate), r.mean_triggers, r.mean_active_ratio);
                }
                println!("-> {}", dir.display());
            }
        }
        Cmd::Ablate { config, seed, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out_or(out, Some(&cfg), "ablate");
            let rows = cmd_ablate(&cfg, seed, &out)?;
            println!("{:<14} {:>8} {:>8}", "method", "success", "active");
            for r in rows {
                println!("{:<14} {:>8} {:>8.3}", r.method, fmt_rate(r.success_rate), r.mean_active_ratio);
            }
            println!("-> {}", out.display());
        }
        Cmd::Cost { layers, hidden, intermediate, tokens, gen } => {
            let r = cmd_cost(CostParams { layers, hidden, intermediate, input_tokens: tokens, generated: gen })?;
            print!("{}", r.table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
