//! Commands behind the `swapprune` binary, usable directly from code.
//!
//! Every command that writes files builds its output in `<out>.partial` and
//! renames it to `<out>` only once everything is written; on failure the
//! staging directory is removed. Each output directory carries a
//! `manifest.json` echoing the command, seeds and config.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analytics::{decoding_flops, prefill_flops, to_tflops, BatchReport, CostParams};
use crate::config::{Axis, ExperimentConfig};
use crate::detect::{calibrate_random_rate_batch, Detector};
use crate::engine::{run_batch, success_rate, DecodeTrace, EngineConfig, RunSpec, SampleRow, TRACE_FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::swap::SwapStrategy;
use crate::trace::{read_trace, write_trace};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub format_version: u32,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ExperimentConfig>,
    pub files: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<ManifestSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSample {
    pub file: String,
    pub scenario: String,
    pub seed: u64,
    pub success: bool,
    pub vanilla_success: bool,
    pub triggers: usize,
    pub mean_active_ratio: f64,
}

/// Output directory under construction.
struct Staging {
    tmp: PathBuf,
    dest: PathBuf,
    done: bool,
}

impl Staging {
    fn new(dest: &Path) -> Result<Self> {
        if dest.exists() {
            let ours = dest.join(MANIFEST).is_file();
            let empty = fs::read_dir(dest).map_err(|e| Error::io(dest, e))?.next().is_none();
            if !(ours || empty) {
                return Err(Error::config(
                    "out",
                    format!("{} exists and holds no {MANIFEST}; refusing to replace it", dest.display()),
                ));
            }
        }
        let mut name = dest.file_name().map(|n| n.to_os_string()).unwrap_or_else(|| "out".into());
        name.push(".partial");
        let tmp = dest.with_file_name(name);
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        }
        fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        Ok(Self { tmp, dest: dest.to_path_buf(), done: false })
    }

    fn path(&self, file: &str) -> PathBuf {
        self.tmp.join(file)
    }

    fn commit(mut self, manifest: &Manifest) -> Result<PathBuf> {
        let m = self.path(MANIFEST);
        let text = serde_json::to_string_pretty(manifest)?;
        fs::write(&m, text + "\n").map_err(|e| Error::io(&m, e))?;
        if self.dest.exists() {
            fs::remove_dir_all(&self.dest).map_err(|e| Error::io(&self.dest, e))?;
        }
        fs::rename(&self.tmp, &self.dest).map_err(|e| Error::io(&self.dest, e))?;
        self.done = true;
        Ok(self.dest.clone())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.done {
            let _ = fs::remove_dir_all(&self.tmp);
        }
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn specs_for(cfg: &ExperimentConfig, engine: Option<EngineConfig>) -> Vec<RunSpec> {
    cfg.scenario_list()
        .into_iter()
        .map(|s| RunSpec { label: s.name.clone(), scenario: s, engine, record_full_attention: false })
        .collect()
}

/// Pooled statistics over every sample of a batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pooled {
    pub samples: usize,
    pub success_rate: Option<f64>,
    pub vanilla_rate: f64,
    pub mean_triggers: f64,
    pub mean_active_ratio: f64,
}

impl Pooled {
    pub fn of(rows: &[SampleRow]) -> Self {
        let n = rows.len().max(1) as f64;
        Self {
            samples: rows.len(),
            success_rate: success_rate(rows.iter().map(|r| (r.success, r.vanilla_success))),
            vanilla_rate: rows.iter().filter(|r| r.vanilla_success).count() as f64 / n,
            mean_triggers: rows.iter().map(|r| r.triggers as f64).sum::<f64>() / n,
            mean_active_ratio: rows.iter().map(|r| r.mean_active_ratio).sum::<f64>() / n,
        }
    }
}

pub struct SimulateOutput {
    pub dir: PathBuf,
    pub traces: Vec<DecodeTrace>,
    pub rows: Vec<SampleRow>,
}

/// Run the configured engine on every scenario and seed, one trace file per sample.
pub fn cmd_simulate(cfg: &ExperimentConfig, seed: Option<u64>, out: &Path) -> Result<SimulateOutput> {
    cfg.validate()?;
    let seeds = cfg.seeds(seed);
    let batch = run_batch(&specs_for(cfg, Some(cfg.engine)), &seeds)?;
    let stage = Staging::new(out)?;
    let mut samples = Vec::with_capacity(batch.rows.len());
    for (row, trace) in batch.rows.iter().zip(&batch.traces) {
        let file = format!("{}-{:06}.jsonl", row.label, row.seed);
        write_trace(&stage.path(&file), trace)?;
        samples.push(ManifestSample {
            file,
            scenario: row.label.clone(),
            seed: row.seed,
            success: row.success,
            vanilla_success: row.vanilla_success,
            triggers: row.triggers,
            mean_active_ratio: row.mean_active_ratio,
        });
    }
    let manifest = Manifest {
        command: "simulate".into(),
        format_version: TRACE_FORMAT_VERSION,
        seeds,
        config: Some(cfg.clone()),
        files: samples.iter().map(|s| s.file.clone()).collect(),
        samples,
    };
    let dir = stage.commit(&manifest)?;
    Ok(SimulateOutput { dir, traces: batch.traces, rows: batch.rows })
}

/// Read every trace matching `pattern` and write the diagnostic tables to `out`.
pub fn cmd_analyze(pattern: &str, tau: f64, length_edges: Option<&[usize]>, out: &Path) -> Result<BatchReport> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::config("tau", "must lie in [0, 1]"));
    }
    let paths = glob::glob(pattern).map_err(|e| Error::config("traces", e.to_string()))?;
    let mut files = Vec::new();
    for p in paths {
        let p = p.map_err(|e| {
            let path = e.path().to_path_buf();
            Error::io(path, e.into())
        })?;
        if p.is_file() {
            files.push(p);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::NoMatches(pattern.to_string()));
    }
    let traces = files.iter().map(|p| read_trace(p)).collect::<Result<Vec<_>>>()?;
    let report = BatchReport::build(&traces, tau, length_edges)?;
    let stage = Staging::new(out)?;
    let written = report.write_csv(&stage.tmp)?;
    let mut seeds: Vec<u64> = traces.iter().map(|t| t.header.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    stage.commit(&Manifest {
        command: format!("analyze {pattern} tau={tau}"),
        format_version: TRACE_FORMAT_VERSION,
        seeds,
        config: None,
        files: written.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect(),
        samples: Vec::new(),
    })?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub samples: usize,
    pub success_rate: Option<f64>,
    pub vanilla_rate: f64,
    pub mean_triggers: f64,
    pub mean_active_ratio: f64,
}

/// One pooled row per value, in the order given.
pub fn sweep_rows(cfg: &ExperimentConfig, axis: Axis, values: &[f64], seed: Option<u64>) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    if values.is_empty() {
        return Err(Error::config("values", "no values to sweep"));
    }
    let seeds = cfg.seeds(seed);
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut engine = cfg.engine;
        axis.apply(&mut engine, value)?;
        let batch = run_batch(&specs_for(cfg, Some(engine)), &seeds)?;
        let p = Pooled::of(&batch.rows);
        rows.push(SweepRow {
            axis: axis.to_string(),
            value,
            samples: p.samples,
            success_rate: p.success_rate,
            vanilla_rate: p.vanilla_rate,
            mean_triggers: p.mean_triggers,
            mean_active_ratio: p.mean_active_ratio,
        });
    }
    Ok(rows)
}

/// Sweep one axis and write `sweep_<axis>.csv`.
pub fn cmd_sweep(cfg: &ExperimentConfig, axis: Axis, values: &[f64], seed: Option<u64>, out: &Path) -> Result<Vec<SweepRow>> {
    let rows = sweep_rows(cfg, axis, values, seed)?;
    let stage = Staging::new(out)?;
    let file = format!("sweep_{axis}.csv");
    write_rows(&stage.path(&file), &rows)?;
    stage.commit(&Manifest {
        command: format!("sweep {axis}"),
        format_version: TRACE_FORMAT_VERSION,
        seeds: cfg.seeds(seed),
        config: Some(cfg.clone()),
        files: vec![file],
        samples: Vec::new(),
    })?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub method: String,
    pub detector: String,
    pub strategy: String,
    pub samples: usize,
    pub success_rate: Option<f64>,
    pub mean_active_ratio: f64,
    pub mean_triggers: f64,
    /// Trigger probability of the random detector, calibrated on the risd/cpts cell.
    pub random_rate: Option<f64>,
}

impl AblationRow {
    fn new(method: String, detector: &str, strategy: &str, p: Pooled, random_rate: Option<f64>) -> Self {
        Self {
            method,
            detector: detector.into(),
            strategy: strategy.into(),
            samples: p.samples,
            success_rate: p.success_rate,
            mean_active_ratio: p.mean_active_ratio,
            mean_triggers: p.mean_triggers,
            random_rate,
        }
    }
}

/// Vanilla and static-pruning rows, then every detector × swap strategy cell.
///
/// The random detector fires at the pooled trigger rate of the risd/cpts cell.
pub fn ablation_rows(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<Vec<AblationRow>> {
    cfg.validate()?;
    let seeds = cfg.seeds(seed);
    let run = |engine: Option<EngineConfig>| run_batch(&specs_for(cfg, engine), &seeds);

    let mut rows = vec![
        AblationRow::new("vanilla".into(), "none", "none", Pooled::of(&run(None)?.rows), None),
        AblationRow::new("base".into(), "none", "none", Pooled::of(&run(Some(cfg.engine.base_pruning()))?.rows), None),
    ];
    let mut rate = None;
    for detector in [Detector::Risd, Detector::Avg, Detector::Random] {
        for strategy in SwapStrategy::ALL {
            let mut e = cfg.engine;
            e.detect.detector = detector;
            e.swap.strategy = strategy;
            if detector == Detector::Random {
                e.detect.random_rate = rate.ok_or(Error::NoEligibleSteps)?;
            }
            let batch = run(Some(e))?;
            if detector == Detector::Risd && strategy == SwapStrategy::Cpts {
                rate = Some(calibrate_random_rate_batch(&batch.traces)?);
            }
            let r = (detector == Detector::Random).then_some(e.detect.random_rate);
            rows.push(AblationRow::new(format!("{detector}/{strategy}"), detector.as_str(), strategy.as_str(), Pooled::of(&batch.rows), r));
        }
    }
    Ok(rows)
}

/// Run the ablation matrix and write `ablation.csv`.
pub fn cmd_ablate(cfg: &ExperimentConfig, seed: Option<u64>, out: &Path) -> Result<Vec<AblationRow>> {
    let rows = ablation_rows(cfg, seed)?;
    let stage = Staging::new(out)?;
    write_rows(&stage.path("ablation.csv"), &rows)?;
    stage.commit(&Manifest {
        command: "ablate".into(),
        format_version: TRACE_FORMAT_VERSION,
        seeds: cfg.seeds(seed),
        config: Some(cfg.clone()),
        files: vec!["ablation.csv".into()],
        samples: Vec::new(),
    })?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub params: CostParams,
    pub prefill: u128,
    pub decoding: u128,
    pub total: u128,
}

impl CostReport {
    pub fn table(&self) -> String {
        let mut s = format!("{:<10} {:>28} {:>12}\n", "stage", "flops", "tflops");
        for (name, v) in [("prefill", self.prefill), ("decoding", self.decoding), ("total", self.total)] {
            s += &format!("{name:<10} {v:>28} {:>12.4}\n", to_tflops(v));
        }
        s
    }
}

pub fn cmd_cost(params: CostParams) -> Result<CostReport> {
    params.validate()?;
    let prefill = prefill_flops(&params);
    let decoding = decoding_flops(&params);
    Ok(CostReport { params, prefill, decoding, total: prefill + decoding })
}
