//! The decode loop: prefill, per-step monitoring, swap, countdown, and trace
//! recording. Also runs the full-token baseline and seeded batches.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{detect_shift, detect_shift_avg, similarity_to_anchor, Detector, RandomTrigger, RisdConfig};
use crate::error::{Error, Result};
use crate::kernel::{cosine_similarity, AttentionWeights};
use crate::prefill::{Budget, PruneState, PruneStrategy};
use crate::scenario::{build_scenario, covers_evidence, judge_success, Regime, Scenario, ScenarioConfig};
use crate::swap::{retrigger_policy, swap_for_query, tick_and_maybe_expire, ActiveSet, SwapConfig, Window};

pub const TRACE_FORMAT_VERSION: u32 = 1;

fn default_coverage() -> f64 {
    0.5
}

fn default_prune_strategy() -> PruneStrategy {
    PruneStrategy::Topk
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneConfig {
    #[serde(default = "default_prune_strategy")]
    pub strategy: PruneStrategy,
    /// Absolute budget. Exactly one of `k` and `ratio` must be set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            strategy: PruneStrategy::Topk,
            k: None,
            ratio: Some(1.0 / 3.0),
        }
    }
}

impl PruneConfig {
    pub fn budget(&self) -> Result<Budget> {
        match (self.k, self.ratio) {
            (Some(k), None) => Ok(Budget::Count(k)),
            (None, Some(r)) => Ok(Budget::Ratio(r)),
            _ => Err(Error::config("prune", "set exactly one of `k` and `ratio`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    #[serde(default)]
    pub prune: PruneConfig,
    #[serde(default)]
    pub detect: RisdConfig,
    #[serde(default)]
    pub swap: SwapConfig,
    /// Share of a region that must stay visible for a run to count as solved.
    #[serde(default = "default_coverage")]
    pub coverage: f64,
    /// Store the full oracle attention in every step record.
    #[serde(default)]
    pub record_full_attention: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            prune: PruneConfig::default(),
            detect: RisdConfig::default(),
            swap: SwapConfig::default(),
            coverage: default_coverage(),
            record_full_attention: false,
        }
    }
}

impl EngineConfig {
    /// The static pruning baseline: same prefill, monitoring without swaps.
    pub fn base_pruning(&self) -> Self {
        let mut c = *self;
        c.detect.detector = Detector::None;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.prune.budget()?;
        self.detect.validate()?;
        if !(self.coverage > 0.0 && self.coverage <= 1.0) {
            return Err(Error::config("coverage", "must lie in (0, 1]"));
        }
        if self.swap.k_dec == Some(0) {
            return Err(Error::config("swap.k_dec", "must be positive"));
        }
        Ok(())
    }
}

/// Per-step state of the decode loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Retained-set similarity to the anchor; absent on unmonitored steps.
    pub similarity: Option<f64>,
    /// Similarity of the full oracle attention to the full prefill attention.
    pub full_similarity: f64,
    pub active: Vec<usize>,
    pub merged: bool,
    pub k_star: usize,
    pub triggered: bool,
    pub window_remaining: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Vanilla,
    Pruned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format_version: u32,
    pub scenario: ScenarioConfig,
    pub seed: u64,
    pub regime: Regime,
    pub n_visual: usize,
    pub total_steps: usize,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine: Option<EngineConfig>,
    pub k: usize,
    /// Active set at step 0.
    pub prefill: Vec<usize>,
    /// Full attention at step 0, when snapshots are recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_attention: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub trigger_count: usize,
    pub eligible_steps: usize,
    pub mean_active_ratio: f64,
    pub success: Option<bool>,
    pub vanilla_success: Option<bool>,
}

/// One decode run: header, records for steps `1..total_steps`, summary.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeTrace {
    pub header: TraceHeader,
    pub records: Vec<StepRecord>,
    pub summary: TraceSummary,
}

impl DecodeTrace {
    /// Active token ids at `step`; step 0 is the prefill set.
    pub fn active_at(&self, step: usize) -> &[usize] {
        if step == 0 {
            &self.header.prefill
        } else {
            &self.records[step - 1].active
        }
    }

    pub fn trigger_count(&self) -> usize {
        self.records.iter().filter(|r| r.triggered).count()
    }

    pub fn eligible_steps(&self) -> usize {
        self.records.iter().filter(|r| r.similarity.is_some()).count()
    }

    pub fn k_star_ratios(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.header.n_visual as f64;
        self.records.iter().map(move |r| r.k_star as f64 / n)
    }

    pub fn success(&self) -> Option<bool> {
        self.summary.success
    }

    /// The full-attention similarity series, one value per decode step.
    pub fn full_similarity_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.full_similarity).collect()
    }

    fn finish(header: TraceHeader, records: Vec<StepRecord>) -> Self {
        let n = header.n_visual as f64;
        let mean_active_ratio = if records.is_empty() {
            header.prefill.len() as f64 / n
        } else {
            records.iter().map(|r| r.k_star as f64 / n).sum::<f64>() / records.len() as f64
        };
        let summary = TraceSummary {
            trigger_count: records.iter().filter(|r| r.triggered).count(),
            eligible_steps: records.iter().filter(|r| r.similarity.is_some()).count(),
            mean_active_ratio,
            success: None,
            vanilla_success: None,
        };
        Self { header, records, summary }
    }
}

/// Prefill stage on the step-0 query.
pub fn run_prefill(scenario: &Scenario, config: &EngineConfig) -> Result<PruneState> {
    config.validate()?;
    let k = config.prune.budget()?.resolve(scenario.n_visual())?;
    let q0 = scenario.query_at(0)?;
    config.prune.strategy.prune(&scenario.bank, &q0.query, k, scenario.seed)
}

/// Decode loop for steps `1..total_steps`.
///
/// While no window is open the retained-set attention is compared with the
/// anchor and the detector runs; a trigger re-scores the bank and opens a
/// window of `swap.duration` steps. While a window is open monitoring is
/// suspended and the countdown ticks.
pub fn run_decode(scenario: &Scenario, state: &PruneState, config: &EngineConfig) -> Result<DecodeTrace> {
    config.validate()?;
    let bank = &scenario.bank;
    if state.n_visual() != bank.len() {
        return Err(Error::TraceMismatch("prune state does not match the bank".into()));
    }
    config.swap.resolve_k_dec(state.k(), bank.len())?;
    let anchor_full = state.anchor_full().weights().to_vec();
    let all_ids = bank.all_ids();
    let mut active = ActiveSet::prefill(state);
    let mut window = Window::default();
    let mut history: Vec<f64> = Vec::new();
    let mut random = RandomTrigger::new(scenario.seed, config.detect.random_rate);
    let mut records = Vec::with_capacity(scenario.total_steps.saturating_sub(1));

    for step in 1..scenario.total_steps {
        let query = scenario.query_at(step)?.query;
        let logits = bank.logits(&query, &all_ids)?;
        let full = AttentionWeights::softmax(&logits, all_ids.clone())?;
        let full_similarity = cosine_similarity(&anchor_full, full.weights())?;

        let mut similarity = None;
        let mut triggered = false;
        if retrigger_policy(&window) {
            // same logits as `pruned_attention`, gathered instead of recomputed
            let kept: Vec<f64> = state.pruned().iter().map(|&i| logits[i]).collect();
            let current = AttentionWeights::softmax(&kept, state.pruned().to_vec())?;
            let s = similarity_to_anchor(state, &current)?;
            triggered = match config.detect.detector {
                Detector::Risd => detect_shift(s, &config.detect),
                Detector::Avg => detect_shift_avg(&history, s),
                Detector::Random => random.detect_shift_random(),
                Detector::None => false,
            };
            history.push(s);
            similarity = Some(s);
            if triggered && config.swap.duration > 0 {
                active = swap_for_query(&query, state, bank, &config.swap)?;
                window = Window::open(config.swap.duration);
            }
        } else {
            active = tick_and_maybe_expire(&mut window, &active, state, bank, &config.swap, &query)?;
        }

        records.push(StepRecord {
            step,
            similarity,
            full_similarity,
            active: active.indices(),
            merged: active.merged().is_some(),
            k_star: active.k_star(),
            triggered,
            window_remaining: window.remaining(),
            attention: config.record_full_attention.then(|| full.weights().to_vec()),
        });
    }

    let header = TraceHeader {
        format_version: TRACE_FORMAT_VERSION,
        scenario: scenario.config.clone(),
        seed: scenario.seed,
        regime: scenario.regime,
        n_visual: bank.len(),
        total_steps: scenario.total_steps,
        method: Method::Pruned,
        engine: Some(*config),
        k: state.k(),
        prefill: state.pruned().to_vec(),
        anchor_attention: config.record_full_attention.then(|| anchor_full.clone()),
    };
    Ok(DecodeTrace::finish(header, records))
}

/// Full-token baseline: every token visible at every step, no monitoring.
pub fn run_vanilla(scenario: &Scenario, record_full_attention: bool) -> Result<DecodeTrace> {
    let bank = &scenario.bank;
    let all = bank.all_ids();
    let anchor = scenario.oracle_attention(0)?;
    let mut records = Vec::with_capacity(scenario.total_steps.saturating_sub(1));
    for step in 1..scenario.total_steps {
        let full = scenario.oracle_attention(step)?;
        records.push(StepRecord {
            step,
            similarity: None,
            full_similarity: cosine_similarity(anchor.weights(), full.weights())?,
            active: all.clone(),
            merged: false,
            k_star: all.len(),
            triggered: false,
            window_remaining: 0,
            attention: record_full_attention.then(|| full.weights().to_vec()),
        });
    }
    let header = TraceHeader {
        format_version: TRACE_FORMAT_VERSION,
        scenario: scenario.config.clone(),
        seed: scenario.seed,
        regime: scenario.regime,
        n_visual: bank.len(),
        total_steps: scenario.total_steps,
        method: Method::Vanilla,
        engine: None,
        k: all.len(),
        prefill: all,
        anchor_attention: record_full_attention.then(|| anchor.weights().to_vec()),
    };
    Ok(DecodeTrace::finish(header, records))
}

/// One arm of a batch: a scenario family and how to decode it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub label: String,
    pub scenario: ScenarioConfig,
    /// `None` runs the full-token baseline.
    pub engine: Option<EngineConfig>,
    /// Keep oracle attention snapshots in the baseline trace.
    pub record_full_attention: bool,
}

impl RunSpec {
    pub fn pruned(label: impl Into<String>, scenario: ScenarioConfig, engine: EngineConfig) -> Self {
        Self { label: label.into(), scenario, engine: Some(engine), record_full_attention: false }
    }

    pub fn vanilla(label: impl Into<String>, scenario: ScenarioConfig) -> Self {
        Self { label: label.into(), scenario, engine: None, record_full_attention: false }
    }

    pub fn with_attention(mut self) -> Self {
        self.record_full_attention = true;
        if let Some(e) = &mut self.engine {
            e.record_full_attention = true;
        }
        self
    }

    pub fn strategy_name(&self) -> &'static str {
        match &self.engine {
            None => "vanilla",
            Some(e) if e.detect.detector == Detector::None => "base",
            Some(e) => e.swap.strategy.as_str(),
        }
    }

    pub fn detector_name(&self) -> &'static str {
        match &self.engine {
            None => "none",
            Some(e) => e.detect.detector.as_str(),
        }
    }
}

/// Build, prefill, decode and judge one sample.
pub fn run_sample(spec: &RunSpec, seed: u64) -> Result<DecodeTrace> {
    let scenario = build_scenario(&spec.scenario, seed)?;
    let coverage = spec.engine.map_or(default_coverage(), |e| e.coverage);
    // every token is visible to the baseline, so only its active sets matter here
    let all = scenario.bank.all_ids();
    let vanilla_success = covers_evidence(&scenario, |_| &all, coverage);
    let mut trace = match &spec.engine {
        None => {
            let t = run_vanilla(&scenario, spec.record_full_attention)?;
            debug_assert_eq!(judge_success(&scenario, &t, coverage)?, vanilla_success);
            t
        }
        Some(cfg) => {
            let state = run_prefill(&scenario, cfg)?;
            let mut t = run_decode(&scenario, &state, cfg)?;
            t.summary.success = Some(judge_success(&scenario, &t, cfg.coverage)?);
            t
        }
    };
    if trace.summary.success.is_none() {
        trace.summary.success = Some(vanilla_success);
    }
    trace.summary.vanilla_success = Some(vanilla_success);
    Ok(trace)
}

/// One row per (spec, seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub label: String,
    pub strategy: String,
    pub detector: String,
    pub regime: Regime,
    pub seed: u64,
    pub success: bool,
    pub vanilla_success: bool,
    pub triggers: usize,
    pub eligible_steps: usize,
    pub mean_active_ratio: f64,
}

/// Aggregate over seeds for one (label, strategy, detector, regime) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub label: String,
    pub strategy: String,
    pub detector: String,
    pub regime: Regime,
    pub samples: usize,
    /// Share of vanilla-solved samples also solved here; absent when vanilla solves none.
    pub success_rate: Option<f64>,
    pub vanilla_rate: f64,
    pub mean_triggers: f64,
    pub mean_active_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    /// Spec-major, seed-minor order.
    pub traces: Vec<DecodeTrace>,
    pub rows: Vec<SampleRow>,
    pub aggregates: Vec<AggregateRow>,
}

impl BatchResult {
    pub fn aggregate(&self, label: &str) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| a.label == label)
    }

    /// Traces of one spec label, in seed order.
    pub fn traces_for<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a DecodeTrace> + 'a {
        self.rows.iter().zip(&self.traces).filter(move |(r, _)| r.label == label).map(|(_, t)| t)
    }
}

/// `|pruned ∧ vanilla| / |vanilla|` over (pruned, vanilla) outcome pairs.
pub fn success_rate(outcomes: impl IntoIterator<Item = (bool, bool)>) -> Option<f64> {
    let (mut both, mut base) = (0usize, 0usize);
    for (p, v) in outcomes {
        if v {
            base += 1;
            both += p as usize;
        }
    }
    (base > 0).then(|| both as f64 / base as f64)
}

/// Run every spec on every seed. Work is spread over the rayon pool but the
/// output order and contents do not depend on the number of workers.
pub fn run_batch(specs: &[RunSpec], seeds: &[u64]) -> Result<BatchResult> {
    for s in specs {
        s.scenario.validate()?;
        if let Some(e) = &s.engine {
            e.validate()?;
        }
    }
    let jobs: Vec<(usize, u64)> = specs
        .iter()
        .enumerate()
        .flat_map(|(i, _)| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let traces: Vec<DecodeTrace> = jobs
        .par_iter()
        .map(|&(i, seed)| run_sample(&specs[i], seed))
        .collect::<Result<_>>()?;

    let rows: Vec<SampleRow> = jobs
        .iter()
        .zip(&traces)
        .map(|(&(i, seed), t)| SampleRow {
            label: specs[i].label.clone(),
            strategy: specs[i].strategy_name().to_string(),
            detector: specs[i].detector_name().to_string(),
            regime: t.header.regime,
            seed,
            success: t.summary.success.unwrap_or(false),
            vanilla_success: t.summary.vanilla_success.unwrap_or(false),
            triggers: t.summary.trigger_count,
            eligible_steps: t.summary.eligible_steps,
            mean_active_ratio: t.summary.mean_active_ratio,
        })
        .collect();

    let mut groups: BTreeMap<(usize, Regime), Vec<&SampleRow>> = BTreeMap::new();
    for (&(i, _), row) in jobs.iter().zip(&rows) {
        groups.entry((i, row.regime)).or_default().push(row);
    }
    let aggregates = groups
        .into_iter()
        .map(|((i, regime), rs)| {
            let n = rs.len() as f64;
            AggregateRow {
                label: specs[i].label.clone(),
                strategy: specs[i].strategy_name().to_string(),
                detector: specs[i].detector_name().to_string(),
                regime,
                samples: rs.len(),
                success_rate: success_rate(rs.iter().map(|r| (r.success, r.vanilla_success))),
                vanilla_rate: rs.iter().filter(|r| r.vanilla_success).count() as f64 / n,
                mean_triggers: rs.iter().map(|r| r.triggers as f64).sum::<f64>() / n,
                mean_active_ratio: rs.iter().map(|r| r.mean_active_ratio).sum::<f64>() / n,
            }
        })
        .collect();
    Ok(BatchResult { traces, rows, aggregates })
}
