//! Diagnostics over batches of decode traces.
//!
//! Shift events here are offline events: local minima below `tau` of the
//! full-attention similarity series (every token, oracle attention vs the
//! prefill attention). That series exists for every trace regardless of the
//! decoding method, so a sample has the same event count under vanilla,
//! static pruning and swapping.

pub mod cost;
mod report;

pub use cost::{decoding_flops, decoding_flops_summed, prefill_flops, solve_input_tokens, to_tflops, CostParams};
pub use report::{BatchReport, LengthBin};

use crate::detect::{count_rvis_events, ShiftEvent};
use crate::engine::DecodeTrace;
use crate::error::{Error, Result};
use crate::kernel::{cosine_similarity, entropy_of};

/// Event-count bins: 0, 1, 2 and 3 or more.
pub const RVIS_BINS: usize = 4;
pub const TEMPORAL_BINS: usize = 10;

pub fn rvis_bin(count: usize) -> usize {
    count.min(RVIS_BINS - 1)
}

/// `(step, s_l)` per decode step; `None` where monitoring was suspended.
pub fn similarity_trajectory(trace: &DecodeTrace) -> Vec<(usize, Option<f64>)> {
    trace.records.iter().map(|r| (r.step, r.similarity)).collect()
}

/// Offline events of one trace, with decode step numbers.
pub fn trace_events(trace: &DecodeTrace, tau: f64) -> Result<Vec<ShiftEvent>> {
    if trace.records.is_empty() {
        return Ok(Vec::new());
    }
    let mut events = count_rvis_events(&trace.full_similarity_series(), tau)?;
    for e in &mut events {
        e.step = trace.records[e.step].step;
    }
    Ok(events)
}

pub fn event_counts(traces: &[DecodeTrace], tau: f64) -> Result<Vec<usize>> {
    traces.iter().map(|t| trace_events(t, tau).map(|e| e.len())).collect()
}

/// Share of traces whose full-attention similarity never drops below each threshold.
pub fn retention_above_threshold(traces: &[DecodeTrace], thresholds: &[f64]) -> Result<Vec<f64>> {
    if traces.is_empty() {
        return Err(Error::Empty("trace batch"));
    }
    let minima: Vec<f64> = traces
        .iter()
        .map(|t| t.records.iter().map(|r| r.full_similarity).fold(f64::INFINITY, f64::min))
        .collect();
    Ok(thresholds
        .iter()
        .map(|&th| minima.iter().filter(|&&m| m >= th).count() as f64 / minima.len() as f64)
        .collect())
}

/// Mean event count per `total_steps` bucket. Buckets are `[edges[i], edges[i+1])`,
/// the last one closed. Empty buckets are `None`.
pub fn rvis_by_length_bins(traces: &[DecodeTrace], edges: &[usize], tau: f64) -> Result<Vec<Option<f64>>> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("length_edges", "need at least two strictly increasing edges"));
    }
    let counts = event_counts(traces, tau)?;
    let nb = edges.len() - 1;
    let mut sums = vec![(0usize, 0usize); nb];
    for (t, c) in traces.iter().zip(counts) {
        let len = t.header.total_steps;
        let last = nb - 1;
        let bin = (0..nb).find(|&b| len >= edges[b] && (len < edges[b + 1] || (b == last && len == edges[b + 1])));
        if let Some(b) = bin {
            sums[b].0 += c;
            sums[b].1 += 1;
        }
    }
    Ok(sums.into_iter().map(|(s, n)| (n > 0).then(|| s as f64 / n as f64)).collect())
}

/// Histogram of per-trace event counts over {0, 1, 2, 3+}.
pub fn rvis_distribution(traces: &[DecodeTrace], tau: f64) -> Result<[usize; RVIS_BINS]> {
    Ok(histogram_of_counts(&event_counts(traces, tau)?))
}

pub fn histogram_of_counts(counts: &[usize]) -> [usize; RVIS_BINS] {
    let mut h = [0; RVIS_BINS];
    for &c in counts {
        h[rvis_bin(c)] += 1;
    }
    h
}

/// Per event-count bin, `|pruned ∧ vanilla| / |vanilla|`; `None` where vanilla solves nothing.
pub fn success_rate_by_counts(counts: &[usize], pruned: &[bool], vanilla: &[bool]) -> Result<[Option<f64>; RVIS_BINS]> {
    if counts.len() != pruned.len() || counts.len() != vanilla.len() {
        return Err(Error::DimensionMismatch { expected: counts.len(), got: pruned.len().min(vanilla.len()) });
    }
    let mut both = [0usize; RVIS_BINS];
    let mut base = [0usize; RVIS_BINS];
    for ((&c, &p), &v) in counts.iter().zip(pruned).zip(vanilla) {
        if v {
            base[rvis_bin(c)] += 1;
            both[rvis_bin(c)] += p as usize;
        }
    }
    Ok(std::array::from_fn(|b| (base[b] > 0).then(|| both[b] as f64 / base[b] as f64)))
}

/// [`success_rate_by_counts`] using the success flags stored in each trace summary.
pub fn success_rate_by_rvis(traces: &[DecodeTrace], tau: f64) -> Result<[Option<f64>; RVIS_BINS]> {
    let counts = event_counts(traces, tau)?;
    let mut pruned = Vec::with_capacity(traces.len());
    let mut vanilla = Vec::with_capacity(traces.len());
    for t in traces {
        match (t.summary.success, t.summary.vanilla_success) {
            (Some(p), Some(v)) => {
                pruned.push(p);
                vanilla.push(v);
            }
            _ => return Err(Error::TraceMismatch(format!("trace for seed {} has not been judged", t.header.seed))),
        }
    }
    success_rate_by_counts(&counts, &pruned, &vanilla)
}

/// Event positions as `step / total_steps` in ten bins, the last one closed.
/// Only traces with at least one event contribute.
pub fn temporal_distribution(traces: &[DecodeTrace], tau: f64) -> Result<[usize; TEMPORAL_BINS]> {
    let mut h = [0; TEMPORAL_BINS];
    for t in traces {
        let total = t.header.total_steps as f64;
        for e in trace_events(t, tau)? {
            let b = ((e.step as f64 / total) * TEMPORAL_BINS as f64).floor() as usize;
            h[b.min(TEMPORAL_BINS - 1)] += 1;
        }
    }
    Ok(h)
}

fn event_attention(trace: &DecodeTrace, tau: f64) -> Result<Vec<&[f64]>> {
    trace_events(trace, tau)?
        .into_iter()
        .map(|e| {
            trace.records[e.step - 1]
                .attention
                .as_deref()
                .ok_or(Error::MissingAttention { step: e.step })
        })
        .collect()
}

/// Mean entropy of the full attention over all event steps in the batch.
pub fn event_spatial_entropy(traces: &[DecodeTrace], tau: f64) -> Result<Option<f64>> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for t in traces {
        for a in event_attention(t, tau)? {
            sum += entropy_of(a);
            n += 1;
        }
    }
    Ok((n > 0).then(|| sum / n as f64))
}

/// Mean over traces with two or more events of the average `1 - cos` between
/// their event-step attention vectors.
pub fn pairwise_diversity(traces: &[DecodeTrace], tau: f64) -> Result<Option<f64>> {
    let mut per_trace = Vec::new();
    for t in traces {
        let vs = event_attention(t, tau)?;
        if vs.len() < 2 {
            continue;
        }
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for i in 0..vs.len() {
            for j in i + 1..vs.len() {
                sum += 1.0 - cosine_similarity(vs[i], vs[j])?;
                pairs += 1;
            }
        }
        per_trace.push(sum / pairs as f64);
    }
    Ok((!per_trace.is_empty()).then(|| per_trace.iter().sum::<f64>() / per_trace.len() as f64))
}

/// Mean of `k_star / n_visual` over decode steps.
pub fn average_active_ratio(trace: &DecodeTrace) -> f64 {
    if trace.records.is_empty() {
        return trace.header.prefill.len() as f64 / trace.header.n_visual as f64;
    }
    trace.k_star_ratios().sum::<f64>() / trace.records.len() as f64
}

#[cfg(test)]
pub(crate) mod fixtures {
    use crate::engine::{DecodeTrace, Method, StepRecord, TraceHeader, TraceSummary, TRACE_FORMAT_VERSION};
    use crate::scenario::{Regime, ScenarioConfig};

    /// A hand-built trace over `n` tokens with the given full-similarity series.
    pub fn trace(series: &[f64], n: usize) -> DecodeTrace {
        let records = series
            .iter()
            .enumerate()
            .map(|(i, &s)| StepRecord {
                step: i + 1,
                similarity: Some(s),
                full_similarity: s,
                active: (0..n).collect(),
                merged: false,
                k_star: n,
                triggered: false,
                window_remaining: 0,
                attention: None,
            })
            .collect();
        DecodeTrace {
            header: TraceHeader {
                format_version: TRACE_FORMAT_VERSION,
                scenario: ScenarioConfig::default(),
                seed: 0,
                regime: Regime::Static,
                n_visual: n,
                total_steps: series.len() + 1,
                method: Method::Vanilla,
                engine: None,
                k: n,
                prefill: (0..n).collect(),
                anchor_attention: None,
            },
            records,
            summary: TraceSummary {
                trigger_count: 0,
                eligible_steps: series.len(),
                mean_active_ratio: 1.0,
                success: Some(true),
                vanilla_success: Some(true),
            },
        }
    }

    /// `count` separate dips below 0.7 in a series of length `len`.
    pub fn with_events(count: usize, len: usize) -> DecodeTrace {
        let mut s = vec![0.95; len];
        for e in 0..count {
            s[1 + 3 * e] = 0.4;
        }
        trace(&s, 4)
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::{trace, with_events};
    use super::*;

    #[test]
    fn trajectory_projects_records() {
        let mut t = trace(&[1.0, 1.0, 1.0], 3);
        t.records[1].similarity = None;
        assert_eq!(similarity_trajectory(&t), vec![(1, Some(1.0)), (2, None), (3, Some(1.0))]);
    }

    #[test]
    fn retention_counts() {
        let batch = vec![
            trace(&[0.9, 0.6, 0.9], 2),
            trace(&[0.9, 0.95, 0.9], 2),
            trace(&[0.5, 0.9, 0.9], 2),
            trace(&[0.8, 0.8, 0.8], 2),
        ];
        assert_eq!(retention_above_threshold(&batch, &[0.0, 0.7, 1.0 + 1e-9]).unwrap(), vec![1.0, 0.5, 0.0]);
        let ones = vec![trace(&[1.0, 1.0], 2)];
        assert_eq!(retention_above_threshold(&ones, &[1.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn length_bins() {
        let batch = vec![with_events(1, 20), with_events(3, 20), with_events(2, 40)];
        let r = rvis_by_length_bins(&batch, &[0, 30, 60, 100], 0.7).unwrap();
        assert_eq!(r, vec![Some(2.0), Some(2.0), None]);
        let one = rvis_by_length_bins(&batch, &[0, 1000], 0.7).unwrap();
        assert_eq!(one, vec![Some(2.0)]);
        assert!(rvis_by_length_bins(&batch, &[5], 0.7).is_err());
    }

    #[test]
    fn distribution_bins() {
        let batch: Vec<_> = [0, 0, 1, 5].iter().map(|&c| with_events(c, 20)).collect();
        assert_eq!(rvis_distribution(&batch, 0.7).unwrap(), [2, 1, 0, 1]);
        let calm = vec![trace(&[1.0; 10], 3); 5];
        assert_eq!(rvis_distribution(&calm, 0.7).unwrap(), [5, 0, 0, 0]);
    }

    #[test]
    fn success_by_bin() {
        let counts = [1, 1, 1, 1, 0, 2];
        let pruned = [true, true, true, false, true, false];
        let vanilla = [true, true, true, true, true, false];
        let r = success_rate_by_counts(&counts, &pruned, &vanilla).unwrap();
        assert_eq!(r, [Some(1.0), Some(0.75), None, None]);
        let never = success_rate_by_counts(&[0, 0], &[false, false], &[true, true]).unwrap();
        assert_eq!(never[0], Some(0.0));
    }

    #[test]
    fn temporal_bins() {
        // 100 steps total: decode steps 1..=99, series index i is step i + 1
        let mut s = vec![0.95; 99];
        s[9] = 0.3; // step 10
        s[89] = 0.3; // step 90
        let t = trace(&s, 2);
        let h = temporal_distribution(&[t], 0.7).unwrap();
        assert_eq!(h[1], 1);
        assert_eq!(h[9], 1);
        assert_eq!(h.iter().sum::<usize>(), 2);

        let mut last = vec![0.95; 99];
        last[98] = 0.3;
        assert_eq!(temporal_distribution(&[trace(&last, 2)], 0.7).unwrap()[9], 1);
    }

    fn with_attention(series: &[f64], att: &[Vec<f64>]) -> DecodeTrace {
        let mut t = trace(series, att[0].len());
        for (r, a) in t.records.iter_mut().zip(att) {
            r.attention = Some(a.clone());
        }
        t
    }

    #[test]
    fn entropy_and_diversity() {
        let u = vec![0.25; 4];
        let one = vec![1.0, 0.0, 0.0, 0.0];
        let other = vec![0.0, 1.0, 0.0, 0.0];
        let series = [0.9, 0.3, 0.9, 0.3, 0.9];
        let t = with_attention(&series, &[u.clone(), one.clone(), u.clone(), other.clone(), u.clone()]);
        assert!(event_spatial_entropy(std::slice::from_ref(&t), 0.7).unwrap().unwrap().abs() < 1e-12);
        assert!((pairwise_diversity(&[t], 0.7).unwrap().unwrap() - 1.0).abs() < 1e-12);

        let t = with_attention(&series, &[u.clone(), u.clone(), one.clone(), one.clone(), u.clone()]);
        let h = event_spatial_entropy(&[t], 0.7).unwrap().unwrap();
        assert!((h - 4f64.ln() / 2.0).abs() < 1e-12);

        let same = with_attention(&series, &[u.clone(), one.clone(), u.clone(), one.clone(), u.clone()]);
        assert!(pairwise_diversity(&[same], 0.7).unwrap().unwrap().abs() < 1e-12);

        // three events with cosines 1/sqrt2, 1/sqrt2, 0
        let a = vec![1.0, 0.0];
        let b = vec![0.5, 0.5];
        let c = vec![0.0, 1.0];
        let hi = vec![0.5, 0.5];
        let t = with_attention(&[0.9, 0.3, 0.9, 0.3, 0.9, 0.3, 0.9], &[hi.clone(), a, hi.clone(), b, hi.clone(), c, hi]);
        let expect = (2.0 * (1.0 - 0.5f64.sqrt()) + 1.0) / 3.0;
        assert!((pairwise_diversity(&[t], 0.7).unwrap().unwrap() - expect).abs() < 1e-12);

        let single = with_attention(&[0.9, 0.3, 0.9], &[u.clone(), u.clone(), u]);
        assert_eq!(pairwise_diversity(&[single], 0.7).unwrap(), None);
        assert!(matches!(event_spatial_entropy(&[with_events(1, 5)], 0.7), Err(Error::MissingAttention { step: 2 })));
    }

    #[test]
    fn active_ratio_of_fixture() {
        let mut t = trace(&[0.9; 4], 12);
        for (r, k) in t.records.iter_mut().zip([4, 8, 8, 4]) {
            r.k_star = k;
        }
        assert!((average_active_ratio(&t) - 0.5).abs() < 1e-12);
    }
}
