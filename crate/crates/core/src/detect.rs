//! Attention-shift detection.
//!
//! Online: at each monitored decode step the attention over the retained keys
//! is compared with the prefill anchor; a cosine similarity below `tau` fires a
//! swap. Offline: shift events in a finished similarity series are the local
//! minima that fall below `tau`, one event per dip.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::DecodeTrace;
use crate::error::{Error, Result};
use crate::kernel::{cosine_similarity, AttentionWeights, Embedding};
use crate::prefill::PruneState;
use crate::scenario::{stream_rng, VisualTokenBank};

const RANDOM_DETECTOR_STREAM: u64 = 3;

/// Which rule decides that attention has shifted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    /// Fixed threshold: fire when `s < tau`.
    Risd,
    /// Fire when `s` drops below the mean of all earlier monitored values.
    Avg,
    /// Fire with a fixed probability per monitored step.
    Random,
    /// Monitor only, never fire. Reproduces the static pruning baseline.
    None,
}

impl Detector {
    pub fn as_str(self) -> &'static str {
        match self {
            Detector::Risd => "risd",
            Detector::Avg => "avg",
            Detector::Random => "random",
            Detector::None => "none",
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "risd" => Ok(Detector::Risd),
            "avg" => Ok(Detector::Avg),
            "random" => Ok(Detector::Random),
            "none" => Ok(Detector::None),
            other => Err(Error::config("detect.detector", format!("unknown detector `{other}`"))),
        }
    }
}

fn default_detector() -> Detector {
    Detector::Risd
}

fn default_tau() -> f64 {
    0.75
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RisdConfig {
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_detector")]
    pub detector: Detector,
    #[serde(default)]
    pub random_rate: f64,
}

impl Default for RisdConfig {
    fn default() -> Self {
        Self {
            tau: default_tau(),
            detector: Detector::Risd,
            random_rate: 0.0,
        }
    }
}

impl RisdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::config("detect.tau", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.random_rate) {
            return Err(Error::config("detect.random_rate", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    OnlineTrigger,
    OfflineEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftEvent {
    pub step: usize,
    pub similarity: f64,
    pub kind: EventKind,
}

/// Attention of `query` over the retained keys only.
pub fn pruned_attention(
    query: &Embedding,
    state: &PruneState,
    bank: &VisualTokenBank,
) -> Result<AttentionWeights> {
    bank.attention(query, state.pruned())
}

/// Cosine similarity between the prefill anchor and the current retained-set attention.
pub fn similarity_to_anchor(state: &PruneState, current: &AttentionWeights) -> Result<f64> {
    if current.index_map() != state.pruned() {
        return Err(Error::IndexMapMismatch("current attention is not over the retained set"));
    }
    cosine_similarity(state.anchor_pruned().weights(), current.weights())
}

/// Fixed-threshold rule, strict: `s < tau`.
pub fn detect_shift(similarity: f64, config: &RisdConfig) -> bool {
    similarity < config.tau
}

/// Running-average rule. Never fires on an empty history.
pub fn detect_shift_avg(history: &[f64], similarity: f64) -> bool {
    if history.is_empty() {
        return false;
    }
    let mean = history.iter().sum::<f64>() / history.len() as f64;
    similarity < mean
}

/// Seeded Bernoulli trigger for the random-timing ablation.
#[derive(Debug, Clone)]
pub struct RandomTrigger {
    rng: ChaCha8Rng,
    rate: f64,
}

impl RandomTrigger {
    pub fn new(seed: u64, rate: f64) -> Self {
        Self {
            rng: stream_rng(seed, RANDOM_DETECTOR_STREAM),
            rate,
        }
    }

    /// One draw per eligible step.
    pub fn detect_shift_random(&mut self) -> bool {
        // a draw is consumed even at rate 0 or 1 so the stream position only
        // depends on the number of eligible steps
        let u: f64 = self.rng.random();
        u < self.rate
    }
}

/// Offline shift events: strict local minima of `similarities` lying below `tau`.
///
/// A maximal run of equal values counts as one minimum at its first index when
/// both neighbours are strictly larger. A missing neighbour at either end of the
/// series counts as larger, so endpoints qualify when they are strictly below
/// their single neighbour. A run covering the whole series is not a minimum.
/// Event steps are series indices.
pub fn count_rvis_events(similarities: &[f64], tau: f64) -> Result<Vec<ShiftEvent>> {
    if similarities.is_empty() {
        return Err(Error::Empty("similarity series"));
    }
    let n = similarities.len();
    let mut events = Vec::new();
    let mut i = 0;
    while i < n {
        let v = similarities[i];
        let mut j = i;
        while j + 1 < n && similarities[j + 1] == v {
            j += 1;
        }
        let whole = i == 0 && j == n - 1;
        let left_ok = i == 0 || similarities[i - 1] > v;
        let right_ok = j == n - 1 || similarities[j + 1] > v;
        if !whole && left_ok && right_ok && v < tau {
            events.push(ShiftEvent {
                step: i,
                similarity: v,
                kind: EventKind::OfflineEvent,
            });
        }
        i = j + 1;
    }
    Ok(events)
}

/// Triggers per eligible monitoring step in one fixed-threshold run.
pub fn calibrate_random_rate(trace: &DecodeTrace) -> Result<f64> {
    calibrate_random_rate_batch(std::slice::from_ref(trace))
}

/// Pooled trigger rate across a batch of runs.
pub fn calibrate_random_rate_batch(traces: &[DecodeTrace]) -> Result<f64> {
    let (triggers, eligible) = traces.iter().fold((0usize, 0usize), |(t, e), tr| {
        (t + tr.trigger_count(), e + tr.eligible_steps())
    });
    if eligible == 0 {
        return Err(Error::NoEligibleSteps);
    }
    Ok(triggers as f64 / eligible as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn steps(events: &[ShiftEvent]) -> Vec<usize> {
        events.iter().map(|e| e.step).collect()
    }

    #[test]
    fn fixed_threshold_is_strict() {
        let cfg = RisdConfig { tau: 0.75, ..Default::default() };
        assert!(!detect_shift(0.75, &cfg));
        assert!(detect_shift(0.74, &cfg));
        let zero = RisdConfig { tau: 0.0, ..Default::default() };
        assert!(!detect_shift(0.0, &zero));
    }

    #[test]
    fn running_average_rule() {
        assert!(!detect_shift_avg(&[], 0.1));
        assert!(detect_shift_avg(&[1.0, 0.8], 0.85));
        assert!(!detect_shift_avg(&[0.5], 0.5));
    }

    #[test]
    fn random_trigger_extremes_and_rate() {
        let mut never = RandomTrigger::new(1, 0.0);
        assert!((0..1000).all(|_| !never.detect_shift_random()));
        let mut always = RandomTrigger::new(1, 1.0);
        assert!((0..1000).all(|_| always.detect_shift_random()));
        let mut r = RandomTrigger::new(42, 0.1);
        let hits = (0..10_000).filter(|_| r.detect_shift_random()).count();
        assert!((940..=1060).contains(&hits), "hits {hits}");
    }

    #[test]
    fn rvis_examples() {
        assert!(count_rvis_events(&[0.9, 0.8, 0.95], 0.7).unwrap().is_empty());
        assert_eq!(steps(&count_rvis_events(&[0.9, 0.5, 0.9], 0.7).unwrap()), vec![1]);
        assert_eq!(
            steps(&count_rvis_events(&[0.9, 0.5, 0.5, 0.9, 0.4], 0.7).unwrap()),
            vec![1, 4]
        );
        assert!(count_rvis_events(&[], 0.7).is_err());
    }

    #[test]
    fn rvis_edge_shapes() {
        assert!(count_rvis_events(&[0.3], 0.7).unwrap().is_empty());
        assert!(count_rvis_events(&[0.3, 0.3, 0.3], 0.7).unwrap().is_empty());
        assert_eq!(steps(&count_rvis_events(&[0.3, 0.9], 0.7).unwrap()), vec![0]);
        // plateau followed by a lower value is not a minimum
        assert_eq!(steps(&count_rvis_events(&[0.9, 0.5, 0.5, 0.4, 0.9], 0.7).unwrap()), vec![3]);
        let ev = count_rvis_events(&[0.9, 0.6, 0.9], 0.7).unwrap();
        assert_eq!(ev[0].kind, EventKind::OfflineEvent);
        assert_eq!(ev[0].similarity, 0.6);
    }
}
