//! Token swap at a detected shift.
//!
//! On a trigger the whole bank is re-scored against the current query, a new
//! top set is chosen, and the visible set is rebuilt according to the swap
//! strategy. The default strategy keeps the prefill set and adds the new
//! tokens (a union of size `k..=2k`). The rebuilt set lives for a fixed number
//! of decode steps, after which the prefill set comes back.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{softmax, top_k, AttentionWeights, Embedding};
use crate::prefill::PruneState;
use crate::scenario::VisualTokenBank;

/// Below this norm the mean of the prefill keys counts as zero.
const DEGENERATE_MERGE_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwapStrategy {
    /// Prefill set ∪ new set.
    Cpts,
    /// New set only.
    Hard,
    /// New set plus one synthetic token summarizing the prefill set.
    Merge,
    /// Every token.
    Full,
}

impl SwapStrategy {
    pub const ALL: [SwapStrategy; 4] = [SwapStrategy::Cpts, SwapStrategy::Hard, SwapStrategy::Merge, SwapStrategy::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            SwapStrategy::Cpts => "cpts",
            SwapStrategy::Hard => "hard",
            SwapStrategy::Merge => "merge",
            SwapStrategy::Full => "full",
        }
    }
}

impl fmt::Display for SwapStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SwapStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cpts" => Ok(SwapStrategy::Cpts),
            "hard" => Ok(SwapStrategy::Hard),
            "merge" => Ok(SwapStrategy::Merge),
            "full" => Ok(SwapStrategy::Full),
            other => Err(Error::config("swap.strategy", format!("unknown swap strategy `{other}`"))),
        }
    }
}

/// What happens when the context-preserving window runs out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expiry {
    /// Return to the prefill set.
    Revert,
    /// Re-score with the query at the expiry step and open one more window;
    /// the window after that reverts.
    Reselect,
}

/// How the full-bank importance score is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImportanceMode {
    /// Separate softmaxes over retained and reserved keys, concatenated (mass 2).
    Concat,
    /// One softmax over all keys (mass 1).
    Joint,
}

fn default_duration() -> usize {
    20
}

fn default_strategy() -> SwapStrategy {
    SwapStrategy::Cpts
}

fn default_expiry() -> Expiry {
    Expiry::Revert
}

fn default_mode() -> ImportanceMode {
    ImportanceMode::Joint
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwapConfig {
    #[serde(default = "default_strategy")]
    pub strategy: SwapStrategy,
    /// Context-preserving duration `L` in decode steps.
    #[serde(default = "default_duration")]
    pub duration: usize,
    /// Re-selection budget; the prefill budget `k` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_dec: Option<usize>,
    #[serde(default = "default_expiry")]
    pub expiry: Expiry,
    #[serde(default = "default_mode")]
    pub importance_mode: ImportanceMode,
}

impl Default for SwapConfig {
    fn default() -> Self {
        Self {
            strategy: default_strategy(),
            duration: default_duration(),
            k_dec: None,
            expiry: default_expiry(),
            importance_mode: default_mode(),
        }
    }
}

impl SwapConfig {
    pub fn resolve_k_dec(&self, k: usize, n_visual: usize) -> Result<usize> {
        let k_dec = self.k_dec.unwrap_or(k);
        if k_dec == 0 || k_dec > n_visual {
            return Err(Error::config("swap.k_dec", format!("must lie in 1..={n_visual}")));
        }
        Ok(k_dec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Prefill,
    Swapped,
    Merged,
}

/// Synthetic token standing in for the whole prefill set.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedToken {
    pub key: Embedding,
    /// Set when the mean key vanished and a single prefill key was kept instead.
    pub fallback: Option<usize>,
}

/// The visual tokens visible to the decode step.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet {
    members: Vec<(usize, Provenance)>,
    merged: Option<MergedToken>,
}

impl ActiveSet {
    pub fn prefill(state: &PruneState) -> Self {
        Self {
            members: state.pruned().iter().map(|&i| (i, Provenance::Prefill)).collect(),
            merged: None,
        }
    }

    fn from_members(mut members: Vec<(usize, Provenance)>, merged: Option<MergedToken>) -> Self {
        members.sort_by_key(|m| m.0);
        members.dedup_by_key(|m| m.0);
        Self { members, merged }
    }

    /// Real bank token ids, ascending.
    pub fn indices(&self) -> Vec<usize> {
        self.members.iter().map(|m| m.0).collect()
    }

    pub fn provenance(&self) -> &[(usize, Provenance)] {
        &self.members
    }

    pub fn merged(&self) -> Option<&MergedToken> {
        self.merged.as_ref()
    }

    /// Number of keys visible to attention, synthetic token included.
    pub fn k_star(&self) -> usize {
        self.members.len() + usize::from(self.merged.is_some())
    }

    pub fn contains(&self, id: usize) -> bool {
        self.members.binary_search_by_key(&id, |m| m.0).is_ok()
    }

    /// Attention of `query` over the active keys. The synthetic merged token,
    /// when present, is labelled with id `bank.len()`.
    pub fn attention(&self, query: &Embedding, bank: &VisualTokenBank) -> Result<AttentionWeights> {
        let ids = self.indices();
        let mut logits = bank.logits(query, &ids)?;
        let mut index_map = ids;
        if let Some(m) = &self.merged {
            logits.extend(crate::kernel::scaled_dot_logits(query, [&m.key])?);
            index_map.push(bank.len());
        }
        AttentionWeights::softmax(&logits, index_map)
    }
}

/// Full-bank importance of the current query.
///
/// Joint mode is a single softmax over every key. Concat mode keeps the
/// retained and reserved groups separately normalized, ordered (retained,
/// reserved); with no reserved tokens it is just the retained attention.
pub fn reevaluate_importance(
    query: &Embedding,
    state: &PruneState,
    bank: &VisualTokenBank,
    mode: ImportanceMode,
) -> Result<AttentionWeights> {
    match mode {
        ImportanceMode::Joint => bank.attention(query, &bank.all_ids()),
        ImportanceMode::Concat => {
            let mut weights = softmax(&bank.logits(query, state.pruned())?)?;
            let mut ids = state.pruned().to_vec();
            if !state.reserved().is_empty() {
                weights.extend(softmax(&bank.logits(query, state.reserved())?)?);
                ids.extend_from_slice(state.reserved());
            }
            AttentionWeights::from_parts(weights, ids)
        }
    }
}

/// Top `k_dec` global ids of an importance vector, ascending.
pub fn select_new_set(importance: &AttentionWeights, k_dec: usize) -> Result<Vec<usize>> {
    let pos = top_k(importance.weights(), k_dec)?;
    let mut ids: Vec<usize> = pos.into_iter().map(|p| importance.index_map()[p]).collect();
    ids.sort_unstable();
    Ok(ids)
}

fn check_ids(ids: &[usize], n: usize) -> Result<()> {
    match ids.iter().find(|&&i| i >= n) {
        Some(&index) => Err(Error::IndexOutOfRange { index, len: n }),
        None => Ok(()),
    }
}

pub fn union_swap(state: &PruneState, new_set: &[usize]) -> Result<ActiveSet> {
    check_ids(new_set, state.n_visual())?;
    let mut members: Vec<(usize, Provenance)> = state.pruned().iter().map(|&i| (i, Provenance::Prefill)).collect();
    members.extend(
        new_set
            .iter()
            .filter(|i| state.pruned().binary_search(i).is_err())
            .map(|&i| (i, Provenance::Swapped)),
    );
    Ok(ActiveSet::from_members(members, None))
}

pub fn hard_swap(state: &PruneState, new_set: &[usize]) -> Result<ActiveSet> {
    check_ids(new_set, state.n_visual())?;
    Ok(ActiveSet::from_members(
        new_set.iter().map(|&i| (i, Provenance::Swapped)).collect(),
        None,
    ))
}

/// Mean of the prefill keys, re-normalized. When the mean vanishes the key of
/// the prefill token with the highest anchor weight is used instead.
pub fn merged_prefill_token(state: &PruneState, bank: &VisualTokenBank) -> Result<MergedToken> {
    let keys = state.pruned().iter().map(|&i| bank.key(i)).collect::<Result<Vec<_>>>()?;
    let mean = Embedding::mean(keys)?;
    if mean.norm() > DEGENERATE_MERGE_NORM {
        let key = mean.normalized().expect("positive norm");
        return Ok(MergedToken { key, fallback: None });
    }
    let anchor = state.anchor_pruned();
    let best = top_k(anchor.weights(), 1)?[0];
    let id = anchor.index_map()[best];
    Ok(MergedToken {
        key: bank.key(id)?.clone(),
        fallback: Some(id),
    })
}

pub fn merge_swap(state: &PruneState, new_set: &[usize], bank: &VisualTokenBank) -> Result<ActiveSet> {
    check_ids(new_set, state.n_visual())?;
    let merged = merged_prefill_token(state, bank)?;
    Ok(ActiveSet::from_members(
        new_set.iter().map(|&i| (i, Provenance::Swapped)).collect(),
        Some(merged),
    ))
}

pub fn full_swap(state: &PruneState) -> ActiveSet {
    let members = (0..state.n_visual())
        .map(|i| {
            let p = if state.pruned().binary_search(&i).is_ok() {
                Provenance::Prefill
            } else {
                Provenance::Swapped
            };
            (i, p)
        })
        .collect();
    ActiveSet::from_members(members, None)
}

/// Re-score, re-select and rebuild the active set for one trigger.
pub fn swap_for_query(
    query: &Embedding,
    state: &PruneState,
    bank: &VisualTokenBank,
    config: &SwapConfig,
) -> Result<ActiveSet> {
    if config.strategy == SwapStrategy::Full {
        return Ok(full_swap(state));
    }
    let k_dec = config.resolve_k_dec(state.k(), bank.len())?;
    let importance = reevaluate_importance(query, state, bank, config.importance_mode)?;
    let new_set = select_new_set(&importance, k_dec)?;
    match config.strategy {
        SwapStrategy::Cpts => union_swap(state, &new_set),
        SwapStrategy::Hard => hard_swap(state, &new_set),
        SwapStrategy::Merge => merge_swap(state, &new_set, bank),
        SwapStrategy::Full => unreachable!(),
    }
}

/// Countdown of the context-preserving window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Window {
    remaining: usize,
    reselected: bool,
}

impl Window {
    /// A window of `duration` steps; zero means the swap never takes effect.
    pub fn open(duration: usize) -> Self {
        Self { remaining: duration, reselected: false }
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    pub fn is_open(&self) -> bool {
        self.remaining > 0
    }
}

/// Monitoring runs only while no window is open.
pub fn retrigger_policy(window: &Window) -> bool {
    !window.is_open()
}

/// Advance an open window by one step and return the active set for this step.
///
/// On reaching zero the prefill set comes back (`Expiry::Revert`), or, for
/// `Expiry::Reselect`, a one-time re-selection with `query` opens a fresh
/// window.
pub fn tick_and_maybe_expire(
    window: &mut Window,
    current: &ActiveSet,
    state: &PruneState,
    bank: &VisualTokenBank,
    config: &SwapConfig,
    query: &Embedding,
) -> Result<ActiveSet> {
    debug_assert!(window.is_open());
    window.remaining -= 1;
    if window.remaining > 0 {
        return Ok(current.clone());
    }
    match config.expiry {
        Expiry::Reselect if !window.reselected => {
            *window = Window { remaining: config.duration, reselected: true };
            swap_for_query(query, state, bank, config)
        }
        _ => Ok(ActiveSet::prefill(state)),
    }
}
