//! Prefill-stage pruning: split the bank into a retained set and a reserved
//! set kept on standby, and record the anchor attention.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{farthest_point_select, top_k, AttentionWeights, Embedding};
use crate::scenario::{stream_rng, VisualTokenBank};

const RANDOM_PRUNE_STREAM: u64 = 2;

/// Output of the prefill stage.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneState {
    pruned: Vec<usize>,
    reserved: Vec<usize>,
    anchor_full: AttentionWeights,
    anchor_pruned: AttentionWeights,
}

impl PruneState {
    /// Build the state for an already chosen retained set.
    ///
    /// `anchor_pruned` is a fresh softmax of the prefill query over the
    /// retained keys, not a renormalized slice of `anchor_full`.
    pub fn from_selection(
        bank: &VisualTokenBank,
        prefill_query: &Embedding,
        mut pruned: Vec<usize>,
    ) -> Result<Self> {
        let n = bank.len();
        if pruned.is_empty() || pruned.len() > n {
            return Err(Error::BudgetOutOfRange { k: pruned.len(), max: n });
        }
        pruned.sort_unstable();
        if pruned.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::IndexMapMismatch("duplicate id in retained set"));
        }
        if let Some(&bad) = pruned.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, len: n });
        }
        let reserved = (0..n).filter(|i| pruned.binary_search(i).is_err()).collect();
        let anchor_full = bank.attention(prefill_query, &bank.all_ids())?;
        let anchor_pruned = bank.attention(prefill_query, &pruned)?;
        Ok(Self { pruned, reserved, anchor_full, anchor_pruned })
    }

    pub fn pruned(&self) -> &[usize] {
        &self.pruned
    }

    pub fn reserved(&self) -> &[usize] {
        &self.reserved
    }

    pub fn anchor_full(&self) -> &AttentionWeights {
        &self.anchor_full
    }

    pub fn anchor_pruned(&self) -> &AttentionWeights {
        &self.anchor_pruned
    }

    pub fn k(&self) -> usize {
        self.pruned.len()
    }

    pub fn n_visual(&self) -> usize {
        self.pruned.len() + self.reserved.len()
    }
}

/// Keep the `k` tokens with the highest anchor attention.
pub fn attention_topk_prune(
    bank: &VisualTokenBank,
    prefill_query: &Embedding,
    k: usize,
) -> Result<PruneState> {
    check_budget(bank, k)?;
    let anchor = bank.attention(prefill_query, &bank.all_ids())?;
    let pruned = top_k(anchor.weights(), k)?;
    PruneState::from_selection(bank, prefill_query, pruned)
}

/// Keep a max-min diverse subset of the keys (greedy farthest-point rule).
pub fn diversity_max_prune(
    bank: &VisualTokenBank,
    prefill_query: &Embedding,
    k: usize,
) -> Result<PruneState> {
    check_budget(bank, k)?;
    let pruned = farthest_point_select(bank.keys(), k)?;
    PruneState::from_selection(bank, prefill_query, pruned)
}

/// Keep a uniformly random `k`-subset drawn from `seed`.
pub fn random_prune(
    bank: &VisualTokenBank,
    prefill_query: &Embedding,
    k: usize,
    seed: u64,
) -> Result<PruneState> {
    check_budget(bank, k)?;
    let mut rng = stream_rng(seed, RANDOM_PRUNE_STREAM);
    let pruned = rand::seq::index::sample(&mut rng, bank.len(), k).into_vec();
    PruneState::from_selection(bank, prefill_query, pruned)
}

fn check_budget(bank: &VisualTokenBank, k: usize) -> Result<()> {
    if k == 0 || k > bank.len() {
        return Err(Error::BudgetOutOfRange { k, max: bank.len() });
    }
    Ok(())
}

/// Prefill strategy, selected by name in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PruneStrategy {
    Topk,
    Diversity,
    Random,
}

impl PruneStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            PruneStrategy::Topk => "topk",
            PruneStrategy::Diversity => "diversity",
            PruneStrategy::Random => "random",
        }
    }

    pub fn prune(
        self,
        bank: &VisualTokenBank,
        prefill_query: &Embedding,
        k: usize,
        seed: u64,
    ) -> Result<PruneState> {
        match self {
            PruneStrategy::Topk => attention_topk_prune(bank, prefill_query, k),
            PruneStrategy::Diversity => diversity_max_prune(bank, prefill_query, k),
            PruneStrategy::Random => random_prune(bank, prefill_query, k, seed),
        }
    }
}

impl fmt::Display for PruneStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PruneStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topk" => Ok(PruneStrategy::Topk),
            "diversity" => Ok(PruneStrategy::Diversity),
            "random" => Ok(PruneStrategy::Random),
            other => Err(Error::config("prune.strategy", format!("unknown strategy `{other}`"))),
        }
    }
}

/// Token budget: an absolute count or a retention ratio of the bank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Budget {
    Count(usize),
    Ratio(f64),
}

impl Budget {
    /// Resolve to a count, `k = round(R * N_v)` for ratios.
    pub fn resolve(self, n_visual: usize) -> Result<usize> {
        let k = match self {
            Budget::Count(k) => k,
            Budget::Ratio(r) => {
                if !(r > 0.0 && r <= 1.0) {
                    return Err(Error::config("prune.ratio", "must lie in (0, 1]"));
                }
                (r * n_visual as f64).round() as usize
            }
        };
        if k == 0 || k > n_visual {
            return Err(Error::BudgetOutOfRange { k, max: n_visual });
        }
        Ok(k)
    }
}
