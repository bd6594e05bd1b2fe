//! FLOPs estimate for a decoder-only transformer.
//!
//! Per layer, a forward pass over `n` tokens costs `4nd^2 + 2n^2 d + 2ndm`
//! (projections, attention scores and values, MLP). Decoding the `i`-th new
//! token attends to `n + i` cached positions and costs `4d^2 + 2(n+i)d + 2dm`.
//! Everything is exact `u128` arithmetic; convert with [`to_tflops`] for display.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_generated() -> u64 {
    1000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostParams {
    pub layers: u64,
    pub hidden: u64,
    pub intermediate: u64,
    /// Prompt length `n`.
    pub input_tokens: u64,
    /// Generated length `O`.
    #[serde(default = "default_generated")]
    pub generated: u64,
}

impl CostParams {
    /// Layer count and widths must be positive. Token counts may be zero.
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [("layers", self.layers), ("hidden", self.hidden), ("intermediate", self.intermediate)] {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        Ok(())
    }
}

pub fn prefill_flops(p: &CostParams) -> u128 {
    let (l, d, m, n) = (p.layers as u128, p.hidden as u128, p.intermediate as u128, p.input_tokens as u128);
    l * (4 * n * d * d + 2 * n * n * d + 2 * n * d * m)
}

/// Closed form of the per-token decoding sum.
pub fn decoding_flops(p: &CostParams) -> u128 {
    let (l, d, m, n, o) = (
        p.layers as u128,
        p.hidden as u128,
        p.intermediate as u128,
        p.input_tokens as u128,
        p.generated as u128,
    );
    // o * (o - 1) is even, the halving is exact
    let tri = if o == 0 { 0 } else { o * (o - 1) / 2 };
    l * (o * (4 * d * d + 2 * d * m) + 2 * d * (o * n + tri))
}

/// Term-by-term evaluation of the decoding sum.
pub fn decoding_flops_summed(p: &CostParams) -> u128 {
    let (l, d, m, n) = (p.layers as u128, p.hidden as u128, p.intermediate as u128, p.input_tokens as u128);
    (0..p.generated as u128)
        .map(|i| l * (4 * d * d + 2 * (n + i) * d + 2 * d * m))
        .sum()
}

pub fn to_tflops(flops: u128) -> f64 {
    flops as f64 / 1e12
}

/// Prompt length whose prefill cost is closest to `target` FLOPs.
///
/// Solves `2d n^2 + (4d^2 + 2dm) n = target / L` for the positive root and
/// returns the better of its floor and ceiling.
pub fn solve_input_tokens(layers: u64, hidden: u64, intermediate: u64, target: f64) -> Result<u64> {
    let probe = CostParams { layers, hidden, intermediate, input_tokens: 0, generated: 0 };
    probe.validate()?;
    if !(target.is_finite() && target >= 0.0) {
        return Err(Error::config("target", "must be a finite non-negative FLOP count"));
    }
    let (d, m) = (hidden as f64, intermediate as f64);
    let a = 2.0 * d;
    let b = 4.0 * d * d + 2.0 * d * m;
    let c = target / layers as f64;
    let root = (-b + (b * b + 4.0 * a * c).sqrt()) / (2.0 * a);
    let lo = root.floor().max(0.0) as u64;
    let err = |n: u64| (prefill_flops(&CostParams { input_tokens: n, ..probe }) as f64 - target).abs();
    Ok(if err(lo + 1) < err(lo) { lo + 1 } else { lo })
}
