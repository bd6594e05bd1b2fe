//! Deterministic numeric kernel shared by every other module.
//!
//! Everything here is a pure function over borrowed inputs. Ties are always
//! broken in favour of the lowest index so that runs are bit-reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite real vector: a query or a key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("embedding"));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    /// Unit-norm copy, or `None` when the norm is zero.
    pub fn normalized(&self) -> Option<Embedding> {
        let n = self.norm();
        (n > 0.0).then(|| Embedding(self.0.iter().map(|v| v / n).collect()))
    }

    pub fn scaled(&self, factor: f64) -> Embedding {
        Embedding(self.0.iter().map(|v| v * factor).collect())
    }

    /// Arithmetic mean of a non-empty list of equally sized embeddings.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a Embedding>) -> Result<Embedding> {
        let mut acc: Option<Vec<f64>> = None;
        let mut count = 0usize;
        for e in items {
            match acc.as_mut() {
                None => acc = Some(e.0.clone()),
                Some(a) => {
                    if a.len() != e.dim() {
                        return Err(Error::DimensionMismatch {
                            expected: a.len(),
                            got: e.dim(),
                        });
                    }
                    a.iter_mut().zip(&e.0).for_each(|(x, y)| *x += y);
                }
            }
            count += 1;
        }
        let acc = acc.ok_or(Error::Empty("mean of embeddings"))?;
        Ok(Embedding(acc.into_iter().map(|v| v / count as f64).collect()))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Probability mass over an explicit list of global token ids.
///
/// Each normalization group sums to one. Most weights have a single group; the
/// concatenated importance score keeps two independently normalized groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionWeights {
    weights: Vec<f64>,
    index_map: Vec<usize>,
}

impl AttentionWeights {
    /// Softmax over `logits`, labelled with `index_map`.
    pub fn softmax(logits: &[f64], index_map: Vec<usize>) -> Result<Self> {
        if logits.len() != index_map.len() {
            return Err(Error::DimensionMismatch {
                expected: index_map.len(),
                got: logits.len(),
            });
        }
        Self::from_parts(softmax(logits)?, index_map)
    }

    /// Assemble weights from raw parts, checking the index map is unique.
    pub fn from_parts(weights: Vec<f64>, index_map: Vec<usize>) -> Result<Self> {
        if weights.len() != index_map.len() {
            return Err(Error::DimensionMismatch {
                expected: index_map.len(),
                got: weights.len(),
            });
        }
        let mut seen = index_map.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::IndexMapMismatch("duplicate token id"));
        }
        Ok(Self { weights, index_map })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn index_map(&self) -> &[usize] {
        &self.index_map
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weight of global token `id`, if present.
    pub fn weight_of(&self, id: usize) -> Option<f64> {
        self.index_map
            .iter()
            .position(|&i| i == id)
            .map(|p| self.weights[p])
    }

    /// Dense vector over `0..n` with zeros for ids not present.
    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (&id, &w) in self.index_map.iter().zip(&self.weights) {
            if id < n {
                out[id] = w;
            }
        }
        out
    }

    /// The same weights re-ordered by ascending global id.
    pub fn sorted_by_id(&self) -> AttentionWeights {
        let mut pairs: Vec<(usize, f64)> = self
            .index_map
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
            .collect();
        pairs.sort_by_key(|p| p.0);
        let (index_map, weights) = pairs.into_iter().unzip();
        AttentionWeights { weights, index_map }
    }
}

/// Numerically stable softmax: subtracts the max logit before exponentiating.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Empty("softmax logits"));
    }
    if let Some(index) = logits.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Raw scaled dot-product logits `q·k / sqrt(d)`.
pub fn scaled_dot_logits<'a>(
    query: &Embedding,
    keys: impl IntoIterator<Item = &'a Embedding>,
) -> Result<Vec<f64>> {
    let scale = (query.dim() as f64).sqrt();
    keys.into_iter()
        .map(|k| {
            if k.dim() != query.dim() {
                Err(Error::DimensionMismatch {
                    expected: query.dim(),
                    got: k.dim(),
                })
            } else {
                Ok(query.dot(k) / scale)
            }
        })
        .collect()
}

/// Softmax of `q·k_i / sqrt(d)` over `keys`, index map `0..keys.len()`.
pub fn scaled_dot_attention(query: &Embedding, keys: &[Embedding]) -> Result<AttentionWeights> {
    let logits = scaled_dot_logits(query, keys)?;
    AttentionWeights::softmax(&logits, (0..keys.len()).collect())
}

/// Cosine similarity. Errors if either vector has zero norm.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let na = dot(a, a).sqrt();
    if na == 0.0 {
        return Err(Error::ZeroNorm { index: 0 });
    }
    let nb = dot(b, b).sqrt();
    if nb == 0.0 {
        return Err(Error::ZeroNorm { index: 1 });
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Indices of the `k` largest values, lowest index winning ties, returned ascending.
pub fn top_k(values: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > values.len() {
        return Err(Error::BudgetOutOfRange {
            k,
            max: values.len(),
        });
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    // stable sort keeps ascending index order among equal values
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order.truncate(k);
    order.sort_unstable();
    Ok(order)
}

/// Shannon entropy in nats. Zero weights contribute nothing.
pub fn shannon_entropy(w: &AttentionWeights) -> f64 {
    entropy_of(w.weights())
}

pub(crate) fn entropy_of(weights: &[f64]) -> f64 {
    -weights
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Cosine distance `1 - cos(a, b)`.
pub fn cosine_distance(a: &Embedding, b: &Embedding) -> Result<f64> {
    Ok(1.0 - cosine_similarity(a.as_slice(), b.as_slice())?)
}

/// Greedy max-min diversity selection under cosine distance.
///
/// Seeds with the pair at maximum distance (lowest index pair on ties), then
/// repeatedly adds the point whose minimum distance to the selection is
/// largest. `k == 1` selects index 0. This is a 2-approximation of the
/// max-min dispersion objective, not an exact solver. Returns ascending ids.
pub fn farthest_point_select(embeddings: &[Embedding], k: usize) -> Result<Vec<usize>> {
    let n = embeddings.len();
    if k == 0 || k > n {
        return Err(Error::BudgetOutOfRange { k, max: n });
    }
    let units: Vec<Embedding> = embeddings
        .iter()
        .enumerate()
        .map(|(index, e)| e.normalized().ok_or(Error::ZeroNorm { index }))
        .collect::<Result<_>>()?;
    if let Some(e) = units.iter().find(|e| e.dim() != units[0].dim()) {
        return Err(Error::DimensionMismatch {
            expected: units[0].dim(),
            got: e.dim(),
        });
    }
    if k == 1 {
        return Ok(vec![0]);
    }
    let dist = |i: usize, j: usize| 1.0 - units[i].dot(&units[j]).clamp(-1.0, 1.0);

    let mut seed = (0, 1);
    let mut best = f64::NEG_INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = dist(i, j);
            if d > best {
                best = d;
                seed = (i, j);
            }
        }
    }

    let mut selected = vec![seed.0, seed.1];
    let mut in_set = vec![false; n];
    in_set[seed.0] = true;
    in_set[seed.1] = true;
    let mut min_dist: Vec<f64> = (0..n).map(|i| dist(i, seed.0).min(dist(i, seed.1))).collect();

    while selected.len() < k {
        let mut next = None;
        let mut best = f64::NEG_INFINITY;
        for i in (0..n).filter(|&i| !in_set[i]) {
            if min_dist[i] > best {
                best = min_dist[i];
                next = Some(i);
            }
        }
        let next = next.expect("k <= n leaves a candidate");
        in_set[next] = true;
        selected.push(next);
        for (i, d) in min_dist.iter_mut().enumerate() {
            *d = d.min(dist(i, next));
        }
    }
    selected.sort_unstable();
    Ok(selected)
}
