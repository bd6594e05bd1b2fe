//! Synthetic decode scenarios.
//!
//! A scenario plants phase-structured relevant regions in a random bank of
//! unit-norm visual keys. Each decode step gets a query aimed at the centroid
//! of the region that currently holds attention, so the full attention over the
//! bank plays the role of the ground-truth visual focus.
//!
//! Regions are compact: each one is the fixed point of "take the `size` keys
//! best aligned with the region centroid", so under a noise-free query the
//! region is exactly the top of the attention ranking.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::engine::DecodeTrace;
use crate::error::{Error, Result};
use crate::kernel::{scaled_dot_logits, AttentionWeights, Embedding};

const KEY_STREAM: u64 = 0;
const REGION_STREAM: u64 = 1;
const NOISE_STREAM_BASE: u64 = 1 << 32;
const REGION_ATTEMPTS: usize = 64;
const REFINE_ITERS: usize = 100;

/// Seeded ChaCha generator for one logical stream of a scenario seed.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Whether attention ever moves away from the initial region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Static,
    Shifting,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Static => "static",
            Regime::Shifting => "shifting",
        }
    }
}

/// One entry of the phase schedule in a scenario config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpec {
    pub start: usize,
    pub region_size: usize,
    /// Episode length. When set, attention returns to the first phase's
    /// region after `duration` steps; when absent the phase lasts until the
    /// next one starts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<usize>,
}

fn default_name() -> String {
    "scenario".to_string()
}

/// Scenario parameters as read from a config file. Missing fields take the
/// [`Default`] values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub n_visual: usize,
    pub dim: usize,
    pub steps: usize,
    pub beta: f64,
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Optional; checked against the phase count when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    /// Fraction of each region shared with the previous phase's region.
    #[serde(default)]
    pub overlap: f64,
    /// Text-token count, recorded as metadata only.
    #[serde(default)]
    pub n_text: usize,
    pub phases: Vec<PhaseSpec>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: default_name(),
            n_visual: 144,
            dim: 64,
            steps: 128,
            beta: 8.0,
            sigma: 0.3,
            seed: 0,
            regime: None,
            overlap: 0.0,
            n_text: 0,
            phases: vec![PhaseSpec {
                start: 0,
                region_size: 8,
                duration: None,
            }],
        }
    }
}

impl ScenarioConfig {
    /// Single-phase scenario with the default desk-scale shape.
    pub fn static_default() -> Self {
        Self {
            name: "static".into(),
            ..Self::default()
        }
    }

    /// Base phase plus `episodes.len()` returning shift episodes, given as
    /// `(start, duration)` pairs.
    pub fn with_episodes(name: &str, episodes: &[(usize, usize)]) -> Self {
        let mut cfg = Self {
            name: name.into(),
            ..Self::default()
        };
        cfg.phases.extend(episodes.iter().map(|&(start, duration)| PhaseSpec {
            start,
            region_size: 8,
            duration: Some(duration),
        }));
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_visual < 2 {
            return Err(Error::config("n_visual", "must be at least 2"));
        }
        if self.dim < 2 {
            return Err(Error::config("dim", "must be at least 2"));
        }
        if self.steps == 0 {
            return Err(Error::config("steps", "must be positive"));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::config("beta", "must be finite and non-negative"));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::config("sigma", "must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::config("overlap", "must lie in [0, 1)"));
        }
        if self.phases.is_empty() {
            return Err(Error::config("phases", "at least one phase is required"));
        }
        if self.phases[0].start != 0 {
            return Err(Error::config("phases[0].start", "first phase must start at step 0"));
        }
        if self.phases[0].duration.is_some() {
            return Err(Error::config("phases[0].duration", "the base phase cannot be an episode"));
        }
        let mut used = 0usize;
        for (i, p) in self.phases.iter().enumerate() {
            if p.region_size == 0 {
                return Err(Error::config(format!("phases[{i}].region_size"), "region must be non-empty"));
            }
            if p.region_size > self.n_visual {
                return Err(Error::config(format!("phases[{i}].region_size"), "larger than the bank"));
            }
            if p.start >= self.steps {
                return Err(Error::config(format!("phases[{i}].start"), "must be below steps"));
            }
            if i > 0 && p.start <= self.phases[i - 1].start {
                return Err(Error::config(format!("phases[{i}].start"), "starts must be strictly increasing"));
            }
            if let Some(d) = p.duration {
                let end = self.phases.get(i + 1).map_or(self.steps, |n| n.start);
                if d == 0 || p.start + d > end {
                    return Err(Error::config(
                        format!("phases[{i}].duration"),
                        "episode must be non-empty and end before the next phase",
                    ));
                }
            }
            let shared = if i == 0 { 0 } else { self.shared_count(i) };
            used += p.region_size - shared;
        }
        if used > self.n_visual {
            return Err(Error::config("phases", "regions need more tokens than the bank holds"));
        }
        let derived = self.derived_regime();
        if let Some(r) = self.regime {
            if r != derived {
                return Err(Error::config(
                    "regime",
                    format!("{} does not match a schedule of {} phase(s)", r.as_str(), self.phases.len()),
                ));
            }
        }
        Ok(())
    }

    pub fn derived_regime(&self) -> Regime {
        if self.phases.len() == 1 {
            Regime::Static
        } else {
            Regime::Shifting
        }
    }

    fn shared_count(&self, i: usize) -> usize {
        let size = self.phases[i].region_size.min(self.phases[i - 1].region_size);
        ((self.overlap * self.phases[i].region_size as f64).round() as usize).min(size)
    }
}

/// The `N_v` visual tokens: unit-norm keys with ids `0..N_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualTokenBank {
    keys: Vec<Embedding>,
}

impl VisualTokenBank {
    pub fn new(keys: Vec<Embedding>) -> Result<Self> {
        if keys.len() < 2 {
            return Err(Error::config("n_visual", "bank needs at least 2 tokens"));
        }
        let d = keys[0].dim();
        for (index, k) in keys.iter().enumerate() {
            if k.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: k.dim() });
            }
            if (k.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::ZeroNorm { index });
            }
        }
        Ok(Self { keys })
    }

    /// Normalizes each key first.
    pub fn from_raw(raw: Vec<Embedding>) -> Result<Self> {
        let keys = raw
            .iter()
            .enumerate()
            .map(|(index, k)| k.normalized().ok_or(Error::ZeroNorm { index }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(keys)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.keys[0].dim()
    }

    pub fn keys(&self) -> &[Embedding] {
        &self.keys
    }

    pub fn key(&self, id: usize) -> Result<&Embedding> {
        self.keys.get(id).ok_or(Error::IndexOutOfRange { index: id, len: self.keys.len() })
    }

    /// Scaled dot-product logits of `query` against the listed tokens.
    pub fn logits(&self, query: &Embedding, ids: &[usize]) -> Result<Vec<f64>> {
        let keys = ids.iter().map(|&i| self.key(i)).collect::<Result<Vec<_>>>()?;
        scaled_dot_logits(query, keys)
    }

    /// Attention of `query` over the listed tokens, index map = `ids`.
    pub fn attention(&self, query: &Embedding, ids: &[usize]) -> Result<AttentionWeights> {
        AttentionWeights::softmax(&self.logits(query, ids)?, ids.to_vec())
    }

    pub fn all_ids(&self) -> Vec<usize> {
        (0..self.keys.len()).collect()
    }
}

/// A planted relevant region and the step at which it takes attention.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub start_step: usize,
    pub region: Vec<usize>,
    pub duration: Option<usize>,
}

impl Phase {
    /// Steps at which the region must be visible for a run to count as solved.
    pub fn required_steps(&self) -> std::ops::Range<usize> {
        self.start_step..self.start_step + self.duration.unwrap_or(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepQuery {
    pub step: usize,
    pub query: Embedding,
}

/// An immutable, seed-reproducible decode scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub bank: VisualTokenBank,
    pub phases: Vec<Phase>,
    pub total_steps: usize,
    pub beta: f64,
    pub sigma: f64,
    pub seed: u64,
    pub regime: Regime,
    pub n_text: usize,
    /// The config this scenario was built from, with `seed` set to the build seed.
    pub config: ScenarioConfig,
    centroids: Vec<Embedding>,
}

/// Build a scenario; `seed` overrides the config's own seed.
pub fn build_scenario(config: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    config.validate()?;
    let mut key_rng = stream_rng(seed, KEY_STREAM);
    let raw: Vec<Embedding> = (0..config.n_visual)
        .map(|_| {
            let v: Vec<f64> = (0..config.dim).map(|_| StandardNormal.sample(&mut key_rng)).collect();
            Embedding::new(v)
        })
        .collect::<Result<_>>()?;
    let bank = VisualTokenBank::from_raw(raw)?;

    let mut region_rng = stream_rng(seed, REGION_STREAM);
    let mut used = vec![false; bank.len()];
    let mut phases: Vec<Phase> = Vec::with_capacity(config.phases.len());
    for (i, spec) in config.phases.iter().enumerate() {
        let fixed: Vec<usize> = if i == 0 {
            Vec::new()
        } else {
            let prev = &phases[i - 1];
            let shared = config.shared_count(i);
            let c = region_centroid(&bank, &prev.region)?;
            let mut ranked = prev.region.clone();
            ranked.sort_by(|&a, &b| c.dot(&bank.keys[b]).total_cmp(&c.dot(&bank.keys[a])));
            ranked.truncate(shared);
            ranked
        };
        let region = plant_region(&bank, &used, &fixed, spec.region_size, &mut region_rng)?;
        region.iter().for_each(|&t| used[t] = true);
        phases.push(Phase {
            start_step: spec.start,
            region,
            duration: spec.duration,
        });
    }
    let centroids = phases
        .iter()
        .map(|p| region_centroid(&bank, &p.region))
        .collect::<Result<Vec<_>>>()?;

    Ok(Scenario {
        name: config.name.clone(),
        bank,
        phases,
        total_steps: config.steps,
        beta: config.beta,
        sigma: config.sigma,
        seed,
        regime: config.derived_regime(),
        n_text: config.n_text,
        config: ScenarioConfig { seed, ..config.clone() },
        centroids,
    })
}

fn region_centroid(bank: &VisualTokenBank, region: &[usize]) -> Result<Embedding> {
    let mean = Embedding::mean(region.iter().map(|&i| &bank.keys[i]))?;
    mean.normalized().ok_or(Error::ZeroNorm { index: region[0] })
}

/// Grow a compact region: `fixed` members plus the best-aligned free tokens,
/// refined until the member set is stable under its own centroid. Draws that
/// leave some outside token ranked above a member are retried.
fn plant_region(
    bank: &VisualTokenBank,
    used: &[bool],
    fixed: &[usize],
    size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let free: Vec<usize> = (0..bank.len()).filter(|&i| !used[i] && !fixed.contains(&i)).collect();
    let want = size - fixed.len();
    if want == 0 {
        let mut r = fixed.to_vec();
        r.sort_unstable();
        return Ok(r);
    }
    let mut last = None;
    for _ in 0..REGION_ATTEMPTS {
        let &seed_tok = free.choose(rng).ok_or(Error::config("phases", "bank exhausted"))?;
        let mut direction = bank.keys[seed_tok].clone();
        if !fixed.is_empty() {
            let mut members: Vec<usize> = fixed.to_vec();
            members.push(seed_tok);
            direction = region_centroid(bank, &members)?;
        }
        let mut region: Vec<usize> = Vec::new();
        for _ in 0..REFINE_ITERS {
            let mut picks = free.clone();
            picks.sort_by(|&a, &b| {
                direction
                    .dot(&bank.keys[b])
                    .total_cmp(&direction.dot(&bank.keys[a]))
                    .then(a.cmp(&b))
            });
            picks.truncate(want);
            picks.extend_from_slice(fixed);
            picks.sort_unstable();
            if picks == region {
                break;
            }
            region = picks;
            direction = region_centroid(bank, &region)?;
        }
        let min_in = region.iter().map(|&i| direction.dot(&bank.keys[i])).fold(f64::INFINITY, f64::min);
        let max_out = (0..bank.len())
            .filter(|i| !region.contains(i))
            .map(|i| direction.dot(&bank.keys[i]))
            .fold(f64::NEG_INFINITY, f64::max);
        if min_in > max_out {
            return Ok(region);
        }
        last = Some(region);
    }
    Ok(last.expect("at least one attempt"))
}

impl Scenario {
    pub fn n_visual(&self) -> usize {
        self.bank.len()
    }

    pub fn dim(&self) -> usize {
        self.bank.dim()
    }

    /// Index of the phase whose region holds attention at `step`.
    ///
    /// Once an episode's duration has elapsed attention is back on phase 0.
    pub fn focus_phase(&self, step: usize) -> usize {
        let p = self
            .phases
            .iter()
            .rposition(|ph| ph.start_step <= step)
            .unwrap_or(0);
        match self.phases[p].duration {
            Some(d) if step >= self.phases[p].start_step + d => 0,
            _ => p,
        }
    }

    pub fn region_at(&self, step: usize) -> &[usize] {
        &self.phases[self.focus_phase(step)].region
    }

    /// Unit-norm centroid direction of a phase's region.
    pub fn centroid(&self, phase: usize) -> &Embedding {
        &self.centroids[phase]
    }

    /// `q = sqrt(d) * (beta * c + sigma * g)` where `c` is the unit centroid of
    /// the focused region and `g ~ N(0, I)` is seeded by `(seed, step)`.
    ///
    /// The `sqrt(d)` factor cancels the attention temperature, so `beta` is the
    /// logit scale of a perfectly aligned key and `sigma` the per-logit noise.
    pub fn query_at(&self, step: usize) -> Result<StepQuery> {
        if step >= self.total_steps {
            return Err(Error::StepOutOfRange { step, total: self.total_steps });
        }
        let d = self.dim();
        let scale = (d as f64).sqrt();
        let c = self.centroid(self.focus_phase(step));
        let mut values: Vec<f64> = c.as_slice().iter().map(|v| scale * self.beta * v).collect();
        if self.sigma > 0.0 {
            let mut rng = stream_rng(self.seed, NOISE_STREAM_BASE + step as u64);
            for v in values.iter_mut() {
                let g: f64 = StandardNormal.sample(&mut rng);
                *v += scale * self.sigma * g;
            }
        }
        Ok(StepQuery { step, query: Embedding::new(values)? })
    }

    /// Ground-truth full attention over the bank at `step`.
    pub fn oracle_attention(&self, step: usize) -> Result<AttentionWeights> {
        let q = self.query_at(step)?;
        self.bank.attention(&q.query, &self.bank.all_ids())
    }
}

/// Did the pruned run keep the needed evidence visible?
///
/// For every phase, at each step of [`Phase::required_steps`], the active set
/// must hold at least `coverage * |region|` tokens of that phase's region.
/// Shift phases additionally require the same share of the base region, the
/// global context the run has to keep. Step 0 is judged on the prefill set.
pub fn judge_success(scenario: &Scenario, trace: &DecodeTrace, coverage: f64) -> Result<bool> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::config("coverage", "must lie in (0, 1]"));
    }
    check_trace_matches(scenario, trace)?;
    Ok(covers_evidence(scenario, |step| trace.active_at(step), coverage))
}

/// The judging rule over any per-step view of the active set.
pub(crate) fn covers_evidence<'a>(
    scenario: &Scenario,
    active_at: impl Fn(usize) -> &'a [usize],
    coverage: f64,
) -> bool {
    let covers = |active: &[usize], region: &[usize]| {
        let hit = region.iter().filter(|t| active.binary_search(t).is_ok()).count();
        hit as f64 >= coverage * region.len() as f64
    };
    let base = &scenario.phases[0].region;
    for (p, phase) in scenario.phases.iter().enumerate() {
        for step in phase.required_steps() {
            let active = active_at(step);
            if !covers(active, &phase.region) || (p > 0 && !covers(active, base)) {
                return false;
            }
        }
    }
    true
}

pub(crate) fn check_trace_matches(scenario: &Scenario, trace: &DecodeTrace) -> Result<()> {
    if trace.header.seed != scenario.seed {
        return Err(Error::TraceMismatch(format!(
            "seed {} vs scenario seed {}",
            trace.header.seed, scenario.seed
        )));
    }
    if trace.header.total_steps != scenario.total_steps || trace.header.n_visual != scenario.n_visual() {
        return Err(Error::TraceMismatch("shape differs from scenario".into()));
    }
    if trace.records.len() + 1 != scenario.total_steps
        || trace.records.iter().enumerate().any(|(i, r)| r.step != i + 1)
    {
        return Err(Error::TraceMismatch("records must cover steps 1..total_steps".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::top_k;

    fn two_phase(beta: f64, sigma: f64) -> ScenarioConfig {
        ScenarioConfig {
            beta,
            sigma,
            steps: 40,
            phases: vec![
                PhaseSpec { start: 0, region_size: 8, duration: None },
                PhaseSpec { start: 20, region_size: 8, duration: None },
            ],
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn build_is_deterministic() {
        let cfg = two_phase(8.0, 0.3);
        let a = build_scenario(&cfg, 11).unwrap();
        let b = build_scenario(&cfg, 11).unwrap();
        assert_eq!(a.bank, b.bank);
        assert_eq!(a.phases, b.phases);
        assert_eq!(a.query_at(7).unwrap(), b.query_at(7).unwrap());
        let c = build_scenario(&cfg, 12).unwrap();
        assert_ne!(a.bank, c.bank);
    }

    #[test]
    fn keys_are_unit_norm() {
        let s = build_scenario(&ScenarioConfig::default(), 3).unwrap();
        assert!(s.bank.keys().iter().all(|k| (k.norm() - 1.0).abs() < 1e-9));
    }

    #[test]
    fn regime_follows_phase_count() {
        let s = build_scenario(&ScenarioConfig::static_default(), 1).unwrap();
        assert_eq!(s.regime, Regime::Static);
        let s = build_scenario(&two_phase(8.0, 0.0), 1).unwrap();
        assert_eq!(s.regime, Regime::Shifting);
        let mut bad = two_phase(8.0, 0.0);
        bad.regime = Some(Regime::Static);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn invalid_schedules_are_rejected() {
        let mut cfg = two_phase(8.0, 0.0);
        cfg.phases[1].start = 0;
        assert!(build_scenario(&cfg, 0).is_err());
        let mut cfg = two_phase(8.0, 0.0);
        cfg.phases[1].region_size = 0;
        assert!(build_scenario(&cfg, 0).is_err());
        let mut cfg = two_phase(8.0, 0.0);
        cfg.phases[1].start = 40;
        assert!(build_scenario(&cfg, 0).is_err());
        let mut cfg = two_phase(8.0, 0.0);
        cfg.phases[0].start = 1;
        assert!(build_scenario(&cfg, 0).is_err());
        let mut cfg = two_phase(8.0, 0.0);
        cfg.phases[1].duration = Some(21);
        assert!(build_scenario(&cfg, 0).is_err());
    }

    #[test]
    fn regions_are_disjoint_by_default() {
        let cfg = ScenarioConfig::with_episodes("ep", &[(20, 10), (50, 10), (80, 10)]);
        let s = build_scenario(&cfg, 5).unwrap();
        let mut all: Vec<usize> = s.phases.iter().flat_map(|p| p.region.clone()).collect();
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), n);
    }

    #[test]
    fn overlap_shares_tokens_with_previous_region() {
        let mut cfg = two_phase(8.0, 0.0);
        cfg.overlap = 0.5;
        let s = build_scenario(&cfg, 2).unwrap();
        let shared = s.phases[1].region.iter().filter(|t| s.phases[0].region.contains(t)).count();
        assert_eq!(shared, 4);
    }

    #[test]
    fn zero_noise_query_is_scaled_centroid() {
        let s = build_scenario(&two_phase(8.0, 0.0), 4).unwrap();
        let q = s.query_at(3).unwrap().query;
        let expected = s.centroid(0).scaled(8.0 * (64f64).sqrt());
        assert_eq!(q, expected);
        assert_eq!(s.query_at(3).unwrap().query, s.query_at(19).unwrap().query);
    }

    #[test]
    fn phase_boundary_uses_new_region() {
        let s = build_scenario(&two_phase(8.0, 0.0), 4).unwrap();
        assert_eq!(s.focus_phase(19), 0);
        assert_eq!(s.focus_phase(20), 1);
        let q = s.query_at(20).unwrap().query;
        assert_eq!(q, s.centroid(1).scaled(8.0 * 8.0));
    }

    #[test]
    fn episodes_return_to_base() {
        let cfg = ScenarioConfig::with_episodes("ep", &[(20, 5)]);
        let s = build_scenario(&cfg, 0).unwrap();
        assert_eq!(s.focus_phase(19), 0);
        assert_eq!(s.focus_phase(20), 1);
        assert_eq!(s.focus_phase(24), 1);
        assert_eq!(s.focus_phase(25), 0);
    }

    #[test]
    fn step_out_of_range() {
        let s = build_scenario(&two_phase(8.0, 0.0), 4).unwrap();
        assert!(matches!(s.query_at(40), Err(Error::StepOutOfRange { .. })));
        assert!(s.oracle_attention(40).is_err());
    }

    #[test]
    fn zero_query_gives_uniform_oracle() {
        let s = build_scenario(&two_phase(0.0, 0.0), 9).unwrap();
        let w = s.oracle_attention(5).unwrap();
        let u = 1.0 / 144.0;
        assert!(w.weights().iter().all(|&x| (x - u).abs() < 1e-15));
    }

    #[test]
    fn sharp_noise_free_oracle_concentrates_on_region() {
        for seed in 0..20 {
            let s = build_scenario(&two_phase(400.0, 0.0), seed).unwrap();
            for step in [0, 19, 20, 39] {
                let w = s.oracle_attention(step).unwrap();
                let region = s.region_at(step);
                let mass: f64 = region.iter().map(|&t| w.weights()[t]).sum();
                assert!(mass > 0.99, "seed {seed} step {step} mass {mass}");
                assert_eq!(top_k(w.weights(), region.len()).unwrap(), region);
            }
        }
    }

    #[test]
    fn oracle_argmax_changes_only_at_boundaries() {
        for seed in 0..10 {
            let s = build_scenario(&two_phase(50.0, 0.0), seed).unwrap();
            let argmax = |step| top_k(s.oracle_attention(step).unwrap().weights(), 8).unwrap();
            let first = argmax(0);
            for step in 1..40 {
                let now = argmax(step);
                assert_eq!(now == first, step < 20, "seed {seed} step {step}");
            }
        }
    }
}
