//! Experiment files (TOML).
//!
//! ```toml
//! seed = 0
//! batch_size = 50
//!
//! [[scenarios]]
//! name = "two-episodes"
//! steps = 128
//! phases = [
//!     { start = 0, region_size = 8 },
//!     { start = 20, region_size = 8, duration = 8 },
//!     { start = 64, region_size = 8, duration = 12 },
//! ]
//!
//! [engine.prune]
//! ratio = 0.3333333333333333
//!
//! [engine.swap]
//! duration = 20
//!
//! [[sweep]]
//! axis = "L"
//! values = [0, 1, 5, 10, 20, 40]
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::EngineConfig;
use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;

/// Overrides the default output directory.
pub const OUT_DIR_ENV: &str = "SWAPPRUNE_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "swapprune-out";

/// `$SWAPPRUNE_OUT_DIR`, else `./swapprune-out`.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Engine parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "tau")]
    Tau,
    /// Window length.
    #[serde(rename = "L", alias = "duration")]
    Duration,
    #[serde(rename = "k_dec")]
    KDec,
    #[serde(rename = "ratio")]
    Ratio,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Tau => "tau",
            Axis::Duration => "L",
            Axis::KDec => "k_dec",
            Axis::Ratio => "ratio",
        }
    }

    /// Set this axis on `engine`. Integer axes reject fractional values.
    pub fn apply(self, engine: &mut EngineConfig, value: f64) -> Result<()> {
        let count = |field: &str| -> Result<usize> {
            if value.is_finite() && value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::config(field, format!("`{value}` is not a non-negative integer")))
            }
        };
        match self {
            Axis::Tau => engine.detect.tau = value,
            Axis::Duration => engine.swap.duration = count("sweep.L")?,
            Axis::KDec => engine.swap.k_dec = Some(count("sweep.k_dec")?),
            Axis::Ratio => {
                engine.prune.k = None;
                engine.prune.ratio = Some(value);
            }
        }
        engine.validate()
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau" => Ok(Axis::Tau),
            "L" | "duration" => Ok(Axis::Duration),
            "k_dec" => Ok(Axis::KDec),
            "ratio" => Ok(Axis::Ratio),
            other => Err(Error::config("axis", format!("unknown axis `{other}` (tau, L, k_dec, ratio)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub axis: Axis,
    pub values: Vec<f64>,
}

fn default_batch_size() -> usize {
    20
}

fn default_analysis_tau() -> f64 {
    0.7
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Where commands write; falls back to [`default_out_dir`].
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_analysis_tau")]
    pub tau: f64,
    /// `total_steps` bucket edges for the events-by-length table.
    #[serde(default)]
    pub length_edges: Option<Vec<usize>>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { tau: default_analysis_tau(), length_edges: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// First seed; a batch uses `seed..seed + batch_size`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Shorthand for a single entry of `scenarios`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scenarios: Vec<ScenarioConfig>,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepAxis>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            batch_size: default_batch_size(),
            scenario: Some(ScenarioConfig::default()),
            scenarios: Vec::new(),
            engine: EngineConfig::default(),
            output: OutputConfig::default(),
            analysis: AnalysisConfig::default(),
            sweep: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// `scenario` followed by `scenarios`.
    pub fn scenario_list(&self) -> Vec<ScenarioConfig> {
        self.scenario.iter().chain(&self.scenarios).cloned().collect()
    }

    pub fn seeds(&self, seed_override: Option<u64>) -> Vec<u64> {
        let first = seed_override.unwrap_or(self.seed);
        (0..self.batch_size as u64).map(|i| first + i).collect()
    }

    pub fn out_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(default_out_dir)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        let scenarios = self.scenario_list();
        if scenarios.is_empty() {
            return Err(Error::config("scenarios", "need at least one scenario"));
        }
        let mut names: Vec<&str> = scenarios.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("scenarios.name", "scenario names must be unique"));
        }
        for s in &scenarios {
            s.validate()?;
            if s.name.is_empty() || s.name.contains(['/', '\\']) {
                return Err(Error::config("scenario.name", "must be a non-empty file-name-safe string"));
            }
        }
        self.engine.validate()?;
        if !(0.0..=1.0).contains(&self.analysis.tau) {
            return Err(Error::config("analysis.tau", "must lie in [0, 1]"));
        }
        for sw in &self.sweep {
            if sw.values.is_empty() {
                return Err(Error::config(format!("sweep.{}", sw.axis), "no values"));
            }
            for &v in &sw.values {
                sw.axis.apply(&mut self.engine.clone(), v)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::Detector;

    const SAMPLE: &str = r#"
seed = 7
batch_size = 4

[[scenarios]]
name = "calm"

[[scenarios]]
name = "episodes"
steps = 96
phases = [
    { start = 0, region_size = 8 },
    { start = 30, region_size = 8, duration = 6 },
]

[engine]
coverage = 0.5

[engine.prune]
strategy = "topk"
k = 48

[engine.detect]
tau = 0.75
detector = "risd"

[engine.swap]
strategy = "cpts"
duration = 20

[[sweep]]
axis = "L"
values = [0, 5, 20]
"#;

    #[test]
    fn parses_sample() {
        let cfg = ExperimentConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(cfg.seeds(None), vec![7, 8, 9, 10]);
        assert_eq!(cfg.seeds(Some(100))[0], 100);
        let s = cfg.scenario_list();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].n_visual, 144);
        assert_eq!(s[1].phases[1].duration, Some(6));
        assert_eq!(cfg.engine.prune.k, Some(48));
        assert_eq!(cfg.engine.detect.detector, Detector::Risd);
        assert_eq!(cfg.sweep[0].axis, Axis::Duration);
        assert_eq!(cfg.analysis.tau, 0.7);
    }

    #[test]
    fn field_level_errors() {
        let bad = SAMPLE.replace("tau = 0.75", "tau = 1.5");
        let err = ExperimentConfig::from_toml_str(&bad).unwrap_err();
        assert!(err.to_string().contains("detect.tau"), "{err}");

        let both = SAMPLE.replace("k = 48", "k = 48\nratio = 0.5");
        assert!(ExperimentConfig::from_toml_str(&both).is_err());

        let typo = SAMPLE.replace("batch_size", "batchsize");
        assert!(matches!(ExperimentConfig::from_toml_str(&typo), Err(Error::Toml(_))));

        let frac = SAMPLE.replace("values = [0, 5, 20]", "values = [2.5]");
        assert!(ExperimentConfig::from_toml_str(&frac).is_err());

        let dup = SAMPLE.replace("name = \"episodes\"", "name = \"calm\"");
        assert!(ExperimentConfig::from_toml_str(&dup).is_err());
    }

    #[test]
    fn axis_names() {
        for a in [Axis::Tau, Axis::Duration, Axis::KDec, Axis::Ratio] {
            assert_eq!(a.as_str().parse::<Axis>().unwrap(), a);
        }
        assert_eq!("duration".parse::<Axis>().unwrap(), Axis::Duration);
        assert!("beta".parse::<Axis>().is_err());
        let mut e = EngineConfig::default();
        Axis::Ratio.apply(&mut e, 2.0 / 9.0).unwrap();
        assert_eq!(e.prune.ratio, Some(2.0 / 9.0));
        assert!(Axis::KDec.apply(&mut e, 0.0).is_err());
    }
}
