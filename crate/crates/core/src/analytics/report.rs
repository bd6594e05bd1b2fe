use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::*;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthBin {
    pub lo: usize,
    pub hi: usize,
    pub mean_events: Option<f64>,
}

/// Every batch diagnostic at one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchReport {
    pub tau: f64,
    pub traces: usize,
    pub rvis_histogram: [usize; RVIS_BINS],
    pub success_by_rvis: [Option<f64>; RVIS_BINS],
    pub rvis_by_length: Vec<LengthBin>,
    pub temporal: [usize; TEMPORAL_BINS],
    pub retention: Vec<(f64, f64)>,
    pub mean_entropy: Option<f64>,
    pub mean_pairwise_diversity: Option<f64>,
    pub mean_active_ratio: f64,
}

pub const RETENTION_THRESHOLDS: [f64; 6] = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95];

const BIN_LABELS: [&str; RVIS_BINS] = ["0", "1", "2", "3+"];

impl BatchReport {
    /// Entropy and diversity need recorded attention; they are left empty
    /// when any event step lacks it. Success-by-bin is left empty for
    /// unjudged traces. Length buckets default to one bucket over the batch.
    pub fn build(traces: &[DecodeTrace], tau: f64, length_edges: Option<&[usize]>) -> Result<Self> {
        if traces.is_empty() {
            return Err(Error::Empty("trace batch"));
        }
        let edges: Vec<usize> = match length_edges {
            Some(e) => e.to_vec(),
            None => {
                let lo = traces.iter().map(|t| t.header.total_steps).min().unwrap_or(0);
                let hi = traces.iter().map(|t| t.header.total_steps).max().unwrap_or(0);
                vec![lo, hi.max(lo + 1)]
            }
        };
        let by_length = rvis_by_length_bins(traces, &edges, tau)?;
        let success_by_rvis = match success_rate_by_rvis(traces, tau) {
            Ok(r) => r,
            Err(Error::TraceMismatch(_)) => [None; RVIS_BINS],
            Err(e) => return Err(e),
        };
        let optional = |r: Result<Option<f64>>| match r {
            Ok(v) => Ok(v),
            Err(Error::MissingAttention { .. }) => Ok(None),
            Err(e) => Err(e),
        };
        let retention = retention_above_threshold(traces, &RETENTION_THRESHOLDS)?;
        Ok(Self {
            tau,
            traces: traces.len(),
            rvis_histogram: rvis_distribution(traces, tau)?,
            success_by_rvis,
            rvis_by_length: edges
                .windows(2)
                .zip(by_length)
                .map(|(w, mean_events)| LengthBin { lo: w[0], hi: w[1], mean_events })
                .collect(),
            temporal: temporal_distribution(traces, tau)?,
            retention: RETENTION_THRESHOLDS.iter().copied().zip(retention).collect(),
            mean_entropy: optional(event_spatial_entropy(traces, tau))?,
            mean_pairwise_diversity: optional(pairwise_diversity(traces, tau))?,
            mean_active_ratio: traces.iter().map(average_active_ratio).sum::<f64>() / traces.len() as f64,
        })
    }

    /// Write one CSV per table into `dir` and return the paths written.
    ///
    /// | file | columns |
    /// |---|---|
    /// | `rvis_histogram.csv` | `events,traces` |
    /// | `success_by_rvis.csv` | `events,success_rate` |
    /// | `rvis_by_length.csv` | `min_steps,max_steps,mean_events` |
    /// | `temporal.csv` | `bin,progress_lo,progress_hi,events` |
    /// | `retention.csv` | `threshold,proportion` |
    /// | `summary.csv` | `tau,traces,mean_entropy,mean_pairwise_diversity,mean_active_ratio` |
    pub fn write_csv(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let mut table = |name: &str, header: &[&str], rows: Vec<Vec<String>>| -> Result<()> {
            let path = dir.join(name);
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(header)?;
            for r in rows {
                w.write_record(&r)?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            written.push(path);
            Ok(())
        };
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();

        table(
            "rvis_histogram.csv",
            &["events", "traces"],
            BIN_LABELS.iter().zip(self.rvis_histogram).map(|(l, c)| vec![l.to_string(), c.to_string()]).collect(),
        )?;
        table(
            "success_by_rvis.csv",
            &["events", "success_rate"],
            BIN_LABELS.iter().zip(self.success_by_rvis).map(|(l, r)| vec![l.to_string(), opt(r)]).collect(),
        )?;
        table(
            "rvis_by_length.csv",
            &["min_steps", "max_steps", "mean_events"],
            self.rvis_by_length
                .iter()
                .map(|b| vec![b.lo.to_string(), b.hi.to_string(), opt(b.mean_events)])
                .collect(),
        )?;
        table(
            "temporal.csv",
            &["bin", "progress_lo", "progress_hi", "events"],
            self.temporal
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let w = 1.0 / TEMPORAL_BINS as f64;
                    vec![i.to_string(), (i as f64 * w).to_string(), ((i + 1) as f64 * w).to_string(), c.to_string()]
                })
                .collect(),
        )?;
        table(
            "retention.csv",
            &["threshold", "proportion"],
            self.retention.iter().map(|(t, p)| vec![t.to_string(), p.to_string()]).collect(),
        )?;
        table(
            "summary.csv",
            &["tau", "traces", "mean_entropy", "mean_pairwise_diversity", "mean_active_ratio"],
            vec![vec![
                self.tau.to_string(),
                self.traces.to_string(),
                opt(self.mean_entropy),
                opt(self.mean_pairwise_diversity),
                self.mean_active_ratio.to_string(),
            ]],
        )?;
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::with_events;
    use super::*;

    #[test]
    fn report_conserves_counts_and_writes_tables() {
        let batch: Vec<_> = [0, 1, 1, 4].iter().map(|&c| with_events(c, 20)).collect();
        let r = BatchReport::build(&batch, 0.7, None).unwrap();
        assert_eq!(r.rvis_histogram.iter().sum::<usize>(), 4);
        assert_eq!(r.rvis_histogram, [1, 2, 0, 1]);
        assert_eq!(r.mean_entropy, None);
        assert_eq!(r.rvis_by_length.len(), 1);
        assert!(r.success_by_rvis.iter().flatten().all(|&x| (0.0..=1.0).contains(&x)));

        let dir = tempfile::tempdir().unwrap();
        let files = r.write_csv(dir.path()).unwrap();
        assert_eq!(files.len(), 6);
        let hist = fs::read_to_string(dir.path().join("rvis_histogram.csv")).unwrap();
        assert_eq!(hist, "events,traces\n0,1\n1,2\n2,0\n3+,1\n");
        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert!(summary.starts_with("tau,traces,mean_entropy,mean_pairwise_diversity,mean_active_ratio\n0.7,4,,,1\n"));
    }

    #[test]
    fn single_trace_report_is_well_formed() {
        let r = BatchReport::build(&[with_events(2, 10)], 0.7, None).unwrap();
        assert_eq!(r.rvis_histogram, [0, 0, 1, 0]);
        assert_eq!(r.temporal.iter().sum::<usize>(), 2);
        assert!(BatchReport::build(&[], 0.7, None).is_err());
    }
}
