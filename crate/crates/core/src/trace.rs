//! Line-delimited JSON trace files.
//!
//! Line 1 is the header (`"kind": "header"`), then one `"kind": "step"` line
//! per decode step in increasing step order, then a `"kind": "summary"` line.
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces the in-memory trace exactly.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{DecodeTrace, StepRecord, TraceHeader, TraceSummary, TRACE_FORMAT_VERSION};
use crate::error::{Error, Result};

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LineRef<'a> {
    Header(&'a TraceHeader),
    Step(&'a StepRecord),
    Summary(&'a TraceSummary),
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line {
    Header(Box<TraceHeader>),
    Step(StepRecord),
    Summary(TraceSummary),
}

pub fn write_jsonl<W: Write>(trace: &DecodeTrace, mut out: W) -> Result<()> {
    let mut line = |l: LineRef<'_>| -> Result<()> {
        serde_json::to_writer(&mut out, &l)?;
        out.write_all(b"\n").map_err(|e| Error::io("<trace writer>", e))
    };
    line(LineRef::Header(&trace.header))?;
    for r in &trace.records {
        line(LineRef::Step(r))?;
    }
    line(LineRef::Summary(&trace.summary))
}

pub fn to_jsonl_string(trace: &DecodeTrace) -> Result<String> {
    let mut buf = Vec::new();
    write_jsonl(trace, &mut buf)?;
    Ok(String::from_utf8(buf).expect("serde_json emits utf-8"))
}

/// Parse a trace. `origin` only labels error messages.
pub fn read_jsonl<R: BufRead>(input: R, origin: &Path) -> Result<DecodeTrace> {
    let bad = |reason: String| Error::MalformedTrace { path: origin.to_path_buf(), reason };
    let mut header = None;
    let mut records: Vec<StepRecord> = Vec::new();
    let mut summary = None;
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 {
            // check the version before the full parse so that a future layout
            // fails with a version error rather than a field error
            let raw: serde_json::Value = serde_json::from_str(&line).map_err(|e| bad(format!("line 1: {e}")))?;
            match raw.get("format_version").and_then(|v| v.as_u64()) {
                Some(v) if v == TRACE_FORMAT_VERSION as u64 => {}
                Some(v) => {
                    return Err(Error::FormatVersion { found: v as u32, expected: TRACE_FORMAT_VERSION });
                }
                None => return Err(bad("header has no format_version".into())),
            }
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| bad(format!("line {}: {e}", i + 1)))?;
        match parsed {
            Line::Header(h) if i == 0 => header = Some(*h),
            Line::Header(_) => return Err(bad(format!("line {}: second header", i + 1))),
            _ if header.is_none() => return Err(bad("first line is not a header".into())),
            _ if summary.is_some() => return Err(bad(format!("line {}: content after summary", i + 1))),
            Line::Step(r) => {
                if records.last().is_some_and(|p| p.step >= r.step) {
                    return Err(bad(format!("line {}: step {} out of order", i + 1, r.step)));
                }
                records.push(r);
            }
            Line::Summary(s) => summary = Some(s),
        }
    }
    let header = header.ok_or_else(|| bad("empty file".into()))?;
    let summary = summary.ok_or_else(|| bad("missing summary line".into()))?;
    Ok(DecodeTrace { header, records, summary })
}

pub fn write_trace(path: &Path, trace: &DecodeTrace) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_jsonl(trace, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<DecodeTrace> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(BufReader::new(file), path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_sample, EngineConfig, RunSpec};
    use crate::scenario::ScenarioConfig;

    fn sample() -> DecodeTrace {
        let cfg = EngineConfig { record_full_attention: true, ..EngineConfig::default() };
        let sc = ScenarioConfig::with_episodes("ep", &[(20, 8)]);
        let sc = ScenarioConfig { steps: 40, ..sc };
        run_sample(&RunSpec::pruned("x", sc, cfg), 3).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let t = sample();
        let text = to_jsonl_string(&t).unwrap();
        let back = read_jsonl(text.as_bytes(), Path::new("mem")).unwrap();
        assert_eq!(back, t);
        assert_eq!(to_jsonl_string(&back).unwrap(), text);

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        write_trace(&p, &t).unwrap();
        assert_eq!(read_trace(&p).unwrap(), t);
    }

    #[test]
    fn version_mismatch_is_an_error() {
        let text = to_jsonl_string(&sample()).unwrap();
        let bumped = text.replacen("\"format_version\":1", "\"format_version\":2", 1);
        assert!(matches!(
            read_jsonl(bumped.as_bytes(), Path::new("mem")),
            Err(Error::FormatVersion { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn structural_errors() {
        let text = to_jsonl_string(&sample()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let no_summary = lines[..lines.len() - 1].join("\n");
        assert!(read_jsonl(no_summary.as_bytes(), Path::new("m")).is_err());
        let swapped = [lines[0], lines[2], lines[1]].join("\n");
        assert!(read_jsonl(swapped.as_bytes(), Path::new("m")).is_err());
        let headless = lines[1..].join("\n");
        assert!(read_jsonl(headless.as_bytes(), Path::new("m")).is_err());
        assert!(read_jsonl("".as_bytes(), Path::new("m")).is_err());
    }
}
