//! JSON-lines posterior traces.
//!
//! Line 1 is a header, then one line per retained draw, then a summary line.
//! Every line is an object with a `type` field (`header`, `draw`, `summary`).

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{open_reader, with_writer, OutputMeta};
use crate::error::{Error, Result};
use crate::mcmc::two_component::TwoComponentAcceptance;
use crate::mcmc::{Draw, PosteriorTrace, TraceDiagnostics, TwoComponentDraw, TwoComponentTrace};

pub const TRACE_FORMAT: &str = "bnplc-trace/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceKind {
    Mixture,
    TwoComponent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub version: String,
    pub kind: TraceKind,
    pub seed: u64,
    pub config_hash: String,
    /// The full configuration that produced the trace.
    #[serde(default)]
    pub config: Value,
    pub patient_ids: Vec<String>,
    /// Absent for two-component traces.
    #[serde(default)]
    pub truncation: Option<usize>,
    pub burn_in: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub n_draws: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<TraceDiagnostics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptance: Option<TwoComponentAcceptance>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceFile {
    Mixture {
        header: TraceHeader,
        trace: PosteriorTrace,
    },
    TwoComponent {
        header: TraceHeader,
        trace: TwoComponentTrace,
    },
}

impl TraceFile {
    pub fn header(&self) -> &TraceHeader {
        match self {
            TraceFile::Mixture { header, .. } | TraceFile::TwoComponent { header, .. } => header,
        }
    }
}

#[derive(Serialize)]
struct Tagged<'a, T: Serialize> {
    #[serde(rename = "type")]
    kind: &'static str,
    #[serde(flatten)]
    body: &'a T,
}

fn line<W: Write + ?Sized, T: Serialize>(w: &mut W, kind: &'static str, body: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, &Tagged { kind, body })?;
    w.write_all(b"\n")
}

fn header_for(meta: &OutputMeta, config: Value, kind: TraceKind, ids: &[String], truncation: Option<usize>, burn_in: usize) -> TraceHeader {
    TraceHeader {
        format: TRACE_FORMAT.to_string(),
        version: meta.version.clone(),
        kind,
        seed: meta.seed,
        config_hash: meta.config_hash.clone(),
        config,
        patient_ids: ids.to_vec(),
        truncation,
        burn_in,
    }
}

/// Serialises either kind of trace to any writer.
pub fn write_trace_to<W: Write + ?Sized>(
    w: &mut W,
    file: &TraceFile,
) -> std::io::Result<()> {
    match file {
        TraceFile::Mixture { header, trace } => {
            line(w, "header", header)?;
            for d in &trace.draws {
                line(w, "draw", d)?;
            }
            line(
                w,
                "summary",
                &TraceSummary {
                    n_draws: trace.draws.len(),
                    diagnostics: Some(trace.diagnostics.clone()),
                    acceptance: None,
                },
            )
        }
        TraceFile::TwoComponent { header, trace } => {
            line(w, "header", header)?;
            for d in &trace.draws {
                line(w, "draw", d)?;
            }
            line(
                w,
                "summary",
                &TraceSummary {
                    n_draws: trace.draws.len(),
                    diagnostics: None,
                    acceptance: Some(trace.acceptance.clone()),
                },
            )
        }
    }
}

impl TraceFile {
    pub fn mixture<C: Serialize>(trace: PosteriorTrace, config: &C) -> Self {
        let meta = OutputMeta::new(trace.seed, config);
        let cfg = serde_json::to_value(config).unwrap_or(Value::Null);
        let header = header_for(&meta, cfg, TraceKind::Mixture, &trace.patient_ids, Some(trace.truncation), trace.burn_in);
        TraceFile::Mixture { header, trace }
    }

    pub fn two_component<C: Serialize>(trace: TwoComponentTrace, config: &C) -> Self {
        let meta = OutputMeta::new(trace.seed, config);
        let cfg = serde_json::to_value(config).unwrap_or(Value::Null);
        let header = header_for(&meta, cfg, TraceKind::TwoComponent, &trace.patient_ids, None, trace.burn_in);
        TraceFile::TwoComponent { header, trace }
    }
}

/// Writes a trace file, gzip-compressed when the path ends in `.gz`.
pub fn write_trace(path: &Path, file: &TraceFile) -> Result<()> {
    with_writer(path, |w| write_trace_to(w, file))
}

fn take_line(value: Value, expected: &str) -> std::result::Result<Value, String> {
    let mut obj = match value {
        Value::Object(m) => m,
        _ => return Err("line is not a JSON object".into()),
    };
    match obj.remove("type") {
        Some(Value::String(t)) if t == expected => Ok(Value::Object(obj)),
        Some(Value::String(t)) => Err(format!("expected a {expected} line, found {t}")),
        _ => Err("missing \"type\" field".into()),
    }
}

fn line_type(value: &Value) -> Option<&str> {
    value.get("type").and_then(Value::as_str)
}

/// Parses a trace from an uncompressed reader and checks its structure.
pub fn parse_trace<R: Read>(reader: R, source: &str) -> Result<TraceFile> {
    let perr = |line: u64, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut lines = Vec::new();
    for (i, l) in BufReader::new(reader).lines().enumerate() {
        let l = l.map_err(|e| perr(i as u64 + 1, e.to_string()))?;
        if l.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&l).map_err(|e| perr(i as u64 + 1, e.to_string()))?;
        lines.push((i as u64 + 1, v));
    }
    let mut iter = lines.into_iter();
    let (hline, hval) = iter.next().ok_or_else(|| perr(1, "empty trace".into()))?;
    let header: TraceHeader = serde_json::from_value(take_line(hval, "header").map_err(|m| perr(hline, m))?)
        .map_err(|e| perr(hline, e.to_string()))?;
    if header.format != TRACE_FORMAT {
        return Err(perr(hline, format!("unsupported trace format {:?}", header.format)));
    }
    let n = header.patient_ids.len();

    let mut rest: Vec<(u64, Value)> = iter.collect();
    let (sline, sval) = match rest.pop() {
        Some(s) if line_type(&s.1) == Some("summary") => s,
        Some((l, _)) => return Err(perr(l, "trace does not end with a summary line".into())),
        None => return Err(perr(hline, "trace has no summary line".into())),
    };
    let summary: TraceSummary = serde_json::from_value(take_line(sval, "summary").map_err(|m| perr(sline, m))?)
        .map_err(|e| perr(sline, e.to_string()))?;
    if summary.n_draws != rest.len() {
        return Err(perr(
            sline,
            format!("summary declares {} draws, found {}", summary.n_draws, rest.len()),
        ));
    }

    match header.kind {
        TraceKind::Mixture => {
            let h = header
                .truncation
                .ok_or_else(|| perr(hline, "mixture trace without truncation".into()))?;
            let mut draws = Vec::with_capacity(rest.len());
            for (l, v) in rest {
                let d: Draw = serde_json::from_value(take_line(v, "draw").map_err(|m| perr(l, m))?)
                    .map_err(|e| perr(l, e.to_string()))?;
                if d.state.assignments.len() != n {
                    return Err(perr(l, format!("draw has {} assignments for {n} patients", d.state.assignments.len())));
                }
                if d.state.truncation() != h {
                    return Err(perr(l, format!("draw has {} clusters, header says {h}", d.state.truncation())));
                }
                d.state.check_invariants().map_err(|e| perr(l, e.to_string()))?;
                draws.push(d);
            }
            let trace = PosteriorTrace {
                patient_ids: header.patient_ids.clone(),
                truncation: h,
                burn_in: header.burn_in,
                seed: header.seed,
                draws,
                diagnostics: summary.diagnostics.unwrap_or_default(),
            };
            Ok(TraceFile::Mixture { header, trace })
        }
        TraceKind::TwoComponent => {
            let mut draws = Vec::with_capacity(rest.len());
            for (l, v) in rest {
                let d: TwoComponentDraw = serde_json::from_value(take_line(v, "draw").map_err(|m| perr(l, m))?)
                    .map_err(|e| perr(l, e.to_string()))?;
                if !(0.0..=1.0).contains(&d.state.phi) {
                    return Err(perr(l, format!("phi {} outside [0,1]", d.state.phi)));
                }
                for g in &d.state.groups {
                    if !g.traj.is_finite() {
                        return Err(perr(l, "non-finite trajectory".into()));
                    }
                    g.dep.validate().map_err(|e| perr(l, e.to_string()))?;
                }
                draws.push(d);
            }
            let trace = TwoComponentTrace {
                patient_ids: header.patient_ids.clone(),
                burn_in: header.burn_in,
                seed: header.seed,
                draws,
                acceptance: summary.acceptance.unwrap_or_default(),
            };
            Ok(TraceFile::TwoComponent { header, trace })
        }
    }
}

pub fn read_trace(path: &Path) -> Result<TraceFile> {
    parse_trace(open_reader(path)?, &path.display().to_string())
}
