//! Long-format patient CSV: `patient_id,disease,day,value`, one row per
//! measurement, `#` comment lines allowed.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{open_reader, with_writer, OutputMeta};
use crate::error::{Error, Result};
use crate::model::Patient;

pub const HEADER: [&str; 4] = ["patient_id", "disease", "day", "value"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Replace every value by its natural logarithm.
    pub log: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    /// Patients in order of first appearance, each sorted by day.
    pub patients: Vec<Patient>,
    pub warnings: Vec<String>,
}

fn parse_disease(s: &str) -> std::result::Result<Option<bool>, String> {
    match s.to_ascii_lowercase().as_str() {
        "" | "na" => Ok(None),
        "1" | "true" => Ok(Some(true)),
        "0" | "false" => Ok(Some(false)),
        other => Err(format!("disease must be 0, 1 or blank, got {other:?}")),
    }
}

fn parse_number(s: &str, what: &str) -> std::result::Result<f64, String> {
    let v: f64 = s
        .parse()
        .map_err(|_| format!("{what} is not a number: {s:?}"))?;
    if !v.is_finite() {
        return Err(format!("{what} is not finite: {s:?}"));
    }
    Ok(v)
}

/// One-based line number of the record starting at byte offset `byte`. The
/// csv crate reports positions before any skipped blank lines.
pub(crate) fn line_at(bytes: &[u8], byte: u64) -> u64 {
    let mut end = (byte as usize).min(bytes.len());
    while end < bytes.len() && matches!(bytes[end], b'\n' | b'\r') {
        end += 1;
    }
    1 + bytes[..end].iter().filter(|&&b| b == b'\n').count() as u64
}

struct Group {
    id: String,
    disease: Option<bool>,
    rows: Vec<(f64, f64)>,
}

/// Parses the long-format CSV from any reader. `source` names the input in
/// error messages. Duplicate `(patient, day)` rows are averaged with a warning.
pub fn parse_longitudinal<R: Read>(reader: R, source: &str, opts: LoadOptions) -> Result<LoadedData> {
    let perr = |line: u64, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut bytes = Vec::new();
    let mut reader = reader;
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| perr(0, e.to_string()))?;
    let line_of = |pos: Option<&csv::Position>| pos.map_or(0, |p| line_at(&bytes, p.byte()));
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(bytes.as_slice());
    let headers = rdr
        .headers()
        .map_err(|e| perr(line_of(e.position()), e.to_string()))?
        .clone();
    let names: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();
    if names != HEADER {
        return Err(perr(
            line_of(headers.position()),
            format!("expected header {}, got {}", HEADER.join(","), names.join(",")),
        ));
    }

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<Group> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| perr(line_of(e.position()), e.to_string()))?;
        let line = line_of(rec.position());
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(perr(line, "empty patient_id".into()));
        }
        let disease = parse_disease(&rec[1]).map_err(|m| perr(line, m))?;
        let day = parse_number(&rec[2], "day").map_err(|m| perr(line, m))?;
        let mut value = parse_number(&rec[3], "value").map_err(|m| perr(line, m))?;
        if opts.log {
            if value <= 0.0 {
                return Err(perr(line, format!("cannot take the log of {value}")));
            }
            value = value.ln();
        }
        let k = *index.entry(id.clone()).or_insert_with(|| {
            groups.push(Group {
                id,
                disease: None,
                rows: Vec::new(),
            });
            groups.len() - 1
        });
        let g = &mut groups[k];
        match (g.disease, disease) {
            (Some(a), Some(b)) if a != b => {
                return Err(perr(line, format!("patient {} has conflicting disease labels", g.id)))
            }
            (None, Some(b)) => g.disease = Some(b),
            _ => {}
        }
        g.rows.push((day, value));
    }

    let mut warnings = Vec::new();
    let mut patients = Vec::with_capacity(groups.len());
    for mut g in groups {
        g.rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut times: Vec<f64> = Vec::with_capacity(g.rows.len());
        let mut values: Vec<f64> = Vec::with_capacity(g.rows.len());
        let mut i = 0;
        while i < g.rows.len() {
            let day = g.rows[i].0;
            let mut j = i;
            let mut sum = 0.0;
            while j < g.rows.len() && g.rows[j].0 == day {
                sum += g.rows[j].1;
                j += 1;
            }
            if j - i > 1 {
                let msg = format!(
                    "patient {}: {} rows at day {day} averaged",
                    g.id,
                    j - i
                );
                log::warn!("{source}: {msg}");
                warnings.push(msg);
            }
            times.push(day);
            values.push(sum / (j - i) as f64);
            i = j;
        }
        patients.push(Patient::new(g.id, g.disease, times, values)?);
    }
    Ok(LoadedData { patients, warnings })
}

pub fn load_longitudinal_csv(path: &Path, opts: LoadOptions) -> Result<LoadedData> {
    parse_longitudinal(open_reader(path)?, &path.display().to_string(), opts)
}

/// Writes patients in long format. Values use the shortest representation
/// that parses back to the same `f64`.
pub fn write_longitudinal<W: Write + ?Sized>(
    w: &mut W,
    patients: &[Patient],
    meta: Option<&OutputMeta>,
) -> std::io::Result<()> {
    if let Some(m) = meta {
        writeln!(w, "{}", m.comment_line())?;
    }
    writeln!(w, "{}", HEADER.join(","))?;
    for p in patients {
        let d = match p.disease {
            Some(true) => "1",
            Some(false) => "0",
            None => "",
        };
        let id = if p.id.contains([',', '"', '\n', '\r']) || p.id.starts_with('#') {
            format!("\"{}\"", p.id.replace('"', "\"\""))
        } else {
            p.id.clone()
        };
        for (t, y) in p.times.iter().zip(&p.values) {
            writeln!(w, "{id},{d},{t:?},{y:?}")?;
        }
    }
    Ok(())
}

pub fn write_longitudinal_csv(path: &Path, patients: &[Patient], meta: &OutputMeta) -> Result<()> {
    if let Some(p) = patients.iter().find(|p| p.n_obs() == 0) {
        return Err(Error::InvalidData(format!(
            "patient {} has no observations and cannot be written in long format",
            p.id
        )));
    }
    with_writer(path, |w| write_longitudinal(w, patients, Some(meta)))
}
