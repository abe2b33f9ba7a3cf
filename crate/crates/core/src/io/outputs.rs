//! Partition, dendrogram, index, prediction, study and cluster-summary files.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::data::line_at;
use super::{open_reader, with_writer, OutputMeta};
use crate::dist::quantile_sorted;
use crate::error::{Error, Result};
use crate::mcmc::PosteriorTrace;
use crate::model::{eval_trajectory, TrajectoryParams};
use crate::partition::{Dendrogram, PartitionEstimate, PartitionMethod};
use crate::simulation::StudyReport;

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) || s.starts_with('#') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn check_ids(ids: &[String], n: usize) -> Result<()> {
    if ids.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} patient ids for {n} entries",
            ids.len()
        )));
    }
    Ok(())
}

/// A partition read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionFile {
    /// From a `# method=<tag>` comment, when present.
    pub method: Option<PartitionMethod>,
    pub patient_ids: Vec<String>,
    pub labels: Vec<usize>,
}

pub fn write_partition_csv(
    path: &Path,
    patient_ids: &[String],
    est: &PartitionEstimate,
    meta: &OutputMeta,
) -> Result<()> {
    check_ids(patient_ids, est.labels.len())?;
    with_writer(path, |w| {
        writeln!(w, "{}", meta.comment_line())?;
        writeln!(w, "# method={}", est.method)?;
        writeln!(w, "patient_id,cluster_label")?;
        for (id, l) in patient_ids.iter().zip(&est.labels) {
            writeln!(w, "{},{l}", csv_field(id))?;
        }
        Ok(())
    })
}

/// Parses a `patient_id,cluster_label` file. Labels must be positive
/// integers and ids unique.
pub fn parse_partition_csv<R: Read>(reader: R, source: &str) -> Result<PartitionFile> {
    let perr = |line: u64, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut text = String::new();
    let mut reader = reader;
    reader
        .read_to_string(&mut text)
        .map_err(|e| perr(0, e.to_string()))?;
    let line_of = |pos: Option<&csv::Position>| pos.map_or(0, |p| line_at(text.as_bytes(), p.byte()));
    let mut method = None;
    for l in text.lines() {
        let l = l.trim();
        if !l.starts_with('#') {
            break;
        }
        if let Some(tag) = l.trim_start_matches('#').trim().strip_prefix("method=") {
            method = Some(tag.trim().parse::<PartitionMethod>().map_err(|e| perr(0, e.to_string()))?);
        }
    }
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| perr(line_of(e.position()), e.to_string()))?
        .clone();
    let names: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();
    if names != ["patient_id", "cluster_label"] {
        return Err(perr(
            line_of(headers.position()),
            format!("expected header patient_id,cluster_label, got {}", names.join(",")),
        ));
    }
    let mut seen = HashSet::new();
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| perr(line_of(e.position()), e.to_string()))?;
        let line = line_of(rec.position());
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(perr(line, "empty patient_id".into()));
        }
        if !seen.insert(id.clone()) {
            return Err(perr(line, format!("patient {id} listed twice")));
        }
        let label: usize = rec[1]
            .parse()
            .map_err(|_| perr(line, format!("cluster label is not a positive integer: {:?}", &rec[1])))?;
        if label == 0 {
            return Err(perr(line, "cluster labels start at 1".into()));
        }
        ids.push(id);
        labels.push(label);
    }
    if ids.is_empty() {
        return Err(perr(0, "partition file has no rows".into()));
    }
    Ok(PartitionFile {
        method,
        patient_ids: ids,
        labels,
    })
}

pub fn read_partition_csv(path: &Path) -> Result<PartitionFile> {
    parse_partition_csv(open_reader(path)?, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DendrogramFile {
    pub meta: OutputMeta,
    pub patient_ids: Vec<String>,
    pub dendrogram: Dendrogram,
}

pub fn write_dendrogram_json(path: &Path, file: &DendrogramFile) -> Result<()> {
    check_ids(&file.patient_ids, file.dendrogram.n)?;
    with_writer(path, |w| {
        serde_json::to_writer_pretty(&mut *w, file)?;
        w.write_all(b"\n")
    })
}

/// Parses and validates a dendrogram export.
pub fn parse_dendrogram_json<R: Read>(reader: R, source: &str) -> Result<DendrogramFile> {
    let perr = |line: u64, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let file: DendrogramFile =
        serde_json::from_reader(reader).map_err(|e| perr(e.line() as u64, e.to_string()))?;
    if file.patient_ids.len() != file.dendrogram.n {
        return Err(perr(
            0,
            format!(
                "{} patient ids for a dendrogram over {} leaves",
                file.patient_ids.len(),
                file.dendrogram.n
            ),
        ));
    }
    file.dendrogram.validate().map_err(|e| perr(0, e.to_string()))?;
    Ok(file)
}

pub fn read_dendrogram_json(path: &Path) -> Result<DendrogramFile> {
    parse_dendrogram_json(open_reader(path)?, &path.display().to_string())
}

/// Criterion value per candidate cluster count, as `k,value`.
pub fn write_index_table(
    path: &Path,
    method: PartitionMethod,
    values: &BTreeMap<usize, f64>,
    meta: &OutputMeta,
) -> Result<()> {
    with_writer(path, |w| {
        writeln!(w, "{}", meta.comment_line())?;
        writeln!(w, "# method={method}")?;
        writeln!(w, "k,value")?;
        for (k, v) in values {
            writeln!(w, "{k},{v:?}")?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub patient_id: String,
    pub prob: f64,
    pub lower: f64,
    pub upper: f64,
    pub classified: bool,
}

pub fn write_predictions_csv(path: &Path, rows: &[PredictionRow], meta: &OutputMeta) -> Result<()> {
    with_writer(path, |w| {
        writeln!(w, "{}", meta.comment_line())?;
        writeln!(w, "patient_id,prob,lower,upper,classified")?;
        for r in rows {
            writeln!(
                w,
                "{},{:?},{:?},{:?},{}",
                csv_field(&r.patient_id),
                r.prob,
                r.lower,
                r.upper,
                u8::from(r.classified)
            )?;
        }
        Ok(())
    })
}

/// One row per method and metric: `method,metric,mean,sd,n`.
pub fn write_study_csv(path: &Path, report: &StudyReport, meta: &OutputMeta) -> Result<()> {
    with_writer(path, |w| {
        writeln!(w, "{}", meta.comment_line())?;
        writeln!(w, "# {} replicates={} failures={}", report.label, report.replicates, report.failures.len())?;
        writeln!(w, "method,metric,mean,sd,n")?;
        for s in &report.summary {
            for (metric, m) in &s.metrics {
                writeln!(w, "{},{metric},{:?},{:?},{}", csv_field(&s.method), m.mean, m.sd, m.n)?;
            }
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct StudyJson<'a> {
    meta: &'a OutputMeta,
    report: &'a StudyReport,
}

/// Full report including per-replicate records. Non-finite numbers become `null`.
pub fn write_study_json(path: &Path, report: &StudyReport, meta: &OutputMeta) -> Result<()> {
    with_writer(path, |w| {
        serde_json::to_writer_pretty(&mut *w, &StudyJson { meta, report })?;
        w.write_all(b"\n")
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterBlock {
    pub label: usize,
    pub size: usize,
    pub members: Vec<String>,
    pub phi_mean: f64,
    pub phi_interval: (f64, f64),
    pub theta_mean: [f64; 3],
    /// Mean trajectory evaluated on the grid.
    pub curve: Vec<f64>,
    /// Pointwise 95% band of the trajectory, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub method: PartitionMethod,
    pub grid: Vec<f64>,
    pub clusters: Vec<ClusterBlock>,
}

fn interval(mut xs: Vec<f64>) -> (f64, f64) {
    xs.sort_by(f64::total_cmp);
    (quantile_sorted(&xs, 0.025), quantile_sorted(&xs, 0.975))
}

/// Per-cluster posterior summaries of a partition estimate.
///
/// With `conditional`, the trace came from a chain with assignments frozen
/// at `est`, so estimated cluster `l` is mixture component `l - 1`. Otherwise
/// each draw's parameters are averaged over the cluster's members.
pub fn cluster_summary(
    trace: &PosteriorTrace,
    est: &PartitionEstimate,
    conditional: bool,
    grid: &[f64],
    bands: bool,
) -> Result<ClusterSummary> {
    if est.labels.len() != trace.n_patients() {
        return Err(Error::InvalidArgument(format!(
            "partition has {} labels for {} patients",
            est.labels.len(),
            trace.n_patients()
        )));
    }
    if trace.draws.is_empty() {
        return Err(Error::InvalidArgument("trace has no draws".into()));
    }
    let k = est.n_clusters();
    if conditional && k > trace.truncation {
        return Err(Error::InvalidArgument(format!(
            "{k} clusters exceed the trace truncation {}",
            trace.truncation
        )));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in est.labels.iter().enumerate() {
        members[l - 1].push(i);
    }
    let mut clusters = Vec::with_capacity(k);
    for (c, idx) in members.iter().enumerate() {
        let mut phis = Vec::with_capacity(trace.draws.len());
        let mut thetas = Vec::with_capacity(trace.draws.len());
        for d in &trace.draws {
            let s = &d.state;
            let (phi, theta) = if conditional {
                let cl = &s.clusters[c];
                (cl.phi, cl.traj.theta)
            } else {
                let mut phi = 0.0;
                let mut th = [0.0; 3];
                for &i in idx {
                    let cl = &s.clusters[s.assignments[i]];
                    phi += cl.phi;
                    for (a, b) in th.iter_mut().zip(cl.traj.theta) {
                        *a += b;
                    }
                }
                let m = idx.len() as f64;
                (phi / m, th.map(|x| x / m))
            };
            phis.push(phi);
            thetas.push(theta);
        }
        let nd = thetas.len() as f64;
        let mut theta_mean = [0.0; 3];
        for t in &thetas {
            for j in 0..3 {
                theta_mean[j] += t[j] / nd;
            }
        }
        let mean_traj = TrajectoryParams { theta: theta_mean };
        let curve = grid.iter().map(|&t| eval_trajectory(&mean_traj, t)).collect();
        let band = bands.then(|| {
            grid.iter()
                .map(|&t| {
                    interval(
                        thetas
                            .iter()
                            .map(|&theta| eval_trajectory(&TrajectoryParams { theta }, t))
                            .collect(),
                    )
                })
                .collect()
        });
        clusters.push(ClusterBlock {
            label: c + 1,
            size: idx.len(),
            members: idx.iter().map(|&i| trace.patient_ids[i].clone()).collect(),
            phi_mean: phis.iter().sum::<f64>() / nd,
            phi_interval: interval(phis),
            theta_mean,
            curve,
            band,
        });
    }
    Ok(ClusterSummary {
        method: est.method,
        grid: grid.to_vec(),
        clusters,
    })
}

pub fn write_cluster_summary(path: &Path, summary: &ClusterSummary, meta: &OutputMeta) -> Result<()> {
    #[derive(Serialize)]
    struct Out<'a> {
        meta: &'a OutputMeta,
        #[serde(flatten)]
        summary: &'a ClusterSummary,
    }
    with_writer(path, |w| {
        serde_json::to_writer_pretty(&mut *w, &Out { meta, summary })?;
        w.write_all(b"\n")
    })
}
