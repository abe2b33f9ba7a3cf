//! File formats: long-format patient CSV, JSON-lines traces, partition and
//! dendrogram exports, prediction tables, study reports, cluster summaries.
//!
//! Every writer records the package version, the master seed and a hash of
//! the configuration that produced the output.

mod data;
mod outputs;
mod trace;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use data::{
    load_longitudinal_csv, parse_longitudinal, write_longitudinal, write_longitudinal_csv,
    LoadOptions, LoadedData,
};
pub use outputs::{
    cluster_summary, parse_dendrogram_json, parse_partition_csv, read_dendrogram_json,
    read_partition_csv, write_cluster_summary, write_dendrogram_json, write_index_table,
    write_partition_csv, write_predictions_csv, write_study_csv, write_study_json, ClusterBlock,
    ClusterSummary, DendrogramFile, PartitionFile, PredictionRow,
};
pub use trace::{
    parse_trace, read_trace, write_trace, write_trace_to, TraceFile, TraceHeader, TraceKind, TraceSummary,
    TRACE_FORMAT,
};

use crate::error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Hex SHA-256 prefix of the JSON serialisation of `config`.
pub fn config_hash<T: Serialize + ?Sized>(config: &T) -> String {
    let json = serde_json::to_vec(config).unwrap_or_default();
    let digest = Sha256::digest(&json);
    hex::encode(&digest[..8])
}

/// Provenance stamped on every output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputMeta {
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
}

impl OutputMeta {
    pub fn new<T: Serialize + ?Sized>(seed: u64, config: &T) -> Self {
        Self {
            version: VERSION.to_string(),
            seed,
            config_hash: config_hash(config),
        }
    }

    /// `# bnplc <version> seed=<seed> config=<hash>`
    pub fn comment_line(&self) -> String {
        format!(
            "# bnplc {} seed={} config={}",
            self.version, self.seed, self.config_hash
        )
    }
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"))
}

/// Opens a file for reading, decompressing `.gz` paths.
pub fn open_reader(path: &Path) -> Result<Box<dyn Read>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    if is_gz(path) {
        Ok(Box::new(MultiGzDecoder::new(BufReader::new(f))))
    } else {
        Ok(Box::new(BufReader::new(f)))
    }
}

/// Runs `body` against a buffered (and, for `.gz` paths, compressed) writer.
pub fn with_writer(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let res = if is_gz(path) {
        let mut w = GzEncoder::new(BufWriter::new(f), Compression::default());
        body(&mut w).and_then(|_| w.finish()).and_then(|mut b| b.flush())
    } else {
        let mut w = BufWriter::new(f);
        body(&mut w).and_then(|_| w.flush())
    };
    res.map_err(|e| Error::io(path, e))
}
