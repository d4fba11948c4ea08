//! Per-episode metrics stream: fixed column order, appended and flushed one
//! row at a time so an interrupted run still leaves a parseable prefix.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bumped when the column set changes; the aggregator refuses mixed files.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("io on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv on {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

/// One episode of one run. The wall-clock column is the only
/// nondeterministic field and always sits last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub schema: u32,
    pub run_id: String,
    pub agent: String,
    pub seed: u64,
    pub task: u32,
    pub episode: u32,
    pub extrinsic_return: f64,
    pub steps: u32,
    pub unique_states: u64,
    pub l_s: f64,
    pub l_csc: f64,
    pub wall_ms: f64,
}

/// Append-only CSV writer, flushed after every record.
pub struct MetricsWriter {
    writer: csv::Writer<BufWriter<File>>,
    path: PathBuf,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<MetricsWriter, MetricsError> {
        let file = File::create(path).map_err(|source| MetricsError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(MetricsWriter {
            writer: csv::Writer::from_writer(BufWriter::new(file)),
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, record: &MetricsRecord) -> Result<(), MetricsError> {
        self.writer
            .serialize(record)
            .and_then(|_| self.writer.flush().map_err(csv::Error::from))
            .map_err(|source| MetricsError::Csv {
                path: self.path.clone(),
                source,
            })
    }
}

/// Reads the well-formed prefix of a metrics file. A truncated final row
/// (killed run) is silently dropped.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>, MetricsError> {
    let file = File::open(path).map_err(|source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::Reader::from_reader(file);
    let mut records = Vec::new();
    for row in reader.deserialize::<MetricsRecord>() {
        match row {
            Ok(rec) => records.push(rec),
            Err(_) => break,
        }
    }
    Ok(records)
}

/// Drops the trailing wall-clock column from every line, for byte-level
/// determinism comparisons.
pub fn strip_wall_clock(csv_text: &str) -> String {
    let mut out = String::with_capacity(csv_text.len());
    for line in csv_text.lines() {
        match line.rfind(',') {
            Some(pos) => out.push_str(&line[..pos]),
            None => out.push_str(line),
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(episode: u32) -> MetricsRecord {
        MetricsRecord {
            schema: SCHEMA_VERSION,
            run_id: "q-s0".into(),
            agent: "q".into(),
            seed: 0,
            task: 0,
            episode,
            extrinsic_return: 0.5,
            steps: 12,
            unique_states: 7,
            l_s: 0.0,
            l_csc: 0.0,
            wall_ms: 3.25,
        }
    }

    #[test]
    fn write_read_round_trip() {
        let dir = std::env::temp_dir().join("dynemb_metrics_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.csv");
        let mut w = MetricsWriter::create(&path).unwrap();
        for e in 0..3 {
            w.append(&record(e)).unwrap();
        }
        drop(w);
        let rows = read_metrics(&path).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].episode, 2);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn truncated_final_row_is_dropped() {
        let dir = std::env::temp_dir().join("dynemb_metrics_trunc");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.csv");
        let mut w = MetricsWriter::create(&path).unwrap();
        for e in 0..3 {
            w.append(&record(e)).unwrap();
        }
        drop(w);
        // Simulate a crash mid-write of the last row.
        let text = std::fs::read_to_string(&path).unwrap();
        let cut = text.len() - 7;
        std::fs::write(&path, &text[..cut]).unwrap();
        let rows = read_metrics(&path).unwrap();
        assert_eq!(rows.len(), 2);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn wall_clock_strip_removes_only_the_last_column() {
        let text = "a,b,wall_ms\n1,2,0.5\n3,4,0.125\n";
        assert_eq!(strip_wall_clock(text), "a,b\n1,2\n3,4\n");
    }
}
