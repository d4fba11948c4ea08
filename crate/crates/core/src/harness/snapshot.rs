//! Self-describing run snapshots: one JSON-lines file holding the grid
//! geometry followed by the tracker's per-state records, so post-hoc tools
//! can rebuild fields and render heatmaps without the original config.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DynamicsTracker, SnapshotRecord};
use crate::grid::{GridEnv, GridSpec, LayoutKind};
use crate::intrinsic::intrinsic_reward;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("io on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("snapshot is missing its grid header line")]
    MissingHeader,
    #[error("grid: {0}")]
    Grid(#[from] crate::grid::GridError),
}

/// First line of a snapshot file.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct GridHeader {
    kind: String,
    width: usize,
    height: usize,
    walls: Vec<(usize, usize)>,
}

/// Writes the grid header plus one record per observed state.
pub fn write_run_snapshot(
    env: &GridEnv,
    tracker: &DynamicsTracker,
    path: &Path,
) -> Result<(), SnapshotError> {
    let io_err = |source| SnapshotError::Io {
        path: path.to_path_buf(),
        source,
    };
    let spec = env.spec();
    let header = GridHeader {
        kind: "grid".into(),
        width: spec.width,
        height: spec.height,
        walls: spec.walls.iter().copied().collect(),
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n").map_err(io_err)?;
    tracker.write_snapshot(&mut out).map_err(|e| match e {
        crate::dynamics::TrackerError::Io(source) => io_err(source),
        other => SnapshotError::Parse(serde_json::Error::io(std::io::Error::other(
            other.to_string(),
        ))),
    })?;
    out.flush().map_err(io_err)?;
    Ok(())
}

/// Reads a snapshot back: the rebuilt environment plus per-state records.
pub fn read_run_snapshot(path: &Path) -> Result<(GridEnv, Vec<SnapshotRecord>), SnapshotError> {
    let io_err = |source| SnapshotError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut text = String::new();
    BufReader::new(File::open(path).map_err(io_err)?)
        .read_to_string(&mut text)
        .map_err(io_err)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: GridHeader =
        serde_json::from_str(lines.next().ok_or(SnapshotError::MissingHeader)?)?;
    let spec = GridSpec {
        width: header.width,
        height: header.height,
        walls: header.walls.into_iter().collect(),
        layout_kind: LayoutKind::Custom,
    };
    let env = GridEnv::build(spec)?;
    let mut records = Vec::new();
    for line in lines {
        records.push(serde_json::from_str(line)?);
    }
    Ok((env, records))
}

/// Per-state intrinsic-reward field from snapshot records; states never
/// observed stay at zero.
pub fn ir_field(env: &GridEnv, records: &[SnapshotRecord]) -> Vec<f64> {
    let mut field = vec![0.0; env.num_states()];
    for rec in records {
        if rec.id.idx() < field.len() && rec.n >= 1 {
            field[rec.id.idx()] = intrinsic_reward(rec.n, rec.d_e.max(1));
        }
    }
    field
}

/// Per-state life-long visit counts from snapshot records.
pub fn count_field(env: &GridEnv, records: &[SnapshotRecord]) -> Vec<f64> {
    let mut field = vec![0.0; env.num_states()];
    for rec in records {
        if rec.id.idx() < field.len() {
            field[rec.id.idx()] = rec.n as f64;
        }
    }
    field
}
