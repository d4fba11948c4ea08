//! Per-state scalar fields rendered as binary PGM images, with a lossless
//! CSV sidecar.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::grid::GridEnv;

#[derive(Debug, Error)]
pub enum HeatmapError {
    #[error("io on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("sidecar parse: {0}")]
    Parse(String),
}

/// Writes `field` (one value per state id, missing states are zero) as a
/// min-max normalized graymap. Walls render black; a constant field renders
/// all free cells at full white. The raw values go to `<path>.csv`.
pub fn emit_heatmap(env: &GridEnv, field: &[f64], path: &Path) -> Result<(), HeatmapError> {
    let io_err = |source| HeatmapError::Io {
        path: path.to_path_buf(),
        source,
    };
    let spec = env.spec();
    let value_of = |s: crate::grid::StateId| field.get(s.idx()).copied().unwrap_or(0.0);

    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for s in env.states() {
        let v = value_of(s);
        min = min.min(v);
        max = max.max(v);
    }
    let span = max - min;

    let mut pixels = Vec::with_capacity(spec.width * spec.height);
    for y in 0..spec.height {
        for x in 0..spec.width {
            let gray = match env.state_at(x, y) {
                None => 0u8,
                Some(s) => {
                    if span == 0.0 {
                        255
                    } else {
                        (((value_of(s) - min) / span) * 255.0).round() as u8
                    }
                }
            };
            pixels.push(gray);
        }
    }

    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    write!(out, "P5\n{} {}\n255\n", spec.width, spec.height).map_err(io_err)?;
    out.write_all(&pixels).map_err(io_err)?;
    out.flush().map_err(io_err)?;

    let sidecar = sidecar_path(path);
    let mut csv_out =
        BufWriter::new(File::create(&sidecar).map_err(|source| HeatmapError::Io {
            path: sidecar.clone(),
            source,
        })?);
    writeln!(csv_out, "state_id,x,y,value").map_err(io_err)?;
    for s in env.states() {
        let (x, y) = env.cell_of(s);
        writeln!(csv_out, "{s},{x},{y},{}", value_of(s)).map_err(io_err)?;
    }
    csv_out.flush().map_err(io_err)?;
    Ok(())
}

/// `foo.pgm` -> `foo.pgm.csv`
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".csv");
    PathBuf::from(name)
}

/// Reads a sidecar back into a per-state field.
pub fn read_sidecar(path: &Path) -> Result<Vec<f64>, HeatmapError> {
    let text = std::fs::read_to_string(path).map_err(|source| HeatmapError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            continue;
        }
        let mut parts = line.split(',');
        let id: usize = parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| HeatmapError::Parse(format!("bad id on line {}", i + 1)))?;
        let value: f64 = parts
            .nth(2)
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| HeatmapError::Parse(format!("bad value on line {}", i + 1)))?;
        if values.len() <= id {
            values.resize(id + 1, 0.0);
        }
        values[id] = value;
    }
    Ok(values)
}

/// Loads the raster of a binary PGM, for tests and tooling.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>), HeatmapError> {
    let bytes = std::fs::read(path).map_err(|source| HeatmapError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let header_end = bytes
        .windows(1)
        .enumerate()
        .filter(|(_, w)| w[0] == b'\n')
        .map(|(i, _)| i)
        .nth(2)
        .ok_or_else(|| HeatmapError::Parse("short header".into()))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| HeatmapError::Parse("non-utf8 header".into()))?;
    let mut lines = header.lines();
    if lines.next() != Some("P5") {
        return Err(HeatmapError::Parse("not a binary PGM".into()));
    }
    let dims = lines
        .next()
        .ok_or_else(|| HeatmapError::Parse("missing dimensions".into()))?;
    let mut parts = dims.split_whitespace();
    let w: usize = parts
        .next()
        .and_then(|p| p.parse().ok())
        .ok_or_else(|| HeatmapError::Parse("bad width".into()))?;
    let h: usize = parts
        .next()
        .and_then(|p| p.parse().ok())
        .ok_or_else(|| HeatmapError::Parse("bad height".into()))?;
    Ok((w, h, bytes[header_end + 1..].to_vec()))
}
