//! Cross-seed aggregation of metrics files into one summary table.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::metrics::{read_metrics, MetricsError, MetricsRecord};
use crate::stats::{iqr, moving_average};

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("no metrics files found in {0}")]
    NoInputs(PathBuf),
    #[error("mixed schema versions across inputs ({0} vs {1})")]
    MixedSchema(u32, u32),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Reads every `metrics_*.csv` under `dir` and writes `summary.csv` with
/// per (agent, task, episode) statistics over seeds: mean and interquartile
/// range of the extrinsic return, a moving-average smoothed return curve,
/// and the mean unique-state count.
pub fn aggregate_runs(dir: &Path, smooth_window: usize) -> Result<PathBuf, AggregateError> {
    let mut inputs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|source| AggregateError::Io {
            path: dir.to_path_buf(),
            source,
        })?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("metrics_") && n.ends_with(".csv"))
        })
        .collect();
    inputs.sort();
    if inputs.is_empty() {
        return Err(AggregateError::NoInputs(dir.to_path_buf()));
    }

    let mut schema: Option<u32> = None;
    let mut cells: BTreeMap<(String, u32, u32), Vec<&MetricsRecord>> = BTreeMap::new();
    let mut all: Vec<MetricsRecord> = Vec::new();
    for path in &inputs {
        all.extend(read_metrics(path)?);
    }
    for rec in &all {
        match schema {
            None => schema = Some(rec.schema),
            Some(s) if s != rec.schema => {
                return Err(AggregateError::MixedSchema(s, rec.schema));
            }
            _ => {}
        }
        cells
            .entry((rec.agent.clone(), rec.task, rec.episode))
            .or_default()
            .push(rec);
    }

    // Per-cell statistics, then smooth the mean-return curve per (agent, task).
    let mut rows: Vec<(String, u32, u32, f64, f64, f64, usize)> = Vec::new();
    for ((agent, task, episode), recs) in &cells {
        let returns: Vec<f64> = recs.iter().map(|r| r.extrinsic_return).collect();
        let uniques: Vec<f64> = recs.iter().map(|r| r.unique_states as f64).collect();
        let mean = returns.iter().sum::<f64>() / returns.len() as f64;
        let spread = iqr(&returns);
        let unique_mean = uniques.iter().sum::<f64>() / uniques.len() as f64;
        rows.push((
            agent.clone(),
            *task,
            *episode,
            mean,
            spread,
            unique_mean,
            returns.len(),
        ));
    }
    let mut smoothed: BTreeMap<(String, u32), Vec<f64>> = BTreeMap::new();
    {
        let mut curves: BTreeMap<(String, u32), Vec<f64>> = BTreeMap::new();
        for (agent, task, _, mean, _, _, _) in &rows {
            curves
                .entry((agent.clone(), *task))
                .or_default()
                .push(*mean);
        }
        for (key, curve) in curves {
            smoothed.insert(key, moving_average(&curve, smooth_window));
        }
    }

    let out_path = dir.join("summary.csv");
    let mut out = BufWriter::new(
        File::create(&out_path).map_err(|source| AggregateError::Io {
            path: out_path.clone(),
            source,
        })?,
    );
    let werr = |source| AggregateError::Io {
        path: out_path.clone(),
        source,
    };
    writeln!(
        out,
        "schema,agent,task,episode,return_mean,return_iqr,return_smoothed,unique_states_mean,seeds"
    )
    .map_err(werr)?;
    let mut position: BTreeMap<(String, u32), usize> = BTreeMap::new();
    for (agent, task, episode, mean, spread, unique_mean, n) in &rows {
        let key = (agent.clone(), *task);
        let idx = position.entry(key.clone()).or_insert(0);
        let smooth = smoothed[&key][*idx];
        *idx += 1;
        writeln!(
            out,
            "{},{agent},{task},{episode},{mean},{spread},{smooth},{unique_mean},{n}",
            schema.unwrap_or(0)
        )
        .map_err(werr)?;
    }
    out.flush().map_err(werr)?;
    Ok(out_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::metrics::{MetricsWriter, SCHEMA_VERSION};

    fn record(agent: &str, seed: u64, episode: u32, ret: f64) -> MetricsRecord {
        MetricsRecord {
            schema: SCHEMA_VERSION,
            run_id: format!("{agent}-s{seed}"),
            agent: agent.into(),
            seed,
            task: 0,
            episode,
            extrinsic_return: ret,
            steps: 5,
            unique_states: 4,
            l_s: 0.0,
            l_csc: 0.0,
            wall_ms: 1.0,
        }
    }

    fn fresh_dir(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("dynemb_aggregate_{name}"));
        std::fs::remove_dir_all(&dir).ok();
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn single_seed_mean_is_the_raw_value() {
        let dir = fresh_dir("single");
        let mut w = MetricsWriter::create(&dir.join("metrics_q_0.csv")).unwrap();
        w.append(&record("q", 0, 0, 0.25)).unwrap();
        w.append(&record("q", 0, 1, 0.75)).unwrap();
        drop(w);
        aggregate_runs(&dir, 1).unwrap();
        let text = std::fs::read_to_string(dir.join("summary.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].contains(",0.25,0,"));
        assert!(lines[2].contains(",0.75,0,"));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn two_seeds_average_and_duplicates_have_zero_iqr() {
        let dir = fresh_dir("two");
        for seed in [0u64, 1] {
            let mut w = MetricsWriter::create(&dir.join(format!("metrics_q_{seed}.csv"))).unwrap();
            w.append(&record("q", seed, 0, seed as f64)).unwrap();
            drop(w);
        }
        aggregate_runs(&dir, 1).unwrap();
        let text = std::fs::read_to_string(dir.join("summary.csv")).unwrap();
        let line = text.lines().nth(1).unwrap();
        // Mean of {0, 1} is 0.5.
        assert!(line.contains(",0.5,"), "{line}");
        // Duplicate-value cells have zero spread: rerun with equal returns.
        let dir2 = fresh_dir("dup");
        for seed in [0u64, 1] {
            let mut w = MetricsWriter::create(&dir2.join(format!("metrics_q_{seed}.csv"))).unwrap();
            w.append(&record("q", seed, 0, 0.5)).unwrap();
            drop(w);
        }
        aggregate_runs(&dir2, 1).unwrap();
        let text = std::fs::read_to_string(dir2.join("summary.csv")).unwrap();
        assert!(text.lines().nth(1).unwrap().contains(",0.5,0,"));
        std::fs::remove_dir_all(&dir).ok();
        std::fs::remove_dir_all(&dir2).ok();
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = fresh_dir("empty");
        assert!(matches!(
            aggregate_runs(&dir, 1),
            Err(AggregateError::NoInputs(_))
        ));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn mixed_schemas_are_rejected() {
        let dir = fresh_dir("mixed");
        let mut w = MetricsWriter::create(&dir.join("metrics_a_0.csv")).unwrap();
        w.append(&record("a", 0, 0, 0.0)).unwrap();
        drop(w);
        let mut other = record("b", 0, 0, 0.0);
        other.schema = SCHEMA_VERSION + 1;
        let mut w = MetricsWriter::create(&dir.join("metrics_b_0.csv")).unwrap();
        w.append(&other).unwrap();
        drop(w);
        assert!(matches!(
            aggregate_runs(&dir, 1),
            Err(AggregateError::MixedSchema(..))
        ));
        std::fs::remove_dir_all(&dir).ok();
    }
}
