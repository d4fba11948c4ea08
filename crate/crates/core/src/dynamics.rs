//! Online inference of the binary transition structure from trajectories.
//!
//! The tracker watches raw transitions from any policy and maintains, per
//! state: the observed neighbor set, a life-long visit counter, the
//! episodic neighborhood size feeding the intrinsic reward, and the ordered
//! buffer of unique states used for embedding batches. It never stores a
//! dense state-by-state matrix; the small +/-1 target matrix is built per
//! sampled batch.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::StateId;

/// Per-state sets of one-step-reachable states.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NeighborMap {
    map: BTreeMap<StateId, BTreeSet<StateId>>,
}

impl NeighborMap {
    pub fn new() -> NeighborMap {
        NeighborMap::default()
    }

    /// Records the directed edge `s -> t`. Returns true if it was new.
    pub fn insert_edge(&mut self, s: StateId, t: StateId) -> bool {
        self.map.entry(s).or_default().insert(t)
    }

    pub fn contains_edge(&self, s: StateId, t: StateId) -> bool {
        self.map.get(&s).is_some_and(|n| n.contains(&t))
    }

    pub fn neighbors(&self, s: StateId) -> Option<&BTreeSet<StateId>> {
        self.map.get(&s)
    }

    pub fn degree(&self, s: StateId) -> usize {
        self.map.get(&s).map_or(0, |n| n.len())
    }

    /// Total number of directed edges (self-loops included).
    pub fn edge_count(&self) -> usize {
        self.map.values().map(|n| n.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (StateId, &BTreeSet<StateId>)> {
        self.map.iter().map(|(s, n)| (*s, n))
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> + '_ {
        self.map.keys().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Recall/soundness summary of an inferred edge set against ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageReport {
    /// Fraction of true edges already observed.
    pub edge_recall: f64,
    /// Observed edges absent from the true dynamic. Zero for any trajectory
    /// actually generated by the environment.
    pub spurious_edges: usize,
}

#[derive(Debug, Error)]
pub enum TrackerError {
    #[error("state buffer is empty; nothing to sample")]
    EmptyBuffer,
    #[error("snapshot io: {0}")]
    Io(#[from] io::Error),
    #[error("snapshot parse: {0}")]
    Parse(#[from] serde_json::Error),
}

/// One state's row in a JSON-lines tracker snapshot.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SnapshotRecord {
    pub id: StateId,
    pub n: u64,
    pub d_e: u32,
    pub neighbors: Vec<StateId>,
}

/// Accumulated trajectory knowledge for one run.
#[derive(Debug, Clone, Default)]
pub struct DynamicsTracker {
    neighbors: NeighborMap,
    /// Life-long visit counts, incremented on departure and on arrival.
    visits: BTreeMap<StateId, u64>,
    /// Neighbors of each state first seen during the current episode.
    episode_neighbors: BTreeMap<StateId, BTreeSet<StateId>>,
    /// Unique states in first-seen order.
    buffer: Vec<StateId>,
    buffered: BTreeSet<StateId>,
}

impl DynamicsTracker {
    pub fn new() -> DynamicsTracker {
        DynamicsTracker::default()
    }

    /// Ingests one raw transition. Order of effects: visit counts, neighbor
    /// set, episodic neighborhood, unique-state buffer. The arrival count is
    /// bumped here so the intrinsic reward never divides by zero.
    pub fn observe(&mut self, s: StateId, s_next: StateId) {
        *self.visits.entry(s).or_insert(0) += 1;
        *self.visits.entry(s_next).or_insert(0) += 1;
        self.neighbors.insert_edge(s, s_next);
        self.episode_neighbors.entry(s).or_default().insert(s_next);
        if self.buffered.insert(s) {
            self.buffer.push(s);
        }
        if self.buffered.insert(s_next) {
            self.buffer.push(s_next);
        }
    }

    /// Clears episodic neighborhoods; life-long structures are untouched.
    pub fn episodic_reset(&mut self) {
        self.episode_neighbors.clear();
    }

    /// Life-long visit count N(s).
    pub fn visit_count(&self, s: StateId) -> u64 {
        self.visits.get(&s).copied().unwrap_or(0)
    }

    /// Episodic neighborhood size d_e(s): 1 plus the distinct neighbors of
    /// `s` discovered this episode.
    pub fn episodic_neighborhood(&self, s: StateId) -> u32 {
        1 + self.episode_neighbors.get(&s).map_or(0, |n| n.len() as u32)
    }

    pub fn neighbor_map(&self) -> &NeighborMap {
        &self.neighbors
    }

    /// Unique states in first-seen order.
    pub fn state_buffer(&self) -> &[StateId] {
        &self.buffer
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    /// Uniform batch from the unique-state buffer: without replacement when
    /// `k <= |buffer|`, with replacement otherwise.
    pub fn sample_state_batch<R: Rng>(
        &self,
        k: usize,
        rng: &mut R,
    ) -> Result<Vec<StateId>, TrackerError> {
        let n = self.buffer.len();
        if n == 0 {
            return Err(TrackerError::EmptyBuffer);
        }
        if k > n {
            return Ok((0..k)
                .map(|_| self.buffer[rng.random_range(0..n)])
                .collect());
        }
        // Partial Fisher-Yates over a scratch index vector.
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = rng.random_range(i..n);
            idx.swap(i, j);
        }
        Ok(idx[..k].iter().map(|&i| self.buffer[i]).collect())
    }

    /// Dense +/-1 adjacency target for a sampled batch. Symmetrized (an edge
    /// in either direction counts) with the diagonal forced to +1.
    pub fn build_w_matrix(&self, batch: &[StateId]) -> Vec<Vec<f64>> {
        let k = batch.len();
        let mut w = vec![vec![-1.0; k]; k];
        for i in 0..k {
            w[i][i] = 1.0;
            for j in (i + 1)..k {
                let connected = self.neighbors.contains_edge(batch[i], batch[j])
                    || self.neighbors.contains_edge(batch[j], batch[i]);
                if connected {
                    w[i][j] = 1.0;
                    w[j][i] = 1.0;
                }
            }
        }
        w
    }

    /// Compares the inferred edge set against a ground-truth map.
    pub fn coverage_report(&self, oracle: &NeighborMap) -> CoverageReport {
        let mut hit = 0usize;
        let mut spurious = 0usize;
        for (s, n) in self.neighbors.iter() {
            for &t in n {
                if oracle.contains_edge(s, t) {
                    hit += 1;
                } else {
                    spurious += 1;
                }
            }
        }
        let total_true = oracle.edge_count();
        let edge_recall = if total_true == 0 {
            0.0
        } else {
            hit as f64 / total_true as f64
        };
        CoverageReport {
            edge_recall,
            spurious_edges: spurious,
        }
    }

    /// Writes the tracker as JSON lines, one record per state in id order.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<(), TrackerError> {
        let mut ids: BTreeSet<StateId> = self.buffered.iter().copied().collect();
        ids.extend(self.neighbors.states());
        ids.extend(self.visits.keys().copied());
        for id in ids {
            let rec = SnapshotRecord {
                id,
                n: self.visit_count(id),
                d_e: self.episodic_neighborhood(id),
                neighbors: self
                    .neighbors
                    .neighbors(id)
                    .map(|n| n.iter().copied().collect())
                    .unwrap_or_default(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads the per-state records of a snapshot stream.
    pub fn read_snapshot<R: BufRead>(input: R) -> Result<Vec<SnapshotRecord>, TrackerError> {
        let mut records = Vec::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line)?);
        }
        Ok(records)
    }
}
