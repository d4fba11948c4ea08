//! State embeddings aligned with the inferred binary dynamic.
//!
//! The embedding net maps a one-hot state to a d-dimensional vector. It is
//! trained purely from the tracker's unique-state buffer and neighbor sets:
//! batch inner products are pushed toward +1 for observed neighbors and -1
//! for everything else, while a hinge keeps distinct states at least a
//! margin apart. Value learning never flows gradients into this table, and
//! this table never sees rewards, actions, or value parameters.

use std::io::{self, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::DynamicsTracker;
use crate::grid::{GridEnv, StateId};
use crate::nn::{DenseNet, Gradients, Optimizer};

/// Which hinge the pairwise separation term uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeparationForm {
    /// Penalize pairs closer than the margin: `max(w - ||a - b||, 0)`.
    /// Keeps distinct states apart; the default.
    PushApart,
    /// Penalize pairs farther than the margin: `max(||a - b|| - w, 0)`.
    /// Available for comparison runs.
    PullTogether,
}

/// Loss components of one embedding training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingLossReport {
    pub l_s: f64,
    pub l_csc: f64,
    pub total: f64,
}

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding table is frozen; training is rejected")]
    Frozen,
    #[error("tracker state buffer is empty")]
    EmptyBuffer,
    #[error("embedding loss diverged (non-finite); lower the learning rate")]
    Diverged,
}

/// Hyperparameters of one embedding training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbedTrainParams {
    pub batch_size: usize,
    pub w_margin: f64,
    /// Scales the gradient step; zero skips the parameter update entirely.
    pub loss_weight: f64,
    pub form: SeparationForm,
}

impl Default for EmbedTrainParams {
    fn default() -> EmbedTrainParams {
        EmbedTrainParams {
            batch_size: 32,
            w_margin: 0.5,
            loss_weight: 1.0,
            form: SeparationForm::PushApart,
        }
    }
}

/// Trainable map from state id to embedding vector.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    net: DenseNet,
    num_states: usize,
    dim: usize,
    frozen: bool,
}

impl EmbeddingTable {
    pub fn init<R: Rng>(
        num_states: usize,
        hidden: usize,
        dim: usize,
        rng: &mut R,
    ) -> EmbeddingTable {
        assert!(dim >= 2, "embedding dimension must be at least 2");
        EmbeddingTable {
            net: DenseNet::mlp(num_states, &[hidden], dim, rng),
            num_states,
            dim,
            frozen: false,
        }
    }

    /// Rebuilds a table around an existing network, e.g. from a checkpoint.
    pub fn from_net(net: DenseNet, frozen: bool) -> EmbeddingTable {
        let num_states = net.in_dim();
        let dim = net.out_dim();
        assert!(dim >= 2, "embedding dimension must be at least 2");
        EmbeddingTable {
            net,
            num_states,
            dim,
            frozen,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Freezing rejects all further training; `embed` keeps serving.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn params_digest(&self) -> u64 {
        self.net.params_digest()
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    /// The embedding of a state. Panics on an out-of-range id.
    pub fn embed(&self, s: StateId) -> Vec<f64> {
        assert!(s.idx() < self.num_states, "state id {s} out of range");
        self.net.forward_one_hot(s.idx())
    }

    /// Embeddings for a whole batch, one row per state.
    pub fn embed_batch(&self, batch: &[StateId]) -> Vec<Vec<f64>> {
        batch.iter().map(|&s| self.embed(s)).collect()
    }

    /// Samples a state batch, builds the +/-1 target, and applies one
    /// gradient step on the embedding parameters only.
    pub fn train_step(
        &mut self,
        tracker: &DynamicsTracker,
        params: &EmbedTrainParams,
        opt: &mut Optimizer,
        rng: &mut ChaCha8Rng,
    ) -> Result<EmbeddingLossReport, EmbeddingError> {
        if self.frozen {
            return Err(EmbeddingError::Frozen);
        }
        let batch = tracker
            .sample_state_batch(params.batch_size, rng)
            .map_err(|_| EmbeddingError::EmptyBuffer)?;
        let w = tracker.build_w_matrix(&batch);

        let traces: Vec<_> = self
            .net
            .layers()
            .first()
            .map(|_| {
                batch
                    .iter()
                    .map(|&s| self.net.trace_one_hot(s.idx()))
                    .collect()
            })
            .unwrap_or_default();
        let phi: Vec<Vec<f64>> = traces.iter().map(|t| t.output().to_vec()).collect();

        let (l_s, mut dphi) = similarity_loss_grad(&phi, &w);
        let (l_csc, dphi_sep) = separation_loss_grad(&phi, params.w_margin, params.form);
        for (row, sep_row) in dphi.iter_mut().zip(&dphi_sep) {
            for (g, s) in row.iter_mut().zip(sep_row) {
                *g += s;
            }
        }
        if !(l_s + l_csc).is_finite() {
            return Err(EmbeddingError::Diverged);
        }

        if params.loss_weight != 0.0 {
            let mut grads = Gradients::zeros_like(&self.net);
            for (trace, upstream) in traces.iter().zip(&dphi) {
                self.net.backward_into(trace, upstream, &mut grads);
            }
            grads.scale(params.loss_weight);
            opt.step(&mut self.net, &grads);
        }

        Ok(EmbeddingLossReport {
            l_s,
            l_csc,
            total: l_s + l_csc,
        })
    }

    /// Loss components on an explicit batch, without updating parameters.
    pub fn batch_loss(
        &self,
        batch: &[StateId],
        w: &[Vec<f64>],
        w_margin: f64,
        form: SeparationForm,
    ) -> EmbeddingLossReport {
        let phi = self.embed_batch(batch);
        let l_s = similarity_loss(&phi, w);
        let l_csc = separation_loss(&phi, w_margin, form);
        EmbeddingLossReport {
            l_s,
            l_csc,
            total: l_s + l_csc,
        }
    }

    /// Writes rows `state_id,x,y,phi_1..phi_d` for external visualization.
    pub fn export_csv<W: Write>(&self, env: &GridEnv, mut out: W) -> io::Result<()> {
        let mut header = String::from("state_id,x,y");
        for i in 1..=self.dim {
            header.push_str(&format!(",phi_{i}"));
        }
        writeln!(out, "{header}")?;
        for s in env.states() {
            let (x, y) = env.cell_of(s);
            let phi = self.embed(s);
            let mut line = format!("{s},{x},{y}");
            for v in phi {
                line.push_str(&format!(",{v}"));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Mean squared entrywise deviation between the batch Gram matrix and the
/// +/-1 target.
pub fn similarity_loss(phi: &[Vec<f64>], w: &[Vec<f64>]) -> f64 {
    similarity_loss_grad(phi, w).0
}

/// Similarity loss plus its gradient with respect to each embedding row.
#[allow(clippy::needless_range_loop)]
pub fn similarity_loss_grad(phi: &[Vec<f64>], w: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
    let k = phi.len();
    assert!(k > 0, "empty batch");
    assert_eq!(w.len(), k, "target matrix row count mismatch");
    let d = phi[0].len();
    let norm = 1.0 / (k * k) as f64;

    // Residual E = Phi Phi^T - W.
    let mut residual = vec![vec![0.0; k]; k];
    let mut loss = 0.0;
    for i in 0..k {
        assert_eq!(w[i].len(), k, "target matrix must be square");
        for j in 0..k {
            let mut dot = 0.0;
            for t in 0..d {
                dot += phi[i][t] * phi[j][t];
            }
            let e = dot - w[i][j];
            residual[i][j] = e;
            loss += e * e;
        }
    }

    // d/dphi_a = (2/k^2) * (sum_j E[a][j] phi_j + sum_i E[i][a] phi_i)
    let mut dphi = vec![vec![0.0; d]; k];
    for a in 0..k {
        for j in 0..k {
            let c = 2.0 * norm * residual[a][j];
            for t in 0..d {
                dphi[a][t] += c * phi[j][t];
            }
        }
        for i in 0..k {
            let c = 2.0 * norm * residual[i][a];
            for t in 0..d {
                dphi[a][t] += c * phi[i][t];
            }
        }
    }
    (loss * norm, dphi)
}

/// Mean pairwise hinge over distinct unordered batch pairs.
pub fn separation_loss(phi: &[Vec<f64>], w_margin: f64, form: SeparationForm) -> f64 {
    separation_loss_grad(phi, w_margin, form).0
}

/// Separation loss plus its gradient with respect to each embedding row.
#[allow(clippy::needless_range_loop)]
pub fn separation_loss_grad(
    phi: &[Vec<f64>],
    w_margin: f64,
    form: SeparationForm,
) -> (f64, Vec<Vec<f64>>) {
    assert!(w_margin > 0.0, "margin must be positive");
    let k = phi.len();
    let d = if k > 0 { phi[0].len() } else { 0 };
    let mut dphi = vec![vec![0.0; d]; k];
    if k < 2 {
        return (0.0, dphi);
    }
    let pairs = (k * (k - 1) / 2) as f64;
    let mut loss = 0.0;
    for i in 0..k {
        for j in (i + 1)..k {
            let mut sq = 0.0;
            for t in 0..d {
                let diff = phi[i][t] - phi[j][t];
                sq += diff * diff;
            }
            let dist = sq.sqrt();
            let (hinge, sign) = match form {
                SeparationForm::PushApart => (w_margin - dist, -1.0),
                SeparationForm::PullTogether => (dist - w_margin, 1.0),
            };
            if hinge <= 0.0 {
                continue;
            }
            loss += hinge;
            // Gradient of the distance; flat at exactly coincident points.
            if dist > 1e-12 {
                let c = sign / (dist * pairs);
                for t in 0..d {
                    let diff = phi[i][t] - phi[j][t];
                    dphi[i][t] += c * diff;
                    dphi[j][t] -= c * diff;
                }
            }
        }
    }
    (loss / pairs, dphi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Action, GridEnv, GridSpec};
    use crate::nn::relative_error;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn embed_is_deterministic_and_d_dimensional() {
        let table = EmbeddingTable::init(25, 16, 10, &mut rng(0));
        let a = table.embed(StateId(3));
        let b = table.embed(StateId(3));
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
    }

    #[test]
    fn embed_matches_dense_forward_oracle() {
        let table = EmbeddingTable::init(6, 4, 3, &mut rng(2));
        for i in 0..6 {
            let mut one_hot = vec![0.0; 6];
            one_hot[i] = 1.0;
            let via_table = table.embed(StateId(i as u32));
            let via_dense = table.net().forward(&one_hot);
            assert_eq!(via_table, via_dense);
        }
    }

    #[test]
    #[should_panic]
    fn embed_rejects_out_of_range_id() {
        let table = EmbeddingTable::init(4, 4, 2, &mut rng(0));
        table.embed(StateId(4));
    }

    #[test]
    fn similarity_loss_zero_on_exact_fit() {
        let phi = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        let w = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        assert_eq!(similarity_loss(&phi, &w), 0.0);
    }

    #[test]
    fn similarity_loss_averages_entrywise_deviation() {
        let phi = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let w = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        // Gram is the identity; deviations are {0, 1, 1, 0}.
        assert_eq!(similarity_loss(&phi, &w), 0.5);
    }

    #[test]
    fn similarity_loss_matches_entrywise_oracle() {
        let mut r = rng(7);
        let k = 5;
        let d = 3;
        let phi: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let w: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                (0..k)
                    .map(|_| if r.random::<bool>() { 1.0 } else { -1.0 })
                    .collect()
            })
            .collect();
        // Independent entrywise computation.
        let mut expected = 0.0;
        for i in 0..k {
            for j in 0..k {
                let dot: f64 = (0..d).map(|t| phi[i][t] * phi[j][t]).sum();
                expected += (dot - w[i][j]).powi(2);
            }
        }
        expected /= (k * k) as f64;
        assert!((similarity_loss(&phi, &w) - expected).abs() < 1e-12);
    }

    #[test]
    fn separation_hinges_at_zero_distance() {
        let phi = vec![vec![0.3, 0.4], vec![0.3, 0.4]];
        assert_eq!(separation_loss(&phi, 0.5, SeparationForm::PushApart), 0.5);
    }

    #[test]
    fn separated_pairs_contribute_nothing() {
        let phi = vec![vec![0.0, 0.0], vec![2.0, 0.0]];
        assert_eq!(separation_loss(&phi, 0.5, SeparationForm::PushApart), 0.0);
        // The printed form penalizes exactly these far pairs instead.
        assert_eq!(
            separation_loss(&phi, 0.5, SeparationForm::PullTogether),
            1.5
        );
    }

    #[test]
    fn separation_matches_all_pairs_oracle() {
        let mut r = rng(21);
        let k = 6;
        let phi: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..4).map(|_| r.random_range(-0.3..0.3)).collect())
            .collect();
        let margin = 0.5;
        let mut expected = 0.0;
        for i in 0..k {
            for j in (i + 1)..k {
                let dist: f64 = (0..4)
                    .map(|t| (phi[i][t] - phi[j][t]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                expected += (margin - dist).max(0.0);
            }
        }
        expected /= (k * (k - 1) / 2) as f64;
        let got = separation_loss(&phi, margin, SeparationForm::PushApart);
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn loss_gradients_pass_finite_difference_check() {
        let mut r = rng(33);
        for form in [SeparationForm::PushApart, SeparationForm::PullTogether] {
            let k = 4;
            let d = 3;
            let phi: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..d).map(|_| r.random_range(-0.8..0.8)).collect())
                .collect();
            let w: Vec<Vec<f64>> = (0..k)
                .map(|i| {
                    (0..k)
                        .map(|j| if (i + j) % 2 == 0 { 1.0 } else { -1.0 })
                        .collect()
                })
                .collect();
            let (_, dphi_sim) = similarity_loss_grad(&phi, &w);
            let (_, dphi_sep) = separation_loss_grad(&phi, 0.5, form);
            let eps = 1e-6;
            for a in 0..k {
                for t in 0..d {
                    let mut up = phi.clone();
                    up[a][t] += eps;
                    let mut down = phi.clone();
                    down[a][t] -= eps;
                    let numeric_sim =
                        (similarity_loss(&up, &w) - similarity_loss(&down, &w)) / (2.0 * eps);
                    let numeric_sep = (separation_loss(&up, 0.5, form)
                        - separation_loss(&down, 0.5, form))
                        / (2.0 * eps);
                    assert!(relative_error(dphi_sim[a][t], numeric_sim) < 1e-4);
                    assert!(relative_error(dphi_sep[a][t], numeric_sep) < 1e-4);
                }
            }
        }
    }

    #[test]
    fn end_to_end_embedding_gradient_passes_finite_differences() {
        // Check the full chain: parameters -> phi -> L_s + L_csc.
        let mut r = rng(55);
        let table = EmbeddingTable::init(5, 4, 3, &mut r);
        let batch: Vec<StateId> = vec![StateId(0), StateId(2), StateId(4)];
        let w = vec![
            vec![1.0, 1.0, -1.0],
            vec![1.0, 1.0, -1.0],
            vec![-1.0, -1.0, 1.0],
        ];
        let margin = 0.5;
        let form = SeparationForm::PushApart;

        // Analytic gradient through the net.
        let traces: Vec<_> = batch
            .iter()
            .map(|&s| table.net().trace_one_hot(s.idx()))
            .collect();
        let phi: Vec<Vec<f64>> = traces.iter().map(|t| t.output().to_vec()).collect();
        let (_, mut dphi) = similarity_loss_grad(&phi, &w);
        let (_, dphi_sep) = separation_loss_grad(&phi, margin, form);
        for (row, sep) in dphi.iter_mut().zip(&dphi_sep) {
            for (g, s) in row.iter_mut().zip(sep) {
                *g += s;
            }
        }
        let mut grads = Gradients::zeros_like(table.net());
        for (trace, upstream) in traces.iter().zip(&dphi) {
            table.net().backward_into(trace, upstream, &mut grads);
        }

        // Numeric gradient over a sample of parameters.
        let eps = 1e-6;
        let mut probe = table.clone();
        let mut checked = 0;
        for li in 0..table.net().layers().len() {
            let n_w = table.net().layers()[li].w.len();
            for wi in (0..n_w).step_by(3) {
                let orig = probe.net.layers()[li].w[wi];
                probe.net.layers_mut()[li].w[wi] = orig + eps;
                let up = probe.batch_loss(&batch, &w, margin, form).total;
                probe.net.layers_mut()[li].w[wi] = orig - eps;
                let down = probe.batch_loss(&batch, &w, margin, form).total;
                probe.net.layers_mut()[li].w[wi] = orig;
                let numeric = (up - down) / (2.0 * eps);
                assert!(
                    relative_error(grads.w[li][wi], numeric) < 1e-4,
                    "layer {li} weight {wi}"
                );
                checked += 1;
            }
        }
        assert!(checked > 10);
    }

    #[test]
    fn degenerate_batch_of_one_state() {
        let table = EmbeddingTable::init(3, 4, 2, &mut rng(1));
        let w = vec![vec![1.0]];
        let report = table.batch_loss(&[StateId(1)], &w, 0.5, SeparationForm::PushApart);
        assert_eq!(report.l_csc, 0.0);
        assert!(report.l_s >= 0.0);
        assert_eq!(report.total, report.l_s);
    }

    #[test]
    fn frozen_table_rejects_training_but_serves_embeddings() {
        let mut table = EmbeddingTable::init(4, 4, 2, &mut rng(3));
        let mut tracker = DynamicsTracker::new();
        tracker.observe(StateId(0), StateId(1));
        let before = table.embed(StateId(0));
        table.freeze();
        let err = table.train_step(
            &tracker,
            &EmbedTrainParams::default(),
            &mut Optimizer::sgd(1e-2),
            &mut rng(4),
        );
        assert!(matches!(err, Err(EmbeddingError::Frozen)));
        assert_eq!(table.embed(StateId(0)), before);
    }

    #[test]
    fn training_reduces_loss_on_a_small_room_pair() {
        // Two rooms joined by one doorway; walk it, then train.
        let text = "#########\n#...#...#\n#...#...#\n#.......#\n#...#...#\n#########\n";
        let (spec, _) = GridSpec::parse(text).unwrap();
        let env = GridEnv::build(spec).unwrap();
        let mut tracker = DynamicsTracker::new();
        for s in env.states() {
            for a in Action::ALL {
                tracker.observe(s, env.next_state(s, a));
            }
        }
        let mut table = EmbeddingTable::init(env.num_states(), 32, 6, &mut rng(8));
        let mut opt = Optimizer::sgd(5e-2);
        let mut sampler = rng(9);
        let params = EmbedTrainParams {
            batch_size: 16,
            ..EmbedTrainParams::default()
        };
        let first = table
            .train_step(&tracker, &params, &mut opt, &mut sampler)
            .unwrap();
        let mut last = first;
        for _ in 0..499 {
            last = table
                .train_step(&tracker, &params, &mut opt, &mut sampler)
                .unwrap();
        }
        assert!(
            last.total < first.total,
            "loss did not decrease: {} -> {}",
            first.total,
            last.total
        );
        assert!(last.l_s >= 0.0 && last.l_csc >= 0.0);
        assert!((last.total - (last.l_s + last.l_csc)).abs() < 1e-15);
    }

    #[test]
    fn zero_loss_weight_leaves_parameters_untouched() {
        let mut tracker = DynamicsTracker::new();
        for i in 0..6 {
            tracker.observe(StateId(i), StateId((i + 1) % 6));
        }
        let mut table = EmbeddingTable::init(6, 8, 4, &mut rng(10));
        let digest = table.params_digest();
        let params = EmbedTrainParams {
            loss_weight: 0.0,
            batch_size: 4,
            ..EmbedTrainParams::default()
        };
        let report = table
            .train_step(&tracker, &params, &mut Optimizer::sgd(0.1), &mut rng(11))
            .unwrap();
        assert_eq!(table.params_digest(), digest);
        assert!(report.total >= 0.0);
    }

    #[test]
    fn export_writes_one_row_per_state() {
        let env = GridEnv::build(GridSpec::empty_room()).unwrap();
        let table = EmbeddingTable::init(env.num_states(), 8, 4, &mut rng(12));
        let mut buf = Vec::new();
        table.export_csv(&env, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), env.num_states() + 1);
        assert!(text.starts_with("state_id,x,y,phi_1"));
    }
}
