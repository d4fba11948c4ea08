//! Minimal dense-network kernel: forward, analytic reverse-mode gradients,
//! a plain gradient-descent optimizer, and a finite-difference checker.
//!
//! Inputs may be dense vectors or one-hot indices; the one-hot path skips
//! the zero columns of the first layer but is numerically identical to the
//! dense path.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Identity => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One dense layer; weights are row-major, `out_dim x in_dim`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub act: Activation,
}

impl Layer {
    fn init<R: Rng>(in_dim: usize, out_dim: usize, act: Activation, rng: &mut R) -> Layer {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let w = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Layer {
            in_dim,
            out_dim,
            w,
            b: vec![0.0; out_dim],
            act,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum NetInput {
    Dense(Vec<f64>),
    OneHot { index: usize, dim: usize },
}

/// Cached activations from one forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    input: NetInput,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
    /// Post-activation of each layer; the last entry is the network output.
    post: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.post.last().expect("net has at least one layer")
    }
}

/// Parameter gradients shaped exactly like the network.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Gradients {
        Gradients {
            w: net.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            b: net.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.w.iter_mut().flatten() {
            *g *= factor;
        }
        for g in self.b.iter_mut().flatten() {
            *g *= factor;
        }
    }
}

/// A chain of dense layers.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DenseNet {
    layers: Vec<Layer>,
}

impl DenseNet {
    /// Standard MLP: relu hidden layers, identity output.
    pub fn mlp<R: Rng>(in_dim: usize, hidden: &[usize], out_dim: usize, rng: &mut R) -> DenseNet {
        let mut layers = Vec::new();
        let mut prev = in_dim;
        for &h in hidden {
            layers.push(Layer::init(prev, h, Activation::Relu, rng));
            prev = h;
        }
        layers.push(Layer::init(prev, out_dim, Activation::Identity, rng));
        DenseNet { layers }
    }

    pub fn from_layers(layers: Vec<Layer>) -> DenseNet {
        for pair in layers.windows(2) {
            assert_eq!(
                pair[0].out_dim, pair[1].in_dim,
                "consecutive layer dimensions must match"
            );
        }
        DenseNet { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable parameter access for perturbation-style tests and tooling.
    /// Callers must not change layer dimensions.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn first_layer_out(&self, input: &NetInput) -> Vec<f64> {
        let l = &self.layers[0];
        let mut z = l.b.clone();
        match input {
            NetInput::Dense(x) => {
                assert_eq!(x.len(), l.in_dim, "input dimension mismatch");
                for (i, zi) in z.iter_mut().enumerate() {
                    let row = &l.w[i * l.in_dim..(i + 1) * l.in_dim];
                    let mut acc = 0.0;
                    for (wij, xj) in row.iter().zip(x) {
                        acc += wij * xj;
                    }
                    *zi += acc;
                }
            }
            NetInput::OneHot { index, dim } => {
                assert_eq!(*dim, l.in_dim, "input dimension mismatch");
                assert!(*index < *dim, "one-hot index out of range");
                for (i, zi) in z.iter_mut().enumerate() {
                    *zi += l.w[i * l.in_dim + index];
                }
            }
        }
        z
    }

    fn run(&self, input: NetInput) -> ForwardTrace {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let z0 = self.first_layer_out(&input);
        let a0: Vec<f64> = z0.iter().map(|&z| self.layers[0].act.apply(z)).collect();
        pre.push(z0);
        post.push(a0);
        for (li, l) in self.layers.iter().enumerate().skip(1) {
            let x = &post[li - 1];
            let mut z = l.b.clone();
            for (i, zi) in z.iter_mut().enumerate() {
                let row = &l.w[i * l.in_dim..(i + 1) * l.in_dim];
                let mut acc = 0.0;
                for (wij, xj) in row.iter().zip(x) {
                    acc += wij * xj;
                }
                *zi += acc;
            }
            let a = z.iter().map(|&v| l.act.apply(v)).collect();
            pre.push(z);
            post.push(a);
        }
        ForwardTrace { input, pre, post }
    }

    /// Plain forward pass.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.run(NetInput::Dense(x.to_vec())).output().to_vec()
    }

    /// Forward pass of a one-hot vector given by its hot index.
    pub fn forward_one_hot(&self, index: usize) -> Vec<f64> {
        self.run(NetInput::OneHot {
            index,
            dim: self.in_dim(),
        })
        .output()
        .to_vec()
    }

    /// Forward pass that caches activations for `backward`.
    pub fn trace(&self, x: &[f64]) -> ForwardTrace {
        self.run(NetInput::Dense(x.to_vec()))
    }

    pub fn trace_one_hot(&self, index: usize) -> ForwardTrace {
        self.run(NetInput::OneHot {
            index,
            dim: self.in_dim(),
        })
    }

    /// Accumulates gradients of `output . upstream` into `grads`.
    pub fn backward_into(&self, trace: &ForwardTrace, upstream: &[f64], grads: &mut Gradients) {
        self.backprop(trace, upstream, grads, false);
    }

    /// Gradients of `output . upstream` with respect to all parameters.
    pub fn backward(&self, trace: &ForwardTrace, upstream: &[f64]) -> Gradients {
        let mut grads = Gradients::zeros_like(self);
        self.backprop(trace, upstream, &mut grads, false);
        grads
    }

    /// Like `backward`, but also returns the gradient with respect to the
    /// network input.
    pub fn backward_with_input_grad(
        &self,
        trace: &ForwardTrace,
        upstream: &[f64],
    ) -> (Gradients, Vec<f64>) {
        let mut grads = Gradients::zeros_like(self);
        let input = self.backprop(trace, upstream, &mut grads, true);
        (grads, input.expect("input grad requested"))
    }

    fn backprop(
        &self,
        trace: &ForwardTrace,
        upstream: &[f64],
        grads: &mut Gradients,
        want_input_grad: bool,
    ) -> Option<Vec<f64>> {
        let last = self.layers.len() - 1;
        assert_eq!(
            upstream.len(),
            self.layers[last].out_dim,
            "upstream gradient dimension mismatch"
        );
        let mut delta: Vec<f64> = upstream
            .iter()
            .zip(&trace.pre[last])
            .map(|(&g, &z)| g * self.layers[last].act.derivative(z))
            .collect();

        for li in (0..self.layers.len()).rev() {
            let l = &self.layers[li];
            // Bias gradient is the delta itself.
            for (gb, d) in grads.b[li].iter_mut().zip(&delta) {
                *gb += d;
            }
            if li > 0 {
                let below = &trace.post[li - 1];
                let gw = &mut grads.w[li];
                for (i, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    let row = &mut gw[i * l.in_dim..(i + 1) * l.in_dim];
                    for (g, x) in row.iter_mut().zip(below) {
                        *g += d * x;
                    }
                }
                // Propagate to the layer below.
                let mut next = vec![0.0; l.in_dim];
                for (i, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    let row = &l.w[i * l.in_dim..(i + 1) * l.in_dim];
                    for (n, wij) in next.iter_mut().zip(row) {
                        *n += d * wij;
                    }
                }
                let zs = &trace.pre[li - 1];
                let act = self.layers[li - 1].act;
                for (n, &z) in next.iter_mut().zip(zs) {
                    *n *= act.derivative(z);
                }
                delta = next;
            } else {
                match &trace.input {
                    NetInput::Dense(x) => {
                        let gw = &mut grads.w[0];
                        for (i, d) in delta.iter().enumerate() {
                            if *d == 0.0 {
                                continue;
                            }
                            let row = &mut gw[i * l.in_dim..(i + 1) * l.in_dim];
                            for (g, xj) in row.iter_mut().zip(x) {
                                *g += d * xj;
                            }
                        }
                    }
                    NetInput::OneHot { index, .. } => {
                        let gw = &mut grads.w[0];
                        for (i, d) in delta.iter().enumerate() {
                            gw[i * l.in_dim + index] += d;
                        }
                    }
                }
                if want_input_grad {
                    let mut input_grad = vec![0.0; l.in_dim];
                    for (i, d) in delta.iter().enumerate() {
                        if *d == 0.0 {
                            continue;
                        }
                        let row = &l.w[i * l.in_dim..(i + 1) * l.in_dim];
                        for (g, wij) in input_grad.iter_mut().zip(row) {
                            *g += d * wij;
                        }
                    }
                    return Some(input_grad);
                }
            }
        }
        None
    }

    /// Serializes all parameters and shapes; round-trips bit-exactly.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("net serializes")
    }

    pub fn from_json(text: &str) -> Result<DenseNet, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// FNV-1a digest over the exact parameter bits, for freeze checks.
    pub fn params_digest(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |v: f64| {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for l in &self.layers {
            for &v in &l.w {
                eat(v);
            }
            for &v in &l.b {
                eat(v);
            }
        }
        h
    }
}

/// Gradient-descent state. `momentum = 0` is plain descent, the default.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub lr: f64,
    pub momentum: f64,
    velocity_w: Vec<Vec<f64>>,
    velocity_b: Vec<Vec<f64>>,
    pub steps: u64,
}

impl Optimizer {
    pub fn sgd(lr: f64) -> Optimizer {
        Optimizer {
            lr,
            momentum: 0.0,
            velocity_w: Vec::new(),
            velocity_b: Vec::new(),
            steps: 0,
        }
    }

    pub fn with_momentum(lr: f64, momentum: f64) -> Optimizer {
        Optimizer {
            lr,
            momentum,
            velocity_w: Vec::new(),
            velocity_b: Vec::new(),
            steps: 0,
        }
    }

    /// Applies one descent step; gradients must be shaped like the net.
    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients) {
        assert_eq!(grads.w.len(), net.layers.len(), "gradient shape mismatch");
        for (li, l) in net.layers.iter().enumerate() {
            assert_eq!(grads.w[li].len(), l.w.len(), "gradient shape mismatch");
            assert_eq!(grads.b[li].len(), l.b.len(), "gradient shape mismatch");
        }
        if self.momentum != 0.0 && self.velocity_w.is_empty() {
            self.velocity_w = grads.w.iter().map(|g| vec![0.0; g.len()]).collect();
            self.velocity_b = grads.b.iter().map(|g| vec![0.0; g.len()]).collect();
        }
        for (li, l) in net.layers.iter_mut().enumerate() {
            if self.momentum != 0.0 {
                for ((p, g), v) in
                    l.w.iter_mut()
                        .zip(&grads.w[li])
                        .zip(self.velocity_w[li].iter_mut())
                {
                    *v = self.momentum * *v + g;
                    *p -= self.lr * *v;
                }
                for ((p, g), v) in
                    l.b.iter_mut()
                        .zip(&grads.b[li])
                        .zip(self.velocity_b[li].iter_mut())
                {
                    *v = self.momentum * *v + g;
                    *p -= self.lr * *v;
                }
            } else {
                for (p, g) in l.w.iter_mut().zip(&grads.w[li]) {
                    *p -= self.lr * g;
                }
                for (p, g) in l.b.iter_mut().zip(&grads.b[li]) {
                    *p -= self.lr * g;
                }
            }
        }
        self.steps += 1;
    }
}

/// Central finite differences of `output . 1` against analytic gradients.
/// Returns the maximum relative error over all parameters.
pub fn finite_diff_check(net: &DenseNet, x: &[f64], eps: f64) -> f64 {
    assert!(eps > 0.0);
    let ones = vec![1.0; net.out_dim()];
    let trace = net.trace(x);
    let analytic = net.backward(&trace, &ones);
    let scalar = |n: &DenseNet| -> f64 { n.forward(x).iter().sum() };
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for li in 0..net.layers.len() {
        for wi in 0..net.layers[li].w.len() {
            let orig = probe.layers[li].w[wi];
            probe.layers[li].w[wi] = orig + eps;
            let up = scalar(&probe);
            probe.layers[li].w[wi] = orig - eps;
            let down = scalar(&probe);
            probe.layers[li].w[wi] = orig;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(relative_error(analytic.w[li][wi], numeric));
        }
        for bi in 0..net.layers[li].b.len() {
            let orig = probe.layers[li].b[bi];
            probe.layers[li].b[bi] = orig + eps;
            let up = scalar(&probe);
            probe.layers[li].b[bi] = orig - eps;
            let down = scalar(&probe);
            probe.layers[li].b[bi] = orig;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(relative_error(analytic.b[li][bi], numeric));
        }
    }
    worst
}

/// |a - n| / max(|a|, |n|, 1e-8)
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}
