//! The classifier: a small tanh MLP encoder with a linear classification
//! head and a linear projection head, trained by manual backpropagation
//! with a decoupled-weight-decay Adam update, plus the EMA teacher that
//! shadows it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{softmax, Matrix, ProbVector, RandomStream};

/// Layer sizes of the network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub num_classes: usize,
    pub proj_dim: usize,
}

/// A dense layer: `weight` is input×output, bias one per output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: Matrix::zeros(input, output),
            bias: vec![0.0; output],
        }
    }

    fn init(input: usize, output: usize, rng: &mut RandomStream) -> Self {
        let scale = 1.0 / (input as f64).sqrt();
        let mut weight = Matrix::zeros(input, output);
        for v in weight.data_mut() {
            *v = scale * rng.next_normal();
        }
        Linear {
            weight,
            bias: vec![0.0; output],
        }
    }

    fn apply(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = x.matmul(&self.weight)?;
        out.add_row_broadcast(&self.bias);
        Ok(out)
    }
}

/// Student parameters θ: encoder layers (tanh between them), the
/// classification head, and the projection head. The same shape doubles
/// as gradient and moment storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub encoder: Vec<Linear>,
    pub class_head: Linear,
    pub proj_head: Linear,
}

impl NetworkParams {
    pub fn init(cfg: &ModelConfig, rng: &mut RandomStream) -> Self {
        let mut encoder = Vec::with_capacity(cfg.hidden_layers);
        let mut prev = cfg.input_dim;
        for _ in 0..cfg.hidden_layers {
            encoder.push(Linear::init(prev, cfg.hidden_width, rng));
            prev = cfg.hidden_width;
        }
        NetworkParams {
            encoder,
            class_head: Linear::init(prev, cfg.num_classes, rng),
            proj_head: Linear::init(prev, cfg.proj_dim, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        NetworkParams {
            encoder: self
                .encoder
                .iter()
                .map(|l| Linear::zeros(l.weight.rows(), l.weight.cols()))
                .collect(),
            class_head: Linear::zeros(self.class_head.weight.rows(), self.class_head.weight.cols()),
            proj_head: Linear::zeros(self.proj_head.weight.rows(), self.proj_head.weight.cols()),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder
            .first()
            .map_or(self.class_head.weight.rows(), |l| l.weight.rows())
    }

    pub fn num_classes(&self) -> usize {
        self.class_head.weight.cols()
    }

    pub fn proj_dim(&self) -> usize {
        self.proj_head.weight.cols()
    }

    /// Visits every parameter as `(weights..., biases...)` per layer, in a
    /// fixed order shared by all same-shaped instances.
    pub fn for_each(&self, mut f: impl FnMut(f64)) {
        for l in self.layers() {
            l.weight.data().iter().for_each(|&v| f(v));
            l.bias.iter().for_each(|&v| f(v));
        }
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.for_each(|v| ok &= v.is_finite());
        ok
    }

    pub fn param_count(&self) -> usize {
        self.layers()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    fn layers(&self) -> impl Iterator<Item = &Linear> {
        self.encoder
            .iter()
            .chain(std::iter::once(&self.class_head))
            .chain(std::iter::once(&self.proj_head))
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Linear> {
        self.encoder
            .iter_mut()
            .chain(std::iter::once(&mut self.class_head))
            .chain(std::iter::once(&mut self.proj_head))
    }

    /// Elementwise `self += scale · other`.
    pub fn add_scaled(&mut self, other: &NetworkParams, scale: f64) {
        zip_params(self, other, |d, s| *d += scale * s);
    }
}

fn zip_params(dst: &mut NetworkParams, src: &NetworkParams, f: impl Fn(&mut f64, f64) + Copy) {
    let dst_layers: Vec<&mut Linear> = dst.layers_mut().collect();
    let src_layers: Vec<&Linear> = src.layers().collect();
    assert_eq!(dst_layers.len(), src_layers.len(), "parameter shape mismatch");
    for (d, s) in dst_layers.into_iter().zip(src_layers) {
        for (dv, &sv) in d.weight.data_mut().iter_mut().zip(s.weight.data()) {
            f(dv, sv);
        }
        for (dv, &sv) in d.bias.iter_mut().zip(&s.bias) {
            f(dv, sv);
        }
    }
}

/// Activations cached by a forward pass, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Matrix,
    hidden: Vec<Matrix>, // tanh outputs, one per encoder layer
}

/// Outputs of one forward pass over a batch.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Matrix,
    pub probs: Vec<ProbVector>,
    pub features: Matrix,
    pub cache: ForwardCache,
}

/// `probs = softmax(h(f(x)))` per row, `features = g(f(x))`.
pub fn forward(params: &NetworkParams, x: &Matrix) -> Result<ForwardOutput> {
    if x.cols() != params.input_dim() {
        return Err(Error::DimMismatch {
            context: "forward input",
            expected: params.input_dim(),
            actual: x.cols(),
        });
    }
    let mut hidden = Vec::with_capacity(params.encoder.len());
    let mut current = x.clone();
    for layer in &params.encoder {
        current = layer.apply(&current)?.map(f64::tanh);
        hidden.push(current.clone());
    }
    let logits = params.class_head.apply(&current)?;
    let features = params.proj_head.apply(&current)?;
    let probs = (0..logits.rows())
        .map(|r| softmax(logits.row(r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ForwardOutput {
        logits,
        probs,
        features,
        cache: ForwardCache {
            input: x.clone(),
            hidden,
        },
    })
}

/// Backpropagates loss gradients w.r.t. the classification logits and the
/// projection output through both heads and the shared encoder. Either
/// gradient may be all-zero when the corresponding head is unused.
pub fn backward(
    params: &NetworkParams,
    cache: &ForwardCache,
    d_logits: &Matrix,
    d_features: &Matrix,
) -> Result<NetworkParams> {
    let last_hidden = cache
        .hidden
        .last()
        .ok_or(Error::DimMismatch {
            context: "backward encoder",
            expected: 1,
            actual: 0,
        })?;
    let mut grads = params.zeros_like();

    grads.class_head.weight = last_hidden.transpose_matmul(d_logits)?;
    grads.class_head.bias = d_logits.col_sums();
    grads.proj_head.weight = last_hidden.transpose_matmul(d_features)?;
    grads.proj_head.bias = d_features.col_sums();

    // d/d(last hidden) = contributions from both heads.
    let from_class = d_logits.matmul_transpose(&params.class_head.weight)?;
    let from_proj = d_features.matmul_transpose(&params.proj_head.weight)?;
    let mut d_hidden = from_class;
    for (d, &s) in d_hidden.data_mut().iter_mut().zip(from_proj.data()) {
        *d += s;
    }

    for i in (0..params.encoder.len()).rev() {
        let act = &cache.hidden[i];
        // tanh': 1 − act².
        for (d, &a) in d_hidden.data_mut().iter_mut().zip(act.data()) {
            *d *= 1.0 - a * a;
        }
        let layer_input = if i == 0 { &cache.input } else { &cache.hidden[i - 1] };
        grads.encoder[i].weight = layer_input.transpose_matmul(&d_hidden)?;
        grads.encoder[i].bias = d_hidden.col_sums();
        if i > 0 {
            d_hidden = d_hidden.matmul_transpose(&params.encoder[i].weight)?;
        }
    }
    Ok(grads)
}

/// Optimizer hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 1e-3,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moments with decoupled weight decay.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    first_moment: NetworkParams,
    second_moment: NetworkParams,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &NetworkParams, config: OptimizerConfig) -> Self {
        OptimizerState {
            config,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step: 0,
        }
    }

    /// One bias-corrected update. Rejects non-finite gradients so the
    /// caller can skip the step and keep the previous parameters.
    pub fn apply(&mut self, params: &mut NetworkParams, grads: &NetworkParams) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFinite {
                context: "optimizer gradients",
            });
        }
        self.step += 1;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);

        zip_params(&mut self.first_moment, grads, |m, g| {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g
        });
        zip_params(&mut self.second_moment, grads, |v, g| {
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g
        });

        // Walk params, m, v in lockstep; layer order is fixed by layers().
        let m_layers: Vec<&Linear> = self.first_moment.layers().collect();
        let v_layers: Vec<&Linear> = self.second_moment.layers().collect();
        for (idx, layer) in params.layers_mut().enumerate() {
            let update = |p: &mut f64, m: f64, v: f64| {
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                *p -= c.learning_rate * (m_hat / (v_hat.sqrt() + c.epsilon) + c.weight_decay * *p);
            };
            for ((p, &m), &v) in layer
                .weight
                .data_mut()
                .iter_mut()
                .zip(m_layers[idx].weight.data())
                .zip(v_layers[idx].weight.data())
            {
                update(p, m, v);
            }
            for ((p, &m), &v) in layer
                .bias
                .iter_mut()
                .zip(&m_layers[idx].bias)
                .zip(&v_layers[idx].bias)
            {
                update(p, m, v);
            }
        }
        Ok(())
    }
}

/// Teacher parameters θ′ maintained as an exponential moving average of
/// the student. Initialized as a copy; used for evaluation only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmaState {
    pub shadow: NetworkParams,
    pub alpha: f64,
}

impl EmaState {
    pub fn new(params: &NetworkParams, alpha: f64) -> Self {
        EmaState {
            shadow: params.clone(),
            alpha,
        }
    }

    /// `θ′ ← α·θ′ + (1−α)·θ` elementwise.
    pub fn update(&mut self, params: &NetworkParams) {
        let alpha = self.alpha;
        zip_params(&mut self.shadow, params, |s, p| {
            *s = alpha * *s + (1.0 - alpha) * p
        });
    }
}
