//! Trainable encoder and classifier head with hand-derived gradients.
//!
//! The encoder maps an input feature vector to a raw embedding; the pipeline
//! L2-normalizes that embedding before it reaches the classifier, the
//! prototype bank and the contrastive loss. [`ModelParams::forward`] keeps the
//! activations needed by [`ModelParams::backward`].

mod checkpoint;
mod optim;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use optim::{AdamW, AdamWConfig};

use serde::{Deserialize, Serialize};

use crate::error::{IprError, Result};
use crate::numerics::{dot_unchecked, log_sum_exp, softmax_unchecked, Matrix, RngStream};

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    /// Tanh approximation of GELU.
    Gelu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Gelu => {
                let t = (GELU_C * (z + GELU_K * z * z * z)).tanh();
                0.5 * z * (1.0 + t)
            }
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Gelu => {
                let t = (GELU_C * (z + GELU_K * z * z * z)).tanh();
                0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * z * z)
            }
        }
    }
}

/// Fully connected layer `act(W x + b)` with `W` stored as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weight: Matrix::zeros(output, input),
            bias: vec![0.0; output],
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Per-layer record of a forward pass: the layer input and pre-activation.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    inputs: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(IprError::dim("mlp input", self.input_dim(), x.len()));
        }
        let mut h = x.to_vec();
        for layer in &self.layers {
            h = layer_forward(layer, &h).1;
        }
        Ok(h)
    }

    pub fn forward_traced(&self, x: &[f64]) -> Result<MlpTrace> {
        if x.len() != self.input_dim() {
            return Err(IprError::dim("mlp input", self.input_dim(), x.len()));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for layer in &self.layers {
            let (z, a) = layer_forward(layer, &h);
            inputs.push(h);
            pre_activations.push(z);
            h = a;
        }
        Ok(MlpTrace {
            inputs,
            pre_activations,
            output: h,
        })
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the network input.
    pub fn backward(&self, trace: &MlpTrace, upstream: &[f64], grads: &mut Mlp) -> Result<Vec<f64>> {
        if trace.inputs.len() != self.layers.len() {
            return Err(IprError::Usage(format!(
                "forward trace has {} layers, network has {}",
                trace.inputs.len(),
                self.layers.len()
            )));
        }
        if upstream.len() != self.output_dim() {
            return Err(IprError::dim("mlp upstream gradient", self.output_dim(), upstream.len()));
        }
        let mut delta = upstream.to_vec();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let z = &trace.pre_activations[idx];
            if layer.activation != Activation::Identity {
                for (d, &zi) in delta.iter_mut().zip(z) {
                    *d *= layer.activation.derivative(zi);
                }
            }
            let g = &mut grads.layers[idx];
            g.weight.add_outer(&delta, &trace.inputs[idx], 1.0);
            for (gb, d) in g.bias.iter_mut().zip(&delta) {
                *gb += d;
            }
            delta = layer.weight.matvec_transposed(&delta)?;
        }
        Ok(delta)
    }

    fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.input_dim(), l.output_dim(), l.activation))
                .collect(),
        }
    }
}

fn layer_forward(layer: &Dense, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut z = Vec::with_capacity(layer.output_dim());
    for r in 0..layer.output_dim() {
        z.push(dot_unchecked(layer.weight.row(r), x) + layer.bias[r]);
    }
    let a = match layer.activation {
        Activation::Identity => z.clone(),
        act => z.iter().map(|&v| act.apply(v)).collect(),
    };
    (z, a)
}

/// Architecture of the encoder and classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub embedding_dim: usize,
    pub classifier_hidden: Vec<usize>,
    pub num_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 16,
            encoder_hidden: vec![64, 64],
            embedding_dim: 32,
            classifier_hidden: Vec::new(),
            num_classes: 4,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(IprError::config("model.input_dim", "must be positive"));
        }
        if self.embedding_dim == 0 {
            return Err(IprError::config("model.embedding_dim", "must be positive"));
        }
        if self.num_classes < 2 {
            return Err(IprError::config("model.num_classes", "need at least two classes"));
        }
        if self.encoder_hidden.iter().chain(&self.classifier_hidden).any(|&w| w == 0) {
            return Err(IprError::config("model", "hidden widths must be positive"));
        }
        Ok(())
    }
}

/// Encoder plus classifier head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub encoder: Mlp,
    pub classifier: Mlp,
}

/// Everything [`ModelParams::backward`] needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    encoder: MlpTrace,
    raw_norm: f64,
    embedding: Vec<f64>,
    classifier: MlpTrace,
}

impl ForwardCache {
    /// Unit-norm embedding.
    pub fn embedding(&self) -> &[f64] {
        &self.embedding
    }

    /// Encoder output before normalization.
    pub fn raw_embedding(&self) -> &[f64] {
        self.encoder.output()
    }

    pub fn logits(&self) -> &[f64] {
        self.classifier.output()
    }
}

impl ModelParams {
    /// Builds a network of zeros with the given architecture.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut encoder = Vec::new();
        let mut width = config.input_dim;
        for &h in &config.encoder_hidden {
            encoder.push(Dense::zeros(width, h, Activation::Gelu));
            width = h;
        }
        encoder.push(Dense::zeros(width, config.embedding_dim, Activation::Identity));

        let mut classifier = Vec::new();
        let mut width = config.embedding_dim;
        for &h in &config.classifier_hidden {
            classifier.push(Dense::zeros(width, h, Activation::Gelu));
            width = h;
        }
        classifier.push(Dense::zeros(width, config.num_classes, Activation::Identity));

        Ok(Self {
            encoder: Mlp { layers: encoder },
            classifier: Mlp { layers: classifier },
        })
    }

    /// Gaussian initialization scaled by fan-in (He gain before GELU layers),
    /// zero biases.
    pub fn init(config: &ModelConfig, rng: &mut RngStream) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        for layer in params.encoder.layers.iter_mut().chain(params.classifier.layers.iter_mut()) {
            let gain = match layer.activation {
                Activation::Gelu => 2.0,
                Activation::Identity => 1.0,
            };
            let std = (gain / layer.input_dim() as f64).sqrt();
            for w in layer.weight.as_mut_slice() {
                *w = std * rng.normal();
            }
        }
        Ok(params)
    }

    pub fn config(&self) -> ModelConfig {
        let hidden = |mlp: &Mlp| {
            mlp.layers[..mlp.layers.len() - 1]
                .iter()
                .map(Dense::output_dim)
                .collect::<Vec<_>>()
        };
        ModelConfig {
            input_dim: self.encoder.input_dim(),
            encoder_hidden: hidden(&self.encoder),
            embedding_dim: self.encoder.output_dim(),
            classifier_hidden: hidden(&self.classifier),
            num_classes: self.classifier.output_dim(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: self.encoder.zeros_like(),
            classifier: self.classifier.zeros_like(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn embedding_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.output_dim()
    }

    /// Raw (unnormalized) encoder output.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.encoder.forward(x)
    }

    /// Classifier logits for an embedding.
    pub fn classify(&self, embedding: &[f64]) -> Result<Vec<f64>> {
        if embedding.len() != self.embedding_dim() {
            return Err(IprError::dim("classify", self.embedding_dim(), embedding.len()));
        }
        self.classifier.forward(embedding)
    }

    /// Unit-norm embedding used for prototypes, contrast and classification.
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        let raw = self.encode(x)?;
        normalize_embedding(&raw).map(|(k, _)| k)
    }

    /// Logits of the full pipeline `classify(embed(x))`.
    pub fn predict_logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.classify(&self.embed(x)?)
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardCache> {
        let encoder = self.encoder.forward_traced(x)?;
        let (embedding, raw_norm) = normalize_embedding(encoder.output())?;
        let classifier = self.classifier.forward_traced(&embedding)?;
        Ok(ForwardCache {
            encoder,
            raw_norm,
            embedding,
            classifier,
        })
    }

    /// Back-propagates gradients arriving at the logits and/or at the unit
    /// embedding, accumulating into `grads`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_logits: Option<&[f64]>,
        grad_embedding: Option<&[f64]>,
        grads: &mut ModelParams,
    ) -> Result<()> {
        if cache.embedding.len() != self.embedding_dim() {
            return Err(IprError::Usage(
                "forward cache does not belong to this architecture".into(),
            ));
        }
        let mut g_unit = match grad_embedding {
            Some(g) if g.len() != self.embedding_dim() => {
                return Err(IprError::dim("embedding gradient", self.embedding_dim(), g.len()))
            }
            Some(g) => g.to_vec(),
            None => vec![0.0; self.embedding_dim()],
        };
        if let Some(gl) = grad_logits {
            let from_head = self.classifier.backward(&cache.classifier, gl, &mut grads.classifier)?;
            for (a, b) in g_unit.iter_mut().zip(&from_head) {
                *a += b;
            }
        }
        // d(e/‖e‖)/de = (I − k kᵀ) / ‖e‖
        let k = &cache.embedding;
        let proj = dot_unchecked(&g_unit, k);
        let g_raw: Vec<f64> = g_unit
            .iter()
            .zip(k)
            .map(|(g, ki)| (g - proj * ki) / cache.raw_norm)
            .collect();
        self.encoder.backward(&cache.encoder, &g_raw, &mut grads.encoder)?;
        Ok(())
    }

    /// Named parameter tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (prefix, mlp) in [("encoder", &self.encoder), ("classifier", &self.classifier)] {
            for (i, layer) in mlp.layers.iter().enumerate() {
                out.push((format!("{prefix}.{i}.weight"), layer.weight.as_slice()));
                out.push((format!("{prefix}.{i}.bias"), layer.bias.as_slice()));
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::new();
        for (prefix, mlp) in [("encoder", &mut self.encoder), ("classifier", &mut self.classifier)] {
            for (i, layer) in mlp.layers.iter_mut().enumerate() {
                out.push((format!("{prefix}.{i}.weight"), layer.weight.as_mut_slice()));
                out.push((format!("{prefix}.{i}.bias"), layer.bias.as_mut_slice()));
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|(_, t)| t.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.num_params();
        if flat.len() != n {
            return Err(IprError::dim("flat parameters", n, flat.len()));
        }
        let mut offset = 0;
        for (_, t) in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// Returns the unit embedding and the raw norm.
pub fn normalize_embedding(raw: &[f64]) -> Result<(Vec<f64>, f64)> {
    let norm = dot_unchecked(raw, raw).sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(IprError::Degenerate(format!("encoder produced embedding with norm {norm}")));
    }
    Ok((raw.iter().map(|v| v / norm).collect(), norm))
}

/// Weighted cross-entropy against a class index.
///
/// Returns `−w · log softmax(logits)[target]` and its gradient
/// `w · (softmax(logits) − onehot(target))`.
pub fn cross_entropy(logits: &[f64], target: usize, weight: f64) -> Result<(f64, Vec<f64>)> {
    if target >= logits.len() {
        return Err(IprError::Input(format!(
            "target class {target} out of range for {} classes",
            logits.len()
        )));
    }
    if !(weight >= 0.0) {
        return Err(IprError::Input(format!("class weight must be non-negative, got {weight}")));
    }
    if weight == 0.0 {
        return Ok((0.0, vec![0.0; logits.len()]));
    }
    let loss = weight * (log_sum_exp(logits) - logits[target]);
    let mut grad = softmax_unchecked(logits, 1.0);
    grad[target] -= 1.0;
    for g in &mut grad {
        *g *= weight;
    }
    Ok((loss, grad))
}

/// Cross-entropy against a target distribution.
pub fn soft_cross_entropy(logits: &[f64], target: &[f64], weight: f64) -> Result<(f64, Vec<f64>)> {
    if target.len() != logits.len() {
        return Err(IprError::dim("soft cross-entropy target", logits.len(), target.len()));
    }
    let lse = log_sum_exp(logits);
    let mass: f64 = target.iter().sum();
    let mut loss = 0.0;
    for (t, l) in target.iter().zip(logits) {
        loss += t * (lse - l);
    }
    let p = softmax_unchecked(logits, 1.0);
    let grad = p
        .iter()
        .zip(target)
        .map(|(pi, ti)| weight * (mass * pi - ti))
        .collect();
    Ok((weight * loss, grad))
}
