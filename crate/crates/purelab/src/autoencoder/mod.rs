//! Fully-connected autoencoder with a softmax classification head.
//!
//! Forward and backward passes are hand-rolled on the [`matrix`] kernels.
//! Reconstruction pretraining minimizes mean squared error against the input
//! (mean over batch rows and components, no 1/2 factor); classification
//! fine-tuning minimizes mean cross-entropy through the head and encoder
//! while the decoder stays untouched. All routines are pure functions of
//! their inputs, and seeded initialization makes whole-network construction
//! reproducible bit-for-bit.

pub mod checkpoint;
pub mod matrix;
pub mod train;

use rand::distributions::{Distribution, Uniform};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::seeds;
use matrix::{column_sums, matmul_nn, matmul_nt, matmul_tn, Matrix};

#[derive(Debug, Error)]
pub enum AutoencoderError {
    #[error("input dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("non-finite value produced in forward pass")]
    NonFiniteForward,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("labels length {labels} != batch rows {rows}")]
    LabelCount { labels: usize, rows: usize },
    #[error("label {label} out of range for {n_classes} classes")]
    BadLabel { label: u8, n_classes: usize },
    #[error("fine-tuning requires class labels")]
    MissingLabels,
    #[error("finite-difference step must be finite and positive, got {0}")]
    BadStep(f64),
    #[error("gradient check needs at least one coordinate to sample")]
    NoCoordinates,
    #[error("network structure invalid: {0}")]
    BadStructure(String),
    #[error("training config invalid: {0}")]
    BadTrainConfig(String),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
}

/// Per-layer nonlinearity. Softmax is legal only as the final head layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
    Softmax,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Linear => "linear",
            Activation::Softmax => "softmax",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "relu" => Some(Activation::Relu),
            "sigmoid" => Some(Activation::Sigmoid),
            "linear" => Some(Activation::Linear),
            "softmax" => Some(Activation::Softmax),
            _ => None,
        }
    }
}

/// One dense layer: `out x in` weights, `out` biases, and an activation.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Matrix,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl LayerParams {
    /// Glorot-uniform weights `U(-s, s)` with `s = sqrt(6/(in+out))`, zero
    /// biases. Weights fill row-major from the stream.
    pub fn seeded(out_dim: usize, in_dim: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        let s = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let dist = Uniform::new(-s, s);
        let data = (0..out_dim * in_dim).map(|_| dist.sample(rng)).collect();
        Self {
            weights: Matrix::from_vec(out_dim, in_dim, data),
            biases: vec![0.0; out_dim],
            activation,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }
}

/// Encoder, mirrored decoder, and classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub encoder: Vec<LayerParams>,
    pub decoder: Vec<LayerParams>,
    pub head: Vec<LayerParams>,
}

impl NetworkParams {
    /// Builds the standard shape: encoder `input_dim -> hidden[0] -> ...`
    /// (all relu), decoder mirroring back to `input_dim` (relu with a sigmoid
    /// output layer), head `bottleneck -> n_classes` softmax.
    pub fn new_seeded(
        input_dim: usize,
        hidden: &[usize],
        n_classes: usize,
        seed: u64,
    ) -> Result<Self, AutoencoderError> {
        if input_dim == 0 || hidden.is_empty() || hidden.contains(&0) {
            return Err(AutoencoderError::BadStructure(
                "input dim and hidden dims must be positive and non-empty".into(),
            ));
        }
        if n_classes < 2 {
            return Err(AutoencoderError::BadStructure("need at least two classes".into()));
        }
        let mut rng = seeds::rng(seed);
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);

        let encoder = dims
            .windows(2)
            .map(|w| LayerParams::seeded(w[1], w[0], Activation::Relu, &mut rng))
            .collect();
        let rev: Vec<usize> = dims.iter().rev().copied().collect();
        let decoder = rev
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 2 == rev.len() { Activation::Sigmoid } else { Activation::Relu };
                LayerParams::seeded(w[1], w[0], act, &mut rng)
            })
            .collect();
        let head = vec![LayerParams::seeded(
            n_classes,
            *hidden.last().unwrap(),
            Activation::Softmax,
            &mut rng,
        )];
        let net = Self { encoder, decoder, head };
        net.validate()?;
        Ok(net)
    }

    /// Re-draws the head from a fresh seed, leaving encoder/decoder bits
    /// untouched. Used at the start of each fine-tuning run.
    pub fn reinit_head(&mut self, seed: u64) {
        let mut rng = seeds::rng(seed);
        for layer in &mut self.head {
            *layer = LayerParams::seeded(layer.out_dim(), layer.in_dim(), layer.activation, &mut rng);
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].in_dim()
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.encoder.last().unwrap().out_dim()
    }

    pub fn n_classes(&self) -> usize {
        self.head.last().unwrap().out_dim()
    }

    /// Checks dimension chaining, finiteness, and activation placement
    /// (softmax exactly at the head output, nowhere else).
    pub fn validate(&self) -> Result<(), AutoencoderError> {
        let bad = |msg: &str| Err(AutoencoderError::BadStructure(msg.into()));
        if self.encoder.is_empty() || self.decoder.is_empty() || self.head.is_empty() {
            return bad("encoder, decoder, and head must be non-empty");
        }
        for (name, stack) in [("encoder", &self.encoder), ("decoder", &self.decoder), ("head", &self.head)] {
            for (i, layer) in stack.iter().enumerate() {
                if layer.out_dim() == 0 || layer.in_dim() == 0 {
                    return bad(&format!("{name} layer {i} has a zero dimension"));
                }
                if layer.biases.len() != layer.out_dim() {
                    return bad(&format!("{name} layer {i} bias length != output dim"));
                }
                if layer.weights.data().iter().any(|v| !v.is_finite())
                    || layer.biases.iter().any(|v| !v.is_finite())
                {
                    return bad(&format!("{name} layer {i} has non-finite parameters"));
                }
                if i > 0 && layer.in_dim() != stack[i - 1].out_dim() {
                    return bad(&format!("{name} layer {i} input dim breaks the chain"));
                }
                let is_last_head = name == "head" && i + 1 == stack.len();
                if (layer.activation == Activation::Softmax) != is_last_head {
                    return bad("softmax must appear exactly as the final head activation");
                }
            }
        }
        let bottleneck = self.bottleneck_dim();
        if self.decoder[0].in_dim() != bottleneck || self.head[0].in_dim() != bottleneck {
            return bad("decoder and head must consume the encoder bottleneck");
        }
        if self.decoder.last().unwrap().out_dim() != self.input_dim() {
            return bad("decoder output dim != encoder input dim");
        }
        Ok(())
    }

    /// Reconstruction of one flattened patch: `decoder(encoder(x))`.
    pub fn forward_reconstruct(&self, input: &[f64]) -> Result<Vec<f64>, AutoencoderError> {
        let batch = Matrix::from_rows(&[input]);
        Ok(self.reconstruct_batch(&batch)?.row(0).to_vec())
    }

    /// Class probabilities for one flattened patch: `softmax(head(encoder(x)))`.
    pub fn forward_classify(&self, input: &[f64]) -> Result<Vec<f64>, AutoencoderError> {
        let batch = Matrix::from_rows(&[input]);
        Ok(self.classify_batch(&batch)?.row(0).to_vec())
    }

    /// Top-1 class. Ties break toward the lowest index.
    pub fn predict(&self, input: &[f64]) -> Result<usize, AutoencoderError> {
        Ok(argmax(&self.forward_classify(input)?))
    }

    /// Batch reconstruction, one sample per row.
    pub fn reconstruct_batch(&self, inputs: &Matrix) -> Result<Matrix, AutoencoderError> {
        self.check_input(inputs)?;
        let enc = stack_forward(&self.encoder, inputs);
        let dec = stack_forward(&self.decoder, enc.last().unwrap());
        Ok(dec.into_iter().next_back().unwrap())
    }

    /// Batch class probabilities, one sample per row.
    pub fn classify_batch(&self, inputs: &Matrix) -> Result<Matrix, AutoencoderError> {
        self.check_input(inputs)?;
        let enc = stack_forward(&self.encoder, inputs);
        let head = stack_forward(&self.head, enc.last().unwrap());
        Ok(head.into_iter().next_back().unwrap())
    }

    fn check_input(&self, inputs: &Matrix) -> Result<(), AutoencoderError> {
        if inputs.rows() == 0 {
            return Err(AutoencoderError::EmptyBatch);
        }
        if inputs.cols() != self.input_dim() {
            return Err(AutoencoderError::DimMismatch { expected: self.input_dim(), got: inputs.cols() });
        }
        Ok(())
    }
}

/// Index of the strictly greatest component; first occurrence wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Training objective. Reconstruction compares the output to the input
/// itself; classification carries the target class per batch row.
#[derive(Debug, Clone, Copy)]
pub enum LossSpec<'a> {
    Mse,
    CrossEntropy(&'a [u8]),
}

/// Gradients for one layer, same shapes as [`LayerParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

/// Gradient of the batch loss. `None` sections received no gradient (MSE
/// never reaches the head; cross-entropy never reaches the decoder), so
/// applying them leaves those parameters bit-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGradients {
    pub encoder: Vec<LayerGrad>,
    pub decoder: Option<Vec<LayerGrad>>,
    pub head: Option<Vec<LayerGrad>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackpropOutput {
    pub loss: f64,
    pub gradients: NetworkGradients,
}

fn layer_forward(layer: &LayerParams, input: &Matrix) -> Matrix {
    let mut z = matmul_nt(input, &layer.weights);
    for r in 0..z.rows() {
        for (v, b) in z.row_mut(r).iter_mut().zip(&layer.biases) {
            *v += b;
        }
    }
    match layer.activation {
        Activation::Relu => {
            for v in z.data_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        Activation::Sigmoid => {
            for v in z.data_mut() {
                *v = 1.0 / (1.0 + (-*v).exp());
            }
        }
        Activation::Linear => {}
        Activation::Softmax => {
            for r in 0..z.rows() {
                softmax_in_place(z.row_mut(r));
            }
        }
    }
    z
}

/// Max-subtracted softmax; every output is strictly positive for finite input.
fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Outputs of each layer in order; `out[i]` is layer `i`'s post-activation.
fn stack_forward(layers: &[LayerParams], input: &Matrix) -> Vec<Matrix> {
    let mut acts = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        let a_prev = if i == 0 { input } else { &acts[i - 1] };
        acts.push(layer_forward(layer, a_prev));
    }
    acts
}

/// Converts an activation gradient into a pre-activation gradient using the
/// post-activation values (sufficient for relu, sigmoid, and linear).
fn activation_backward(mut da: Matrix, post: &Matrix, activation: Activation) -> Matrix {
    match activation {
        Activation::Relu => {
            for (g, &a) in da.data_mut().iter_mut().zip(post.data()) {
                if a <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        Activation::Sigmoid => {
            for (g, &a) in da.data_mut().iter_mut().zip(post.data()) {
                *g *= a * (1.0 - a);
            }
        }
        Activation::Linear => {}
        Activation::Softmax => unreachable!("softmax gradient is fused with cross-entropy"),
    }
    da
}

/// Backward pass through one stack given the top pre-activation gradient.
/// Returns per-layer gradients and the gradient wrt the stack input.
fn backward_stack(layers: &[LayerParams], input: &Matrix, acts: &[Matrix], dz_top: Matrix) -> (Vec<LayerGrad>, Matrix) {
    let mut rev_grads = Vec::with_capacity(layers.len());
    let mut dz = dz_top;
    for i in (0..layers.len()).rev() {
        let a_prev = if i == 0 { input } else { &acts[i - 1] };
        rev_grads.push(LayerGrad { weights: matmul_tn(&dz, a_prev), biases: column_sums(&dz) });
        let da_prev = matmul_nn(&dz, &layers[i].weights);
        if i == 0 {
            rev_grads.reverse();
            return (rev_grads, da_prev);
        }
        dz = activation_backward(da_prev, &acts[i - 1], layers[i - 1].activation);
    }
    unreachable!("stacks are validated non-empty");
}

fn all_finite(m: &Matrix) -> bool {
    m.data().iter().all(|v| v.is_finite())
}

/// Mean squared error over every component of the batch: no 1/2 factor, so
/// a lone linear unit at y=1 with target 0 has dL/dw = 2x.
fn mse_loss(out: &Matrix, target: &Matrix) -> f64 {
    let mut acc = 0.0;
    for (o, t) in out.data().iter().zip(target.data()) {
        let d = o - t;
        acc += d * d;
    }
    acc / out.data().len() as f64
}

fn ce_loss(probs: &Matrix, labels: &[u8]) -> f64 {
    let mut acc = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        acc -= probs.get(r, label as usize).ln();
    }
    acc / labels.len() as f64
}

fn check_labels(labels: &[u8], rows: usize, n_classes: usize) -> Result<(), AutoencoderError> {
    if labels.len() != rows {
        return Err(AutoencoderError::LabelCount { labels: labels.len(), rows });
    }
    if let Some(&label) = labels.iter().find(|&&l| l as usize >= n_classes) {
        return Err(AutoencoderError::BadLabel { label, n_classes });
    }
    Ok(())
}

/// Analytic gradient of the mean batch loss wrt every reachable parameter.
///
/// MSE reconstructs the batch through encoder+decoder; cross-entropy
/// classifies through encoder+head with the softmax/cross-entropy gradient
/// fused as `(P - onehot) / batch`. A non-finite forward pass is an error.
pub fn backprop(net: &NetworkParams, inputs: &Matrix, loss: &LossSpec) -> Result<BackpropOutput, AutoencoderError> {
    net.check_input(inputs)?;
    let batch = inputs.rows();
    let enc_acts = stack_forward(&net.encoder, inputs);
    let bottleneck = enc_acts.last().unwrap();
    if !all_finite(bottleneck) {
        return Err(AutoencoderError::NonFiniteForward);
    }

    let (loss_value, enc_top_da, decoder_grads, head_grads) = match loss {
        LossSpec::Mse => {
            let dec_acts = stack_forward(&net.decoder, bottleneck);
            let out = dec_acts.last().unwrap();
            if !all_finite(out) {
                return Err(AutoencoderError::NonFiniteForward);
            }
            let loss_value = mse_loss(out, inputs);
            let scale = 2.0 / out.data().len() as f64;
            let mut da = out.clone();
            for (d, &x) in da.data_mut().iter_mut().zip(inputs.data()) {
                *d = (*d - x) * scale;
            }
            let dz_top = activation_backward(da, out, net.decoder.last().unwrap().activation);
            let (grads, d_bottleneck) = backward_stack(&net.decoder, bottleneck, &dec_acts, dz_top);
            (loss_value, d_bottleneck, Some(grads), None)
        }
        LossSpec::CrossEntropy(labels) => {
            check_labels(labels, batch, net.n_classes())?;
            let head_acts = stack_forward(&net.head, bottleneck);
            let probs = head_acts.last().unwrap();
            if !all_finite(probs) {
                return Err(AutoencoderError::NonFiniteForward);
            }
            let loss_value = ce_loss(probs, labels);
            let mut dz = probs.clone();
            let inv = 1.0 / batch as f64;
            for v in dz.data_mut() {
                *v *= inv;
            }
            for (r, &label) in labels.iter().enumerate() {
                let p = dz.get(r, label as usize);
                dz.set(r, label as usize, p - inv);
            }
            let (grads, d_bottleneck) = backward_stack(&net.head, bottleneck, &head_acts, dz);
            (loss_value, d_bottleneck, None, Some(grads))
        }
    };

    let enc_dz_top = activation_backward(enc_top_da, bottleneck, net.encoder.last().unwrap().activation);
    let (encoder_grads, _) = backward_stack(&net.encoder, inputs, &enc_acts, enc_dz_top);
    Ok(BackpropOutput {
        loss: loss_value,
        gradients: NetworkGradients { encoder: encoder_grads, decoder: decoder_grads, head: head_grads },
    })
}

/// Forward-only loss of the batch, matching [`backprop`]'s value.
pub fn batch_loss(net: &NetworkParams, inputs: &Matrix, loss: &LossSpec) -> Result<f64, AutoencoderError> {
    match loss {
        LossSpec::Mse => {
            let out = net.reconstruct_batch(inputs)?;
            if !all_finite(&out) {
                return Err(AutoencoderError::NonFiniteForward);
            }
            Ok(mse_loss(&out, inputs))
        }
        LossSpec::CrossEntropy(labels) => {
            let probs = net.classify_batch(inputs)?;
            check_labels(labels, inputs.rows(), net.n_classes())?;
            if !all_finite(&probs) {
                return Err(AutoencoderError::NonFiniteForward);
            }
            Ok(ce_loss(&probs, labels))
        }
    }
}

fn sgd_step(params: &mut [LayerParams], grads: &[LayerGrad], lr: f64) {
    for (layer, grad) in params.iter_mut().zip(grads) {
        for (w, g) in layer.weights.data_mut().iter_mut().zip(grad.weights.data()) {
            *w -= lr * g;
        }
        for (b, g) in layer.biases.iter_mut().zip(&grad.biases) {
            *b -= lr * g;
        }
    }
}

/// One SGD step: `p -= lr * g` for every section carrying a gradient.
pub fn apply_gradients(net: &mut NetworkParams, grads: &NetworkGradients, lr: f64) {
    sgd_step(&mut net.encoder, &grads.encoder, lr);
    if let Some(g) = &grads.decoder {
        sgd_step(&mut net.decoder, g, lr);
    }
    if let Some(g) = &grads.head {
        sgd_step(&mut net.head, g, lr);
    }
}

/// Summary of a finite-difference check; see [`gradient_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheckReport {
    pub max_relative_error: f64,
    pub parameter_count_checked: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Encoder,
    Decoder,
    Head,
}

/// Flat addressing over the parameters a loss reaches: per layer, weights
/// row-major then biases, sections in encoder/decoder/head order.
struct ParamSegments {
    segments: Vec<(Section, usize, bool, usize)>,
    total: usize,
}

impl ParamSegments {
    fn for_loss(net: &NetworkParams, loss: &LossSpec) -> Self {
        let sections: &[(Section, &Vec<LayerParams>)] = match loss {
            LossSpec::Mse => &[(Section::Encoder, &net.encoder), (Section::Decoder, &net.decoder)],
            LossSpec::CrossEntropy(_) => &[(Section::Encoder, &net.encoder), (Section::Head, &net.head)],
        };
        let mut segments = Vec::new();
        let mut total = 0;
        for &(section, stack) in sections {
            for (i, layer) in stack.iter().enumerate() {
                segments.push((section, i, false, layer.weights.data().len()));
                segments.push((section, i, true, layer.biases.len()));
                total += layer.weights.data().len() + layer.biases.len();
            }
        }
        Self { segments, total }
    }

    fn locate(&self, mut flat: usize) -> (Section, usize, bool, usize) {
        for &(section, layer, is_bias, len) in &self.segments {
            if flat < len {
                return (section, layer, is_bias, flat);
            }
            flat -= len;
        }
        unreachable!("flat index out of range");
    }
}

fn param_slot(net: &mut NetworkParams, loc: (Section, usize, bool, usize)) -> &mut f64 {
    let (section, layer, is_bias, offset) = loc;
    let stack = match section {
        Section::Encoder => &mut net.encoder,
        Section::Decoder => &mut net.decoder,
        Section::Head => &mut net.head,
    };
    if is_bias {
        &mut stack[layer].biases[offset]
    } else {
        &mut stack[layer].weights.data_mut()[offset]
    }
}

fn grad_value(grads: &NetworkGradients, loc: (Section, usize, bool, usize)) -> f64 {
    let (section, layer, is_bias, offset) = loc;
    let stack = match section {
        Section::Encoder => &grads.encoder,
        Section::Decoder => grads.decoder.as_ref().expect("decoder gradient present"),
        Section::Head => grads.head.as_ref().expect("head gradient present"),
    };
    if is_bias {
        stack[layer].biases[offset]
    } else {
        stack[layer].weights.data()[offset]
    }
}

/// Compares analytic gradients against central finite differences
/// `(L(p+h) - L(p-h)) / 2h` on `k_params` randomly sampled coordinates.
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`. The network is
/// perturbed in place and restored exactly.
pub fn gradient_check(
    net: &mut NetworkParams,
    inputs: &Matrix,
    loss: &LossSpec,
    h: f64,
    k_params: usize,
    seed: u64,
) -> Result<GradientCheckReport, AutoencoderError> {
    if !h.is_finite() || h <= 0.0 {
        return Err(AutoencoderError::BadStep(h));
    }
    if k_params == 0 {
        return Err(AutoencoderError::NoCoordinates);
    }
    let analytic = backprop(net, inputs, loss)?.gradients;
    let segments = ParamSegments::for_loss(net, loss);
    let count = k_params.min(segments.total);
    let mut rng = seeds::rng(seed);
    let picks = rand::seq::index::sample(&mut rng, segments.total, count);

    let mut max_rel: f64 = 0.0;
    for flat in picks {
        let loc = segments.locate(flat);
        let original = *param_slot(net, loc);

        *param_slot(net, loc) = original + h;
        let plus = batch_loss(net, inputs, loss)?;
        *param_slot(net, loc) = original - h;
        let minus = batch_loss(net, inputs, loss)?;
        *param_slot(net, loc) = original;

        let numeric = (plus - minus) / (2.0 * h);
        let a = grad_value(&analytic, loc);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        max_rel = max_rel.max(rel);
    }
    Ok(GradientCheckReport { max_relative_error: max_rel, parameter_count_checked: count })
}
