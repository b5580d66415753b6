//! Tied-weight multilayer autoencoder.
//!
//! Encoder layer `l` maps width `dims[l]` to `dims[l+1]` with weight `W_l`
//! (shape `dims[l+1] x dims[l]`); the mirrored decoder layer maps back with
//! `W_l^T`. Only the encoder weights are stored, so `W_E = W_D^T` holds by
//! construction. Every layer applies the configured activation except the
//! final decoder layer, which is linear.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndmath::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::param(format!("unknown activation '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layer_dims: Vec<usize>,
    /// Encoder weights; `weights[l]` is `dims[l+1] x dims[l]`.
    pub weights: Vec<Matrix>,
    pub biases_enc: Vec<Vec<f64>>,
    /// Decoder biases; `biases_dec[l]` has length `dims[l]`.
    pub biases_dec: Vec<Vec<f64>>,
    pub activation: Activation,
}

/// Read-only transpose of an encoder weight, used as the decoder weight.
#[derive(Debug, Clone, Copy)]
pub struct TransposeView<'a> {
    inner: &'a Matrix,
}

impl TransposeView<'_> {
    pub fn rows(&self) -> usize {
        self.inner.cols()
    }

    pub fn cols(&self) -> usize {
        self.inner.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(j, i)]
    }
}

fn check_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::param(format!(
            "an autoencoder needs an input and a latent width, got {layer_dims:?}"
        )));
    }
    if layer_dims.contains(&0) {
        return Err(Error::param(format!("layer widths must be positive, got {layer_dims:?}")));
    }
    Ok(())
}

/// Glorot-uniform weights, zero biases, deterministic per seed.
pub fn init_params(layer_dims: &[usize], activation: Activation, seed: u64) -> Result<NetworkParams> {
    check_dims(layer_dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(layer_dims.len() - 1);
    for pair in layer_dims.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..=limit)).collect();
        weights.push(Matrix::from_raw(fan_out, fan_in, data));
    }
    Ok(NetworkParams {
        layer_dims: layer_dims.to_vec(),
        weights,
        biases_enc: layer_dims[1..].iter().map(|&w| vec![0.0; w]).collect(),
        biases_dec: layer_dims[..layer_dims.len() - 1].iter().map(|&w| vec![0.0; w]).collect(),
        activation,
    })
}

impl NetworkParams {
    /// Assemble from explicit tensors, checking every shape.
    pub fn from_parts(
        layer_dims: Vec<usize>,
        weights: Vec<Matrix>,
        biases_enc: Vec<Vec<f64>>,
        biases_dec: Vec<Vec<f64>>,
        activation: Activation,
    ) -> Result<Self> {
        check_dims(&layer_dims)?;
        let layers = layer_dims.len() - 1;
        if weights.len() != layers || biases_enc.len() != layers || biases_dec.len() != layers {
            return Err(Error::param(format!("expected {layers} layers of parameters")));
        }
        for l in 0..layers {
            if weights[l].shape() != (layer_dims[l + 1], layer_dims[l])
                || biases_enc[l].len() != layer_dims[l + 1]
                || biases_dec[l].len() != layer_dims[l]
            {
                return Err(Error::param(format!("parameter shapes of layer {l} do not match {layer_dims:?}")));
            }
        }
        let params = Self { layer_dims, weights, biases_enc, biases_dec, activation };
        if let Some(name) = params.first_non_finite() {
            return Err(Error::data(format!("non-finite value in {name}")));
        }
        Ok(params)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn latent_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated dims")
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn decoder_weight(&self, layer: usize) -> TransposeView<'_> {
        TransposeView { inner: &self.weights[layer] }
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Every parameter tensor with a stable name, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (l, w) in self.weights.iter().enumerate() {
            out.push((format!("weights[{l}]"), w.as_slice()));
        }
        for (l, b) in self.biases_enc.iter().enumerate() {
            out.push((format!("biases_enc[{l}]"), b.as_slice()));
        }
        for (l, b) in self.biases_dec.iter().enumerate() {
            out.push((format!("biases_dec[{l}]"), b.as_slice()));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for w in &mut self.weights {
            out.push(w.as_mut_slice());
        }
        for b in &mut self.biases_enc {
            out.push(b.as_mut_slice());
        }
        for b in &mut self.biases_dec {
            out.push(b.as_mut_slice());
        }
        out
    }

    fn first_non_finite(&self) -> Option<String> {
        self.tensors()
            .into_iter()
            .find(|(_, t)| t.iter().any(|v| !v.is_finite()))
            .map(|(name, _)| name)
    }
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `enc_act[0]` is the input, `enc_act[L]` the latent code.
    pub enc_pre: Vec<Matrix>,
    pub enc_act: Vec<Matrix>,
    /// Indexed by layer: `dec_pre[l]` produces width `dims[l]`.
    /// `dec_act[L]` is the latent code, `dec_act[0]` the reconstruction.
    pub dec_pre: Vec<Matrix>,
    pub dec_act: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn input(&self) -> &Matrix {
        &self.enc_act[0]
    }

    pub fn latent(&self) -> &Matrix {
        self.enc_act.last().expect("trace has at least one layer")
    }

    pub fn reconstruction(&self) -> &Matrix {
        &self.dec_act[0]
    }
}

/// `h W^T + b`.
fn affine_transposed(h: &Matrix, w: &Matrix, b: &[f64]) -> Matrix {
    let (n, out_w) = (h.rows(), w.rows());
    let mut out = Matrix::zeros(n, out_w);
    for r in 0..n {
        let hr = h.row(r);
        let orow = out.row_mut(r);
        for (o, slot) in orow.iter_mut().enumerate() {
            let mut acc = b[o];
            for (x, wv) in hr.iter().zip(w.row(o)) {
                acc += x * wv;
            }
            *slot = acc;
        }
    }
    out
}

/// `g W + b`.
fn affine(g: &Matrix, w: &Matrix, b: &[f64]) -> Matrix {
    let (n, out_w) = (g.rows(), w.cols());
    let mut out = Matrix::zeros(n, out_w);
    for r in 0..n {
        let orow = out.row_mut(r);
        orow.copy_from_slice(b);
        for (o, &gv) in g.row(r).iter().enumerate() {
            for (slot, wv) in orow.iter_mut().zip(w.row(o)) {
                *slot += gv * wv;
            }
        }
    }
    out
}

fn activate(pre: &Matrix, act: Option<Activation>) -> Matrix {
    match act {
        None => pre.clone(),
        Some(a) => Matrix::from_raw(pre.rows(), pre.cols(), pre.as_slice().iter().map(|&x| a.apply(x)).collect()),
    }
}

pub fn forward(params: &NetworkParams, batch: &Matrix) -> Result<ForwardTrace> {
    if batch.cols() != params.input_dim() {
        return Err(Error::param(format!(
            "batch has {} features, network expects {}",
            batch.cols(),
            params.input_dim()
        )));
    }
    let layers = params.num_layers();
    let mut enc_pre = Vec::with_capacity(layers);
    let mut enc_act = Vec::with_capacity(layers + 1);
    enc_act.push(batch.clone());
    for l in 0..layers {
        let pre = affine_transposed(&enc_act[l], &params.weights[l], &params.biases_enc[l]);
        enc_act.push(activate(&pre, Some(params.activation)));
        enc_pre.push(pre);
    }

    let mut dec_pre = vec![Matrix::zeros(0, 0); layers];
    let mut dec_act = vec![Matrix::zeros(0, 0); layers + 1];
    dec_act[layers] = enc_act[layers].clone();
    for l in (0..layers).rev() {
        let pre = affine(&dec_act[l + 1], &params.weights[l], &params.biases_dec[l]);
        let act = if l == 0 { None } else { Some(params.activation) };
        dec_act[l] = activate(&pre, act);
        dec_pre[l] = pre;
    }
    if !dec_act[0].is_finite() || !enc_act[layers].is_finite() {
        return Err(Error::degenerate("forward pass produced non-finite values"));
    }
    Ok(ForwardTrace { enc_pre, enc_act, dec_pre, dec_act })
}

/// Latent code only.
pub fn encode(params: &NetworkParams, batch: &Matrix) -> Result<Matrix> {
    Ok(forward(params, batch)?.enc_act.pop().expect("non-empty trace"))
}

/// Gradient buffers shaped like [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases_enc: Vec<Vec<f64>>,
    pub biases_dec: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Self {
            weights: params.weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
            biases_enc: params.biases_enc.iter().map(|b| vec![0.0; b.len()]).collect(),
            biases_dec: params.biases_dec.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// Same order as [`NetworkParams::tensors`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        out.extend(self.weights.iter().map(Matrix::as_slice));
        out.extend(self.biases_enc.iter().map(Vec::as_slice));
        out.extend(self.biases_dec.iter().map(Vec::as_slice));
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}

/// Accumulates parameter gradients for upstream gradients on the latent code
/// and the reconstruction. The shared weight of each layer receives the sum
/// of its encoder-path and decoder-path contributions.
pub fn backward(
    params: &NetworkParams,
    trace: &ForwardTrace,
    grad_latent: &Matrix,
    grad_recon: &Matrix,
    grads: &mut Gradients,
) -> Result<()> {
    let n = trace.input().rows();
    if grad_latent.shape() != (n, params.latent_dim()) || grad_recon.shape() != (n, params.input_dim()) {
        return Err(Error::param(format!(
            "upstream gradients {:?}/{:?} do not match batch of {n} rows",
            grad_latent.shape(),
            grad_recon.shape()
        )));
    }
    let layers = params.num_layers();

    // decoder, from the reconstruction back to the latent code
    let mut upstream = grad_recon.clone();
    for l in 0..layers {
        let pre = &trace.dec_pre[l];
        let out = &trace.dec_act[l];
        let mut delta = upstream;
        if l != 0 {
            for ((d, &x), &y) in delta.as_mut_slice().iter_mut().zip(pre.as_slice()).zip(out.as_slice()) {
                *d *= params.activation.derivative(x, y);
            }
        }
        let input = &trace.dec_act[l + 1];
        // dW[o, i] += sum_n input[n, o] delta[n, i]
        let gw = &mut grads.weights[l];
        for r in 0..n {
            let dr = delta.row(r);
            for (o, &iv) in input.row(r).iter().enumerate() {
                if iv == 0.0 {
                    continue;
                }
                for (g, &dv) in gw.row_mut(o).iter_mut().zip(dr) {
                    *g += iv * dv;
                }
            }
            for (g, &dv) in grads.biases_dec[l].iter_mut().zip(dr) {
                *g += dv;
            }
        }
        // upstream for the layer input: delta W^T
        upstream = affine_transposed(&delta, &params.weights[l], &vec![0.0; params.weights[l].rows()]);
    }

    // upstream now holds d/d latent through the decoder
    for (u, g) in upstream.as_mut_slice().iter_mut().zip(grad_latent.as_slice()) {
        *u += g;
    }

    for l in (0..layers).rev() {
        let pre = &trace.enc_pre[l];
        let out = &trace.enc_act[l + 1];
        let mut delta = upstream;
        for ((d, &x), &y) in delta.as_mut_slice().iter_mut().zip(pre.as_slice()).zip(out.as_slice()) {
            *d *= params.activation.derivative(x, y);
        }
        let input = &trace.enc_act[l];
        // dW[o, i] += sum_n delta[n, o] input[n, i]
        let gw = &mut grads.weights[l];
        for r in 0..n {
            let ir = input.row(r);
            for (o, &dv) in delta.row(r).iter().enumerate() {
                if dv == 0.0 {
                    continue;
                }
                for (g, &iv) in gw.row_mut(o).iter_mut().zip(ir) {
                    *g += dv * iv;
                }
                grads.biases_enc[l][o] += dv;
            }
        }
        upstream = affine(&delta, &params.weights[l], &vec![0.0; params.weights[l].cols()]);
    }
    Ok(())
}
