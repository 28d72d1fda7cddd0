//! Feed-forward encoder/decoder models.
//!
//! Models are plain multi-layer perceptrons with per-layer activations. The
//! module provides, besides the forward pass:
//!
//! - forward-mode Jacobians (one tangent column per latent coordinate),
//! - reverse-mode gradients for scalar objectives of the output, and
//! - reverse-mode gradients for scalar objectives that additionally depend
//!   on the Jacobian, obtained by backpropagating through the forward-mode
//!   tangent computation itself,
//! - JSON persistence with bit-exact round-trips of every weight.
//!
//! Parameters are addressed as one flat vector per model (each layer's
//! weight matrix in row-major order followed by its bias), which is the
//! layout assumed by the optimizer and by finite-difference checks.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AmbientPoint, JacobianMatrix, LatentPoint};
use crate::linalg::{self, Mat};
use crate::scalar::{real, Real};

// ───────────────────────── activations ─────────────────────────

/// Activation function applied element-wise after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// Exponential linear unit with alpha = 1; continuously differentiable.
    Elu,
    /// Pass-through, used on final layers.
    Identity,
    /// Smooth ReLU; also available as the scalar [`softplus`].
    Softplus,
}

impl Activation {
    /// Function value.
    #[inline]
    pub fn apply<T: Real>(self, t: T) -> T {
        match self {
            Activation::Elu => {
                if t >= T::zero() {
                    t
                } else {
                    t.exp() - T::one()
                }
            }
            Activation::Identity => t,
            Activation::Softplus => softplus(t),
        }
    }

    /// First derivative.
    #[inline]
    pub fn d1<T: Real>(self, t: T) -> T {
        match self {
            Activation::Elu => {
                if t >= T::zero() {
                    T::one()
                } else {
                    t.exp()
                }
            }
            Activation::Identity => T::one(),
            Activation::Softplus => sigmoid(t),
        }
    }

    /// Second derivative (subderivative 0 at the ELU kink).
    #[inline]
    pub fn d2<T: Real>(self, t: T) -> T {
        match self {
            Activation::Elu => {
                if t >= T::zero() {
                    T::zero()
                } else {
                    t.exp()
                }
            }
            Activation::Identity => T::zero(),
            Activation::Softplus => {
                let s = sigmoid(t);
                s * (T::one() - s)
            }
        }
    }
}

/// Overflow-safe softplus `ln(1 + e^t)`.
#[inline]
pub fn softplus<T: Real>(t: T) -> T {
    if t > T::zero() {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Numerically stable logistic sigmoid, the derivative of [`softplus`].
#[inline]
pub fn sigmoid<T: Real>(t: T) -> T {
    if t >= T::zero() {
        T::one() / (T::one() + (-t).exp())
    } else {
        let e = t.exp();
        e / (T::one() + e)
    }
}

// ───────────────────────── model ─────────────────────────

/// Shape and activation of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_width: usize,
    pub out_width: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
struct Layer<T> {
    w: Mat<T>,
    b: Vec<T>,
    act: Activation,
}

/// Multi-layer perceptron; used both as decoder (latent to ambient) and, with
/// mirrored widths, as encoder.
#[derive(Debug, Clone)]
pub struct Mlp<T> {
    layers: Vec<Layer<T>>,
}

impl<T: Real> Mlp<T> {
    /// Builds a model from layer specs with Glorot-uniform weights
    /// (`U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`) and zero biases.
    pub fn new<R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::InvalidArgument {
                name: "specs",
                reason: "a model needs at least one layer".into(),
            });
        }
        for (k, spec) in specs.iter().enumerate() {
            if spec.in_width == 0 || spec.out_width == 0 {
                return Err(Error::InvalidArgument {
                    name: "specs",
                    reason: format!("layer {k} has a zero width"),
                });
            }
            if k > 0 && specs[k - 1].out_width != spec.in_width {
                return Err(Error::InvalidArgument {
                    name: "specs",
                    reason: format!(
                        "layer {} outputs width {} but layer {k} expects {}",
                        k - 1,
                        specs[k - 1].out_width,
                        spec.in_width
                    ),
                });
            }
        }
        let layers = specs
            .iter()
            .map(|spec| {
                let limit = (6.0 / (spec.in_width + spec.out_width) as f64).sqrt();
                let mut w = Mat::zeros(spec.out_width, spec.in_width);
                for i in 0..spec.out_width {
                    for j in 0..spec.in_width {
                        w[(i, j)] = real::<T>(rng.gen_range(-limit..limit));
                    }
                }
                Layer {
                    w,
                    b: vec![T::zero(); spec.out_width],
                    act: spec.activation,
                }
            })
            .collect();
        Ok(Mlp { layers })
    }

    /// Convenience constructor for the standard architecture: ELU hidden
    /// layers followed by an Identity output layer.
    pub fn elu_net<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut specs = Vec::new();
        let mut prev = input_dim;
        for &h in hidden {
            specs.push(LayerSpec {
                in_width: prev,
                out_width: h,
                activation: Activation::Elu,
            });
            prev = h;
        }
        specs.push(LayerSpec {
            in_width: prev,
            out_width: output_dim,
            activation: Activation::Identity,
        });
        Self::new(&specs, rng)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").w.rows()
    }

    /// Layer shapes and activations.
    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers
            .iter()
            .map(|l| LayerSpec {
                in_width: l.w.cols(),
                out_width: l.w.rows(),
                activation: l.act,
            })
            .collect()
    }

    fn check_input(&self, len: usize, context: &'static str) -> Result<()> {
        if len != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.input_dim(),
                got: len,
            });
        }
        Ok(())
    }

    // ───────── parameters ─────────

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w.rows() * l.w.cols() + l.b.len())
            .sum()
    }

    /// Flat parameter vector: per layer, weights row-major then bias.
    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.w.as_slice());
            out.extend_from_slice(&l.b);
        }
        out
    }

    /// Overwrites all parameters from a flat vector in [`Mlp::params`] order.
    pub fn set_params(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                context: "set_params",
                expected: self.param_count(),
                got: params.len(),
            });
        }
        if !linalg::all_finite(params) {
            return Err(Error::NonFinite {
                context: "set_params",
            });
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.w.rows() * l.w.cols();
            let w = Mat::from_vec(l.w.rows(), l.w.cols(), params[off..off + nw].to_vec())
                .expect("sizes match");
            l.w = w;
            off += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    // ───────── forward passes ─────────

    /// Plain forward pass.
    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x.len(), "forward")?;
        let mut a = x.to_vec();
        for l in &self.layers {
            let mut pre = l.w.matvec(&a);
            for (p, b) in pre.iter_mut().zip(&l.b) {
                *p += *b;
            }
            for p in pre.iter_mut() {
                *p = l.act.apply(*p);
            }
            a = pre;
        }
        if !linalg::all_finite(&a) {
            return Err(Error::NonFinite { context: "forward" });
        }
        Ok(a)
    }

    /// Forward pass retaining per-layer inputs and pre-activations for
    /// reverse-mode gradients.
    pub fn forward_traced(&self, x: &[T]) -> Result<ForwardTrace<T>> {
        self.check_input(x.len(), "forward_traced")?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for l in &self.layers {
            inputs.push(a.clone());
            let mut pre = l.w.matvec(&a);
            for (p, b) in pre.iter_mut().zip(&l.b) {
                *p += *b;
            }
            pres.push(pre.clone());
            for p in pre.iter_mut() {
                *p = l.act.apply(*p);
            }
            a = pre;
        }
        if !linalg::all_finite(&a) {
            return Err(Error::NonFinite {
                context: "forward_traced",
            });
        }
        Ok(ForwardTrace {
            inputs,
            pres,
            output: a,
        })
    }

    /// Forward-mode pass carrying one tangent column per input coordinate;
    /// returns the output value and the Jacobian, plus everything needed to
    /// backpropagate through both.
    pub fn forward_jacobian_traced(&self, z: &[T]) -> Result<JacobianTrace<T>> {
        self.check_input(z.len(), "forward_jacobian_traced")?;
        let d = z.len();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut pre_tangents = Vec::with_capacity(self.layers.len());
        let mut tangents = Vec::with_capacity(self.layers.len() + 1);
        let mut a = z.to_vec();
        let mut tg = Mat::identity(d);
        tangents.push(tg.clone());
        for l in &self.layers {
            inputs.push(a.clone());
            let mut pre = l.w.matvec(&a);
            for (p, b) in pre.iter_mut().zip(&l.b) {
                *p += *b;
            }
            let s = l.w.matmul(&tg); // pre-activation tangents
            pres.push(pre.clone());
            pre_tangents.push(s.clone());
            let mut t_next = s;
            for i in 0..t_next.rows() {
                let g = l.act.d1(pre[i]);
                for v in t_next.row_mut(i) {
                    *v *= g;
                }
            }
            for p in pre.iter_mut() {
                *p = l.act.apply(*p);
            }
            a = pre;
            tg = t_next;
            tangents.push(tg.clone());
        }
        if !linalg::all_finite(&a) || !tg.all_finite() {
            return Err(Error::NonFinite {
                context: "forward_jacobian_traced",
            });
        }
        Ok(JacobianTrace {
            inputs,
            pres,
            pre_tangents,
            tangents,
            output: a,
        })
    }

    /// Output value and Jacobian at `z`.
    pub fn value_and_jacobian(&self, z: &[T]) -> Result<(Vec<T>, Mat<T>)> {
        let trace = self.forward_jacobian_traced(z)?;
        let jac = trace.tangents.last().expect("non-empty").clone();
        Ok((trace.output, jac))
    }

    // ───────── reverse-mode gradients ─────────

    /// Backpropagates an output cotangent through the traced forward pass.
    ///
    /// Accumulates parameter gradients into `grads` (flat layout, caller
    /// zeroes) and returns the cotangent with respect to the model input.
    pub fn backprop(&self, trace: &ForwardTrace<T>, out_bar: &[T], grads: &mut [T]) -> Vec<T> {
        self.backprop_value(&trace.inputs, &trace.pres, out_bar, grads)
    }

    /// Value-only backprop against a forward-mode trace, ignoring its
    /// tangents. Lets callers that also hold Jacobian cotangents route the
    /// two heads through separate passes when the input cotangent of the
    /// value head is needed on its own.
    pub fn backprop_value_traced(
        &self,
        trace: &JacobianTrace<T>,
        out_bar: &[T],
        grads: &mut [T],
    ) -> Vec<T> {
        self.backprop_value(&trace.inputs, &trace.pres, out_bar, grads)
    }

    fn backprop_value(
        &self,
        inputs: &[Vec<T>],
        pres: &[Vec<T>],
        out_bar: &[T],
        grads: &mut [T],
    ) -> Vec<T> {
        assert_eq!(grads.len(), self.param_count(), "gradient buffer size");
        assert_eq!(out_bar.len(), self.output_dim(), "output cotangent size");
        let offsets = self.param_offsets();
        let mut a_bar = out_bar.to_vec();
        for (k, l) in self.layers.iter().enumerate().rev() {
            let pre = &pres[k];
            let input = &inputs[k];
            // pre_bar = a_bar ⊙ act'(pre)
            let pre_bar: Vec<T> = a_bar
                .iter()
                .zip(pre)
                .map(|(ab, p)| *ab * l.act.d1(*p))
                .collect();
            self.accumulate_affine_grads(k, &offsets, &pre_bar, input, grads);
            a_bar = l.w.tr_matvec(&pre_bar);
        }
        a_bar
    }

    /// Backpropagates cotangents of both the output value and the Jacobian
    /// through the traced forward-mode pass.
    ///
    /// `jac_bar[(i, j)]` is the derivative of the objective with respect to
    /// Jacobian entry `(i, j)`. Parameter gradients accumulate into `grads`;
    /// the returned vector is the full input cotangent (both heads' flows
    /// through the evaluation point). Current callers discard it — the reach
    /// penalty deliberately stops its gradient at the decoder input.
    pub fn backprop_with_jacobian(
        &self,
        trace: &JacobianTrace<T>,
        out_bar: &[T],
        jac_bar: &Mat<T>,
        grads: &mut [T],
    ) -> Vec<T> {
        assert_eq!(grads.len(), self.param_count(), "gradient buffer size");
        assert_eq!(out_bar.len(), self.output_dim(), "output cotangent size");
        assert_eq!(jac_bar.rows(), self.output_dim(), "jacobian cotangent rows");
        assert_eq!(jac_bar.cols(), self.input_dim(), "jacobian cotangent cols");
        let offsets = self.param_offsets();
        let mut a_bar = out_bar.to_vec();
        let mut t_bar = jac_bar.clone();
        for (k, l) in self.layers.iter().enumerate().rev() {
            let pre = &trace.pres[k];
            let input = &trace.inputs[k];
            let s = &trace.pre_tangents[k];
            let t_prev = &trace.tangents[k];
            // T_k = diag(act'(pre)) S_k:
            //   S_bar = diag(act'(pre)) T_bar
            //   g_bar[i] = sum_j T_bar[i,j] S[i,j], feeding act''(pre).
            let mut s_bar = t_bar.clone();
            let mut pre_bar: Vec<T> = Vec::with_capacity(pre.len());
            for i in 0..pre.len() {
                let g1 = l.act.d1(pre[i]);
                let mut g_bar = T::zero();
                for (sb, sv) in s_bar.row_mut(i).iter_mut().zip(s.row(i)) {
                    g_bar += *sb * *sv;
                    *sb *= g1;
                }
                pre_bar.push(a_bar[i] * g1 + g_bar * l.act.d2(pre[i]));
            }
            self.accumulate_affine_grads(k, &offsets, &pre_bar, input, grads);
            // S_k = W_k T_{k-1}: W_bar += S_bar T_{k-1}^T, T_{k-1}_bar = W^T S_bar.
            let (w_off, _) = offsets[k];
            let (rows, cols) = (l.w.rows(), l.w.cols());
            for i in 0..rows {
                let srow = s_bar.row(i);
                for j in 0..cols {
                    grads[w_off + i * cols + j] += linalg::dot(srow, t_prev.row(j));
                }
            }
            let mut t_prev_bar = Mat::zeros(cols, t_bar.cols());
            for i in 0..rows {
                let srow = s_bar.row(i);
                for j in 0..cols {
                    let w_ij = l.w[(i, j)];
                    if w_ij != T::zero() {
                        linalg::axpy(w_ij, srow, t_prev_bar.row_mut(j));
                    }
                }
            }
            t_bar = t_prev_bar;
            a_bar = l.w.tr_matvec(&pre_bar);
        }
        a_bar
    }

    /// `(weight offset, bias offset)` of each layer in the flat layout.
    fn param_offsets(&self) -> Vec<(usize, usize)> {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            let w_off = off;
            off += l.w.rows() * l.w.cols();
            offsets.push((w_off, off));
            off += l.b.len();
        }
        offsets
    }

    fn accumulate_affine_grads(
        &self,
        k: usize,
        offsets: &[(usize, usize)],
        pre_bar: &[T],
        input: &[T],
        grads: &mut [T],
    ) {
        let l = &self.layers[k];
        let (w_off, b_off) = offsets[k];
        let cols = l.w.cols();
        for i in 0..l.w.rows() {
            linalg::axpy(pre_bar[i], input, &mut grads[w_off + i * cols..w_off + (i + 1) * cols]);
            grads[b_off + i] += pre_bar[i];
        }
    }
}

/// Stored intermediates of a plain forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    /// Input to each layer (`inputs[0]` is the model input).
    pub inputs: Vec<Vec<T>>,
    /// Pre-activation of each layer.
    pub pres: Vec<Vec<T>>,
    /// Final output.
    pub output: Vec<T>,
}

/// Stored intermediates of a forward-mode pass (value and tangents).
#[derive(Debug, Clone)]
pub struct JacobianTrace<T> {
    pub inputs: Vec<Vec<T>>,
    pub pres: Vec<Vec<T>>,
    /// `S_k = W_k T_{k-1}` per layer.
    pub pre_tangents: Vec<Mat<T>>,
    /// `T_k` per layer, starting with the identity at the input.
    pub tangents: Vec<Mat<T>>,
    pub output: Vec<T>,
}

impl<T: Real> JacobianTrace<T> {
    /// The Jacobian of the traced pass.
    pub fn jacobian(&self) -> &Mat<T> {
        self.tangents.last().expect("non-empty")
    }
}

// ───────────────────────── roles and traits ─────────────────────────

/// Maps latent points onto the manifold in ambient space.
pub trait Decoder<T: Real>: Sync {
    fn latent_dim(&self) -> usize;
    fn ambient_dim(&self) -> usize;
    fn decode(&self, z: &LatentPoint<T>) -> Result<AmbientPoint<T>>;
    /// Jacobian of the decoding map at `z`, tagged with the evaluation point.
    fn jacobian(&self, z: &LatentPoint<T>) -> Result<JacobianMatrix<T>>;
}

/// Maps ambient points to latent representatives.
pub trait Encoder<T: Real>: Sync {
    fn latent_dim(&self) -> usize;
    fn ambient_dim(&self) -> usize;
    fn encode(&self, x: &AmbientPoint<T>) -> Result<LatentPoint<T>>;
}

impl<T: Real> Decoder<T> for Mlp<T> {
    fn latent_dim(&self) -> usize {
        self.input_dim()
    }

    fn ambient_dim(&self) -> usize {
        self.output_dim()
    }

    fn decode(&self, z: &LatentPoint<T>) -> Result<AmbientPoint<T>> {
        AmbientPoint::new(self.forward(z.as_slice())?)
    }

    fn jacobian(&self, z: &LatentPoint<T>) -> Result<JacobianMatrix<T>> {
        let (_, jac) = self.value_and_jacobian(z.as_slice())?;
        Ok(JacobianMatrix::new(jac)?.with_eval_point(z.clone()))
    }
}

impl<T: Real> Encoder<T> for Mlp<T> {
    fn latent_dim(&self) -> usize {
        self.output_dim()
    }

    fn ambient_dim(&self) -> usize {
        self.input_dim()
    }

    fn encode(&self, x: &AmbientPoint<T>) -> Result<LatentPoint<T>> {
        LatentPoint::new(self.forward(x.as_slice())?)
    }
}

// ───────────────────────── persistence ─────────────────────────

/// Whether a stored model maps into latent space (encoder) or out of it
/// (decoder).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    Encoder,
    Decoder,
}

/// Current model file schema version.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LayerFile<T> {
    in_width: usize,
    out_width: usize,
    activation: Activation,
    /// Row-major `out_width x in_width` weights.
    weight: Vec<T>,
    bias: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile<T> {
    format_version: u32,
    role: ModelRole,
    latent_dim: usize,
    ambient_dim: usize,
    layers: Vec<LayerFile<T>>,
}

/// Writes a model to a JSON file. Doubles survive the round-trip bit-exactly
/// (shortest-representation decimal encoding).
pub fn save_model<T, P>(path: P, model: &Mlp<T>, role: ModelRole) -> Result<()>
where
    T: Real + Serialize,
    P: AsRef<Path>,
{
    let (latent_dim, ambient_dim) = match role {
        ModelRole::Encoder => (model.output_dim(), model.input_dim()),
        ModelRole::Decoder => (model.input_dim(), model.output_dim()),
    };
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        role,
        latent_dim,
        ambient_dim,
        layers: model
            .layers
            .iter()
            .map(|l| LayerFile {
                in_width: l.w.cols(),
                out_width: l.w.rows(),
                activation: l.act,
                weight: l.w.as_slice().to_vec(),
                bias: l.b.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Reads a model written by [`save_model`], validating the schema.
pub fn load_model<T, P>(path: P) -> Result<(Mlp<T>, ModelRole)>
where
    T: Real + serde::de::DeserializeOwned,
    P: AsRef<Path>,
{
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile<T> = serde_json::from_str(&text)?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::InvalidModelFile {
            reason: format!(
                "unsupported format_version {} (expected {})",
                file.format_version, MODEL_FORMAT_VERSION
            ),
        });
    }
    if file.layers.is_empty() {
        return Err(Error::InvalidModelFile {
            reason: "model has no layers".into(),
        });
    }
    let mut layers = Vec::with_capacity(file.layers.len());
    let mut prev_out = None;
    for (k, lf) in file.layers.iter().enumerate() {
        if lf.weight.len() != lf.in_width * lf.out_width || lf.bias.len() != lf.out_width {
            return Err(Error::InvalidModelFile {
                reason: format!("layer {k} has inconsistent weight/bias sizes"),
            });
        }
        if let Some(prev) = prev_out {
            if prev != lf.in_width {
                return Err(Error::InvalidModelFile {
                    reason: format!("layer {k} input width {} does not chain", lf.in_width),
                });
            }
        }
        if !linalg::all_finite(&lf.weight) || !linalg::all_finite(&lf.bias) {
            return Err(Error::InvalidModelFile {
                reason: format!("layer {k} has non-finite parameters"),
            });
        }
        prev_out = Some(lf.out_width);
        layers.push(Layer {
            w: Mat::from_vec(lf.out_width, lf.in_width, lf.weight.clone()).expect("validated"),
            b: lf.bias.clone(),
            act: lf.activation,
        });
    }
    let model = Mlp { layers };
    let (latent_dim, ambient_dim) = match file.role {
        ModelRole::Encoder => (model.output_dim(), model.input_dim()),
        ModelRole::Decoder => (model.input_dim(), model.output_dim()),
    };
    if latent_dim != file.latent_dim || ambient_dim != file.ambient_dim {
        return Err(Error::InvalidModelFile {
            reason: format!(
                "declared dims (latent {}, ambient {}) do not match layers (latent {}, ambient {})",
                file.latent_dim, file.ambient_dim, latent_dim, ambient_dim
            ),
        });
    }
    Ok((model, file.role))
}
