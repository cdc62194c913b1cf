//! Differentiable building blocks with explicit forward/backward rules.
//!
//! There is no autodiff tape: each layer caches what its own backward needs
//! during a training-mode forward and exposes parameter tensors to the
//! optimizer through a visitor. Gradients accumulate into per-parameter
//! buffers; the training loop zeroes them between steps.

pub mod binarize;
pub mod conv;
pub mod generator;
pub mod linear;
pub mod norm;
pub mod pool;
pub mod residual;

pub use binarize::{QuadrantBinarize, SignBinarize};
pub use conv::{
    BinaryComplexConv2d, BinaryRealConv2d, ComplexConv2d, ConvGeometry, RealConv2d,
};
pub use generator::ComplexInputGenerator;
pub use linear::Linear;
pub use norm::{BatchNorm2d, Cbn, Cgbn};
pub use pool::{ChannelConcat, GlobalAvgPool, MaxPool2x2, Relu};
pub use residual::ResidualBlock;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{ComplexTensor, RealTensor};

/// Value flowing between layers: a real tensor or a complex pair.
#[derive(Debug, Clone)]
pub enum Activation<S> {
    Real(RealTensor<S>),
    Complex(ComplexTensor<S>),
}

impl<S: Scalar> Activation<S> {
    pub fn shape(&self) -> &[usize] {
        match self {
            Activation::Real(t) => t.shape(),
            Activation::Complex(t) => t.shape(),
        }
    }

    pub fn domain(&self) -> &'static str {
        match self {
            Activation::Real(_) => "real",
            Activation::Complex(_) => "complex",
        }
    }

    pub fn into_real(self, context: &str) -> Result<RealTensor<S>> {
        match self {
            Activation::Real(t) => Ok(t),
            Activation::Complex(_) => {
                Err(Error::Shape(format!("{context}: expected real activation, got complex")))
            }
        }
    }

    pub fn into_complex(self, context: &str) -> Result<ComplexTensor<S>> {
        match self {
            Activation::Complex(t) => Ok(t),
            Activation::Real(_) => {
                Err(Error::Shape(format!("{context}: expected complex activation, got real")))
            }
        }
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        match self {
            Activation::Real(t) => t.check_finite(context),
            Activation::Complex(t) => t.check_finite(context),
        }
    }
}

/// Forward-pass mode: training caches for backward and updates running
/// statistics; evaluation uses running statistics and keeps no cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// How the optimizer must treat a parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    /// Latent weight of a binarized layer: updated by Adam, then clamped to
    /// [-1, 1]; only its sign reaches the forward pass.
    BinaryLatent,
    /// Ordinary full-precision parameter.
    FullPrecision,
}

/// A trainable tensor with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param<S> {
    pub data: Vec<S>,
    pub grad: Vec<S>,
}

impl<S: Scalar> Param<S> {
    pub fn new(data: Vec<S>) -> Self {
        let grad = vec![S::zero(); data.len()];
        Self { data, grad }
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![S::zero(); len])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(S::zero());
    }
}

/// Mutable view of one parameter tensor, yielded by [`Layer::visit_params`].
pub struct ParamView<'a, S> {
    pub name: String,
    pub role: ParamRole,
    pub param: &'a mut Param<S>,
}

/// Mutable view of one non-trainable state tensor (running statistics).
pub struct BufferView<'a, S> {
    pub name: String,
    pub values: &'a mut Vec<S>,
}

/// Parameter census of a layer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LayerCensus {
    /// Trainable full-precision scalars (weights, biases, affine parameters).
    pub fp_params: usize,
    /// Trainable latent scalars behind binarized weights (a complex weight
    /// contributes 2: its real and imaginary latents).
    pub latent_params: usize,
    /// Deployed size of the binarized weights in bits (1 bit per latent).
    pub packed_bits: usize,
}

impl LayerCensus {
    pub fn add(self, other: LayerCensus) -> LayerCensus {
        LayerCensus {
            fp_params: self.fp_params + other.fp_params,
            latent_params: self.latent_params + other.latent_params,
            packed_bits: self.packed_bits + other.packed_bits,
        }
    }

    /// Trainable scalar count (latents included at full precision).
    pub fn trainable_params(self) -> usize {
        self.fp_params + self.latent_params
    }

    /// Deployed artifact size: packed bits plus 32-bit floats.
    pub fn deployed_bits(self) -> usize {
        self.packed_bits + 32 * self.fp_params
    }
}

/// Entry in a serialized model's layer table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerDescriptor {
    /// Short stable type tag, e.g. "binconv2d".
    pub tag: String,
    /// Type-specific dimensions (shapes, stride, padding).
    pub dims: Vec<u32>,
}

/// One named payload of a layer's deployment serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportRecord {
    pub name: String,
    pub payload: ExportPayload,
}

/// Payload body: packed sign planes for binarized weights, little-endian
/// floats for everything full-precision (weights, biases, running stats).
#[derive(Debug, Clone, PartialEq)]
pub enum ExportPayload {
    /// One bit plane: `rows` sign rows of `cols` bits, each row padded to a
    /// whole number of 64-bit words, LSB-first.
    Packed { rows: u32, cols: u32, words: Vec<u64> },
    F32(Vec<f32>),
}

impl ExportPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            ExportPayload::Packed { .. } => "packed",
            ExportPayload::F32(_) => "f32",
        }
    }
}

/// A differentiable network layer.
pub trait Layer<S: Scalar>: Send {
    /// Human-readable description, e.g. `binconv2d 23->45 k3 s1 p1`.
    fn name(&self) -> String;

    /// Stable descriptor for the serialized layer table.
    fn descriptor(&self) -> LayerDescriptor;

    fn forward(&mut self, input: Activation<S>, mode: Mode) -> Result<Activation<S>>;

    /// Propagates `grad` to the layer input, accumulating parameter gradients
    /// into the `Param` buffers. Requires a prior training-mode forward.
    fn backward(&mut self, grad: Activation<S>) -> Result<Activation<S>>;

    fn visit_params(&mut self, f: &mut dyn FnMut(ParamView<'_, S>)) {
        let _ = f;
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(BufferView<'_, S>)) {
        let _ = f;
    }

    fn census(&self) -> LayerCensus {
        LayerCensus::default()
    }

    /// Deployment payloads: binarized weights as packed planes, everything
    /// else as f32. Stateless layers return nothing.
    fn export_records(&self) -> Vec<ExportRecord> {
        Vec::new()
    }

    /// Restores state from deployment payloads produced by
    /// [`Layer::export_records`] on an identically shaped layer. Binarized
    /// weights load as +-1 latents, which reproduces the exported forward
    /// pass exactly.
    fn import_records(&mut self, records: &[ExportRecord]) -> Result<()> {
        if records.is_empty() {
            Ok(())
        } else {
            Err(Error::Data(format!(
                "layer {} expects no serialized records, got {}",
                self.name(),
                records.len()
            )))
        }
    }
}

/// Ordered container running layers front to back (and back to front for
/// gradients).
pub struct Sequential<S: Scalar> {
    layers: Vec<Box<dyn Layer<S>>>,
}

impl<S: Scalar> Sequential<S> {
    pub fn new(layers: Vec<Box<dyn Layer<S>>>) -> Self {
        Self { layers }
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layers(&self) -> &[Box<dyn Layer<S>>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Box<dyn Layer<S>>] {
        &mut self.layers
    }

    pub fn forward(&mut self, mut x: Activation<S>, mode: Mode) -> Result<Activation<S>> {
        for layer in &mut self.layers {
            x = layer.forward(x, mode).map_err(|e| layer_err(&**layer, "forward", e))?;
        }
        Ok(x)
    }

    pub fn backward(&mut self, mut grad: Activation<S>) -> Result<Activation<S>> {
        for layer in self.layers.iter_mut().rev() {
            grad = layer.backward(grad).map_err(|e| layer_err(&**layer, "backward", e))?;
        }
        Ok(grad)
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(ParamView<'_, S>)) {
        for layer in &mut self.layers {
            layer.visit_params(f);
        }
    }

    pub fn visit_buffers(&mut self, f: &mut dyn FnMut(BufferView<'_, S>)) {
        for layer in &mut self.layers {
            layer.visit_buffers(f);
        }
    }

    pub fn census(&self) -> LayerCensus {
        self.layers.iter().fold(LayerCensus::default(), |acc, l| acc.add(l.census()))
    }
}

fn layer_err<S: Scalar>(layer: &dyn Layer<S>, phase: &str, e: Error) -> Error {
    match e {
        Error::Shape(m) => Error::Shape(format!("{} {phase}: {m}", layer.name())),
        Error::State(m) => Error::State(format!("{} {phase}: {m}", layer.name())),
        other => other,
    }
}

/// Adds gradients elementwise; shapes must already agree.
pub(crate) fn accumulate<S: Scalar>(dst: &mut [S], src: &[S]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

/// Flattens sub-layer export records into a composite namespace: record
/// `name` of sub-layer `i` becomes `"{i}.{name}"`.
pub(crate) fn collect_sub_records<S: Scalar>(layers: &[Box<dyn Layer<S>>]) -> Vec<ExportRecord> {
    let mut out = Vec::new();
    for (i, layer) in layers.iter().enumerate() {
        for rec in layer.export_records() {
            out.push(ExportRecord { name: format!("{i}.{}", rec.name), payload: rec.payload });
        }
    }
    out
}

/// Inverse of [`collect_sub_records`]: strips the `"{i}."` prefixes, groups
/// records per sub-layer, and hands each group to that layer's import.
pub(crate) fn distribute_sub_records<S: Scalar>(
    layers: &mut [Box<dyn Layer<S>>],
    records: &[ExportRecord],
) -> Result<()> {
    let mut groups: Vec<Vec<ExportRecord>> = (0..layers.len()).map(|_| Vec::new()).collect();
    for rec in records {
        let (idx, rest) = rec
            .name
            .split_once('.')
            .ok_or_else(|| Error::Data(format!("record `{}` lacks a sub-layer index", rec.name)))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| Error::Data(format!("record `{}` has a bad sub-layer index", rec.name)))?;
        if idx >= layers.len() {
            return Err(Error::Data(format!(
                "record `{}` targets sub-layer {idx}, block has {}",
                rec.name,
                layers.len()
            )));
        }
        groups[idx].push(ExportRecord { name: rest.to_string(), payload: rec.payload.clone() });
    }
    for (layer, group) in layers.iter_mut().zip(&groups) {
        layer.import_records(group)?;
    }
    Ok(())
}
