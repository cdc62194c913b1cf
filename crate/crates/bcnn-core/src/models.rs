//! Declarative model construction.
//!
//! [`ModelSpec`] describes a network; [`build_model`] assembles it as a
//! [`Sequential`] stack. The same builder produces the binary complex
//! network (`complex = true`) and the plain real binary baseline
//! (`complex = false`), which keeps parameter-parity comparisons honest.
//!
//! Structural rules:
//! * the first conv and the classifier head are always full precision;
//! * every binary conv is preceded by a binarization layer and followed by
//!   the configured normalization;
//! * complex variants scale each stage's channel count by 1/sqrt(2)
//!   (round-to-nearest, minimum 8), so a binary complex conv carries about
//!   as many latent scalars as its real counterpart: 2 * (c/sqrt2)^2 = c^2.

use crate::error::{Error, Result};
use crate::init::{complex_weights, real_xavier_uniform, FanPair, InitPolicy};
use crate::layers::binarize::{QuadrantBinarize, SignBinarize};
use crate::layers::conv::{
    BinaryComplexConv2d, BinaryRealConv2d, ComplexConv2d, ConvGeometry, RealConv2d,
};
use crate::layers::generator::ComplexInputGenerator;
use crate::layers::linear::Linear;
use crate::layers::norm::{BatchNorm2d, Cbn, Cgbn};
use crate::layers::pool::{ChannelConcat, GlobalAvgPool, MaxPool2x2};
use crate::layers::residual::ResidualBlock;
use crate::layers::{Layer, ParamView, Sequential};
use crate::scalar::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    Small,
    Nin,
    Resnet,
    Resnete,
}

impl Arch {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "small" => Ok(Self::Small),
            "nin" => Ok(Self::Nin),
            "resnet" => Ok(Self::Resnet),
            "resnete" => Ok(Self::Resnete),
            other => Err(Error::Config(format!(
                "unknown arch `{other}` (expected small, nin, resnet, resnete)"
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Small => "small",
            Self::Nin => "nin",
            Self::Resnet => "resnet",
            Self::Resnete => "resnete",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    Cgbn,
    Cbn,
    Bn,
}

impl NormKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "cgbn" => Ok(Self::Cgbn),
            "cbn" => Ok(Self::Cbn),
            "bn" => Ok(Self::Bn),
            other => {
                Err(Error::Config(format!("unknown norm `{other}` (expected cgbn, cbn, bn)")))
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Cgbn => "cgbn",
            Self::Cbn => "cbn",
            Self::Bn => "bn",
        }
    }
}

/// Where a stage-ending max pool sits relative to the conv's normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolPosition {
    AfterNorm,
    BeforeNorm,
}

impl PoolPosition {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "after-norm" => Ok(Self::AfterNorm),
            "before-norm" => Ok(Self::BeforeNorm),
            other => Err(Error::Config(format!(
                "unknown pool position `{other}` (expected after-norm, before-norm)"
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::AfterNorm => "after-norm",
            Self::BeforeNorm => "before-norm",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub arch: Arch,
    pub complex: bool,
    pub norm: NormKind,
    pub init: InitPolicy,
    pub num_classes: usize,
    pub in_channels: usize,
    pub input_hw: (usize, usize),
    pub pool_position: PoolPosition,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            arch: Arch::Small,
            complex: true,
            norm: NormKind::Cgbn,
            init: InitPolicy::ComponentNormal,
            num_classes: 10,
            in_channels: 1,
            input_hw: (28, 28),
            pool_position: PoolPosition::AfterNorm,
            seed: 42,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.in_channels == 0 {
            return Err(Error::Config("input channels must be positive".into()));
        }
        if self.input_hw.0 < 8 || self.input_hw.1 < 8 {
            return Err(Error::Config(format!(
                "input must be at least 8x8, got {}x{}",
                self.input_hw.0, self.input_hw.1
            )));
        }
        match (self.complex, self.norm) {
            (true, NormKind::Bn) => Err(Error::Config(
                "complex models need a complex norm (cgbn or cbn), not bn".into(),
            )),
            (false, NormKind::Cgbn | NormKind::Cbn) => Err(Error::Config(
                "the real baseline uses norm=bn; cgbn/cbn require complex=true".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Canonical key=value serialization, stable across releases; used by the
    /// config file, checkpoints, and packed-model headers.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        vec![
            ("arch".into(), self.arch.label().into()),
            ("complex".into(), self.complex.to_string()),
            ("norm".into(), self.norm.label().into()),
            ("init".into(), self.init.label().into()),
            ("classes".into(), self.num_classes.to_string()),
            ("in_channels".into(), self.in_channels.to_string()),
            ("input".into(), format!("{}x{}", self.input_hw.0, self.input_hw.1)),
            ("pool_position".into(), self.pool_position.label().into()),
            ("seed".into(), self.seed.to_string()),
        ]
    }

    pub fn from_kv(pairs: &[(String, String)]) -> Result<Self> {
        let mut spec = ModelSpec::default();
        for (key, value) in pairs {
            match key.as_str() {
                "arch" => spec.arch = Arch::parse(value)?,
                "complex" => {
                    spec.complex = value.parse().map_err(|_| {
                        Error::Config(format!("complex must be true/false, got `{value}`"))
                    })?
                }
                "norm" => spec.norm = NormKind::parse(value)?,
                "init" => spec.init = InitPolicy::parse(value)?,
                "classes" => {
                    spec.num_classes = value.parse().map_err(|_| {
                        Error::Config(format!("classes must be an integer, got `{value}`"))
                    })?
                }
                "in_channels" => {
                    spec.in_channels = value.parse().map_err(|_| {
                        Error::Config(format!("in_channels must be an integer, got `{value}`"))
                    })?
                }
                "input" => {
                    let (h, w) = value.split_once('x').ok_or_else(|| {
                        Error::Config(format!("input must look like 28x28, got `{value}`"))
                    })?;
                    let parse = |s: &str| {
                        s.parse::<usize>().map_err(|_| {
                            Error::Config(format!("bad input dimension `{s}` in `{value}`"))
                        })
                    };
                    spec.input_hw = (parse(h)?, parse(w)?);
                }
                "pool_position" => spec.pool_position = PoolPosition::parse(value)?,
                "seed" => {
                    spec.seed = value.parse().map_err(|_| {
                        Error::Config(format!("seed must be an integer, got `{value}`"))
                    })?
                }
                other => return Err(Error::Config(format!("unknown model key `{other}`"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Deployed-size census: live floats plus packed binary payload bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCounts {
    pub full_precision: usize,
    pub binary_bits: usize,
}

impl ParamCounts {
    /// Storage estimate with floats at 32 bits, in mebibytes.
    pub fn total_equivalent_mb(&self) -> f64 {
        let bytes = self.full_precision as f64 * 4.0 + self.binary_bits as f64 / 8.0;
        bytes / (1024.0 * 1024.0)
    }
}

pub fn count_params<S: Scalar>(model: &Sequential<S>) -> ParamCounts {
    let census = model.census();
    ParamCounts { full_precision: census.fp_params, binary_bits: census.packed_bits }
}

/// Trainable scalar count (latents plus full-precision), the quantity used
/// for parity comparisons between complex and real variants.
pub fn trainable_params<S: Scalar>(model: &Sequential<S>) -> usize {
    model.census().trainable_params()
}

/// Channel scaling for complex variants: round(c / sqrt(2)), floor 8.
fn scaled_channels(c: usize, complex: bool) -> usize {
    if complex {
        ((c as f64) / std::f64::consts::SQRT_2).round().max(8.0) as usize
    } else {
        c
    }
}

struct Builder<S: Scalar> {
    spec: ModelSpec,
    rng: ChaCha8Rng,
    layers: Vec<Box<dyn Layer<S>>>,
}

impl<S: Scalar> Builder<S> {
    fn new(spec: &ModelSpec) -> Self {
        Self {
            spec: spec.clone(),
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            layers: Vec::new(),
        }
    }

    fn ch(&self, base: usize) -> usize {
        scaled_channels(base, self.spec.complex)
    }

    fn push(&mut self, layer: Box<dyn Layer<S>>) {
        self.layers.push(layer);
    }

    fn norm(&mut self, channels: usize) -> Box<dyn Layer<S>> {
        match self.spec.norm {
            NormKind::Cgbn => Box::new(Cgbn::new(channels)),
            NormKind::Cbn => Box::new(Cbn::new(channels)),
            NormKind::Bn => Box::new(BatchNorm2d::new(channels)),
        }
    }

    fn binarize(&self) -> Box<dyn Layer<S>> {
        if self.spec.complex {
            Box::new(QuadrantBinarize::default_clip())
        } else {
            Box::new(SignBinarize::default_clip())
        }
    }

    /// Binary conv with latent init from the spec policy.
    fn binary_conv(
        &mut self,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Box<dyn Layer<S>>> {
        let geo = ConvGeometry::new(c_in, c_out, k, stride, pad)?;
        let len = c_out * geo.patch_len();
        let fans = FanPair::conv(c_in, c_out, k);
        if self.spec.complex {
            let (re, im) = complex_weights(self.spec.init, fans, len, &mut self.rng)?;
            Ok(Box::new(BinaryComplexConv2d::new(geo, re, im)?))
        } else {
            let w = real_xavier_uniform(fans, len, &mut self.rng)?;
            Ok(Box::new(BinaryRealConv2d::new(geo, w)?))
        }
    }

    /// Full-precision conv (first layer, and resnete downsampling shortcuts).
    fn fp_conv(
        &mut self,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Box<dyn Layer<S>>> {
        let geo = ConvGeometry::new(c_in, c_out, k, stride, pad)?;
        let len = c_out * geo.patch_len();
        let fans = FanPair::conv(c_in, c_out, k);
        if self.spec.complex {
            let (re, im) = complex_weights(self.spec.init, fans, len, &mut self.rng)?;
            Ok(Box::new(ComplexConv2d::new(geo, re, im)?))
        } else {
            let w = real_xavier_uniform(fans, len, &mut self.rng)?;
            Ok(Box::new(RealConv2d::new(geo, w)?))
        }
    }

    /// binarize -> binary conv [-> pool if BeforeNorm] -> norm [-> pool].
    fn binary_unit(
        &mut self,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
        pool: bool,
    ) -> Result<()> {
        let bin = self.binarize();
        let conv = self.binary_conv(c_in, c_out, k, stride, pad)?;
        let norm = self.norm(c_out);
        self.push(bin);
        self.push(conv);
        match (pool, self.spec.pool_position) {
            (true, PoolPosition::BeforeNorm) => {
                self.push(Box::new(MaxPool2x2::new()));
                self.push(norm);
            }
            (true, PoolPosition::AfterNorm) => {
                self.push(norm);
                self.push(Box::new(MaxPool2x2::new()));
            }
            (false, _) => self.push(norm),
        }
        Ok(())
    }

    /// Same unit as a free-standing stack for residual branches.
    fn binary_unit_layers(
        &mut self,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Vec<Box<dyn Layer<S>>>> {
        Ok(vec![
            self.binarize(),
            self.binary_conv(c_in, c_out, k, stride, pad)?,
            self.norm(c_out),
        ])
    }

    fn head(&mut self, c_last: usize) -> Result<()> {
        self.push(Box::new(GlobalAvgPool::new()));
        let features = if self.spec.complex {
            self.push(Box::new(ChannelConcat::new()));
            2 * c_last
        } else {
            c_last
        };
        let mut linear = Linear::new(features, self.spec.num_classes);
        let w = real_xavier_uniform::<S, _>(
            FanPair::linear(features, self.spec.num_classes),
            features * self.spec.num_classes,
            &mut self.rng,
        )?;
        linear.visit_params(&mut |view: ParamView<'_, S>| {
            if view.name.ends_with(".w") {
                view.param.data.copy_from_slice(&w);
            }
        });
        self.push(Box::new(linear));
        Ok(())
    }

    fn stem(&mut self, c0: usize) -> Result<()> {
        if self.spec.complex {
            let gen_seed = self.rng.gen::<u64>();
            self.push(Box::new(ComplexInputGenerator::new(self.spec.in_channels, gen_seed)?));
        }
        let conv = self.fp_conv(self.spec.in_channels, c0, 3, 1, 1)?;
        self.push(conv);
        let norm = self.norm(c0);
        self.push(norm);
        Ok(())
    }

    fn build_small(mut self) -> Result<Vec<Box<dyn Layer<S>>>> {
        let c0 = self.ch(32);
        let c1 = self.ch(32);
        let c2 = self.ch(64);
        self.stem(c0)?;
        self.binary_unit(c0, c1, 3, 1, 1, true)?;
        self.binary_unit(c1, c2, 3, 1, 1, false)?;
        self.head(c2)?;
        Ok(self.layers)
    }

    fn build_nin(mut self) -> Result<Vec<Box<dyn Layer<S>>>> {
        let c0 = self.ch(48);
        let mid = self.ch(64);
        let inner = self.ch(48);
        let last = self.ch(64);
        self.stem(c0)?;
        // three mlpconv stages: kxk conv then two 1x1 convs
        let stages: [(usize, usize, usize, bool); 3] = [
            (c0, mid, inner, true),
            (inner, mid, inner, true),
            (inner, mid, last, false),
        ];
        for (c_in, c_mid, c_out, pool) in stages {
            self.binary_unit(c_in, c_mid, 3, 1, 1, false)?;
            self.binary_unit(c_mid, c_mid, 1, 1, 0, false)?;
            self.binary_unit(c_mid, c_out, 1, 1, 0, pool)?;
        }
        self.head(last)?;
        Ok(self.layers)
    }

    /// Two-conv residual block; `stride > 1` gets a projection shortcut.
    fn basic_residual(&mut self, c_in: usize, c_out: usize, stride: usize) -> Result<()> {
        let mut main = self.binary_unit_layers(c_in, c_out, 3, stride, 1)?;
        main.extend(self.binary_unit_layers(c_out, c_out, 3, 1, 1)?);
        let shortcut = if c_in != c_out || stride != 1 {
            // plain variant: binary strided 1x1 projection
            Some(Sequential::new(self.binary_unit_layers(c_in, c_out, 1, stride, 0)?))
        } else {
            None
        };
        self.push(Box::new(ResidualBlock::new(Sequential::new(main), shortcut)));
        Ok(())
    }

    /// Single-conv residual block with a full-precision downsampling
    /// shortcut when the shape changes.
    fn residual_e(&mut self, c_in: usize, c_out: usize, stride: usize) -> Result<()> {
        let main = self.binary_unit_layers(c_in, c_out, 3, stride, 1)?;
        let shortcut = if c_in != c_out || stride != 1 {
            let conv = self.fp_conv(c_in, c_out, 1, stride, 0)?;
            let norm = self.norm(c_out);
            Some(Sequential::new(vec![conv, norm]))
        } else {
            None
        };
        self.push(Box::new(ResidualBlock::new(Sequential::new(main), shortcut)));
        Ok(())
    }

    fn build_resnet(mut self) -> Result<Vec<Box<dyn Layer<S>>>> {
        let c0 = self.ch(32);
        let c1 = self.ch(64);
        self.stem(c0)?;
        self.basic_residual(c0, c0, 1)?;
        self.basic_residual(c0, c1, 2)?;
        self.basic_residual(c1, c1, 1)?;
        self.head(c1)?;
        Ok(self.layers)
    }

    fn build_resnete(mut self) -> Result<Vec<Box<dyn Layer<S>>>> {
        let c0 = self.ch(32);
        let c1 = self.ch(64);
        self.stem(c0)?;
        self.residual_e(c0, c0, 1)?;
        self.residual_e(c0, c0, 1)?;
        self.residual_e(c0, c1, 2)?;
        self.residual_e(c1, c1, 1)?;
        self.residual_e(c1, c1, 1)?;
        self.residual_e(c1, c1, 1)?;
        self.head(c1)?;
        Ok(self.layers)
    }
}

pub fn build_model<S: Scalar>(spec: &ModelSpec) -> Result<Sequential<S>> {
    spec.validate()?;
    let builder = Builder::new(spec);
    let layers = match spec.arch {
        Arch::Small => builder.build_small()?,
        Arch::Nin => builder.build_nin()?,
        Arch::Resnet => builder.build_resnet()?,
        Arch::Resnete => builder.build_resnete()?,
    };
    Ok(Sequential::new(layers))
}
