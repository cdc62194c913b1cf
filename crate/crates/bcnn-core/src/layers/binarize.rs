//! Quadrant binarization with straight-through gradients.
//!
//! Forward maps each complex activation to the binary complex value of its
//! quadrant: sign applied independently to the real and imaginary parts, with
//! sign(0) = +1. Backward passes each component's gradient through unchanged
//! where the corresponding latent magnitude is strictly below the clip
//! threshold and zeroes it elsewhere; the components never mix.

use crate::error::{Error, Result};
use crate::layers::{Activation, Layer, LayerDescriptor, Mode};
use crate::scalar::Scalar;
use crate::tensor::{ComplexTensor, RealTensor};

fn sign_plane<S: Scalar>(t: &RealTensor<S>, context: &str) -> Result<RealTensor<S>> {
    t.check_finite(context)?;
    Ok(t.map(|v| if v >= S::zero() { S::one() } else { -S::one() }))
}

fn ste_mask<S: Scalar>(grad: &RealTensor<S>, latent: &RealTensor<S>, t_clip: S) -> RealTensor<S> {
    let mut out = grad.clone();
    for (g, &x) in out.data_mut().iter_mut().zip(latent.data()) {
        if x.abs() >= t_clip {
            *g = S::zero();
        }
    }
    out
}

/// Complex-domain binarizer: z -> sign(re(z)) + i sign(im(z)).
pub struct QuadrantBinarize<S> {
    t_clip: S,
    cache: Option<ComplexTensor<S>>,
}

impl<S: Scalar> QuadrantBinarize<S> {
    pub fn new(t_clip: S) -> Result<Self> {
        if t_clip <= S::zero() {
            return Err(Error::Config(format!("clip threshold must be positive, got {t_clip}")));
        }
        Ok(Self { t_clip, cache: None })
    }

    pub fn default_clip() -> Self {
        Self { t_clip: S::one(), cache: None }
    }
}

impl<S: Scalar> Layer<S> for QuadrantBinarize<S> {
    fn name(&self) -> String {
        format!("quadrant_binarize t_clip={}", self.t_clip)
    }

    fn descriptor(&self) -> LayerDescriptor {
        LayerDescriptor { tag: "qbin".into(), dims: vec![] }
    }

    fn forward(&mut self, input: Activation<S>, mode: Mode) -> Result<Activation<S>> {
        let z = input.into_complex("quadrant binarize")?;
        let re = sign_plane(z.re(), "quadrant binarize re")?;
        let im = sign_plane(z.im(), "quadrant binarize im")?;
        self.cache = match mode {
            Mode::Train => Some(z),
            Mode::Eval => None,
        };
        Ok(Activation::Complex(ComplexTensor::new(re, im)?))
    }

    fn backward(&mut self, grad: Activation<S>) -> Result<Activation<S>> {
        let g = grad.into_complex("quadrant binarize grad")?;
        let latent = self
            .cache
            .take()
            .ok_or_else(|| Error::State("no cached forward for binarize backward".into()))?;
        if g.shape() != latent.shape() {
            return Err(Error::Shape(format!(
                "gradient shape {:?} does not match cached input {:?}",
                g.shape(),
                latent.shape()
            )));
        }
        let re = ste_mask(g.re(), latent.re(), self.t_clip);
        let im = ste_mask(g.im(), latent.im(), self.t_clip);
        Ok(Activation::Complex(ComplexTensor::new(re, im)?))
    }
}

/// Real-domain binarizer for the plain BNN baseline path.
pub struct SignBinarize<S> {
    t_clip: S,
    cache: Option<RealTensor<S>>,
}

impl<S: Scalar> SignBinarize<S> {
    pub fn default_clip() -> Self {
        Self { t_clip: S::one(), cache: None }
    }
}

impl<S: Scalar> Layer<S> for SignBinarize<S> {
    fn name(&self) -> String {
        format!("sign_binarize t_clip={}", self.t_clip)
    }

    fn descriptor(&self) -> LayerDescriptor {
        LayerDescriptor { tag: "sbin".into(), dims: vec![] }
    }

    fn forward(&mut self, input: Activation<S>, mode: Mode) -> Result<Activation<S>> {
        let x = input.into_real("sign binarize")?;
        let out = sign_plane(&x, "sign binarize")?;
        self.cache = match mode {
            Mode::Train => Some(x),
            Mode::Eval => None,
        };
        Ok(Activation::Real(out))
    }

    fn backward(&mut self, grad: Activation<S>) -> Result<Activation<S>> {
        let g = grad.into_real("sign binarize grad")?;
        let latent = self
            .cache
            .take()
            .ok_or_else(|| Error::State("no cached forward for binarize backward".into()))?;
        if g.shape() != latent.shape() {
            return Err(Error::Shape(format!(
                "gradient shape {:?} does not match cached input {:?}",
                g.shape(),
                latent.shape()
            )));
        }
        Ok(Activation::Real(ste_mask(&g, &latent, self.t_clip)))
    }
}
