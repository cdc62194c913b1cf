//! Dense real and complex tensor containers.
//!
//! Layout is NCHW row-major (or (N, F) for matrices). A complex tensor is a
//! pair of equal-shape real tensors; the channel-concatenated form places the
//! M real-part channels first and the M imaginary-part channels second, which
//! is also the layout the final real-valued classifier consumes.

pub mod dense;
pub mod im2col;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense real tensor: shape (N, C, H, W) or (N, F), contiguous row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RealTensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> RealTensor<S> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![S::zero(); n] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {:?} (= {n} elements)",
                data.len(),
                shape
            )));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        let n: usize = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// (N, C, H, W) accessor; errors on other ranks.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::Shape(format!("expected 4-D tensor, got {:?}", self.shape))),
        }
    }

    /// (N, F) accessor; errors on other ranks.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [n, f] => Ok((n, f)),
            _ => Err(Error::Shape(format!("expected 2-D tensor, got {:?}", self.shape))),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} ({} elements) to {:?} ({n} elements)",
                self.shape,
                self.data.len(),
                shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("{context}: element {i} is {v}")));
            }
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }
}

/// Complex tensor as an equal-shape (re, im) pair.
///
/// `re`/`re_mut` and `im`/`im_mut` expose the component planes in place, so
/// mutation through a component view mutates this tensor directly.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor<S> {
    re: RealTensor<S>,
    im: RealTensor<S>,
}

impl<S: Scalar> ComplexTensor<S> {
    pub fn new(re: RealTensor<S>, im: RealTensor<S>) -> Result<Self> {
        if re.shape != im.shape {
            return Err(Error::Shape(format!(
                "component shapes differ: re {:?} vs im {:?}",
                re.shape, im.shape
            )));
        }
        Ok(Self { re, im })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self { re: RealTensor::zeros(shape), im: RealTensor::zeros(shape) }
    }

    pub fn shape(&self) -> &[usize] {
        self.re.shape()
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn re(&self) -> &RealTensor<S> {
        &self.re
    }

    pub fn im(&self) -> &RealTensor<S> {
        &self.im
    }

    pub fn re_mut(&mut self) -> &mut RealTensor<S> {
        &mut self.re
    }

    pub fn im_mut(&mut self) -> &mut RealTensor<S> {
        &mut self.im
    }

    pub fn into_parts(self) -> (RealTensor<S>, RealTensor<S>) {
        (self.re, self.im)
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        self.re.check_finite(context)?;
        self.im.check_finite(context)
    }

    /// Channel concatenation: (N, M, H, W) pair -> (N, 2M, H, W) with the real
    /// channels first, or (N, F) pair -> (N, 2F). Values are copied bit-exactly.
    pub fn to_channel_concat(&self) -> Result<RealTensor<S>> {
        match self.re.shape[..] {
            [n, c, h, w] => {
                let plane = h * w;
                let mut out = RealTensor::zeros(&[n, 2 * c, h, w]);
                let chunk = c * plane;
                for s in 0..n {
                    let dst = &mut out.data[s * 2 * chunk..(s + 1) * 2 * chunk];
                    dst[..chunk].copy_from_slice(&self.re.data[s * chunk..(s + 1) * chunk]);
                    dst[chunk..].copy_from_slice(&self.im.data[s * chunk..(s + 1) * chunk]);
                }
                Ok(out)
            }
            [n, f] => {
                let mut out = RealTensor::zeros(&[n, 2 * f]);
                for s in 0..n {
                    let dst = &mut out.data[s * 2 * f..(s + 1) * 2 * f];
                    dst[..f].copy_from_slice(&self.re.data[s * f..(s + 1) * f]);
                    dst[f..].copy_from_slice(&self.im.data[s * f..(s + 1) * f]);
                }
                Ok(out)
            }
            _ => Err(Error::Shape(format!(
                "channel concat requires 4-D or 2-D tensors, got {:?}",
                self.re.shape
            ))),
        }
    }

    /// Inverse of [`to_channel_concat`]: splits an even channel count in half.
    pub fn from_channel_concat(x: &RealTensor<S>) -> Result<Self> {
        match x.shape[..] {
            [n, c2, h, w] => {
                if c2 % 2 != 0 {
                    return Err(Error::Shape(format!("cannot split odd channel count {c2}")));
                }
                let c = c2 / 2;
                let plane = h * w;
                let chunk = c * plane;
                let mut re = RealTensor::zeros(&[n, c, h, w]);
                let mut im = RealTensor::zeros(&[n, c, h, w]);
                for s in 0..n {
                    let src = &x.data[s * 2 * chunk..(s + 1) * 2 * chunk];
                    re.data[s * chunk..(s + 1) * chunk].copy_from_slice(&src[..chunk]);
                    im.data[s * chunk..(s + 1) * chunk].copy_from_slice(&src[chunk..]);
                }
                Ok(Self { re, im })
            }
            [n, f2] => {
                if f2 % 2 != 0 {
                    return Err(Error::Shape(format!("cannot split odd feature count {f2}")));
                }
                let f = f2 / 2;
                let mut re = RealTensor::zeros(&[n, f]);
                let mut im = RealTensor::zeros(&[n, f]);
                for s in 0..n {
                    let src = &x.data[s * 2 * f..(s + 1) * 2 * f];
                    re.data[s * f..(s + 1) * f].copy_from_slice(&src[..f]);
                    im.data[s * f..(s + 1) * f].copy_from_slice(&src[f..]);
                }
                Ok(Self { re, im })
            }
            _ => Err(Error::Shape(format!(
                "channel split requires 4-D or 2-D tensors, got {:?}",
                x.shape
            ))),
        }
    }
}

/// Elementwise complex product: (a.re b.re - a.im b.im) + i(a.re b.im + a.im b.re).
///
/// `b` must either match `a`'s shape exactly or be a per-channel vector (C)
/// broadcast over (N, C, H, W) / (N, C).
pub fn complex_elementwise_mul<S: Scalar>(
    a: &ComplexTensor<S>,
    b: &ComplexTensor<S>,
) -> Result<ComplexTensor<S>> {
    if a.shape() == b.shape() {
        let n = a.len();
        let mut re = Vec::with_capacity(n);
        let mut im = Vec::with_capacity(n);
        for i in 0..n {
            let (ar, ai) = (a.re.data[i], a.im.data[i]);
            let (br, bi) = (b.re.data[i], b.im.data[i]);
            re.push(ar * br - ai * bi);
            im.push(ar * bi + ai * br);
        }
        return Ok(ComplexTensor {
            re: RealTensor { shape: a.re.shape.clone(), data: re },
            im: RealTensor { shape: a.re.shape.clone(), data: im },
        });
    }
    // Per-channel broadcast path.
    if b.shape().len() == 1 {
        let c = b.shape()[0];
        let (channels, plane) = match a.shape()[..] {
            [_, ch, h, w] => (ch, h * w),
            [_, ch] => (ch, 1),
            _ => {
                return Err(Error::Shape(format!(
                    "broadcast multiply requires 4-D or 2-D lhs, got {:?}",
                    a.shape()
                )))
            }
        };
        if channels != c {
            return Err(Error::Shape(format!(
                "per-channel operand has {c} channels, lhs has {channels}"
            )));
        }
        let mut out = ComplexTensor::zeros(a.shape());
        let chunk = c * plane;
        for (i, ((ar, ai), (or, oi))) in a
            .re
            .data
            .iter()
            .zip(&a.im.data)
            .zip(out.re.data.iter_mut().zip(out.im.data.iter_mut()))
            .enumerate()
        {
            let ch = (i % chunk) / plane;
            let (br, bi) = (b.re.data[ch], b.im.data[ch]);
            *or = *ar * br - *ai * bi;
            *oi = *ar * bi + *ai * br;
        }
        return Ok(out);
    }
    Err(Error::Shape(format!(
        "incompatible shapes for complex multiply: {:?} vs {:?}",
        a.shape(),
        b.shape()
    )))
}
