//! Spatial pooling, channel concatenation, and ReLU.

use crate::error::{Error, Result};
use crate::layers::{Activation, Layer, LayerDescriptor, Mode};
use crate::scalar::Scalar;
use crate::tensor::{ComplexTensor, RealTensor};

/// 2x2 max pooling with stride 2. Odd trailing rows/columns are dropped.
/// Complex inputs are pooled per component with independent argmaxes.
pub struct MaxPool2x2<S: Scalar> {
    cache: Option<PoolCache>,
    _marker: std::marker::PhantomData<S>,
}

struct PoolCache {
    in_shape: Vec<usize>,
    // flat input index of the winner for each output element, per component
    argmax: Vec<Vec<usize>>,
    complex: bool,
}

impl<S: Scalar> MaxPool2x2<S> {
    pub fn new() -> Self {
        Self { cache: None, _marker: std::marker::PhantomData }
    }

    fn pool_plane(x: &RealTensor<S>) -> Result<(RealTensor<S>, Vec<usize>)> {
        let (n, c, h, w) = x.dims4()?;
        if h < 2 || w < 2 {
            return Err(Error::Shape(format!(
                "max pool needs spatial dims >= 2, got {h}x{w}"
            )));
        }
        let (ho, wo) = (h / 2, w / 2);
        let mut out = vec![S::zero(); n * c * ho * wo];
        let mut arg = vec![0usize; out.len()];
        let data = x.data();
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * h * w;
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut best_idx = base + (2 * oy) * w + 2 * ox;
                        let mut best = data[best_idx];
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let i = base + (2 * oy + dy) * w + (2 * ox + dx);
                                if data[i] > best {
                                    best = data[i];
                                    best_idx = i;
                                }
                            }
                        }
                        let o = ((s * c + ch) * ho + oy) * wo + ox;
                        out[o] = best;
                        arg[o] = best_idx;
                    }
                }
            }
        }
        Ok((RealTensor::from_vec(&[n, c, ho, wo], out)?, arg))
    }

    fn unpool_plane(
        g: &RealTensor<S>,
        arg: &[usize],
        in_shape: &[usize],
    ) -> Result<RealTensor<S>> {
        if g.len() != arg.len() {
            return Err(Error::Shape(format!(
                "pool gradient has {} elements, cached forward {}",
                g.len(),
                arg.len()
            )));
        }
        let mut out = vec![S::zero(); in_shape.iter().product()];
        for (gi, &src) in g.data().iter().zip(arg) {
            out[src] += *gi;
        }
        RealTensor::from_vec(in_shape, out)
    }
}

impl<S: Scalar> Default for MaxPool2x2<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Layer<S> for MaxPool2x2<S> {
    fn name(&self) -> String {
        "maxpool 2x2".into()
    }

    fn descriptor(&self) -> LayerDescriptor {
        LayerDescriptor { tag: "maxpool2".into(), dims: vec![] }
    }

    fn forward(&mut self, input: Activation<S>, mode: Mode) -> Result<Activation<S>> {
        match input {
            Activation::Real(x) => {
                let in_shape = x.shape().to_vec();
                let (out, arg) = Self::pool_plane(&x)?;
                self.cache = match mode {
                    Mode::Train => {
                        Some(PoolCache { in_shape, argmax: vec![arg], complex: false })
                    }
                    Mode::Eval => None,
                };
                Ok(Activation::Real(out))
            }
            Activation::Complex(z) => {
                let in_shape = z.shape().to_vec();
                let (out_re, arg_re) = Self::pool_plane(z.re())?;
                let (out_im, arg_im) = Self::pool_plane(z.im())?;
                self.cache = match mode {
                    Mode::Train => Some(PoolCache {
                        in_shape,
                        argmax: vec![arg_re, arg_im],
                        complex: true,
                    }),
                    Mode::Eval => None,
                };
                Ok(Activation::Complex(ComplexTensor::new(out_re, out_im)?))
            }
        }
    }

    fn backward(&mut self, grad: Activation<S>) -> Result<Activation<S>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("no cached forward for max pool backward".into()))?;
        match (grad, cache.complex) {
            (Activation::Real(g), false) => Ok(Activation::Real(Self::unpool_plane(
                &g,
                &cache.argmax[0],
                &cache.in_shape,
            )?)),
            (Activation::Complex(g), true) => {
                let re = Self::unpool_plane(g.re(), &cache.argmax[0], &cache.in_shape)?;
                let im = Self::unpool_plane(g.im(), &cache.argmax[1], &cache.in_shape)?;
                Ok(Activation::Complex(ComplexTensor::new(re, im)?))
            }
            (g, _) => Err(Error::Shape(format!(
                "pool gradient domain {} does not match cached forward",
                g.domain()
            ))),
        }
    }
}

/// Global average pooling: (N, C, H, W) -> (N, C), both domains.
pub struct GlobalAvgPool<S: Scalar> {
    cache: Option<(Vec<usize>, bool)>,
    _marker: std::marker::PhantomData<S>,
}

impl<S: Scalar> GlobalAvgPool<S> {
    pub fn new() -> Self {
        Self { cache: None, _marker: std::marker::PhantomData }
    }

    fn reduce(x: &RealTensor<S>) -> Result<RealTensor<S>> {
        let (n, c, h, w) = x.dims4()?;
        let plane = h * w;
        let inv = S::from_usize(plane).unwrap().recip();
        let mut out = vec![S::zero(); n * c];
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * plane;
                let mut acc = S::zero();
                for p in 0..plane {
                    acc += x.data()[base + p];
                }
                out[s * c + ch] = acc * inv;
            }
        }
        RealTensor::from_vec(&[n, c], out)
    }

    fn spread(g: &RealTensor<S>, in_shape: &[usize]) -> Result<RealTensor<S>> {
        let [n, c, h, w] = in_shape else {
            return Err(Error::Shape("cached pool shape must be 4-D".into()));
        };
        let (gn, gc) = g.dims2()?;
        if gn != *n || gc != *c {
            return Err(Error::Shape(format!(
                "pool gradient ({gn},{gc}) does not match cached input ({n},{c})"
            )));
        }
        let plane = h * w;
        let inv = S::from_usize(plane).unwrap().recip();
        let mut out = vec![S::zero(); n * c * plane];
        for s in 0..*n {
            for ch in 0..*c {
                let v = g.data()[s * c + ch] * inv;
                let base = (s * c + ch) * plane;
                for p in 0..plane {
                    out[base + p] = v;
                }
            }
        }
        RealTensor::from_vec(in_shape, out)
    }
}

impl<S: Scalar> Default for GlobalAvgPool<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Layer<S> for GlobalAvgPool<S> {
    fn name(&self) -> String {
        "global avg pool".into()
    }

    fn descriptor(&self) -> LayerDescriptor {
        LayerDescriptor { tag: "gap".into(), dims: vec![] }
    }

    fn forward(&mut self, input: Activation<S>, mode: Mode) -> Result<Activation<S>> {
        let (out, meta) = match &input {
            Activation::Real(x) => {
                (Activation::Real(Self::reduce(x)?), (x.shape().to_vec(), false))
            }
            Activation::Complex(z) => (
                Activation::Complex(ComplexTensor::new(
                    Self::reduce(z.re())?,
                    Self::reduce(z.im())?,
                )?),
                (z.shape().to_vec(), true),
            ),
        };
        self.cache = match mode {
            Mode::Train => Some(meta),
            Mode::Eval => None,
        };
        Ok(out)
    }

    fn backward(&mut self, grad: Activation<S>) -> Result<Activation<S>> {
        let (in_shape, complex) = self
            .cache
            .take()
            .ok_or_else(|| Error::State("no cached forward for avg pool backward".into()))?;
        match (grad, complex) {
            (Activation::Real(g), false) => {
                Ok(Activation::Real(Self::spread(&g, &in_shape)?))
            }
            (Activation::Complex(g), true) => Ok(Activation::Complex(ComplexTensor::new(
                Self::spread(g.re(), &in_shape)?,
                Self::spread(g.im(), &in_shape)?,
            )?)),
            (g, _) => Err(Error::Shape(format!(
                "pool gradient domain {} does not match cached forward",
                g.domain()
            ))),
        }
    }
}

/// Converts a complex activation to a real one by stacking the real channels
/// ahead of the imaginary channels: (N, C, ...) complex -> (N, 2C, ...) real.
pub struct ChannelConcat<S: Scalar> {
    _marker: std::marker::PhantomData<S>,
}

impl<S: Scalar> ChannelConcat<S> {
    pub fn new() -> Self {
        Self { _marker: std::marker::PhantomData }
    }
}

impl<S: Scalar> Default for ChannelConcat<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Layer<S> for ChannelConcat<S> {
    fn name(&self) -> String {
        "channel concat".into()
    }

    fn descriptor(&self) -> LayerDescriptor {
        LayerDescriptor { tag: "cconcat".into(), dims: vec![] }
    }

    fn forward(&mut self, input: Activation<S>, _mode: Mode) -> Result<Activation<S>> {
        let z = input.into_complex("channel concat")?;
        Ok(Activation::Real(z.to_channel_concat()?))
    }

    fn backward(&mut self, grad: Activation<S>) -> Result<Activation<S>> {
        let g = grad.into_real("channel concat grad")?;
        Ok(Activation::Complex(ComplexTensor::from_channel_concat(&g)?))
    }
}

/// Rectified linear unit over real activations.
pub struct Relu<S: Scalar> {
    cache: Option<Vec<bool>>,
    _marker: std::marker::PhantomData<S>,
}

impl<S: Scalar> Relu<S> {
    pub fn new() -> Self {
        Self { cache: None, _marker: std::marker::PhantomData }
    }
}

impl<S: Scalar> Default for Relu<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Layer<S> for Relu<S> {
    fn name(&self) -> String {
        "relu".into()
    }

    fn descriptor(&self) -> LayerDescriptor {
        LayerDescriptor { tag: "relu".into(), dims: vec![] }
    }

    fn forward(&mut self, input: Activation<S>, mode: Mode) -> Result<Activation<S>> {
        let x = input.into_real("relu")?;
        let mask: Vec<bool> = x.data().iter().map(|v| *v > S::zero()).collect();
        let out = RealTensor::from_vec(
            x.shape(),
            x.data()
                .iter()
                .zip(&mask)
                .map(|(&v, &keep)| if keep { v } else { S::zero() })
                .collect(),
        )?;
        self.cache = match mode {
            Mode::Train => Some(mask),
            Mode::Eval => None,
        };
        Ok(Activation::Real(out))
    }

    fn backward(&mut self, grad: Activation<S>) -> Result<Activation<S>> {
        let g = grad.into_real("relu grad")?;
        let mask = self
            .cache
            .take()
            .ok_or_else(|| Error::State("no cached forward for relu backward".into()))?;
        if g.len() != mask.len() {
            return Err(Error::Shape(format!(
                "relu gradient has {} elements, cached forward {}",
                g.len(),
                mask.len()
            )));
        }
        let out = RealTensor::from_vec(
            g.shape(),
            g.data()
                .iter()
                .zip(&mask)
                .map(|(&v, &keep)| if keep { v } else { S::zero() })
                .collect(),
        )?;
        Ok(Activation::Real(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complex(shape: &[usize], re: Vec<f64>, im: Vec<f64>) -> ComplexTensor<f64> {
        ComplexTensor::new(
            RealTensor::from_vec(shape, re).unwrap(),
            RealTensor::from_vec(shape, im).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn max_pool_takes_componentwise_max() {
        // window holds 1+4i, 3+2i, 0+0i, 0+0i -> component max is 3+4i
        let z = complex(
            &[1, 1, 2, 2],
            vec![1.0, 3.0, 0.0, 0.0],
            vec![4.0, 2.0, 0.0, 0.0],
        );
        let mut pool = MaxPool2x2::new();
        let out = pool
            .forward(Activation::Complex(z), Mode::Train)
            .unwrap()
            .into_complex("t")
            .unwrap();
        assert_eq!(out.shape(), &[1, 1, 1, 1]);
        assert_eq!(out.re().data()[0], 3.0);
        assert_eq!(out.im().data()[0], 4.0);
    }

    #[test]
    fn max_pool_backward_routes_to_argmax() {
        let z = complex(
            &[1, 1, 2, 2],
            vec![1.0, 3.0, 0.0, 0.0],
            vec![4.0, 2.0, 0.0, 0.0],
        );
        let mut pool = MaxPool2x2::new();
        let _ = pool.forward(Activation::Complex(z), Mode::Train).unwrap();
        let g = complex(&[1, 1, 1, 1], vec![10.0], vec![20.0]);
        let gin = pool
            .backward(Activation::Complex(g))
            .unwrap()
            .into_complex("t")
            .unwrap();
        // re winner was slot 1, im winner slot 0
        assert_eq!(gin.re().data(), &[0.0, 10.0, 0.0, 0.0]);
        assert_eq!(gin.im().data(), &[20.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn max_pool_real_4x4() {
        let x = RealTensor::from_vec(
            &[1, 1, 4, 4],
            (0..16).map(|i| f64::from(i as i32)).collect(),
        )
        .unwrap();
        let mut pool = MaxPool2x2::new();
        let out = pool
            .forward(Activation::Real(x), Mode::Eval)
            .unwrap()
            .into_real("t")
            .unwrap();
        assert_eq!(out.shape(), &[1, 1, 2, 2]);
        assert_eq!(out.data(), &[5.0, 7.0, 13.0, 15.0]);
    }

    #[test]
    fn global_avg_pool_means_and_backward() {
        let x = RealTensor::from_vec(&[1, 2, 2, 2], vec![1., 2., 3., 4., 10., 10., 10., 10.])
            .unwrap();
        let mut gap = GlobalAvgPool::new();
        let out = gap
            .forward(Activation::Real(x), Mode::Train)
            .unwrap()
            .into_real("t")
            .unwrap();
        assert_eq!(out.shape(), &[1, 2]);
        assert_eq!(out.data(), &[2.5, 10.0]);
        let g = RealTensor::from_vec(&[1, 2], vec![4.0, 8.0]).unwrap();
        let gin = gap
            .backward(Activation::Real(g))
            .unwrap()
            .into_real("t")
            .unwrap();
        assert_eq!(gin.data(), &[1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn channel_concat_roundtrip_gradient() {
        let z = complex(&[2, 2], vec![1., 2., 3., 4.], vec![5., 6., 7., 8.]);
        let mut cat = ChannelConcat::new();
        let out = cat
            .forward(Activation::Complex(z), Mode::Train)
            .unwrap()
            .into_real("t")
            .unwrap();
        assert_eq!(out.shape(), &[2, 4]);
        assert_eq!(out.data(), &[1., 2., 5., 6., 3., 4., 7., 8.]);
        let g = RealTensor::from_vec(&[2, 4], vec![1., 2., 3., 4., 5., 6., 7., 8.]).unwrap();
        let gin = cat
            .backward(Activation::Real(g))
            .unwrap()
            .into_complex("t")
            .unwrap();
        assert_eq!(gin.re().data(), &[1., 2., 5., 6.]);
        assert_eq!(gin.im().data(), &[3., 4., 7., 8.]);
    }

    #[test]
    fn relu_forward_backward() {
        let x = RealTensor::from_vec(&[1, 4], vec![-1.0, 0.0, 0.5, 2.0]).unwrap();
        let mut relu = Relu::new();
        let out = relu
            .forward(Activation::Real(x), Mode::Train)
            .unwrap()
            .into_real("t")
            .unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 0.5, 2.0]);
        let g = RealTensor::from_vec(&[1, 4], vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let gin = relu
            .backward(Activation::Real(g))
            .unwrap()
            .into_real("t")
            .unwrap();
        assert_eq!(gin.data(), &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let mut pool = MaxPool2x2::<f64>::new();
        let g = RealTensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
        assert!(matches!(
            pool.backward(Activation::Real(g)),
            Err(crate::error::Error::State(_))
        ));
    }
}
