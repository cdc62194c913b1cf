//! Learned real-to-complex input lifting.
//!
//! Real network input x becomes the complex activation x + i*(x + E(x)),
//! where E is a small trainable stack: 1x1 conv -> BN -> ReLU -> 1x1 conv.
//! The closing conv starts at zero, so the imaginary part equals the real
//! part at initialization and the estimate is learned as a residual.

use crate::error::{Error, Result};
use crate::layers::conv::{ConvGeometry, RealConv2d};
use crate::layers::norm::BatchNorm2d;
use crate::layers::pool::Relu;
use crate::layers::{
    collect_sub_records, distribute_sub_records, Activation, BufferView, ExportRecord, Layer,
    LayerCensus, LayerDescriptor, Mode, ParamView, Sequential,
};
use crate::scalar::Scalar;
use crate::tensor::ComplexTensor;

pub struct ComplexInputGenerator<S: Scalar> {
    channels: usize,
    chain: Sequential<S>,
}

impl<S: Scalar> ComplexInputGenerator<S> {
    /// `seed` drives the opening conv's weight draw; the closing conv is
    /// zero-initialized.
    pub fn new(channels: usize, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        use rand_distr::Distribution;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let sigma = (channels as f64).sqrt().recip();
        let normal = rand_distr::Normal::new(0.0, sigma)
            .map_err(|e| Error::Config(format!("bad generator init sigma: {e}")))?;
        let w1: Vec<S> = (0..channels * channels)
            .map(|_| S::from_f64_c(normal.sample(&mut rng)))
            .collect();
        let geo = || ConvGeometry::new(channels, channels, 1, 1, 0);
        let conv1 = RealConv2d::new(geo()?, w1)?;
        let bn = BatchNorm2d::new(channels);
        let relu = Relu::new();
        let conv2 = RealConv2d::new(geo()?, vec![S::zero(); channels * channels])?;
        let chain: Vec<Box<dyn Layer<S>>> =
            vec![Box::new(conv1), Box::new(bn), Box::new(relu), Box::new(conv2)];
        Ok(Self { channels, chain: Sequential::new(chain) })
    }
}

impl<S: Scalar> Layer<S> for ComplexInputGenerator<S> {
    fn name(&self) -> String {
        format!("complex input generator c{}", self.channels)
    }

    fn descriptor(&self) -> LayerDescriptor {
        LayerDescriptor { tag: "cgen".into(), dims: vec![self.channels as u32] }
    }

    fn forward(&mut self, input: Activation<S>, mode: Mode) -> Result<Activation<S>> {
        let x = input.into_real("complex input generator")?;
        let est = self.chain.forward(Activation::Real(x.clone()), mode)?.into_real("estimate")?;
        if est.shape() != x.shape() {
            return Err(Error::Shape(format!(
                "estimate shape {:?} does not match input {:?}",
                est.shape(),
                x.shape()
            )));
        }
        let mut im = x.clone();
        for (dst, &e) in im.data_mut().iter_mut().zip(est.data()) {
            *dst += e;
        }
        Ok(Activation::Complex(ComplexTensor::new(x, im)?))
    }

    fn backward(&mut self, grad: Activation<S>) -> Result<Activation<S>> {
        let g = grad.into_complex("complex input generator grad")?;
        let (g_re, g_im) = g.into_parts();
        // im = x + E(x): the imaginary gradient flows both directly to x and
        // through the estimator; the real gradient flows directly.
        let via_chain = self
            .chain
            .backward(Activation::Real(g_im.clone()))?
            .into_real("estimator grad")?;
        if via_chain.shape() != g_re.shape() {
            return Err(Error::Shape(format!(
                "estimator grad shape {:?} does not match output grad {:?}",
                via_chain.shape(),
                g_re.shape()
            )));
        }
        let mut out = g_re;
        for ((dst, &a), &b) in out.data_mut().iter_mut().zip(g_im.data()).zip(via_chain.data()) {
            *dst += a + b;
        }
        Ok(Activation::Real(out))
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(ParamView<'_, S>)) {
        self.chain.visit_params(f);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(BufferView<'_, S>)) {
        self.chain.visit_buffers(f);
    }

    fn census(&self) -> LayerCensus {
        self.chain.census()
    }

    fn export_records(&self) -> Vec<ExportRecord> {
        collect_sub_records(self.chain.layers())
    }

    fn import_records(&mut self, records: &[ExportRecord]) -> Result<()> {
        distribute_sub_records(self.chain.layers_mut(), records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::RealTensor;

    #[test]
    fn imaginary_equals_real_at_init() {
        let mut gen = ComplexInputGenerator::<f64>::new(3, 9).unwrap();
        let x = RealTensor::from_vec(
            &[2, 3, 2, 2],
            (0..24).map(|i| (i as f64) * 0.31 - 3.0).collect(),
        )
        .unwrap();
        let out = gen
            .forward(Activation::Real(x.clone()), Mode::Eval)
            .unwrap()
            .into_complex("t")
            .unwrap();
        assert_eq!(out.re(), &x);
        // closing conv is zero, so the estimate is zero and im == re
        assert_eq!(out.im(), &x);
    }

    #[test]
    fn parameter_budget_is_small() {
        let gen = ComplexInputGenerator::<f64>::new(3, 1).unwrap();
        let census = gen.census();
        // two 1x1 convs (9 weights + 3 biases each) and one BN (gamma+beta)
        assert_eq!(census.fp_params, 30);
        assert!(census.trainable_params() < 100);
    }

    #[test]
    fn backward_at_init_passes_both_component_grads() {
        // with a zero closing conv, d im/dx = I, so dx = g_re + g_im plus a
        // zero chain contribution through conv2's zero weights
        let mut gen = ComplexInputGenerator::<f64>::new(2, 4).unwrap();
        let x = RealTensor::from_vec(&[2, 2, 1, 1], vec![0.3, -0.2, 0.9, 0.4]).unwrap();
        let _ = gen.forward(Activation::Real(x), Mode::Train).unwrap();
        let gre = RealTensor::from_vec(&[2, 2, 1, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let gim = RealTensor::from_vec(&[2, 2, 1, 1], vec![10.0, 20.0, 30.0, 40.0]).unwrap();
        let gin = gen
            .backward(Activation::Complex(ComplexTensor::new(gre, gim).unwrap()))
            .unwrap()
            .into_real("t")
            .unwrap();
        assert_eq!(gin.data(), &[11.0, 22.0, 33.0, 44.0]);
    }

    #[test]
    fn estimator_learns_through_gradients() {
        // after backward, the closing conv must hold nonzero weight grads
        // (the path is live even though the weights start at zero)
        let mut gen = ComplexInputGenerator::<f64>::new(2, 5).unwrap();
        let x = RealTensor::from_vec(&[2, 2, 1, 1], vec![0.5, -0.4, 0.8, 0.1]).unwrap();
        let _ = gen.forward(Activation::Real(x), Mode::Train).unwrap();
        let gre = RealTensor::from_vec(&[2, 2, 1, 1], vec![0.0; 4]).unwrap();
        let gim = RealTensor::from_vec(&[2, 2, 1, 1], vec![1.0; 4]).unwrap();
        let _ = gen
            .backward(Activation::Complex(ComplexTensor::new(gre, gim).unwrap()))
            .unwrap();
        let mut any_nonzero = false;
        gen.visit_params(&mut |view| {
            if view.name.contains('w') && view.param.grad.iter().any(|&g| g != 0.0) {
                any_nonzero = true;
            }
        });
        assert!(any_nonzero, "estimator weights must receive gradient");
    }

    #[test]
    fn export_import_roundtrip() {
        let mut gen = ComplexInputGenerator::<f64>::new(2, 6).unwrap();
        let records = gen.export_records();
        assert!(!records.is_empty());
        let mut other = ComplexInputGenerator::<f64>::new(2, 999).unwrap();
        other.import_records(&records).unwrap();
        let x = RealTensor::from_vec(&[1, 2, 2, 2], (0..8).map(|i| i as f64 * 0.1).collect())
            .unwrap();
        let a = gen
            .forward(Activation::Real(x.clone()), Mode::Eval)
            .unwrap()
            .into_complex("t")
            .unwrap();
        let b = other
            .forward(Activation::Real(x), Mode::Eval)
            .unwrap()
            .into_complex("t")
            .unwrap();
        for (va, vb) in a.im().data().iter().zip(b.im().data()) {
            assert!((va - vb).abs() < 1e-6);
        }
    }
}
