//! Full-precision fully connected layer.

use crate::error::{Error, Result};
use crate::layers::{
    Activation, ExportRecord, Layer, LayerCensus, LayerDescriptor, Mode, Param, ParamRole,
    ParamView,
};
use crate::scalar::Scalar;
use crate::tensor::dense::{matmul_nn, matmul_nt, matmul_tn};
use crate::tensor::RealTensor;

/// y = x W^T + b with W of shape (out_features, in_features).
pub struct Linear<S: Scalar> {
    in_features: usize,
    out_features: usize,
    weight: Param<S>,
    bias: Param<S>,
    cache: Option<RealTensor<S>>,
}

impl<S: Scalar> Linear<S> {
    pub fn new(in_features: usize, out_features: usize) -> Self {
        Self {
            in_features,
            out_features,
            weight: Param::zeros(in_features * out_features),
            bias: Param::zeros(out_features),
            cache: None,
        }
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }
}

impl<S: Scalar> Layer<S> for Linear<S> {
    fn name(&self) -> String {
        format!("linear {}->{}", self.in_features, self.out_features)
    }

    fn descriptor(&self) -> LayerDescriptor {
        LayerDescriptor {
            tag: "linear".into(),
            dims: vec![self.in_features as u32, self.out_features as u32],
        }
    }

    fn forward(&mut self, input: Activation<S>, mode: Mode) -> Result<Activation<S>> {
        let x = input.into_real("linear")?;
        let (n, f) = x.dims2()?;
        if f != self.in_features {
            return Err(Error::Shape(format!(
                "linear expects {} input features, got {f}",
                self.in_features
            )));
        }
        let mut out = matmul_nt(x.data(), n, f, &self.weight.data, self.out_features);
        for row in 0..n {
            for (j, &b) in self.bias.data.iter().enumerate() {
                out[row * self.out_features + j] += b;
            }
        }
        self.cache = match mode {
            Mode::Train => Some(x),
            Mode::Eval => None,
        };
        RealTensor::from_vec(&[n, self.out_features], out).map(Activation::Real)
    }

    fn backward(&mut self, grad: Activation<S>) -> Result<Activation<S>> {
        let g = grad.into_real("linear grad")?;
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::State("no cached forward for linear backward".into()))?;
        let (n, f_in) = x.dims2()?;
        let (gn, f_out) = g.dims2()?;
        if gn != n || f_out != self.out_features {
            return Err(Error::Shape(format!(
                "linear gradient ({gn},{f_out}) does not match forward ({n},{})",
                self.out_features
            )));
        }
        let dw = matmul_tn(g.data(), n, f_out, x.data(), f_in);
        for (acc, d) in self.weight.grad.iter_mut().zip(&dw) {
            *acc += *d;
        }
        for row in 0..n {
            for j in 0..f_out {
                self.bias.grad[j] += g.data()[row * f_out + j];
            }
        }
        let dx = matmul_nn(g.data(), n, f_out, &self.weight.data, f_in);
        RealTensor::from_vec(&[n, f_in], dx).map(Activation::Real)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(ParamView<'_, S>)) {
        let tag = format!("linear[{}x{}]", self.out_features, self.in_features);
        f(ParamView {
            name: format!("{tag}.w"),
            role: ParamRole::FullPrecision,
            param: &mut self.weight,
        });
        f(ParamView {
            name: format!("{tag}.bias"),
            role: ParamRole::FullPrecision,
            param: &mut self.bias,
        });
    }

    fn census(&self) -> LayerCensus {
        LayerCensus {
            fp_params: self.in_features * self.out_features + self.out_features,
            latent_params: 0,
            packed_bits: 0,
        }
    }

    fn export_records(&self) -> Vec<ExportRecord> {
        vec![
            ExportRecord {
                name: "w".into(),
                payload: crate::layers::ExportPayload::F32(
                    self.weight.data.iter().map(|&v| v.to_f32_c()).collect(),
                ),
            },
            ExportRecord {
                name: "bias".into(),
                payload: crate::layers::ExportPayload::F32(
                    self.bias.data.iter().map(|&v| v.to_f32_c()).collect(),
                ),
            },
        ]
    }

    fn import_records(&mut self, records: &[ExportRecord]) -> Result<()> {
        for rec in records {
            let dst = match rec.name.as_str() {
                "w" => &mut self.weight.data,
                "bias" => &mut self.bias.data,
                other => return Err(Error::Data(format!("unknown linear record `{other}`"))),
            };
            match &rec.payload {
                crate::layers::ExportPayload::F32(v) if v.len() == dst.len() => {
                    *dst = v.iter().map(|&x| S::from_f32_c(x)).collect();
                }
                crate::layers::ExportPayload::F32(v) => {
                    return Err(Error::Data(format!(
                        "linear record {}: expected {} floats, got {}",
                        rec.name,
                        dst.len(),
                        v.len()
                    )))
                }
                crate::layers::ExportPayload::Packed { .. } => {
                    return Err(Error::Data(format!(
                        "linear record {}: expected floats, got packed planes",
                        rec.name
                    )))
                }
            }
        }
        Ok(())
    }
}
