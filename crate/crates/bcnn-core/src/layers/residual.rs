//! Residual block: output = main(x) + shortcut(x).
//!
//! A `None` shortcut is the identity; a non-identity shortcut (typically a
//! projection conv plus norm) handles channel or resolution changes. Both
//! branches must produce the same domain and shape.

use crate::error::{Error, Result};
use crate::layers::{
    collect_sub_records, distribute_sub_records, Activation, BufferView, ExportRecord, Layer,
    LayerCensus, LayerDescriptor, Mode, ParamView, Sequential,
};
use crate::scalar::Scalar;

pub struct ResidualBlock<S: Scalar> {
    main: Sequential<S>,
    shortcut: Option<Sequential<S>>,
}

fn add_activations<S: Scalar>(a: Activation<S>, b: Activation<S>) -> Result<Activation<S>> {
    match (a, b) {
        (Activation::Real(mut x), Activation::Real(y)) => {
            if x.shape() != y.shape() {
                return Err(Error::Shape(format!(
                    "branch shapes differ: {:?} vs {:?}",
                    x.shape(),
                    y.shape()
                )));
            }
            for (d, &s) in x.data_mut().iter_mut().zip(y.data()) {
                *d += s;
            }
            Ok(Activation::Real(x))
        }
        (Activation::Complex(x), Activation::Complex(y)) => {
            if x.shape() != y.shape() {
                return Err(Error::Shape(format!(
                    "branch shapes differ: {:?} vs {:?}",
                    x.shape(),
                    y.shape()
                )));
            }
            let (mut xr, mut xi) = x.into_parts();
            for (d, &s) in xr.data_mut().iter_mut().zip(y.re().data()) {
                *d += s;
            }
            for (d, &s) in xi.data_mut().iter_mut().zip(y.im().data()) {
                *d += s;
            }
            Ok(Activation::Complex(crate::tensor::ComplexTensor::new(xr, xi)?))
        }
        (a, b) => Err(Error::Shape(format!(
            "branch domains differ: {} vs {}",
            a.domain(),
            b.domain()
        ))),
    }
}

impl<S: Scalar> ResidualBlock<S> {
    pub fn new(main: Sequential<S>, shortcut: Option<Sequential<S>>) -> Self {
        Self { main, shortcut }
    }

    pub fn has_projection(&self) -> bool {
        self.shortcut.is_some()
    }
}

impl<S: Scalar> Layer<S> for ResidualBlock<S> {
    fn name(&self) -> String {
        if self.shortcut.is_some() {
            "residual block (projection shortcut)".into()
        } else {
            "residual block (identity shortcut)".into()
        }
    }

    fn descriptor(&self) -> LayerDescriptor {
        LayerDescriptor {
            tag: "resblock".into(),
            dims: vec![
                self.main.len() as u32,
                self.shortcut.as_ref().map_or(0, |s| s.len()) as u32,
            ],
        }
    }

    fn forward(&mut self, input: Activation<S>, mode: Mode) -> Result<Activation<S>> {
        let saved = input.clone();
        let main_out = self.main.forward(input, mode)?;
        let shortcut_out = match &mut self.shortcut {
            Some(sc) => sc.forward(saved, mode)?,
            None => saved,
        };
        add_activations(main_out, shortcut_out)
    }

    fn backward(&mut self, grad: Activation<S>) -> Result<Activation<S>> {
        let g_shortcut = match &mut self.shortcut {
            Some(sc) => sc.backward(grad.clone())?,
            None => grad.clone(),
        };
        let g_main = self.main.backward(grad)?;
        add_activations(g_main, g_shortcut)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(ParamView<'_, S>)) {
        self.main.visit_params(f);
        if let Some(sc) = &mut self.shortcut {
            sc.visit_params(f);
        }
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(BufferView<'_, S>)) {
        self.main.visit_buffers(f);
        if let Some(sc) = &mut self.shortcut {
            sc.visit_buffers(f);
        }
    }

    fn census(&self) -> LayerCensus {
        let mut c = self.main.census();
        if let Some(sc) = &self.shortcut {
            c = c.add(sc.census());
        }
        c
    }

    fn export_records(&self) -> Vec<ExportRecord> {
        // namespace: m.<i>.<name> for the main branch, s.<i>.<name> shortcut
        let mut out: Vec<ExportRecord> = collect_sub_records(self.main.layers())
            .into_iter()
            .map(|r| ExportRecord { name: format!("m.{}", r.name), payload: r.payload })
            .collect();
        if let Some(sc) = &self.shortcut {
            out.extend(collect_sub_records(sc.layers()).into_iter().map(|r| ExportRecord {
                name: format!("s.{}", r.name),
                payload: r.payload,
            }));
        }
        out
    }

    fn import_records(&mut self, records: &[ExportRecord]) -> Result<()> {
        let mut main_recs = Vec::new();
        let mut sc_recs = Vec::new();
        for rec in records {
            match rec.name.split_once('.') {
                Some(("m", rest)) => main_recs.push(ExportRecord {
                    name: rest.to_string(),
                    payload: rec.payload.clone(),
                }),
                Some(("s", rest)) => sc_recs.push(ExportRecord {
                    name: rest.to_string(),
                    payload: rec.payload.clone(),
                }),
                _ => {
                    return Err(Error::Data(format!(
                        "residual record `{}` lacks a branch prefix",
                        rec.name
                    )))
                }
            }
        }
        distribute_sub_records(self.main.layers_mut(), &main_recs)?;
        match (&mut self.shortcut, sc_recs.is_empty()) {
            (Some(sc), _) => distribute_sub_records(sc.layers_mut(), &sc_recs),
            (None, true) => Ok(()),
            (None, false) => Err(Error::Data(
                "serialized shortcut records but block has identity shortcut".into(),
            )),
        }
    }
}
