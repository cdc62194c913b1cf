//! Convolution layers: binary complex (the packed xnor-popcount path), full
//! precision complex (first layer), and the real-valued counterparts used by
//! the plain-BNN baseline and the input generator.
//!
//! All variants lower to GEMM over im2col patch rows against pre-transposed
//! filter rows, so the packed and float paths share one shape contract. With
//! C = Xr*Wr' - Xi*Wi' and D = Xr*Wi' + Xi*Wr', the backward rules are
//!
//! ```text
//! dXr =  Gc*Wr + Gd*Wi        dWr =  Gc'*Xr + Gd'*Xi
//! dXi = -Gc*Wi + Gd*Wr        dWi = -Gc'*Xi + Gd'*Xr
//! ```
//!
//! For binarized operands these are gradients with respect to the signs; the
//! straight-through mask 1_{|latent| < t_clip} is applied to latent weight
//! gradients here, while input masking belongs to the upstream binarize layer.

use crate::bitpack::{binary_complex_gemm, binary_gemm, PackedComplexMatrix, PackedMatrix};
use crate::error::{Error, Result};
use crate::layers::{
    accumulate, Activation, ExportPayload, ExportRecord, Layer, LayerCensus, LayerDescriptor,
    Mode, Param, ParamRole, ParamView,
};
use crate::scalar::Scalar;
use crate::tensor::dense::{complex_matmul_nt, matmul_nn, matmul_nt, matmul_tn};
use crate::tensor::im2col::Im2ColPlan;
use crate::tensor::{ComplexTensor, RealTensor};

/// Kernel/stride/padding geometry shared by every conv variant.
#[derive(Debug, Clone, Copy)]
pub struct ConvGeometry {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn new(c_in: usize, c_out: usize, k: usize, stride: usize, pad: usize) -> Result<Self> {
        if c_in == 0 || c_out == 0 || k == 0 || stride == 0 {
            return Err(Error::Config(format!(
                "conv dims must be positive: c_in={c_in} c_out={c_out} k={k} stride={stride}"
            )));
        }
        Ok(Self { c_in, c_out, k, stride, pad })
    }

    /// Flattened filter length: k²·C_in.
    pub fn patch_len(&self) -> usize {
        self.k * self.k * self.c_in
    }

    fn dims(&self) -> Vec<u32> {
        vec![
            self.c_in as u32,
            self.c_out as u32,
            self.k as u32,
            self.stride as u32,
            self.pad as u32,
        ]
    }

    fn describe(&self) -> String {
        format!(
            "{}->{} k{} s{} p{}",
            self.c_in, self.c_out, self.k, self.stride, self.pad
        )
    }
}

/// Lazily (re)builds the im2col plan when the input spatial dims change.
fn ensure_plan(
    slot: &mut Option<Im2ColPlan>,
    geo: &ConvGeometry,
    h: usize,
    w: usize,
) -> Result<()> {
    let stale = match slot {
        Some(p) => p.h_in != h || p.w_in != w,
        None => true,
    };
    if stale {
        *slot = Some(Im2ColPlan::new(geo.c_in, h, w, geo.k, geo.stride, geo.pad)?);
    }
    Ok(())
}

/// GEMM output (N·P, C_out) -> NCHW with optional per-channel bias.
fn gemm_to_nchw<S: Scalar>(
    gemm: &[S],
    n: usize,
    positions: usize,
    c_out: usize,
    bias: Option<&[S]>,
) -> Vec<S> {
    let mut out = vec![S::zero(); n * c_out * positions];
    for s in 0..n {
        for p in 0..positions {
            let row = &gemm[(s * positions + p) * c_out..(s * positions + p + 1) * c_out];
            for (co, &v) in row.iter().enumerate() {
                let b = bias.map_or(S::zero(), |bs| bs[co]);
                out[(s * c_out + co) * positions + p] = v + b;
            }
        }
    }
    out
}

/// NCHW gradient -> GEMM orientation (N·P, C_out).
fn nchw_to_gemm<S: Scalar>(g: &[S], n: usize, c_out: usize, positions: usize) -> Vec<S> {
    let mut out = vec![S::zero(); n * positions * c_out];
    for s in 0..n {
        for co in 0..c_out {
            let plane = &g[(s * c_out + co) * positions..(s * c_out + co + 1) * positions];
            for (p, &v) in plane.iter().enumerate() {
                out[(s * positions + p) * c_out + co] = v;
            }
        }
    }
    out
}

/// Per-output-channel sum of an NCHW gradient (the bias gradient).
fn channel_sums<S: Scalar>(g: &[S], n: usize, c_out: usize, positions: usize) -> Vec<S> {
    let mut out = vec![S::zero(); c_out];
    for s in 0..n {
        for co in 0..c_out {
            let plane = &g[(s * c_out + co) * positions..(s * c_out + co + 1) * positions];
            let mut acc = S::zero();
            for &v in plane {
                acc += v;
            }
            out[co] += acc;
        }
    }
    out
}

fn check_pm_one<S: Scalar>(t: &RealTensor<S>, what: &str) -> Result<()> {
    for (i, &v) in t.data().iter().enumerate() {
        if v != S::one() && v != -S::one() {
            return Err(Error::Domain(format!(
                "{what}: element {i} is {v}, binary path requires +-1 inputs"
            )));
        }
    }
    Ok(())
}

fn check_grad_shape(
    shape: &[usize],
    n: usize,
    c_out: usize,
    h_out: usize,
    w_out: usize,
) -> Result<()> {
    if shape != [n, c_out, h_out, w_out] {
        return Err(Error::Shape(format!(
            "gradient shape {shape:?} does not match forward output ({n}, {c_out}, {h_out}, {w_out})"
        )));
    }
    Ok(())
}

/// Applies the straight-through mask and accumulates: only latents with
/// |latent| < t_clip receive gradient.
fn accumulate_ste<S: Scalar>(param: &mut Param<S>, grad: &[S], t_clip: S) {
    for ((g_acc, &g), &latent) in param.grad.iter_mut().zip(grad).zip(&param.data) {
        if latent.abs() < t_clip {
            *g_acc += g;
        }
    }
}

fn import_f32_record<S: Scalar>(rec: &ExportRecord, expect_len: usize) -> Result<Vec<S>> {
    match &rec.payload {
        ExportPayload::F32(v) => {
            if v.len() != expect_len {
                return Err(Error::Data(format!(
                    "record {}: expected {expect_len} floats, got {}",
                    rec.name,
                    v.len()
                )));
            }
            Ok(v.iter().map(|&x| S::from_f32_c(x)).collect())
        }
        ExportPayload::Packed { .. } => {
            Err(Error::Data(format!("record {}: expected floats, got packed planes", rec.name)))
        }
    }
}

fn import_packed_record<S: Scalar>(
    rec: &ExportRecord,
    expect_rows: usize,
    expect_cols: usize,
) -> Result<Vec<S>> {
    match &rec.payload {
        ExportPayload::Packed { rows, cols, words } => {
            if *rows as usize != expect_rows || *cols as usize != expect_cols {
                return Err(Error::Data(format!(
                    "record {}: expected {expect_rows}x{expect_cols} plane, got {rows}x{cols}",
                    rec.name
                )));
            }
            let m = PackedMatrix::from_packed_words(words.clone(), expect_rows, expect_cols)?;
            let mut out = vec![S::zero(); expect_rows * expect_cols];
            for r in 0..expect_rows {
                m.unpack_row_into(r, &mut out[r * expect_cols..(r + 1) * expect_cols]);
            }
            Ok(out)
        }
        ExportPayload::F32(_) => {
            Err(Error::Data(format!("record {}: expected packed planes, got floats", rec.name)))
        }
    }
}

fn find_record<'a>(records: &'a [ExportRecord], name: &str, layer: &str) -> Result<&'a ExportRecord> {
    records
        .iter()
        .find(|r| r.name == name)
        .ok_or_else(|| Error::Data(format!("{layer}: missing serialized record `{name}`")))
}

fn export_packed<S: Scalar>(name: &str, latents: &[S], rows: usize, cols: usize) -> ExportRecord {
    let m = PackedMatrix::pack_rows(latents, rows, cols).expect("latent plane packs");
    ExportRecord {
        name: name.into(),
        payload: ExportPayload::Packed {
            rows: rows as u32,
            cols: cols as u32,
            words: m.words().to_vec(),
        },
    }
}

fn export_f32<S: Scalar>(name: &str, values: &[S]) -> ExportRecord {
    ExportRecord {
        name: name.into(),
        payload: ExportPayload::F32(values.iter().map(|&v| v.to_f32_c()).collect()),
    }
}

struct BinComplexCache {
    x: PackedComplexMatrix,
    w: PackedComplexMatrix,
    batch: usize,
    h_out: usize,
    w_out: usize,
}

/// Binary complex convolution: sign(latent) weights against +-1 inputs via
/// four popcount GEMMs, plus a full-precision complex bias.
pub struct BinaryComplexConv2d<S: Scalar> {
    geo: ConvGeometry,
    latent_re: Param<S>,
    latent_im: Param<S>,
    bias_re: Param<S>,
    bias_im: Param<S>,
    t_clip: S,
    plan: Option<Im2ColPlan>,
    cache: Option<BinComplexCache>,
}

impl<S: Scalar> BinaryComplexConv2d<S> {
    pub fn new(geo: ConvGeometry, w_re: Vec<S>, w_im: Vec<S>) -> Result<Self> {
        let expect = geo.c_out * geo.patch_len();
        if w_re.len() != expect || w_im.len() != expect {
            return Err(Error::Shape(format!(
                "latent weights need {expect} elements per component, got {} / {}",
                w_re.len(),
                w_im.len()
            )));
        }
        Ok(Self {
            geo,
            latent_re: Param::new(w_re),
            latent_im: Param::new(w_im),
            bias_re: Param::zeros(geo.c_out),
            bias_im: Param::zeros(geo.c_out),
            t_clip: S::one(),
            plan: None,
            cache: None,
        })
    }

    pub fn geometry(&self) -> &ConvGeometry {
        &self.geo
    }

    /// Packed sign planes of the current latent weights (deployment form).
    pub fn packed_weights(&self) -> Result<PackedComplexMatrix> {
        let l = self.geo.patch_len();
        PackedComplexMatrix::new(
            PackedMatrix::pack_rows(&self.latent_re.data, self.geo.c_out, l)?,
            PackedMatrix::pack_rows(&self.latent_im.data, self.geo.c_out, l)?,
        )
    }
}

impl<S: Scalar> Layer<S> for BinaryComplexConv2d<S> {
    fn name(&self) -> String {
        format!("binconv2d {}", self.geo.describe())
    }

    fn descriptor(&self) -> LayerDescriptor {
        LayerDescriptor { tag: "binconv2d".into(), dims: self.geo.dims() }
    }

    fn forward(&mut self, input: Activation<S>, mode: Mode) -> Result<Activation<S>> {
        let z = input.into_complex("binary complex conv")?;
        let (n, c, h, w) = z.re().dims4()?;
        if c != self.geo.c_in {
            return Err(Error::Shape(format!(
                "input has {c} channels, layer expects {}",
                self.geo.c_in
            )));
        }
        check_pm_one(z.re(), "binary complex conv re input")?;
        check_pm_one(z.im(), "binary complex conv im input")?;
        ensure_plan(&mut self.plan, &self.geo, h, w)?;
        let plan = self.plan.as_ref().unwrap();
        let positions = plan.positions();
        let l = plan.patch_len();
        let m = n * positions;

        let patches_re = plan.patches(z.re())?;
        let patches_im = plan.patches(z.im())?;
        let x = PackedComplexMatrix::new(
            PackedMatrix::pack_rows(patches_re.data(), m, l)?,
            PackedMatrix::pack_rows(patches_im.data(), m, l)?,
        )?;
        let wgt = self.packed_weights()?;
        let (cmat, dmat) = binary_complex_gemm(&x, &wgt)?;

        let out_re = gemm_to_nchw(
            &cmat.to_scalars::<S>(),
            n,
            positions,
            self.geo.c_out,
            Some(&self.bias_re.data),
        );
        let out_im = gemm_to_nchw(
            &dmat.to_scalars::<S>(),
            n,
            positions,
            self.geo.c_out,
            Some(&self.bias_im.data),
        );
        let shape = [n, self.geo.c_out, plan.h_out, plan.w_out];
        let (h_out, w_out) = (plan.h_out, plan.w_out);
        self.cache = match mode {
            Mode::Train => Some(BinComplexCache { x, w: wgt, batch: n, h_out, w_out }),
            Mode::Eval => None,
        };
        Ok(Activation::Complex(ComplexTensor::new(
            RealTensor::from_vec(&shape, out_re)?,
            RealTensor::from_vec(&shape, out_im)?,
        )?))
    }

    fn backward(&mut self, grad: Activation<S>) -> Result<Activation<S>> {
        let g = grad.into_complex("binary complex conv grad")?;
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("no cached forward for conv backward".into()))?;
        let plan = self.plan.as_ref().ok_or_else(|| Error::State("missing conv plan".into()))?;
        let (n, c_out) = (cache.batch, self.geo.c_out);
        check_grad_shape(g.shape(), n, c_out, cache.h_out, cache.w_out)?;
        let positions = plan.positions();
        let l = plan.patch_len();
        let m = n * positions;

        let g_c = nchw_to_gemm(g.re().data(), n, c_out, positions);
        let g_d = nchw_to_gemm(g.im().data(), n, c_out, positions);

        accumulate(&mut self.bias_re.grad, &channel_sums(g.re().data(), n, c_out, positions));
        accumulate(&mut self.bias_im.grad, &channel_sums(g.im().data(), n, c_out, positions));

        // Unpack the cached signs; these are exactly the operands of forward.
        let mut xr = vec![S::zero(); m * l];
        let mut xi = vec![S::zero(); m * l];
        for r in 0..m {
            cache.x.re.unpack_row_into(r, &mut xr[r * l..(r + 1) * l]);
            cache.x.im.unpack_row_into(r, &mut xi[r * l..(r + 1) * l]);
        }
        let mut wr = vec![S::zero(); c_out * l];
        let mut wi = vec![S::zero(); c_out * l];
        for r in 0..c_out {
            cache.w.re.unpack_row_into(r, &mut wr[r * l..(r + 1) * l]);
            cache.w.im.unpack_row_into(r, &mut wi[r * l..(r + 1) * l]);
        }

        // dWr = Gc'Xr + Gd'Xi ; dWi = Gd'Xr - Gc'Xi (then the STE mask).
        let mut gw_r = matmul_tn(&g_c, m, c_out, &xr, l);
        let t = matmul_tn(&g_d, m, c_out, &xi, l);
        accumulate(&mut gw_r, &t);
        let mut gw_i = matmul_tn(&g_d, m, c_out, &xr, l);
        let t = matmul_tn(&g_c, m, c_out, &xi, l);
        for (a, b) in gw_i.iter_mut().zip(&t) {
            *a -= *b;
        }
        accumulate_ste(&mut self.latent_re, &gw_r, self.t_clip);
        accumulate_ste(&mut self.latent_im, &gw_i, self.t_clip);

        // dXr = Gc*Wr + Gd*Wi ; dXi = Gd*Wr - Gc*Wi, scattered back to NCHW.
        let mut gx_r = matmul_nn(&g_c, m, c_out, &wr, l);
        let t = matmul_nn(&g_d, m, c_out, &wi, l);
        accumulate(&mut gx_r, &t);
        let mut gx_i = matmul_nn(&g_d, m, c_out, &wr, l);
        let t = matmul_nn(&g_c, m, c_out, &wi, l);
        for (a, b) in gx_i.iter_mut().zip(&t) {
            *a -= *b;
        }
        let grad_re =
            plan.scatter_patches(&RealTensor::from_vec(&[m, l], gx_r)?, n)?;
        let grad_im =
            plan.scatter_patches(&RealTensor::from_vec(&[m, l], gx_i)?, n)?;
        Ok(Activation::Complex(ComplexTensor::new(grad_re, grad_im)?))
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(ParamView<'_, S>)) {
        let tag = self.geo.describe();
        f(ParamView {
            name: format!("binconv[{tag}].latent_re"),
            role: ParamRole::BinaryLatent,
            param: &mut self.latent_re,
        });
        f(ParamView {
            name: format!("binconv[{tag}].latent_im"),
            role: ParamRole::BinaryLatent,
            param: &mut self.latent_im,
        });
        f(ParamView {
            name: format!("binconv[{tag}].bias_re"),
            role: ParamRole::FullPrecision,
            param: &mut self.bias_re,
        });
        f(ParamView {
            name: format!("binconv[{tag}].bias_im"),
            role: ParamRole::FullPrecision,
            param: &mut self.bias_im,
        });
    }

    fn census(&self) -> LayerCensus {
        let latents = self.latent_re.len() + self.latent_im.len();
        LayerCensus {
            fp_params: self.bias_re.len() + self.bias_im.len(),
            latent_params: latents,
            packed_bits: latents,
        }
    }

    fn export_records(&self) -> Vec<ExportRecord> {
        let l = self.geo.patch_len();
        vec![
            export_packed("w_re", &self.latent_re.data, self.geo.c_out, l),
            export_packed("w_im", &self.latent_im.data, self.geo.c_out, l),
            export_f32("bias_re", &self.bias_re.data),
            export_f32("bias_im", &self.bias_im.data),
        ]
    }

    fn import_records(&mut self, records: &[ExportRecord]) -> Result<()> {
        let l = self.geo.patch_len();
        let name = self.name();
        self.latent_re.data =
            import_packed_record(find_record(records, "w_re", &name)?, self.geo.c_out, l)?;
        self.latent_im.data =
            import_packed_record(find_record(records, "w_im", &name)?, self.geo.c_out, l)?;
        self.bias_re.data =
            import_f32_record(find_record(records, "bias_re", &name)?, self.geo.c_out)?;
        self.bias_im.data =
            import_f32_record(find_record(records, "bias_im", &name)?, self.geo.c_out)?;
        Ok(())
    }
}

struct ComplexConvCache<S> {
    patches_re: RealTensor<S>,
    patches_im: RealTensor<S>,
    batch: usize,
    h_out: usize,
    w_out: usize,
}

/// Full-precision complex convolution (the always-FP first layer).
pub struct ComplexConv2d<S: Scalar> {
    geo: ConvGeometry,
    w_re: Param<S>,
    w_im: Param<S>,
    bias_re: Param<S>,
    bias_im: Param<S>,
    plan: Option<Im2ColPlan>,
    cache: Option<ComplexConvCache<S>>,
}

impl<S: Scalar> ComplexConv2d<S> {
    pub fn new(geo: ConvGeometry, w_re: Vec<S>, w_im: Vec<S>) -> Result<Self> {
        let expect = geo.c_out * geo.patch_len();
        if w_re.len() != expect || w_im.len() != expect {
            return Err(Error::Shape(format!(
                "weights need {expect} elements per component, got {} / {}",
                w_re.len(),
                w_im.len()
            )));
        }
        Ok(Self {
            geo,
            w_re: Param::new(w_re),
            w_im: Param::new(w_im),
            bias_re: Param::zeros(geo.c_out),
            bias_im: Param::zeros(geo.c_out),
            plan: None,
            cache: None,
        })
    }
}

impl<S: Scalar> Layer<S> for ComplexConv2d<S> {
    fn name(&self) -> String {
        format!("cconv2d {}", self.geo.describe())
    }

    fn descriptor(&self) -> LayerDescriptor {
        LayerDescriptor { tag: "cconv2d".into(), dims: self.geo.dims() }
    }

    fn forward(&mut self, input: Activation<S>, mode: Mode) -> Result<Activation<S>> {
        let z = input.into_complex("complex conv")?;
        let (n, c, h, w) = z.re().dims4()?;
        if c != self.geo.c_in {
            return Err(Error::Shape(format!(
                "input has {c} channels, layer expects {}",
                self.geo.c_in
            )));
        }
        ensure_plan(&mut self.plan, &self.geo, h, w)?;
        let plan = self.plan.as_ref().unwrap();
        let positions = plan.positions();
        let l = plan.patch_len();
        let m = n * positions;

        let patches_re = plan.patches(z.re())?;
        let patches_im = plan.patches(z.im())?;
        let (re_gemm, im_gemm) = complex_matmul_nt(
            patches_re.data(),
            patches_im.data(),
            m,
            l,
            &self.w_re.data,
            &self.w_im.data,
            self.geo.c_out,
        );
        let out_re = gemm_to_nchw(&re_gemm, n, positions, self.geo.c_out, Some(&self.bias_re.data));
        let out_im = gemm_to_nchw(&im_gemm, n, positions, self.geo.c_out, Some(&self.bias_im.data));
        let shape = [n, self.geo.c_out, plan.h_out, plan.w_out];
        let (h_out, w_out) = (plan.h_out, plan.w_out);
        self.cache = match mode {
            Mode::Train => Some(ComplexConvCache { patches_re, patches_im, batch: n, h_out, w_out }),
            Mode::Eval => None,
        };
        Ok(Activation::Complex(ComplexTensor::new(
            RealTensor::from_vec(&shape, out_re)?,
            RealTensor::from_vec(&shape, out_im)?,
        )?))
    }

    fn backward(&mut self, grad: Activation<S>) -> Result<Activation<S>> {
        let g = grad.into_complex("complex conv grad")?;
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("no cached forward for conv backward".into()))?;
        let plan = self.plan.as_ref().ok_or_else(|| Error::State("missing conv plan".into()))?;
        let (n, c_out) = (cache.batch, self.geo.c_out);
        check_grad_shape(g.shape(), n, c_out, cache.h_out, cache.w_out)?;
        let positions = plan.positions();
        let l = plan.patch_len();
        let m = n * positions;

        let g_c = nchw_to_gemm(g.re().data(), n, c_out, positions);
        let g_d = nchw_to_gemm(g.im().data(), n, c_out, positions);

        accumulate(&mut self.bias_re.grad, &channel_sums(g.re().data(), n, c_out, positions));
        accumulate(&mut self.bias_im.grad, &channel_sums(g.im().data(), n, c_out, positions));

        let xr = cache.patches_re.data();
        let xi = cache.patches_im.data();
        let mut gw_r = matmul_tn(&g_c, m, c_out, xr, l);
        let t = matmul_tn(&g_d, m, c_out, xi, l);
        accumulate(&mut gw_r, &t);
        let mut gw_i = matmul_tn(&g_d, m, c_out, xr, l);
        let t = matmul_tn(&g_c, m, c_out, xi, l);
        for (a, b) in gw_i.iter_mut().zip(&t) {
            *a -= *b;
        }
        accumulate(&mut self.w_re.grad, &gw_r);
        accumulate(&mut self.w_im.grad, &gw_i);

        let mut gx_r = matmul_nn(&g_c, m, c_out, &self.w_re.data, l);
        let t = matmul_nn(&g_d, m, c_out, &self.w_im.data, l);
        accumulate(&mut gx_r, &t);
        let mut gx_i = matmul_nn(&g_d, m, c_out, &self.w_re.data, l);
        let t = matmul_nn(&g_c, m, c_out, &self.w_im.data, l);
        for (a, b) in gx_i.iter_mut().zip(&t) {
            *a -= *b;
        }
        let grad_re = plan.scatter_patches(&RealTensor::from_vec(&[m, l], gx_r)?, n)?;
        let grad_im = plan.scatter_patches(&RealTensor::from_vec(&[m, l], gx_i)?, n)?;
        Ok(Activation::Complex(ComplexTensor::new(grad_re, grad_im)?))
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(ParamView<'_, S>)) {
        let tag = self.geo.describe();
        f(ParamView {
            name: format!("cconv[{tag}].w_re"),
            role: ParamRole::FullPrecision,
            param: &mut self.w_re,
        });
        f(ParamView {
            name: format!("cconv[{tag}].w_im"),
            role: ParamRole::FullPrecision,
            param: &mut self.w_im,
        });
        f(ParamView {
            name: format!("cconv[{tag}].bias_re"),
            role: ParamRole::FullPrecision,
            param: &mut self.bias_re,
        });
        f(ParamView {
            name: format!("cconv[{tag}].bias_im"),
            role: ParamRole::FullPrecision,
            param: &mut self.bias_im,
        });
    }

    fn census(&self) -> LayerCensus {
        LayerCensus {
            fp_params: self.w_re.len()
                + self.w_im.len()
                + self.bias_re.len()
                + self.bias_im.len(),
            latent_params: 0,
            packed_bits: 0,
        }
    }

    fn export_records(&self) -> Vec<ExportRecord> {
        vec![
            export_f32("w_re", &self.w_re.data),
            export_f32("w_im", &self.w_im.data),
            export_f32("bias_re", &self.bias_re.data),
            export_f32("bias_im", &self.bias_im.data),
        ]
    }

    fn import_records(&mut self, records: &[ExportRecord]) -> Result<()> {
        let expect = self.geo.c_out * self.geo.patch_len();
        let name = self.name();
        self.w_re.data = import_f32_record(find_record(records, "w_re", &name)?, expect)?;
        self.w_im.data = import_f32_record(find_record(records, "w_im", &name)?, expect)?;
        self.bias_re.data =
            import_f32_record(find_record(records, "bias_re", &name)?, self.geo.c_out)?;
        self.bias_im.data =
            import_f32_record(find_record(records, "bias_im", &name)?, self.geo.c_out)?;
        Ok(())
    }
}

struct BinRealCache {
    x: PackedMatrix,
    w: PackedMatrix,
    batch: usize,
    h_out: usize,
    w_out: usize,
}

/// Binary real convolution for the plain-BNN baseline path.
pub struct BinaryRealConv2d<S: Scalar> {
    geo: ConvGeometry,
    latent: Param<S>,
    bias: Param<S>,
    t_clip: S,
    plan: Option<Im2ColPlan>,
    cache: Option<BinRealCache>,
}

impl<S: Scalar> BinaryRealConv2d<S> {
    pub fn new(geo: ConvGeometry, w: Vec<S>) -> Result<Self> {
        let expect = geo.c_out * geo.patch_len();
        if w.len() != expect {
            return Err(Error::Shape(format!(
                "latent weights need {expect} elements, got {}",
                w.len()
            )));
        }
        Ok(Self {
            geo,
            latent: Param::new(w),
            bias: Param::zeros(geo.c_out),
            t_clip: S::one(),
            plan: None,
            cache: None,
        })
    }
}

impl<S: Scalar> Layer<S> for BinaryRealConv2d<S> {
    fn name(&self) -> String {
        format!("binrconv2d {}", self.geo.describe())
    }

    fn descriptor(&self) -> LayerDescriptor {
        LayerDescriptor { tag: "binrconv2d".into(), dims: self.geo.dims() }
    }

    fn forward(&mut self, input: Activation<S>, mode: Mode) -> Result<Activation<S>> {
        let x = input.into_real("binary real conv")?;
        let (n, c, h, w) = x.dims4()?;
        if c != self.geo.c_in {
            return Err(Error::Shape(format!(
                "input has {c} channels, layer expects {}",
                self.geo.c_in
            )));
        }
        check_pm_one(&x, "binary real conv input")?;
        ensure_plan(&mut self.plan, &self.geo, h, w)?;
        let plan = self.plan.as_ref().unwrap();
        let positions = plan.positions();
        let l = plan.patch_len();
        let m = n * positions;

        let patches = plan.patches(&x)?;
        let xp = PackedMatrix::pack_rows(patches.data(), m, l)?;
        let wp = PackedMatrix::pack_rows(&self.latent.data, self.geo.c_out, l)?;
        let gemm = binary_gemm(&xp, &wp)?;
        let out =
            gemm_to_nchw(&gemm.to_scalars::<S>(), n, positions, self.geo.c_out, Some(&self.bias.data));
        let shape = [n, self.geo.c_out, plan.h_out, plan.w_out];
        let (h_out, w_out) = (plan.h_out, plan.w_out);
        self.cache = match mode {
            Mode::Train => Some(BinRealCache { x: xp, w: wp, batch: n, h_out, w_out }),
            Mode::Eval => None,
        };
        Ok(Activation::Real(RealTensor::from_vec(&shape, out)?))
    }

    fn backward(&mut self, grad: Activation<S>) -> Result<Activation<S>> {
        let g = grad.into_real("binary real conv grad")?;
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("no cached forward for conv backward".into()))?;
        let plan = self.plan.as_ref().ok_or_else(|| Error::State("missing conv plan".into()))?;
        let (n, c_out) = (cache.batch, self.geo.c_out);
        check_grad_shape(g.shape(), n, c_out, cache.h_out, cache.w_out)?;
        let positions = plan.positions();
        let l = plan.patch_len();
        let m = n * positions;

        let g_mat = nchw_to_gemm(g.data(), n, c_out, positions);
        accumulate(&mut self.bias.grad, &channel_sums(g.data(), n, c_out, positions));

        let mut xs = vec![S::zero(); m * l];
        for r in 0..m {
            cache.x.unpack_row_into(r, &mut xs[r * l..(r + 1) * l]);
        }
        let mut ws = vec![S::zero(); c_out * l];
        for r in 0..c_out {
            cache.w.unpack_row_into(r, &mut ws[r * l..(r + 1) * l]);
        }

        let gw = matmul_tn(&g_mat, m, c_out, &xs, l);
        accumulate_ste(&mut self.latent, &gw, self.t_clip);

        let gx = matmul_nn(&g_mat, m, c_out, &ws, l);
        let grad_x = plan.scatter_patches(&RealTensor::from_vec(&[m, l], gx)?, n)?;
        Ok(Activation::Real(grad_x))
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(ParamView<'_, S>)) {
        let tag = self.geo.describe();
        f(ParamView {
            name: format!("binrconv[{tag}].latent"),
            role: ParamRole::BinaryLatent,
            param: &mut self.latent,
        });
        f(ParamView {
            name: format!("binrconv[{tag}].bias"),
            role: ParamRole::FullPrecision,
            param: &mut self.bias,
        });
    }

    fn census(&self) -> LayerCensus {
        LayerCensus {
            fp_params: self.bias.len(),
            latent_params: self.latent.len(),
            packed_bits: self.latent.len(),
        }
    }

    fn export_records(&self) -> Vec<ExportRecord> {
        vec![
            export_packed("w", &self.latent.data, self.geo.c_out, self.geo.patch_len()),
            export_f32("bias", &self.bias.data),
        ]
    }

    fn import_records(&mut self, records: &[ExportRecord]) -> Result<()> {
        let name = self.name();
        self.latent.data = import_packed_record(
            find_record(records, "w", &name)?,
            self.geo.c_out,
            self.geo.patch_len(),
        )?;
        self.bias.data = import_f32_record(find_record(records, "bias", &name)?, self.geo.c_out)?;
        Ok(())
    }
}

struct RealConvCache<S> {
    patches: RealTensor<S>,
    batch: usize,
    h_out: usize,
    w_out: usize,
}

/// Plain full-precision real convolution (generator branch, baseline first
/// layer).
pub struct RealConv2d<S: Scalar> {
    geo: ConvGeometry,
    w: Param<S>,
    bias: Param<S>,
    plan: Option<Im2ColPlan>,
    cache: Option<RealConvCache<S>>,
}

impl<S: Scalar> RealConv2d<S> {
    pub fn new(geo: ConvGeometry, w: Vec<S>) -> Result<Self> {
        let expect = geo.c_out * geo.patch_len();
        if w.len() != expect {
            return Err(Error::Shape(format!(
                "weights need {expect} elements, got {}",
                w.len()
            )));
        }
        Ok(Self { geo, w: Param::new(w), bias: Param::zeros(geo.c_out), plan: None, cache: None })
    }
}

impl<S: Scalar> Layer<S> for RealConv2d<S> {
    fn name(&self) -> String {
        format!("rconv2d {}", self.geo.describe())
    }

    fn descriptor(&self) -> LayerDescriptor {
        LayerDescriptor { tag: "rconv2d".into(), dims: self.geo.dims() }
    }

    fn forward(&mut self, input: Activation<S>, mode: Mode) -> Result<Activation<S>> {
        let x = input.into_real("real conv")?;
        let (n, c, h, w) = x.dims4()?;
        if c != self.geo.c_in {
            return Err(Error::Shape(format!(
                "input has {c} channels, layer expects {}",
                self.geo.c_in
            )));
        }
        ensure_plan(&mut self.plan, &self.geo, h, w)?;
        let plan = self.plan.as_ref().unwrap();
        let positions = plan.positions();
        let l = plan.patch_len();
        let m = n * positions;

        let patches = plan.patches(&x)?;
        let gemm = matmul_nt(patches.data(), m, l, &self.w.data, self.geo.c_out);
        let out = gemm_to_nchw(&gemm, n, positions, self.geo.c_out, Some(&self.bias.data));
        let shape = [n, self.geo.c_out, plan.h_out, plan.w_out];
        let (h_out, w_out) = (plan.h_out, plan.w_out);
        self.cache = match mode {
            Mode::Train => Some(RealConvCache { patches, batch: n, h_out, w_out }),
            Mode::Eval => None,
        };
        Ok(Activation::Real(RealTensor::from_vec(&shape, out)?))
    }

    fn backward(&mut self, grad: Activation<S>) -> Result<Activation<S>> {
        let g = grad.into_real("real conv grad")?;
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("no cached forward for conv backward".into()))?;
        let plan = self.plan.as_ref().ok_or_else(|| Error::State("missing conv plan".into()))?;
        let (n, c_out) = (cache.batch, self.geo.c_out);
        check_grad_shape(g.shape(), n, c_out, cache.h_out, cache.w_out)?;
        let positions = plan.positions();
        let l = plan.patch_len();
        let m = n * positions;

        let g_mat = nchw_to_gemm(g.data(), n, c_out, positions);
        accumulate(&mut self.bias.grad, &channel_sums(g.data(), n, c_out, positions));

        let gw = matmul_tn(&g_mat, m, c_out, cache.patches.data(), l);
        accumulate(&mut self.w.grad, &gw);

        let gx = matmul_nn(&g_mat, m, c_out, &self.w.data, l);
        let grad_x = plan.scatter_patches(&RealTensor::from_vec(&[m, l], gx)?, n)?;
        Ok(Activation::Real(grad_x))
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(ParamView<'_, S>)) {
        let tag = self.geo.describe();
        f(ParamView {
            name: format!("rconv[{tag}].w"),
            role: ParamRole::FullPrecision,
            param: &mut self.w,
        });
        f(ParamView {
            name: format!("rconv[{tag}].bias"),
            role: ParamRole::FullPrecision,
            param: &mut self.bias,
        });
    }

    fn census(&self) -> LayerCensus {
        LayerCensus {
            fp_params: self.w.len() + self.bias.len(),
            latent_params: 0,
            packed_bits: 0,
        }
    }

    fn export_records(&self) -> Vec<ExportRecord> {
        vec![export_f32("w", &self.w.data), export_f32("bias", &self.bias.data)]
    }

    fn import_records(&mut self, records: &[ExportRecord]) -> Result<()> {
        let name = self.name();
        self.w.data = import_f32_record(
            find_record(records, "w", &name)?,
            self.geo.c_out * self.geo.patch_len(),
        )?;
        self.bias.data = import_f32_record(find_record(records, "bias", &name)?, self.geo.c_out)?;
        Ok(())
    }
}
