//! Batch normalization variants.
//!
//! * [`BatchNorm2d`]: standard per-channel real BN.
//! * [`Cgbn`]: complex Gaussian BN — each component is normalized separately
//!   to mean 0 and variance 1/2 (the standard complex normal has variance 1/2
//!   per component), then a learnable complex affine gamma*z + beta follows.
//! * [`Cbn`]: covariance-whitening complex BN — the centered (re, im) pair is
//!   multiplied by the closed-form inverse square root of its per-channel 2x2
//!   covariance, scaled so the whitened covariance is (1/2)*I, followed by a
//!   symmetric 2x2 affine and a complex shift.
//!
//! All variances are population (biased); running statistics use momentum
//! updates and drive evaluation mode. Batch statistics are computed per
//! channel over batch and spatial dims with fixed-order reductions.

use crate::error::{Error, Result};
use crate::layers::{
    Activation, BufferView, ExportPayload, ExportRecord, Layer, LayerCensus, LayerDescriptor,
    Mode, Param, ParamRole, ParamView,
};
use crate::scalar::Scalar;
use crate::tensor::{ComplexTensor, RealTensor};

/// Batch/channel/spatial decomposition of a 4-D or 2-D activation.
#[derive(Clone, Copy)]
struct ChannelLayout {
    n: usize,
    channels: usize,
    plane: usize,
}

impl ChannelLayout {
    fn of(shape: &[usize], channels: usize) -> Result<Self> {
        let (n, c, plane) = match shape {
            [n, c, h, w] => (*n, *c, h * w),
            [n, c] => (*n, *c, 1),
            _ => {
                return Err(Error::Shape(format!(
                    "batch norm requires 4-D or 2-D input, got {shape:?}"
                )))
            }
        };
        if c != channels {
            return Err(Error::Shape(format!(
                "input has {c} channels, layer expects {channels}"
            )));
        }
        Ok(Self { n, channels: c, plane })
    }

    #[inline]
    fn idx(&self, s: usize, ch: usize, p: usize) -> usize {
        (s * self.channels + ch) * self.plane + p
    }

    /// Elements per channel.
    fn m(&self) -> usize {
        self.n * self.plane
    }
}

fn require_batch(layout: &ChannelLayout) -> Result<()> {
    if layout.n < 2 {
        return Err(Error::Config(format!(
            "training-mode batch norm needs batch >= 2, got {}",
            layout.n
        )));
    }
    Ok(())
}

/// Per-channel mean over batch and spatial dims, fixed iteration order.
fn channel_mean<S: Scalar>(x: &[S], l: &ChannelLayout, ch: usize) -> S {
    let mut acc = S::zero();
    for s in 0..l.n {
        for p in 0..l.plane {
            acc += x[l.idx(s, ch, p)];
        }
    }
    acc / S::from_usize(l.m()).unwrap()
}

/// Per-channel population variance given the mean.
fn channel_var<S: Scalar>(x: &[S], l: &ChannelLayout, ch: usize, mean: S) -> S {
    let mut acc = S::zero();
    for s in 0..l.n {
        for p in 0..l.plane {
            let d = x[l.idx(s, ch, p)] - mean;
            acc += d * d;
        }
    }
    acc / S::from_usize(l.m()).unwrap()
}

fn momentum_update<S: Scalar>(running: &mut [S], batch: &[S], momentum: S) {
    for (r, &b) in running.iter_mut().zip(batch) {
        *r = (S::one() - momentum) * *r + momentum * b;
    }
}

fn export_f32<S: Scalar>(name: &str, values: &[S]) -> ExportRecord {
    ExportRecord {
        name: name.into(),
        payload: ExportPayload::F32(values.iter().map(|&v| v.to_f32_c()).collect()),
    }
}

fn import_f32<S: Scalar>(records: &[ExportRecord], name: &str, len: usize) -> Result<Vec<S>> {
    let rec = records
        .iter()
        .find(|r| r.name == name)
        .ok_or_else(|| Error::Data(format!("missing serialized record `{name}`")))?;
    match &rec.payload {
        ExportPayload::F32(v) if v.len() == len => {
            Ok(v.iter().map(|&x| S::from_f32_c(x)).collect())
        }
        ExportPayload::F32(v) => Err(Error::Data(format!(
            "record {name}: expected {len} floats, got {}",
            v.len()
        ))),
        ExportPayload::Packed { .. } => {
            Err(Error::Data(format!("record {name}: expected floats, got packed planes")))
        }
    }
}

// ---------------------------------------------------------------------------
// Real batch normalization
// ---------------------------------------------------------------------------

struct BnCache<S> {
    xhat: Vec<S>,
    inv_std: Vec<S>,
    layout: ChannelLayout,
}

/// Standard per-channel batch normalization over real activations.
pub struct BatchNorm2d<S: Scalar> {
    channels: usize,
    gamma: Param<S>,
    beta: Param<S>,
    running_mean: Vec<S>,
    running_var: Vec<S>,
    eps: S,
    momentum: S,
    cache: Option<BnCache<S>>,
}

impl<S: Scalar> BatchNorm2d<S> {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: Param::new(vec![S::one(); channels]),
            beta: Param::zeros(channels),
            running_mean: vec![S::zero(); channels],
            running_var: vec![S::one(); channels],
            eps: S::from_f64_c(1e-5),
            momentum: S::from_f64_c(0.1),
            cache: None,
        }
    }
}

impl<S: Scalar> Layer<S> for BatchNorm2d<S> {
    fn name(&self) -> String {
        format!("batchnorm2d c{}", self.channels)
    }

    fn descriptor(&self) -> LayerDescriptor {
        LayerDescriptor { tag: "bn".into(), dims: vec![self.channels as u32] }
    }

    fn forward(&mut self, input: Activation<S>, mode: Mode) -> Result<Activation<S>> {
        let x = input.into_real("batch norm")?;
        let layout = ChannelLayout::of(x.shape(), self.channels)?;
        let mut out = vec![S::zero(); x.len()];
        match mode {
            Mode::Train => {
                require_batch(&layout)?;
                let mut xhat = vec![S::zero(); x.len()];
                let mut inv_std = vec![S::zero(); self.channels];
                let mut means = vec![S::zero(); self.channels];
                let mut vars = vec![S::zero(); self.channels];
                for ch in 0..self.channels {
                    let mu = channel_mean(x.data(), &layout, ch);
                    let var = channel_var(x.data(), &layout, ch, mu);
                    let s = (var + self.eps).sqrt().recip();
                    means[ch] = mu;
                    vars[ch] = var;
                    inv_std[ch] = s;
                    for smp in 0..layout.n {
                        for p in 0..layout.plane {
                            let i = layout.idx(smp, ch, p);
                            let h = (x.data()[i] - mu) * s;
                            xhat[i] = h;
                            out[i] = self.gamma.data[ch] * h + self.beta.data[ch];
                        }
                    }
                }
                momentum_update(&mut self.running_mean, &means, self.momentum);
                momentum_update(&mut self.running_var, &vars, self.momentum);
                self.cache = Some(BnCache { xhat, inv_std, layout });
            }
            Mode::Eval => {
                for ch in 0..self.channels {
                    let s = (self.running_var[ch] + self.eps).sqrt().recip();
                    for smp in 0..layout.n {
                        for p in 0..layout.plane {
                            let i = layout.idx(smp, ch, p);
                            out[i] = self.gamma.data[ch] * (x.data()[i] - self.running_mean[ch]) * s
                                + self.beta.data[ch];
                        }
                    }
                }
                self.cache = None;
            }
        }
        Ok(Activation::Real(RealTensor::from_vec(x.shape(), out)?))
    }

    fn backward(&mut self, grad: Activation<S>) -> Result<Activation<S>> {
        let g = grad.into_real("batch norm grad")?;
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("no cached forward for batch norm backward".into()))?;
        let layout = cache.layout;
        if g.len() != cache.xhat.len() {
            return Err(Error::Shape(format!(
                "gradient has {} elements, cached forward {}",
                g.len(),
                cache.xhat.len()
            )));
        }
        let m = S::from_usize(layout.m()).unwrap();
        let mut out = vec![S::zero(); g.len()];
        for ch in 0..self.channels {
            let mut sum_g = S::zero();
            let mut sum_gx = S::zero();
            for smp in 0..layout.n {
                for p in 0..layout.plane {
                    let i = layout.idx(smp, ch, p);
                    sum_g += g.data()[i];
                    sum_gx += g.data()[i] * cache.xhat[i];
                }
            }
            self.beta.grad[ch] += sum_g;
            self.gamma.grad[ch] += sum_gx;
            let mean_g = sum_g / m;
            let mean_gx = sum_gx / m;
            let scale = self.gamma.data[ch] * cache.inv_std[ch];
            for smp in 0..layout.n {
                for p in 0..layout.plane {
                    let i = layout.idx(smp, ch, p);
                    out[i] = scale * (g.data()[i] - mean_g - cache.xhat[i] * mean_gx);
                }
            }
        }
        Ok(Activation::Real(RealTensor::from_vec(g.shape(), out)?))
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(ParamView<'_, S>)) {
        let c = self.channels;
        f(ParamView {
            name: format!("bn[c{c}].gamma"),
            role: ParamRole::FullPrecision,
            param: &mut self.gamma,
        });
        f(ParamView {
            name: format!("bn[c{c}].beta"),
            role: ParamRole::FullPrecision,
            param: &mut self.beta,
        });
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(BufferView<'_, S>)) {
        let c = self.channels;
        f(BufferView { name: format!("bn[c{c}].running_mean"), values: &mut self.running_mean });
        f(BufferView { name: format!("bn[c{c}].running_var"), values: &mut self.running_var });
    }

    fn census(&self) -> LayerCensus {
        LayerCensus { fp_params: 2 * self.channels, latent_params: 0, packed_bits: 0 }
    }

    fn export_records(&self) -> Vec<ExportRecord> {
        vec![
            export_f32("gamma", &self.gamma.data),
            export_f32("beta", &self.beta.data),
            export_f32("running_mean", &self.running_mean),
            export_f32("running_var", &self.running_var),
        ]
    }

    fn import_records(&mut self, records: &[ExportRecord]) -> Result<()> {
        let c = self.channels;
        self.gamma.data = import_f32(records, "gamma", c)?;
        self.beta.data = import_f32(records, "beta", c)?;
        self.running_mean = import_f32(records, "running_mean", c)?;
        self.running_var = import_f32(records, "running_var", c)?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Complex Gaussian batch normalization
// ---------------------------------------------------------------------------

struct CgbnCache<S> {
    zt_re: Vec<S>,
    zt_im: Vec<S>,
    s_re: Vec<S>,
    s_im: Vec<S>,
    layout: ChannelLayout,
}

/// Complex Gaussian BN: per-component normalization to variance 1/2 followed
/// by a per-channel complex affine.
pub struct Cgbn<S: Scalar> {
    channels: usize,
    gamma_re: Param<S>,
    gamma_im: Param<S>,
    beta_re: Param<S>,
    beta_im: Param<S>,
    run_mean_re: Vec<S>,
    run_mean_im: Vec<S>,
    run_var_re: Vec<S>,
    run_var_im: Vec<S>,
    eps: S,
    momentum: S,
    cache: Option<CgbnCache<S>>,
}

impl<S: Scalar> Cgbn<S> {
    pub fn new(channels: usize) -> Self {
        let inv_sqrt2 = S::from_f64_c(std::f64::consts::FRAC_1_SQRT_2);
        Self {
            channels,
            gamma_re: Param::new(vec![inv_sqrt2; channels]),
            gamma_im: Param::new(vec![inv_sqrt2; channels]),
            beta_re: Param::zeros(channels),
            beta_im: Param::zeros(channels),
            run_mean_re: vec![S::zero(); channels],
            run_mean_im: vec![S::zero(); channels],
            run_var_re: vec![S::from_f64_c(0.5); channels],
            run_var_im: vec![S::from_f64_c(0.5); channels],
            eps: S::from_f64_c(1e-5),
            momentum: S::from_f64_c(0.1),
            cache: None,
        }
    }

    /// Normalizes one component plane given (mean, var): (z - mu)/sqrt(2 var + eps).
    fn normalize_component(
        x: &[S],
        out: &mut [S],
        layout: &ChannelLayout,
        ch: usize,
        mu: S,
        var: S,
        eps: S,
    ) -> S {
        let two = S::from_f64_c(2.0);
        let s = (two * var + eps).sqrt().recip();
        for smp in 0..layout.n {
            for p in 0..layout.plane {
                let i = layout.idx(smp, ch, p);
                out[i] = (x[i] - mu) * s;
            }
        }
        s
    }
}

impl<S: Scalar> Layer<S> for Cgbn<S> {
    fn name(&self) -> String {
        format!("cgbn c{}", self.channels)
    }

    fn descriptor(&self) -> LayerDescriptor {
        LayerDescriptor { tag: "cgbn".into(), dims: vec![self.channels as u32] }
    }

    fn forward(&mut self, input: Activation<S>, mode: Mode) -> Result<Activation<S>> {
        let z = input.into_complex("cgbn")?;
        let layout = ChannelLayout::of(z.shape(), self.channels)?;
        let mut zt_re = vec![S::zero(); z.len()];
        let mut zt_im = vec![S::zero(); z.len()];
        let mut s_re = vec![S::zero(); self.channels];
        let mut s_im = vec![S::zero(); self.channels];
        match mode {
            Mode::Train => {
                require_batch(&layout)?;
                let mut means_re = vec![S::zero(); self.channels];
                let mut means_im = vec![S::zero(); self.channels];
                let mut vars_re = vec![S::zero(); self.channels];
                let mut vars_im = vec![S::zero(); self.channels];
                for ch in 0..self.channels {
                    let mu_r = channel_mean(z.re().data(), &layout, ch);
                    let var_r = channel_var(z.re().data(), &layout, ch, mu_r);
                    let mu_i = channel_mean(z.im().data(), &layout, ch);
                    let var_i = channel_var(z.im().data(), &layout, ch, mu_i);
                    means_re[ch] = mu_r;
                    means_im[ch] = mu_i;
                    vars_re[ch] = var_r;
                    vars_im[ch] = var_i;
                    s_re[ch] = Self::normalize_component(
                        z.re().data(),
                        &mut zt_re,
                        &layout,
                        ch,
                        mu_r,
                        var_r,
                        self.eps,
                    );
                    s_im[ch] = Self::normalize_component(
                        z.im().data(),
                        &mut zt_im,
                        &layout,
                        ch,
                        mu_i,
                        var_i,
                        self.eps,
                    );
                }
                momentum_update(&mut self.run_mean_re, &means_re, self.momentum);
                momentum_update(&mut self.run_mean_im, &means_im, self.momentum);
                momentum_update(&mut self.run_var_re, &vars_re, self.momentum);
                momentum_update(&mut self.run_var_im, &vars_im, self.momentum);
            }
            Mode::Eval => {
                for ch in 0..self.channels {
                    s_re[ch] = Self::normalize_component(
                        z.re().data(),
                        &mut zt_re,
                        &layout,
                        ch,
                        self.run_mean_re[ch],
                        self.run_var_re[ch],
                        self.eps,
                    );
                    s_im[ch] = Self::normalize_component(
                        z.im().data(),
                        &mut zt_im,
                        &layout,
                        ch,
                        self.run_mean_im[ch],
                        self.run_var_im[ch],
                        self.eps,
                    );
                }
            }
        }
        // Affine: y = gamma * zt + beta, complex per channel.
        let mut out_re = vec![S::zero(); z.len()];
        let mut out_im = vec![S::zero(); z.len()];
        for ch in 0..self.channels {
            let (gr, gi) = (self.gamma_re.data[ch], self.gamma_im.data[ch]);
            let (br, bi) = (self.beta_re.data[ch], self.beta_im.data[ch]);
            for smp in 0..layout.n {
                for p in 0..layout.plane {
                    let i = layout.idx(smp, ch, p);
                    let (zr, zi) = (zt_re[i], zt_im[i]);
                    out_re[i] = gr * zr - gi * zi + br;
                    out_im[i] = gr * zi + gi * zr + bi;
                }
            }
        }
        self.cache = match mode {
            Mode::Train => Some(CgbnCache { zt_re, zt_im, s_re, s_im, layout }),
            Mode::Eval => None,
        };
        Ok(Activation::Complex(ComplexTensor::new(
            RealTensor::from_vec(z.shape(), out_re)?,
            RealTensor::from_vec(z.shape(), out_im)?,
        )?))
    }

    fn backward(&mut self, grad: Activation<S>) -> Result<Activation<S>> {
        let g = grad.into_complex("cgbn grad")?;
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("no cached forward for cgbn backward".into()))?;
        let layout = cache.layout;
        if g.len() != cache.zt_re.len() {
            return Err(Error::Shape(format!(
                "gradient has {} elements, cached forward {}",
                g.len(),
                cache.zt_re.len()
            )));
        }
        let m = S::from_usize(layout.m()).unwrap();
        let two = S::from_f64_c(2.0);
        let mut out_re = vec![S::zero(); g.len()];
        let mut out_im = vec![S::zero(); g.len()];
        for ch in 0..self.channels {
            let (gr, gi) = (self.gamma_re.data[ch], self.gamma_im.data[ch]);
            // Affine-stage reductions and the gradient w.r.t. zt = conj(gamma)*g.
            let mut d_gamma_re = S::zero();
            let mut d_gamma_im = S::zero();
            let mut d_beta_re = S::zero();
            let mut d_beta_im = S::zero();
            let mut sum_gt_re = S::zero();
            let mut sum_gt_im = S::zero();
            let mut sum_gtz_re = S::zero();
            let mut sum_gtz_im = S::zero();
            for smp in 0..layout.n {
                for p in 0..layout.plane {
                    let i = layout.idx(smp, ch, p);
                    let (vr, vi) = (g.re().data()[i], g.im().data()[i]);
                    let (zr, zi) = (cache.zt_re[i], cache.zt_im[i]);
                    d_gamma_re += vr * zr + vi * zi;
                    d_gamma_im += vi * zr - vr * zi;
                    d_beta_re += vr;
                    d_beta_im += vi;
                    let gt_r = gr * vr + gi * vi;
                    let gt_i = gr * vi - gi * vr;
                    sum_gt_re += gt_r;
                    sum_gt_im += gt_i;
                    sum_gtz_re += gt_r * zr;
                    sum_gtz_im += gt_i * zi;
                }
            }
            self.gamma_re.grad[ch] += d_gamma_re;
            self.gamma_im.grad[ch] += d_gamma_im;
            self.beta_re.grad[ch] += d_beta_re;
            self.beta_im.grad[ch] += d_beta_im;
            let mean_gt_re = sum_gt_re / m;
            let mean_gt_im = sum_gt_im / m;
            let mean_gtz_re = sum_gtz_re / m;
            let mean_gtz_im = sum_gtz_im / m;
            // dz = s * (gt - mean(gt) - 2 zt mean(gt*zt)), per component.
            for smp in 0..layout.n {
                for p in 0..layout.plane {
                    let i = layout.idx(smp, ch, p);
                    let (vr, vi) = (g.re().data()[i], g.im().data()[i]);
                    let gt_r = gr * vr + gi * vi;
                    let gt_i = gr * vi - gi * vr;
                    out_re[i] = cache.s_re[ch]
                        * (gt_r - mean_gt_re - two * cache.zt_re[i] * mean_gtz_re);
                    out_im[i] = cache.s_im[ch]
                        * (gt_i - mean_gt_im - two * cache.zt_im[i] * mean_gtz_im);
                }
            }
        }
        let shape = g.shape().to_vec();
        Ok(Activation::Complex(ComplexTensor::new(
            RealTensor::from_vec(&shape, out_re)?,
            RealTensor::from_vec(&shape, out_im)?,
        )?))
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(ParamView<'_, S>)) {
        let c = self.channels;
        f(ParamView {
            name: format!("cgbn[c{c}].gamma_re"),
            role: ParamRole::FullPrecision,
            param: &mut self.gamma_re,
        });
        f(ParamView {
            name: format!("cgbn[c{c}].gamma_im"),
            role: ParamRole::FullPrecision,
            param: &mut self.gamma_im,
        });
        f(ParamView {
            name: format!("cgbn[c{c}].beta_re"),
            role: ParamRole::FullPrecision,
            param: &mut self.beta_re,
        });
        f(ParamView {
            name: format!("cgbn[c{c}].beta_im"),
            role: ParamRole::FullPrecision,
            param: &mut self.beta_im,
        });
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(BufferView<'_, S>)) {
        let c = self.channels;
        f(BufferView { name: format!("cgbn[c{c}].run_mean_re"), values: &mut self.run_mean_re });
        f(BufferView { name: format!("cgbn[c{c}].run_mean_im"), values: &mut self.run_mean_im });
        f(BufferView { name: format!("cgbn[c{c}].run_var_re"), values: &mut self.run_var_re });
        f(BufferView { name: format!("cgbn[c{c}].run_var_im"), values: &mut self.run_var_im });
    }

    fn census(&self) -> LayerCensus {
        LayerCensus { fp_params: 4 * self.channels, latent_params: 0, packed_bits: 0 }
    }

    fn export_records(&self) -> Vec<ExportRecord> {
        vec![
            export_f32("gamma_re", &self.gamma_re.data),
            export_f32("gamma_im", &self.gamma_im.data),
            export_f32("beta_re", &self.beta_re.data),
            export_f32("beta_im", &self.beta_im.data),
            export_f32("run_mean_re", &self.run_mean_re),
            export_f32("run_mean_im", &self.run_mean_im),
            export_f32("run_var_re", &self.run_var_re),
            export_f32("run_var_im", &self.run_var_im),
        ]
    }

    fn import_records(&mut self, records: &[ExportRecord]) -> Result<()> {
        let c = self.channels;
        self.gamma_re.data = import_f32(records, "gamma_re", c)?;
        self.gamma_im.data = import_f32(records, "gamma_im", c)?;
        self.beta_re.data = import_f32(records, "beta_re", c)?;
        self.beta_im.data = import_f32(records, "beta_im", c)?;
        self.run_mean_re = import_f32(records, "run_mean_re", c)?;
        self.run_mean_im = import_f32(records, "run_mean_im", c)?;
        self.run_var_re = import_f32(records, "run_var_re", c)?;
        self.run_var_im = import_f32(records, "run_var_im", c)?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Covariance-whitening complex batch normalization
// ---------------------------------------------------------------------------

/// Closed-form inverse square root of the symmetric PSD 2x2 matrix
/// [[a, b], [b, d]]: with s = sqrt(det) and t = sqrt(trace + 2s),
/// V^{-1/2} = [[d+s, -b], [-b, a+s]] / (s*t). Returns (m_rr, m_ri, m_ii).
pub fn inv_sqrt_2x2<S: Scalar>(a: S, b: S, d: S) -> (S, S, S) {
    let s = (a * d - b * b).sqrt();
    let t = (a + d + S::from_f64_c(2.0) * s).sqrt();
    let k = (s * t).recip();
    (k * (d + s), -k * b, k * (a + s))
}

struct CbnChannelStats<S> {
    a: S,
    b: S,
    d: S,
    s: S,
    t: S,
    m_rr: S,
    m_ri: S,
    m_ii: S,
}

struct CbnCache<S> {
    c_re: Vec<S>,
    c_im: Vec<S>,
    h_re: Vec<S>,
    h_im: Vec<S>,
    stats: Vec<CbnChannelStats<S>>,
    layout: ChannelLayout,
}

/// Covariance-whitening complex BN with a symmetric 2x2 affine.
pub struct Cbn<S: Scalar> {
    channels: usize,
    gamma_rr: Param<S>,
    gamma_ri: Param<S>,
    gamma_ii: Param<S>,
    beta_re: Param<S>,
    beta_im: Param<S>,
    run_mean_re: Vec<S>,
    run_mean_im: Vec<S>,
    run_v_rr: Vec<S>,
    run_v_ri: Vec<S>,
    run_v_ii: Vec<S>,
    eps: S,
    momentum: S,
    cache: Option<CbnCache<S>>,
}

impl<S: Scalar> Cbn<S> {
    pub fn new(channels: usize) -> Self {
        let inv_sqrt2 = S::from_f64_c(std::f64::consts::FRAC_1_SQRT_2);
        let half = S::from_f64_c(0.5);
        Self {
            channels,
            gamma_rr: Param::new(vec![inv_sqrt2; channels]),
            gamma_ri: Param::zeros(channels),
            gamma_ii: Param::new(vec![inv_sqrt2; channels]),
            beta_re: Param::zeros(channels),
            beta_im: Param::zeros(channels),
            run_mean_re: vec![S::zero(); channels],
            run_mean_im: vec![S::zero(); channels],
            run_v_rr: vec![half; channels],
            run_v_ri: vec![S::zero(); channels],
            run_v_ii: vec![half; channels],
            eps: S::from_f64_c(1e-5),
            momentum: S::from_f64_c(0.1),
            cache: None,
        }
    }

    /// Whitening matrix scaled to target covariance (1/2)*I: V^{-1/2}/sqrt(2).
    fn whitening(a: S, b: S, d: S) -> (S, S, S, S, S) {
        let s = (a * d - b * b).sqrt();
        let t = (a + d + S::from_f64_c(2.0) * s).sqrt();
        let inv_sqrt2 = S::from_f64_c(std::f64::consts::FRAC_1_SQRT_2);
        let k = inv_sqrt2 * (s * t).recip();
        (k * (d + s), -k * b, k * (a + s), s, t)
    }
}

impl<S: Scalar> Layer<S> for Cbn<S> {
    fn name(&self) -> String {
        format!("cbn c{}", self.channels)
    }

    fn descriptor(&self) -> LayerDescriptor {
        LayerDescriptor { tag: "cbn".into(), dims: vec![self.channels as u32] }
    }

    fn forward(&mut self, input: Activation<S>, mode: Mode) -> Result<Activation<S>> {
        let z = input.into_complex("cbn")?;
        let layout = ChannelLayout::of(z.shape(), self.channels)?;
        let total = z.len();
        let m = S::from_usize(layout.m()).unwrap();
        let mut c_re = vec![S::zero(); total];
        let mut c_im = vec![S::zero(); total];
        let mut h_re = vec![S::zero(); total];
        let mut h_im = vec![S::zero(); total];
        let mut stats = Vec::with_capacity(self.channels);

        match mode {
            Mode::Train => {
                require_batch(&layout)?;
                let mut means_re = vec![S::zero(); self.channels];
                let mut means_im = vec![S::zero(); self.channels];
                let mut vs_rr = vec![S::zero(); self.channels];
                let mut vs_ri = vec![S::zero(); self.channels];
                let mut vs_ii = vec![S::zero(); self.channels];
                for ch in 0..self.channels {
                    let mu_r = channel_mean(z.re().data(), &layout, ch);
                    let mu_i = channel_mean(z.im().data(), &layout, ch);
                    let mut v_rr = S::zero();
                    let mut v_ri = S::zero();
                    let mut v_ii = S::zero();
                    for smp in 0..layout.n {
                        for p in 0..layout.plane {
                            let i = layout.idx(smp, ch, p);
                            let cr = z.re().data()[i] - mu_r;
                            let ci = z.im().data()[i] - mu_i;
                            c_re[i] = cr;
                            c_im[i] = ci;
                            v_rr += cr * cr;
                            v_ri += cr * ci;
                            v_ii += ci * ci;
                        }
                    }
                    v_rr /= m;
                    v_ri /= m;
                    v_ii /= m;
                    means_re[ch] = mu_r;
                    means_im[ch] = mu_i;
                    vs_rr[ch] = v_rr;
                    vs_ri[ch] = v_ri;
                    vs_ii[ch] = v_ii;
                    let a = v_rr + self.eps;
                    let b = v_ri;
                    let d = v_ii + self.eps;
                    let (m_rr, m_ri, m_ii, s, t) = Self::whitening(a, b, d);
                    for smp in 0..layout.n {
                        for p in 0..layout.plane {
                            let i = layout.idx(smp, ch, p);
                            h_re[i] = m_rr * c_re[i] + m_ri * c_im[i];
                            h_im[i] = m_ri * c_re[i] + m_ii * c_im[i];
                        }
                    }
                    stats.push(CbnChannelStats { a, b, d, s, t, m_rr, m_ri, m_ii });
                }
                momentum_update(&mut self.run_mean_re, &means_re, self.momentum);
                momentum_update(&mut self.run_mean_im, &means_im, self.momentum);
                momentum_update(&mut self.run_v_rr, &vs_rr, self.momentum);
                momentum_update(&mut self.run_v_ri, &vs_ri, self.momentum);
                momentum_update(&mut self.run_v_ii, &vs_ii, self.momentum);
            }
            Mode::Eval => {
                for ch in 0..self.channels {
                    let a = self.run_v_rr[ch] + self.eps;
                    let b = self.run_v_ri[ch];
                    let d = self.run_v_ii[ch] + self.eps;
                    let (m_rr, m_ri, m_ii, _, _) = Self::whitening(a, b, d);
                    for smp in 0..layout.n {
                        for p in 0..layout.plane {
                            let i = layout.idx(smp, ch, p);
                            let cr = z.re().data()[i] - self.run_mean_re[ch];
                            let ci = z.im().data()[i] - self.run_mean_im[ch];
                            h_re[i] = m_rr * cr + m_ri * ci;
                            h_im[i] = m_ri * cr + m_ii * ci;
                        }
                    }
                }
            }
        }

        let mut out_re = vec![S::zero(); total];
        let mut out_im = vec![S::zero(); total];
        for ch in 0..self.channels {
            let (grr, gri, gii) =
                (self.gamma_rr.data[ch], self.gamma_ri.data[ch], self.gamma_ii.data[ch]);
            let (br, bi) = (self.beta_re.data[ch], self.beta_im.data[ch]);
            for smp in 0..layout.n {
                for p in 0..layout.plane {
                    let i = layout.idx(smp, ch, p);
                    out_re[i] = grr * h_re[i] + gri * h_im[i] + br;
                    out_im[i] = gri * h_re[i] + gii * h_im[i] + bi;
                }
            }
        }
        self.cache = match mode {
            Mode::Train => Some(CbnCache { c_re, c_im, h_re, h_im, stats, layout }),
            Mode::Eval => None,
        };
        Ok(Activation::Complex(ComplexTensor::new(
            RealTensor::from_vec(z.shape(), out_re)?,
            RealTensor::from_vec(z.shape(), out_im)?,
        )?))
    }

    fn backward(&mut self, grad: Activation<S>) -> Result<Activation<S>> {
        let g = grad.into_complex("cbn grad")?;
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("no cached forward for cbn backward".into()))?;
        let layout = cache.layout;
        if g.len() != cache.h_re.len() {
            return Err(Error::Shape(format!(
                "gradient has {} elements, cached forward {}",
                g.len(),
                cache.h_re.len()
            )));
        }
        let m = S::from_usize(layout.m()).unwrap();
        let two = S::from_f64_c(2.0);
        let mut out_re = vec![S::zero(); g.len()];
        let mut out_im = vec![S::zero(); g.len()];
        for ch in 0..self.channels {
            let st = &cache.stats[ch];
            let (grr, gri, gii) =
                (self.gamma_rr.data[ch], self.gamma_ri.data[ch], self.gamma_ii.data[ch]);

            // Affine stage: parameter grads and gh = Gamma * g (symmetric).
            let mut d_grr = S::zero();
            let mut d_gri = S::zero();
            let mut d_gii = S::zero();
            let mut d_br = S::zero();
            let mut d_bi = S::zero();
            for smp in 0..layout.n {
                for p in 0..layout.plane {
                    let i = layout.idx(smp, ch, p);
                    let (vr, vi) = (g.re().data()[i], g.im().data()[i]);
                    d_grr += vr * cache.h_re[i];
                    d_gri += vr * cache.h_im[i] + vi * cache.h_re[i];
                    d_gii += vi * cache.h_im[i];
                    d_br += vr;
                    d_bi += vi;
                }
            }
            self.gamma_rr.grad[ch] += d_grr;
            self.gamma_ri.grad[ch] += d_gri;
            self.gamma_ii.grad[ch] += d_gii;
            self.beta_re.grad[ch] += d_br;
            self.beta_im.grad[ch] += d_bi;

            // Partials of the whitening matrix entries w.r.t. (a, b, d).
            let (a, b, d, s, t) = (st.a, st.b, st.d, st.s, st.t);
            let kp = S::from_f64_c(std::f64::consts::FRAC_1_SQRT_2) * (s * t).recip();
            let ds_da = d / (two * s);
            let ds_dd = a / (two * s);
            let ds_db = -(b / s);
            let dt_da = (S::one() + two * ds_da) / (two * t);
            let dt_dd = (S::one() + two * ds_dd) / (two * t);
            let dt_db = (two * ds_db) / (two * t);
            let dk = |ds: S, dt: S| -kp * (ds / s + dt / t);
            let dk_da = dk(ds_da, dt_da);
            let dk_db = dk(ds_db, dt_db);
            let dk_dd = dk(ds_dd, dt_dd);
            // dM/da
            let ma_rr = dk_da * (d + s) + kp * ds_da;
            let ma_ri = -(dk_da * b);
            let ma_ii = dk_da * (a + s) + kp * (S::one() + ds_da);
            // dM/db
            let mb_rr = dk_db * (d + s) + kp * ds_db;
            let mb_ri = -(dk_db * b) - kp;
            let mb_ii = dk_db * (a + s) + kp * ds_db;
            // dM/dd
            let md_rr = dk_dd * (d + s) + kp * (S::one() + ds_dd);
            let md_ri = -(dk_dd * b);
            let md_ii = dk_dd * (a + s) + kp * ds_dd;

            // Reductions: gh per element, plus the covariance-path scalars
            // P = sum gh' (dM/da) c, Q (db), R (dd), and the mean of M gh.
            let mut p_acc = S::zero();
            let mut q_acc = S::zero();
            let mut r_acc = S::zero();
            let mut mean_dc_re = S::zero();
            let mut mean_dc_im = S::zero();
            for smp in 0..layout.n {
                for pp in 0..layout.plane {
                    let i = layout.idx(smp, ch, pp);
                    let (vr, vi) = (g.re().data()[i], g.im().data()[i]);
                    let gh_r = grr * vr + gri * vi;
                    let gh_i = gri * vr + gii * vi;
                    let (cr, ci) = (cache.c_re[i], cache.c_im[i]);
                    p_acc += gh_r * (ma_rr * cr + ma_ri * ci) + gh_i * (ma_ri * cr + ma_ii * ci);
                    q_acc += gh_r * (mb_rr * cr + mb_ri * ci) + gh_i * (mb_ri * cr + mb_ii * ci);
                    r_acc += gh_r * (md_rr * cr + md_ri * ci) + gh_i * (md_ri * cr + md_ii * ci);
                }
            }

            // dc_k = M gh_k + (2P c_r + Q c_i)/m e_r + (Q c_r + 2R c_i)/m e_i,
            // then subtract the channel mean (the mu path).
            for smp in 0..layout.n {
                for pp in 0..layout.plane {
                    let i = layout.idx(smp, ch, pp);
                    let (vr, vi) = (g.re().data()[i], g.im().data()[i]);
                    let gh_r = grr * vr + gri * vi;
                    let gh_i = gri * vr + gii * vi;
                    let (cr, ci) = (cache.c_re[i], cache.c_im[i]);
                    let dc_r =
                        st.m_rr * gh_r + st.m_ri * gh_i + (two * p_acc * cr + q_acc * ci) / m;
                    let dc_i =
                        st.m_ri * gh_r + st.m_ii * gh_i + (q_acc * cr + two * r_acc * ci) / m;
                    out_re[i] = dc_r;
                    out_im[i] = dc_i;
                    mean_dc_re += dc_r;
                    mean_dc_im += dc_i;
                }
            }
            mean_dc_re /= m;
            mean_dc_im /= m;
            for smp in 0..layout.n {
                for pp in 0..layout.plane {
                    let i = layout.idx(smp, ch, pp);
                    out_re[i] -= mean_dc_re;
                    out_im[i] -= mean_dc_im;
                }
            }
        }
        let shape = g.shape().to_vec();
        Ok(Activation::Complex(ComplexTensor::new(
            RealTensor::from_vec(&shape, out_re)?,
            RealTensor::from_vec(&shape, out_im)?,
        )?))
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(ParamView<'_, S>)) {
        let c = self.channels;
        f(ParamView {
            name: format!("cbn[c{c}].gamma_rr"),
            role: ParamRole::FullPrecision,
            param: &mut self.gamma_rr,
        });
        f(ParamView {
            name: format!("cbn[c{c}].gamma_ri"),
            role: ParamRole::FullPrecision,
            param: &mut self.gamma_ri,
        });
        f(ParamView {
            name: format!("cbn[c{c}].gamma_ii"),
            role: ParamRole::FullPrecision,
            param: &mut self.gamma_ii,
        });
        f(ParamView {
            name: format!("cbn[c{c}].beta_re"),
            role: ParamRole::FullPrecision,
            param: &mut self.beta_re,
        });
        f(ParamView {
            name: format!("cbn[c{c}].beta_im"),
            role: ParamRole::FullPrecision,
            param: &mut self.beta_im,
        });
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(BufferView<'_, S>)) {
        let c = self.channels;
        f(BufferView { name: format!("cbn[c{c}].run_mean_re"), values: &mut self.run_mean_re });
        f(BufferView { name: format!("cbn[c{c}].run_mean_im"), values: &mut self.run_mean_im });
        f(BufferView { name: format!("cbn[c{c}].run_v_rr"), values: &mut self.run_v_rr });
        f(BufferView { name: format!("cbn[c{c}].run_v_ri"), values: &mut self.run_v_ri });
        f(BufferView { name: format!("cbn[c{c}].run_v_ii"), values: &mut self.run_v_ii });
    }

    fn census(&self) -> LayerCensus {
        LayerCensus { fp_params: 5 * self.channels, latent_params: 0, packed_bits: 0 }
    }

    fn export_records(&self) -> Vec<ExportRecord> {
        vec![
            export_f32("gamma_rr", &self.gamma_rr.data),
            export_f32("gamma_ri", &self.gamma_ri.data),
            export_f32("gamma_ii", &self.gamma_ii.data),
            export_f32("beta_re", &self.beta_re.data),
            export_f32("beta_im", &self.beta_im.data),
            export_f32("run_mean_re", &self.run_mean_re),
            export_f32("run_mean_im", &self.run_mean_im),
            export_f32("run_v_rr", &self.run_v_rr),
            export_f32("run_v_ri", &self.run_v_ri),
            export_f32("run_v_ii", &self.run_v_ii),
        ]
    }

    fn import_records(&mut self, records: &[ExportRecord]) -> Result<()> {
        let c = self.channels;
        self.gamma_rr.data = import_f32(records, "gamma_rr", c)?;
        self.gamma_ri.data = import_f32(records, "gamma_ri", c)?;
        self.gamma_ii.data = import_f32(records, "gamma_ii", c)?;
        self.beta_re.data = import_f32(records, "beta_re", c)?;
        self.beta_im.data = import_f32(records, "beta_im", c)?;
        self.run_mean_re = import_f32(records, "run_mean_re", c)?;
        self.run_mean_im = import_f32(records, "run_mean_im", c)?;
        self.run_v_rr = import_f32(records, "run_v_rr", c)?;
        self.run_v_ri = import_f32(records, "run_v_ri", c)?;
        self.run_v_ii = import_f32(records, "run_v_ii", c)?;
        Ok(())
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
    fn bn_constant_batch_is_zero() {
        let mut bn = BatchNorm2d::<f64>::new(2);
        let x = RealTensor::full(&[4, 2, 2, 2], 3.5);
        let out = bn
            .forward(Activation::Real(x), Mode::Train)
            .unwrap()
            .into_real("t")
            .unwrap();
        for &v in out.data() {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn bn_batch_of_one_rejected_in_training() {
        let mut bn = BatchNorm2d::<f64>::new(1);
        let x = RealTensor::full(&[1, 1, 2, 2], 1.0);
        assert!(matches!(
            bn.forward(Activation::Real(x.clone()), Mode::Train),
            Err(Error::Config(_))
        ));
        // eval mode accepts batch 1
        assert!(bn.forward(Activation::Real(x), Mode::Eval).is_ok());
    }

    #[test]
    fn bn_normalizes_statistics() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(71);
        let n = 512;
        let data: Vec<f64> = (0..n * 2).map(|_| rng.gen_range(-3.0..5.0)).collect();
        let mut bn = BatchNorm2d::<f64>::new(2);
        let out = bn
            .forward(Activation::Real(RealTensor::from_vec(&[n, 2], data).unwrap()), Mode::Train)
            .unwrap()
            .into_real("t")
            .unwrap();
        for ch in 0..2 {
            let vals: Vec<f64> = (0..n).map(|s| out.data()[s * 2 + ch]).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn cgbn_hand_example() {
        // re=[1,3], im=[2,2], gamma = (1+i)/sqrt(2), beta = 0
        let mut layer = Cgbn::<f64>::new(1);
        let z = complex(&[2, 1], vec![1.0, 3.0], vec![2.0, 2.0]);
        let out = layer
            .forward(Activation::Complex(z), Mode::Train)
            .unwrap()
            .into_complex("t")
            .unwrap();
        assert!((out.re().data()[0] + 0.5).abs() < 1e-4, "{}", out.re().data()[0]);
        assert!((out.im().data()[0] + 0.5).abs() < 1e-4);
        assert!((out.re().data()[1] - 0.5).abs() < 1e-4);
        assert!((out.im().data()[1] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn cgbn_shift_only_case() {
        let mut layer = Cgbn::<f64>::new(1);
        layer.beta_re.data[0] = 5.0;
        layer.beta_im.data[0] = 5.0;
        // zero-variance input collapses to beta
        let z = complex(&[4, 1], vec![2.0; 4], vec![-1.0; 4]);
        let out = layer
            .forward(Activation::Complex(z), Mode::Train)
            .unwrap()
            .into_complex("t")
            .unwrap();
        for i in 0..4 {
            assert!((out.re().data()[i] - 5.0).abs() < 1e-9);
            assert!((out.im().data()[i] - 5.0).abs() < 1e-9);
        }
    }

    #[test]
    fn cgbn_pre_affine_statistics() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(72);
        let n = 4096;
        let mut layer = Cgbn::<f64>::new(2);
        // identity affine isolates the normalization stage
        layer.gamma_re.data = vec![1.0, 1.0];
        layer.gamma_im.data = vec![0.0, 0.0];
        let z = complex(
            &[n, 2],
            (0..n * 2).map(|_| rng.gen_range(-2.0..6.0)).collect(),
            (0..n * 2).map(|_| rng.gen_range(-4.0..1.0)).collect(),
        );
        let out = layer
            .forward(Activation::Complex(z), Mode::Train)
            .unwrap()
            .into_complex("t")
            .unwrap();
        for ch in 0..2 {
            for comp in [out.re(), out.im()] {
                let vals: Vec<f64> = (0..n).map(|s| comp.data()[s * 2 + ch]).collect();
                let mean = vals.iter().sum::<f64>() / n as f64;
                let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                assert!(mean.abs() < 1e-6, "mean {mean}");
                assert!((var - 0.5).abs() < 1e-3, "var {var}");
            }
        }
    }

    #[test]
    fn cgbn_grad_beta_is_channel_sum() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(73);
        let mut layer = Cgbn::<f64>::new(2);
        let z = complex(
            &[8, 2],
            (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        let _ = layer.forward(Activation::Complex(z), Mode::Train).unwrap();
        let gre: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gim: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let _ = layer
            .backward(Activation::Complex(complex(&[8, 2], gre.clone(), gim.clone())))
            .unwrap();
        for ch in 0..2 {
            let want_r: f64 = (0..8).map(|s| gre[s * 2 + ch]).sum();
            let want_i: f64 = (0..8).map(|s| gim[s * 2 + ch]).sum();
            assert!((layer.beta_re.grad[ch] - want_r).abs() < 1e-9);
            assert!((layer.beta_im.grad[ch] - want_i).abs() < 1e-9);
        }
    }

    #[test]
    fn cgbn_real_gamma_decouples_components() {
        // gamma = 1 + 0i: backward must reduce to two independent real BN
        // backwards (no cross-component mixing).
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(74);
        let n = 16;
        let re: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let im: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gre: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let mut layer = Cgbn::<f64>::new(1);
        layer.gamma_re.data = vec![1.0];
        layer.gamma_im.data = vec![0.0];
        let _ = layer
            .forward(Activation::Complex(complex(&[n, 1], re.clone(), im.clone())), Mode::Train)
            .unwrap();
        // gradient only on the real component
        let gin = layer
            .backward(Activation::Complex(complex(&[n, 1], gre.clone(), vec![0.0; n])))
            .unwrap()
            .into_complex("t")
            .unwrap();
        for v in gin.im().data() {
            assert_eq!(*v, 0.0, "imaginary grad must stay zero when components decouple");
        }
    }

    #[test]
    fn inv_sqrt_identity() {
        let (rr, ri, ii) = inv_sqrt_2x2(1.0f64, 0.0, 1.0);
        assert!((rr - 1.0).abs() < 1e-12);
        assert!(ri.abs() < 1e-12);
        assert!((ii - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inv_sqrt_squares_to_inverse() {
        // For random PSD V, (V^{-1/2})^2 V ~= I.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(75);
        for _ in 0..50 {
            let x = rng.gen_range(0.2..3.0);
            let y: f64 = rng.gen_range(0.2..3.0);
            let c: f64 = rng.gen_range(-0.9..0.9);
            let (a, b, d) = (x * x, c * x * y, y * y + 0.1);
            let (rr, ri, ii) = inv_sqrt_2x2(a, b, d);
            // W = M*M (M symmetric), then W*V should be I
            let w_rr = rr * rr + ri * ri;
            let w_ri = rr * ri + ri * ii;
            let w_ii = ri * ri + ii * ii;
            let i_rr = w_rr * a + w_ri * b;
            let i_ri = w_rr * b + w_ri * d;
            let i_ir = w_ri * a + w_ii * b;
            let i_ii = w_ri * b + w_ii * d;
            assert!((i_rr - 1.0).abs() < 1e-9, "{i_rr}");
            assert!(i_ri.abs() < 1e-9);
            assert!(i_ir.abs() < 1e-9);
            assert!((i_ii - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn cbn_whitens_correlated_batch() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(76);
        let n = 4096;
        let mut re = Vec::with_capacity(n);
        let mut im = Vec::with_capacity(n);
        for _ in 0..n {
            let x = rng.gen_range(-1.0..1.0) + rng.gen_range(-1.0..1.0);
            let y = rng.gen_range(-1.0..1.0) + rng.gen_range(-1.0..1.0);
            re.push(2.0 * x + 1.0);
            im.push(0.8 * x + 0.6 * y - 2.0); // correlated with re
        }
        let mut layer = Cbn::<f64>::new(1);
        // identity affine isolates the whitening stage
        layer.gamma_rr.data = vec![1.0];
        layer.gamma_ii.data = vec![1.0];
        let out = layer
            .forward(Activation::Complex(complex(&[n, 1], re, im)), Mode::Train)
            .unwrap()
            .into_complex("t")
            .unwrap();
        let hr = out.re().data();
        let hi = out.im().data();
        let mr = hr.iter().sum::<f64>() / n as f64;
        let mi = hi.iter().sum::<f64>() / n as f64;
        let mut v_rr = 0.0;
        let mut v_ri = 0.0;
        let mut v_ii = 0.0;
        for k in 0..n {
            v_rr += (hr[k] - mr) * (hr[k] - mr);
            v_ri += (hr[k] - mr) * (hi[k] - mi);
            v_ii += (hi[k] - mi) * (hi[k] - mi);
        }
        v_rr /= n as f64;
        v_ri /= n as f64;
        v_ii /= n as f64;
        assert!(mr.abs() < 1e-9 && mi.abs() < 1e-9);
        assert!((v_rr - 0.5).abs() < 1e-3, "v_rr {v_rr}");
        assert!(v_ri.abs() < 1e-3, "v_ri {v_ri}");
        assert!((v_ii - 0.5).abs() < 1e-3, "v_ii {v_ii}");
    }

    #[test]
    fn cbn_agrees_with_cgbn_on_decoupled_equal_variance_batch() {
        // Symmetric construction: batch closed under sign flips and component
        // swap, so the empirical covariance is exactly diagonal with equal
        // entries. CBN whitening then equals CGBN normalization.
        let base = [(1.0f64, 2.0f64), (0.5, 0.3), (1.7, 0.9)];
        let mut re = Vec::new();
        let mut im = Vec::new();
        for &(u, v) in &base {
            for &su in &[1.0, -1.0] {
                for &sv in &[1.0, -1.0] {
                    re.push(su * u);
                    im.push(sv * v);
                    re.push(su * v);
                    im.push(sv * u);
                }
            }
        }
        let n = re.len();
        let z = complex(&[n, 1], re, im);

        let mut cbn = Cbn::<f64>::new(1);
        cbn.gamma_rr.data = vec![1.0];
        cbn.gamma_ii.data = vec![1.0];
        let out_cbn = cbn
            .forward(Activation::Complex(z.clone()), Mode::Train)
            .unwrap()
            .into_complex("t")
            .unwrap();

        let mut cgbn = Cgbn::<f64>::new(1);
        cgbn.gamma_re.data = vec![1.0];
        cgbn.gamma_im.data = vec![0.0];
        let out_cgbn = cgbn
            .forward(Activation::Complex(z), Mode::Train)
            .unwrap()
            .into_complex("t")
            .unwrap();

        for k in 0..n {
            assert!((out_cbn.re().data()[k] - out_cgbn.re().data()[k]).abs() < 1e-5);
            assert!((out_cbn.im().data()[k] - out_cgbn.im().data()[k]).abs() < 1e-5);
        }
    }

    #[test]
    fn cbn_grad_beta_is_channel_sum() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let mut layer = Cbn::<f64>::new(1);
        let n = 12;
        let z = complex(
            &[n, 1],
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        let _ = layer.forward(Activation::Complex(z), Mode::Train).unwrap();
        let gre: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gim: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let _ = layer
            .backward(Activation::Complex(complex(&[n, 1], gre.clone(), gim.clone())))
            .unwrap();
        assert!((layer.beta_re.grad[0] - gre.iter().sum::<f64>()).abs() < 1e-9);
        assert!((layer.beta_im.grad[0] - gim.iter().sum::<f64>()).abs() < 1e-9);
    }

    #[test]
    fn eval_uses_running_statistics() {
        let mut layer = Cgbn::<f64>::new(1);
        // untouched running stats: mean 0, var 1/2 -> eval normalization is
        // z / sqrt(2*0.5 + eps) ~= z, then gamma multiplication
        let z = complex(&[2, 1], vec![1.0, -1.0], vec![0.5, -0.5]);
        let out = layer
            .forward(Activation::Complex(z), Mode::Eval)
            .unwrap()
            .into_complex("t")
            .unwrap();
        let g = std::f64::consts::FRAC_1_SQRT_2;
        // y = (g + ig)(zr + izi) => re = g(zr - zi), im = g(zr + zi)
        assert!((out.re().data()[0] - g * (1.0 - 0.5)).abs() < 1e-4);
        assert!((out.im().data()[0] - g * (1.0 + 0.5)).abs() < 1e-4);
    }
}
