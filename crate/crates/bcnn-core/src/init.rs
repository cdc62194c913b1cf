//! Weight initialization policies.
//!
//! Latent complex weights can be drawn three ways:
//!
//! * [`InitPolicy::ComponentNormal`]: each component is an independent normal
//!   with variance 1/(fan_in + fan_out), so the complex weight has variance
//!   2/(fan_in + fan_out).
//! * [`InitPolicy::XavierUniform`]: each component is uniform on
//!   [-b, b] with b = sqrt(6/(fan_in + fan_out)).
//! * [`InitPolicy::Rayleigh`]: the draw is polar — a Rayleigh-distributed
//!   amplitude and an independent uniform phase on (-pi, pi]. The Rayleigh
//!   scale follows the selected fan rule.
//!
//! Convolution fans count receptive-field taps times complex channels:
//! fan_in = k*k*c_in, fan_out = k*k*c_out. All sampling happens in f64 from
//! a caller-seeded ChaCha8 stream and is converted to the working scalar at
//! the end, so f32 and f64 models see the same draws.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use rand::Rng;
use rand_distr::Distribution;

/// Scale rule for the Rayleigh amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RayleighMode {
    /// sigma = 1/sqrt(fan_in + fan_out)
    Glorot,
    /// sigma = 1/sqrt(fan_in)
    He,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitPolicy {
    ComponentNormal,
    XavierUniform,
    Rayleigh(RayleighMode),
}

impl InitPolicy {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "bcw" | "component-normal" => Ok(Self::ComponentNormal),
            "xavier" => Ok(Self::XavierUniform),
            "rayleigh" | "rayleigh-glorot" => Ok(Self::Rayleigh(RayleighMode::Glorot)),
            "rayleigh-he" => Ok(Self::Rayleigh(RayleighMode::He)),
            other => Err(Error::Config(format!(
                "unknown init policy `{other}` (expected bcw, xavier, rayleigh, rayleigh-he)"
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::ComponentNormal => "bcw",
            Self::XavierUniform => "xavier",
            Self::Rayleigh(RayleighMode::Glorot) => "rayleigh",
            Self::Rayleigh(RayleighMode::He) => "rayleigh-he",
        }
    }
}

/// Fan counts for a weight tensor.
#[derive(Debug, Clone, Copy)]
pub struct FanPair {
    pub fan_in: usize,
    pub fan_out: usize,
}

impl FanPair {
    pub fn conv(c_in: usize, c_out: usize, k: usize) -> Self {
        Self { fan_in: k * k * c_in, fan_out: k * k * c_out }
    }

    pub fn linear(in_features: usize, out_features: usize) -> Self {
        Self { fan_in: in_features, fan_out: out_features }
    }

    fn sum(&self) -> f64 {
        (self.fan_in + self.fan_out) as f64
    }
}

/// Draws `len` complex weights as (re, im) component vectors.
pub fn complex_weights<S: Scalar, R: Rng>(
    policy: InitPolicy,
    fans: FanPair,
    len: usize,
    rng: &mut R,
) -> Result<(Vec<S>, Vec<S>)> {
    if fans.fan_in == 0 || fans.fan_out == 0 {
        return Err(Error::Config("weight fans must be positive".into()));
    }
    let mut re = Vec::with_capacity(len);
    let mut im = Vec::with_capacity(len);
    match policy {
        InitPolicy::ComponentNormal => {
            let sigma = fans.sum().sqrt().recip();
            let normal = rand_distr::Normal::new(0.0, sigma)
                .map_err(|e| Error::Config(format!("bad init sigma: {e}")))?;
            for _ in 0..len {
                re.push(S::from_f64_c(normal.sample(rng)));
                im.push(S::from_f64_c(normal.sample(rng)));
            }
        }
        InitPolicy::XavierUniform => {
            let bound = (6.0 / fans.sum()).sqrt();
            for _ in 0..len {
                re.push(S::from_f64_c(rng.gen_range(-bound..bound)));
                im.push(S::from_f64_c(rng.gen_range(-bound..bound)));
            }
        }
        InitPolicy::Rayleigh(mode) => {
            let sigma = match mode {
                RayleighMode::Glorot => fans.sum().sqrt().recip(),
                RayleighMode::He => (fans.fan_in as f64).sqrt().recip(),
            };
            for _ in 0..len {
                // inverse-CDF Rayleigh draw: A = sigma * sqrt(-2 ln(1 - U))
                let u: f64 = rng.gen::<f64>();
                let amplitude = sigma * (-2.0 * (1.0 - u).ln()).sqrt();
                // phase uniform on (-pi, pi]
                let v: f64 = rng.gen::<f64>();
                let phase = std::f64::consts::PI * (1.0 - 2.0 * v);
                re.push(S::from_f64_c(amplitude * phase.cos()));
                im.push(S::from_f64_c(amplitude * phase.sin()));
            }
        }
    }
    Ok((re, im))
}

/// Real Xavier-uniform draw, used by the full-precision real layers.
pub fn real_xavier_uniform<S: Scalar, R: Rng>(
    fans: FanPair,
    len: usize,
    rng: &mut R,
) -> Result<Vec<S>> {
    if fans.fan_in == 0 || fans.fan_out == 0 {
        return Err(Error::Config("weight fans must be positive".into()));
    }
    let bound = (6.0 / fans.sum()).sqrt();
    Ok((0..len).map(|_| S::from_f64_c(rng.gen_range(-bound..bound))).collect())
}
