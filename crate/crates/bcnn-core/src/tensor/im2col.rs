//! Convolution lowering: gather image patches into matrix form so both the
//! float and the packed-bit convolution paths share one GEMM shape contract.
//!
//! Padding is applied in the value domain: padded positions contribute literal
//! zeros here, and downstream sign-packing turns them into +1 (the documented
//! convention shared with the test oracles).

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::RealTensor;

/// Sentinel gather index for zero-padded positions.
const PAD: usize = usize::MAX;

/// Precomputed gather table lowering a (C_in, H_in, W_in) sample to patch
/// rows of length k²·C_in, one row per output spatial position.
#[derive(Debug, Clone)]
pub struct Im2ColPlan {
    pub c_in: usize,
    pub h_in: usize,
    pub w_in: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub h_out: usize,
    pub w_out: usize,
    /// `gather[p * patch_len + t]`: input offset within one sample, or `PAD`.
    gather: Vec<usize>,
}

impl Im2ColPlan {
    pub fn new(
        c_in: usize,
        h_in: usize,
        w_in: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        if c_in == 0 || h_in == 0 || w_in == 0 || k == 0 || stride == 0 {
            return Err(Error::Config(format!(
                "convolution plan dims must be positive: c={c_in} h={h_in} w={w_in} k={k} s={stride}"
            )));
        }
        if h_in + 2 * pad < k || w_in + 2 * pad < k {
            return Err(Error::Config(format!(
                "kernel {k} exceeds padded input {}x{}",
                h_in + 2 * pad,
                w_in + 2 * pad
            )));
        }
        let h_out = (h_in + 2 * pad - k) / stride + 1;
        let w_out = (w_in + 2 * pad - k) / stride + 1;
        let patch_len = k * k * c_in;
        let mut gather = Vec::with_capacity(h_out * w_out * patch_len);
        for oh in 0..h_out {
            for ow in 0..w_out {
                for c in 0..c_in {
                    for kh in 0..k {
                        for kw in 0..k {
                            let ih = (oh * stride + kh) as isize - pad as isize;
                            let iw = (ow * stride + kw) as isize - pad as isize;
                            let idx = if ih < 0
                                || iw < 0
                                || ih >= h_in as isize
                                || iw >= w_in as isize
                            {
                                PAD
                            } else {
                                (c * h_in + ih as usize) * w_in + iw as usize
                            };
                            gather.push(idx);
                        }
                    }
                }
            }
        }
        Ok(Self { c_in, h_in, w_in, k, stride, pad, h_out, w_out, gather })
    }

    /// Patch row length: k²·C_in, matching a flattened (C_in, k, k) filter.
    pub fn patch_len(&self) -> usize {
        self.k * self.k * self.c_in
    }

    /// Output positions per sample.
    pub fn positions(&self) -> usize {
        self.h_out * self.w_out
    }

    fn check_input<S: Scalar>(&self, x: &RealTensor<S>) -> Result<usize> {
        let (n, c, h, w) = x.dims4()?;
        if (c, h, w) != (self.c_in, self.h_in, self.w_in) {
            return Err(Error::Shape(format!(
                "plan expects ({}, {}, {}) samples, got ({c}, {h}, {w})",
                self.c_in, self.h_in, self.w_in
            )));
        }
        Ok(n)
    }

    /// Patch-major lowering: (N·H_out·W_out, k²·C_in), one patch per row.
    /// This is the orientation consumed by the GEMM kernels (patch rows
    /// against pre-transposed filter rows).
    pub fn patches<S: Scalar>(&self, x: &RealTensor<S>) -> Result<RealTensor<S>> {
        let n = self.check_input(x)?;
        let (patch_len, positions) = (self.patch_len(), self.positions());
        let sample = self.c_in * self.h_in * self.w_in;
        let mut out = vec![S::zero(); n * positions * patch_len];
        for s in 0..n {
            let src = &x.data()[s * sample..(s + 1) * sample];
            let dst = &mut out[s * positions * patch_len..(s + 1) * positions * patch_len];
            for (slot, &g) in dst.iter_mut().zip(&self.gather) {
                if g != PAD {
                    *slot = src[g];
                }
            }
        }
        RealTensor::from_vec(&[n * positions, patch_len], out)
    }

    /// Column-major contract orientation: (k²·C_in, N·H_out·W_out).
    pub fn im2col<S: Scalar>(&self, x: &RealTensor<S>) -> Result<RealTensor<S>> {
        let patches = self.patches(x)?;
        let (rows, cols) = patches.dims2()?;
        let mut out = vec![S::zero(); rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                out[c * rows + r] = patches.data()[r * cols + c];
            }
        }
        RealTensor::from_vec(&[cols, rows], out)
    }

    /// Adjoint of [`patches`]: scatter-adds patch-row gradients back onto the
    /// input layout. Pad slots are dropped.
    pub fn scatter_patches<S: Scalar>(
        &self,
        patch_grads: &RealTensor<S>,
        batch: usize,
    ) -> Result<RealTensor<S>> {
        let (rows, cols) = patch_grads.dims2()?;
        let (patch_len, positions) = (self.patch_len(), self.positions());
        if rows != batch * positions || cols != patch_len {
            return Err(Error::Shape(format!(
                "patch gradient is {rows}x{cols}, expected {}x{patch_len}",
                batch * positions
            )));
        }
        let sample = self.c_in * self.h_in * self.w_in;
        let mut out = RealTensor::zeros(&[batch, self.c_in, self.h_in, self.w_in]);
        for s in 0..batch {
            let src = &patch_grads.data()[s * positions * patch_len..(s + 1) * positions * patch_len];
            let dst = &mut out.data_mut()[s * sample..(s + 1) * sample];
            for (v, &g) in src.iter().zip(&self.gather) {
                if g != PAD {
                    dst[g] += *v;
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::dense::matmul_nt;

    /// Independent oracle: direct nested-loop real convolution with zero pad.
    fn naive_conv2d(
        x: &RealTensor<f64>,
        w: &RealTensor<f64>,
        stride: usize,
        pad: usize,
    ) -> RealTensor<f64> {
        let (n, c_in, h, wd) = x.dims4().unwrap();
        let (c_out, c_in2, k, _) = w.dims4().unwrap();
        assert_eq!(c_in, c_in2);
        let h_out = (h + 2 * pad - k) / stride + 1;
        let w_out = (wd + 2 * pad - k) / stride + 1;
        let mut out = RealTensor::zeros(&[n, c_out, h_out, w_out]);
        for s in 0..n {
            for co in 0..c_out {
                for oh in 0..h_out {
                    for ow in 0..w_out {
                        let mut acc = 0.0;
                        for ci in 0..c_in {
                            for kh in 0..k {
                                for kw in 0..k {
                                    let ih = (oh * stride + kh) as isize - pad as isize;
                                    let iw = (ow * stride + kw) as isize - pad as isize;
                                    if ih < 0 || iw < 0 || ih >= h as isize || iw >= wd as isize {
                                        continue;
                                    }
                                    let xi = ((s * c_in + ci) * h + ih as usize) * wd + iw as usize;
                                    let wi = ((co * c_in + ci) * k + kh) * k + kw;
                                    acc += x.data()[xi] * w.data()[wi];
                                }
                            }
                        }
                        let oi = ((s * c_out + co) * h_out + oh) * w_out + ow;
                        out.data_mut()[oi] = acc;
                    }
                }
            }
        }
        out
    }

    fn random_tensor(shape: &[usize], seed: u64) -> RealTensor<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n: usize = shape.iter().product();
        RealTensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn one_by_one_is_a_reshape() {
        let x = random_tensor(&[2, 3, 4, 4], 1);
        let plan = Im2ColPlan::new(3, 4, 4, 1, 1, 0).unwrap();
        let p = plan.patches(&x).unwrap();
        assert_eq!(p.shape(), &[2 * 16, 3]);
        // Every value of x appears exactly once, per (sample, position, channel).
        for s in 0..2 {
            for pos in 0..16 {
                for c in 0..3 {
                    let got = p.data()[(s * 16 + pos) * 3 + c];
                    let want = x.data()[(s * 3 + c) * 16 + pos];
                    assert_eq!(got, want);
                }
            }
        }
    }

    #[test]
    fn full_kernel_single_column() {
        let x = random_tensor(&[1, 1, 3, 3], 2);
        let plan = Im2ColPlan::new(1, 3, 3, 3, 1, 0).unwrap();
        let col = plan.im2col(&x).unwrap();
        assert_eq!(col.shape(), &[9, 1]);
        assert_eq!(col.data(), x.data());
        let p = plan.patches(&x).unwrap();
        assert_eq!(p.shape(), &[1, 9]);
        assert_eq!(p.data(), x.data());
    }

    #[test]
    fn conv_via_gemm_matches_naive() {
        for (shape, k, s, p, seed) in [
            ([2usize, 3, 8, 8], 3usize, 2usize, 1usize, 10u64),
            ([1, 2, 5, 7], 3, 1, 0, 11),
            ([3, 4, 6, 6], 1, 1, 0, 12),
            ([2, 1, 4, 4], 2, 2, 1, 13),
            ([1, 3, 9, 9], 3, 3, 1, 14),
        ] {
            let x = random_tensor(&shape, seed);
            let c_out = 5;
            let w = random_tensor(&[c_out, shape[1], k, k], seed + 100);
            let plan = Im2ColPlan::new(shape[1], shape[2], shape[3], k, s, p).unwrap();
            let patches = plan.patches(&x).unwrap();
            let (rows, pl) = patches.dims2().unwrap();
            let gemm = matmul_nt(patches.data(), rows, pl, w.data(), c_out);
            let oracle = naive_conv2d(&x, &w, s, p);
            // gemm layout: (sample*position, c_out); oracle: (n, c_out, h_out, w_out)
            let positions = plan.positions();
            for smp in 0..shape[0] {
                for co in 0..c_out {
                    for pos in 0..positions {
                        let got = gemm[(smp * positions + pos) * c_out + co];
                        let want = oracle.data()[(smp * c_out + co) * positions + pos];
                        assert!(
                            (got - want).abs() < 1e-9,
                            "mismatch at sample {smp} channel {co} pos {pos}: {got} vs {want}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn pad_positions_are_literal_zeros() {
        let x = RealTensor::from_vec(&[1, 1, 2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let plan = Im2ColPlan::new(1, 2, 2, 3, 1, 1).unwrap();
        let p = plan.patches(&x).unwrap();
        assert_eq!(p.shape(), &[4, 9]);
        // top-left output position: pad everywhere except the lower-right 2x2
        assert_eq!(&p.data()[0..9], &[0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 3.0, 4.0]);
    }

    #[test]
    fn scatter_is_adjoint_of_gather() {
        // <patches(x), g> == <x, scatter(g)> for random g: defining property
        // of the transpose, checked elementwise via accumulation counts.
        let x = random_tensor(&[2, 3, 5, 5], 3);
        let plan = Im2ColPlan::new(3, 5, 5, 3, 2, 1).unwrap();
        let p = plan.patches(&x).unwrap();
        let g = random_tensor(&[p.shape()[0], p.shape()[1]], 4);
        let scattered = plan.scatter_patches(&g, 2).unwrap();
        let lhs: f64 = p.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(scattered.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
    }

    #[test]
    fn plan_validates_geometry() {
        assert!(Im2ColPlan::new(0, 4, 4, 3, 1, 1).is_err());
        assert!(Im2ColPlan::new(3, 2, 2, 5, 1, 1).is_err());
        assert!(Im2ColPlan::new(3, 4, 4, 3, 0, 1).is_err());
        let plan = Im2ColPlan::new(3, 4, 4, 3, 1, 1).unwrap();
        let bad = RealTensor::<f64>::zeros(&[1, 3, 5, 5]);
        assert!(plan.patches(&bad).is_err());
    }
}
