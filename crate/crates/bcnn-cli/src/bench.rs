//! Packed-kernel benchmark: proves the xnor-popcount GEMM agrees with a
//! dense float reference, then times both at matched shapes.

use bcnn_core::bitpack::{binary_complex_gemm, PackedComplexMatrix, PackedMatrix};
use bcnn_core::tensor::dense::matmul_nt;
use bcnn_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

/// Output shape (rows of x, rows of w) used at every inner dimension.
const M: usize = 64;
const N: usize = 64;
/// Acceptance floor on the speedup at the largest standard inner dim.
pub const REQUIRED_SPEEDUP_AT_4096: f64 = 4.0;

pub struct SizeReport {
    pub inner: usize,
    pub packed_secs: f64,
    pub float_secs: f64,
    pub speedup: f64,
    /// Multiply-accumulate throughput of the packed kernel (4 real dots per
    /// complex output element).
    pub packed_mops: f64,
}

pub struct BenchReport {
    pub correctness_cases: usize,
    pub sizes: Vec<SizeReport>,
    /// Bits per weight for a dense complex float32 vs the packed encoding.
    pub storage_ratio: f64,
}

struct ComplexOperands {
    x_re: Vec<f32>,
    x_im: Vec<f32>,
    w_re: Vec<f32>,
    w_im: Vec<f32>,
    x: PackedComplexMatrix,
    w: PackedComplexMatrix,
    m: usize,
    n: usize,
    k: usize,
}

fn random_signs(rng: &mut ChaCha8Rng, len: usize) -> Vec<f32> {
    (0..len).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect()
}

fn make_operands(rng: &mut ChaCha8Rng, m: usize, n: usize, k: usize) -> Result<ComplexOperands> {
    let x_re = random_signs(rng, m * k);
    let x_im = random_signs(rng, m * k);
    let w_re = random_signs(rng, n * k);
    let w_im = random_signs(rng, n * k);
    let x = PackedComplexMatrix::new(
        PackedMatrix::pack_rows(&x_re, m, k)?,
        PackedMatrix::pack_rows(&x_im, m, k)?,
    )?;
    let w = PackedComplexMatrix::new(
        PackedMatrix::pack_rows(&w_re, n, k)?,
        PackedMatrix::pack_rows(&w_im, n, k)?,
    )?;
    Ok(ComplexOperands { x_re, x_im, w_re, w_im, x, w, m, n, k })
}

/// Dense reference: (A+iB)(X+iY) -> c = AX - BY, d = BX + AY, with every
/// operand in {-1, +1} so f32 accumulation is exact up to 2^24 terms.
fn float_complex_gemm(o: &ComplexOperands) -> (Vec<f32>, Vec<f32>) {
    let ax = matmul_nt(&o.x_re, o.m, o.k, &o.w_re, o.n);
    let by = matmul_nt(&o.x_im, o.m, o.k, &o.w_im, o.n);
    let bx = matmul_nt(&o.x_im, o.m, o.k, &o.w_re, o.n);
    let ay = matmul_nt(&o.x_re, o.m, o.k, &o.w_im, o.n);
    let c: Vec<f32> = ax.iter().zip(&by).map(|(a, b)| a - b).collect();
    let d: Vec<f32> = bx.iter().zip(&ay).map(|(a, b)| a + b).collect();
    (c, d)
}

/// Compares the packed kernel against the dense reference; exact equality
/// is required element by element.
fn check_case(o: &ComplexOperands) -> Result<()> {
    let (c_int, d_int) = binary_complex_gemm(&o.x, &o.w)?;
    let (c_ref, d_ref) = float_complex_gemm(o);
    for (idx, (&got, &want)) in c_int.data.iter().zip(&c_ref).enumerate() {
        if got as f32 != want {
            return Err(Error::Domain(format!(
                "packed kernel disagrees with reference: real element {idx} is {got}, expected {want} (m={} n={} k={})",
                o.m, o.n, o.k
            )));
        }
    }
    for (idx, (&got, &want)) in d_int.data.iter().zip(&d_ref).enumerate() {
        if got as f32 != want {
            return Err(Error::Domain(format!(
                "packed kernel disagrees with reference: imaginary element {idx} is {got}, expected {want} (m={} n={} k={})",
                o.m, o.n, o.k
            )));
        }
    }
    Ok(())
}

/// Runs `f` repeatedly until at least `min_total` has elapsed and reports
/// seconds per call.
fn time_per_call<F: FnMut()>(mut f: F, min_total: f64) -> f64 {
    // warm-up
    f();
    let mut calls = 0u32;
    let start = Instant::now();
    loop {
        f();
        calls += 1;
        let elapsed = start.elapsed().as_secs_f64();
        if elapsed >= min_total && calls >= 3 {
            return elapsed / f64::from(calls);
        }
    }
}

/// Correctness gate first (randomized small cases plus each benchmark
/// shape), then timing. Fails rather than reporting numbers for a kernel
/// that disagrees with the reference.
pub fn run(sizes: &[usize]) -> Result<BenchReport> {
    if sizes.is_empty() {
        return Err(Error::Config("bench needs at least one inner dimension".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xBEBC);
    let mut cases = 0usize;
    for _ in 0..25 {
        let m = rng.gen_range(1..=16);
        let n = rng.gen_range(1..=16);
        let k = rng.gen_range(1..=160);
        check_case(&make_operands(&mut rng, m, n, k)?)?;
        cases += 1;
    }
    let mut sized_operands = Vec::new();
    for &k in sizes {
        let o = make_operands(&mut rng, M, N, k)?;
        check_case(&o)?;
        cases += 1;
        sized_operands.push(o);
    }

    let mut reports = Vec::new();
    for o in &sized_operands {
        let packed_secs = time_per_call(
            || {
                let out = binary_complex_gemm(&o.x, &o.w).unwrap();
                std::hint::black_box(out);
            },
            0.2,
        );
        let float_secs = time_per_call(
            || {
                let out = float_complex_gemm(o);
                std::hint::black_box(out);
            },
            0.2,
        );
        let macs = (4 * o.m * o.n * o.k) as f64;
        reports.push(SizeReport {
            inner: o.k,
            packed_secs,
            float_secs,
            speedup: float_secs / packed_secs,
            packed_mops: macs / packed_secs / 1e6,
        });
    }
    Ok(BenchReport {
        correctness_cases: cases,
        sizes: reports,
        // dense complex float32 = 64 bits per weight; packed = 2 bits
        storage_ratio: 64.0 / 2.0,
    })
}

pub fn render(report: &BenchReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "correctness gate: packed complex GEMM matches the float reference exactly on {} cases\n",
        report.correctness_cases
    ));
    for s in &report.sizes {
        out.push_str(&format!(
            "inner {:>5}: packed {:>9.3} ms ({:>8.1} Mmac/s) | float {:>9.3} ms | speedup {:>6.2}x\n",
            s.inner,
            s.packed_secs * 1e3,
            s.packed_mops,
            s.float_secs * 1e3,
            s.speedup
        ));
    }
    out.push_str(&format!(
        "storage: packed binary complex weights use 2 bits vs 64 bits for complex float32 ({}x smaller)\n",
        report.storage_ratio
    ));
    out
}
