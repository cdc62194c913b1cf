//! Dual-bit binary complex values and the xnor-popcount kernels over them.
//!
//! A binary complex number takes one of the four values {1+i, 1-i, -1+i, -1-i}
//! and is stored as two bits: one sign bit for the real part and one for the
//! imaginary part. Vectors of sign bits are packed LSB-first into 64-bit words
//! (`PackedBitPlane`), so a +-1 dot product of length n collapses to
//!
//! ```text
//! dot(a, b) = 2 * popcount(xnor(a, b)) - n
//! ```
//!
//! and a binary complex dot product is exactly four such popcount dots plus two
//! integer additions:
//!
//! ```text
//! (x + iy) . (A + iB) = (A.x - B.y) + i(B.x + A.y)
//! ```
//!
//! All kernels are pure functions over immutable inputs and mask the final
//! partial word, so results never depend on padding bits. Accumulation is done
//! in `i32`; inner dimensions must stay below 2^30 (far beyond any layer here).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One of the four binary complex values, components in {+1, -1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinaryComplex {
    re: i8,
    im: i8,
}

impl BinaryComplex {
    pub fn new(re: i8, im: i8) -> Result<Self> {
        if (re != 1 && re != -1) || (im != 1 && im != -1) {
            return Err(Error::Domain(format!(
                "binary complex components must be +-1, got ({re}, {im})"
            )));
        }
        Ok(Self { re, im })
    }

    /// Quadrant of a full-precision complex value; sign(0) = +1.
    pub fn from_signs(re: f64, im: f64) -> Self {
        Self {
            re: if re >= 0.0 { 1 } else { -1 },
            im: if im >= 0.0 { 1 } else { -1 },
        }
    }

    pub fn re(&self) -> i8 {
        self.re
    }

    pub fn im(&self) -> i8 {
        self.im
    }

    /// Two-bit encoding: bit 0 set iff re == +1, bit 1 set iff im == +1.
    pub fn encode(&self) -> u8 {
        (u8::from(self.re == 1)) | (u8::from(self.im == 1) << 1)
    }

    pub fn decode(code: u8) -> Result<Self> {
        if code > 3 {
            return Err(Error::Domain(format!("binary complex code out of range: {code}")));
        }
        Ok(Self {
            re: if code & 1 != 0 { 1 } else { -1 },
            im: if code & 2 != 0 { 1 } else { -1 },
        })
    }
}

const WORD_BITS: usize = 64;

fn words_for(len: usize) -> usize {
    len.div_ceil(WORD_BITS)
}

/// Mask selecting the valid bits of the final word of a plane of length `len`.
fn tail_mask(len: usize) -> u64 {
    let rem = len % WORD_BITS;
    if rem == 0 {
        !0u64
    } else {
        (1u64 << rem) - 1
    }
}

/// Sign bits of one real-valued plane, packed LSB-first into 64-bit words.
///
/// Convention: bit set <=> value +1. Canonical form keeps all padding bits
/// beyond `len` zero; kernels additionally mask the final word so outputs are
/// independent of pad content either way.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedBitPlane {
    pub(crate) words: Vec<u64>,
    len: usize,
}

impl PackedBitPlane {
    pub fn zeros(len: usize) -> Self {
        Self { words: vec![0; words_for(len)], len }
    }

    /// Builds a plane from raw words, canonicalizing the padding.
    pub fn from_words(mut words: Vec<u64>, len: usize) -> Result<Self> {
        if words.len() != words_for(len) {
            return Err(Error::Shape(format!(
                "expected {} words for {len} bits, got {}",
                words_for(len),
                words.len()
            )));
        }
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(len);
        }
        Ok(Self { words, len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Zeroes padding bits beyond `len`.
    pub fn canonicalize(&mut self) {
        if let Some(last) = self.words.last_mut() {
            *last &= tail_mask(self.len);
        }
    }

    pub fn set(&mut self, idx: usize, positive: bool) {
        assert!(idx < self.len, "bit index {idx} out of range {}", self.len);
        let (w, b) = (idx / WORD_BITS, idx % WORD_BITS);
        if positive {
            self.words[w] |= 1u64 << b;
        } else {
            self.words[w] &= !(1u64 << b);
        }
    }

    /// Sign at `idx` as +1 / -1.
    pub fn sign(&self, idx: usize) -> i8 {
        assert!(idx < self.len, "bit index {idx} out of range {}", self.len);
        let (w, b) = (idx / WORD_BITS, idx % WORD_BITS);
        if (self.words[w] >> b) & 1 != 0 {
            1
        } else {
            -1
        }
    }

    /// Writes the +-1 values into `out`.
    pub fn unpack_into<S: Scalar>(&self, out: &mut [S]) {
        assert_eq!(out.len(), self.len, "unpack buffer length mismatch");
        for (i, slot) in out.iter_mut().enumerate() {
            let (w, b) = (i / WORD_BITS, i % WORD_BITS);
            *slot = if (self.words[w] >> b) & 1 != 0 { S::one() } else { -S::one() };
        }
    }

    pub fn unpack<S: Scalar>(&self) -> Vec<S> {
        let mut out = vec![S::zero(); self.len];
        self.unpack_into(&mut out);
        out
    }

    /// Plane with every sign flipped (negation of the +-1 vector).
    pub fn negated(&self) -> Self {
        let mut words: Vec<u64> = self.words.iter().map(|w| !w).collect();
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(self.len);
        }
        Self { words, len: self.len }
    }

    /// Number of +1 entries.
    pub fn count_positive(&self) -> usize {
        let mut total = 0usize;
        for (i, &w) in self.words.iter().enumerate() {
            let w = if i + 1 == self.words.len() { w & tail_mask(self.len) } else { w };
            total += w.count_ones() as usize;
        }
        total
    }
}

/// Packs the signs of a real vector: bit i set iff `v[i] >= 0` (sign(0) = +1).
pub fn pack_signs<S: Scalar>(v: &[S]) -> Result<PackedBitPlane> {
    if v.is_empty() {
        return Err(Error::Empty("pack_signs: input vector is empty".into()));
    }
    let mut plane = PackedBitPlane::zeros(v.len());
    for (i, &x) in v.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::Domain(format!("pack_signs: non-finite element at index {i}")));
        }
        if x >= S::zero() {
            plane.words[i / WORD_BITS] |= 1u64 << (i % WORD_BITS);
        }
    }
    Ok(plane)
}

fn check_same_len(a: &PackedBitPlane, b: &PackedBitPlane) -> Result<usize> {
    if a.len != b.len {
        return Err(Error::Shape(format!("plane length mismatch: {} vs {}", a.len, b.len)));
    }
    if a.len == 0 {
        return Err(Error::Empty("binary dot over empty planes".into()));
    }
    Ok(a.len)
}

/// Raw word loop shared by the public kernels. Caller guarantees equal lengths.
#[inline]
fn dot_words(a: &[u64], b: &[u64], len: usize) -> i32 {
    let mut pop = 0u32;
    let last = a.len() - 1;
    for i in 0..a.len() {
        let mut x = !(a[i] ^ b[i]);
        if i == last {
            x &= tail_mask(len);
        }
        pop += x.count_ones();
    }
    2 * pop as i32 - len as i32
}

/// +-1 dot product via xnor + popcount: `2 * popc(xnor(a, b)) - n`.
pub fn binary_dot(a: &PackedBitPlane, b: &PackedBitPlane) -> Result<i32> {
    let len = check_same_len(a, b)?;
    Ok(dot_words(&a.words, &b.words, len))
}

/// Binary complex dot product of (x + iy) with (A + iB); returns (c, d) with
/// c = A.x - B.y and d = B.x + A.y, both exact integers.
pub fn binary_complex_dot(
    x: &PackedBitPlane,
    y: &PackedBitPlane,
    a: &PackedBitPlane,
    b: &PackedBitPlane,
) -> Result<(i32, i32)> {
    let len = check_same_len(x, y)?;
    check_same_len(a, b)?;
    if x.len != a.len {
        return Err(Error::Shape(format!(
            "operand length mismatch: input {} vs weight {}",
            x.len, a.len
        )));
    }
    let ax = dot_words(&a.words, &x.words, len);
    let by = dot_words(&b.words, &y.words, len);
    let bx = dot_words(&b.words, &x.words, len);
    let ay = dot_words(&a.words, &y.words, len);
    Ok((ax - by, bx + ay))
}

/// Row-major matrix of packed sign rows, all of equal length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedMatrix {
    words: Vec<u64>,
    rows: usize,
    cols: usize,
    words_per_row: usize,
}

impl PackedMatrix {
    pub fn from_rows(rows: Vec<PackedBitPlane>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("packed matrix needs at least one row".into()));
        }
        let cols = rows[0].len;
        if cols == 0 {
            return Err(Error::Empty("packed matrix rows must be non-empty".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len != cols {
                return Err(Error::Shape(format!(
                    "row {i} has length {} but row 0 has {cols}",
                    r.len
                )));
            }
        }
        let wpr = words_for(cols);
        let mut words = Vec::with_capacity(rows.len() * wpr);
        for r in &rows {
            words.extend_from_slice(&r.words);
        }
        Ok(Self { words, rows: rows.len(), cols, words_per_row: wpr })
    }

    /// Packs each row of a dense row-major +-1 (or arbitrary-sign) matrix.
    pub fn pack_rows<S: Scalar>(data: &[S], rows: usize, cols: usize) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "dense matrix has {} elements, expected {rows}x{cols}",
                data.len()
            )));
        }
        let planes = data
            .chunks_exact(cols)
            .map(pack_signs)
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(planes)
    }

    /// Rebuilds a matrix from its serialized word stream (rows padded to
    /// whole 64-bit words, LSB-first), canonicalizing row pads.
    pub fn from_packed_words(mut words: Vec<u64>, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Empty("packed matrix dims must be positive".into()));
        }
        let wpr = words_for(cols);
        if words.len() != rows * wpr {
            return Err(Error::Shape(format!(
                "expected {} words for {rows}x{cols}, got {}",
                rows * wpr,
                words.len()
            )));
        }
        let mask = tail_mask(cols);
        for r in 0..rows {
            words[r * wpr + wpr - 1] &= mask;
        }
        Ok(Self { words, rows, cols, words_per_row: wpr })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Full word stream, row-major with per-row 64-bit padding.
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    pub fn row_words(&self, i: usize) -> &[u64] {
        let start = i * self.words_per_row;
        &self.words[start..start + self.words_per_row]
    }

    pub fn row_plane(&self, i: usize) -> PackedBitPlane {
        PackedBitPlane { words: self.row_words(i).to_vec(), len: self.cols }
    }

    /// Unpacks row `i` as +-1 values into `out` (length `cols`).
    pub fn unpack_row_into<S: Scalar>(&self, i: usize, out: &mut [S]) {
        assert_eq!(out.len(), self.cols);
        let words = self.row_words(i);
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = if (words[j / WORD_BITS] >> (j % WORD_BITS)) & 1 != 0 {
                S::one()
            } else {
                -S::one()
            };
        }
    }
}

/// Packed binary complex matrix: sign planes for the real part A and the
/// imaginary part B, identical shapes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedComplexMatrix {
    pub re: PackedMatrix,
    pub im: PackedMatrix,
}

impl PackedComplexMatrix {
    pub fn new(re: PackedMatrix, im: PackedMatrix) -> Result<Self> {
        if re.rows != im.rows || re.cols != im.cols {
            return Err(Error::Shape(format!(
                "real plane {}x{} vs imaginary plane {}x{}",
                re.rows, re.cols, im.rows, im.cols
            )));
        }
        Ok(Self { re, im })
    }

    pub fn rows(&self) -> usize {
        self.re.rows
    }

    pub fn cols(&self) -> usize {
        self.re.cols
    }
}

/// Integer-valued matrix produced by the popcount GEMM kernels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<i32>,
}

impl IntMatrix {
    pub fn get(&self, r: usize, c: usize) -> i32 {
        self.data[r * self.cols + c]
    }

    pub fn to_scalars<S: Scalar>(&self) -> Vec<S> {
        self.data.iter().map(|&v| S::from_i32(v).unwrap()).collect()
    }
}

fn check_gemm_dims(x_cols: usize, w_cols: usize) -> Result<()> {
    if x_cols != w_cols {
        return Err(Error::Shape(format!(
            "GEMM inner dimension mismatch: {x_cols} vs {w_cols}"
        )));
    }
    Ok(())
}

/// Real +-1 GEMM: `out[i][j] = binary_dot(x.row(i), w.row(j))`.
///
/// `w` is stored pre-transposed (one packed row per output neuron), so both
/// operands are traversed row-contiguously. Parallel over rows of `x`;
/// integer arithmetic keeps the result independent of thread count.
pub fn binary_gemm(x: &PackedMatrix, w: &PackedMatrix) -> Result<IntMatrix> {
    check_gemm_dims(x.cols, w.cols)?;
    let (m, n, len) = (x.rows, w.rows, x.cols);
    let mut data = vec![0i32; m * n];
    data.par_chunks_mut(n).enumerate().for_each(|(i, out_row)| {
        let xi = x.row_words(i);
        for (j, slot) in out_row.iter_mut().enumerate() {
            *slot = dot_words(xi, w.row_words(j), len);
        }
    });
    Ok(IntMatrix { rows: m, cols: n, data })
}

/// Binary complex GEMM realizing the complex product with four popcount GEMMs:
/// returns (C, D) with `C[i][j] + i D[i][j]` the complex dot of `x` row i and
/// `w` row j over +-1 entries.
pub fn binary_complex_gemm(
    x: &PackedComplexMatrix,
    w: &PackedComplexMatrix,
) -> Result<(IntMatrix, IntMatrix)> {
    check_gemm_dims(x.cols(), w.cols())?;
    let (m, n, len) = (x.rows(), w.rows(), x.cols());
    let mut c = vec![0i32; m * n];
    let mut d = vec![0i32; m * n];
    c.par_chunks_mut(n)
        .zip(d.par_chunks_mut(n))
        .enumerate()
        .for_each(|(i, (c_row, d_row))| {
            let xr = x.re.row_words(i);
            let xi = x.im.row_words(i);
            for j in 0..n {
                let ar = w.re.row_words(j);
                let bi = w.im.row_words(j);
                let ax = dot_words(ar, xr, len);
                let by = dot_words(bi, xi, len);
                let bx = dot_words(bi, xr, len);
                let ay = dot_words(ar, xi, len);
                c_row[j] = ax - by;
                d_row[j] = bx + ay;
            }
        });
    Ok((
        IntMatrix { rows: m, cols: n, data: c },
        IntMatrix { rows: m, cols: n, data: d },
    ))
}
