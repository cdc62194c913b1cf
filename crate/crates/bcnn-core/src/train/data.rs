//! Dataset ingestion: IDX (MNIST layout), CIFAR-10 binary batches, a
//! deterministic synthetic digit corpus written as genuine IDX files, and
//! per-channel standardization.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::RealTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Read;
use std::path::Path;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const CIFAR_RECORD: usize = 3073; // label byte + 3 * 32 * 32 pixels

/// Labeled image set with images in (N, C, H, W) layout.
#[derive(Debug, Clone)]
pub struct Dataset<S: Scalar> {
    pub images: RealTensor<S>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(images: RealTensor<S>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let n = images.shape().first().copied().unwrap_or(0);
        if n != labels.len() {
            return Err(Error::Data(format!(
                "{n} images but {} labels",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self { images, labels, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Gathers the given sample indices into a contiguous batch.
    pub fn batch(&self, idxs: &[usize]) -> Result<(RealTensor<S>, Vec<usize>)> {
        let shape = self.images.shape();
        let per = shape[1..].iter().product::<usize>();
        let mut data = Vec::with_capacity(idxs.len() * per);
        let mut labels = Vec::with_capacity(idxs.len());
        for &i in idxs {
            if i >= self.len() {
                return Err(Error::Data(format!("sample index {i} out of range")));
            }
            data.extend_from_slice(&self.images.data()[i * per..(i + 1) * per]);
            labels.push(self.labels[i]);
        }
        let mut bshape = vec![idxs.len()];
        bshape.extend_from_slice(&shape[1..]);
        Ok((RealTensor::from_vec(&bshape, data)?, labels))
    }
}

fn read_be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Data(format!(
            "truncated file: {what} needs bytes {offset}..{end}, file has {}",
            bytes.len()
        )));
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?
        .read_to_end(&mut buf)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(buf)
}

/// Parses an IDX image file: big-endian magic 0x00000803, count, rows, cols,
/// then unsigned byte pixels. Pixels are scaled to [0, 1].
pub fn parse_idx_images<S: Scalar>(bytes: &[u8]) -> Result<RealTensor<S>> {
    let magic = read_be_u32(bytes, 0, "image magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Data(format!(
            "bad image magic {magic:#010x} at offset 0 (expected {IDX_IMAGES_MAGIC:#010x})"
        )));
    }
    let count = read_be_u32(bytes, 4, "image count")? as usize;
    let rows = read_be_u32(bytes, 8, "row count")? as usize;
    let cols = read_be_u32(bytes, 12, "column count")? as usize;
    let need = 16 + count * rows * cols;
    if bytes.len() != need {
        return Err(Error::Data(format!(
            "image payload length {} does not match header ({count} x {rows} x {cols} + 16 = {need})",
            bytes.len()
        )));
    }
    let scale = S::from_f64_c(1.0 / 255.0);
    let data: Vec<S> =
        bytes[16..].iter().map(|&b| S::from_f64_c(f64::from(b)) * scale).collect();
    RealTensor::from_vec(&[count, 1, rows, cols], data)
}

/// Parses an IDX label file: big-endian magic 0x00000801, count, bytes.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = read_be_u32(bytes, 0, "label magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Data(format!(
            "bad label magic {magic:#010x} at offset 0 (expected {IDX_LABELS_MAGIC:#010x})"
        )));
    }
    let count = read_be_u32(bytes, 4, "label count")? as usize;
    if bytes.len() != 8 + count {
        return Err(Error::Data(format!(
            "label payload length {} does not match header count {count}",
            bytes.len()
        )));
    }
    Ok(bytes[8..].iter().map(|&b| b as usize).collect())
}

/// Loads an MNIST-layout pair of IDX files.
pub fn load_idx_pair<S: Scalar>(
    images_path: &Path,
    labels_path: &Path,
    num_classes: usize,
) -> Result<Dataset<S>> {
    let images = parse_idx_images(&read_file(images_path)?)?;
    let labels = parse_idx_labels(&read_file(labels_path)?)?;
    if images.shape()[0] != labels.len() {
        return Err(Error::Data(format!(
            "{} images in {} but {} labels in {}",
            images.shape()[0],
            images_path.display(),
            labels.len(),
            labels_path.display()
        )));
    }
    Dataset::new(images, labels, num_classes)
}

/// Loads MNIST-layout data from a directory using the standard file names.
pub fn load_mnist_dir<S: Scalar>(dir: &Path, train: bool) -> Result<Dataset<S>> {
    let (images, labels) = if train {
        ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
    } else {
        ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
    };
    load_idx_pair(&dir.join(images), &dir.join(labels), 10)
}

/// Loads CIFAR-10 binary batch files (3073-byte records, plane-major RGB).
pub fn load_cifar10<S: Scalar>(paths: &[std::path::PathBuf]) -> Result<Dataset<S>> {
    let mut data: Vec<S> = Vec::new();
    let mut labels = Vec::new();
    let scale = S::from_f64_c(1.0 / 255.0);
    for path in paths {
        let bytes = read_file(path)?;
        if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
            return Err(Error::Data(format!(
                "{}: length {} is not a multiple of {CIFAR_RECORD}",
                path.display(),
                bytes.len()
            )));
        }
        for record in bytes.chunks_exact(CIFAR_RECORD) {
            let label = record[0] as usize;
            if label >= 10 {
                return Err(Error::Data(format!(
                    "{}: label byte {label} out of range",
                    path.display()
                )));
            }
            labels.push(label);
            data.extend(record[1..].iter().map(|&b| S::from_f64_c(f64::from(b)) * scale));
        }
    }
    let n = labels.len();
    Dataset::new(RealTensor::from_vec(&[n, 3, 32, 32], data)?, labels, 10)
}

/// Per-channel statistics computed on a training split, reapplied to both
/// splits so train and test share the same affine.
#[derive(Debug, Clone)]
pub struct ChannelStats<S> {
    pub mean: Vec<S>,
    pub std: Vec<S>,
}

pub fn channel_stats<S: Scalar>(images: &RealTensor<S>) -> Result<ChannelStats<S>> {
    let (n, c, h, w) = images.dims4()?;
    let plane = h * w;
    let m = S::from_usize(n * plane).unwrap();
    let mut mean = vec![S::zero(); c];
    let mut std = vec![S::zero(); c];
    for ch in 0..c {
        let mut acc = S::zero();
        for s in 0..n {
            let base = (s * c + ch) * plane;
            for p in 0..plane {
                acc += images.data()[base + p];
            }
        }
        mean[ch] = acc / m;
    }
    for ch in 0..c {
        let mut acc = S::zero();
        for s in 0..n {
            let base = (s * c + ch) * plane;
            for p in 0..plane {
                let d = images.data()[base + p] - mean[ch];
                acc += d * d;
            }
        }
        let var = acc / m;
        std[ch] = var.sqrt().max(S::from_f64_c(1e-8));
    }
    Ok(ChannelStats { mean, std })
}

pub fn standardize<S: Scalar>(images: &mut RealTensor<S>, stats: &ChannelStats<S>) -> Result<()> {
    let (n, c, h, w) = images.dims4()?;
    if stats.mean.len() != c {
        return Err(Error::Shape(format!(
            "stats cover {} channels, images have {c}",
            stats.mean.len()
        )));
    }
    let plane = h * w;
    let data = images.data_mut();
    for s in 0..n {
        for ch in 0..c {
            let base = (s * c + ch) * plane;
            for p in 0..plane {
                data[base + p] = (data[base + p] - stats.mean[ch]) / stats.std[ch];
            }
        }
    }
    Ok(())
}

/// Random pad-4 crop plus horizontal flip over a batch, in place.
pub fn augment_crop_flip<S: Scalar>(batch: &mut RealTensor<S>, rng: &mut ChaCha8Rng) -> Result<()> {
    let (n, c, h, w) = batch.dims4()?;
    let pad = 4usize;
    let plane = h * w;
    let mut scratch = vec![S::zero(); c * plane];
    for s in 0..n {
        let dy = rng.gen_range(0..=2 * pad) as isize - pad as isize;
        let dx = rng.gen_range(0..=2 * pad) as isize - pad as isize;
        let flip = rng.gen_bool(0.5);
        let img = &mut batch.data_mut()[s * c * plane..(s + 1) * c * plane];
        scratch.copy_from_slice(img);
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let sy = y as isize + dy;
                    let sx = {
                        let base = if flip { (w - 1 - x) as isize } else { x as isize };
                        base + dx
                    };
                    let v = if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                        scratch[ch * plane + sy as usize * w + sx as usize]
                    } else {
                        S::zero()
                    };
                    img[ch * plane + y * w + x] = v;
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Synthetic digit corpus
// ---------------------------------------------------------------------------

/// 5x7 glyphs for the ten digits; `#` marks lit pixels.
const GLYPHS: [[&str; 7]; 10] = [
    [".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."],
    ["..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."],
    [".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"],
    [".###.", "#...#", "....#", "..##.", "....#", "#...#", ".###."],
    ["...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."],
    ["#####", "#....", "####.", "....#", "....#", "#...#", ".###."],
    [".###.", "#....", "####.", "#...#", "#...#", "#...#", ".###."],
    ["#####", "....#", "...#.", "..#..", "..#..", "..#..", "..#.."],
    [".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."],
    [".###.", "#...#", "#...#", ".####", "....#", "....#", ".###."],
];

/// Renders one jittered 28x28 digit image as bytes.
fn render_digit(class: usize, rng: &mut ChaCha8Rng) -> [u8; 28 * 28] {
    let mut img = [0u8; 28 * 28];
    let scale = 3usize; // glyph cells become 3x3 pixel blocks (15x21 total)
    let base_x = (28 - 5 * scale) / 2;
    let base_y = (28 - 7 * scale) / 2;
    let jx = rng.gen_range(-2i32..=2);
    let jy = rng.gen_range(-2i32..=2);
    let intensity = rng.gen_range(0.75..1.0);
    for (gy, row) in GLYPHS[class].iter().enumerate() {
        for (gx, cell) in row.bytes().enumerate() {
            if cell != b'#' {
                continue;
            }
            for py in 0..scale {
                for px in 0..scale {
                    let y = base_y as i32 + (gy * scale + py) as i32 + jy;
                    let x = base_x as i32 + (gx * scale + px) as i32 + jx;
                    if (0..28).contains(&y) && (0..28).contains(&x) {
                        img[(y * 28 + x) as usize] = (intensity * 255.0) as u8;
                    }
                }
            }
        }
    }
    // light salt noise so the corpus is not exactly separable by templates
    for p in img.iter_mut() {
        let noise: f64 = rng.gen_range(0.0..0.12);
        let v = f64::from(*p) / 255.0 + noise;
        *p = (v.min(1.0) * 255.0) as u8;
    }
    img
}

fn idx_image_bytes(images: &[[u8; 28 * 28]]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * 784);
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&28u32.to_be_bytes());
    out.extend_from_slice(&28u32.to_be_bytes());
    for img in images {
        out.extend_from_slice(img);
    }
    out
}

fn idx_label_bytes(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Writes a synthetic MNIST-layout corpus (balanced classes, deterministic
/// per seed) into `dir` using the standard IDX file names. Returns the
/// (train, test) sample counts written.
pub fn write_synthetic_corpus(
    dir: &Path,
    train_n: usize,
    test_n: usize,
    seed: u64,
) -> Result<(usize, usize)> {
    std::fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut render_split = |n: usize| {
        let mut images = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % 10;
            images.push(render_digit(class, &mut rng));
            labels.push(class as u8);
        }
        (images, labels)
    };
    let (train_imgs, train_labels) = render_split(train_n);
    let (test_imgs, test_labels) = render_split(test_n);
    std::fs::write(dir.join("train-images-idx3-ubyte"), idx_image_bytes(&train_imgs))?;
    std::fs::write(dir.join("train-labels-idx1-ubyte"), idx_label_bytes(&train_labels))?;
    std::fs::write(dir.join("t10k-images-idx3-ubyte"), idx_image_bytes(&test_imgs))?;
    std::fs::write(dir.join("t10k-labels-idx1-ubyte"), idx_label_bytes(&test_labels))?;
    Ok((train_n, test_n))
}
