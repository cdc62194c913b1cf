//! Training checkpoints ("BCNT"): every trainable parameter, every running
//! statistic, the optimizer moments, and the model spec that produced them.
//! All payloads are little-endian f32 with a trailing CRC32 over the body.

use crate::error::{Error, Result};
use crate::layers::Sequential;
use crate::models::ModelSpec;
use crate::scalar::Scalar;
use crate::train::adam::Adam;
use std::path::Path;

const MAGIC: &[u8; 4] = b"BCNT";
const VERSION: u16 = 1;

/// In-memory image of a checkpoint file.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec_kv: String,
    pub epoch: u64,
    pub params: Vec<(String, Vec<f32>)>,
    pub buffers: Vec<(String, Vec<f32>)>,
    pub adam_t: u64,
    pub adam_slots: Vec<(String, Vec<f32>, Vec<f32>)>,
}

fn to_f32<S: Scalar>(xs: &[S]) -> Vec<f32> {
    xs.iter().map(|x| x.to_f64_c() as f32).collect()
}

fn from_f32<S: Scalar>(xs: &[f32]) -> Vec<S> {
    xs.iter().map(|&x| S::from_f64_c(f64::from(x))).collect()
}

impl Checkpoint {
    /// Snapshots the current training state.
    pub fn capture<S: Scalar>(
        spec: &ModelSpec,
        model: &mut Sequential<S>,
        opt: &Adam<S>,
        epoch: u64,
    ) -> Self {
        let mut params = Vec::new();
        model.visit_params(&mut |view| {
            params.push((view.name, to_f32(&view.param.data)));
        });
        let mut buffers = Vec::new();
        model.visit_buffers(&mut |view| {
            buffers.push((view.name, to_f32(view.values)));
        });
        let (adam_t, slots) = opt.export_state();
        let adam_slots = slots
            .into_iter()
            .map(|(name, m, v)| (name, to_f32(&m), to_f32(&v)))
            .collect();
        let spec_kv = spec
            .to_kv()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join("\n");
        Self { spec_kv, epoch, params, buffers, adam_t, adam_slots }
    }

    /// Writes parameters, buffers, and optimizer moments back into a model
    /// built from the same spec. Names and lengths are checked positionally.
    pub fn restore<S: Scalar>(&self, model: &mut Sequential<S>, opt: &mut Adam<S>) -> Result<()> {
        let mut idx = 0usize;
        let mut result = Ok(());
        model.visit_params(&mut |view| {
            if result.is_err() {
                return;
            }
            match self.params.get(idx) {
                Some((name, data)) if *name == view.name && data.len() == view.param.data.len() => {
                    view.param.data = from_f32(data);
                }
                Some((name, data)) => {
                    result = Err(Error::Data(format!(
                        "checkpoint slot {idx} is {name} ({} values), model expects {} ({} values)",
                        data.len(),
                        view.name,
                        view.param.data.len()
                    )));
                }
                None => {
                    result = Err(Error::Data(
                        "checkpoint has fewer parameters than the model".into(),
                    ));
                }
            }
            idx += 1;
        });
        result?;
        if idx != self.params.len() {
            return Err(Error::Data(
                "checkpoint has more parameters than the model".into(),
            ));
        }

        let mut bidx = 0usize;
        let mut result = Ok(());
        model.visit_buffers(&mut |view| {
            if result.is_err() {
                return;
            }
            match self.buffers.get(bidx) {
                Some((name, data)) if *name == view.name && data.len() == view.values.len() => {
                    *view.values = from_f32(data);
                }
                _ => {
                    result = Err(Error::Data(format!(
                        "checkpoint buffer {bidx} does not match model buffer {}",
                        view.name
                    )));
                }
            }
            bidx += 1;
        });
        result?;
        if bidx != self.buffers.len() {
            return Err(Error::Data("checkpoint has extra buffers".into()));
        }

        let slots = self
            .adam_slots
            .iter()
            .map(|(name, m, v)| (name.clone(), from_f32::<S>(m), from_f32::<S>(v)))
            .collect();
        opt.import_state(self.adam_t, slots)
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        let pairs: Vec<(String, String)> = self
            .spec_kv
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                    .ok_or_else(|| Error::Data(format!("bad spec line `{l}` in checkpoint")))
            })
            .collect::<Result<_>>()?;
        ModelSpec::from_kv(&pairs)
    }

    // -- binary encoding -----------------------------------------------------

    fn encode(&self) -> Vec<u8> {
        let mut body = Vec::new();
        body.extend_from_slice(&VERSION.to_le_bytes());
        write_bytes(&mut body, self.spec_kv.as_bytes());
        body.extend_from_slice(&self.epoch.to_le_bytes());
        write_named_section(&mut body, &self.params);
        write_named_section(&mut body, &self.buffers);
        body.extend_from_slice(&self.adam_t.to_le_bytes());
        body.extend_from_slice(&(self.adam_slots.len() as u32).to_le_bytes());
        for (name, m, v) in &self.adam_slots {
            write_bytes(&mut body, name.as_bytes());
            body.extend_from_slice(&(m.len() as u32).to_le_bytes());
            for x in m {
                body.extend_from_slice(&x.to_le_bytes());
            }
            for x in v {
                body.extend_from_slice(&x.to_le_bytes());
            }
        }
        let mut out = Vec::with_capacity(8 + body.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&body);
        out.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
        out
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 10 || &bytes[..4] != MAGIC {
            return Err(Error::Data("not a checkpoint file (bad magic)".into()));
        }
        let body = &bytes[4..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(Error::Data(format!(
                "checkpoint checksum mismatch (stored {stored:#010x}, computed {actual:#010x})"
            )));
        }
        let mut r = Reader { bytes: body, pos: 0 };
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::Data(format!("unsupported checkpoint version {version}")));
        }
        let spec_kv = String::from_utf8(r.bytes_block()?.to_vec())
            .map_err(|e| Error::Data(format!("checkpoint spec block: {e}")))?;
        let epoch = r.u64()?;
        let params = read_named_section(&mut r)?;
        let buffers = read_named_section(&mut r)?;
        let adam_t = r.u64()?;
        let n_slots = r.u32()? as usize;
        let mut adam_slots = Vec::with_capacity(n_slots);
        for _ in 0..n_slots {
            let name = String::from_utf8(r.bytes_block()?.to_vec())
                .map_err(|e| Error::Data(format!("checkpoint slot name: {e}")))?;
            let len = r.u32()? as usize;
            let m = r.f32s(len)?;
            let v = r.f32s(len)?;
            adam_slots.push((name, m, v));
        }
        if r.pos != body.len() {
            return Err(Error::Data(format!(
                "checkpoint has {} trailing bytes",
                body.len() - r.pos
            )));
        }
        Ok(Self { spec_kv, epoch, params, buffers, adam_t, adam_slots })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

fn write_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}

fn write_named_section(out: &mut Vec<u8>, entries: &[(String, Vec<f32>)]) {
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, data) in entries {
        write_bytes(out, name.as_bytes());
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        for x in data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Data(format!(
                "checkpoint truncated at offset {} (need {n} more bytes)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn bytes_block(&mut self) -> Result<&'a [u8]> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(4 * n)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn read_named_section(r: &mut Reader<'_>) -> Result<Vec<(String, Vec<f32>)>> {
    let n = r.u32()? as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let name = String::from_utf8(r.bytes_block()?.to_vec())
            .map_err(|e| Error::Data(format!("checkpoint entry name: {e}")))?;
        let len = r.u32()? as usize;
        out.push((name, r.f32s(len)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_model, ModelSpec};
    use crate::train::adam::AdamConfig;

    fn small_spec() -> ModelSpec {
        ModelSpec { seed: 5, ..ModelSpec::default() }
    }

    #[test]
    fn capture_restore_roundtrip() {
        let spec = small_spec();
        let mut model = build_model::<f32>(&spec).unwrap();
        let mut opt = Adam::new(&mut model, AdamConfig::default());
        let ckpt = Checkpoint::capture(&spec, &mut model, &opt, 0);

        // perturb, then restore
        model.visit_params(&mut |view| {
            view.param.data.iter_mut().for_each(|x| *x += 0.25);
        });
        ckpt.restore(&mut model, &mut opt).unwrap();
        let again = Checkpoint::capture(&spec, &mut model, &opt, 0);
        assert_eq!(ckpt, again);
    }

    #[test]
    fn file_roundtrip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small_spec();
        let mut model = build_model::<f32>(&spec).unwrap();
        let opt = Adam::new(&mut model, AdamConfig::default());
        let ckpt = Checkpoint::capture(&spec, &mut model, &opt, 3);
        let path = dir.path().join("a.bcnt");
        ckpt.write(&path).unwrap();
        let back = Checkpoint::read(&path).unwrap();
        assert_eq!(ckpt, back);
        assert_eq!(back.epoch, 3);
        assert_eq!(back.spec().unwrap(), spec);
        // rewriting produces the same bytes
        let path2 = dir.path().join("b.bcnt");
        back.write(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn corruption_detected() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small_spec();
        let mut model = build_model::<f32>(&spec).unwrap();
        let opt = Adam::new(&mut model, AdamConfig::default());
        let path = dir.path().join("c.bcnt");
        Checkpoint::capture(&spec, &mut model, &opt, 0).write(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        let err = Checkpoint::read(&path).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
    }

    #[test]
    fn restore_rejects_mismatched_model() {
        let spec = small_spec();
        let mut model = build_model::<f32>(&spec).unwrap();
        let opt = Adam::new(&mut model, AdamConfig::default());
        let ckpt = Checkpoint::capture(&spec, &mut model, &opt, 0);

        let mut other_spec = small_spec();
        other_spec.num_classes = 7;
        let mut other = build_model::<f32>(&other_spec).unwrap();
        let mut other_opt = Adam::new(&mut other, AdamConfig::default());
        assert!(ckpt.restore(&mut other, &mut other_opt).is_err());
    }
}
