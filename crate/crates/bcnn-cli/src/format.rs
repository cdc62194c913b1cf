//! Deployment model files ("BCNX"): binarized weights as packed sign
//! planes, full-precision tensors as little-endian f32, with the model spec
//! and a layer table in the header and a CRC32 (IEEE) over the payload.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic  "BCNX" (4 bytes)
//! u16    format version (currently 1)
//! u32    spec length, then `key=value` lines (UTF-8)
//! u32    layer count
//!        per layer: u32 tag length + tag, u32 dim count + dims as u32
//! payload (CRC32 coverage starts here)
//!        per layer: u32 record count
//!          per record: u32 name length + name, 1 kind byte
//!            kind 0 (packed plane): u32 rows, u32 cols, u32 word count,
//!                                   words as u64 (LSB-first bit order,
//!                                   each row padded to a 64-bit boundary)
//!            kind 1 (f32): u32 count, values as f32
//! u32    CRC32 of the payload bytes
//! ```

use bcnn_core::layers::{ExportPayload, ExportRecord, LayerDescriptor, Sequential};
use bcnn_core::models::{build_model, ModelSpec};
use bcnn_core::Scalar;
use bcnn_core::{Error, Result};
use std::path::Path;

const MAGIC: &[u8; 4] = b"BCNX";
const VERSION: u16 = 1;
const KIND_PACKED: u8 = 0;
const KIND_F32: u8 = 1;

/// Parsed model file: the spec echo, one descriptor per layer, and each
/// layer's serialized records.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedModelFile {
    pub spec: ModelSpec,
    pub layers: Vec<LayerEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerEntry {
    pub descriptor: LayerDescriptor,
    pub records: Vec<ExportRecord>,
}

impl PackedModelFile {
    /// Snapshots a model for deployment. Binarized weights are reduced to
    /// their sign planes by the layers' own export rules.
    pub fn from_model<S: Scalar>(spec: &ModelSpec, model: &Sequential<S>) -> Self {
        let layers = model
            .layers()
            .iter()
            .map(|l| LayerEntry { descriptor: l.descriptor(), records: l.export_records() })
            .collect();
        Self { spec: spec.clone(), layers }
    }

    /// Rebuilds a runnable model: constructs the architecture from the spec
    /// echo, then overwrites every layer's state from the stored records.
    pub fn instantiate<S: Scalar>(&self) -> Result<Sequential<S>> {
        let mut model = build_model::<S>(&self.spec)?;
        if model.len() != self.layers.len() {
            return Err(Error::Data(format!(
                "file has {} layers, spec builds {}",
                self.layers.len(),
                model.len()
            )));
        }
        for (layer, entry) in model.layers_mut().iter_mut().zip(&self.layers) {
            let built = layer.descriptor();
            if built != entry.descriptor {
                return Err(Error::Data(format!(
                    "layer table mismatch: file declares {} {:?}, spec builds {} {:?}",
                    entry.descriptor.tag, entry.descriptor.dims, built.tag, built.dims
                )));
            }
            layer.import_records(&entry.records)?;
        }
        Ok(model)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let spec_text = self
            .spec
            .to_kv()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join("\n");
        write_str(&mut out, &spec_text);
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for entry in &self.layers {
            write_str(&mut out, &entry.descriptor.tag);
            out.extend_from_slice(&(entry.descriptor.dims.len() as u32).to_le_bytes());
            for &d in &entry.descriptor.dims {
                out.extend_from_slice(&d.to_le_bytes());
            }
        }
        let mut payload = Vec::new();
        for entry in &self.layers {
            payload.extend_from_slice(&(entry.records.len() as u32).to_le_bytes());
            for record in &entry.records {
                write_str(&mut payload, &record.name);
                match &record.payload {
                    ExportPayload::Packed { rows, cols, words } => {
                        payload.push(KIND_PACKED);
                        payload.extend_from_slice(&rows.to_le_bytes());
                        payload.extend_from_slice(&cols.to_le_bytes());
                        payload.extend_from_slice(&(words.len() as u32).to_le_bytes());
                        for w in words {
                            payload.extend_from_slice(&w.to_le_bytes());
                        }
                    }
                    ExportPayload::F32(values) => {
                        payload.push(KIND_F32);
                        payload.extend_from_slice(&(values.len() as u32).to_le_bytes());
                        for v in values {
                            payload.extend_from_slice(&v.to_le_bytes());
                        }
                    }
                }
            }
        }
        let crc = crc32fast::hash(&payload);
        out.extend_from_slice(&payload);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::Data("not a packed model file (bad magic)".into()));
        }
        let mut r = Reader { bytes, pos: 4 };
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::Data(format!("unsupported model format version {version}")));
        }
        let spec_text = r.string()?;
        let pairs: Vec<(String, String)> = spec_text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                    .ok_or_else(|| Error::Data(format!("bad spec line `{l}` in model file")))
            })
            .collect::<Result<_>>()?;
        let spec = ModelSpec::from_kv(&pairs)?;
        let layer_count = r.u32()? as usize;
        let mut descriptors = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            let tag = r.string()?;
            let dim_count = r.u32()? as usize;
            let mut dims = Vec::with_capacity(dim_count);
            for _ in 0..dim_count {
                dims.push(r.u32()?);
            }
            descriptors.push(LayerDescriptor { tag, dims });
        }

        let payload_start = r.pos;
        if bytes.len() < payload_start + 4 {
            return Err(Error::Data("model file truncated before checksum".into()));
        }
        let payload = &bytes[payload_start..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        let actual = crc32fast::hash(payload);
        if stored != actual {
            return Err(Error::Data(format!(
                "payload checksum mismatch (stored {stored:#010x}, computed {actual:#010x})"
            )));
        }

        let mut layers = Vec::with_capacity(layer_count);
        for descriptor in descriptors {
            let record_count = r.u32()? as usize;
            let mut records = Vec::with_capacity(record_count);
            for _ in 0..record_count {
                let name = r.string()?;
                let kind = r.u8()?;
                let payload = match kind {
                    KIND_PACKED => {
                        let rows = r.u32()?;
                        let cols = r.u32()?;
                        let word_count = r.u32()? as usize;
                        let mut words = Vec::with_capacity(word_count);
                        for _ in 0..word_count {
                            words.push(r.u64()?);
                        }
                        ExportPayload::Packed { rows, cols, words }
                    }
                    KIND_F32 => {
                        let count = r.u32()? as usize;
                        let mut values = Vec::with_capacity(count);
                        for _ in 0..count {
                            values.push(f32::from_le_bytes(r.take(4)?.try_into().unwrap()));
                        }
                        ExportPayload::F32(values)
                    }
                    other => {
                        return Err(Error::Data(format!(
                            "unknown record kind {other} at offset {}",
                            r.pos - 1
                        )))
                    }
                };
                records.push(ExportRecord { name, payload });
            }
            layers.push(LayerEntry { descriptor, records });
        }
        if r.pos != bytes.len() - 4 {
            return Err(Error::Data(format!(
                "model file has {} unexpected trailing payload bytes",
                bytes.len() - 4 - r.pos
            )));
        }
        Ok(Self { spec, layers })
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
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Data(format!("cannot read model file {}: {e}", path.display())))?;
        Self::decode(&bytes)
    }
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
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
                "model file truncated at offset {} (need {n} more bytes)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
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

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|e| Error::Data(format!("bad UTF-8 string in model file: {e}")))
    }
}
