//! Per-epoch metrics records, serialized as JSON lines.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Maps non-finite floats to JSON null (and null back to NaN) so diverged
/// epochs still produce parseable lines.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// One line of the metrics log. `top5` is only populated when the task has
/// at least 100 classes. `status` is "ok" for a completed epoch and "NA"
/// when training diverged (non-finite loss or gradient).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    #[serde(with = "nan_as_null")]
    pub train_loss: f64,
    #[serde(with = "nan_as_null")]
    pub test_loss: f64,
    pub top1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top5: Option<f64>,
    pub lr: f64,
    pub wall_time: f64,
    pub status: String,
}

impl MetricsRecord {
    pub fn diverged(epoch: usize, lr: f64, wall_time: f64) -> Self {
        Self {
            epoch,
            train_loss: f64::NAN,
            test_loss: f64::NAN,
            top1: 0.0,
            top5: None,
            lr,
            wall_time,
            status: "NA".into(),
        }
    }
}

/// Appends one record per call to a JSONL file.
pub struct MetricsWriter {
    file: std::fs::File,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        Ok(Self { file: std::fs::File::create(path)? })
    }

    pub fn append(&mut self, record: &MetricsRecord) -> Result<()> {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::Data(format!("metrics serialization: {e}")))?;
        writeln!(self.file, "{line}")?;
        self.file.flush()?;
        Ok(())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| Error::Data(format!("metrics line: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.jsonl");
        let rec = MetricsRecord {
            epoch: 1,
            train_loss: 2.1,
            test_loss: 2.0,
            top1: 0.42,
            top5: None,
            lr: 5e-3,
            wall_time: 1.5,
            status: "ok".into(),
        };
        let mut w = MetricsWriter::create(&path).unwrap();
        w.append(&rec).unwrap();
        w.append(&MetricsRecord { epoch: 2, top5: Some(0.9), ..rec.clone() }).unwrap();
        let back = read_metrics(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0], rec);
        assert_eq!(back[1].top5, Some(0.9));
        // top5 key entirely absent when None
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(!text.lines().next().unwrap().contains("top5"));
    }

    #[test]
    fn diverged_record_is_na() {
        let rec = MetricsRecord::diverged(3, 1e-3, 0.2);
        assert_eq!(rec.status, "NA");
        assert!(rec.train_loss.is_nan());
        let json = serde_json::to_string(&rec).unwrap();
        assert!(json.contains("\"status\":\"NA\""));
        assert!(json.contains("\"train_loss\":null"));
        let back: MetricsRecord = serde_json::from_str(&json).unwrap();
        assert!(back.train_loss.is_nan());
    }
}
