use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;

const MAGIC: &[u8; 4] = b"FTS1";

/// Label prefix of heat kernel signature channels.
pub const HKS_PREFIX: &str = "hks_";

/// Per-cage-vertex input features with one label per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    /// `ñ_V x d`.
    pub values: DMatrix<f64>,
    pub labels: Vec<String>,
}

impl FeatureSet {
    pub fn new(values: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != values.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} channels",
                labels.len(),
                values.ncols()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i % values.nrows().max(1)));
        }
        Ok(Self { values, labels })
    }

    pub fn vertex_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    /// Column-wise concatenation of feature sets over the same vertices.
    pub fn concat(parts: &[FeatureSet]) -> Result<Self> {
        let n = parts.first().map_or(0, FeatureSet::vertex_count);
        if parts.iter().any(|p| p.vertex_count() != n) {
            return Err(Error::DimensionMismatch("feature sets cover different vertex counts".into()));
        }
        let d: usize = parts.iter().map(FeatureSet::width).sum();
        let mut values = DMatrix::zeros(n, d);
        let mut labels = Vec::with_capacity(d);
        let mut c = 0;
        for p in parts {
            values.columns_mut(c, p.width()).copy_from(&p.values);
            labels.extend(p.labels.iter().cloned());
            c += p.width();
        }
        Ok(Self { values, labels })
    }

    /// `FTS1` layout: magic, `ñ_V` and `d` as u32, then per label its byte
    /// length as u32 followed by UTF-8 bytes, then the values row by row as
    /// f64, little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let (n, d) = self.values.shape();
        let mut w = Writer::new(MAGIC);
        w.u32(n as u32).u32(d as u32);
        for label in &self.labels {
            w.u32(label.len() as u32).bytes(label.as_bytes());
        }
        for i in 0..n {
            for j in 0..d {
                w.f64(self.values[(i, j)]);
            }
        }
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::new(data, MAGIC)?;
        let n = r.u32()? as usize;
        let d = r.u32()? as usize;
        let mut labels = Vec::with_capacity(d);
        for _ in 0..d {
            let len = r.u32()? as usize;
            let bytes = r.bytes(len)?;
            labels.push(
                String::from_utf8(bytes.to_vec())
                    .map_err(|_| Error::Format("feature label is not UTF-8".into()))?,
            );
        }
        let mut values = Vec::with_capacity(n * d);
        for _ in 0..n * d {
            values.push(r.f64()?);
        }
        r.finish()?;
        Self::new(DMatrix::from_row_slice(n, d, &values), labels)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&data)
    }
}

/// Vertex coordinates as three channels.
pub fn position_features(mesh: &TriangleMesh) -> Result<FeatureSet> {
    let values = DMatrix::from_fn(mesh.vertex_count(), 3, |v, c| mesh.positions[v][c]);
    FeatureSet::new(values, vec!["x".into(), "y".into(), "z".into()])
}

/// Per-channel affine normalization fitted on a training set. Channels whose
/// label starts with [`HKS_PREFIX`] are log-transformed first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub labels: Vec<String>,
    pub log_scaled: Vec<bool>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(sets: &[&FeatureSet]) -> Result<Self> {
        let first = sets
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot fit a standardizer on no data".into()))?;
        let labels = first.labels.clone();
        if sets.iter().any(|s| s.labels != labels) {
            return Err(Error::DimensionMismatch("feature sets have different channels".into()));
        }
        let d = labels.len();
        let log_scaled: Vec<bool> = labels.iter().map(|l| l.starts_with(HKS_PREFIX)).collect();
        let mut mean = vec![0.0; d];
        let mut sq = vec![0.0; d];
        let mut count = 0usize;
        for s in sets {
            for row in s.values.row_iter() {
                for c in 0..d {
                    let x = transform(row[c], log_scaled[c])?;
                    mean[c] += x;
                    sq[c] += x * x;
                }
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::InvalidArgument("cannot fit a standardizer on no rows".into()));
        }
        let std = (0..d)
            .map(|c| {
                mean[c] /= count as f64;
                let var = (sq[c] / count as f64 - mean[c] * mean[c]).max(0.0);
                let s = var.sqrt();
                if s > 1e-12 * (1.0 + mean[c].abs()) {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self {
            labels,
            log_scaled,
            mean,
            std,
        })
    }

    pub fn apply(&self, set: &FeatureSet) -> Result<FeatureSet> {
        if set.labels != self.labels {
            return Err(Error::DimensionMismatch(
                "feature channels differ from the fitted standardizer".into(),
            ));
        }
        let mut values = set.values.clone();
        for (c, mut col) in values.column_iter_mut().enumerate() {
            for x in col.iter_mut() {
                *x = (transform(*x, self.log_scaled[c])? - self.mean[c]) / self.std[c];
            }
        }
        FeatureSet::new(values, set.labels.clone())
    }
}

fn transform(x: f64, log: bool) -> Result<f64> {
    if !log {
        return Ok(x);
    }
    if x > 0.0 {
        Ok(x.ln())
    } else {
        Err(Error::InvalidArgument(format!(
            "log-scaled feature channel has non-positive value {x}"
        )))
    }
}
