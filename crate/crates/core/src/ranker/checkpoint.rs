//! Self-contained model checkpoints.
//!
//! Layout, integers little-endian, floats IEEE-754 binary32 little-endian:
//!
//! ```text
//! magic   "RNKR" (4 bytes)
//! version u16
//! extractor identity (u32 length + UTF-8 bytes)
//! D       u32 (input feature dimension)
//! n_dims  u32, then the full dimension chain as u32 each (dims[0] == D)
//! normalizer mean: D x f64, then normalizer std: D x f64
//! per layer, in order: weights (out_dim x in_dim row-major f32), biases
//! ```
//!
//! Parameters are stored exactly as held in memory, so a save/load round
//! trip reproduces bit-identical scores.

use std::fs;
use std::path::Path;

use crate::features::NormStats;
use crate::imgio;

use super::{Layer, Mlp, RankerError, RankerModel};

pub const MAGIC: &[u8; 4] = b"RNKR";
pub const VERSION: u16 = 1;

/// Serializes the model to `path` (temp file + atomic rename).
pub fn save_checkpoint(model: &RankerModel, path: &Path) -> Result<(), RankerError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(model.extractor.len() as u32).to_le_bytes());
    buf.extend_from_slice(model.extractor.as_bytes());
    let dims = model.mlp.dims();
    buf.extend_from_slice(&(dims[0] as u32).to_le_bytes());
    buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for stats in [&model.norm.mean, &model.norm.std] {
        if stats.len() != dims[0] {
            return Err(RankerError::Checkpoint(format!(
                "normalizer dimension {} does not match input dimension {}",
                stats.len(),
                dims[0]
            )));
        }
        for &v in stats {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    for layer in &model.mlp.layers {
        for &w in &layer.weights {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        for &b in &layer.biases {
            buf.extend_from_slice(&b.to_le_bytes());
        }
    }
    imgio::write_atomic(path, &buf).map_err(|e| RankerError::Checkpoint(e.to_string()))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], RankerError> {
        if self.pos + n > self.bytes.len() {
            return Err(RankerError::Checkpoint(format!(
                "truncated while reading {what} (offset {}, need {n} bytes, have {})",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> Result<u16, RankerError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, RankerError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>, RankerError> {
        let raw = self.take(n * 4, what)?;
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RankerError::Checkpoint(format!(
                "non-finite value in {what}"
            )));
        }
        Ok(values)
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>, RankerError> {
        let raw = self.take(n * 8, what)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RankerError::Checkpoint(format!(
                "non-finite value in {what}"
            )));
        }
        Ok(values)
    }
}

/// Loads a checkpoint, validating magic, version, the dimension chain, and
/// parameter finiteness. A truncated or oversized file never yields a
/// partial model.
pub fn load_checkpoint(path: &Path) -> Result<RankerModel, RankerError> {
    let bytes = fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(RankerError::Checkpoint(format!(
            "bad magic {magic:?}, expected \"RNKR\" — not a checkpoint file"
        )));
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(RankerError::Checkpoint(format!(
            "unsupported version {version} (this build reads {VERSION})"
        )));
    }
    let name_len = r.u32("extractor name length")? as usize;
    let extractor = String::from_utf8(r.take(name_len, "extractor name")?.to_vec())
        .map_err(|_| RankerError::Checkpoint("extractor name is not valid UTF-8".into()))?;
    let input_dim = r.u32("input dimension")? as usize;
    let n_dims = r.u32("dimension count")? as usize;
    if !(2..=64).contains(&n_dims) {
        return Err(RankerError::Checkpoint(format!(
            "implausible dimension count {n_dims}"
        )));
    }
    let mut dims = Vec::with_capacity(n_dims);
    for i in 0..n_dims {
        dims.push(r.u32(&format!("dims[{i}]"))? as usize);
    }
    if dims[0] != input_dim {
        return Err(RankerError::Checkpoint(format!(
            "dimension chain starts at {} but input dimension says {input_dim}",
            dims[0]
        )));
    }
    if *dims.last().unwrap() != 1 {
        return Err(RankerError::Checkpoint("output dimension must be 1".into()));
    }
    if dims.contains(&0) {
        return Err(RankerError::Checkpoint("zero layer dimension".into()));
    }

    let mean = r.f64s(input_dim, "normalizer mean")?;
    let std = r.f64s(input_dim, "normalizer std")?;
    let mut layers = Vec::with_capacity(n_dims - 1);
    for w in dims.windows(2) {
        let weights = r.f32s(w[0] * w[1], "layer weights")?;
        let biases = r.f32s(w[1], "layer biases")?;
        layers.push(Layer { weights, biases });
    }
    if r.pos != bytes.len() {
        return Err(RankerError::Checkpoint(format!(
            "{} trailing bytes after parameters",
            bytes.len() - r.pos
        )));
    }

    let mlp = Mlp { dims, layers };
    Ok(RankerModel {
        mlp,
        norm: NormStats { mean, std },
        extractor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;
    use rand::Rng;

    fn sample_model(seed: u64) -> RankerModel {
        let mut rng = crate::ranker::training_rng(seed);
        let mlp = Mlp::init_fan_in(&[6, 5, 3, 1], &mut rng).unwrap();
        let norm = NormStats {
            mean: (0..6).map(|i| i as f64 * 0.3).collect(),
            std: (0..6).map(|i| 1.0 + i as f64 * 0.1).collect(),
        };
        RankerModel {
            mlp,
            norm,
            extractor: "analytic-aesthetic+analytic-technical".into(),
        }
    }

    #[test]
    fn round_trip_is_score_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.rnkr");
        let model = sample_model(3);
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, model);

        let mut rng = crate::ranker::training_rng(17);
        for _ in 0..100 {
            let v = FeatureVector {
                values: (0..6).map(|_| rng.random_range(-5.0f32..5.0)).collect(),
            };
            let a = model.score(&v).unwrap();
            let b = loaded.score(&v).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncation_rejected_at_every_length() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.rnkr");
        let model = sample_model(5);
        save_checkpoint(&model, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let cut = dir.path().join("cut.rnkr");
        for len in [0, 3, 4, 9, 20, bytes.len() / 2, bytes.len() - 1] {
            fs::write(&cut, &bytes[..len]).unwrap();
            assert!(
                matches!(load_checkpoint(&cut), Err(RankerError::Checkpoint(_))),
                "length {len} accepted"
            );
        }
    }

    #[test]
    fn bad_magic_version_and_trailing_bytes_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.rnkr");
        let model = sample_model(7);
        save_checkpoint(&model, &path).unwrap();
        let bytes = fs::read(&path).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        fs::write(&path, &bad).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");

        let mut bad = bytes.clone();
        bad[4] = 0xFF;
        fs::write(&path, &bad).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");

        let mut bad = bytes.clone();
        bad.push(0);
        fs::write(&path, &bad).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("trailing"), "{err}");
    }

    #[test]
    fn non_finite_parameters_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.rnkr");
        let mut model = sample_model(9);
        model.mlp.layers[0].weights[2] = f32::NAN;
        save_checkpoint(&model, &path).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("non-finite"), "{err}");
    }

    #[test]
    fn extractor_mismatch_surfaces_a_warning() {
        let model = sample_model(11);
        assert!(model
            .extractor_mismatch("analytic-aesthetic+analytic-technical")
            .is_none());
        let warn = model.extractor_mismatch("other+other").unwrap();
        assert!(warn.contains("other+other"));
    }
}
