//! Procedurally generated fixture corpus.
//!
//! Everything here is synthesized on demand from a seed (gradient fields,
//! stripes, sharp disk overlays), so the full pipeline can run and be
//! tested offline without shipping binary assets. Degraded records are
//! manufactured by distorting clean patterns and writing the result to
//! disk.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{Bucket, ImageRecord, Manifest, Split};
use crate::distortion::{self, DistortionKind, DistortionSpec};
use crate::imgio::{self, ImgIoError};
use crate::raster::{hsv_to_rgb, RgbImage};

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error(transparent)]
    ImgIo(#[from] ImgIoError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Distortion(#[from] distortion::DistortionError),
}

/// Shape of a generated corpus. Counts are per bucket for the train split;
/// each val style gets one studio, one good, and one (distorted) bad image;
/// test images are clean patterns with votes assigned so proxy scores exist.
#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub train_studio: usize,
    pub train_good: usize,
    pub train_bad: usize,
    pub val_styles: usize,
    pub test_clean: usize,
    /// Test styles carrying a real quality gradient: four images per style
    /// (clean, mild, bad, worse) with vote ratios to match, so evaluation
    /// on the fixture has meaningful proxy ground truth.
    pub test_tiered: usize,
    pub image_size: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            train_studio: 8,
            train_good: 8,
            train_bad: 4,
            val_styles: 3,
            test_clean: 6,
            test_tiered: 0,
            image_size: 96,
            seed: 7,
        }
    }
}

/// A clean, colorful synthetic pattern: gradient background plus a few
/// sharp-edged shapes, deterministic in `seed`.
pub fn pattern_image(width: usize, height: usize, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hue_a: f64 = rng.random_range(0.0..1.0);
    let hue_b: f64 = (hue_a + rng.random_range(0.2..0.5)).rem_euclid(1.0);
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (sin, cos) = angle.sin_cos();
    let stripes = rng.random_bool(0.5);
    let period = rng.random_range(6..14) as f64;

    let mut img = RgbImage::from_fn(width, height, |x, y| {
        let u = (x as f64 * cos + y as f64 * sin) / (width.max(height) as f64);
        let t = (u * 0.5 + 0.5).clamp(0.0, 1.0);
        let hue = hue_a + (hue_b - hue_a) * t;
        let sat = 0.55 + 0.25 * t;
        let mut val = 0.45 + 0.4 * t;
        if stripes && ((x as f64 / period) as usize).is_multiple_of(2) {
            val *= 0.75;
        }
        let (r, g, b) = hsv_to_rgb(hue.rem_euclid(1.0), sat, val);
        [r as f32, g as f32, b as f32]
    })
    .expect("nonzero dims");

    // Sharp-edged disks give the pattern real gradients and texture.
    for _ in 0..rng.random_range(2..5usize) {
        let cx = rng.random_range(0..width) as f64;
        let cy = rng.random_range(0..height) as f64;
        let radius = rng.random_range(width as f64 * 0.06..width as f64 * 0.18);
        let hue: f64 = rng.random_range(0.0..1.0);
        let (r, g, b) = hsv_to_rgb(hue, 0.85, 0.9);
        let rgb = [r as f32, g as f32, b as f32];
        for y in 0..height {
            for x in 0..width {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                if dx * dx + dy * dy <= radius * radius {
                    img.put(x, y, rgb);
                }
            }
        }
    }
    img
}

/// Mild degradation for "good but not studio" images: a soft blur and a
/// touch of grain, both well below the bad-image ranges. Gives the corpus a
/// real studio > good-UGC quality ordering instead of two identical clean
/// distributions.
pub fn mild_chain(seed: u64) -> Vec<DistortionSpec> {
    vec![
        DistortionSpec {
            kind: DistortionKind::GaussianBlur,
            param: Some(0.45),
            angle_degrees: None,
            seed,
        },
        DistortionSpec {
            kind: DistortionKind::GaussianNoise,
            param: Some(0.04),
            angle_degrees: None,
            seed: seed.wrapping_add(1),
        },
    ]
}

/// Bad-image chain with variety: two specs drawn from the full sampling
/// distribution.
pub fn sampled_bad_chain(seed: u64) -> Vec<DistortionSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        distortion::sample_spec_with(&mut rng),
        distortion::sample_spec_with(&mut rng),
    ]
}

struct SeedSeq(u64);

impl SeedSeq {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x517c_c1b7_2722_0a95);
        self.0
    }
}

/// Generates the corpus under `dir`, writes `manifest.jsonl`, and returns
/// the manifest. Paths in the manifest are absolute.
pub fn generate_corpus(dir: &Path, spec: &CorpusSpec) -> Result<Manifest, FixtureError> {
    fs::create_dir_all(dir)?;
    let mut records = Vec::new();
    let mut seeds = SeedSeq(spec.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let size = spec.image_size;

    let write_clean = |name: &str, seed: u64| -> Result<String, FixtureError> {
        let path = dir.join(format!("{name}.png"));
        let img = pattern_image(size, size, seed);
        imgio::save_png(&img, &path)?;
        Ok(path.display().to_string())
    };
    let write_chained =
        |name: &str, seed: u64, chain: &[DistortionSpec]| -> Result<String, FixtureError> {
            let path = dir.join(format!("{name}.png"));
            let img = distortion::distort_chain(&pattern_image(size, size, seed), chain)?;
            imgio::save_png(&img, &path)?;
            Ok(path.display().to_string())
        };

    // Train: studio and good are clean; bad is a degraded clean pattern.
    for i in 0..spec.train_studio {
        let id = format!("studio-{i:03}");
        let path = write_clean(&id, seeds.next())?;
        records.push(ImageRecord {
            id,
            path,
            bucket: Bucket::Studio,
            style_id: format!("style-{:02}", i % 8),
            has_human: None,
            upvotes: 0,
            downvotes: 0,
            split: Split::Train,
        });
    }
    for i in 0..spec.train_good {
        let id = format!("good-{i:03}");
        let path = write_chained(&id, seeds.next(), &mild_chain(500 + i as u64))?;
        records.push(ImageRecord {
            id,
            path,
            bucket: Bucket::UgcGood,
            style_id: format!("style-{:02}", i % 8),
            has_human: Some(i % 2 == 0),
            upvotes: 5,
            downvotes: 1,
            split: Split::Train,
        });
    }
    for i in 0..spec.train_bad {
        let id = format!("bad-{i:03}");
        let path = write_chained(&id, seeds.next(), &sampled_bad_chain(900 + i as u64))?;
        records.push(ImageRecord {
            id,
            path,
            bucket: Bucket::UgcBad,
            style_id: format!("style-{:02}", i % 8),
            has_human: Some(i % 2 == 0),
            upvotes: 1,
            downvotes: 6,
            split: Split::Train,
        });
    }

    // Val: one (studio, good, bad) triple per style, mirroring the train
    // quality ordering (clean > mild > sampled-chain bad).
    for s in 0..spec.val_styles {
        let style = format!("val-style-{s:02}");
        let mut push_val = |id: String, path: String, bucket| {
            records.push(ImageRecord {
                id,
                path,
                bucket,
                style_id: style.clone(),
                has_human: None,
                upvotes: 0,
                downvotes: 0,
                split: Split::Val,
            });
        };
        let id = format!("val-studio-{s:03}");
        let path = write_clean(&id, seeds.next())?;
        push_val(id, path, Bucket::Studio);
        let id = format!("val-good-{s:03}");
        let path = write_chained(&id, seeds.next(), &mild_chain(7500 + s as u64))?;
        push_val(id, path, Bucket::UgcGood);
        let id = format!("val-bad-{s:03}");
        let path = write_chained(&id, seeds.next(), &sampled_bad_chain(7700 + s as u64))?;
        push_val(id, path, Bucket::UgcBad);
    }

    // Test: clean images with votes so proxy scores are defined.
    for i in 0..spec.test_clean {
        let id = format!("test-{i:03}");
        let path = write_clean(&id, seeds.next())?;
        records.push(ImageRecord {
            id,
            path,
            bucket: Bucket::UgcGood,
            style_id: format!("test-style-{:02}", i % 3),
            has_human: None,
            upvotes: 8 + (i as u64 % 3),
            downvotes: 1 + (i as u64 % 2),
            split: Split::Test,
        });
    }

    // Tiered test styles: four quality levels sharing one pattern family,
    // votes tracking the degradation level.
    for sidx in 0..spec.test_tiered {
        struct Tier {
            tag: &'static str,
            chain: Option<Vec<DistortionSpec>>,
            upvotes: u64,
            downvotes: u64,
            bucket: Bucket,
        }
        let style = format!("tier-style-{sidx:02}");
        let worse = {
            let mut chain = sampled_bad_chain(3600 + sidx as u64);
            chain.extend(mild_chain(3900 + sidx as u64));
            chain
        };
        let tiers = [
            Tier {
                tag: "clean",
                chain: None,
                upvotes: 9,
                downvotes: 1,
                bucket: Bucket::UgcGood,
            },
            Tier {
                tag: "mild",
                chain: Some(mild_chain(3000 + sidx as u64)),
                upvotes: 6,
                downvotes: 4,
                bucket: Bucket::UgcGood,
            },
            Tier {
                tag: "bad",
                chain: Some(sampled_bad_chain(3300 + sidx as u64)),
                upvotes: 2,
                downvotes: 8,
                bucket: Bucket::UgcBad,
            },
            Tier {
                tag: "worse",
                chain: Some(worse),
                upvotes: 1,
                downvotes: 9,
                bucket: Bucket::UgcBad,
            },
        ];
        for tier in tiers {
            let id = format!("tier-{sidx:03}-{}", tier.tag);
            let seed = seeds.next();
            let path = match &tier.chain {
                Some(chain) => write_chained(&id, seed, chain)?,
                None => write_clean(&id, seed)?,
            };
            records.push(ImageRecord {
                id,
                path,
                bucket: tier.bucket,
                style_id: style.clone(),
                has_human: None,
                upvotes: tier.upvotes,
                downvotes: tier.downvotes,
                split: Split::Test,
            });
        }
    }

    let manifest = Manifest {
        records,
        source_uri: dir.display().to_string(),
    };
    let file = fs::File::create(dir.join("manifest.jsonl"))?;
    crate::corpus::save_manifest(&manifest, std::io::BufWriter::new(file))
        .map_err(|e| FixtureError::Io(std::io::Error::other(e.to_string())))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_manifest, LoadOptions};

    #[test]
    fn patterns_are_deterministic_and_distinct() {
        let a = pattern_image(64, 64, 5);
        let b = pattern_image(64, 64, 5);
        let c = pattern_image(64, 64, 6);
        assert_eq!(a.data(), b.data());
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn corpus_round_trips_and_decodes() {
        let dir = tempfile::tempdir().unwrap();
        let spec = CorpusSpec {
            train_studio: 2,
            train_good: 2,
            train_bad: 1,
            val_styles: 1,
            test_clean: 2,
            test_tiered: 1,
            ..Default::default()
        };
        let manifest = generate_corpus(dir.path(), &spec).unwrap();
        assert_eq!(manifest.records.len(), 2 + 2 + 1 + 3 + 2 + 4);

        let file = std::fs::File::open(dir.path().join("manifest.jsonl")).unwrap();
        let loaded = load_manifest(
            std::io::BufReader::new(file),
            "fixture",
            LoadOptions::default(),
        )
        .unwrap();
        assert_eq!(loaded.records, manifest.records);

        for r in &manifest.records {
            let img = imgio::load_rgb(Path::new(&r.path)).unwrap();
            assert!(
                img.width() >= 38 && img.height() >= 38,
                "implausibly small {}",
                r.id
            );
            if r.bucket != Bucket::UgcBad {
                assert_eq!((img.width(), img.height()), (96, 96));
            }
        }
    }
}
