//! Per-image feature vectors for the ranking network.
//!
//! A vector concatenates, in order: aesthetic backbone embedding (B values),
//! aesthetic 10-bin score distribution, technical backbone embedding (B),
//! technical distribution, then original height, width, and aspect ratio
//! (width/height) — `D = 2*(B + 10) + 3` total. Geometry is captured before
//! the 224x224 rescale so the network still sees the source dimensions.
//!
//! Backbones are pluggable behind [`FeatureExtractor`]; the built-in
//! [`analytic::AnalyticExtractor`] needs no model files, so the whole
//! pipeline runs offline.

pub mod analytic;
pub mod store;

use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::imgio::{self, ImgIoError};
use crate::raster::RgbImage;

/// Side length images are rescaled to before running the backbones.
pub const RESCALE_SIZE: usize = 224;

/// Number of trailing geometry features (height, width, aspect ratio).
pub const GEOMETRY_DIMS: usize = 3;

/// Bins in a score distribution (scores 1..=10).
pub const SCORE_BINS: usize = 10;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid score distribution: {0}")]
    InvalidDistribution(String),
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("extractor \"{name}\" violated its contract: {msg}")]
    ContractViolation { name: String, msg: String },
    #[error("normalizer needs at least {needed} vectors, got {got}")]
    TooFewVectors { needed: usize, got: usize },
    #[error("feature store: {0}")]
    Store(String),
    #[error("onnx extractors are not compiled into this build; use \"analytic\"")]
    OnnxNotBuilt,
    #[error("unknown extractor spec \"{0}\" (expected \"analytic\" or \"onnx:PATH_A,PATH_T\")")]
    UnknownExtractor(String),
    #[error(transparent)]
    ImgIo(#[from] ImgIoError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Probability distribution over the integer scores 1..=10.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDistribution {
    probs: [f64; SCORE_BINS],
}

impl ScoreDistribution {
    /// Validates bounds and normalization (sum within 1e-5 of 1).
    pub fn new(probs: [f64; SCORE_BINS]) -> Result<Self, FeatureError> {
        for (i, &p) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(FeatureError::InvalidDistribution(format!(
                    "probs[{i}] = {p} outside [0,1]"
                )));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-5 {
            return Err(FeatureError::InvalidDistribution(format!("sum {sum} != 1")));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64; SCORE_BINS] {
        &self.probs
    }

    pub fn uniform() -> Self {
        Self {
            probs: [0.1; SCORE_BINS],
        }
    }

    /// All mass on integer `score` in 1..=10.
    pub fn one_hot(score: usize) -> Result<Self, FeatureError> {
        if !(1..=SCORE_BINS).contains(&score) {
            return Err(FeatureError::InvalidDistribution(format!(
                "one-hot score {score} outside 1..=10"
            )));
        }
        let mut probs = [0.0; SCORE_BINS];
        probs[score - 1] = 1.0;
        Ok(Self { probs })
    }
}

/// Expected value of the score distribution: sum of (i+1) * probs[i].
/// Kahan-compensated so the canonical cases (uniform, one-hot) come out
/// exactly.
pub fn expected_score(dist: &ScoreDistribution) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for (i, &p) in dist.probs.iter().enumerate() {
        let term = (i + 1) as f64 * p - comp;
        let next = sum + term;
        comp = (next - sum) - term;
        sum = next;
    }
    sum
}

/// One image's feature vector. Values are stored as `f32` to match the
/// on-disk store and checkpoint formats; math on them runs in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f32>,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// A backbone: embedding head of `embed_dim` values plus a 10-bin score
/// distribution, deterministic in the image bytes.
pub trait FeatureExtractor: Send + Sync {
    fn name(&self) -> &str;
    fn embed_dim(&self) -> usize;
    fn extract(&self, img: &RgbImage) -> Result<(Vec<f64>, ScoreDistribution), FeatureError>;
}

/// Offsets into a feature vector for a given backbone embedding width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureLayout {
    pub embed_dim: usize,
}

impl FeatureLayout {
    pub fn dim(&self) -> usize {
        2 * (self.embed_dim + SCORE_BINS) + GEOMETRY_DIMS
    }

    /// Recovers the layout from a total dimension; fails if no integer
    /// embedding width produces it.
    pub fn from_dim(dim: usize) -> Result<Self, FeatureError> {
        let inner = dim
            .checked_sub(2 * SCORE_BINS + GEOMETRY_DIMS)
            .filter(|r| r.is_multiple_of(2) && *r > 0)
            .ok_or(FeatureError::DimensionMismatch {
                expected: 2 * SCORE_BINS + GEOMETRY_DIMS + 2,
                got: dim,
            })?;
        Ok(Self {
            embed_dim: inner / 2,
        })
    }

    fn slice_distribution(
        &self,
        v: &FeatureVector,
        start: usize,
    ) -> Result<ScoreDistribution, FeatureError> {
        if v.dim() != self.dim() {
            return Err(FeatureError::DimensionMismatch {
                expected: self.dim(),
                got: v.dim(),
            });
        }
        let mut probs = [0.0f64; SCORE_BINS];
        for (i, p) in probs.iter_mut().enumerate() {
            // Clamp away f32 rounding so stored vectors stay valid inputs.
            *p = f64::from(v.values[start + i]).clamp(0.0, 1.0);
        }
        let sum: f64 = probs.iter().sum();
        if sum > 0.0 {
            for p in &mut probs {
                *p /= sum;
            }
        }
        ScoreDistribution::new(probs)
    }

    /// The aesthetic head's distribution embedded in a full feature vector.
    pub fn aesthetic_distribution(
        &self,
        v: &FeatureVector,
    ) -> Result<ScoreDistribution, FeatureError> {
        self.slice_distribution(v, self.embed_dim)
    }

    /// The technical head's distribution embedded in a full feature vector.
    pub fn technical_distribution(
        &self,
        v: &FeatureVector,
    ) -> Result<ScoreDistribution, FeatureError> {
        self.slice_distribution(v, 2 * self.embed_dim + SCORE_BINS)
    }
}

/// Runs both backbones on an already-decoded image and assembles the
/// feature vector. `img` must be the original (pre-rescale) image; its
/// dimensions become the geometry features.
pub fn extract_from_image(
    img: &RgbImage,
    aesthetic: &dyn FeatureExtractor,
    technical: &dyn FeatureExtractor,
) -> Result<FeatureVector, FeatureError> {
    if aesthetic.embed_dim() != technical.embed_dim() {
        return Err(FeatureError::ContractViolation {
            name: technical.name().to_string(),
            msg: format!(
                "embedding widths differ: {} vs {}",
                aesthetic.embed_dim(),
                technical.embed_dim()
            ),
        });
    }
    let (orig_h, orig_w) = (img.height(), img.width());
    let rescaled = img
        .resize_bilinear(RESCALE_SIZE, RESCALE_SIZE)
        .map_err(ImgIoError::from)?;

    let layout = FeatureLayout {
        embed_dim: aesthetic.embed_dim(),
    };
    let mut values = Vec::with_capacity(layout.dim());
    for ext in [aesthetic, technical] {
        let (embedding, dist) = ext.extract(&rescaled)?;
        if embedding.len() != ext.embed_dim() {
            return Err(FeatureError::ContractViolation {
                name: ext.name().to_string(),
                msg: format!(
                    "embedding length {} != declared {}",
                    embedding.len(),
                    ext.embed_dim()
                ),
            });
        }
        values.extend(embedding.iter().map(|&v| v as f32));
        values.extend(dist.probs().iter().map(|&p| p as f32));
    }
    values.push(orig_h as f32);
    values.push(orig_w as f32);
    values.push(orig_w as f32 / orig_h as f32);

    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(FeatureError::ContractViolation {
                name: aesthetic.name().to_string(),
                msg: format!("non-finite feature at index {i}"),
            });
        }
    }
    Ok(FeatureVector { values })
}

/// Decodes `path` and extracts its feature vector.
pub fn extract_from_path(
    path: &Path,
    aesthetic: &dyn FeatureExtractor,
    technical: &dyn FeatureExtractor,
) -> Result<FeatureVector, FeatureError> {
    let img = imgio::load_rgb(path)?;
    extract_from_image(&img, aesthetic, technical)
}

/// Fail-fast contract check for plugged-in backbones: declared lengths,
/// valid distributions, and bit-identical outputs on a repeated probe.
pub fn validate_extractor(
    ext: &dyn FeatureExtractor,
    probe: &RgbImage,
) -> Result<(), FeatureError> {
    let (e1, d1) = ext.extract(probe)?;
    let (e2, d2) = ext.extract(probe)?;
    if e1.len() != ext.embed_dim() {
        return Err(FeatureError::ContractViolation {
            name: ext.name().to_string(),
            msg: format!(
                "embedding length {} != declared {}",
                e1.len(),
                ext.embed_dim()
            ),
        });
    }
    if e1 != e2 || d1 != d2 {
        return Err(FeatureError::ContractViolation {
            name: ext.name().to_string(),
            msg: "outputs differ across identical inputs".to_string(),
        });
    }
    Ok(())
}

/// Per-coordinate z-score statistics, in `f64`: quantizing the mean of
/// pixel-scale coordinates to `f32` would already cost more than the 1e-6
/// recompute tolerance. Checkpoints store them at this width.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Identity stats (mean 0, std 1) for a given dimension.
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Fits per-coordinate mean and population standard deviation over ≥ 2
/// vectors. Standard deviations below 1e-8 are floored to 1e-8 so constant
/// coordinates normalize to zero instead of dividing by zero.
pub fn fit_normalizer(vectors: &[FeatureVector]) -> Result<NormStats, FeatureError> {
    if vectors.len() < 2 {
        return Err(FeatureError::TooFewVectors {
            needed: 2,
            got: vectors.len(),
        });
    }
    let dim = vectors[0].dim();
    for v in vectors {
        if v.dim() != dim {
            return Err(FeatureError::DimensionMismatch {
                expected: dim,
                got: v.dim(),
            });
        }
    }
    let n = vectors.len() as f64;
    let mut mean = vec![0.0f64; dim];
    for v in vectors {
        for (m, &x) in mean.iter_mut().zip(&v.values) {
            *m += x as f64;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0f64; dim];
    for v in vectors {
        for ((s, &x), m) in var.iter_mut().zip(&v.values).zip(&mean) {
            let d = x as f64 - m;
            *s += d * d;
        }
    }
    let std = var.iter().map(|&s| (s / n).sqrt().max(1e-8)).collect();
    Ok(NormStats { mean, std })
}

/// Applies the z-score, widening to `f64` for downstream math.
pub fn apply_normalizer(v: &FeatureVector, stats: &NormStats) -> Result<Vec<f64>, FeatureError> {
    if v.dim() != stats.dim() {
        return Err(FeatureError::DimensionMismatch {
            expected: stats.dim(),
            got: v.dim(),
        });
    }
    Ok(v.values
        .iter()
        .zip(stats.mean.iter().zip(&stats.std))
        .map(|(&x, (&m, &s))| (x as f64 - m) / s)
        .collect())
}

/// An (aesthetic, technical) backbone instance pair.
pub type ExtractorPair = (Box<dyn FeatureExtractor>, Box<dyn FeatureExtractor>);

/// Which backbone pair to run, parsed from the CLI's `--extractor` value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExtractorSpec {
    Analytic,
    Onnx {
        aesthetic: String,
        technical: String,
    },
}

impl FromStr for ExtractorSpec {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "analytic" {
            return Ok(ExtractorSpec::Analytic);
        }
        if let Some(rest) = s.strip_prefix("onnx:") {
            if let Some((a, t)) = rest.split_once(',') {
                if !a.is_empty() && !t.is_empty() {
                    return Ok(ExtractorSpec::Onnx {
                        aesthetic: a.to_string(),
                        technical: t.to_string(),
                    });
                }
            }
        }
        Err(FeatureError::UnknownExtractor(s.to_string()))
    }
}

impl ExtractorSpec {
    /// Instantiates the (aesthetic, technical) pair. The onnx variant needs
    /// an inference runtime compiled in; this build ships without one and
    /// reports that clearly rather than guessing.
    pub fn build(&self) -> Result<ExtractorPair, FeatureError> {
        match self {
            ExtractorSpec::Analytic => Ok((
                Box::new(analytic::AnalyticExtractor::aesthetic()),
                Box::new(analytic::AnalyticExtractor::technical()),
            )),
            ExtractorSpec::Onnx { .. } => Err(FeatureError::OnnxNotBuilt),
        }
    }

    /// Combined identity recorded in checkpoints.
    pub fn identity(&self) -> String {
        match self {
            ExtractorSpec::Analytic => "analytic-aesthetic+analytic-technical".to_string(),
            ExtractorSpec::Onnx {
                aesthetic,
                technical,
            } => {
                format!("onnx:{aesthetic}+onnx:{technical}")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use analytic::AnalyticExtractor;

    #[test]
    fn expected_score_uniform_is_exactly_five_point_five() {
        assert_eq!(expected_score(&ScoreDistribution::uniform()), 5.5);
    }

    #[test]
    fn expected_score_one_hot_is_exact() {
        for k in 1..=10 {
            let d = ScoreDistribution::one_hot(k).unwrap();
            assert_eq!(expected_score(&d), k as f64);
        }
    }

    #[test]
    fn expected_score_split_mass() {
        let mut probs = [0.0; 10];
        probs[0] = 0.5;
        probs[9] = 0.5;
        let d = ScoreDistribution::new(probs).unwrap();
        assert_eq!(expected_score(&d), 5.5);
    }

    #[test]
    fn distribution_validation() {
        assert!(ScoreDistribution::new([0.2; 10]).is_err());
        let mut probs = [0.1; 10];
        probs[0] = -0.1;
        probs[1] = 0.3;
        assert!(ScoreDistribution::new(probs).is_err());
        assert!(ScoreDistribution::one_hot(0).is_err());
        assert!(ScoreDistribution::one_hot(11).is_err());
    }

    #[test]
    fn mass_shift_toward_higher_scores_increases_expectation() {
        let mut rng_state = 12345u64;
        let mut next = || {
            rng_state = rng_state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (rng_state >> 33) as f64 / (1u64 << 31) as f64
        };
        for _ in 0..200 {
            let mut probs = [0.0f64; 10];
            let mut sum = 0.0;
            for p in &mut probs {
                *p = next() + 0.01;
                sum += *p;
            }
            for p in &mut probs {
                *p /= sum;
            }
            let base = ScoreDistribution::new(probs).unwrap();
            let i = (next() * 9.0) as usize;
            let j = i + 1 + (next() * (9 - i) as f64) as usize;
            let eps = probs[i] * 0.5;
            let mut shifted = probs;
            shifted[i] -= eps;
            shifted[j] += eps;
            let moved = ScoreDistribution::new(shifted).unwrap();
            let gain = expected_score(&moved) - expected_score(&base);
            let want = eps * (j - i) as f64;
            assert!((gain - want).abs() < 1e-9, "gain {gain} want {want}");
        }
    }

    #[test]
    fn layout_dims() {
        assert_eq!(FeatureLayout { embed_dim: 1024 }.dim(), 2071);
        assert_eq!(FeatureLayout { embed_dim: 16 }.dim(), 55);
        assert_eq!(FeatureLayout::from_dim(2071).unwrap().embed_dim, 1024);
        assert_eq!(FeatureLayout::from_dim(55).unwrap().embed_dim, 16);
        assert!(FeatureLayout::from_dim(54).is_err());
        assert!(FeatureLayout::from_dim(10).is_err());
    }

    /// Mock backbone with a configurable width, for dimension arithmetic.
    struct FixedExtractor {
        name: String,
        dim: usize,
    }

    impl FeatureExtractor for FixedExtractor {
        fn name(&self) -> &str {
            &self.name
        }
        fn embed_dim(&self) -> usize {
            self.dim
        }
        fn extract(&self, _img: &RgbImage) -> Result<(Vec<f64>, ScoreDistribution), FeatureError> {
            Ok((vec![0.0; self.dim], ScoreDistribution::uniform()))
        }
    }

    #[test]
    fn extract_dimension_formula() {
        let img = RgbImage::constant(30, 20, [0.5, 0.5, 0.5]).unwrap();
        let a = FixedExtractor {
            name: "a".into(),
            dim: 1024,
        };
        let t = FixedExtractor {
            name: "t".into(),
            dim: 1024,
        };
        let v = extract_from_image(&img, &a, &t).unwrap();
        assert_eq!(v.dim(), 2071);

        let a = AnalyticExtractor::aesthetic();
        let t = AnalyticExtractor::technical();
        let v = extract_from_image(&img, &a, &t).unwrap();
        assert_eq!(v.dim(), 55);
    }

    #[test]
    fn geometry_features_use_original_dimensions() {
        // 300 high x 600 wide: trailing features (300, 600, 2.0).
        let img = RgbImage::constant(600, 300, [0.2, 0.4, 0.6]).unwrap();
        let a = AnalyticExtractor::aesthetic();
        let t = AnalyticExtractor::technical();
        let v = extract_from_image(&img, &a, &t).unwrap();
        let d = v.dim();
        assert_eq!(v.values[d - 3], 300.0);
        assert_eq!(v.values[d - 2], 600.0);
        assert_eq!(v.values[d - 1], 2.0);
    }

    #[test]
    fn distributions_recoverable_from_vector() {
        let img = crate::fixture::pattern_image(64, 48, 3);
        let a = AnalyticExtractor::aesthetic();
        let t = AnalyticExtractor::technical();
        let v = extract_from_image(&img, &a, &t).unwrap();
        let layout = FeatureLayout::from_dim(v.dim()).unwrap();

        let rescaled = img.resize_bilinear(RESCALE_SIZE, RESCALE_SIZE).unwrap();
        let (_, da) = a.extract(&rescaled).unwrap();
        let (_, dt) = t.extract(&rescaled).unwrap();
        let got_a = layout.aesthetic_distribution(&v).unwrap();
        let got_t = layout.technical_distribution(&v).unwrap();
        for i in 0..SCORE_BINS {
            assert!((got_a.probs()[i] - da.probs()[i]).abs() < 1e-6);
            assert!((got_t.probs()[i] - dt.probs()[i]).abs() < 1e-6);
        }
    }

    struct FlakyExtractor {
        calls: std::sync::atomic::AtomicUsize,
    }

    impl FeatureExtractor for FlakyExtractor {
        fn name(&self) -> &str {
            "flaky"
        }
        fn embed_dim(&self) -> usize {
            4
        }
        fn extract(&self, _img: &RgbImage) -> Result<(Vec<f64>, ScoreDistribution), FeatureError> {
            let n = self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            Ok((vec![n as f64; 4], ScoreDistribution::uniform()))
        }
    }

    struct WrongWidthExtractor;

    impl FeatureExtractor for WrongWidthExtractor {
        fn name(&self) -> &str {
            "wrong-width"
        }
        fn embed_dim(&self) -> usize {
            8
        }
        fn extract(&self, _img: &RgbImage) -> Result<(Vec<f64>, ScoreDistribution), FeatureError> {
            Ok((vec![0.0; 5], ScoreDistribution::uniform()))
        }
    }

    #[test]
    fn contract_violations_fail_fast() {
        let probe = RgbImage::constant(8, 8, [0.5, 0.5, 0.5]).unwrap();
        let flaky = FlakyExtractor {
            calls: Default::default(),
        };
        assert!(matches!(
            validate_extractor(&flaky, &probe),
            Err(FeatureError::ContractViolation { .. })
        ));
        assert!(matches!(
            validate_extractor(&WrongWidthExtractor, &probe),
            Err(FeatureError::ContractViolation { .. })
        ));
        let good = AnalyticExtractor::aesthetic();
        validate_extractor(&good, &probe).unwrap();

        // Wrong declared width also fails during full extraction.
        let err = extract_from_image(&probe, &WrongWidthExtractor, &WrongWidthExtractor);
        assert!(matches!(err, Err(FeatureError::ContractViolation { .. })));
    }

    #[test]
    fn normalizer_examples() {
        let v0 = FeatureVector { values: vec![0.0] };
        let v2 = FeatureVector { values: vec![2.0] };
        let stats = fit_normalizer(&[v0, v2.clone()]).unwrap();
        assert_eq!(stats.mean, vec![1.0f64]);
        assert_eq!(stats.std, vec![1.0f64]);
        assert_eq!(apply_normalizer(&v2, &stats).unwrap(), vec![1.0]);
    }

    #[test]
    fn constant_coordinate_normalizes_to_zero() {
        let vs: Vec<FeatureVector> = (0..5)
            .map(|i| FeatureVector {
                values: vec![224.0, i as f32],
            })
            .collect();
        let stats = fit_normalizer(&vs).unwrap();
        for v in &vs {
            let n = apply_normalizer(v, &stats).unwrap();
            assert!(n[0].abs() < 1e-9, "constant coordinate gave {}", n[0]);
        }
    }

    #[test]
    fn normalizer_rejects_mixed_dims_and_tiny_sets() {
        let a = FeatureVector {
            values: vec![1.0, 2.0],
        };
        let b = FeatureVector { values: vec![1.0] };
        assert!(matches!(
            fit_normalizer(&[a.clone(), b]),
            Err(FeatureError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            fit_normalizer(&[a]),
            Err(FeatureError::TooFewVectors { .. })
        ));
    }

    #[test]
    fn extractor_spec_parsing() {
        assert_eq!(
            "analytic".parse::<ExtractorSpec>().unwrap(),
            ExtractorSpec::Analytic
        );
        assert_eq!(
            "onnx:/m/a.onnx,/m/t.onnx".parse::<ExtractorSpec>().unwrap(),
            ExtractorSpec::Onnx {
                aesthetic: "/m/a.onnx".into(),
                technical: "/m/t.onnx".into()
            }
        );
        assert!("onnx:/m/a.onnx".parse::<ExtractorSpec>().is_err());
        assert!("neural".parse::<ExtractorSpec>().is_err());
        assert!(matches!(
            "onnx:/m/a.onnx,/m/t.onnx"
                .parse::<ExtractorSpec>()
                .unwrap()
                .build(),
            Err(FeatureError::OnnxNotBuilt)
        ));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normalized_set_has_zero_mean_unit_std(
                n in 3usize..20,
                dim in 1usize..6,
                seed in 0u64..1000,
            ) {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let vectors: Vec<FeatureVector> = (0..n)
                    .map(|_| FeatureVector {
                        values: (0..dim).map(|_| rng.random_range(-50.0f32..300.0)).collect(),
                    })
                    .collect();
                let stats = fit_normalizer(&vectors).unwrap();
                let normalized: Vec<Vec<f64>> = vectors
                    .iter()
                    .map(|v| apply_normalizer(v, &stats).unwrap())
                    .collect();
                // Independent recomputation of the post-normalization moments.
                for c in 0..dim {
                    let col: Vec<f64> = normalized.iter().map(|v| v[c]).collect();
                    let mean = col.iter().sum::<f64>() / n as f64;
                    let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
                    prop_assert!(mean.abs() < 1e-6, "mean {mean}");
                    // A coordinate can collide to constancy; only non-degenerate
                    // columns must come out at unit scale.
                    if stats.std[c] > 1e-6 {
                        prop_assert!((var.sqrt() - 1.0).abs() < 1e-6, "std {}", var.sqrt());
                    }
                }
            }
        }
    }
}
