//! Dependency-free backbone substitute.
//!
//! Computes 16 classical image statistics as the embedding and derives a
//! 10-bin score distribution by softmaxing fixed affine projections of it.
//! The projection weights are drawn once from a fixed-seed generator (one
//! seed per role), making the two roles distinct but forever constant.
//!
//! Embedding layout (all statistics over the supplied image):
//!  0..6   mean & std of R, G, B (meanR, stdR, meanG, stdG, meanB, stdB)
//!  6..8   mean & std of Rec.601 luminance
//!  8      Laplacian-variance sharpness (4-neighbor, interior pixels)
//!  9      Hasler–Süsstrunk colorfulness on the [0,1] scale
//! 10      edge density: fraction of gradient magnitudes > 0.1
//! 11      entropy (nats) of a 32-bin luminance histogram
//! 12..14  mean & std of HSV saturation
//! 14..16  2nd and 98th luminance percentiles

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::{FeatureError, FeatureExtractor, ScoreDistribution, SCORE_BINS};
use crate::raster::{luminance, rgb_to_hsv, RgbImage};

/// Embedding width of the analytic backbone.
pub const EMBED_DIM: usize = 16;

const AESTHETIC_PROJECTION_SEED: u64 = 0xae57_4e71_c001;
const TECHNICAL_PROJECTION_SEED: u64 = 0x7ec4_11ca_1002;

/// Role of a backbone instance; determines its name and projection seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackboneRole {
    Aesthetic,
    Technical,
}

/// The built-in analytic feature extractor.
pub struct AnalyticExtractor {
    name: &'static str,
    projection: Vec<[f64; EMBED_DIM]>,
    bias: [f64; SCORE_BINS],
}

impl AnalyticExtractor {
    pub fn new(role: BackboneRole) -> Self {
        let (name, seed) = match role {
            BackboneRole::Aesthetic => ("analytic-aesthetic", AESTHETIC_PROJECTION_SEED),
            BackboneRole::Technical => ("analytic-technical", TECHNICAL_PROJECTION_SEED),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut projection = Vec::with_capacity(SCORE_BINS);
        for _ in 0..SCORE_BINS {
            let mut row = [0.0; EMBED_DIM];
            for w in &mut row {
                *w = rng.random_range(-0.5..0.5);
            }
            projection.push(row);
        }
        let mut bias = [0.0; SCORE_BINS];
        for b in &mut bias {
            *b = rng.random_range(-0.25..0.25);
        }
        Self {
            name,
            projection,
            bias,
        }
    }

    pub fn aesthetic() -> Self {
        Self::new(BackboneRole::Aesthetic)
    }

    pub fn technical() -> Self {
        Self::new(BackboneRole::Technical)
    }

    /// The 16 statistics, in the order documented at module level.
    pub fn embedding(img: &RgbImage) -> [f64; EMBED_DIM] {
        let (w, h) = (img.width(), img.height());
        let n = (w * h) as f64;

        let mut sum = [0.0f64; 3];
        let mut sum_sq = [0.0f64; 3];
        let mut lum = Vec::with_capacity(w * h);
        let mut sat_sum = 0.0;
        let mut sat_sq = 0.0;
        let mut rg_sum = 0.0;
        let mut rg_sq = 0.0;
        let mut yb_sum = 0.0;
        let mut yb_sq = 0.0;
        for y in 0..h {
            for x in 0..w {
                let [r, g, b] = img.get(x, y);
                let (r, g, b) = (r as f64, g as f64, b as f64);
                sum[0] += r;
                sum[1] += g;
                sum[2] += b;
                sum_sq[0] += r * r;
                sum_sq[1] += g * g;
                sum_sq[2] += b * b;
                lum.push(luminance(r, g, b));
                let (_, s, _) = rgb_to_hsv(r, g, b);
                sat_sum += s;
                sat_sq += s * s;
                let rg = r - g;
                let yb = 0.5 * (r + g) - b;
                rg_sum += rg;
                rg_sq += rg * rg;
                yb_sum += yb;
                yb_sq += yb * yb;
            }
        }
        let mean = [sum[0] / n, sum[1] / n, sum[2] / n];
        let std = [
            pop_std(sum_sq[0], sum[0], n),
            pop_std(sum_sq[1], sum[1], n),
            pop_std(sum_sq[2], sum[2], n),
        ];
        let lum_mean = lum.iter().sum::<f64>() / n;
        let lum_std = (lum
            .iter()
            .map(|&l| (l - lum_mean) * (l - lum_mean))
            .sum::<f64>()
            / n)
            .sqrt();

        // Laplacian variance over interior pixels; zero when no interior.
        let mut lap_mean = 0.0;
        let mut lap_sq = 0.0;
        let mut lap_n = 0.0;
        if w >= 3 && h >= 3 {
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let l = lum[y * w + x + 1]
                        + lum[y * w + x - 1]
                        + lum[(y + 1) * w + x]
                        + lum[(y - 1) * w + x]
                        - 4.0 * lum[y * w + x];
                    lap_mean += l;
                    lap_sq += l * l;
                    lap_n += 1.0;
                }
            }
        }
        let sharpness = if lap_n > 0.0 {
            let m = lap_mean / lap_n;
            (lap_sq / lap_n - m * m).max(0.0)
        } else {
            0.0
        };

        let rg_mean = rg_sum / n;
        let yb_mean = yb_sum / n;
        let rg_std = pop_std(rg_sq, rg_sum, n);
        let yb_std = pop_std(yb_sq, yb_sum, n);
        let colorfulness = (rg_std * rg_std + yb_std * yb_std).sqrt()
            + 0.3 * (rg_mean * rg_mean + yb_mean * yb_mean).sqrt();

        // Edge density via forward differences of luminance.
        let mut edges = 0usize;
        let mut edge_n = 0usize;
        if w >= 2 && h >= 2 {
            for y in 0..h - 1 {
                for x in 0..w - 1 {
                    let gx = lum[y * w + x + 1] - lum[y * w + x];
                    let gy = lum[(y + 1) * w + x] - lum[y * w + x];
                    if (gx * gx + gy * gy).sqrt() > 0.1 {
                        edges += 1;
                    }
                    edge_n += 1;
                }
            }
        }
        let edge_density = if edge_n > 0 {
            edges as f64 / edge_n as f64
        } else {
            0.0
        };

        // 32-bin luminance histogram entropy in nats.
        let mut hist = [0usize; 32];
        for &l in &lum {
            let bin = ((l * 32.0) as usize).min(31);
            hist[bin] += 1;
        }
        let entropy = -hist
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                p * p.ln()
            })
            .sum::<f64>();

        let sat_mean = sat_sum / n;
        let sat_std = pop_std(sat_sq, sat_sum, n);

        let mut sorted = lum;
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("luminance is finite"));
        let p2 = percentile(&sorted, 0.02);
        let p98 = percentile(&sorted, 0.98);

        [
            mean[0],
            std[0],
            mean[1],
            std[1],
            mean[2],
            std[2],
            lum_mean,
            lum_std,
            sharpness,
            colorfulness,
            edge_density,
            entropy,
            sat_mean,
            sat_std,
            p2,
            p98,
        ]
    }
}

fn pop_std(sum_sq: f64, sum: f64, n: f64) -> f64 {
    let mean = sum / n;
    (sum_sq / n - mean * mean).max(0.0).sqrt()
}

/// Linear-interpolated percentile of an already-sorted slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = q * (sorted.len() - 1) as f64;
    let lo = idx.floor() as usize;
    let hi = idx.ceil() as usize;
    let frac = idx - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

impl FeatureExtractor for AnalyticExtractor {
    fn name(&self) -> &str {
        self.name
    }

    fn embed_dim(&self) -> usize {
        EMBED_DIM
    }

    fn extract(&self, img: &RgbImage) -> Result<(Vec<f64>, ScoreDistribution), FeatureError> {
        let embedding = Self::embedding(img);
        let logits: Vec<f64> = self
            .projection
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(&embedding).map(|(w, e)| w * e).sum::<f64>() + b)
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let mut probs = [0.0; SCORE_BINS];
        for (p, e) in probs.iter_mut().zip(&exps) {
            *p = e / total;
        }
        Ok((embedding.to_vec(), ScoreDistribution::new(probs)?))
    }
}
