//! Seeded, replayable image degradations.
//!
//! Every transform is a pure function of `(image, spec)`: all randomness is
//! drawn from a counter-based generator keyed by `spec.seed`, so a recorded
//! spec replays to a bit-identical output buffer. The eleven kinds cover
//! partial-subject crops, lighting jitter, softness, grain, filter
//! conversion, and camera-shake rotation, each degrading quality on purpose.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{self, luminance, RasterError, RgbImage};

/// The degradation families. Serialized names are the snake_case tokens
/// used in pair files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionKind {
    RandomCrop,
    VerticalCrop,
    HorizontalCrop,
    JitterBrightness,
    JitterContrast,
    JitterHue,
    GaussianBlur,
    GaussianNoise,
    Grayscale,
    Rotation,
    RotationMixup,
}

impl DistortionKind {
    pub const ALL: [DistortionKind; 11] = [
        DistortionKind::RandomCrop,
        DistortionKind::VerticalCrop,
        DistortionKind::HorizontalCrop,
        DistortionKind::JitterBrightness,
        DistortionKind::JitterContrast,
        DistortionKind::JitterHue,
        DistortionKind::GaussianBlur,
        DistortionKind::GaussianNoise,
        DistortionKind::Grayscale,
        DistortionKind::Rotation,
        DistortionKind::RotationMixup,
    ];
}

/// Rotation angles are drawn from this fixed menu of degrees.
pub const ROTATION_ANGLES: [u32; 4] = [5, 10, 15, 20];

/// A fully-parameterized, replayable description of one manipulation.
///
/// `param` means, by kind: retained fraction (crops: area for `random_crop`,
/// the cropped axis otherwise), scale factor (jitter kinds), standard
/// deviation (blur kernel, noise amplitude on the [0,1] scale), or mix
/// weight for the unrotated original (`rotation_mixup`). `grayscale` and
/// plain `rotation` take no param.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    pub kind: DistortionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle_degrees: Option<u32>,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum DistortionError {
    #[error("invalid spec for {kind:?}: {msg}")]
    InvalidSpec { kind: DistortionKind, msg: String },
    #[error("crop window degenerated below one pixel ({width}x{height}, fraction {fraction})")]
    DegenerateCrop {
        width: usize,
        height: usize,
        fraction: f64,
    },
    #[error("distortion chain must contain at least one spec")]
    EmptyChain,
    #[error(transparent)]
    Raster(#[from] RasterError),
}

impl DistortionSpec {
    /// Structural check: the right optional fields are present for the kind.
    /// Range checks live in [`DistortionSpec::validate_ranges`]; application
    /// itself accepts out-of-range params so diagnostic runs can probe them.
    pub fn validate_shape(&self) -> Result<(), DistortionError> {
        use DistortionKind::*;
        let err = |msg: &str| {
            Err(DistortionError::InvalidSpec {
                kind: self.kind,
                msg: msg.to_string(),
            })
        };
        match self.kind {
            Grayscale => {
                if self.param.is_some() {
                    return err("grayscale takes no param");
                }
                if self.angle_degrees.is_some() {
                    return err("grayscale takes no angle");
                }
            }
            Rotation => {
                if self.param.is_some() {
                    return err("rotation takes no param");
                }
                if self.angle_degrees.is_none() {
                    return err("rotation requires angle_degrees");
                }
            }
            RotationMixup => {
                if self.param.is_none() {
                    return err("rotation_mixup requires a mix weight param");
                }
                if self.angle_degrees.is_none() {
                    return err("rotation_mixup requires angle_degrees");
                }
            }
            _ => {
                if self.param.is_none() {
                    return err("kind requires a param");
                }
                if self.angle_degrees.is_some() {
                    return err("kind takes no angle");
                }
            }
        }
        if let Some(p) = self.param {
            if !p.is_finite() {
                return err("param must be finite");
            }
        }
        if let Some(a) = self.angle_degrees {
            if !ROTATION_ANGLES.contains(&a) {
                return err("angle_degrees must be one of {5,10,15,20}");
            }
        }
        Ok(())
    }

    /// Full check: shape plus the sampling ranges each kind is drawn from.
    pub fn validate_ranges(&self) -> Result<(), DistortionError> {
        use DistortionKind::*;
        self.validate_shape()?;
        let in_range = match (self.kind, self.param) {
            (RandomCrop | VerticalCrop | HorizontalCrop, Some(p)) => (0.4..=0.6).contains(&p),
            (JitterBrightness | JitterContrast | JitterHue, Some(p)) => {
                (0.3..=0.6).contains(&p) || (1.2..=1.4).contains(&p)
            }
            (GaussianBlur, Some(p)) => (0.8..=1.2).contains(&p),
            (GaussianNoise, Some(p)) => (0.2..=0.8).contains(&p),
            (RotationMixup, Some(p)) => (0.2..=0.4).contains(&p),
            (Grayscale | Rotation, None) => true,
            _ => false,
        };
        if in_range {
            Ok(())
        } else {
            Err(DistortionError::InvalidSpec {
                kind: self.kind,
                msg: format!(
                    "param {:?} outside the sampling range for this kind",
                    self.param
                ),
            })
        }
    }
}

/// Draws a spec uniformly: kind over all eleven, param uniform within the
/// kind's range (jitter picks the low or high interval with probability 1/2
/// first), angle uniform over the menu. Deterministic in `rng_seed`.
pub fn sample_spec(rng_seed: u64) -> DistortionSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_spec_with(&mut rng)
}

/// As [`sample_spec`] but drawing from a caller-owned generator, so chains
/// of specs can be derived from one stream.
pub fn sample_spec_with(rng: &mut impl Rng) -> DistortionSpec {
    use DistortionKind::*;
    let kind = DistortionKind::ALL[rng.random_range(0..DistortionKind::ALL.len())];
    let param = match kind {
        RandomCrop | VerticalCrop | HorizontalCrop => Some(rng.random_range(0.4..0.6)),
        JitterBrightness | JitterContrast | JitterHue => Some(if rng.random_bool(0.5) {
            rng.random_range(0.3..0.6)
        } else {
            rng.random_range(1.2..1.4)
        }),
        GaussianBlur => Some(rng.random_range(0.8..1.2)),
        GaussianNoise => Some(rng.random_range(0.2..0.8)),
        RotationMixup => Some(rng.random_range(0.2..0.4)),
        Grayscale | Rotation => None,
    };
    let angle_degrees = match kind {
        Rotation | RotationMixup => {
            Some(ROTATION_ANGLES[rng.random_range(0..ROTATION_ANGLES.len())])
        }
        _ => None,
    };
    let seed = rng.random::<u64>();
    DistortionSpec {
        kind,
        param,
        angle_degrees,
        seed,
    }
}

/// Applies one manipulation. Pure: identical `(img, spec)` yields a
/// bit-identical buffer. Output pixels stay in [0,1]; dimensions change for
/// the crop kinds only.
pub fn apply_distortion(
    img: &RgbImage,
    spec: &DistortionSpec,
) -> Result<RgbImage, DistortionError> {
    use DistortionKind::*;
    spec.validate_shape()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.kind {
        RandomCrop => {
            let f = spec.param.unwrap();
            let side = f.sqrt();
            crop_window(img, side, side, &mut rng, f)
        }
        VerticalCrop => crop_window(img, 1.0, spec.param.unwrap(), &mut rng, spec.param.unwrap()),
        HorizontalCrop => crop_window(img, spec.param.unwrap(), 1.0, &mut rng, spec.param.unwrap()),
        JitterBrightness => {
            let f = spec.param.unwrap();
            Ok(map_pixels(img, |v| f * v))
        }
        JitterContrast => {
            let f = spec.param.unwrap();
            let mu = img.mean_luminance();
            Ok(map_pixels(img, |v| mu + f * (v - mu)))
        }
        JitterHue => {
            let shift = spec.param.unwrap() - 1.0;
            let mut out = RgbImage::new(img.width(), img.height())?;
            for y in 0..img.height() {
                for x in 0..img.width() {
                    let [r, g, b] = img.get(x, y);
                    let (h, s, v) = raster::rgb_to_hsv(r as f64, g as f64, b as f64);
                    let (r2, g2, b2) = raster::hsv_to_rgb((h + shift).rem_euclid(1.0), s, v);
                    out.put(x, y, [clip01(r2), clip01(g2), clip01(b2)]);
                }
            }
            Ok(out)
        }
        GaussianBlur => Ok(gaussian_blur(img, spec.param.unwrap())),
        GaussianNoise => {
            let normal = Normal::new(0.0f64, spec.param.unwrap()).map_err(|e| {
                DistortionError::InvalidSpec {
                    kind: spec.kind,
                    msg: e.to_string(),
                }
            })?;
            let mut out = img.clone();
            for v in out.data_mut() {
                *v = clip01(*v as f64 + normal.sample(&mut rng));
            }
            Ok(out)
        }
        Grayscale => {
            let mut out = RgbImage::new(img.width(), img.height())?;
            for y in 0..img.height() {
                for x in 0..img.width() {
                    let [r, g, b] = img.get(x, y);
                    let l = luminance(r as f64, g as f64, b as f64) as f32;
                    out.put(x, y, [l, l, l]);
                }
            }
            Ok(out)
        }
        Rotation => {
            let angle = signed_angle(spec.angle_degrees.unwrap(), &mut rng);
            Ok(img.rotate_bilinear(angle)?)
        }
        RotationMixup => {
            let f = spec.param.unwrap();
            let angle = signed_angle(spec.angle_degrees.unwrap(), &mut rng);
            let rotated = img.rotate_bilinear(angle)?;
            let mut out = RgbImage::new(img.width(), img.height())?;
            let (src, rot, dst) = (img.data(), rotated.data(), out.data_mut());
            for i in 0..dst.len() {
                dst[i] = clip01(f * src[i] as f64 + (1.0 - f) * rot[i] as f64);
            }
            Ok(out)
        }
    }
}

/// Left-fold of [`apply_distortion`] over the chain.
pub fn distort_chain(
    img: &RgbImage,
    specs: &[DistortionSpec],
) -> Result<RgbImage, DistortionError> {
    let (first, rest) = specs.split_first().ok_or(DistortionError::EmptyChain)?;
    let mut out = apply_distortion(img, first)?;
    for spec in rest {
        out = apply_distortion(&out, spec)?;
    }
    Ok(out)
}

fn signed_angle(degrees: u32, rng: &mut impl Rng) -> f64 {
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    sign * (degrees as f64).to_radians()
}

fn clip01(v: f64) -> f32 {
    v.clamp(0.0, 1.0) as f32
}

fn map_pixels(img: &RgbImage, f: impl Fn(f64) -> f64) -> RgbImage {
    let mut out = img.clone();
    for v in out.data_mut() {
        *v = clip01(f(*v as f64));
    }
    out
}

/// Retains a window of `frac_w x frac_h` (per-axis fractions, rounded to
/// pixels) at a uniformly drawn offset.
fn crop_window(
    img: &RgbImage,
    frac_w: f64,
    frac_h: f64,
    rng: &mut impl Rng,
    fraction: f64,
) -> Result<RgbImage, DistortionError> {
    let w = (img.width() as f64 * frac_w).round() as usize;
    let h = (img.height() as f64 * frac_h).round() as usize;
    if w < 1 || h < 1 {
        return Err(DistortionError::DegenerateCrop {
            width: img.width(),
            height: img.height(),
            fraction,
        });
    }
    let w = w.min(img.width());
    let h = h.min(img.height());
    let x0 = rng.random_range(0..=img.width() - w);
    let y0 = rng.random_range(0..=img.height() - h);
    Ok(img.crop(x0, y0, w, h)?)
}

/// Separable Gaussian blur with standard deviation `sigma`, kernel radius
/// `ceil(3*sigma)`, edge-replicate padding. Mass-preserving: the kernel is
/// normalized in f64, so constant images survive bit-exactly.
fn gaussian_blur(img: &RgbImage, sigma: f64) -> RgbImage {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    for i in -radius..=radius {
        kernel.push((-((i * i) as f64) / (2.0 * sigma * sigma)).exp());
    }
    let sum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= sum;
    }

    let (w, h) = (img.width(), img.height());
    // Horizontal pass into an f64 buffer, then vertical pass back to f32.
    let mut tmp = vec![0.0f64; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            for (ki, k) in kernel.iter().enumerate() {
                let sx = (x as i64 + ki as i64 - radius).clamp(0, w as i64 - 1) as usize;
                let px = img.get(sx, y);
                for c in 0..3 {
                    acc[c] += k * px[c] as f64;
                }
            }
            let base = (y * w + x) * 3;
            tmp[base..base + 3].copy_from_slice(&acc);
        }
    }
    let mut out = RgbImage::new(w, h).expect("nonzero dims");
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            for (ki, k) in kernel.iter().enumerate() {
                let sy = (y as i64 + ki as i64 - radius).clamp(0, h as i64 - 1) as usize;
                let base = (sy * w + x) * 3;
                for c in 0..3 {
                    acc[c] += k * tmp[base + c];
                }
            }
            out.put(x, y, [acc[0] as f32, acc[1] as f32, acc[2] as f32]);
        }
    }
    out
}
