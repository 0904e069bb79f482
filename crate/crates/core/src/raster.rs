//! Row-major RGB raster with float pixels.
//!
//! Pixels are stored as `f32` in [0, 1]; all arithmetic runs in `f64` and is
//! rounded back to `f32` on store, so transforms that are mathematically
//! identities (grayscale of a gray image, blurring a constant image) round
//! trip bit-exactly.

use thiserror::Error;

/// Rec.601 luma weights. They sum to 1 in exact arithmetic.
pub const LUMA_R: f64 = 0.299;
pub const LUMA_G: f64 = 0.587;
pub const LUMA_B: f64 = 0.114;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyImage { width: usize, height: usize },
    #[error("pixel buffer length {got} does not match {width}x{height}x3 = {want}")]
    BufferSize {
        width: usize,
        height: usize,
        got: usize,
        want: usize,
    },
    #[error("crop window {w}x{h} at ({x},{y}) exceeds image bounds {width}x{height}")]
    CropBounds {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },
    #[error("crop window degenerated below one pixel")]
    DegenerateCrop,
}

/// An interleaved RGB image, row-major, three `f32` channels per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl RgbImage {
    /// All-black image of the given size.
    pub fn new(width: usize, height: usize) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyImage { width, height });
        }
        Ok(Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        })
    }

    /// Constant-color image.
    pub fn constant(width: usize, height: usize, rgb: [f32; 3]) -> Result<Self, RasterError> {
        let mut img = Self::new(width, height)?;
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        Ok(img)
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f32; 3],
    ) -> Result<Self, RasterError> {
        let mut img = Self::new(width, height)?;
        for y in 0..height {
            for x in 0..width {
                img.put(x, y, f(x, y));
            }
        }
        Ok(img)
    }

    /// Wraps an existing interleaved buffer.
    pub fn from_raw(width: usize, height: usize, data: Vec<f32>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyImage { width, height });
        }
        let want = width * height * 3;
        if data.len() != want {
            return Err(RasterError::BufferSize {
                width,
                height,
                got: data.len(),
                want,
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Mean Rec.601 luminance over all pixels.
    pub fn mean_luminance(&self) -> f64 {
        let mut acc = 0.0f64;
        for px in self.data.chunks_exact(3) {
            acc += luminance(px[0] as f64, px[1] as f64, px[2] as f64);
        }
        acc / (self.width * self.height) as f64
    }

    /// Extracts the axis-aligned window `[x, x+w) x [y, y+h)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self, RasterError> {
        if w == 0 || h == 0 {
            return Err(RasterError::DegenerateCrop);
        }
        if x + w > self.width || y + h > self.height {
            return Err(RasterError::CropBounds {
                x,
                y,
                w,
                h,
                width: self.width,
                height: self.height,
            });
        }
        let mut out = Self::new(w, h)?;
        for row in 0..h {
            let src = ((y + row) * self.width + x) * 3;
            let dst = row * w * 3;
            out.data[dst..dst + w * 3].copy_from_slice(&self.data[src..src + w * 3]);
        }
        Ok(out)
    }

    /// Bilinear resize to `new_w x new_h` with center-aligned sampling.
    pub fn resize_bilinear(&self, new_w: usize, new_h: usize) -> Result<Self, RasterError> {
        let mut out = Self::new(new_w, new_h)?;
        let sx = self.width as f64 / new_w as f64;
        let sy = self.height as f64 / new_h as f64;
        for y in 0..new_h {
            let src_y = (y as f64 + 0.5) * sy - 0.5;
            for x in 0..new_w {
                let src_x = (x as f64 + 0.5) * sx - 0.5;
                out.put(x, y, self.sample_bilinear_clamped(src_x, src_y));
            }
        }
        Ok(out)
    }

    /// Rotates by `angle_rad` counter-clockwise about the image center.
    /// Output keeps the input dimensions; samples falling outside are black.
    pub fn rotate_bilinear(&self, angle_rad: f64) -> Result<Self, RasterError> {
        let mut out = Self::new(self.width, self.height)?;
        let cx = (self.width as f64 - 1.0) / 2.0;
        let cy = (self.height as f64 - 1.0) / 2.0;
        let (sin, cos) = angle_rad.sin_cos();
        for y in 0..self.height {
            for x in 0..self.width {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                // Inverse map: rotate the output grid by -angle.
                let src_x = cx + cos * dx + sin * dy;
                let src_y = cy - sin * dx + cos * dy;
                out.put(x, y, self.sample_bilinear_black(src_x, src_y));
            }
        }
        Ok(out)
    }

    fn sample_bilinear_clamped(&self, x: f64, y: f64) -> [f32; 3] {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let p00 = self.get(x0, y0);
        let p10 = self.get(x1, y0);
        let p01 = self.get(x0, y1);
        let p11 = self.get(x1, y1);
        let mut out = [0.0f32; 3];
        for c in 0..3 {
            let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
            let bot = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
            out[c] = (top * (1.0 - fy) + bot * fy) as f32;
        }
        out
    }

    fn sample_bilinear_black(&self, x: f64, y: f64) -> [f32; 3] {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let mut out = [0.0f64; 3];
        for (dx, dy, w) in [
            (0.0, 0.0, (1.0 - fx) * (1.0 - fy)),
            (1.0, 0.0, fx * (1.0 - fy)),
            (0.0, 1.0, (1.0 - fx) * fy),
            (1.0, 1.0, fx * fy),
        ] {
            let px = x0 + dx;
            let py = y0 + dy;
            if px >= 0.0 && py >= 0.0 && (px as usize) < self.width && (py as usize) < self.height {
                let p = self.get(px as usize, py as usize);
                for c in 0..3 {
                    out[c] += w * p[c] as f64;
                }
            }
        }
        [out[0] as f32, out[1] as f32, out[2] as f32]
    }
}

/// Rec.601 luminance of one pixel.
#[inline]
pub fn luminance(r: f64, g: f64, b: f64) -> f64 {
    LUMA_R * r + LUMA_G * g + LUMA_B * b
}

/// RGB in [0,1] to HSV with hue in [0,1) turns.
pub fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        (((g - b) / delta).rem_euclid(6.0)) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    (h, s, v)
}

/// HSV with hue in [0,1) turns back to RGB in [0,1].
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let c = v * s;
    let x = c * (1.0 - (h6.rem_euclid(2.0) - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match h6 as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    (r + m, g + m, b + m)
}
