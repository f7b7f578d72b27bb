//! Fifteen image corruptions at five severities for robustness testing.
//!
//! Photometric kinds change pixel values only, so ground truth stays as is. The one
//! geometric kind, `elastic_transform`, moves pixels and must warp the masks with the
//! same field ([`ElasticField`]).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::codecs::jpeg::JpegEncoder;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::discover;
use crate::error::{Error, Result};
use crate::io::{list_mask_files, load_image, load_mask, save_image, save_mask, write_json};
use crate::noise::{noise_field, NoiseParams};
use crate::seed::{derive_seed, rng_from_seed, substream, SampleRng, SeedSpec};
use crate::types::{ImageBuffer, LabelMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbKind {
    GaussianNoise,
    ShotNoise,
    ImpulseNoise,
    SpeckleNoise,
    GaussianBlur,
    DefocusBlur,
    MotionBlur,
    ZoomBlur,
    Brightness,
    Contrast,
    Fog,
    Snow,
    Spatter,
    JpegCompression,
    ElasticTransform,
}

impl PerturbKind {
    pub const ALL: [PerturbKind; 15] = [
        PerturbKind::GaussianNoise,
        PerturbKind::ShotNoise,
        PerturbKind::ImpulseNoise,
        PerturbKind::SpeckleNoise,
        PerturbKind::GaussianBlur,
        PerturbKind::DefocusBlur,
        PerturbKind::MotionBlur,
        PerturbKind::ZoomBlur,
        PerturbKind::Brightness,
        PerturbKind::Contrast,
        PerturbKind::Fog,
        PerturbKind::Snow,
        PerturbKind::Spatter,
        PerturbKind::JpegCompression,
        PerturbKind::ElasticTransform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PerturbKind::GaussianNoise => "gaussian_noise",
            PerturbKind::ShotNoise => "shot_noise",
            PerturbKind::ImpulseNoise => "impulse_noise",
            PerturbKind::SpeckleNoise => "speckle_noise",
            PerturbKind::GaussianBlur => "gaussian_blur",
            PerturbKind::DefocusBlur => "defocus_blur",
            PerturbKind::MotionBlur => "motion_blur",
            PerturbKind::ZoomBlur => "zoom_blur",
            PerturbKind::Brightness => "brightness",
            PerturbKind::Contrast => "contrast",
            PerturbKind::Fog => "fog",
            PerturbKind::Snow => "snow",
            PerturbKind::Spatter => "spatter",
            PerturbKind::JpegCompression => "jpeg_compression",
            PerturbKind::ElasticTransform => "elastic_transform",
        }
    }

    /// True when the kind moves pixels, so ground truth must move with them.
    pub fn is_geometric(self) -> bool {
        self == PerturbKind::ElasticTransform
    }

    /// True when the kind draws random numbers.
    pub fn is_stochastic(self) -> bool {
        matches!(
            self,
            PerturbKind::GaussianNoise
                | PerturbKind::ShotNoise
                | PerturbKind::ImpulseNoise
                | PerturbKind::SpeckleNoise
                | PerturbKind::MotionBlur
                | PerturbKind::Fog
                | PerturbKind::Snow
                | PerturbKind::Spatter
                | PerturbKind::ElasticTransform
        )
    }

    /// Parses `all` or a comma-separated list of kind names.
    pub fn parse_list(s: &str) -> Result<Vec<PerturbKind>> {
        if s.trim() == "all" {
            return Ok(Self::ALL.to_vec());
        }
        s.split(',').map(|k| k.trim().parse()).collect()
    }
}

impl fmt::Display for PerturbKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PerturbKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParam(format!("unknown perturbation {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbConfig {
    pub kind: PerturbKind,
    pub severity: u8,
    pub seed: u64,
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=5).contains(&self.severity) {
            return Err(Error::InvalidParam(format!("severity {} not in [1, 5]", self.severity)));
        }
        Ok(())
    }

    fn level<T: Copy>(&self, table: [T; 5]) -> T {
        table[self.severity as usize - 1]
    }
}

// Severity tables, level 1..5.
pub const GAUSSIAN_NOISE_SIGMA: [f64; 5] = [0.04, 0.06, 0.08, 0.09, 0.10]; // x 255
pub const SHOT_NOISE_PHOTONS: [f64; 5] = [60.0, 25.0, 12.0, 5.0, 3.0]; // Poisson rate per unit intensity
pub const IMPULSE_AMOUNT: [f64; 5] = [0.03, 0.06, 0.09, 0.17, 0.27]; // salt-and-pepper fraction
pub const SPECKLE_SIGMA: [f64; 5] = [0.15, 0.2, 0.35, 0.45, 0.6]; // multiplicative
pub const GAUSSIAN_BLUR_SIGMA: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 6.0]; // px
pub const DEFOCUS_RADIUS: [f64; 5] = [3.0, 4.0, 6.0, 8.0, 10.0]; // disk px
pub const MOTION_LENGTH: [u32; 5] = [5, 9, 13, 17, 21]; // px, random angle
pub const ZOOM_MAX: [f64; 5] = [1.11, 1.16, 1.21, 1.26, 1.31]; // zoom factors 1..max step 0.02
pub const BRIGHTNESS_SHIFT: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5]; // x 255, additive
pub const CONTRAST_FACTOR: [f64; 5] = [0.4, 0.3, 0.2, 0.1, 0.05]; // around the mean
pub const FOG_STRENGTH: [f64; 5] = [0.2, 0.3, 0.4, 0.5, 0.6]; // low-frequency haze amplitude
pub const SNOW_DENSITY: [f64; 5] = [0.002, 0.004, 0.006, 0.008, 0.01]; // flakes per pixel
pub const SPATTER_COVERAGE: [f64; 5] = [0.03, 0.06, 0.1, 0.15, 0.2]; // fraction of pixels
pub const JPEG_QUALITY: [u8; 5] = [25, 18, 15, 10, 7];
pub const ELASTIC_SCALE: [f64; 5] = [8.0, 12.0, 16.0, 20.0, 24.0]; // px displacement std
pub const ELASTIC_SMOOTHING: f64 = 20.0; // px, Gaussian sigma of the displacement field

/// Float planes in `[0, 255]`, channel-interleaved like [`ImageBuffer`].
struct Planes {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

impl Planes {
    fn from_image(img: &ImageBuffer) -> Self {
        Planes {
            w: img.width() as usize,
            h: img.height() as usize,
            data: img.data().iter().map(|&v| v as f32).collect(),
        }
    }

    fn to_image(&self) -> ImageBuffer {
        let data = self.data.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect();
        ImageBuffer::from_raw(self.w as u32, self.h as u32, data).expect("plane dims")
    }

    #[inline]
    fn at(&self, x: isize, y: isize, c: usize) -> f32 {
        let x = x.clamp(0, self.w as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        self.data[(y * self.w + x) * 3 + c]
    }

    /// Bilinear sample with clamped borders.
    fn sample(&self, x: f64, y: f64, c: usize) -> f32 {
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = ((x - x0) as f32, (y - y0) as f32);
        let (xi, yi) = (x0 as isize, y0 as isize);
        let top = self.at(xi, yi, c) * (1.0 - fx) + self.at(xi + 1, yi, c) * fx;
        let bot = self.at(xi, yi + 1, c) * (1.0 - fx) + self.at(xi + 1, yi + 1, c) * fx;
        top * (1.0 - fy) + bot * fy
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let r = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter().map(|v| (v / s) as f32).collect()
}

/// Separable convolution of an `n`-channel buffer with clamped borders.
fn convolve_separable(data: &[f32], w: usize, h: usize, n: usize, kernel: &[f32]) -> Vec<f32> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0f32; data.len()];
    tmp.par_chunks_mut(w * n).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            for c in 0..n {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let sx = (x as isize + k as isize - r).clamp(0, w as isize - 1) as usize;
                    acc += kv * data[(y * w + sx) * n + c];
                }
                row[x * n + c] = acc;
            }
        }
    });
    let mut out = vec![0f32; data.len()];
    out.par_chunks_mut(w * n).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            for c in 0..n {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let sy = (y as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
                    acc += kv * tmp[(sy * w + x) * n + c];
                }
                row[x * n + c] = acc;
            }
        }
    });
    out
}

/// Convolution with an arbitrary small 2-D kernel given as weighted offsets.
fn convolve_offsets(p: &Planes, taps: &[(isize, isize, f32)]) -> Planes {
    let mut out = vec![0f32; p.data.len()];
    out.par_chunks_mut(p.w * 3).enumerate().for_each(|(y, row)| {
        for x in 0..p.w {
            for c in 0..3 {
                row[x * 3 + c] = taps
                    .iter()
                    .map(|&(dx, dy, wt)| wt * p.at(x as isize + dx, y as isize + dy, c))
                    .sum();
            }
        }
    });
    Planes { w: p.w, h: p.h, data: out }
}

fn disk_taps(radius: f64) -> Vec<(isize, isize, f32)> {
    let r = radius.ceil() as isize;
    let mut taps = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if ((dx * dx + dy * dy) as f64) <= radius * radius {
                taps.push((dx, dy, 1.0));
            }
        }
    }
    let n = taps.len() as f32;
    taps.iter_mut().for_each(|t| t.2 /= n);
    taps
}

fn line_taps(length: u32, angle: f64) -> Vec<(isize, isize, f32)> {
    let (s, c) = angle.sin_cos();
    let half = (length as f64 - 1.0) / 2.0;
    let mut taps: Vec<(isize, isize, f32)> = Vec::new();
    for i in 0..length {
        let t = i as f64 - half;
        let tap = ((t * c).round() as isize, (t * s).round() as isize, 1.0);
        if !taps.iter().any(|q| q.0 == tap.0 && q.1 == tap.1) {
            taps.push(tap);
        }
    }
    let n = taps.len() as f32;
    taps.iter_mut().for_each(|t| t.2 /= n);
    taps
}

fn blur(p: &Planes, sigma: f64) -> Planes {
    Planes {
        w: p.w,
        h: p.h,
        data: convolve_separable(&p.data, p.w, p.h, 3, &gaussian_kernel(sigma)),
    }
}

/// Per-pixel displacement field `(dx, dy)` of unit standard deviation per component:
/// white Gaussian noise smoothed by a Gaussian of [`ELASTIC_SMOOTHING`] px, then
/// renormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticField {
    pub width: u32,
    pub height: u32,
    pub dx: Vec<f32>,
    pub dy: Vec<f32>,
}

impl ElasticField {
    pub fn new(width: u32, height: u32, seed: u64) -> Self {
        let (w, h) = (width as usize, height as usize);
        let mut rng = rng_from_seed(substream(seed, 0xE1A5));
        let normal = Normal::new(0.0f32, 1.0).expect("unit normal");
        let noise: Vec<f32> = (0..w * h * 2).map(|_| normal.sample(&mut rng)).collect();
        let smooth = convolve_separable(&noise, w, h, 2, &gaussian_kernel(ELASTIC_SMOOTHING));
        let mut dx: Vec<f32> = smooth.iter().step_by(2).copied().collect();
        let mut dy: Vec<f32> = smooth.iter().skip(1).step_by(2).copied().collect();
        for v in [&mut dx, &mut dy] {
            let n = v.len() as f64;
            let mean = v.iter().map(|&a| a as f64).sum::<f64>() / n;
            let sd = (v.iter().map(|&a| (a as f64 - mean).powi(2)).sum::<f64>() / n).sqrt();
            let sd = if sd > 0.0 { sd } else { 1.0 };
            v.iter_mut().for_each(|a| *a = ((*a as f64 - mean) / sd) as f32);
        }
        ElasticField { width, height, dx, dy }
    }

    /// Bilinear backward warp: output `(x, y)` samples the input at
    /// `(x + scale*dx, y + scale*dy)`, clamped to the frame.
    pub fn warp_image(&self, img: &ImageBuffer, scale: f64) -> Result<ImageBuffer> {
        self.check(img.dims())?;
        let p = Planes::from_image(img);
        let w = p.w;
        let mut out = vec![0f32; p.data.len()];
        out.par_chunks_mut(w * 3).enumerate().for_each(|(y, row)| {
            for x in 0..w {
                let i = y * w + x;
                let sx = x as f64 + scale * self.dx[i] as f64;
                let sy = y as f64 + scale * self.dy[i] as f64;
                for c in 0..3 {
                    row[x * 3 + c] = p.sample(sx, sy, c);
                }
            }
        });
        Ok(Planes { w, h: p.h, data: out }.to_image())
    }

    /// Nearest-neighbour version of [`ElasticField::warp_image`] for masks.
    pub fn warp_mask(&self, mask: &LabelMask, scale: f64) -> Result<LabelMask> {
        self.check(mask.dims())?;
        let (w, h) = (self.width as usize, self.height as usize);
        let mut bits = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let sx = (x as f64 + scale * self.dx[i] as f64).round().clamp(0.0, w as f64 - 1.0) as usize;
                let sy = (y as f64 + scale * self.dy[i] as f64).round().clamp(0.0, h as f64 - 1.0) as usize;
                bits[i] = mask.bits()[sy * w + sx];
            }
        }
        LabelMask::from_bits(self.width, self.height, mask.class(), bits)
    }

    fn check(&self, found: (u32, u32)) -> Result<()> {
        if found != (self.width, self.height) {
            return Err(Error::DimensionMismatch {
                expected: (self.width, self.height),
                found,
                context: "elastic field".into(),
            });
        }
        Ok(())
    }
}

/// Elastic warp at an explicit displacement scale in px.
pub fn apply_elastic(img: &ImageBuffer, scale: f64, seed: u64) -> Result<ImageBuffer> {
    ElasticField::new(img.width(), img.height(), seed).warp_image(img, scale)
}

fn add_noise(p: &mut Planes, rng: &mut SampleRng, f: impl Fn(f32, &mut SampleRng) -> f32) {
    for v in p.data.iter_mut() {
        *v = f(*v, rng);
    }
}

fn jpeg_roundtrip(img: &ImageBuffer, quality: u8) -> Result<ImageBuffer> {
    let mut bytes = Vec::new();
    JpegEncoder::new_with_quality(&mut bytes, quality)
        .encode(img.data(), img.width(), img.height(), image::ExtendedColorType::Rgb8)
        .map_err(|e| Error::image("<jpeg>", e))?;
    let decoded = image::load_from_memory_with_format(&bytes, image::ImageFormat::Jpeg)
        .map_err(|e| Error::image("<jpeg>", e))?
        .to_rgb8();
    ImageBuffer::from_raw(img.width(), img.height(), decoded.into_raw())
}

/// Low-frequency field in `[0, 1]`.
fn haze(w: u32, h: u32, seed: u64, base_frequency: f64) -> Vec<f64> {
    let p = NoiseParams {
        octaves: 4,
        persistence: 0.6,
        lacunarity: 2.0,
        base_frequency,
        seed,
    };
    noise_field(w, h, &p).data.iter().map(|v| (v + 1.0) / 2.0).collect()
}

pub fn apply_perturbation(img: &ImageBuffer, cfg: &PerturbConfig) -> Result<ImageBuffer> {
    cfg.validate()?;
    let mut rng = rng_from_seed(substream(cfg.seed, cfg.kind as u64));
    let mut p = Planes::from_image(img);
    let (w, h) = img.dims();
    let out = match cfg.kind {
        // x + N(0, sigma)
        PerturbKind::GaussianNoise => {
            let n = Normal::new(0.0f32, (cfg.level(GAUSSIAN_NOISE_SIGMA) * 255.0) as f32).expect("sigma");
            add_noise(&mut p, &mut rng, |v, r| v + n.sample(r));
            p
        }
        // Poisson(x/255 * photons) / photons * 255
        PerturbKind::ShotNoise => {
            let photons = cfg.level(SHOT_NOISE_PHOTONS);
            add_noise(&mut p, &mut rng, |v, r| {
                let lambda = v as f64 / 255.0 * photons;
                let k = if lambda > 0.0 { Poisson::new(lambda).expect("rate").sample(r) } else { 0.0 };
                (k / photons * 255.0) as f32
            });
            p
        }
        // each channel value replaced by 0 or 255 with the given probability
        PerturbKind::ImpulseNoise => {
            let amount = cfg.level(IMPULSE_AMOUNT);
            add_noise(&mut p, &mut rng, |v, r| {
                if r.random::<f64>() < amount {
                    if r.random::<bool>() { 255.0 } else { 0.0 }
                } else {
                    v
                }
            });
            p
        }
        // x + x * N(0, c)
        PerturbKind::SpeckleNoise => {
            let n = Normal::new(0.0f32, cfg.level(SPECKLE_SIGMA) as f32).expect("sigma");
            add_noise(&mut p, &mut rng, |v, r| v + v * n.sample(r));
            p
        }
        PerturbKind::GaussianBlur => blur(&p, cfg.level(GAUSSIAN_BLUR_SIGMA)),
        // uniform disk average
        PerturbKind::DefocusBlur => convolve_offsets(&p, &disk_taps(cfg.level(DEFOCUS_RADIUS))),
        // uniform line average at a random angle
        PerturbKind::MotionBlur => {
            let angle = rng.random_range(-45f64..45.0).to_radians();
            convolve_offsets(&p, &line_taps(cfg.level(MOTION_LENGTH), angle))
        }
        // mean of centre zooms 1, 1.02, ... up to the level maximum
        PerturbKind::ZoomBlur => {
            let max = cfg.level(ZOOM_MAX);
            let zooms: Vec<f64> = (0..).map(|i| 1.0 + 0.02 * i as f64).take_while(|&z| z <= max + 1e-9).collect();
            let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
            let mut acc = vec![0f32; p.data.len()];
            acc.par_chunks_mut(p.w * 3).enumerate().for_each(|(y, row)| {
                for x in 0..p.w {
                    for &z in &zooms {
                        let sx = cx + (x as f64 - cx) / z;
                        let sy = cy + (y as f64 - cy) / z;
                        for c in 0..3 {
                            row[x * 3 + c] += p.sample(sx, sy, c) / zooms.len() as f32;
                        }
                    }
                }
            });
            Planes { data: acc, ..p }
        }
        // x + shift * 255
        PerturbKind::Brightness => {
            let d = (cfg.level(BRIGHTNESS_SHIFT) * 255.0) as f32;
            p.data.iter_mut().for_each(|v| *v += d);
            p
        }
        // (x - mean) * c + mean, per channel mean
        PerturbKind::Contrast => {
            let c = cfg.level(CONTRAST_FACTOR) as f32;
            let n = (w * h) as f32;
            let mut means = [0f32; 3];
            for (i, v) in p.data.iter().enumerate() {
                means[i % 3] += v / n;
            }
            p.data.iter_mut().enumerate().for_each(|(i, v)| *v = (*v - means[i % 3]) * c + means[i % 3]);
            p
        }
        // (x + s * 255 * haze) / (1 + s): brighter, flatter, spatially varying
        PerturbKind::Fog => {
            let s = cfg.level(FOG_STRENGTH);
            let field = haze(w, h, rng.random(), 3.0);
            p.data.iter_mut().enumerate().for_each(|(i, v)| {
                *v = ((*v as f64 + s * 255.0 * field[i / 3]) / (1.0 + s)) as f32;
            });
            p
        }
        // bright flakes smeared along a random fall direction over a whitened image
        PerturbKind::Snow => {
            let density = cfg.level(SNOW_DENSITY);
            let n = (density * (w * h) as f64).round() as usize;
            let mut flakes = Planes { w: p.w, h: p.h, data: vec![0f32; p.data.len()] };
            for _ in 0..n {
                let (x, y) = (rng.random_range(0..w) as usize, rng.random_range(0..h) as usize);
                let bright = rng.random_range(200f32..255.0);
                for c in 0..3 {
                    flakes.data[(y * p.w + x) * 3 + c] = bright;
                }
            }
            let angle = rng.random_range(60f64..120.0).to_radians();
            let flakes = convolve_offsets(&flakes, &line_taps(7, angle));
            let whiten = 0.15 * cfg.severity as f32 / 5.0;
            p.data
                .iter_mut()
                .zip(&flakes.data)
                .for_each(|(v, f)| *v = (*v * (1.0 - whiten) + 255.0 * whiten).max(*f * 3.0));
            p
        }
        // dark muddy blobs from a thresholded haze field
        PerturbKind::Spatter => {
            let cover = cfg.level(SPATTER_COVERAGE);
            let field = haze(w, h, rng.random(), 12.0);
            let mut sorted = field.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
            let t = sorted[((cover * sorted.len() as f64) as usize).min(sorted.len() - 1)];
            const MUD: [f32; 3] = [63.0, 42.0, 20.0];
            p.data.iter_mut().enumerate().for_each(|(i, v)| {
                if field[i / 3] > t {
                    *v = *v * 0.4 + MUD[i % 3] * 0.6;
                }
            });
            p
        }
        PerturbKind::JpegCompression => return jpeg_roundtrip(img, cfg.level(JPEG_QUALITY)),
        // bilinear warp by a smoothed unit-Gaussian field scaled to the level in px
        PerturbKind::ElasticTransform => return apply_elastic(img, cfg.level(ELASTIC_SCALE), cfg.seed),
    };
    Ok(out.to_image())
}

/// Elastic field used for `cfg`, so masks can be warped identically to the image.
pub fn elastic_field_for(width: u32, height: u32, cfg: &PerturbConfig) -> ElasticField {
    ElasticField::new(width, height, cfg.seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbEntry {
    pub id: String,
    pub kind: PerturbKind,
    pub severity: u8,
    pub seed: u64,
    pub source: PathBuf,
    pub output: PathBuf,
    /// Ground-truth mask directory: the original one for photometric kinds, the warped
    /// copy for geometric ones. `None` when the source has no masks.
    pub masks: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PerturbManifest {
    pub format_version: String,
    pub tool_version: String,
    pub master_seed: u64,
    pub severity: u8,
    pub kinds: Vec<PerturbKind>,
    pub entries: Vec<PerturbEntry>,
    pub errors: Vec<String>,
}

struct Source {
    id: String,
    image: PathBuf,
    masks: Option<PathBuf>,
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

/// Images of a dataset: annotated images when annotations exist, else every image file
/// outside `masks/` directories.
fn sources(dir: &Path) -> Result<Vec<Source>> {
    let ds = discover(dir)?;
    let mut out: Vec<Source> = ds
        .items
        .iter()
        .filter_map(|item| {
            let image = item.image_path.clone()?;
            let mdir = item.annotation_path.parent()?.join("masks");
            Some(Source {
                id: item.id.clone(),
                image,
                masks: mdir.is_dir().then_some(mdir),
            })
        })
        .collect();
    if out.is_empty() {
        for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
            let entry = entry.map_err(|e| Error::io(dir, e.into()))?;
            let path = entry.path();
            let in_masks = path.components().any(|c| c.as_os_str() == "masks");
            if entry.file_type().is_file() && is_image(path) && !in_masks {
                let rel = path.strip_prefix(dir).unwrap_or(path).with_extension("");
                out.push(Source {
                    id: rel.to_string_lossy().replace('\\', "/"),
                    image: path.to_path_buf(),
                    masks: None,
                });
            }
        }
    }
    Ok(out)
}

fn perturb_one(src: &Source, index: u64, kind: PerturbKind, severity: u8, master_seed: u64, out_dir: &Path) -> Result<PerturbEntry> {
    let seed = substream(derive_seed(SeedSpec::new(master_seed, index)), kind as u64);
    let cfg = PerturbConfig { kind, severity, seed };
    let img = load_image(&src.image)?;
    let out = apply_perturbation(&img, &cfg)?;
    let output = out_dir.join(kind.name()).join(format!("{}.png", src.id));
    save_image(&out, &output)?;
    let mut masks = src.masks.clone();
    if kind.is_geometric() {
        if let Some(mdir) = &src.masks {
            let field = elastic_field_for(img.width(), img.height(), &cfg);
            let target = out_dir.join(kind.name()).join(&src.id).join("masks");
            std::fs::create_dir_all(&target).map_err(|e| Error::io(&target, e))?;
            for (class, path) in list_mask_files(mdir)? {
                let m = load_mask(&path, class)?;
                save_mask(&field.warp_mask(&m, cfg.level(ELASTIC_SCALE))?, target.join(path.file_name().expect("file")))?;
            }
            masks = Some(target);
        }
    }
    Ok(PerturbEntry {
        id: src.id.clone(),
        kind,
        severity,
        seed,
        source: src.image.clone(),
        output,
        masks,
    })
}

/// Writes `out_dir/<kind>/<id>.png` for every image and kind plus `out_dir/manifest.json`.
/// Per-file failures are collected in the manifest rather than aborting the run.
pub fn perturb_dataset(
    dataset_dir: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    kinds: &[PerturbKind],
    severity: u8,
    master_seed: u64,
) -> Result<PerturbManifest> {
    let (dataset_dir, out_dir) = (dataset_dir.as_ref(), out_dir.as_ref());
    PerturbConfig { kind: PerturbKind::Brightness, severity, seed: 0 }.validate()?;
    let srcs = sources(dataset_dir)?;
    let jobs: Vec<(usize, PerturbKind)> = (0..srcs.len()).flat_map(|i| kinds.iter().map(move |&k| (i, k))).collect();
    let results: Vec<std::result::Result<PerturbEntry, String>> = jobs
        .par_iter()
        .map(|&(i, k)| {
            perturb_one(&srcs[i], i as u64, k, severity, master_seed, out_dir)
                .map_err(|e| format!("{} [{}]: {e}", srcs[i].id, k))
        })
        .collect();
    let mut manifest = PerturbManifest {
        format_version: "1".into(),
        tool_version: crate::TOOL_VERSION.into(),
        master_seed,
        severity,
        kinds: kinds.to_vec(),
        entries: Vec::new(),
        errors: Vec::new(),
    };
    for r in results {
        match r {
            Ok(e) => manifest.entries.push(e),
            Err(e) => manifest.errors.push(e),
        }
    }
    write_json(out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: PerturbKind, severity: u8) -> PerturbConfig {
        PerturbConfig { kind, severity, seed: 9 }
    }

    #[test]
    fn fifteen_unique_names() {
        let mut names: Vec<_> = PerturbKind::ALL.iter().map(|k| k.name()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 15);
        for k in PerturbKind::ALL {
            assert_eq!(k.name().parse::<PerturbKind>().unwrap(), k);
        }
    }

    #[test]
    fn brightness_on_constant() {
        let img = ImageBuffer::filled(8, 8, [100, 100, 100]).unwrap();
        for s in 1..=5u8 {
            let out = apply_perturbation(&img, &cfg(PerturbKind::Brightness, s)).unwrap();
            let expect = (100.0 + BRIGHTNESS_SHIFT[s as usize - 1] * 255.0).round().min(255.0) as u8;
            assert!(out.data().iter().all(|&v| v == expect));
        }
    }

    #[test]
    fn all_kinds_keep_dims_and_are_deterministic() {
        let mut img = ImageBuffer::new(48, 40).unwrap();
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = (i * 37 % 251) as u8;
        }
        for k in PerturbKind::ALL {
            let a = apply_perturbation(&img, &cfg(k, 3)).unwrap();
            assert_eq!(a.dims(), img.dims());
            assert_eq!(a, apply_perturbation(&img, &cfg(k, 3)).unwrap(), "{k}");
        }
    }

    #[test]
    fn zero_scale_elastic_is_identity() {
        let mut img = ImageBuffer::new(33, 21).unwrap();
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = (i * 13 % 256) as u8;
        }
        assert_eq!(apply_elastic(&img, 0.0, 4).unwrap(), img);
    }

    #[test]
    fn severity_out_of_range() {
        let img = ImageBuffer::new(4, 4).unwrap();
        assert!(apply_perturbation(&img, &cfg(PerturbKind::Fog, 0)).is_err());
        assert!(apply_perturbation(&img, &cfg(PerturbKind::Fog, 6)).is_err());
    }
}
