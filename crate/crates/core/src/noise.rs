//! Classic 2-D gradient (Perlin) noise and fractal sums over it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::mix64;
use crate::types::ScalarField;

/// fBm parameters. Coordinates passed to [`fbm2`] are in image widths, so
/// `base_frequency` is in cycles per image width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub octaves: u32,
    pub persistence: f64,
    pub lacunarity: f64,
    pub base_frequency: f64,
    pub seed: u64,
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        if !(1..=32).contains(&self.octaves) {
            return Err(Error::InvalidParam(format!("octaves {} not in [1, 32]", self.octaves)));
        }
        if !(self.persistence > 0.0 && self.persistence <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "persistence {} not in (0, 1]",
                self.persistence
            )));
        }
        if !(self.lacunarity >= 1.0) {
            return Err(Error::InvalidParam(format!("lacunarity {} < 1", self.lacunarity)));
        }
        if !(self.base_frequency > 0.0 && self.base_frequency.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "base frequency {} must be positive",
                self.base_frequency
            )));
        }
        Ok(())
    }
}

const DIAG: f64 = std::f64::consts::FRAC_1_SQRT_2;

// Eight unit gradients at 45 degree steps.
const GRADIENTS: [(f64, f64); 8] = [
    (1.0, 0.0),
    (DIAG, DIAG),
    (0.0, 1.0),
    (-DIAG, DIAG),
    (-1.0, 0.0),
    (-DIAG, -DIAG),
    (0.0, -1.0),
    (DIAG, -DIAG),
];

// Unit-gradient 2-D Perlin noise peaks at sqrt(2)/2; rescale to span [-1, 1].
const RANGE_SCALE: f64 = std::f64::consts::SQRT_2;

#[inline]
fn gradient(ix: i64, iy: i64, seed: u64) -> (f64, f64) {
    let h = mix64(
        seed ^ mix64((ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
            ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F),
    );
    GRADIENTS[(h >> 61) as usize]
}

#[inline]
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Gradient noise in `[-1, 1]`, exactly zero on the integer lattice.
pub fn perlin2(x: f64, y: f64, seed: u64) -> f64 {
    let xf = x.floor();
    let yf = y.floor();
    let (ix, iy) = (xf as i64, yf as i64);
    let (fx, fy) = (x - xf, y - yf);

    let dot = |cx: i64, cy: i64, dx: f64, dy: f64| {
        let (gx, gy) = gradient(cx, cy, seed);
        gx * dx + gy * dy
    };
    let n00 = dot(ix, iy, fx, fy);
    let n10 = dot(ix + 1, iy, fx - 1.0, fy);
    let n01 = dot(ix, iy + 1, fx, fy - 1.0);
    let n11 = dot(ix + 1, iy + 1, fx - 1.0, fy - 1.0);

    let u = fade(fx);
    let v = fade(fy);
    let value = lerp(lerp(n00, n10, u), lerp(n01, n11, u), v) * RANGE_SCALE;
    value.clamp(-1.0, 1.0)
}

/// Fractal Brownian motion normalized by the total amplitude into `[-1, 1]`.
/// Octave `o` uses seed `seed ^ o`.
pub fn fbm2(x: f64, y: f64, p: &NoiseParams) -> f64 {
    let mut sum = 0.0;
    let mut norm = 0.0;
    let mut amplitude = 1.0;
    let mut frequency = p.base_frequency;
    for o in 0..p.octaves {
        sum += amplitude * perlin2(x * frequency, y * frequency, p.seed ^ o as u64);
        norm += amplitude;
        amplitude *= p.persistence;
        frequency *= p.lacunarity;
    }
    sum / norm
}

/// Normalized coordinate of pixel center `(x, y)` for a raster `width` pixels wide.
#[inline]
pub fn pixel_coord(x: u32, y: u32, width: u32) -> (f64, f64) {
    (
        (x as f64 + 0.5) / width as f64,
        (y as f64 + 0.5) / width as f64,
    )
}

/// Evaluates rows `rows` of the `width`-wide field; `out` holds `rows.len() * width` values.
pub fn noise_rows(width: u32, rows: std::ops::Range<u32>, p: &NoiseParams, out: &mut [f64]) {
    out.par_chunks_mut(width as usize)
        .zip(rows.into_par_iter())
        .for_each(|(row, y)| {
            for (x, v) in row.iter_mut().enumerate() {
                let (u, w) = pixel_coord(x as u32, y, width);
                *v = fbm2(u, w, p);
            }
        });
}

/// `fbm2` sampled at every pixel center.
pub fn noise_field(width: u32, height: u32, p: &NoiseParams) -> ScalarField {
    let mut field = ScalarField::zeros(width, height);
    noise_rows(width, 0..height, p, &mut field.data);
    field
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn lattice_points_are_zero() {
        for seed in [0u64, 1, 99, u64::MAX] {
            assert_eq!(perlin2(3.0, 7.0, seed), 0.0);
            assert_eq!(perlin2(-12.0, 0.0, seed), 0.0);
        }
    }

    #[test]
    fn pure() {
        assert_eq!(perlin2(1.3, -4.7, 5), perlin2(1.3, -4.7, 5));
    }

    #[test]
    fn sample_statistics() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let (mut lo, mut hi, mut sum) = (f64::MAX, f64::MIN, 0.0);
        let n = 100_000;
        for _ in 0..n {
            let v = perlin2(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0), 3);
            lo = lo.min(v);
            hi = hi.max(v);
            sum += v;
        }
        assert!(lo >= -1.0 && hi <= 1.0);
        assert!((sum / n as f64).abs() < 0.02, "mean {}", sum / n as f64);
    }

    #[test]
    fn single_octave_is_scaled_perlin() {
        let p = NoiseParams {
            octaves: 1,
            persistence: 0.7,
            lacunarity: 2.0,
            base_frequency: 5.0,
            seed: 11,
        };
        assert_eq!(fbm2(0.31, 0.77, &p), perlin2(0.31 * 5.0, 0.77 * 5.0, 11));
        assert_eq!(fbm2(0.2, 0.6, &p), 0.0);
    }

    #[test]
    fn field_matches_pointwise() {
        let p = NoiseParams {
            octaves: 3,
            persistence: 0.6,
            lacunarity: 2.0,
            base_frequency: 4.0,
            seed: 2,
        };
        let f = noise_field(17, 9, &p);
        for y in 0..9 {
            for x in 0..17 {
                let (u, v) = pixel_coord(x, y, 17);
                assert_eq!(f.get(x, y), fbm2(u, v, &p));
            }
        }
    }

    #[test]
    fn validation_bounds() {
        let mut p = NoiseParams {
            octaves: 0,
            persistence: 0.5,
            lacunarity: 2.0,
            base_frequency: 1.0,
            seed: 0,
        };
        assert!(p.validate().is_err());
        p.octaves = 33;
        assert!(p.validate().is_err());
        p.octaves = 32;
        assert!(p.validate().is_ok());
        p.persistence = 0.0;
        assert!(p.validate().is_err());
    }
}
