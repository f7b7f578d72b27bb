//! Procedural concrete surfaces.
//!
//! Albedo is a gray base modulated by a high-frequency grain layer and a low-frequency
//! blotch layer. Pores are small dark ellipses recorded as `Cavity` ground truth. An
//! optional weathering overlay tints the top quantile of a low-frequency noise field
//! toward moss/dirt colors and records it as `Weathering`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{noise_field, NoiseParams};
use crate::seed::{rng_from_seed, substream};
use crate::types::{ClassId, ImageBuffer, LabelMask, Polygon, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceParams {
    pub width: u32,
    pub height: u32,
    pub base_gray: f64,
    pub grain_amp: f64,
    pub blotch_amp: f64,
    /// Pores per 1000 pixels.
    pub pore_density: f64,
    pub weathered: bool,
    pub weathering_coverage: f64,
    pub seed: u64,
}

impl SurfaceParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParam(what.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("surface dimensions must be positive");
        }
        if !(0.0..=1.0).contains(&self.base_gray) {
            return bad("base_gray must lie in [0, 1]");
        }
        if !(0.0..=0.5).contains(&self.grain_amp) || !(0.0..=0.5).contains(&self.blotch_amp) {
            return bad("grain and blotch amplitudes must lie in [0, 0.5]");
        }
        if !(self.pore_density >= 0.0) {
            return bad("pore_density must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.weathering_coverage) {
            return bad("weathering_coverage must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Sampling ranges used by [`random_surface`].
pub mod ranges {
    pub const BASE_GRAY: (f64, f64) = (0.45, 0.75);
    pub const GRAIN: (f64, f64) = (0.02, 0.08);
    pub const BLOTCH: (f64, f64) = (0.03, 0.12);
    pub const PORE_DENSITY: (f64, f64) = (0.05, 0.4);
    pub const COVERAGE: (f64, f64) = (0.1, 0.5);
}

/// A stamped pore: rotated ellipse in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pore {
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
    pub angle: f64,
}

impl Pore {
    fn contains(&self, px: f64, py: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (px - self.cx, py - self.cy);
        let u = (dx * c + dy * s) / self.rx;
        let v = (-dx * s + dy * c) / self.ry;
        u * u + v * v <= 1.0
    }

    fn radius(&self) -> f64 {
        self.rx.max(self.ry)
    }

    /// Outline as a 12-gon.
    pub fn outline(&self) -> Polygon {
        let (s, c) = self.angle.sin_cos();
        let pts = (0..12)
            .map(|i| {
                let t = i as f64 * std::f64::consts::TAU / 12.0;
                let (u, v) = (self.rx * t.cos(), self.ry * t.sin());
                (self.cx + u * c - v * s, self.cy + u * s + v * c)
            })
            .collect();
        Polygon::new(pts).expect("12 finite points")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub image: ImageBuffer,
    pub weathering_mask: LabelMask,
    pub pore_mask: LabelMask,
    pub pores: Vec<Pore>,
    /// Noise threshold that produced `weathering_mask` (`field >= threshold`).
    pub weathering_threshold: Option<f64>,
}

pub(crate) fn grain_params(width: u32, seed: u64) -> NoiseParams {
    NoiseParams {
        octaves: 4,
        persistence: 0.5,
        lacunarity: 2.0,
        base_frequency: (width as f64 / 8.0).max(1.0),
        seed: substream(seed, 1),
    }
}

pub(crate) fn blotch_params(seed: u64) -> NoiseParams {
    NoiseParams {
        octaves: 3,
        persistence: 0.5,
        lacunarity: 2.0,
        base_frequency: 3.0,
        seed: substream(seed, 2),
    }
}

pub fn weathering_params(seed: u64) -> NoiseParams {
    NoiseParams {
        octaves: 4,
        persistence: 0.55,
        lacunarity: 2.0,
        base_frequency: 2.5,
        seed: substream(seed, 3),
    }
}

/// Threshold `t` such that `field >= t` selects `round(coverage * n)` pixels.
pub fn coverage_threshold(field: &ScalarField, coverage: f64) -> f64 {
    let n = field.data.len();
    let k = (coverage * n as f64).round() as usize;
    if k == 0 {
        return f64::INFINITY;
    }
    if k >= n {
        return f64::NEG_INFINITY;
    }
    let mut sorted = field.data.clone();
    let idx = n - k;
    let (_, t, _) = sorted.select_nth_unstable_by(idx, |a, b| a.total_cmp(b));
    *t
}

pub fn synth_surface(p: &SurfaceParams) -> Result<Surface> {
    p.validate()?;
    let (w, h) = (p.width, p.height);
    let n = w as usize * h as usize;
    let mut rng = rng_from_seed(substream(p.seed, 0));

    let modulation = 0.2 * (p.grain_amp + p.blotch_amp);
    let tint: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0) * modulation);
    let moss_mix: f64 = rng.random();
    let moss = [
        0.30 + 0.10 * moss_mix,
        0.38 - 0.05 * moss_mix,
        0.20 + 0.02 * moss_mix,
    ];

    let grain = (p.grain_amp > 0.0).then(|| noise_field(w, h, &grain_params(w, p.seed)));
    let blotch = (p.blotch_amp > 0.0).then(|| noise_field(w, h, &blotch_params(p.seed)));

    let mut weathering_mask = LabelMask::new(w, h, ClassId::Weathering)?;
    let mut weathering = None;
    if p.weathered && p.weathering_coverage > 0.0 {
        let field = noise_field(w, h, &weathering_params(p.seed));
        let t = coverage_threshold(&field, p.weathering_coverage);
        for (b, &v) in weathering_mask.bits_mut().iter_mut().zip(&field.data) {
            *b = v >= t;
        }
        weathering = Some((field, t));
    }

    let mut data = Vec::with_capacity(n * 3);
    for i in 0..n {
        let mut v = p.base_gray;
        if let Some(g) = &grain {
            v += p.grain_amp * g.data[i];
        }
        if let Some(b) = &blotch {
            v += p.blotch_amp * b.data[i];
        }
        let mut rgb = [v + tint[0], v + tint[1], v + tint[2]];
        if let Some((field, t)) = &weathering {
            if field.data[i] >= *t {
                let strength = 0.35 + 0.4 * ((field.data[i] - t) / 0.25).clamp(0.0, 1.0);
                for c in 0..3 {
                    rgb[c] = (rgb[c] * (1.0 - strength) + moss[c] * strength) * 0.85;
                }
            }
        }
        for c in rgb {
            data.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    let mut image = ImageBuffer::from_raw(w, h, data)?;

    let mut pore_mask = LabelMask::new(w, h, ClassId::Cavity)?;
    let pores = place_pores(p, &mut rng);
    for pore in &pores {
        let factor: f64 = rng.random_range(0.35..0.6);
        let r = pore.radius().ceil() as i64 + 1;
        let (cx, cy) = (pore.cx.floor() as i64, pore.cy.floor() as i64);
        for y in (cy - r).max(0)..=(cy + r).min(h as i64 - 1) {
            for x in (cx - r).max(0)..=(cx + r).min(w as i64 - 1) {
                if pore.contains(x as f64 + 0.5, y as f64 + 0.5) {
                    let (x, y) = (x as u32, y as u32);
                    let px = image.get(x, y);
                    image.put(x, y, px.map(|c| (c as f64 * factor).round() as u8));
                    pore_mask.set(x, y, true);
                }
            }
        }
    }

    Ok(Surface {
        image,
        weathering_mask,
        pore_mask,
        pores,
        weathering_threshold: weathering.map(|(_, t)| t),
    })
}

// Pores keep a gap of more than two pixels so stamped ellipses never touch,
// not even diagonally.
fn place_pores(p: &SurfaceParams, rng: &mut impl Rng) -> Vec<Pore> {
    let margin = 3.0;
    if (p.width as f64) <= 2.0 * margin + 1.0 || (p.height as f64) <= 2.0 * margin + 1.0 {
        return Vec::new();
    }
    let target = (p.pore_density * (p.width as f64 * p.height as f64) / 1000.0).round() as usize;
    let mut pores: Vec<Pore> = Vec::with_capacity(target);
    let mut attempts = 0usize;
    while pores.len() < target && attempts < target * 30 {
        attempts += 1;
        let candidate = Pore {
            cx: rng.random_range(margin..p.width as f64 - margin),
            cy: rng.random_range(margin..p.height as f64 - margin),
            rx: rng.random_range(1.0..=3.0),
            ry: rng.random_range(1.0..=3.0),
            angle: rng.random_range(0.0..std::f64::consts::PI),
        };
        let clear = pores.iter().all(|q| {
            let d = ((q.cx - candidate.cx).powi(2) + (q.cy - candidate.cy).powi(2)).sqrt();
            d > q.radius() + candidate.radius() + 2.0
        });
        if clear {
            pores.push(candidate);
        }
    }
    pores
}

/// Draws surface parameters uniformly from [`ranges`].
pub fn sample_surface_params(seed: u64, weathered: bool, width: u32, height: u32) -> SurfaceParams {
    let mut rng = rng_from_seed(substream(seed, 100));
    let mut draw = |(lo, hi): (f64, f64)| rng.random_range(lo..=hi);
    SurfaceParams {
        width,
        height,
        base_gray: draw(ranges::BASE_GRAY),
        grain_amp: draw(ranges::GRAIN),
        blotch_amp: draw(ranges::BLOTCH),
        pore_density: draw(ranges::PORE_DENSITY),
        weathered,
        weathering_coverage: draw(ranges::COVERAGE),
        seed,
    }
}

pub fn random_surface(seed: u64, weathered: bool, width: u32, height: u32) -> Result<Surface> {
    synth_surface(&sample_surface_params(seed, weathered, width, height))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::components::connected_components;

    fn flat(base: f64) -> SurfaceParams {
        SurfaceParams {
            width: 64,
            height: 48,
            base_gray: base,
            grain_amp: 0.0,
            blotch_amp: 0.0,
            pore_density: 0.0,
            weathered: false,
            weathering_coverage: 0.0,
            seed: 9,
        }
    }

    #[test]
    fn unmodulated_surface_is_constant() {
        let s = synth_surface(&flat(0.6)).unwrap();
        let v = (255.0f64 * 0.6).round() as u8;
        assert!(s.image.data().iter().all(|&c| c == v));
        assert!(s.weathering_mask.is_empty());
        assert!(s.pore_mask.is_empty());
    }

    #[test]
    fn deterministic() {
        let p = sample_surface_params(77, true, 96, 64);
        assert_eq!(synth_surface(&p).unwrap(), synth_surface(&p).unwrap());
    }

    #[test]
    fn weathering_flag_controls_mask() {
        for seed in 0..5 {
            assert!(random_surface(seed, false, 64, 64).unwrap().weathering_mask.is_empty());
            assert!(!random_surface(seed, true, 64, 64).unwrap().weathering_mask.is_empty());
        }
    }

    #[test]
    fn pores_do_not_merge_and_are_darkened() {
        let mut p = flat(0.6);
        p.width = 256;
        p.height = 256;
        p.pore_density = 0.4;
        let s = synth_surface(&p).unwrap();
        assert_eq!(connected_components(&s.pore_mask).len(), s.pores.len());
        assert!(!s.pores.is_empty());
        let base = (255.0f64 * 0.6).round() as u8;
        for y in 0..256 {
            for x in 0..256 {
                if s.pore_mask.get(x, y) {
                    assert!(s.image.get(x, y).iter().all(|&c| c < base));
                }
            }
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = flat(0.5);
        p.grain_amp = 0.6;
        assert!(synth_surface(&p).is_err());
    }
}
