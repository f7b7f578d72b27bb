//! Perlin-noise cavity maps and their rendering (synthcavity).
//!
//! A cavity map is the mean of several fBm layers, thresholded, with small connected
//! regions removed. Rendering darkens the map by a normalized depth and adds a one
//! pixel highlight on the wall facing a fixed top-left light.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::components::{connected_components, remove_small_components};
use crate::error::{Error, Result};
use crate::noise::{noise_field, NoiseParams};
use crate::seed::{derive_seed, rng_from_seed, substream, unit_from_hash, SeedSpec};
use crate::texture::random_surface;
use crate::types::{
    Annotation, ClassId, GeneratedSample, ImageBuffer, LabelMask, MaskSet, Polygon, ScalarField, Shape,
};

pub const OCTAVES: (u32, u32) = (2, 32);
pub const PERSISTENCE: (f64, f64) = (0.6, 0.9);
pub const LACUNARITIES: [f64; 2] = [1.5, 2.0];
pub const MAX_RETRIES: u32 = 8;
pub const RIM_GAIN: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    pub layers: Vec<NoiseParams>,
    pub threshold: f64,
    pub min_area: u64,
    pub depth_scale: f64,
    pub seed: u64,
}

impl CavityParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if self.layers.is_empty() {
            return bad("at least one noise layer is required".into());
        }
        for l in &self.layers {
            l.validate()?;
            if !(OCTAVES.0..=OCTAVES.1).contains(&l.octaves) {
                return bad(format!("cavity octaves {} not in [2, 32]", l.octaves));
            }
            if !(PERSISTENCE.0..=PERSISTENCE.1).contains(&l.persistence) {
                return bad(format!("cavity persistence {} not in [0.6, 0.9]", l.persistence));
            }
            if !LACUNARITIES.contains(&l.lacunarity) {
                return bad(format!("cavity lacunarity {} not 1.5 or 2", l.lacunarity));
            }
        }
        if !(self.threshold > -1.0 && self.threshold <= 1.0) {
            return bad(format!("threshold {} not in (-1, 1]", self.threshold));
        }
        if self.min_area == 0 {
            return bad("min_area must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.depth_scale) {
            return bad(format!("depth_scale {} not in [0, 1]", self.depth_scale));
        }
        Ok(())
    }
}

/// Ranges the generator samples [`CavityParams`] from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "camelCase")]
pub struct CavityRanges {
    pub layers: (u32, u32),
    pub base_frequency: (f64, f64),
    pub threshold: (f64, f64),
    pub depth_scale: (f64, f64),
    pub min_area: u64,
}

impl Default for CavityRanges {
    fn default() -> Self {
        Self {
            layers: (2, 4),
            base_frequency: (8.0, 24.0),
            threshold: (0.12, 0.20),
            depth_scale: (0.3, 0.6),
            min_area: 6,
        }
    }
}

/// Target shape statistics a sample should reach.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "camelCase")]
pub struct ShapeProfile {
    pub min_shapes_per_sample: f64,
    pub max_pixels_per_shape: f64,
    /// Fraction of samples for which the pixels-per-shape cap is lifted.
    pub large_cavity_fraction: f64,
}

impl Default for ShapeProfile {
    /// dacl10k Cavity: 6.77 shapes per image and 13,458 px per shape at a mean native
    /// size of about 4.07 Mpx, i.e. roughly 867 px per shape at 512x512.
    fn default() -> Self {
        Self {
            min_shapes_per_sample: 6.77,
            max_pixels_per_shape: 867.0,
            large_cavity_fraction: 0.0,
        }
    }
}

pub fn sample_cavity_params(seed: u64, r: &CavityRanges) -> CavityParams {
    let mut rng = rng_from_seed(seed);
    let n = rng.random_range(r.layers.0..=r.layers.1);
    let layers = (0..n)
        .map(|l| NoiseParams {
            octaves: rng.random_range(OCTAVES.0..=OCTAVES.1),
            persistence: rng.random_range(PERSISTENCE.0..=PERSISTENCE.1),
            lacunarity: LACUNARITIES[rng.random_range(0..2)],
            base_frequency: rng.random_range(r.base_frequency.0..=r.base_frequency.1),
            seed: substream(seed, 10 + l as u64),
        })
        .collect();
    CavityParams {
        layers,
        threshold: rng.random_range(r.threshold.0..=r.threshold.1),
        min_area: r.min_area,
        depth_scale: rng.random_range(r.depth_scale.0..=r.depth_scale.1),
        seed,
    }
}

/// Mean of the layer fields.
pub fn combined_field(width: u32, height: u32, p: &CavityParams) -> ScalarField {
    let mut acc = ScalarField::zeros(width, height);
    for layer in &p.layers {
        let f = noise_field(width, height, layer);
        for (a, v) in acc.data.iter_mut().zip(&f.data) {
            *a += v;
        }
    }
    let n = p.layers.len() as f64;
    acc.data.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Thresholds a combined field and filters small regions.
/// Depth is `field - threshold` inside the surviving mask and zero elsewhere.
pub fn cavity_from_field(field: &ScalarField, threshold: f64, min_area: u64) -> Result<(LabelMask, ScalarField)> {
    let raw = LabelMask::from_bits(
        field.width,
        field.height,
        ClassId::Cavity,
        field.data.iter().map(|&v| v > threshold).collect(),
    )?;
    let mask = remove_small_components(&raw, min_area);
    let mut depth = ScalarField::zeros(field.width, field.height);
    for (i, (&m, &v)) in mask.bits().iter().zip(&field.data).enumerate() {
        if m {
            depth.data[i] = (v - threshold).max(0.0);
        }
    }
    Ok((mask, depth))
}

pub fn gen_cavity_map(width: u32, height: u32, p: &CavityParams) -> Result<(LabelMask, ScalarField)> {
    p.validate()?;
    cavity_from_field(&combined_field(width, height, p), p.threshold, p.min_area)
}

/// Mask pixels whose right, lower or lower-right in-frame neighbour lies outside the
/// mask: the inner wall lit by a light from the top-left.
fn is_lit_rim(mask: &LabelMask, x: u32, y: u32) -> bool {
    let (w, h) = mask.dims();
    [(1, 0), (0, 1), (1, 1)].iter().any(|&(dx, dy)| {
        let (nx, ny) = (x + dx, y + dy);
        nx < w && ny < h && !mask.get(nx, ny)
    })
}

/// Shades cavities: interior intensity times `1 - depth_scale * depth / max_depth`,
/// lit rim times [`RIM_GAIN`].
pub fn render_cavities(
    image: &ImageBuffer,
    mask: &LabelMask,
    depth: &ScalarField,
    depth_scale: f64,
) -> Result<ImageBuffer> {
    let dims = image.dims();
    for found in [mask.dims(), (depth.width, depth.height)] {
        if found != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found,
                context: "cavity rendering".into(),
            });
        }
    }
    let max_depth = depth.data.iter().cloned().fold(0.0, f64::max);
    let mut out = image.clone();
    for y in 0..dims.1 {
        for x in 0..dims.0 {
            if !mask.get(x, y) {
                continue;
            }
            let factor = if is_lit_rim(mask, x, y) {
                RIM_GAIN
            } else if max_depth > 0.0 {
                1.0 - depth_scale * depth.get(x, y) / max_depth
            } else {
                1.0
            };
            let px = image.get(x, y).map(|c| (c as f64 * factor).round().clamp(0.0, 255.0) as u8);
            out.put(x, y, px);
        }
    }
    Ok(out)
}

/// Shape statistics of a cavity mask: (shape count, mean pixels per shape).
pub fn shape_stats(mask: &LabelMask) -> (usize, f64) {
    let comps = connected_components(mask);
    let n = comps.len();
    let mean = if n == 0 { 0.0 } else { mask.count() as f64 / n as f64 };
    (n, mean)
}

/// One synthcavity sample. Parameters are redrawn up to [`MAX_RETRIES`] times until the
/// combined Cavity mask meets `profile`; otherwise the last draw is kept with a warning.
pub fn gen_synthcavity_sample(
    seed_spec: SeedSpec,
    weathered: bool,
    profile: &ShapeProfile,
    ranges: &CavityRanges,
    width: u32,
    height: u32,
) -> Result<GeneratedSample> {
    let sample_seed = derive_seed(seed_spec);
    let surface = random_surface(substream(sample_seed, 20), weathered, width, height)?;
    let large = unit_from_hash(substream(sample_seed, 29)) < profile.large_cavity_fraction;

    let mut warnings = Vec::new();
    let mut chosen = None;
    for attempt in 0..MAX_RETRIES {
        let params = sample_cavity_params(substream(sample_seed, 30 + attempt as u64), ranges);
        let (generated, depth) = gen_cavity_map(width, height, &params)?;
        let mut combined = generated.clone();
        combined.union_with(&surface.pore_mask)?;
        // Pores below the minimum area are texture, not annotated cavities.
        let combined = remove_small_components(&combined, params.min_area);
        let (shapes, mean_px) = shape_stats(&combined);
        let ok = shapes as f64 >= profile.min_shapes_per_sample
            && (large || mean_px <= profile.max_pixels_per_shape);
        chosen = Some((params, generated, depth, combined));
        if ok {
            break;
        }
        if attempt + 1 == MAX_RETRIES {
            warnings.push(format!(
                "cavity profile not met after {MAX_RETRIES} draws: {shapes} shapes, {mean_px:.1} px/shape"
            ));
        }
    }
    let (params, generated, depth, combined) = chosen.expect("at least one draw");
    let image = render_cavities(&surface.image, &generated, &depth, params.depth_scale)?;

    let mut masks = MaskSet::new(width, height)?;
    if !combined.is_empty() {
        masks.insert(combined.clone())?;
    }
    if weathered {
        masks.insert(surface.weathering_mask.clone())?;
    }

    let mut annotation = Annotation::new("image.png", width, height);
    for pore in surface.pores.iter().filter(|p| {
        let (x, y) = (p.cx.floor() as u32, p.cy.floor() as u32);
        x < width && y < height && combined.get(x, y)
    }) {
        annotation.shapes.push(Shape {
            label: ClassId::Cavity,
            polygon: pore.outline(),
        });
    }
    for c in connected_components(&generated) {
        let b = c.bbox;
        annotation.shapes.push(Shape {
            label: ClassId::Cavity,
            polygon: Polygon::rect(b.x0 as f64, b.y0 as f64, b.x1 as f64, b.y1 as f64),
        });
    }
    Ok(GeneratedSample {
        image,
        masks,
        annotation,
        weathered,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(threshold: f64, min_area: u64) -> CavityParams {
        let mut p = sample_cavity_params(5, &CavityRanges::default());
        p.threshold = threshold;
        p.min_area = min_area;
        p
    }

    #[test]
    fn threshold_one_is_empty() {
        let (m, d) = gen_cavity_map(64, 64, &params(1.0, 1)).unwrap();
        assert!(m.is_empty());
        assert!(d.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn huge_min_area_is_empty() {
        assert!(gen_cavity_map(64, 64, &params(-0.5, 1_000_000_000)).unwrap().0.is_empty());
    }

    #[test]
    fn threshold_monotone() {
        let p = params(0.0, 1);
        let field = combined_field(96, 96, &p);
        let mut prev = u64::MAX;
        for t in [-0.2, -0.1, 0.0, 0.1, 0.2, 0.3] {
            let n = cavity_from_field(&field, t, 1).unwrap().0.count();
            assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn empty_mask_renders_unchanged() {
        let img = ImageBuffer::filled(16, 16, [100, 110, 120]).unwrap();
        let mask = LabelMask::new(16, 16, ClassId::Cavity).unwrap();
        let out = render_cavities(&img, &mask, &ScalarField::zeros(16, 16), 0.5).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn full_depth_halves() {
        let img = ImageBuffer::filled(5, 5, [200, 100, 51]).unwrap();
        let mut mask = LabelMask::new(5, 5, ClassId::Cavity).unwrap();
        let mut depth = ScalarField::zeros(5, 5);
        for y in 0..5 {
            for x in 0..5 {
                mask.set(x, y, true);
                depth.set(x, y, 0.2);
            }
        }
        // A full-frame mask has no in-frame outside neighbour, hence no rim.
        let out = render_cavities(&img, &mask, &depth, 0.5).unwrap();
        assert_eq!(out.get(2, 2), [100, 50, 26]);
    }

    #[test]
    fn invalid_layer_rejected() {
        let mut p = params(0.3, 6);
        p.layers[0].persistence = 0.5;
        assert!(p.validate().is_err());
        p.layers[0].persistence = 0.7;
        p.layers[0].lacunarity = 1.7;
        assert!(p.validate().is_err());
    }
}
