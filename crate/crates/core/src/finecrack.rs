//! Coarse crack polygon to fine crack mask refinement.
//!
//! Each polygon's neighbourhood is cropped, converted to luma, contrast-stretched and
//! split into intensity classes by Multi-Otsu. The darkest class, restricted to the
//! slightly dilated polygon and cleaned of specks, is the crack.

use serde::{Deserialize, Serialize};

use crate::components::remove_small_components;
use crate::error::{Error, Result};
use crate::morph::dilate_radius;
use crate::raster::rasterize_polygon;
use crate::types::{Annotation, ClassId, ImageBuffer, LabelMask, Polygon};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OtsuResult {
    pub thresholds: Vec<u8>,
    pub between_class_variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "camelCase")]
pub struct RefineParams {
    pub margin: u32,
    pub low_pct: f64,
    pub high_pct: f64,
    pub classes: usize,
    pub restrict_radius: u32,
    pub min_component: u64,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            margin: 4,
            low_pct: 2.0,
            high_pct: 98.0,
            classes: 3,
            restrict_radius: 5,
            min_component: 20,
        }
    }
}

/// Nearest-rank percentile of a sorted slice.
fn percentile(sorted: &[u8], pct: f64) -> u8 {
    let n = sorted.len();
    let rank = ((pct / 100.0) * (n - 1) as f64).round() as usize;
    sorted[rank.min(n - 1)]
}

/// Linear remap of single-channel values sending the `low_pct` percentile to 0 and the
/// `high_pct` percentile to 255. Degenerate percentiles leave the values unchanged.
pub fn stretch_gray(gray: &[u8], low_pct: f64, high_pct: f64) -> Result<Vec<u8>> {
    if !(0.0 <= low_pct && low_pct < high_pct && high_pct <= 100.0) {
        return Err(Error::InvalidParam(format!(
            "percentiles ({low_pct}, {high_pct}) must satisfy 0 <= low < high <= 100"
        )));
    }
    if gray.is_empty() {
        return Ok(Vec::new());
    }
    let mut sorted = gray.to_vec();
    sorted.sort_unstable();
    let lo = percentile(&sorted, low_pct) as f64;
    let hi = percentile(&sorted, high_pct) as f64;
    if hi <= lo {
        return Ok(gray.to_vec());
    }
    Ok(gray
        .iter()
        .map(|&v| ((v as f64 - lo) * 255.0 / (hi - lo)).round().clamp(0.0, 255.0) as u8)
        .collect())
}

/// [`stretch_gray`] with percentiles taken over all channels jointly.
pub fn contrast_stretch(img: &ImageBuffer, low_pct: f64, high_pct: f64) -> Result<ImageBuffer> {
    let data = stretch_gray(img.data(), low_pct, high_pct)?;
    ImageBuffer::from_raw(img.width(), img.height(), data)
}

pub fn histogram(gray: &[u8]) -> [u64; 256] {
    let mut h = [0u64; 256];
    for &v in gray {
        h[v as usize] += 1;
    }
    h
}

/// Cumulative pixel count and intensity sum, for O(1) class moments.
struct Moments {
    count: [f64; 257],
    sum: [f64; 257],
}

impl Moments {
    fn new(hist: &[u64; 256]) -> Self {
        let (mut count, mut sum) = ([0.0; 257], [0.0; 257]);
        for i in 0..256 {
            count[i + 1] = count[i] + hist[i] as f64;
            sum[i + 1] = sum[i] + i as f64 * hist[i] as f64;
        }
        Self { count, sum }
    }

    /// Weight and mean of intensities in `lo..hi` (exclusive end).
    fn class(&self, lo: usize, hi: usize) -> (f64, f64) {
        let n = self.count[hi] - self.count[lo];
        let s = self.sum[hi] - self.sum[lo];
        (n, if n > 0.0 { s / n } else { 0.0 })
    }
}

/// Between-class variance for class boundaries `t` (class j = `t[j-1] < v <= t[j]`).
pub fn between_class_variance(hist: &[u64; 256], thresholds: &[u8]) -> f64 {
    between(&Moments::new(hist), thresholds)
}

fn between(m: &Moments, thresholds: &[u8]) -> f64 {
    let total = m.count[256];
    if total == 0.0 {
        return 0.0;
    }
    let mu = m.sum[256] / total;
    let mut lo = 0usize;
    let mut var = 0.0;
    for hi in thresholds.iter().map(|&t| t as usize + 1).chain(std::iter::once(256)) {
        let (n, mean) = m.class(lo, hi);
        var += (n / total) * (mean - mu) * (mean - mu);
        lo = hi;
    }
    var
}

/// Exact multi-level Otsu by exhaustive search over strictly increasing thresholds in
/// `[0, 254]`. Class 0 holds intensities `<= t1`. Ties resolve to the lexicographically
/// smallest threshold tuple.
pub fn multi_otsu(hist: &[u64; 256], k: usize) -> Result<OtsuResult> {
    if !(2..=4).contains(&k) {
        return Err(Error::InvalidParam(format!("class count {k} not in [2, 4]")));
    }
    let distinct = hist.iter().filter(|&&c| c > 0).count();
    if distinct < k {
        return Err(Error::InsufficientModes { distinct, required: k });
    }
    let m = Moments::new(hist);
    let mut best: Option<(f64, Vec<u8>)> = None;
    let mut t = vec![0u8; k - 1];
    search(&m, &mut t, 0, 0, &mut best);
    let (var, thresholds) = best.expect("non-empty search space");
    Ok(OtsuResult {
        thresholds,
        between_class_variance: var,
    })
}

// Depth-first enumeration in lexicographic order; a strict `>` keeps the first maximum.
fn search(m: &Moments, t: &mut Vec<u8>, pos: usize, start: usize, best: &mut Option<(f64, Vec<u8>)>) {
    let remaining = t.len() - pos - 1;
    for v in start..=(254 - remaining) {
        t[pos] = v as u8;
        if pos + 1 == t.len() {
            let var = between(m, t);
            if best.as_ref().is_none_or(|(b, _)| var > *b) {
                *best = Some((var, t.clone()));
            }
        } else {
            search(m, t, pos + 1, v + 1, best);
        }
    }
}

/// Refined crack pixels for one coarse polygon, as a full-image `Crack` mask.
pub fn refine_crack_polygon(image: &ImageBuffer, poly: &Polygon) -> Result<LabelMask> {
    refine_crack_polygon_with(image, poly, &RefineParams::default())
}

pub fn refine_crack_polygon_with(image: &ImageBuffer, poly: &Polygon, p: &RefineParams) -> Result<LabelMask> {
    let (w, h) = image.dims();
    let mut out = LabelMask::new(w, h, ClassId::Crack)?;
    let Some(b) = poly.pixel_bbox(w, h) else {
        return Ok(out);
    };
    let x0 = b.x0.saturating_sub(p.margin);
    let y0 = b.y0.saturating_sub(p.margin);
    let x1 = (b.x1 + p.margin).min(w);
    let y1 = (b.y1 + p.margin).min(h);
    let (cw, ch) = (x1 - x0, y1 - y0);

    let crop = image.crop(x0, y0, cw, ch)?;
    let gray = stretch_gray(&crop.to_luma(), p.low_pct, p.high_pct)?;
    let otsu = multi_otsu(&histogram(&gray), p.classes)?;
    let t1 = otsu.thresholds[0];

    let local = poly.translate(-(x0 as f64), -(y0 as f64));
    let allowed = dilate_radius(&rasterize_polygon(&local, cw, ch, ClassId::Crack)?, p.restrict_radius);
    let dark: Vec<bool> = gray
        .iter()
        .zip(allowed.bits())
        .map(|(&v, &a)| a && v <= t1)
        .collect();
    let dark = LabelMask::from_bits(cw, ch, ClassId::Crack, dark)?;
    let kept = remove_small_components(&dark, p.min_component);
    for y in 0..ch {
        for x in 0..cw {
            if kept.get(x, y) {
                out.set(x0 + x, y0 + y, true);
            }
        }
    }
    Ok(out)
}

/// Fine mask for one image and the per-polygon warnings (insufficient modes).
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub mask: LabelMask,
    pub warnings: Vec<String>,
}

/// Union of refined masks over every `Crack` and `ACrack` shape.
pub fn refine_image(image: &ImageBuffer, annotation: &Annotation) -> Result<Refinement> {
    refine_image_with(image, annotation, &RefineParams::default())
}

pub fn refine_image_with(image: &ImageBuffer, annotation: &Annotation, p: &RefineParams) -> Result<Refinement> {
    let (w, h) = image.dims();
    let mut mask = LabelMask::new(w, h, ClassId::Crack)?;
    let mut warnings = Vec::new();
    for (i, shape) in annotation.shapes.iter().enumerate() {
        if !matches!(shape.label, ClassId::Crack | ClassId::ACrack) {
            continue;
        }
        match refine_crack_polygon_with(image, &shape.polygon, p) {
            Ok(m) => mask.union_with(&m)?,
            Err(e @ Error::InsufficientModes { .. }) => {
                warnings.push(format!("shape {i} ({}): {e}", shape.label));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Refinement { mask, warnings })
}

/// Review overlay: the image with refined crack pixels painted red.
pub fn overlay(image: &ImageBuffer, mask: &LabelMask) -> ImageBuffer {
    let mut out = image.clone();
    for (px, &m) in out.data_mut().chunks_exact_mut(3).zip(mask.bits()) {
        if m {
            px.copy_from_slice(&[255, 0, 0]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_full_range_unchanged() {
        let ramp: Vec<u8> = (0..=255).collect();
        assert_eq!(stretch_gray(&ramp, 0.0, 100.0).unwrap(), ramp);
    }

    #[test]
    fn constant_unchanged() {
        let c = vec![77u8; 100];
        assert_eq!(stretch_gray(&c, 2.0, 98.0).unwrap(), c);
    }

    #[test]
    fn two_values_stretch_to_extremes() {
        let v: Vec<u8> = (0..100).map(|i| if i % 2 == 0 { 50 } else { 200 }).collect();
        let s = stretch_gray(&v, 2.0, 98.0).unwrap();
        assert!(s.iter().all(|&x| x == 0 || x == 255));
        assert_eq!(s.iter().filter(|&&x| x == 0).count(), 50);
    }

    #[test]
    fn bimodal_tie_break_is_smallest() {
        let mut h = [0u64; 256];
        h[10] = 100;
        h[200] = 100;
        let r = multi_otsu(&h, 2).unwrap();
        assert_eq!(r.thresholds, vec![10]);
    }

    #[test]
    fn extremes_split_at_zero() {
        let mut h = [0u64; 256];
        h[0] = 5;
        h[255] = 9;
        assert_eq!(multi_otsu(&h, 2).unwrap().thresholds, vec![0]);
    }

    #[test]
    fn insufficient_modes() {
        let mut h = [0u64; 256];
        h[40] = 10;
        h[90] = 10;
        assert!(matches!(multi_otsu(&h, 3), Err(Error::InsufficientModes { distinct: 2, required: 3 })));
    }

    #[test]
    fn uniform_region_gives_insufficient_modes() {
        let img = ImageBuffer::filled(40, 40, [128, 128, 128]).unwrap();
        let poly = Polygon::rect(10.0, 10.0, 30.0, 14.0);
        assert!(matches!(refine_crack_polygon(&img, &poly), Err(Error::InsufficientModes { .. })));
        let mut a = Annotation::new("x.png", 40, 40);
        a.shapes.push(crate::types::Shape { label: ClassId::Crack, polygon: poly });
        let r = refine_image(&img, &a).unwrap();
        assert!(r.mask.is_empty());
        assert_eq!(r.warnings.len(), 1);
    }
}
