//! Cut-and-paste compositing of real defect shapes onto synthetic surfaces (daclonsynth).
//!
//! The flow is: per-class statistics at working resolution, a demand-driven allocation
//! of N samples over the target classes, donor crop extraction (with host-defect
//! extension and context dilation), and finally rotation + feathered pasting of one
//! donor per sample onto a random surface.

use std::collections::BTreeMap;
use std::path::Path;

use image::imageops::{resize, FilterType};
use image::RgbImage;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{discover, tally_dataset, ClassCounts, Dataset};
use crate::error::{Error, Result};
use crate::io::load_image;
use crate::morph::dilate;
use crate::raster::{fill_polygon, rasterize_polygon};
use crate::seed::{derive_seed, rng_from_seed, substream, SeedSpec};
use crate::texture::random_surface;
use crate::types::{Annotation, BBox, ClassId, GeneratedSample, ImageBuffer, LabelMask, MaskSet, Shape};

/// Underrepresented classes balanced by compositing, in tie-break order.
pub const TARGET_CLASSES: [ClassId; 7] = [
    ClassId::Efflorescence,
    ClassId::Rockpocket,
    ClassId::Hollowareas,
    ClassId::Spalling,
    ClassId::Wetspot,
    ClassId::Rust,
    ClassId::ExposedRebars,
];

/// Classes whose paste region is the polygon raster dilated by [`DILATION_KERNEL`].
pub const DILATED_CLASSES: [ClassId; 5] = [
    ClassId::Spalling,
    ClassId::Rockpocket,
    ClassId::Wetspot,
    ClassId::Hollowareas,
    ClassId::Efflorescence,
];

/// Defects that can host exposed rebars.
pub const HOST_CLASSES: [ClassId; 2] = [ClassId::Spalling, ClassId::Rockpocket];

pub const DILATION_KERNEL: u32 = 30;
pub const CROP_PADDING: u32 = 8;
pub const PLACEMENT_TRIES: u32 = 50;
/// Chessboard distance at which the paste alpha reaches 1 (a two pixel ramp).
pub const FEATHER: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassStats {
    pub resolution: u32,
    pub images: usize,
    pub counts: BTreeMap<ClassId, ClassCounts>,
    pub warnings: Vec<String>,
}

impl ClassStats {
    pub fn get(&self, class: ClassId) -> ClassCounts {
        self.counts.get(&class).copied().unwrap_or_default()
    }
}

pub fn class_stats(ds: &Dataset, resolution: u32) -> Result<ClassStats> {
    Ok(ClassStats {
        resolution,
        images: ds.items.len(),
        counts: tally_dataset(ds, Some(resolution))?,
        warnings: ds.warnings.clone(),
    })
}

/// Annotations rasterized at `resolution x resolution`.
pub fn compute_class_stats(dataset_dir: impl AsRef<Path>, resolution: u32) -> Result<ClassStats> {
    class_stats(&discover(dataset_dir)?, resolution)
}

/// Mean yield of one synthetic sample of a class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Yield {
    pub pixels_per_sample: f64,
    pub shapes_per_sample: f64,
}

/// Which classes the reference averages are taken over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AverageOver {
    #[default]
    Targets,
    AllForeground,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationEntry {
    pub class: ClassId,
    pub pixels: u64,
    pub shapes: u64,
    pub pixel_estimate: f64,
    pub shape_estimate: f64,
    pub demand: f64,
    pub allocated: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AllocationPlan {
    pub total: u64,
    pub mean_pixels: f64,
    pub mean_shapes: f64,
    pub entries: Vec<AllocationEntry>,
}

impl AllocationPlan {
    pub fn allocated(&self, class: ClassId) -> u64 {
        self.entries.iter().find(|e| e.class == class).map_or(0, |e| e.allocated)
    }
}

/// Largest-remainder apportionment of `n` proportional to `demands`; remainders tie to
/// the lowest index. All-zero demands are apportioned uniformly.
pub fn apportion(demands: &[f64], n: u64) -> Result<Vec<u64>> {
    if demands.is_empty() {
        return Err(Error::Allocation("no classes to allocate".into()));
    }
    if demands.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::Allocation(format!("demands must be finite and non-negative: {demands:?}")));
    }
    let positive = demands.iter().filter(|&&d| d > 0.0).count();
    if positive as u64 > n {
        return Err(Error::Allocation(format!("{n} samples cannot cover {positive} demanded classes")));
    }
    let uniform;
    let demands = if positive == 0 {
        uniform = vec![1.0; demands.len()];
        &uniform
    } else {
        demands
    };
    let sum: f64 = demands.iter().sum();
    let quotas: Vec<f64> = demands.iter().map(|d| n as f64 * d / sum).collect();
    let mut alloc: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let assigned: u64 = alloc.iter().sum();
    let mut order: Vec<usize> = (0..demands.len()).collect();
    // Stable sort keeps lower indices first among equal remainders.
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.partial_cmp(&ra).expect("finite")
    });
    for &i in order.iter().cycle().take(n.saturating_sub(assigned) as usize) {
        alloc[i] += 1;
    }
    Ok(alloc)
}

/// Demand per class is the mean of a pixel-based and a shape-based sample estimate of
/// what brings the class up to the average; `n` samples are apportioned by demand.
pub fn plan_allocation(
    stats: &ClassStats,
    n: u64,
    yields: &BTreeMap<ClassId, Yield>,
    average_over: AverageOver,
) -> Result<AllocationPlan> {
    if n == 0 {
        return Err(Error::InvalidParam("sample count must be at least 1".into()));
    }
    let reference: Vec<ClassId> = match average_over {
        AverageOver::Targets => TARGET_CLASSES.to_vec(),
        AverageOver::AllForeground => ClassId::foreground().collect(),
    };
    let k = reference.len() as f64;
    let mean_pixels = reference.iter().map(|&c| stats.get(c).pixels as f64).sum::<f64>() / k;
    let mean_shapes = reference.iter().map(|&c| stats.get(c).shapes as f64).sum::<f64>() / k;

    let mut entries = Vec::new();
    for class in TARGET_CLASSES {
        let c = stats.get(class);
        let pixel_deficit = (mean_pixels - c.pixels as f64).max(0.0);
        let shape_deficit = (mean_shapes - c.shapes as f64).max(0.0);
        let (pixel_estimate, shape_estimate) = if pixel_deficit == 0.0 && shape_deficit == 0.0 {
            (0.0, 0.0)
        } else {
            let y = yields.get(&class).ok_or(Error::NoDonors(class))?;
            if !(y.pixels_per_sample > 0.0 && y.shapes_per_sample > 0.0) {
                return Err(Error::InvalidParam(format!("yields for {class} must be positive")));
            }
            (pixel_deficit / y.pixels_per_sample, shape_deficit / y.shapes_per_sample)
        };
        entries.push(AllocationEntry {
            class,
            pixels: c.pixels,
            shapes: c.shapes,
            pixel_estimate,
            shape_estimate,
            demand: (pixel_estimate + shape_estimate) / 2.0,
            allocated: 0,
        });
    }
    let demands: Vec<f64> = entries.iter().map(|e| e.demand).collect();
    for (e, a) in entries.iter_mut().zip(apportion(&demands, n)?) {
        e.allocated = a;
    }
    Ok(AllocationPlan {
        total: n,
        mean_pixels,
        mean_shapes,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DonorCrop {
    pub source: String,
    pub shape_index: usize,
    pub class: ClassId,
    /// Crop rectangle in the (resized) source image.
    pub rect: BBox,
    pub patch: ImageBuffer,
    /// Pixels copied when pasting.
    pub paste_mask: LabelMask,
    /// Polygons in patch coordinates; the donor shape itself comes first.
    pub carried: Vec<Shape>,
}

impl DonorCrop {
    /// Undilated raster of the donor shape, in patch coordinates.
    pub fn shape_mask(&self) -> Result<LabelMask> {
        rasterize_polygon(&self.carried[0].polygon, self.patch.width(), self.patch.height(), self.class)
    }
}

pub fn resize_image(img: &ImageBuffer, width: u32, height: u32) -> ImageBuffer {
    if img.dims() == (width, height) {
        return img.clone();
    }
    let rgb = RgbImage::from_raw(img.width(), img.height(), img.data().to_vec()).expect("image buffer size");
    let out = resize(&rgb, width, height, FilterType::Triangle);
    ImageBuffer::from_raw(width, height, out.into_raw()).expect("resized size")
}

fn pad_rect(b: BBox, pad: u32, w: u32, h: u32) -> BBox {
    BBox {
        x0: b.x0.saturating_sub(pad),
        y0: b.y0.saturating_sub(pad),
        x1: (b.x1 + pad).min(w),
        y1: (b.y1 + pad).min(h),
    }
}

fn crop_mask(m: &LabelMask, r: BBox) -> Result<LabelMask> {
    let mut out = LabelMask::new(r.width(), r.height(), m.class())?;
    for y in 0..r.height() {
        for x in 0..r.width() {
            out.set(x, y, m.get(r.x0 + x, r.y0 + y));
        }
    }
    Ok(out)
}

/// One crop per `class` shape across the dataset. Images are resized to
/// `resolution x resolution` first when given. Returns the crops and skip warnings.
pub fn extract_donor_crops(ds: &Dataset, class: ClassId, resolution: Option<u32>) -> Result<(Vec<DonorCrop>, Vec<String>)> {
    let mut crops = Vec::new();
    let mut warnings = Vec::new();
    for item in &ds.items {
        let a = &item.annotation;
        if a.shapes_of(class).next().is_none() {
            continue;
        }
        let Some(image_path) = &item.image_path else {
            warnings.push(format!("{}: image {} not found", item.id, a.image_name));
            continue;
        };
        let native = load_image(image_path)?;
        let (w, h) = resolution.map_or(native.dims(), |r| (r, r));
        let img = resize_image(&native, w, h);
        let (sx, sy) = (w as f64 / a.image_width as f64, h as f64 / a.image_height as f64);
        let shapes: Vec<Shape> = a
            .shapes
            .iter()
            .map(|s| Shape { label: s.label, polygon: s.polygon.scale(sx, sy) })
            .collect();
        crops.extend(crops_of_image(&item.id, &img, &shapes, class, &mut warnings)?);
    }
    Ok((crops, warnings))
}

/// Crops of `class` from one image whose polygons are already in image pixels.
pub fn crops_of_image(
    source: &str,
    img: &ImageBuffer,
    shapes: &[Shape],
    class: ClassId,
    warnings: &mut Vec<String>,
) -> Result<Vec<DonorCrop>> {
    let (w, h) = img.dims();
    let rasters: Vec<Option<LabelMask>> = shapes
        .iter()
        .map(|s| {
            if s.label == ClassId::Background {
                return Ok(None);
            }
            rasterize_polygon(&s.polygon, w, h, s.label).map(Some)
        })
        .collect::<Result<_>>()?;
    let intersects = |a: usize, b: usize| match (&rasters[a], &rasters[b]) {
        (Some(ra), Some(rb)) => ra.bits().iter().zip(rb.bits()).any(|(&p, &q)| p && q),
        _ => false,
    };

    let mut out = Vec::new();
    for (i, shape) in shapes.iter().enumerate().filter(|(_, s)| s.label == class) {
        let Some(bbox) = shape.polygon.pixel_bbox(w, h) else {
            warnings.push(format!("{source}: shape {i} ({class}) lies outside the image"));
            continue;
        };
        let raster = rasters[i].as_ref().expect("foreground raster");
        let mut paste = raster.clone();
        let mut region = bbox;
        if class == ClassId::ExposedRebars {
            for (j, host) in shapes.iter().enumerate() {
                if HOST_CLASSES.contains(&host.label) && intersects(i, j) {
                    if let Some(hb) = host.polygon.pixel_bbox(w, h) {
                        region = region.union(&hb);
                    }
                    let hm = rasters[j].as_ref().expect("host raster");
                    paste.union_with(&hm.clone().with_class(class)?)?;
                }
            }
        }
        if DILATED_CLASSES.contains(&class) {
            paste = dilate(&paste, DILATION_KERNEL, DILATION_KERNEL);
        }
        let rect = pad_rect(region, CROP_PADDING, w, h);
        let (x0, y0, x1, y1) = (rect.x0 as f64, rect.y0 as f64, rect.x1 as f64, rect.y1 as f64);
        let mut carried = vec![Shape {
            label: class,
            polygon: shape.polygon.clamp_to(w as f64, h as f64).translate(-x0, -y0),
        }];
        for (j, other) in shapes.iter().enumerate() {
            if j == i {
                continue;
            }
            let touches = other.polygon.pixel_bbox(w, h).is_some_and(|b| b.intersects(&rect));
            if let (true, Some(clipped)) = (touches, other.polygon.clip_to_rect(x0, y0, x1, y1)) {
                if clipped.area() > 0.0 {
                    carried.push(Shape { label: other.label, polygon: clipped.translate(-x0, -y0) });
                }
            }
        }
        out.push(DonorCrop {
            source: source.to_string(),
            shape_index: i,
            class,
            rect,
            patch: img.crop(rect.x0, rect.y0, rect.width(), rect.height())?,
            paste_mask: crop_mask(&paste, rect)?,
            carried,
        });
    }
    Ok(out)
}

/// Mean undilated shape pixels and mean carried shapes per crop.
pub fn donor_yield(crops: &[DonorCrop]) -> Result<Option<Yield>> {
    if crops.is_empty() {
        return Ok(None);
    }
    let mut px = 0u64;
    let mut shapes = 0usize;
    for c in crops {
        px += c.shape_mask()?.count();
        shapes += c.carried.len();
    }
    let n = crops.len() as f64;
    Ok(Some(Yield {
        pixels_per_sample: (px as f64 / n).max(1.0),
        shapes_per_sample: shapes as f64 / n,
    }))
}

/// Size of the axis-aligned box holding a `w x h` patch rotated by `angle` degrees.
pub fn rotated_size(w: u32, h: u32, angle: f64) -> (u32, u32) {
    let (s, c) = angle.to_radians().sin_cos();
    let rw = (w as f64 * c.abs() + h as f64 * s.abs() - 1e-9).ceil().max(1.0) as u32;
    let rh = (w as f64 * s.abs() + h as f64 * c.abs() - 1e-9).ceil().max(1.0) as u32;
    (rw, rh)
}

/// Result of pasting one crop.
#[derive(Debug, Clone, PartialEq)]
pub struct Pasted {
    pub image: ImageBuffer,
    /// Carried classes restricted to pasted pixels, in surface coordinates.
    pub masks: MaskSet,
    /// Carried polygons after rotation and translation.
    pub shapes: Vec<Shape>,
    /// Per-pixel paste opacity in `[0, 1]`.
    pub alpha: Vec<f32>,
}

/// Pastes `crop` rotated by `angle` degrees about its centre, with the rotated box's
/// top-left corner at `position`. Image pixels are sampled bilinearly, masks by nearest
/// neighbour; the paste is alpha-feathered over two pixels inside the mask boundary.
pub fn paste(crop: &DonorCrop, surface: &ImageBuffer, angle: f64, position: (u32, u32)) -> Result<Pasted> {
    let (sw, sh) = surface.dims();
    let (pw, ph) = crop.patch.dims();
    let (rw, rh) = rotated_size(pw, ph, angle);
    if position.0 + rw > sw || position.1 + rh > sh {
        return Err(Error::Unplaceable(format!(
            "{}#{} ({}): rotated {}x{} at {:?} exceeds {}x{} surface",
            crop.source, crop.shape_index, crop.class, rw, rh, position, sw, sh
        )));
    }
    let (s, c) = angle.to_radians().sin_cos();
    let (pcx, pcy) = (pw as f64 / 2.0, ph as f64 / 2.0);
    let (rcx, rcy) = (rw as f64 / 2.0, rh as f64 / 2.0);
    let src = |u: u32, v: u32| {
        let (dx, dy) = (u as f64 + 0.5 - rcx, v as f64 + 0.5 - rcy);
        (dx * c + dy * s + pcx, -dx * s + dy * c + pcy)
    };

    // Rotated paste mask and patch, nearest and bilinear.
    let mut rmask = vec![false; (rw * rh) as usize];
    for v in 0..rh {
        for u in 0..rw {
            let (x, y) = src(u, v);
            if x >= 0.0 && y >= 0.0 && x < pw as f64 && y < ph as f64 {
                rmask[(v * rw + u) as usize] = crop.paste_mask.get(x as u32, y as u32);
            }
        }
    }
    let inside = |u: i64, v: i64| u >= 0 && v >= 0 && u < rw as i64 && v < rh as i64 && rmask[(v * rw as i64 + u) as usize];
    let mut image = surface.clone();
    let mut alpha = vec![0f32; (sw * sh) as usize];
    for v in 0..rh {
        for u in 0..rw {
            if !rmask[(v * rw + u) as usize] {
                continue;
            }
            let d = (1..FEATHER)
                .find(|&r| {
                    let r = r as i64;
                    (-r..=r).any(|dy| (-r..=r).any(|dx| !inside(u as i64 + dx, v as i64 + dy)))
                })
                .unwrap_or(FEATHER);
            let a = d as f32 / FEATHER as f32;
            let (x, y) = src(u, v);
            let px = bilinear(&crop.patch, x - 0.5, y - 0.5);
            let (ox, oy) = (position.0 + u, position.1 + v);
            let base = surface.get(ox, oy);
            let mixed = std::array::from_fn(|k| (a * px[k] + (1.0 - a) * base[k] as f32).round().clamp(0.0, 255.0) as u8);
            image.put(ox, oy, mixed);
            alpha[(oy * sw + ox) as usize] = a;
        }
    }

    let (ox, oy) = (position.0 as f64, position.1 as f64);
    let forward = |(x, y): (f64, f64)| {
        let (dx, dy) = (x - pcx, y - pcy);
        (dx * c - dy * s + rcx + ox, dx * s + dy * c + rcy + oy)
    };
    let shapes: Vec<Shape> = crop
        .carried
        .iter()
        .map(|shape| Shape { label: shape.label, polygon: shape.polygon.map(forward).clamp_to(sw as f64, sh as f64) })
        .collect();

    let mut masks = MaskSet::new(sw, sh)?;
    for shape in &shapes {
        if shape.label == ClassId::Background {
            continue;
        }
        let mut m = LabelMask::new(sw, sh, shape.label)?;
        fill_polygon(&mut m, &shape.polygon);
        for (bit, &a) in m.bits_mut().iter_mut().zip(&alpha) {
            *bit &= a > 0.0;
        }
        if !m.is_empty() {
            masks.merge(&m)?;
        }
    }
    Ok(Pasted { image, masks, shapes, alpha })
}

fn bilinear(img: &ImageBuffer, x: f64, y: f64) -> [f32; 3] {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = ((x - x0) as f32, (y - y0) as f32);
    let at = |xi: i64, yi: i64| img.get(xi.clamp(0, w - 1) as u32, yi.clamp(0, h - 1) as u32);
    let (xi, yi) = (x0 as i64, y0 as i64);
    let (p00, p10, p01, p11) = (at(xi, yi), at(xi + 1, yi), at(xi, yi + 1), at(xi + 1, yi + 1));
    std::array::from_fn(|k| {
        let top = p00[k] as f32 * (1.0 - fx) + p10[k] as f32 * fx;
        let bot = p01[k] as f32 * (1.0 - fx) + p11[k] as f32 * fx;
        top * (1.0 - fy) + bot * fy
    })
}

/// Per-sample class assignment: classes in target order, `a_c` consecutive samples each.
/// The `j`-th sample of a class is weathered iff `j` is even, i.e. `ceil(a_c / 2)` of them.
pub fn daclonsynth_schedule(plan: &AllocationPlan) -> Vec<(ClassId, bool)> {
    plan.entries
        .iter()
        .flat_map(|e| (0..e.allocated).map(move |j| (e.class, j % 2 == 0)))
        .collect()
}

/// One daclonsynth sample: a random donor of `class`, randomly rotated and placed.
/// Falls back to an unrotated paste (with a warning) when no rotation fits in
/// [`PLACEMENT_TRIES`] attempts.
pub fn gen_daclonsynth_sample(
    seed_spec: SeedSpec,
    class: ClassId,
    weathered: bool,
    donors: &[DonorCrop],
    width: u32,
    height: u32,
) -> Result<GeneratedSample> {
    if donors.is_empty() {
        return Err(Error::NoDonors(class));
    }
    let sample_seed = derive_seed(seed_spec);
    let surface = random_surface(substream(sample_seed, 20), weathered, width, height)?;
    let mut rng = rng_from_seed(substream(sample_seed, 40));
    let crop = &donors[rng.random_range(0..donors.len())];
    let (pw, ph) = crop.patch.dims();

    let mut warnings = Vec::new();
    let mut placement = None;
    for _ in 0..PLACEMENT_TRIES {
        let angle = rng.random_range(0.0..360.0);
        let (rw, rh) = rotated_size(pw, ph, angle);
        if rw <= width && rh <= height {
            placement = Some((angle, rw, rh));
            break;
        }
    }
    let (angle, rw, rh) = match placement {
        Some(p) => p,
        None if pw <= width && ph <= height => {
            warnings.push(format!(
                "donor {}#{} placed unrotated: no rotation fits in {PLACEMENT_TRIES} tries",
                crop.source, crop.shape_index
            ));
            (0.0, pw, ph)
        }
        None => {
            return Err(Error::Unplaceable(format!(
                "{}#{} ({}): {}x{} crop on a {}x{} surface",
                crop.source, crop.shape_index, crop.class, pw, ph, width, height
            )))
        }
    };
    let position = (rng.random_range(0..=width - rw), rng.random_range(0..=height - rh));
    let pasted = paste(crop, &surface.image, angle, position)?;

    // Surface truth hidden under opaque pasted pixels no longer exists.
    let opaque: Vec<bool> = pasted.alpha.iter().map(|&a| a >= 0.5).collect();
    let mut masks = pasted.masks;
    for surf in [&surface.pore_mask, &surface.weathering_mask] {
        let mut m = surf.clone();
        for (bit, &o) in m.bits_mut().iter_mut().zip(&opaque) {
            *bit &= !o;
        }
        if !m.is_empty() {
            masks.merge(&m)?;
        }
    }

    let mut annotation = Annotation::new("image.png", width, height);
    annotation.shapes = pasted.shapes;
    for pore in &surface.pores {
        let (x, y) = (pore.cx.floor() as u32, pore.cy.floor() as u32);
        if x < width && y < height && !opaque[(y * width + x) as usize] {
            annotation.shapes.push(Shape { label: ClassId::Cavity, polygon: pore.outline() });
        }
    }
    Ok(GeneratedSample {
        image: pasted.image,
        masks,
        annotation,
        weathered,
        warnings,
    })
}

/// Donors for every class with a positive allocation; fails before any generation when
/// a demanded class has none.
pub fn donors_for_plan(ds: &Dataset, plan: &AllocationPlan, resolution: u32) -> Result<BTreeMap<ClassId, Vec<DonorCrop>>> {
    let mut out = BTreeMap::new();
    for e in plan.entries.iter().filter(|e| e.allocated > 0) {
        let (crops, warnings) = extract_donor_crops(ds, e.class, Some(resolution))?;
        for w in warnings {
            log::warn!("{w}");
        }
        if crops.is_empty() {
            return Err(Error::NoDonors(e.class));
        }
        out.insert(e.class, crops);
    }
    Ok(out)
}

/// Donor yields for all target classes that have donors.
pub fn target_yields(ds: &Dataset, resolution: u32) -> Result<BTreeMap<ClassId, Yield>> {
    let mut out = BTreeMap::new();
    for class in TARGET_CLASSES {
        let (crops, _) = extract_donor_crops(ds, class, Some(resolution))?;
        if let Some(y) = donor_yield(&crops)? {
            out.insert(class, y);
        }
    }
    Ok(out)
}

/// Coefficient of variation (population) of `values`.
pub fn coefficient_of_variation(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return 0.0;
    }
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt() / mean
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_proportion() {
        assert_eq!(apportion(&[3.0, 1.0], 4).unwrap(), vec![3, 1]);
    }

    #[test]
    fn remainder_to_lowest_index() {
        assert_eq!(apportion(&[1.0, 1.0, 1.0], 5).unwrap(), vec![2, 2, 1]);
    }

    #[test]
    fn zero_demands_uniform() {
        assert_eq!(apportion(&[0.0, 0.0, 0.0], 4).unwrap(), vec![2, 1, 1]);
    }

    #[test]
    fn too_few_samples() {
        assert!(apportion(&[1.0, 2.0, 3.0], 2).is_err());
    }

    #[test]
    fn weathering_parity() {
        let plan = AllocationPlan {
            total: 4,
            mean_pixels: 0.0,
            mean_shapes: 0.0,
            entries: vec![AllocationEntry {
                class: ClassId::Rust,
                pixels: 0,
                shapes: 0,
                pixel_estimate: 0.0,
                shape_estimate: 0.0,
                demand: 1.0,
                allocated: 4,
            }],
        };
        let s = daclonsynth_schedule(&plan);
        assert_eq!(s.iter().filter(|(_, w)| *w).count(), 2);
    }

    #[test]
    fn rotated_sizes() {
        assert_eq!(rotated_size(10, 4, 0.0), (10, 4));
        assert_eq!(rotated_size(10, 4, 90.0), (4, 10));
    }

    fn crop_with(class: ClassId) -> DonorCrop {
        let mut img = ImageBuffer::new(40, 30).unwrap();
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = (i * 7 % 256) as u8;
        }
        let shapes = vec![Shape { label: class, polygon: crate::types::Polygon::rect(10.0, 8.0, 20.0, 14.0) }];
        let mut w = Vec::new();
        crops_of_image("t", &img, &shapes, class, &mut w).unwrap().remove(0)
    }

    #[test]
    fn undilated_paste_mask_matches_raster() {
        let c = crop_with(ClassId::Rust);
        assert_eq!(c.paste_mask.count(), 60);
        assert_eq!(c.rect, BBox { x0: 2, y0: 0, x1: 28, y1: 22 });
    }

    #[test]
    fn identity_paste_copies_interior() {
        let c = crop_with(ClassId::Rust);
        let surface = ImageBuffer::filled(64, 64, [128, 128, 128]).unwrap();
        let p = paste(&c, &surface, 0.0, (0, 0)).unwrap();
        // interior of the 10x6 shape at (8..18, 8..14) in patch coordinates
        for y in 10..12 {
            for x in 10..16 {
                assert_eq!(p.image.get(x, y), c.patch.get(x, y));
            }
        }
        assert_eq!(p.masks.get(ClassId::Rust).unwrap().count(), 60);
    }
}
