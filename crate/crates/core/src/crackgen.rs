//! Fractal crack synthesis.
//!
//! Each crack is a main path between two opposite frame borders refined by recursive
//! midpoint displacement, with probabilistic side branches. Cracks are stroked as
//! tapered, edge-feathered dark lines. [`calibrate_crack_set`] solves for the stroke
//! width that makes a generated set hit a pixel budget while distributing an exact
//! number of crack shapes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed, substream, SeedSpec};
use crate::texture::random_surface;
use crate::types::{
    Annotation, ClassId, GeneratedSample, ImageBuffer, LabelMask, MaskSet, Polygon, Shape,
};

pub const MIN_ROOT_WIDTH: f64 = 1.0;
pub const MAX_ROOT_WIDTH: f64 = 8.0;
pub const TIP_WIDTH: f64 = 0.5;
/// Branches spawn from the segments of the main path after this many subdivision levels.
pub const BRANCH_LEVEL: u32 = 3;
pub const PILOT_SAMPLES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrackParams {
    pub n_cracks: u32,
    pub root_width: f64,
    pub width_taper: f64,
    pub branch_prob: f64,
    pub roughness: f64,
    pub recursion_depth: u32,
    pub seed: u64,
}

impl CrackParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if self.n_cracks == 0 {
            return bad("n_cracks must be at least 1".into());
        }
        if !(MIN_ROOT_WIDTH..=MAX_ROOT_WIDTH).contains(&self.root_width) {
            return bad(format!("root_width {} not in [1, 8]", self.root_width));
        }
        if !(self.width_taper > 0.0 && self.width_taper <= 1.0) {
            return bad(format!("width_taper {} not in (0, 1]", self.width_taper));
        }
        if !(0.0..=0.5).contains(&self.branch_prob) {
            return bad(format!("branch_prob {} not in [0, 0.5]", self.branch_prob));
        }
        if !(3..=8).contains(&self.recursion_depth) {
            return bad(format!("recursion_depth {} not in [3, 8]", self.recursion_depth));
        }
        if !(self.roughness >= 0.0 && self.roughness.is_finite()) {
            return bad(format!("roughness {} must be non-negative", self.roughness));
        }
        Ok(())
    }
}

/// A stroked path with one width per point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrackPolyline {
    pub points: Vec<(f64, f64)>,
    pub widths: Vec<f64>,
    /// Intensity multiplier at full stroke coverage.
    pub darkness: f64,
    /// Index of the crack this polyline belongs to.
    pub crack: u32,
    pub is_branch: bool,
}

fn clip_point((x, y): (f64, f64), width: u32, height: u32) -> (f64, f64) {
    (x.clamp(0.0, width as f64), y.clamp(0.0, height as f64))
}

fn border_point(side: u32, t: f64, width: u32, height: u32) -> (f64, f64) {
    let (w, h) = (width as f64, height as f64);
    match side % 4 {
        0 => (t * w, 0.0),
        1 => (w, t * h),
        2 => (t * w, h),
        _ => (0.0, t * h),
    }
}

/// Recursive midpoint displacement between `a` and `b`; returns `2^depth + 1` points.
fn midpoint_displace(
    a: (f64, f64),
    b: (f64, f64),
    depth: u32,
    roughness: f64,
    rng: &mut impl Rng,
    width: u32,
    height: u32,
) -> Vec<(f64, f64)> {
    let mut pts = vec![a, b];
    for _ in 0..depth {
        let mut next = Vec::with_capacity(pts.len() * 2 - 1);
        for pair in pts.windows(2) {
            let (p, q) = (pair[0], pair[1]);
            let (dx, dy) = (q.0 - p.0, q.1 - p.1);
            let len = (dx * dx + dy * dy).sqrt();
            let offset = roughness * len * rng.random_range(-1.0..=1.0);
            let (nx, ny) = if len > 0.0 { (-dy / len, dx / len) } else { (0.0, 0.0) };
            let mid = ((p.0 + q.0) / 2.0 + nx * offset, (p.1 + q.1) / 2.0 + ny * offset);
            next.push(p);
            next.push(clip_point(mid, width, height));
        }
        next.push(*pts.last().unwrap());
        pts = next;
    }
    pts
}

fn tapered_widths(n: usize, start: f64) -> Vec<f64> {
    if n == 1 {
        return vec![start];
    }
    (0..n)
        .map(|i| start + (TIP_WIDTH - start) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Generates every crack of one image in a `width x height` frame.
///
/// The main path of crack `c` runs between two points on opposite borders and has
/// exactly `2^recursion_depth + 1` points. Endpoints are drawn before any displacement,
/// so they do not depend on `recursion_depth`.
pub fn gen_crack_polyline(p: &CrackParams, width: u32, height: u32) -> Result<Vec<CrackPolyline>> {
    p.validate()?;
    let mut out = Vec::new();
    for c in 0..p.n_cracks {
        let mut rng = rng_from_seed(substream(p.seed, c as u64 + 1));
        let side: u32 = rng.random_range(0..4);
        let start = border_point(side, rng.random_range(0.05..0.95), width, height);
        let end = border_point(side + 2, rng.random_range(0.05..0.95), width, height);
        let darkness = rng.random_range(0.25..=0.45);
        // One stream for branch decisions, one for geometry, so that the main path
        // does not depend on branch_prob.
        let mut branch_rng = rng_from_seed(substream(p.seed, 0x1_0000 + c as u64));

        let main = midpoint_displace(start, end, p.recursion_depth, p.roughness, &mut rng, width, height);
        let widths = tapered_widths(main.len(), p.root_width);

        let stride = 1usize << (p.recursion_depth - BRANCH_LEVEL);
        let mut branches = Vec::new();
        for k in 0..(1usize << BRANCH_LEVEL) {
            let spawn: f64 = branch_rng.random();
            let angle = branch_rng.random_range(20f64..60.0).to_radians()
                * if branch_rng.random::<bool>() { 1.0 } else { -1.0 };
            let rel_len = branch_rng.random_range(0.15..0.35);
            if spawn >= p.branch_prob {
                continue;
            }
            let i0 = k * stride;
            let origin = main[i0];
            let ahead = main[(i0 + stride).min(main.len() - 1)];
            let (dx, dy) = (ahead.0 - origin.0, ahead.1 - origin.1);
            let seg = (dx * dx + dy * dy).sqrt();
            if seg == 0.0 {
                continue;
            }
            let chord = ((end.0 - start.0).powi(2) + (end.1 - start.1).powi(2)).sqrt();
            let (s, co) = angle.sin_cos();
            let dir = ((dx * co - dy * s) / seg, (dx * s + dy * co) / seg);
            let tip = clip_point(
                (origin.0 + dir.0 * rel_len * chord, origin.1 + dir.1 * rel_len * chord),
                width,
                height,
            );
            let depth = p.recursion_depth.saturating_sub(2).max(2);
            let pts = midpoint_displace(origin, tip, depth, p.roughness, &mut branch_rng, width, height);
            let w = tapered_widths(pts.len(), (widths[i0] * p.width_taper).max(TIP_WIDTH));
            branches.push(CrackPolyline {
                points: pts,
                widths: w,
                darkness,
                crack: c,
                is_branch: true,
            });
        }
        out.push(CrackPolyline {
            points: main,
            widths,
            darkness,
            crack: c,
            is_branch: false,
        });
        out.extend(branches);
    }
    Ok(out)
}

/// Per-pixel stroke coverage in `[0, 1]` and the darkness of the covering stroke.
fn coverage(polylines: &[CrackPolyline], width: u32, height: u32) -> (Vec<f32>, Vec<f32>) {
    let n = width as usize * height as usize;
    let mut cov = vec![0f32; n];
    let mut dark = vec![1f32; n];
    for line in polylines {
        for i in 0..line.points.len().saturating_sub(1) {
            let (p, q) = (line.points[i], line.points[i + 1]);
            let (w0, w1) = (line.widths[i], line.widths[i + 1]);
            let reach = w0.max(w1) / 2.0 + 1.0;
            let x_lo = (p.0.min(q.0) - reach).floor().max(0.0) as u32;
            let y_lo = (p.1.min(q.1) - reach).floor().max(0.0) as u32;
            let x_hi = ((p.0.max(q.0) + reach).ceil() as i64).min(width as i64 - 1);
            let y_hi = ((p.1.max(q.1) + reach).ceil() as i64).min(height as i64 - 1);
            if x_hi < 0 || y_hi < 0 {
                continue;
            }
            let (dx, dy) = (q.0 - p.0, q.1 - p.1);
            let len2 = dx * dx + dy * dy;
            for y in y_lo..=y_hi as u32 {
                for x in x_lo..=x_hi as u32 {
                    let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                    let t = if len2 > 0.0 {
                        (((cx - p.0) * dx + (cy - p.1) * dy) / len2).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                    let (ex, ey) = (cx - (p.0 + t * dx), cy - (p.1 + t * dy));
                    let dist = (ex * ex + ey * ey).sqrt();
                    let half = (w0 + t * (w1 - w0)) / 2.0;
                    let c = (half - dist + 0.5).clamp(0.0, 1.0) as f32;
                    let idx = y as usize * width as usize + x as usize;
                    if c > cov[idx] {
                        cov[idx] = c;
                        dark[idx] = line.darkness as f32;
                    }
                }
            }
        }
    }
    (cov, dark)
}

/// Crack mask only (coverage > 0.5), without touching any image.
pub fn crack_mask(polylines: &[CrackPolyline], width: u32, height: u32) -> Result<LabelMask> {
    let (cov, _) = coverage(polylines, width, height);
    LabelMask::from_bits(width, height, ClassId::Crack, cov.iter().map(|&c| c > 0.5).collect())
}

/// Strokes `polylines` onto a copy of `image`. Returns the image and the `Crack` mask
/// of pixels whose stroke coverage exceeds one half.
pub fn render_cracks(image: &ImageBuffer, polylines: &[CrackPolyline]) -> Result<(ImageBuffer, LabelMask)> {
    let (w, h) = image.dims();
    let (cov, dark) = coverage(polylines, w, h);
    let mut out = image.clone();
    for (i, px) in out.data_mut().chunks_exact_mut(3).enumerate() {
        if cov[i] > 0.0 {
            let factor = 1.0 - cov[i] as f64 * (1.0 - dark[i] as f64);
            for c in px.iter_mut() {
                *c = (*c as f64 * factor).round() as u8;
            }
        }
    }
    let mask = LabelMask::from_bits(w, h, ClassId::Crack, cov.iter().map(|&c| c > 0.5).collect())?;
    Ok((out, mask))
}

/// Coarse outline around a crack's main path, sampled at the branch level.
pub fn crack_outline(main: &CrackPolyline, width: u32, height: u32) -> Option<Polygon> {
    let n = main.points.len();
    let stride = ((n - 1) >> BRANCH_LEVEL).max(1);
    let idx: Vec<usize> = (0..n).step_by(stride).chain(std::iter::once(n - 1)).collect();
    let mut idx = idx;
    idx.dedup();
    let pts: Vec<(f64, f64)> = idx.iter().map(|&i| main.points[i]).collect();
    if pts.len() < 2 {
        return None;
    }
    let radius = main.widths.iter().cloned().fold(0.0, f64::max) / 2.0 + 3.0;
    let mut left = Vec::with_capacity(pts.len());
    let mut right = Vec::with_capacity(pts.len());
    for i in 0..pts.len() {
        let a = pts[i.saturating_sub(1)];
        let b = pts[(i + 1).min(pts.len() - 1)];
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len = (dx * dx + dy * dy).sqrt();
        if len == 0.0 {
            continue;
        }
        let (nx, ny) = (-dy / len * radius, dx / len * radius);
        left.push(clip_point((pts[i].0 + nx, pts[i].1 + ny), width, height));
        right.push(clip_point((pts[i].0 - nx, pts[i].1 - ny), width, height));
    }
    right.reverse();
    left.extend(right);
    Polygon::new(left).ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrackBudget {
    pub target_total_pixels: u64,
    pub target_total_shapes: u64,
    pub n_samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrackSchedule {
    pub params: Vec<CrackParams>,
    /// Solved root-width scale before per-sample jitter.
    pub root_width_scale: f64,
    pub pilot_samples: usize,
    pub pilot_shapes: u64,
    pub pilot_pixels: u64,
    /// Pilot pixel total scaled to the full shape budget.
    pub extrapolated_pixels: f64,
}

impl CrackSchedule {
    pub fn total_shapes(&self) -> u64 {
        self.params.iter().map(|p| p.n_cracks as u64).sum()
    }
}

struct Draw {
    width_taper: f64,
    branch_prob: f64,
    roughness: f64,
    recursion_depth: u32,
    jitter: f64,
    seed: u64,
}

fn draw_sample(master_seed: u64, index: u64) -> Draw {
    let sample_seed = derive_seed(SeedSpec::new(master_seed, index));
    let mut rng = rng_from_seed(substream(sample_seed, 7));
    Draw {
        width_taper: rng.random_range(0.5..=0.9),
        branch_prob: rng.random_range(0.0..=0.3),
        roughness: rng.random_range(0.08..=0.25),
        recursion_depth: rng.random_range(5..=8),
        jitter: rng.random_range(0.85..=1.15),
        seed: substream(sample_seed, 8),
    }
}

fn params_at(draw: &Draw, n_cracks: u32, scale: f64) -> CrackParams {
    CrackParams {
        n_cracks,
        root_width: (scale * draw.jitter).clamp(MIN_ROOT_WIDTH, MAX_ROOT_WIDTH),
        width_taper: draw.width_taper,
        branch_prob: draw.branch_prob,
        roughness: draw.roughness,
        recursion_depth: draw.recursion_depth,
        seed: draw.seed,
    }
}

/// Shape count per sample: an even split with the remainder going to the lowest indices.
pub fn distribute_shapes(total: u64, n_samples: u64) -> Vec<u32> {
    let base = total / n_samples;
    let rem = total % n_samples;
    (0..n_samples).map(|i| (base + u64::from(i < rem)) as u32).collect()
}

fn pilot_pixels(draws: &[Draw], counts: &[u32], scale: f64, width: u32, height: u32) -> Result<u64> {
    use rayon::prelude::*;
    draws
        .par_iter()
        .zip(counts)
        .map(|(d, &n)| {
            let lines = gen_crack_polyline(&params_at(d, n, scale), width, height)?;
            Ok(crack_mask(&lines, width, height)?.count())
        })
        .sum()
}

/// Builds the per-sample parameter schedule for a crack budget.
///
/// Shape counts sum exactly to the target. The root width scale is found by bisection
/// on a pilot run over the first [`PILOT_SAMPLES`] samples so that the pilot pixel
/// total, extrapolated to the full shape budget, meets the pixel target.
pub fn calibrate_crack_set(b: &CrackBudget, width: u32, height: u32, master_seed: u64) -> Result<CrackSchedule> {
    if b.n_samples == 0 || b.target_total_shapes == 0 || b.target_total_pixels == 0 {
        return Err(Error::InvalidParam("crack budget entries must all be positive".into()));
    }
    if b.target_total_shapes < b.n_samples {
        return Err(Error::InfeasibleBudget(format!(
            "{} shapes cannot give each of {} samples at least one crack",
            b.target_total_shapes, b.n_samples
        )));
    }
    let counts = distribute_shapes(b.target_total_shapes, b.n_samples);
    let draws: Vec<Draw> = (0..b.n_samples).map(|i| draw_sample(master_seed, i)).collect();

    let pilot_n = PILOT_SAMPLES.min(draws.len());
    let pilot_shapes: u64 = counts[..pilot_n].iter().map(|&c| c as u64).sum();
    let extrapolate = |px: u64| px as f64 * b.target_total_shapes as f64 / pilot_shapes as f64;
    let target = b.target_total_pixels as f64;
    let eval = |scale: f64| pilot_pixels(&draws[..pilot_n], &counts[..pilot_n], scale, width, height);

    let lo_px = eval(MIN_ROOT_WIDTH)?;
    if extrapolate(lo_px) > target * 1.1 {
        return Err(Error::InfeasibleBudget(format!(
            "pixel target {} needs cracks thinner than {MIN_ROOT_WIDTH} px (minimum width yields {:.0})",
            b.target_total_pixels,
            extrapolate(lo_px)
        )));
    }
    let hi_px = eval(MAX_ROOT_WIDTH)?;
    if extrapolate(hi_px) < target * 0.9 {
        return Err(Error::InfeasibleBudget(format!(
            "pixel target {} needs cracks wider than {MAX_ROOT_WIDTH} px (maximum width yields {:.0})",
            b.target_total_pixels,
            extrapolate(hi_px)
        )));
    }

    let (mut lo, mut hi) = ((MIN_ROOT_WIDTH, lo_px), (MAX_ROOT_WIDTH, hi_px));
    let mut best = if (extrapolate(lo.1) - target).abs() <= (extrapolate(hi.1) - target).abs() { lo } else { hi };
    for _ in 0..24 {
        if (extrapolate(best.1) - target).abs() <= target * 0.005 {
            break;
        }
        let mid = 0.5 * (lo.0 + hi.0);
        let px = eval(mid)?;
        if (extrapolate(px) - target).abs() < (extrapolate(best.1) - target).abs() {
            best = (mid, px);
        }
        if extrapolate(px) < target {
            lo = (mid, px);
        } else {
            hi = (mid, px);
        }
    }

    let params = draws
        .iter()
        .zip(&counts)
        .map(|(d, &n)| params_at(d, n, best.0))
        .collect();
    Ok(CrackSchedule {
        params,
        root_width_scale: best.0,
        pilot_samples: pilot_n,
        pilot_shapes,
        pilot_pixels: best.1,
        extrapolated_pixels: extrapolate(best.1),
    })
}

/// One synthcrack sample: random surface, cracks, fine masks and coarse outlines.
pub fn gen_synthcrack_sample(
    seed_spec: SeedSpec,
    params: &CrackParams,
    weathered: bool,
    width: u32,
    height: u32,
) -> Result<GeneratedSample> {
    let sample_seed = derive_seed(seed_spec);
    let surface = random_surface(substream(sample_seed, 20), weathered, width, height)?;
    let lines = gen_crack_polyline(params, width, height)?;
    let (image, crack) = render_cracks(&surface.image, &lines)?;

    let mut masks = MaskSet::new(width, height)?;
    masks.insert(crack)?;
    if !surface.pore_mask.is_empty() {
        masks.insert(surface.pore_mask.clone())?;
    }
    if weathered {
        masks.insert(surface.weathering_mask.clone())?;
    }

    let mut annotation = Annotation::new("image.png", width, height);
    for main in lines.iter().filter(|l| !l.is_branch) {
        if let Some(polygon) = crack_outline(main, width, height) {
            annotation.shapes.push(Shape {
                label: ClassId::Crack,
                polygon,
            });
        }
    }
    for pore in &surface.pores {
        annotation.shapes.push(Shape {
            label: ClassId::Cavity,
            polygon: pore.outline(),
        });
    }
    Ok(GeneratedSample {
        image,
        masks,
        annotation,
        weathered,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> CrackParams {
        CrackParams {
            n_cracks: 1,
            root_width: 3.0,
            width_taper: 0.7,
            branch_prob: 0.0,
            roughness: 0.15,
            recursion_depth: 5,
            seed: 42,
        }
    }

    #[test]
    fn zero_roughness_no_branch_is_straight() {
        let p = CrackParams {
            roughness: 0.0,
            recursion_depth: 3,
            n_cracks: 2,
            ..params()
        };
        let lines = gen_crack_polyline(&p, 128, 128).unwrap();
        assert_eq!(lines.len(), 2);
        for l in &lines {
            let (a, b) = (l.points[0], *l.points.last().unwrap());
            for &q in &l.points {
                let cross = (b.0 - a.0) * (q.1 - a.1) - (b.1 - a.1) * (q.0 - a.0);
                assert!(cross.abs() < 1e-6);
            }
        }
    }

    #[test]
    fn main_path_point_count() {
        let lines = gen_crack_polyline(&params(), 256, 256).unwrap();
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].points.len(), (1 << 5) + 1);
        assert_eq!(lines[0].widths[0], 3.0);
        assert_eq!(*lines[0].widths.last().unwrap(), TIP_WIDTH);
    }

    #[test]
    fn deterministic_and_in_frame() {
        let p = CrackParams {
            branch_prob: 0.5,
            n_cracks: 3,
            ..params()
        };
        let a = gen_crack_polyline(&p, 200, 150).unwrap();
        assert_eq!(a, gen_crack_polyline(&p, 200, 150).unwrap());
        for l in &a {
            for &(x, y) in &l.points {
                assert!((0.0..=200.0).contains(&x) && (0.0..=150.0).contains(&y));
            }
        }
    }

    #[test]
    fn doubling_depth_keeps_endpoints() {
        let shallow = gen_crack_polyline(&CrackParams { recursion_depth: 4, ..params() }, 256, 256).unwrap();
        let deep = gen_crack_polyline(&CrackParams { recursion_depth: 8, ..params() }, 256, 256).unwrap();
        assert_eq!(shallow[0].points[0], deep[0].points[0]);
        assert_eq!(shallow[0].points.last(), deep[0].points.last());
    }

    #[test]
    fn empty_polyline_list_is_identity() {
        let img = ImageBuffer::filled(32, 32, [120, 120, 120]).unwrap();
        let (out, mask) = render_cracks(&img, &[]).unwrap();
        assert_eq!(out, img);
        assert!(mask.is_empty());
    }

    #[test]
    fn shape_remainder_rule() {
        assert!(distribute_shapes(1000, 500).iter().all(|&n| n == 2));
        let d = distribute_shapes(1001, 500);
        assert_eq!(d[0], 3);
        assert!(d[1..].iter().all(|&n| n == 2));
        assert_eq!(d.iter().map(|&n| n as u64).sum::<u64>(), 1001);
    }

    #[test]
    fn infeasible_budgets() {
        let too_thin = CrackBudget { target_total_pixels: 100, target_total_shapes: 64, n_samples: 32 };
        assert!(matches!(calibrate_crack_set(&too_thin, 256, 256, 1), Err(Error::InfeasibleBudget(_))));
        let too_wide = CrackBudget { target_total_pixels: 10_000_000, target_total_shapes: 64, n_samples: 32 };
        assert!(matches!(calibrate_crack_set(&too_wide, 256, 256, 1), Err(Error::InfeasibleBudget(_))));
        let too_few = CrackBudget { target_total_pixels: 1000, target_total_shapes: 3, n_samples: 4 };
        assert!(calibrate_crack_set(&too_few, 256, 256, 1).is_err());
    }
}
