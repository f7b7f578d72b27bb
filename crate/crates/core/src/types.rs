//! Domain types shared by every pipeline stage.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// The 19 foreground classes of the bridge-inspection taxonomy plus `Background`.
///
/// Integer codes are stable: `Background` is 0 and the foreground classes follow
/// in taxonomy order, 1..=19.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum ClassId {
    Background = 0,
    Crack,
    ACrack,
    Efflorescence,
    Rockpocket,
    WConccor,
    Hollowareas,
    Cavity,
    Spalling,
    Restformwork,
    Wetspot,
    Rust,
    Graffiti,
    Weathering,
    ExposedRebars,
    Bearing,
    EJoint,
    Drainage,
    PEquipment,
    JTape,
}

impl ClassId {
    pub const ALL: [ClassId; 20] = [
        ClassId::Background,
        ClassId::Crack,
        ClassId::ACrack,
        ClassId::Efflorescence,
        ClassId::Rockpocket,
        ClassId::WConccor,
        ClassId::Hollowareas,
        ClassId::Cavity,
        ClassId::Spalling,
        ClassId::Restformwork,
        ClassId::Wetspot,
        ClassId::Rust,
        ClassId::Graffiti,
        ClassId::Weathering,
        ClassId::ExposedRebars,
        ClassId::Bearing,
        ClassId::EJoint,
        ClassId::Drainage,
        ClassId::PEquipment,
        ClassId::JTape,
    ];

    /// Every class except `Background`, in code order.
    pub fn foreground() -> impl Iterator<Item = ClassId> {
        Self::ALL[1..].iter().copied()
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<ClassId> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassId::Background => "Background",
            ClassId::Crack => "Crack",
            ClassId::ACrack => "ACrack",
            ClassId::Efflorescence => "Efflorescence",
            ClassId::Rockpocket => "Rockpocket",
            ClassId::WConccor => "WConccor",
            ClassId::Hollowareas => "Hollowareas",
            ClassId::Cavity => "Cavity",
            ClassId::Spalling => "Spalling",
            ClassId::Restformwork => "Restformwork",
            ClassId::Wetspot => "Wetspot",
            ClassId::Rust => "Rust",
            ClassId::Graffiti => "Graffiti",
            ClassId::Weathering => "Weathering",
            ClassId::ExposedRebars => "ExposedRebars",
            ClassId::Bearing => "Bearing",
            ClassId::EJoint => "EJoint",
            ClassId::Drainage => "Drainage",
            ClassId::PEquipment => "PEquipment",
            ClassId::JTape => "JTape",
        }
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassId::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

impl Serialize for ClassId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ClassId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn check_dims(width: u32, height: u32) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions {
            width: width as i64,
            height: height as i64,
        });
    }
    Ok(())
}

/// Row-major RGB raster with 8-bit channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        Self::filled(width, height, [0, 0, 0])
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self> {
        check_dims(width, height)?;
        let n = width as usize * height as usize;
        let mut data = Vec::with_capacity(n * 3);
        for _ in 0..n {
            data.extend_from_slice(&rgb);
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width as usize * height as usize * 3 {
            return Err(Error::InvalidParam(format!(
                "raw buffer of {} bytes does not match {width}x{height}x3",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Integer luma, `round(0.299 R + 0.587 G + 0.114 B)`.
    pub fn to_luma(&self) -> Vec<u8> {
        self.data
            .chunks_exact(3)
            .map(|p| luma(p[0], p[1], p[2]))
            .collect()
    }

    /// Copies the rectangle `[x0, x0 + w) x [y0, y0 + h)`.
    pub fn crop(&self, x0: u32, y0: u32, w: u32, h: u32) -> Result<ImageBuffer> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::InvalidParam(format!(
                "crop {w}x{h}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut out = ImageBuffer::new(w, h)?;
        for y in 0..h {
            let src = ((y0 + y) as usize * self.width as usize + x0 as usize) * 3;
            let dst = y as usize * w as usize * 3;
            out.data[dst..dst + w as usize * 3]
                .copy_from_slice(&self.data[src..src + w as usize * 3]);
        }
        Ok(out)
    }

    pub fn mean_intensity(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
        .round()
        .clamp(0.0, 255.0) as u8
}

/// Inclusive-exclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BBox {
    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.x0 < other.x1 && other.x0 < self.x1 && self.y0 < other.y1 && other.y0 < self.y1
    }
}

/// Binary raster for one foreground class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    width: u32,
    height: u32,
    class: ClassId,
    bits: Vec<bool>,
}

impl LabelMask {
    pub fn new(width: u32, height: u32, class: ClassId) -> Result<Self> {
        check_dims(width, height)?;
        if class == ClassId::Background {
            return Err(Error::InvalidParam(
                "Background is derived, it cannot own a mask".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            class,
            bits: vec![false; width as usize * height as usize],
        })
    }

    pub fn from_bits(width: u32, height: u32, class: ClassId, bits: Vec<bool>) -> Result<Self> {
        let mut m = Self::new(width, height, class)?;
        if bits.len() != m.bits.len() {
            return Err(Error::InvalidParam(format!(
                "bit vector of length {} does not match {width}x{height}",
                bits.len()
            )));
        }
        m.bits = bits;
        Ok(m)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn class(&self) -> ClassId {
        self.class
    }

    pub fn with_class(mut self, class: ClassId) -> Result<Self> {
        if class == ClassId::Background {
            return Err(Error::InvalidParam("Background cannot own a mask".into()));
        }
        self.class = class;
        Ok(self)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = v;
    }

    pub fn count(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    fn check_same_dims(&self, other: &LabelMask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
                context: String::new(),
            });
        }
        Ok(())
    }

    pub fn union_with(&mut self, other: &LabelMask) -> Result<()> {
        self.check_same_dims(other)?;
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
        Ok(())
    }

    pub fn intersect_with(&mut self, other: &LabelMask) -> Result<()> {
        self.check_same_dims(other)?;
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a &= b;
        }
        Ok(())
    }

    pub fn subtract(&mut self, other: &LabelMask) -> Result<()> {
        self.check_same_dims(other)?;
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a &= !b;
        }
        Ok(())
    }

    pub fn is_subset_of(&self, other: &LabelMask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Tight bounding box of the set pixels.
    pub fn bbox(&self) -> Option<BBox> {
        let mut bb: Option<BBox> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    let px = BBox {
                        x0: x,
                        y0: y,
                        x1: x + 1,
                        y1: y + 1,
                    };
                    bb = Some(bb.map_or(px, |b| b.union(&px)));
                }
            }
        }
        bb
    }
}

/// Multi-label ground truth: at most one mask per foreground class, all sharing dimensions.
/// An absent class is equivalent to an all-zero mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSet {
    width: u32,
    height: u32,
    masks: BTreeMap<ClassId, LabelMask>,
}

impl MaskSet {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            masks: BTreeMap::new(),
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    /// Inserts or replaces the mask for its class.
    pub fn insert(&mut self, mask: LabelMask) -> Result<()> {
        if mask.dims() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: mask.dims(),
                context: format!("inserting {} mask", mask.class()),
            });
        }
        self.masks.insert(mask.class(), mask);
        Ok(())
    }

    /// Unions `mask` into the existing mask of the same class.
    pub fn merge(&mut self, mask: &LabelMask) -> Result<()> {
        match self.masks.get_mut(&mask.class()) {
            Some(existing) => existing.union_with(mask),
            None => self.insert(mask.clone()),
        }
    }

    pub fn get(&self, class: ClassId) -> Option<&LabelMask> {
        self.masks.get(&class)
    }

    pub fn get_mut(&mut self, class: ClassId) -> Option<&mut LabelMask> {
        self.masks.get_mut(&class)
    }

    pub fn remove(&mut self, class: ClassId) -> Option<LabelMask> {
        self.masks.remove(&class)
    }

    /// The mask for `class`, or an all-zero one when absent.
    pub fn get_or_empty(&self, class: ClassId) -> Result<LabelMask> {
        match self.masks.get(&class) {
            Some(m) => Ok(m.clone()),
            None => LabelMask::new(self.width, self.height, class),
        }
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.masks.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &LabelMask> {
        self.masks.values()
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Per-pixel union of every foreground mask.
    pub fn foreground_union(&self) -> Vec<bool> {
        let mut out = vec![false; self.width as usize * self.height as usize];
        for m in self.masks.values() {
            for (o, &b) in out.iter_mut().zip(m.bits()) {
                *o |= b;
            }
        }
        out
    }
}

/// Closed polygon in continuous pixel coordinates (pixel `(x, y)` spans `[x, x+1) x [y, y+1)`).
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    points: Vec<(f64, f64)>,
}

impl Polygon {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidParam(format!(
                "polygon needs at least 3 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::InvalidParam("non-finite polygon coordinate".into()));
        }
        Ok(Self { points })
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            points: vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)],
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Iterates edges `(p_i, p_{i+1})`, closing back to the first point.
    pub fn edges(&self) -> impl Iterator<Item = ((f64, f64), (f64, f64))> + '_ {
        let n = self.points.len();
        (0..n).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }

    /// Absolute shoelace area.
    pub fn area(&self) -> f64 {
        let s: f64 = self.edges().map(|((x0, y0), (x1, y1))| x0 * y1 - x1 * y0).sum();
        s.abs() / 2.0
    }

    /// `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.points.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), &(x, y)| (a.min(x), b.min(y), c.max(x), d.max(y)),
        )
    }

    /// Pixel bounding box of the polygon clipped to a `width x height` frame.
    pub fn pixel_bbox(&self, width: u32, height: u32) -> Option<BBox> {
        let (x0, y0, x1, y1) = self.bounds();
        let bx0 = x0.floor().max(0.0) as i64;
        let by0 = y0.floor().max(0.0) as i64;
        let bx1 = (x1.ceil() as i64).min(width as i64);
        let by1 = (y1.ceil() as i64).min(height as i64);
        if bx1 <= bx0 || by1 <= by0 {
            return None;
        }
        Some(BBox {
            x0: bx0 as u32,
            y0: by0 as u32,
            x1: bx1 as u32,
            y1: by1 as u32,
        })
    }

    pub fn map(&self, f: impl Fn((f64, f64)) -> (f64, f64)) -> Polygon {
        Polygon {
            points: self.points.iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Polygon {
        self.map(|(x, y)| (x + dx, y + dy))
    }

    pub fn scale(&self, sx: f64, sy: f64) -> Polygon {
        self.map(|(x, y)| (x * sx, y * sy))
    }

    pub fn clamp_to(&self, width: f64, height: f64) -> Polygon {
        self.map(|(x, y)| (x.clamp(0.0, width), y.clamp(0.0, height)))
    }

    /// Sutherland-Hodgman clip against the rectangle `[x0, x1] x [y0, y1]`.
    /// Returns `None` if fewer than three vertices survive.
    pub fn clip_to_rect(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> Option<Polygon> {
        type Inside = fn(f64, f64, f64) -> bool;
        let mut pts = self.points.clone();
        let planes: [(usize, f64, Inside); 4] = [
            (0, x0, |v, _, b| v >= b),
            (0, x1, |v, _, b| v <= b),
            (1, y0, |v, _, b| v >= b),
            (1, y1, |v, _, b| v <= b),
        ];
        for (axis, bound, inside) in planes {
            if pts.is_empty() {
                break;
            }
            let coord = |p: (f64, f64)| if axis == 0 { p.0 } else { p.1 };
            let mut out = Vec::with_capacity(pts.len() + 2);
            for i in 0..pts.len() {
                let cur = pts[i];
                let prev = pts[(i + pts.len() - 1) % pts.len()];
                let cin = inside(coord(cur), 0.0, bound);
                let pin = inside(coord(prev), 0.0, bound);
                if cin != pin {
                    let t = (bound - coord(prev)) / (coord(cur) - coord(prev));
                    let ix = prev.0 + t * (cur.0 - prev.0);
                    let iy = prev.1 + t * (cur.1 - prev.1);
                    out.push(if axis == 0 { (bound, iy) } else { (ix, bound) });
                }
                if cin {
                    out.push(cur);
                }
            }
            pts = out;
        }
        Polygon::new(pts).ok()
    }
}

/// One labeled polygon in an annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct Shape {
    pub label: ClassId,
    pub polygon: Polygon,
}

/// Polygon annotations for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub image_name: String,
    pub image_width: u32,
    pub image_height: u32,
    pub shapes: Vec<Shape>,
}

impl Annotation {
    pub fn new(image_name: impl Into<String>, image_width: u32, image_height: u32) -> Self {
        Self {
            image_name: image_name.into(),
            image_width,
            image_height,
            shapes: Vec::new(),
        }
    }

    pub fn shapes_of(&self, class: ClassId) -> impl Iterator<Item = &Shape> {
        self.shapes.iter().filter(move |s| s.label == class)
    }
}

/// Dense `f64` field over a raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: f64) {
        let w = self.width as usize;
        self.data[y as usize * w + x as usize] = v;
    }
}

/// One fully generated sample: the image, its multi-label masks and coarse polygons.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSample {
    pub image: ImageBuffer,
    pub masks: MaskSet,
    pub annotation: Annotation,
    pub weathered: bool,
    pub warnings: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_codes_are_stable_and_bijective() {
        assert_eq!(ClassId::ALL.len(), 20);
        for (i, c) in ClassId::ALL.iter().enumerate() {
            assert_eq!(c.code() as usize, i);
            assert_eq!(ClassId::from_code(i as u8), Some(*c));
            assert_eq!(c.name().parse::<ClassId>().unwrap(), *c);
        }
        assert_eq!(ClassId::Background.code(), 0);
        assert_eq!(ClassId::foreground().count(), 19);
        assert!(matches!(
            "Moss".parse::<ClassId>(),
            Err(Error::UnknownLabel(l)) if l == "Moss"
        ));
    }

    #[test]
    fn image_buffer_rejects_zero_dims() {
        assert!(ImageBuffer::new(0, 4).is_err());
        assert!(ImageBuffer::from_raw(2, 2, vec![0; 11]).is_err());
        let img = ImageBuffer::filled(3, 2, [1, 2, 3]).unwrap();
        assert_eq!(img.data().len(), 18);
    }

    #[test]
    fn background_mask_is_rejected() {
        assert!(LabelMask::new(4, 4, ClassId::Background).is_err());
    }

    #[test]
    fn maskset_rejects_mismatched_dims() {
        let mut set = MaskSet::new(4, 4).unwrap();
        let m = LabelMask::new(5, 4, ClassId::Rust).unwrap();
        assert!(set.insert(m).is_err());
        assert!(set.get_or_empty(ClassId::Rust).unwrap().is_empty());
    }

    #[test]
    fn polygon_clip_to_rect() {
        let p = Polygon::rect(-5.0, -5.0, 5.0, 5.0);
        let c = p.clip_to_rect(0.0, 0.0, 10.0, 10.0).unwrap();
        assert!((c.area() - 25.0).abs() < 1e-9);
        assert!(Polygon::rect(20.0, 20.0, 30.0, 30.0)
            .clip_to_rect(0.0, 0.0, 10.0, 10.0)
            .is_none());
    }
}
