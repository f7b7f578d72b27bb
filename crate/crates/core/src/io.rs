//! Annotation JSON, per-class mask PNGs and RGB image files.
//!
//! Annotation schema (`formatVersion` "1"):
//!
//! ```json
//! {"formatVersion": "1", "imageName": "x.png", "imageWidth": 512, "imageHeight": 512,
//!  "shapes": [{"label": "Spalling", "points": [[x, y], ...]}]}
//! ```
//!
//! Mask sets are directories holding one 8-bit grayscale `<ClassName>.png` per present
//! class, 255 = set and 0 = unset.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Annotation, ClassId, ImageBuffer, LabelMask, MaskSet, Polygon, Shape};

pub const FORMAT_VERSION: &str = "1";

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct AnnotationFile {
    #[serde(default = "default_version")]
    format_version: String,
    image_name: String,
    image_width: i64,
    image_height: i64,
    #[serde(default)]
    shapes: Vec<ShapeFile>,
}

#[derive(Serialize, Deserialize)]
struct ShapeFile {
    label: String,
    points: Vec<[f64; 2]>,
}

fn default_version() -> String {
    FORMAT_VERSION.to_string()
}

/// Parses an annotation from JSON text. Coordinates are clamped into the image frame.
pub fn parse_annotation(text: &str, origin: &Path) -> Result<Annotation> {
    let file: AnnotationFile =
        serde_json::from_str(text).map_err(|e| Error::json(origin, &e))?;
    if file.image_width <= 0 || file.image_height <= 0 || file.image_width > u32::MAX as i64 || file.image_height > u32::MAX as i64 {
        return Err(Error::InvalidDimensions {
            width: file.image_width,
            height: file.image_height,
        });
    }
    let (w, h) = (file.image_width as f64, file.image_height as f64);
    let mut shapes = Vec::with_capacity(file.shapes.len());
    for s in file.shapes {
        let label: ClassId = s.label.parse()?;
        let polygon = Polygon::new(s.points.iter().map(|p| (p[0], p[1])).collect())?;
        shapes.push(Shape {
            label,
            polygon: polygon.clamp_to(w, h),
        });
    }
    Ok(Annotation {
        image_name: file.image_name,
        image_width: file.image_width as u32,
        image_height: file.image_height as u32,
        shapes,
    })
}

pub fn annotation_to_json(a: &Annotation) -> String {
    let file = AnnotationFile {
        format_version: FORMAT_VERSION.to_string(),
        image_name: a.image_name.clone(),
        image_width: a.image_width as i64,
        image_height: a.image_height as i64,
        shapes: a
            .shapes
            .iter()
            .map(|s| ShapeFile {
                label: s.label.name().to_string(),
                points: s.polygon.points().iter().map(|&(x, y)| [x, y]).collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("annotation serializes")
}

pub fn load_annotation(path: impl AsRef<Path>) -> Result<Annotation> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotation(&text, path)
}

pub fn save_annotation(a: &Annotation, path: impl AsRef<Path>) -> Result<()> {
    write_text(path, &annotation_to_json(a))
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, &e))
}

pub fn mask_file_name(class: ClassId) -> String {
    format!("{}.png", class.name())
}

pub fn save_mask(mask: &LabelMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let data = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let img = GrayImage::from_raw(mask.width(), mask.height(), data).expect("mask buffer size");
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::image(path, e))
}

pub fn load_mask(path: impl AsRef<Path>, class: ClassId) -> Result<LabelMask> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| Error::image(path, e))?.to_luma8();
    let bits = img.as_raw().iter().map(|&v| v >= 128).collect();
    LabelMask::from_bits(img.width(), img.height(), class, bits)
}

/// Writes one PNG per present class into `dir`, returning the written file names.
pub fn save_maskset(set: &MaskSet, dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = Vec::new();
    for mask in set.iter() {
        let name = mask_file_name(mask.class());
        save_mask(mask, dir.join(&name))?;
        names.push(name);
    }
    Ok(names)
}

/// Lists `(class, path)` for every `<ClassName>.png` in `dir`, in class order.
pub fn list_mask_files(dir: impl AsRef<Path>) -> Result<Vec<(ClassId, PathBuf)>> {
    let dir = dir.as_ref();
    let mut found = Vec::new();
    if !dir.exists() {
        return Ok(found);
    }
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("png") {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if let Ok(class) = stem.parse::<ClassId>() {
            if class != ClassId::Background {
                found.push((class, path));
            }
        }
    }
    found.sort();
    Ok(found)
}

/// Loads the mask set in `dir`, requiring every file to be `width x height`.
pub fn load_maskset(dir: impl AsRef<Path>, width: u32, height: u32) -> Result<MaskSet> {
    let mut set = MaskSet::new(width, height)?;
    for (class, path) in list_mask_files(dir)? {
        let mask = load_mask(&path, class)?;
        if mask.dims() != (width, height) {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                found: mask.dims(),
                context: path.display().to_string(),
            });
        }
        set.insert(mask)?;
    }
    Ok(set)
}

/// Loads the mask set in `dir`, inferring dimensions from its files.
/// Returns `None` when the directory holds no mask files.
pub fn read_maskset(dir: impl AsRef<Path>) -> Result<Option<MaskSet>> {
    let files = list_mask_files(dir)?;
    let mut set: Option<MaskSet> = None;
    for (class, path) in files {
        let mask = load_mask(&path, class)?;
        let s = match &mut set {
            Some(s) => s,
            None => set.insert(MaskSet::new(mask.width(), mask.height())?),
        };
        if mask.dims() != s.dims() {
            return Err(Error::DimensionMismatch {
                expected: s.dims(),
                found: mask.dims(),
                context: path.display().to_string(),
            });
        }
        s.insert(mask)?;
    }
    Ok(set)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| Error::image(path, e))?.to_rgb8();
    let (w, h) = img.dimensions();
    ImageBuffer::from_raw(w, h, img.into_raw())
}

pub fn save_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let rgb = RgbImage::from_raw(img.width(), img.height(), img.data().to_vec())
        .expect("image buffer size");
    rgb.save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::image(path, e))
}

pub fn save_gray(data: &[u8], width: u32, height: u32, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let img = GrayImage::from_raw(width, height, data.to_vec()).expect("gray buffer size");
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::image(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_shape_list_parses() {
        let a = parse_annotation(
            r#"{"imageName":"a.jpg","imageWidth":10,"imageHeight":8,"shapes":[]}"#,
            Path::new("a.json"),
        )
        .unwrap();
        assert!(a.shapes.is_empty());
        assert_eq!((a.image_width, a.image_height), (10, 8));
    }

    #[test]
    fn spalling_shape_maps_to_class() {
        let a = parse_annotation(
            r#"{"formatVersion":"1","imageName":"a.jpg","imageWidth":10,"imageHeight":8,
                "shapes":[{"label":"Spalling","points":[[1,1],[5,1],[5,5],[1,5]]}]}"#,
            Path::new("a.json"),
        )
        .unwrap();
        assert_eq!(a.shapes.len(), 1);
        assert_eq!(a.shapes[0].label, ClassId::Spalling);
        assert_eq!(a.shapes[0].polygon.points().len(), 4);
    }

    #[test]
    fn coordinates_are_clamped() {
        let a = parse_annotation(
            r#"{"imageName":"a","imageWidth":10,"imageHeight":8,
                "shapes":[{"label":"Rust","points":[[-3,1],[15,1],[5,20]]}]}"#,
            Path::new("a.json"),
        )
        .unwrap();
        assert_eq!(a.shapes[0].polygon.points(), &[(0.0, 1.0), (10.0, 1.0), (5.0, 8.0)]);
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = parse_annotation("{\n  \"imageName\": \"a\",\n  oops\n}", Path::new("bad.json"))
            .unwrap_err();
        match err {
            Error::Json { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_label_is_named() {
        let err = parse_annotation(
            r#"{"imageName":"a","imageWidth":10,"imageHeight":8,
                "shapes":[{"label":"Moss","points":[[0,0],[1,0],[1,1]]}]}"#,
            Path::new("a.json"),
        )
        .unwrap_err();
        assert!(err.to_string().contains("Moss"));
    }

    #[test]
    fn negative_dimensions_rejected() {
        let err = parse_annotation(
            r#"{"imageName":"a","imageWidth":-10,"imageHeight":8,"shapes":[]}"#,
            Path::new("a.json"),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidDimensions { width: -10, .. }));
    }

    #[test]
    fn maskset_dimension_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        save_mask(&LabelMask::new(4, 4, ClassId::Rust).unwrap(), dir.path().join("Rust.png"))
            .unwrap();
        save_mask(&LabelMask::new(5, 4, ClassId::Crack).unwrap(), dir.path().join("Crack.png"))
            .unwrap();
        assert!(matches!(
            read_maskset(dir.path()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(load_maskset(dir.path(), 4, 4).is_err());
    }
}
