//! Dataset discovery and per-class tallies.
//!
//! A dataset directory holds annotation JSON files anywhere below it. Each annotation's
//! image is looked up next to the JSON file, then in a sibling `images/` directory, then
//! in `<root>/images/`. Both the generated sample layout (`NNNNN/annotation.json` +
//! `NNNNN/image.png`) and a flat `annotations/` + `images/` layout are recognised.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::io::load_annotation;
use crate::raster::fill_polygon;
use crate::types::{Annotation, ClassId, LabelMask};

/// JSON files that are never annotations.
const RESERVED: [&str; 4] = ["manifest.json", "plan.json", "advisory.json", "legend.json"];

#[derive(Debug, Clone)]
pub struct DatasetItem {
    /// Stable identifier: the sample directory for `annotation.json`, else the path
    /// without extension, relative to the root and `/`-separated.
    pub id: String,
    pub annotation_path: PathBuf,
    pub image_path: Option<PathBuf>,
    pub annotation: Annotation,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub root: PathBuf,
    pub items: Vec<DatasetItem>,
    pub warnings: Vec<String>,
}

fn relative_id(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    let base = if rel.file_name().and_then(|n| n.to_str()) == Some("annotation.json") {
        rel.parent().map(Path::to_path_buf).unwrap_or_default()
    } else {
        rel.with_extension("")
    };
    let id = base
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/");
    if id.is_empty() {
        "root".to_string()
    } else {
        id
    }
}

fn resolve_image(root: &Path, json: &Path, image_name: &str) -> Option<PathBuf> {
    let dir = json.parent()?;
    let mut candidates = vec![dir.join(image_name)];
    if let Some(parent) = dir.parent() {
        candidates.push(parent.join("images").join(image_name));
    }
    candidates.push(root.join("images").join(image_name));
    candidates.into_iter().find(|p| p.is_file())
}

/// Finds every annotation under `root`. Unparseable JSON files are reported in
/// `warnings` and skipped; a missing root is an error.
pub fn discover(root: impl AsRef<Path>) -> Result<Dataset> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    let mut paths = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            Error::io(path, e.into())
        })?;
        let name = entry.file_name().to_string_lossy();
        if entry.file_type().is_file() && name.ends_with(".json") && !RESERVED.contains(&name.as_ref()) {
            paths.push(entry.into_path());
        }
    }
    let mut ds = Dataset {
        root: root.to_path_buf(),
        ..Default::default()
    };
    for path in paths {
        match load_annotation(&path) {
            Ok(annotation) => {
                let image_path = resolve_image(root, &path, &annotation.image_name);
                ds.items.push(DatasetItem {
                    id: relative_id(root, &path),
                    annotation_path: path,
                    image_path,
                    annotation,
                });
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                ds.warnings.push(format!("{}: {e}", path.display()));
            }
        }
    }
    Ok(ds)
}

/// Raw per-class counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub pixels: u64,
    pub shapes: u64,
    pub images: u64,
}

/// Counts for one annotation, rasterized at `width x height`. Pixels of one class are
/// counted once even where its polygons overlap. The `Background` entry holds the
/// complement of the foreground union and counts only explicit background shapes.
pub fn tally_annotation(a: &Annotation, width: u32, height: u32) -> Result<BTreeMap<ClassId, ClassCounts>> {
    let sx = width as f64 / a.image_width as f64;
    let sy = height as f64 / a.image_height as f64;
    let mut masks: BTreeMap<ClassId, LabelMask> = BTreeMap::new();
    let mut shapes: BTreeMap<ClassId, u64> = BTreeMap::new();
    for s in &a.shapes {
        *shapes.entry(s.label).or_default() += 1;
        if s.label == ClassId::Background {
            continue;
        }
        let m = match masks.entry(s.label) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(e) => e.insert(LabelMask::new(width, height, s.label)?),
        };
        fill_polygon(m, &s.polygon.scale(sx, sy));
    }
    let mut union = vec![false; width as usize * height as usize];
    let mut out = BTreeMap::new();
    for (class, m) in &masks {
        for (u, &b) in union.iter_mut().zip(m.bits()) {
            *u |= b;
        }
        out.insert(
            *class,
            ClassCounts {
                pixels: m.count(),
                shapes: shapes[class],
                images: 1,
            },
        );
    }
    let bg_pixels = union.iter().filter(|&&b| !b).count() as u64;
    out.insert(
        ClassId::Background,
        ClassCounts {
            pixels: bg_pixels,
            shapes: shapes.get(&ClassId::Background).copied().unwrap_or(0),
            images: u64::from(bg_pixels > 0),
        },
    );
    Ok(out)
}

/// Sums [`tally_annotation`] over a dataset, at native size or at `resolution x resolution`.
pub fn tally_dataset(ds: &Dataset, resolution: Option<u32>) -> Result<BTreeMap<ClassId, ClassCounts>> {
    let per_image: Vec<BTreeMap<ClassId, ClassCounts>> = ds
        .items
        .par_iter()
        .map(|item| {
            let a = &item.annotation;
            let (w, h) = resolution.map_or((a.image_width, a.image_height), |r| (r, r));
            tally_annotation(a, w, h)
        })
        .collect::<Result<_>>()?;
    let mut total: BTreeMap<ClassId, ClassCounts> = ClassId::ALL.iter().map(|&c| (c, ClassCounts::default())).collect();
    for m in per_image {
        for (class, c) in m {
            let t = total.get_mut(&class).expect("all classes present");
            t.pixels += c.pixels;
            t.shapes += c.shapes;
            t.images += c.images;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Polygon, Shape};

    #[test]
    fn square_tally() {
        let mut a = Annotation::new("a.png", 8, 8);
        a.shapes.push(Shape { label: ClassId::Spalling, polygon: Polygon::rect(0.0, 0.0, 4.0, 4.0) });
        let t = tally_annotation(&a, 8, 8).unwrap();
        assert_eq!(t[&ClassId::Spalling], ClassCounts { pixels: 16, shapes: 1, images: 1 });
        assert_eq!(t[&ClassId::Background].pixels, 48);
        assert_eq!(t[&ClassId::Background].shapes, 0);
    }

    #[test]
    fn overlapping_same_class_counts_once() {
        let mut a = Annotation::new("a.png", 8, 8);
        for _ in 0..2 {
            a.shapes.push(Shape { label: ClassId::Rust, polygon: Polygon::rect(0.0, 0.0, 2.0, 2.0) });
        }
        let t = tally_annotation(&a, 8, 8).unwrap();
        assert_eq!(t[&ClassId::Rust], ClassCounts { pixels: 4, shapes: 2, images: 1 });
    }

    #[test]
    fn scaled_tally() {
        let mut a = Annotation::new("a.png", 1024, 1024);
        a.shapes.push(Shape { label: ClassId::Rust, polygon: Polygon::rect(0.0, 0.0, 8.0, 8.0) });
        assert_eq!(tally_annotation(&a, 512, 512).unwrap()[&ClassId::Rust].pixels, 16);
    }

    #[test]
    fn ids() {
        let root = Path::new("/d");
        assert_eq!(relative_id(root, Path::new("/d/00003/annotation.json")), "00003");
        assert_eq!(relative_id(root, Path::new("/d/annotations/x_1.json")), "annotations/x_1");
    }
}
