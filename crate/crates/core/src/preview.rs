//! Colour-coded review overlays for generated or annotated samples.
//!
//! Each present class is blended over the image at [`ALPHA`] in class-code order,
//! using the fixed [`class_color`] table. Pixels outside the union of all masks are
//! copied unchanged. The legend is written as a JSON sidecar rather than drawn, so
//! the image itself stays a faithful overlay.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{load_image, read_maskset, save_image, write_json};
use crate::types::{ClassId, ImageBuffer, MaskSet};

pub const ALPHA: f64 = 0.45;

/// Fixed class→colour table (sRGB).
///
/// | class | colour | class | colour |
/// |---|---|---|---|
/// | Crack | 230,25,75 | Restformwork | 128,128,0 |
/// | ACrack | 245,130,48 | Wetspot | 0,130,200 |
/// | Efflorescence | 255,225,25 | Rust | 170,110,40 |
/// | Rockpocket | 145,30,180 | Graffiti | 240,50,230 |
/// | WConccor | 70,240,240 | Weathering | 128,128,128 |
/// | Hollowareas | 210,245,60 | ExposedRebars | 128,0,0 |
/// | Cavity | 60,180,75 | Bearing | 0,0,128 |
/// | Spalling | 250,190,212 | EJoint | 170,255,195 |
/// | Drainage | 255,215,180 | PEquipment | 0,128,128 |
/// | JTape | 220,190,255 | Background | 0,0,0 |
pub fn class_color(class: ClassId) -> [u8; 3] {
    match class {
        ClassId::Background => [0, 0, 0],
        ClassId::Crack => [230, 25, 75],
        ClassId::ACrack => [245, 130, 48],
        ClassId::Efflorescence => [255, 225, 25],
        ClassId::Rockpocket => [145, 30, 180],
        ClassId::WConccor => [70, 240, 240],
        ClassId::Hollowareas => [210, 245, 60],
        ClassId::Cavity => [60, 180, 75],
        ClassId::Spalling => [250, 190, 212],
        ClassId::Restformwork => [128, 128, 0],
        ClassId::Wetspot => [0, 130, 200],
        ClassId::Rust => [170, 110, 40],
        ClassId::Graffiti => [240, 50, 230],
        ClassId::Weathering => [128, 128, 128],
        ClassId::ExposedRebars => [128, 0, 0],
        ClassId::Bearing => [0, 0, 128],
        ClassId::EJoint => [170, 255, 195],
        ClassId::Drainage => [255, 215, 180],
        ClassId::PEquipment => [0, 128, 128],
        ClassId::JTape => [220, 190, 255],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LegendEntry {
    pub class: ClassId,
    pub color: [u8; 3],
    pub pixels: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Legend {
    pub format_version: String,
    pub alpha: String,
    pub entries: Vec<LegendEntry>,
}

/// Overlay and legend for one image. Classes with empty masks are omitted.
pub fn render_overlay(image: &ImageBuffer, masks: &MaskSet) -> Result<(ImageBuffer, Legend)> {
    if image.dims() != masks.dims() {
        return Err(Error::DimensionMismatch {
            expected: image.dims(),
            found: masks.dims(),
            context: "preview masks".into(),
        });
    }
    let mut out = image.clone();
    let mut entries = Vec::new();
    for mask in masks.iter().filter(|m| !m.is_empty()) {
        let color = class_color(mask.class());
        for (px, &on) in out.data_mut().chunks_exact_mut(3).zip(mask.bits()) {
            if on {
                for (c, &k) in px.iter_mut().zip(&color) {
                    *c = ((1.0 - ALPHA) * *c as f64 + ALPHA * k as f64).round() as u8;
                }
            }
        }
        entries.push(LegendEntry {
            class: mask.class(),
            color,
            pixels: mask.count(),
        });
    }
    let legend = Legend {
        format_version: "1".into(),
        alpha: format!("{ALPHA}"),
        entries,
    };
    Ok((out, legend))
}

/// `out.png` → `out.legend.json`.
pub fn legend_path(out: &Path) -> PathBuf {
    out.with_extension("legend.json")
}

/// Reads `sample_dir/image.png` and `sample_dir/masks/`, writes the overlay to `out`
/// and the legend beside it. A missing masks directory is a data error; a present
/// but empty one gives a plain copy of the image.
pub fn preview_sample(sample_dir: &Path, out: &Path) -> Result<Legend> {
    let image = load_image(sample_dir.join("image.png"))?;
    let mask_dir = sample_dir.join("masks");
    if !mask_dir.is_dir() {
        return Err(Error::io(
            &mask_dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "masks directory missing"),
        ));
    }
    let masks = match read_maskset(&mask_dir)? {
        Some(m) => m,
        None => MaskSet::new(image.width(), image.height())?,
    };
    let (overlay, legend) = render_overlay(&image, &masks)?;
    save_image(&overlay, out)?;
    write_json(legend_path(out), &legend)?;
    Ok(legend)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::LabelMask;

    fn base() -> ImageBuffer {
        ImageBuffer::filled(16, 16, [100, 110, 120]).unwrap()
    }

    #[test]
    fn colors_are_distinct() {
        let mut seen: Vec<[u8; 3]> = ClassId::ALL.iter().map(|&c| class_color(c)).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 20);
    }

    #[test]
    fn empty_maskset_is_plain_copy() {
        let img = base();
        let (o, l) = render_overlay(&img, &MaskSet::new(16, 16).unwrap()).unwrap();
        assert_eq!(o, img);
        assert!(l.entries.is_empty());
    }

    #[test]
    fn two_classes_two_entries_and_changes_only_inside() {
        let img = base();
        let mut set = MaskSet::new(16, 16).unwrap();
        let mut a = LabelMask::new(16, 16, ClassId::Rust).unwrap();
        let mut b = LabelMask::new(16, 16, ClassId::Crack).unwrap();
        for i in 0..8 {
            a.set(i, 2, true);
            b.set(3, i + 4, true);
        }
        set.insert(a).unwrap();
        set.insert(b).unwrap();
        let (o, l) = render_overlay(&img, &set).unwrap();
        assert_eq!(l.entries.len(), 2);
        let union = set.foreground_union();
        for (i, inside) in union.iter().enumerate() {
            let (x, y) = ((i % 16) as u32, (i / 16) as u32);
            if !inside {
                assert_eq!(o.get(x, y), img.get(x, y));
            } else {
                assert_ne!(o.get(x, y), img.get(x, y));
            }
        }
    }
}
