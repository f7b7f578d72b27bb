//! 8-connected component labeling.

use serde::Serialize;

use crate::types::{BBox, LabelMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Component {
    pub id: u32,
    pub pixel_count: u64,
    pub bbox: BBox,
}

/// Per-pixel labels (0 = unset, `id + 1` otherwise) and component summaries.
pub struct Labeling {
    pub labels: Vec<u32>,
    pub components: Vec<Component>,
}

/// Labels 8-connected components; ids follow raster order of each component's first pixel.
pub fn label_components(mask: &LabelMask) -> Labeling {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let bits = mask.bits();
    let mut labels = vec![0u32; bits.len()];
    let mut components = Vec::new();
    let mut stack: Vec<usize> = Vec::new();

    for start in 0..bits.len() {
        if !bits[start] || labels[start] != 0 {
            continue;
        }
        let id = components.len() as u32;
        let tag = id + 1;
        labels[start] = tag;
        stack.push(start);
        let mut count = 0u64;
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0usize, 0usize);
        while let Some(i) = stack.pop() {
            count += 1;
            let (x, y) = (i % w, i / w);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            let ys = y.saturating_sub(1)..=(y + 1).min(h - 1);
            for ny in ys {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if bits[j] && labels[j] == 0 {
                        labels[j] = tag;
                        stack.push(j);
                    }
                }
            }
        }
        components.push(Component {
            id,
            pixel_count: count,
            bbox: BBox {
                x0: x0 as u32,
                y0: y0 as u32,
                x1: x1 as u32 + 1,
                y1: y1 as u32 + 1,
            },
        });
    }
    Labeling { labels, components }
}

pub fn connected_components(mask: &LabelMask) -> Vec<Component> {
    label_components(mask).components
}

/// Drops every component with fewer than `min_area` pixels.
pub fn remove_small_components(mask: &LabelMask, min_area: u64) -> LabelMask {
    let Labeling { labels, components } = label_components(mask);
    let mut out = mask.clone();
    for (b, &l) in out.bits_mut().iter_mut().zip(&labels) {
        if l != 0 && components[(l - 1) as usize].pixel_count < min_area {
            *b = false;
        }
    }
    out
}
