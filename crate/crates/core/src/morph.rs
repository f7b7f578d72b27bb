//! Binary box dilation.

use crate::types::LabelMask;

/// Minkowski dilation of `mask` by a `kernel_w x kernel_h` box anchored at
/// `(floor(kernel_w / 2), floor(kernel_h / 2))`.
///
/// A lone set pixel at `p` grows into the block `p - anchor .. p - anchor + kernel`.
/// Pixels outside the frame are clipped. Zero-sized kernels are treated as 1.
pub fn dilate(mask: &LabelMask, kernel_w: u32, kernel_h: u32) -> LabelMask {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let kw = kernel_w.max(1) as usize;
    let kh = kernel_h.max(1) as usize;
    let (ax, ay) = (kw / 2, kh / 2);

    // Output(x) is set iff some input in [x - (k-1-a), x + a] is set.
    let horizontal = sliding_any(mask.bits(), w, h, kw - 1 - ax, ax, true);
    let bits = sliding_any(&horizontal, w, h, kh - 1 - ay, ay, false);
    let mut out = mask.clone();
    out.bits_mut().copy_from_slice(&bits);
    out
}

/// Dilates by a square of side `2 * radius + 1` centered on each pixel.
pub fn dilate_radius(mask: &LabelMask, radius: u32) -> LabelMask {
    dilate(mask, 2 * radius + 1, 2 * radius + 1)
}

fn sliding_any(
    src: &[bool],
    w: usize,
    h: usize,
    before: usize,
    after: usize,
    along_rows: bool,
) -> Vec<bool> {
    let mut out = vec![false; src.len()];
    let (lines, len) = if along_rows { (h, w) } else { (w, h) };
    let index = |line: usize, i: usize| {
        if along_rows {
            line * w + i
        } else {
            i * w + line
        }
    };
    let mut prefix = vec![0u32; len + 1];
    for line in 0..lines {
        for i in 0..len {
            prefix[i + 1] = prefix[i] + src[index(line, i)] as u32;
        }
        for i in 0..len {
            let lo = i.saturating_sub(before);
            let hi = (i + after + 1).min(len);
            out[index(line, i)] = prefix[hi] > prefix[lo];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ClassId;

    #[test]
    fn single_pixel_grows_to_anchored_block() {
        let mut m = LabelMask::new(100, 100, ClassId::Spalling).unwrap();
        m.set(50, 50, true);
        let d = dilate(&m, 30, 30);
        assert_eq!(d.count(), 900);
        let bb = d.bbox().unwrap();
        assert_eq!((bb.x0, bb.y0, bb.x1, bb.y1), (35, 35, 65, 65));
        assert_eq!(50 - bb.x0, 15);
    }

    #[test]
    fn empty_stays_empty() {
        let m = LabelMask::new(40, 30, ClassId::Rust).unwrap();
        assert!(dilate(&m, 30, 30).is_empty());
    }

    #[test]
    fn unit_kernel_is_identity() {
        let mut m = LabelMask::new(8, 8, ClassId::Rust).unwrap();
        m.set(1, 2, true);
        m.set(7, 7, true);
        assert_eq!(dilate(&m, 1, 1), m);
    }

    #[test]
    fn corner_pixel_is_clipped() {
        let mut m = LabelMask::new(10, 10, ClassId::Rust).unwrap();
        m.set(0, 0, true);
        // offsets -1..=1 in each axis, clipped to the frame
        assert_eq!(dilate(&m, 3, 3).count(), 4);
    }
}
