//! Even-odd polygon fill sampled at pixel centers.

use crate::types::{ClassId, LabelMask, Polygon};

/// Rasterizes `poly` into a new `class` mask.
///
/// Pixel `(x, y)` is set iff `(x + 0.5, y + 0.5)` lies inside the polygon under the
/// even-odd rule. Zero-area polygons yield an empty mask.
pub fn rasterize_polygon(
    poly: &Polygon,
    width: u32,
    height: u32,
    class: ClassId,
) -> crate::Result<LabelMask> {
    let mut mask = LabelMask::new(width, height, class)?;
    fill_polygon(&mut mask, poly);
    Ok(mask)
}

/// ORs the even-odd fill of `poly` into `mask`.
pub fn fill_polygon(mask: &mut LabelMask, poly: &Polygon) {
    let (width, height) = mask.dims();
    let (_, min_y, _, max_y) = poly.bounds();
    let row0 = (min_y - 0.5).ceil().max(0.0) as i64;
    let row1 = ((max_y - 0.5).floor() as i64).min(height as i64 - 1);
    let mut xs: Vec<f64> = Vec::with_capacity(poly.points().len());
    for y in row0..=row1 {
        let py = y as f64 + 0.5;
        xs.clear();
        for ((x0, y0), (x1, y1)) in poly.edges() {
            if (y0 > py) != (y1 > py) {
                xs.push((x1 - x0) * (py - y0) / (y1 - y0) + x0);
            }
        }
        if xs.len() < 2 {
            continue;
        }
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Center px is inside iff an odd number of crossings lie strictly right of it,
        // i.e. xs[2i] <= px < xs[2i+1].
        for pair in xs.chunks_exact(2) {
            let first = first_center_at_or_after(pair[0]).max(0);
            let last = (first_center_at_or_after(pair[1]) - 1).min(width as i64 - 1);
            for x in first..=last {
                mask.set(x as u32, y as u32, true);
            }
        }
    }
}

/// Smallest integer `x` with `x + 0.5 >= v`, evaluated with the same comparison
/// the point-in-polygon test uses.
fn first_center_at_or_after(v: f64) -> i64 {
    let mut x = (v - 0.5).ceil() as i64;
    while (x as f64 + 0.5) < v {
        x += 1;
    }
    while ((x - 1) as f64 + 0.5) >= v {
        x -= 1;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_square_covers_exact_block() {
        let sq = Polygon::rect(0.0, 0.0, 4.0, 4.0);
        let m = rasterize_polygon(&sq, 8, 8, ClassId::Spalling).unwrap();
        assert_eq!(m.count(), 16);
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(m.get(x, y), x < 4 && y < 4);
            }
        }
    }

    #[test]
    fn degenerate_polygon_is_empty() {
        let p = Polygon::new(vec![(3.0, 3.0); 3]).unwrap();
        assert!(rasterize_polygon(&p, 8, 8, ClassId::Rust).unwrap().is_empty());
    }

    #[test]
    fn polygon_outside_frame_is_clipped() {
        let p = Polygon::rect(-10.0, -10.0, 2.0, 2.0);
        let m = rasterize_polygon(&p, 8, 8, ClassId::Rust).unwrap();
        assert_eq!(m.count(), 4);
        let far = Polygon::rect(20.0, 20.0, 30.0, 30.0);
        assert!(rasterize_polygon(&far, 8, 8, ClassId::Rust).unwrap().is_empty());
    }
}
