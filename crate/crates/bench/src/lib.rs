//! Deterministic inputs shared by the benchmarks.

use synthforge::{ClassId, ImageBuffer, LabelMask, Polygon};

/// Sparse speckle mask; every `stride`-th pixel set along a diagonal walk.
pub fn speckle_mask(w: u32, h: u32, stride: usize) -> LabelMask {
    let bits = (0..(w * h) as usize).map(|i| (i * 7919) % stride == 0).collect();
    LabelMask::from_bits(w, h, ClassId::Spalling, bits).expect("valid dims")
}

/// Star-shaped polygon with `n` spikes centered in a `size`-square.
pub fn star(n: usize, size: f64) -> Polygon {
    let c = size / 2.0;
    let pts = (0..2 * n)
        .map(|i| {
            let a = i as f64 / (2 * n) as f64 * std::f64::consts::TAU;
            let r = if i % 2 == 0 { 0.45 * size } else { 0.2 * size };
            (c + r * a.cos(), c + r * a.sin())
        })
        .collect();
    Polygon::new(pts).expect("non-degenerate")
}

/// Three-mode gray histogram.
pub fn trimodal_histogram() -> [u64; 256] {
    let mut h = [0u64; 256];
    for (i, v) in h.iter_mut().enumerate() {
        let d = |c: f64, s: f64| (-((i as f64 - c) / s).powi(2)).exp();
        *v = (1000.0 * (d(40.0, 10.0) + d(130.0, 20.0) + 0.5 * d(210.0, 8.0))) as u64;
    }
    h
}

/// Textured gray image with a dark diagonal band.
pub fn crack_image(size: u32) -> ImageBuffer {
    let mut img = ImageBuffer::new(size, size).expect("valid dims");
    for (i, px) in img.data_mut().chunks_exact_mut(3).enumerate() {
        let (x, y) = ((i as u32 % size) as i64, (i as u32 / size) as i64);
        let g = if (x - y).abs() <= 1 { 40 } else { 130 + ((x * 31 + y * 17) % 50) as u8 };
        px.fill(g);
    }
    img
}
