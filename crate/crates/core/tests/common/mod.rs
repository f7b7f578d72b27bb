//! Shared fixtures and brute-force reference implementations for integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use synthforge::io::{save_annotation, save_image};
use synthforge::{Annotation, ClassId, ImageBuffer, LabelMask, Polygon, Shape};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_mask(r: &mut ChaCha8Rng, w: u32, h: u32, density: f64, class: ClassId) -> LabelMask {
    let bits = (0..w * h).map(|_| r.random::<f64>() < density).collect();
    LabelMask::from_bits(w, h, class, bits).unwrap()
}

/// Crossing-number point-in-polygon test (even-odd), one point at a time.
pub fn point_in_polygon(px: f64, py: f64, pts: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let n = pts.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = pts[i];
        let (xj, yj) = pts[j];
        if (yi > py) != (yj > py) {
            let x_cross = (xj - xi) * (py - yi) / (yj - yi) + xi;
            if px < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub fn raster_oracle(poly: &Polygon, w: u32, h: u32) -> Vec<bool> {
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            out.push(point_in_polygon(x as f64 + 0.5, y as f64 + 0.5, poly.points()));
        }
    }
    out
}

/// Sliding-window dilation: every set input pixel stamps its kernel-sized block,
/// offset by the anchor `(kw / 2, kh / 2)`.
pub fn dilate_oracle(mask: &LabelMask, kw: u32, kh: u32) -> Vec<bool> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let (ax, ay) = ((kw / 2) as i64, (kh / 2) as i64);
    let mut out = vec![false; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x as u32, y as u32) {
                continue;
            }
            for dy in 0..kh as i64 {
                for dx in 0..kw as i64 {
                    let (ox, oy) = (x - ax + dx, y - ay + dy);
                    if ox >= 0 && oy >= 0 && ox < w && oy < h {
                        out[(oy * w + ox) as usize] = true;
                    }
                }
            }
        }
    }
    out
}

/// Sizes of 8-connected components by recursive-free BFS flood fill.
pub fn component_sizes_oracle(mask: &LabelMask) -> Vec<u64> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let mut seen = vec![false; (w * h) as usize];
    let mut sizes = Vec::new();
    for y0 in 0..h {
        for x0 in 0..w {
            let i0 = (y0 * w + x0) as usize;
            if seen[i0] || !mask.get(x0 as u32, y0 as u32) {
                continue;
            }
            let mut queue = std::collections::VecDeque::from([(x0, y0)]);
            seen[i0] = true;
            let mut n = 0;
            while let Some((x, y)) = queue.pop_front() {
                n += 1;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w || ny >= h {
                            continue;
                        }
                        let j = (ny * w + nx) as usize;
                        if !seen[j] && mask.get(nx as u32, ny as u32) {
                            seen[j] = true;
                            queue.push_back((nx, ny));
                        }
                    }
                }
            }
            sizes.push(n);
        }
    }
    sizes
}

/// Between-class variance straight from the definition, summing the histogram per class.
pub fn variance_oracle(hist: &[u64; 256], thresholds: &[usize]) -> f64 {
    let total: f64 = hist.iter().map(|&c| c as f64).sum();
    let mu: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum::<f64>() / total;
    let mut bounds = vec![0usize];
    bounds.extend(thresholds.iter().map(|t| t + 1));
    bounds.push(256);
    let mut var = 0.0;
    for win in bounds.windows(2) {
        let (mut n, mut s) = (0.0, 0.0);
        for (v, &c) in hist.iter().enumerate().take(win[1]).skip(win[0]) {
            n += c as f64;
            s += v as f64 * c as f64;
        }
        if n > 0.0 {
            let m = s / n;
            var += n / total * (m - mu) * (m - mu);
        }
    }
    var
}

/// Exhaustive Otsu by nested loops; returns the first maximizer in lexicographic order.
pub fn otsu_oracle(hist: &[u64; 256], k: usize) -> Vec<u8> {
    let mut best = (f64::NEG_INFINITY, vec![]);
    let mut consider = |t: Vec<usize>| {
        let v = variance_oracle(hist, &t);
        if v > best.0 {
            best = (v, t);
        }
    };
    match k {
        2 => (0..=254).for_each(|a| consider(vec![a])),
        3 => {
            for a in 0..=253 {
                for b in a + 1..=254 {
                    consider(vec![a, b]);
                }
            }
        }
        _ => unreachable!("oracle supports k = 2, 3"),
    }
    best.1.into_iter().map(|t| t as u8).collect()
}

/// Plain confusion tally over two boolean slices.
pub fn tally(pred: &[bool], truth: &[bool]) -> (u64, u64, u64, u64) {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    (tp, fp, fn_, tn)
}

/// Random simple-or-not polygon with `n` vertices inside `[−pad, size + pad]^2`.
pub fn random_polygon(r: &mut ChaCha8Rng, n: usize, size: f64, pad: f64) -> Polygon {
    let pts = (0..n)
        .map(|_| (r.random_range(-pad..size + pad), r.random_range(-pad..size + pad)))
        .collect();
    Polygon::new(pts).unwrap()
}

fn concrete(r: &mut ChaCha8Rng, w: u32, h: u32) -> ImageBuffer {
    let mut img = ImageBuffer::new(w, h).unwrap();
    for px in img.data_mut().chunks_exact_mut(3) {
        let g = 120 + r.random_range(0..40u8);
        px.copy_from_slice(&[g, g, g.saturating_sub(4)]);
    }
    img
}

fn blob(r: &mut ChaCha8Rng, cx: f64, cy: f64, rx: f64, ry: f64) -> Polygon {
    let n = 10;
    let pts = (0..n)
        .map(|i| {
            let a = i as f64 / n as f64 * std::f64::consts::TAU;
            let s = r.random_range(0.75..1.0);
            (cx + rx * s * a.cos(), cy + ry * s * a.sin())
        })
        .collect();
    Polygon::new(pts).unwrap()
}

/// Imbalanced toy dataset: `root/images/img_NN.png` + `root/annotations/img_NN.json`.
///
/// Every image has a large Spalling region; the other six target classes occur in
/// progressively fewer images, and ExposedRebars always sits inside its Spalling host.
pub fn write_toy_dataset(root: &Path, n_images: usize, size: u32, seed: u64) -> PathBuf {
    let mut r = rng(seed);
    fs::create_dir_all(root.join("annotations")).unwrap();
    let s = size as f64;
    for i in 0..n_images {
        let name = format!("img_{i:02}.png");
        let mut img = concrete(&mut r, size, size);
        let mut a = Annotation::new(&name, size, size);
        let mut push = |label: ClassId, poly: Polygon, img: &mut ImageBuffer, tint: [u8; 3]| {
            let m = synthforge::rasterize_polygon(&poly, size, size, label).unwrap();
            for (px, &on) in img.data_mut().chunks_exact_mut(3).zip(m.bits()) {
                if on {
                    px.copy_from_slice(&tint);
                }
            }
            a.shapes.push(Shape { label, polygon: poly });
        };
        let host = blob(&mut r, s * 0.35, s * 0.4, s * 0.25, s * 0.2);
        push(ClassId::Spalling, host, &mut img, [90, 85, 80]);
        if i % 10 < 3 {
            let bar = Polygon::rect(s * 0.25, s * 0.37, s * 0.45, s * 0.43);
            push(ClassId::ExposedRebars, bar, &mut img, [110, 60, 40]);
        }
        let rest = [
            (ClassId::Efflorescence, 12usize, [225, 225, 220]),
            (ClassId::Wetspot, 8, [70, 70, 75]),
            (ClassId::Rust, 5, [150, 80, 40]),
            (ClassId::Rockpocket, 4, [60, 55, 50]),
            (ClassId::Hollowareas, 3, [100, 100, 110]),
        ];
        for (k, &(class, count, tint)) in rest.iter().enumerate() {
            if i < count * n_images / 20 {
                let cx = s * (0.2 + 0.15 * k as f64);
                let poly = blob(&mut r, cx, s * 0.8, s * 0.06, s * 0.08);
                push(class, poly, &mut img, tint);
            }
        }
        save_image(&img, root.join("images").join(&name)).unwrap();
        save_annotation(&a, root.join("annotations").join(format!("img_{i:02}.json"))).unwrap();
    }
    root.to_path_buf()
}

/// Relative path -> file bytes for every file under `root`.
pub fn tree_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in walkdir::WalkDir::new(root).sort_by_file_name() {
        let e = e.unwrap();
        if e.file_type().is_file() {
            let rel = e.path().strip_prefix(root).unwrap().to_string_lossy().into_owned();
            out.insert(rel, fs::read(e.path()).unwrap());
        }
    }
    out
}
