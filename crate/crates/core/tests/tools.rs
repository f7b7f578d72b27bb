//! Dataset-level tools: statistics, perturbation runs, evaluation and reports.

mod common;

use std::fs;
use std::path::Path;

use common::*;
use synthforge::config::RunConfig;
use synthforge::evalmetrics::{evaluate, robustness_report, stats_table};
use synthforge::io::save_maskset;
use synthforge::perturb::{elastic_field_for, perturb_dataset, PerturbConfig, PerturbKind, ELASTIC_SCALE};
use synthforge::pipeline::{generate, Extension};
use synthforge::{ClassId, Error, ImageBuffer, LabelMask, MaskSet};

#[test]
fn stats_of_toy_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let root = write_toy_dataset(tmp.path(), 20, 96, 1);
    let t = stats_table(&root).unwrap();
    let sp = t.row(ClassId::Spalling).unwrap();
    assert_eq!(sp.images, 20);
    assert_eq!(sp.shapes, 20);
    let hollow = t.row(ClassId::Hollowareas).unwrap();
    assert_eq!(hollow.images, 3);
    assert!(t.to_text().contains("Spalling"));
}

#[test]
fn perturbing_generated_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("src");
    let mut cfg = RunConfig::default();
    cfg.resolution = 64;
    cfg.synthcavity.samples = 2;
    generate(Extension::Synthcavity, &cfg, &src, Some(1)).unwrap();
    let out = tmp.path().join("pert");
    let kinds = [PerturbKind::GaussianNoise, PerturbKind::ElasticTransform];
    let m = perturb_dataset(&src, &out, &kinds, 3, 0).unwrap();
    assert!(m.errors.is_empty(), "{:?}", m.errors);
    assert_eq!(m.entries.len(), 4);
    for e in &m.entries {
        assert!(e.output.is_file());
        let masks = e.masks.as_ref().expect("generated samples have masks");
        if e.kind.is_geometric() {
            assert!(masks.starts_with(&out));
        } else {
            assert_eq!(masks, &src.join(&e.id).join("masks"));
        }
    }
    // Same inputs, same bytes.
    let again = tmp.path().join("pert2");
    perturb_dataset(&src, &again, &kinds, 3, 0).unwrap();
    assert_eq!(tree_bytes(&out.join("gaussian_noise")), tree_bytes(&again.join("gaussian_noise")));
}

fn write_masks(dir: &Path, masks: &[LabelMask]) {
    let mut set = MaskSet::new(16, 16).unwrap();
    for m in masks {
        set.insert(m.clone()).unwrap();
    }
    save_maskset(&set, dir.join("masks")).unwrap();
}

fn square(class: ClassId, x0: u32, n: u32) -> LabelMask {
    let mut m = LabelMask::new(16, 16, class).unwrap();
    for y in 0..n {
        for x in x0..x0 + n {
            m.set(x, y, true);
        }
    }
    m
}

#[test]
fn evaluation_of_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let (pred, truth) = (tmp.path().join("pred"), tmp.path().join("truth"));
    write_masks(&truth.join("a"), &[square(ClassId::Rust, 0, 4)]);
    write_masks(&pred.join("a"), &[square(ClassId::Rust, 2, 4)]);
    write_masks(&truth.join("b"), &[]);
    write_masks(&pred.join("b"), &[]);
    let classes = [ClassId::Rust, ClassId::Crack];
    let r = evaluate(&pred, &truth, &classes, false).unwrap();
    assert_eq!(r.images, 2);
    // Rust: image a overlaps 8 of 24 union pixels, image b is empty on both sides.
    let rust = r.classes[0].scores.iou;
    assert!((rust - (8.0 / 24.0 + 1.0) / 2.0 * 100.0).abs() < 1e-9);
    assert_eq!(r.classes[1].scores.iou, 100.0);
    let present = evaluate(&pred, &truth, &classes, true).unwrap();
    assert!((present.classes[0].scores.iou - 8.0 / 24.0 * 100.0).abs() < 1e-9);

    let noisy = robustness_report(&r, &[("x".into(), present.clone())]).unwrap();
    let change = noisy.change.unwrap().iou.unwrap();
    let expected = (present.mean.iou - r.mean.iou) / r.mean.iou * 100.0;
    assert!((change - expected).abs() < 1e-9);

    fs::remove_dir_all(pred.join("b")).unwrap();
    match evaluate(&pred, &truth, &classes, false) {
        Err(Error::MissingPredictions(ids)) => assert_eq!(ids, vec!["b".to_string()]),
        other => panic!("expected missing predictions, got {other:?}"),
    }
}

#[test]
fn elastic_masks_follow_the_image() {
    let mut r = rng(5);
    let mask = random_mask(&mut r, 96, 80, 0.01, ClassId::Cavity);
    let mask = synthforge::morph::dilate(&mask, 7, 7);
    let mut img = ImageBuffer::new(96, 80).unwrap();
    for (px, &on) in img.data_mut().chunks_exact_mut(3).zip(mask.bits()) {
        px.fill(if on { 255 } else { 0 });
    }
    let cfg = PerturbConfig { kind: PerturbKind::ElasticTransform, severity: 5, seed: 17 };
    let field = elastic_field_for(96, 80, &cfg);
    let scale = ELASTIC_SCALE[4];
    let wi = field.warp_image(&img, scale).unwrap();
    let wm = field.warp_mask(&mask, scale).unwrap();
    let (mut inside, mut outside) = (0, 0);
    for (px, &m) in wi.data().chunks_exact(3).zip(wm.bits()) {
        // Bilinear reads entirely inside (or outside) the mask pin the nearest read.
        match px[0] {
            255 => {
                assert!(m);
                inside += 1;
            }
            0 => {
                assert!(!m);
                outside += 1;
            }
            _ => {}
        }
    }
    assert!(inside > 500 && outside > 500);
    assert!(wm != mask, "a severity-5 warp moves the mask");
}
