//! On-disk generation: layout, resume, determinism, daclonsynth end to end.

mod common;

use std::fs;

use common::*;
use synthforge::config::RunConfig;
use synthforge::io::{load_annotation, read_json, read_maskset};
use synthforge::pipeline::{generate, sample_is_complete, Extension, RunManifest, SampleManifest};
use synthforge::preview::{legend_path, preview_sample, Legend};
use synthforge::ClassId;

fn small_config(n: u64) -> RunConfig {
    let mut c = RunConfig::default();
    c.resolution = 128;
    c.master_seed = 7;
    c.synthcavity.samples = n;
    c.synthcrack.samples = n;
    c.daclonsynth.samples = n;
    c
}

#[test]
fn synthcavity_layout_and_resume() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cav");
    let cfg = small_config(4);
    let s = generate(Extension::Synthcavity, &cfg, &out, Some(2)).unwrap();
    assert_eq!((s.generated, s.skipped), (4, 0));
    for i in 0..4 {
        let dir = out.join(format!("{i:05}"));
        assert!(dir.join("image.png").is_file());
        assert!(dir.join("annotation.json").is_file());
        assert!(sample_is_complete(&dir, &cfg.hash(), cfg.master_seed));
        let m: SampleManifest = read_json(dir.join("manifest.json")).unwrap();
        assert_eq!(m.weathered, i % 2 == 0);
        assert_eq!(m.config_hash, cfg.hash());
    }
    let run: RunManifest = read_json(out.join("manifest.json")).unwrap();
    assert_eq!(run.samples.len(), 4);
    assert_eq!(run.master_seed, 7);

    let before = tree_bytes(&out);
    fs::remove_dir_all(out.join("00002")).unwrap();
    let s = generate(Extension::Synthcavity, &cfg, &out, Some(1)).unwrap();
    assert_eq!((s.generated, s.skipped), (1, 3));
    assert_eq!(tree_bytes(&out), before);
}

#[test]
fn corrupted_sample_is_regenerated() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cav");
    let cfg = small_config(2);
    generate(Extension::Synthcavity, &cfg, &out, Some(1)).unwrap();
    let before = tree_bytes(&out);
    fs::write(out.join("00001/image.png"), b"truncated").unwrap();
    let s = generate(Extension::Synthcavity, &cfg, &out, Some(1)).unwrap();
    assert_eq!(s.generated, 1);
    assert_eq!(tree_bytes(&out), before);
}

#[test]
fn config_change_invalidates_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cav");
    let mut cfg = small_config(2);
    generate(Extension::Synthcavity, &cfg, &out, Some(1)).unwrap();
    cfg.master_seed = 8;
    let s = generate(Extension::Synthcavity, &cfg, &out, Some(1)).unwrap();
    assert_eq!(s.generated, 2);
}

#[test]
fn synthcrack_writes_schedule_and_masks() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("crack");
    let cfg = small_config(3);
    generate(Extension::Synthcrack, &cfg, &out, Some(1)).unwrap();
    assert!(out.join("plan.json").is_file());
    for i in 0..3 {
        let dir = out.join(format!("{i:05}"));
        let masks = read_maskset(dir.join("masks")).unwrap().unwrap();
        assert!(masks.get(ClassId::Crack).is_some_and(|m| !m.is_empty()));
        let a = load_annotation(dir.join("annotation.json")).unwrap();
        assert_eq!(a.shapes_of(ClassId::Crack).count(), 2);
    }
}

#[test]
fn daclonsynth_on_toy_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let root = write_toy_dataset(&tmp.path().join("real"), 10, 128, 3);
    let out = tmp.path().join("dac");
    let mut cfg = small_config(8);
    cfg.dataset_root = Some(root);
    generate(Extension::Daclonsynth, &cfg, &out, Some(2)).unwrap();
    let plan: serde_json::Value = read_json(out.join("plan.json")).unwrap();
    let allocated: u64 = plan["plan"]["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["allocated"].as_u64().unwrap())
        .sum();
    assert_eq!(allocated, 8);
    // Spalling is present in every toy image, so it is never the under-represented class.
    let spalling = plan["plan"]["entries"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["class"] == "Spalling")
        .unwrap()["allocated"]
        .as_u64()
        .unwrap();
    assert_eq!(spalling, 0);
    for i in 0..8 {
        let dir = out.join(format!("{i:05}"));
        let a = load_annotation(dir.join("annotation.json")).unwrap();
        assert!(a.shapes.iter().any(|s| s.label != ClassId::Cavity), "sample {i} has a pasted shape");
    }
}

#[test]
fn daclonsynth_without_root_is_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let err = generate(Extension::Daclonsynth, &small_config(2), &tmp.path().join("d"), Some(1)).unwrap_err();
    assert!(err.is_data_error());
}

#[test]
fn preview_of_generated_sample() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cav");
    generate(Extension::Synthcavity, &small_config(1), &out, Some(1)).unwrap();
    let png = tmp.path().join("p.png");
    let legend = preview_sample(&out.join("00000"), &png).unwrap();
    assert!(png.is_file());
    let on_disk: serde_json::Value = read_json(legend_path(&png)).unwrap();
    assert_eq!(on_disk["entries"].as_array().unwrap().len(), legend.entries.len());
    let _: &Legend = &legend;
    assert!(legend.entries.iter().any(|e| e.class == ClassId::Cavity));

    fs::remove_dir_all(out.join("00000/masks")).unwrap();
    let err = preview_sample(&out.join("00000"), &png).unwrap_err();
    assert!(err.is_data_error());
}
