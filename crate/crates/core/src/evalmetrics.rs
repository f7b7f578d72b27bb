//! Image-level multi-label scoring, robustness change reports and dataset statistics.
//!
//! Scores are computed per class and per image, then averaged over images; the mean row
//! averages the class scores. A metric whose denominator is zero is 1 when both masks
//! are empty and 0 otherwise, so an empty prediction of an absent class scores 1.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{discover, tally_dataset, ClassCounts};
use crate::error::{Error, Result};
use crate::io::{list_mask_files, load_mask};
use crate::types::{ClassId, LabelMask};

pub const REPORT_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn from_masks(pred: &LabelMask, truth: &LabelMask) -> Result<Self> {
        check_dims(pred, truth)?;
        let mut c = ConfusionCounts::default();
        for (&p, &t) in pred.bits().iter().zip(truth.bits()) {
            match (p, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn iou(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp + self.fn_, true)
    }

    /// Zero-denominator precision (nothing predicted) is 1 iff the truth is empty too.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp, self.tp + self.fn_ == 0)
    }

    /// Zero-denominator recall (empty truth) is 1 iff nothing was predicted either.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_, self.tp + self.fp == 0)
    }

    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_, true)
    }
}

fn ratio(num: u64, den: u64, degenerate_is_one: bool) -> f64 {
    if den == 0 {
        if degenerate_is_one {
            1.0
        } else {
            0.0
        }
    } else {
        num as f64 / den as f64
    }
}

fn check_dims(a: &LabelMask, b: &LabelMask) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            expected: b.dims(),
            found: a.dims(),
            context: format!("prediction vs truth for {}", b.class()),
        });
    }
    Ok(())
}

pub fn image_class_iou(pred: &LabelMask, truth: &LabelMask) -> Result<f64> {
    Ok(ConfusionCounts::from_masks(pred, truth)?.iou())
}

/// `(precision, recall, f1)`.
pub fn image_class_prf(pred: &LabelMask, truth: &LabelMask) -> Result<(f64, f64, f64)> {
    let c = ConfusionCounts::from_masks(pred, truth)?;
    Ok((c.precision(), c.recall(), c.f1()))
}

/// Scores in percent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub iou: f64,
    pub f1: f64,
    pub recall: f64,
    pub precision: f64,
}

impl Scores {
    fn from_counts(c: &ConfusionCounts) -> Self {
        Scores {
            iou: c.iou(),
            f1: c.f1(),
            recall: c.recall(),
            precision: c.precision(),
        }
    }

    fn add(&mut self, o: &Scores) {
        self.iou += o.iou;
        self.f1 += o.f1;
        self.recall += o.recall;
        self.precision += o.precision;
    }

    fn scaled(&self, k: f64) -> Scores {
        Scores {
            iou: self.iou * k,
            f1: self.f1 * k,
            recall: self.recall * k,
            precision: self.precision * k,
        }
    }

    fn mean<'a>(items: impl IntoIterator<Item = &'a Scores>) -> Scores {
        let mut acc = Scores::default();
        let mut n = 0usize;
        for s in items {
            acc.add(s);
            n += 1;
        }
        if n == 0 {
            acc
        } else {
            acc.scaled(1.0 / n as f64)
        }
    }
}

/// Relative change in percent; `None` when the raw value is zero.
pub fn relative_change(raw: f64, perturbed: f64) -> Option<f64> {
    (raw != 0.0).then(|| (perturbed - raw) / raw * 100.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Change {
    pub iou: Option<f64>,
    pub f1: Option<f64>,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
}

impl Change {
    pub fn between(raw: &Scores, pert: &Scores) -> Self {
        Change {
            iou: relative_change(raw.iou, pert.iou),
            f1: relative_change(raw.f1, pert.f1),
            recall: relative_change(raw.recall, pert.recall),
            precision: relative_change(raw.precision, pert.precision),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: ClassId,
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRow {
    pub name: String,
    pub mean: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricReport {
    pub format_version: String,
    pub images: usize,
    pub present_only: bool,
    pub classes: Vec<ClassRow>,
    pub mean: Scores,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub perturbations: Vec<PerturbationRow>,
    /// Class scores averaged uniformly over perturbation kinds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbed_classes: Option<Vec<ClassRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbed_mean: Option<Scores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub change: Option<Change>,
}

impl MetricReport {
    /// Builds a report from per-image confusion counts, `counts[image][class]`.
    pub fn from_counts(classes: &[ClassId], counts: &[Vec<ConfusionCounts>], present_only: bool) -> Self {
        let rows = classes
            .iter()
            .enumerate()
            .map(|(ci, &class)| {
                let per_image: Vec<Scores> = counts
                    .iter()
                    .map(|img| &img[ci])
                    .filter(|c| !present_only || c.tp + c.fn_ > 0)
                    .map(Scores::from_counts)
                    .collect();
                // A class present nowhere falls back to the union-zero convention.
                let scores = if per_image.is_empty() {
                    Scores { iou: 1.0, f1: 1.0, recall: 1.0, precision: 1.0 }
                } else {
                    Scores::mean(&per_image)
                };
                ClassRow { class, scores: scores.scaled(100.0) }
            })
            .collect::<Vec<_>>();
        let mean = Scores::mean(rows.iter().map(|r| &r.scores));
        MetricReport {
            format_version: REPORT_VERSION.into(),
            images: counts.len(),
            present_only,
            classes: rows,
            mean,
            perturbations: Vec::new(),
            perturbed_classes: None,
            perturbed_mean: None,
            change: None,
        }
    }

    pub fn class_set(&self) -> Vec<ClassId> {
        self.classes.iter().map(|r| r.class).collect()
    }

    /// Aligned text table in percent with two decimals.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let pert = self.perturbed_classes.as_ref();
        let _ = write!(s, "{:<14}{:>9}{:>9}{:>9}{:>10}", "class", "IoU", "F1", "Recall", "Precision");
        if pert.is_some() {
            let _ = write!(s, "{:>11}{:>10}", "Pert.IoU", "Pert.F1");
        }
        s.push('\n');
        let row = |s: &mut String, name: &str, v: &Scores, p: Option<&Scores>| {
            let _ = write!(s, "{:<14}{:>9.2}{:>9.2}{:>9.2}{:>10.2}", name, v.iou, v.f1, v.recall, v.precision);
            if let Some(p) = p {
                let _ = write!(s, "{:>11.2}{:>10.2}", p.iou, p.f1);
            }
            s.push('\n');
        };
        for (i, r) in self.classes.iter().enumerate() {
            row(&mut s, r.class.name(), &r.scores, pert.map(|p| &p[i].scores));
        }
        row(&mut s, "mean", &self.mean, self.perturbed_mean.as_ref());
        for p in &self.perturbations {
            row(&mut s, &p.name, &p.mean, None);
        }
        if let Some(c) = &self.change {
            let f = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.2}"));
            let _ = writeln!(
                s,
                "{:<14}{:>9}{:>9}{:>9}{:>10}",
                "change %",
                f(c.iou),
                f(c.f1),
                f(c.recall),
                f(c.precision)
            );
        }
        s
    }
}

/// Masks of one image: class -> mask file, plus the directory they came from.
fn mask_files(dir: &Path) -> Result<BTreeMap<ClassId, PathBuf>> {
    let sub = dir.join("masks");
    let source = if sub.is_dir() { sub } else { dir.to_path_buf() };
    Ok(list_mask_files(source)?.into_iter().collect())
}

/// Image ids of an evaluation directory: every subdirectory, sorted.
fn image_dirs(root: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if entry.path().is_dir() {
            ids.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    ids.sort();
    Ok(ids)
}

fn image_counts(pred_dir: &Path, truth_dir: &Path, classes: &[ClassId]) -> Result<Vec<ConfusionCounts>> {
    let pred = mask_files(pred_dir)?;
    let truth = mask_files(truth_dir)?;
    let mut dims = None;
    let mut out = Vec::with_capacity(classes.len());
    for &class in classes {
        let p = pred.get(&class).map(|f| load_mask(f, class)).transpose()?;
        let t = truth.get(&class).map(|f| load_mask(f, class)).transpose()?;
        for m in p.iter().chain(t.iter()) {
            match dims {
                None => dims = Some(m.dims()),
                Some(d) if d != m.dims() => {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: m.dims(),
                        context: format!("{} in {}", class, truth_dir.display()),
                    })
                }
                _ => {}
            }
        }
        let c = match (p, t) {
            (Some(p), Some(t)) => ConfusionCounts::from_masks(&p, &t)?,
            (Some(p), None) => ConfusionCounts { fp: p.count(), tn: p.bits().len() as u64 - p.count(), ..Default::default() },
            (None, Some(t)) => ConfusionCounts { fn_: t.count(), tn: t.bits().len() as u64 - t.count(), ..Default::default() },
            (None, None) => ConfusionCounts::default(),
        };
        out.push(c);
    }
    Ok(out)
}

/// Scores every image directory of `truth_dir` against the same-named directory of
/// `pred_dir`. Masks are read from `<id>/masks/` when present, else from `<id>/`.
pub fn evaluate(pred_dir: impl AsRef<Path>, truth_dir: impl AsRef<Path>, classes: &[ClassId], present_only: bool) -> Result<MetricReport> {
    let (pred_dir, truth_dir) = (pred_dir.as_ref(), truth_dir.as_ref());
    let ids = image_dirs(truth_dir)?;
    let missing: Vec<String> = ids.iter().filter(|id| !pred_dir.join(id).is_dir()).cloned().collect();
    if !missing.is_empty() {
        return Err(Error::MissingPredictions(missing));
    }
    let counts = ids
        .par_iter()
        .map(|id| image_counts(&pred_dir.join(id), &truth_dir.join(id), classes))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::from_counts(classes, &counts, present_only))
}

/// Adds perturbed scores averaged over `perturbed` and the relative change of the means.
pub fn robustness_report(raw: &MetricReport, perturbed: &[(String, MetricReport)]) -> Result<MetricReport> {
    let classes = raw.class_set();
    if perturbed.is_empty() {
        return Err(Error::InvalidParam("at least one perturbed report is required".into()));
    }
    if perturbed.iter().any(|(_, r)| r.class_set() != classes) {
        return Err(Error::ClassSetMismatch);
    }
    let pert_classes: Vec<ClassRow> = classes
        .iter()
        .enumerate()
        .map(|(i, &class)| ClassRow {
            class,
            scores: Scores::mean(perturbed.iter().map(|(_, r)| &r.classes[i].scores)),
        })
        .collect();
    let pert_mean = Scores::mean(perturbed.iter().map(|(_, r)| &r.mean));
    let mut out = raw.clone();
    out.perturbations = perturbed
        .iter()
        .map(|(name, r)| PerturbationRow { name: name.clone(), mean: r.mean })
        .collect();
    out.change = Some(Change::between(&raw.mean, &pert_mean));
    out.perturbed_classes = Some(pert_classes);
    out.perturbed_mean = Some(pert_mean);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsRow {
    pub class: ClassId,
    pub pixels: u64,
    pub shapes: u64,
    pub images: u64,
    pub shapes_per_image: Option<f64>,
    pub pixels_per_shape: Option<f64>,
    pub pixels_per_image: Option<f64>,
    pub shape_share: f64,
    pub pixel_share: f64,
}

impl StatsRow {
    /// Derived columns from raw counts; shares are filled in by [`StatsTable::from_counts`].
    pub fn from_counts(class: ClassId, pixels: u64, shapes: u64, images: u64) -> Self {
        let div = |a: u64, b: u64| (b > 0).then(|| a as f64 / b as f64);
        StatsRow {
            class,
            pixels,
            shapes,
            images,
            shapes_per_image: div(shapes, images),
            pixels_per_shape: div(pixels, shapes),
            pixels_per_image: div(pixels, images),
            shape_share: 0.0,
            pixel_share: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StatsTable {
    pub format_version: String,
    pub images: usize,
    pub rows: Vec<StatsRow>,
    pub warnings: Vec<String>,
}

impl StatsTable {
    pub fn from_counts(counts: &BTreeMap<ClassId, ClassCounts>, images: usize) -> Self {
        let total_px: u64 = counts.values().map(|c| c.pixels).sum();
        let total_sh: u64 = counts.values().map(|c| c.shapes).sum();
        let share = |a: u64, t: u64| if t == 0 { 0.0 } else { a as f64 / t as f64 * 100.0 };
        let mut rows: Vec<StatsRow> = ClassId::foreground()
            .chain(std::iter::once(ClassId::Background))
            .map(|class| {
                let c = counts.get(&class).copied().unwrap_or_default();
                let mut row = StatsRow::from_counts(class, c.pixels, c.shapes, c.images);
                row.shape_share = share(c.shapes, total_sh);
                row.pixel_share = share(c.pixels, total_px);
                row
            })
            .collect();
        // Background shapes exist only when annotated explicitly.
        if let Some(bg) = rows.last_mut() {
            if bg.shapes == 0 {
                bg.shapes_per_image = None;
                bg.pixels_per_shape = None;
            }
        }
        StatsTable {
            format_version: REPORT_VERSION.into(),
            images,
            rows,
            warnings: Vec::new(),
        }
    }

    pub fn row(&self, class: ClassId) -> Option<&StatsRow> {
        self.rows.iter().find(|r| r.class == class)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<14}{:>16}{:>10}{:>9}{:>13}{:>15}{:>15}{:>9}{:>10}",
            "class", "#pixels", "#shape", "#images", "#shape/image", "#pixels/shape", "#pixels/image", "%shape", "%pixels"
        );
        let opt2 = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.2}"));
        let opt0 = |v: Option<f64>| v.map_or(String::new(), |v| thousands(v.round() as u64));
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<14}{:>16}{:>10}{:>9}{:>13}{:>15}{:>15}{:>9.2}{:>10.2}",
                r.class.name(),
                thousands(r.pixels),
                thousands(r.shapes),
                thousands(r.images),
                opt2(r.shapes_per_image),
                opt0(r.pixels_per_shape),
                opt0(r.pixels_per_image),
                r.shape_share,
                r.pixel_share
            );
        }
        s
    }
}

/// `1234567` -> `"1,234,567"`.
pub fn thousands(v: u64) -> String {
    let digits = v.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// Statistics of a dataset at native resolution.
pub fn stats_table(dataset_dir: impl AsRef<Path>) -> Result<StatsTable> {
    let ds = discover(dataset_dir)?;
    let counts = tally_dataset(&ds, None)?;
    let mut table = StatsTable::from_counts(&counts, ds.items.len());
    table.warnings = ds.warnings;
    Ok(table)
}
