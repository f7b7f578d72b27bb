//! Resumable, order-independent sample generation on disk.
//!
//! Layout of an output tree:
//!
//! ```text
//! out/manifest.json            run summary (config hash, seed, tool version, samples)
//! out/plan.json                allocation or crack schedule (daclonsynth, synthcrack)
//! out/NNNNN/image.png
//! out/NNNNN/annotation.json
//! out/NNNNN/masks/<Class>.png
//! out/NNNNN/manifest.json      written last; lists every file with its SHA-256
//! ```
//!
//! A sample directory is built under a temporary name and renamed into place, so a
//! sample either exists completely or not at all. Reruns skip every sample whose
//! manifest verifies. Nothing time- or host-dependent is written, so identical inputs
//! give byte-identical trees regardless of worker count.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cavitygen::gen_synthcavity_sample;
use crate::compositor::{
    class_stats, daclonsynth_schedule, donors_for_plan, plan_allocation, target_yields, AllocationPlan,
    ClassStats, Yield,
};
use crate::config::RunConfig;
use crate::crackgen::{calibrate_crack_set, gen_synthcrack_sample, CrackBudget, CrackSchedule};
use crate::dataset::discover;
use crate::error::{Error, Result};
use crate::io::{annotation_to_json, read_json, save_image, save_maskset, write_json, write_text};
use crate::seed::SeedSpec;
use crate::types::{ClassId, GeneratedSample};
use crate::TOOL_VERSION;

pub const MANIFEST: &str = "manifest.json";
pub const PLAN: &str = "plan.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extension {
    Daclonsynth,
    Synthcrack,
    Synthcavity,
}

impl Extension {
    pub fn name(self) -> &'static str {
        match self {
            Extension::Daclonsynth => "daclonsynth",
            Extension::Synthcrack => "synthcrack",
            Extension::Synthcavity => "synthcavity",
        }
    }
}

impl fmt::Display for Extension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Extension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "daclonsynth" => Ok(Extension::Daclonsynth),
            "synthcrack" => Ok(Extension::Synthcrack),
            "synthcavity" => Ok(Extension::Synthcavity),
            _ => Err(Error::InvalidParam(format!("unknown extension {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SampleManifest {
    pub format_version: String,
    pub tool_version: String,
    pub extension: Extension,
    pub config_hash: String,
    pub master_seed: u64,
    pub index: u64,
    pub weathered: bool,
    pub image: String,
    pub annotation: String,
    pub masks: Vec<String>,
    pub warnings: Vec<String>,
    /// Relative path -> hex SHA-256 of every file above.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SampleEntry {
    pub index: u64,
    pub dir: String,
    pub weathered: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunManifest {
    pub format_version: String,
    pub tool_version: String,
    pub extension: Extension,
    pub config_hash: String,
    pub master_seed: u64,
    pub resolution: u32,
    pub samples: Vec<SampleEntry>,
}

/// What a run did, for logging; not written to disk.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub generated: usize,
    pub skipped: usize,
    pub warnings: usize,
}

pub fn sample_dir_name(index: u64) -> String {
    format!("{index:05}")
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// True when `dir` holds a manifest from this run whose files all exist with the
/// recorded hashes.
pub fn sample_is_complete(dir: &Path, config_hash: &str, master_seed: u64) -> bool {
    let Ok(m) = read_json::<SampleManifest>(dir.join(MANIFEST)) else {
        return false;
    };
    m.config_hash == config_hash
        && m.master_seed == master_seed
        && m.files
            .iter()
            .all(|(rel, hash)| sha256_file(&dir.join(rel)).is_ok_and(|h| &h == hash))
}

struct RunContext<'a> {
    out: &'a Path,
    extension: Extension,
    config_hash: String,
    master_seed: u64,
}

fn write_sample(ctx: &RunContext<'_>, index: u64, sample: &GeneratedSample) -> Result<SampleManifest> {
    let name = sample_dir_name(index);
    let tmp = ctx.out.join(format!(".tmp-{name}"));
    let dest = ctx.out.join(&name);
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;

    save_image(&sample.image, tmp.join("image.png"))?;
    write_text(tmp.join("annotation.json"), &annotation_to_json(&sample.annotation))?;
    let masks: Vec<String> = save_maskset(&sample.masks, tmp.join("masks"))?
        .into_iter()
        .map(|m| format!("masks/{m}"))
        .collect();
    let mut files = BTreeMap::new();
    for rel in ["image.png", "annotation.json"].into_iter().map(String::from).chain(masks.iter().cloned()) {
        files.insert(rel.clone(), sha256_file(&tmp.join(&rel))?);
    }
    let manifest = SampleManifest {
        format_version: "1".into(),
        tool_version: TOOL_VERSION.into(),
        extension: ctx.extension,
        config_hash: ctx.config_hash.clone(),
        master_seed: ctx.master_seed,
        index,
        weathered: sample.weathered,
        image: "image.png".into(),
        annotation: "annotation.json".into(),
        masks,
        warnings: sample.warnings.clone(),
        files,
    };
    write_json(tmp.join(MANIFEST), &manifest)?;
    if dest.exists() {
        fs::remove_dir_all(&dest).map_err(|e| Error::io(&dest, e))?;
    }
    fs::rename(&tmp, &dest).map_err(|e| Error::io(&dest, e))?;
    Ok(manifest)
}

/// Generates samples `0..n` with `make`, skipping complete ones, on a pool of
/// `workers` threads, then writes the run manifest.
fn run_samples<F>(ctx: &RunContext<'_>, n: u64, resolution: u32, workers: usize, make: F) -> Result<RunSummary>
where
    F: Fn(u64) -> Result<GeneratedSample> + Sync,
{
    fs::create_dir_all(ctx.out).map_err(|e| Error::io(ctx.out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParam(format!("cannot start {workers} workers: {e}")))?;
    let results: Vec<Result<(SampleManifest, bool)>> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let dir = ctx.out.join(sample_dir_name(i));
                if sample_is_complete(&dir, &ctx.config_hash, ctx.master_seed) {
                    log::debug!("sample {i} complete, skipping");
                    return Ok((read_json(dir.join(MANIFEST))?, false));
                }
                let sample = make(i)?;
                for w in &sample.warnings {
                    log::warn!("sample {i}: {w}");
                }
                Ok((write_sample(ctx, i, &sample)?, true))
            })
            .collect()
    });
    let mut summary = RunSummary::default();
    let mut entries = Vec::with_capacity(n as usize);
    for r in results {
        let (m, fresh) = r?;
        if fresh {
            summary.generated += 1;
        } else {
            summary.skipped += 1;
        }
        summary.warnings += m.warnings.len();
        entries.push(SampleEntry {
            index: m.index,
            dir: sample_dir_name(m.index),
            weathered: m.weathered,
            warnings: m.warnings,
        });
    }
    let manifest = RunManifest {
        format_version: "1".into(),
        tool_version: TOOL_VERSION.into(),
        extension: ctx.extension,
        config_hash: ctx.config_hash.clone(),
        master_seed: ctx.master_seed,
        resolution,
        samples: entries,
    };
    write_json(ctx.out.join(MANIFEST), &manifest)?;
    Ok(summary)
}

/// Allocation inputs and result, as written to `plan.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DaclonsynthPlan {
    pub format_version: String,
    pub stats: ClassStats,
    pub yields: BTreeMap<ClassId, Yield>,
    pub plan: AllocationPlan,
}

/// Class statistics, donor yields and allocation for a real dataset.
pub fn plan_daclonsynth(cfg: &RunConfig) -> Result<DaclonsynthPlan> {
    let root = cfg
        .dataset_root
        .as_ref()
        .ok_or_else(|| Error::io(PathBuf::from("<dataset_root>"), std::io::Error::new(std::io::ErrorKind::NotFound, "daclonsynth needs a dataset root")))?;
    let ds = discover(root)?;
    let stats = class_stats(&ds, cfg.resolution)?;
    let yields = target_yields(&ds, cfg.resolution)?;
    let plan = plan_allocation(&stats, cfg.daclonsynth.samples, &yields, cfg.daclonsynth.average_over)?;
    Ok(DaclonsynthPlan {
        format_version: "1".into(),
        stats,
        yields,
        plan,
    })
}

/// Runs one extension into `out`. `workers` overrides the configured count.
pub fn generate(extension: Extension, cfg: &RunConfig, out: &Path, workers: Option<usize>) -> Result<RunSummary> {
    cfg.validate()?;
    let workers = cfg.resolve_workers(workers)?;
    let ctx = RunContext {
        out,
        extension,
        config_hash: cfg.hash(),
        master_seed: cfg.master_seed,
    };
    let res = cfg.resolution;
    let seed = cfg.master_seed;
    match extension {
        Extension::Synthcavity => {
            let c = &cfg.synthcavity;
            run_samples(&ctx, c.samples, res, workers, |i| {
                gen_synthcavity_sample(SeedSpec::new(seed, i), i % 2 == 0, &c.profile, &c.ranges, res, res)
            })
        }
        Extension::Synthcrack => {
            let c = &cfg.synthcrack;
            let budget = c.budget(res);
            let schedule = crack_schedule(&budget, res, seed, workers)?;
            fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            write_json(out.join(PLAN), &schedule)?;
            run_samples(&ctx, c.samples, res, workers, |i| {
                gen_synthcrack_sample(SeedSpec::new(seed, i), &schedule.params[i as usize], i % 2 == 0, res, res)
            })
        }
        Extension::Daclonsynth => {
            let plan = plan_daclonsynth(cfg)?;
            let root = cfg.dataset_root.as_ref().expect("checked by plan_daclonsynth");
            let ds = discover(root)?;
            // Fails before any sample is written when a demanded class has no donors.
            let donors = donors_for_plan(&ds, &plan.plan, res)?;
            fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            write_json(out.join(PLAN), &plan)?;
            let schedule = daclonsynth_schedule(&plan.plan);
            run_samples(&ctx, schedule.len() as u64, res, workers, |i| {
                let (class, weathered) = schedule[i as usize];
                crate::compositor::gen_daclonsynth_sample(SeedSpec::new(seed, i), class, weathered, &donors[&class], res, res)
            })
        }
    }
}

fn crack_schedule(budget: &CrackBudget, res: u32, seed: u64, workers: usize) -> Result<CrackSchedule> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParam(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| calibrate_crack_set(budget, res, res, seed))
}
