//! `synthforge` command-line interface.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 data error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use synthforge::config::{RunConfig, ENV_WORKERS};
use synthforge::crackgen::calibrate_crack_set;
use synthforge::dataset::discover;
use synthforge::evalmetrics::{evaluate, robustness_report, stats_table, MetricReport};
use synthforge::finecrack::{overlay, refine_image_with};
use synthforge::io::{load_image, read_json, save_gray, save_image, write_json};
use synthforge::perturb::{perturb_dataset, PerturbKind};
use synthforge::pipeline::{generate, plan_daclonsynth, Extension};
use synthforge::preview::{legend_path, preview_sample};
use synthforge::ClassId;

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "synthforge", version, about = "Synthetic concrete-defect dataset tooling")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: config, then all cores).
    #[arg(long, global = true, env = ENV_WORKERS)]
    workers: Option<usize>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Working resolution override.
    #[arg(long, global = true)]
    resolution: Option<u32>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset extension.
    Gen(GenArgs),
    /// Print the allocation plan (daclonsynth) or crack calibration (synthcrack).
    Plan(PlanArgs),
    /// Per-class statistics of an annotated dataset.
    Stats(StatsArgs),
    /// Apply image perturbations to a dataset.
    Perturb(PerturbArgs),
    /// Score predicted masks against ground truth.
    Evaluate(EvaluateArgs),
    /// Combine raw and perturbed evaluation reports into a robustness report.
    Report(ReportArgs),
    /// Refine coarse crack polygons into fine crack masks.
    Refine(RefineArgs),
    /// Render a colour-coded mask overlay for one sample.
    Preview(PreviewArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    extension: Extension,
    #[arg(long, short)]
    out: PathBuf,
    /// Number of samples (overrides the config for this extension).
    #[arg(long, short = 'n')]
    samples: Option<u64>,
    /// Real dataset root (daclonsynth).
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PlanArgs {
    extension: Extension,
    #[arg(long, short = 'n')]
    samples: Option<u64>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Write the plan as JSON here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    dataset: PathBuf,
    /// Also write the table as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PerturbArgs {
    dataset: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    /// `all` or a comma-separated list of kinds.
    #[arg(long)]
    kinds: Option<String>,
    #[arg(long)]
    severity: Option<u8>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// `all` or a comma-separated list of class names.
    #[arg(long, default_value = "all")]
    classes: String,
    /// Average each class only over images where it is present.
    #[arg(long)]
    present_only: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Report on unperturbed images.
    #[arg(long)]
    raw: PathBuf,
    /// Perturbed reports as `name=path` or `path` (name = file stem).
    #[arg(long, required = true, num_args = 1..)]
    perturbed: Vec<String>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RefineArgs {
    dataset: PathBuf,
    #[arg(long, short, default_value = "finecrack")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PreviewArgs {
    sample_dir: PathBuf,
    out: PathBuf,
}

/// An error with its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<synthforge::Error> for Failure {
    fn from(e: synthforge::Error) -> Self {
        let code = if e.is_data_error() { EXIT_DATA } else { EXIT_CONFIG };
        Failure { code, error: e.into() }
    }
}

fn config_error(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        error: e.into(),
    }
}

fn data_error(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_DATA,
        error: e.into(),
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let kind = if f.code == EXIT_DATA { "data" } else { "config" };
            eprintln!("error[{kind}]: {}", describe(&f.error));
            ExitCode::from(f.code)
        }
    }
}

/// The error and its causes, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut text = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !text.contains(&c) {
            text = format!("{text}: {c}");
        }
    }
    text
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(config_error)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(r) = cli.resolution {
        cfg.resolution = r;
    }
    Ok(cfg)
}

fn set_samples(cfg: &mut RunConfig, ext: Extension, n: u64) {
    match ext {
        Extension::Daclonsynth => cfg.daclonsynth.samples = n,
        Extension::Synthcrack => cfg.synthcrack.samples = n,
        Extension::Synthcavity => cfg.synthcavity.samples = n,
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = load_config(&cli)?;
    let workers = cfg.resolve_workers(cli.workers)?;
    // Global pool for commands that parallelise through rayon directly.
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(config_error)?;

    match cli.command {
        Command::Gen(a) => {
            if let Some(n) = a.samples {
                set_samples(&mut cfg, a.extension, n);
            }
            if a.dataset.is_some() {
                cfg.dataset_root = a.dataset;
            }
            cfg.validate()?;
            let s = generate(a.extension, &cfg, &a.out, Some(workers))?;
            log::info!("{}: {} generated, {} skipped, {} warnings", a.extension, s.generated, s.skipped, s.warnings);
            println!(
                "{}: {} samples generated, {} already complete, {} warnings -> {}",
                a.extension,
                s.generated,
                s.skipped,
                s.warnings,
                a.out.display()
            );
        }
        Command::Plan(a) => {
            if let Some(n) = a.samples {
                set_samples(&mut cfg, a.extension, n);
            }
            if a.dataset.is_some() {
                cfg.dataset_root = a.dataset;
            }
            cfg.validate()?;
            let value = match a.extension {
                Extension::Daclonsynth => serde_json::to_value(plan_daclonsynth(&cfg)?).map_err(data_error)?,
                Extension::Synthcrack => {
                    let b = cfg.synthcrack.budget(cfg.resolution);
                    let s = calibrate_crack_set(&b, cfg.resolution, cfg.resolution, cfg.master_seed)?;
                    serde_json::to_value(s).map_err(data_error)?
                }
                Extension::Synthcavity => {
                    return Err(config_error(anyhow::anyhow!("synthcavity has no plan; its profile lives in the config")))
                }
            };
            emit_json(&value, a.out.as_deref())?;
        }
        Command::Stats(a) => {
            let t = stats_table(&a.dataset)?;
            for w in &t.warnings {
                log::warn!("{w}");
            }
            print!("{}", t.to_text());
            if let Some(p) = a.json {
                write_json(&p, &t)?;
            }
        }
        Command::Perturb(a) => {
            let kinds_text = a.kinds.unwrap_or(cfg.perturb.kinds.clone());
            let kinds = PerturbKind::parse_list(&kinds_text)?;
            let severity = a.severity.unwrap_or(cfg.perturb.severity);
            let m = perturb_dataset(&a.dataset, &a.out, &kinds, severity, cfg.master_seed)?;
            for e in &m.errors {
                log::warn!("{e}");
            }
            println!(
                "{} perturbed images ({} kinds, severity {}), {} errors -> {}",
                m.entries.len(),
                kinds.len(),
                severity,
                m.errors.len(),
                a.out.display()
            );
            if m.entries.is_empty() && !m.errors.is_empty() {
                return Err(data_error(anyhow::anyhow!("every perturbation failed")));
            }
        }
        Command::Evaluate(a) => {
            let classes = parse_classes(&a.classes)?;
            let r = evaluate(&a.pred, &a.truth, &classes, a.present_only)?;
            print!("{}", r.to_text());
            if let Some(p) = a.out {
                write_json(&p, &r)?;
            }
        }
        Command::Report(a) => {
            let raw: MetricReport = read_json(&a.raw)?;
            let mut perturbed = Vec::new();
            for spec in &a.perturbed {
                let (name, path) = match spec.split_once('=') {
                    Some((n, p)) => (n.to_string(), PathBuf::from(p)),
                    None => {
                        let p = PathBuf::from(spec);
                        let n = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                        (n, p)
                    }
                };
                perturbed.push((name, read_json::<MetricReport>(&path)?));
            }
            let r = robustness_report(&raw, &perturbed)?;
            print!("{}", r.to_text());
            if let Some(p) = a.out {
                write_json(&p, &r)?;
            }
        }
        Command::Refine(a) => refine(&a.dataset, &a.out, &cfg)?,
        Command::Preview(a) => {
            let legend = preview_sample(&a.sample_dir, &a.out)?;
            println!(
                "{} classes -> {} (legend {})",
                legend.entries.len(),
                a.out.display(),
                legend_path(&a.out).display()
            );
        }
    }
    Ok(())
}

fn emit_json(value: &serde_json::Value, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(p) => write_json(p, value)?,
        None => println!("{}", serde_json::to_string_pretty(value).map_err(data_error)?),
    }
    Ok(())
}

fn parse_classes(s: &str) -> CliResult<Vec<ClassId>> {
    if s.trim() == "all" {
        return Ok(ClassId::foreground().collect());
    }
    s.split(',')
        .map(|c| c.trim().parse::<ClassId>().map_err(config_error))
        .collect()
}

fn refine(dataset: &Path, out: &Path, cfg: &RunConfig) -> CliResult<()> {
    let ds = discover(dataset)?;
    let mut entries = Vec::new();
    for item in &ds.items {
        let Some(image_path) = &item.image_path else {
            log::warn!("{}: no image found, skipped", item.id);
            continue;
        };
        let image = load_image(image_path)?;
        let r = refine_image_with(&image, &item.annotation, &cfg.finecrack)?;
        for w in &r.warnings {
            log::warn!("{}: {w}", item.id);
        }
        let mask_path = out.join(format!("{}.png", item.id));
        if let Some(parent) = mask_path.parent() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))
                .map_err(data_error)?;
        }
        let gray: Vec<u8> = r.mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
        save_gray(&gray, image.width(), image.height(), &mask_path)?;
        save_image(&overlay(&image, &r.mask), out.join(format!("{}_overlay.png", item.id)))?;
        entries.push(json!({
            "id": item.id,
            "mask": mask_path,
            "pixels": r.mask.count(),
            "warnings": r.warnings,
        }));
    }
    write_json(
        out.join("manifest.json"),
        &json!({ "formatVersion": "1", "images": entries.len(), "entries": entries }),
    )?;
    println!("refined {} images -> {}", entries.len(), out.display());
    Ok(())
}
