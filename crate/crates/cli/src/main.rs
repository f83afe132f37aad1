use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};

use anyhow::Context;
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use deepssim::adapters::{adapt_dataset, AdaptOptions, DatasetKind, ReferenceKind};
use deepssim::dataset::{load_manifest, EvalRecord};
use deepssim::eval::{evaluate_sampled, evaluate_with_scores, EvalReport, REPORT_CSV_HEADER};
use deepssim::robustness::{parse_values, robustness_bench, write_cases_csv, Transform};
use deepssim::{Activation, DeepSsim, GramMatrix, Image, SimilarityConfig, Variant, WeightContainer};

/// Exit codes: 0 success, 1 usage error, 2 I/O error, 3 validation error.
mod exit {
    pub const USAGE: u8 = 1;
    pub const IO: u8 = 2;
    pub const VALIDATION: u8 = 3;
}

#[derive(Parser)]
#[command(name = "deepssim", version, about = "Deep structural similarity image quality metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score one test image against a reference
    Score {
        reference: PathBuf,
        test: PathBuf,
        #[command(flatten)]
        metric: MetricArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Score every row of a manifest and report PLCC/SRCC/KRCC
    Eval {
        manifest: PathBuf,
        #[command(flatten)]
        metric: MetricArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Per-record scores CSV (default: <manifest>.scores.csv)
        #[arg(long)]
        scores_out: Option<PathBuf>,
        /// Also write the report as JSON to this path
        #[arg(long)]
        report_out: Option<PathBuf>,
        /// Evaluate on random subsets of this many records
        #[arg(long)]
        sample: Option<usize>,
        /// Number of random subsets drawn with --sample
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
    /// Convert a dataset in its published layout to a manifest
    Adapt {
        #[arg(long)]
        kind: DatasetKind,
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Reference column for super-resolution datasets
        #[arg(long, value_enum, default_value = "hr")]
        reference: ReferenceArg,
    },
    /// Score images against geometrically transformed copies of themselves
    Bench {
        images_dir: PathBuf,
        #[command(flatten)]
        metric: MetricArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Rotation angles in degrees, `start:stop:step` or `a,b,c`
        #[arg(long)]
        rotate: Option<String>,
        /// Horizontal translations in pixels
        #[arg(long)]
        translate: Option<String>,
        /// Scale factors
        #[arg(long)]
        scale: Option<String>,
        /// Horizontal shear factors
        #[arg(long)]
        shear: Option<String>,
        /// JPEG qualities scored as photometric baselines
        #[arg(long)]
        jpeg: Option<String>,
        /// Where to write the cases (CSV unless --output json)
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-emit a saved JSON report as plain text, CSV or JSON
    ExportReport {
        report: PathBuf,
        #[arg(long, value_enum, default_value = "plain")]
        output: OutputFormat,
    },
}

#[derive(Args, Clone)]
struct MetricArgs {
    /// Weight container; falls back to $DEEPSIM_WEIGHTS
    #[arg(long, env = "DEEPSIM_WEIGHTS")]
    weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "standard")]
    variant: VariantArg,
    /// Window side over the 512x512 Gram grid
    #[arg(long, default_value_t = 4)]
    window: usize,
    /// Step between windows
    #[arg(long, default_value_t = 4)]
    stride: usize,
    /// Stabilizing constant
    #[arg(long, default_value_t = 1e-8)]
    xi: f64,
    /// Divide Gram matrices by the number of spatial positions
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    normalize_gram: bool,
    /// Use conv5_1 before its ReLU
    #[arg(long)]
    pre_relu: bool,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Worker threads for batch scoring
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, value_enum, default_value = "plain")]
    output: OutputFormat,
    /// Seed for any random sampling
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Standard,
    Lite,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReferenceArg {
    Hr,
    Lr,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
    Plain,
}

/// An error paired with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<deepssim::Error> for Failure {
    fn from(e: deepssim::Error) -> Self {
        let code = if e.is_io() { exit::IO } else { exit::VALIDATION };
        Failure {
            code,
            error: e.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<deepssim::Error>() {
            Some(e) if e.is_io() => exit::IO,
            Some(_) => exit::VALIDATION,
            None if error.downcast_ref::<std::io::Error>().is_some() => exit::IO,
            None => exit::VALIDATION,
        };
        Failure { code, error }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: exit::USAGE,
        error: anyhow::anyhow!(msg.into()),
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: exit::IO,
        error: anyhow::Error::new(e).context(path.display().to_string()),
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Score {
            reference,
            test,
            metric,
            run,
        } => cmd_score(&reference, &test, &metric, &run),
        Command::Eval {
            manifest,
            metric,
            run,
            scores_out,
            report_out,
            sample,
            repeats,
        } => cmd_eval(&manifest, &metric, &run, scores_out, report_out, sample, repeats),
        Command::Adapt {
            kind,
            root,
            out,
            reference,
        } => cmd_adapt(kind, &root, &out, reference),
        Command::Bench {
            images_dir,
            metric,
            run,
            rotate,
            translate,
            scale,
            shear,
            jpeg,
            out,
        } => {
            let grid = build_grid(rotate, translate, scale, shear, jpeg)?;
            cmd_bench(&images_dir, &metric, &run, &grid, &out)
        }
        Command::ExportReport { report, output } => cmd_export_report(&report, output),
    }
}

impl MetricArgs {
    fn config(&self) -> CliResult<SimilarityConfig> {
        let cfg = SimilarityConfig {
            window: self.window,
            stride: self.stride,
            xi: self.xi,
            normalize_gram: self.normalize_gram,
            variant: match self.variant {
                VariantArg::Standard => Variant::Standard,
                VariantArg::Lite => Variant::Lite,
            },
            activation: if self.pre_relu {
                Activation::PreRelu
            } else {
                Activation::PostRelu
            },
        };
        cfg.validate(deepssim::backbone::FEATURE_CHANNELS)
            .map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }

    fn load_weights(&self) -> CliResult<WeightContainer> {
        let path = self
            .weights
            .as_ref()
            .ok_or_else(|| usage("no weights given: pass --weights or set DEEPSIM_WEIGHTS"))?;
        WeightContainer::load(path).map_err(|e| {
            let code = if e.is_io() { exit::IO } else { exit::VALIDATION };
            Failure {
                code,
                error: anyhow::Error::new(e).context(format!("loading weights {}", path.display())),
            }
        })
    }
}

impl RunArgs {
    fn init_threads(&self) -> CliResult<()> {
        if self.threads == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        // a second call in the same process is a no-op
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build_global();
        Ok(())
    }
}

fn cmd_score(reference: &Path, test: &Path, metric: &MetricArgs, run: &RunArgs) -> CliResult<()> {
    let cfg = metric.config()?;
    run.init_threads()?;
    let weights = metric.load_weights()?;
    let scorer = DeepSsim::new(&weights, cfg)?;
    let (x, y) = (Image::open(reference)?, Image::open(test)?);
    let q = scorer.score(&x, &y)?;
    match run.output {
        OutputFormat::Plain => println!("{q}"),
        OutputFormat::Csv => println!("reference,test,score\n{},{},{q}", reference.display(), test.display()),
        OutputFormat::Json => println!(
            "{}",
            serde_json::json!({
                "reference": reference,
                "test": test,
                "score": q.value(),
            })
        ),
    }
    Ok(())
}

/// Scores records, caching reference representations across rows.
fn record_metric<'a>(scorer: &'a DeepSsim<'a>) -> impl Fn(&EvalRecord) -> deepssim::Result<f64> + Sync + 'a {
    let cache: Mutex<HashMap<PathBuf, Arc<GramMatrix>>> = Mutex::new(HashMap::new());
    move |r: &EvalRecord| {
        let cached = cache.lock().expect("cache lock").get(&r.ref_path).cloned();
        let gx = match cached {
            Some(g) => g,
            None => {
                let g = Arc::new(scorer.representation(&Image::open(&r.ref_path)?)?);
                cache
                    .lock()
                    .expect("cache lock")
                    .insert(r.ref_path.clone(), Arc::clone(&g));
                g
            }
        };
        let gy = scorer.representation(&Image::open(&r.test_path)?)?;
        Ok(scorer.compare(&gx, &gy)?.value())
    }
}

fn emit_report(report: &EvalReport, output: OutputFormat) -> CliResult<()> {
    match output {
        OutputFormat::Plain => print!("{}", report.plain()),
        OutputFormat::Csv => println!("{REPORT_CSV_HEADER}\n{}", report.csv_row()),
        OutputFormat::Json => println!(
            "{}",
            serde_json::to_string_pretty(report).context("serializing report")?
        ),
    }
    Ok(())
}

fn cmd_eval(
    manifest: &Path,
    metric: &MetricArgs,
    run: &RunArgs,
    scores_out: Option<PathBuf>,
    report_out: Option<PathBuf>,
    sample: Option<usize>,
    repeats: usize,
) -> CliResult<()> {
    let cfg = metric.config()?;
    run.init_threads()?;
    let loaded = load_manifest(manifest)?;
    if loaded.skipped > 0 {
        eprintln!("warning: {} rows skipped (missing images)", loaded.skipped);
    }
    let records = loaded.manifest.into_eval_records()?;
    let weights = metric.load_weights()?;
    let scorer = DeepSsim::new(&weights, cfg)?;
    let score = record_metric(&scorer);

    if let Some(size) = sample {
        let sampled = evaluate_sampled(&score, &records, size, repeats, run.seed)?;
        let json = serde_json::to_string_pretty(&sampled).context("serializing report")?;
        if let Some(path) = &report_out {
            std::fs::write(path, &json).map_err(|e| io_failure(path, e))?;
        }
        match run.output {
            OutputFormat::Json => println!("{json}"),
            _ => {
                println!("{REPORT_CSV_HEADER}");
                for r in &sampled.samples {
                    println!("{}", r.csv_row());
                }
                let opt = |v: Option<f64>| v.map_or("n/a".into(), |v| format!("{v:.4}"));
                println!(
                    "# mean over {} samples of {}: PLCC (fit) {}, SRCC {} (std {})",
                    sampled.samples.len(),
                    size,
                    opt(sampled.plcc_fitted_mean),
                    opt(sampled.srcc_mean),
                    opt(sampled.srcc_std)
                );
            }
        }
        return Ok(());
    }

    let (report, scores) = evaluate_with_scores(&score, &records)?;
    let scores_path = scores_out.unwrap_or_else(|| {
        let mut p = manifest.as_os_str().to_owned();
        p.push(".scores.csv");
        PathBuf::from(p)
    });
    write_scores(&scores_path, &records, &scores)?;
    if let Some(path) = &report_out {
        let json = serde_json::to_string_pretty(&report).context("serializing report")?;
        std::fs::write(path, json).map_err(|e| io_failure(path, e))?;
    }
    emit_report(&report, run.output)
}

fn write_scores(path: &Path, records: &[EvalRecord], scores: &[f64]) -> CliResult<()> {
    let file = File::create(path).map_err(|e| io_failure(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut write = || -> csv::Result<()> {
        w.write_record(["ref_path", "test_path", "subjective", "score"])?;
        for (r, s) in records.iter().zip(scores) {
            w.write_record([
                r.ref_path.display().to_string(),
                r.test_path.display().to_string(),
                r.subjective.to_string(),
                format!("{s:.6}"),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    write().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn cmd_adapt(kind: DatasetKind, root: &Path, out: &Path, reference: ReferenceArg) -> CliResult<()> {
    let opts = AdaptOptions {
        reference: match reference {
            ReferenceArg::Hr => ReferenceKind::Hr,
            ReferenceArg::Lr => ReferenceKind::Lr,
        },
    };
    let summary = adapt_dataset(kind, root, out, opts)?;
    println!(
        "{}: wrote {} rows in {} groups to {} ({} skipped, published count {})",
        kind,
        summary.rows,
        summary.groups,
        out.display(),
        summary.skipped,
        kind.published_counts().1
    );
    Ok(())
}

fn build_grid(
    rotate: Option<String>,
    translate: Option<String>,
    scale: Option<String>,
    shear: Option<String>,
    jpeg: Option<String>,
) -> CliResult<Vec<Transform>> {
    let values = |spec: &Option<String>| -> CliResult<Vec<f64>> {
        spec.as_deref()
            .map(parse_values)
            .transpose()
            .map(Option::unwrap_or_default)
            .map_err(|e| usage(e.to_string()))
    };
    let mut grid = Vec::new();
    grid.extend(values(&rotate)?.into_iter().map(|degrees| Transform::Rotate { degrees }));
    grid.extend(values(&translate)?.into_iter().map(|dx| Transform::Translate { dx, dy: 0.0 }));
    grid.extend(values(&scale)?.into_iter().map(|factor| Transform::Scale { factor }));
    grid.extend(values(&shear)?.into_iter().map(|factor| Transform::Shear { factor }));
    for q in values(&jpeg)? {
        if q.fract() != 0.0 || !(1.0..=100.0).contains(&q) {
            return Err(usage(format!("JPEG quality {q} is not an integer in 1..=100")));
        }
        grid.push(Transform::Jpeg { quality: q as u8 });
    }
    if grid.is_empty() {
        return Err(usage("empty grid: pass at least one of --rotate/--translate/--scale/--shear/--jpeg"));
    }
    for t in &grid {
        t.validate().map_err(|e| usage(e.to_string()))?;
    }
    Ok(grid)
}

fn cmd_bench(images_dir: &Path, metric: &MetricArgs, run: &RunArgs, grid: &[Transform], out: &Path) -> CliResult<()> {
    let cfg = metric.config()?;
    run.init_threads()?;
    let weights = metric.load_weights()?;
    let scorer = DeepSsim::new(&weights, cfg)?;

    let mut paths: Vec<PathBuf> = std::fs::read_dir(images_dir)
        .map_err(|e| io_failure(images_dir, e))?
        .flatten()
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg" | "bmp"))
        })
        .collect();
    paths.sort();

    let mut images = Vec::new();
    for path in &paths {
        let img = Image::open(path)?;
        let name = path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
        if !img.meets_backbone_minimum() {
            log::warn!("skipping {name}: {}x{} is below the backbone minimum", img.width(), img.height());
            eprintln!("warning: skipping {name} ({}x{}, undersized)", img.width(), img.height());
            continue;
        }
        if let Some(e) = grid.iter().find_map(|t| t.apply(&img).err()) {
            eprintln!("warning: skipping {name}: {e}");
            continue;
        }
        images.push((name, img));
    }
    if images.is_empty() {
        return Err(Failure {
            code: exit::VALIDATION,
            error: anyhow::anyhow!("no usable images in {}", images_dir.display()),
        });
    }

    let cases = robustness_bench(&images, &scorer, grid)?;
    let file = File::create(out).map_err(|e| io_failure(out, e))?;
    if run.output == OutputFormat::Json {
        serde_json::to_writer_pretty(BufWriter::new(file), &cases).context("writing bench JSON")?;
    } else {
        write_cases_csv(&cases, BufWriter::new(file))?;
    }
    println!(
        "{} images x {} transforms -> {} rows written to {}",
        images.len(),
        grid.len(),
        cases.len(),
        out.display()
    );
    Ok(())
}

fn cmd_export_report(path: &Path, output: OutputFormat) -> CliResult<()> {
    let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let report: EvalReport = serde_json::from_str(&text)
        .with_context(|| format!("{} is not a saved evaluation report", path.display()))?;
    emit_report(&report, output)
}
