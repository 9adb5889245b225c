//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hybridaug_core::metrics::{t_test_one_sample, t_test_two_sample, SummaryStat, TTestError};
use hybridaug_core::phantom::PhantomConfig;
use hybridaug_core::sampler::{plan_offline, RealizeConfig, Strategy, TemplatePool, DEFAULT_BATCH_SIZE};
use hybridaug_core::synthesis::{EligibilityReport, EligibilityRow, QcConfig};
use hybridaug_core::tradaug::TradAugConfig;
use hybridaug_core::{ClassLabel, Manifest};
use serde::de::DeserializeOwned;

use crate::audit::{self, rejection_lines};
use crate::error::{Error, Result};
use crate::io::{self, load_manifest, manifest_root, read_text, resolve, write_jsonl, write_text, DiskImages};
use crate::serve::{serve, serve_tcp, ServeConfig};
use crate::{augment, evaluate, generate, offline, plot};

#[derive(Debug, Parser)]
#[command(name = "hybridaug", version, about = "Context-preserving cut-paste augmentation")]
pub struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// JSON object whose keys are long flag names; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "HYBRIDAUG_THREADS", value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: Option<u32>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a phantom corpus with masks and ground truth.
    GenPhantom(GenPhantomArgs),
    /// Eligibility table for a manifest or for recorded counts.
    Stats(StatsArgs),
    /// Extract donor and acceptor templates into a store.
    Extract(ExtractArgs),
    /// Offline plan table.
    Plan(PlanArgs),
    /// Materialize an offline hybrid dataset.
    SynthOffline(SynthOfflineArgs),
    /// Stream augmented batches.
    Serve(ServeArgs),
    /// Traditional augmentation of images.
    Augment(AugmentArgs),
    /// Evaluate a predictions CSV.
    Evaluate(EvaluateArgs),
    /// Two-tailed t-test from summary statistics.
    Ttest(TtestArgs),
    /// Plot loss curves as SVG.
    PlotLoss(PlotLossArgs),
}

#[derive(Debug, Args)]
pub struct GenPhantomArgs {
    #[arg(long, default_value_t = 100)]
    pub per_target: usize,
    #[arg(long, default_value_t = 500)]
    pub nt: usize,
    #[arg(long, default_value_t = 160)]
    pub image_size: usize,
    #[arg(long, default_value_t = 0.59)]
    pub nt_thoraxless_fraction: f64,
    #[arg(long, default_value_t = 0.05)]
    pub eccentric_fraction: f64,
    #[arg(long, default_value_t = 0.9)]
    pub eccentricity: f64,
    #[arg(long, default_value_t = 8.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 4)]
    pub frames_per_patient: usize,
}

#[derive(Debug, Args)]
pub struct QcArgs {
    /// QC settings as JSON.
    #[arg(long)]
    pub qc: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long, conflicts_with = "counts")]
    pub manifest: Option<PathBuf>,
    /// Recorded `total:eligible` pairs for the six classes in table order.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub counts: Option<Vec<String>>,
    /// Recorded overall `total:eligible`, for tables whose overall row is not the column sum.
    #[arg(long, requires = "counts")]
    pub overall: Option<String>,
    /// Ground-truth sidecar to compare verdicts against.
    #[arg(long, requires = "manifest")]
    pub ground_truth: Option<PathBuf>,
    #[command(flatten)]
    pub qc: QcArgs,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub qc: QcArgs,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Donor counts for the six classes in table order.
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    pub donors: Vec<u64>,
    /// Originals sampled per class in table order.
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    pub originals: Vec<u64>,
    #[arg(long, default_value_t = 0.9)]
    pub fraction: f64,
}

#[derive(Debug, Args)]
pub struct SynthOfflineArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Template store; extracted from the manifest when absent.
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long, default_value_t = 0.9)]
    pub fraction: f64,
    /// Originals sampled per class; defaults to every record.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub originals: Option<Vec<u64>>,
    #[command(flatten)]
    pub qc: QcArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long, default_value = "cut-paste-balanced")]
    pub strategy: Strategy,
    #[arg(long, default_value_t = 1)]
    pub epochs: u32,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,
    /// Output side length.
    #[arg(long, default_value_t = 80)]
    pub size: usize,
    /// Traditional augmentation settings as JSON.
    #[arg(long)]
    pub aug_config: Option<PathBuf>,
    /// Serve one TCP client at host:port.
    #[arg(long, conflicts_with = "sink")]
    pub listen: Option<String>,
    /// File or named pipe to write to instead of stdout.
    #[arg(long)]
    pub sink: Option<PathBuf>,
    #[command(flatten)]
    pub qc: QcArgs,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Print the default configuration as JSON and exit.
    #[arg(long)]
    pub dump_config: bool,
    #[arg(long)]
    pub aug_config: Option<PathBuf>,
    #[arg(long, conflicts_with = "inputs")]
    pub manifest: Option<PathBuf>,
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// CSV with header `id,true,pred`.
    pub predictions: PathBuf,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct TtestArgs {
    /// mean1 sd1 n1 mean2 sd2 n2
    #[arg(long, num_args = 6, value_names = ["MEAN1", "SD1", "N1", "MEAN2", "SD2", "N2"], allow_negative_numbers = true)]
    pub two_sample: Option<Vec<f64>>,
    /// mean sd n mu
    #[arg(long, num_args = 4, value_names = ["MEAN", "SD", "N", "MU"], allow_negative_numbers = true)]
    pub one_sample: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct PlotLossArgs {
    /// CSV with header `series,epoch,loss[,...]`.
    pub csv: PathBuf,
    /// SVG path; defaults to `<out>/loss.svg`, else stdout.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

/// Appends `--key value` for every config key whose flag is absent from `argv`.
pub fn merge_config(mut argv: Vec<String>, config: &serde_json::Value, path: &Path) -> Result<Vec<String>> {
    let obj = config
        .as_object()
        .ok_or_else(|| Error::data(path.display(), "config must be a JSON object"))?;
    for (key, value) in obj {
        let flag = format!("--{key}");
        let present = argv.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if present || key == "config" {
            continue;
        }
        let scalar = |v: &serde_json::Value| match v {
            serde_json::Value::String(s) => Ok(s.clone()),
            serde_json::Value::Number(n) => Ok(n.to_string()),
            _ => Err(Error::data(path.display(), format!("unsupported value for {key:?}"))),
        };
        match value {
            serde_json::Value::Bool(true) => argv.push(flag),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::Array(items) => {
                argv.push(flag);
                for item in items {
                    argv.push(scalar(item)?);
                }
            }
            other => {
                argv.push(flag);
                argv.push(scalar(other)?);
            }
        }
    }
    Ok(argv)
}

fn config_path(argv: &[String]) -> Option<PathBuf> {
    argv.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            argv.get(i + 1).map(PathBuf::from)
        } else {
            a.strip_prefix("--config=").map(PathBuf::from)
        }
    })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::data(path.display(), e))
}

fn qc_config(args: &QcArgs) -> Result<QcConfig> {
    let qc = match &args.qc {
        Some(p) => read_json(p)?,
        None => QcConfig::default(),
    };
    qc.validate().map_err(|e| Error::data("qc", e))?;
    Ok(qc)
}

fn tradaug_config(path: Option<&PathBuf>) -> Result<TradAugConfig> {
    let cfg = match path {
        Some(p) => read_json(p)?,
        None => TradAugConfig::default(),
    };
    cfg.validate().map_err(|e| Error::data("augmentation config", e))?;
    Ok(cfg)
}

fn six<T: Copy>(values: &[T], what: &str) -> Result<[T; 6]> {
    values
        .try_into()
        .map_err(|_| Error::usage(format!("--{what} needs 6 values (3VT,3VV,A4C,LVOT,ABDO,NT), got {}", values.len())))
}

fn pair(s: &str, what: &str) -> Result<(u64, u64)> {
    let bad = || Error::usage(format!("--{what} expects total:eligible, got {s:?}"));
    let (t, e) = s.split_once(':').ok_or_else(bad)?;
    Ok((t.trim().parse().map_err(|_| bad())?, e.trim().parse().map_err(|_| bad())?))
}

fn require_out(out: &Option<PathBuf>, sub: &str) -> Result<PathBuf> {
    out.clone().ok_or_else(|| Error::usage(format!("{sub} needs --out")))
}

fn put(w: &mut (dyn Write + Send), text: &str) -> Result<()> {
    w.write_all(text.as_bytes()).map_err(|e| Error::io(Path::new("<stdout>"), e))
}

fn load_pool(store: Option<&PathBuf>, manifest: &Manifest, root: &Path, qc: &QcConfig) -> Result<TemplatePool> {
    match store {
        Some(dir) => io::read_store(dir),
        None => Ok(audit::extract(manifest, root, qc)?.1),
    }
}

#[derive(serde::Deserialize)]
struct TruthLine {
    id: String,
    eligible: bool,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run_with(argv: Vec<String>, stdout: &mut (dyn Write + Send), stderr: &mut (dyn Write + Send)) -> i32 {
    let argv = match config_path(&argv) {
        Some(p) => match read_json::<serde_json::Value>(&p).and_then(|v| merge_config(argv, &v, &p)) {
            Ok(a) => a,
            Err(e) => {
                let _ = writeln!(stderr, "error: {e}");
                return e.exit_code();
            }
        },
        None => argv,
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        builder = builder.num_threads(n as usize);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "error: thread pool: {e}");
            return 3;
        }
    };
    match pool.install(|| execute(&cli, stdout, stderr)) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(argv: Vec<String>) -> i32 {
    let mut out = std::io::BufWriter::new(std::io::stdout());
    let code = run_with(argv, &mut out, &mut std::io::stderr());
    match out.flush() {
        Ok(()) => code,
        Err(_) => 3,
    }
}

fn execute(cli: &Cli, stdout: &mut (dyn Write + Send), stderr: &mut (dyn Write + Send)) -> Result<()> {
    let seed = cli.seed;
    let announce = |stderr: &mut (dyn Write + Send)| {
        let _ = writeln!(stderr, "seed={seed}");
    };
    match &cli.command {
        Command::GenPhantom(a) => {
            announce(stderr);
            let out = require_out(&cli.out, "gen-phantom")?;
            let cfg = PhantomConfig {
                image_size: a.image_size,
                nt_thoraxless_fraction: a.nt_thoraxless_fraction,
                eccentric_fraction: a.eccentric_fraction,
                eccentricity_when_eccentric: a.eccentricity,
                noise_level: a.noise,
                frames_per_patient: a.frames_per_patient,
                seed,
                ..PhantomConfig::with_counts(a.per_target, a.nt)
            };
            let records = generate::generate_corpus(&cfg, &out)?;
            let eligible = records.iter().filter(|r| r.truth.eligible).count();
            put(stdout, &format!("records={} eligible={eligible}\n", records.len()))
        }
        Command::Stats(a) => {
            let report = if let Some(counts) = &a.counts {
                let pairs = counts.iter().map(|c| pair(c, "counts")).collect::<Result<Vec<_>>>()?;
                let pairs = six(&pairs, "counts")?;
                let rows = ClassLabel::ALL
                    .into_iter()
                    .zip(pairs)
                    .map(|(label, (total, eligible))| EligibilityRow { label, total, eligible })
                    .collect();
                let mut report = EligibilityReport::from_rows(rows).map_err(|e| Error::data("--counts", e))?;
                if let Some(o) = &a.overall {
                    let (t, e) = pair(o, "overall")?;
                    report = report.with_overall(t, e).map_err(|e| Error::data("--overall", e))?;
                }
                report
            } else if let Some(mpath) = &a.manifest {
                let qc = qc_config(&a.qc)?;
                let manifest = load_manifest(mpath)?;
                let verdicts = audit::audit(&manifest, &manifest_root(mpath), &qc)?;
                if let Some(gt) = &a.ground_truth {
                    let text = read_text(gt)?;
                    let mut truth = std::collections::BTreeMap::new();
                    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                        let t: TruthLine = serde_json::from_str(line)
                            .map_err(|e| Error::data(format!("{} line {}", gt.display(), i + 1), e))?;
                        truth.insert(t.id, t.eligible);
                    }
                    let agree = verdicts
                        .iter()
                        .filter(|v| truth.get(&v.id) == Some(&v.eligible()))
                        .count();
                    let _ = writeln!(
                        stderr,
                        "ground-truth agreement {agree}/{} ({:.2}%)",
                        verdicts.len(),
                        100.0 * agree as f64 / verdicts.len().max(1) as f64
                    );
                }
                if let Some(out) = &cli.out {
                    write_jsonl(&out.join("rejections.jsonl"), &rejection_lines(&verdicts))?;
                }
                audit::report(&verdicts)
            } else {
                return Err(Error::usage("stats needs --manifest or --counts"));
            };
            let tsv = report.to_string();
            if let Some(out) = &cli.out {
                write_text(&out.join("eligibility.tsv"), &tsv)?;
            }
            put(stdout, &tsv)
        }
        Command::Extract(a) => {
            let out = require_out(&cli.out, "extract")?;
            let qc = qc_config(&a.qc)?;
            let manifest = load_manifest(&a.manifest)?;
            let (verdicts, pool) = audit::extract(&manifest, &manifest_root(&a.manifest), &qc)?;
            io::write_store(&out, &pool.donors, &pool.acceptors)?;
            write_jsonl(&out.join("rejections.jsonl"), &rejection_lines(&verdicts))?;
            let tsv = audit::report(&verdicts).to_string();
            write_text(&out.join("eligibility.tsv"), &tsv)?;
            put(stdout, &tsv)
        }
        Command::Plan(a) => {
            let donors = six(&a.donors, "donors")?;
            let originals = six(&a.originals, "originals")?;
            let rows: Vec<_> = ClassLabel::ALL
                .into_iter()
                .map(|l| (l, donors[l.index()], originals[l.index()]))
                .collect();
            let plan = plan_offline(&rows, a.fraction).map_err(|e| Error::data("plan", e))?;
            let tsv = plan.to_string();
            if let Some(out) = &cli.out {
                write_text(&out.join("plan.tsv"), &tsv)?;
            }
            put(stdout, &tsv)
        }
        Command::SynthOffline(a) => {
            announce(stderr);
            let out = require_out(&cli.out, "synth-offline")?;
            let qc = qc_config(&a.qc)?;
            let manifest = load_manifest(&a.manifest)?;
            let root = manifest_root(&a.manifest);
            let pool = load_pool(a.store.as_ref(), &manifest, &root, &qc)?;
            let originals = a.originals.as_deref().map(|o| six(o, "originals")).transpose()?;
            let result = offline::synth_offline(&pool, &manifest, &root, a.fraction, originals.as_ref(), seed, &out)?;
            put(stdout, &result.plan.to_string())
        }
        Command::Serve(a) => {
            announce(stderr);
            let qc = qc_config(&a.qc)?;
            let manifest = load_manifest(&a.manifest)?;
            let root = manifest_root(&a.manifest);
            let pool = load_pool(a.store.as_ref(), &manifest, &root, &qc)?;
            let images = DiskImages::new(&manifest, &root);
            let cfg = ServeConfig {
                strategy: a.strategy,
                epochs: a.epochs,
                batch_size: a.batch_size,
                realize: RealizeConfig {
                    seed,
                    output_width: a.size,
                    output_height: a.size,
                    tradaug: tradaug_config(a.aug_config.as_ref())?,
                },
            };
            let stats = if let Some(addr) = &a.listen {
                serve_tcp(addr, &manifest, &pool, &images, &cfg, |local| {
                    let _ = writeln!(stderr, "listening on {local}");
                    let _ = stderr.flush();
                })?
            } else if let Some(path) = &a.sink {
                let file = std::fs::OpenOptions::new()
                    .write(true)
                    .create(true)
                    .truncate(true)
                    .open(path)
                    .map_err(|e| Error::io(path, e))?;
                let mut w = std::io::BufWriter::new(file);
                serve(&manifest, &pool, &images, &cfg, &mut w, &path.display().to_string())?
            } else {
                serve(&manifest, &pool, &images, &cfg, stdout, "<stdout>")?
            };
            let _ = writeln!(
                stderr,
                "frames={} images={} bytes={}",
                stats.frames, stats.images, stats.bytes
            );
            Ok(())
        }
        Command::Augment(a) => {
            if a.dump_config {
                let json = serde_json::to_string_pretty(&TradAugConfig::default()).map_err(|e| Error::data("config", e))?;
                return put(stdout, &(json + "\n"));
            }
            announce(stderr);
            let out = require_out(&cli.out, "augment")?;
            let cfg = tradaug_config(a.aug_config.as_ref())?;
            let inputs: Vec<(String, PathBuf)> = if let Some(mpath) = &a.manifest {
                let manifest = load_manifest(mpath)?;
                let root = manifest_root(mpath);
                manifest
                    .records()
                    .iter()
                    .map(|r| (r.id.clone(), resolve(&root, &r.path)))
                    .collect()
            } else if !a.inputs.is_empty() {
                a.inputs
                    .iter()
                    .map(|p| {
                        let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                        (id, p.clone())
                    })
                    .collect()
            } else {
                return Err(Error::usage("augment needs --manifest or input images"));
            };
            let n = augment::augment_files(&inputs, &cfg, seed, &out)?;
            put(stdout, &format!("augmented={n}\n"))
        }
        Command::Evaluate(a) => {
            let preds = evaluate::load_predictions(&a.predictions)?;
            let report = evaluate::evaluate(&preds, &a.predictions)?;
            if let Some(out) = &cli.out {
                evaluate::write_report(out, &report)?;
            }
            put(stdout, &report.to_string())
        }
        Command::Ttest(a) => {
            let count = |v: f64| -> Result<u32> {
                if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                    Ok(v as u32)
                } else {
                    Err(Error::usage(format!("replicate count must be a non-negative integer, got {v}")))
                }
            };
            let result = if let Some(v) = &a.two_sample {
                t_test_two_sample(&SummaryStat::new(v[0], v[1], count(v[2])?), &SummaryStat::new(v[3], v[4], count(v[5])?))
            } else if let Some(v) = &a.one_sample {
                t_test_one_sample(&SummaryStat::new(v[0], v[1], count(v[2])?), v[3])
            } else {
                return Err(Error::usage("ttest needs --two-sample or --one-sample"));
            };
            let p = match result {
                Ok(r) => {
                    let _ = writeln!(stderr, "t={:.4} df={}", r.t, r.df);
                    r.p
                }
                Err(e @ TTestError::ZeroVariance { .. }) => {
                    let _ = writeln!(stderr, "warning: {e}");
                    e.degenerate_p().unwrap_or(f64::NAN)
                }
                Err(e) => return Err(Error::data("ttest", e)),
            };
            put(stdout, &format!("p={p:.4}\n"))
        }
        Command::PlotLoss(a) => {
            let series = plot::parse_loss_csv(&read_text(&a.csv)?, &a.csv)?;
            let svg = plot::render_svg(&series);
            let target = a.svg.clone().or_else(|| cli.out.as_ref().map(|o| o.join("loss.svg")));
            match target {
                Some(p) => write_text(&p, &svg),
                None => put(stdout, &svg),
            }
        }
    }
}
