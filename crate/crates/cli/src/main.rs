use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use spdtraj::align::LocalKernel;
use spdtraj::fusion::FusionStrategy;
use spdtraj::tensorio::SynthParams;
use spdtraj::{Error, ErrorClass, Result};
use spdtraj_cli::config::{AlignmentMethod, Mode, RunConfig, StaticScoring};

#[derive(Parser)]
#[command(name = "spdtraj", version, about = "Covariance descriptors and SPD trajectories: kernels, SVMs, fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labelled dataset with a manifest.
    Synth(SynthArgs),
    /// Compute covariance descriptors for every sample and channel.
    Cov(RunArgs),
    /// Cross-validate and train on peak-frame descriptors.
    TrainStatic(RunArgs),
    /// Cross-validate and train on descriptor trajectories.
    TrainDynamic(RunArgs),
    /// Predict labels with a trained model bundle.
    Predict(PredictArgs),
    /// Combine eval reports into a confusion matrix and summary.
    Report(ReportArgs),
    /// Export one channel's Gram matrix (or DTW proximity matrix) as CSV.
    Gram(GramArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 20)]
    samples_per_class: usize,
    #[arg(long, default_value_t = 8)]
    m: usize,
    #[arg(long, default_value_t = 7)]
    w: usize,
    #[arg(long, default_value_t = 7)]
    h: usize,
    #[arg(long, default_value_t = 15)]
    frames: usize,
    #[arg(long, default_value_t = 5.0)]
    separation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the four region masks.
    #[arg(long)]
    with_masks: bool,
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

/// Flags that override the JSON config.
#[derive(Args, Default)]
struct Overrides {
    /// JSON run configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// gak | dtw_ppf
    #[arg(long, value_parser = parse_enum::<AlignmentMethod>)]
    alignment: Option<AlignmentMethod>,
    #[arg(long, value_delimiter = ',')]
    gamma_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    c_grid: Option<Vec<f64>>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    l_target: Option<usize>,
    /// late_product | late_weighted_sum | feature_concat | kernel_weighted_sum
    #[arg(long, value_parser = parse_enum::<FusionStrategy>)]
    fusion: Option<FusionStrategy>,
    /// Comma-separated channel ids; `all` means global plus every region.
    #[arg(long, value_delimiter = ',')]
    channels: Option<Vec<String>>,
    #[arg(long)]
    beta_step: Option<f64>,
    /// Fixed comma-separated fusion weights, one per channel.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    inner_folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// per_frame | video_mean
    #[arg(long, value_parser = parse_enum::<StaticScoring>)]
    static_scoring: Option<StaticScoring>,
    #[arg(long)]
    peak_frames: Option<usize>,
    /// rbf | ratio
    #[arg(long, value_parser = parse_enum::<LocalKernel>)]
    gak_local: Option<LocalKernel>,
    #[arg(long)]
    gak_normalize: bool,
    /// Record wall-clock time in the report.
    #[arg(long)]
    timing: bool,
}

macro_rules! set {
    ($cfg:ident, $o:ident, $($f:ident),*) => {
        $(if let Some(v) = $o.$f.clone() { $cfg.$f = v; })*
    };
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let o = self;
        set!(c, o, alignment, gamma_grid, c_grid, epsilon, l_target, fusion, channels, beta_step, folds, inner_folds, seed, static_scoring, peak_frames, gak_local);
        if o.weights.is_some() {
            c.weights = o.weights.clone();
        }
        if o.manifest.is_some() {
            c.manifest = o.manifest.clone();
        }
        if o.out.is_some() {
            c.out = o.out.clone();
        }
        c.gak_normalize |= o.gak_normalize;
        c.timing |= o.timing;
        Ok(c)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    o: Overrides,
}

#[derive(Args)]
struct PredictArgs {
    /// Directory written by a train command.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Write predictions JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Eval report files (report.json from train commands).
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Confusion matrix CSV output.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct GramArgs {
    #[command(flatten)]
    o: Overrides,
    /// static | dynamic
    #[arg(long, value_parser = parse_enum::<Mode>, default_value = "static")]
    mode: Mode,
    #[arg(long, default_value = "global")]
    channel: String,
    #[arg(long)]
    gamma: Option<f64>,
}

fn required(v: Option<PathBuf>, name: &str) -> Result<PathBuf> {
    v.ok_or_else(|| Error::Validation(format!("--{name} is required (flag or config)")))
}

fn train(o: &Overrides, mode: Mode) -> Result<()> {
    let mut c = o.resolve()?;
    c.mode = mode;
    let manifest = required(c.manifest.clone(), "manifest")?;
    let out = required(c.out.clone(), "out")?;
    let report = spdtraj_cli::cmd_train(&c, &manifest, &out)?;
    println!("overall accuracy: {:.2}%", 100.0 * report.overall_accuracy);
    println!("report: {}", out.join("report.json").display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => {
            let params = SynthParams {
                classes: a.classes,
                samples_per_class: a.samples_per_class,
                m: a.m,
                w: a.w,
                h: a.h,
                frames: a.frames,
                separation: a.separation,
                seed: a.seed,
                with_masks: a.with_masks,
            };
            let manifest = spdtraj_cli::cmd_synth(&params, &a.out)?;
            println!("wrote {} samples to {}", manifest.entries.len(), a.out.display());
        }
        Command::Cov(a) => {
            let c = a.o.resolve()?;
            let manifest = required(c.manifest.clone(), "manifest")?;
            let out = required(c.out.clone(), "out")?;
            let files = spdtraj_cli::cmd_cov(&manifest, &out, &c)?;
            println!("wrote {} descriptor files to {}", files.len(), out.display());
        }
        Command::TrainStatic(a) => train(&a.o, Mode::Static)?,
        Command::TrainDynamic(a) => train(&a.o, Mode::Dynamic)?,
        Command::Predict(a) => {
            let p = spdtraj_cli::cmd_predict(&a.model, &a.manifest)?;
            let text = spdtraj_cli::write_predictions(a.out.as_deref(), &p)?;
            if a.out.is_none() {
                print!("{text}");
            }
        }
        Command::Report(a) => print!("{}", spdtraj_cli::cmd_report(&a.files, a.csv.as_deref())?),
        Command::Gram(a) => {
            let mut c = a.o.resolve()?;
            c.mode = a.mode;
            let manifest = required(c.manifest.clone(), "manifest")?;
            let out = required(c.out.clone(), "out")?;
            if let Some(psd) = spdtraj_cli::cmd_gram(&c, &manifest, &a.channel, a.gamma, &out)? {
                println!("min eigenvalue {:e}, max |eigenvalue| {:e}, psd: {}", psd.min_eig, psd.max_abs_eig, psd.passed);
            }
        }
    }
    Ok(())
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("SPDTRAJ_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Validation(format!("SPDTRAJ_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Validation => 2,
                ErrorClass::Numeric => 3,
                ErrorClass::Io => 4,
            })
        }
    }
}
