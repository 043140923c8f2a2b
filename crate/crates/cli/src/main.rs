//! `derain`: guided filtering, synthetic rain, training, deraining,
//! evaluation and the component ablation from the command line.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use derain::filter::{guided_filter_unclamped, FilterKind};
use derain::net::{
    derain, evaluate, loss_trace_csv, rainy_baseline, train, DerainModel, LossRecord, PipelineConfig, ABLATION_CASES,
};
use derain::nn::Checkpoint;
use derain::rain::{load_pairs, synth_pairs, write_pairs, PairedSample};
use derain::Image;

use config::RunConfig;

const DETAIL_HELP: &str = "\
The detail layer is the signed difference between the input and the written
filter output. It is stored as a 16-bit PNG with the mapping 0.5 + detail/2,
so mid-gray means zero and the file adds back onto the output exactly.";

#[derive(Parser)]
#[command(name = "derain", version, about = "Rain streak removal with the iWGIF and a small attention network")]
struct Cli {
    /// JSON run configuration; omitted sections use the toy defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides both the synthesis seed and the training seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Run on a single thread.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Output directory (default: output.dir from the config, else ./out).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter an image; writes <stem>_<algo>.png and optionally <stem>_detail.png.
    #[command(after_help = DETAIL_HELP)]
    Filter(FilterArgs),
    /// Write synthetic pairs to rainy/ and clean/.
    Synth(SynthArgs),
    /// Train a model; writes model.ckpt and loss.csv.
    Train,
    /// Restore one image; writes <stem>_derained.png.
    Derain(DerainArgs),
    /// Score a checkpoint on the test split; writes metrics.csv and rainy_baseline.csv.
    Eval(EvalArgs),
    /// Train and score the four component ablations; writes ablation.csv.
    Ablate,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Gif,
    Wgif,
    Iwgif,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    input: PathBuf,
    /// Guidance image (default: the input itself).
    #[arg(long)]
    guidance: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "iwgif")]
    algo: Algo,
    /// Also write the detail layer.
    #[arg(long)]
    detail: bool,
    #[arg(long)]
    zeta: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Test,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "train")]
    split: Split,
}

#[derive(Args)]
struct DerainArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Rainy test images (overrides data.test_rainy).
    #[arg(long, requires = "clean")]
    rainy: Option<PathBuf>,
    /// Clean test images (overrides data.test_clean).
    #[arg(long, requires = "rainy")]
    clean: Option<PathBuf>,
}

/// Exit status 2 for bad input, 1 for failures while doing the work.
enum Failure {
    Invalid(String),
    Runtime(String),
}

impl From<derain::Error> for Failure {
    fn from(e: derain::Error) -> Self {
        use derain::Error::*;
        match e {
            Io { .. } | Decode { .. } | OrphanFile(_) | Checkpoint(_) | NonFinite(_) => Failure::Runtime(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn load_config(path: Option<&Path>) -> Outcome<RunConfig> {
    let Some(path) = path else { return Ok(RunConfig::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn init_threads(deterministic: bool) -> Outcome {
    let cap = match std::env::var("DERAIN_THREADS") {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n >= 1)
                .ok_or_else(|| Failure::Invalid(format!("DERAIN_THREADS must be a positive integer, got '{v}'")))?,
        ),
        Err(_) => None,
    };
    let threads = if deterministic { Some(1) } else { cap };
    if let Some(n) = threads {
        // Only fails if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn require(path: &Path) -> Outcome {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!("{}: no such file or directory", path.display())))
    }
}

fn write_text(path: &Path, text: &str) -> Outcome {
    std::fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("image").to_string()
}

fn run(cli: Cli) -> Outcome {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.synth.seed = seed;
        cfg.train.seed = seed;
    }
    cfg.validate().map_err(Failure::Invalid)?;
    init_threads(cli.deterministic)?;
    let out = cli.out.clone().or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("out"));

    // Everything that can be checked without doing work is checked before the
    // output directory is touched.
    match &cli.command {
        Command::Filter(a) => {
            filter_params(&cfg, a).validate()?;
            require(&a.input)?;
            if let Some(g) = &a.guidance {
                require(g)?;
            }
        }
        Command::Derain(a) => {
            require(&a.input)?;
            require(&a.checkpoint)?;
        }
        Command::Eval(a) => {
            require(&a.checkpoint)?;
            for p in [&a.rainy, &a.clean].into_iter().flatten() {
                require(p)?;
            }
        }
        Command::Synth(_) | Command::Train | Command::Ablate => {}
    }
    if !matches!(cli.command, Command::Synth(_)) {
        for p in [&cfg.data.train_rainy, &cfg.data.train_clean, &cfg.data.test_rainy, &cfg.data.test_clean]
            .into_iter()
            .flatten()
        {
            require(p)?;
        }
    }
    std::fs::create_dir_all(&out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;

    match &cli.command {
        Command::Filter(a) => cmd_filter(&cfg, a, &out),
        Command::Synth(a) => cmd_synth(&cfg, a.split, &out),
        Command::Train => cmd_train(&cfg, &out),
        Command::Derain(a) => cmd_derain(&cfg, a, &out),
        Command::Eval(a) => cmd_eval(&cfg, a, &out),
        Command::Ablate => cmd_ablate(&cfg, &out),
    }
}

fn filter_params(cfg: &RunConfig, a: &FilterArgs) -> derain::filter::FilterParams {
    let mut p = cfg.filter_params();
    p.zeta = a.zeta.unwrap_or(p.zeta);
    p.lambda = a.lambda.unwrap_or(p.lambda);
    p.epsilon = a.epsilon.unwrap_or(p.epsilon);
    p.eta = a.eta.unwrap_or(p.eta);
    p
}

fn cmd_filter(cfg: &RunConfig, a: &FilterArgs, out: &Path) -> Outcome {
    let params = filter_params(cfg, a);
    let input = Image::read(&a.input)?;
    let guide = match &a.guidance {
        Some(p) => Image::read(p)?,
        None => input.clone(),
    };
    let (kind, name) = match a.algo {
        Algo::Gif => (FilterKind::Gif, "gif"),
        Algo::Wgif => (FilterKind::Wgif, "wgif"),
        Algo::Iwgif => (FilterKind::Iwgif, "iwgif"),
    };
    let base = guided_filter_unclamped(&input, &guide, &params, kind)?.clamped();
    let base_path = out.join(format!("{}_{name}.png", stem(&a.input)));
    base.write_png(&base_path)?;
    println!("{}", base_path.display());
    if a.detail {
        let written = base.quantized();
        let detail = input.zip_map(&written, |i, b| 0.5 + (i - b) / 2.0)?;
        let detail_path = out.join(format!("{}_detail.png", stem(&a.input)));
        detail.write_png16(&detail_path)?;
        println!("{}", detail_path.display());
    }
    Ok(())
}

fn synth_split(cfg: &RunConfig, split: Split) -> Outcome<Vec<PairedSample>> {
    let s = &cfg.synth;
    let (count, seed) = match split {
        Split::Train => (s.pairs, s.seed),
        Split::Test => (s.test_pairs, s.seed.wrapping_add(1)),
    };
    Ok(synth_pairs(count, s.width, s.height, &cfg.streak_params(), seed)?)
}

/// The configured directories for a split, or synthetic pairs if none are set.
fn dataset(cfg: &RunConfig, split: Split) -> Outcome<Vec<PairedSample>> {
    let dirs = match split {
        Split::Train => (&cfg.data.train_rainy, &cfg.data.train_clean),
        Split::Test => (&cfg.data.test_rainy, &cfg.data.test_clean),
    };
    match dirs {
        (Some(r), Some(c)) => Ok(load_pairs(r, c, &cfg.pairing().map_err(Failure::Invalid)?)?),
        _ => synth_split(cfg, split),
    }
}

fn cmd_synth(cfg: &RunConfig, split: Split, out: &Path) -> Outcome {
    let pairs = synth_split(cfg, split)?;
    write_pairs(out, &pairs)?;
    println!("{} pairs in {}", pairs.len(), out.display());
    Ok(())
}

fn progress(label: &str, total: u64) -> impl FnMut(&LossRecord) + '_ {
    let every = (total / 20).max(1);
    move |r: &LossRecord| {
        if (r.step + 1) % every == 0 || r.step + 1 == total {
            eprintln!("{label}step {}/{total} loss {:.5} lr {:.2e}", r.step + 1, r.loss, r.lr);
        }
    }
}

fn checked_pipeline(cfg: &RunConfig) -> Outcome<PipelineConfig> {
    Ok(cfg.pipeline()?)
}

fn cmd_train(cfg: &RunConfig, out: &Path) -> Outcome {
    let pipeline = checked_pipeline(cfg)?;
    let data = dataset(cfg, Split::Train)?;
    let outcome = train(&data, &pipeline, progress("", pipeline.train.total_steps))?;
    let ckpt = out.join("model.ckpt");
    outcome.to_checkpoint(&pipeline).save(&ckpt)?;
    let csv = out.join("loss.csv");
    write_text(&csv, &loss_trace_csv(&outcome.trace))?;
    println!("{}\n{}", ckpt.display(), csv.display());
    Ok(())
}

fn load_model(cfg: &RunConfig, path: &Path) -> Outcome<(DerainModel, PipelineConfig)> {
    let ck = Checkpoint::load(path)?;
    let model = DerainModel::from_checkpoint(&ck)?;
    let mut pipeline = checked_pipeline(cfg)?.with_checkpoint_meta(&ck)?;
    pipeline.arch = model.arch;
    Ok((model, pipeline))
}

fn cmd_derain(cfg: &RunConfig, a: &DerainArgs, out: &Path) -> Outcome {
    let (model, pipeline) = load_model(cfg, &a.checkpoint)?;
    let input = Image::read(&a.input)?;
    let restored = derain(&input, &model, &pipeline)?;
    let path = out.join(format!("{}_derained.png", stem(&a.input)));
    restored.write_png(&path)?;
    println!("{}", path.display());
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, a: &EvalArgs, out: &Path) -> Outcome {
    let (model, pipeline) = load_model(cfg, &a.checkpoint)?;
    let data = match (&a.rainy, &a.clean) {
        (Some(r), Some(c)) => load_pairs(r, c, &cfg.pairing().map_err(Failure::Invalid)?)?,
        _ => dataset(cfg, Split::Test)?,
    };
    let report = evaluate(&data, &model, &pipeline)?;
    let baseline = rainy_baseline(&data)?;
    write_text(&out.join("metrics.csv"), &report.to_csv())?;
    write_text(&out.join("rainy_baseline.csv"), &baseline.to_csv())?;
    println!("restored: PSNR {:.3} dB, SSIM {:.4}", report.mean_psnr_db, report.mean_ssim);
    println!("rainy:    PSNR {:.3} dB, SSIM {:.4}", baseline.mean_psnr_db, baseline.mean_ssim);
    Ok(())
}

fn cmd_ablate(cfg: &RunConfig, out: &Path) -> Outcome {
    let base = checked_pipeline(cfg)?;
    let train_set = dataset(cfg, Split::Train)?;
    let test_set = dataset(cfg, Split::Test)?;
    let yn = |b: bool| if b { "Y" } else { "N" };
    let mut csv = String::from("case,iwgif,feature_extract_net,derb,ssim,psnr_db\n");
    for case in &ABLATION_CASES {
        let pipeline = case.apply(&base);
        let label = format!("{} ", case.label);
        let outcome = train(&train_set, &pipeline, progress(&label, pipeline.train.total_steps))?;
        let report = evaluate(&test_set, &outcome.model, &pipeline)?;
        let row = format!(
            "{},{},{},{},{:.6},{:.6}",
            case.label,
            yn(case.use_iwgif),
            yn(case.use_feature_net),
            yn(case.use_derb),
            report.mean_ssim,
            report.mean_psnr_db
        );
        println!("{row}");
        let _ = writeln!(csv, "{row}");
    }
    write_text(&out.join("ablation.csv"), &csv)
}
