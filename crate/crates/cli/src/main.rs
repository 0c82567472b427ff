use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cwmi::bench::{ratios, time_decompose_and_loss};
use cwmi::harness::{generate, optimize_logits, AdamConfig, SyntheticKind, SyntheticSpec, TrainConfig};
use cwmi::io::{normalize_for_display, read_matrix, write_pgm, write_tensor, TensorData};
use cwmi::loss::{finite_difference_check, CwmiLoss, LossConfig, LossVariant, Stencil};
use cwmi::metrics::{evaluate, BinaryMask};
use cwmi::pyramid::{PyramidConfig, PyramidMode, SteerablePyramid};
use cwmi::{CwmiError, Result};
use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use serde::Serialize;
use serde_json::{json, Value};

/// Gradient checks fail above this relative error.
const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "cwmi", version, about = "Complex wavelet mutual information loss tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose an image and write every subband and residue.
    Decompose(DecomposeArgs),
    /// Evaluate a loss between a label and a prediction.
    Loss(LossArgs),
    /// Compare the analytic loss gradient with finite differences.
    Gradcheck(GradcheckArgs),
    /// Segmentation metrics between a label mask and a probability map.
    Metrics(MetricsArgs),
    /// Optimize free logits against a synthetic label.
    Traindemo(TraindemoArgs),
    /// Time decomposition plus loss evaluation across image sizes.
    Bench(BenchArgs),
}

#[derive(Args)]
struct PyramidArgs {
    #[arg(long, default_value_t = 4)]
    levels: usize,
    #[arg(long, default_value_t = 4)]
    orients: usize,
}

#[derive(Args)]
struct LossOptions {
    #[arg(long, default_value = "cwmi")]
    variant: LossVariant,
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    /// Log-determinant regularizer.
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    /// Prediction-covariance regularizer.
    #[arg(long, default_value_t = 1e-5)]
    inverse_epsilon: f64,
    #[command(flatten)]
    pyramid: PyramidArgs,
}

impl LossOptions {
    fn config(&self) -> Result<LossConfig<f64>> {
        let cfg = LossConfig {
            levels: self.pyramid.levels,
            orientations: self.pyramid.orients,
            lambda: self.lambda,
            epsilon: self.epsilon,
            inverse_epsilon: self.inverse_epsilon,
            variant: self.variant,
            ..LossConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct DecomposeArgs {
    /// PGM or CWTN image.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    pyramid: PyramidArgs,
    #[arg(long, default_value = "complex")]
    mode: PyramidMode,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct LossArgs {
    #[arg(long)]
    label: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[command(flatten)]
    options: LossOptions,
    /// Write the gradient with respect to the prediction as a CWTN file.
    #[arg(long)]
    grad: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[command(flatten)]
    options: LossOptions,
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    probes: usize,
    #[arg(long, default_value_t = 1e-4)]
    step: f64,
}

#[derive(Args)]
struct MetricsArgs {
    /// Binary mask (PGM or CWTN).
    #[arg(long)]
    label: PathBuf,
    /// Probability map (PGM or CWTN).
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Args)]
struct TraindemoArgs {
    #[arg(long, default_value = "cells")]
    kind: SyntheticKind,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[command(flatten)]
    options: LossOptions,
    #[arg(long, default_value_t = 500)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    eval_every: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    /// Receives history.jsonl and prediction.pgm.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "128,256,512")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[command(flatten)]
    options: LossOptions,
}

/// Serializes through `Value` so object keys come out sorted.
fn json_line<T: Serialize>(value: &T) -> Result<String> {
    let v: Value = serde_json::to_value(value).map_err(|e| CwmiError::Format(e.to_string()))?;
    Ok(v.to_string())
}

fn emit<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", json_line(value)?);
    Ok(())
}

fn min_max_normalize(values: &Array2<f64>) -> Array2<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        values.mapv(|v| (v - lo) / (hi - lo))
    } else {
        values.mapv(|_| 0.0)
    }
}

fn write_real(dir: &Path, name: &str, values: &Array2<f64>, files: &mut Vec<String>) -> Result<()> {
    write_tensor(dir.join(format!("{name}.cwtn")), &TensorData::from(values.clone()))?;
    write_pgm(dir.join(format!("{name}.pgm")), &min_max_normalize(values), 255)?;
    files.push(name.to_string());
    Ok(())
}

fn decompose(args: &DecomposeArgs) -> Result<ExitCode> {
    let image = read_matrix(&args.input)?;
    let (h, w) = image.dim();
    let cfg = PyramidConfig::new(args.pyramid.levels, args.pyramid.orients, args.mode)?;
    let pyramid = SteerablePyramid::<f64>::new(h, w, &cfg)?;
    let d = pyramid.decompose(&image)?;
    fs::create_dir_all(&args.out_dir)?;
    let mut files = Vec::new();
    write_real(&args.out_dir, "high_residue", &d.high_residue, &mut files)?;
    for stack in &d.bands {
        for (k, band) in stack.data.axis_iter(Axis(0)).enumerate() {
            let name = format!("band_l{}_o{}", stack.level, k + 1);
            let tensor = match args.mode {
                PyramidMode::Complex => TensorData::Complex(band.to_owned().into_dyn()),
                PyramidMode::Real => TensorData::from(band.mapv(|c| c.re)),
            };
            write_tensor(args.out_dir.join(format!("{name}.cwtn")), &tensor)?;
            let magnitude = normalize_for_display(&band.mapv(|c| c.norm()));
            write_pgm(args.out_dir.join(format!("{name}.pgm")), &magnitude, 255)?;
            files.push(name);
        }
    }
    write_real(&args.out_dir, "low_residue", &d.low_residue, &mut files)?;
    emit(&json!({
        "levels": cfg.levels,
        "orientations": cfg.orientations,
        "mode": cfg.mode,
        "height": h,
        "width": w,
        "subbands": files.len(),
        "files": files,
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn loss(args: &LossArgs) -> Result<ExitCode> {
    let label = read_matrix(&args.label)?;
    let pred = read_matrix(&args.pred)?;
    let cfg = args.options.config()?;
    let (h, w) = label.dim();
    let out = CwmiLoss::new(h, w, cfg)?.evaluate(&label, &pred, args.grad.is_some())?;
    if let (Some(path), Some(g)) = (&args.grad, &out.gradient) {
        write_tensor(path, &TensorData::from(g.clone()))?;
    }
    emit(&json!({
        "variant": cfg.variant,
        "total": out.total,
        "ce_term": out.ce_term,
        "per_level": out.per_level,
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(args: &GradcheckArgs) -> Result<ExitCode> {
    let cfg = args.options.config()?;
    let spec = SyntheticSpec::new(SyntheticKind::Cells, args.size, 0.0, args.seed);
    let (_, label) = generate::<f64>(&spec, cfg.levels)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
    let pred = Array2::from_shape_fn((args.size, args.size), |_| 0.05 + 0.9 * rng.random::<f64>());
    let report = finite_difference_check(&label.to_values(), &pred, &cfg, args.step, args.probes, Stencil::FourthOrder, args.seed)?;
    let passed = report.passes(GRADCHECK_TOLERANCE);
    emit(&json!({
        "variant": cfg.variant,
        "max_relative_error": report.max_relative_error,
        "mean_relative_error": report.mean_relative_error,
        "checked": report.checked,
        "skipped": report.skipped,
        "tolerance": GRADCHECK_TOLERANCE,
        "passed": passed,
    }))?;
    Ok(if passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn metrics(args: &MetricsArgs) -> Result<ExitCode> {
    let label = BinaryMask::from_values(&read_matrix(&args.label)?)?;
    let pred = read_matrix(&args.pred)?;
    emit(&evaluate(&label, &pred, args.threshold)?)?;
    Ok(ExitCode::SUCCESS)
}

fn traindemo(args: &TraindemoArgs) -> Result<ExitCode> {
    let cfg = args.options.config()?;
    let train = TrainConfig {
        adam: AdamConfig::with_learning_rate(args.lr),
        ..TrainConfig::default()
    };
    let spec = SyntheticSpec::new(args.kind, args.size, 0.0, args.seed);
    let (_, label) = generate::<f64>(&spec, cfg.levels)?;
    let (history, logits) = optimize_logits(&label, &cfg, &train, args.steps, args.eval_every)?;
    fs::create_dir_all(&args.out_dir)?;
    let mut lines = fs::File::create(args.out_dir.join("history.jsonl"))?;
    for (i, loss) in history.losses.iter().enumerate() {
        writeln!(lines, "{}", json_line(&json!({"step": i + 1, "loss": loss}))?)?;
    }
    for e in &history.evaluations {
        writeln!(lines, "{}", json_line(&json!({"evaluation": e}))?)?;
    }
    writeln!(lines, "{}", json_line(&json!({"digest": history.digest}))?)?;
    let prob = logits.mapv(|z| 1.0 / (1.0 + (-z).exp()));
    write_pgm(args.out_dir.join("prediction.pgm"), &prob, 255)?;
    write_pgm(args.out_dir.join("label.pgm"), &label.to_values(), 255)?;
    emit(&json!({
        "kind": args.kind,
        "variant": cfg.variant,
        "steps": args.steps,
        "final_loss": history.losses.last(),
        "final": history.final_evaluation(),
        "digest": history.digest,
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn bench(args: &BenchArgs) -> Result<ExitCode> {
    let cfg = args.options.config()?;
    let timings = args
        .sizes
        .iter()
        .map(|&s| time_decompose_and_loss::<f64>(s, args.repeats, &cfg, 0))
        .collect::<Result<Vec<_>>>()?;
    for t in &timings {
        emit(&json!({"size": t.size, "median_seconds": t.median_seconds, "repeats": t.samples.len()}))?;
    }
    for r in ratios(&timings) {
        emit(&r)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Decompose(a) => decompose(a),
        Command::Loss(a) => loss(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Metrics(a) => metrics(a),
        Command::Traindemo(a) => traindemo(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
