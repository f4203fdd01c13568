//! `remnet` command-line tool.
//!
//! Exit status: 0 on success, 1 on usage errors (bad flags, bad config
//! file), 2 on data or validation errors. Results go to stdout as JSON,
//! progress to stderr.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use settings::UsageError;

#[derive(Debug, Parser)]
#[command(
    name = "remnet",
    version,
    about = "UWB range-error mitigation with REMNet"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Seed for every random stream of the run [default: 0]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it [default: 1]
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// key = value file (or a run manifest); flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a CIR CSV and write it in the canonical schema
    Import(ImportArgs),
    /// Write a synthetic multipath dataset in the canonical schema
    Synth(SynthArgs),
    /// Train REMNet and write a float checkpoint
    Train(TrainArgs),
    /// Evaluate a float or int8 model; JSON report on stdout
    Eval(EvalArgs),
    /// Produce an int8 model
    #[command(subcommand)]
    Quantize(QuantizeCommand),
    /// Retrain for several input lengths K and tabulate test MAE
    SweepK(SweepArgs),
    /// Train on one environment or obstacle class, test on every class
    Transfer(TransferArgs),
    /// Trilaterate a ranging scenario with raw and mitigated ranges
    Locate(LocateArgs),
    /// Latency and size of the float32, float16 and int8 variants
    Bench(BenchArgs),
    /// Project CIR windows onto their principal components
    Pca(PcaArgs),
}

#[derive(Debug, Args)]
struct ImportArgs {
    /// Source CSV
    #[arg(long)]
    input: Option<PathBuf>,
    /// Canonical CSV to write
    #[arg(long)]
    out: Option<PathBuf>,
    /// Measured range column [default: d_meas]
    #[arg(long)]
    col_meas: Option<String>,
    /// True range column [default: d_true]
    #[arg(long)]
    col_true: Option<String>,
    /// Environment column [default: env]
    #[arg(long)]
    col_env: Option<String>,
    /// Obstacle column [default: obstacle]
    #[arg(long)]
    col_obstacle: Option<String>,
    /// LoS flag column, or "none" to derive it from the obstacle [default: los]
    #[arg(long)]
    col_los: Option<String>,
    /// Prefix of the numbered CIR columns [default: cir_]
    #[arg(long)]
    cir_prefix: Option<String>,
    /// First-path threshold, fraction of the peak, for raw traces [default: 0.4]
    #[arg(long)]
    peak_frac: Option<f64>,
    /// Fail if any row is rejected
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// Samples per environment [default: 400]
    #[arg(long)]
    per_environment: Option<usize>,
    /// Share of NLoS samples [default: 0.5]
    #[arg(long)]
    nlos_fraction: Option<f64>,
    /// Raw trace length before windowing [default: 256]
    #[arg(long)]
    trace_len: Option<usize>,
}

#[derive(Debug, Args, Clone, Default)]
struct ArchArgs {
    /// Feature maps F [default: 16]
    #[arg(long)]
    filters: Option<usize>,
    /// Reduction modules N [default: 3]
    #[arg(long)]
    modules: Option<usize>,
    /// SE reduction r [default: 8]
    #[arg(long)]
    se_reduction: Option<usize>,
    /// Dropout rate [default: 0.2]
    #[arg(long)]
    dropout: Option<f64>,
}

#[derive(Debug, Args, Clone, Default)]
struct PlanArgs {
    /// [default: 30, quantize qat: 5]
    #[arg(long)]
    epochs: Option<usize>,
    /// [default: 32]
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate [default: 3e-4, quantize qat: 1e-4]
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Checkpoint to write
    #[arg(long)]
    out: Option<PathBuf>,
    /// all, paper_default, env:<name>, obstacle:<name>, stratified:<frac>[:<seed>];
    /// training uses the train side [default: all]
    #[arg(long)]
    split: Option<String>,
    /// Input length K [default: 128]
    #[arg(long)]
    k: Option<usize>,
    #[command(flatten)]
    arch: ArchArgs,
    #[command(flatten)]
    plan: PlanArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Float checkpoint or int8 model
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Split policy; evaluation uses the test side [default: all]
    #[arg(long)]
    split: Option<String>,
    /// Also write the report here, with the residual histogram next to it
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum QuantizeCommand {
    /// Post-training quantization from calibration ranges
    Ptq(PtqArgs),
    /// Quantization-aware fine-tuning, then export
    Qat(QatArgs),
}

#[derive(Debug, Args)]
struct PtqArgs {
    /// Float checkpoint
    #[arg(long)]
    model: Option<PathBuf>,
    /// Calibration data
    #[arg(long)]
    data: Option<PathBuf>,
    /// Int8 model to write
    #[arg(long)]
    out: Option<PathBuf>,
    /// Split policy; calibration uses the train side [default: all]
    #[arg(long)]
    split: Option<String>,
    /// Calibration samples, drawn with the seed [default: 512]
    #[arg(long)]
    calib_samples: Option<usize>,
}

#[derive(Debug, Args)]
struct QatArgs {
    /// Float checkpoint to fine-tune
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Int8 model to write
    #[arg(long)]
    out: Option<PathBuf>,
    /// Split policy; fine-tuning uses the train side [default: all]
    #[arg(long)]
    split: Option<String>,
    #[command(flatten)]
    plan: PlanArgs,
    /// Decay of the activation range averages [default: 0.99]
    #[arg(long)]
    ema_decay: Option<f64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    outdir: Option<PathBuf>,
    /// [default: paper_default]
    #[arg(long)]
    split: Option<String>,
    /// Comma-separated input lengths [default: 8,16,32,64,128]
    #[arg(long)]
    ks: Option<String>,
    /// Training runs per K [default: 1]
    #[arg(long)]
    repeats: Option<usize>,
    #[command(flatten)]
    arch: ArchArgs,
    #[command(flatten)]
    plan: PlanArgs,
}

#[derive(Debug, Args)]
struct TransferArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    outdir: Option<PathBuf>,
    /// environment or obstacle [default: environment]
    #[arg(long)]
    axis: Option<String>,
    /// mlp or remnet [default: mlp]
    #[arg(long)]
    model: Option<String>,
    /// Input length [default: 157]
    #[arg(long)]
    k: Option<usize>,
    /// MLP hidden width [default: 64]
    #[arg(long)]
    hidden: Option<usize>,
    /// MLP dense layers [default: 3]
    #[arg(long)]
    layers: Option<usize>,
    #[command(flatten)]
    plan: PlanArgs,
}

#[derive(Debug, Args)]
struct LocateArgs {
    #[arg(long)]
    outdir: Option<PathBuf>,
    /// Scenario CSV; a synthetic one is generated when absent
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Float checkpoint or int8 model for mitigation; raw only when absent
    #[arg(long)]
    model: Option<PathBuf>,
    /// Synthetic anchors "x,y,z;x,y,z;..." [default: 0,0,0.5;8,0,2.5;8,6,0.5;0,6,2.5]
    #[arg(long)]
    anchors: Option<String>,
    /// Synthetic epochs [default: 200]
    #[arg(long)]
    epochs: Option<usize>,
    /// Anchors ranged through an obstacle, comma-separated indices [default: 0,2]
    #[arg(long)]
    nlos: Option<String>,
    /// Obstacle between the tag and the NLoS anchors [default: wood]
    #[arg(long)]
    obstacle: Option<String>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Float checkpoint
    #[arg(long)]
    model: Option<PathBuf>,
    /// Int8 model; calibrated from the inputs with PTQ when absent
    #[arg(long)]
    qmodel: Option<PathBuf>,
    /// Inputs; seeded random windows when absent
    #[arg(long)]
    data: Option<PathBuf>,
    /// Timed iterations [default: 10000]
    #[arg(long)]
    iters: Option<usize>,
    /// Untimed iterations first [default: 100]
    #[arg(long)]
    warmup: Option<usize>,
    /// Inferences per timed iteration [default: 1]
    #[arg(long)]
    batch: Option<usize>,
    /// Also write the results here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PcaArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Projection CSV to write
    #[arg(long)]
    out: Option<PathBuf>,
    /// Components [default: 3]
    #[arg(long)]
    dims: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
