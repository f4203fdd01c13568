use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};

use remnet::dataset::{
    import_csv, normalize, pca_project, split, synthesize, to_examples, truncate_to_k, write_csv,
    write_pca_csv, CirSample, ColumnMap, Obstacle, SplitPolicy, SynthConfig, DEFAULT_PEAK_FRAC,
};
use remnet::evaluation::{
    bench_latency, evaluate, k_sweep, transfer_matrix, write_json, write_sweep_csv,
    write_transfer_csv, BenchVariant, Int8Predictor, Predictor, TransferAxis, TransferModel,
};
use remnet::localization::{
    position_experiment, read_scenario, synthetic_scenario, write_results_csv, write_scenario,
    AnchorSet, Mitigator, Point3, RangeEpoch,
};
use remnet::quant::{
    calibrate_ptq, decode_qmodel, encode_qmodel, save_qmodel, train_qat, QatOptions,
    QuantizedModel, QMODEL_MAGIC,
};
use remnet::remnet::{decode_checkpoint, encode_checkpoint, save_checkpoint};
use remnet::training::{fit, write_log_csv, LogRow, TrainPlan};
use remnet::{rng, Remnet, RemnetConfig};

use crate::settings::{usage, write_manifest, List, Settings};
use crate::{
    ArchArgs, BenchArgs, Cli, Command, EvalArgs, ImportArgs, LocateArgs, PcaArgs, PlanArgs,
    PtqArgs, QatArgs, QuantizeCommand, SweepArgs, SynthArgs, TrainArgs, TransferArgs,
};

macro_rules! log {
    ($($t:tt)*) => { eprintln!("[remnet] {}", format!($($t)*)) };
}

struct Run {
    s: Settings,
    seed: u64,
    threads: usize,
    command: &'static str,
}

impl Run {
    fn finish(&self) -> Result<()> {
        self.s.finish()
    }

    fn manifest(&self, path: &Path, outputs: &[PathBuf]) -> Result<()> {
        write_manifest(path, self.command, self.seed, &self.s, outputs)?;
        log!("manifest {}", path.display());
        Ok(())
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}{suffix}", path.display()))
}

fn print_json(v: &Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// `all` (no split) or any split policy, kept verbatim for the manifest.
#[derive(Debug, Clone)]
struct SplitChoice {
    text: String,
    policy: Option<SplitPolicy>,
}

impl FromStr for SplitChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let policy = match s.trim() {
            "all" => None,
            other => Some(other.parse::<SplitPolicy>().map_err(|e| e.to_string())?),
        };
        Ok(SplitChoice {
            text: s.trim().to_string(),
            policy,
        })
    }
}

impl fmt::Display for SplitChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

#[derive(Clone, Copy)]
enum Side {
    Train,
    Test,
}

fn get_parsed<T>(s: &mut Settings, key: &str, flag: Option<String>, default: &str) -> Result<T>
where
    T: FromStr,
    T::Err: fmt::Display,
{
    let text = s.get(key, flag, default.to_string())?;
    text.parse::<T>()
        .map_err(|e| usage(format!("bad --{}: {e}", key.replace('_', "-"))))
}

fn load_samples(path: &Path) -> Result<Vec<CirSample>> {
    let report = import_csv(path, &ColumnMap::default())?;
    if !report.rejected.is_empty() {
        let first: Vec<String> = report
            .rejected
            .iter()
            .take(5)
            .map(|e| format!("line {}: {}", e.line, e.reason))
            .collect();
        bail!(
            "{}: {} invalid rows (run `remnet import` to clean the file)\n{}",
            path.display(),
            report.rejected.len(),
            first.join("\n")
        );
    }
    if report.samples.is_empty() {
        bail!("{}: no samples", path.display());
    }
    log!("{} samples from {}", report.samples.len(), path.display());
    Ok(report.samples)
}

fn pick(samples: Vec<CirSample>, choice: &SplitChoice, side: Side) -> Result<Vec<CirSample>> {
    let Some(policy) = choice.policy else {
        return Ok(samples);
    };
    let parts = split(&samples, policy);
    let (picked, name) = match side {
        Side::Train => (parts.train, "train"),
        Side::Test => (parts.test, "test"),
    };
    if picked.is_empty() {
        bail!("split {} leaves the {name} side empty", choice.text);
    }
    log!(
        "split {}: using {} {name} samples",
        choice.text,
        picked.len()
    );
    Ok(picked)
}

enum AnyModel {
    Float(Remnet),
    Int8(QuantizedModel),
}

impl AnyModel {
    fn kind(&self) -> &'static str {
        match self {
            AnyModel::Float(_) => "float",
            AnyModel::Int8(_) => "int8",
        }
    }

    fn predictor(self) -> Result<Box<dyn Predictor>> {
        Ok(match self {
            AnyModel::Float(m) => Box::new(m),
            AnyModel::Int8(q) => Box::new(Int8Predictor::new(q)?),
        })
    }
}

fn load_model(path: &Path) -> Result<AnyModel> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let source = path.display().to_string();
    Ok(if bytes.starts_with(QMODEL_MAGIC) {
        AnyModel::Int8(decode_qmodel(&bytes, &source)?)
    } else {
        AnyModel::Float(decode_checkpoint(&bytes, &source)?)
    })
}

fn load_float(path: &Path) -> Result<Remnet> {
    match load_model(path)? {
        AnyModel::Float(m) => Ok(m),
        AnyModel::Int8(_) => bail!(
            "{}: expected a float checkpoint, found an int8 model",
            path.display()
        ),
    }
}

fn arch(s: &mut Settings, a: &ArchArgs, k: usize) -> Result<RemnetConfig> {
    let d = RemnetConfig::default();
    Ok(RemnetConfig {
        input_len: k,
        filters: s.get("filters", a.filters, d.filters)?,
        modules: s.get("modules", a.modules, d.modules)?,
        se_reduction: s.get("se_reduction", a.se_reduction, d.se_reduction)?,
        dropout_rate: s.get("dropout", a.dropout, d.dropout_rate)?,
        ..d
    })
}

fn plan(run: &mut Run, a: &PlanArgs, epochs: usize, lr: f64) -> Result<TrainPlan> {
    let d = TrainPlan::default();
    Ok(TrainPlan {
        epochs: run.s.get("epochs", a.epochs, epochs)?,
        batch_size: run.s.get("batch_size", a.batch_size, d.batch_size)?,
        lr: run.s.get("lr", a.lr, lr)?,
        shuffle_seed: run.seed,
        threads: run.threads,
        ..d
    })
}

fn epoch_logger(rows: &mut Vec<LogRow>) -> impl FnMut(&remnet::training::EpochStats) + '_ {
    move |st| {
        log!(
            "epoch {:>3}  train MAE {:.5} m  ({:.0} ms)",
            st.epoch + 1,
            st.train_mae,
            st.wall_ms
        );
        rows.push(LogRow {
            epoch: st.epoch + 1,
            train_mae: st.train_mae,
            val_mae: None,
            wall_ms: st.wall_ms,
        });
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let command = match &cli.command {
        Command::Import(_) => "import",
        Command::Synth(_) => "synth",
        Command::Train(_) => "train",
        Command::Eval(_) => "eval",
        Command::Quantize(QuantizeCommand::Ptq(_)) => "quantize ptq",
        Command::Quantize(QuantizeCommand::Qat(_)) => "quantize qat",
        Command::SweepK(_) => "sweep-k",
        Command::Transfer(_) => "transfer",
        Command::Locate(_) => "locate",
        Command::Bench(_) => "bench",
        Command::Pca(_) => "pca",
    };
    let mut s = Settings::load(cli.global.config.as_deref())?;
    let seed = s.get("seed", cli.global.seed, 0u64)?;
    let threads = s.get("threads", cli.global.threads, 1usize)?;
    if threads == 0 {
        return Err(usage("--threads must be at least 1"));
    }
    let mut run = Run {
        s,
        seed,
        threads,
        command,
    };
    match cli.command {
        Command::Import(a) => import(&mut run, a),
        Command::Synth(a) => synth(&mut run, a),
        Command::Train(a) => train(&mut run, a),
        Command::Eval(a) => eval(&mut run, a),
        Command::Quantize(QuantizeCommand::Ptq(a)) => ptq(&mut run, a),
        Command::Quantize(QuantizeCommand::Qat(a)) => qat(&mut run, a),
        Command::SweepK(a) => sweep_k(&mut run, a),
        Command::Transfer(a) => transfer(&mut run, a),
        Command::Locate(a) => locate(&mut run, a),
        Command::Bench(a) => bench(&mut run, a),
        Command::Pca(a) => pca(&mut run, a),
    }
}

fn import(run: &mut Run, a: ImportArgs) -> Result<()> {
    let s = &mut run.s;
    let input = s.path("input", a.input)?;
    let out = s.path("out", a.out)?;
    let d = ColumnMap::default();
    let los = s.get("col_los", a.col_los, "los".to_string())?;
    let map = ColumnMap {
        measured_range: s.get("col_meas", a.col_meas, d.measured_range)?,
        true_range: s.get("col_true", a.col_true, d.true_range)?,
        environment: s.get("col_env", a.col_env, d.environment)?,
        obstacle: s.get("col_obstacle", a.col_obstacle, d.obstacle)?,
        los: if los == "none" { None } else { Some(los) },
        cir_prefix: s.get("cir_prefix", a.cir_prefix, d.cir_prefix)?,
        peak_frac: s.get("peak_frac", a.peak_frac, DEFAULT_PEAK_FRAC)?,
    };
    let strict = s.flag("strict", a.strict)?;
    run.finish()?;

    let report = import_csv(&input, &map)?;
    for e in &report.rejected {
        log!("rejected line {}: {}", e.line, e.reason);
    }
    if report.samples.is_empty() {
        bail!("{}: no valid rows", input.display());
    }
    if strict && !report.rejected.is_empty() {
        bail!(
            "{}: {} rows rejected (--strict)",
            input.display(),
            report.rejected.len()
        );
    }
    write_csv(&out, &report.samples)?;
    run.manifest(&sidecar(&out, ".manifest.json"), std::slice::from_ref(&out))?;
    print_json(&json!({
        "accepted": report.samples.len(),
        "rejected": report.rejected.len(),
        "windowed": report.windowed,
        "out": out.display().to_string(),
    }))
}

fn synth(run: &mut Run, a: SynthArgs) -> Result<()> {
    let d = SynthConfig::default();
    let s = &mut run.s;
    let out = s.path("out", a.out)?;
    let cfg = SynthConfig {
        per_environment: s.get("per_environment", a.per_environment, d.per_environment)?,
        nlos_fraction: s.get("nlos_fraction", a.nlos_fraction, d.nlos_fraction)?,
        trace_len: s.get("trace_len", a.trace_len, d.trace_len)?,
        seed: run.seed,
    };
    run.finish()?;
    let samples = synthesize(&cfg)?;
    write_csv(&out, &samples)?;
    run.manifest(&sidecar(&out, ".manifest.json"), std::slice::from_ref(&out))?;
    print_json(&json!({
        "samples": samples.len(),
        "nlos": samples.iter().filter(|s| !s.los).count(),
        "out": out.display().to_string(),
    }))
}

fn train(run: &mut Run, a: TrainArgs) -> Result<()> {
    let data = run.s.path("data", a.data)?;
    let out = run.s.path("out", a.out)?;
    let choice: SplitChoice = get_parsed(&mut run.s, "split", a.split, "all")?;
    let k = run.s.get("k", a.k, RemnetConfig::default().input_len)?;
    let cfg = arch(&mut run.s, &a.arch, k)?;
    let plan = plan(
        run,
        &a.plan,
        TrainPlan::default().epochs,
        TrainPlan::default().lr,
    )?;
    run.finish()?;
    cfg.validate()?;

    let samples = load_samples(&data)?;
    let test = match choice.policy {
        Some(_) => Some(pick(samples.clone(), &choice, Side::Test)?),
        None => None,
    };
    let train = pick(samples, &choice, Side::Train)?;
    let examples = to_examples(&train, k)?;
    let mut model = Remnet::build(cfg, &mut rng::seeded(seed_for(run.seed, INIT_STREAM)))?;
    log!(
        "training REMNet ({} parameters) on {} samples",
        model.total_params(),
        examples.len()
    );
    let mut rows = Vec::new();
    let mut logger = epoch_logger(&mut rows);
    let history = fit(&mut model, &examples, &plan, &mut |st, _| logger(st))?;
    drop(logger);

    save_checkpoint(&model, &out)?;
    let log_path = sidecar(&out, ".log.csv");
    write_log_csv(&log_path, &rows)?;
    let test_report = match &test {
        Some(t) => Some(evaluate(&model, t, run.threads)?),
        None => None,
    };
    run.manifest(&sidecar(&out, ".manifest.json"), &[out.clone(), log_path])?;
    print_json(&json!({
        "checkpoint": out.display().to_string(),
        "checkpoint_bytes": encode_checkpoint(&model).len(),
        "parameters": model.total_params(),
        "train_samples": examples.len(),
        "train_mae_history": history,
        "test": test_report.map(|r| json!({
            "count": r.count,
            "mae": r.mae,
            "mae_nlos": r.mae_nlos,
            "mae_los": r.mae_los,
        })),
    }))
}

const INIT_STREAM: u64 = 0x1417;
const CALIB_STREAM: u64 = 0xCA1B;
const BENCH_STREAM: u64 = 0xBE4C;

fn seed_for(seed: u64, stream: u64) -> u64 {
    rng::derive_seed(seed, stream, 0)
}

fn eval(run: &mut Run, a: EvalArgs) -> Result<()> {
    let model_path = run.s.path("model", a.model)?;
    let data = run.s.path("data", a.data)?;
    let choice: SplitChoice = get_parsed(&mut run.s, "split", a.split, "all")?;
    let out = run.s.optional_path("out", a.out)?;
    run.finish()?;

    let model = load_model(&model_path)?;
    let kind = model.kind();
    let predictor = model.predictor()?;
    let samples = pick(load_samples(&data)?, &choice, Side::Test)?;
    let report = evaluate(predictor.as_ref(), &samples, run.threads)?;
    if let Some(out) = &out {
        write_json(out, &report)?;
        let hist = sidecar(out, ".hist.csv");
        report.histogram.write_csv(&hist)?;
        run.manifest(&sidecar(out, ".manifest.json"), &[out.clone(), hist])?;
    }
    let mut v = serde_json::to_value(&report)?;
    v["model_kind"] = json!(kind);
    print_json(&v)
}

fn ptq(run: &mut Run, a: PtqArgs) -> Result<()> {
    let model_path = run.s.path("model", a.model)?;
    let data = run.s.path("data", a.data)?;
    let out = run.s.path("out", a.out)?;
    let choice: SplitChoice = get_parsed(&mut run.s, "split", a.split, "all")?;
    let n = run.s.get("calib_samples", a.calib_samples, 512usize)?;
    run.finish()?;
    if n == 0 {
        return Err(usage("--calib-samples must be at least 1"));
    }

    let model = load_float(&model_path)?;
    let k = model.config().input_len;
    let samples = pick(load_samples(&data)?, &choice, Side::Train)?;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    rng::shuffle(
        &mut order,
        &mut rng::seeded(seed_for(run.seed, CALIB_STREAM)),
    );
    let calib: Vec<CirSample> = order.iter().take(n).map(|&i| samples[i].clone()).collect();
    let inputs: Vec<Vec<f64>> = to_examples(&calib, k)?
        .into_iter()
        .map(|e| e.input)
        .collect();
    log!("calibrating on {} samples", inputs.len());
    let q = calibrate_ptq(&model, &inputs)?;
    save_qmodel(&q, &out)?;
    run.manifest(&sidecar(&out, ".manifest.json"), std::slice::from_ref(&out))?;
    print_json(&quant_summary(
        &model,
        &q,
        &out,
        json!({ "calib_samples": inputs.len() }),
    ))
}

fn quant_summary(model: &Remnet, q: &QuantizedModel, out: &Path, extra: Value) -> Value {
    let bytes = encode_qmodel(q).len();
    let float_bytes = encode_checkpoint(model).len();
    let mut v = json!({
        "out": out.display().to_string(),
        "bytes": bytes,
        "float_bytes": float_bytes,
        "size_ratio": bytes as f64 / float_bytes as f64,
    });
    if let (Value::Object(m), Value::Object(e)) = (&mut v, extra) {
        m.extend(e);
    }
    v
}

fn qat(run: &mut Run, a: QatArgs) -> Result<()> {
    let model_path = run.s.path("model", a.model)?;
    let data = run.s.path("data", a.data)?;
    let out = run.s.path("out", a.out)?;
    let choice: SplitChoice = get_parsed(&mut run.s, "split", a.split, "all")?;
    let plan = plan(run, &a.plan, 5, 1e-4)?;
    let ema_decay = run
        .s
        .get("ema_decay", a.ema_decay, QatOptions::default().ema_decay)?;
    run.finish()?;
    if !(0.0..1.0).contains(&ema_decay) {
        bail!("--ema-decay {ema_decay} outside [0, 1)");
    }

    let model = load_float(&model_path)?;
    let k = model.config().input_len;
    let train = pick(load_samples(&data)?, &choice, Side::Train)?;
    let examples = to_examples(&train, k)?;
    log!(
        "quantization-aware fine-tuning on {} samples",
        examples.len()
    );
    let mut rows = Vec::new();
    let mut logger = epoch_logger(&mut rows);
    let options = QatOptions {
        fake_quant: true,
        ema_decay,
    };
    let (_, q, history) = train_qat(model.clone(), &examples, &plan, options, &mut |st, _| {
        logger(st)
    })?;
    drop(logger);
    save_qmodel(&q, &out)?;
    let log_path = sidecar(&out, ".log.csv");
    write_log_csv(&log_path, &rows)?;
    run.manifest(&sidecar(&out, ".manifest.json"), &[out.clone(), log_path])?;
    print_json(&quant_summary(
        &model,
        &q,
        &out,
        json!({ "train_mae_history": history }),
    ))
}

fn sweep_k(run: &mut Run, a: SweepArgs) -> Result<()> {
    let data = run.s.path("data", a.data)?;
    let outdir = run.s.path("outdir", a.outdir)?;
    let choice: SplitChoice = get_parsed(&mut run.s, "split", a.split, "paper_default")?;
    let ks: List<usize> = get_parsed(&mut run.s, "ks", a.ks, "8,16,32,64,128")?;
    let repeats = run.s.get("repeats", a.repeats, 1usize)?;
    let base = arch(&mut run.s, &a.arch, RemnetConfig::default().input_len)?;
    let plan = plan(
        run,
        &a.plan,
        TrainPlan::default().epochs,
        TrainPlan::default().lr,
    )?;
    run.finish()?;
    if choice.policy.is_none() {
        return Err(usage("sweep-k needs a split with a test side, not 'all'"));
    }

    let samples = load_samples(&data)?;
    let test = pick(samples.clone(), &choice, Side::Test)?;
    let train = pick(samples, &choice, Side::Train)?;
    log!("sweeping K over {} ({} runs each)", ks, repeats);
    let rows = k_sweep(&train, &test, &ks.0, repeats, base, &plan, run.seed)?;
    for r in &rows {
        log!("K = {:>3}: test MAE {:.5} m", r.k, r.mean_mae);
    }
    ensure_dir(&outdir)?;
    let csv = outdir.join("sweep_k.csv");
    write_sweep_csv(&csv, &rows)?;
    run.manifest(&outdir.join("manifest.json"), &[csv])?;
    print_json(&serde_json::to_value(&rows)?)
}

fn transfer(run: &mut Run, a: TransferArgs) -> Result<()> {
    let data = run.s.path("data", a.data)?;
    let outdir = run.s.path("outdir", a.outdir)?;
    let axis_text = run.s.get("axis", a.axis, "environment".to_string())?;
    let axis = match axis_text.as_str() {
        "environment" | "env" => TransferAxis::Environment,
        "obstacle" => TransferAxis::Obstacle,
        other => {
            return Err(usage(format!(
                "bad --axis '{other}' (environment or obstacle)"
            )))
        }
    };
    let model_text = run.s.get("model", a.model, "mlp".to_string())?;
    let k = run.s.get("k", a.k, remnet::dataset::WINDOW_LEN)?;
    let hidden = run.s.get("hidden", a.hidden, 64usize)?;
    let layers = run.s.get("layers", a.layers, 3usize)?;
    let model = match model_text.as_str() {
        "mlp" => TransferModel::Mlp { hidden, layers },
        "remnet" => TransferModel::Remnet(RemnetConfig::default().with_input_len(k)),
        other => return Err(usage(format!("bad --model '{other}' (mlp or remnet)"))),
    };
    let plan = plan(
        run,
        &a.plan,
        TrainPlan::default().epochs,
        TrainPlan::default().lr,
    )?;
    run.finish()?;

    let samples = load_samples(&data)?;
    log!("transfer matrix over {axis_text} with {model_text}");
    let grid = transfer_matrix(&samples, axis, model, k, &plan, run.seed)?;
    ensure_dir(&outdir)?;
    let csv = outdir.join(format!("transfer_{axis_text}.csv"));
    write_transfer_csv(&csv, &grid)?;
    run.manifest(&outdir.join("manifest.json"), &[csv])?;
    print_json(&serde_json::to_value(&grid)?)
}

fn parse_anchors(text: &str) -> Result<Vec<Point3>> {
    text.split(';')
        .map(|p| {
            let v: Vec<f64> = p
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| usage(format!("bad anchor '{p}'")))?;
            match v[..] {
                [x, y, z] => Ok([x, y, z]),
                _ => Err(usage(format!("anchor '{p}' needs three coordinates"))),
            }
        })
        .collect()
}

fn locate(run: &mut Run, a: LocateArgs) -> Result<()> {
    let outdir = run.s.path("outdir", a.outdir)?;
    let scenario = run.s.optional_path("scenario", a.scenario)?;
    let model_path = run.s.optional_path("model", a.model)?;
    let (anchors_text, epochs, nlos, obstacle) = if scenario.is_none() {
        let anchors = run.s.get(
            "anchors",
            a.anchors,
            "0,0,0.5;8,0,2.5;8,6,0.5;0,6,2.5".to_string(),
        )?;
        let epochs = run.s.get("epochs", a.epochs, 200usize)?;
        let nlos: List<usize> = get_parsed(&mut run.s, "nlos", a.nlos, "0,2")?;
        let obstacle: Obstacle = get_parsed(&mut run.s, "obstacle", a.obstacle, "wood")?;
        (anchors, epochs, nlos.0, obstacle)
    } else {
        if a.anchors.is_some() || a.epochs.is_some() || a.nlos.is_some() || a.obstacle.is_some() {
            return Err(usage(
                "--anchors/--epochs/--nlos/--obstacle only apply without --scenario",
            ));
        }
        (String::new(), 0, Vec::new(), Obstacle::None)
    };
    run.finish()?;

    ensure_dir(&outdir)?;
    let mut outputs = Vec::new();
    let (anchors, epochs) = match &scenario {
        Some(path) => read_scenario(path)?,
        None => {
            let anchors = AnchorSet::new(parse_anchors(&anchors_text)?)?;
            if let Some(&bad) = nlos.iter().find(|&&i| i >= anchors.len()) {
                return Err(usage(format!(
                    "--nlos index {bad} but only {} anchors",
                    anchors.len()
                )));
            }
            let epochs = synthetic_scenario(&anchors, epochs, &nlos, obstacle, run.seed)?;
            let path = outdir.join("scenario.csv");
            write_scenario(&path, &anchors, &epochs)?;
            outputs.push(path);
            (anchors, epochs)
        }
    };
    for w in anchors.warnings() {
        log!("warning: {w}");
    }
    let predictor = match &model_path {
        Some(p) => Some(load_model(p)?.predictor()?),
        None => None,
    };
    if predictor.is_some() && epochs.iter().any(|e| e.cirs.is_none()) {
        bail!("mitigation needs a CIR for every range, and the scenario has epochs without them");
    }
    let mitigate = |e: &RangeEpoch, i: usize| -> remnet::Result<f64> {
        let p = predictor.as_ref().expect("only called with a model");
        let cir = &e.cirs.as_ref().expect("checked above")[i];
        let max = cir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max.is_nan() || max <= 0.0 {
            return Err(remnet::Error::Data("all-zero CIR in scenario".into()));
        }
        let x: Vec<f64> = cir.iter().map(|v| v / max).collect();
        p.predict_one(&truncate_to_k(&x, p.input_len())?)
    };
    let mitigator: Option<&Mitigator<'_>> = predictor.as_ref().map(|_| &mitigate as &Mitigator<'_>);
    let result = position_experiment(&anchors, &epochs, mitigator)?;
    let csv = outdir.join("positions.csv");
    write_results_csv(&csv, &result)?;
    outputs.push(csv);
    run.manifest(&outdir.join("manifest.json"), &outputs)?;
    log!(
        "position MAE raw {:.4} m, mitigated {:.4} m",
        result.raw_mae,
        result.mitigated_mae
    );
    print_json(&json!({
        "epochs": result.epochs.len(),
        "anchors": anchors.len(),
        "mitigated": predictor.is_some(),
        "raw_mae": result.raw_mae,
        "mitigated_mae": result.mitigated_mae,
    }))
}

fn bench(run: &mut Run, a: BenchArgs) -> Result<()> {
    let model_path = run.s.path("model", a.model)?;
    let qmodel_path = run.s.optional_path("qmodel", a.qmodel)?;
    let data = run.s.optional_path("data", a.data)?;
    let iters = run.s.get("iters", a.iters, 10_000usize)?;
    let warmup = run.s.get("warmup", a.warmup, 100usize)?;
    let batch = run.s.get("batch", a.batch, 1usize)?;
    let out = run.s.optional_path("out", a.out)?;
    run.finish()?;

    let model = load_float(&model_path)?;
    let k = model.config().input_len;
    let inputs: Vec<Vec<f64>> = match &data {
        Some(d) => {
            let samples = load_samples(d)?;
            to_examples(&samples[..samples.len().min(1024)], k)?
                .into_iter()
                .map(|e| e.input)
                .collect()
        }
        None => {
            let mut r = rng::seeded(seed_for(run.seed, BENCH_STREAM));
            (0..256)
                .map(|_| (0..k).map(|_| rng::uniform(&mut r)).collect())
                .collect()
        }
    };
    let q = match &qmodel_path {
        Some(p) => match load_model(p)? {
            AnyModel::Int8(q) => q,
            AnyModel::Float(_) => bail!("{}: expected an int8 model", p.display()),
        },
        None => {
            log!("no --qmodel; calibrating PTQ on the bench inputs");
            calibrate_ptq(&model, &inputs[..inputs.len().min(512)])?
        }
    };
    if q.config.input_len != k {
        bail!(
            "int8 model has K = {}, float model K = {k}",
            q.config.input_len
        );
    }
    let variants = [
        BenchVariant::float32(&model),
        BenchVariant::float16(&model)?,
        BenchVariant::int8(q)?,
    ];
    let mut results = Vec::new();
    for v in &variants {
        let r = bench_latency(v, &inputs, batch, warmup, iters)?;
        log!(
            "{:<8} median {:.4} ms  p95 {:.4} ms  {} bytes",
            r.variant,
            r.median_ms,
            r.p95_ms,
            r.model_bytes
        );
        results.push(r);
    }
    if let Some(out) = &out {
        write_json(out, &results)?;
        run.manifest(&sidecar(out, ".manifest.json"), std::slice::from_ref(out))?;
    }
    print_json(&serde_json::to_value(&results)?)
}

fn pca(run: &mut Run, a: PcaArgs) -> Result<()> {
    let data = run.s.path("data", a.data)?;
    let out = run.s.path("out", a.out)?;
    let dims = run.s.get("dims", a.dims, 3usize)?;
    run.finish()?;

    let samples = load_samples(&data)?;
    let windows: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| normalize(s).map(|n| n.cir))
        .collect::<remnet::Result<_>>()?;
    let p = pca_project(&windows, dims)?;
    write_pca_csv(&out, &p.projections, &samples)?;
    run.manifest(&sidecar(&out, ".manifest.json"), std::slice::from_ref(&out))?;
    print_json(&json!({
        "samples": samples.len(),
        "dims": dims,
        "eigenvalues": p.eigenvalues,
        "explained_variance": p.explained_variance,
        "out": out.display().to_string(),
    }))
}
