//! The `lgcnn` command line.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use lgcnn_core::data::{correlation_matrix, preprocess, PreprocessConfig};
use lgcnn_core::model::{
    audit_parameters, preset_with, receptive_fields, ModelSpec, Network, PresetOptions,
    PRESET_NAMES,
};
use lgcnn_core::train::{compare_fdrs, evaluate, train, EvalReport};
use serde_json::json;

use crate::archive::{write_atomic, Archive};
use crate::checkpoint;
use crate::config::TrainFile;
use crate::error::{AppError, AppResult};
use crate::ingest::{ingest_dir, write_dir};
use crate::manifest::RunManifest;
use crate::pipeline::{prepare, PrepareOptions, SyntheticSpec};
use crate::report;

pub const DATA_DIR_ENV: &str = "LGCNN_DATA_DIR";
const DEFAULT_ARCHIVE: &str = "dataset.lgds";

#[derive(Debug, Parser)]
#[command(name = "lgcnn", version, about = "Local-global CNNs for multivariate time-series fault diagnosis")]
pub struct Cli {
    /// Directory for datasets when `--data`/`--out` are not given.
    #[arg(long, global = true, env = DATA_DIR_ENV, default_value = ".")]
    pub data_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a dataset archive from CSV simulations or the synthetic generator.
    Prepare(PrepareArgs),
    /// Write synthetic simulations as CSV (`<out>/train`, `<out>/test`).
    Synth(SynthArgs),
    /// Per-layer shapes, parameter counts and receptive fields of a model.
    Audit(AuditArgs),
    /// Train a model, once or repeatedly, and evaluate it on the test split.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset archive.
    Eval(EvalArgs),
    /// Compare two evaluation records class by class.
    Compare(CompareArgs),
    /// Pearson correlation map of the variables for one fault.
    Corrmap(CorrmapArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Raw directory with `train/` and `test/` CSV subdirectories.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub raw: Option<PathBuf>,
    /// Generate instead of ingesting: `classes=4 runs=10 test_runs=10 len=200
    /// test_len=200 vars=50 seed=0 phi=0.5 loading=0.8 shift=1`.
    #[arg(long, num_args = 0.., value_name = "KEY=VALUE")]
    pub synthetic: Option<Vec<String>>,
    /// Archive path (default: `<data-dir>/dataset.lgds`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `per-variable` or `global`.
    #[arg(long, default_value = "per-variable")]
    pub stats: String,
    /// Comma-separated variables to drop. Default: xmv_5,xmv_9 when the data
    /// uses xmv_* names, otherwise none. Pass an empty string for none.
    #[arg(long)]
    pub drop: Option<String>,
    /// Samples before the fault in training runs (default 20 raw, 0 synthetic).
    #[arg(long)]
    pub train_onset: Option<usize>,
    /// Samples before the fault in test runs (default 160 raw, 0 synthetic).
    #[arg(long)]
    pub test_onset: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub window: usize,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(value_name = "KEY=VALUE")]
    pub params: Vec<String>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Preset name or path to a model spec file.
    pub model: String,
    /// Exit with status 1 unless the total equals this.
    #[arg(long)]
    pub expect: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub classes: usize,
    /// Print key=value records instead of the table.
    #[arg(long)]
    pub kv: bool,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Preset name or path to a model spec file.
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with training settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Divide preset channel widths by this.
    #[arg(long, default_value_t = 1)]
    pub channel_divisor: usize,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Require the checkpoint to hold this model (preset or spec file).
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub channel_divisor: Option<usize>,
    /// `test` or `train`.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Directory for eval.txt, eval.kv and confusion.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// Column labels, `A,B`.
    #[arg(long)]
    pub names: Option<String>,
    #[arg(long)]
    pub kv: bool,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrmapArgs {
    /// Directory of CSV files; its `train/` (or `--split`) subdirectory is
    /// used when present.
    #[arg(long)]
    pub raw: PathBuf,
    #[arg(long, default_value = "train")]
    pub split: String,
    #[arg(long)]
    pub fault: usize,
    #[arg(long)]
    pub drop: Option<String>,
    /// Leading samples to discard from each run.
    #[arg(long, default_value_t = 0)]
    pub onset: usize,
    /// Grid as CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional heatmap.
    #[arg(long)]
    pub png: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

fn drop_list(flag: &Option<String>) -> Option<Vec<String>> {
    flag.as_ref().map(|s| {
        s.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect()
    })
}

fn beside(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_text(path: &Path, text: &str) -> AppResult<()> {
    write_atomic(path, text.as_bytes())
}

pub fn run(cli: Cli) -> AppResult<()> {
    let data_dir = cli.data_dir;
    let archive_path = |p: Option<PathBuf>| p.unwrap_or_else(|| data_dir.join(DEFAULT_ARCHIVE));
    match cli.command {
        Command::Prepare(a) => cmd_prepare(a, archive_path(None)),
        Command::Synth(a) => cmd_synth(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Train(a) => {
            let data = archive_path(a.data.clone());
            cmd_train(a, data)
        }
        Command::Eval(a) => {
            let data = archive_path(a.data.clone());
            cmd_eval(a, data)
        }
        Command::Compare(a) => cmd_compare(a),
        Command::Corrmap(a) => cmd_corrmap(a),
    }
}

fn cmd_prepare(a: PrepareArgs, default_out: PathBuf) -> AppResult<()> {
    let out = a.out.clone().unwrap_or(default_out);
    let (train_set, test_set, mut opts, source, seed) = match (&a.raw, &a.synthetic) {
        (Some(raw), _) => {
            if !raw.is_dir() {
                return Err(AppError::input(format!("{}: not a directory", raw.display())));
            }
            let train_dir = raw.join("train");
            let test_dir = raw.join("test");
            let train = ingest_dir(&train_dir)?;
            let test = if test_dir.is_dir() {
                ingest_dir(&test_dir)?
            } else {
                Default::default()
            };
            (train, test, PrepareOptions::raw(), raw.display().to_string(), None)
        }
        (None, Some(pairs)) => {
            let spec = SyntheticSpec::parse(pairs)?;
            let (train, test) = spec.generate()?;
            (train, test, PrepareOptions::synthetic(), spec.describe(), Some(spec.seed))
        }
        (None, None) => return Err(AppError::input("give --raw or --synthetic")),
    };
    opts.window = a.window;
    opts.stats = a.stats.clone();
    opts.drop = drop_list(&a.drop);
    opts.train_onset = a.train_onset.unwrap_or(opts.train_onset);
    opts.test_onset = a.test_onset.unwrap_or(opts.test_onset);

    let mut manifest = RunManifest::start("prepare", json!({"source": source, "options": opts, "out": out}), seed);
    if let Some(raw) = &a.raw {
        manifest.input(raw)?;
    }
    let archive = prepare(&train_set, &test_set, &opts, &source)?;
    archive.write(&out)?;
    manifest.output(&out)?;
    println!(
        "wrote {}: {} train / {} test images of {}x{}, {} classes, dropped [{}]",
        out.display(),
        archive.meta.train_images,
        archive.meta.test_images,
        archive.meta.height,
        archive.meta.width,
        archive.meta.classes,
        archive.meta.drop.join(", ")
    );
    manifest.emit(Some(&a.manifest.unwrap_or_else(|| beside(&out, ".manifest.json"))))
}

fn cmd_synth(a: SynthArgs) -> AppResult<()> {
    let spec = SyntheticSpec::parse(&a.params)?;
    let (train, test) = spec.generate()?;
    let mut manifest = RunManifest::start("synth", json!({"spec": spec, "out": a.out}), Some(spec.seed));
    for (set, name) in [(&train, "train"), (&test, "test")] {
        let dir = a.out.join(name);
        write_dir(set, &dir)?;
        manifest.output(&dir)?;
    }
    println!(
        "wrote {} train and {} test runs to {}",
        train.records.len(),
        test.records.len(),
        a.out.display()
    );
    manifest.emit(Some(&a.manifest.unwrap_or_else(|| a.out.join("manifest.json"))))
}

/// A preset name (scaled to the data) or a spec file.
fn load_model(
    model: &str,
    classes: usize,
    height: usize,
    width: usize,
    divisor: usize,
) -> AppResult<ModelSpec> {
    if PRESET_NAMES.contains(&model) {
        let opts = PresetOptions {
            classes,
            height,
            width,
            channel_divisor: divisor,
        };
        return Ok(preset_with(model, opts)?);
    }
    let path = Path::new(model);
    if !path.is_file() {
        return Err(AppError::input(format!(
            "`{model}` is neither a preset ({}) nor a spec file",
            PRESET_NAMES.join(", ")
        )));
    }
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    ModelSpec::parse(&text).map_err(|e| AppError::input(format!("{}: {e}", path.display())))
}

fn cmd_audit(a: AuditArgs) -> AppResult<()> {
    let spec = load_model(&a.model, a.classes, 20, 50, 1)?;
    let audit = audit_parameters(&spec)?;
    let rfs = receptive_fields(&spec)?;
    let text = if a.kv {
        report::audit_kv(&audit, &rfs)
    } else {
        report::audit_table(&audit, &rfs)
    };
    print!("{text}");
    let mut manifest = RunManifest::start("audit", json!({"model": a.model, "classes": a.classes, "expect": a.expect}), None);
    if Path::new(&a.model).is_file() {
        manifest.input(Path::new(&a.model))?;
    }
    manifest.stdout(&text);
    manifest.emit(a.manifest.as_deref())?;
    match a.expect {
        Some(n) if n != audit.total => Err(AppError::Expectation(format!(
            "{}: expected {n} parameters, counted {}",
            audit.model, audit.total
        ))),
        _ => Ok(()),
    }
}

fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt()
}

fn cmd_train(a: TrainArgs, data: PathBuf) -> AppResult<()> {
    let file = match &a.config {
        Some(p) => TrainFile::read(p)?,
        None => TrainFile::default(),
    };
    let flags = TrainFile {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        optimizer: a.optimizer.clone(),
        momentum: a.momentum,
        seed: a.seed,
        repeats: a.repeats,
        checkpoint_every: a.checkpoint_every,
        ..TrainFile::default()
    };
    let effective = file.overlay(flags);
    let (cfg, repeats) = effective.resolve()?;
    let archive = Archive::read(&data)?;
    let m = &archive.meta;
    let spec = load_model(&a.model, m.classes, m.height, m.width, a.channel_divisor)?;
    let mut manifest = RunManifest::start(
        "train",
        json!({"model": a.model, "spec": spec.to_string(), "data": data, "out": a.out, "train": effective, "channel_divisor": a.channel_divisor}),
        Some(cfg.seed),
    );
    manifest.input(&data)?;

    let mut means = Vec::with_capacity(repeats);
    let mut summary = String::new();
    for i in 0..repeats {
        let seed = cfg.seed.wrapping_add(i as u64);
        let run_cfg = lgcnn_core::train::TrainConfig { seed, ..cfg };
        let dir = a.out.join(format!("run-{:02}", i + 1));
        fs::create_dir_all(&dir).map_err(|e| AppError::io(&dir, e))?;
        let mut net = Network::build(&spec, seed)?;
        let report = train(&mut net, &archive.train, &run_cfg, |epoch, net| {
            let path = dir.join(format!("epoch-{epoch:03}.ckpt"));
            checkpoint::save(net, &path).map_err(|e| lgcnn_core::Error::Data(e.to_string()))
        })?;
        let eval = evaluate(&net, &archive.test)?;
        let files = [
            ("model.ckpt", checkpoint::encode(&net)),
            ("train.kv", report::train_kv(&report).into_bytes()),
            ("eval.txt", report::eval_table(&eval).into_bytes()),
            ("eval.kv", report::eval_kv(&eval).into_bytes()),
            ("confusion.csv", report::confusion_csv(&eval).into_bytes()),
        ];
        for (name, bytes) in files {
            let path = dir.join(name);
            write_atomic(&path, &bytes)?;
            manifest.output(&path)?;
        }
        let line = format!("run {:>2} seed {seed}: mean FDR {:.3}", i + 1, eval.mean_fdr);
        println!("{line}");
        summary.push_str(&line);
        summary.push('\n');
        means.push(eval.mean_fdr);
    }
    let mean = means.iter().sum::<f64>() / means.len() as f64;
    let sd = std_dev(&means);
    let agg_line = format!("aggregate over {repeats} run(s): mean FDR {mean:.3} +/- {sd:.3}");
    println!("{agg_line}");
    summary.push_str(&agg_line);
    summary.push('\n');
    let mut kv = format!("repeats={repeats}\nmean_fdr.mean={mean:.3}\nmean_fdr.std={sd:.3}\n");
    for (i, m) in means.iter().enumerate() {
        kv.push_str(&format!("run.{}.mean_fdr={m:.3}\n", i + 1));
    }
    for (name, text) in [("aggregate.kv", kv), ("summary.txt", summary)] {
        let path = a.out.join(name);
        write_text(&path, &text)?;
        manifest.output(&path)?;
    }
    manifest.emit(Some(&a.manifest.unwrap_or_else(|| a.out.join("manifest.json"))))
}

fn cmd_eval(a: EvalArgs, data: PathBuf) -> AppResult<()> {
    if !a.checkpoint.is_file() {
        return Err(AppError::input(format!("{}: no such checkpoint", a.checkpoint.display())));
    }
    let archive = Archive::read(&data)?;
    let net = checkpoint::load(&a.checkpoint)?;
    if let Some(model) = &a.model {
        let m = &archive.meta;
        let spec = load_model(model, m.classes, m.height, m.width, a.channel_divisor.unwrap_or(1))?;
        if checkpoint::spec_hash(&spec) != checkpoint::spec_hash(net.spec()) {
            return Err(AppError::input(format!(
                "{}: checkpoint holds `{}`, which does not match `{model}` (spec hash mismatch)",
                a.checkpoint.display(),
                net.spec().name
            )));
        }
    }
    let split = match a.split.as_str() {
        "test" => &archive.test,
        "train" => &archive.train,
        other => return Err(AppError::input(format!("unknown split `{other}`"))),
    };
    let eval: EvalReport = evaluate(&net, split)?;
    let table = report::eval_table(&eval);
    print!("{table}");
    let mut manifest = RunManifest::start(
        "eval",
        json!({"checkpoint": a.checkpoint, "data": data, "split": a.split, "model": a.model, "out": a.out}),
        None,
    );
    manifest.input(&a.checkpoint)?;
    manifest.input(&data)?;
    manifest.stdout(&table);
    let default_manifest = match &a.out {
        Some(dir) => {
            for (name, text) in [
                ("eval.txt", table.clone()),
                ("eval.kv", report::eval_kv(&eval)),
                ("confusion.csv", report::confusion_csv(&eval)),
            ] {
                let path = dir.join(name);
                write_text(&path, &text)?;
                manifest.output(&path)?;
            }
            Some(dir.join("manifest.json"))
        }
        None => None,
    };
    manifest.emit(a.manifest.or(default_manifest).as_deref())
}

fn cmd_compare(a: CompareArgs) -> AppResult<()> {
    let read = |p: &Path| -> AppResult<_> {
        let text = fs::read_to_string(p).map_err(|e| AppError::io(p, e))?;
        report::fdrs_from_kv(&text).map_err(|e| AppError::input(format!("{}: {e}", p.display())))
    };
    let (fa, fb) = (read(&a.a)?, read(&a.b)?);
    let cmp = compare_fdrs(&fa, &fb)?;
    let (na, nb) = match &a.names {
        Some(n) => n
            .split_once(',')
            .map(|(x, y)| (x.to_string(), y.to_string()))
            .ok_or_else(|| AppError::input("--names takes A,B"))?,
        None => ("A".into(), "B".into()),
    };
    let text = if a.kv {
        report::compare_kv(&cmp)
    } else {
        report::compare_table(&cmp, &na, &nb)
    };
    print!("{text}");
    let mut manifest = RunManifest::start("compare", json!({"a": a.a, "b": a.b, "names": a.names}), None);
    manifest.input(&a.a)?;
    manifest.input(&a.b)?;
    manifest.stdout(&text);
    manifest.emit(a.manifest.as_deref())
}

/// Diverging blue-white-red color for a correlation in [-1, 1].
fn heat(r: f64) -> [u8; 3] {
    let t = r.clamp(-1.0, 1.0);
    let fade = |x: f64| (255.0 * (1.0 - x.abs())).round() as u8;
    if t >= 0.0 {
        [255, fade(t), fade(t)]
    } else {
        [fade(t), fade(t), 255]
    }
}

fn cmd_corrmap(a: CorrmapArgs) -> AppResult<()> {
    let sub = a.raw.join(&a.split);
    let dir = if sub.is_dir() { sub } else { a.raw.clone() };
    if !dir.is_dir() {
        return Err(AppError::input(format!("{}: not a directory", dir.display())));
    }
    let set = ingest_dir(&dir)?;
    let opts = PrepareOptions {
        drop: drop_list(&a.drop),
        ..PrepareOptions::raw()
    };
    let drop = opts.effective_drop(&set.variables);
    let strs: Vec<&str> = drop.iter().map(String::as_str).collect();
    let set = preprocess(&set, &PreprocessConfig::new(&strs, a.onset))?;
    let samples = set.fault_samples(a.fault);
    if samples.is_empty() {
        return Err(AppError::input(format!("no samples for fault {}", a.fault)));
    }
    let corr = correlation_matrix(&samples, set.width())?;
    let v = set.width();
    let mut grid = String::from("variable");
    for name in &set.variables {
        grid.push(',');
        grid.push_str(name);
    }
    grid.push('\n');
    for (i, name) in set.variables.iter().enumerate() {
        grid.push_str(name);
        for j in 0..v {
            grid.push_str(&format!(",{:.6}", corr.get(i, j)));
        }
        grid.push('\n');
    }
    let mut manifest = RunManifest::start(
        "corrmap",
        json!({"raw": a.raw, "split": a.split, "fault": a.fault, "drop": drop, "onset": a.onset, "out": a.out, "png": a.png}),
        None,
    );
    manifest.input(&dir)?;
    write_text(&a.out, &grid)?;
    manifest.output(&a.out)?;
    if let Some(png) = &a.png {
        const CELL: u32 = 8;
        let side = v as u32 * CELL;
        let img = image::RgbImage::from_fn(side, side, |x, y| {
            image::Rgb(heat(corr.get((y / CELL) as usize, (x / CELL) as usize)))
        });
        let mut bytes = Vec::new();
        img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
            .map_err(|e| AppError::input(format!("{}: {e}", png.display())))?;
        write_atomic(png, &bytes)?;
        manifest.output(png)?;
    }
    println!(
        "fault {}: {}x{} correlation map from {} samples written to {}",
        a.fault,
        v,
        v,
        samples.len() / v,
        a.out.display()
    );
    manifest.emit(Some(&a.manifest.unwrap_or_else(|| beside(&a.out, ".manifest.json"))))
}
