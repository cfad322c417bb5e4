//! Command-line front end.
//!
//! Results are JSON objects, one per line, on stdout; progress and tables go
//! to stderr. The first stdout line of every run is the resolved
//! configuration including the seed. Options may also come from a flat
//! `key = value` file given with `--config`; flags on the command line win.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{parser::ValueSource, ArgAction, ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::analysis::{
    bd_rate, filter_mosaic, inference_gap_probe, median, par_map, traverse, ProbeConfig, RdCurve,
    RdPoint,
};
use crate::bitstream::{pack, unpack};
use crate::data::{load_dir, synthetic_image, SyntheticKind};
use crate::encoder::{decode, pad_image, transmit, EncodeConfig, EncodeMode, TempSchedule};
use crate::error::Error;
use crate::image::{list_ppm_files, load_image, mse255, psnr, save_image, Image};
use crate::models::{checkpoint, macs, Arch, Codec, ModelConfig};
use crate::trainer::{train_codec, write_log, TrainConfig, Trainable};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_MISSING: i32 = 2;
pub const EXIT_INTEGRITY: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "shallow-ntc",
    version,
    about = "Shallow-decoder learned image codec: training, coding and analysis"
)]
pub struct Cli {
    /// Flat key=value file with defaults for any long option.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Images processed in parallel.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a codec on a directory of PPM images or a synthetic set.
    Train(TrainArgs),
    /// Encode one PPM image into a bitstream.
    Encode(EncodeArgs),
    /// Decode a bitstream into a PPM image.
    Decode(DecodeArgs),
    /// R-D points over images, BD-rate between curves, PSNR of a decoded file
    /// or a filter mosaic.
    Eval(EvalArgs),
    /// Decoder MACs per pixel.
    Flops(FlopsArgs),
    /// Decode straight latent paths between images.
    Traverse(TraverseArgs),
    /// Per-image cost of one-shot, iterative and SGA encoding.
    Probe(ProbeArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Directory of training PPMs.
    #[arg(long, conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,
    /// Train on generated images instead (dead-leaves or blobs).
    #[arg(long)]
    pub synthetic: Option<SyntheticKind>,
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    #[arg(long, default_value_t = 128)]
    pub image_size: usize,
    /// Checkpoint path; the log goes to `{out}.csv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Start from this checkpoint instead of a random model.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, default_value_t = Arch::JpegLike)]
    pub arch: Arch,
    #[arg(long, default_value_t = 192)]
    pub channels: usize,
    #[arg(long, default_value_t = 18)]
    pub kernel: usize,
    #[arg(long, default_value_t = 16)]
    pub stride: usize,
    #[arg(long, default_value_t = 12)]
    pub hidden: usize,
    #[arg(long, default_value_t = 13)]
    pub k1: usize,
    #[arg(long, default_value_t = 8)]
    pub s1: usize,
    #[arg(long, default_value_t = 5)]
    pub k2: usize,
    #[arg(long, default_value_t = 2)]
    pub s2: usize,
    #[arg(long, default_value_t = 64)]
    pub filters: usize,
    #[arg(long, default_value_t = 5)]
    pub analysis_kernel: usize,
    /// Analysis depth; default is one stride-2 layer per factor of two.
    #[arg(long)]
    pub analysis_layers: Option<usize>,
    /// Enable the hyperprior with this many hyper-latent channels.
    #[arg(long)]
    pub hyper_channels: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    pub lambda: f64,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 64)]
    pub patch_size: usize,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr_initial: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub lr_final: f64,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub log_every: usize,
    /// Only train the entropy model.
    #[arg(long)]
    pub entropy_only: bool,
}

#[derive(Args, Debug, Clone)]
pub struct EncoderArgs {
    #[arg(long, default_value_t = EncodeMode::Oneshot)]
    pub mode: EncodeMode,
    #[arg(long, default_value_t = 0.01)]
    pub lambda: f64,
    #[arg(long, default_value_t = 3000)]
    pub steps: usize,
    #[arg(long, default_value_t = 5e-3)]
    pub lr: f64,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub encoder: EncoderArgs,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// One R-D point per checkpoint over the images of `--images`.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    /// Write the points as an R-D curve CSV.
    #[arg(long)]
    pub curve_out: Option<PathBuf>,
    #[arg(long, default_value = "codec")]
    pub label: String,
    /// BD-rate of the first curve CSV against the second.
    #[arg(long, num_args = 2, value_names = ["TEST", "ANCHOR"])]
    pub bd: Vec<PathBuf>,
    /// PSNR of `--decoded` against this image.
    #[arg(long, requires = "decoded")]
    pub reference: Option<PathBuf>,
    #[arg(long, requires = "reference")]
    pub decoded: Option<PathBuf>,
    /// Impulse-response mosaic of the first checkpoint.
    #[arg(long)]
    pub filters_out: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub filters_count: usize,
    #[arg(long, default_value_t = 4.0)]
    pub filters_delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum FlopsArch {
    JpegLike,
    TwoLayer,
    Hyper,
}

#[derive(Args, Debug)]
pub struct FlopsArgs {
    #[arg(long, value_enum, default_value_t = FlopsArch::JpegLike)]
    pub arch: FlopsArch,
    /// Describe a trained model instead of the shape flags.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long = "C", alias = "channels", default_value_t = 320)]
    pub c: u64,
    #[arg(long, default_value_t = 18)]
    pub k: u64,
    #[arg(long, default_value_t = 16)]
    pub s: u64,
    #[arg(long = "N", alias = "hidden", default_value_t = 12)]
    pub n: u64,
    #[arg(long, default_value_t = 13)]
    pub k1: u64,
    #[arg(long, default_value_t = 8)]
    pub s1: u64,
    #[arg(long, default_value_t = 5)]
    pub k2: u64,
    #[arg(long, default_value_t = 2)]
    pub s2: u64,
    #[arg(long, default_value_t = 320)]
    pub hyper_channels: u64,
    #[arg(long, default_value_t = macs::REPORT_SIZE)]
    pub height: u64,
    #[arg(long, default_value_t = macs::REPORT_SIZE)]
    pub width: u64,
}

#[derive(Args, Debug)]
pub struct TraverseArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, requires = "x1")]
    pub x0: Option<PathBuf>,
    #[arg(long, requires = "x0")]
    pub x1: Option<PathBuf>,
    /// Random crop pairs drawn from this directory.
    #[arg(long, conflicts_with = "x0")]
    pub images: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub pairs: usize,
    #[arg(long, default_value_t = 16)]
    pub crop: usize,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// Per-t MSE series of the single pair.
    #[arg(long)]
    pub series_out: Option<PathBuf>,
    /// `(D, eta)` of every pair.
    #[arg(long)]
    pub scatter_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ProbeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub lambda: f64,
    #[arg(long, default_value_t = 3000)]
    pub steps: usize,
    #[arg(long, default_value_t = 5e-3)]
    pub lr: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::EmptyDataset(_) => EXIT_MISSING,
        Error::PpmHeader(_)
        | Error::PpmTruncated { .. }
        | Error::PpmMaxval(_)
        | Error::TruncatedStream
        | Error::TrailingBytes(_)
        | Error::CdfMismatch
        | Error::BadMagic { .. }
        | Error::UnsupportedVersion(_)
        | Error::HashMismatch { .. }
        | Error::Checkpoint(_)
        | Error::Bitstream(_) => EXIT_INTEGRITY,
        Error::Diverged { .. }
        | Error::NonFinite { .. }
        | Error::ScaleBelowFloor(_)
        | Error::SymbolOutOfSupport { .. } => EXIT_NUMERIC,
        Error::Shape(_)
        | Error::InvalidArgument(_)
        | Error::Config(_)
        | Error::NoOverlap
        | Error::TooFewPoints(_) => EXIT_USAGE,
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// `key = value` pairs; blank lines and `#` comments are skipped.
pub fn parse_config_file(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {}: expected key = value", n + 1)))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(CliError::usage(format!("config line {}: empty key", n + 1)));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn subcommand_of(m: &ArgMatches) -> CliResult<(&str, &ArgMatches)> {
    m.subcommand().ok_or_else(|| CliError::usage("missing subcommand"))
}

/// Appends config-file options the command line did not set.
fn merge_config(args: &[OsString], matches: &ArgMatches) -> CliResult<Vec<OsString>> {
    let Some(path) = matches.get_one::<PathBuf>("config") else {
        return Ok(args.to_vec());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::from(Error::io(path, e)))?;
    let (name, sub) = subcommand_of(matches)?;
    let root = Cli::command();
    let cmd = root
        .find_subcommand(name)
        .ok_or_else(|| CliError::usage(format!("unknown subcommand {name}")))?;
    let mut merged = args.to_vec();
    for (key, value) in parse_config_file(&text)? {
        if key == "config" {
            return Err(CliError::usage("config files cannot include other config files"));
        }
        let arg = cmd
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()) || a.get_all_aliases().is_some_and(|al| al.contains(&key.as_str())))
            .ok_or_else(|| CliError::usage(format!("unknown config key {key:?} for {name}")))?;
        let id = arg.get_id().as_str();
        let from_cli = [sub, matches]
            .iter()
            .any(|m| m.try_contains_id(id).unwrap_or(false) && m.value_source(id) == Some(ValueSource::CommandLine));
        if from_cli {
            continue;
        }
        let flag = format!("--{}", arg.get_long().unwrap_or(id));
        match arg.get_action() {
            ArgAction::SetTrue => match value.as_str() {
                "true" | "1" | "yes" => merged.push(flag.into()),
                "false" | "0" | "no" => {}
                other => return Err(CliError::usage(format!("{key}: expected a boolean, got {other:?}"))),
            },
            _ => {
                merged.push(flag.into());
                merged.extend(value.split_whitespace().map(OsString::from));
            }
        }
    }
    Ok(merged)
}

/// Every option with a value, as strings.
fn resolved(matches: &ArgMatches) -> Map<String, Value> {
    let root = Cli::command();
    let mut known: Vec<String> = root.get_arguments().map(|a| a.get_id().to_string()).collect();
    if let Some(cmd) = matches.subcommand_name().and_then(|n| root.find_subcommand(n)) {
        known.extend(cmd.get_arguments().map(|a| a.get_id().to_string()));
    }
    let mut map = Map::new();
    let mut add = |m: &ArgMatches| {
        for id in m.ids() {
            let id = id.as_str();
            if !known.iter().any(|k| k == id) {
                continue;
            }
            if let Ok(Some(raw)) = m.try_get_raw(id) {
                let vals: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
                let v = if vals.len() == 1 {
                    Value::String(vals[0].clone())
                } else {
                    Value::from(vals)
                };
                map.insert(id.to_string(), v);
            }
        }
    };
    add(matches);
    if let Some((_, sub)) = matches.subcommand() {
        add(sub);
    }
    map
}

fn emit(v: Value) {
    use std::io::Write;
    // a closed pipe is not an error worth dying for
    let _ = writeln!(std::io::stdout().lock(), "{v}");
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    match run_inner(&args) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            if !e.message.is_empty() {
                eprintln!("error: {}", e.message);
            }
            e.code
        }
    }
}

fn parse(args: &[OsString]) -> CliResult<ArgMatches> {
    Cli::command().try_get_matches_from(args).map_err(|e| {
        use clap::error::ErrorKind;
        let code = match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
            _ => EXIT_USAGE,
        };
        let _ = e.print();
        CliError {
            code,
            message: String::new(),
        }
    })
}

fn run_inner(args: &[OsString]) -> CliResult {
    let first = parse(args)?;
    let merged = merge_config(args, &first)?;
    let matches = if merged.len() == args.len() { first } else { parse(&merged)? };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CliError::usage(e.to_string()))?;
    let (name, _) = subcommand_of(&matches)?;
    emit(json!({
        "event": "config",
        "command": name,
        "seed": cli.seed,
        "config": Value::Object(resolved(&matches)),
    }));
    if cli.jobs == 0 {
        return Err(CliError::usage("--jobs must be at least 1"));
    }
    match &cli.command {
        Command::Train(a) => cmd_train(&cli, a),
        Command::Encode(a) => cmd_encode(&cli, a),
        Command::Decode(a) => cmd_decode(a),
        Command::Eval(a) => cmd_eval(&cli, a),
        Command::Flops(a) => cmd_flops(a),
        Command::Traverse(a) => cmd_traverse(&cli, a),
        Command::Probe(a) => cmd_probe(&cli, a),
    }
}

fn load_checkpoint(path: &Path) -> CliResult<(Codec, u64)> {
    Ok(checkpoint::load(path)?)
}

fn write_text(path: &Path, text: &str) -> CliResult {
    std::fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn named_images(dir: &Path) -> CliResult<Vec<(String, Image)>> {
    let files = list_ppm_files(dir)?;
    if files.is_empty() {
        return Err(Error::EmptyDataset(dir.to_path_buf()).into());
    }
    files
        .iter()
        .map(|p| {
            let name = p.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
            Ok((name, load_image(p)?))
        })
        .collect()
}

fn encode_config(cli: &Cli, a: &EncoderArgs) -> CliResult<EncodeConfig> {
    let cfg = EncodeConfig {
        mode: a.mode,
        lambda: a.lambda,
        steps: a.steps,
        lr: a.lr,
        schedule: TempSchedule::default(),
        seed: cli.seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> CliResult {
    let start = Instant::now();
    let images = match (&a.data, a.synthetic) {
        (Some(dir), _) => load_dir(dir)?,
        (None, Some(kind)) => (0..a.count)
            .map(|i| synthetic_image(kind, a.image_size, a.image_size, cli.seed.wrapping_mul(1_000_003).wrapping_add(i as u64)))
            .collect(),
        (None, None) => return Err(CliError::usage("train needs --data DIR or --synthetic KIND")),
    };
    let init = match &a.init {
        Some(p) => load_checkpoint(p)?.0,
        None => Codec::random(
            &ModelConfig {
                arch: a.arch,
                channels: a.channels,
                kernel: a.kernel,
                stride: a.stride,
                hidden: a.hidden,
                k1: a.k1,
                s1: a.s1,
                k2: a.k2,
                s2: a.s2,
                filters: a.filters,
                analysis_kernel: a.analysis_kernel,
                analysis_layers: a.analysis_layers,
                hyper_channels: a.hyper_channels,
                ..ModelConfig::default()
            },
            cli.seed,
        )?,
    };
    let cfg = TrainConfig {
        lambda: a.lambda,
        batch_size: a.batch_size,
        patch_size: a.patch_size,
        steps: a.steps,
        lr_initial: a.lr_initial,
        lr_final: a.lr_final,
        lr_switch: 0.9,
        seed: cli.seed,
        checkpoint_every: a.checkpoint_every,
        log_every: a.log_every,
        trainable: if a.entropy_only { Trainable::EntropyOnly } else { Trainable::All },
    };
    eprintln!("training {} parameters on {} images", init.num_parameters(), images.len());
    let out = train_codec(&cfg, &images, init, Some(&a.out))?;
    let mut log_path = a.out.clone().into_os_string();
    log_path.push(".csv");
    let log_path = PathBuf::from(log_path);
    write_log(&log_path, &out.log)?;
    let last = out.log.last();
    emit(json!({
        "checkpoint": a.out,
        "log": log_path,
        "steps": a.steps,
        "hash": format!("{:016x}", out.codec.param_hash()),
        "loss": last.map(|r| r.loss),
        "bpp": last.map(|r| r.bpp),
        "mse": last.map(|r| r.mse),
        "seconds": start.elapsed().as_secs_f64(),
    }));
    Ok(())
}

fn cmd_encode(cli: &Cli, a: &EncodeArgs) -> CliResult {
    let start = Instant::now();
    let x = load_image(&a.input)?;
    let (codec, hash) = load_checkpoint(&a.checkpoint)?;
    let cfg = encode_config(cli, &a.encoder)?;
    let (bs, stats) = transmit(&x, &cfg, &codec, hash)?;
    let bytes = pack(&bs)?;
    std::fs::write(&a.out, &bytes).map_err(|e| CliError::from(Error::io(&a.out, e)))?;
    emit(json!({
        "bpp": stats.bpp,
        "psnr": stats.psnr,
        "cost": stats.cost,
        "mode": cfg.mode.to_string(),
        "model_bits": stats.model_bits,
        "bytes": bytes.len(),
        "seconds": start.elapsed().as_secs_f64(),
    }));
    Ok(())
}

fn cmd_decode(a: &DecodeArgs) -> CliResult {
    let start = Instant::now();
    let bytes = std::fs::read(&a.input).map_err(|e| CliError::from(Error::io(&a.input, e)))?;
    let (codec, hash) = load_checkpoint(&a.checkpoint)?;
    let bs = unpack(&bytes)?;
    let img = decode(&bs, &codec, hash)?;
    save_image(&img, &a.out)?;
    emit(json!({
        "out": a.out,
        "height": img.height(),
        "width": img.width(),
        "seconds": start.elapsed().as_secs_f64(),
    }));
    Ok(())
}

fn cmd_eval(cli: &Cli, a: &EvalArgs) -> CliResult {
    let mut did = false;
    if let (Some(r), Some(d)) = (&a.reference, &a.decoded) {
        let (x, y) = (load_image(r)?, load_image(d)?);
        emit(json!({ "reference": r, "decoded": d, "psnr": psnr(&x, &y)?, "mse": mse255(&x, &y)? }));
        did = true;
    }
    if let Some(dir) = &a.images {
        if a.checkpoint.is_empty() {
            return Err(CliError::usage("--images needs at least one --checkpoint"));
        }
        let images = named_images(dir)?;
        let cfg = encode_config(cli, &a.encoder)?;
        let mut points = Vec::new();
        for path in &a.checkpoint {
            let (codec, hash) = load_checkpoint(path)?;
            let stats = par_map(&images, cli.jobs, |(_, x)| Ok(transmit(x, &cfg, &codec, hash)?.1))?;
            for ((name, _), s) in images.iter().zip(&stats) {
                emit(json!({ "checkpoint": path, "image": name, "bpp": s.bpp, "psnr": s.psnr, "cost": s.cost }));
            }
            let n = stats.len() as f64;
            let p = RdPoint {
                bpp: stats.iter().map(|s| s.bpp).sum::<f64>() / n,
                psnr: stats.iter().map(|s| s.psnr).sum::<f64>() / n,
            };
            let cost = stats.iter().map(|s| s.cost).sum::<f64>() / n;
            emit(json!({ "checkpoint": path, "label": a.label, "bpp": p.bpp, "psnr": p.psnr, "cost": cost, "images": stats.len() }));
            points.push(p);
        }
        if let Some(out) = &a.curve_out {
            write_text(out, &RdCurve::new(a.label.clone(), points).csv())?;
        }
        did = true;
    }
    if let Some(out) = &a.filters_out {
        let path = a
            .checkpoint
            .first()
            .ok_or_else(|| CliError::usage("--filters-out needs --checkpoint"))?;
        let (codec, _) = load_checkpoint(path)?;
        let channels: Vec<usize> = (0..a.filters_count.min(codec.channels())).collect();
        save_image(&filter_mosaic(&codec.synthesis, &channels, a.filters_delta)?, out)?;
        emit(json!({ "filters": out, "channels": channels.len(), "delta": a.filters_delta }));
        did = true;
    }
    if !a.bd.is_empty() {
        let test = RdCurve::load(&a.bd[0])?;
        let anchor = RdCurve::load(&a.bd[1])?;
        let bd = bd_rate(&test, &anchor)?;
        eprintln!("BD-rate of {} against {}: {bd:.2}%", test.label, anchor.label);
        emit(json!({ "test": a.bd[0], "anchor": a.bd[1], "bd_rate_percent": bd, "bd_rate": format!("{bd:.2}%") }));
        did = true;
    }
    if !did {
        return Err(CliError::usage(
            "eval needs --images, --bd, --reference/--decoded or --filters-out",
        ));
    }
    Ok(())
}

fn cmd_flops(a: &FlopsArgs) -> CliResult {
    let start = Instant::now();
    let desc = match &a.checkpoint {
        Some(p) => macs::describe(&load_checkpoint(p)?.0),
        None => match a.arch {
            FlopsArch::JpegLike => macs::jpeg_like(a.c, a.k, a.s),
            FlopsArch::TwoLayer => macs::two_layer(a.c, a.n, a.k1, a.s1, a.k2, a.s2),
            FlopsArch::Hyper => macs::jpeg_like_hyper(a.c, a.k, a.s, a.hyper_channels),
        },
    };
    if a.height == 0 || a.width == 0 {
        return Err(CliError::usage("image size must be positive"));
    }
    let report = macs::mac_count(&desc, a.height, a.width);
    eprintln!("{report}");
    let layers: Vec<Value> = report
        .layer_kmac_per_pixel()
        .into_iter()
        .map(|(n, k)| json!({ "layer": n, "kmac_per_pixel": k }))
        .collect();
    emit(json!({
        "arch": report.label,
        "kmac_per_pixel": report.kmac_per_pixel(),
        "macs": report.total,
        "height": a.height,
        "width": a.width,
        "layers": layers,
        "seconds": start.elapsed().as_secs_f64(),
    }));
    Ok(())
}

fn cmd_traverse(cli: &Cli, a: &TraverseArgs) -> CliResult {
    let (codec, _) = load_checkpoint(&a.checkpoint)?;
    if let (Some(p0), Some(p1)) = (&a.x0, &a.x1) {
        // pad so that arbitrary sizes are accepted
        let x0 = pad_image(&load_image(p0)?, &codec)?;
        let x1 = pad_image(&load_image(p1)?, &codec)?;
        let r = traverse(&x0, &x1, &codec.analysis, &codec.synthesis, a.steps)?;
        if let Some(out) = &a.series_out {
            write_text(out, &r.csv())?;
        }
        emit(json!({ "x0": p0, "x1": p1, "length": r.length, "chord": r.chord, "eta": r.eta, "max_mse_recon": r.mse_recon.iter().cloned().fold(0.0, f64::max) }));
        return Ok(());
    }
    let dir = a
        .images
        .as_ref()
        .ok_or_else(|| CliError::usage("traverse needs --x0/--x1 or --images"))?;
    let images = load_dir(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let crop = |rng: &mut ChaCha8Rng| -> CliResult<Image> {
        let img = &images[rng.gen_range(0..images.len())];
        if img.height() < a.crop || img.width() < a.crop {
            return Err(CliError::usage(format!("crop {} exceeds an image", a.crop)));
        }
        let (t, l) = (rng.gen_range(0..=img.height() - a.crop), rng.gen_range(0..=img.width() - a.crop));
        Ok(img.crop(t, l, a.crop, a.crop)?)
    };
    let pairs: Vec<(Image, Image)> = (0..a.pairs)
        .map(|_| Ok((crop(&mut rng)?, crop(&mut rng)?)))
        .collect::<CliResult<_>>()?;
    let reports = par_map(&pairs, cli.jobs, |(x0, x1)| traverse(x0, x1, &codec.analysis, &codec.synthesis, a.steps))?;
    let mut scatter = String::from("D,eta\n");
    for (i, r) in reports.iter().enumerate() {
        scatter.push_str(&format!("{},{}\n", r.chord, r.eta));
        emit(json!({ "pair": i, "chord": r.chord, "length": r.length, "eta": r.eta }));
    }
    if let Some(out) = &a.scatter_out {
        write_text(out, &scatter)?;
    }
    let etas: Vec<f64> = reports.iter().map(|r| r.eta).collect();
    emit(json!({
        "pairs": reports.len(),
        "eta_median": median(etas.clone()),
        "eta_min": etas.iter().cloned().fold(f64::INFINITY, f64::min),
        "eta_max": etas.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    }));
    Ok(())
}

fn cmd_probe(cli: &Cli, a: &ProbeArgs) -> CliResult {
    let start = Instant::now();
    let (codec, _) = load_checkpoint(&a.checkpoint)?;
    let images = named_images(&a.images)?;
    let cfg = ProbeConfig {
        lambda: a.lambda,
        steps: a.steps,
        lr: a.lr,
        schedule: TempSchedule::default(),
        seed: cli.seed,
    };
    cfg.encode_config(EncodeMode::Sga).validate()?;
    let table = inference_gap_probe(&images, &codec, &cfg, cli.jobs)?;
    for r in &table.rows {
        emit(json!({
            "image": r.image,
            "cost_oneshot": r.oneshot.cost,
            "cost_iter": r.iterative.cost,
            "cost_sga": r.sga.cost,
            "delta_iter": r.delta_iterative(),
            "delta_sga": r.delta_sga(),
        }));
    }
    if let Some(out) = &a.out {
        write_text(out, &table.csv())?;
    }
    emit(json!({
        "images": table.rows.len(),
        "median_delta_sga": table.median_delta_sga(),
        "median_delta_iter": table.median_delta_iterative(),
        "sga_win_rate": table.sga_win_rate(),
        "seconds": start.elapsed().as_secs_f64(),
    }));
    Ok(())
}
