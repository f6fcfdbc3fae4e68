//! `metafilter`: dataset generation, two-stage training, evaluation and
//! inverse design from the command line. Every command prints a JSON report
//! on stdout; failures print `{"error": {"kind", "message"}}` on stderr and
//! exit with status 1.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};

use metafilter_core::datagen::{generate_dataset, load_dataset, save_dataset, surrogate_spectrum, DeviceRecord};
use metafilter_core::encoding::{contrast_vector, gaussian_target, CONTRAST_LEN};
use metafilter_core::models::{
    load_generator, load_simulator, save_checkpoint, GeneratorArch, Metadata, SimulatorArch,
};
use metafilter_core::pipeline::{
    baseline_traverse, dataset_report, design, eval_generator, eval_simulator, split_dataset, train_generator,
    train_simulator, DesignMode, DesignTarget, LossCurve, TrainConfig,
};
use metafilter_core::{ContrastVector, Period, ShapeImage, Spectrum, SPECTRUM_LEN};

#[derive(Parser)]
#[command(name = "metafilter", version, about = "Inverse design of metasurface color filters")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Scale {
    /// Reduced widths and epochs that fit a single CPU core.
    Desk,
    /// Full-size networks and schedules.
    Full,
}

#[derive(Args)]
struct SplitArgs {
    /// Seed of the 80/20 train/validation split.
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random devices with surrogate spectra.
    Datagen {
        #[arg(long, default_value_t = 6500)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the forward simulator.
    TrainSim {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Scale::Desk)]
        scale: Scale,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_augment: bool,
        #[command(flatten)]
        split: SplitArgs,
    },
    /// Train the generator through a frozen simulator.
    TrainGen {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        sim: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Scale::Desk)]
        scale: Scale,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        noise_dim: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        split: SplitArgs,
    },
    /// Simulator MSE on the validation split (or every record with --all).
    EvalSim {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        all: bool,
        #[command(flatten)]
        split: SplitArgs,
    },
    /// Best-of-k oracle MSE of generated devices on the validation split.
    EvalGen {
        #[arg(long)]
        gen: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 4)]
        seeds: usize,
        /// Also report the simulator's error on the winning devices.
        #[arg(long)]
        sim: Option<PathBuf>,
        /// Evaluate at most this many targets.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        all: bool,
        #[command(flatten)]
        split: SplitArgs,
    },
    /// Spectrum of one device from a checkpoint or the surrogate solver.
    Simulate {
        #[arg(long, conflicts_with = "oracle", required_unless_present = "oracle")]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        oracle: bool,
        /// 64×64 PGM image (P2 or P5).
        #[arg(long)]
        shape: PathBuf,
        /// Period in nm, 200 to 400.
        #[arg(long)]
        period: u16,
    },
    /// Generate, binarize and rank candidate devices for a target.
    Design {
        #[arg(long)]
        gen: PathBuf,
        /// JSON: 58 transmittances, 14 contrasts, or
        /// {"gaussian": {"mean": 600, "sigma": 40, "amplitude": 0.9}}.
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value = "encoded")]
        mode: String,
        #[arg(long, default_value_t = 4)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Nearest dataset record to a target spectrum.
    Baseline {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        target: PathBuf,
    },
    /// Contrast vector of a spectrum.
    Encode {
        #[arg(long)]
        spectrum: PathBuf,
    },
    /// TM halves sorted by minimum wavelength, as CSV.
    Report {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TargetFile {
    Values(Vec<f64>),
    Gaussian { gaussian: GaussianSpec },
}

#[derive(Deserialize)]
struct GaussianSpec {
    mean: f64,
    sigma: f64,
    amplitude: f64,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_target(path: &Path) -> Result<DesignTarget> {
    Ok(match read_json::<TargetFile>(path)? {
        TargetFile::Gaussian { gaussian: g } => DesignTarget::Spectrum(gaussian_target(g.mean, g.sigma, g.amplitude)?),
        TargetFile::Values(v) if v.len() == SPECTRUM_LEN => DesignTarget::Spectrum(Spectrum::from_f64(&v)?),
        TargetFile::Values(v) if v.len() == CONTRAST_LEN => DesignTarget::Contrast(ContrastVector::new(&v)?),
        TargetFile::Values(v) => bail!("target has {} values; expected {SPECTRUM_LEN} or {CONTRAST_LEN}", v.len()),
    })
}

fn read_spectrum(path: &Path) -> Result<Spectrum> {
    match read_target(path)? {
        DesignTarget::Spectrum(s) => Ok(s),
        DesignTarget::Contrast(_) => bail!("{} holds a contrast vector, not a spectrum", path.display()),
    }
}

fn splits(data: &Path, seed: u64) -> Result<(Vec<DeviceRecord>, Vec<DeviceRecord>)> {
    Ok(split_dataset(&load_dataset(data)?, seed)?)
}

/// Curve file written next to a checkpoint.
fn write_curve(out: &Path, curve: &LossCurve) -> Result<PathBuf> {
    let path = out.with_extension("csv");
    fs::write(&path, curve.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn curve_summary(curve: &LossCurve) -> Value {
    let last = curve.epochs.last();
    json!({
        "epochs": curve.epochs.len(),
        "initial_val": curve.initial_val,
        "final_train": last.map(|e| e.train),
        "final_val": last.and_then(|e| e.val),
        "final_near_binarity": last.and_then(|e| e.near_binarity),
        "quarter_means": curve.quarter_means(),
    })
}

fn run(cmd: Command) -> Result<Value> {
    let start = Instant::now();
    let mut report = match cmd {
        Command::Datagen { count, seed, out } => {
            let data = generate_dataset(count, seed)?;
            save_dataset(&data, &out)?;
            json!({ "records": data.len(), "seed": seed, "out": out })
        }
        Command::TrainSim { data, out, scale, epochs, batch, lr, seed, no_augment, split } => {
            let (train, val) = splits(&data, split.split_seed)?;
            let (arch, base) = match scale {
                Scale::Desk => (SimulatorArch::desk(), TrainConfig::simulator_desk()),
                Scale::Full => (SimulatorArch::default(), TrainConfig::simulator_full()),
            };
            let cfg = TrainConfig {
                epochs: epochs.unwrap_or(base.epochs),
                batch_size: batch.unwrap_or(base.batch_size),
                lr: lr.unwrap_or(base.lr),
                augment: !no_augment,
                seed,
                ..base
            };
            let (sim, curve) = train_simulator(&train, &val, arch, &cfg)?;
            let curve_path = write_curve(&out, &curve)?;
            let meta = Metadata { epochs: cfg.epochs, seed, loss_history: Some(curve_path.display().to_string()) };
            save_checkpoint(&sim, &meta, &out)?;
            json!({ "out": out, "curve": curve_path, "config": cfg, "train": train.len(), "val": val.len(), "summary": curve_summary(&curve) })
        }
        Command::TrainGen { data, sim, out, scale, epochs, batch, alpha, beta, noise_dim, seed, split } => {
            let (train, val) = splits(&data, split.split_seed)?;
            let (mut simulator, _) = load_simulator(&sim)?;
            simulator.freeze();
            let (mut arch, base) = match scale {
                Scale::Desk => (GeneratorArch::desk(), TrainConfig::generator_desk()),
                Scale::Full => (GeneratorArch::default(), TrainConfig::generator_full()),
            };
            if let Some(d) = noise_dim {
                arch.noise_dim = d;
            }
            let cfg = TrainConfig {
                epochs: epochs.unwrap_or(base.epochs),
                batch_size: batch.unwrap_or(base.batch_size),
                alpha: alpha.unwrap_or(base.alpha),
                beta: beta.unwrap_or(base.beta),
                seed,
                ..base
            };
            let (gen, curve) = train_generator(&train, &val, &simulator, arch, &cfg)?;
            let curve_path = write_curve(&out, &curve)?;
            let meta = Metadata { epochs: cfg.epochs, seed, loss_history: Some(curve_path.display().to_string()) };
            save_checkpoint(&gen, &meta, &out)?;
            json!({ "out": out, "curve": curve_path, "config": cfg, "train": train.len(), "val": val.len(), "summary": curve_summary(&curve) })
        }
        Command::EvalSim { ckpt, data, all, split } => {
            let (mut sim, _) = load_simulator(&ckpt)?;
            sim.freeze();
            let records = if all { load_dataset(&data)? } else { splits(&data, split.split_seed)?.1 };
            serde_json::to_value(eval_simulator(&sim, &records)?)?
        }
        Command::EvalGen { gen, data, seeds, sim, limit, seed, all, split } => {
            let (generator, _) = load_generator(&gen)?;
            let simulator = sim.map(|p| load_simulator(&p)).transpose()?.map(|(mut s, _)| {
                s.freeze();
                s
            });
            let mut records = if all { load_dataset(&data)? } else { splits(&data, split.split_seed)?.1 };
            if let Some(n) = limit {
                records.truncate(n);
            }
            serde_json::to_value(eval_generator(&generator, simulator.as_ref(), &records, seeds, seed)?)?
        }
        Command::Simulate { ckpt, oracle, shape, period } => {
            let bytes = fs::read(&shape).with_context(|| format!("reading {}", shape.display()))?;
            let shape = ShapeImage::from_pgm(&bytes)?;
            let period = Period::new(period)?;
            let spectrum = match ckpt {
                Some(path) if !oracle => load_simulator(&path)?.0.simulate(&shape, period)?,
                _ => surrogate_spectrum(&shape, period)?,
            };
            json!({ "source": if oracle { "oracle" } else { "simulator" }, "period_nm": period.nm(), "spectrum": spectrum })
        }
        Command::Design { gen, target, mode, seeds, seed, out_dir } => {
            let (generator, _) = load_generator(&gen)?;
            let mode: DesignMode = mode.parse()?;
            let target = read_target(&target)?;
            let cands = design(&generator, &target, seeds, mode, seed)?;
            let mut files = Vec::new();
            if let Some(dir) = &out_dir {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                for (rank, c) in cands.iter().enumerate() {
                    let path = dir.join(format!("candidate_{rank}.pgm"));
                    fs::write(&path, c.shape().to_pgm()).with_context(|| format!("writing {}", path.display()))?;
                    files.push(path);
                }
            }
            let best_min_nm = cands.first().map(|c| {
                let tm = c.spectrum.tm();
                let k = (0..tm.len()).fold(0, |b, k| if tm[k] < tm[b] { k } else { b });
                metafilter_core::datagen::wavelength_nm(k)
            });
            let report = json!({ "mode": mode, "seed": seed, "candidates": cands, "images": files, "best_tm_minimum_nm": best_min_nm });
            if let Some(dir) = &out_dir {
                fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
            }
            report
        }
        Command::Baseline { data, target } => {
            let records = load_dataset(&data)?;
            let hit = baseline_traverse(&records, &read_spectrum(&target)?)?;
            json!({ "index": hit.index, "mse": hit.mse, "period_nm": hit.record.period.nm(), "spectrum": hit.record.spectrum })
        }
        Command::Encode { spectrum } => {
            let c = contrast_vector(&read_spectrum(&spectrum)?);
            json!({ "contrast": c })
        }
        Command::Report { data, out } => {
            let r = dataset_report(&load_dataset(&data)?)?;
            fs::write(&out, r.to_csv()).with_context(|| format!("writing {}", out.display()))?;
            json!({ "rows": r.rows.len(), "out": out, "histogram": r.histogram })
        }
    };
    if let Value::Object(map) = &mut report {
        map.entry("elapsed_s").or_insert(json!(start.elapsed().as_secs_f64()));
    }
    Ok(report)
}

fn error_object(err: &anyhow::Error) -> Value {
    let kind = err
        .chain()
        .find_map(|e| e.downcast_ref::<metafilter_core::Error>())
        .map(|e| e.kind())
        .or_else(|| err.chain().find_map(|e| e.downcast_ref::<std::io::Error>()).map(|_| "io"))
        .or_else(|| err.chain().find_map(|e| e.downcast_ref::<serde_json::Error>()).map(|_| "json"))
        .unwrap_or("invalid_argument");
    json!({ "error": { "kind": kind, "message": format!("{err:#}") } })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("reports serialize"));
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", error_object(&err));
            ExitCode::FAILURE
        }
    }
}
