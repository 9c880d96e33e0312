//! `sconf`: experiment harness for learning from similarity-confidence pairs.

mod svg;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use sconf_core::datagen::{add_confidence_noise, GaussianSetup, SetupFile, PRESET_N_MINUS, PRESET_N_PLUS};
use sconf_core::dataset_io::BinaryCorruption;
use sconf_core::experiments::{
    self, CollapseConfig, ImageData, ImageDemoConfig, Pairing, PriorRun, SweepNConfig, SyntheticProtocol,
    SyntheticTrial, Table1Config,
};
use sconf_core::keyvalue::KeyValues;
use sconf_core::losses::{Label, LossKind};
use sconf_core::model::Architecture;
use sconf_core::numeric::mean;
use sconf_core::optim::AdamConfig;
use sconf_core::prior::estimate_prior_from_confidences;
use sconf_core::risk::{EstimatorKind, RiskSpec};
use sconf_core::trainer::{self, BatchSize, TrainConfig, TrainReport};
use sconf_core::Error;

#[derive(Parser)]
#[command(name = "sconf", version, about = "Learning binary classifiers from similarity-confidence pairs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Common {
    /// key=value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory [default: $SCONF_OUT_DIR, else the current directory]
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Table-1 accuracies on setups A-D for exact, noisy and supervised training
    ReproduceTable1 {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// One-sided collapse on the separated two-Gaussian setup
    CollapseDemo {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Excess 0-1 risk against the Bayes classifier over a grid of sample sizes
    SweepN {
        #[command(flatten)]
        common: Common,
        /// Preset name (A, B, C, D, collapse) or setup file
        #[arg(long)]
        setup: Option<String>,
        /// Ascending sample sizes, comma separated
        #[arg(long)]
        n_grid: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Accuracy over a grid of confidence-noise levels
    SweepNoise {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        setup: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Class-prior estimate from the mean confidence
    Prior {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        setup: Option<String>,
        /// CSV of pairs whose last column is the confidence
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one model from a configuration file
    Train {
        /// key=value configuration file
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Write a synthetic setup, its Sconf pairs and a labeled test set
    GenSynth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        setup: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // Skip causes whose text the outer message already shows.
            let mut msg = err.to_string();
            for cause in err.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 2 for configuration problems, 3 for unreadable or unusable data, 4 for
/// numeric guards.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::Usage(_) | Error::Contract(_) | Error::Dimension { .. }) => 2,
        Some(Error::Parse { .. } | Error::Io { .. } | Error::Data(_)) => 3,
        Some(Error::PriorTooBalanced { .. } | Error::DivisionGuard { .. }) => 4,
        None if err.downcast_ref::<std::io::Error>().is_some() => 3,
        None => 1,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::ReproduceTable1 { common, trials } => {
            let mut s = Settings::load(&common, TABLE1_KEYS)?;
            s.flag("trials", trials);
            reproduce_table1(&s, &out_dir(&common.out_dir)?)
        }
        Command::CollapseDemo { common, seed } => {
            let mut s = Settings::load(&common, COLLAPSE_KEYS)?;
            s.flag("seed", seed);
            collapse(&s, &out_dir(&common.out_dir)?)
        }
        Command::SweepN { common, setup, n_grid, trials } => {
            let mut s = Settings::load(&common, SWEEP_N_KEYS)?;
            s.flag("setup", setup);
            s.flag("n_grid", n_grid);
            s.flag("trials", trials);
            sweep_n(&s, &out_dir(&common.out_dir)?)
        }
        Command::SweepNoise { common, setup, trials } => {
            let mut s = Settings::load(&common, SWEEP_NOISE_KEYS)?;
            s.flag("setup", setup);
            s.flag("trials", trials);
            sweep_noise(&s, &out_dir(&common.out_dir)?)
        }
        Command::Prior { common, setup, pairs, n, seed } => {
            let mut s = Settings::load(&common, PRIOR_KEYS)?;
            s.flag("setup", setup);
            s.flag("pairs", pairs.map(|p| p.display().to_string()));
            s.flag("n", n);
            s.flag("seed", seed);
            prior(&s, &out_dir(&common.out_dir)?)
        }
        Command::Train { config, set, out_dir: dir } => {
            let common = Common { config: Some(config), set, out_dir: dir };
            let s = Settings::load(&common, TRAIN_KEYS)?;
            train(&s, &out_dir(&common.out_dir)?)
        }
        Command::GenSynth { common, setup, seed } => {
            let mut s = Settings::load(&common, GEN_SYNTH_KEYS)?;
            s.flag("setup", setup);
            s.flag("seed", seed);
            gen_synth(&s, &out_dir(&common.out_dir)?)
        }
    }
}

// ------------------------------------------------------------ settings

const TABLE1_KEYS: &[&str] =
    &["trials", "setups", "noise", "pairing", "epochs", "batch", "lr", "weight_decay", "lr_drop_every", "lr_factor"];
const COLLAPSE_KEYS: &[&str] = &["seed", "pairing", "n_pairs", "epochs", "batch", "lr", "weight_decay", "bins"];
const SWEEP_N_KEYS: &[&str] = &[
    "setup",
    "n_grid",
    "trials",
    "test_size",
    "estimator",
    "epochs",
    "batch",
    "lr",
    "weight_decay",
    "lr_drop_every",
    "lr_factor",
];
const SWEEP_NOISE_KEYS: &[&str] =
    &["setup", "noise", "trials", "pairing", "epochs", "batch", "lr", "weight_decay", "lr_drop_every", "lr_factor"];
const PRIOR_KEYS: &[&str] = &["setup", "pairs", "n", "seed", "noise_std"];
const GEN_SYNTH_KEYS: &[&str] = &["setup", "n_plus", "n_minus", "seed", "noise_std", "pairing"];
const TRAIN_KEYS: &[&str] = &[
    "seed",
    "setup",
    "n_plus",
    "n_minus",
    "noise_std",
    "pairing",
    "data_dir",
    "rule",
    "n_train",
    "n_val",
    "n_test",
    "split_train",
    "split_val",
    "confidence_epochs",
    "confidence_lr",
    "arch",
    "hidden",
    "estimator",
    "pi_plus",
    "epochs",
    "batch",
    "lr",
    "weight_decay",
    "lr_drop_every",
    "lr_factor",
    "eval_every",
];

/// Configuration file values overlaid with `--set` pairs and typed flags,
/// in that order of precedence.
struct Settings {
    kv: KeyValues,
    source: String,
}

impl Settings {
    fn load(common: &Common, allowed: &[&str]) -> sconf_core::Result<Settings> {
        let (mut kv, source) = match &common.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
                let kv = KeyValues::parse(&text, Some(allowed)).map_err(|e| match e {
                    Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
                    other => other,
                })?;
                (kv, path.display().to_string())
            }
            None => (KeyValues::default(), "command line".to_string()),
        };
        for item in &common.set {
            let (k, v) =
                item.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {item:?}")))?;
            let k = k.trim();
            if !allowed.contains(&k) {
                return Err(Error::Config(format!("--set: unknown key {k:?} (allowed: {})", allowed.join(", "))));
            }
            kv.set(k, v.trim());
        }
        Ok(Settings { kv, source })
    }

    fn flag<T: ToString>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.kv.set(key, v.to_string());
        }
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.kv.get(key)
    }

    fn f64_or(&self, key: &str, default: f64) -> sconf_core::Result<f64> {
        Ok(self.kv.parse_f64(key)?.unwrap_or(default))
    }

    fn usize_or(&self, key: &str, default: usize) -> sconf_core::Result<usize> {
        Ok(self.kv.parse_usize(key)?.unwrap_or(default))
    }

    fn seed(&self) -> sconf_core::Result<u64> {
        self.kv
            .parse_u64("seed")?
            .ok_or_else(|| Error::Config(format!("{}: this command needs an explicit seed", self.source)))
    }

    fn f64_list_or(&self, key: &str, default: &[f64]) -> sconf_core::Result<Vec<f64>> {
        Ok(self.kv.parse_f64_list(key)?.unwrap_or_else(|| default.to_vec()))
    }

    fn words(&self, key: &str) -> Option<Vec<String>> {
        self.get(key).map(|v| {
            v.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).map(String::from).collect()
        })
    }

    fn pairing_or(&self, default: Pairing) -> sconf_core::Result<Pairing> {
        self.get("pairing").map_or(Ok(default), Pairing::parse)
    }

    fn estimator_or(&self, default: EstimatorKind) -> sconf_core::Result<EstimatorKind> {
        self.get("estimator").map_or(Ok(default), EstimatorKind::parse)
    }

    fn batch_or(&self, default: BatchSize) -> sconf_core::Result<BatchSize> {
        match self.get("batch") {
            None => Ok(default),
            Some("full") => Ok(BatchSize::Full),
            Some(_) => Ok(BatchSize::Pairs(self.kv.parse_usize("batch")?.unwrap_or(0))),
        }
    }

    fn optim_over(&self, base: AdamConfig) -> sconf_core::Result<AdamConfig> {
        let optim = AdamConfig {
            lr0: self.f64_or("lr", base.lr0)?,
            weight_decay: self.f64_or("weight_decay", base.weight_decay)?,
            drop_every: self.usize_or("lr_drop_every", base.drop_every)?,
            factor: self.f64_or("lr_factor", base.factor)?,
            ..base
        };
        optim.validate()?;
        Ok(optim)
    }

    fn protocol(&self) -> sconf_core::Result<SyntheticProtocol> {
        let base = SyntheticProtocol::default();
        Ok(SyntheticProtocol {
            epochs: self.usize_or("epochs", base.epochs)?,
            optim: self.optim_over(base.optim)?,
            batch: self.batch_or(base.batch)?,
        })
    }

    /// `setup` as a preset name or a setup file; the file form also returns
    /// its counts and seed.
    fn setup_or(&self, default: &str) -> sconf_core::Result<(GaussianSetup, Option<SetupFile>)> {
        let name = self.get("setup").unwrap_or(default);
        if let Ok(setup) = GaussianSetup::preset(name) {
            return Ok((setup, None));
        }
        let path = Path::new(name);
        if !path.exists() && !name.contains(['/', '.']) {
            // Looks like a mistyped preset rather than a path.
            return GaussianSetup::preset(name).map(|s| (s, None));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
        let file = SetupFile::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        Ok((file.setup.clone(), Some(file)))
    }
}

fn out_dir(flag: &Option<PathBuf>) -> sconf_core::Result<PathBuf> {
    let dir = match flag {
        Some(d) => d.clone(),
        None => std::env::var_os("SCONF_OUT_DIR").map_or_else(|| PathBuf::from("."), PathBuf::from),
    };
    if dir.exists() && !dir.is_dir() {
        return Err(Error::Config(format!("output path {} exists and is not a directory", dir.display())));
    }
    Ok(dir)
}

// ------------------------------------------------------------- outputs

/// Files produced by a command, written only once the command succeeded.
#[derive(Default)]
struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), bytes.into()));
    }

    /// Writes every file to a temporary name first and renames only when
    /// all of them were written.
    fn commit(self, dir: &Path) -> anyhow::Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
        let mut staged = Vec::new();
        for (name, bytes) in &self.files {
            let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
            if let Err(e) = fs::write(&tmp, bytes) {
                for (t, _) in &staged {
                    let _ = fs::remove_file(t);
                }
                let _ = fs::remove_file(&tmp);
                return Err(Error::Io { path: tmp, source: e }.into());
            }
            staged.push((tmp, dir.join(name)));
        }
        for (tmp, dst) in staged {
            fs::rename(&tmp, &dst).map_err(|e| Error::Io { path: dst.clone(), source: e })?;
            println!("wrote {}", dst.display());
        }
        Ok(())
    }
}

/// Parsed CSV text: header and rows of raw fields.
fn read_csv(text: &str) -> anyhow::Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header = rd.headers()?.iter().map(String::from).collect();
    let rows = rd.records().map(|r| r.map(|rec| rec.iter().map(String::from).collect())).collect::<Result<_, _>>()?;
    Ok((header, rows))
}

fn column(header: &[String], name: &str) -> anyhow::Result<usize> {
    header.iter().position(|h| h == name).with_context(|| format!("CSV has no column {name:?}"))
}

fn num(field: &str) -> f64 {
    field.parse().unwrap_or(f64::NAN)
}

// ------------------------------------------------------------ commands

fn reproduce_table1(s: &Settings, dir: &Path) -> anyhow::Result<()> {
    let base = Table1Config::default();
    let cfg = Table1Config {
        setups: s.words("setups").unwrap_or(base.setups),
        trials: s.usize_or("trials", base.trials)?,
        noise_levels: s.f64_list_or("noise", &base.noise_levels)?,
        pairing: s.pairing_or(base.pairing)?,
        protocol: s.protocol()?,
    };
    for name in &cfg.setups {
        GaussianSetup::preset(name)?;
    }
    let rows = experiments::table1(&cfg)?;
    let csv_text = experiments::table1_csv(&rows);
    print!("{csv_text}");

    let (header, recs) = read_csv(&csv_text)?;
    let (ci, mi, ni, ai) = (
        column(&header, "setup")?,
        column(&header, "method")?,
        column(&header, "noise_std")?,
        column(&header, "mean_acc")?,
    );
    let mut categories: Vec<String> = Vec::new();
    let mut series: Vec<svg::Series> = Vec::new();
    for r in &recs {
        if !categories.contains(&r[ci]) {
            categories.push(r[ci].clone());
        }
        let label = if r[mi] == "supervised" { "supervised".to_string() } else { format!("sconf noise {}", r[ni]) };
        let c = categories.iter().position(|x| *x == r[ci]).unwrap_or(0) as f64;
        match series.iter_mut().find(|x| x.name == label) {
            Some(x) => x.points.push((c, num(&r[ai]))),
            None => series.push(svg::Series { name: label, points: vec![(c, num(&r[ai]))] }),
        }
    }
    let mut out = Outputs::default();
    out.add("table1.svg", svg::bar_chart("Mean test accuracy", "accuracy (%)", &categories, &series));
    out.add("table1.csv", csv_text);
    out.commit(dir)
}

fn collapse(s: &Settings, dir: &Path) -> anyhow::Result<()> {
    let base = CollapseConfig::standard(s.seed()?)?;
    let cfg = CollapseConfig {
        pairing: s.pairing_or(base.pairing)?,
        n_pairs: s.usize_or("n_pairs", base.n_pairs)?,
        epochs: s.usize_or("epochs", base.epochs)?,
        batch: s.usize_or("batch", base.batch)?,
        optim: s.optim_over(base.optim)?,
        ..base
    };
    let bins = s.usize_or("bins", 20)?;
    if bins == 0 {
        return Err(Error::Config("bins must be at least 1".into()).into());
    }
    let outcome = experiments::collapse_demo(&cfg)?;
    let methods_csv = outcome.csv();
    let hist_csv = outcome.histogram_csv(bins);
    let mut points_csv = String::from("x1,x2,y\n");
    for e in &outcome.test {
        let _ = writeln!(points_csv, "{},{},{}", e.x[0], e.x[1], if e.y == Label::Positive { 1 } else { -1 });
    }
    print!("{methods_csv}");

    let (h, recs) = read_csv(&methods_csv)?;
    let (mi, w1, w2, b) = (column(&h, "method")?, column(&h, "w1")?, column(&h, "w2")?, column(&h, "b")?);
    let lines: Vec<(String, [f64; 3])> = recs
        .iter()
        .filter(|r| !r[w1].is_empty())
        .map(|r| (r[mi].clone(), [num(&r[w1]), num(&r[w2]), num(&r[b])]))
        .collect();
    let (h, recs) = read_csv(&points_csv)?;
    let (xi, yi, li) = (column(&h, "x1")?, column(&h, "x2")?, column(&h, "y")?);
    let pts: Vec<(f64, f64, bool)> = recs.iter().map(|r| (num(&r[xi]), num(&r[yi]), r[li] == "1")).collect();
    let boundary = svg::boundary_chart("Decision boundaries on the test sample", &pts, &lines);

    let (h, recs) = read_csv(&hist_csv)?;
    let lo = column(&h, "bin_lo")?;
    let categories: Vec<String> = recs.iter().map(|r| format!("{:.2}", num(&r[lo]))).collect();
    let series: Vec<svg::Series> = ["similar", "dissimilar", "unlabeled"]
        .iter()
        .map(|name| {
            let c = column(&h, name)?;
            Ok(svg::Series {
                name: name.to_string(),
                points: recs.iter().enumerate().map(|(i, r)| (i as f64, num(&r[c]))).collect(),
            })
        })
        .collect::<anyhow::Result<_>>()?;
    let hist = svg::bar_chart("Similarity confidence", "pairs", &categories, &series);

    let mut out = Outputs::default();
    out.add("collapse.csv", methods_csv);
    out.add("collapse_points.csv", points_csv);
    out.add("collapse_hist.csv", hist_csv);
    out.add("collapse_boundary.svg", boundary);
    out.add("collapse_hist.svg", hist);
    out.commit(dir)
}

fn sweep_n(s: &Settings, dir: &Path) -> anyhow::Result<()> {
    let (setup, _) = s.setup_or("B")?;
    let base = SweepNConfig::standard(setup);
    let grid = match s.kv.parse_f64_list("n_grid")? {
        Some(v) => v
            .iter()
            .map(|&x| {
                if x >= 1.0 && x.fract() == 0.0 {
                    Ok(x as usize)
                } else {
                    Err(Error::Config(format!("n_grid entries must be positive integers, got {x}")))
                }
            })
            .collect::<sconf_core::Result<_>>()?,
        None => base.n_grid.clone(),
    };
    let cfg = SweepNConfig {
        n_grid: grid,
        trials: s.usize_or("trials", base.trials)?,
        test_size: s.usize_or("test_size", base.test_size)?,
        estimator: s.estimator_or(base.estimator)?,
        protocol: s.protocol()?,
        ..base
    };
    let outcome = experiments::sweep_n(&cfg)?;
    let csv_text = outcome.csv();
    print!("{csv_text}");
    let mut out = Outputs::default();
    if let Some(slope) = outcome.slope {
        println!("log-log slope {slope:.4}");
        out.add("sweep_n_slope.txt", format!("slope = {slope}\n"));
    }
    let (h, recs) = read_csv(&csv_text)?;
    let (ni, ei) = (column(&h, "n")?, column(&h, "mean_excess")?);
    let series =
        [svg::Series { name: "mean excess".into(), points: recs.iter().map(|r| (num(&r[ni]), num(&r[ei]))).collect() }];
    out.add("sweep_n.svg", svg::line_chart("Excess 0-1 risk", "n", "excess risk", &series, true));
    out.add("sweep_n.csv", csv_text);
    out.commit(dir)
}

fn sweep_noise(s: &Settings, dir: &Path) -> anyhow::Result<()> {
    let (setup, _) = s.setup_or("B")?;
    let stds = s.f64_list_or("noise", &[0.0, 0.1, 0.2, 0.3, 0.4, 0.5])?;
    let trials = s.usize_or("trials", 5)?;
    let rows = experiments::sweep_noise(&setup, &stds, trials, s.pairing_or(Pairing::AllPairs)?, &s.protocol()?)?;
    let csv_text = experiments::sweep_noise_csv(&rows);
    print!("{csv_text}");
    let (h, recs) = read_csv(&csv_text)?;
    let (ni, ai) = (column(&h, "noise_std")?, column(&h, "mean_acc")?);
    let series = [svg::Series {
        name: "mean accuracy".into(),
        points: recs.iter().map(|r| (num(&r[ni]), num(&r[ai]))).collect(),
    }];
    let mut out = Outputs::default();
    out.add(
        "sweep_noise.svg",
        svg::line_chart("Accuracy under confidence noise", "noise std", "accuracy (%)", &series, false),
    );
    out.add("sweep_noise.csv", csv_text);
    out.commit(dir)
}

fn prior(s: &Settings, dir: &Path) -> anyhow::Result<()> {
    let noise_std = s.f64_or("noise_std", 0.0)?;
    let run = match s.get("pairs") {
        Some(path) => {
            if s.get("setup").is_some() {
                return Err(Error::Config("give either setup or pairs, not both".into()).into());
            }
            let path = PathBuf::from(path);
            let text = fs::read_to_string(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            let (_, recs) =
                read_csv(&text).map_err(|e| Error::Parse { path: path.clone(), offset: 0, msg: e.to_string() })?;
            let conf: Vec<f64> = recs
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    r.last().and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| {
                        Error::Data(format!(
                            "{}: row {} has no numeric confidence in its last column",
                            path.display(),
                            i + 1
                        ))
                    })
                })
                .collect::<sconf_core::Result<_>>()?;
            let mut noisy = conf.clone();
            if noise_std > 0.0 {
                noisy = noisy_copy(&conf, noise_std, s.seed()?)?;
            }
            PriorRun { estimate: estimate_prior_from_confidences(&noisy)?, true_pi_plus: f64::NAN, noise_std }
        }
        None => {
            let (setup, _) = s.setup_or("A")?;
            let n = s.kv.parse_usize("n")?.ok_or_else(|| Error::Config("missing required key \"n\"".into()))?;
            experiments::prior_demo(&setup, n, noise_std, s.seed()?)?
        }
    };
    let e = &run.estimate;
    if run.small_sample() {
        eprintln!(
            "warning: only {} pairs; the prior estimate has wide sampling error below {} pairs",
            e.n,
            experiments::SMALL_SAMPLE_PAIRS
        );
    }
    println!("pairs           {}", e.n);
    println!("mean confidence {:.6}", e.pi_s_hat);
    println!("pi_plus_hat     {:.6}{}", e.pi_plus_hat, if e.clamped { " (clamped)" } else { "" });
    if run.true_pi_plus.is_finite() {
        println!("true pi_plus    {:.6}", run.true_pi_plus);
        println!("abs error       {:.6}", run.abs_error());
    }
    let mut out = Outputs::default();
    out.add("prior.csv", experiments::prior_csv(&[run]));
    out.commit(dir)
}

/// Clipped noise on bare confidences, reusing the dataset routine.
fn noisy_copy(conf: &[f64], std: f64, seed: u64) -> sconf_core::Result<Vec<f64>> {
    let ds = sconf_core::datagen::SconfDataset {
        pairs: conf.iter().map(|&s| sconf_core::datagen::SconfPair { x: vec![], x_prime: vec![], s }).collect(),
        provenance: sconf_core::datagen::Provenance::Exact,
    };
    Ok(add_confidence_noise(&ds, std, seed)?.confidences())
}

fn gen_synth(s: &Settings, dir: &Path) -> anyhow::Result<()> {
    let (setup, file) = s.setup_or("A")?;
    let seed = match (s.kv.parse_u64("seed")?, &file) {
        (Some(v), _) => v,
        (None, Some(f)) => f.seed,
        (None, None) => s.seed()?,
    };
    let n_plus = s.usize_or("n_plus", file.as_ref().map_or(PRESET_N_PLUS, |f| f.n_plus))?;
    let n_minus = s.usize_or("n_minus", file.as_ref().map_or(PRESET_N_MINUS, |f| f.n_minus))?;
    let noise_std = s.f64_or("noise_std", 0.0)?;
    let trial = SyntheticTrial::generate(&setup, n_plus, n_minus, seed);
    let (pairs, _, sigma_n) = trial.sconf_sets(&setup, s.pairing_or(Pairing::Disjoint)?, noise_std)?;

    let d = setup.dim();
    let names = |p: &str| (1..=d).map(|i| format!("{p}{i}")).collect::<Vec<_>>().join(",");
    let mut pairs_csv = format!("{},{},s\n", names("x"), names("xp"));
    for p in &pairs.pairs {
        let xs: Vec<String> = p.x.iter().chain(&p.x_prime).map(|v| v.to_string()).collect();
        let _ = writeln!(pairs_csv, "{},{}", xs.join(","), p.s);
    }
    let mut test_csv = format!("{},y\n", names("x"));
    for e in &trial.test {
        let xs: Vec<String> = e.x.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(test_csv, "{},{}", xs.join(","), if e.y == Label::Positive { 1 } else { -1 });
    }
    let setup_text = SetupFile { setup, n_plus, n_minus, seed }.to_text();
    println!("{} pairs, {} test points, sigma_n {sigma_n}", pairs.len(), trial.test.len());
    let mut out = Outputs::default();
    out.add("setup.txt", setup_text);
    out.add("pairs.csv", pairs_csv);
    out.add("test.csv", test_csv);
    out.commit(dir)
}

fn train(s: &Settings, dir: &Path) -> anyhow::Result<()> {
    let seed = s.seed()?;
    let estimator = s.estimator_or(EstimatorKind::Unbiased)?;
    let hidden = s.f64_list_or("hidden", &[500.0, 500.0])?;
    let [h1, h2] = hidden[..] else {
        return Err(Error::Config(format!("hidden must list two layer widths, got {hidden:?}")).into());
    };
    if h1 < 1.0 || h2 < 1.0 || h1.fract() != 0.0 || h2.fract() != 0.0 {
        return Err(Error::Config(format!("hidden widths must be positive integers, got {hidden:?}")).into());
    }
    let arch_for = |d: usize, default: &str| -> sconf_core::Result<Architecture> {
        match s.get("arch").unwrap_or(default) {
            "linear" => Ok(Architecture::Linear { d }),
            "mlp" => Ok(Architecture::Mlp { d, h1: h1 as usize, h2: h2 as usize }),
            other => Err(Error::Config(format!("arch must be linear or mlp, got {other:?}"))),
        }
    };
    let eval_every = s.usize_or("eval_every", 1)?;

    let (predictor, report, pi_plus) = match (s.get("data_dir"), s.get("setup")) {
        (Some(_), Some(_)) => {
            return Err(Error::Config("give either setup or data_dir, not both".into()).into());
        }
        (Some(data_dir), None) => {
            let data_dir = PathBuf::from(data_dir);
            if !data_dir.is_dir() {
                return Err(Error::Io {
                    path: data_dir,
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
                }
                .into());
            }
            let mut cfg = ImageDemoConfig::standard(data_dir, seed)?;
            cfg.rule = BinaryCorruption::preset(s.get("rule").unwrap_or("mnist"))?;
            cfg.n_train = s.usize_or("n_train", cfg.n_train)?;
            cfg.n_val = s.usize_or("n_val", cfg.n_val)?;
            cfg.n_test = s.kv.parse_usize("n_test")?.or(cfg.n_test);
            cfg.split = (s.usize_or("split_train", cfg.split.0)?, s.usize_or("split_val", cfg.split.1)?);
            cfg.epochs = s.usize_or("epochs", cfg.epochs)?;
            cfg.batch = s.usize_or("batch", cfg.batch)?;
            cfg.optim = s.optim_over(cfg.optim)?;
            cfg.confidence.epochs = s.usize_or("confidence_epochs", cfg.confidence.epochs)?;
            cfg.confidence.lr0 = s.f64_or("confidence_lr", cfg.confidence.lr0)?;
            cfg.pi_plus = s.kv.parse_f64("pi_plus")?;
            if estimator == EstimatorKind::Supervised {
                return Err(
                    Error::Config("the image pipeline trains on pairs; supervised is not available".into()).into()
                );
            }
            let data = ImageData::prepare(&cfg)?;
            println!(
                "{} training pairs, mean confidence {:.4}, hidden positive fraction {:.4}",
                data.train.len(),
                mean(&data.train.confidences()),
                data.train_positive_fraction
            );
            let mut tc = data.train_config(&cfg, estimator)?;
            tc.arch = arch_for(data.dim, "mlp")?;
            tc.eval_every = eval_every;
            let pi = tc.risk.pi_plus();
            let (p, r) = trainer::train(&data.train, &data.val, &data.test, &tc)?;
            (p, r, pi)
        }
        (None, _) => {
            let (setup, file) = s.setup_or("B")?;
            let n_plus = s.usize_or("n_plus", file.as_ref().map_or(PRESET_N_PLUS, |f| f.n_plus))?;
            let n_minus = s.usize_or("n_minus", file.as_ref().map_or(PRESET_N_MINUS, |f| f.n_minus))?;
            let pi = s.f64_or("pi_plus", setup.pi_plus)?;
            let base = SyntheticProtocol::default();
            let tc = TrainConfig {
                arch: arch_for(setup.dim(), "linear")?,
                risk: RiskSpec::new(estimator, pi, LossKind::Logistic)?,
                epochs: s.usize_or("epochs", base.epochs)?,
                batch: s.batch_or(base.batch)?,
                optim: s.optim_over(base.optim)?,
                seed,
                eval_every,
            };
            tc.validate()?;
            let trial = SyntheticTrial::generate(&setup, n_plus, n_minus, seed);
            let (p, r) = if estimator == EstimatorKind::Supervised {
                trainer::train_supervised(&trial.train, &trial.val, &trial.test, &tc)?
            } else {
                let noise = s.f64_or("noise_std", 0.0)?;
                let (tr, va, sigma_n) = trial.sconf_sets(&setup, s.pairing_or(Pairing::Disjoint)?, noise)?;
                let (p, mut r) = trainer::train(&tr, &va, &trial.test, &tc)?;
                r.sigma_n = sigma_n;
                (p, r)
            };
            (p, r, pi)
        }
    };

    let report_csv = report.to_csv();
    let mut ckpt = Vec::new();
    predictor.write_checkpoint(&mut ckpt)?;
    let summary = summary_text(&report, estimator, pi_plus, predictor.architecture());
    print!("{summary}");

    let (h, recs) = read_csv(&report_csv)?;
    let ei = column(&h, "epoch")?;
    let series: Vec<svg::Series> = ["train_risk", "val_risk", "test_01_risk"]
        .iter()
        .map(|name| {
            let c = column(&h, name)?;
            Ok(svg::Series { name: name.to_string(), points: recs.iter().map(|r| (num(&r[ei]), num(&r[c]))).collect() })
        })
        .collect::<anyhow::Result<_>>()?;
    let mut out = Outputs::default();
    out.add("report.csv", report_csv);
    out.add("model.ckpt", ckpt);
    out.add("summary.txt", summary);
    out.add("learning_curve.svg", svg::line_chart("Learning curve", "epoch", "risk", &series, false));
    out.commit(dir)
}

fn summary_text(report: &TrainReport, estimator: EstimatorKind, pi_plus: f64, arch: Architecture) -> String {
    let min_train = report.rows.iter().map(|r| r.train_risk).fold(f64::INFINITY, f64::min);
    let mut s = String::new();
    let _ = writeln!(s, "architecture = {}", arch.descriptor());
    let _ = writeln!(s, "estimator = {}", estimator.name());
    let _ = writeln!(s, "pi_plus = {pi_plus}");
    let _ = writeln!(s, "epochs = {}", report.rows.last().map_or(0, |r| r.epoch));
    let _ = writeln!(s, "best_epoch = {}", report.best_epoch);
    if let Some(b) = report.best() {
        let _ = writeln!(s, "best_val_risk = {}", b.val_risk);
        let _ = writeln!(s, "best_test_acc = {}", b.test_acc);
    }
    if let Some(l) = report.last() {
        let _ = writeln!(s, "final_test_acc = {}", l.test_acc);
    }
    let _ = writeln!(s, "min_train_risk = {min_train}");
    let _ = writeln!(s, "negative_train_risk = {}", min_train < 0.0);
    let _ = writeln!(s, "sigma_n = {}", report.sigma_n);
    s
}
