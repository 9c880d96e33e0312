//! Experiment drivers behind the CLI and the acceptance suite: the Table-1
//! protocol on the Gaussian setups, the one-sided collapse demonstration,
//! the sample-size and noise sweeps, prior estimation and the image
//! overfitting demonstration.

use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;

use crate::datagen::{
    add_confidence_noise, confidence_deviation, labeled_pairs, make_all_pairs, make_pairs, pair_with_posteriors,
    sample_dissimilar_pairs, sample_labeled, sample_mixture, sample_similar_pairs, GaussianSetup, LabeledExample,
    Provenance, SconfDataset, PRESET_N_MINUS, PRESET_N_PLUS,
};
use crate::dataset_io::{
    find_idx_pair, fit_posteriors, load_idx, split_indices, subsample_indices, BinaryCorruption, ConfidenceModelConfig,
    IdxDataset,
};
use crate::losses::{loss_value, Label, LossKind};
use crate::model::{Architecture, Predictor};
use crate::numeric::{mean, ols_slope, pairwise_sum, sample_std};
use crate::optim::AdamConfig;
use crate::prior::{estimate_prior, PriorEstimate};
use crate::risk::{EstimatorKind, RiskSpec};
use crate::rng::derive_seed;
use crate::trainer::{evaluate, train, train_supervised, BatchSize, TrainConfig, TrainReport};
use crate::{Error, Result};

/// Tags for [`derive_seed`], one per independent random quantity of a trial.
mod tag {
    pub const TRAIN: u64 = 11;
    pub const VAL: u64 = 12;
    pub const TEST: u64 = 13;
    pub const PAIR: u64 = 14;
    pub const NOISE: u64 = 15;
    pub const VAL_NOISE: u64 = 16;
    pub const INIT: u64 = 17;
    pub const SIMILAR: u64 = 18;
    pub const DISSIMILAR: u64 = 19;
}

/// How labeled-then-unlabeled points become training pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairing {
    /// Seeded permutation, consecutive points paired (`n/2` independent pairs).
    Disjoint,
    /// Every unordered pair of points.
    AllPairs,
}

impl Pairing {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "disjoint" => Ok(Pairing::Disjoint),
            "all" | "all-pairs" => Ok(Pairing::AllPairs),
            other => Err(Error::Config(format!("unknown pairing {other:?} (expected disjoint or all-pairs)"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Pairing::Disjoint => "disjoint",
            Pairing::AllPairs => "all-pairs",
        }
    }

    pub fn pair(&self, points: &[Vec<f64>], setup: &GaussianSetup, seed: u64) -> Result<SconfDataset> {
        match self {
            Pairing::Disjoint => make_pairs(points, setup, seed),
            Pairing::AllPairs => make_all_pairs(points, setup),
        }
    }
}

fn strip(ex: &[LabeledExample]) -> Vec<Vec<f64>> {
    ex.iter().map(|e| e.x.clone()).collect()
}

/// Optimisation protocol for the linear model on the Gaussian setups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticProtocol {
    pub epochs: usize,
    pub optim: AdamConfig,
    pub batch: BatchSize,
}

impl Default for SyntheticProtocol {
    /// Adam, 100 full-batch epochs, learning rate 0.1 divided by 10 every 30.
    fn default() -> Self {
        SyntheticProtocol {
            epochs: 100,
            optim: AdamConfig { lr0: 0.1, drop_every: 30, factor: 10.0, ..AdamConfig::default() },
            batch: BatchSize::Full,
        }
    }
}

impl SyntheticProtocol {
    fn config(&self, d: usize, risk: RiskSpec, seed: u64) -> TrainConfig {
        TrainConfig {
            arch: Architecture::Linear { d },
            risk,
            epochs: self.epochs,
            batch: self.batch,
            optim: self.optim,
            seed,
            eval_every: 1,
        }
    }
}

/// Test accuracy at the selected epoch and at the final epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunAccuracy {
    pub best_val: f64,
    pub final_epoch: f64,
}

fn run_accuracy(report: &TrainReport) -> RunAccuracy {
    RunAccuracy {
        best_val: report.best().map_or(f64::NAN, |r| r.test_acc),
        final_epoch: report.last().map_or(f64::NAN, |r| r.test_acc),
    }
}

/// Data of one synthetic trial: labeled training points (500/300 by
/// default), an independent validation sample of the same size and a test
/// set twice that size.
#[derive(Debug, Clone)]
pub struct SyntheticTrial {
    pub train: Vec<LabeledExample>,
    pub val: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
    pub seed: u64,
}

impl SyntheticTrial {
    pub fn generate(setup: &GaussianSetup, n_plus: usize, n_minus: usize, seed: u64) -> Self {
        SyntheticTrial {
            train: sample_labeled(setup, n_plus, n_minus, derive_seed(seed, tag::TRAIN)),
            val: sample_labeled(setup, n_plus, n_minus, derive_seed(seed, tag::VAL)),
            test: sample_labeled(setup, 2 * n_plus, 2 * n_minus, derive_seed(seed, tag::TEST)),
            seed,
        }
    }

    /// Sconf training and validation sets with optional confidence noise.
    /// Returns the datasets and the training `sigma_n`.
    pub fn sconf_sets(
        &self,
        setup: &GaussianSetup,
        pairing: Pairing,
        noise_std: f64,
    ) -> Result<(SconfDataset, SconfDataset, f64)> {
        let tr = pairing.pair(&strip(&self.train), setup, derive_seed(self.seed, tag::PAIR))?;
        let va = pairing.pair(&strip(&self.val), setup, derive_seed(self.seed, tag::PAIR + 100))?;
        if noise_std == 0.0 {
            return Ok((tr, va, 0.0));
        }
        let tr_noisy = add_confidence_noise(&tr, noise_std, derive_seed(self.seed, tag::NOISE))?;
        let va_noisy = add_confidence_noise(&va, noise_std, derive_seed(self.seed, tag::VAL_NOISE))?;
        let sigma_n = confidence_deviation(&tr, &tr_noisy)?;
        Ok((tr_noisy, va_noisy, sigma_n))
    }

    pub fn run_sconf(
        &self,
        setup: &GaussianSetup,
        pairing: Pairing,
        noise_std: f64,
        risk: RiskSpec,
        protocol: &SyntheticProtocol,
    ) -> Result<(Predictor, TrainReport)> {
        let (tr, va, sigma_n) = self.sconf_sets(setup, pairing, noise_std)?;
        let cfg = protocol.config(setup.dim(), risk, derive_seed(self.seed, tag::INIT));
        let (p, mut report) = train(&tr, &va, &self.test, &cfg)?;
        report.sigma_n = sigma_n;
        Ok((p, report))
    }

    pub fn run_supervised(
        &self,
        setup: &GaussianSetup,
        protocol: &SyntheticProtocol,
    ) -> Result<(Predictor, TrainReport)> {
        let risk = RiskSpec::new(EstimatorKind::Supervised, setup.pi_plus, LossKind::Logistic)?;
        let cfg = protocol.config(setup.dim(), risk, derive_seed(self.seed, tag::INIT));
        train_supervised(&self.train, &self.val, &self.test, &cfg)
    }
}

/// Accuracy of the analytic Bayes classifier on `test`.
pub fn bayes_accuracy(setup: &GaussianSetup, test: &[LabeledExample]) -> f64 {
    let hits = test.iter().filter(|e| setup.bayes_predict(&e.x) == e.y).count();
    hits as f64 / test.len() as f64
}

// ---------------------------------------------------------------- Table 1

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Config {
    pub setups: Vec<String>,
    pub trials: usize,
    pub noise_levels: Vec<f64>,
    pub pairing: Pairing,
    pub protocol: SyntheticProtocol,
}

impl Default for Table1Config {
    fn default() -> Self {
        Table1Config {
            setups: ["A", "B", "C", "D"].map(String::from).to_vec(),
            trials: 5,
            noise_levels: vec![0.1, 0.2, 0.3],
            pairing: Pairing::AllPairs,
            protocol: SyntheticProtocol::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Row {
    pub setup: String,
    /// `sconf` or `supervised`.
    pub method: String,
    pub noise_std: f64,
    /// Per-trial accuracies in percent, trial seeds `1..=trials`.
    pub best_val: Vec<f64>,
    pub final_epoch: Vec<f64>,
    pub mean_sigma_n: f64,
}

impl Table1Row {
    pub fn mean_acc(&self) -> f64 {
        mean(&self.best_val)
    }

    pub fn std_acc(&self) -> f64 {
        sample_std(&self.best_val)
    }

    pub fn mean_acc_final(&self) -> f64 {
        mean(&self.final_epoch)
    }

    pub fn std_acc_final(&self) -> f64 {
        sample_std(&self.final_epoch)
    }
}

pub const TABLE1_HEADER: &str = "setup,method,noise_std,mean_acc,std_acc,mean_acc_final,std_acc_final,mean_sigma_n";

pub fn table1_csv(rows: &[Table1Row]) -> String {
    let mut out = format!("{TABLE1_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4}",
            r.setup,
            r.method,
            r.noise_std,
            r.mean_acc(),
            r.std_acc(),
            r.mean_acc_final(),
            r.std_acc_final(),
            r.mean_sigma_n
        );
    }
    out
}

/// Runs every setup x {exact, each noise level, supervised} x trial. Trial
/// `t` (1-based) uses seed `t`, so all methods of a trial share data.
pub fn table1(cfg: &Table1Config) -> Result<Vec<Table1Row>> {
    if cfg.trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let mut conditions: Vec<Option<f64>> = vec![Some(0.0)];
    conditions.extend(cfg.noise_levels.iter().map(|&s| Some(s)));
    conditions.push(None);

    let mut jobs = Vec::new();
    for name in &cfg.setups {
        let setup = GaussianSetup::preset(name)?;
        for &cond in &conditions {
            for t in 1..=cfg.trials as u64 {
                jobs.push((name.clone(), setup.clone(), cond, t));
            }
        }
    }
    let results: Vec<(RunAccuracy, f64)> = jobs
        .par_iter()
        .map(|(_, setup, cond, t)| {
            let trial = SyntheticTrial::generate(setup, PRESET_N_PLUS, PRESET_N_MINUS, *t);
            let report = match cond {
                Some(std) => {
                    let risk = RiskSpec::new(EstimatorKind::Unbiased, setup.pi_plus, LossKind::Logistic)?;
                    trial.run_sconf(setup, cfg.pairing, *std, risk, &cfg.protocol)?.1
                }
                None => trial.run_supervised(setup, &cfg.protocol)?.1,
            };
            Ok((run_accuracy(&report), report.sigma_n))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (chunk, job) in results.chunks(cfg.trials).zip(jobs.chunks(cfg.trials)) {
        let (name, _, cond, _) = &job[0];
        rows.push(Table1Row {
            setup: name.clone(),
            method: if cond.is_some() { "sconf" } else { "supervised" }.to_string(),
            noise_std: cond.unwrap_or(0.0),
            best_val: chunk.iter().map(|(a, _)| 100.0 * a.best_val).collect(),
            final_epoch: chunk.iter().map(|(a, _)| 100.0 * a.final_epoch).collect(),
            mean_sigma_n: mean(&chunk.iter().map(|(_, s)| *s).collect::<Vec<_>>()),
        });
    }
    Ok(rows)
}

// ------------------------------------------------------- collapse demo

/// Scores of a threshold classifier: `+1` or `-1`.
fn threshold_scores(proj: &[f64], t: f64, flip: bool) -> Vec<f64> {
    proj.iter().map(|&u| if (u >= t) != flip { 1.0 } else { -1.0 }).collect()
}

/// Result of enumerating every threshold classifier on a 1-D projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSearch {
    pub min_risk: f64,
    /// Fraction of points predicted positive by each minimizer.
    pub minimizer_positive_fractions: Vec<f64>,
    pub candidates: usize,
}

/// Exhaustively minimizes a one-sided (or any pairwise) risk with the 0-1
/// loss over the classifiers `sign(u - t)` and `sign(t - u)` of the
/// projections `u` of all pair members, for every cut between sorted
/// values plus the two extremes.
pub fn threshold_search(proj: &[(f64, f64)], confidences: &[f64], spec: &RiskSpec) -> Result<ThresholdSearch> {
    if spec.loss() != LossKind::ZeroOne {
        return Err(Error::Config("threshold search uses the zero_one loss".into()));
    }
    let flat: Vec<f64> = proj.iter().flat_map(|&(a, b)| [a, b]).collect();
    let mut cuts = flat.clone();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut thresholds = vec![f64::NEG_INFINITY];
    thresholds.extend(cuts.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    thresholds.push(f64::INFINITY);

    let mut evals = Vec::new();
    for &t in &thresholds {
        for flip in [false, true] {
            let z = threshold_scores(&flat, t, flip);
            let pairs: Vec<(f64, f64)> = z.chunks_exact(2).map(|c| (c[0], c[1])).collect();
            let pr = crate::risk::partial_risks(&pairs, confidences, spec)?;
            let r = crate::risk::total_risk(&pr, spec);
            let pos = z.iter().filter(|&&v| v > 0.0).count() as f64 / z.len() as f64;
            evals.push((r, pos));
        }
    }
    let min_risk = evals.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
    // Equal up to summation-order rounding.
    let tol = 1e-12 * min_risk.abs().max(1.0);
    let minimizer_positive_fractions = evals.iter().filter(|e| e.0 <= min_risk + tol).map(|e| e.1).collect();
    Ok(ThresholdSearch { min_risk, minimizer_positive_fractions, candidates: evals.len() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseConfig {
    pub setup: GaussianSetup,
    /// `AllPairs`: every same-class, cross-class and unordered pair of a
    /// 500/300 labeled sample. `Disjoint`: `n_pairs` independent draws from
    /// each pair distribution.
    pub pairing: Pairing,
    pub n_pairs: usize,
    pub epochs: usize,
    pub batch: usize,
    pub optim: AdamConfig,
    pub seed: u64,
}

impl CollapseConfig {
    /// All pairs of 500 positive and 300 negative points of the collapse
    /// setup; 30 epochs, learning rate 0.1, weight decay 1e-3, batch 128.
    pub fn standard(seed: u64) -> Result<Self> {
        Ok(CollapseConfig {
            setup: GaussianSetup::preset("collapse")?,
            pairing: Pairing::AllPairs,
            n_pairs: (PRESET_N_PLUS + PRESET_N_MINUS) / 2,
            epochs: 30,
            batch: 128,
            optim: AdamConfig { lr0: 0.1, weight_decay: 1e-3, ..AdamConfig::default() },
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseMethod {
    pub method: String,
    pub positive_fraction: f64,
    pub test_acc: f64,
    /// Linear parameters `(w..., b)`.
    pub params: Vec<f64>,
    /// Minimizer positive fractions of the exhaustive threshold search on
    /// the learned direction (one-sided methods only).
    pub oracle_positive_fractions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseOutcome {
    pub methods: Vec<CollapseMethod>,
    pub bayes_acc: f64,
    pub similar_confidences: Vec<f64>,
    pub dissimilar_confidences: Vec<f64>,
    pub unlabeled_confidences: Vec<f64>,
    pub test: Vec<LabeledExample>,
}

pub const COLLAPSE_HEADER: &str = "method,positive_fraction,test_acc,w1,w2,b";

impl CollapseOutcome {
    pub fn csv(&self) -> String {
        let mut out = format!("{COLLAPSE_HEADER}\n");
        for m in &self.methods {
            let ps: Vec<String> = m.params.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{},{},{},{}", m.method, m.positive_fraction, m.test_acc, ps.join(","));
        }
        let _ = writeln!(out, "bayes,,{},,,", self.bayes_acc);
        out
    }

    /// Histogram of the three confidence samples over `bins` equal bins of
    /// `[0, 1]`: `bin_lo,bin_hi,similar,dissimilar,unlabeled`.
    pub fn histogram_csv(&self, bins: usize) -> String {
        let count = |s: &[f64]| {
            let mut h = vec![0usize; bins];
            for &v in s {
                h[((v * bins as f64) as usize).min(bins - 1)] += 1;
            }
            h
        };
        let (a, b, c) =
            (count(&self.similar_confidences), count(&self.dissimilar_confidences), count(&self.unlabeled_confidences));
        let mut out = String::from("bin_lo,bin_hi,similar,dissimilar,unlabeled\n");
        for i in 0..bins {
            let lo = i as f64 / bins as f64;
            let hi = (i + 1) as f64 / bins as f64;
            let _ = writeln!(out, "{lo},{hi},{},{},{}", a[i], b[i], c[i]);
        }
        out
    }
}

/// Trains linear models on similar-only pairs, dissimilar-only pairs and
/// ordinary Sconf pairs of the collapse setup.
pub fn collapse_demo(cfg: &CollapseConfig) -> Result<CollapseOutcome> {
    let setup = &cfg.setup;
    let d = setup.dim();
    let seed = cfg.seed;
    let n_test_plus = 2 * PRESET_N_PLUS;
    let n_test_minus = 2 * PRESET_N_MINUS;
    let test = sample_labeled(setup, n_test_plus, n_test_minus, derive_seed(seed, tag::TEST));

    let (similar, similar_val, dissimilar, dissimilar_val, unlabeled, unlabeled_val) = match cfg.pairing {
        Pairing::AllPairs => {
            let tr = sample_labeled(setup, PRESET_N_PLUS, PRESET_N_MINUS, derive_seed(seed, tag::TRAIN));
            let va = sample_labeled(setup, PRESET_N_PLUS, PRESET_N_MINUS, derive_seed(seed, tag::VAL));
            (
                labeled_pairs(&tr, setup, true)?,
                labeled_pairs(&va, setup, true)?,
                labeled_pairs(&tr, setup, false)?,
                labeled_pairs(&va, setup, false)?,
                make_all_pairs(&strip(&tr), setup)?,
                make_all_pairs(&strip(&va), setup)?,
            )
        }
        Pairing::Disjoint => {
            let pts = |t| strip(&sample_mixture(setup, 2 * cfg.n_pairs, derive_seed(seed, t)));
            (
                sample_similar_pairs(setup, cfg.n_pairs, derive_seed(seed, tag::SIMILAR))?,
                sample_similar_pairs(setup, cfg.n_pairs, derive_seed(seed, tag::SIMILAR + 100))?,
                sample_dissimilar_pairs(setup, cfg.n_pairs, derive_seed(seed, tag::DISSIMILAR))?,
                sample_dissimilar_pairs(setup, cfg.n_pairs, derive_seed(seed, tag::DISSIMILAR + 100))?,
                make_pairs(&pts(tag::TRAIN), setup, derive_seed(seed, tag::PAIR))?,
                make_pairs(&pts(tag::VAL), setup, derive_seed(seed, tag::PAIR + 100))?,
            )
        }
    };

    let runs = [
        ("similar_only", EstimatorKind::SimilarOnly, &similar, &similar_val),
        ("dissimilar_only", EstimatorKind::DissimilarOnly, &dissimilar, &dissimilar_val),
        ("unbiased", EstimatorKind::Unbiased, &unlabeled, &unlabeled_val),
    ];
    let mut methods = Vec::new();
    for (name, kind, tr, va) in runs {
        let risk = RiskSpec::new(kind, setup.pi_plus, LossKind::Logistic)?;
        let tc = TrainConfig {
            arch: Architecture::Linear { d },
            risk,
            epochs: cfg.epochs,
            batch: BatchSize::Pairs(cfg.batch),
            optim: cfg.optim,
            seed: derive_seed(seed, tag::INIT),
            eval_every: 1,
        };
        let (p, _) = train(tr, va, &test, &tc)?;
        let ev = evaluate(&p, &test)?;
        let x = crate::model::stack_rows(test.iter().map(|e| e.x.as_slice()), d)?;
        let scores = p.predict(x.view())?;
        let positive_fraction =
            scores.iter().filter(|&&z| Label::from_score(z) == Label::Positive).count() as f64 / scores.len() as f64;

        let oracle_positive_fractions = if kind.is_one_sided() {
            let w = &p.params()[..d];
            let proj = |x: &[f64]| x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
            let pp: Vec<(f64, f64)> = tr.pairs.iter().map(|q| (proj(&q.x), proj(&q.x_prime))).collect();
            let spec01 = RiskSpec::new(kind, setup.pi_plus, LossKind::ZeroOne)?;
            threshold_search(&pp, &tr.confidences(), &spec01)?.minimizer_positive_fractions
        } else {
            Vec::new()
        };
        methods.push(CollapseMethod {
            method: name.to_string(),
            positive_fraction,
            test_acc: ev.accuracy,
            params: p.params().to_vec(),
            oracle_positive_fractions,
        });
    }
    Ok(CollapseOutcome {
        methods,
        bayes_acc: bayes_accuracy(setup, &test),
        similar_confidences: similar.confidences(),
        dissimilar_confidences: dissimilar.confidences(),
        unlabeled_confidences: unlabeled.confidences(),
        test,
    })
}

// ------------------------------------------------------------ sweep n

#[derive(Debug, Clone, PartialEq)]
pub struct SweepNConfig {
    pub setup: GaussianSetup,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    /// Size of the per-trial test sample, drawn from the mixture.
    pub test_size: usize,
    pub estimator: EstimatorKind,
    pub protocol: SyntheticProtocol,
}

impl SweepNConfig {
    pub fn standard(setup: GaussianSetup) -> Self {
        SweepNConfig {
            setup,
            n_grid: vec![50, 100, 200, 400, 800, 1600],
            trials: 10,
            test_size: 16_000,
            estimator: EstimatorKind::Unbiased,
            protocol: SyntheticProtocol::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepNRow {
    pub n: usize,
    /// Per-trial test 0-1 risk minus the Bayes classifier's on the same
    /// test sample.
    pub excess: Vec<f64>,
    pub test_risk: Vec<f64>,
    pub bayes_risk: Vec<f64>,
}

impl SweepNRow {
    pub fn mean_excess(&self) -> f64 {
        mean(&self.excess)
    }

    pub fn std_excess(&self) -> f64 {
        sample_std(&self.excess)
    }

    pub fn se_excess(&self) -> f64 {
        self.std_excess() / (self.excess.len() as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepNOutcome {
    pub rows: Vec<SweepNRow>,
    /// Least-squares slope of `ln(mean excess)` on `ln(n)`; absent for a
    /// single grid point or a non-positive mean excess.
    pub slope: Option<f64>,
}

pub const SWEEP_N_HEADER: &str = "n,mean_excess,std_excess,mean_test_risk,mean_bayes_risk";

impl SweepNOutcome {
    pub fn csv(&self) -> String {
        let mut out = format!("{SWEEP_N_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.n,
                r.mean_excess(),
                r.std_excess(),
                mean(&r.test_risk),
                mean(&r.bayes_risk)
            );
        }
        out
    }

    /// Each doubling step keeps the mean excess non-increasing up to one
    /// standard error of the difference.
    pub fn non_increasing_within_1se(&self) -> bool {
        self.rows.windows(2).all(|w| {
            let se = (w[0].se_excess().powi(2) + w[1].se_excess().powi(2)).sqrt();
            w[1].mean_excess() <= w[0].mean_excess() + se
        })
    }
}

pub fn sweep_n(cfg: &SweepNConfig) -> Result<SweepNOutcome> {
    if cfg.n_grid.is_empty() || cfg.n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("n_grid must be non-empty and strictly ascending".into()));
    }
    if cfg.trials == 0 || cfg.n_grid[0] == 0 {
        return Err(Error::Config("trials and every n must be positive".into()));
    }
    let setup = &cfg.setup;
    let jobs: Vec<(usize, u64)> =
        cfg.n_grid.iter().flat_map(|&n| (1..=cfg.trials as u64).map(move |t| (n, t))).collect();
    let results: Vec<(f64, f64)> = jobs
        .par_iter()
        .map(|&(n, t)| {
            // The test sample depends only on the trial, so every n of a
            // trial is scored on the same points.
            let test = sample_mixture(setup, cfg.test_size, derive_seed(t, tag::TEST));
            let seed = derive_seed(t, n as u64);
            let pts = |tg| strip(&sample_mixture(setup, 2 * n, derive_seed(seed, tg)));
            let tr = make_pairs(&pts(tag::TRAIN), setup, derive_seed(seed, tag::PAIR))?;
            let va = make_pairs(&pts(tag::VAL), setup, derive_seed(seed, tag::PAIR + 100))?;
            let risk = RiskSpec::new(cfg.estimator, setup.pi_plus, LossKind::Logistic)?;
            let tc = cfg.protocol.config(setup.dim(), risk, derive_seed(seed, tag::INIT));
            let (p, _) = train(&tr, &va, &test, &tc)?;
            let test_risk = evaluate(&p, &test)?.zero_one_risk;
            Ok((test_risk, 1.0 - bayes_accuracy(setup, &test)))
        })
        .collect::<Result<_>>()?;
    let rows: Vec<SweepNRow> = cfg
        .n_grid
        .iter()
        .zip(results.chunks(cfg.trials))
        .map(|(&n, ch)| SweepNRow {
            n,
            excess: ch.iter().map(|(r, b)| r - b).collect(),
            test_risk: ch.iter().map(|(r, _)| *r).collect(),
            bayes_risk: ch.iter().map(|(_, b)| *b).collect(),
        })
        .collect();
    let slope = if rows.len() >= 2 && rows.iter().all(|r| r.mean_excess() > 0.0) {
        let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.mean_excess().ln()).collect();
        ols_slope(&xs, &ys)
    } else {
        None
    };
    Ok(SweepNOutcome { rows, slope })
}

// -------------------------------------------------------- noise sweep

#[derive(Debug, Clone, PartialEq)]
pub struct SweepNoiseRow {
    pub noise_std: f64,
    pub acc: Vec<f64>,
    pub sigma_n: Vec<f64>,
}

pub const SWEEP_NOISE_HEADER: &str = "noise_std,mean_acc,std_acc,mean_sigma_n";

pub fn sweep_noise_csv(rows: &[SweepNoiseRow]) -> String {
    let mut out = format!("{SWEEP_NOISE_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.noise_std, mean(&r.acc), sample_std(&r.acc), mean(&r.sigma_n));
    }
    out
}

/// Table-1 protocol on one setup over a grid of noise levels; accuracies in
/// percent at the selected epoch.
pub fn sweep_noise(
    setup: &GaussianSetup,
    stds: &[f64],
    trials: usize,
    pairing: Pairing,
    protocol: &SyntheticProtocol,
) -> Result<Vec<SweepNoiseRow>> {
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let jobs: Vec<(f64, u64)> = stds.iter().flat_map(|&s| (1..=trials as u64).map(move |t| (s, t))).collect();
    let results: Vec<(f64, f64)> = jobs
        .par_iter()
        .map(|&(std, t)| {
            let trial = SyntheticTrial::generate(setup, PRESET_N_PLUS, PRESET_N_MINUS, t);
            let risk = RiskSpec::new(EstimatorKind::Unbiased, setup.pi_plus, LossKind::Logistic)?;
            let (_, rep) = trial.run_sconf(setup, pairing, std, risk, protocol)?;
            Ok((100.0 * run_accuracy(&rep).best_val, rep.sigma_n))
        })
        .collect::<Result<_>>()?;
    Ok(stds
        .iter()
        .zip(results.chunks(trials))
        .map(|(&noise_std, ch)| SweepNoiseRow {
            noise_std,
            acc: ch.iter().map(|r| r.0).collect(),
            sigma_n: ch.iter().map(|r| r.1).collect(),
        })
        .collect())
}

// ------------------------------------------------------------- prior

/// Below this many pairs the estimate is flagged as unreliable.
pub const SMALL_SAMPLE_PAIRS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct PriorRun {
    pub estimate: PriorEstimate,
    pub true_pi_plus: f64,
    pub noise_std: f64,
}

impl PriorRun {
    pub fn abs_error(&self) -> f64 {
        (self.estimate.pi_plus_hat - self.true_pi_plus).abs()
    }

    pub fn small_sample(&self) -> bool {
        self.estimate.n < SMALL_SAMPLE_PAIRS
    }
}

pub const PRIOR_HEADER: &str = "n,pi_s_hat,pi_plus_hat,true_pi_plus,abs_error,clamped,noise_std";

pub fn prior_csv(runs: &[PriorRun]) -> String {
    let mut out = format!("{PRIOR_HEADER}\n");
    for r in runs {
        let e = &r.estimate;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            e.n,
            e.pi_s_hat,
            e.pi_plus_hat,
            r.true_pi_plus,
            r.abs_error(),
            e.clamped,
            r.noise_std
        );
    }
    out
}

/// `n` exact-confidence pairs from `2n` mixture draws (optionally with
/// clipped noise), then the prior estimate.
pub fn prior_demo(setup: &GaussianSetup, n: usize, noise_std: f64, seed: u64) -> Result<PriorRun> {
    let pts = strip(&sample_mixture(setup, 2 * n, derive_seed(seed, tag::TRAIN)));
    let mut ds = make_pairs(&pts, setup, derive_seed(seed, tag::PAIR))?;
    if noise_std > 0.0 {
        ds = add_confidence_noise(&ds, noise_std, derive_seed(seed, tag::NOISE))?;
    }
    Ok(PriorRun { estimate: estimate_prior(&ds)?, true_pi_plus: setup.pi_plus, noise_std })
}

// ---------------------------------------------------- image demo

#[derive(Debug, Clone, PartialEq)]
pub struct ImageDemoConfig {
    pub data_dir: PathBuf,
    pub rule: BinaryCorruption,
    /// Labeled training examples drawn from the training split.
    pub n_train: usize,
    /// Validation examples drawn from the validation split.
    pub n_val: usize,
    /// Test examples drawn from the test files (`None` uses all).
    pub n_test: Option<usize>,
    /// Sizes of the seeded train/validation split of the training files.
    pub split: (usize, usize),
    pub estimators: Vec<EstimatorKind>,
    pub epochs: usize,
    pub batch: usize,
    pub optim: AdamConfig,
    pub confidence: ConfidenceModelConfig,
    /// Class prior given to the estimators; `None` uses the rule's nominal
    /// prior.
    pub pi_plus: Option<f64>,
    pub seed: u64,
}

impl ImageDemoConfig {
    /// d-500-500-1 MLP; 60 epochs of batch 3000 pairs, weight decay 1e-3,
    /// learning rate 1e-3 divided by 10 every 20 epochs; 10k labeled
    /// examples drawn from the 54000/6000 split at the 9:1 ratio.
    pub fn standard(data_dir: PathBuf, seed: u64) -> Result<Self> {
        Ok(ImageDemoConfig {
            data_dir,
            rule: BinaryCorruption::preset("mnist")?,
            n_train: 9000,
            n_val: 1000,
            n_test: None,
            split: (54_000, 6_000),
            estimators: vec![EstimatorKind::Unbiased, EstimatorKind::NonNegative, EstimatorKind::Absolute],
            epochs: 60,
            batch: 3000,
            optim: AdamConfig { lr0: 1e-3, weight_decay: 1e-3, drop_every: 20, factor: 10.0, ..AdamConfig::default() },
            confidence: ConfidenceModelConfig::image_default(Architecture::mlp(784)),
            pi_plus: None,
            seed,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ImageDemoOutcome {
    pub reports: Vec<(EstimatorKind, TrainReport)>,
    pub train_positive_fraction: f64,
    pub mean_train_confidence: f64,
    /// `pi^2 + (1 - pi)^2` at the model's average training posterior.
    pub implied_pi_similar: f64,
}

fn labeled_from(ds: &IdxDataset, idx: &[usize], rule: &BinaryCorruption) -> Result<Vec<LabeledExample>> {
    crate::dataset_io::corrupt_binary(&ds.examples(idx), rule)
}

/// Model-based Sconf pairs and a labeled test set built from image files.
#[derive(Debug, Clone)]
pub struct ImageData {
    pub train: SconfDataset,
    pub val: SconfDataset,
    pub test: Vec<LabeledExample>,
    pub dim: usize,
    /// Positive fraction of the (hidden) training labels.
    pub train_positive_fraction: f64,
    /// Mean model posterior over the training inputs.
    pub mean_posterior: f64,
}

impl ImageData {
    /// Loads `train-*` and `t10k-*` IDX files from `cfg.data_dir`, splits,
    /// subsamples, fits the confidence model to the labeled training sample
    /// and pairs training and validation inputs with model confidences.
    pub fn prepare(cfg: &ImageDemoConfig) -> Result<Self> {
        let (ti, tl) = find_idx_pair(&cfg.data_dir, "train")?;
        let (si, sl) = find_idx_pair(&cfg.data_dir, "t10k")?;
        let train_all = load_idx(&ti, &tl)?;
        let test_all = load_idx(&si, &sl)?;
        let dim = train_all.dim();

        let (tr_idx, va_idx) =
            split_indices(train_all.len(), cfg.split.0, cfg.split.1, derive_seed(cfg.seed, tag::VAL))?;
        let tr_pick = subsample_indices(tr_idx.len(), cfg.n_train, derive_seed(cfg.seed, tag::TRAIN))?;
        let va_pick = subsample_indices(va_idx.len(), cfg.n_val, derive_seed(cfg.seed, tag::VAL + 100))?;
        let tr_idx: Vec<usize> = tr_pick.iter().map(|&i| tr_idx[i]).collect();
        let va_idx: Vec<usize> = va_pick.iter().map(|&i| va_idx[i]).collect();
        let te_idx = match cfg.n_test {
            Some(k) => subsample_indices(test_all.len(), k, derive_seed(cfg.seed, tag::TEST))?,
            None => (0..test_all.len()).collect(),
        };
        let train_l = labeled_from(&train_all, &tr_idx, &cfg.rule)?;
        let val_l = labeled_from(&train_all, &va_idx, &cfg.rule)?;
        let test = labeled_from(&test_all, &te_idx, &cfg.rule)?;
        drop(train_all);
        drop(test_all);

        let val_points = strip(&val_l);
        let (post_tr, post_other) =
            fit_posteriors(&train_l, &[&val_points], &cfg.confidence, derive_seed(cfg.seed, tag::NOISE))?;
        let even = |n: usize| n - n % 2;
        let train_points = strip(&train_l[..even(train_l.len())]);
        let train = pair_with_posteriors(
            &train_points,
            &post_tr[..train_points.len()],
            derive_seed(cfg.seed, tag::PAIR),
            Provenance::Model,
        )?;
        let vp = &val_points[..even(val_points.len())];
        let val = pair_with_posteriors(
            vp,
            &post_other[0][..vp.len()],
            derive_seed(cfg.seed, tag::PAIR + 100),
            Provenance::Model,
        )?;
        let train_positive_fraction =
            train_l.iter().filter(|e| e.y == Label::Positive).count() as f64 / train_l.len() as f64;
        Ok(ImageData { train, val, test, dim, train_positive_fraction, mean_posterior: mean(&post_tr) })
    }

    pub fn train_config(&self, cfg: &ImageDemoConfig, kind: EstimatorKind) -> Result<TrainConfig> {
        let pi = cfg.pi_plus.unwrap_or(cfg.rule.pi_plus_nominal);
        Ok(TrainConfig {
            arch: Architecture::Mlp { d: self.dim, h1: 500, h2: 500 },
            risk: RiskSpec::new(kind, pi, LossKind::Logistic)?,
            epochs: cfg.epochs,
            batch: BatchSize::Pairs(cfg.batch),
            optim: cfg.optim,
            seed: derive_seed(cfg.seed, tag::INIT),
            eval_every: 1,
        })
    }
}

/// Trains one MLP per estimator on the same image-derived pairs and
/// initialization.
pub fn image_overfitting_demo(cfg: &ImageDemoConfig) -> Result<ImageDemoOutcome> {
    let data = ImageData::prepare(cfg)?;
    let mut reports = Vec::new();
    for &kind in &cfg.estimators {
        let tc = data.train_config(cfg, kind)?;
        let (_, rep) = train(&data.train, &data.val, &data.test, &tc)?;
        reports.push((kind, rep));
    }
    let m = data.mean_posterior;
    Ok(ImageDemoOutcome {
        reports,
        train_positive_fraction: data.train_positive_fraction,
        mean_train_confidence: mean(&data.train.confidences()),
        implied_pi_similar: m * m + (1.0 - m) * (1.0 - m),
    })
}

// ------------------------------------------------- unbiasedness check

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnbiasednessCheck {
    pub mean_estimate: f64,
    pub standard_error: f64,
    pub supervised_risk: f64,
}

impl UnbiasednessCheck {
    pub fn z_score(&self) -> f64 {
        (self.mean_estimate - self.supervised_risk) / self.standard_error
    }
}

/// Mean of the unbiased estimator for the fixed linear scorer `params`
/// over `m` regenerated `n`-pair datasets, against the supervised logistic
/// risk on `n_supervised` labeled draws.
pub fn unbiasedness_check(
    setup: &GaussianSetup,
    params: &[f64],
    m: usize,
    n: usize,
    n_supervised: usize,
    seed: u64,
) -> Result<UnbiasednessCheck> {
    let d = setup.dim();
    if params.len() != d + 1 {
        return Err(Error::Dimension { expected: d + 1, actual: params.len() });
    }
    let score = |x: &[f64]| x.iter().zip(params).map(|(a, b)| a * b).sum::<f64>() + params[d];
    let spec = RiskSpec::new(EstimatorKind::Unbiased, setup.pi_plus, LossKind::Logistic)?;
    let estimates: Vec<f64> = (0..m as u64)
        .into_par_iter()
        .map(|k| {
            let s = derive_seed(seed, 1000 + k);
            let pts = strip(&sample_mixture(setup, 2 * n, s));
            let ds = make_pairs(&pts, setup, derive_seed(s, tag::PAIR))?;
            let sc: Vec<(f64, f64)> = ds.pairs.iter().map(|p| (score(&p.x), score(&p.x_prime))).collect();
            let pr = crate::risk::partial_risks(&sc, &ds.confidences(), &spec)?;
            Ok(crate::risk::total_risk(&pr, &spec))
        })
        .collect::<Result<_>>()?;
    let labeled = sample_mixture(setup, n_supervised, derive_seed(seed, tag::TEST));
    let losses: Vec<f64> = labeled.iter().map(|e| loss_value(LossKind::Logistic, score(&e.x), e.y)).collect();
    Ok(UnbiasednessCheck {
        mean_estimate: mean(&estimates),
        standard_error: sample_std(&estimates) / (m as f64).sqrt(),
        supervised_risk: pairwise_sum(&losses) / losses.len() as f64,
    })
}
