//! Empirical risk minimization over Sconf pairs (and the supervised
//! baseline), with per-epoch reporting and selection of the epoch with the
//! lowest validation risk.

use std::collections::HashMap;
use std::fmt::Write as _;

use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;

use crate::datagen::{LabeledExample, SconfDataset};
use crate::losses::Label;
use crate::model::{stack_rows, Architecture, Predictor};
use crate::optim::{AdamConfig, AdamState};
use crate::risk::{self, PointWeights, RiskSpec};
use crate::rng::{self, stream};
use crate::{Error, Result};

pub const REPORT_HEADER: &str = "epoch,train_risk,val_risk,test_acc,test_01_risk,lr";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BatchSize {
    Full,
    /// Minibatches of this many pairs (or labeled examples for supervised
    /// training). The last, possibly smaller, batch of an epoch is kept.
    Pairs(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub arch: Architecture,
    pub risk: RiskSpec,
    pub epochs: usize,
    pub batch: BatchSize,
    pub optim: AdamConfig,
    pub seed: u64,
    /// Record a report row every this many epochs (the last epoch is always
    /// recorded).
    pub eval_every: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch == BatchSize::Pairs(0) {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        self.optim.validate()
    }

    fn records(&self, epoch: usize) -> bool {
        epoch.is_multiple_of(self.eval_every) || epoch == self.epochs
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRow {
    /// 1-based count of completed epochs.
    pub epoch: usize,
    pub train_risk: f64,
    pub val_risk: f64,
    pub test_acc: f64,
    pub test_01_risk: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub rows: Vec<EpochRow>,
    /// Epoch of the returned parameters.
    pub best_epoch: usize,
    /// Sum of absolute confidence deviations of the training data; 0 for
    /// exact confidences. Set by the caller, which knows the clean data.
    pub sigma_n: f64,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ =
                writeln!(out, "{},{},{},{},{},{}", r.epoch, r.train_risk, r.val_risk, r.test_acc, r.test_01_risk, r.lr);
        }
        out
    }

    /// Parses the CSV written by [`TrainReport::to_csv`]. Selection metadata
    /// is recomputed from the rows.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(REPORT_HEADER) {
            return Err(Error::Config(format!("report CSV must start with {REPORT_HEADER:?}")));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Config(format!("report CSV line {}: malformed row", i + 2));
            if f.len() != 6 {
                return Err(bad());
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
            rows.push(EpochRow {
                epoch: f[0].trim().parse().map_err(|_| bad())?,
                train_risk: num(f[1])?,
                val_risk: num(f[2])?,
                test_acc: num(f[3])?,
                test_01_risk: num(f[4])?,
                lr: num(f[5])?,
            });
        }
        let best_epoch = best_row(&rows).map_or(0, |r| r.epoch);
        Ok(TrainReport { rows, best_epoch, sigma_n: 0.0 })
    }

    pub fn best(&self) -> Option<&EpochRow> {
        self.rows.iter().find(|r| r.epoch == self.best_epoch)
    }

    pub fn last(&self) -> Option<&EpochRow> {
        self.rows.last()
    }
}

/// First row with the smallest validation risk; rows without a finite
/// validation risk are never selected unless nothing else is available.
fn best_row(rows: &[EpochRow]) -> Option<&EpochRow> {
    let finite = rows.iter().filter(|r| r.val_risk.is_finite());
    finite
        .fold(None, |best: Option<&EpochRow>, r| match best {
            Some(b) if b.val_risk <= r.val_risk => Some(b),
            _ => Some(r),
        })
        .or_else(|| rows.last())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub zero_one_risk: f64,
}

/// Accuracy of `sign(g(x))` with `sign(0) = +1`.
pub fn evaluate(p: &Predictor, test: &[LabeledExample]) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::Contract("evaluation needs a non-empty test set".into()));
    }
    let x = stack_rows(test.iter().map(|e| e.x.as_slice()), p.architecture().input_dim())?;
    let scores = p.predict(x.view())?;
    let correct = scores.iter().zip(test).filter(|(&z, e)| Label::from_score(z) == e.y).count();
    let accuracy = correct as f64 / test.len() as f64;
    Ok(Evaluation { accuracy, zero_one_risk: 1.0 - accuracy })
}

fn evaluate_or_nan(p: &Predictor, test: &[LabeledExample]) -> Result<Evaluation> {
    if test.is_empty() {
        return Ok(Evaluation { accuracy: f64::NAN, zero_one_risk: f64::NAN });
    }
    evaluate(p, test)
}

/// Pairs stored as indices into their distinct member points, with the
/// full-set estimator folded into per-point weights.
struct PooledPairs {
    points: Array2<f64>,
    members: Vec<(usize, usize)>,
    s: Vec<f64>,
    weights: PointWeights,
}

impl PooledPairs {
    fn new(ds: &SconfDataset, d: usize, spec: &RiskSpec) -> Result<Self> {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut rows: Vec<&[f64]> = Vec::new();
        let mut members = Vec::with_capacity(ds.len());
        for p in &ds.pairs {
            let mut ids = [0usize; 2];
            for (k, x) in [p.x.as_slice(), p.x_prime.as_slice()].into_iter().enumerate() {
                let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
                ids[k] = *index.entry(key).or_insert_with(|| {
                    rows.push(x);
                    rows.len() - 1
                });
            }
            members.push((ids[0], ids[1]));
        }
        let points = stack_rows(rows.iter().copied(), d)?;
        let s = ds.confidences();
        let weights = risk::point_weights(&members, &s, points.nrows(), spec)?;
        Ok(PooledPairs { points, members, s, weights })
    }

    fn len(&self) -> usize {
        self.s.len()
    }

    fn risk(&self, p: &Predictor, spec: &RiskSpec) -> Result<f64> {
        let z = p.predict(self.points.view())?;
        Ok(risk::evaluate_points(&z, &self.weights, spec)?.1)
    }

    /// Forward and backward over the whole set.
    fn full_step(&self, p: &mut Predictor, spec: &RiskSpec) -> Result<()> {
        let z = p.forward(self.points.view())?;
        let (_, _, up) = risk::evaluate_points(&z, &self.weights, spec)?;
        p.backward(&up)
    }

    /// Forward and backward over the pairs `idx`, with the estimator
    /// normalized by the batch size.
    fn batch_step(&self, p: &mut Predictor, idx: &[usize], spec: &RiskSpec) -> Result<()> {
        let m = idx.len();
        let a: Vec<usize> = idx.iter().map(|&i| self.members[i].0).collect();
        let b: Vec<usize> = idx.iter().map(|&i| self.members[i].1).collect();
        let both =
            concatenate(Axis(0), &[self.points.select(Axis(0), &a).view(), self.points.select(Axis(0), &b).view()])
                .expect("same width");
        let z = p.forward(both.view())?;
        let scores: Vec<(f64, f64)> = (0..m).map(|i| (z[i], z[m + i])).collect();
        let s: Vec<f64> = idx.iter().map(|&i| self.s[i]).collect();
        let ev = risk::evaluate_with_gradient(&scores, &s, spec)?;
        let mut up = vec![0.0; 2 * m];
        for (i, &(g, gp)) in ev.score_gradients.iter().enumerate() {
            up[i] = g;
            up[m + i] = gp;
        }
        p.backward(&up)
    }
}

fn batches(n: usize, batch: BatchSize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    match batch {
        BatchSize::Full => vec![(0..n).collect()],
        BatchSize::Pairs(m) => {
            let mut order: Vec<usize> = (0..n).collect();
            let mut r = rng::seeded(seed, stream::SHUFFLE_BASE + epoch as u64);
            order.shuffle(&mut r);
            order.chunks(m).map(<[usize]>::to_vec).collect()
        }
    }
}

/// Shared epoch loop: `step` runs one minibatch (forward, backward) and
/// `measure` returns `(train_risk, val_risk)` for the current parameters.
fn run_loop<S, M>(
    cfg: &TrainConfig,
    n_train: usize,
    test: &[LabeledExample],
    mut step: S,
    measure: M,
) -> Result<(Predictor, TrainReport)>
where
    S: FnMut(&mut Predictor, &[usize]) -> Result<()>,
    M: Fn(&Predictor) -> Result<(f64, f64)>,
{
    cfg.validate()?;
    let mut p = Predictor::init(cfg.arch, cfg.seed);
    let mut opt = AdamState::new(cfg.optim, cfg.arch.param_count())?;
    let mut report = TrainReport::default();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for epoch in 0..cfg.epochs {
        for idx in batches(n_train, cfg.batch, cfg.seed, epoch) {
            step(&mut p, &idx)?;
            opt.step(&mut p, epoch)?;
        }
        let done = epoch + 1;
        if !cfg.records(done) {
            continue;
        }
        let (train_risk, val_risk) = measure(&p)?;
        let ev = evaluate_or_nan(&p, test)?;
        report.rows.push(EpochRow {
            epoch: done,
            train_risk,
            val_risk,
            test_acc: ev.accuracy,
            test_01_risk: ev.zero_one_risk,
            lr: cfg.optim.lr_at(epoch),
        });
        let improves = match &best {
            None => true,
            Some((v, _)) => val_risk < *v || !v.is_finite(),
        };
        if improves {
            best = Some((val_risk, p.params().to_vec()));
            report.best_epoch = done;
        }
    }
    let (_, params) = best.expect("at least one recorded epoch");
    let p = Predictor::from_params(cfg.arch, params)?;
    Ok((p, report))
}

/// Trains on Sconf pairs with `cfg.risk`. Validation uses the same
/// estimator; the returned predictor is the snapshot with the lowest
/// validation risk. `test` is only used for reporting and may be empty.
pub fn train(
    train_ds: &SconfDataset,
    val_ds: &SconfDataset,
    test: &[LabeledExample],
    cfg: &TrainConfig,
) -> Result<(Predictor, TrainReport)> {
    if !cfg.risk.kind().is_pairwise() {
        return Err(Error::Config(format!(
            "estimator {} does not train on pairs; use train_supervised",
            cfg.risk.kind().name()
        )));
    }
    if train_ds.is_empty() || val_ds.is_empty() {
        return Err(Error::Contract("training and validation sets must be non-empty".into()));
    }
    let d = cfg.arch.input_dim();
    let spec = cfg.risk;
    let tr = PooledPairs::new(train_ds, d, &spec)?;
    let va = PooledPairs::new(val_ds, d, &spec)?;
    let full = cfg.batch == BatchSize::Full;
    let step = |p: &mut Predictor, idx: &[usize]| -> Result<()> {
        if full {
            tr.full_step(p, &spec)
        } else {
            tr.batch_step(p, idx, &spec)
        }
    };
    let measure = |p: &Predictor| Ok((tr.risk(p, &spec)?, va.risk(p, &spec)?));
    run_loop(cfg, tr.len(), test, step, measure)
}

/// Ordinary supervised ERM with `cfg.risk.loss()`. An empty validation set
/// selects the final epoch.
pub fn train_supervised(
    train_set: &[LabeledExample],
    val_set: &[LabeledExample],
    test: &[LabeledExample],
    cfg: &TrainConfig,
) -> Result<(Predictor, TrainReport)> {
    if train_set.is_empty() {
        return Err(Error::Contract("training set must be non-empty".into()));
    }
    let d = cfg.arch.input_dim();
    let loss = cfg.risk.loss();
    let x = stack_rows(train_set.iter().map(|e| e.x.as_slice()), d)?;
    let y: Vec<Label> = train_set.iter().map(|e| e.y).collect();
    let xv = stack_rows(val_set.iter().map(|e| e.x.as_slice()), d)?;
    let yv: Vec<Label> = val_set.iter().map(|e| e.y).collect();
    let step = |p: &mut Predictor, idx: &[usize]| -> Result<()> {
        let z = p.forward(x.select(Axis(0), idx).view())?;
        let labels: Vec<Label> = idx.iter().map(|&i| y[i]).collect();
        let up = risk::supervised_score_gradients(&z, &labels, loss)?;
        p.backward(&up)
    };
    let measure = |p: &Predictor| {
        let train_risk = risk::supervised_risk(&p.predict(x.view())?, &y, loss)?;
        let val_risk = if yv.is_empty() { f64::NAN } else { risk::supervised_risk(&p.predict(xv.view())?, &yv, loss)? };
        Ok((train_risk, val_risk))
    };
    let (p, mut report) = run_loop(cfg, train_set.len(), test, step, measure)?;
    if yv.is_empty() {
        // Nothing to select on: keep the final parameters.
        report.best_epoch = report.rows.last().map_or(0, |r| r.epoch);
    }
    Ok((p, report))
}
