//! Differentiable scoring functions: a linear model and a two-hidden-layer
//! ReLU MLP with a scalar output.
//!
//! Parameters live in one flat vector. MLP layout, row-major and in order:
//! `W1 (d x h1)`, `b1 (h1)`, `W2 (h1 x h2)`, `b2 (h2)`, `w3 (h2)`, `b3 (1)`.
//! The linear layout is `w (d)`, `b (1)`.
//!
//! `forward` keeps the activations of its batch until `backward` consumes
//! them (or `discard` drops them); `predict` is the read-only path used for
//! evaluation.

use std::io::{Read, Write};
use std::ops::Range;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};
use rand_distr::{Distribution, Normal};

use crate::rng::{self, stream};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "SCONF-CKPT-1";

/// Rows per chunk in [`Predictor::predict`].
const PREDICT_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    Linear { d: usize },
    Mlp { d: usize, h1: usize, h2: usize },
}

impl Architecture {
    /// The `d-500-500-1` network used for the image benchmarks.
    pub fn mlp(d: usize) -> Self {
        Architecture::Mlp { d, h1: 500, h2: 500 }
    }

    pub fn input_dim(&self) -> usize {
        match *self {
            Architecture::Linear { d } | Architecture::Mlp { d, .. } => d,
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            Architecture::Linear { d } => d + 1,
            Architecture::Mlp { d, h1, h2 } => (d * h1 + h1) + (h1 * h2 + h2) + (h2 + 1),
        }
    }

    /// One-line descriptor used in checkpoints, e.g. `mlp 784 500 500`.
    pub fn descriptor(&self) -> String {
        match *self {
            Architecture::Linear { d } => format!("linear {d}"),
            Architecture::Mlp { d, h1, h2 } => format!("mlp {d} {h1} {h2}"),
        }
    }

    pub fn parse_descriptor(line: &str) -> Result<Self> {
        let parts: Vec<&str> = line.split_whitespace().collect();
        let num = |s: &str| {
            s.parse::<usize>()
                .ok()
                .filter(|&v| v > 0)
                .ok_or_else(|| Error::Config(format!("bad architecture dimension {s:?}")))
        };
        match parts.as_slice() {
            ["linear", d] => Ok(Architecture::Linear { d: num(d)? }),
            ["mlp", d, h1, h2] => Ok(Architecture::Mlp { d: num(d)?, h1: num(h1)?, h2: num(h2)? }),
            _ => Err(Error::Config(format!("bad architecture descriptor {line:?}"))),
        }
    }

    fn mlp_ranges(&self) -> Option<MlpRanges> {
        let Architecture::Mlp { d, h1, h2 } = *self else { return None };
        let w1 = 0..d * h1;
        let b1 = w1.end..w1.end + h1;
        let w2 = b1.end..b1.end + h1 * h2;
        let b2 = w2.end..w2.end + h2;
        let w3 = b2.end..b2.end + h2;
        let b3 = w3.end;
        Some(MlpRanges { d, h1, h2, w1, b1, w2, b2, w3, b3 })
    }
}

struct MlpRanges {
    d: usize,
    h1: usize,
    h2: usize,
    w1: Range<usize>,
    b1: Range<usize>,
    w2: Range<usize>,
    b2: Range<usize>,
    w3: Range<usize>,
    b3: usize,
}

struct MlpView<'a> {
    w1: ArrayView2<'a, f64>,
    b1: ArrayView1<'a, f64>,
    w2: ArrayView2<'a, f64>,
    b2: ArrayView1<'a, f64>,
    w3: ArrayView1<'a, f64>,
    b3: f64,
}

impl MlpRanges {
    fn view<'a>(&self, p: &'a [f64]) -> MlpView<'a> {
        MlpView {
            w1: ArrayView2::from_shape((self.d, self.h1), &p[self.w1.clone()]).expect("layout"),
            b1: ArrayView1::from(&p[self.b1.clone()]),
            w2: ArrayView2::from_shape((self.h1, self.h2), &p[self.w2.clone()]).expect("layout"),
            b2: ArrayView1::from(&p[self.b2.clone()]),
            w3: ArrayView1::from(&p[self.w3.clone()]),
            b3: p[self.b3],
        }
    }
}

#[derive(Debug, Clone)]
enum Activations {
    Linear { input: Array2<f64> },
    Mlp { input: Array2<f64>, h1: Array2<f64>, h2: Array2<f64> },
}

#[derive(Debug, Clone)]
pub struct Predictor {
    arch: Architecture,
    params: Vec<f64>,
    grads: Vec<f64>,
    grads_ready: bool,
    cache: Option<Activations>,
}

fn relu_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| v.max(0.0));
}

impl Predictor {
    /// Linear models start at zero; MLP weights are drawn from
    /// `N(0, 2 / fan_in)` with zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Self {
        let mut params = vec![0.0; arch.param_count()];
        if let Some(r) = arch.mlp_ranges() {
            let mut rng = rng::seeded(seed, stream::INIT);
            for (range, fan_in) in [(r.w1.clone(), r.d), (r.w2.clone(), r.h1), (r.w3.clone(), r.h2)] {
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
                for p in &mut params[range] {
                    *p = normal.sample(&mut rng);
                }
            }
        }
        Self::from_params(arch, params).expect("length matches architecture")
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        if params.len() != arch.param_count() {
            return Err(Error::Dimension { expected: arch.param_count(), actual: params.len() });
        }
        let n = params.len();
        Ok(Predictor { arch, params, grads: vec![0.0; n], grads_ready: false, cache: None })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.cache = None;
        &mut self.params
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    /// Whether `backward` has populated gradients since the last reset.
    pub fn has_grads(&self) -> bool {
        self.grads_ready
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
        self.grads_ready = false;
    }

    /// Parameters and gradients, for optimizers.
    pub(crate) fn params_and_grads(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.params, &mut self.grads)
    }

    fn check_dim(&self, batch: &ArrayView2<f64>) -> Result<()> {
        let d = self.arch.input_dim();
        if batch.ncols() != d {
            return Err(Error::Dimension { expected: d, actual: batch.ncols() });
        }
        Ok(())
    }

    fn run(&self, batch: ArrayView2<f64>) -> (Array1<f64>, Option<(Array2<f64>, Array2<f64>)>) {
        match self.arch.mlp_ranges() {
            None => {
                let d = self.arch.input_dim();
                let w = ArrayView1::from(&self.params[..d]);
                let b = self.params[d];
                (batch.dot(&w) + b, None)
            }
            Some(r) => {
                let v = r.view(&self.params);
                let mut h1 = batch.dot(&v.w1);
                h1 += &v.b1;
                relu_inplace(&mut h1);
                let mut h2 = h1.dot(&v.w2);
                h2 += &v.b2;
                relu_inplace(&mut h2);
                let z = h2.dot(&v.w3) + v.b3;
                (z, Some((h1, h2)))
            }
        }
    }

    /// Scores for `batch` (one row per input); retains activations for
    /// `backward`.
    pub fn forward(&mut self, batch: ArrayView2<f64>) -> Result<Vec<f64>> {
        self.check_dim(&batch)?;
        let (z, hidden) = self.run(batch.view());
        let input = batch.to_owned();
        self.cache = Some(match hidden {
            None => Activations::Linear { input },
            Some((h1, h2)) => Activations::Mlp { input, h1, h2 },
        });
        Ok(z.to_vec())
    }

    /// Scores without retaining activations.
    pub fn predict(&self, batch: ArrayView2<f64>) -> Result<Vec<f64>> {
        self.check_dim(&batch)?;
        let mut out = Vec::with_capacity(batch.nrows());
        for chunk in batch.axis_chunks_iter(Axis(0), PREDICT_CHUNK) {
            out.extend(self.run(chunk).0.iter());
        }
        Ok(out)
    }

    /// Drops retained activations.
    pub fn discard(&mut self) {
        self.cache = None;
    }

    /// Adds the gradient of `sum_i upstream_i * score_i` to the gradient
    /// buffer. Consumes the activations of the last `forward`.
    pub fn backward(&mut self, upstream: &[f64]) -> Result<()> {
        let cache =
            self.cache.take().ok_or_else(|| Error::Usage("backward called without a preceding forward".into()))?;
        let dz = ArrayView1::from(upstream);
        match (cache, self.arch.mlp_ranges()) {
            (Activations::Linear { input }, None) => {
                if input.nrows() != upstream.len() {
                    return Err(Error::Dimension { expected: input.nrows(), actual: upstream.len() });
                }
                let d = self.arch.input_dim();
                let mut gw = ArrayViewMut1::from(&mut self.grads[..d]);
                gw += &input.t().dot(&dz);
                self.grads[d] += dz.sum();
            }
            (Activations::Mlp { input, h1, h2 }, Some(r)) => {
                if input.nrows() != upstream.len() {
                    return Err(Error::Dimension { expected: input.nrows(), actual: upstream.len() });
                }
                let m = upstream.len();
                // Output layer.
                let w3 = ArrayView1::from(&self.params[r.w3.clone()]).to_owned();
                let w2 = ArrayView2::from_shape((r.h1, r.h2), &self.params[r.w2.clone()]).expect("layout").to_owned();
                {
                    let mut gw3 = ArrayViewMut1::from(&mut self.grads[r.w3.clone()]);
                    gw3 += &h2.t().dot(&dz);
                }
                self.grads[r.b3] += dz.sum();

                // Second hidden layer: dh2 = dz w3^T masked by relu.
                let mut dh2 = Array2::<f64>::zeros((m, r.h2));
                Zip::from(dh2.rows_mut()).and(&dz).and(h2.rows()).for_each(|mut row, &g, act| {
                    Zip::from(&mut row).and(&w3).and(&act).for_each(|o, &w, &a| {
                        *o = if a > 0.0 { g * w } else { 0.0 };
                    });
                });
                {
                    let mut gw2 =
                        ArrayViewMut2::from_shape((r.h1, r.h2), &mut self.grads[r.w2.clone()]).expect("layout");
                    general_mat_mul(1.0, &h1.t(), &dh2, 1.0, &mut gw2);
                    let mut gb2 = ArrayViewMut1::from(&mut self.grads[r.b2.clone()]);
                    gb2 += &dh2.sum_axis(Axis(0));
                }

                // First hidden layer.
                let mut dh1 = dh2.dot(&w2.t());
                Zip::from(&mut dh1).and(&h1).for_each(|g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
                let mut gw1 = ArrayViewMut2::from_shape((r.d, r.h1), &mut self.grads[r.w1.clone()]).expect("layout");
                general_mat_mul(1.0, &input.t(), &dh1, 1.0, &mut gw1);
                let mut gb1 = ArrayViewMut1::from(&mut self.grads[r.b1.clone()]);
                gb1 += &dh1.sum_axis(Axis(0));
            }
            _ => unreachable!("activations always match the architecture"),
        }
        self.grads_ready = true;
        Ok(())
    }

    /// Writes the checkpoint format: magic line, architecture line, then the
    /// parameters as little-endian f64.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{CHECKPOINT_MAGIC}")?;
        writeln!(w, "{}", self.arch.descriptor())?;
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::io("<checkpoint>", e))?;
        let parse_err = |offset: usize, msg: &str| Error::Parse {
            path: "<checkpoint>".into(),
            offset: offset as u64,
            msg: msg.into(),
        };
        let mut lines = Vec::new();
        let mut start = 0;
        for _ in 0..2 {
            let nl = bytes[start..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| parse_err(start, "missing header line"))?;
            let line =
                std::str::from_utf8(&bytes[start..start + nl]).map_err(|_| parse_err(start, "header is not UTF-8"))?;
            lines.push((start, line.to_string()));
            start += nl + 1;
        }
        if lines[0].1 != CHECKPOINT_MAGIC {
            return Err(parse_err(0, "bad magic"));
        }
        let arch = Architecture::parse_descriptor(&lines[1].1).map_err(|e| parse_err(lines[1].0, &e.to_string()))?;
        let body = &bytes[start..];
        let want = arch.param_count() * 8;
        if body.len() != want {
            return Err(parse_err(
                start + body.len().min(want),
                &format!("expected {want} parameter bytes, found {}", body.len()),
            ));
        }
        let params = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Predictor::from_params(arch, params)
    }
}

/// Stacks equal-length rows into a matrix.
pub fn stack_rows<'a, I>(rows: I, d: usize) -> Result<Array2<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut data = Vec::new();
    let mut n = 0;
    for row in rows {
        if row.len() != d {
            return Err(Error::Dimension { expected: d, actual: row.len() });
        }
        data.extend_from_slice(row);
        n += 1;
    }
    Ok(Array2::from_shape_vec((n, d), data).expect("rows checked"))
}
