//! Six-layer feed-forward regression network with SELU activations, trained
//! by Adam on mean squared error with early stopping on validation loss.
//!
//! Layer widths are `[N, N/2, N/4, N/4, N/4, 1]` (floor division). Weights are
//! stored row-major per layer (`outputs × inputs`); the flat parameter vector
//! is each layer's weights followed by its biases, layer by layer.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::{FeatureDataset, Normalizer, Split};

pub const SELU_LAMBDA: f64 = 1.0507009873554805;
pub const SELU_ALPHA: f64 = 1.6732632423543772;

/// Smallest input width that leaves every hidden layer non-empty with
/// margin.
pub const MIN_INPUTS: usize = 8;

#[inline]
pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * libm::expm1(x)
    }
}

#[inline]
pub fn selu_derivative(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * libm::exp(x)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    #[default]
    Selu,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub sizes: Vec<usize>,
}

impl LayerSpec {
    pub fn for_inputs(n: usize) -> Result<LayerSpec, DlnnError> {
        if n < MIN_INPUTS {
            return Err(DlnnError::TooFewInputs(n));
        }
        Ok(LayerSpec {
            sizes: vec![n, n / 2, n / 4, n / 4, n / 4, 1],
        })
    }

    pub fn inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn parameter_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Dot product with eight independent accumulators; the fixed lane layout
/// keeps results reproducible while letting the compiler vectorise.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut lanes = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        let x: &[f64; 8] = x.try_into().expect("chunk of eight");
        let y: &[f64; 8] = y.try_into().expect("chunk of eight");
        for k in 0..8 {
            lanes[k] += x[k] * y[k];
        }
    }
    let pairs = [
        lanes[0] + lanes[4],
        lanes[1] + lanes[5],
        lanes[2] + lanes[6],
        lanes[3] + lanes[7],
    ];
    (pairs[0] + pairs[2]) + (pairs[1] + pairs[3]) + tail
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub spec: LayerSpec,
    pub layers: Vec<Layer>,
    pub output_activation: OutputActivation,
    /// Present once the model has been trained on a dataset.
    pub normalizer: Option<Normalizer>,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum DlnnError {
    #[error("network needs at least {MIN_INPUTS} inputs, got {0}")]
    TooFewInputs(usize),
    #[error("expected {expected} inputs, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("expected {expected} parameters, got {got}")]
    ParameterCount { expected: usize, got: usize },
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
    #[error("dataset has an empty {0:?} split")]
    EmptySplit(Split),
    #[error("model has no normalisation parameters; train it first")]
    MissingNormalizer,
}

/// LeCun-normal weights (variance `1 / fan_in`), zero biases.
pub fn init_model(n: usize, seed: u64) -> Result<MlpModel, DlnnError> {
    let spec = LayerSpec::for_inputs(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = spec
        .sizes
        .windows(2)
        .map(|w| {
            let (inputs, outputs) = (w[0], w[1]);
            let std = 1.0 / libm::sqrt(inputs as f64);
            Layer {
                inputs,
                outputs,
                weights: (0..inputs * outputs)
                    .map(|_| std * standard_normal(&mut rng))
                    .collect(),
                biases: vec![0.0; outputs],
            }
        })
        .collect();
    Ok(MlpModel {
        spec,
        layers,
        output_activation: OutputActivation::Selu,
        normalizer: None,
        history: Vec::new(),
        best_epoch: None,
    })
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box–Muller; 1 - u keeps the log argument in (0, 1].
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

impl MlpModel {
    pub fn parameter_count(&self) -> usize {
        self.spec.parameter_count()
    }

    fn activate(&self, layer: usize, x: f64) -> f64 {
        if layer + 1 == self.layers.len() && self.output_activation == OutputActivation::Linear {
            x
        } else {
            selu(x)
        }
    }

    fn activate_derivative(&self, layer: usize, x: f64) -> f64 {
        if layer + 1 == self.layers.len() && self.output_activation == OutputActivation::Linear {
            1.0
        } else {
            selu_derivative(x)
        }
    }

    fn check_len(&self, input: &[f64]) -> Result<(), DlnnError> {
        if input.len() != self.spec.inputs() {
            return Err(DlnnError::LengthMismatch {
                expected: self.spec.inputs(),
                got: input.len(),
            });
        }
        Ok(())
    }

    /// Network output for one normalised input vector.
    pub fn forward(&self, input: &[f64]) -> Result<f64, DlnnError> {
        self.check_len(input)?;
        let mut bt = BatchTrace::new(&self.spec, 1);
        self.forward_batch(input, 1, &mut bt);
        Ok(bt.a[self.layers.len()][0])
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.biases);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), DlnnError> {
        if params.len() != self.parameter_count() {
            return Err(DlnnError::ParameterCount {
                expected: self.parameter_count(),
                got: params.len(),
            });
        }
        let mut rest = params;
        for layer in &mut self.layers {
            let (w, r) = rest.split_at(layer.weights.len());
            layer.weights.copy_from_slice(w);
            let (b, r) = r.split_at(layer.biases.len());
            layer.biases.copy_from_slice(b);
            rest = r;
        }
        Ok(())
    }

    /// Mean squared error over `(input, target)` pairs and its gradient with
    /// respect to [`MlpModel::params`].
    pub fn loss_and_gradient(&self, batch: &[(&[f64], f64)]) -> Result<(f64, Vec<f64>), DlnnError> {
        let mut x = Vec::with_capacity(batch.len() * self.spec.inputs());
        for (row, _) in batch {
            self.check_len(row)?;
            x.extend_from_slice(row);
        }
        let y: Vec<f64> = batch.iter().map(|&(_, t)| t).collect();
        let mut grad = vec![0.0; self.parameter_count()];
        let mut bt = BatchTrace::new(&self.spec, batch.len());
        let loss = self.accumulate(&x, &y, &mut grad, &mut bt);
        Ok((loss, grad))
    }

    /// Forward pass over `rows` inputs stored row-major in `x`.
    fn forward_batch(&self, x: &[f64], rows: usize, bt: &mut BatchTrace) {
        bt.ensure(&self.spec, rows);
        let n = self.spec.inputs();
        bt.a[0][..rows * n].copy_from_slice(&x[..rows * n]);
        for (l, layer) in self.layers.iter().enumerate() {
            let (ni, no) = (layer.inputs, layer.outputs);
            let (prev, next) = bt.a.split_at_mut(l + 1);
            let input = &prev[l][..rows * ni];
            let z = &mut bt.z[l][..rows * no];
            // Four samples at a time stay in L1 while the weight rows stream.
            let mut quads = input.chunks_exact(4 * ni);
            let mut s = 0;
            for quad in &mut quads {
                let (x0, r) = quad.split_at(ni);
                let (x1, r) = r.split_at(ni);
                let (x2, x3) = r.split_at(ni);
                for (j, (w, &b)) in layer
                    .weights
                    .chunks_exact(ni)
                    .zip(&layer.biases)
                    .enumerate()
                {
                    for (k, d) in dot4(w, [x0, x1, x2, x3]).into_iter().enumerate() {
                        z[(s + k) * no + j] = b + d;
                    }
                }
                s += 4;
            }
            for x in quads.remainder().chunks_exact(ni) {
                for (j, (w, &b)) in layer
                    .weights
                    .chunks_exact(ni)
                    .zip(&layer.biases)
                    .enumerate()
                {
                    z[s * no + j] = b + dot(w, x);
                }
                s += 1;
            }
            for (a, &zv) in next[0][..rows * no].iter_mut().zip(z.iter()) {
                *a = self.activate(l, zv);
            }
        }
    }

    /// Adds the batch-mean gradient into `grad` and returns the batch loss.
    fn accumulate(&self, x: &[f64], y: &[f64], grad: &mut [f64], bt: &mut BatchTrace) -> f64 {
        let rows = y.len();
        self.forward_batch(x, rows, bt);
        let last = self.layers.len() - 1;
        let scale = 1.0 / rows as f64;
        let mut loss = 0.0;
        for s in 0..rows {
            let err = bt.a[last + 1][s] - y[s];
            loss += err * err;
            bt.delta[last][s] = 2.0 * err * scale * self.activate_derivative(last, bt.z[last][s]);
        }

        let mut offset = grad.len();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let (ni, no) = (layer.inputs, layer.outputs);
            offset -= layer.weights.len() + layer.biases.len();
            let (gw, gb) = grad[offset..offset + layer.weights.len() + layer.biases.len()]
                .split_at_mut(layer.weights.len());
            let input = &bt.a[l][..rows * ni];
            let (lower, upper) = bt.delta.split_at_mut(l);
            let delta = &upper[0][..rows * no];
            // Column blocks keep the matching input tile in L1 across all
            // output rows; each element still sums samples in order.
            let dt = &mut bt.delta_t[..rows * no];
            for (s, d) in delta.chunks_exact(no).enumerate() {
                for (j, &v) in d.iter().enumerate() {
                    dt[j * rows + s] = v;
                }
            }
            for (b, d) in gb.iter_mut().zip(dt.chunks_exact(rows)) {
                for &dv in d {
                    *b += dv;
                }
            }
            for i0 in (0..ni).step_by(BLOCK) {
                let width = BLOCK.min(ni - i0);
                for (row, d) in gw.chunks_exact_mut(ni).zip(dt.chunks_exact(rows)) {
                    let block = &mut row[i0..i0 + width];
                    let mut acc = [0.0; BLOCK];
                    acc[..width].copy_from_slice(block);
                    for (s, &dv) in d.iter().enumerate() {
                        let a = &input[s * ni + i0..s * ni + i0 + width];
                        for (g, &av) in acc.iter_mut().zip(a) {
                            *g += dv * av;
                        }
                    }
                    block.copy_from_slice(&acc[..width]);
                }
            }
            if l > 0 {
                let back = &mut lower[l - 1][..rows * ni];
                for i0 in (0..ni).step_by(BLOCK) {
                    let width = BLOCK.min(ni - i0);
                    for (acc_s, d) in back.chunks_exact_mut(ni).zip(delta.chunks_exact(no)) {
                        let mut acc = [0.0; BLOCK];
                        for (w, &dv) in layer.weights.chunks_exact(ni).zip(d) {
                            for (a, &wv) in acc.iter_mut().zip(&w[i0..i0 + width]) {
                                *a += wv * dv;
                            }
                        }
                        acc_s[i0..i0 + width].copy_from_slice(&acc[..width]);
                    }
                }
                for (acc, &z) in back.iter_mut().zip(&bt.z[l - 1][..rows * ni]) {
                    *acc *= self.activate_derivative(l - 1, z);
                }
            }
        }
        loss * scale
    }

    /// Network outputs for normalised inputs stored row-major in `x`.
    fn outputs(&self, x: &[f64], bt: &mut BatchTrace) -> Vec<f64> {
        let n = self.spec.inputs();
        let last = self.layers.len();
        let mut out = Vec::with_capacity(x.len() / n);
        for chunk in x.chunks(n * EVAL_BATCH) {
            let rows = chunk.len() / n;
            self.forward_batch(chunk, rows, bt);
            out.extend_from_slice(&bt.a[last][..rows]);
        }
        out
    }

    /// Mean squared error over normalised pairs stored in `inputs`/`targets`.
    fn mse(&self, inputs: &[f64], targets: &[f64], bt: &mut BatchTrace) -> f64 {
        let total: f64 = self
            .outputs(inputs, bt)
            .iter()
            .zip(targets)
            .map(|(p, &y)| {
                let e = p - y;
                e * e
            })
            .sum();
        total / targets.len() as f64
    }
}

/// [`dot`] of one vector against four others, sharing the loads of `w`.
/// Each result is bit-identical to the corresponding [`dot`] call.
#[inline]
fn dot4(w: &[f64], xs: [&[f64]; 4]) -> [f64; 4] {
    let n = w.len();
    let full = n - n % 8;
    let mut lanes = [[0.0f64; 8]; 4];
    for i in (0..full).step_by(8) {
        let wv: &[f64; 8] = w[i..i + 8].try_into().expect("eight");
        for (lane, x) in lanes.iter_mut().zip(&xs) {
            let xv: &[f64; 8] = x[i..i + 8].try_into().expect("eight");
            for k in 0..8 {
                lane[k] += wv[k] * xv[k];
            }
        }
    }
    let mut out = [0.0; 4];
    for ((o, lane), x) in out.iter_mut().zip(&lanes).zip(&xs) {
        let tail: f64 = w[full..].iter().zip(&x[full..n]).map(|(a, b)| a * b).sum();
        let pairs = [
            lane[0] + lane[4],
            lane[1] + lane[5],
            lane[2] + lane[6],
            lane[3] + lane[7],
        ];
        *o = (pairs[0] + pairs[2]) + (pairs[1] + pairs[3]) + tail;
    }
    out
}

/// Column block width of the register-tiled gradient loops.
const BLOCK: usize = 16;

/// Rows per forward-only batch in evaluation.
const EVAL_BATCH: usize = 64;

/// Per-layer activations, pre-activations and deltas of a batch, row-major.
struct BatchTrace {
    capacity: usize,
    z: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
    /// Transposed deltas of the layer being back-propagated.
    delta_t: Vec<f64>,
}

impl BatchTrace {
    fn new(spec: &LayerSpec, rows: usize) -> BatchTrace {
        let rows = rows.max(1);
        BatchTrace {
            capacity: rows,
            z: spec.sizes[1..]
                .iter()
                .map(|&n| vec![0.0; n * rows])
                .collect(),
            a: spec.sizes.iter().map(|&n| vec![0.0; n * rows]).collect(),
            delta: spec.sizes[1..]
                .iter()
                .map(|&n| vec![0.0; n * rows])
                .collect(),
            delta_t: vec![0.0; spec.sizes[1..].iter().max().copied().unwrap_or(1) * rows],
        }
    }

    fn ensure(&mut self, spec: &LayerSpec, rows: usize) {
        if rows > self.capacity {
            *self = BatchTrace::new(spec, rows);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Non-improving epochs tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    pub output_activation: OutputActivation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            max_epochs: 500,
            patience: 20,
            seed: 0,
            output_activation: OutputActivation::Selu,
        }
    }
}

/// Adam moment estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(parameters: usize) -> AdamState {
        AdamState {
            m: vec![0.0; parameters],
            v: vec![0.0; parameters],
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - libm::pow(cfg.beta1, t);
        let c2 = 1.0 - libm::pow(cfg.beta2, t);
        let lr = cfg.learning_rate;
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (libm::sqrt(v_hat) + cfg.epsilon);
        }
    }
}

/// Normalised inputs (flat, row-major) and targets of one split.
fn normalized_split(dataset: &FeatureDataset, split: Split) -> (Vec<f64>, Vec<f64>) {
    let norm = &dataset.normalizer;
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for s in dataset.split(split) {
        inputs.extend(norm.normalize_inputs(&s.inputs));
        targets.push(norm.normalize_target(s.target));
    }
    (inputs, targets)
}

/// Trains on the dataset's train split and early-stops on its validation
/// split. The returned model carries the parameters of the best validation
/// epoch, the full history and the dataset's normaliser.
pub fn train(
    mut model: MlpModel,
    dataset: &FeatureDataset,
    config: &TrainConfig,
) -> Result<MlpModel, DlnnError> {
    let n = model.spec.inputs();
    if dataset.layout.input_len() != n {
        return Err(DlnnError::LengthMismatch {
            expected: n,
            got: dataset.layout.input_len(),
        });
    }
    let (train_x, train_y) = normalized_split(dataset, Split::Train);
    let (val_x, val_y) = normalized_split(dataset, Split::Validation);
    if train_y.is_empty() {
        return Err(DlnnError::EmptySplit(Split::Train));
    }
    if val_y.is_empty() {
        return Err(DlnnError::EmptySplit(Split::Validation));
    }
    model.output_activation = config.output_activation;
    model.normalizer = Some(dataset.normalizer.clone());
    model.history.clear();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_y.len()).collect();
    let mut params = model.params();
    let mut adam = AdamState::new(params.len());
    let mut grad = vec![0.0; params.len()];
    let mut bt = BatchTrace::new(&model.spec, config.batch_size.max(EVAL_BATCH));
    let mut xb = Vec::with_capacity(config.batch_size.max(1) * n);
    let mut yb = Vec::with_capacity(config.batch_size.max(1));
    let mut best = (f64::INFINITY, params.clone(), 0usize);
    let mut since_best = 0;
    let batch_size = config.batch_size.max(1);

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            xb.clear();
            yb.clear();
            for &i in batch {
                xb.extend_from_slice(&train_x[i * n..(i + 1) * n]);
                yb.push(train_y[i]);
            }
            let loss = model.accumulate(&xb, &yb, &mut grad, &mut bt);
            epoch_loss += loss * batch.len() as f64;
            adam.update(&mut params, &grad, config);
            model.set_params(&params)?;
        }
        let train_loss = epoch_loss / train_y.len() as f64;
        let validation_loss = model.mse(&val_x, &val_y, &mut bt);
        if !(train_loss.is_finite() && validation_loss.is_finite())
            || params.iter().any(|p| !p.is_finite())
        {
            return Err(DlnnError::Diverged { epoch });
        }
        model.history.push(EpochRecord {
            epoch,
            train_loss,
            validation_loss,
        });
        if validation_loss < best.0 {
            best = (validation_loss, params.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > config.patience {
                break;
            }
        }
    }
    model.set_params(&best.1)?;
    model.best_epoch = Some(best.2);
    Ok(model)
}

/// Predicted voltages (pu) for raw, unnormalised input vectors, in order.
pub fn predict<'a>(
    model: &MlpModel,
    inputs: impl IntoIterator<Item = &'a [f64]>,
) -> Result<Vec<f64>, DlnnError> {
    let norm = model
        .normalizer
        .as_ref()
        .ok_or(DlnnError::MissingNormalizer)?;
    let mut x = Vec::new();
    for raw in inputs {
        model.check_len(raw)?;
        x.extend(norm.normalize_inputs(raw));
    }
    let mut bt = BatchTrace::new(&model.spec, EVAL_BATCH);
    Ok(model
        .outputs(&x, &mut bt)
        .into_iter()
        .map(|z| norm.denormalize_target(z))
        .collect())
}
