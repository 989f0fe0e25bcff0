//! Fully connected ReLU network trained from scratch with softmax
//! cross-entropy, inverted dropout and Adam.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::learn::normalize::Normalizer;
use crate::scalar::Real;
use crate::simulate::Dataset;

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpHyper {
    pub hidden: Vec<usize>,
    /// Drop probability applied to hidden activations that feed another
    /// hidden layer.
    pub dropout: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Share of the training set held out for early stopping.
    pub validation_fraction: f64,
}

impl Default for MlpHyper {
    fn default() -> Self {
        Self {
            hidden: vec![1024, 1024, 512],
            dropout: 0.2,
            batch_size: 128,
            learning_rate: 1e-3,
            max_epochs: 100,
            patience: 10,
            validation_fraction: 0.1,
        }
    }
}

/// One affine layer; `weights` is `outputs x inputs`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, relu: bool, rng: &mut R) -> Self {
        // He initialization ahead of ReLU, Glorot for the output layer.
        let std = if relu { (2.0 / inputs as f64).sqrt() } else { (2.0 / (inputs + outputs) as f64).sqrt() };
        let weights = (0..inputs * outputs)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                T::lit(z * std)
            })
            .collect();
        Self { inputs, outputs, weights, bias: vec![T::zero(); outputs] }
    }

    /// `out = x W^T + b` for a batch of `rows` inputs.
    fn forward(&self, x: &[T], rows: usize, out: &mut [T]) {
        for r in 0..rows {
            out[r * self.outputs..(r + 1) * self.outputs].copy_from_slice(&self.bias);
        }
        T::gemm(
            rows,
            self.inputs,
            self.outputs,
            T::one(),
            x,
            (self.inputs as isize, 1),
            &self.weights,
            (1, self.inputs as isize),
            T::one(),
            out,
            (self.outputs as isize, 1),
        );
    }
}

/// Layer stack without the input normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    pub layers: Vec<Dense<T>>,
}

/// Gradients laid out like the network's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Vec<T>>,
    pub bias: Vec<Vec<T>>,
}

impl<T: Real> Gradients<T> {
    fn zeros_like(net: &Network<T>) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![T::zero(); l.weights.len()]).collect(),
            bias: net.layers.iter().map(|l| vec![T::zero(); l.bias.len()]).collect(),
        }
    }
}

/// Activations and scratch buffers for one batch size.
struct Workspace<T> {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<T>>,
    masks: Vec<Vec<T>>,
    delta: Vec<T>,
    delta_prev: Vec<T>,
}

impl<T: Real> Workspace<T> {
    fn new(net: &Network<T>, rows: usize) -> Self {
        let mut acts = vec![vec![T::zero(); rows * net.input_dim()]];
        acts.extend(net.layers.iter().map(|l| vec![T::zero(); rows * l.outputs]));
        let widest = net.layers.iter().map(|l| l.inputs.max(l.outputs)).max().unwrap_or(0);
        Self {
            masks: net.layers.iter().map(|l| vec![T::one(); rows * l.outputs]).collect(),
            acts,
            delta: vec![T::zero(); rows * widest],
            delta_prev: vec![T::zero(); rows * widest],
        }
    }
}

impl<T: Real> Network<T> {
    /// Randomly initialized network with the given layer widths.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidParameter(format!("bad layer sizes {sizes:?}")));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| Dense::init(w[0], w[1], k < last, rng))
            .collect();
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    /// Forward pass over `rows` inputs already in `ws.acts[0]`; leaves the
    /// logits in the last activation buffer. Dropout masks are applied when
    /// `train` is set.
    fn forward_ws(&self, ws: &mut Workspace<T>, rows: usize, train: bool) {
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (before, after) = ws.acts.split_at_mut(l + 1);
            let input = &before[l][..rows * layer.inputs];
            let out = &mut after[0][..rows * layer.outputs];
            layer.forward(input, rows, out);
            if l < last {
                for v in out.iter_mut() {
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                }
                if train && l + 1 < last {
                    for (v, m) in out.iter_mut().zip(&ws.masks[l]) {
                        *v = *v * *m;
                    }
                }
            }
        }
    }

    fn draw_masks<R: Rng + ?Sized>(&self, ws: &mut Workspace<T>, rows: usize, dropout: f64, rng: &mut R) {
        let last = self.layers.len() - 1;
        let keep = T::lit(1.0 / (1.0 - dropout));
        for l in 0..last.saturating_sub(1) {
            for m in ws.masks[l][..rows * self.layers[l].outputs].iter_mut() {
                *m = if rng.gen::<f64>() < dropout { T::zero() } else { keep };
            }
        }
    }

    /// Mean cross-entropy of the batch; writes `d loss / d logits` into
    /// `ws.delta`.
    fn softmax_loss(&self, ws: &mut Workspace<T>, rows: usize, labels: &[usize]) -> T {
        let k = self.output_dim();
        let logits = &ws.acts[self.layers.len()];
        let inv_rows = T::one() / T::from_usize_lossy(rows);
        let mut loss = T::zero();
        for r in 0..rows {
            let z = &logits[r * k..(r + 1) * k];
            let d = &mut ws.delta[r * k..(r + 1) * k];
            let max = z.iter().copied().fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for (dv, zv) in d.iter_mut().zip(z) {
                *dv = (*zv - max).exp();
                sum = sum + *dv;
            }
            loss = loss + (sum.ln() + max - z[labels[r]]);
            for dv in d.iter_mut() {
                *dv = *dv / sum * inv_rows;
            }
            d[labels[r]] = d[labels[r]] - inv_rows;
        }
        loss * inv_rows
    }

    /// Backpropagates `ws.delta` (gradient w.r.t. the logits) into `grads`.
    fn backward(&self, ws: &mut Workspace<T>, rows: usize, train: bool, grads: &mut Gradients<T>) {
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &ws.acts[l][..rows * layer.inputs];
            let delta = &ws.delta[..rows * layer.outputs];
            // dW = delta^T x
            T::gemm(
                layer.outputs,
                rows,
                layer.inputs,
                T::one(),
                delta,
                (1, layer.outputs as isize),
                input,
                (layer.inputs as isize, 1),
                T::zero(),
                &mut grads.weights[l],
                (layer.inputs as isize, 1),
            );
            let gb = &mut grads.bias[l];
            gb.iter_mut().for_each(|g| *g = T::zero());
            for r in 0..rows {
                for (g, d) in gb.iter_mut().zip(&delta[r * layer.outputs..(r + 1) * layer.outputs]) {
                    *g = *g + *d;
                }
            }
            if l == 0 {
                break;
            }
            let prev = &mut ws.delta_prev[..rows * layer.inputs];
            T::gemm(
                rows,
                layer.outputs,
                layer.inputs,
                T::one(),
                delta,
                (layer.outputs as isize, 1),
                &layer.weights,
                (layer.inputs as isize, 1),
                T::zero(),
                prev,
                (layer.inputs as isize, 1),
            );
            // Through the ReLU (and the dropout mask) of layer l - 1.
            let act = &ws.acts[l][..rows * layer.inputs];
            let masked = train && l < self.layers.len() - 1;
            for (k, (p, a)) in prev.iter_mut().zip(act).enumerate() {
                if *a <= T::zero() {
                    *p = T::zero();
                } else if masked {
                    *p = *p * ws.masks[l - 1][k];
                }
            }
            std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
        }
    }

    /// Mean cross-entropy and its exact gradient on a batch, no dropout.
    pub fn loss_and_gradients(&self, inputs: &[T], labels: &[usize]) -> (T, Gradients<T>) {
        let rows = labels.len();
        let mut ws = Workspace::new(self, rows);
        ws.acts[0].copy_from_slice(&inputs[..rows * self.input_dim()]);
        self.forward_ws(&mut ws, rows, false);
        let loss = self.softmax_loss(&mut ws, rows, labels);
        let mut grads = Gradients::zeros_like(self);
        self.backward(&mut ws, rows, false, &mut grads);
        (loss, grads)
    }

    /// Logits for a batch of inputs.
    pub fn logits(&self, inputs: &[T], rows: usize) -> Vec<T> {
        let mut ws = Workspace::new(self, rows);
        ws.acts[0].copy_from_slice(&inputs[..rows * self.input_dim()]);
        self.forward_ws(&mut ws, rows, false);
        ws.acts.pop().unwrap_or_default()
    }
}

/// Adam state for every parameter.
struct Adam<T> {
    m: Gradients<T>,
    v: Gradients<T>,
    step: i32,
    lr: f64,
}

impl<T: Real> Adam<T> {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(net: &Network<T>, lr: f64) -> Self {
        Self { m: Gradients::zeros_like(net), v: Gradients::zeros_like(net), step: 0, lr }
    }

    fn update(&mut self, net: &mut Network<T>, grads: &Gradients<T>) {
        self.step += 1;
        let b1 = T::lit(Self::BETA1);
        let b2 = T::lit(Self::BETA2);
        let c1 = T::one() - b1;
        let c2 = T::one() - b2;
        let lr_t = T::lit(
            self.lr * (1.0 - Self::BETA2.powi(self.step)).sqrt() / (1.0 - Self::BETA1.powi(self.step)),
        );
        let eps = T::lit(Self::EPS);
        let step = |p: &mut [T], g: &[T], m: &mut [T], v: &mut [T]| {
            for (((p, g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + c1 * *g;
                *v = b2 * *v + c2 * *g * *g;
                *p = *p - lr_t * *m / (v.sqrt() + eps);
            }
        };
        for (l, layer) in net.layers.iter_mut().enumerate() {
            step(&mut layer.weights, &grads.weights[l], &mut self.m.weights[l], &mut self.v.weights[l]);
            step(&mut layer.bias, &grads.bias[l], &mut self.m.bias[l], &mut self.v.bias[l]);
        }
    }
}

/// Normalization plus network.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel<T> {
    pub normalizer: Normalizer<T>,
    pub network: Network<T>,
}

const PREDICT_CHUNK: usize = 512;

impl<T: Real> MlpModel<T> {
    pub fn feature_dim(&self) -> usize {
        self.network.input_dim()
    }

    pub fn class_count(&self) -> usize {
        self.network.output_dim()
    }

    pub fn predict(&self, feature: &[T]) -> Result<usize> {
        Ok(self.predict_batch(std::slice::from_ref(&feature))?[0])
    }

    pub fn predict_batch<F: AsRef<[T]>>(&self, features: &[F]) -> Result<Vec<usize>> {
        let d = self.feature_dim();
        let k = self.class_count();
        let mut out = Vec::with_capacity(features.len());
        let mut ws = Workspace::new(&self.network, PREDICT_CHUNK.min(features.len().max(1)));
        for chunk in features.chunks(PREDICT_CHUNK) {
            for (r, f) in chunk.iter().enumerate() {
                let f = f.as_ref();
                if f.len() != d {
                    return Err(Error::Arity { expected: d, actual: f.len() });
                }
                self.normalizer.apply_into(f, &mut ws.acts[0][r * d..(r + 1) * d]);
            }
            self.network.forward_ws(&mut ws, chunk.len(), false);
            let logits = &ws.acts[self.network.layers.len()];
            out.extend((0..chunk.len()).map(|r| argmax(&logits[r * k..(r + 1) * k])));
        }
        Ok(out)
    }
}

pub(crate) fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Per-epoch record kept during training.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_accuracy: Option<f64>,
}

/// Trains from scratch; labels index the field's cells.
pub fn train_mlp<T: Real, R: Rng + ?Sized>(train: &Dataset<T>, hyper: &MlpHyper, rng: &mut R) -> Result<MlpModel<T>> {
    train_mlp_logged(train, hyper, rng).map(|(m, _)| m)
}

pub fn train_mlp_logged<T: Real, R: Rng + ?Sized>(
    train: &Dataset<T>,
    hyper: &MlpHyper,
    rng: &mut R,
) -> Result<(MlpModel<T>, Vec<EpochLog>)> {
    super::check_training_set(train)?;
    if !(0.0..1.0).contains(&hyper.dropout) || hyper.batch_size == 0 || hyper.max_epochs == 0 {
        return Err(Error::InvalidParameter("bad MLP hyperparameters".into()));
    }
    let d = train.feature_dim();
    let classes = train.class_count();

    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(rng);
    let n_val = if train.len() >= 20 { ((train.len() as f64) * hyper.validation_fraction).round() as usize } else { 0 };
    let (val_idx, fit_idx) = order.split_at(n_val);
    let mut fit_idx = fit_idx.to_vec();

    let normalizer = Normalizer::fit(d, fit_idx.iter().map(|&i| train.samples[i].feature.as_slice()));
    let inputs: Vec<T> = train.samples.iter().flat_map(|s| normalizer.apply(&s.feature)).collect();
    let labels: Vec<usize> = train.samples.iter().map(|s| s.label).collect();

    let mut sizes = vec![d];
    sizes.extend(&hyper.hidden);
    sizes.push(classes);
    let mut net = Network::new(&sizes, rng)?;
    let mut adam = Adam::new(&net, hyper.learning_rate);
    let batch = hyper.batch_size.min(fit_idx.len());
    let mut ws = Workspace::new(&net, batch);
    let mut grads = Gradients::zeros_like(&net);
    let mut batch_labels = vec![0usize; batch];

    let val_features: Vec<&[T]> = val_idx.iter().map(|&i| &inputs[i * d..(i + 1) * d]).collect();
    let mut best: Option<(f64, Network<T>)> = None;
    let mut since_best = 0;
    let mut log = Vec::new();

    for epoch in 0..hyper.max_epochs {
        fit_idx.shuffle(rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in fit_idx.chunks(batch) {
            let rows = chunk.len();
            for (r, &i) in chunk.iter().enumerate() {
                ws.acts[0][r * d..(r + 1) * d].copy_from_slice(&inputs[i * d..(i + 1) * d]);
                batch_labels[r] = labels[i];
            }
            let train_mode = hyper.dropout > 0.0;
            if train_mode {
                net.draw_masks(&mut ws, rows, hyper.dropout, rng);
            }
            net.forward_ws(&mut ws, rows, train_mode);
            loss_sum += net.softmax_loss(&mut ws, rows, &batch_labels[..rows]).to_f64_lossy();
            net.backward(&mut ws, rows, train_mode, &mut grads);
            adam.update(&mut net, &grads);
            batches += 1;
        }
        let train_loss = loss_sum / batches.max(1) as f64;
        if !train_loss.is_finite() {
            return Err(Error::Numerical(format!("training loss diverged at epoch {epoch}")));
        }
        let val_acc = (!val_features.is_empty()).then(|| {
            let pred = raw_predict(&net, &val_features);
            pred.iter().zip(val_idx).filter(|(p, &i)| **p == labels[i]).count() as f64 / val_idx.len() as f64
        });
        log.push(EpochLog { epoch, train_loss, validation_accuracy: val_acc });
        if let Some(acc) = val_acc {
            if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                best = Some((acc, net.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= hyper.patience {
                    break;
                }
            }
        }
    }
    let network = best.map_or(net, |(_, n)| n);
    Ok((MlpModel { normalizer, network }, log))
}

fn raw_predict<T: Real>(net: &Network<T>, features: &[&[T]]) -> Vec<usize> {
    let d = net.input_dim();
    let k = net.output_dim();
    let mut ws = Workspace::new(net, PREDICT_CHUNK.min(features.len().max(1)));
    let mut out = Vec::with_capacity(features.len());
    for chunk in features.chunks(PREDICT_CHUNK) {
        for (r, f) in chunk.iter().enumerate() {
            ws.acts[0][r * d..(r + 1) * d].copy_from_slice(f);
        }
        net.forward_ws(&mut ws, chunk.len(), false);
        let logits = &ws.acts[net.layers.len()];
        out.extend((0..chunk.len()).map(|r| argmax(&logits[r * k..(r + 1) * k])));
    }
    out
}
