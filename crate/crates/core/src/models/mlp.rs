//! A feed-forward network over windowed one-hot token encodings.
//!
//! The input is a list of active indices (one per window slot), so the first
//! layer never materializes the huge one-hot vector: its weight matrix is
//! stored input-major and the forward pass just sums the rows picked out by
//! the active indices. After the first hidden activation — and only there —
//! inverted dropout rescales the surviving units by `1 / (1 - p)` during
//! training, which keeps prediction a plain forward pass with no test-time
//! scaling. Later layers are ordinary dense ReLU layers ending in a softmax.
//!
//! Optimization is minibatch Adam. All randomness — He initialization, the
//! per-epoch shuffle, and the dropout masks — is drawn from one seeded
//! ChaCha20 stream in a fixed order, so training is reproducible to the bit.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::models::log_sum_exp;
use crate::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Hyperparameters for the Adam training loop.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpOptions {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Dense {
    /// One row per output unit.
    pub(crate) weights: Array2<f64>,
    pub(crate) bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// First-layer weights, input-major: row `i` is what active index `i`
    /// contributes to the first hidden layer.
    embed: Array2<f64>,
    b1: Array1<f64>,
    /// Remaining hidden layers followed by the output layer.
    layers: Vec<Dense>,
}

/// Per-tensor gradients in the same shapes as the model.
struct Gradients {
    embed: Array2<f64>,
    b1: Array1<f64>,
    layers: Vec<(Array2<f64>, Array1<f64>)>,
}

fn he_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std");
    let data: Vec<f64> = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    Array2::from_shape_vec((rows, cols), data).expect("shape matches data")
}

/// Inverted-dropout mask: zero with probability `dropout`, else `1/(1-p)`.
/// Elements are drawn row-major so the stream of random numbers consumed is
/// a pure function of the batch shape.
fn sample_mask(rng: &mut ChaCha20Rng, rows: usize, cols: usize, dropout: f64) -> Array2<f64> {
    let keep_scale = 1.0 / (1.0 - dropout);
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| if rng.gen::<f64>() < dropout { 0.0 } else { keep_scale })
        .collect();
    Array2::from_shape_vec((rows, cols), data).expect("shape matches data")
}

fn validate_index_rows(
    rows: &[Vec<usize>],
    labels: &[usize],
    input_dim: usize,
    n_classes: usize,
) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::empty("training requires at least one row"));
    }
    if rows.len() != labels.len() {
        return Err(Error::config(format!(
            "{} rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    for &label in labels {
        if label >= n_classes {
            return Err(Error::config(format!(
                "label {label} out of range for {n_classes} classes"
            )));
        }
    }
    for row in rows {
        for &idx in row {
            if idx >= input_dim {
                return Err(Error::Dimension { expected: input_dim, actual: idx + 1 });
            }
        }
    }
    Ok(())
}

struct AdamState {
    t: i32,
    embed: (Array2<f64>, Array2<f64>),
    b1: (Array1<f64>, Array1<f64>),
    layers: Vec<((Array2<f64>, Array2<f64>), (Array1<f64>, Array1<f64>))>,
}

fn adam_update<D: ndarray::Dimension>(
    param: &mut ndarray::Array<f64, D>,
    grad: &ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    lr: f64,
    bias1: f64,
    bias2: f64,
) {
    Zip::from(param).and(grad).and(m).and(v).for_each(|p, &g, m, v| {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    });
}

impl AdamState {
    fn new(model: &Mlp) -> AdamState {
        AdamState {
            t: 0,
            embed: (
                Array2::zeros(model.embed.raw_dim()),
                Array2::zeros(model.embed.raw_dim()),
            ),
            b1: (Array1::zeros(model.b1.len()), Array1::zeros(model.b1.len())),
            layers: model
                .layers
                .iter()
                .map(|l| {
                    (
                        (Array2::zeros(l.weights.raw_dim()), Array2::zeros(l.weights.raw_dim())),
                        (Array1::zeros(l.bias.len()), Array1::zeros(l.bias.len())),
                    )
                })
                .collect(),
        }
    }

    /// One Adam step; `t` is shared across every tensor and incremented once
    /// per minibatch.
    fn step(&mut self, model: &mut Mlp, grads: &Gradients, lr: f64) {
        self.t += 1;
        let bias1 = 1.0 - BETA1.powi(self.t);
        let bias2 = 1.0 - BETA2.powi(self.t);
        adam_update(&mut model.embed, &grads.embed, &mut self.embed.0, &mut self.embed.1, lr, bias1, bias2);
        adam_update(&mut model.b1, &grads.b1, &mut self.b1.0, &mut self.b1.1, lr, bias1, bias2);
        for ((layer, grad), state) in
            model.layers.iter_mut().zip(&grads.layers).zip(&mut self.layers)
        {
            adam_update(&mut layer.weights, &grad.0, &mut state.0 .0, &mut state.0 .1, lr, bias1, bias2);
            adam_update(&mut layer.bias, &grad.1, &mut state.1 .0, &mut state.1 .1, lr, bias1, bias2);
        }
    }
}

impl Mlp {
    /// A freshly initialized, untrained network: He-normal weights
    /// (`N(0, √(2/fan_in))`) everywhere, zero biases.
    pub fn init(input_dim: usize, hidden: &[usize], n_classes: usize, seed: u64) -> Result<Mlp> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Mlp::init_with_rng(input_dim, hidden, n_classes, &mut rng)
    }

    fn init_with_rng(
        input_dim: usize,
        hidden: &[usize],
        n_classes: usize,
        rng: &mut ChaCha20Rng,
    ) -> Result<Mlp> {
        if input_dim == 0 || n_classes == 0 {
            return Err(Error::config("input_dim and n_classes must be at least 1"));
        }
        if hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::config("hidden layers must be non-empty and positive"));
        }
        let h1 = hidden[0];
        let embed = he_matrix(rng, input_dim, h1, input_dim);
        let b1 = Array1::zeros(h1);
        let mut layers = Vec::with_capacity(hidden.len());
        let mut fan_in = h1;
        for &width in &hidden[1..] {
            layers.push(Dense {
                weights: he_matrix(rng, width, fan_in, fan_in),
                bias: Array1::zeros(width),
            });
            fan_in = width;
        }
        layers.push(Dense {
            weights: he_matrix(rng, n_classes, fan_in, fan_in),
            bias: Array1::zeros(n_classes),
        });
        Ok(Mlp { embed, b1, layers })
    }

    pub fn train(
        rows: &[Vec<usize>],
        labels: &[usize],
        input_dim: usize,
        hidden: &[usize],
        n_classes: usize,
        options: &MlpOptions,
    ) -> Result<Mlp> {
        if !(options.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if options.epochs == 0 || options.batch_size == 0 {
            return Err(Error::config("epochs and batch_size must be at least 1"));
        }
        if !(0.0..1.0).contains(&options.dropout) {
            return Err(Error::config("dropout must lie in [0, 1)"));
        }
        validate_index_rows(rows, labels, input_dim, n_classes)?;

        let mut rng = ChaCha20Rng::seed_from_u64(options.seed);
        let mut model = Mlp::init_with_rng(input_dim, hidden, n_classes, &mut rng)?;
        let mut adam = AdamState::new(&model);
        let h1 = model.b1.len();
        let mut order: Vec<usize> = (0..rows.len()).collect();

        for epoch in 0..options.epochs {
            order.shuffle(&mut rng);
            let mut epoch_ce = 0.0;
            for chunk in order.chunks(options.batch_size) {
                let batch_rows: Vec<&[usize]> =
                    chunk.iter().map(|&i| rows[i].as_slice()).collect();
                let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
                let mask = if options.dropout > 0.0 {
                    Some(sample_mask(&mut rng, chunk.len(), h1, options.dropout))
                } else {
                    None
                };
                let (loss, grads) =
                    model.loss_and_gradient_impl(&batch_rows, &batch_labels, mask.as_ref());
                epoch_ce += loss * chunk.len() as f64;
                adam.step(&mut model, &grads, options.learning_rate);
            }
            // Minibatch losses are averaged over the epoch so a single odd
            // batch cannot hide an exploding objective.
            let epoch_loss = epoch_ce / rows.len() as f64;
            if !epoch_loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
        }
        Ok(model)
    }

    pub fn input_dim(&self) -> usize {
        self.embed.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().expect("at least the output layer").bias.len()
    }

    /// Hidden layer widths, first to last.
    pub fn hidden_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.b1.len()];
        dims.extend(self.layers[..self.layers.len() - 1].iter().map(|l| l.bias.len()));
        dims
    }

    /// Pre-activations of the first hidden layer for a batch of index rows.
    fn first_layer(&self, rows: &[&[usize]]) -> Array2<f64> {
        let mut z1 = Array2::zeros((rows.len(), self.b1.len()));
        for (b, row) in rows.iter().enumerate() {
            let mut acc = z1.row_mut(b);
            acc.assign(&self.b1);
            for &idx in row.iter() {
                acc += &self.embed.row(idx);
            }
        }
        z1
    }

    fn forward_logits(&self, rows: &[&[usize]]) -> Array2<f64> {
        let z1 = self.first_layer(rows);
        let mut act = z1.mapv(|v| v.max(0.0));
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let z = act.dot(&layer.weights.t()) + &layer.bias;
            act = if k == last { z } else { z.mapv(|v| v.max(0.0)) };
        }
        act
    }

    /// Softmax class probabilities for one row of active indices.
    pub fn predict_proba(&self, row: &[usize]) -> Result<Vec<f64>> {
        for &idx in row {
            if idx >= self.input_dim() {
                return Err(Error::Dimension { expected: self.input_dim(), actual: idx + 1 });
            }
        }
        let logits = self.forward_logits(&[row]);
        let mut scores = logits.row(0).to_vec();
        crate::models::normalize_log_scores(&mut scores);
        Ok(scores)
    }

    /// Forward and backward in one pass. The loss is mean cross-entropy over
    /// the given rows; `mask` (training only) is the dropout mask applied
    /// after the first hidden activation.
    fn loss_and_gradient_impl(
        &self,
        rows: &[&[usize]],
        labels: &[usize],
        mask: Option<&Array2<f64>>,
    ) -> (f64, Gradients) {
        let batch = rows.len() as f64;
        let z1 = self.first_layer(rows);
        let mut act = z1.mapv(|v| v.max(0.0));
        if let Some(mask) = mask {
            act *= mask;
        }

        // inputs[k] holds what layer k consumed; pres[k] what it produced.
        let last = self.layers.len() - 1;
        let mut inputs: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        let mut pres: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let z = act.dot(&layer.weights.t()) + &layer.bias;
            let next = if k == last { Array2::zeros((0, 0)) } else { z.mapv(|v| v.max(0.0)) };
            inputs.push(std::mem::replace(&mut act, next));
            pres.push(z);
        }

        // Softmax + cross-entropy on the logits; `g` becomes dL/d(logits).
        let logits = pres.last().expect("output layer present");
        let mut g = logits.clone();
        let mut total_ce = 0.0;
        for (b, mut row) in g.rows_mut().into_iter().enumerate() {
            let slice = row.as_slice_mut().expect("standard layout");
            let lse = log_sum_exp(slice);
            total_ce += lse - slice[labels[b]];
            for value in slice.iter_mut() {
                *value = (*value - lse).exp();
            }
        }
        for (b, &label) in labels.iter().enumerate() {
            g[[b, label]] -= 1.0;
        }
        g.mapv_inplace(|v| v / batch);

        let mut grad_layers: Vec<(Array2<f64>, Array1<f64>)> =
            Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let grad_w = g.t().dot(&inputs[k]);
            let grad_b = g.sum_axis(Axis(0));
            let mut g_prev = g.dot(&self.layers[k].weights);
            if k > 0 {
                // Undo the ReLU that produced inputs[k].
                g_prev.zip_mut_with(&pres[k - 1], |gv, &z| {
                    if z <= 0.0 {
                        *gv = 0.0;
                    }
                });
            } else {
                if let Some(mask) = mask {
                    g_prev *= mask;
                }
                g_prev.zip_mut_with(&z1, |gv, &z| {
                    if z <= 0.0 {
                        *gv = 0.0;
                    }
                });
            }
            grad_layers.push((grad_w, grad_b));
            g = g_prev;
        }
        grad_layers.reverse();

        // `g` is now dL/dz1; scatter it back through the index rows.
        let grad_b1 = g.sum_axis(Axis(0));
        let mut grad_embed = Array2::zeros(self.embed.raw_dim());
        for (b, row) in rows.iter().enumerate() {
            for &idx in row.iter() {
                let mut target = grad_embed.row_mut(idx);
                target += &g.row(b);
            }
        }

        (
            total_ce / batch,
            Gradients { embed: grad_embed, b1: grad_b1, layers: grad_layers },
        )
    }

    /// Mean cross-entropy at the current parameters, dropout disabled.
    pub fn loss(&self, rows: &[Vec<usize>], labels: &[usize]) -> Result<f64> {
        validate_index_rows(rows, labels, self.input_dim(), self.n_classes())?;
        let refs: Vec<&[usize]> = rows.iter().map(|r| r.as_slice()).collect();
        Ok(self.loss_and_gradient_impl(&refs, labels, None).0)
    }

    /// Gradient of `loss`, flattened in `flat_params` order.
    pub fn gradient(&self, rows: &[Vec<usize>], labels: &[usize]) -> Result<Vec<f64>> {
        validate_index_rows(rows, labels, self.input_dim(), self.n_classes())?;
        let refs: Vec<&[usize]> = rows.iter().map(|r| r.as_slice()).collect();
        let (_, grads) = self.loss_and_gradient_impl(&refs, labels, None);
        let mut flat: Vec<f64> = grads.embed.iter().copied().collect();
        flat.extend(grads.b1.iter());
        for (w, b) in &grads.layers {
            flat.extend(w.iter());
            flat.extend(b.iter());
        }
        Ok(flat)
    }

    pub fn param_count(&self) -> usize {
        self.embed.len()
            + self.b1.len()
            + self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum::<usize>()
    }

    /// All parameters as one vector: the first-layer matrix row by row, its
    /// bias, then each later layer's weights (row by row) and bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut flat: Vec<f64> = self.embed.iter().copied().collect();
        flat.extend(self.b1.iter());
        for layer in &self.layers {
            flat.extend(layer.weights.iter());
            flat.extend(layer.bias.iter());
        }
        flat
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        let expected = self.param_count();
        if params.len() != expected {
            return Err(Error::Dimension { expected, actual: params.len() });
        }
        let mut cursor = params.iter().copied();
        for w in self.embed.iter_mut() {
            *w = cursor.next().expect("length checked");
        }
        for b in self.b1.iter_mut() {
            *b = cursor.next().expect("length checked");
        }
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut() {
                *w = cursor.next().expect("length checked");
            }
            for b in layer.bias.iter_mut() {
                *b = cursor.next().expect("length checked");
            }
        }
        Ok(())
    }

    pub(crate) fn embed(&self) -> &Array2<f64> {
        &self.embed
    }

    pub(crate) fn b1(&self) -> &Array1<f64> {
        &self.b1
    }

    pub(crate) fn dense_layers(&self) -> &[Dense] {
        &self.layers
    }

    pub(crate) fn from_parts(
        embed: Array2<f64>,
        b1: Array1<f64>,
        layers: Vec<(Array2<f64>, Array1<f64>)>,
    ) -> Mlp {
        Mlp {
            embed,
            b1,
            layers: layers
                .into_iter()
                .map(|(weights, bias)| Dense { weights, bias })
                .collect(),
        }
    }
}
