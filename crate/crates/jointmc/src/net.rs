//! Learned density-ratio estimators: one multi-layer perceptron with a
//! shared trunk and three linear heads — real-vs-generated (sigmoid, one
//! logit), label posterior over real classes (softmax), and condition
//! posterior over generator conditions (softmax, optional).
//!
//! Everything is f64 and hand-rolled on `ndarray` so the gradients can be
//! verified against central finite differences and training is bit-for-bit
//! reproducible under a fixed seed. Losses: binary cross-entropy on the
//! real/generated head, cross-entropy on the two posterior heads, summed.

use crate::error::{Error, Result};
use crate::math::logsumexp;
use crate::sampler::RatioProvider;
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
struct Linear {
    /// (out, in)
    w: Array2<f64>,
    b: Array1<f64>,
}

impl Linear {
    fn init(out: usize, inp: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / inp as f64).sqrt();
        let w = Array2::from_shape_fn((out, inp), |_| rng.random_range(-bound..bound));
        Linear { w, b: Array1::zeros(out) }
    }

    fn zeros_like(&self) -> Self {
        Linear { w: Array2::zeros(self.w.dim()), b: Array1::zeros(self.b.len()) }
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        // `dot` special-cases tiny inner dimensions and can hand back a
        // non-standard layout; row views must stay sliceable downstream.
        let z = x.dot(&self.w.t());
        let z = if z.is_standard_layout() { z } else { z.as_standard_layout().to_owned() };
        z + &self.b
    }

    fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Head logits for a batch.
pub struct HeadLogits {
    pub dv: Array1<f64>,
    pub dr: Array2<f64>,
    pub df: Option<Array2<f64>>,
}

/// The shared-trunk network. Immutable once trained; all inference goes
/// through [`HeadLogits`] plus the calibration temperatures.
#[derive(Debug, Clone)]
pub struct MlpNetwork {
    trunk: Vec<Linear>,
    head_dv: Linear,
    head_dr: Linear,
    head_df: Option<Linear>,
    input_dim: usize,
    n_classes: usize,
    n_conditions: Option<usize>,
    hidden: Vec<usize>,
}

impl MlpNetwork {
    /// Seeded uniform init, `U(±sqrt(6/fan_in))` weights and zero biases.
    pub fn new(
        input_dim: usize,
        hidden: &[usize],
        n_classes: usize,
        n_conditions: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        if input_dim == 0 || n_classes == 0 || hidden.iter().any(|&h| h == 0) {
            return Err(Error::config("network", "all layer widths must be positive"));
        }
        let mut rng = crate::sampler::chain_rng(seed, 0);
        let mut trunk = Vec::with_capacity(hidden.len());
        let mut width = input_dim;
        for &h in hidden {
            trunk.push(Linear::init(h, width, &mut rng));
            width = h;
        }
        Ok(MlpNetwork {
            head_dv: Linear::init(1, width, &mut rng),
            head_dr: Linear::init(n_classes, width, &mut rng),
            head_df: n_conditions.map(|n| Linear::init(n, width, &mut rng)),
            trunk,
            input_dim,
            n_classes,
            n_conditions,
            hidden: hidden.to_vec(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_conditions(&self) -> Option<usize> {
        self.n_conditions
    }

    fn trunk_forward(&self, x: &Array2<f64>) -> Vec<Array2<f64>> {
        // activations[0] = input, then one ReLU output per trunk layer
        let mut acts = Vec::with_capacity(self.trunk.len() + 1);
        acts.push(x.clone());
        for layer in &self.trunk {
            let z = layer.forward(acts.last().unwrap());
            acts.push(z.mapv(|v| v.max(0.0)));
        }
        acts
    }

    /// Raw (uncalibrated) head logits for a batch of points.
    pub fn forward(&self, x: &Array2<f64>) -> HeadLogits {
        let acts = self.trunk_forward(x);
        let features = acts.last().unwrap();
        HeadLogits {
            dv: self.head_dv.forward(features).index_axis(Axis(1), 0).to_owned(),
            dr: self.head_dr.forward(features),
            df: self.head_df.as_ref().map(|h| h.forward(features)),
        }
    }

    fn layers(&self) -> Vec<&Linear> {
        let mut all: Vec<&Linear> = self.trunk.iter().collect();
        all.push(&self.head_dv);
        all.push(&self.head_dr);
        if let Some(h) = &self.head_df {
            all.push(h);
        }
        all
    }

    fn layers_mut(&mut self) -> Vec<&mut Linear> {
        let mut all: Vec<&mut Linear> = self.trunk.iter_mut().collect();
        all.push(&mut self.head_dv);
        all.push(&mut self.head_dr);
        if let Some(h) = &mut self.head_df {
            all.push(h);
        }
        all
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    /// Flat parameter access (weights row-major, then bias, per layer in
    /// trunk→heads order); used by the finite-difference check.
    pub fn get_param(&self, index: usize) -> f64 {
        let mut i = index;
        for layer in self.layers() {
            if i < layer.w.len() {
                return layer.w.as_slice().unwrap()[i];
            }
            i -= layer.w.len();
            if i < layer.b.len() {
                return layer.b[i];
            }
            i -= layer.b.len();
        }
        panic!("parameter index {index} out of range");
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let mut i = index;
        for layer in self.layers_mut() {
            if i < layer.w.len() {
                layer.w.as_slice_mut().unwrap()[i] = value;
                return;
            }
            i -= layer.w.len();
            if i < layer.b.len() {
                layer.b[i] = value;
                return;
            }
            i -= layer.b.len();
        }
        panic!("parameter index {index} out of range");
    }

    /// Sign pattern of every trunk activation over a batch; the gradient
    /// check uses it to detect ReLU kink crossings, where the loss is not
    /// differentiable and finite differences are meaningless.
    fn activation_pattern(&self, x: &Array2<f64>) -> Vec<bool> {
        self.trunk_forward(x)
            .iter()
            .skip(1)
            .flat_map(|a| a.iter().map(|&v| v > 0.0).collect::<Vec<bool>>())
            .collect()
    }

    /// Total loss and its gradient on one batch: BCE on the dv head (real
    /// labeled 1, generated 0) plus CE on the dr head (real points) plus CE
    /// on the df head (generated points, when conditions are present).
    pub fn loss_and_grads(&self, batch: &TrainingBatch) -> Result<(f64, Gradients)> {
        batch.check(self)?;
        let mut grads: Vec<Linear> = self.layers().iter().map(|l| l.zeros_like()).collect();
        let trunk_len = self.trunk.len();
        let (g_dv, g_dr) = (trunk_len, trunk_len + 1);
        let g_df = trunk_len + 2;
        let nr = batch.real_x.nrows() as f64;
        let ng = batch.gen_x.nrows() as f64;
        let mut loss = 0.0;

        // --- real pass: dv target 1, dr cross-entropy
        let acts = self.trunk_forward(&batch.real_x);
        let features = acts.last().unwrap();
        let mut d_features: Array2<f64> = Array2::zeros(features.dim());

        let dv_logits = self.head_dv.forward(features);
        let mut d_dv = Array2::zeros(dv_logits.dim());
        for (i, &l) in dv_logits.column(0).iter().enumerate() {
            loss += bce_from_logit(l, 1.0) / nr;
            d_dv[(i, 0)] = (sigmoid(l) - 1.0) / nr;
        }
        accumulate_head(&self.head_dv, features, &d_dv, &mut grads[g_dv], &mut d_features);

        let dr_logits = self.head_dr.forward(features);
        let mut d_dr = Array2::zeros(dr_logits.dim());
        for (i, row) in dr_logits.outer_iter().enumerate() {
            let row = row.as_slice().unwrap();
            let y = batch.real_label[i];
            let norm = logsumexp(row);
            loss += (norm - row[y]) / nr;
            for (k, &l) in row.iter().enumerate() {
                d_dr[(i, k)] = ((l - norm).exp() - f64::from(u8::from(k == y))) / nr;
            }
        }
        accumulate_head(&self.head_dr, features, &d_dr, &mut grads[g_dr], &mut d_features);

        self.trunk_backward(&acts, d_features, &mut grads);

        // --- generated pass: dv target 0, df cross-entropy
        let acts = self.trunk_forward(&batch.gen_x);
        let features = acts.last().unwrap();
        let mut d_features: Array2<f64> = Array2::zeros(features.dim());

        let dv_logits = self.head_dv.forward(features);
        let mut d_dv = Array2::zeros(dv_logits.dim());
        for (i, &l) in dv_logits.column(0).iter().enumerate() {
            loss += bce_from_logit(l, 0.0) / ng;
            d_dv[(i, 0)] = sigmoid(l) / ng;
        }
        accumulate_head(&self.head_dv, features, &d_dv, &mut grads[g_dv], &mut d_features);

        if let (Some(head), Some(conditions)) = (&self.head_df, &batch.gen_condition) {
            let df_logits = head.forward(features);
            let mut d_df = Array2::zeros(df_logits.dim());
            for (i, row) in df_logits.outer_iter().enumerate() {
                let row = row.as_slice().unwrap();
                let y = conditions[i];
                let norm = logsumexp(row);
                loss += (norm - row[y]) / ng;
                for (k, &l) in row.iter().enumerate() {
                    d_df[(i, k)] = ((l - norm).exp() - f64::from(u8::from(k == y))) / ng;
                }
            }
            accumulate_head(head, features, &d_df, &mut grads[g_df], &mut d_features);
        }

        self.trunk_backward(&acts, d_features, &mut grads);
        Ok((loss, Gradients { layers: grads }))
    }

    fn trunk_backward(
        &self,
        acts: &[Array2<f64>],
        mut d_out: Array2<f64>,
        grads: &mut [Linear],
    ) {
        for (l, layer) in self.trunk.iter().enumerate().rev() {
            // ReLU derivative read off the activation itself
            let dz = &d_out * &acts[l + 1].mapv(|v| f64::from(u8::from(v > 0.0)));
            grads[l].w += &dz.t().dot(&acts[l]);
            grads[l].b += &dz.sum_axis(Axis(0));
            if l > 0 {
                d_out = dz.dot(&layer.w);
            }
        }
    }
}

/// Per-layer gradients in trunk→heads order, opaque outside the module
/// except for flat indexing (mirrors [`MlpNetwork::get_param`]).
pub struct Gradients {
    layers: Vec<Linear>,
}

impl Gradients {
    pub fn flat(&self, index: usize) -> f64 {
        let mut i = index;
        for g in &self.layers {
            if i < g.w.len() {
                return g.w.as_slice().unwrap()[i];
            }
            i -= g.w.len();
            if i < g.b.len() {
                return g.b[i];
            }
            i -= g.b.len();
        }
        panic!("gradient index {index} out of range");
    }
}

fn accumulate_head(
    head: &Linear,
    features: &Array2<f64>,
    d_logits: &Array2<f64>,
    grad: &mut Linear,
    d_features: &mut Array2<f64>,
) {
    grad.w += &d_logits.t().dot(features);
    grad.b += &d_logits.sum_axis(Axis(0));
    *d_features += &d_logits.dot(&head.w);
}

fn sigmoid(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

/// Numerically stable `-y log σ(l) - (1-y) log(1-σ(l))`.
fn bce_from_logit(l: f64, y: f64) -> f64 {
    l.max(0.0) - y * l + (-l.abs()).exp().ln_1p()
}

/// One optimization batch: real points with observed labels, generated
/// points with optional condition labels.
pub struct TrainingBatch {
    pub real_x: Array2<f64>,
    pub real_label: Vec<usize>,
    pub gen_x: Array2<f64>,
    pub gen_condition: Option<Vec<usize>>,
}

impl TrainingBatch {
    fn check(&self, net: &MlpNetwork) -> Result<()> {
        if self.real_x.ncols() != net.input_dim || self.gen_x.ncols() != net.input_dim {
            return Err(Error::DimensionMismatch {
                expected: net.input_dim,
                got: self.real_x.ncols(),
            });
        }
        if self.real_label.len() != self.real_x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.real_x.nrows(),
                got: self.real_label.len(),
            });
        }
        if net.n_conditions.is_some() {
            match &self.gen_condition {
                Some(c) if c.len() == self.gen_x.nrows() => {}
                _ => {
                    return Err(Error::config(
                        "gen_condition",
                        "conditional networks need a condition per generated point",
                    ))
                }
            }
        }
        Ok(())
    }
}

/// Full training set; batches are drawn from it by shuffled epochs.
pub struct TrainingData {
    pub real: Vec<(Vec<f64>, usize)>,
    pub generated: Vec<(Vec<f64>, Option<usize>)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    /// Multiplicative per-epoch learning-rate factor; 1.0 keeps it constant.
    #[serde(default = "default_lr_decay")]
    pub lr_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

fn default_lr_decay() -> f64 {
    1.0
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            hidden: vec![64, 64],
            learning_rate: 1e-3,
            lr_decay: 1.0,
            batch_size: 128,
            epochs: 30,
            seed: 0,
        }
    }
}

/// Trains all heads jointly with Adam on the summed losses. Deterministic
/// for a fixed config and data order. Returns the network and the mean
/// loss per epoch; diverging (non-finite) loss is an error.
pub fn train_heads(
    data: &TrainingData,
    n_classes: usize,
    n_conditions: Option<usize>,
    config: &TrainingConfig,
) -> Result<(MlpNetwork, Vec<f64>)> {
    if data.real.is_empty() || data.generated.is_empty() {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    let input_dim = data.real[0].0.len();
    let mut net = MlpNetwork::new(input_dim, &config.hidden, n_classes, n_conditions, config.seed)?;
    let mut adam = Adam::new(&net, config.learning_rate);
    let mut rng = crate::sampler::chain_rng(config.seed, 1);

    let b = config.batch_size.max(1);
    let mut real_idx: Vec<usize> = (0..data.real.len()).collect();
    let mut gen_idx: Vec<usize> = (0..data.generated.len()).collect();
    let batches_per_epoch = (data.real.len().max(data.generated.len())).div_ceil(b);
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        real_idx.shuffle(&mut rng);
        gen_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for step in 0..batches_per_epoch {
            let batch = assemble_batch(data, &real_idx, &gen_idx, step * b, b, n_conditions);
            let (loss, grads) = net.loss_and_grads(&batch)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { step: epoch * batches_per_epoch + step });
            }
            adam.step(&mut net, &grads);
            epoch_loss += loss;
        }
        epoch_losses.push(epoch_loss / batches_per_epoch as f64);
        adam.lr *= config.lr_decay;
        let _ = epoch;
    }
    Ok((net, epoch_losses))
}

fn assemble_batch(
    data: &TrainingData,
    real_idx: &[usize],
    gen_idx: &[usize],
    start: usize,
    b: usize,
    n_conditions: Option<usize>,
) -> TrainingBatch {
    let dim = data.real[0].0.len();
    let take = |idx: &[usize], len: usize| -> Vec<usize> {
        (start..start + b).map(|i| idx[i % len]).collect()
    };
    let r = take(real_idx, data.real.len());
    let g = take(gen_idx, data.generated.len());
    let real_x = Array2::from_shape_fn((b, dim), |(i, j)| data.real[r[i]].0[j]);
    let real_label = r.iter().map(|&i| data.real[i].1).collect();
    let gen_x = Array2::from_shape_fn((b, dim), |(i, j)| data.generated[g[i]].0[j]);
    let gen_condition = n_conditions.map(|_| {
        g.iter()
            .map(|&i| data.generated[i].1.expect("conditional data carries conditions"))
            .collect()
    });
    TrainingBatch { real_x, real_label, gen_x, gen_condition }
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<Linear>,
    v: Vec<Linear>,
}

impl Adam {
    fn new(net: &MlpNetwork, lr: f64) -> Self {
        let zeros: Vec<Linear> = net.layers().iter().map(|l| l.zeros_like()).collect();
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: zeros.clone(), v: zeros }
    }

    fn step(&mut self, net: &mut MlpNetwork, grads: &Gradients) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((layer, grad), (m, v)) in net
            .layers_mut()
            .into_iter()
            .zip(&grads.layers)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            ndarray::Zip::from(&mut layer.w)
                .and(&grad.w)
                .and(&mut m.w)
                .and(&mut v.w)
                .for_each(|p, &g, m, v| {
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    *p -= self.lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
                });
            ndarray::Zip::from(&mut layer.b)
                .and(&grad.b)
                .and(&mut m.b)
                .and(&mut v.b)
                .for_each(|p, &g, m, v| {
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    *p -= self.lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
                });
        }
    }
}

/// Central finite-difference gradient verification on one batch: returns
/// the maximum relative error over `samples` randomly chosen parameters
/// (step 1e-4). Parameters whose perturbation flips a ReLU activation are
/// skipped — the loss has a kink there and finite differences do not
/// approximate the one-sided gradient.
pub fn gradient_check(
    net: &MlpNetwork,
    batch: &TrainingBatch,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let mut probe = net.clone();
    let (_, grads) = net.loss_and_grads(batch)?;
    let pattern = |net: &MlpNetwork| {
        let mut p = net.activation_pattern(&batch.real_x);
        p.extend(net.activation_pattern(&batch.gen_x));
        p
    };

    let total = net.param_count();
    let mut rng = crate::sampler::chain_rng(seed, 2);
    let h = 1e-4;
    let mut max_rel = 0.0f64;
    let mut checked = 0usize;
    let mut attempts = 0usize;
    while checked < samples.min(total) && attempts < 20 * samples {
        attempts += 1;
        let idx = rng.random_range(0..total);
        let original = probe.get_param(idx);
        probe.set_param(idx, original + h);
        let (up, _) = probe.loss_and_grads(batch)?;
        let pattern_up = pattern(&probe);
        probe.set_param(idx, original - h);
        let (down, _) = probe.loss_and_grads(batch)?;
        let pattern_down = pattern(&probe);
        probe.set_param(idx, original);
        if pattern_up != pattern_down {
            continue;
        }
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads.flat(idx);
        let rel = (numeric - analytic).abs() / f64::max(1e-6, numeric.abs() + analytic.abs());
        max_rel = max_rel.max(rel);
        checked += 1;
    }
    Ok(max_rel)
}

/// Post-hoc calibration: logits are divided by the head's temperature
/// before the sigmoid/softmax.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub dv_temperature: f64,
    pub dr_temperature: f64,
    pub df_temperature: f64,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        CalibrationParams { dv_temperature: 1.0, dr_temperature: 1.0, df_temperature: 1.0 }
    }
}

/// Fits a softmax temperature by minimizing the held-out negative
/// log-likelihood with a golden-section search over [0.05, 20].
pub fn fit_temperature(logits: &Array2<f64>, labels: &[usize]) -> f64 {
    let nll = |t: f64| -> f64 {
        let mut total = 0.0;
        for (row, &y) in logits.outer_iter().zip(labels) {
            let scaled: Vec<f64> = row.iter().map(|&l| l / t).collect();
            total += logsumexp(&scaled) - scaled[y];
        }
        total / labels.len() as f64
    };
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.05f64, 20.0f64);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (nll(x1), nll(x2));
    for _ in 0..80 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = nll(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = nll(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Learned [`RatioProvider`]: network logits, calibration temperatures, and
/// the per-class γ supplied at construction.
pub struct LearnedProvider {
    network: MlpNetwork,
    calibration: CalibrationParams,
    gammas: Vec<f64>,
}

impl LearnedProvider {
    pub fn new(network: MlpNetwork, calibration: CalibrationParams, gammas: Vec<f64>) -> Result<Self> {
        if gammas.len() != network.n_classes() {
            return Err(Error::DimensionMismatch {
                expected: network.n_classes(),
                got: gammas.len(),
            });
        }
        if calibration.dv_temperature <= 0.0
            || calibration.dr_temperature <= 0.0
            || calibration.df_temperature <= 0.0
        {
            return Err(Error::config("calibration", "temperatures must be positive"));
        }
        Ok(LearnedProvider { network, calibration, gammas })
    }

    pub fn network(&self) -> &MlpNetwork {
        &self.network
    }

    pub fn calibration(&self) -> &CalibrationParams {
        &self.calibration
    }

    fn forward_one(&self, x: &[f64]) -> Result<HeadLogits> {
        if x.len() != self.network.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.network.input_dim,
                got: x.len(),
            });
        }
        let arr = Array2::from_shape_vec((1, x.len()), x.to_vec()).unwrap();
        Ok(self.network.forward(&arr))
    }
}

impl RatioProvider for LearnedProvider {
    fn class_count(&self) -> usize {
        self.network.n_classes()
    }

    fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    fn log_dv_odds(&self, x: &[f64]) -> Result<f64> {
        // dv = σ(l/T) so log(1/dv - 1) = -l/T
        let logits = self.forward_one(x)?;
        Ok(-logits.dv[0] / self.calibration.dv_temperature)
    }

    fn dr_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        let logits = self.forward_one(x)?;
        Ok(softmax_row(logits.dr.row(0).as_slice().unwrap(), self.calibration.dr_temperature))
    }

    fn log_df(&self, c: usize, x: &[f64]) -> Result<f64> {
        let logits = self.forward_one(x)?;
        let df = logits.df.ok_or_else(|| {
            Error::ProviderContractViolation("network has no condition head".into())
        })?;
        let t = self.calibration.df_temperature;
        let scaled: Vec<f64> = df.row(0).iter().map(|&l| l / t).collect();
        if c >= scaled.len() {
            return Err(Error::IndexOutOfRange { index: c, n: scaled.len() });
        }
        Ok(scaled[c] - logsumexp(&scaled))
    }

    fn score_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<(f64, Vec<f64>)>> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let dim = self.network.input_dim;
        if xs.iter().any(|x| x.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: xs[0].len() });
        }
        let arr = Array2::from_shape_fn((xs.len(), dim), |(i, j)| xs[i][j]);
        let logits = self.network.forward(&arr);
        Ok((0..xs.len())
            .map(|i| {
                let odds = -logits.dv[i] / self.calibration.dv_temperature;
                let dr = softmax_row(
                    logits.dr.row(i).as_slice().unwrap(),
                    self.calibration.dr_temperature,
                );
                (odds, dr)
            })
            .collect())
    }
}

fn softmax_row(logits: &[f64], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|&l| l / temperature).collect();
    let norm = logsumexp(&scaled);
    scaled.iter().map(|&l| (l - norm).exp()).collect()
}

/// Serialized network layout, version header first. Weights are row-major
/// per layer in trunk→heads order.
#[derive(Debug, Serialize, Deserialize)]
pub struct NetworkFile {
    pub version: u32,
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub n_classes: usize,
    pub n_conditions: Option<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

pub const NETWORK_FORMAT_VERSION: u32 = 1;

impl MlpNetwork {
    pub fn to_file(&self) -> NetworkFile {
        let layers = self.layers();
        NetworkFile {
            version: NETWORK_FORMAT_VERSION,
            input_dim: self.input_dim,
            hidden: self.hidden.clone(),
            n_classes: self.n_classes,
            n_conditions: self.n_conditions,
            weights: layers.iter().map(|l| l.w.iter().copied().collect()).collect(),
            biases: layers.iter().map(|l| l.b.to_vec()).collect(),
        }
    }

    pub fn from_file(file: &NetworkFile) -> Result<Self> {
        if file.version != NETWORK_FORMAT_VERSION {
            return Err(Error::FormatVersion(file.version));
        }
        let mut net = MlpNetwork::new(
            file.input_dim,
            &file.hidden,
            file.n_classes,
            file.n_conditions,
            0,
        )?;
        let expected = net.layers().len();
        if file.weights.len() != expected || file.biases.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: file.weights.len() });
        }
        for (layer, (w, b)) in net.layers_mut().into_iter().zip(file.weights.iter().zip(&file.biases)) {
            if w.len() != layer.w.len() || b.len() != layer.b.len() {
                return Err(Error::DimensionMismatch {
                    expected: layer.w.len(),
                    got: w.len(),
                });
            }
            layer.w = Array2::from_shape_vec(layer.w.dim(), w.clone()).unwrap();
            layer.b = Array1::from_vec(b.clone());
        }
        Ok(net)
    }
}
