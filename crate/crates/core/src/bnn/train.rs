//! Straight-through-estimator training of the binary detector.
//!
//! The forward pass always runs the binarized model. Gradients flow to the
//! latent real filters through `sign` as identity (clipped to `|W| ≤ 1`) and
//! through `alpha = mean |W|`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BnnError, DetectorModel, Patches, CHANNELS};
use crate::exec::Execution;
use crate::filter::{FilteredFrame, FrameLayout};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Adam step for readout and bias.
    pub learning_rate: f64,
    /// Adam step for latent filter weights.
    pub filter_learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub n_filters: usize,
    pub kernel: usize,
    pub threshold: f64,
    /// Latent weights start uniform in `±init_scale`.
    pub init_scale: f64,
    pub exec: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            learning_rate: 0.01,
            filter_learning_rate: 0.002,
            batch_size: 32,
            seed: 7,
            n_filters: 200,
            kernel: 10,
            threshold: 0.0,
            init_scale: 0.1,
            exec: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Class-weighted mean logistic loss seen during each epoch.
    pub loss_per_epoch: Vec<f64>,
    /// Training-set accuracy of the returned model.
    pub train_accuracy: f64,
}

/// Real-valued shadow of a [`DetectorModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct LatentModel {
    pub input: FrameLayout,
    pub kernel: usize,
    pub n_filters: usize,
    /// `n_filters × 2k²`, filter-major, same index order as the bit masks.
    pub filters: Vec<f64>,
    pub readout: Vec<f64>,
    pub bias: f64,
}

impl LatentModel {
    pub fn random(input: FrameLayout, n_filters: usize, kernel: usize, init_scale: f64, rng: &mut impl Rng) -> Self {
        let n = CHANNELS * kernel * kernel;
        LatentModel {
            input,
            kernel,
            n_filters,
            filters: (0..n_filters * n).map(|_| rng.random_range(-init_scale..init_scale)).collect(),
            readout: (0..n_filters).map(|_| rng.random_range(-0.01..0.01)).collect(),
            bias: 0.0,
        }
    }

    pub fn filter_len(&self) -> usize {
        CHANNELS * self.kernel * self.kernel
    }

    pub fn filter(&self, f: usize) -> &[f64] {
        let n = self.filter_len();
        &self.filters[f * n..(f + 1) * n]
    }
}

/// Sign binarization with `alpha_f = mean |W_f|` (at least 1e-12); the
/// readout is copied and the threshold set to 0.
pub fn binarize(latent: &LatentModel) -> Result<DetectorModel, BnnError> {
    let all = latent.filters.iter().chain(&latent.readout).chain([&latent.bias]);
    if all.into_iter().any(|v| !v.is_finite()) {
        return Err(BnnError::InvalidModel("non-finite latent weights".into()));
    }
    let n = latent.filter_len();
    let signs: Vec<Vec<bool>> = (0..latent.n_filters).map(|f| latent.filter(f).iter().map(|&w| w >= 0.0).collect()).collect();
    let alpha = (0..latent.n_filters).map(|f| (latent.filter(f).iter().map(|w| w.abs()).sum::<f64>() / n as f64).max(1e-12)).collect();
    DetectorModel::from_signs(latent.input, latent.kernel, &signs, alpha, latent.readout.clone(), latent.bias, 0.0)
}

/// Forward quantities of one sample needed for its gradient.
struct SampleState {
    score: f64,
    /// Per filter: max activation and the patch attaining it.
    maxima: Vec<i32>,
    patches: Vec<u64>,
    m: Vec<f64>,
}

fn forward(model: &DetectorModel, frame: &FilteredFrame) -> SampleState {
    let patches = Patches::extract(frame, model.kernel());
    let maxima = model.filter_maxima(&patches);
    let (score, m) = model.score_from_maxima(&maxima);
    let words = (CHANNELS * model.kernel() * model.kernel()).div_ceil(64);
    let mut at_max = Vec::with_capacity(maxima.len() * words);
    for &(_, o) in &maxima {
        at_max.extend_from_slice(patches.patch(o));
    }
    SampleState { score, maxima: maxima.iter().map(|m| m.0).collect(), patches: at_max, m }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `(loss, dloss/dscore)` for a logistic loss with class weight `w`.
fn logistic(score: f64, label: bool, w: f64) -> (f64, f64) {
    if label {
        (w * softplus(-score), w * (sigmoid(score) - 1.0))
    } else {
        (w * softplus(score), w * sigmoid(score))
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Gradient {
    pub loss: f64,
    pub filters: Vec<f64>,
    pub readout: Vec<f64>,
    pub bias: f64,
}

/// Mean class-weighted loss and its STE gradient over `batch`.
pub(crate) fn batch_gradient(
    latent: &LatentModel,
    model: &DetectorModel,
    batch: &[(&FilteredFrame, bool)],
    class_weight: [f64; 2],
    exec: Execution,
) -> Gradient {
    let states = exec.map(batch, |(frame, _)| forward(model, frame));
    let n = latent.filter_len();
    let words = n.div_ceil(64);
    let scale = 1.0 / batch.len() as f64;
    let mut g = Gradient { loss: 0.0, filters: vec![0.0; latent.filters.len()], readout: vec![0.0; latent.n_filters], bias: 0.0 };
    // fixed-order reduction: identical for sequential and parallel forward
    for (state, &(_, label)) in states.iter().zip(batch) {
        let (loss, gs) = logistic(state.score, label, class_weight[label as usize]);
        g.loss += loss * scale;
        g.bias += gs * scale;
        for f in 0..latent.n_filters {
            g.readout[f] += gs * state.m[f] * scale;
            if state.m[f] <= 0.0 {
                continue;
            }
            let gm = gs * latent.readout[f] * scale;
            let alpha = model.alpha[f];
            let a = state.maxima[f] as f64;
            let patch = &state.patches[f * words..(f + 1) * words];
            let w = latent.filter(f);
            let gf = &mut g.filters[f * n..(f + 1) * n];
            for i in 0..n {
                let x = ((patch[i / 64] >> (i % 64)) & 1) as f64;
                let sign = if w[i] >= 0.0 { 1.0 } else { -1.0 };
                let ste = if w[i].abs() <= 1.0 { alpha * x } else { 0.0 };
                gf[i] += gm * (ste + a * sign / n as f64);
            }
        }
    }
    g
}

/// Adam state for one parameter vector.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;

    fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n] }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, t: i32) {
        let c1 = 1.0 - Self::B1.powi(t);
        let c2 = 1.0 - Self::B2.powi(t);
        for i in 0..params.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

/// Trains a detector on labelled frames (`true` = pedestrian).
///
/// Deterministic for a given config: minibatch order comes from `seed` and
/// gradient reduction order never depends on `exec`.
pub fn train(frames: &[FilteredFrame], labels: &[bool], config: &TrainConfig) -> Result<(DetectorModel, TrainReport), BnnError> {
    if frames.len() != labels.len() {
        return Err(BnnError::Dataset(format!("{} frames but {} labels", frames.len(), labels.len())));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(BnnError::SingleClass);
    }
    let input = frames[0].layout();
    if let Some(f) = frames.iter().find(|f| f.layout() != input) {
        return Err(BnnError::LayoutMismatch { expected: input, got: f.layout() });
    }
    if input.width < config.kernel || input.height < config.kernel {
        return Err(BnnError::FrameTooSmall { width: input.width, height: input.height, kernel: config.kernel });
    }
    if config.n_filters == 0 || config.batch_size == 0 {
        return Err(BnnError::Dataset("n_filters and batch_size must be positive".into()));
    }
    let total = labels.len() as f64;
    let class_weight = [total / (2.0 * (total - n_pos as f64)), total / (2.0 * n_pos as f64)];

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut latent = LatentModel::random(input, config.n_filters, config.kernel, config.init_scale, &mut rng);
    let mut adam_f = Adam::new(latent.filters.len());
    let mut adam_r = Adam::new(latent.n_filters);
    let mut adam_b = Adam::new(1);
    let mut order: Vec<usize> = (0..frames.len()).collect();
    let mut report = TrainReport::default();
    let mut t = 0;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let model = binarize(&latent)?;
            let batch: Vec<(&FilteredFrame, bool)> = chunk.iter().map(|&i| (&frames[i], labels[i])).collect();
            let g = batch_gradient(&latent, &model, &batch, class_weight, config.exec);
            epoch_loss += g.loss * chunk.len() as f64;
            t += 1;
            adam_f.step(&mut latent.filters, &g.filters, config.filter_learning_rate, t);
            adam_r.step(&mut latent.readout, &g.readout, config.learning_rate, t);
            let mut bias = [latent.bias];
            adam_b.step(&mut bias, &[g.bias], config.learning_rate, t);
            latent.bias = bias[0];
        }
        report.loss_per_epoch.push(epoch_loss / total);
    }
    let mut model = binarize(&latent)?;
    model.threshold = config.threshold;
    let scores = config.exec.map(frames, |f| forward(&model, f).score);
    let correct = scores.iter().zip(labels).filter(|(s, &l)| (**s >= model.threshold) == l).count();
    report.train_accuracy = correct as f64 / total;
    Ok((model, report))
}
