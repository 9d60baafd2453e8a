//! Binary-weight convolutional detector.
//!
//! Each filter spans both input channels (`2 × k × k` weights in ±1) and is
//! stored as a pair of disjoint bit masks `w_plus` / `w_minus`. With a binary
//! input patch `x`, the convolution at one offset is
//! `popcount(x & w_plus) − popcount(x & w_minus)`. The detector scales each
//! activation by a positive per-filter `alpha`, applies ReLU, max-pools over
//! the whole frame and reads out a logit with a real-valued linear layer.

mod file;
mod patches;
mod train;

pub use file::{read_model, read_model_file, write_model, write_model_file, BNN_MAGIC};
pub use patches::Patches;
pub use train::{binarize, train, LatentModel, TrainConfig, TrainReport};

use thiserror::Error;

use crate::exec::Execution;
use crate::filter::{FilteredFrame, FrameLayout};

pub const CHANNELS: usize = 2;

#[derive(Debug, Error)]
pub enum BnnError {
    #[error("frame {width}x{height} is smaller than the {kernel}x{kernel} kernel")]
    FrameTooSmall { width: usize, height: usize, kernel: usize },
    #[error("model expects {expected:?} frames, got {got:?}")]
    LayoutMismatch { expected: FrameLayout, got: FrameLayout },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("training set needs both classes")]
    SingleClass,
    #[error("invalid training set: {0}")]
    Dataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Binarized detector ready for inference.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorModel {
    input: FrameLayout,
    kernel: usize,
    n_filters: usize,
    words: usize,
    w_plus: Vec<u64>,
    w_minus: Vec<u64>,
    pub alpha: Vec<f64>,
    pub readout: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
}

/// Output of [`detect`].
#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub score: f64,
    pub decision: bool,
    /// `max over offsets of ReLU(alpha · a)` for every filter.
    pub filter_max: Vec<f64>,
}

impl DetectorModel {
    /// Builds a model from per-filter sign vectors (`true` = +1), indexed
    /// `channel · k² + row · k + column`.
    pub fn from_signs(
        input: FrameLayout,
        kernel: usize,
        signs: &[Vec<bool>],
        alpha: Vec<f64>,
        readout: Vec<f64>,
        bias: f64,
        threshold: f64,
    ) -> Result<Self, BnnError> {
        let n_filters = signs.len();
        let bits = CHANNELS * kernel * kernel;
        if n_filters == 0 || kernel == 0 || kernel > 64 {
            return Err(BnnError::InvalidModel(format!("{n_filters} filters of size {kernel}")));
        }
        if input.width < kernel || input.height < kernel {
            return Err(BnnError::FrameTooSmall { width: input.width, height: input.height, kernel });
        }
        if signs.iter().any(|s| s.len() != bits) || alpha.len() != n_filters || readout.len() != n_filters {
            return Err(BnnError::InvalidModel("parameter vector lengths disagree".into()));
        }
        if let Some(a) = alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(BnnError::InvalidModel(format!("alpha {a} is not positive")));
        }
        if readout.iter().chain([&bias, &threshold]).any(|v| !v.is_finite()) {
            return Err(BnnError::InvalidModel("non-finite readout".into()));
        }
        let words = bits.div_ceil(64);
        let mut w_plus = vec![0u64; n_filters * words];
        let mut w_minus = vec![0u64; n_filters * words];
        for (f, s) in signs.iter().enumerate() {
            for (i, &positive) in s.iter().enumerate() {
                let target = if positive { &mut w_plus } else { &mut w_minus };
                target[f * words + i / 64] |= 1 << (i % 64);
            }
        }
        Ok(DetectorModel { input, kernel, n_filters, words, w_plus, w_minus, alpha, readout, bias, threshold })
    }

    pub fn input(&self) -> FrameLayout {
        self.input
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn n_filters(&self) -> usize {
        self.n_filters
    }

    /// Weights per filter (`2 · k²`).
    pub fn filter_bits(&self) -> usize {
        CHANNELS * self.kernel * self.kernel
    }

    pub fn w_plus(&self, f: usize) -> &[u64] {
        &self.w_plus[f * self.words..(f + 1) * self.words]
    }

    pub fn w_minus(&self, f: usize) -> &[u64] {
        &self.w_minus[f * self.words..(f + 1) * self.words]
    }

    /// Weight `i` of filter `f` as ±1.
    pub fn weight(&self, f: usize, i: usize) -> i32 {
        if (self.w_plus(f)[i / 64] >> (i % 64)) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    /// Output map dimensions `(width, height)` for the model's input layout.
    pub fn output_dims(&self) -> (usize, usize) {
        (self.input.width - self.kernel + 1, self.input.height - self.kernel + 1)
    }

    fn check_frame(&self, frame: &FilteredFrame) -> Result<(), BnnError> {
        let got = frame.layout();
        if got.width < self.kernel || got.height < self.kernel {
            return Err(BnnError::FrameTooSmall { width: got.width, height: got.height, kernel: self.kernel });
        }
        if got != self.input {
            return Err(BnnError::LayoutMismatch { expected: self.input, got });
        }
        Ok(())
    }

    /// Activation of filter `f` on one patch.
    #[inline]
    pub fn activation(&self, f: usize, patch: &[u64]) -> i32 {
        let (wp, wm) = (self.w_plus(f), self.w_minus(f));
        let mut acc = 0i32;
        for w in 0..self.words {
            acc += (patch[w] & wp[w]).count_ones() as i32 - (patch[w] & wm[w]).count_ones() as i32;
        }
        acc
    }

    /// Per-filter `(max activation, an offset attaining it)`.
    pub(crate) fn filter_maxima(&self, patches: &Patches) -> Vec<(i32, usize)> {
        let mut best = vec![(i32::MIN, 0usize); self.n_filters];
        let mut zero_patch = None;
        for o in 0..patches.len() {
            let patch = patches.patch(o);
            // an empty patch scores 0 under every filter
            if patch.iter().all(|&w| w == 0) {
                zero_patch.get_or_insert(o);
                continue;
            }
            for (f, b) in best.iter_mut().enumerate() {
                let a = self.activation(f, patch);
                if a > b.0 {
                    *b = (a, o);
                }
            }
        }
        if let Some(o) = zero_patch {
            for b in best.iter_mut().filter(|b| b.0 < 0) {
                *b = (0, o);
            }
        }
        best
    }

    /// Score from per-filter maximum activations.
    pub(crate) fn score_from_maxima(&self, maxima: &[(i32, usize)]) -> (f64, Vec<f64>) {
        let m: Vec<f64> = maxima.iter().zip(&self.alpha).map(|(&(a, _), &alpha)| (alpha * a as f64).max(0.0)).collect();
        let score = m.iter().zip(&self.readout).map(|(m, r)| m * r).sum::<f64>() + self.bias;
        (score, m)
    }
}

/// Activation maps, `n_filters × out_h × out_w`, row-major per filter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActivationMaps {
    pub n_filters: usize,
    pub width: usize,
    pub height: usize,
    pub values: Vec<i32>,
}

impl ActivationMaps {
    pub fn get(&self, f: usize, x: usize, y: usize) -> i32 {
        self.values[(f * self.height + y) * self.width + x]
    }
}

/// Valid (no padding), stride-1 binary convolution of `frame` with every filter.
pub fn binary_conv_forward(frame: &FilteredFrame, model: &DetectorModel) -> Result<ActivationMaps, BnnError> {
    model.check_frame(frame)?;
    let patches = Patches::extract(frame, model.kernel);
    let (width, height) = (patches.width(), patches.height());
    let mut values = vec![0i32; model.n_filters * width * height];
    for o in 0..patches.len() {
        let patch = patches.patch(o);
        for f in 0..model.n_filters {
            values[f * width * height + o] = model.activation(f, patch);
        }
    }
    Ok(ActivationMaps { n_filters: model.n_filters, width, height, values })
}

/// Scores one frame: `score = Σ readout_f · max_o ReLU(alpha_f · a_f(o)) + bias`.
pub fn detect(frame: &FilteredFrame, model: &DetectorModel) -> Result<Detection, BnnError> {
    model.check_frame(frame)?;
    let patches = Patches::extract(frame, model.kernel);
    // alpha > 0, so ReLU(alpha · max a) equals max ReLU(alpha · a).
    let maxima = model.filter_maxima(&patches);
    let (score, filter_max) = model.score_from_maxima(&maxima);
    Ok(Detection { score, decision: score >= model.threshold, filter_max })
}

/// [`detect`] over a batch, in input order.
pub fn detect_batch(frames: &[FilteredFrame], model: &DetectorModel, exec: Execution) -> Result<Vec<Detection>, BnnError> {
    exec.map(frames, |f| detect(f, model)).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitplane::BitPlane;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(rng: &mut impl Rng, input: FrameLayout, k: usize, n: usize) -> DetectorModel {
        let signs = (0..n).map(|_| (0..2 * k * k).map(|_| rng.random_bool(0.5)).collect()).collect::<Vec<_>>();
        let alpha = (0..n).map(|_| rng.random_range(0.01..2.0)).collect();
        let readout = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        DetectorModel::from_signs(input, k, &signs, alpha, readout, rng.random_range(-1.0..1.0), 0.0).unwrap()
    }

    fn random_frame(rng: &mut impl Rng, l: FrameLayout, density: f64) -> FilteredFrame {
        FilteredFrame {
            h: BitPlane::from_fn(l.width, l.height, |_, _| rng.random_bool(density)),
            v: BitPlane::from_fn(l.width, l.height, |_, _| rng.random_bool(density)),
            emit_time_us: 0,
            windows_aggregated: 1,
        }
    }

    /// Dense oracle: Σ x · w with w ∈ {−1, +1}.
    fn dense_activation(frame: &FilteredFrame, model: &DetectorModel, f: usize, ox: usize, oy: usize) -> i32 {
        let k = model.kernel();
        let mut acc = 0;
        for (c, plane) in [&frame.h, &frame.v].into_iter().enumerate() {
            for r in 0..k {
                for col in 0..k {
                    let x = plane.get(ox + col, oy + r) as i32;
                    acc += x * model.weight(f, c * k * k + r * k + col);
                }
            }
        }
        acc
    }

    const DEFAULT: FrameLayout = FrameLayout::new(60, 40);

    #[test]
    fn all_ones_input_all_plus_weights() {
        let signs = vec![vec![true; 200]; 3];
        let m = DetectorModel::from_signs(DEFAULT, 10, &signs, vec![1.0; 3], vec![0.0; 3], 0.0, 0.0).unwrap();
        let mut f = FilteredFrame::empty(DEFAULT);
        f.h = BitPlane::from_fn(60, 40, |_, _| true);
        f.v = f.h.clone();
        let maps = binary_conv_forward(&f, &m).unwrap();
        assert_eq!((maps.width, maps.height), (51, 31));
        assert!(maps.values.iter().all(|&a| a == 200));
    }

    #[test]
    fn zero_input_gives_zero_activation_and_bias_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_model(&mut rng, DEFAULT, 10, 20);
        let f = FilteredFrame::empty(DEFAULT);
        assert!(binary_conv_forward(&f, &m).unwrap().values.iter().all(|&a| a == 0));
        let d = detect(&f, &m).unwrap();
        assert_eq!(d.score, m.bias);
        assert_eq!(d.decision, m.bias >= m.threshold);
    }

    #[test]
    fn zero_readout_scores_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut m = random_model(&mut rng, DEFAULT, 10, 8);
        m.readout = vec![0.0; 8];
        for _ in 0..5 {
            let f = random_frame(&mut rng, DEFAULT, 0.3);
            assert_eq!(detect(&f, &m).unwrap().score, m.bias);
        }
    }

    #[test]
    fn small_frames_match_dot_product_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = FrameLayout::new(4, 4);
        for _ in 0..500 {
            let m = random_model(&mut rng, l, 3, 1);
            let f = random_frame(&mut rng, l, 0.5);
            let maps = binary_conv_forward(&f, &m).unwrap();
            for oy in 0..2 {
                for ox in 0..2 {
                    assert_eq!(maps.get(0, ox, oy), dense_activation(&f, &m, 0, ox, oy));
                }
            }
        }
    }

    #[test]
    fn detect_matches_dense_float_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_model(&mut rng, DEFAULT, 10, 12);
        for _ in 0..4 {
            let f = random_frame(&mut rng, DEFAULT, 0.2);
            let mut score = m.bias;
            for fi in 0..m.n_filters() {
                let mut best = 0.0f64;
                for oy in 0..31 {
                    for ox in 0..51 {
                        best = best.max((m.alpha[fi] * dense_activation(&f, &m, fi, ox, oy) as f64).max(0.0));
                    }
                }
                score += m.readout[fi] * best;
            }
            let got = detect(&f, &m).unwrap().score;
            assert!((got - score).abs() <= 1e-9 * score.abs().max(1.0), "{got} vs {score}");
        }
    }

    #[test]
    fn relu_commutes_with_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_model(&mut rng, DEFAULT, 10, 16);
        let f = random_frame(&mut rng, DEFAULT, 0.15);
        let maps = binary_conv_forward(&f, &m).unwrap();
        let d = detect(&f, &m).unwrap();
        let per = maps.width * maps.height;
        for fi in 0..16 {
            let slice = &maps.values[fi * per..(fi + 1) * per];
            let relu_of_max = (m.alpha[fi] * *slice.iter().max().unwrap() as f64).max(0.0);
            let max_of_relu = slice.iter().map(|&a| (m.alpha[fi] * a as f64).max(0.0)).fold(0.0, f64::max);
            assert_eq!(relu_of_max, max_of_relu);
            assert_eq!(d.filter_max[fi], max_of_relu);
        }
    }

    #[test]
    fn scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = random_model(&mut rng, DEFAULT, 10, 10);
        let c = 3.7;
        let mut scaled = m.clone();
        scaled.alpha.iter_mut().for_each(|a| *a *= c);
        scaled.readout.iter_mut().for_each(|r| *r /= c);
        for _ in 0..3 {
            let f = random_frame(&mut rng, DEFAULT, 0.2);
            let (a, b) = (detect(&f, &m).unwrap().score, detect(&f, &scaled).unwrap().score);
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_small_and_mismatched_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_model(&mut rng, DEFAULT, 10, 2);
        assert!(matches!(detect(&FilteredFrame::empty(FrameLayout::new(8, 8)), &m), Err(BnnError::FrameTooSmall { .. })));
        assert!(matches!(detect(&FilteredFrame::empty(FrameLayout::new(30, 20)), &m), Err(BnnError::LayoutMismatch { .. })));
    }

    #[test]
    fn detect_is_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = random_model(&mut rng, DEFAULT, 10, 6);
        let f = random_frame(&mut rng, DEFAULT, 0.2);
        let a = detect(&f, &m).unwrap();
        let _ = detect(&random_frame(&mut rng, DEFAULT, 0.5), &m).unwrap();
        assert_eq!(detect(&f, &m).unwrap(), a);
        let batch = detect_batch(&[f.clone(), f], &m, Execution::Parallel).unwrap();
        assert_eq!(batch[0], a);
        assert_eq!(batch[1], a);
    }
}
