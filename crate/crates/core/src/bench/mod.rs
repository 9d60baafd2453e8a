//! Bandwidth accounting, F1 and the ablation runner.
//!
//! Raw bandwidth is the grouped-format bit cost of the input events; filtered
//! bandwidth is the sum of packet lengths. Both are divided by the total clip
//! duration of the same corpus.

mod report;

pub use report::{write_csv, write_svg, CSV_HEADER};

use std::time::Instant;

use thiserror::Error;

use crate::bnn::{self, BnnError, TrainConfig};
use crate::codec::{build_dictionary, huffman_encode, packet_bits, CodecError, HuffmanDictionary};
use crate::events::{grouped_bits, Event, SensorGeometry};
use crate::exec::Execution;
use crate::filter::{FilterConfig, FilterError, FilterPipeline, FilteredFrame, IOT_REFRACTORY_US};
use crate::synth::{gen_clip, Dataset, SynthError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{predictions} predictions but {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("no variants")]
    NoVariants,
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Bnn(#[from] BnnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct F1 {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// A denominator was zero and the affected value was reported as 0.
    pub zero_division: bool,
}

pub fn f1_score(predictions: &[bool], labels: &[bool]) -> Result<F1, BenchError> {
    if predictions.len() != labels.len() {
        return Err(BenchError::LengthMismatch { predictions: predictions.len(), labels: labels.len() });
    }
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let mut zero_division = false;
    let mut ratio = |num: usize, den: usize| {
        if den == 0 {
            zero_division = true;
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    let f1 = ratio(2 * tp, 2 * tp + fp + fneg);
    Ok(F1 { f1, precision, recall, zero_division })
}

/// One pipeline configuration of the ablation study.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Variant {
    pub name: String,
    pub coincidence: bool,
    pub aggregation: bool,
    pub pool: u16,
    pub huffman: bool,
}

impl Variant {
    pub fn full() -> Self {
        Variant { name: "full".into(), coincidence: true, aggregation: true, pool: 8, huffman: true }
    }

    /// full, CO-off, AG-off, MP-4, MP-8, MP-16.
    pub fn standard() -> Vec<Variant> {
        let full = Variant::full();
        vec![
            full.clone(),
            Variant { name: "co-off".into(), coincidence: false, ..full.clone() },
            Variant { name: "ag-off".into(), aggregation: false, ..full.clone() },
            Variant { name: "mp-4".into(), pool: 4, ..full.clone() },
            Variant { name: "mp-8".into(), ..full.clone() },
            Variant { name: "mp-16".into(), pool: 16, ..full },
        ]
    }

    /// Looks up a standard variant by name; a `-raw` suffix disables Huffman.
    pub fn by_name(name: &str) -> Option<Variant> {
        let (base, huffman) = match name.strip_suffix("-raw") {
            Some(b) => (b, false),
            None => (name, true),
        };
        Variant::standard().into_iter().find(|v| v.name == base).map(|v| Variant { name: name.to_string(), huffman, ..v })
    }

    pub fn config(&self, base: &FilterConfig) -> FilterConfig {
        FilterConfig { coincidence: self.coincidence, aggregation: self.aggregation, pool: self.pool, ..base.clone() }
    }
}

/// Filter output of one clip under one variant.
#[derive(Clone, Debug)]
pub struct ClipFrames {
    pub frames: Vec<FilteredFrame>,
    pub raw_bits: u64,
    pub events: usize,
    pub duration_us: u64,
    pub label: bool,
}

impl ClipFrames {
    pub fn from_events(events: &[Event], duration_us: u64, label: bool, config: &FilterConfig, geometry: SensorGeometry) -> Result<Self, BenchError> {
        Ok(ClipFrames {
            frames: FilterPipeline::run(config.clone(), geometry, events)?,
            raw_bits: grouped_bits(events),
            events: events.len(),
            duration_us,
            label,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Bandwidth {
    pub bitrate_bps: f64,
    pub mean_packet_bits: f64,
    pub max_packet_bits: usize,
    pub packets: usize,
    pub total_bits: u64,
    pub duration_s: f64,
}

/// Packet length of one frame; without a dictionary the payload is sent
/// uncompressed.
pub fn frame_packet_bits(frame: &FilteredFrame, dict: Option<&HuffmanDictionary>) -> usize {
    let payload = match dict {
        Some(d) => huffman_encode(frame, d).len,
        None => frame.payload_bits(),
    };
    packet_bits(payload)
}

/// Filtered bandwidth of a corpus, optionally after a refractory interval.
pub fn measure_bandwidth(clips: &[ClipFrames], dict: Option<&HuffmanDictionary>, refractory_us: u64) -> Result<Bandwidth, BenchError> {
    if clips.is_empty() {
        return Err(BenchError::EmptyCorpus);
    }
    let mut bw = Bandwidth::default();
    // clips are played back to back, so the refractory interval spans clip boundaries
    let mut offset_us = 0u64;
    let mut last_emit: Option<u64> = None;
    for clip in clips {
        for f in &clip.frames {
            let t = offset_us + f.emit_time_us;
            if refractory_us > 0 && last_emit.is_some_and(|l| t - l < refractory_us) {
                continue;
            }
            last_emit = Some(t);
            let bits = frame_packet_bits(f, dict);
            bw.total_bits += bits as u64;
            bw.max_packet_bits = bw.max_packet_bits.max(bits);
            bw.packets += 1;
        }
        offset_us += clip.duration_us;
    }
    bw.duration_s = offset_us as f64 * 1e-6;
    bw.bitrate_bps = if offset_us > 0 { bw.total_bits as f64 * 1e6 / offset_us as f64 } else { 0.0 };
    bw.mean_packet_bits = if bw.packets > 0 { bw.total_bits as f64 / bw.packets as f64 } else { 0.0 };
    Ok(bw)
}

/// Raw grouped-stream bitrate of a corpus.
pub fn raw_bitrate(clips: &[ClipFrames]) -> f64 {
    let bits: u64 = clips.iter().map(|c| c.raw_bits).sum();
    let us: u64 = clips.iter().map(|c| c.duration_us).sum();
    if us == 0 {
        0.0
    } else {
        bits as f64 / (us as f64 * 1e-6)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationOptions {
    pub base: FilterConfig,
    pub train: TrainConfig,
    /// Skip training and report bandwidth only.
    pub evaluate_f1: bool,
    /// Training frames taken (evenly spaced) from each training clip.
    pub train_frames_per_clip: usize,
    /// Interval used for the refractory bitrate column.
    pub refractory_us: u64,
    pub exec: Execution,
}

impl Default for AblationOptions {
    fn default() -> Self {
        AblationOptions {
            base: FilterConfig::default(),
            train: TrainConfig::default(),
            evaluate_f1: true,
            train_frames_per_clip: 8,
            refractory_us: IOT_REFRACTORY_US,
            exec: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RowStatus {
    Ok,
    Failed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariantRow {
    pub variant: Variant,
    pub status: RowStatus,
    /// Packet bitrate with the variant's coding (Huffman or uncompressed).
    pub bitrate_bps: f64,
    /// Packet bitrate with uncompressed payloads.
    pub prehuffman_bitrate_bps: f64,
    /// `bitrate_bps` after the refractory interval.
    pub refractory_bitrate_bps: f64,
    pub mean_packet_bits: f64,
    pub packets: usize,
    pub raw_bitrate_bps: f64,
    pub reduction_pct: f64,
    /// `None` when F1 was not evaluated or training failed.
    pub f1: Option<F1>,
    pub train_loss: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<VariantRow>,
    pub clips: usize,
    pub events: u64,
    pub duration_s: f64,
}

impl BenchReport {
    pub fn row(&self, name: &str) -> Option<&VariantRow> {
        self.rows.iter().find(|r| r.variant.name == name)
    }
}

/// Indices of `take` evenly spaced elements out of `n`.
pub fn spread_indices(n: usize, take: usize) -> impl Iterator<Item = usize> {
    let take = take.min(n);
    (0..take).map(move |i| i * n / take)
}

/// Filters every clip of `dataset` under every variant (each clip is
/// generated once), then measures bandwidth and, optionally, trains and
/// evaluates one detector per variant.
pub fn run_ablation(dataset: &Dataset, variants: &[Variant], opts: &AblationOptions) -> Result<BenchReport, BenchError> {
    if dataset.is_empty() {
        return Err(BenchError::EmptyCorpus);
    }
    if variants.is_empty() {
        return Err(BenchError::NoVariants);
    }
    let configs: Vec<FilterConfig> = variants.iter().map(|v| v.config(&opts.base)).collect();
    let geometry = dataset.scenes[0].geometry;
    for c in &configs {
        c.validate(geometry)?;
    }
    // per clip: one ClipFrames per variant
    let per_clip: Vec<Result<Vec<ClipFrames>, BenchError>> = opts.exec.map(&dataset.scenes, |spec| {
        let clip = gen_clip(spec)?;
        configs.iter().map(|c| ClipFrames::from_events(&clip.events, spec.duration_us, clip.label, c, spec.geometry)).collect()
    });
    let per_clip: Vec<Vec<ClipFrames>> = per_clip.into_iter().collect::<Result<_, _>>()?;
    let train_mask = dataset.train_mask();
    let events: u64 = per_clip.iter().map(|c| c[0].events as u64).sum();
    let duration_s = dataset.scenes.iter().map(|s| s.duration_us).sum::<u64>() as f64 * 1e-6;

    let mut rows = Vec::with_capacity(variants.len());
    for (vi, variant) in variants.iter().enumerate() {
        let clips: Vec<ClipFrames> = per_clip.iter().map(|c| c[vi].clone()).collect();
        let train_frames: Vec<FilteredFrame> = clips.iter().zip(&train_mask).filter(|(_, &t)| t).flat_map(|(c, _)| c.frames.iter().cloned()).collect();
        let dict = if variant.huffman {
            if train_frames.is_empty() {
                // nothing to fit: fall back to a flat code
                Some(HuffmanDictionary::uniform())
            } else {
                Some(build_dictionary(&train_frames)?)
            }
        } else {
            None
        };
        let coded = measure_bandwidth(&clips, dict.as_ref(), 0)?;
        let plain = measure_bandwidth(&clips, None, 0)?;
        let capped = measure_bandwidth(&clips, dict.as_ref(), opts.refractory_us)?;
        let raw = raw_bitrate(&clips);
        let mut row = VariantRow {
            variant: variant.clone(),
            status: RowStatus::Ok,
            bitrate_bps: coded.bitrate_bps,
            prehuffman_bitrate_bps: plain.bitrate_bps,
            refractory_bitrate_bps: capped.bitrate_bps,
            mean_packet_bits: coded.mean_packet_bits,
            packets: coded.packets,
            raw_bitrate_bps: raw,
            reduction_pct: if raw > 0.0 { 100.0 * (1.0 - coded.bitrate_bps / raw) } else { 0.0 },
            f1: None,
            train_loss: Vec::new(),
        };
        if opts.evaluate_f1 {
            match evaluate(&clips, &train_mask, opts) {
                Ok((f1, loss)) => {
                    row.f1 = Some(f1);
                    row.train_loss = loss;
                }
                Err(e) => row.status = RowStatus::Failed(e.to_string()),
            }
        }
        rows.push(row);
    }
    Ok(BenchReport { rows, clips: dataset.len(), events, duration_s })
}

/// Trains on (subsampled) frames of the training clips and scores every
/// frame of the test clips, each frame labelled with its clip's label.
pub fn evaluate(clips: &[ClipFrames], train_mask: &[bool], opts: &AblationOptions) -> Result<(F1, Vec<f64>), BenchError> {
    let mut frames = Vec::new();
    let mut labels = Vec::new();
    for (c, _) in clips.iter().zip(train_mask).filter(|(_, &t)| t) {
        for i in spread_indices(c.frames.len(), opts.train_frames_per_clip) {
            frames.push(c.frames[i].clone());
            labels.push(c.label);
        }
    }
    if frames.is_empty() {
        return Err(BnnError::Dataset("no training frames".into()).into());
    }
    let (model, report) = bnn::train(&frames, &labels, &opts.train)?;
    let test: Vec<(&FilteredFrame, bool)> =
        clips.iter().zip(train_mask).filter(|(_, &t)| !t).flat_map(|(c, _)| c.frames.iter().map(move |f| (f, c.label))).collect();
    let decisions = opts.exec.map(&test, |(f, _)| bnn::detect(f, &model).map(|d| d.decision));
    let predictions: Vec<bool> = decisions.into_iter().collect::<Result<_, _>>()?;
    let truth: Vec<bool> = test.iter().map(|t| t.1).collect();
    Ok((f1_score(&predictions, &truth)?, report.loss_per_epoch))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Throughput {
    pub events: u64,
    pub seconds: f64,
    pub events_per_sec: f64,
    pub frames: u64,
}

/// Single-threaded streaming filter throughput over pre-generated clips.
pub fn measure_throughput(clips: &[Vec<Event>], config: &FilterConfig, geometry: SensorGeometry) -> Result<Throughput, BenchError> {
    let mut pipelines = Vec::with_capacity(clips.len());
    for _ in clips {
        pipelines.push(FilterPipeline::new(config.clone(), geometry)?);
    }
    let mut out = Vec::new();
    let mut frames = 0u64;
    let start = Instant::now();
    for (events, p) in clips.iter().zip(&mut pipelines) {
        p.push_all(events, &mut out);
        p.finish(&mut out);
        frames += out.len() as u64;
        out.clear();
    }
    let seconds = start.elapsed().as_secs_f64();
    let events: u64 = clips.iter().map(|c| c.len() as u64).sum();
    Ok(Throughput { events, seconds, events_per_sec: events as f64 / seconds.max(1e-9), frames })
}
