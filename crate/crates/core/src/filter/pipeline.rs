use super::{accumulate_window, coincidence_detect, max_pool, Aggregator, ChannelFrames, FilterConfig, FilterError, FilteredFrame, WindowBitmap};
use crate::bitplane::BitPlane;
use crate::events::{Event, SensorGeometry};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PipelineStats {
    pub events_in: u64,
    /// Out-of-geometry events and events older than the open window.
    pub events_dropped: u64,
    pub windows: u64,
    pub frames_emitted: u64,
    /// Frames discarded by the refractory interval.
    pub frames_suppressed: u64,
}

/// Pools released planes and applies the refractory interval.
#[derive(Clone, Debug)]
struct Emitter {
    tau: u64,
    pool: usize,
    refractory: u64,
    last_emit: Option<u64>,
}

impl Emitter {
    fn emit(&mut self, h: &BitPlane, v: &BitPlane, windows: u32, window_index: u64, stats: &mut PipelineStats, out: &mut Vec<FilteredFrame>) {
        let emit_time_us = (window_index + 1) * self.tau;
        if let Some(last) = self.last_emit {
            if emit_time_us - last < self.refractory {
                stats.frames_suppressed += 1;
                return;
            }
        }
        self.last_emit = Some(emit_time_us);
        stats.frames_emitted += 1;
        out.push(FilteredFrame { h: max_pool(h, self.pool), v: max_pool(v, self.pool), emit_time_us, windows_aggregated: windows });
    }

    fn release(&mut self, aggregator: Option<&mut Aggregator>, frames: &ChannelFrames, stats: &mut PipelineStats, out: &mut Vec<FilteredFrame>) {
        match aggregator {
            Some(agg) => {
                if let Some(p) = agg.step(frames) {
                    self.emit(&p.h, &p.v, p.windows, frames.window_index, stats, out);
                }
            }
            None => {
                if frames.any() {
                    self.emit(&frames.h, &frames.v, 1, frames.window_index, stats, out);
                }
            }
        }
    }
}

/// Streaming filter with ping-pong window memories.
///
/// While window `n` is evaluated the other memory is already collecting
/// window `n + 1`. Events must arrive time-sorted; late events are dropped
/// and counted.
#[derive(Clone, Debug)]
pub struct FilterPipeline {
    config: FilterConfig,
    geometry: SensorGeometry,
    buffers: [WindowBitmap; 2],
    dirty: [bool; 2],
    active: usize,
    current: Option<u64>,
    aggregator: Option<Aggregator>,
    emitter: Emitter,
    stats: PipelineStats,
}

impl FilterPipeline {
    pub fn new(config: FilterConfig, geometry: SensorGeometry) -> Result<Self, FilterError> {
        config.validate(geometry)?;
        let aggregator = config.aggregation.then(|| Aggregator::new(&config, geometry));
        let emitter = Emitter { tau: config.tau_us, pool: config.pool as usize, refractory: config.refractory_us, last_emit: None };
        Ok(FilterPipeline {
            buffers: [WindowBitmap::new(geometry), WindowBitmap::new(geometry)],
            dirty: [false; 2],
            active: 0,
            current: None,
            aggregator,
            emitter,
            stats: PipelineStats::default(),
            config,
            geometry,
        })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn stats(&self) -> PipelineStats {
        self.stats
    }

    #[inline]
    pub fn push(&mut self, e: &Event, out: &mut Vec<FilteredFrame>) {
        self.stats.events_in += 1;
        if !self.geometry.contains(e.x, e.y) {
            self.stats.events_dropped += 1;
            return;
        }
        let w = e.t / self.config.tau_us;
        match self.current {
            None => self.current = Some(w),
            Some(c) if w < c => {
                self.stats.events_dropped += 1;
                return;
            }
            Some(c) if w > c => {
                self.close_window(c, out);
                if let Some(agg) = self.aggregator.as_mut() {
                    agg.skip_empty(w - c - 1);
                }
                self.stats.windows += w - c - 1;
                self.current = Some(w);
            }
            Some(_) => {}
        }
        self.buffers[self.active].mark(e.x, e.y, e.p);
        self.dirty[self.active] = true;
    }

    pub fn push_all(&mut self, events: &[Event], out: &mut Vec<FilteredFrame>) {
        for e in events {
            self.push(e, out);
        }
    }

    /// Closes the open window; the stream is then treated as ended.
    pub fn finish(&mut self, out: &mut Vec<FilteredFrame>) {
        if let Some(c) = self.current.take() {
            self.close_window(c, out);
        }
    }

    /// Filters a whole event sequence.
    pub fn run(config: FilterConfig, geometry: SensorGeometry, events: &[Event]) -> Result<Vec<FilteredFrame>, FilterError> {
        let mut p = FilterPipeline::new(config, geometry)?;
        let mut out = Vec::new();
        p.push_all(events, &mut out);
        p.finish(&mut out);
        Ok(out)
    }

    fn close_window(&mut self, index: u64, out: &mut Vec<FilteredFrame>) {
        let done = self.active;
        self.active ^= 1;
        self.stats.windows += 1;
        if self.dirty[done] {
            let bitmap = &mut self.buffers[done];
            bitmap.window_index = index;
            let frames = if self.config.coincidence { coincidence_detect(bitmap) } else { ChannelFrames::passthrough(bitmap) };
            bitmap.clear();
            self.dirty[done] = false;
            self.emitter.release(self.aggregator.as_mut(), &frames, &mut self.stats, out);
        } else if let Some(agg) = self.aggregator.as_mut() {
            agg.step_empty();
        }
    }
}

/// Batch reference path: slices the stream per window and runs each stage
/// function on it. Produces the same frames as [`FilterPipeline`].
pub fn filter_events(events: &[Event], config: &FilterConfig, geometry: SensorGeometry) -> Result<Vec<FilteredFrame>, FilterError> {
    config.validate(geometry)?;
    let mut aggregator = config.aggregation.then(|| Aggregator::new(config, geometry));
    let mut emitter = Emitter { tau: config.tau_us, pool: config.pool as usize, refractory: config.refractory_us, last_emit: None };
    let mut stats = PipelineStats::default();
    let mut out = Vec::new();
    let mut prev: Option<u64> = None;
    for chunk in events.chunk_by(|a, b| a.t / config.tau_us == b.t / config.tau_us) {
        let index = chunk[0].t / config.tau_us;
        if let (Some(p), Some(agg)) = (prev, aggregator.as_mut()) {
            agg.skip_empty(index - p - 1);
        }
        let valid: Vec<Event> = chunk.iter().copied().filter(|e| geometry.contains(e.x, e.y)).collect();
        let mut bitmap = accumulate_window(&valid, geometry);
        bitmap.window_index = index;
        let frames = if config.coincidence { coincidence_detect(&bitmap) } else { ChannelFrames::passthrough(&bitmap) };
        emitter.release(aggregator.as_mut(), &frames, &mut stats, &mut out);
        prev = Some(index);
    }
    Ok(out)
}

/// Drops every frame closer than `refractory_us` to the previously kept one.
///
/// The aggregator does not observe suppression, so this matches running the
/// pipeline with the same refractory setting.
pub fn apply_refractory(frames: &[FilteredFrame], refractory_us: u64) -> Vec<FilteredFrame> {
    let mut last: Option<u64> = None;
    frames
        .iter()
        .filter(|f| {
            let keep = last.is_none_or(|l| f.emit_time_us - l >= refractory_us);
            if keep {
                last = Some(f.emit_time_us);
            }
            keep
        })
        .cloned()
        .collect()
}
