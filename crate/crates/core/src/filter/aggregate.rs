use super::pool::pooled_count;
use super::{ChannelFrames, FilterConfig, TriggerCount};
use crate::bitplane::BitPlane;
use crate::events::SensorGeometry;

/// Full-resolution planes released by the aggregator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AggregatedPlanes {
    pub h: BitPlane,
    pub v: BitPlane,
    pub windows: u32,
}

/// Temporal OR-aggregation with an activity threshold and a window limit.
///
/// An aggregation episode starts at the first window that contributes at
/// least one bit. At every window end the trigger count is compared with the
/// threshold; the planes are released once it is reached, and discarded after
/// `agg_window_limit` windows otherwise.
#[derive(Clone, Debug)]
pub struct Aggregator {
    h: BitPlane,
    v: BitPlane,
    windows: u32,
    last_count: usize,
    threshold: usize,
    limit: u32,
    pool: usize,
    trigger: TriggerCount,
    scratch: Vec<u64>,
}

impl Aggregator {
    pub fn new(config: &FilterConfig, geometry: SensorGeometry) -> Self {
        let (w, h) = (geometry.width as usize, geometry.height as usize);
        Aggregator {
            h: BitPlane::new(w, h),
            v: BitPlane::new(w, h),
            windows: 0,
            last_count: 0,
            threshold: config.agg_event_threshold as usize,
            limit: config.agg_window_limit,
            pool: config.pool as usize,
            trigger: config.trigger,
            scratch: Vec::new(),
        }
    }

    /// Windows aggregated in the current episode (0 when idle).
    pub fn windows(&self) -> u32 {
        self.windows
    }

    /// Trigger count of the planes accumulated so far.
    pub fn trigger_count(&mut self) -> usize {
        match self.trigger {
            TriggerCount::FullResolution => self.h.count_ones() + self.v.count_ones(),
            TriggerCount::PooledBlocks => pooled_count(&self.h, self.pool, &mut self.scratch) + pooled_count(&self.v, self.pool, &mut self.scratch),
        }
    }

    /// Folds in one window and evaluates the end-of-window condition.
    pub fn step(&mut self, frames: &ChannelFrames) -> Option<AggregatedPlanes> {
        if !frames.any() {
            self.step_empty();
            return None;
        }
        self.h.or_assign(&frames.h);
        self.v.or_assign(&frames.v);
        self.windows += 1;
        self.last_count = self.trigger_count();
        self.evaluate()
    }

    /// A window that contributes no bits. The count cannot change, so it can
    /// only age the episode.
    pub fn step_empty(&mut self) {
        if self.windows == 0 {
            return;
        }
        self.windows += 1;
        let released = self.evaluate();
        debug_assert!(released.is_none());
    }

    /// Equivalent to `n` calls of [`step_empty`](Self::step_empty).
    pub fn skip_empty(&mut self, n: u64) {
        for _ in 0..n.min(self.limit as u64) {
            if self.windows == 0 {
                break;
            }
            self.step_empty();
        }
    }

    fn evaluate(&mut self) -> Option<AggregatedPlanes> {
        if self.last_count >= self.threshold {
            let (w, h) = (self.h.width(), self.h.height());
            let out = AggregatedPlanes {
                h: std::mem::replace(&mut self.h, BitPlane::new(w, h)),
                v: std::mem::replace(&mut self.v, BitPlane::new(w, h)),
                windows: self.windows,
            };
            self.windows = 0;
            self.last_count = 0;
            Some(out)
        } else {
            if self.windows >= self.limit {
                self.reset();
            }
            None
        }
    }

    fn reset(&mut self) {
        self.h.clear();
        self.v.clear();
        self.windows = 0;
        self.last_count = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const G: SensorGeometry = SensorGeometry { width: 480, height: 320 };

    fn pooled_config() -> FilterConfig {
        FilterConfig { trigger: TriggerCount::PooledBlocks, ..FilterConfig::default() }
    }

    /// Frames lighting `n` distinct pooled blocks (one pixel per block),
    /// starting at block index `first`, split over the two channels.
    fn blocks(first: usize, n: usize) -> ChannelFrames {
        let mut h = BitPlane::new(480, 320);
        let mut v = BitPlane::new(480, 320);
        for k in first..first + n {
            let (plane, idx) = if k % 2 == 0 { (&mut h, k / 2) } else { (&mut v, k / 2) };
            plane.set((idx % 60) * 8 + 3, (idx / 60) * 8 + 5);
        }
        ChannelFrames { h, v, window_index: 0 }
    }

    fn oracle_count(frames: &[ChannelFrames]) -> usize {
        let mut h = BitPlane::new(480, 320);
        let mut v = BitPlane::new(480, 320);
        for f in frames {
            h.or_assign(&f.h);
            v.or_assign(&f.v);
        }
        super::super::max_pool(&h, 8).count_ones() + super::super::max_pool(&v, 8).count_ones()
    }

    #[test]
    fn single_dense_window_emits() {
        let mut agg = Aggregator::new(&pooled_config(), G);
        let out = agg.step(&blocks(0, 1200)).expect("emits");
        assert_eq!(out.windows, 1);
        assert_eq!(agg.windows(), 0);
    }

    #[test]
    fn five_sparse_windows_cleared() {
        let mut agg = Aggregator::new(&pooled_config(), G);
        for i in 0..5 {
            assert!(agg.step(&blocks(i * 100, 100)).is_none());
        }
        assert_eq!(agg.windows(), 0);
        assert_eq!(agg.trigger_count(), 0);
    }

    #[test]
    fn two_windows_cross_threshold() {
        let frames = [blocks(0, 600), blocks(600, 600)];
        assert!(oracle_count(&frames[..1]) < 1000);
        assert!(oracle_count(&frames) >= 1000);
        let mut agg = Aggregator::new(&pooled_config(), G);
        assert!(agg.step(&frames[0]).is_none());
        let out = agg.step(&frames[1]).expect("emits on second window");
        assert_eq!(out.windows, 2);
    }

    #[test]
    fn overlapping_windows_do_not_double_count() {
        let mut agg = Aggregator::new(&pooled_config(), G);
        for _ in 0..4 {
            assert!(agg.step(&blocks(0, 600)).is_none());
        }
        assert_eq!(agg.trigger_count(), 600);
    }

    #[test]
    fn empty_windows_age_the_episode() {
        let mut agg = Aggregator::new(&pooled_config(), G);
        assert!(agg.step(&blocks(0, 600)).is_none());
        agg.skip_empty(3);
        assert_eq!(agg.windows(), 4);
        assert_eq!(agg.step(&blocks(600, 600)).map(|p| p.windows), Some(5));

        let mut agg = Aggregator::new(&pooled_config(), G);
        assert!(agg.step(&blocks(0, 600)).is_none());
        agg.skip_empty(4);
        assert_eq!(agg.windows(), 0);
        assert!(agg.step(&blocks(600, 600)).is_none());
    }

    #[test]
    fn idle_aggregator_ignores_empty_windows() {
        let mut agg = Aggregator::new(&pooled_config(), G);
        agg.skip_empty(100);
        assert_eq!(agg.windows(), 0);
    }

    #[test]
    fn full_resolution_counts_pixels() {
        let mut agg = Aggregator::new(&FilterConfig::default(), G);
        let mut f = blocks(0, 0);
        for x in 0..480 {
            f.h.set(x, 10);
            f.v.set(x, 11);
        }
        assert!(agg.step(&f).is_none());
        assert_eq!(agg.trigger_count(), 960);
        let mut g = blocks(0, 0);
        for x in 0..40 {
            g.h.set(x, 12);
        }
        assert!(agg.step(&g).is_some());
    }
}
