//! The near-chip filter core.
//!
//! Events are binned into fixed τ windows by `t / τ`. Each window is
//! rasterized into a two-bit-per-pixel [`WindowBitmap`], reduced to
//! horizontal / vertical coincidence planes, OR-aggregated over successive
//! windows until an activity threshold is met, and finally block
//! max-pooled into a [`FilteredFrame`].

mod aggregate;
mod frame;
mod pipeline;
mod pool;
mod window;

pub use aggregate::{AggregatedPlanes, Aggregator};
pub use frame::{read_frame_file, read_frames, write_frame_file, write_frames, FilteredFrame, FrameLayout, FRM_MAGIC};
pub use pipeline::{apply_refractory, filter_events, FilterPipeline, PipelineStats};
pub use pool::max_pool;
pub use window::{accumulate_window, coincidence_detect, ChannelFrames, WindowBitmap};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::events::SensorGeometry;

/// What the aggregation trigger counts at the end of each window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TriggerCount {
    /// Active full-resolution coincidence pixels, summed over both channels.
    FullResolution,
    /// Active pooled blocks, summed over both channels.
    PooledBlocks,
}

impl fmt::Display for TriggerCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TriggerCount::FullResolution => "full",
            TriggerCount::PooledBlocks => "pooled",
        })
    }
}

impl FromStr for TriggerCount {
    type Err = FilterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" | "full-resolution" => Ok(TriggerCount::FullResolution),
            "pooled" | "pooled-blocks" => Ok(TriggerCount::PooledBlocks),
            other => Err(FilterError::InvalidConfig(format!("unknown trigger mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FilterConfig {
    /// Window length in µs.
    pub tau_us: u64,
    pub agg_event_threshold: u32,
    /// Aggregation gives up after this many windows without reaching the threshold.
    pub agg_window_limit: u32,
    pub pool: u16,
    /// Minimum interval between emitted frames, 0 disables.
    pub refractory_us: u64,
    pub coincidence: bool,
    pub aggregation: bool,
    pub trigger: TriggerCount,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            tau_us: 3000,
            agg_event_threshold: 1000,
            agg_window_limit: 5,
            pool: 8,
            refractory_us: 0,
            coincidence: true,
            aggregation: true,
            trigger: TriggerCount::FullResolution,
        }
    }
}

/// Refractory interval of the low-rate IoT mode: one frame per 100 ms at most.
pub const IOT_REFRACTORY_US: u64 = 100_000;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("invalid filter configuration: {0}")]
    InvalidConfig(String),
    #[error("config line {line}: {reason}")]
    ConfigSyntax { line: usize, reason: String },
    #[error("frame file: {0}")]
    FrameFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FilterConfig {
    pub fn validate(&self, geometry: SensorGeometry) -> Result<(), FilterError> {
        if self.tau_us == 0 {
            return Err(FilterError::InvalidConfig("tau must be > 0".into()));
        }
        if self.agg_event_threshold == 0 {
            return Err(FilterError::InvalidConfig("aggregation threshold must be > 0".into()));
        }
        if self.agg_window_limit == 0 {
            return Err(FilterError::InvalidConfig("aggregation window limit must be >= 1".into()));
        }
        if !geometry.divisible_by(self.pool) {
            return Err(FilterError::InvalidConfig(format!("pool {} does not divide {}x{}", self.pool, geometry.width, geometry.height)));
        }
        Ok(())
    }

    /// Pooled output dimensions for `geometry`.
    pub fn layout(&self, geometry: SensorGeometry) -> FrameLayout {
        FrameLayout::new((geometry.width / self.pool) as usize, (geometry.height / self.pool) as usize)
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    ///
    /// Keys: `tau_us`, `agg_threshold`, `agg_limit`, `pool`, `refractory_us`,
    /// `coincidence`, `aggregation`, `trigger`.
    pub fn apply_kv(&mut self, text: &str) -> Result<(), FilterError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| FilterError::ConfigSyntax { line: i + 1, reason };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            fn num<T: FromStr>(v: &str) -> Result<T, String> {
                v.parse().map_err(|_| format!("bad number {v:?}"))
            }
            fn flag(v: &str) -> Result<bool, String> {
                match v {
                    "true" | "on" | "1" | "yes" => Ok(true),
                    "false" | "off" | "0" | "no" => Ok(false),
                    _ => Err(format!("bad boolean {v:?}")),
                }
            }
            match key {
                "tau_us" => self.tau_us = num(value).map_err(err)?,
                "agg_threshold" => self.agg_event_threshold = num(value).map_err(err)?,
                "agg_limit" => self.agg_window_limit = num(value).map_err(err)?,
                "pool" => self.pool = num(value).map_err(err)?,
                "refractory_us" => self.refractory_us = num(value).map_err(err)?,
                "coincidence" => self.coincidence = flag(value).map_err(err)?,
                "aggregation" => self.aggregation = flag(value).map_err(err)?,
                "trigger" => self.trigger = value.parse().map_err(|e: FilterError| err(e.to_string()))?,
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self, FilterError> {
        let mut cfg = FilterConfig::default();
        cfg.apply_kv(text)?;
        Ok(cfg)
    }

    /// Renders the configuration in the `key = value` form read by [`apply_kv`](Self::apply_kv).
    pub fn to_kv(&self) -> String {
        format!(
            "tau_us = {}\nagg_threshold = {}\nagg_limit = {}\npool = {}\nrefractory_us = {}\ncoincidence = {}\naggregation = {}\ntrigger = {}\n",
            self.tau_us, self.agg_event_threshold, self.agg_window_limit, self.pool, self.refractory_us, self.coincidence, self.aggregation, self.trigger
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_validation() {
        let c = FilterConfig::default();
        let g = SensorGeometry::default();
        c.validate(g).unwrap();
        assert_eq!(c.layout(g), FrameLayout::new(60, 40));
        assert!(FilterConfig { pool: 7, ..c.clone() }.validate(g).is_err());
        assert!(FilterConfig { tau_us: 0, ..c.clone() }.validate(g).is_err());
        assert!(FilterConfig { agg_window_limit: 0, ..c }.validate(g).is_err());
    }

    #[test]
    fn kv_round_trip() {
        let text = "# comment\ntau_us = 2000\npool=16 # trailing\ncoincidence = off\ntrigger = pooled\n";
        let c = FilterConfig::from_kv(text).unwrap();
        assert_eq!(c.tau_us, 2000);
        assert_eq!(c.pool, 16);
        assert!(!c.coincidence);
        assert_eq!(c.trigger, TriggerCount::PooledBlocks);
        assert_eq!(FilterConfig::from_kv(&c.to_kv()).unwrap(), c);
    }

    #[test]
    fn kv_errors_carry_line() {
        match FilterConfig::from_kv("pool = 8\nbogus = 1") {
            Err(FilterError::ConfigSyntax { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(FilterConfig::from_kv("pool 8").is_err());
        assert!(FilterConfig::from_kv("tau_us = -3").is_err());
    }
}
