//! Sensor events, the `EVS1` file format and the grouped wire format.

mod file;
mod grouped;

pub use file::{read_event_file, read_events, write_event_file, write_events, EVS_MAGIC, EVS_VERSION};
pub use grouped::{encode_grouped, grouped_bits, parse_grouped, GroupedParser, GroupedWord, ParserStats, WordKind, DEFAULT_FIFO_CAPACITY, MAX_DELTA_US};

use thiserror::Error;

/// Event polarity: intensity increase (`Pos`) or decrease (`Neg`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarity {
    Neg,
    Pos,
}

impl Polarity {
    /// Bit in a two-bit window cell / grouped polarity field: 0b01 = NEG, 0b10 = POS.
    #[inline]
    pub fn code(self) -> u8 {
        match self {
            Polarity::Neg => 0b01,
            Polarity::Pos => 0b10,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0b01 => Some(Polarity::Neg),
            0b10 => Some(Polarity::Pos),
            _ => None,
        }
    }
}

/// Pixel array dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SensorGeometry {
    pub width: u16,
    pub height: u16,
}

impl Default for SensorGeometry {
    fn default() -> Self {
        SensorGeometry { width: 480, height: 320 }
    }
}

impl SensorGeometry {
    pub fn new(width: u16, height: u16) -> Result<Self, EventError> {
        if width == 0 || height == 0 {
            return Err(EventError::InvalidGeometry { width, height });
        }
        Ok(SensorGeometry { width, height })
    }

    pub fn pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height
    }

    /// True when `pool` divides both dimensions.
    pub fn divisible_by(&self, pool: u16) -> bool {
        pool > 0 && self.width.is_multiple_of(pool) && self.height.is_multiple_of(pool)
    }
}

/// One sensor event. `t` is in microseconds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, p: Polarity) -> Self {
        Event { t, x, y, p }
    }
}

#[derive(Debug, Error)]
pub enum EventError {
    #[error("invalid geometry {width}x{height}")]
    InvalidGeometry { width: u16, height: u16 },
    #[error("event {index}: ({x}, {y}) lies outside the {width}x{height} sensor")]
    OutOfRange { index: usize, x: u16, y: u16, width: u16, height: u16 },
    #[error("event {index}: timestamp {t} precedes previous timestamp {prev}")]
    NonMonotonic { index: usize, t: u64, prev: u64 },
    #[error("event {index}: timestamp {t} exceeds the 32-bit file field")]
    TimestampOverflow { index: usize, t: u64 },
    #[error("event {index}: not sorted by (t, y)")]
    Unsorted { index: usize },
    #[error("event {index}: coordinate {value} does not fit a 9-bit field")]
    FieldOverflow { index: usize, value: u16 },
    #[error("parse error at byte {offset}: {reason}")]
    Parse { offset: u64, reason: String },
    #[error("record {index} truncated at byte {offset}")]
    Truncated { index: u64, offset: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Checks coordinates against `geometry` and timestamp order.
pub fn validate_events(geometry: SensorGeometry, events: &[Event]) -> Result<(), EventError> {
    let mut prev = 0u64;
    for (index, e) in events.iter().enumerate() {
        if !geometry.contains(e.x, e.y) {
            return Err(EventError::OutOfRange { index, x: e.x, y: e.y, width: geometry.width, height: geometry.height });
        }
        if e.t < prev {
            return Err(EventError::NonMonotonic { index, t: e.t, prev });
        }
        prev = e.t;
    }
    Ok(())
}
