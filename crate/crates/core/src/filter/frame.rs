use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::FilterError;
use crate::bitplane::BitPlane;

/// Pooled frame dimensions (60×40 at the default geometry and pool).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FrameLayout {
    pub width: usize,
    pub height: usize,
}

impl FrameLayout {
    pub const fn new(width: usize, height: usize) -> Self {
        FrameLayout { width, height }
    }

    /// Uncompressed payload size: two channels of `width × height` bits.
    pub fn payload_bits(&self) -> usize {
        2 * self.width * self.height
    }

    /// Serialized payload length in bytes (also the Huffman symbol count).
    pub fn symbol_count(&self) -> usize {
        self.payload_bits().div_ceil(8)
    }
}

/// Pooled two-channel output of the filter.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FilteredFrame {
    pub h: BitPlane,
    pub v: BitPlane,
    /// End of the window that released the frame, µs.
    pub emit_time_us: u64,
    pub windows_aggregated: u32,
}

impl FilteredFrame {
    pub fn empty(layout: FrameLayout) -> Self {
        FilteredFrame { h: BitPlane::new(layout.width, layout.height), v: BitPlane::new(layout.width, layout.height), emit_time_us: 0, windows_aggregated: 0 }
    }

    pub fn layout(&self) -> FrameLayout {
        FrameLayout::new(self.h.width(), self.h.height())
    }

    pub fn payload_bits(&self) -> usize {
        self.layout().payload_bits()
    }

    /// `h` row-major then `v` row-major, packed MSB-first, zero-padded to a byte.
    pub fn to_bytes(&self) -> Vec<u8> {
        let layout = self.layout();
        let mut out = vec![0u8; layout.symbol_count()];
        let mut bit = 0usize;
        for plane in [&self.h, &self.v] {
            for y in 0..plane.height() {
                for x in 0..plane.width() {
                    if plane.get(x, y) {
                        out[bit >> 3] |= 0x80 >> (bit & 7);
                    }
                    bit += 1;
                }
            }
        }
        out
    }

    /// Inverse of [`to_bytes`](Self::to_bytes); timing fields are zero.
    pub fn from_bytes(layout: FrameLayout, bytes: &[u8]) -> Option<Self> {
        if bytes.len() != layout.symbol_count() {
            return None;
        }
        let mut frame = FilteredFrame::empty(layout);
        let mut bit = 0usize;
        for plane in [&mut frame.h, &mut frame.v] {
            for y in 0..layout.height {
                for x in 0..layout.width {
                    if bytes[bit >> 3] & (0x80 >> (bit & 7)) != 0 {
                        plane.set(x, y);
                    }
                    bit += 1;
                }
            }
        }
        Some(frame)
    }

    /// Same pixel content, ignoring timing metadata.
    pub fn same_payload(&self, other: &FilteredFrame) -> bool {
        self.h == other.h && self.v == other.v
    }
}

pub const FRM_MAGIC: &[u8; 4] = b"FRM1";
const FRM_VERSION: u8 = 1;

/// Frame corpus file (little-endian):
///
/// ```text
/// header  "FRM1" | version u8 | width u16 | height u16 | count u64
/// frame   emit_time u64 | windows u32 | payload (symbol_count bytes)
/// ```
pub fn write_frames<W: Write>(mut out: W, layout: FrameLayout, frames: &[FilteredFrame]) -> Result<(), FilterError> {
    out.write_all(FRM_MAGIC)?;
    out.write_all(&[FRM_VERSION])?;
    out.write_all(&(layout.width as u16).to_le_bytes())?;
    out.write_all(&(layout.height as u16).to_le_bytes())?;
    out.write_all(&(frames.len() as u64).to_le_bytes())?;
    for f in frames {
        if f.layout() != layout {
            return Err(FilterError::FrameFormat(format!("frame layout {:?} differs from {:?}", f.layout(), layout)));
        }
        out.write_all(&f.emit_time_us.to_le_bytes())?;
        out.write_all(&f.windows_aggregated.to_le_bytes())?;
        out.write_all(&f.to_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_frames(bytes: &[u8]) -> Result<(FrameLayout, Vec<FilteredFrame>), FilterError> {
    let bad = |m: &str| FilterError::FrameFormat(m.to_string());
    if bytes.len() < 17 || &bytes[..4] != FRM_MAGIC {
        return Err(bad("bad magic or short header"));
    }
    if bytes[4] != FRM_VERSION {
        return Err(bad("unsupported version"));
    }
    let width = u16::from_le_bytes([bytes[5], bytes[6]]) as usize;
    let height = u16::from_le_bytes([bytes[7], bytes[8]]) as usize;
    let count = u64::from_le_bytes(bytes[9..17].try_into().unwrap()) as usize;
    let layout = FrameLayout::new(width, height);
    let rec = 12 + layout.symbol_count();
    let body = &bytes[17..];
    if body.len() != count * rec {
        return Err(FilterError::FrameFormat(format!("expected {count} frames of {rec} bytes, found {} bytes", body.len())));
    }
    let frames = body
        .chunks_exact(rec)
        .map(|c| {
            let mut f = FilteredFrame::from_bytes(layout, &c[12..]).expect("length checked");
            f.emit_time_us = u64::from_le_bytes(c[..8].try_into().unwrap());
            f.windows_aggregated = u32::from_le_bytes(c[8..12].try_into().unwrap());
            f
        })
        .collect();
    Ok((layout, frames))
}

pub fn write_frame_file(path: impl AsRef<Path>, layout: FrameLayout, frames: &[FilteredFrame]) -> Result<(), FilterError> {
    write_frames(BufWriter::new(fs::File::create(path)?), layout, frames)
}

pub fn read_frame_file(path: impl AsRef<Path>) -> Result<(FrameLayout, Vec<FilteredFrame>), FilterError> {
    read_frames(&fs::read(path)?)
}
