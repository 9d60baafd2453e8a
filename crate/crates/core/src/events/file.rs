//! `EVS1` event files.
//!
//! Layout (little-endian):
//!
//! ```text
//! header  "EVS1" | version u8 | width u16 | height u16 | record count u64   (17 bytes)
//! record  t u32 (µs) | x u16 | y u16 | p u8 (1 = POS, 0 = NEG) | 3 zero bytes  (12 bytes)
//! ```
//!
//! A record count of 0 means "unknown"; the reader then consumes records
//! until end of file.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{validate_events, Event, EventError, Polarity, SensorGeometry};

pub const EVS_MAGIC: &[u8; 4] = b"EVS1";
pub const EVS_VERSION: u8 = 1;
const HEADER_LEN: usize = 17;
const RECORD_LEN: usize = 12;

/// Serializes `events` into `out`. Validates before writing anything.
pub fn write_events<W: Write>(mut out: W, geometry: SensorGeometry, events: &[Event]) -> Result<(), EventError> {
    validate_events(geometry, events)?;
    if let Some((index, e)) = events.iter().enumerate().find(|(_, e)| e.t > u32::MAX as u64) {
        return Err(EventError::TimestampOverflow { index, t: e.t });
    }
    let mut header = [0u8; HEADER_LEN];
    header[..4].copy_from_slice(EVS_MAGIC);
    header[4] = EVS_VERSION;
    header[5..7].copy_from_slice(&geometry.width.to_le_bytes());
    header[7..9].copy_from_slice(&geometry.height.to_le_bytes());
    header[9..17].copy_from_slice(&(events.len() as u64).to_le_bytes());
    out.write_all(&header)?;
    let mut rec = [0u8; RECORD_LEN];
    for e in events {
        rec[0..4].copy_from_slice(&(e.t as u32).to_le_bytes());
        rec[4..6].copy_from_slice(&e.x.to_le_bytes());
        rec[6..8].copy_from_slice(&e.y.to_le_bytes());
        rec[8] = match e.p {
            Polarity::Pos => 1,
            Polarity::Neg => 0,
        };
        out.write_all(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_event_file(path: impl AsRef<Path>, geometry: SensorGeometry, events: &[Event]) -> Result<(), EventError> {
    // Validate first so a rejected sequence never leaves a partial file behind.
    validate_events(geometry, events)?;
    let file = fs::File::create(path)?;
    write_events(BufWriter::new(file), geometry, events)
}

/// Parses an in-memory `EVS1` image.
pub fn read_events(bytes: &[u8]) -> Result<(SensorGeometry, Vec<Event>), EventError> {
    if bytes.len() < 4 || &bytes[..4] != EVS_MAGIC {
        return Err(EventError::Parse { offset: 0, reason: "bad magic, expected \"EVS1\"".into() });
    }
    if bytes.len() < HEADER_LEN {
        return Err(EventError::Parse { offset: bytes.len() as u64, reason: "truncated header".into() });
    }
    if bytes[4] != EVS_VERSION {
        return Err(EventError::Parse { offset: 4, reason: format!("unsupported version {}", bytes[4]) });
    }
    let width = u16::from_le_bytes([bytes[5], bytes[6]]);
    let height = u16::from_le_bytes([bytes[7], bytes[8]]);
    let geometry = SensorGeometry::new(width, height).map_err(|e| EventError::Parse { offset: 5, reason: e.to_string() })?;
    let declared = u64::from_le_bytes(bytes[9..17].try_into().unwrap());

    let body = &bytes[HEADER_LEN..];
    let available = (body.len() / RECORD_LEN) as u64;
    let count = if declared == 0 { available } else { declared };
    if available < count || (declared == 0 && !body.len().is_multiple_of(RECORD_LEN)) {
        let index = available;
        return Err(EventError::Truncated { index, offset: (HEADER_LEN as u64) + index * RECORD_LEN as u64 });
    }

    let mut events = Vec::with_capacity(count as usize);
    let mut prev = 0u64;
    for (i, rec) in body.chunks_exact(RECORD_LEN).take(count as usize).enumerate() {
        let offset = (HEADER_LEN + i * RECORD_LEN) as u64;
        let t = u32::from_le_bytes(rec[0..4].try_into().unwrap()) as u64;
        let x = u16::from_le_bytes([rec[4], rec[5]]);
        let y = u16::from_le_bytes([rec[6], rec[7]]);
        let p = match rec[8] {
            1 => Polarity::Pos,
            0 => Polarity::Neg,
            other => return Err(EventError::Parse { offset: offset + 8, reason: format!("record {i}: polarity byte {other}") }),
        };
        if !geometry.contains(x, y) {
            return Err(EventError::Parse { offset: offset + 4, reason: format!("record {i}: ({x}, {y}) outside {width}x{height}") });
        }
        if t < prev {
            return Err(EventError::Parse { offset, reason: format!("record {i}: timestamp {t} < {prev}") });
        }
        prev = t;
        events.push(Event { t, x, y, p });
    }
    Ok((geometry, events))
}

pub fn read_event_file(path: impl AsRef<Path>) -> Result<(SensorGeometry, Vec<Event>), EventError> {
    read_events(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encode(events: &[Event]) -> Vec<u8> {
        let mut buf = Vec::new();
        write_events(&mut buf, SensorGeometry::default(), events).unwrap();
        buf
    }

    #[test]
    fn empty_file_is_header_only() {
        let buf = encode(&[]);
        assert_eq!(buf.len(), HEADER_LEN);
        assert_eq!(&buf[..4], b"EVS1");
        assert_eq!(&buf[9..17], &[0u8; 8]);
        let (g, ev) = read_events(&buf).unwrap();
        assert_eq!(g, SensorGeometry::default());
        assert!(ev.is_empty());
    }

    #[test]
    fn origin_record_bytes() {
        let buf = encode(&[Event::new(0, 0, 0, Polarity::Pos)]);
        assert_eq!(&buf[HEADER_LEN..], &[0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0]);
    }

    #[test]
    fn bad_magic_at_offset_zero() {
        let mut buf = encode(&[]);
        buf[..4].copy_from_slice(b"XXXX");
        assert!(matches!(read_events(&buf), Err(EventError::Parse { offset: 0, .. })));
    }

    #[test]
    fn truncation_names_record() {
        let ev: Vec<_> = (0..5).map(|i| Event::new(i, 1, 2, Polarity::Neg)).collect();
        let buf = encode(&ev);
        let cut = &buf[..buf.len() - 5];
        match read_events(cut) {
            Err(EventError::Truncated { index, offset }) => {
                assert_eq!(index, 4);
                assert_eq!(offset, (HEADER_LEN + 4 * RECORD_LEN) as u64);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_input_on_write() {
        let g = SensorGeometry::default();
        let mut sink = Vec::new();
        let err = write_events(&mut sink, g, &[Event::new(0, 0, 320, Polarity::Pos)]).unwrap_err();
        assert!(matches!(err, EventError::OutOfRange { index: 0, .. }));
        let err = write_events(&mut sink, g, &[Event::new(1 << 33, 0, 0, Polarity::Pos)]).unwrap_err();
        assert!(matches!(err, EventError::TimestampOverflow { .. }));
        assert!(sink.is_empty());
    }

    #[test]
    fn coordinate_outside_geometry_on_read() {
        let mut buf = encode(&[Event::new(0, 3, 3, Polarity::Pos)]);
        buf[HEADER_LEN + 4..HEADER_LEN + 6].copy_from_slice(&1000u16.to_le_bytes());
        assert!(matches!(read_events(&buf), Err(EventError::Parse { offset, .. }) if offset == (HEADER_LEN + 4) as u64));
    }
}
