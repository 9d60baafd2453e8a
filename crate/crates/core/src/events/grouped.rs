//! Grouped row/timestamp event words and the FIFO-fed parser.
//!
//! Each word is 32 bits, bit 31 is the header flag:
//!
//! ```text
//! header  1 | y (9) | Δt µs since previous header (22)
//! event   0 | x (9) | polarity (2: 01 = NEG, 10 = POS) | reserved (20, zero)
//! ```
//!
//! Events sharing a `(t, y)` pair are emitted after a single header word.

use std::collections::VecDeque;

use super::{Event, EventError, Polarity};

pub const MAX_DELTA_US: u64 = (1 << 22) - 1;
pub const DEFAULT_FIFO_CAPACITY: usize = 256;
const FIELD_MAX: u16 = (1 << 9) - 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GroupedWord(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WordKind {
    Header {
        y: u16,
        delta: u32,
    },
    /// `polarity` is `None` for the invalid field values 00 and 11.
    Event {
        x: u16,
        polarity: Option<Polarity>,
    },
}

impl GroupedWord {
    pub fn header(y: u16, delta: u32) -> Self {
        debug_assert!(y <= FIELD_MAX && delta as u64 <= MAX_DELTA_US);
        GroupedWord(1 << 31 | (y as u32 & 0x1FF) << 22 | (delta & 0x3F_FFFF))
    }

    pub fn event(x: u16, p: Polarity) -> Self {
        debug_assert!(x <= FIELD_MAX);
        GroupedWord((x as u32 & 0x1FF) << 22 | (p.code() as u32) << 20)
    }

    pub fn kind(self) -> WordKind {
        let w = self.0;
        if w >> 31 == 1 {
            WordKind::Header { y: ((w >> 22) & 0x1FF) as u16, delta: w & 0x3F_FFFF }
        } else {
            WordKind::Event { x: ((w >> 22) & 0x1FF) as u16, polarity: Polarity::from_code(((w >> 20) & 0b11) as u8) }
        }
    }
}

/// Encodes events sorted by `(t, y)` into grouped words.
///
/// Timestamp gaps larger than [`MAX_DELTA_US`] are bridged with extra header
/// words carrying the residual delta.
pub fn encode_grouped(events: &[Event]) -> Result<Vec<GroupedWord>, EventError> {
    let mut out = Vec::with_capacity(events.len() * 2);
    let mut last_t = 0u64;
    let mut group: Option<(u64, u16)> = None;
    for (index, e) in events.iter().enumerate() {
        if e.x > FIELD_MAX {
            return Err(EventError::FieldOverflow { index, value: e.x });
        }
        if e.y > FIELD_MAX {
            return Err(EventError::FieldOverflow { index, value: e.y });
        }
        if let Some(g) = group {
            if (e.t, e.y) < g {
                return Err(EventError::Unsorted { index });
            }
        }
        if group != Some((e.t, e.y)) {
            let mut delta = e.t - last_t;
            while delta > MAX_DELTA_US {
                out.push(GroupedWord::header(e.y, MAX_DELTA_US as u32));
                delta -= MAX_DELTA_US;
            }
            out.push(GroupedWord::header(e.y, delta as u32));
            last_t = e.t;
            group = Some((e.t, e.y));
        }
        out.push(GroupedWord::event(e.x, e.p));
    }
    Ok(out)
}

/// Size in bits of [`encode_grouped`]'s output without materializing it.
/// Assumes sorted input.
pub fn grouped_bits(events: &[Event]) -> u64 {
    let mut words = 0u64;
    let mut last_t = 0u64;
    let mut group: Option<(u64, u16)> = None;
    for e in events {
        if group != Some((e.t, e.y)) {
            let delta = e.t - last_t;
            words += 1 + delta.saturating_sub(1) / MAX_DELTA_US;
            last_t = e.t;
            group = Some((e.t, e.y));
        }
        words += 1;
    }
    words * 32
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ParserStats {
    pub words_in: u64,
    /// Words rejected because the FIFO was full (newest dropped).
    pub overflow_dropped: u64,
    /// Words seen before the first header word.
    pub unsynced_discarded: u64,
    /// Event words with polarity field 00 or 11.
    pub malformed: u64,
    pub headers: u64,
    pub events: u64,
}

/// Bounded-FIFO grouped-word decoder.
///
/// The producer calls [`push`](Self::push), the consumer calls
/// [`pop`](Self::pop) / [`drain`](Self::drain). A full FIFO drops the
/// incoming word; the producer is never blocked.
#[derive(Debug, Clone)]
pub struct GroupedParser {
    fifo: VecDeque<u32>,
    capacity: usize,
    synced: bool,
    t: u64,
    y: u16,
    stats: ParserStats,
}

impl GroupedParser {
    pub fn new(capacity: usize) -> Self {
        GroupedParser { fifo: VecDeque::with_capacity(capacity), capacity, synced: false, t: 0, y: 0, stats: ParserStats::default() }
    }

    pub fn stats(&self) -> ParserStats {
        self.stats
    }

    pub fn queued(&self) -> usize {
        self.fifo.len()
    }

    /// Enqueues one word; returns `false` if it was dropped on overflow.
    pub fn push(&mut self, word: GroupedWord) -> bool {
        self.stats.words_in += 1;
        if self.fifo.len() >= self.capacity {
            self.stats.overflow_dropped += 1;
            return false;
        }
        self.fifo.push_back(word.0);
        true
    }

    /// Decodes queued words until one event is produced or the FIFO empties.
    pub fn pop(&mut self) -> Option<Event> {
        while let Some(w) = self.fifo.pop_front() {
            match GroupedWord(w).kind() {
                WordKind::Header { y, delta } => {
                    self.synced = true;
                    self.stats.headers += 1;
                    self.t += delta as u64;
                    self.y = y;
                }
                WordKind::Event { .. } if !self.synced => self.stats.unsynced_discarded += 1,
                WordKind::Event { polarity: None, .. } => self.stats.malformed += 1,
                WordKind::Event { x, polarity: Some(p) } => {
                    self.stats.events += 1;
                    return Some(Event { t: self.t, x, y: self.y, p });
                }
            }
        }
        None
    }

    pub fn drain(&mut self, out: &mut Vec<Event>) {
        while let Some(e) = self.pop() {
            out.push(e);
        }
    }
}

/// Decodes a word stream with a consumer that keeps up (drains after every
/// push).
pub fn parse_grouped(words: &[GroupedWord], fifo_capacity: usize) -> (Vec<Event>, ParserStats) {
    let mut parser = GroupedParser::new(fifo_capacity);
    let mut out = Vec::with_capacity(words.len());
    for &w in words {
        parser.push(w);
        parser.drain(&mut out);
    }
    (out, parser.stats())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(t: u64, x: u16, y: u16, p: Polarity) -> Event {
        Event::new(t, x, y, p)
    }

    #[test]
    fn empty() {
        assert!(encode_grouped(&[]).unwrap().is_empty());
        assert_eq!(grouped_bits(&[]), 0);
    }

    #[test]
    fn same_group_shares_header() {
        let e = [ev(10, 3, 7, Polarity::Pos), ev(10, 9, 7, Polarity::Neg)];
        let words = encode_grouped(&e).unwrap();
        assert_eq!(words.len(), 3);
        assert_eq!(words[0].kind(), WordKind::Header { y: 7, delta: 10 });
        assert_eq!(parse_grouped(&words, 256).0, e);
    }

    #[test]
    fn rows_at_one_timestamp() {
        let e = [ev(5, 1, 1, Polarity::Pos), ev(5, 1, 2, Polarity::Pos), ev(5, 1, 3, Polarity::Neg)];
        let words = encode_grouped(&e).unwrap();
        let headers: Vec<_> = words
            .iter()
            .filter_map(|w| match w.kind() {
                WordKind::Header { delta, .. } => Some(delta),
                _ => None,
            })
            .collect();
        assert_eq!(headers, vec![5, 0, 0]);
        assert_eq!(parse_grouped(&words, 256).0, e);
    }

    #[test]
    fn bit_layout() {
        assert_eq!(GroupedWord::header(0x1FF, 0x3F_FFFF).0, u32::MAX);
        assert_eq!(GroupedWord::event(1, Polarity::Pos).0, 1 << 22 | 0b10 << 20);
        assert_eq!(GroupedWord::event(0, Polarity::Neg).0, 0b01 << 20);
    }

    #[test]
    fn delta_overflow_adds_headers() {
        let big = 3 * MAX_DELTA_US + 17;
        let e = [ev(1, 0, 0, Polarity::Pos), ev(1 + big, 4, 2, Polarity::Neg)];
        let words = encode_grouped(&e).unwrap();
        assert_eq!(words.len(), 2 + 3 + 2);
        assert_eq!(grouped_bits(&e), words.len() as u64 * 32);
        assert_eq!(parse_grouped(&words, 256).0, e);
    }

    #[test]
    fn unsorted_rejected() {
        let e = [ev(5, 0, 3, Polarity::Pos), ev(5, 0, 2, Polarity::Pos)];
        assert!(matches!(encode_grouped(&e), Err(EventError::Unsorted { index: 1 })));
        let e = [ev(5, 0, 3, Polarity::Pos), ev(4, 0, 3, Polarity::Pos)];
        assert!(matches!(encode_grouped(&e), Err(EventError::Unsorted { index: 1 })));
    }

    #[test]
    fn words_before_first_header_discarded() {
        let mut words = vec![GroupedWord::event(1, Polarity::Pos); 3];
        words.push(GroupedWord::header(4, 100));
        words.push(GroupedWord::event(2, Polarity::Neg));
        let (out, stats) = parse_grouped(&words, 256);
        assert_eq!(out, vec![ev(100, 2, 4, Polarity::Neg)]);
        assert_eq!(stats.unsynced_discarded, 3);
    }

    #[test]
    fn malformed_polarity_counted() {
        let words = [
            GroupedWord::header(0, 0),
            GroupedWord(5 << 22),              // polarity 00
            GroupedWord(5 << 22 | 0b11 << 20), // polarity 11
            GroupedWord::event(5, Polarity::Pos),
        ];
        let (out, stats) = parse_grouped(&words, 256);
        assert_eq!(out.len(), 1);
        assert_eq!(stats.malformed, 2);
    }

    #[test]
    fn stalled_consumer_overflows() {
        let mut parser = GroupedParser::new(256);
        parser.push(GroupedWord::header(0, 0));
        for i in 0..299 {
            parser.push(GroupedWord::event(i % 480, Polarity::Pos));
        }
        assert_eq!(parser.stats().overflow_dropped, 44);
        assert_eq!(parser.queued(), 256);
        let mut out = Vec::new();
        parser.drain(&mut out);
        assert_eq!(out.len(), 255);
    }

    #[test]
    fn reserved_bits_ignored() {
        let words = [GroupedWord::header(9, 3), GroupedWord(GroupedWord::event(7, Polarity::Neg).0 | 0xABCDE)];
        assert_eq!(parse_grouped(&words, 8).0, vec![ev(3, 7, 9, Polarity::Neg)]);
    }

    fn sorted_events() -> impl Strategy<Value = Vec<Event>> {
        prop::collection::vec((0u64..50_000, 0u16..480, 0u16..320, any::<bool>()), 0..400).prop_map(|mut v| {
            v.sort();
            v.into_iter().map(|(t, x, y, p)| ev(t, x, y, if p { Polarity::Pos } else { Polarity::Neg })).collect::<Vec<_>>()
        })
    }

    proptest! {
        #[test]
        fn round_trip(events in sorted_events()) {
            let mut events = events;
            events.sort_by_key(|e| (e.t, e.y));
            let words = encode_grouped(&events).unwrap();
            prop_assert!(words.len() <= 2 * events.len());
            prop_assert_eq!(grouped_bits(&events), words.len() as u64 * 32);
            let (decoded, stats) = parse_grouped(&words, DEFAULT_FIFO_CAPACITY);
            prop_assert_eq!(stats.overflow_dropped, 0);
            prop_assert_eq!(decoded, events);
        }

        #[test]
        fn parser_deterministic(raw in prop::collection::vec(any::<u32>(), 0..600), stall in 1usize..40) {
            let run = || {
                let mut p = GroupedParser::new(64);
                let mut out = Vec::new();
                for (i, w) in raw.iter().enumerate() {
                    p.push(GroupedWord(*w));
                    if i % stall == 0 {
                        p.drain(&mut out);
                    }
                }
                p.drain(&mut out);
                (out, p.stats())
            };
            prop_assert_eq!(run(), run());
        }
    }
}
