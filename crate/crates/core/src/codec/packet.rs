use super::{fletcher32, huffman_encode, CodecError, HuffmanDictionary};
use crate::filter::{FilteredFrame, FrameLayout};

pub const PREAMBLE: u32 = 0x55AA_C0DE;
const PREAMBLE_BYTES: [u8; 4] = PREAMBLE.to_be_bytes();

/// Serializes one frame: preamble, padded Huffman payload, Fletcher-32 of the
/// padded payload bytes.
pub fn frame_packet(frame: &FilteredFrame, dict: &HuffmanDictionary) -> Vec<u8> {
    let payload = huffman_encode(frame, dict).bytes;
    let mut out = Vec::with_capacity(payload.len() + 8);
    out.extend_from_slice(&PREAMBLE_BYTES);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&fletcher32(&payload).to_be_bytes());
    out
}

/// Packet length in bits for a payload of `payload_bits` coded bits.
pub fn packet_bits(payload_bits: usize) -> usize {
    64 + 8 * payload_bits.div_ceil(8)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DeframerStats {
    pub packets_ok: u64,
    pub checksum_failures: u64,
    /// Preamble locks that followed at least one discarded byte.
    pub resyncs: u64,
    pub bytes_discarded: u64,
    /// Locked candidates cut off by the end of the stream.
    pub truncated: u64,
}

/// Byte-stream deframer with preamble resynchronization.
///
/// Feed arbitrary chunks; complete packets are decoded as soon as their
/// checksum arrives. A checksum mismatch drops the candidate packet and the
/// scan resumes one byte past its preamble.
#[derive(Clone, Debug)]
pub struct Deframer {
    dict: HuffmanDictionary,
    layout: FrameLayout,
    buf: Vec<u8>,
    start: usize,
    skipped_since_lock: bool,
    stats: DeframerStats,
}

enum Attempt {
    Frame(FilteredFrame, usize),
    BadChecksum,
    NeedMore,
}

impl Deframer {
    pub fn new(dict: HuffmanDictionary, layout: FrameLayout) -> Self {
        Deframer { dict, layout, buf: Vec::new(), start: 0, skipped_since_lock: false, stats: DeframerStats::default() }
    }

    pub fn stats(&self) -> DeframerStats {
        self.stats
    }

    pub fn feed(&mut self, data: &[u8], out: &mut Vec<FilteredFrame>) {
        self.buf.extend_from_slice(data);
        self.scan(out, false);
        if self.start > 4096 && self.start * 2 > self.buf.len() {
            self.buf.drain(..self.start);
            self.start = 0;
        }
    }

    /// End of stream: whatever cannot form a packet is discarded.
    pub fn finish(&mut self, out: &mut Vec<FilteredFrame>) {
        self.scan(out, true);
        self.stats.bytes_discarded += (self.buf.len() - self.start) as u64;
        self.buf.clear();
        self.start = 0;
    }

    fn discard(&mut self, n: usize) {
        self.start += n;
        self.stats.bytes_discarded += n as u64;
        self.skipped_since_lock = true;
    }

    fn scan(&mut self, out: &mut Vec<FilteredFrame>, eof: bool) {
        loop {
            let avail = &self.buf[self.start..];
            match avail.windows(4).position(|w| w == PREAMBLE_BYTES) {
                Some(0) => {}
                Some(p) => {
                    self.discard(p);
                    continue;
                }
                None => {
                    // keep a possible preamble prefix for the next chunk
                    let keep = if eof { 0 } else { avail.len().min(3) };
                    let drop = avail.len() - keep;
                    if drop > 0 {
                        self.discard(drop);
                    }
                    return;
                }
            }
            match self.attempt() {
                Attempt::Frame(frame, len) => {
                    if self.skipped_since_lock {
                        self.stats.resyncs += 1;
                    }
                    self.skipped_since_lock = false;
                    self.stats.packets_ok += 1;
                    self.start += len;
                    out.push(frame);
                }
                Attempt::BadChecksum => {
                    self.stats.checksum_failures += 1;
                    self.discard(1);
                }
                Attempt::NeedMore if eof => {
                    self.stats.truncated += 1;
                    self.discard(1);
                }
                Attempt::NeedMore => return,
            }
        }
    }

    /// Tries to decode a packet whose preamble sits at `self.start`.
    fn attempt(&self) -> Attempt {
        let body = &self.buf[self.start + 4..];
        let symbols = self.layout.symbol_count();
        let (decoded, used_bits) = match self.dict.decode_symbols(body, body.len() * 8, symbols) {
            Ok(r) => r,
            Err(CodecError::Truncated { .. }) => return Attempt::NeedMore,
            Err(_) => unreachable!("decode only fails on truncation"),
        };
        let payload_len = used_bits.div_ceil(8);
        if body.len() < payload_len + 4 {
            return Attempt::NeedMore;
        }
        let payload = &body[..payload_len];
        let stored = u32::from_be_bytes(body[payload_len..payload_len + 4].try_into().unwrap());
        if stored != fletcher32(payload) {
            return Attempt::BadChecksum;
        }
        let frame = FilteredFrame::from_bytes(self.layout, &decoded).expect("symbol count matches layout");
        Attempt::Frame(frame, 4 + payload_len + 4)
    }
}

/// Deframes a complete byte stream.
pub fn deframe_stream(bytes: &[u8], dict: &HuffmanDictionary, layout: FrameLayout) -> (Vec<FilteredFrame>, DeframerStats) {
    let mut d = Deframer::new(dict.clone(), layout);
    let mut out = Vec::new();
    d.feed(bytes, &mut out);
    d.finish(&mut out);
    (out, d.stats())
}
