//! Canonical Huffman coding over byte symbols.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::bits::{BitReader, BitWriter, EncodedBits};
use super::CodecError;
use crate::filter::{FilteredFrame, FrameLayout};

pub const MAX_CODE_LEN: u8 = 32;
pub const HUF_MAGIC: &[u8; 4] = b"HUF1";
const SYMBOLS: usize = 256;

/// A complete canonical prefix code over all 256 byte values.
///
/// Only the code lengths are stored on disk; codes are assigned in
/// (length, symbol) order.
#[derive(Clone, PartialEq, Eq)]
pub struct HuffmanDictionary {
    lengths: [u8; SYMBOLS],
    codes: [u32; SYMBOLS],
    first_code: [u32; MAX_CODE_LEN as usize + 1],
    first_index: [u16; MAX_CODE_LEN as usize + 1],
    count: [u16; MAX_CODE_LEN as usize + 1],
    sorted: [u8; SYMBOLS],
}

impl std::fmt::Debug for HuffmanDictionary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let min = self.lengths.iter().min().unwrap();
        let max = self.lengths.iter().max().unwrap();
        write!(f, "HuffmanDictionary {{ lengths: {min}..={max} }}")
    }
}

/// Huffman code lengths for a histogram with every count ≥ 1 (any alphabet
/// size ≥ 2).
///
/// Ties are broken by the smallest symbol in each subtree, so equal
/// histograms always give equal lengths.
fn huffman_lengths(hist: &[u64]) -> Vec<u8> {
    let n = hist.len();
    debug_assert!(n >= 2);
    // node ids: 0..n leaves, then internal nodes in creation order
    let mut parent = vec![usize::MAX; 2 * n - 1];
    let mut heap: BinaryHeap<Reverse<(u64, u16, usize)>> = hist.iter().enumerate().map(|(s, &w)| Reverse((w, s as u16, s))).collect();
    let mut next = n;
    while heap.len() > 1 {
        let Reverse((wa, ka, a)) = heap.pop().unwrap();
        let Reverse((wb, kb, b)) = heap.pop().unwrap();
        parent[a] = next;
        parent[b] = next;
        heap.push(Reverse((wa + wb, ka.min(kb), next)));
        next += 1;
    }
    let root = next - 1;
    let mut depth = vec![0u8; 2 * n - 1];
    // parents are created after their children, so walk ids down from the root
    for id in (0..root).rev() {
        depth[id] = depth[parent[id]].saturating_add(1);
    }
    depth.truncate(n);
    depth
}

impl HuffmanDictionary {
    /// Builds the code from raw counts. Zero counts are allowed: add-one
    /// smoothing is applied so every byte value gets a code.
    pub fn from_histogram(hist: &[u64; SYMBOLS]) -> Self {
        let mut smoothed = [0u64; SYMBOLS];
        for (s, c) in smoothed.iter_mut().zip(hist) {
            *s = c.saturating_add(1);
        }
        loop {
            let lengths = huffman_lengths(&smoothed);
            if lengths.iter().all(|&l| l <= MAX_CODE_LEN) {
                let lengths: [u8; SYMBOLS] = lengths.try_into().unwrap();
                return Self::from_lengths(&lengths).expect("Huffman lengths are complete");
            }
            // Flatten the distribution until the deepest leaf fits 32 bits.
            for c in smoothed.iter_mut() {
                *c = (*c).div_ceil(2).max(1);
            }
        }
    }

    /// All codes 8 bits long: the identity coding.
    pub fn uniform() -> Self {
        Self::from_lengths(&[8; SYMBOLS]).unwrap()
    }

    /// Rebuilds the canonical code from its lengths. The lengths must be in
    /// `1..=32` and satisfy Kraft's equality.
    pub fn from_lengths(lengths: &[u8; SYMBOLS]) -> Result<Self, CodecError> {
        if let Some(s) = lengths.iter().position(|&l| l == 0 || l > MAX_CODE_LEN) {
            return Err(CodecError::InvalidDictionary(format!("symbol {s} has length {}", lengths[s])));
        }
        let kraft: u64 = lengths.iter().map(|&l| 1u64 << (MAX_CODE_LEN - l)).sum();
        if kraft != 1u64 << MAX_CODE_LEN {
            return Err(CodecError::InvalidDictionary(format!("Kraft sum {kraft}/2^32 is not 1, the code is not complete")));
        }
        let mut order: Vec<u8> = (0..=255u8).collect();
        order.sort_by_key(|&s| (lengths[s as usize], s));

        let mut dict = HuffmanDictionary {
            lengths: *lengths,
            codes: [0; SYMBOLS],
            first_code: [0; MAX_CODE_LEN as usize + 1],
            first_index: [0; MAX_CODE_LEN as usize + 1],
            count: [0; MAX_CODE_LEN as usize + 1],
            sorted: [0; SYMBOLS],
        };
        let mut code: u64 = 0;
        let mut prev_len = lengths[order[0] as usize];
        for (i, &s) in order.iter().enumerate() {
            let len = lengths[s as usize];
            code <<= len - prev_len;
            prev_len = len;
            if dict.count[len as usize] == 0 {
                dict.first_code[len as usize] = code as u32;
                dict.first_index[len as usize] = i as u16;
            }
            dict.count[len as usize] += 1;
            dict.codes[s as usize] = code as u32;
            dict.sorted[i] = s;
            code += 1;
        }
        Ok(dict)
    }

    pub fn lengths(&self) -> &[u8; SYMBOLS] {
        &self.lengths
    }

    /// `(code, length)` of `symbol`.
    #[inline]
    pub fn code(&self, symbol: u8) -> (u32, u8) {
        (self.codes[symbol as usize], self.lengths[symbol as usize])
    }

    /// Kraft sum scaled by 2^32; equals 2^32 for a complete code.
    pub fn kraft_sum_scaled(&self) -> u64 {
        self.lengths.iter().map(|&l| 1u64 << (MAX_CODE_LEN - l)).sum()
    }

    pub fn encode_bytes(&self, symbols: &[u8]) -> EncodedBits {
        let bits: usize = symbols.iter().map(|&s| self.lengths[s as usize] as usize).sum();
        let mut w = BitWriter::with_capacity(bits);
        for &s in symbols {
            let (c, l) = self.code(s);
            w.push(c, l);
        }
        w.finish()
    }

    /// Encoded length of `symbols` in bits.
    pub fn encoded_len(&self, symbols: &[u8]) -> usize {
        symbols.iter().map(|&s| self.lengths[s as usize] as usize).sum()
    }

    /// Decodes exactly `count` symbols from the first `len` bits of `bytes`.
    /// Returns the symbols and the number of bits consumed.
    pub fn decode_symbols(&self, bytes: &[u8], len: usize, count: usize) -> Result<(Vec<u8>, usize), CodecError> {
        let mut r = BitReader::new(bytes, len);
        let mut out = Vec::with_capacity(count);
        'symbols: while out.len() < count {
            let mut code: u32 = 0;
            for l in 1..=MAX_CODE_LEN as usize {
                let Some(bit) = r.read_bit() else {
                    return Err(CodecError::Truncated { decoded: out.len(), expected: count });
                };
                code = code << 1 | bit;
                let offset = code.wrapping_sub(self.first_code[l]);
                if offset < self.count[l] as u32 {
                    out.push(self.sorted[self.first_index[l] as usize + offset as usize]);
                    continue 'symbols;
                }
            }
            unreachable!("complete code always terminates within 32 bits");
        }
        Ok((out, r.position()))
    }

    /// `"HUF1"` followed by the 256 code lengths.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + SYMBOLS);
        out.extend_from_slice(HUF_MAGIC);
        out.extend_from_slice(&self.lengths);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() != 4 + SYMBOLS || &bytes[..4] != HUF_MAGIC {
            return Err(CodecError::InvalidDictionary("expected \"HUF1\" followed by 256 length bytes".into()));
        }
        let mut lengths = [0u8; SYMBOLS];
        lengths.copy_from_slice(&bytes[4..]);
        Self::from_lengths(&lengths)
    }
}

/// Byte histogram over the serialized payloads of `frames`.
pub fn byte_histogram(frames: &[FilteredFrame]) -> [u64; SYMBOLS] {
    let mut hist = [0u64; SYMBOLS];
    for f in frames {
        for b in f.to_bytes() {
            hist[b as usize] += 1;
        }
    }
    hist
}

/// Dictionary trained on a frame corpus (add-one smoothed).
pub fn build_dictionary(corpus: &[FilteredFrame]) -> Result<HuffmanDictionary, CodecError> {
    if corpus.is_empty() {
        return Err(CodecError::EmptyCorpus);
    }
    Ok(HuffmanDictionary::from_histogram(&byte_histogram(corpus)))
}

pub fn huffman_encode(frame: &FilteredFrame, dict: &HuffmanDictionary) -> EncodedBits {
    dict.encode_bytes(&frame.to_bytes())
}

pub fn huffman_decode(bits: &EncodedBits, layout: FrameLayout, dict: &HuffmanDictionary) -> Result<FilteredFrame, CodecError> {
    let (symbols, _) = dict.decode_symbols(&bits.bytes, bits.len, layout.symbol_count())?;
    Ok(FilteredFrame::from_bytes(layout, &symbols).expect("symbol count matches layout"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitplane::BitPlane;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const L: FrameLayout = FrameLayout::new(60, 40);

    fn random_frame(rng: &mut impl Rng, density: f64) -> FilteredFrame {
        FilteredFrame {
            h: BitPlane::from_fn(60, 40, |_, _| rng.random_bool(density)),
            v: BitPlane::from_fn(60, 40, |_, _| rng.random_bool(density)),
            emit_time_us: 0,
            windows_aggregated: 0,
        }
    }

    fn assert_prefix_free(d: &HuffmanDictionary) {
        for a in 0..256usize {
            for b in 0..256usize {
                if a == b {
                    continue;
                }
                let (ca, la) = d.code(a as u8);
                let (cb, lb) = d.code(b as u8);
                if la <= lb {
                    assert_ne!(cb >> (lb - la), ca, "code {a} is a prefix of {b}");
                }
            }
        }
    }

    #[test]
    fn uniform_corpus_gives_8_bit_codes() {
        // 8 frames covering every byte value 18.75 times each is not integral;
        // use frames whose 600 bytes cycle 0..=255 and balance by rotation.
        let mut frames = Vec::new();
        for r in 0..32usize {
            let bytes: Vec<u8> = (0..600).map(|i| ((i + r * 600) % 256) as u8).collect();
            frames.push(FilteredFrame::from_bytes(L, &bytes).unwrap());
        }
        let hist = byte_histogram(&frames);
        assert!(hist.iter().all(|&c| c == hist[0]), "engineered histogram is uniform");
        let d = build_dictionary(&frames).unwrap();
        assert!(d.lengths().iter().all(|&l| l == 8));
        assert_eq!(huffman_encode(&frames[3], &d).len, 4800);
    }

    #[test]
    fn zero_corpus_gives_one_bit_zero_code() {
        let frames = vec![FilteredFrame::empty(L); 10];
        let d = build_dictionary(&frames).unwrap();
        assert_eq!(d.code(0).1, 1);
        assert_eq!(d.kraft_sum_scaled(), 1 << 32);
        let enc = huffman_encode(&frames[0], &d);
        assert_eq!(enc.len, 600);
        assert!(huffman_decode(&enc, L, &d).unwrap().same_payload(&frames[0]));
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(matches!(build_dictionary(&[]), Err(CodecError::EmptyCorpus)));
    }

    #[test]
    fn truncation_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let corpus: Vec<_> = (0..20).map(|_| random_frame(&mut rng, 0.1)).collect();
        let d = build_dictionary(&corpus).unwrap();
        let enc = huffman_encode(&corpus[0], &d);
        assert!(matches!(huffman_decode(&enc.truncated(1), L, &d), Err(CodecError::Truncated { .. })));
    }

    #[test]
    fn uniform_dict_reads_bytes_directly() {
        let d = HuffmanDictionary::uniform();
        let bytes: Vec<u8> = (0..600).map(|i| (i * 7 % 256) as u8).collect();
        let (sym, used) = d.decode_symbols(&bytes, 4800, 600).unwrap();
        assert_eq!(sym, bytes);
        assert_eq!(used, 4800);
    }

    #[test]
    fn prefix_free_and_complete_on_skewed_corpus() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let corpus: Vec<_> = (0..50).map(|_| random_frame(&mut rng, 0.03)).collect();
        let d = build_dictionary(&corpus).unwrap();
        assert_eq!(d.kraft_sum_scaled(), 1 << 32);
        assert_prefix_free(&d);
    }

    #[test]
    fn length_limit_enforced() {
        // Fibonacci-like counts force a degenerate tree deeper than 32.
        let mut hist = [0u64; 256];
        let (mut a, mut b) = (1u64, 1u64);
        for h in hist.iter_mut().take(60) {
            *h = a;
            let c = a + b;
            a = b;
            b = c;
        }
        let d = HuffmanDictionary::from_histogram(&hist);
        assert!(d.lengths().iter().all(|&l| (1..=32).contains(&l)));
        assert_eq!(d.kraft_sum_scaled(), 1 << 32);
        assert_prefix_free(&d);
    }

    #[test]
    fn serialization_and_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let corpus: Vec<_> = (0..10).map(|_| random_frame(&mut rng, 0.2)).collect();
        let d = build_dictionary(&corpus).unwrap();
        let again = HuffmanDictionary::from_bytes(&d.to_bytes()).unwrap();
        assert_eq!(again, d);
        assert_eq!(build_dictionary(&corpus).unwrap().to_bytes(), d.to_bytes());
        let mut bad = d.to_bytes();
        bad[4] = bad[4].saturating_add(1);
        assert!(HuffmanDictionary::from_bytes(&bad).is_err());
        assert!(HuffmanDictionary::from_bytes(b"HUF1").is_err());
    }

    /// Minimum total cost over all binary code trees for a small alphabet,
    /// by exhaustive search over complete length assignments.
    fn optimal_cost(weights: &[u64]) -> u64 {
        fn rec(weights: &[u64], idx: usize, lengths: &mut Vec<u32>, best: &mut u64) {
            if idx == weights.len() {
                let kraft: f64 = lengths.iter().map(|&l| 0.5f64.powi(l as i32)).sum();
                if (kraft - 1.0).abs() < 1e-12 {
                    let cost = weights.iter().zip(lengths.iter()).map(|(w, l)| w * *l as u64).sum();
                    *best = (*best).min(cost);
                }
                return;
            }
            for l in 1..weights.len() as u32 {
                let partial: f64 = lengths.iter().map(|&x| 0.5f64.powi(x as i32)).sum::<f64>() + 0.5f64.powi(l as i32);
                if partial > 1.0 + 1e-12 {
                    continue;
                }
                lengths.push(l);
                rec(weights, idx + 1, lengths, best);
                lengths.pop();
            }
        }
        let mut best = u64::MAX;
        rec(weights, 0, &mut Vec::new(), &mut best);
        best
    }

    proptest! {
        #[test]
        fn round_trip_random_frames(seed in any::<u64>(), density in 0.0f64..0.6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let corpus: Vec<_> = (0..4).map(|_| random_frame(&mut rng, density)).collect();
            let d = build_dictionary(&corpus).unwrap();
            let f = random_frame(&mut rng, density);
            let enc = huffman_encode(&f, &d);
            prop_assert!(enc.len <= 600 * 32);
            prop_assert!(huffman_decode(&enc, L, &d).unwrap().same_payload(&f));
        }

        #[test]
        fn optimal_on_small_alphabets(weights in prop::collection::vec(1u64..50, 2..=7)) {
            let lengths = huffman_lengths(&weights);
            let cost: u64 = weights.iter().zip(&lengths).map(|(w, &l)| w * l as u64).sum();
            prop_assert_eq!(cost, optimal_cost(&weights));
        }
    }
}
