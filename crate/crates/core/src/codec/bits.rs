/// MSB-first bit accumulator.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BitWriter {
    bytes: Vec<u8>,
    len: usize,
}

/// A bit string: `len` meaningful bits, MSB-first, trailing bits of the last
/// byte zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedBits {
    pub bytes: Vec<u8>,
    pub len: usize,
}

impl EncodedBits {
    /// Drops the last `n` bits.
    pub fn truncated(&self, n: usize) -> EncodedBits {
        let len = self.len.saturating_sub(n);
        let mut bytes = self.bytes[..len.div_ceil(8)].to_vec();
        if !len.is_multiple_of(8) {
            let last = bytes.len() - 1;
            bytes[last] &= 0xFFu8 << (8 - len % 8);
        }
        EncodedBits { bytes, len }
    }
}

impl BitWriter {
    pub fn with_capacity(bits: usize) -> Self {
        BitWriter { bytes: Vec::with_capacity(bits.div_ceil(8)), len: 0 }
    }

    /// Appends the low `n` bits of `value`, most significant first.
    #[inline]
    pub fn push(&mut self, value: u32, n: u8) {
        for i in (0..n).rev() {
            let bit = (value >> i) & 1;
            if self.len.is_multiple_of(8) {
                self.bytes.push(0);
            }
            if bit == 1 {
                let last = self.bytes.len() - 1;
                self.bytes[last] |= 0x80 >> (self.len % 8);
            }
            self.len += 1;
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn finish(self) -> EncodedBits {
        EncodedBits { bytes: self.bytes, len: self.len }
    }
}

/// MSB-first reader over the first `len` bits of a byte slice.
#[derive(Clone, Debug)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    len: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8], len: usize) -> Self {
        debug_assert!(len <= bytes.len() * 8);
        BitReader { bytes, pos: 0, len }
    }

    #[inline]
    pub fn read_bit(&mut self) -> Option<u32> {
        if self.pos >= self.len {
            return None;
        }
        let b = (self.bytes[self.pos >> 3] >> (7 - (self.pos & 7))) & 1;
        self.pos += 1;
        Some(b as u32)
    }

    pub fn position(&self) -> usize {
        self.pos
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn msb_first() {
        let mut w = BitWriter::default();
        w.push(0b1, 1);
        w.push(0b011, 3);
        w.push(0xFF, 8);
        let e = w.finish();
        assert_eq!(e.len, 12);
        assert_eq!(e.bytes, vec![0b1011_1111, 0b1111_0000]);
        let mut r = BitReader::new(&e.bytes, e.len);
        let bits: Vec<u32> = std::iter::from_fn(|| r.read_bit()).collect();
        assert_eq!(bits, vec![1, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1]);
        assert_eq!(e.truncated(5).bytes, vec![0b1011_1110]);
    }
}
