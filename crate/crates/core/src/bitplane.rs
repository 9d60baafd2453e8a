//! Dense row-major bit-planes.
//!
//! Bit `x` of row `y` lives in word `y * stride + x / 64` at bit position
//! `x % 64`. Bits past `width` in the last word of a row are always zero;
//! the shift-based neighbour tests in the filter rely on that.

/// A `width × height` binary image packed into `u64` words.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitPlane {
    width: usize,
    height: usize,
    stride: usize,
    words: Vec<u64>,
}

impl std::fmt::Debug for BitPlane {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BitPlane").field("width", &self.width).field("height", &self.height).field("ones", &self.count_ones()).finish()
    }
}

impl BitPlane {
    pub fn new(width: usize, height: usize) -> Self {
        let stride = width.div_ceil(64);
        BitPlane { width, height, stride, words: vec![0; stride * height] }
    }

    /// Builds a plane from a row-major iterator of booleans.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut plane = BitPlane::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    plane.set(x, y);
                }
            }
        }
        plane
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    /// Words per row.
    #[inline]
    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Number of bits the plane represents (`width × height`).
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        debug_assert!(x < self.width && y < self.height);
        (self.words[y * self.stride + (x >> 6)] >> (x & 63)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize) {
        debug_assert!(x < self.width && y < self.height);
        self.words[y * self.stride + (x >> 6)] |= 1 << (x & 63);
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, value: bool) {
        let w = &mut self.words[y * self.stride + (x >> 6)];
        if value {
            *w |= 1 << (x & 63);
        } else {
            *w &= !(1 << (x & 63));
        }
    }

    pub fn clear(&mut self) {
        self.words.fill(0);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn any(&self) -> bool {
        self.words.iter().any(|&w| w != 0)
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[u64] {
        &self.words[y * self.stride..(y + 1) * self.stride]
    }

    #[inline]
    pub fn row_mut(&mut self, y: usize) -> &mut [u64] {
        &mut self.words[y * self.stride..(y + 1) * self.stride]
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// `self |= other`. Panics on a dimension mismatch.
    pub fn or_assign(&mut self, other: &BitPlane) {
        assert_eq!((self.width, self.height), (other.width, other.height));
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= *b;
        }
    }

    /// Coordinates of every set bit, row-major.
    pub fn ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.height).flat_map(move |y| {
            self.row(y).iter().enumerate().flat_map(move |(wi, &w)| {
                let mut bits = w;
                std::iter::from_fn(move || {
                    if bits == 0 {
                        return None;
                    }
                    let b = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    Some((wi * 64 + b, y))
                })
            })
        })
    }

    /// Reads `len ≤ 64` bits of row `y` starting at column `x0`; column `x0`
    /// lands in bit 0 of the result.
    #[inline]
    pub fn row_bits(&self, y: usize, x0: usize, len: usize) -> u64 {
        debug_assert!(len <= 64 && x0 + len <= self.width);
        let row = self.row(y);
        let wi = x0 >> 6;
        let off = x0 & 63;
        let mut v = row[wi] >> off;
        if off != 0 && wi + 1 < row.len() {
            v |= row[wi + 1] << (64 - off);
        }
        if len == 64 {
            v
        } else {
            v & ((1u64 << len) - 1)
        }
    }

    /// True if any bit of `row` in `[start, start + len)` is set.
    #[inline]
    pub(crate) fn any_in_range(row: &[u64], start: usize, len: usize) -> bool {
        let end = start + len;
        let mut pos = start;
        while pos < end {
            let wi = pos >> 6;
            let off = pos & 63;
            let take = (64 - off).min(end - pos);
            let mask = if take == 64 { u64::MAX } else { ((1u64 << take) - 1) << off };
            if row[wi] & mask != 0 {
                return true;
            }
            pos += take;
        }
        false
    }
}
