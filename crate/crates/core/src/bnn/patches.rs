use crate::filter::FilteredFrame;

/// Every `k × k × 2` input patch of a frame, bit-packed in filter index order
/// (`channel · k² + row · k + column`), one patch per valid offset in
/// row-major output order.
#[derive(Clone, Debug)]
pub struct Patches {
    width: usize,
    height: usize,
    words: usize,
    data: Vec<u64>,
}

#[inline]
fn put_bits(words: &mut [u64], pos: usize, value: u64, len: usize) {
    let (wi, off) = (pos / 64, pos % 64);
    words[wi] |= value << off;
    if off + len > 64 {
        words[wi + 1] |= value >> (64 - off);
    }
}

impl Patches {
    /// `frame` must be at least `k` wide and tall.
    pub fn extract(frame: &FilteredFrame, k: usize) -> Self {
        let (fw, fh) = (frame.h.width(), frame.h.height());
        assert!((1..=64).contains(&k) && fw >= k && fh >= k, "frame smaller than kernel");
        let width = fw - k + 1;
        let height = fh - k + 1;
        let words = (2 * k * k).div_ceil(64);
        // windows[c][y][ox]: the k bits of row y starting at column ox
        let windows: Vec<Vec<u64>> =
            [&frame.h, &frame.v].iter().flat_map(|plane| (0..fh).map(move |y| (0..width).map(|ox| plane.row_bits(y, ox, k)).collect())).collect();
        let mut data = vec![0u64; width * height * words];
        for oy in 0..height {
            for ox in 0..width {
                let patch = &mut data[(oy * width + ox) * words..][..words];
                for c in 0..2 {
                    for r in 0..k {
                        let bits = windows[c * fh + oy + r][ox];
                        if bits != 0 {
                            put_bits(patch, c * k * k + r * k, bits, k);
                        }
                    }
                }
            }
        }
        Patches { width, height, words, data }
    }

    /// Output map width (`W − k + 1`).
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn patch(&self, offset: usize) -> &[u64] {
        &self.data[offset * self.words..(offset + 1) * self.words]
    }

    /// Bit `i` of the patch at `offset`.
    pub fn bit(&self, offset: usize, i: usize) -> bool {
        (self.patch(offset)[i / 64] >> (i % 64)) & 1 == 1
    }
}
