/// Fletcher-32 over little-endian 16-bit words, both sums modulo 65535,
/// an odd trailing byte zero-padded. Result is `sum2 << 16 | sum1`.
pub fn fletcher32(data: &[u8]) -> u32 {
    let mut sum1: u32 = 0;
    let mut sum2: u32 = 0;
    // 359 words keep both accumulators below 2^32 before reduction.
    for block in data.chunks(2 * 359) {
        for pair in block.chunks(2) {
            let word = pair[0] as u32 | (*pair.get(1).unwrap_or(&0) as u32) << 8;
            sum1 += word;
            sum2 += sum1;
        }
        sum1 %= 65535;
        sum2 %= 65535;
    }
    sum2 << 16 | sum1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_vectors() {
        assert_eq!(fletcher32(b""), 0);
        assert_eq!(fletcher32(b"abcde"), 0xF04F_C729);
        assert_eq!(fletcher32(b"abcdef"), 0x5650_2D2A);
        assert_eq!(fletcher32(b"abcdefgh"), 0xEBE1_9591);
    }

    #[test]
    fn long_input_reduction() {
        let data = vec![0xFFu8; 10_000];
        let (mut s1, mut s2) = (0u64, 0u64);
        for _ in 0..5000 {
            s1 = (s1 + 0xFFFF) % 65535;
            s2 = (s2 + s1) % 65535;
        }
        assert_eq!(fletcher32(&data), (s2 << 16 | s1) as u32);
    }
}
