use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{BnnError, DetectorModel, CHANNELS};
use crate::filter::FrameLayout;

pub const BNN_MAGIC: &[u8; 4] = b"BNN1";
const BNN_VERSION: u8 = 1;

/// Model file (little-endian):
///
/// ```text
/// "BNN1" | version u8 | n_filters u32 | kernel u32 | channels u32 | width u32 | height u32
/// per filter: w_plus bytes | w_minus bytes      (ceil(2k²/8) each, bit i at byte i/8, bit i%8)
/// alpha f64 × n | readout f64 × n | bias f64 | threshold f64
/// ```
pub fn write_model<W: Write>(mut out: W, model: &DetectorModel) -> Result<(), BnnError> {
    out.write_all(BNN_MAGIC)?;
    out.write_all(&[BNN_VERSION])?;
    let input = model.input();
    for v in [model.n_filters(), model.kernel(), CHANNELS, input.width, input.height] {
        out.write_all(&(v as u32).to_le_bytes())?;
    }
    let bits = model.filter_bits();
    let nbytes = bits.div_ceil(8);
    for f in 0..model.n_filters() {
        for mask in [model.w_plus(f), model.w_minus(f)] {
            let bytes: Vec<u8> = (0..nbytes).map(|b| (mask[b / 8] >> (8 * (b % 8))) as u8).collect();
            out.write_all(&bytes)?;
        }
    }
    for v in model.alpha.iter().chain(&model.readout).chain([&model.bias, &model.threshold]) {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_model(bytes: &[u8]) -> Result<DetectorModel, BnnError> {
    let bad = |m: String| BnnError::InvalidModel(m);
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8], BnnError> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| bad(format!("truncated at byte {pos}")))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != BNN_MAGIC {
        return Err(bad("bad magic".into()));
    }
    if take(1)?[0] != BNN_VERSION {
        return Err(bad("unsupported version".into()));
    }
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    }
    let [n, k, channels, width, height] = dims;
    if channels != CHANNELS || n == 0 || k == 0 || k > 64 || n > 1 << 20 {
        return Err(bad(format!("unsupported dimensions n={n} k={k} channels={channels}")));
    }
    let bits = CHANNELS * k * k;
    let nbytes = bits.div_ceil(8);
    let bit = |b: &[u8], i: usize| (b[i / 8] >> (i % 8)) & 1 == 1;
    let mut signs = Vec::with_capacity(n);
    for f in 0..n {
        let plus = take(nbytes)?.to_vec();
        let minus = take(nbytes)?;
        let mut s = Vec::with_capacity(bits);
        for i in 0..bits {
            match (bit(&plus, i), bit(minus, i)) {
                (true, false) => s.push(true),
                (false, true) => s.push(false),
                (true, true) => return Err(bad(format!("filter {f}: w_plus and w_minus overlap at {i}"))),
                (false, false) => return Err(bad(format!("filter {f}: weight {i} is neither +1 nor -1"))),
            }
        }
        if (bits..nbytes * 8).any(|i| bit(&plus, i) || bit(minus, i)) {
            return Err(bad(format!("filter {f}: padding bits set")));
        }
        signs.push(s);
    }
    let mut reals = |count: usize| -> Result<Vec<f64>, BnnError> { (0..count).map(|_| Ok(f64::from_le_bytes(take(8)?.try_into().unwrap()))).collect() };
    let alpha = reals(n)?;
    let readout = reals(n)?;
    let tail = reals(2)?;
    if pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - pos)));
    }
    DetectorModel::from_signs(FrameLayout::new(width, height), k, &signs, alpha, readout, tail[0], tail[1])
}

pub fn write_model_file(path: impl AsRef<Path>, model: &DetectorModel) -> Result<(), BnnError> {
    write_model(BufWriter::new(fs::File::create(path)?), model)
}

pub fn read_model_file(path: impl AsRef<Path>) -> Result<DetectorModel, BnnError> {
    read_model(&fs::read(path)?)
}
