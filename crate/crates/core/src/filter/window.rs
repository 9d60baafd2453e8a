use crate::bitplane::BitPlane;
use crate::events::{Event, Polarity, SensorGeometry};

/// Per-window pixel activity, two bits per pixel (bit 0 = NEG seen,
/// bit 1 = POS seen), stored as one plane per polarity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowBitmap {
    geometry: SensorGeometry,
    pos: BitPlane,
    neg: BitPlane,
    pub window_index: u64,
}

impl WindowBitmap {
    pub fn new(geometry: SensorGeometry) -> Self {
        let (w, h) = (geometry.width as usize, geometry.height as usize);
        WindowBitmap { geometry, pos: BitPlane::new(w, h), neg: BitPlane::new(w, h), window_index: 0 }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    #[inline]
    pub fn mark(&mut self, x: u16, y: u16, p: Polarity) {
        match p {
            Polarity::Pos => self.pos.set(x as usize, y as usize),
            Polarity::Neg => self.neg.set(x as usize, y as usize),
        }
    }

    /// Two-bit cell value: bit 0 = NEG, bit 1 = POS.
    pub fn cell(&self, x: usize, y: usize) -> u8 {
        (self.pos.get(x, y) as u8) << 1 | self.neg.get(x, y) as u8
    }

    pub fn positive(&self) -> &BitPlane {
        &self.pos
    }

    pub fn negative(&self) -> &BitPlane {
        &self.neg
    }

    /// Pixels with at least one event of either polarity.
    pub fn active(&self) -> BitPlane {
        let mut a = self.pos.clone();
        a.or_assign(&self.neg);
        a
    }

    pub fn is_clear(&self) -> bool {
        !self.pos.any() && !self.neg.any()
    }

    pub fn clear(&mut self) {
        self.pos.clear();
        self.neg.clear();
    }
}

/// Horizontal and vertical coincidence planes of one τ window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChannelFrames {
    pub h: BitPlane,
    pub v: BitPlane,
    pub window_index: u64,
}

impl ChannelFrames {
    /// Both channels carry raw pixel activity (coincidence stage disabled).
    pub fn passthrough(w: &WindowBitmap) -> Self {
        let a = w.active();
        ChannelFrames { h: a.clone(), v: a, window_index: w.window_index }
    }

    pub fn any(&self) -> bool {
        self.h.any() || self.v.any()
    }
}

/// Rasterizes the events of one window. Duplicates are idempotent.
pub fn accumulate_window(events: &[Event], geometry: SensorGeometry) -> WindowBitmap {
    let mut w = WindowBitmap::new(geometry);
    for e in events {
        w.mark(e.x, e.y, e.p);
    }
    w
}

/// `h(x, y)` is set iff `(x, y)` and `(x + 1, y)` share an active polarity;
/// `v(x, y)` likewise for `(x, y)` and `(x, y + 1)`. The last column of `h`
/// and the last row of `v` are always clear.
pub fn coincidence_detect(w: &WindowBitmap) -> ChannelFrames {
    let (width, height) = (w.geometry.width as usize, w.geometry.height as usize);
    let mut h = BitPlane::new(width, height);
    let mut v = BitPlane::new(width, height);
    let stride = h.stride();
    for y in 0..height {
        let (p, n) = (w.pos.row(y), w.neg.row(y));
        let out = h.row_mut(y);
        for i in 0..stride {
            // Bit x of the shifted word is bit x + 1 of the row. Padding past
            // `width` is zero, so the last column never pairs.
            let p_next = (p[i] >> 1) | p.get(i + 1).map_or(0, |&nx| nx << 63);
            let n_next = (n[i] >> 1) | n.get(i + 1).map_or(0, |&nx| nx << 63);
            out[i] = (p[i] & p_next) | (n[i] & n_next);
        }
    }
    for y in 0..height.saturating_sub(1) {
        let (p0, p1) = (w.pos.row(y), w.pos.row(y + 1));
        let (n0, n1) = (w.neg.row(y), w.neg.row(y + 1));
        let out = v.row_mut(y);
        for i in 0..stride {
            out[i] = (p0[i] & p1[i]) | (n0[i] & n1[i]);
        }
    }
    ChannelFrames { h, v, window_index: w.window_index }
}
