//! Object outlines as contour samples with outward normals.

use std::f64::consts::TAU;

/// A point on an object outline, relative to the object centre, with its
/// outward unit normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContourPoint {
    pub x: f64,
    pub y: f64,
    pub nx: f64,
    pub ny: f64,
}

#[derive(Clone, Copy, Debug)]
struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (u, v) = ((x - self.cx) / self.a, (y - self.cy) / self.b);
        u * u + v * v < 1.0
    }

    /// Boundary samples roughly `spacing` px apart.
    fn sample(&self, spacing: f64) -> Vec<ContourPoint> {
        let perimeter = std::f64::consts::PI * (3.0 * (self.a + self.b) - ((3.0 * self.a + self.b) * (self.a + 3.0 * self.b)).sqrt());
        let n = (perimeter / spacing).ceil().max(8.0) as usize;
        (0..n)
            .map(|i| {
                let th = TAU * i as f64 / n as f64;
                let (s, c) = th.sin_cos();
                let (nx, ny) = (c / self.a, s / self.b);
                let norm = nx.hypot(ny);
                ContourPoint { x: self.cx + self.a * c, y: self.cy + self.b * s, nx: nx / norm, ny: ny / norm }
            })
            .collect()
    }
}

/// Upright two-ellipse silhouette of total height `h` (head over torso,
/// overall aspect about 1:3), centred on the origin, y pointing down.
pub fn pedestrian_contour(h: f64) -> Vec<ContourPoint> {
    let (torso, head) = pedestrian_parts(h);
    // drop samples inside, or facing into, the other ellipse near the neck
    fn exposed(other: &Ellipse, p: &ContourPoint) -> bool {
        !other.contains(p.x, p.y) && !other.contains(p.x + p.nx, p.y + p.ny)
    }
    let mut pts: Vec<ContourPoint> = torso.sample(1.0).into_iter().filter(|p| exposed(&head, p)).collect();
    pts.extend(head.sample(1.0).into_iter().filter(|p| exposed(&torso, p)));
    pts
}

fn pedestrian_parts(h: f64) -> (Ellipse, Ellipse) {
    (Ellipse { cx: 0.0, cy: 0.125 * h, a: h / 6.0, b: 0.375 * h }, Ellipse { cx: 0.0, cy: -0.375 * h, a: 0.09 * h, b: 0.125 * h })
}

/// Silhouette area of [`pedestrian_contour`] (the two ellipses only touch).
pub fn pedestrian_area(h: f64) -> f64 {
    std::f64::consts::PI * (h / 6.0 * 0.375 * h + 0.09 * h * 0.125 * h)
}

/// Axis-aligned rectangle outline centred on the origin.
pub fn box_contour(w: f64, h: f64) -> Vec<ContourPoint> {
    let mut pts = Vec::new();
    let nw = w.ceil() as usize;
    let nh = h.ceil() as usize;
    for i in 0..nw {
        let x = -w / 2.0 + (i as f64 + 0.5) * w / nw as f64;
        pts.push(ContourPoint { x, y: -h / 2.0, nx: 0.0, ny: -1.0 });
        pts.push(ContourPoint { x, y: h / 2.0, nx: 0.0, ny: 1.0 });
    }
    for i in 0..nh {
        let y = -h / 2.0 + (i as f64 + 0.5) * h / nh as f64;
        pts.push(ContourPoint { x: -w / 2.0, y, nx: -1.0, ny: 0.0 });
        pts.push(ContourPoint { x: w / 2.0, y, nx: 1.0, ny: 0.0 });
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pedestrian_extent_and_aspect() {
        let h = 160.0;
        let pts = pedestrian_contour(h);
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in &pts {
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            y0 = y0.min(p.y);
            y1 = y1.max(p.y);
            assert!((p.nx.hypot(p.ny) - 1.0).abs() < 1e-9);
        }
        assert!((y1 - y0 - h).abs() < 1.0);
        assert!(((x1 - x0) / (y1 - y0) - 1.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn normals_point_outward() {
        let (torso, head) = pedestrian_parts(120.0);
        let inside = |x: f64, y: f64| torso.contains(x, y) || head.contains(x, y);
        for p in pedestrian_contour(120.0) {
            assert!(inside(p.x - 0.5 * p.nx, p.y - 0.5 * p.ny));
            assert!(!inside(p.x + 0.5 * p.nx, p.y + 0.5 * p.ny));
        }
        for p in box_contour(50.0, 30.0) {
            let (x, y) = (p.x - 0.5 * p.nx, p.y - 0.5 * p.ny);
            assert!(x.abs() < 25.0 && y.abs() < 15.0);
        }
    }

    #[test]
    fn box_samples_one_px_apart() {
        assert_eq!(box_contour(40.0, 20.0).len(), 2 * (40 + 20));
    }
}
