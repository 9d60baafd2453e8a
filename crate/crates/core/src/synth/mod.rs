//! Synthetic DVS clips: a moving pedestrian silhouette or box plus uniform
//! impulse noise.
//!
//! Time advances in steps of `τ/10`. In each step every outline sample (and a
//! second sample one pixel inside it) fires a Poisson number of events with
//! mean `edge_rate · |n̂ · v̂| · step`, where `n̂` is the outward normal and `v̂`
//! the direction of motion. Leading edges fire POS, trailing edges NEG. A
//! static object fires nothing. Noise is an independent Poisson process over
//! all pixels and both polarities.

mod shape;

pub use shape::{box_contour, pedestrian_area, pedestrian_contour, ContourPoint};

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use thiserror::Error;

use crate::events::{Event, Polarity, SensorGeometry};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error("label manifest: {0}")]
    Labels(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ObjectKind {
    /// Head-over-torso ellipse pair of the given height in pixels.
    Pedestrian {
        height: f64,
    },
    Box {
        width: f64,
        height: f64,
    },
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub geometry: SensorGeometry,
    pub duration_us: u64,
    /// Window length; events are generated in steps of `tau_us / 10`.
    pub tau_us: u64,
    pub object: ObjectKind,
    /// Object centre at t = 0, pixels.
    pub start: (f64, f64),
    /// Pixels per second.
    pub velocity: (f64, f64),
    /// Events per edge pixel per second for motion along the normal.
    pub edge_rate: f64,
    /// Noise events per pixel per second.
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            geometry: SensorGeometry::default(),
            duration_us: 300_000,
            tau_us: 3000,
            object: ObjectKind::None,
            start: (240.0, 160.0),
            velocity: (0.0, 0.0),
            edge_rate: 1000.0,
            noise_rate: 2.0,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn label(&self) -> bool {
        matches!(self.object, ObjectKind::Pedestrian { .. })
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if !(self.edge_rate >= 0.0 && self.edge_rate.is_finite() && self.noise_rate >= 0.0 && self.noise_rate.is_finite()) {
            return bad("rates must be finite and non-negative");
        }
        if self.tau_us < 10 || self.duration_us == 0 {
            return bad("tau must be at least 10 us and duration positive");
        }
        if self.duration_us > u32::MAX as u64 {
            return bad("duration exceeds the 32-bit timestamp range");
        }
        let finite = |v: (f64, f64)| v.0.is_finite() && v.1.is_finite();
        if !finite(self.start) || !finite(self.velocity) {
            return bad("non-finite trajectory");
        }
        match self.object {
            ObjectKind::Pedestrian { height } if !(height > 0.0 && height.is_finite()) => bad("pedestrian height"),
            ObjectKind::Box { width, height } if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) => bad("box size"),
            _ => Ok(()),
        }
    }

    fn contour(&self) -> Vec<ContourPoint> {
        match self.object {
            ObjectKind::Pedestrian { height } => pedestrian_contour(height),
            ObjectKind::Box { width, height } => box_contour(width, height),
            ObjectKind::None => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledClip {
    pub events: Vec<Event>,
    pub label: bool,
    pub spec: SceneSpec,
}

/// Inward offsets of the sampled edge band, pixels.
const BAND: [f64; 2] = [0.0, 1.0];

/// Generates one clip; deterministic in `spec` (including its seed).
pub fn gen_clip(spec: &SceneSpec) -> Result<LabeledClip, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut events = Vec::new();
    let (w, h) = (spec.geometry.width as f64, spec.geometry.height as f64);
    let step = (spec.tau_us / 10).max(1);
    let speed = spec.velocity.0.hypot(spec.velocity.1);

    if speed > 0.0 && spec.edge_rate > 0.0 {
        let dir = (spec.velocity.0 / speed, spec.velocity.1 / speed);
        // (point, polarity, distribution) for every sample that fires at all
        let sources: Vec<(ContourPoint, Polarity, Poisson<f64>)> = spec
            .contour()
            .into_iter()
            .filter_map(|p| {
                let along = p.nx * dir.0 + p.ny * dir.1;
                let lambda = spec.edge_rate * along.abs() * step as f64 * 1e-6;
                let pol = if along > 0.0 { Polarity::Pos } else { Polarity::Neg };
                Poisson::new(lambda).ok().map(|d| (p, pol, d))
            })
            .collect();
        let mut t0 = 0;
        while t0 < spec.duration_us {
            let mid = (t0 as f64 + step as f64 / 2.0) * 1e-6;
            let cx = spec.start.0 + spec.velocity.0 * mid;
            let cy = spec.start.1 + spec.velocity.1 * mid;
            let span = step.min(spec.duration_us - t0);
            for (p, pol, dist) in &sources {
                for d in BAND {
                    let n = dist.sample(&mut rng) as u64;
                    if n == 0 {
                        continue;
                    }
                    let x = (cx + p.x - d * p.nx).round();
                    let y = (cy + p.y - d * p.ny).round();
                    if !(0.0..w).contains(&x) || !(0.0..h).contains(&y) {
                        continue;
                    }
                    for _ in 0..n {
                        events.push(Event::new(t0 + rng.random_range(0..span), x as u16, y as u16, *pol));
                    }
                }
            }
            t0 += step;
        }
    }

    if spec.noise_rate > 0.0 {
        let total = spec.noise_rate * spec.geometry.pixels() as f64;
        let gap = Exp::new(total).expect("positive rate");
        let mut t = 0.0f64;
        loop {
            t += gap.sample(&mut rng) * 1e6;
            if t >= spec.duration_us as f64 {
                break;
            }
            let x = rng.random_range(0..spec.geometry.width);
            let y = rng.random_range(0..spec.geometry.height);
            let p = if rng.random_bool(0.5) { Polarity::Pos } else { Polarity::Neg };
            events.push(Event::new(t as u64, x, y, p));
        }
    }

    events.sort_unstable_by_key(|e| (e.t, e.y, e.x, e.p.code()));
    Ok(LabeledClip { events, label: spec.label(), spec: spec.clone() })
}

/// Distribution from which [`build_dataset`] draws scenes.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub geometry: SensorGeometry,
    pub duration_us: u64,
    pub tau_us: u64,
    pub edge_rate: f64,
    pub noise_rate: f64,
    /// Object height as a fraction of frame height.
    pub height_frac: (f64, f64),
    /// Speed range, px/s; the direction is mostly horizontal.
    pub speed: (f64, f64),
    /// Width / height range of negative boxes (area matches a pedestrian).
    pub box_aspect: (f64, f64),
    /// Fraction of negative clips with no object at all.
    pub empty_fraction: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        let scene = SceneSpec::default();
        DatasetSpec {
            geometry: scene.geometry,
            duration_us: scene.duration_us,
            tau_us: scene.tau_us,
            edge_rate: scene.edge_rate,
            noise_rate: scene.noise_rate,
            height_frac: (0.4, 0.6),
            speed: (40.0, 150.0),
            box_aspect: (0.25, 0.6),
            empty_fraction: 0.0,
        }
    }
}

impl DatasetSpec {
    /// Draws one scene of the requested class.
    pub fn scene(&self, pedestrian: bool, rng: &mut impl Rng) -> SceneSpec {
        let (w, h) = (self.geometry.width as f64, self.geometry.height as f64);
        let obj_h = h * rng.random_range(self.height_frac.0..=self.height_frac.1);
        let object = if pedestrian {
            ObjectKind::Pedestrian { height: obj_h }
        } else if rng.random_bool(self.empty_fraction.clamp(0.0, 1.0)) {
            ObjectKind::None
        } else {
            let aspect = rng.random_range(self.box_aspect.0..=self.box_aspect.1);
            let area = pedestrian_area(obj_h);
            ObjectKind::Box { width: (area * aspect).sqrt(), height: (area / aspect).sqrt() }
        };
        let half_h = match object {
            ObjectKind::Box { height, .. } => height / 2.0,
            _ => obj_h / 2.0,
        };
        let speed = rng.random_range(self.speed.0..=self.speed.1);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let vy = speed * rng.random_range(-0.2..=0.2);
        let margin = (h / 2.0 - half_h - 2.0).max(0.0);
        SceneSpec {
            geometry: self.geometry,
            duration_us: self.duration_us,
            tau_us: self.tau_us,
            object,
            start: (rng.random_range(0.25 * w..=0.75 * w), h / 2.0 + rng.random_range(-margin..=margin)),
            velocity: (sign * (speed * speed - vy * vy).sqrt(), vy),
            edge_rate: self.edge_rate,
            noise_rate: self.noise_rate,
            seed: rng.random(),
        }
    }
}

/// Scenes of a dataset with a seeded 80/20 split. Clips are generated on
/// demand with [`gen_clip`].
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub scenes: Vec<SceneSpec>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    /// True for indices in the training split.
    pub fn train_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        for &i in &self.train {
            mask[i] = true;
        }
        mask
    }
}

/// `n_pos` pedestrian and `n_neg` non-pedestrian scenes, shuffled by `seed`,
/// the first `round(0.8 n)` of the shuffle forming the training split.
pub fn build_dataset(n_pos: usize, n_neg: usize, spec: &DatasetSpec, seed: u64) -> Result<Dataset, SynthError> {
    if n_pos == 0 || n_neg == 0 {
        return Err(SynthError::InvalidSpec("need at least one clip of each class".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenes: Vec<SceneSpec> = (0..n_pos + n_neg).map(|i| spec.scene(i < n_pos, &mut rng)).collect();
    for s in &scenes {
        s.validate()?;
    }
    let n = scenes.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = (4 * n + 2) / 5;
    let test = order.split_off(n_train);
    Ok(Dataset { scenes, train: order, test })
}

/// One row of the `path,label,seed` manifest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelRow {
    pub path: PathBuf,
    pub label: bool,
    pub seed: u64,
}

pub fn write_labels(path: impl AsRef<Path>, rows: &[LabelRow]) -> Result<(), SynthError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| SynthError::Labels(e.to_string()))?;
    let mut put = |r: [&str; 3]| w.write_record(r).map_err(|e| SynthError::Labels(e.to_string()));
    put(["path", "label", "seed"])?;
    for r in rows {
        put([&r.path.to_string_lossy(), if r.label { "1" } else { "0" }, &r.seed.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<LabelRow>, SynthError> {
    let err = |e: &dyn std::fmt::Display| SynthError::Labels(e.to_string());
    let mut r = csv::Reader::from_path(path).map_err(|e| err(&e))?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| err(&e))?;
        if rec.len() != 3 {
            return Err(err(&format!("row {}: expected 3 fields", i + 1)));
        }
        let label = match &rec[1] {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(err(&format!("row {}: bad label {other:?}", i + 1))),
        };
        let seed = rec[2].parse().map_err(|e| err(&format!("row {}: {e}", i + 1)))?;
        rows.push(LabelRow { path: PathBuf::from(&rec[0]), label, seed });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{accumulate_window, coincidence_detect};

    fn walker(seed: u64) -> SceneSpec {
        SceneSpec { object: ObjectKind::Pedestrian { height: 160.0 }, velocity: (100.0, 0.0), seed, ..Default::default() }
    }

    #[test]
    fn empty_scene_without_noise_is_empty() {
        let clip = gen_clip(&SceneSpec { noise_rate: 0.0, ..Default::default() }).unwrap();
        assert!(clip.events.is_empty());
        assert!(!clip.label);
    }

    #[test]
    fn static_object_is_silent() {
        let spec = SceneSpec { velocity: (0.0, 0.0), noise_rate: 0.0, ..walker(1) };
        assert!(gen_clip(&spec).unwrap().events.is_empty());
    }

    #[test]
    fn deterministic_and_sorted() {
        let a = gen_clip(&walker(3)).unwrap();
        assert_eq!(a, gen_clip(&walker(3)).unwrap());
        assert_ne!(a.events, gen_clip(&walker(4)).unwrap().events);
        assert!(a.events.windows(2).all(|p| p[0].t <= p[1].t));
        assert!(a.label);
    }

    #[test]
    fn leading_edge_is_positive() {
        let spec = SceneSpec { noise_rate: 0.0, ..walker(5) };
        let clip = gen_clip(&spec).unwrap();
        let cx = 240.0 + 100.0 * 0.15;
        let (mut right_pos, mut right_neg) = (0, 0);
        for e in clip.events.iter().filter(|e| (e.x as f64) > cx + 10.0) {
            match e.p {
                Polarity::Pos => right_pos += 1,
                Polarity::Neg => right_neg += 1,
            }
        }
        assert!(right_pos > 20 * right_neg.max(1), "{right_pos} vs {right_neg}");
    }

    fn within_3_sigma(count: usize, mean: f64) -> bool {
        (count as f64 - mean).abs() <= 3.0 * mean.sqrt()
    }

    #[test]
    fn noise_count_matches_poisson_expectation() {
        for rate in [0.5, 2.0, 10.0] {
            let spec = SceneSpec { noise_rate: rate, seed: 17, ..Default::default() };
            let n = gen_clip(&spec).unwrap().events.len();
            let mean = rate * 480.0 * 320.0 * 0.3;
            assert!(within_3_sigma(n, mean), "rate {rate}: {n} vs {mean}");
        }
    }

    #[test]
    fn edge_count_matches_poisson_expectation() {
        // a box moving right: only the two vertical sides fire, with |n·v| = 1
        for rate in [100.0, 300.0] {
            let spec = SceneSpec {
                object: ObjectKind::Box { width: 60.0, height: 50.0 },
                velocity: (80.0, 0.0),
                edge_rate: rate,
                noise_rate: 0.0,
                seed: 23,
                ..Default::default()
            };
            let n = gen_clip(&spec).unwrap().events.len();
            let mean = rate * (2 * 50 * BAND.len()) as f64 * 0.3;
            assert!(within_3_sigma(n, mean), "rate {rate}: {n} vs {mean}");
        }
    }

    /// Fraction of noise events with a same-polarity 4-neighbour in their window.
    fn paired_fraction(rate: f64, seed: u64) -> f64 {
        let spec = SceneSpec { noise_rate: rate, edge_rate: 0.0, duration_us: 600_000, seed, ..Default::default() };
        let clip = gen_clip(&spec).unwrap();
        let (mut paired, mut total) = (0usize, 0usize);
        for chunk in clip.events.chunk_by(|a, b| a.t / 3000 == b.t / 3000) {
            let w = accumulate_window(chunk, spec.geometry);
            for e in chunk {
                let (x, y) = (e.x as i32, e.y as i32);
                let bit = if e.p == Polarity::Pos { 0b10 } else { 0b01 };
                let hit = [(-1, 0), (1, 0), (0, -1), (0, 1)].iter().any(|(dx, dy)| {
                    let (nx, ny) = (x + dx, y + dy);
                    nx >= 0 && ny >= 0 && nx < 480 && ny < 320 && w.cell(nx as usize, ny as usize) & bit != 0
                });
                paired += hit as usize;
                total += 1;
            }
        }
        paired as f64 / total as f64
    }

    #[test]
    fn noise_is_mostly_isolated() {
        // the expected paired fraction is about 4 · rate · τ / 2, so 5% holds up to ~8 ev/px/s
        for rate in [2.0, 5.0, 8.0] {
            let f = paired_fraction(rate, 29);
            assert!(f < 0.05, "rate {rate}: {f}");
        }
    }

    #[test]
    fn moving_edges_survive_coincidence() {
        let spec = SceneSpec { noise_rate: 0.0, ..walker(31) };
        let clip = gen_clip(&spec).unwrap();
        let window: Vec<Event> = clip.events.iter().copied().filter(|e| e.t / 3000 == 20).collect();
        let w = accumulate_window(&window, spec.geometry);
        let c = coincidence_detect(&w);
        assert!(c.h.count_ones() + c.v.count_ones() > 100);
    }

    #[test]
    fn dataset_split_sizes() {
        let d = build_dataset(10, 10, &DatasetSpec::default(), 7).unwrap();
        assert_eq!((d.train.len(), d.test.len()), (16, 4));
        assert_eq!(d.scenes.iter().filter(|s| s.label()).count(), 10);
        assert_eq!(d, build_dataset(10, 10, &DatasetSpec::default(), 7).unwrap());
        let big = build_dataset(273, 548, &DatasetSpec::default(), 1).unwrap();
        assert_eq!((big.train.len(), big.test.len()), (657, 164));
        let mut all: Vec<usize> = big.train.iter().chain(&big.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..821).collect::<Vec<_>>());
        assert!(build_dataset(0, 3, &DatasetSpec::default(), 1).is_err());
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        let rows =
            vec![LabelRow { path: "clip_0000.evs".into(), label: true, seed: 42 }, LabelRow { path: "clip_0001.evs".into(), label: false, seed: u64::MAX }];
        write_labels(&path, &rows).unwrap();
        assert_eq!(read_labels(&path).unwrap(), rows);
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("path,label,seed\n"));
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(gen_clip(&SceneSpec { noise_rate: -1.0, ..Default::default() }).is_err());
        assert!(gen_clip(&SceneSpec { object: ObjectKind::Box { width: 0.0, height: 3.0 }, ..Default::default() }).is_err());
    }
}
