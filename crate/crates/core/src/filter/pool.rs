use crate::bitplane::BitPlane;

/// Block OR-pooling: `pooled(i, j)` is set iff any pixel of the `pool × pool`
/// block at `(i·pool, j·pool)` is set. `pool` must divide both dimensions.
pub fn max_pool(plane: &BitPlane, pool: usize) -> BitPlane {
    assert!(pool > 0 && plane.width().is_multiple_of(pool) && plane.height().is_multiple_of(pool), "pool must divide the plane");
    let (pw, ph) = (plane.width() / pool, plane.height() / pool);
    let mut out = BitPlane::new(pw, ph);
    let mut merged = vec![0u64; plane.stride()];
    for j in 0..ph {
        merged.fill(0);
        for y in j * pool..(j + 1) * pool {
            for (m, w) in merged.iter_mut().zip(plane.row(y)) {
                *m |= *w;
            }
        }
        if merged.iter().all(|&w| w == 0) {
            continue;
        }
        for i in 0..pw {
            if BitPlane::any_in_range(&merged, i * pool, pool) {
                out.set(i, j);
            }
        }
    }
    out
}

/// Number of set bits of `max_pool(plane, pool)` without allocating it.
pub(crate) fn pooled_count(plane: &BitPlane, pool: usize, scratch: &mut Vec<u64>) -> usize {
    let (pw, ph) = (plane.width() / pool, plane.height() / pool);
    scratch.clear();
    scratch.resize(plane.stride(), 0);
    let mut count = 0;
    for j in 0..ph {
        scratch.fill(0);
        for y in j * pool..(j + 1) * pool {
            for (m, w) in scratch.iter_mut().zip(plane.row(y)) {
                *m |= *w;
            }
        }
        count += (0..pw).filter(|&i| BitPlane::any_in_range(scratch, i * pool, pool)).count();
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn oracle(plane: &BitPlane, pool: usize) -> BitPlane {
        BitPlane::from_fn(plane.width() / pool, plane.height() / pool, |i, j| {
            let mut any = false;
            for dy in 0..pool {
                for dx in 0..pool {
                    any |= plane.get(i * pool + dx, j * pool + dy);
                }
            }
            any
        })
    }

    #[test]
    fn zero_plane() {
        let p = max_pool(&BitPlane::new(480, 320), 8);
        assert_eq!((p.width(), p.height()), (60, 40));
        assert!(!p.any());
    }

    #[test]
    fn single_pixel_lands_in_block() {
        let mut plane = BitPlane::new(480, 320);
        plane.set(17, 9);
        let p = max_pool(&plane, 8);
        assert_eq!(p.ones().collect::<Vec<_>>(), vec![(2, 1)]);
    }

    #[test]
    fn random_planes_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut scratch = Vec::new();
        for trial in 0..1000 {
            let pool = [1, 2, 4, 8, 16][trial % 5];
            let (w, h) = (pool * rng.random_range(1..12), pool * rng.random_range(1..8));
            let density = rng.random_range(0.0..0.05);
            let plane = BitPlane::from_fn(w, h, |_, _| rng.random_bool(density));
            let pooled = max_pool(&plane, pool);
            assert_eq!(pooled, oracle(&plane, pool), "trial {trial}");
            assert_eq!(pooled_count(&plane, pool, &mut scratch), pooled.count_ones());
            assert!(pooled.count_ones() <= plane.count_ones().min(pooled.len()));
        }
    }
}
