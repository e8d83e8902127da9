//! Procedural RGB textures.

use crate::image::ImageGrid;
use crate::rng::Stream;

/// Two-color checkerboard with square cells of `cell` pixels.
pub fn checkerboard(size: usize, cell: usize, a: [f64; 3], b: [f64; 3]) -> ImageGrid {
    assert!(cell > 0, "cell must be positive");
    ImageGrid::from_fn(3, size, size, |y, x, px| {
        let c = if (x / cell + y / cell) % 2 == 0 { a } else { b };
        px.copy_from_slice(&c);
    })
}

/// The checkerboard used when no texture is given.
pub fn default_checkerboard() -> ImageGrid {
    checkerboard(256, 32, [0.85, 0.3, 0.2], [0.2, 0.45, 0.8])
}

/// Smooth value noise: random colors on a `(cells + 1)²` lattice blended with
/// a smoothstep kernel.
pub fn value_noise(size: usize, cells: usize, seed: u64) -> ImageGrid {
    assert!(cells > 0, "cells must be positive");
    let mut rng = Stream::new(seed);
    let n = cells + 1;
    let lattice: Vec<[f64; 3]> = (0..n * n)
        .map(|_| [rng.next_f64(), rng.next_f64(), rng.next_f64()])
        .collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    ImageGrid::from_fn(3, size, size, |y, x, px| {
        let fx = (x as f64 + 0.5) / size as f64 * cells as f64;
        let fy = (y as f64 + 0.5) / size as f64 * cells as f64;
        let (ix, iy) = ((fx as usize).min(cells - 1), (fy as usize).min(cells - 1));
        let (tx, ty) = (smooth(fx - ix as f64), smooth(fy - iy as f64));
        let at = |i: usize, j: usize| lattice[j * n + i];
        let (c00, c10, c01, c11) = (at(ix, iy), at(ix + 1, iy), at(ix, iy + 1), at(ix + 1, iy + 1));
        for c in 0..3 {
            let top = c00[c] * (1.0 - tx) + c10[c] * tx;
            let bottom = c01[c] * (1.0 - tx) + c11[c] * tx;
            px[c] = top * (1.0 - ty) + bottom * ty;
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkerboard_alternates() {
        let t = checkerboard(8, 2, [1.0; 3], [0.0; 3]);
        assert_eq!(t.get(0, 0, 0), 1.0);
        assert_eq!(t.get(0, 0, 2), 0.0);
        assert_eq!(t.get(0, 2, 2), 1.0);
    }

    #[test]
    fn noise_is_seeded_and_bounded() {
        let a = value_noise(32, 4, 3);
        assert_eq!(a, value_noise(32, 4, 3));
        assert_ne!(a, value_noise(32, 4, 4));
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
