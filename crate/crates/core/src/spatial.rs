//! Uniform grid over 3D points for k-nearest-neighbor queries.

use crate::mesh::Vec3;

const MAX_CELLS_PER_AXIS: usize = 128;

/// Points bucketed into cubic cells, stored in compressed rows.
#[derive(Debug, Clone)]
pub struct PointGrid {
    points: Vec<Vec3>,
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<u32>,
    entries: Vec<u32>,
}

impl PointGrid {
    pub fn new(points: Vec<Vec3>) -> Self {
        let (lo, hi) = points.iter().fold(
            (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
            |(lo, hi), p| (lo.inf(p), hi.sup(p)),
        );
        let (lo, hi) = if points.is_empty() { (Vec3::zeros(), Vec3::zeros()) } else { (lo, hi) };
        let extent = (hi - lo).max();
        // Samples lie on surfaces, so occupancy scales with the square root.
        let per_axis = ((points.len() as f64).sqrt() / 4.0).ceil().clamp(1.0, MAX_CELLS_PER_AXIS as f64);
        let cell = if extent > 0.0 { extent / per_axis } else { 1.0 };
        let dims = [0, 1, 2].map(|a| (((hi[a] - lo[a]) / cell).floor() as usize + 1).min(MAX_CELLS_PER_AXIS + 1));
        let mut grid = Self {
            points,
            origin: lo,
            cell,
            dims,
            starts: Vec::new(),
            entries: Vec::new(),
        };
        let ncells = dims[0] * dims[1] * dims[2];
        let keys: Vec<usize> = grid.points.iter().map(|p| grid.flat(grid.cell_of(p))).collect();
        let mut counts = vec![0u32; ncells + 1];
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for i in 0..ncells {
            counts[i + 1] += counts[i];
        }
        let mut cursor = counts.clone();
        let mut entries = vec![0u32; keys.len()];
        for (i, &k) in keys.iter().enumerate() {
            entries[cursor[k] as usize] = i as u32;
            cursor[k] += 1;
        }
        grid.starts = counts;
        grid.entries = entries;
        grid
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn cell_of(&self, p: &Vec3) -> [usize; 3] {
        [0, 1, 2].map(|a| {
            let c = ((p[a] - self.origin[a]) / self.cell).floor();
            c.clamp(0.0, (self.dims[a] - 1) as f64) as usize
        })
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    /// The `k` nearest points as `(index, distance)`, ordered by distance and
    /// then index.
    pub fn knn(&self, query: &Vec3, k: usize) -> Vec<(usize, f64)> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        let center = self.cell_of(query);
        let max_ring = *self.dims.iter().max().expect("three axes");
        let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        for ring in 0..=max_ring {
            let lo = center.map(|c| c.saturating_sub(ring));
            let hi = [0, 1, 2].map(|a| (center[a] + ring).min(self.dims[a] - 1));
            for z in lo[2]..=hi[2] {
                for y in lo[1]..=hi[1] {
                    for x in lo[0]..=hi[0] {
                        let on_shell = [x, y, z]
                            .iter()
                            .zip(&center)
                            .any(|(&c, &q)| c.abs_diff(q) == ring);
                        if !on_shell {
                            continue;
                        }
                        let cell = self.flat([x, y, z]);
                        for &e in &self.entries[self.starts[cell] as usize..self.starts[cell + 1] as usize] {
                            let i = e as usize;
                            let d = (self.points[i] - query).norm();
                            insert_sorted(&mut best, (i, d), k);
                        }
                    }
                }
            }
            // Anything in a farther ring is at least `ring * cell` away.
            if best.len() == k && best[k - 1].1 < ring as f64 * self.cell {
                break;
            }
        }
        best
    }
}

fn insert_sorted(best: &mut Vec<(usize, f64)>, item: (usize, f64), k: usize) {
    let key = |a: &(usize, f64)| (a.1, a.0);
    if best.len() == k && key(&item) >= key(&best[k - 1]) {
        return;
    }
    let pos = best.partition_point(|b| key(b) < key(&item));
    best.insert(pos, item);
    best.truncate(k);
}
