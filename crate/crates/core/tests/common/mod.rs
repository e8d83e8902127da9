#![allow(dead_code)]

use jigsaw3d::image::ImageGrid;
use jigsaw3d::rng::Stream;

/// Uniform noise image with values in `[0, 1)`.
pub fn random_image(channels: usize, height: usize, width: usize, seed: u64) -> ImageGrid {
    let mut rng = Stream::new(seed);
    let data = (0..channels * height * width).map(|_| rng.next_f64()).collect();
    ImageGrid::new(channels, height, width, data).unwrap()
}

/// Values of one channel sorted by total order.
pub fn sorted_plane(img: &ImageGrid, c: usize) -> Vec<f64> {
    let mut v = img.plane(c).to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Bit pattern of every sample, for byte-identity checks.
pub fn bits(img: &ImageGrid) -> Vec<u64> {
    img.data().iter().map(|v| v.to_bits()).collect()
}

/// Pearson chi-squared statistic of observed counts against a uniform expectation.
pub fn chi_squared_uniform(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&o| {
            let d = o as f64 - expected;
            d * d / expected
        })
        .sum()
}

/// Upper 3σ bound of a chi-squared variable with `dof` degrees of freedom.
pub fn chi_squared_3sigma(dof: usize) -> f64 {
    dof as f64 + 3.0 * (2.0 * dof as f64).sqrt()
}

use jigsaw3d::camera::Camera;
use jigsaw3d::mesh::{TriangleMesh, Vec3};

/// Per-pixel answer of the brute-force raster oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OraclePixel {
    Empty,
    Hit { tri: usize, depth: f64 },
    /// A pixel center on a triangle edge, or two surfaces at equal depth;
    /// the answer depends on the fill rule.
    Ambiguous,
}

/// Orthographic projection written out from the camera fields.
pub fn project(cam: &Camera, p: &Vec3) -> (f64, f64, f64) {
    let f = Vec3::from(cam.view_dir);
    let up = Vec3::from(cam.up);
    let right = f.cross(&up);
    let s = cam.image_size as f64;
    let x = (right.dot(p) + cam.half_extent) / (2.0 * cam.half_extent) * s;
    let y = (cam.half_extent - up.dot(p)) / (2.0 * cam.half_extent) * s;
    (x, y, f.dot(p) + cam.distance)
}

/// Barycentric coordinates of `p` by Cramer's rule; `None` for degenerate triangles.
pub fn barycentric(a: (f64, f64), b: (f64, f64), c: (f64, f64), p: (f64, f64)) -> Option<[f64; 3]> {
    let det = (b.0 - a.0) * (c.1 - a.1) - (c.0 - a.0) * (b.1 - a.1);
    if det == 0.0 {
        return None;
    }
    let l1 = ((p.0 - a.0) * (c.1 - a.1) - (c.0 - a.0) * (p.1 - a.1)) / det;
    let l2 = ((b.0 - a.0) * (p.1 - a.1) - (p.0 - a.0) * (b.1 - a.1)) / det;
    Some([1.0 - l1 - l2, l1, l2])
}

/// Tests every triangle against every pixel center and keeps the nearest
/// hit inside `[near, far]`.
pub fn raster_oracle(mesh: &TriangleMesh, cam: &Camera) -> Vec<OraclePixel> {
    const EDGE_TOL: f64 = 1e-9;
    const DEPTH_TOL: f64 = 1e-9;
    let s = cam.image_size;
    let projected: Vec<[(f64, f64, f64); 3]> = (0..mesh.triangles.len())
        .map(|t| mesh.triangle_positions(t).map(|p| project(cam, &p)))
        .collect();
    let mut out = vec![OraclePixel::Empty; s * s];
    for y in 0..s {
        for x in 0..s {
            let p = (x as f64 + 0.5, y as f64 + 0.5);
            let mut best: Option<(usize, f64)> = None;
            let mut ambiguous = false;
            let mut depths = Vec::new();
            for (t, v) in projected.iter().enumerate() {
                let Some(l) = barycentric((v[0].0, v[0].1), (v[1].0, v[1].1), (v[2].0, v[2].1), p) else {
                    continue;
                };
                let lo = l.iter().copied().fold(f64::INFINITY, f64::min);
                if lo < -EDGE_TOL {
                    continue;
                }
                let depth = l[0] * v[0].2 + l[1] * v[1].2 + l[2] * v[2].2;
                if depth < cam.near - DEPTH_TOL || depth > cam.far + DEPTH_TOL {
                    continue;
                }
                if lo <= EDGE_TOL || (depth - cam.near).abs() <= DEPTH_TOL || (depth - cam.far).abs() <= DEPTH_TOL {
                    ambiguous = true;
                    continue;
                }
                depths.push(depth);
                if best.is_none_or(|(_, d)| depth < d) {
                    best = Some((t, depth));
                }
            }
            let i = y * s + x;
            out[i] = match best {
                _ if ambiguous => OraclePixel::Ambiguous,
                None => OraclePixel::Empty,
                Some((tri, depth)) => {
                    let ties = depths.iter().filter(|d| (*d - depth).abs() <= DEPTH_TOL).count();
                    if ties > 1 {
                        OraclePixel::Ambiguous
                    } else {
                        OraclePixel::Hit { tri, depth }
                    }
                }
            };
        }
    }
    out
}

/// Random scene of up to `max_tris` triangles in the camera's view volume.
pub fn random_scene(seed: u64, max_tris: usize) -> TriangleMesh {
    let mut rng = Stream::new(seed);
    let n = 1 + rng.below(max_tris as u64) as usize;
    let mut positions = Vec::new();
    let mut tris = Vec::new();
    for t in 0..n {
        let center = Vec3::new(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
        let radius = rng.uniform(0.05, 0.4);
        for _ in 0..3 {
            positions.push(center + Vec3::new(rng.uniform(-radius, radius), rng.uniform(-radius, radius), rng.uniform(-radius, radius)));
        }
        tris.push([3 * t, 3 * t + 1, 3 * t + 2]);
    }
    let normals = vec![Vec3::z(); positions.len()];
    TriangleMesh::from_indexed(positions, normals, None, &tris)
}
