//! Edge-function triangle rasterization with a z-buffer.
//!
//! Samples are taken at pixel centers. Pixels lying exactly on an edge are
//! owned by the triangle for which that edge is a top or left edge, so
//! triangles sharing an edge never both cover (or both miss) a pixel.
//! Edge functions are evaluated with a canonical vertex order so the two
//! triangles on either side of an edge see exactly negated values.
//!
//! The frame is split into 64×64 tiles rasterized independently; each tile
//! owns its slice of the z-buffer and walks triangles in mesh order, so the
//! result does not depend on how tiles are scheduled.

use rayon::prelude::*;

use crate::camera::Camera;
use crate::image::ImageGrid;
use crate::mesh::{MeshError, TriangleMesh, Vec2, Vec3};

pub const TILE_SIZE: usize = 64;
pub const BACKGROUND: f64 = 0.5;

/// `(b - a) × (p - a)` in image coordinates, antisymmetric in `(a, b)` bit-for-bit.
#[inline]
pub(crate) fn edge_function(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    if a > b {
        return -edge_function(b, a, p);
    }
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// With positive orientation and `y` down, top edges run in +x and left edges run in −y.
#[inline]
fn is_top_left(a: (f64, f64), b: (f64, f64)) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

/// A triangle prepared for coverage tests: vertices reordered to positive
/// orientation, with `order` mapping back to the original corner indices.
#[derive(Debug, Clone, Copy)]
pub(crate) struct EdgeSetup {
    v: [(f64, f64); 3],
    order: [usize; 3],
    pub bbox: (f64, f64, f64, f64),
}

impl EdgeSetup {
    /// `None` for zero-area (or non-finite) triangles.
    pub fn new(v: [(f64, f64); 3]) -> Option<Self> {
        if v.iter().any(|p| !(p.0.is_finite() && p.1.is_finite())) {
            return None;
        }
        let area = edge_function(v[0], v[1], v[2]);
        let (v, order) = if area > 0.0 {
            (v, [0, 1, 2])
        } else if area < 0.0 {
            ([v[0], v[2], v[1]], [0, 2, 1])
        } else {
            return None;
        };
        let xs = [v[0].0, v[1].0, v[2].0];
        let ys = [v[0].1, v[1].1, v[2].1];
        let bbox = (
            xs.iter().copied().fold(f64::INFINITY, f64::min),
            ys.iter().copied().fold(f64::INFINITY, f64::min),
            xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        );
        Some(Self { v, order, bbox })
    }

    /// Barycentric weights for the original corners if `p` is covered.
    #[inline]
    pub fn cover(&self, p: (f64, f64)) -> Option<[f64; 3]> {
        let [a, b, c] = self.v;
        let e0 = edge_function(b, c, p);
        let e1 = edge_function(c, a, p);
        let e2 = edge_function(a, b, p);
        let inside = |e: f64, from, to| e > 0.0 || (e == 0.0 && is_top_left(from, to));
        if !(inside(e0, b, c) && inside(e1, c, a) && inside(e2, a, b)) {
            return None;
        }
        let sum = e0 + e1 + e2;
        let mut w = [0.0; 3];
        w[self.order[0]] = e0 / sum;
        w[self.order[1]] = e1 / sum;
        w[self.order[2]] = e2 / sum;
        Some(w)
    }

    /// Pixel index range `[x0, x1) × [y0, y1)` whose centers may be covered,
    /// clipped to the given window.
    pub fn pixel_range(&self, window: (usize, usize, usize, usize)) -> Option<(usize, usize, usize, usize)> {
        let (wx0, wy0, wx1, wy1) = window;
        let lo = |v: f64, min: usize| ((v - 0.5).ceil().max(min as f64)) as usize;
        let hi = |v: f64, max: usize| (((v - 0.5).floor() + 1.0).min(max as f64)).max(0.0) as usize;
        let (x0, x1) = (lo(self.bbox.0, wx0), hi(self.bbox.2, wx1));
        let (y0, y1) = (lo(self.bbox.1, wy0), hi(self.bbox.3, wy1));
        (x0 < x1 && y0 < y1).then_some((x0, y0, x1, y1))
    }
}

/// Per-pixel surface record from one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct GBuffer {
    pub size: usize,
    /// `f64::INFINITY` where nothing is covered.
    pub depth: Vec<f64>,
    pub position: Vec<Vec3>,
    pub normal: Vec<Vec3>,
    pub uv: Vec<Vec2>,
    pub tri_id: Vec<Option<u32>>,
    /// Barycentric weights of the winning triangle's corners.
    pub barycentric: Vec<[f64; 3]>,
}

impl GBuffer {
    fn empty(size: usize) -> Self {
        let n = size * size;
        Self {
            size,
            depth: vec![f64::INFINITY; n],
            position: vec![Vec3::zeros(); n],
            normal: vec![Vec3::zeros(); n],
            uv: vec![Vec2::zeros(); n],
            tri_id: vec![None; n],
            barycentric: vec![[0.0; 3]; n],
        }
    }

    #[inline]
    pub fn covered(&self, i: usize) -> bool {
        self.tri_id[i].is_some()
    }

    pub fn coverage(&self) -> Vec<bool> {
        self.tri_id.iter().map(Option::is_some).collect()
    }

    pub fn covered_count(&self) -> usize {
        self.tri_id.iter().filter(|t| t.is_some()).count()
    }

    pub fn depth_map(&self) -> DepthMap {
        DepthMap {
            size: self.size,
            data: self.depth.clone(),
        }
    }
}

/// Square depth image; `f64::INFINITY` marks background.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub size: usize,
    pub data: Vec<f64>,
}

impl DepthMap {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.size + x]
    }

    /// Encodes `(depth - near) / (far - near)` with background at 1.
    pub fn encode(&self, camera: &Camera) -> ImageGrid {
        let range = camera.far - camera.near;
        ImageGrid::from_fn(1, self.size, self.size, |y, x, px| {
            let d = self.get(x, y);
            px[0] = if d.is_finite() { (d - camera.near) / range } else { 1.0 };
        })
    }

    /// Inverse of [`encode`](Self::encode); values at 1 decode to background.
    pub fn decode(image: &ImageGrid, camera: &Camera) -> DepthMap {
        let range = camera.far - camera.near;
        DepthMap {
            size: image.width(),
            data: image
                .plane(0)
                .iter()
                .map(|&v| if v >= 1.0 { f64::INFINITY } else { camera.near + v * range })
                .collect(),
        }
    }
}

struct Prepared {
    setup: EdgeSetup,
    depth: [f64; 3],
}

#[derive(Clone, Copy)]
struct Fragment {
    depth: f64,
    tri: u32,
    bary: [f64; 3],
}

fn rasterize_tile(
    prepared: &[Option<Prepared>],
    window: (usize, usize, usize, usize),
    near: f64,
    far: f64,
) -> Vec<Option<Fragment>> {
    let (x0, y0, x1, y1) = window;
    let w = x1 - x0;
    let mut frags: Vec<Option<Fragment>> = vec![None; w * (y1 - y0)];
    for (t, tri) in prepared.iter().enumerate() {
        let Some(tri) = tri else { continue };
        let Some((px0, py0, px1, py1)) = tri.setup.pixel_range(window) else {
            continue;
        };
        for y in py0..py1 {
            for x in px0..px1 {
                let Some(bary) = tri.setup.cover((x as f64 + 0.5, y as f64 + 0.5)) else {
                    continue;
                };
                let depth = bary[0] * tri.depth[0] + bary[1] * tri.depth[1] + bary[2] * tri.depth[2];
                if !(depth >= near && depth <= far) {
                    continue;
                }
                let slot = &mut frags[(y - y0) * w + (x - x0)];
                if slot.is_none_or(|f| depth < f.depth) {
                    *slot = Some(Fragment {
                        depth,
                        tri: t as u32,
                        bary,
                    });
                }
            }
        }
    }
    frags
}

/// Rasterizes every triangle (no back-face culling) into a G-buffer.
pub fn rasterize(mesh: &TriangleMesh, camera: &Camera) -> GBuffer {
    let size = camera.image_size;
    let prepared: Vec<Option<Prepared>> = (0..mesh.triangles.len())
        .map(|t| {
            let pts = mesh.triangle_positions(t).map(|p| camera.project(&p));
            EdgeSetup::new(pts.map(|(x, y, _)| (x, y))).map(|setup| Prepared {
                setup,
                depth: pts.map(|(_, _, d)| d),
            })
        })
        .collect();

    let tiles_per_side = size.div_ceil(TILE_SIZE);
    let windows: Vec<_> = (0..tiles_per_side * tiles_per_side)
        .map(|i| {
            let (tx, ty) = (i % tiles_per_side, i / tiles_per_side);
            (
                tx * TILE_SIZE,
                ty * TILE_SIZE,
                ((tx + 1) * TILE_SIZE).min(size),
                ((ty + 1) * TILE_SIZE).min(size),
            )
        })
        .collect();
    let tiles: Vec<_> = windows
        .par_iter()
        .map(|&w| rasterize_tile(&prepared, w, camera.near, camera.far))
        .collect();

    let mut g = GBuffer::empty(size);
    for (window, frags) in windows.iter().zip(tiles) {
        let (x0, y0, x1, _) = *window;
        for (k, frag) in frags.into_iter().enumerate() {
            let Some(f) = frag else { continue };
            let (x, y) = (x0 + k % (x1 - x0), y0 + k / (x1 - x0));
            let i = y * size + x;
            let t = f.tri as usize;
            let w = f.bary;
            let p = mesh.triangle_positions(t);
            let n = mesh.triangle_normals(t);
            let uv = mesh.triangle_uvs(t);
            g.depth[i] = f.depth;
            g.position[i] = p[0] * w[0] + p[1] * w[1] + p[2] * w[2];
            g.normal[i] = (n[0] * w[0] + n[1] * w[1] + n[2] * w[2])
                .try_normalize(1e-12)
                .unwrap_or_else(|| mesh.face_normal(t));
            g.uv[i] = uv[0] * w[0] + uv[1] * w[1] + uv[2] * w[2];
            g.tri_id[i] = Some(f.tri);
            g.barycentric[i] = w;
        }
    }
    g
}

/// Position map `(p + 0.5)` clamped to `[0, 1]`; background 0.5.
pub fn position_map(g: &GBuffer) -> ImageGrid {
    ImageGrid::from_fn(3, g.size, g.size, |y, x, px| {
        let i = y * g.size + x;
        for c in 0..3 {
            px[c] = if g.covered(i) { (g.position[i][c] + 0.5).clamp(0.0, 1.0) } else { BACKGROUND };
        }
    })
}

/// Normal map `(n + 1) / 2`; background 0.5.
pub fn normal_map(g: &GBuffer) -> ImageGrid {
    ImageGrid::from_fn(3, g.size, g.size, |y, x, px| {
        let i = y * g.size + x;
        for c in 0..3 {
            px[c] = if g.covered(i) { (g.normal[i][c] + 1.0) * 0.5 } else { BACKGROUND };
        }
    })
}

/// Position and normal maps for each camera.
pub fn geometry_condition_maps(mesh: &TriangleMesh, cameras: &[Camera]) -> (Vec<ImageGrid>, Vec<ImageGrid>) {
    cameras
        .iter()
        .map(|c| {
            let g = rasterize(mesh, c);
            (position_map(&g), normal_map(&g))
        })
        .unzip()
}

/// Bilinear texture lookup at each covered pixel's UV; background 0.5.
pub fn shade_textured(g: &GBuffer, texture: &ImageGrid) -> ImageGrid {
    let mut rgb = [0.0; 3];
    let tex = texture.to_rgb();
    ImageGrid::from_fn(3, g.size, g.size, |y, x, px| {
        let i = y * g.size + x;
        if g.covered(i) {
            tex.sample_uv(g.uv[i].x, g.uv[i].y, &mut rgb);
            px.copy_from_slice(&rgb);
        } else {
            px.fill(BACKGROUND);
        }
    })
}

pub fn render_textured(mesh: &TriangleMesh, texture: &ImageGrid, camera: &Camera) -> Result<ImageGrid, MeshError> {
    mesh.require_uvs()?;
    Ok(shade_textured(&rasterize(mesh, camera), texture))
}

/// 2×2 supersampled textured render (box filtered), for target views only.
pub fn render_textured_supersampled(
    mesh: &TriangleMesh,
    texture: &ImageGrid,
    camera: &Camera,
) -> Result<ImageGrid, MeshError> {
    mesh.require_uvs()?;
    let mut hi = camera.clone();
    hi.image_size *= 2;
    let big = shade_textured(&rasterize(mesh, &hi), texture);
    let s = camera.image_size;
    Ok(ImageGrid::from_fn(3, s, s, |y, x, px| {
        for (c, v) in px.iter_mut().enumerate() {
            *v = (big.get(c, 2 * y, 2 * x)
                + big.get(c, 2 * y, 2 * x + 1)
                + big.get(c, 2 * y + 1, 2 * x)
                + big.get(c, 2 * y + 1, 2 * x + 1))
                / 4.0;
        }
    }))
}
