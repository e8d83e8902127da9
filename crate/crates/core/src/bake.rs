//! Baking multi-view images back into a mesh's UV atlas.
//!
//! Texel `(x, y)` of an `R×R` atlas has its center at
//! `u = (x + 0.5) / R`, `v = 1 - (y + 0.5) / R`, so row 0 is the top of the
//! texture image (`v = 1`). Texel index is `y * R + x`.
//!
//! Pipeline: [`rasterize_uv_geometry`] → [`reproject`] → [`fuse`] →
//! [`inpaint_3d`] → [`inpaint_uv`], plus [`bake_tangent_normals`].

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::Camera;
use crate::image::ImageGrid;
use crate::mesh::{MeshError, TriangleMesh, Vec3};
use crate::raster::{DepthMap, EdgeSetup};
use crate::spatial::PointGrid;

const BAND_ROWS: usize = 64;
const IDW_EPSILON: f64 = 1e-6;
/// Encoded tangent-space normal of an unperturbed surface.
pub const FLAT_NORMAL: [f64; 3] = [0.5, 0.5, 1.0];

#[derive(Debug, Error)]
pub enum BakeError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("{views} views, {cameras} cameras and {depths} depth maps must have the same count")]
    CountMismatch { views: usize, cameras: usize, depths: usize },
    #[error("view {view}: {message}")]
    SizeMismatch { view: usize, message: String },
    #[error("no texel was observed by any view")]
    NoValidTexels,
    #[error("invalid bake config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BakeConfig {
    pub resolution: usize,
    pub depth_epsilon: f64,
    pub cosine_cutoff: f64,
    pub blend_power: f64,
    pub inpaint_knn: usize,
    pub dilation_margin: usize,
}

impl Default for BakeConfig {
    fn default() -> Self {
        Self {
            resolution: 1024,
            depth_epsilon: 1e-3,
            cosine_cutoff: 0.1,
            blend_power: 2.0,
            inpaint_knn: 4,
            dilation_margin: 4,
        }
    }
}

impl BakeConfig {
    pub fn validate(&self) -> Result<(), BakeError> {
        let bad = |m: &str| Err(BakeError::InvalidConfig(m.to_string()));
        if self.resolution == 0 {
            return bad("resolution must be positive");
        }
        if !(self.depth_epsilon > 0.0 && self.depth_epsilon.is_finite()) {
            return bad("depth_epsilon must be positive");
        }
        if !(0.0..1.0).contains(&self.cosine_cutoff) {
            return bad("cosine_cutoff must lie in [0, 1)");
        }
        if !(self.blend_power >= 0.0 && self.blend_power.is_finite()) {
            return bad("blend_power must be non-negative");
        }
        if self.inpaint_knn == 0 {
            return bad("inpaint_knn must be at least 1");
        }
        Ok(())
    }
}

/// Surface point seen through one texel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TexelFootprint {
    pub valid: bool,
    pub world_pos: Vec3,
    /// Interpolated shading normal, unit length when valid.
    pub normal: Vec3,
    pub tri_id: Option<u32>,
}

impl TexelFootprint {
    const EMPTY: Self = Self {
        valid: false,
        world_pos: Vec3::new(0.0, 0.0, 0.0),
        normal: Vec3::new(0.0, 0.0, 0.0),
        tri_id: None,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct FootprintMap {
    pub resolution: usize,
    pub texels: Vec<TexelFootprint>,
    /// Triangles skipped for having zero UV area.
    pub degenerate_triangles: Vec<usize>,
    /// Texel hits dropped because an earlier triangle already owned the texel.
    pub overlapping_texels: usize,
}

impl FootprintMap {
    pub fn geometry_mask(&self) -> Vec<bool> {
        self.texels.iter().map(|t| t.valid).collect()
    }

    pub fn valid_count(&self) -> usize {
        self.texels.iter().filter(|t| t.valid).count()
    }

    /// UV coordinates of a texel center.
    pub fn texel_uv(&self, x: usize, y: usize) -> (f64, f64) {
        let r = self.resolution as f64;
        ((x as f64 + 0.5) / r, 1.0 - (y as f64 + 0.5) / r)
    }
}

/// Rasterizes the mesh in UV space. Where UV triangles overlap, the lowest
/// triangle index keeps the texel.
pub fn rasterize_uv_geometry(mesh: &TriangleMesh, resolution: usize) -> Result<FootprintMap, BakeError> {
    mesh.require_uvs()?;
    let r = resolution as f64;
    let mut degenerate = Vec::new();
    let setups: Vec<Option<EdgeSetup>> = (0..mesh.triangles.len())
        .map(|t| {
            let setup = EdgeSetup::new(mesh.triangle_uvs(t).map(|uv| (uv.x * r, (1.0 - uv.y) * r)));
            if setup.is_none() {
                degenerate.push(t);
            }
            setup
        })
        .collect();
    if !degenerate.is_empty() {
        warn!("skipped {} triangles with zero UV area", degenerate.len());
    }

    let bands: Vec<(Vec<TexelFootprint>, usize)> = (0..resolution.div_ceil(BAND_ROWS))
        .into_par_iter()
        .map(|b| {
            let window = (0, b * BAND_ROWS, resolution, ((b + 1) * BAND_ROWS).min(resolution));
            let mut texels = vec![TexelFootprint::EMPTY; resolution * (window.3 - window.1)];
            let mut overlaps = 0;
            for (t, setup) in setups.iter().enumerate() {
                let Some(setup) = setup else { continue };
                let Some((x0, y0, x1, y1)) = setup.pixel_range(window) else {
                    continue;
                };
                let p = mesh.triangle_positions(t);
                let n = mesh.triangle_normals(t);
                for y in y0..y1 {
                    for x in x0..x1 {
                        let Some(w) = setup.cover((x as f64 + 0.5, y as f64 + 0.5)) else {
                            continue;
                        };
                        let slot = &mut texels[(y - window.1) * resolution + x];
                        if slot.valid {
                            overlaps += 1;
                            continue;
                        }
                        let normal = (n[0] * w[0] + n[1] * w[1] + n[2] * w[2])
                            .try_normalize(1e-12)
                            .unwrap_or_else(|| mesh.face_normal(t));
                        *slot = TexelFootprint {
                            valid: true,
                            world_pos: p[0] * w[0] + p[1] * w[1] + p[2] * w[2],
                            normal,
                            tri_id: Some(t as u32),
                        };
                    }
                }
            }
            (texels, overlaps)
        })
        .collect();

    let mut texels = Vec::with_capacity(resolution * resolution);
    let mut overlapping_texels = 0;
    for (band, overlaps) in bands {
        texels.extend(band);
        overlapping_texels += overlaps;
    }
    if overlapping_texels > 0 {
        warn!("{overlapping_texels} texel hits fell on overlapping UV islands");
    }
    Ok(FootprintMap {
        resolution,
        texels,
        degenerate_triangles: degenerate,
        overlapping_texels,
    })
}

/// Per-texel accumulation of view samples.
#[derive(Debug, Clone, PartialEq)]
pub struct UVAtlas {
    pub resolution: usize,
    pub accum_color: Vec<[f64; 3]>,
    pub accum_weight: Vec<f64>,
    pub observations: Vec<u32>,
}

/// Color and weight a single view contributes to a surface point, if the
/// point is visible and faces the camera steeply enough.
///
/// The view color is bilinearly interpolated when all four surrounding depth
/// samples lie on the surface; at silhouettes and depth discontinuities the
/// nearest surrounding pixel that passes the depth test is used instead.
pub fn observe(
    view: &ImageGrid,
    camera: &Camera,
    depth: &DepthMap,
    point: &Vec3,
    normal: &Vec3,
    config: &BakeConfig,
) -> Option<([f64; 3], f64)> {
    let cos = normal.dot(&-camera.forward());
    if !(cos > config.cosine_cutoff) {
        return None;
    }
    let (x, y, d) = camera.project(point);
    let size = camera.image_size;
    let s = size as f64;
    if !(x >= 0.0 && x < s && y >= 0.0 && y < s) {
        return None;
    }
    let (fx, fy) = (x - 0.5, y - 0.5);
    let (x0, y0) = (fx.floor(), fy.floor());
    let (tx, ty) = (fx - x0, fy - y0);
    let clamp = |v: f64| v.clamp(0.0, (size - 1) as f64) as usize;
    let xs = [clamp(x0), clamp(x0 + 1.0)];
    let ys = [clamp(y0), clamp(y0 + 1.0)];
    let taps = [
        (xs[0], ys[0], (1.0 - tx) * (1.0 - ty)),
        (xs[1], ys[0], tx * (1.0 - ty)),
        (xs[0], ys[1], (1.0 - tx) * ty),
        (xs[1], ys[1], tx * ty),
    ];
    let depths = taps.map(|(px, py, _)| depth.get(px, py));
    let color_at = |px: usize, py: usize| [0, 1, 2].map(|c| view.get(c, py, px));

    let mut color = None;
    if depths.iter().all(|v| v.is_finite()) {
        let est: f64 = taps.iter().zip(&depths).map(|((_, _, w), dv)| w * dv).sum();
        if (d - est).abs() <= config.depth_epsilon {
            let mut c = [0.0; 3];
            for &(px, py, w) in &taps {
                let v = color_at(px, py);
                for k in 0..3 {
                    c[k] += w * v[k];
                }
            }
            color = Some(c);
        }
    }
    if color.is_none() {
        let mut best: Option<(f64, usize)> = None;
        for (i, ((_, _, w), dv)) in taps.iter().zip(&depths).enumerate() {
            if (d - dv).abs() <= config.depth_epsilon && best.is_none_or(|(bw, _)| *w > bw) {
                best = Some((*w, i));
            }
        }
        color = best.map(|(_, i)| color_at(taps[i].0, taps[i].1));
    }
    color.map(|c| (c, cos.powf(config.blend_power)))
}

fn check_views(views: &[ImageGrid], cameras: &[Camera], depths: &[DepthMap]) -> Result<(), BakeError> {
    if views.len() != cameras.len() || views.len() != depths.len() {
        return Err(BakeError::CountMismatch {
            views: views.len(),
            cameras: cameras.len(),
            depths: depths.len(),
        });
    }
    for (i, ((v, c), d)) in views.iter().zip(cameras).zip(depths).enumerate() {
        let size = c.image_size;
        let message = if v.height() != size || v.width() != size {
            format!("image is {}x{}, camera expects {size}x{size}", v.width(), v.height())
        } else if v.channels() < 3 {
            format!("image has {} channels, expected RGB", v.channels())
        } else if d.size != size {
            format!("depth map is {}, camera expects {size}", d.size)
        } else if let Err(e) = c.validate() {
            e
        } else {
            continue;
        };
        return Err(BakeError::SizeMismatch { view: i, message });
    }
    Ok(())
}

/// Accumulates every view into the atlas with weight `cos^k`.
pub fn reproject(
    views: &[ImageGrid],
    cameras: &[Camera],
    depths: &[DepthMap],
    footprints: &FootprintMap,
    config: &BakeConfig,
) -> Result<UVAtlas, BakeError> {
    config.validate()?;
    check_views(views, cameras, depths)?;
    let per_texel: Vec<([f64; 3], f64, u32)> = footprints
        .texels
        .par_iter()
        .map(|t| {
            let mut acc = ([0.0; 3], 0.0, 0);
            if !t.valid {
                return acc;
            }
            for ((view, cam), depth) in views.iter().zip(cameras).zip(depths) {
                if let Some((c, w)) = observe(view, cam, depth, &t.world_pos, &t.normal, config) {
                    for k in 0..3 {
                        acc.0[k] += w * c[k];
                    }
                    acc.1 += w;
                    acc.2 += 1;
                }
            }
            acc
        })
        .collect();
    let mut atlas = UVAtlas {
        resolution: footprints.resolution,
        accum_color: Vec::with_capacity(per_texel.len()),
        accum_weight: Vec::with_capacity(per_texel.len()),
        observations: Vec::with_capacity(per_texel.len()),
    };
    for (c, w, n) in per_texel {
        atlas.accum_color.push(c);
        atlas.accum_weight.push(w);
        atlas.observations.push(n);
    }
    Ok(atlas)
}

/// Normalized colors and the mask of observed texels. Unobserved texels are 0.
///
/// With `blend_power = 0` every accepted sample has weight 1, so an observed
/// texel always has positive weight.
pub fn fuse(atlas: &UVAtlas) -> (ImageGrid, Vec<bool>) {
    let r = atlas.resolution;
    let valid: Vec<bool> = atlas
        .observations
        .iter()
        .zip(&atlas.accum_weight)
        .map(|(&n, &w)| n > 0 && w > 0.0)
        .collect();
    let albedo = ImageGrid::from_fn(3, r, r, |y, x, px| {
        let i = y * r + x;
        if valid[i] {
            for c in 0..3 {
                px[c] = atlas.accum_color[i][c] / atlas.accum_weight[i];
            }
        } else {
            px.fill(0.0);
        }
    });
    (albedo, valid)
}

fn texel_color(img: &ImageGrid, i: usize) -> [f64; 3] {
    let r = img.width();
    [0, 1, 2].map(|c| img.get(c, i / r, i % r))
}

fn set_texel(img: &mut ImageGrid, i: usize, color: [f64; 3]) {
    let r = img.width();
    for (c, v) in color.into_iter().enumerate() {
        img.set(c, i / r, i % r, v.clamp(0.0, 1.0));
    }
}

/// Fills geometry-valid texels missing from `validity` with the
/// inverse-distance-weighted mean of their nearest valid texels in world
/// space. Returns the new albedo and the mask of filled texels.
pub fn inpaint_3d(
    albedo: &ImageGrid,
    validity: &[bool],
    footprints: &FootprintMap,
    config: &BakeConfig,
) -> Result<(ImageGrid, Vec<bool>), BakeError> {
    config.validate()?;
    let sources: Vec<usize> = (0..validity.len()).filter(|&i| validity[i]).collect();
    if sources.is_empty() {
        return Err(BakeError::NoValidTexels);
    }
    let grid = PointGrid::new(sources.iter().map(|&i| footprints.texels[i].world_pos).collect());
    let targets: Vec<usize> = (0..validity.len())
        .filter(|&i| footprints.texels[i].valid && !validity[i])
        .collect();
    let fills: Vec<[f64; 3]> = targets
        .par_iter()
        .map(|&i| {
            let neighbors = grid.knn(&footprints.texels[i].world_pos, config.inpaint_knn);
            let total: f64 = neighbors.iter().map(|(_, d)| 1.0 / (d + IDW_EPSILON)).sum();
            let mut sum = [0.0; 3];
            for (j, dist) in neighbors {
                let w = 1.0 / (dist + IDW_EPSILON) / total;
                let c = texel_color(albedo, sources[j]);
                for k in 0..3 {
                    sum[k] += w * c[k];
                }
            }
            sum
        })
        .collect();
    let mut out = albedo.clone();
    let mut filled = vec![false; validity.len()];
    for (&i, color) in targets.iter().zip(fills) {
        set_texel(&mut out, i, color);
        filled[i] = true;
    }
    Ok((out, filled))
}

/// Dilates colored texels into geometry-invalid texels up to `margin` texels
/// away (8-connected). Each such texel copies the nearest colored texel,
/// preferring the lowest texel index among equally near ones.
pub fn inpaint_uv(
    albedo: &ImageGrid,
    colored: &[bool],
    footprints: &FootprintMap,
    margin: usize,
) -> (ImageGrid, Vec<bool>) {
    let r = footprints.resolution;
    let nearest: Vec<Option<usize>> = (0..r * r)
        .into_par_iter()
        .map(|i| {
            if footprints.texels[i].valid || colored[i] {
                return None;
            }
            let (x, y) = ((i % r) as isize, (i / r) as isize);
            (1..=margin as isize).find_map(|d| {
                let lo_y = (y - d).max(0);
                let hi_y = (y + d).min(r as isize - 1);
                let lo_x = (x - d).max(0);
                let hi_x = (x + d).min(r as isize - 1);
                // Row-major scan visits candidates in increasing index order.
                for yy in lo_y..=hi_y {
                    for xx in lo_x..=hi_x {
                        if (yy - y).abs().max((xx - x).abs()) != d {
                            continue;
                        }
                        let j = yy as usize * r + xx as usize;
                        if colored[j] {
                            return Some(j);
                        }
                    }
                }
                None
            })
        })
        .collect();
    let mut out = albedo.clone();
    let mut filled = vec![false; r * r];
    for (i, src) in nearest.into_iter().enumerate() {
        if let Some(j) = src {
            let c = texel_color(albedo, j);
            set_texel(&mut out, i, c);
            filled[i] = true;
        }
    }
    (out, filled)
}

/// Orthonormal frame `(T, B, N)` for a triangle. `None` when the UV mapping
/// is degenerate, in which case an arbitrary frame around `N` is used.
fn tangent_frame(mesh: &TriangleMesh, t: usize) -> ([Vec3; 3], bool) {
    let p = mesh.triangle_positions(t);
    let uv = mesh.triangle_uvs(t);
    let shading: Vec3 = mesh.triangle_normals(t).iter().sum();
    let (e1, e2) = (p[1] - p[0], p[2] - p[0]);
    let mut n = e1.cross(&e2).try_normalize(1e-300).unwrap_or_else(|| {
        shading.try_normalize(1e-300).unwrap_or(Vec3::z())
    });
    if n.dot(&shading) < 0.0 {
        n = -n;
    }
    let (d1, d2) = (uv[1] - uv[0], uv[2] - uv[0]);
    let det = d1.x * d2.y - d2.x * d1.y;
    let raw_t = (e1 * d2.y - e2 * d1.y) / det;
    let raw_b = (e2 * d1.x - e1 * d2.x) / det;
    let tangent = if det != 0.0 && det.is_finite() {
        (raw_t - n * n.dot(&raw_t)).try_normalize(1e-300)
    } else {
        None
    };
    match tangent {
        Some(tan) => {
            let mut bit = n.cross(&tan);
            if bit.dot(&raw_b) < 0.0 {
                bit = -bit;
            }
            ([tan, bit, n], true)
        }
        None => {
            let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            let tan = (helper - n * n.dot(&helper)).normalize();
            ([tan, n.cross(&tan), n], false)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangentNormals {
    pub image: ImageGrid,
    /// Triangles whose UV derivatives could not define a tangent.
    pub degenerate_tangents: usize,
}

/// Encodes each texel's shading normal in its triangle's tangent frame as
/// `(n + 1) / 2`. Texels without geometry get [`FLAT_NORMAL`].
pub fn bake_tangent_normals(mesh: &TriangleMesh, footprints: &FootprintMap) -> Result<TangentNormals, BakeError> {
    mesh.require_uvs()?;
    let frames: Vec<([Vec3; 3], bool)> = (0..mesh.triangles.len()).map(|t| tangent_frame(mesh, t)).collect();
    let r = footprints.resolution;
    let image = ImageGrid::from_fn(3, r, r, |y, x, px| {
        let f = &footprints.texels[y * r + x];
        match f.tri_id {
            Some(t) if f.valid => {
                let ([tan, bit, n], _) = frames[t as usize];
                let local = [tan.dot(&f.normal), bit.dot(&f.normal), n.dot(&f.normal)];
                for c in 0..3 {
                    px[c] = (local[c] + 1.0) * 0.5;
                }
            }
            _ => px.copy_from_slice(&FLAT_NORMAL),
        }
    });
    Ok(TangentNormals {
        image,
        degenerate_tangents: frames.iter().filter(|f| !f.1).count(),
    })
}

/// Texel accounting for one bake. Fractions are relative to the number of
/// texels covered by the UV layout, so `observed + filled_3d` is 1 whenever
/// every covered texel received a color.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub resolution: usize,
    pub geometry_texels: usize,
    pub observed_texels: usize,
    pub filled_3d_texels: usize,
    pub filled_uv_texels: usize,
    pub observed_fraction: f64,
    pub filled_3d_fraction: f64,
    pub filled_uv_fraction: f64,
    pub degenerate_uv_triangles: Vec<usize>,
    pub overlapping_texels: usize,
    pub degenerate_tangents: usize,
}

#[derive(Debug, Clone)]
pub struct BakeOutput {
    pub albedo: ImageGrid,
    pub normals: ImageGrid,
    pub footprints: FootprintMap,
    pub observed: Vec<bool>,
    pub filled_3d: Vec<bool>,
    pub filled_uv: Vec<bool>,
    pub report: CoverageReport,
}

pub fn bake(
    mesh: &TriangleMesh,
    views: &[ImageGrid],
    cameras: &[Camera],
    depths: &[DepthMap],
    config: &BakeConfig,
) -> Result<BakeOutput, BakeError> {
    config.validate()?;
    let footprints = rasterize_uv_geometry(mesh, config.resolution)?;
    let atlas = reproject(views, cameras, depths, &footprints, config)?;
    let (fused, observed) = fuse(&atlas);
    let (filled, filled_3d) = inpaint_3d(&fused, &observed, &footprints, config)?;
    let colored: Vec<bool> = observed.iter().zip(&filled_3d).map(|(a, b)| *a || *b).collect();
    let (albedo, filled_uv) = inpaint_uv(&filled, &colored, &footprints, config.dilation_margin);

    let tangent = bake_tangent_normals(mesh, &footprints)?;
    let geometry = footprints.geometry_mask();
    let (normals, _) = inpaint_uv(&tangent.image, &geometry, &footprints, config.dilation_margin);

    let count = |m: &[bool]| m.iter().filter(|&&b| b).count();
    let geometry_texels = count(&geometry);
    let frac = |n: usize| if geometry_texels == 0 { 0.0 } else { n as f64 / geometry_texels as f64 };
    let (o, f3, fu) = (count(&observed), count(&filled_3d), count(&filled_uv));
    let report = CoverageReport {
        resolution: config.resolution,
        geometry_texels,
        observed_texels: o,
        filled_3d_texels: f3,
        filled_uv_texels: fu,
        observed_fraction: frac(o),
        filled_3d_fraction: frac(f3),
        filled_uv_fraction: frac(fu),
        degenerate_uv_triangles: footprints.degenerate_triangles.clone(),
        overlapping_texels: footprints.overlapping_texels,
        degenerate_tangents: tangent.degenerate_tangents,
    };
    Ok(BakeOutput {
        albedo,
        normals,
        footprints,
        observed,
        filled_3d,
        filled_uv,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::orthogonal_cameras;
    use crate::mesh::{shapes, Vec2};
    use crate::raster::rasterize;

    fn front_camera(size: usize) -> Camera {
        orthogonal_cameras(size, 0.55).swap_remove(4)
    }

    #[test]
    fn quad_footprints_are_affine_in_texel_coordinates() {
        let fp = rasterize_uv_geometry(&shapes::quad(), 64).unwrap();
        assert_eq!(fp.valid_count(), 64 * 64);
        assert_eq!(fp.overlapping_texels, 0);
        for y in 0..64 {
            for x in 0..64 {
                let t = &fp.texels[y * 64 + x];
                let (u, v) = fp.texel_uv(x, y);
                assert!((t.world_pos - Vec3::new(u - 0.5, v - 0.5, 0.0)).norm() < 1e-12);
                assert_eq!(t.normal, Vec3::z());
            }
        }
    }

    #[test]
    fn missing_uvs_and_degenerate_triangles() {
        let mut m = shapes::quad();
        m.uvs.clear();
        for t in &mut m.triangles {
            for c in t {
                c.uv = None;
            }
        }
        assert!(matches!(rasterize_uv_geometry(&m, 8), Err(BakeError::Mesh(MeshError::MissingUVs))));
        assert!(matches!(bake_tangent_normals(&m, &rasterize_uv_geometry(&shapes::quad(), 4).unwrap()), Err(BakeError::Mesh(MeshError::MissingUVs))));

        let mut m = shapes::quad();
        m.uvs.push(Vec2::new(0.5, 0.5));
        let extra = m.uvs.len() - 1;
        let mut tri = m.triangles[0];
        for c in &mut tri {
            c.uv = Some(extra);
        }
        m.triangles.push(tri);
        let fp = rasterize_uv_geometry(&m, 16).unwrap();
        assert_eq!(fp.degenerate_triangles, vec![2]);
        assert_eq!(fp.valid_count(), 256);
    }

    #[test]
    fn overlapping_islands_keep_first_triangle() {
        let mut m = shapes::quad();
        let dup = m.triangles[1];
        m.triangles.push(dup);
        let fp = rasterize_uv_geometry(&m, 16).unwrap();
        assert!(fp.texels.iter().all(|t| t.tri_id != Some(2)));
        assert!(fp.overlapping_texels > 0);
    }

    fn single_view_scene(k: f64) -> (FootprintMap, UVAtlas, ImageGrid) {
        let mesh = shapes::quad_at(0.0, 0.8);
        let cam = front_camera(64);
        let view = ImageGrid::from_fn(3, 64, 64, |y, x, px| {
            px.copy_from_slice(&[x as f64 / 63.0, y as f64 / 63.0, 0.25]);
        });
        let depth = rasterize(&mesh, &cam).depth_map();
        let fp = rasterize_uv_geometry(&mesh, 32).unwrap();
        let cfg = BakeConfig { blend_power: k, ..BakeConfig::default() };
        let atlas = reproject(&[view.clone()], &[cam], &[depth], &fp, &cfg).unwrap();
        (fp, atlas, view)
    }

    #[test]
    fn front_facing_quad_single_observation() {
        let (fp, atlas, view) = single_view_scene(0.0);
        for i in 0..fp.texels.len() {
            assert_eq!(atlas.observations[i], 1);
            assert_eq!(atlas.accum_weight[i], 1.0);
        }
        // Direct warp oracle: bilinear view lookup at each texel's projection,
        // or one of the four surrounding pixels next to the silhouette.
        let cam = front_camera(64);
        let depth = rasterize(&shapes::quad_at(0.0, 0.8), &cam).depth_map();
        let (albedo, valid) = fuse(&atlas);
        assert!(valid.iter().all(|&v| v));
        let mut c = [0.0; 3];
        let mut interior = 0;
        for y in 0..32 {
            for x in 0..32 {
                let (px, py, _) = cam.project(&fp.texels[y * 32 + x].world_pos);
                let (x0, y0) = ((px - 0.5).floor() as usize, (py - 0.5).floor() as usize);
                let got = albedo.pixel(y, x);
                if [(x0, y0), (x0 + 1, y0), (x0, y0 + 1), (x0 + 1, y0 + 1)]
                    .iter()
                    .all(|&(a, b)| depth.get(a, b).is_finite())
                {
                    interior += 1;
                    view.sample_bilinear(px, py, &mut c);
                    for k in 0..3 {
                        assert!((got[k] - c[k]).abs() < 1e-12);
                    }
                } else {
                    let candidates = [(x0, y0), (x0 + 1, y0), (x0, y0 + 1), (x0 + 1, y0 + 1)];
                    assert!(candidates.iter().any(|&(a, b)| view.pixel(b, a) == got));
                }
            }
        }
        assert!(interior > 32 * 32 * 3 / 4);
    }

    #[test]
    fn count_and_size_mismatches() {
        let fp = rasterize_uv_geometry(&shapes::quad(), 8).unwrap();
        let cam = front_camera(16);
        let view = ImageGrid::filled(16, 16, &[0.5; 3]);
        let err = reproject(&[view.clone()], &[], &[], &fp, &BakeConfig::default()).unwrap_err();
        assert!(matches!(err, BakeError::CountMismatch { views: 1, cameras: 0, depths: 0 }));
        let depth = DepthMap { size: 8, data: vec![1.5; 64] };
        let err = reproject(&[view], &[cam], &[depth], &fp, &BakeConfig::default()).unwrap_err();
        assert!(matches!(err, BakeError::SizeMismatch { view: 0, .. }));
    }

    #[test]
    fn grazing_views_are_skipped() {
        let mesh = shapes::quad();
        let fp = rasterize_uv_geometry(&mesh, 8).unwrap();
        // The +X camera sees the quad edge-on: cos = 0.
        let cam = orthogonal_cameras(16, 0.55).swap_remove(0);
        let depth = rasterize(&mesh, &cam).depth_map();
        let view = ImageGrid::filled(16, 16, &[1.0; 3]);
        let cfg = BakeConfig { cosine_cutoff: 0.0, ..BakeConfig::default() };
        let atlas = reproject(&[view], &[cam], &[depth], &fp, &cfg).unwrap();
        assert!(atlas.observations.iter().all(|&n| n == 0));
        assert!(atlas.accum_weight.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn fusion_weights_two_observations() {
        let atlas = UVAtlas {
            resolution: 1,
            accum_color: vec![[0.3 * 0.2 + 0.7 * 0.9, 0.3, 0.7]],
            accum_weight: vec![1.0],
            observations: vec![2],
        };
        let (img, valid) = fuse(&atlas);
        assert!(valid[0]);
        assert!((img.get(0, 0, 0) - (0.3 * 0.2 + 0.7 * 0.9)).abs() < 1e-15);

        let empty = UVAtlas {
            resolution: 1,
            accum_color: vec![[0.0; 3]],
            accum_weight: vec![0.0],
            observations: vec![0],
        };
        let (img, valid) = fuse(&empty);
        assert!(!valid[0]);
        assert_eq!(img.pixel(0, 0), vec![0.0; 3]);
    }

    #[test]
    fn inpaint_3d_single_source_and_identity() {
        let fp = rasterize_uv_geometry(&shapes::quad(), 8).unwrap();
        let mut albedo = ImageGrid::filled(8, 8, &[0.0; 3]);
        for c in 0..3 {
            albedo.set(c, 3, 5, [0.1, 0.6, 0.9][c]);
        }
        let mut valid = vec![false; 64];
        valid[3 * 8 + 5] = true;
        let (out, filled) = inpaint_3d(&albedo, &valid, &fp, &BakeConfig::default()).unwrap();
        assert_eq!(filled.iter().filter(|&&f| f).count(), 63);
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(out.pixel(y, x), vec![0.1, 0.6, 0.9]);
            }
        }
        let all = vec![true; 64];
        let (same, filled) = inpaint_3d(&albedo, &all, &fp, &BakeConfig::default()).unwrap();
        assert_eq!(same, albedo);
        assert!(filled.iter().all(|&f| !f));
        assert!(matches!(
            inpaint_3d(&albedo, &[false; 64], &fp, &BakeConfig::default()),
            Err(BakeError::NoValidTexels)
        ));
    }

    #[test]
    fn inpaint_uv_margin_zero_and_full_atlas_are_identity() {
        let fp = rasterize_uv_geometry(&shapes::quad_at(0.0, 1.0), 8).unwrap();
        let albedo = ImageGrid::filled(8, 8, &[0.3; 3]);
        let (out, filled) = inpaint_uv(&albedo, &[true; 64], &fp, 4);
        assert_eq!(out, albedo);
        assert!(filled.iter().all(|&f| !f));

        let empty = FootprintMap {
            resolution: 8,
            texels: vec![TexelFootprint::EMPTY; 64],
            degenerate_triangles: vec![],
            overlapping_texels: 0,
        };
        let mut colored = vec![false; 64];
        colored[27] = true;
        let (out, _) = inpaint_uv(&albedo, &colored, &empty, 0);
        assert_eq!(out, albedo);
    }

    #[test]
    fn flat_quad_bakes_flat_normals() {
        let m = shapes::quad();
        let fp = rasterize_uv_geometry(&m, 16).unwrap();
        let tn = bake_tangent_normals(&m, &fp).unwrap();
        assert_eq!(tn.degenerate_tangents, 0);
        for y in 0..16 {
            for x in 0..16 {
                let p = tn.image.pixel(y, x);
                for c in 0..3 {
                    assert!((p[c] - FLAT_NORMAL[c]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn tangent_frame_follows_uv_axes() {
        let m = shapes::quad();
        let ([t, b, n], ok) = tangent_frame(&m, 0);
        assert!(ok);
        assert!((t - Vec3::x()).norm() < 1e-12);
        assert!((b - Vec3::y()).norm() < 1e-12);
        assert!((n - Vec3::z()).norm() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(BakeConfig::default().validate().is_ok());
        for bad in [
            BakeConfig { depth_epsilon: 0.0, ..Default::default() },
            BakeConfig { inpaint_knn: 0, ..Default::default() },
            BakeConfig { cosine_cutoff: 1.0, ..Default::default() },
            BakeConfig { blend_power: -1.0, ..Default::default() },
            BakeConfig { resolution: 0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(BakeError::InvalidConfig(_))));
        }
    }

    #[test]
    fn zero_views_reports_no_valid_texels() {
        let err = bake(&shapes::quad(), &[], &[], &[], &BakeConfig { resolution: 8, ..Default::default() }).unwrap_err();
        assert!(matches!(err, BakeError::NoValidTexels));
    }
}
