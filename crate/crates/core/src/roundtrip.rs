//! Render a textured mesh from the six axis views, bake the renders back
//! into UV space and measure how well the texture is recovered.

use serde::{Deserialize, Serialize};

use crate::bake::{bake, BakeConfig, BakeError, BakeOutput, CoverageReport};
use crate::camera::{orthogonal_cameras, Camera, DEFAULT_HALF_EXTENT, DEFAULT_IMAGE_SIZE};
use crate::image::ImageGrid;
use crate::mesh::{normalize_mesh, TriangleMesh};
use crate::raster::{rasterize, shade_textured};

/// Pass threshold on the mean absolute texel error.
pub const TEXTURE_TOLERANCE: f64 = 2.0 / 255.0;
/// Pass threshold on the mean absolute error of re-rendered views.
pub const RERENDER_TOLERANCE: f64 = 3.0 / 255.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoundtripConfig {
    pub view_size: usize,
    pub half_extent: f64,
    pub bake: BakeConfig,
}

impl Default for RoundtripConfig {
    fn default() -> Self {
        Self {
            view_size: DEFAULT_IMAGE_SIZE,
            half_extent: DEFAULT_HALF_EXTENT,
            bake: BakeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripReport {
    /// Over observed texels, against the source texture sampled at each texel's UV.
    pub mean_abs_error: f64,
    /// Over covered pixels of the six views, re-rendered with the baked texture.
    pub rerender_error: f64,
    pub coverage: CoverageReport,
    pub pass: bool,
    pub rerender_pass: bool,
}

pub struct Roundtrip {
    pub report: RoundtripReport,
    pub cameras: Vec<Camera>,
    pub views: Vec<ImageGrid>,
    pub baked: BakeOutput,
}

/// The source texture resampled at every texel center of an `R×R` atlas.
pub fn resample_texture(texture: &ImageGrid, resolution: usize) -> ImageGrid {
    let tex = texture.to_rgb();
    let r = resolution as f64;
    let mut rgb = [0.0; 3];
    ImageGrid::from_fn(3, resolution, resolution, |y, x, px| {
        tex.sample_uv((x as f64 + 0.5) / r, 1.0 - (y as f64 + 0.5) / r, &mut rgb);
        px.copy_from_slice(&rgb);
    })
}

pub fn roundtrip(mesh: &TriangleMesh, texture: &ImageGrid, config: &RoundtripConfig) -> Result<Roundtrip, BakeError> {
    config.bake.validate()?;
    mesh.require_uvs()?;
    let mesh = normalize_mesh(mesh)?;
    let cameras = orthogonal_cameras(config.view_size, config.half_extent);
    let gbuffers: Vec<_> = cameras.iter().map(|c| rasterize(&mesh, c)).collect();
    let views: Vec<ImageGrid> = gbuffers.iter().map(|g| shade_textured(g, texture)).collect();
    let depths: Vec<_> = gbuffers.iter().map(|g| g.depth_map()).collect();
    let baked = bake(&mesh, &views, &cameras, &depths, &config.bake)?;

    let reference = resample_texture(texture, config.bake.resolution);
    let mean_abs_error = baked.albedo.mean_abs_diff(&reference, Some(&baked.observed));

    let (mut total, mut count) = (0.0, 0usize);
    for (g, view) in gbuffers.iter().zip(&views) {
        let coverage = g.coverage();
        let n = g.covered_count();
        total += shade_textured(g, &baked.albedo).mean_abs_diff(view, Some(&coverage)) * n as f64;
        count += n;
    }
    let rerender_error = if count == 0 { 0.0 } else { total / count as f64 };

    let report = RoundtripReport {
        mean_abs_error,
        rerender_error,
        coverage: baked.report.clone(),
        pass: mean_abs_error < TEXTURE_TOLERANCE,
        rerender_pass: rerender_error < RERENDER_TOLERANCE,
    };
    Ok(Roundtrip {
        report,
        cameras,
        views,
        baked,
    })
}
