use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde_json::json;

use jigsaw3d::attention::invariant_suite;
use jigsaw3d::bake::bake as bake_views;
use jigsaw3d::camera::{orthogonal_cameras, random_view_cameras, Camera};
use jigsaw3d::config::{RunConfig, ViewSpec, RESOLVED_CONFIG_FILE};
use jigsaw3d::dataset::{build_sample, discover_meshes, write_manifest, write_sample};
use jigsaw3d::image::{BitDepth, ImageGrid};
use jigsaw3d::jigsaw::{center_crop_to_multiple, jigsaw as jigsaw_image, Mode};
use jigsaw3d::mesh::{load_mesh, normalize_mesh, TriangleMesh};
use jigsaw3d::metrics::{multi_view_style_score, FeatureBank};
use jigsaw3d::raster::{normal_map, position_map, rasterize, render_textured_supersampled, shade_textured, DepthMap};
use jigsaw3d::roundtrip::roundtrip as run_roundtrip;
use jigsaw3d::texture::default_checkerboard;

use crate::failure::Failure;
use crate::{
    output_path, AttnCheckArgs, BakeArgs, JigsawArgs, MetricsArgs, PairsArgs, RenderArgs, RoundtripArgs,
};

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::write(dir, e))
}

fn ensure_parent(path: &Path) -> Result<(), Failure> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Failure::write(path, e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::internal("io::Json", e))?;
    write_text(path, &(text + "\n"))
}

fn save_png(img: &ImageGrid, path: &Path, depth: BitDepth) -> Result<(), Failure> {
    ensure_parent(path)?;
    img.save_png(path, depth).map_err(|e| Failure::write(path, e))
}

/// Sibling of a file output holding the resolved config, e.g. `b.png` → `b.config.toml`.
fn config_echo_for(path: &Path) -> PathBuf {
    path.with_extension("config.toml")
}

fn echo_config(cfg: &RunConfig, path: &Path) -> Result<(), Failure> {
    ensure_parent(path)?;
    cfg.write_resolved(path).map_err(|e| Failure::write(path, e))?;
    info!("resolved config written to {}", path.display());
    Ok(())
}

fn require_file(path: &Path, code: &str) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::validation(code, format!("missing file {}", path.display())))
    }
}

fn load_normalized_mesh(path: &Path) -> Result<TriangleMesh, Failure> {
    Ok(normalize_mesh(&load_mesh(path)?)?)
}

pub fn jigsaw(cfg: &mut RunConfig, a: &JigsawArgs) -> Result<(), Failure> {
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(m) = a.mode {
        cfg.jigsaw.mode = m;
    }
    if let Some(s) = a.patch_size {
        cfg.jigsaw.patch_size = Some(s);
    }
    if let Some(r) = a.mask_ratio {
        cfg.jigsaw.mask_ratio = Some(r);
        if cfg.jigsaw.mode == Mode::Infer && r != 0.0 {
            warn!("mask ratio {r} ignored in infer mode");
        }
    }
    if let Some(b) = &a.background {
        cfg.jigsaw.background = b.clone();
    }
    let jc = cfg.jigsaw.to_config(cfg.seed);
    jc.validate()?;
    require_file(&a.input, "image::MissingFile")?;
    let (img, depth) = ImageGrid::load_png_with_depth(&a.input)?;
    let img = if a.crop { center_crop_to_multiple(&img, jc.patch_size)? } else { img };
    let out = jigsaw_image(&img, &jc, cfg.jigsaw.mode)?;

    let out_path = output_path(cfg, &a.out);
    save_png(&out.image, &out_path, depth)?;
    if let Some(p) = &a.dump_perm {
        let record = json!({
            "config": out.config,
            "permutation": out.permutation,
            "mask": out.mask,
        });
        write_json(&output_path(cfg, p), &record)?;
    }
    echo_config(cfg, &config_echo_for(&out_path))?;
    info!("wrote {}", out_path.display());
    Ok(())
}

pub fn render(cfg: &mut RunConfig, a: &RenderArgs) -> Result<(), Failure> {
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(v) = a.views {
        cfg.render.views = v;
    }
    if let Some(s) = a.size {
        cfg.render.size = s;
    }
    if let Some(h) = a.half_extent {
        cfg.render.half_extent = h;
    }
    cfg.render.supersample |= a.supersample;
    let r = &cfg.render;
    if r.size == 0 || !(r.half_extent > 0.0) {
        return Err(Failure::validation("render::InvalidConfig", "size and half_extent must be positive"));
    }
    let mesh = load_normalized_mesh(&a.mesh)?;
    let texture = match &a.texture {
        Some(path) => {
            mesh.require_uvs()?;
            require_file(path, "image::MissingFile")?;
            Some(ImageGrid::load_png(path)?.to_rgb())
        }
        None if mesh.require_uvs().is_ok() => Some(default_checkerboard()),
        None => {
            warn!("mesh has no texture coordinates; skipping color renders");
            None
        }
    };
    let cameras: Vec<Camera> = match r.views {
        ViewSpec::Ortho6 => orthogonal_cameras(r.size, r.half_extent),
        ViewSpec::Random(n) => random_view_cameras(
            n,
            cfg.seed,
            (r.elevation_deg[0], r.elevation_deg[1]),
            r.half_extent,
            r.size,
        ),
    };

    let dir = output_path(cfg, &a.out);
    create_dir(&dir)?;
    cameras.par_iter().enumerate().try_for_each(|(k, cam)| {
        let g = rasterize(&mesh, cam);
        if let Some(tex) = &texture {
            let color = if r.supersample {
                render_textured_supersampled(&mesh, tex, cam)?
            } else {
                shade_textured(&g, tex)
            };
            save_png(&color, &dir.join(format!("view_{k}_color.png")), BitDepth::Eight)?;
        }
        save_png(&position_map(&g), &dir.join(format!("view_{k}_position.png")), BitDepth::Sixteen)?;
        save_png(&normal_map(&g), &dir.join(format!("view_{k}_normal.png")), BitDepth::Sixteen)?;
        save_png(&g.depth_map().encode(cam), &dir.join(format!("view_{k}_depth.png")), BitDepth::Sixteen)
    })?;
    write_json(&dir.join("cameras.json"), &cameras)?;
    echo_config(cfg, &dir.join(RESOLVED_CONFIG_FILE))?;
    info!("rendered {} views into {}", cameras.len(), dir.display());
    Ok(())
}

pub fn pairs(cfg: &mut RunConfig, a: &PairsArgs) -> Result<(), Failure> {
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.refs {
        cfg.pairs.references = n;
    }
    if let Some(m) = a.mask_ratio_max {
        cfg.pairs.mask_ratio_max = m;
    }
    if let Some(s) = a.patch_size {
        cfg.pairs.patch_size = s;
    }
    if let Some(s) = a.size {
        cfg.pairs.image_size = s;
    }
    cfg.pairs.validate()?;
    if !a.meshes.is_dir() {
        return Err(Failure::validation(
            "dataset::MissingFile",
            format!("mesh directory {} does not exist", a.meshes.display()),
        ));
    }
    let sources = discover_meshes(&a.meshes)?;
    let root = output_path(cfg, &a.out);
    create_dir(&root)?;
    let entries = sources
        .par_iter()
        .map(|src| {
            let sample = build_sample(src, &cfg.pairs, cfg.seed)?;
            info!("built sample {}", src.id);
            Ok(write_sample(&sample, &root)?)
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let manifest = write_manifest(entries, &root)?;
    echo_config(cfg, &root.join(RESOLVED_CONFIG_FILE))?;
    println!("wrote {} samples to {}", manifest.samples.len(), root.display());
    Ok(())
}

fn list_views(paths: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    if let [dir] = paths {
        if dir.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(dir)
                .map_err(|e| Failure::validation("metrics::Io", format!("{}: {e}", dir.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("png"))
                .collect();
            files.sort();
            return Ok(files);
        }
    }
    Ok(paths.to_vec())
}

pub fn metrics(cfg: &mut RunConfig, a: &MetricsArgs) -> Result<(), Failure> {
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    require_file(&a.reference, "image::MissingFile")?;
    let reference = ImageGrid::load_png(&a.reference)?.to_rgb();
    let paths = list_views(&a.views)?;
    let views = paths
        .iter()
        .map(|p| {
            require_file(p, "image::MissingFile")?;
            Ok(ImageGrid::load_png(p)?.to_rgb())
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let report = multi_view_style_score(&views, &reference, &FeatureBank::new(cfg.seed))?;
    let out = output_path(cfg, &a.out);
    write_json(&out, &report)?;
    echo_config(cfg, &config_echo_for(&out))?;
    info!("scored {} views", views.len());
    Ok(())
}

pub fn attn_check(cfg: &mut RunConfig, a: &AttnCheckArgs) -> Result<(), Failure> {
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let report = invariant_suite(cfg.seed)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).map_err(|e| Failure::internal("io::Json", e))?
    );
    if let Some(p) = &a.out {
        let out = output_path(cfg, p);
        write_json(&out, &report)?;
        echo_config(cfg, &config_echo_for(&out))?;
    }
    if report.pass {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        Err(Failure::internal("attention::InvariantViolated", failed.join(", ")))
    }
}

pub fn bake(cfg: &mut RunConfig, a: &BakeArgs) -> Result<(), Failure> {
    let b = &mut cfg.bake;
    if let Some(v) = a.resolution {
        b.resolution = v;
    }
    if let Some(v) = a.depth_eps {
        b.depth_epsilon = v;
    }
    if let Some(v) = a.cos_cutoff {
        b.cosine_cutoff = v;
    }
    if let Some(v) = a.blend_power {
        b.blend_power = v;
    }
    if let Some(v) = a.knn {
        b.inpaint_knn = v;
    }
    if let Some(v) = a.margin {
        b.dilation_margin = v;
    }
    b.validate()?;
    let mesh = load_normalized_mesh(&a.mesh)?;
    mesh.require_uvs()?;
    require_file(&a.cameras, "bake::MissingFile")?;
    let text = fs::read_to_string(&a.cameras)
        .map_err(|e| Failure::validation("bake::Cameras", format!("{}: {e}", a.cameras.display())))?;
    let cameras: Vec<Camera> = serde_json::from_str(&text)
        .map_err(|e| Failure::validation("bake::Cameras", format!("{}: {e}", a.cameras.display())))?;
    for (k, c) in cameras.iter().enumerate() {
        c.validate()
            .map_err(|e| Failure::validation("bake::Cameras", format!("camera {k}: {e}")))?;
    }

    let mut views = Vec::with_capacity(cameras.len());
    let mut depths = Vec::with_capacity(cameras.len());
    for (k, cam) in cameras.iter().enumerate() {
        let color = a.views.join(format!("view_{k}_color.png"));
        require_file(&color, "bake::MissingFile")?;
        views.push(ImageGrid::load_png(&color)?.to_rgb());
        let depth = a.views.join(format!("view_{k}_depth.png"));
        depths.push(if depth.is_file() {
            DepthMap::decode(&ImageGrid::load_png(&depth)?, cam)
        } else {
            rasterize(&mesh, cam).depth_map()
        });
    }
    let out = bake_views(&mesh, &views, &cameras, &depths, &cfg.bake)?;

    let texture = output_path(cfg, &a.out);
    save_png(&out.albedo, &texture, BitDepth::Eight)?;
    if let Some(p) = &a.normals {
        save_png(&out.normals, &output_path(cfg, p), BitDepth::Eight)?;
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&out.report).map_err(|e| Failure::internal("io::Json", e))?
    );
    if let Some(p) = &a.report {
        write_json(&output_path(cfg, p), &out.report)?;
    }
    echo_config(cfg, &config_echo_for(&texture))?;
    Ok(())
}

pub fn roundtrip(cfg: &mut RunConfig, a: &RoundtripArgs) -> Result<(), Failure> {
    if let Some(r) = a.resolution {
        cfg.bake.resolution = r;
    }
    if let Some(s) = a.view_size {
        cfg.roundtrip.view_size = s;
    }
    cfg.bake.validate()?;
    if cfg.roundtrip.view_size == 0 || !(cfg.roundtrip.half_extent > 0.0) {
        return Err(Failure::validation(
            "roundtrip::InvalidConfig",
            "view_size and half_extent must be positive",
        ));
    }
    let mesh = load_mesh(&a.mesh)?;
    mesh.require_uvs()?;
    let texture = match &a.texture {
        Some(p) => {
            require_file(p, "image::MissingFile")?;
            ImageGrid::load_png(p)?.to_rgb()
        }
        None => default_checkerboard(),
    };
    let rt = run_roundtrip(&mesh, &texture, &cfg.roundtrip_config())?;
    println!(
        "{}",
        serde_json::to_string_pretty(&rt.report).map_err(|e| Failure::internal("io::Json", e))?
    );
    if let Some(dir) = &a.out {
        let dir = output_path(cfg, dir);
        create_dir(&dir)?;
        save_png(&rt.baked.albedo, &dir.join("texture.png"), BitDepth::Eight)?;
        write_json(&dir.join("report.json"), &rt.report)?;
        echo_config(cfg, &dir.join(RESOLVED_CONFIG_FILE))?;
    }
    if rt.report.pass {
        Ok(())
    } else {
        Err(Failure::internal(
            "roundtrip::ThresholdExceeded",
            format!("mean abs error {:.6} is not below 2/255", rt.report.mean_abs_error),
        ))
    }
}
