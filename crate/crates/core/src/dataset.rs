//! Style–texture training pairs: six axis-aligned target views of a textured
//! mesh plus jigsawed reference renders from random directions.
//!
//! Every image in a [`SamplePair`] is snapped to 16-bit precision when the
//! sample is built, so writing it as 16-bit PNG and reading it back
//! reproduces the pixel data exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{
    orthogonal_cameras, random_view_cameras, Camera, DEFAULT_ELEVATION_DEG, DEFAULT_HALF_EXTENT,
    DEFAULT_IMAGE_SIZE, REFERENCE_VIEW_COUNT,
};
use crate::image::{BitDepth, ImageError, ImageGrid};
use crate::jigsaw::{
    jigsaw, JigsawConfig, JigsawError, MaskPattern, Mode, PatchPermutation, DEFAULT_BACKGROUND, MAX_TRAIN_MASK_RATIO,
    TRAIN_PATCH_SIZE,
};
use crate::mesh::{normalize_mesh, MeshError, TriangleMesh};
use crate::raster::{normal_map, position_map, rasterize, render_textured_supersampled, shade_textured};
use crate::rng::{derive_seed, Stream};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const META_FILE: &str = "meta.json";

const CAMERA_STREAM: u64 = 10;
const MASK_RATIO_STREAM: u64 = 11;
const JIGSAW_STREAM_BASE: u64 = 1000;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Jigsaw(#[from] JigsawError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing file {0}")]
    MissingFile(String),
    #[error("manifest version {found} is not supported (expected {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("corrupt manifest: {0}")]
    CorruptManifest(String),
    #[error("duplicate mesh id {0}")]
    DuplicateId(String),
    #[error("invalid sample config: {0}")]
    InvalidConfig(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub image_size: usize,
    pub half_extent: f64,
    pub references: usize,
    /// Elevation band of reference cameras in degrees.
    pub elevation_deg: [f64; 2],
    pub patch_size: usize,
    /// Each reference draws its mask ratio uniformly from `[0, mask_ratio_max]`.
    pub mask_ratio_max: f64,
    pub background: Vec<f64>,
    /// Render target colors with 2×2 supersampling.
    pub supersample_targets: bool,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            image_size: DEFAULT_IMAGE_SIZE,
            half_extent: DEFAULT_HALF_EXTENT,
            references: REFERENCE_VIEW_COUNT,
            elevation_deg: [DEFAULT_ELEVATION_DEG.0, DEFAULT_ELEVATION_DEG.1],
            patch_size: TRAIN_PATCH_SIZE,
            mask_ratio_max: MAX_TRAIN_MASK_RATIO,
            background: vec![DEFAULT_BACKGROUND],
            supersample_targets: false,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::InvalidConfig(m));
        if self.references == 0 {
            return bad("at least one reference view is required".into());
        }
        if self.image_size == 0 || self.patch_size == 0 || self.image_size % self.patch_size != 0 {
            return bad(format!(
                "image_size {} must be a positive multiple of patch_size {}",
                self.image_size, self.patch_size
            ));
        }
        if !(0.0..=1.0).contains(&self.mask_ratio_max) {
            return bad(format!("mask_ratio_max {} outside [0, 1]", self.mask_ratio_max));
        }
        if !(self.half_extent > 0.0) {
            return bad("half_extent must be positive".into());
        }
        let [lo, hi] = self.elevation_deg;
        if !(-90.0..=90.0).contains(&lo) || !(-90.0..=90.0).contains(&hi) || lo > hi {
            return bad(format!("elevation band [{lo}, {hi}] is not within [-90, 90]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetView {
    pub color: ImageGrid,
    pub position: ImageGrid,
    pub normal: ImageGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub raw: ImageGrid,
    pub jigsaw: ImageGrid,
    pub permutation: PatchPermutation,
    pub mask: MaskPattern,
    /// Effective jigsaw settings, including the drawn mask ratio.
    pub config: JigsawConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub mesh_id: String,
    pub seed: u64,
    pub config: SampleConfig,
    pub target_cameras: Vec<Camera>,
    pub targets: Vec<TargetView>,
    pub reference_cameras: Vec<Camera>,
    pub references: Vec<Reference>,
    pub caption: Option<String>,
}

fn snap(img: ImageGrid) -> ImageGrid {
    img.quantized(BitDepth::Sixteen)
}

/// Renders targets and jigsawed references for one textured mesh.
pub fn make_sample(
    mesh_id: &str,
    mesh: &TriangleMesh,
    texture: &ImageGrid,
    config: &SampleConfig,
    seed: u64,
    caption: Option<String>,
) -> Result<SamplePair, DatasetError> {
    config.validate()?;
    mesh.require_uvs()?;
    let mesh = normalize_mesh(mesh)?;
    let texture = texture.to_rgb();

    let target_cameras = orthogonal_cameras(config.image_size, config.half_extent);
    let mut targets = Vec::with_capacity(target_cameras.len());
    for cam in &target_cameras {
        let g = rasterize(&mesh, cam);
        let color = if config.supersample_targets {
            render_textured_supersampled(&mesh, &texture, cam)?
        } else {
            shade_textured(&g, &texture)
        };
        targets.push(TargetView {
            color: snap(color),
            position: snap(position_map(&g)),
            normal: snap(normal_map(&g)),
        });
    }

    let [lo, hi] = config.elevation_deg;
    let reference_cameras = random_view_cameras(
        config.references,
        derive_seed(seed, CAMERA_STREAM),
        (lo, hi),
        config.half_extent,
        config.image_size,
    );
    let mut ratios = Stream::derived(seed, MASK_RATIO_STREAM);
    let mut references = Vec::with_capacity(reference_cameras.len());
    for (j, cam) in reference_cameras.iter().enumerate() {
        let raw = snap(shade_textured(&rasterize(&mesh, cam), &texture));
        let jig_config = JigsawConfig {
            patch_size: config.patch_size,
            mask_ratio: ratios.uniform(0.0, config.mask_ratio_max),
            background: config.background.clone(),
            seed: derive_seed(seed, JIGSAW_STREAM_BASE + j as u64),
        };
        let out = jigsaw(&raw, &jig_config, Mode::Train)?;
        references.push(Reference {
            raw,
            jigsaw: snap(out.image),
            permutation: out.permutation,
            mask: out.mask,
            config: out.config,
        });
    }

    Ok(SamplePair {
        mesh_id: mesh_id.to_string(),
        seed,
        config: config.clone(),
        target_cameras,
        targets,
        reference_cameras,
        references,
        caption,
    })
}

pub const TARGET_KINDS: [&str; 3] = ["color", "position", "normal"];
pub const REFERENCE_KINDS: [&str; 2] = ["raw", "jigsaw"];

pub fn target_file(k: usize, kind: &str) -> String {
    format!("target_{k}_{kind}.png")
}

pub fn reference_file(j: usize, kind: &str) -> String {
    format!("ref_{j}_{kind}.png")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceRecord {
    pub camera: Camera,
    pub jigsaw: JigsawConfig,
    pub permutation: PatchPermutation,
    pub mask: MaskPattern,
}

/// Contents of `<mesh_id>/meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleMeta {
    pub mesh_id: String,
    pub seed: u64,
    pub config: SampleConfig,
    pub caption: Option<String>,
    pub target_cameras: Vec<Camera>,
    pub references: Vec<ReferenceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub mesh_id: String,
    /// Paths relative to the dataset root.
    pub files: Vec<String>,
    pub seed: u64,
    pub config: SampleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub samples: Vec<ManifestEntry>,
}

fn sample_images(sample: &SamplePair) -> Vec<(String, &ImageGrid)> {
    let mut out = Vec::new();
    for (k, t) in sample.targets.iter().enumerate() {
        for (kind, img) in TARGET_KINDS.iter().zip([&t.color, &t.position, &t.normal]) {
            out.push((target_file(k, kind), img));
        }
    }
    for (j, r) in sample.references.iter().enumerate() {
        for (kind, img) in REFERENCE_KINDS.iter().zip([&r.raw, &r.jigsaw]) {
            out.push((reference_file(j, kind), img));
        }
    }
    out
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DatasetError> {
    let text = serde_json::to_string_pretty(value).expect("dataset records serialize");
    fs::write(path, text + "\n").map_err(io_err(path))
}

fn check_id(id: &str) -> Result<(), DatasetError> {
    let ok = !id.is_empty() && id != "." && id != ".." && !id.contains(['/', '\\']);
    if ok {
        Ok(())
    } else {
        Err(DatasetError::InvalidConfig(format!("mesh id {id:?} is not a plain directory name")))
    }
}

/// Writes one sample's images and `meta.json` under `root/<mesh_id>/`.
pub fn write_sample(sample: &SamplePair, root: &Path) -> Result<ManifestEntry, DatasetError> {
    check_id(&sample.mesh_id)?;
    let dir = root.join(&sample.mesh_id);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut files = Vec::new();
    for (name, img) in sample_images(sample) {
        img.save_png(&dir.join(&name), BitDepth::Sixteen)?;
        files.push(format!("{}/{name}", sample.mesh_id));
    }
    let meta = SampleMeta {
        mesh_id: sample.mesh_id.clone(),
        seed: sample.seed,
        config: sample.config.clone(),
        caption: sample.caption.clone(),
        target_cameras: sample.target_cameras.clone(),
        references: sample
            .references
            .iter()
            .zip(&sample.reference_cameras)
            .map(|(r, cam)| ReferenceRecord {
                camera: cam.clone(),
                jigsaw: r.config.clone(),
                permutation: r.permutation.clone(),
                mask: r.mask.clone(),
            })
            .collect(),
    };
    write_json(&dir.join(META_FILE), &meta)?;
    files.push(format!("{}/{META_FILE}", sample.mesh_id));
    Ok(ManifestEntry {
        mesh_id: sample.mesh_id.clone(),
        files,
        seed: sample.seed,
        config: sample.config.clone(),
    })
}

/// Writes `root/manifest.json` after checking that ids are unique and every
/// listed file exists.
pub fn write_manifest(entries: Vec<ManifestEntry>, root: &Path) -> Result<Manifest, DatasetError> {
    let mut seen = std::collections::BTreeSet::new();
    for e in &entries {
        if !seen.insert(e.mesh_id.as_str()) {
            return Err(DatasetError::DuplicateId(e.mesh_id.clone()));
        }
        for f in &e.files {
            let path = root.join(f);
            if !path.is_file() {
                return Err(DatasetError::MissingFile(path.display().to_string()));
            }
        }
    }
    fs::create_dir_all(root).map_err(io_err(root))?;
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        samples: entries,
    };
    write_json(&root.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Writes every sample under `root/<mesh_id>/` and the manifest at
/// `root/manifest.json`.
pub fn write_dataset(samples: &[SamplePair], root: &Path) -> Result<Manifest, DatasetError> {
    let mut seen = std::collections::BTreeSet::new();
    for s in samples {
        check_id(&s.mesh_id)?;
        if !seen.insert(s.mesh_id.as_str()) {
            return Err(DatasetError::DuplicateId(s.mesh_id.clone()));
        }
    }
    let entries = samples.iter().map(|s| write_sample(s, root)).collect::<Result<Vec<_>, _>>()?;
    write_manifest(entries, root)
}

fn read_text(path: &Path) -> Result<String, DatasetError> {
    if !path.is_file() {
        return Err(DatasetError::MissingFile(path.display().to_string()));
    }
    fs::read_to_string(path).map_err(io_err(path))
}

fn read_png(path: &Path) -> Result<ImageGrid, DatasetError> {
    if !path.is_file() {
        return Err(DatasetError::MissingFile(path.display().to_string()));
    }
    Ok(ImageGrid::load_png(path)?)
}

pub fn read_manifest(root: &Path) -> Result<Manifest, DatasetError> {
    let text = read_text(&root.join(MANIFEST_FILE))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| DatasetError::CorruptManifest(e.to_string()))?;
    let version = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| DatasetError::CorruptManifest("missing integer field `version`".into()))?;
    if version != MANIFEST_VERSION as u64 {
        return Err(DatasetError::VersionMismatch {
            found: version.min(u32::MAX as u64) as u32,
            supported: MANIFEST_VERSION,
        });
    }
    serde_json::from_value(value).map_err(|e| DatasetError::CorruptManifest(e.to_string()))
}

/// Reconstructs every sample listed in `root/manifest.json`.
pub fn read_dataset(root: &Path) -> Result<Vec<SamplePair>, DatasetError> {
    let manifest = read_manifest(root)?;
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for entry in &manifest.samples {
        check_id(&entry.mesh_id).map_err(|e| DatasetError::CorruptManifest(e.to_string()))?;
        let dir = root.join(&entry.mesh_id);
        let meta_path = dir.join(META_FILE);
        let meta: SampleMeta = serde_json::from_str(&read_text(&meta_path)?)
            .map_err(|e| DatasetError::CorruptManifest(format!("{}: {e}", meta_path.display())))?;
        let mut targets = Vec::with_capacity(meta.target_cameras.len());
        for k in 0..meta.target_cameras.len() {
            let [color, position, normal] = TARGET_KINDS.map(|kind| dir.join(target_file(k, kind)));
            targets.push(TargetView {
                color: read_png(&color)?,
                position: read_png(&position)?,
                normal: read_png(&normal)?,
            });
        }
        let mut references = Vec::with_capacity(meta.references.len());
        let mut reference_cameras = Vec::with_capacity(meta.references.len());
        for (j, rec) in meta.references.into_iter().enumerate() {
            references.push(Reference {
                raw: read_png(&dir.join(reference_file(j, "raw")))?,
                jigsaw: read_png(&dir.join(reference_file(j, "jigsaw")))?,
                permutation: rec.permutation,
                mask: rec.mask,
                config: rec.jigsaw,
            });
            reference_cameras.push(rec.camera);
        }
        samples.push(SamplePair {
            mesh_id: meta.mesh_id,
            seed: meta.seed,
            config: meta.config,
            target_cameras: meta.target_cameras,
            targets,
            reference_cameras,
            references,
            caption: meta.caption,
        });
    }
    Ok(samples)
}

/// A mesh found by [`discover_meshes`] with its texture and optional caption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeshSource {
    pub id: String,
    pub mesh: PathBuf,
    pub texture: PathBuf,
    pub caption: Option<PathBuf>,
}

/// Lists `<name>.obj` files in `dir` (sorted by name), each paired with
/// `<name>.png` and, when present, `<name>.txt`.
pub fn discover_meshes(dir: &Path) -> Result<Vec<MeshSource>, DatasetError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("obj") {
            continue;
        }
        let Some(id) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let texture = path.with_extension("png");
        if !texture.is_file() {
            return Err(DatasetError::MissingFile(texture.display().to_string()));
        }
        let caption = Some(path.with_extension("txt")).filter(|p| p.is_file());
        out.push(MeshSource {
            id: id.to_string(),
            mesh: path.clone(),
            texture,
            caption,
        });
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// 64-bit FNV-1a, used to derive per-mesh seeds from ids.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Seed for one mesh, independent of which other meshes are present.
pub fn sample_seed(seed: u64, mesh_id: &str) -> u64 {
    derive_seed(seed, fnv1a(mesh_id.as_bytes()))
}

/// Loads a discovered mesh and builds its sample.
pub fn build_sample(source: &MeshSource, config: &SampleConfig, seed: u64) -> Result<SamplePair, DatasetError> {
    let mesh = crate::mesh::load_mesh(&source.mesh)?;
    let texture = ImageGrid::load_png(&source.texture)?;
    let caption = match &source.caption {
        Some(p) => Some(read_text(p)?.trim().to_string()),
        None => None,
    };
    make_sample(&source.id, &mesh, &texture, config, sample_seed(seed, &source.id), caption)
}
