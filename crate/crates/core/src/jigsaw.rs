//! Patch shuffle and patch masking.
//!
//! An image is cut into an R×Q grid of S×S cells. [`shuffle`] relocates
//! whole cells according to a [`PatchPermutation`]; [`apply_mask`] replaces
//! masked cells with a per-channel background value. Cells are indexed
//! row-major: cell `(i, j)` has index `i * cols + j`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::ImageGrid;
use crate::rng::Stream;

pub const DEFAULT_BACKGROUND: f64 = 0.5;
pub const TRAIN_PATCH_SIZE: usize = 64;
pub const INFER_PATCH_SIZE: usize = 128;
pub const MAX_TRAIN_MASK_RATIO: f64 = 0.25;

#[derive(Debug, Error, PartialEq)]
pub enum JigsawError {
    #[error("image {height}x{width} is not divisible into {patch_size}x{patch_size} patches")]
    NonDivisibleDimensions {
        height: usize,
        width: usize,
        patch_size: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid jigsaw config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Mode::Train),
            "infer" => Ok(Mode::Infer),
            other => Err(format!("unknown jigsaw mode `{other}` (expected train|infer)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JigsawConfig {
    pub patch_size: usize,
    pub mask_ratio: f64,
    /// One value per channel; a single value is broadcast to every channel.
    pub background: Vec<f64>,
    pub seed: u64,
}

impl JigsawConfig {
    /// Training defaults: 64-pixel patches, mask ratio at the top of the
    /// training range.
    pub fn train(seed: u64) -> Self {
        Self {
            patch_size: TRAIN_PATCH_SIZE,
            mask_ratio: MAX_TRAIN_MASK_RATIO,
            background: vec![DEFAULT_BACKGROUND],
            seed,
        }
    }

    /// Inference defaults: 128-pixel patches, no masking.
    pub fn infer(seed: u64) -> Self {
        Self {
            patch_size: INFER_PATCH_SIZE,
            mask_ratio: 0.0,
            background: vec![DEFAULT_BACKGROUND],
            seed,
        }
    }

    pub fn for_mode(mode: Mode, seed: u64) -> Self {
        match mode {
            Mode::Train => Self::train(seed),
            Mode::Infer => Self::infer(seed),
        }
    }

    pub fn validate(&self) -> Result<(), JigsawError> {
        if self.patch_size == 0 {
            return Err(JigsawError::InvalidConfig("patch_size must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.mask_ratio) {
            return Err(JigsawError::InvalidConfig(format!(
                "mask_ratio {} outside [0, 1]",
                self.mask_ratio
            )));
        }
        if self.background.is_empty() || self.background.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(JigsawError::InvalidConfig(
                "background needs one or more values in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Background broadcast to `channels` entries.
    pub fn background_for(&self, channels: usize) -> Result<Vec<f64>, JigsawError> {
        match self.background.len() {
            1 => Ok(vec![self.background[0]; channels]),
            n if n == channels => Ok(self.background.clone()),
            n => Err(JigsawError::DimensionMismatch(format!(
                "background has {n} values for a {channels}-channel image"
            ))),
        }
    }
}

/// Bijection from destination cell to source cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PermutationRecord", into = "PermutationRecord")]
pub struct PatchPermutation {
    rows: usize,
    cols: usize,
    mapping: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct PermutationRecord {
    rows: usize,
    cols: usize,
    mapping: Vec<usize>,
}

impl TryFrom<PermutationRecord> for PatchPermutation {
    type Error = JigsawError;

    fn try_from(r: PermutationRecord) -> Result<Self, Self::Error> {
        PatchPermutation::new(r.rows, r.cols, r.mapping)
    }
}

impl From<PatchPermutation> for PermutationRecord {
    fn from(p: PatchPermutation) -> Self {
        PermutationRecord {
            rows: p.rows,
            cols: p.cols,
            mapping: p.mapping,
        }
    }
}

impl PatchPermutation {
    pub fn new(rows: usize, cols: usize, mapping: Vec<usize>) -> Result<Self, JigsawError> {
        let n = rows * cols;
        if mapping.len() != n {
            return Err(JigsawError::DimensionMismatch(format!(
                "mapping has {} entries for a {rows}x{cols} grid",
                mapping.len()
            )));
        }
        let mut seen = vec![false; n];
        for &m in &mapping {
            if m >= n || std::mem::replace(&mut seen[m], true) {
                return Err(JigsawError::InvalidConfig(
                    "mapping is not a bijection".into(),
                ));
            }
        }
        Ok(Self { rows, cols, mapping })
    }

    pub fn identity(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            mapping: (0..rows * cols).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Source cell for each destination cell.
    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.mapping.len()];
        for (dst, &src) in self.mapping.iter().enumerate() {
            inv[src] = dst;
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            mapping: inv,
        }
    }

    /// The permutation equivalent to shuffling by `self` and then by `next`.
    pub fn then(&self, next: &PatchPermutation) -> Self {
        assert_eq!(self.mapping.len(), next.mapping.len());
        Self {
            rows: self.rows,
            cols: self.cols,
            mapping: next.mapping.iter().map(|&m| self.mapping[m]).collect(),
        }
    }
}

/// Per-cell visibility.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskPattern {
    pub rows: usize,
    pub cols: usize,
    pub visible: Vec<bool>,
}

impl MaskPattern {
    pub fn all_visible(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            visible: vec![true; rows * cols],
        }
    }

    pub fn masked_count(&self) -> usize {
        self.visible.iter().filter(|v| !**v).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JigsawOutput {
    pub image: ImageGrid,
    pub permutation: PatchPermutation,
    pub mask: MaskPattern,
    /// Effective config; in inference mode `mask_ratio` is recorded as 0.
    pub config: JigsawConfig,
}

const PERMUTATION_STREAM: u64 = 1;
const MASK_STREAM: u64 = 2;

pub fn partition(image: &ImageGrid, patch_size: usize) -> Result<(usize, usize), JigsawError> {
    let (h, w) = (image.height(), image.width());
    if patch_size == 0 || h % patch_size != 0 || w % patch_size != 0 || h == 0 || w == 0 {
        return Err(JigsawError::NonDivisibleDimensions {
            height: h,
            width: w,
            patch_size,
        });
    }
    Ok((h / patch_size, w / patch_size))
}

/// Center crop to the largest size divisible by `patch_size` in both axes.
pub fn center_crop_to_multiple(image: &ImageGrid, patch_size: usize) -> Result<ImageGrid, JigsawError> {
    if patch_size == 0 {
        return Err(JigsawError::InvalidConfig("patch_size must be >= 1".into()));
    }
    let h = image.height() / patch_size * patch_size;
    let w = image.width() / patch_size * patch_size;
    if h == 0 || w == 0 {
        return Err(JigsawError::NonDivisibleDimensions {
            height: image.height(),
            width: image.width(),
            patch_size,
        });
    }
    let y0 = (image.height() - h) / 2;
    let x0 = (image.width() - w) / 2;
    Ok(ImageGrid::from_fn(image.channels(), h, w, |y, x, px| {
        for (c, v) in px.iter_mut().enumerate() {
            *v = image.get(c, y0 + y, x0 + x);
        }
    }))
}

/// Uniform random permutation of `rows * cols` cells (Fisher–Yates).
pub fn make_permutation(rows: usize, cols: usize, seed: u64) -> PatchPermutation {
    let mut mapping: Vec<usize> = (0..rows * cols).collect();
    Stream::new(seed).shuffle(&mut mapping);
    PatchPermutation { rows, cols, mapping }
}

/// Each cell is independently visible with probability `1 - mask_ratio`.
pub fn make_mask(rows: usize, cols: usize, mask_ratio: f64, seed: u64) -> MaskPattern {
    let mut rng = Stream::new(seed);
    let visible = (0..rows * cols).map(|_| rng.next_f64() >= mask_ratio).collect();
    MaskPattern { rows, cols, visible }
}

fn check_grid(image: &ImageGrid, rows: usize, cols: usize, patch_size: usize) -> Result<(), JigsawError> {
    let grid = partition(image, patch_size)?;
    if grid != (rows, cols) {
        return Err(JigsawError::DimensionMismatch(format!(
            "{rows}x{cols} cell layout does not match the {}x{} partition",
            grid.0, grid.1
        )));
    }
    Ok(())
}

/// Destination cell `d` receives source cell `perm.mapping()[d]`.
pub fn shuffle(image: &ImageGrid, perm: &PatchPermutation, patch_size: usize) -> Result<ImageGrid, JigsawError> {
    check_grid(image, perm.rows, perm.cols, patch_size)?;
    let (h, w, s) = (image.height(), image.width(), patch_size);
    let mut data = vec![0.0; image.data().len()];
    let src = image.data();
    for c in 0..image.channels() {
        let base = c * h * w;
        for (dst_cell, &src_cell) in perm.mapping.iter().enumerate() {
            let (di, dj) = (dst_cell / perm.cols, dst_cell % perm.cols);
            let (si, sj) = (src_cell / perm.cols, src_cell % perm.cols);
            for r in 0..s {
                let d = base + (di * s + r) * w + dj * s;
                let o = base + (si * s + r) * w + sj * s;
                data[d..d + s].copy_from_slice(&src[o..o + s]);
            }
        }
    }
    Ok(ImageGrid::new(image.channels(), h, w, data).expect("relocated values stay valid"))
}

/// Inverse of [`shuffle`] for the same permutation.
pub fn unshuffle(image: &ImageGrid, perm: &PatchPermutation, patch_size: usize) -> Result<ImageGrid, JigsawError> {
    shuffle(image, &perm.inverse(), patch_size)
}

pub fn apply_mask(
    image: &ImageGrid,
    mask: &MaskPattern,
    background: &[f64],
    patch_size: usize,
) -> Result<ImageGrid, JigsawError> {
    check_grid(image, mask.rows, mask.cols, patch_size)?;
    if mask.visible.len() != mask.rows * mask.cols {
        return Err(JigsawError::DimensionMismatch("mask length".into()));
    }
    if background.len() != image.channels() {
        return Err(JigsawError::DimensionMismatch(format!(
            "background has {} values for a {}-channel image",
            background.len(),
            image.channels()
        )));
    }
    let mut out = image.clone();
    let s = patch_size;
    for (cell, _) in mask.visible.iter().enumerate().filter(|(_, v)| !**v) {
        let (i, j) = (cell / mask.cols, cell % mask.cols);
        for (c, &mu) in background.iter().enumerate() {
            for y in i * s..(i + 1) * s {
                for x in j * s..(j + 1) * s {
                    out.set(c, y, x, mu);
                }
            }
        }
    }
    Ok(out)
}

/// Shuffle, then (in training mode) mask. Inference mode never masks.
pub fn jigsaw(image: &ImageGrid, config: &JigsawConfig, mode: Mode) -> Result<JigsawOutput, JigsawError> {
    config.validate()?;
    let (rows, cols) = partition(image, config.patch_size)?;
    let background = config.background_for(image.channels())?;
    let permutation = make_permutation(rows, cols, crate::rng::derive_seed(config.seed, PERMUTATION_STREAM));
    let shuffled = shuffle(image, &permutation, config.patch_size)?;

    let mut effective = config.clone();
    let (image, mask) = match mode {
        Mode::Infer => {
            effective.mask_ratio = 0.0;
            (shuffled, MaskPattern::all_visible(rows, cols))
        }
        Mode::Train => {
            let mask = make_mask(
                rows,
                cols,
                config.mask_ratio,
                crate::rng::derive_seed(config.seed, MASK_STREAM),
            );
            (apply_mask(&shuffled, &mask, &background, config.patch_size)?, mask)
        }
    };
    Ok(JigsawOutput {
        image,
        permutation,
        mask,
        config: effective,
    })
}
