//! Single-head attention kernels on raw features (no learned projections).
//!
//! * reference attention: `softmax(f_in f_refᵀ / √d) f_ref`, the reference
//!   tokens acting as both keys and values;
//! * self attention: reference attention of a token set with itself;
//! * row-wise multi-view attention: tokens sharing an image row across all
//!   views attend jointly;
//! * the fused block summing the three branches with a residual.
//!
//! Image features flatten row-major (`y`, then `x`) within a view.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Stream;

#[derive(Debug, Error, PartialEq)]
pub enum AttentionError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("reference token set is empty")]
    EmptyReference,
    #[error("non-finite input at row {row}, column {col}")]
    NonFiniteInput { row: usize, col: usize },
}

/// `rows × cols` row-major token matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TokenMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, AttentionError> {
        if cols == 0 || data.len() != rows * cols {
            return Err(AttentionError::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(AttentionError::NonFiniteInput {
                row: i / cols,
                col: i % cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AttentionError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(AttentionError::DimensionMismatch("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Entries uniform in `[-scale, scale)`.
    pub fn random(rows: usize, cols: usize, scale: f64, rng: &mut Stream) -> Self {
        Self {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.uniform(-scale, scale)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Rows reordered so that output row `i` is input row `order[i]`.
    pub fn permute_rows(&self, order: &[usize]) -> Self {
        Self {
            rows: order.len(),
            cols: self.cols,
            data: order.iter().flat_map(|&r| self.row(r).iter().copied()).collect(),
        }
    }

    pub fn add(&self, other: &TokenMatrix) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &TokenMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &TokenMatrix) -> Result<TokenMatrix, AttentionError> {
    if let Some(i) = logits.data.iter().position(|v| !v.is_finite()) {
        return Err(AttentionError::NonFiniteInput {
            row: i / logits.cols,
            col: i % logits.cols,
        });
    }
    let mut data = logits.data.clone();
    for row in data.chunks_mut(logits.cols) {
        softmax_in_place(row);
    }
    Ok(TokenMatrix {
        rows: logits.rows,
        cols: logits.cols,
        data,
    })
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

fn check_pair(f_in: &TokenMatrix, f_ref: &TokenMatrix) -> Result<(), AttentionError> {
    if f_in.cols != f_ref.cols {
        return Err(AttentionError::DimensionMismatch(format!(
            "query width {} vs reference width {}",
            f_in.cols, f_ref.cols
        )));
    }
    if f_ref.rows == 0 {
        return Err(AttentionError::EmptyReference);
    }
    Ok(())
}

/// Scaled logits `f_in f_refᵀ / √d`.
pub fn attention_logits(f_in: &TokenMatrix, f_ref: &TokenMatrix) -> Result<TokenMatrix, AttentionError> {
    check_pair(f_in, f_ref)?;
    let scale = 1.0 / (f_in.cols as f64).sqrt();
    let mut data = Vec::with_capacity(f_in.rows * f_ref.rows);
    for i in 0..f_in.rows {
        let q = f_in.row(i);
        for j in 0..f_ref.rows {
            let k = f_ref.row(j);
            data.push(q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale);
        }
    }
    Ok(TokenMatrix {
        rows: f_in.rows,
        cols: f_ref.rows,
        data,
    })
}

/// Attention weights `softmax(f_in f_refᵀ / √d)`, one row per query.
pub fn attention_weights(f_in: &TokenMatrix, f_ref: &TokenMatrix) -> Result<TokenMatrix, AttentionError> {
    softmax_rows(&attention_logits(f_in, f_ref)?)
}

fn matmul(a: &TokenMatrix, b: &TokenMatrix) -> TokenMatrix {
    debug_assert_eq!(a.cols, b.rows);
    let mut data = vec![0.0; a.rows * b.cols];
    for i in 0..a.rows {
        let out = &mut data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let w = a.get(i, k);
            for (o, v) in out.iter_mut().zip(b.row(k)) {
                *o += w * v;
            }
        }
    }
    TokenMatrix {
        rows: a.rows,
        cols: b.cols,
        data,
    }
}

/// Reference rows sorted lexicographically. Keys and values form a set, so
/// reducing over them in this canonical order makes the output bit-identical
/// under any reordering of `f_ref`.
fn canonical_rows(f: &TokenMatrix) -> TokenMatrix {
    let mut order: Vec<usize> = (0..f.rows).collect();
    order.sort_by(|&a, &b| {
        f.row(a)
            .iter()
            .zip(f.row(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    f.permute_rows(&order)
}

pub fn ref_attention(f_in: &TokenMatrix, f_ref: &TokenMatrix) -> Result<TokenMatrix, AttentionError> {
    check_pair(f_in, f_ref)?;
    let keys = canonical_rows(f_ref);
    let weights = attention_weights(f_in, &keys)?;
    Ok(matmul(&weights, &keys))
}

pub fn self_attention(f: &TokenMatrix) -> Result<TokenMatrix, AttentionError> {
    ref_attention(f, f)
}

/// Hidden states of `views` images of `height × width` tokens, `dim` wide,
/// stored `(v, y, x, :)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewFeature {
    pub views: usize,
    pub height: usize,
    pub width: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl MultiViewFeature {
    pub fn new(views: usize, height: usize, width: usize, dim: usize, data: Vec<f64>) -> Result<Self, AttentionError> {
        if dim == 0 || data.len() != views * height * width * dim {
            return Err(AttentionError::DimensionMismatch(format!(
                "{} values for {views}x{height}x{width}x{dim}",
                data.len()
            )));
        }
        Ok(Self {
            views,
            height,
            width,
            dim,
            data,
        })
    }

    pub fn random(views: usize, height: usize, width: usize, dim: usize, scale: f64, rng: &mut Stream) -> Self {
        let n = views * height * width * dim;
        Self {
            views,
            height,
            width,
            dim,
            data: (0..n).map(|_| rng.uniform(-scale, scale)).collect(),
        }
    }

    #[inline]
    fn offset(&self, v: usize, y: usize, x: usize) -> usize {
        ((v * self.height + y) * self.width + x) * self.dim
    }

    pub fn token(&self, v: usize, y: usize, x: usize) -> &[f64] {
        let o = self.offset(v, y, x);
        &self.data[o..o + self.dim]
    }

    /// All tokens of one view, row-major.
    pub fn view_tokens(&self, v: usize) -> TokenMatrix {
        let n = self.height * self.width;
        let o = self.offset(v, 0, 0);
        TokenMatrix {
            rows: n,
            cols: self.dim,
            data: self.data[o..o + n * self.dim].to_vec(),
        }
    }

    /// Every token of every view, view-major then row-major.
    pub fn all_tokens(&self) -> TokenMatrix {
        TokenMatrix {
            rows: self.views * self.height * self.width,
            cols: self.dim,
            data: self.data.clone(),
        }
    }

    /// Tokens of image row `y` across all views: `(v, x)` ordered view-major.
    pub fn row_tokens(&self, y: usize) -> TokenMatrix {
        let mut data = Vec::with_capacity(self.views * self.width * self.dim);
        for v in 0..self.views {
            let o = self.offset(v, y, 0);
            data.extend_from_slice(&self.data[o..o + self.width * self.dim]);
        }
        TokenMatrix {
            rows: self.views * self.width,
            cols: self.dim,
            data,
        }
    }

    fn with_data(&self, data: Vec<f64>) -> Self {
        Self {
            data,
            ..*self
        }
    }

    pub fn add(&self, other: &MultiViewFeature) -> Self {
        self.with_data(self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect())
    }

    pub fn max_abs_diff(&self, other: &MultiViewFeature) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Per-view self attention over each view's full token set.
pub fn per_view_self_attention(f: &MultiViewFeature) -> Result<MultiViewFeature, AttentionError> {
    let mut data = Vec::with_capacity(f.data.len());
    for v in 0..f.views {
        data.extend(self_attention(&f.view_tokens(v))?.data);
    }
    Ok(f.with_data(data))
}

/// Row-wise attention across views; image rows are independent.
pub fn multiview_row_attention(f: &MultiViewFeature) -> Result<MultiViewFeature, AttentionError> {
    if f.views == 0 || f.width == 0 {
        return Ok(f.clone());
    }
    let rows: Vec<TokenMatrix> = (0..f.height)
        .into_par_iter()
        .map(|y| self_attention(&f.row_tokens(y)))
        .collect::<Result<_, _>>()?;
    let mut data = vec![0.0; f.data.len()];
    for (y, out) in rows.iter().enumerate() {
        for v in 0..f.views {
            let o = f.offset(v, y, 0);
            let src = &out.data[v * f.width * f.dim..(v + 1) * f.width * f.dim];
            data[o..o + f.width * f.dim].copy_from_slice(src);
        }
    }
    Ok(f.with_data(data))
}

/// Reference attention applied to every token of every view.
pub fn multiview_ref_attention(f: &MultiViewFeature, f_ref: &TokenMatrix) -> Result<MultiViewFeature, AttentionError> {
    Ok(f.with_data(ref_attention(&f.all_tokens(), f_ref)?.data))
}

/// `f_in + SelfAttn(f_in) + RowAttn(f_in) + RefAttn(f_in, f_ref)`.
pub fn fused_block(f_in: &MultiViewFeature, f_ref: &TokenMatrix) -> Result<MultiViewFeature, AttentionError> {
    if f_ref.cols != f_in.dim {
        return Err(AttentionError::DimensionMismatch(format!(
            "feature width {} vs reference width {}",
            f_in.dim, f_ref.cols
        )));
    }
    let s = per_view_self_attention(f_in)?;
    let m = multiview_row_attention(f_in)?;
    let r = multiview_ref_attention(f_in, f_ref)?;
    Ok(f_in.add(&s).add(&m).add(&r))
}

/// Kernel whose Jacobian-vector product is checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradTarget {
    /// Perturbs both `f_in` and `f_ref`.
    RefAttention,
    /// `f_in = f_ref = f`, perturbed together.
    SelfAttention,
}

/// Analytic directional derivative of `ref_attention` at `(a, r)` along `(da, dr)`.
///
/// With `S = a rᵀ / √d`, `P = softmax(S)`, `O = P r`:
/// `dS = (da rᵀ + a drᵀ) / √d`, `dP_ij = P_ij (dS_ij − Σ_k P_ik dS_ik)`,
/// `dO = dP r + P dr`.
pub fn ref_attention_jvp(
    a: &TokenMatrix,
    r: &TokenMatrix,
    da: &TokenMatrix,
    dr: &TokenMatrix,
) -> Result<TokenMatrix, AttentionError> {
    check_pair(a, r)?;
    let p = attention_weights(a, r)?;
    let ds = attention_logits(da, r)?.add(&attention_logits(a, dr)?);
    let mut dp = p.clone();
    for i in 0..p.rows {
        let mean: f64 = (0..p.cols).map(|k| p.get(i, k) * ds.get(i, k)).sum();
        for j in 0..p.cols {
            dp.data[i * p.cols + j] = p.get(i, j) * (ds.get(i, j) - mean);
        }
    }
    Ok(matmul(&dp, r).add(&matmul(&p, dr)))
}

/// Relative discrepancy between the analytic JVP and a central difference
/// with step `h`. Returns 0 when both vanish.
pub fn finite_difference_grad_check(
    target: GradTarget,
    point: (&TokenMatrix, &TokenMatrix),
    direction: (&TokenMatrix, &TokenMatrix),
    h: f64,
) -> Result<f64, AttentionError> {
    assert!(h > 0.0 && h <= 1e-2, "step {h} outside (0, 1e-2]");
    let (a, r) = point;
    let (da, dr) = direction;
    let (analytic, fd) = match target {
        GradTarget::RefAttention => {
            let analytic = ref_attention_jvp(a, r, da, dr)?;
            let plus = ref_attention(&a.add(&da.scaled(h)), &r.add(&dr.scaled(h)))?;
            let minus = ref_attention(&a.add(&da.scaled(-h)), &r.add(&dr.scaled(-h)))?;
            (analytic, plus.add(&minus.scaled(-1.0)).scaled(0.5 / h))
        }
        GradTarget::SelfAttention => {
            let analytic = ref_attention_jvp(a, a, da, da)?;
            let plus = self_attention(&a.add(&da.scaled(h)))?;
            let minus = self_attention(&a.add(&da.scaled(-h)))?;
            (analytic, plus.add(&minus.scaled(-1.0)).scaled(0.5 / h))
        }
    };
    let scale = analytic.norm().max(fd.norm());
    if scale == 0.0 {
        return Ok(0.0);
    }
    let diff = analytic.add(&fd.scaled(-1.0)).norm();
    Ok(diff / scale)
}

/// One named check of [`invariant_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckResult {
    fn new(name: &str, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            measured,
            tolerance,
            pass: measured <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

/// Runs the attention invariants and 100 gradient probes on seeded inputs.
pub fn invariant_suite(seed: u64) -> Result<SuiteReport, AttentionError> {
    let mut rng = Stream::new(seed);
    let mut row_sum = 0.0f64;
    let mut hull = 0.0f64;
    let mut perm = 0.0f64;
    let mut collapse = 0.0f64;
    let mut shift = 0.0f64;
    let mut dup = 0.0f64;
    for _ in 0..20 {
        let n = 1 + rng.below(8) as usize;
        let m = 1 + rng.below(8) as usize;
        let d = 1 + rng.below(6) as usize;
        let f_in = TokenMatrix::random(n, d, 2.0, &mut rng);
        let f_ref = TokenMatrix::random(m, d, 2.0, &mut rng);
        let w = attention_weights(&f_in, &f_ref)?;
        for i in 0..n {
            row_sum = row_sum.max((w.row(i).iter().sum::<f64>() - 1.0).abs());
        }
        let out = ref_attention(&f_in, &f_ref)?;
        for c in 0..d {
            let lo = (0..m).map(|j| f_ref.get(j, c)).fold(f64::INFINITY, f64::min);
            let hi = (0..m).map(|j| f_ref.get(j, c)).fold(f64::NEG_INFINITY, f64::max);
            for i in 0..n {
                let v = out.get(i, c);
                hull = hull.max(lo - v).max(v - hi);
            }
        }
        let mut order: Vec<usize> = (0..m).collect();
        rng.shuffle(&mut order);
        perm = perm.max(out.max_abs_diff(&ref_attention(&f_in, &f_ref.permute_rows(&order))?));

        let single = f_ref.permute_rows(&[0]);
        let collapsed = ref_attention(&f_in, &single)?;
        for i in 0..n {
            for c in 0..d {
                collapse = collapse.max((collapsed.get(i, c) - single.get(0, c)).abs());
            }
        }

        let logits = attention_logits(&f_in, &f_ref)?;
        let offset = rng.uniform(-50.0, 50.0);
        let shifted = TokenMatrix {
            data: logits.data.iter().map(|v| v + offset).collect(),
            ..logits.clone()
        };
        shift = shift.max(softmax_rows(&logits)?.max_abs_diff(&softmax_rows(&shifted)?));

        let widen = |t: &TokenMatrix| TokenMatrix {
            rows: t.rows,
            cols: 2 * t.cols,
            data: (0..t.rows).flat_map(|r| t.row(r).iter().flat_map(|v| [*v, *v]).collect::<Vec<_>>()).collect(),
        };
        // Duplicating every column doubles the dot products while √d grows
        // by √2, so the logits scale by exactly √2.
        let w2 = attention_weights(&widen(&f_in), &widen(&f_ref))?;
        let expect = softmax_rows(&logits.scaled(std::f64::consts::SQRT_2))?;
        dup = dup.max(expect.max_abs_diff(&w2));
    }

    let mut grad = 0.0f64;
    for probe in 0..100 {
        let n = 1 + rng.below(5) as usize;
        let m = 1 + rng.below(5) as usize;
        let d = 1 + rng.below(5) as usize;
        let a = TokenMatrix::random(n, d, 1.0, &mut rng);
        let r = TokenMatrix::random(m, d, 1.0, &mut rng);
        let da = TokenMatrix::random(n, d, 1.0, &mut rng);
        let dr = TokenMatrix::random(m, d, 1.0, &mut rng);
        let target = if probe % 2 == 0 { GradTarget::RefAttention } else { GradTarget::SelfAttention };
        grad = grad.max(finite_difference_grad_check(target, (&a, &r), (&da, &dr), 1e-4)?);
    }

    let checks = vec![
        CheckResult::new("row_stochastic", row_sum, 1e-12),
        CheckResult::new("convex_hull", hull.max(0.0), 1e-9),
        CheckResult::new("reference_permutation", perm, 0.0),
        CheckResult::new("single_reference_collapse", collapse, 0.0),
        CheckResult::new("logit_shift", shift, 1e-12),
        CheckResult::new("duplicated_columns", dup, 1e-12),
        CheckResult::new("gradient_relative_error", grad, 1e-4),
    ];
    let pass = checks.iter().all(|c| c.pass);
    Ok(SuiteReport { seed, checks, pass })
}
