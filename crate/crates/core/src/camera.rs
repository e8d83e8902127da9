//! Orthographic cameras looking at the origin.
//!
//! Image coordinates are continuous with pixel `(i, j)` covering
//! `[j, j+1) × [i, i+1)` and its center at `(j + 0.5, i + 0.5)`; `x` grows to
//! the right, `y` grows downward. Depth is the distance along `view_dir`
//! from an eye plane `distance` units behind the origin.
//!
//! Canonical up vectors: the ±Y cameras use +Z up, all others use +Y up.

use serde::{Deserialize, Serialize};

use crate::mesh::Vec3;
use crate::rng::Stream;

pub const DEFAULT_HALF_EXTENT: f64 = 0.55;
pub const DEFAULT_IMAGE_SIZE: usize = 512;
pub const DEFAULT_DISTANCE: f64 = 1.5;
pub const DEFAULT_NEAR: f64 = 0.1;
pub const DEFAULT_FAR: f64 = 3.0;
pub const ORTHOGONAL_VIEW_COUNT: usize = 6;
pub const REFERENCE_VIEW_COUNT: usize = 4;
pub const DEFAULT_ELEVATION_DEG: (f64, f64) = (-45.0, 45.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Projection {
    Orthographic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    pub kind: Projection,
    pub view_dir: [f64; 3],
    pub up: [f64; 3],
    pub half_extent: f64,
    pub image_size: usize,
    pub distance: f64,
    pub near: f64,
    pub far: f64,
}

impl Camera {
    /// Orthographic camera looking along `view_dir`; `up` is re-orthogonalized
    /// against it.
    pub fn orthographic(view_dir: Vec3, up: Vec3, half_extent: f64, image_size: usize) -> Self {
        let f = view_dir.normalize();
        let mut u = up - f * up.dot(&f);
        if u.norm() < 1e-9 {
            let alt = if f.y.abs() < 0.9 { Vec3::y() } else { Vec3::z() };
            u = alt - f * alt.dot(&f);
        }
        let u = u.normalize();
        assert!(half_extent > 0.0, "half_extent must be positive");
        Self {
            kind: Projection::Orthographic,
            view_dir: [f.x, f.y, f.z],
            up: [u.x, u.y, u.z],
            half_extent,
            image_size,
            distance: DEFAULT_DISTANCE,
            near: DEFAULT_NEAR,
            far: DEFAULT_FAR,
        }
    }

    pub fn forward(&self) -> Vec3 {
        Vec3::from(self.view_dir)
    }

    pub fn up_vec(&self) -> Vec3 {
        Vec3::from(self.up)
    }

    pub fn right(&self) -> Vec3 {
        self.forward().cross(&self.up_vec())
    }

    pub fn validate(&self) -> Result<(), String> {
        let f = self.forward();
        let u = self.up_vec();
        if (f.norm() - 1.0).abs() > 1e-6 || (u.norm() - 1.0).abs() > 1e-6 || f.dot(&u).abs() > 1e-6 {
            return Err("view_dir and up must be orthonormal".into());
        }
        if !(self.near < self.far) {
            return Err(format!("near {} must be below far {}", self.near, self.far));
        }
        if !(self.half_extent > 0.0) || self.image_size == 0 {
            return Err("half_extent and image_size must be positive".into());
        }
        Ok(())
    }

    /// World point to continuous image coordinates and depth.
    pub fn project(&self, p: &Vec3) -> (f64, f64, f64) {
        let s = self.image_size as f64;
        let x = (p.dot(&self.right()) / self.half_extent + 1.0) * 0.5 * s;
        let y = (1.0 - p.dot(&self.up_vec()) / self.half_extent) * 0.5 * s;
        (x, y, p.dot(&self.forward()) + self.distance)
    }

    /// Inverse of [`project`](Self::project).
    pub fn unproject(&self, x: f64, y: f64, depth: f64) -> Vec3 {
        let s = self.image_size as f64;
        let a = (2.0 * x / s - 1.0) * self.half_extent;
        let b = (1.0 - 2.0 * y / s) * self.half_extent;
        self.right() * a + self.up_vec() * b + self.forward() * (depth - self.distance)
    }

    /// World-space width of one pixel.
    pub fn pixel_size(&self) -> f64 {
        2.0 * self.half_extent / self.image_size as f64
    }
}

/// Cameras on ±X, ±Y, ±Z looking at the origin, in that order.
pub fn orthogonal_cameras(image_size: usize, half_extent: f64) -> Vec<Camera> {
    let dirs = [
        (-Vec3::x(), Vec3::y()),
        (Vec3::x(), Vec3::y()),
        (-Vec3::y(), Vec3::z()),
        (Vec3::y(), Vec3::z()),
        (-Vec3::z(), Vec3::y()),
        (Vec3::z(), Vec3::y()),
    ];
    dirs.iter()
        .map(|(f, u)| Camera::orthographic(*f, *u, half_extent, image_size))
        .collect()
}

/// Cameras whose positions are uniform (by area) on the spherical band between
/// the two elevations in degrees, looking at the origin.
pub fn random_view_cameras(
    n: usize,
    seed: u64,
    elevation_deg: (f64, f64),
    half_extent: f64,
    image_size: usize,
) -> Vec<Camera> {
    let mut rng = Stream::new(seed);
    let (lo, hi) = (elevation_deg.0.to_radians().sin(), elevation_deg.1.to_radians().sin());
    (0..n)
        .map(|_| {
            let azimuth = rng.uniform(0.0, std::f64::consts::TAU);
            let sin_e = rng.uniform(lo, hi);
            let cos_e = (1.0 - sin_e * sin_e).max(0.0).sqrt();
            let position = Vec3::new(cos_e * azimuth.cos(), sin_e, cos_e * azimuth.sin());
            Camera::orthographic(-position, Vec3::y(), half_extent, image_size)
        })
        .collect()
}

/// Azimuth of a camera position in `[0, 2π)`, measured in the XZ plane.
pub fn azimuth(camera: &Camera) -> f64 {
    let p = -camera.forward();
    p.z.atan2(p.x).rem_euclid(std::f64::consts::TAU)
}
