//! Indexed triangle meshes and Wavefront OBJ loading.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("mesh has no texture coordinates")]
    MissingUVs,
    #[error("mesh has no vertices")]
    EmptyMesh,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One triangle corner: indices into the position, normal and uv arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Corner {
    pub position: usize,
    pub normal: usize,
    pub uv: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub positions: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub uvs: Vec<Vec2>,
    pub triangles: Vec<[Corner; 3]>,
}

impl TriangleMesh {
    /// True when every corner references a texture coordinate.
    pub fn has_uvs(&self) -> bool {
        self.triangles.iter().all(|t| t.iter().all(|c| c.uv.is_some()))
    }

    pub fn require_uvs(&self) -> Result<(), MeshError> {
        if self.has_uvs() && (!self.uvs.is_empty() || self.triangles.is_empty()) {
            Ok(())
        } else {
            Err(MeshError::MissingUVs)
        }
    }

    pub fn triangle_positions(&self, t: usize) -> [Vec3; 3] {
        self.triangles[t].map(|c| self.positions[c.position])
    }

    pub fn triangle_normals(&self, t: usize) -> [Vec3; 3] {
        self.triangles[t].map(|c| self.normals[c.normal])
    }

    /// Texture coordinates of a triangle's corners (zero when absent).
    pub fn triangle_uvs(&self, t: usize) -> [Vec2; 3] {
        self.triangles[t].map(|c| c.uv.map_or(Vec2::zeros(), |i| self.uvs[i]))
    }

    /// Geometric normal from the winding order; zero for degenerate triangles.
    pub fn face_normal(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangle_positions(t);
        (b - a).cross(&(c - a)).try_normalize(0.0).unwrap_or_else(Vec3::zeros)
    }

    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.positions.first()?;
        Some(self.positions.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }

    /// Builds a mesh whose corners share one index for position, normal and uv.
    pub fn from_indexed(positions: Vec<Vec3>, normals: Vec<Vec3>, uvs: Option<Vec<Vec2>>, triangles: &[[usize; 3]]) -> Self {
        let has_uv = uvs.is_some();
        Self {
            positions,
            normals: normals.into_iter().map(|n| n.normalize()).collect(),
            uvs: uvs.unwrap_or_default(),
            triangles: triangles
                .iter()
                .map(|t| {
                    t.map(|i| Corner {
                        position: i,
                        normal: i,
                        uv: has_uv.then_some(i),
                    })
                })
                .collect(),
        }
    }

    /// Serializes as OBJ with `v`, `vt`, `vn` and `f v/vt/vn` records.
    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for p in &self.positions {
            let _ = writeln!(s, "v {} {} {}", p.x, p.y, p.z);
        }
        for t in &self.uvs {
            let _ = writeln!(s, "vt {} {}", t.x, t.y);
        }
        for n in &self.normals {
            let _ = writeln!(s, "vn {} {} {}", n.x, n.y, n.z);
        }
        for tri in &self.triangles {
            s.push('f');
            for c in tri {
                match c.uv {
                    Some(t) => {
                        let _ = write!(s, " {}/{}/{}", c.position + 1, t + 1, c.normal + 1);
                    }
                    None => {
                        let _ = write!(s, " {}//{}", c.position + 1, c.normal + 1);
                    }
                }
            }
            s.push('\n');
        }
        s
    }
}

pub fn load_mesh(path: &Path) -> Result<TriangleMesh, MeshError> {
    let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_obj(&text)
}

fn parse_floats<const N: usize>(fields: &[&str], line: usize, min: usize) -> Result<[f64; N], MeshError> {
    if fields.len() < min || fields.len() > N + 1 {
        return Err(MeshError::Parse {
            line,
            message: format!("expected {min} to {} numbers, found {}", N + 1, fields.len()),
        });
    }
    let mut out = [0.0f64; N];
    for (i, f) in fields.iter().take(N).enumerate() {
        out[i] = f.parse().map_err(|_| MeshError::Parse {
            line,
            message: format!("invalid number `{f}`"),
        })?;
        if !out[i].is_finite() {
            return Err(MeshError::Parse {
                line,
                message: format!("non-finite number `{f}`"),
            });
        }
    }
    Ok(out)
}

/// Resolves a 1-based (or negative, relative) OBJ index against `count` items.
fn resolve_index(raw: &str, count: usize, line: usize, kind: &str) -> Result<usize, MeshError> {
    let err = |message: String| MeshError::Parse { line, message };
    let i: i64 = raw.parse().map_err(|_| err(format!("invalid {kind} index `{raw}`")))?;
    let resolved = match i {
        0 => return Err(err(format!("{kind} index 0 is invalid"))),
        i if i > 0 => i - 1,
        i => count as i64 + i,
    };
    if resolved < 0 || resolved >= count as i64 {
        return Err(err(format!("{kind} index {i} out of range (have {count})")));
    }
    Ok(resolved as usize)
}

/// Parses OBJ text. Polygons are fan-triangulated; corners without a normal
/// get the face normal appended to the normal array.
pub fn parse_obj(text: &str) -> Result<TriangleMesh, MeshError> {
    let mut mesh = TriangleMesh::default();
    let mut raw_normals: Vec<Vec3> = Vec::new();
    // Faces are resolved after all vertices are known only for relative
    // indices; OBJ requires referenced data to precede the face.
    for (lineno, raw_line) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        let mut fields = content.split_whitespace();
        let Some(tag) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        match tag {
            "v" => {
                let [x, y, z] = parse_floats::<3>(&rest, line, 3)?;
                mesh.positions.push(Vec3::new(x, y, z));
            }
            "vt" => {
                let [u, v] = parse_floats::<2>(&rest, line, 2)?;
                mesh.uvs.push(Vec2::new(u, v));
            }
            "vn" => {
                let [x, y, z] = parse_floats::<3>(&rest, line, 3)?;
                if rest.len() != 3 {
                    return Err(MeshError::Parse {
                        line,
                        message: "vn needs exactly 3 numbers".into(),
                    });
                }
                raw_normals.push(Vec3::new(x, y, z));
            }
            "f" => {
                if rest.len() < 3 {
                    return Err(MeshError::Parse {
                        line,
                        message: format!("face needs at least 3 vertices, found {}", rest.len()),
                    });
                }
                let mut corners = Vec::with_capacity(rest.len());
                for item in &rest {
                    let parts: Vec<&str> = item.split('/').collect();
                    if parts.len() > 3 || parts[0].is_empty() {
                        return Err(MeshError::Parse {
                            line,
                            message: format!("malformed face vertex `{item}`"),
                        });
                    }
                    let p = resolve_index(parts[0], mesh.positions.len(), line, "position")?;
                    let t = match parts.get(1) {
                        Some(s) if !s.is_empty() => Some(resolve_index(s, mesh.uvs.len(), line, "texture")?),
                        _ => None,
                    };
                    let n = match parts.get(2) {
                        Some(s) if !s.is_empty() => Some(resolve_index(s, raw_normals.len(), line, "normal")?),
                        _ => None,
                    };
                    corners.push((p, t, n));
                }
                for k in 1..corners.len() - 1 {
                    let tri = [corners[0], corners[k], corners[k + 1]];
                    let [a, b, c] = tri.map(|(p, _, _)| mesh.positions[p]);
                    let face = (b - a).cross(&(c - a)).try_normalize(0.0).unwrap_or(Vec3::z());
                    let mut face_index = None;
                    let out = tri.map(|(p, t, n)| {
                        let normal = match n {
                            Some(n) => n,
                            None => *face_index.get_or_insert_with(|| {
                                raw_normals.push(face);
                                raw_normals.len() - 1
                            }),
                        };
                        Corner {
                            position: p,
                            normal,
                            uv: t,
                        }
                    });
                    mesh.triangles.push(out);
                }
            }
            // Grouping, materials, smoothing groups, lines and points do not
            // affect triangle geometry.
            "o" | "g" | "s" | "usemtl" | "mtllib" | "l" | "p" | "vp" => {}
            other => {
                return Err(MeshError::Parse {
                    line,
                    message: format!("unknown record `{other}`"),
                })
            }
        }
    }
    mesh.normals = raw_normals
        .into_iter()
        .map(|n| n.try_normalize(0.0).unwrap_or(Vec3::z()))
        .collect();
    Ok(mesh)
}

/// Centers the bounding box at the origin and scales the longest axis to 1.
pub fn normalize_mesh(mesh: &TriangleMesh) -> Result<TriangleMesh, MeshError> {
    let (lo, hi) = mesh.bounding_box().ok_or(MeshError::EmptyMesh)?;
    let center = (lo + hi) * 0.5;
    let extent = (hi - lo).max();
    let scale = if extent > 0.0 { 1.0 / extent } else { 1.0 };
    let mut out = mesh.clone();
    for p in &mut out.positions {
        *p = (*p - center) * scale;
    }
    Ok(out)
}

/// Procedural meshes used by tests, examples and the `roundtrip` command.
pub mod shapes {
    use super::*;

    /// Unit quad in the z = 0 plane facing +Z with the identity UV map:
    /// `(x, y) = (u - 0.5, v - 0.5)`.
    pub fn quad() -> TriangleMesh {
        quad_at(0.0, 1.0)
    }

    /// Axis-aligned square of side `size` in the plane `z`, facing +Z.
    pub fn quad_at(z: f64, size: f64) -> TriangleMesh {
        let h = size / 2.0;
        TriangleMesh::from_indexed(
            vec![
                Vec3::new(-h, -h, z),
                Vec3::new(h, -h, z),
                Vec3::new(h, h, z),
                Vec3::new(-h, h, z),
            ],
            vec![Vec3::z(); 4],
            Some(vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(1.0, 1.0),
                Vec2::new(0.0, 1.0),
            ]),
            &[[0, 1, 2], [0, 2, 3]],
        )
    }

    /// Axis-aligned unit cube centered at the origin. Each face owns a square
    /// UV island in a 3×2 atlas layout, inset by `gutter` (in UV units).
    pub fn uv_cube(gutter: f64) -> TriangleMesh {
        // (normal, tangent u-axis, v-axis) per face; u × v = normal.
        let faces: [(Vec3, Vec3, Vec3); 6] = [
            (Vec3::x(), -Vec3::z(), Vec3::y()),
            (-Vec3::x(), Vec3::z(), Vec3::y()),
            (Vec3::y(), Vec3::x(), -Vec3::z()),
            (-Vec3::y(), Vec3::x(), Vec3::z()),
            (Vec3::z(), Vec3::x(), Vec3::y()),
            (-Vec3::z(), -Vec3::x(), Vec3::y()),
        ];
        let cell_w: f64 = 1.0 / 3.0;
        let cell_h = 0.5;
        let side = cell_w.min(cell_h) - 2.0 * gutter;
        let mut positions = Vec::new();
        let mut normals = Vec::new();
        let mut uvs = Vec::new();
        let mut tris = Vec::new();
        for (f, (n, u_axis, v_axis)) in faces.iter().enumerate() {
            let (col, row) = (f % 3, f / 3);
            let u0 = col as f64 * cell_w + (cell_w - side) / 2.0;
            let v0 = row as f64 * cell_h + (cell_h - side) / 2.0;
            let base = positions.len();
            for (a, b) in [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)] {
                positions.push(n * 0.5 + u_axis * (a - 0.5) + v_axis * (b - 0.5));
                normals.push(*n);
                uvs.push(Vec2::new(u0 + a * side, v0 + b * side));
            }
            tris.push([base, base + 1, base + 2]);
            tris.push([base, base + 2, base + 3]);
        }
        TriangleMesh::from_indexed(positions, normals, Some(uvs), &tris)
    }

    /// Latitude–longitude sphere of radius 0.5 with smooth normals and an
    /// equirectangular UV map (seam column duplicated; poles split per segment).
    pub fn uv_sphere(segments: usize, rings: usize) -> TriangleMesh {
        assert!(segments >= 3 && rings >= 2);
        let mut positions = Vec::new();
        let mut uvs = Vec::new();
        let mut tris = Vec::new();
        let vert = |theta: f64, phi: f64| {
            Vec3::new(phi.sin() * theta.cos(), phi.cos(), -phi.sin() * theta.sin())
        };
        // Pole vertices, one per segment so each pole triangle has distinct UVs.
        for s in 0..segments {
            positions.push(Vec3::new(0.0, 0.5, 0.0));
            uvs.push(Vec2::new((s as f64 + 0.5) / segments as f64, 1.0));
        }
        let ring_start = positions.len();
        for r in 1..rings {
            let phi = std::f64::consts::PI * r as f64 / rings as f64;
            for s in 0..=segments {
                let theta = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
                positions.push(vert(theta, phi) * 0.5);
                uvs.push(Vec2::new(s as f64 / segments as f64, 1.0 - r as f64 / rings as f64));
            }
        }
        let south = positions.len();
        for s in 0..segments {
            positions.push(Vec3::new(0.0, -0.5, 0.0));
            uvs.push(Vec2::new((s as f64 + 0.5) / segments as f64, 0.0));
        }
        let row = |r: usize, s: usize| ring_start + (r - 1) * (segments + 1) + s;
        for s in 0..segments {
            tris.push([s, row(1, s), row(1, s + 1)]);
        }
        for r in 1..rings - 1 {
            for s in 0..segments {
                tris.push([row(r, s), row(r + 1, s), row(r + 1, s + 1)]);
                tris.push([row(r, s), row(r + 1, s + 1), row(r, s + 1)]);
            }
        }
        for s in 0..segments {
            tris.push([row(rings - 1, s), south + s, row(rings - 1, s + 1)]);
        }
        let normals = positions.iter().map(|p| p * 2.0).collect();
        TriangleMesh::from_indexed(positions, normals, Some(uvs), &tris)
    }
}
