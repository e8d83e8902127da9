mod common;

use common::{chi_squared_3sigma, chi_squared_uniform, random_scene, raster_oracle, OraclePixel};
use jigsaw3d::camera::{azimuth, orthogonal_cameras, random_view_cameras, Camera};
use jigsaw3d::image::{BitDepth, ImageGrid};
use jigsaw3d::mesh::{normalize_mesh, parse_obj, shapes, TriangleMesh, Vec2, Vec3};
use jigsaw3d::raster::{position_map, rasterize, render_textured};
use jigsaw3d::texture::{checkerboard, value_noise};
use proptest::prelude::*;

const FIXTURE: &str = "\
# one triangle, relative indices
v 0 0 0
v 1 0 0
v 0 2 0
vt 0 0
vt 1 0
vt 0 1
vn 0 0 2
f -3/-3/-1 -2/-2/-1 -1/-1/-1
";

#[test]
fn obj_fixture_resolves_relative_indices() {
    let m = parse_obj(FIXTURE).unwrap();
    assert_eq!(m.triangles.len(), 1);
    assert_eq!(m.triangle_positions(0), [Vec3::zeros(), Vec3::x(), Vec3::new(0.0, 2.0, 0.0)]);
    assert_eq!(m.triangle_uvs(0), [Vec2::zeros(), Vec2::x(), Vec2::y()]);
    for n in m.triangle_normals(0) {
        assert!((n - Vec3::z()).norm() < 1e-12);
    }
    assert!(m.has_uvs());
}

#[test]
fn normalized_bounding_box_is_centered_unit() {
    let m = parse_obj(
        "v 3 1 -2\nv 7 1.5 -2\nv 3 4 0\nv 5 2 1\nf 1 2 3\nf 1 3 4\n",
    )
    .unwrap();
    let n = normalize_mesh(&m).unwrap();
    let (lo, hi) = n
        .positions
        .iter()
        .fold((Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)), |(lo, hi), p| {
            (lo.zip_map(p, f64::min), hi.zip_map(p, f64::max))
        });
    assert!(((lo + hi) / 2.0).norm() < 1e-12);
    assert!(((hi - lo).max() - 1.0).abs() < 1e-12);
}

fn asymmetric_mesh() -> TriangleMesh {
    TriangleMesh::from_indexed(
        vec![
            Vec3::new(0.013, -0.41, 0.37),
            Vec3::new(-0.021, 0.33, 0.29),
            Vec3::new(0.031, 0.12, -0.43),
            Vec3::new(-0.017, -0.22, -0.11),
            Vec3::new(0.007, 0.41, -0.21),
        ],
        vec![Vec3::x(); 5],
        None,
        &[[0, 1, 2], [2, 3, 4], [0, 3, 1]],
    )
}

#[test]
fn opposite_x_views_see_mirrored_silhouettes() {
    let cams = orthogonal_cameras(96, 0.55);
    let (pos, neg) = (rasterize(&asymmetric_mesh(), &cams[0]), rasterize(&asymmetric_mesh(), &cams[1]));
    assert!(pos.covered_count() > 100);
    let s = 96;
    for y in 0..s {
        for x in 0..s {
            assert_eq!(pos.covered(y * s + x), neg.covered(y * s + (s - 1 - x)), "pixel ({x}, {y})");
        }
    }
    // The silhouette itself is not symmetric, so the flip is doing work.
    let unflipped = (0..s * s).filter(|&i| pos.covered(i) != neg.covered(i)).count();
    assert!(unflipped > 0);
}

#[test]
fn random_view_azimuths_are_uniform() {
    let cams = random_view_cameras(10_000, 3, (-45.0, 45.0), 0.55, 16);
    let bins = 36;
    let mut counts = vec![0u64; bins];
    for c in &cams {
        let a = azimuth(c);
        assert!((0.0..std::f64::consts::TAU).contains(&a));
        counts[((a / std::f64::consts::TAU * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let chi = chi_squared_uniform(&counts);
    assert!(chi < chi_squared_3sigma(bins - 1), "chi-squared {chi}");
    for c in &cams {
        let elev = (-c.forward().y).asin().to_degrees();
        assert!((-45.0 - 1e-9..=45.0 + 1e-9).contains(&elev));
    }
}

fn frame_camera(size: usize) -> Camera {
    Camera::orthographic(-Vec3::z(), Vec3::y(), 0.5, size)
}

/// Triangle in pixel coordinates of a 64-pixel frame of half extent 0.5.
fn pixel_triangle(pts: [(f64, f64); 3], z: f64) -> TriangleMesh {
    let world = |(x, y): (f64, f64)| Vec3::new(x / 64.0 - 0.5, 0.5 - y / 64.0, z);
    TriangleMesh::from_indexed(pts.iter().map(|p| world(*p)).collect(), vec![Vec3::z(); 3], None, &[[0, 1, 2]])
}

#[test]
fn half_frame_coverage_matches_area() {
    let cam = frame_camera(64);
    // The two halves of the frame split along a diagonal through pixel
    // centers; together they cover every pixel exactly once.
    let lower = rasterize(&pixel_triangle([(0.0, 0.0), (64.0, 0.0), (0.0, 64.0)], 0.0), &cam);
    let upper = rasterize(&pixel_triangle([(64.0, 0.0), (64.0, 64.0), (0.0, 64.0)], 0.0), &cam);
    assert_eq!(lower.covered_count() + upper.covered_count(), 64 * 64);
    for i in 0..64 * 64 {
        assert!(lower.covered(i) ^ upper.covered(i));
    }
    let mean_fraction = (lower.covered_count() + upper.covered_count()) as f64 / 2.0 / 4096.0;
    assert_eq!(mean_fraction, 0.5);
    // Each half differs from the analytic area by at most half a diagonal.
    for g in [&lower, &upper] {
        assert!((g.covered_count() as f64 - 2048.0).abs() <= 32.0);
    }

    // A right triangle whose hypotenuse avoids pixel centers: the pixel
    // count tracks the clipped analytic area to within two pixels.
    let c = 64.5;
    let tri = rasterize(&pixel_triangle([(0.0, 0.0), (c, 0.0), (0.0, c)], 0.0), &cam);
    let area = c * c / 2.0 - 2.0 * (c - 64.0).powi(2) / 2.0;
    assert!((tri.covered_count() as f64 - area).abs() <= 2.0, "{} vs {area}", tri.covered_count());
}

#[test]
fn nearer_of_two_overlapping_triangles_wins() {
    let cam = frame_camera(64);
    // Camera looks down -Z from distance 1.5, so depth d sits at z = 1.5 - d.
    let far = pixel_triangle([(4.0, 4.0), (60.0, 10.0), (20.0, 58.0)], 1.5 - 0.7);
    let near = pixel_triangle([(10.0, 6.0), (58.0, 50.0), (6.0, 40.0)], 1.5 - 0.3);
    for order in [[&far, &near], [&near, &far]] {
        let mut mesh = order[0].clone();
        let base = mesh.positions.len();
        mesh.positions.extend(&order[1].positions);
        mesh.normals.extend(&order[1].normals);
        for t in &order[1].triangles {
            mesh.triangles.push(t.map(|mut c| {
                c.position += base;
                c.normal += base;
                c
            }));
        }
        let near_id = if std::ptr::eq(order[0], &near) { 0 } else { 1 };
        let g = rasterize(&mesh, &cam);
        let oracle = raster_oracle(&mesh, &cam);
        let mut overlap = 0;
        for (i, o) in oracle.iter().enumerate() {
            let only_near = raster_oracle(&near, &cam)[i];
            let only_far = raster_oracle(&far, &cam)[i];
            if let (OraclePixel::Hit { .. }, OraclePixel::Hit { .. }) = (only_near, only_far) {
                overlap += 1;
                assert_eq!(g.tri_id[i], Some(near_id));
                assert!((g.depth[i] - 0.3).abs() < 1e-12);
            }
            if let OraclePixel::Hit { tri, .. } = o {
                assert_eq!(g.tri_id[i], Some(*tri as u32));
            }
        }
        assert!(overlap > 200);
    }
}

#[test]
fn decoded_positions_stay_in_the_bounding_box() {
    let mesh = normalize_mesh(&shapes::uv_sphere(48, 24)).unwrap();
    let (lo, hi) = mesh.bounding_box().unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (k, cam) in orthogonal_cameras(128, 0.55).iter().enumerate() {
        let g = rasterize(&mesh, cam);
        let path = dir.path().join(format!("pos{k}.png"));
        position_map(&g).save_png(&path, BitDepth::Sixteen).unwrap();
        let decoded = ImageGrid::load_png(&path).unwrap();
        for i in 0..128 * 128 {
            if !g.covered(i) {
                continue;
            }
            for c in 0..3 {
                let p = decoded.data()[c * 128 * 128 + i] - 0.5;
                assert!(p >= lo[c] - 1e-3 && p <= hi[c] + 1e-3, "view {k} pixel {i}: {p}");
            }
        }
    }
}

#[test]
fn facing_quad_shows_the_checkerboard() {
    let a = [0.9, 0.1, 0.2];
    let b = [0.1, 0.3, 0.95];
    let tex = checkerboard(256, 32, a, b);
    let img = render_textured(&shapes::quad(), &tex, &frame_camera(64)).unwrap();
    for y in 0..64 {
        for x in 0..64 {
            let expect = if (x / 8 + y / 8) % 2 == 0 { a } else { b };
            for c in 0..3 {
                assert!((img.get(c, y, x) - expect[c]).abs() < 1e-12);
            }
        }
    }
}

/// Bilinear texture lookup written from texel centers.
fn bilinear(tex: &ImageGrid, u: f64, v: f64) -> [f64; 3] {
    let (w, h) = (tex.width() as f64, tex.height() as f64);
    let fx = (u * w - 0.5).clamp(0.0, w - 1.0);
    let fy = ((1.0 - v) * h - 0.5).clamp(0.0, h - 1.0);
    let (x0, y0) = (fx.floor(), fy.floor());
    let (tx, ty) = (fx - x0, fy - y0);
    let (x0, y0) = (x0 as usize, y0 as usize);
    let (x1, y1) = ((x0 + 1).min(tex.width() - 1), (y0 + 1).min(tex.height() - 1));
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        *o = tex.get(c, y0, x0) * (1.0 - tx) * (1.0 - ty)
            + tex.get(c, y0, x1) * tx * (1.0 - ty)
            + tex.get(c, y1, x0) * (1.0 - tx) * ty
            + tex.get(c, y1, x1) * tx * ty;
    }
    out
}

#[test]
fn facing_quad_is_a_direct_warp_of_the_texture() {
    let tex = value_noise(100, 5, 9);
    let size = 72;
    let img = render_textured(&shapes::quad(), &tex, &frame_camera(size)).unwrap();
    for y in 0..size {
        for x in 0..size {
            let u = (x as f64 + 0.5) / size as f64;
            let v = 1.0 - (y as f64 + 0.5) / size as f64;
            let expect = bilinear(&tex, u, v);
            for c in 0..3 {
                assert!((img.get(c, y, x) - expect[c]).abs() < 1e-9);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn coverage_ignores_triangle_order(seed in any::<u64>(), rot in 0usize..50) {
        let mut mesh = random_scene(seed, 20);
        let cam = orthogonal_cameras(48, 0.55)[(seed % 6) as usize].clone();
        let before = rasterize(&mesh, &cam).coverage();
        let k = rot % mesh.triangles.len();
        mesh.triangles.rotate_left(k);
        mesh.triangles.reverse();
        prop_assert_eq!(rasterize(&mesh, &cam).coverage(), before);
    }

    #[test]
    fn gbuffer_records_are_consistent(seed in any::<u64>()) {
        let mesh = random_scene(seed, 30);
        let cam = orthogonal_cameras(48, 0.55)[(seed % 6) as usize].clone();
        let g = rasterize(&mesh, &cam);
        for i in 0..48 * 48 {
            if g.covered(i) {
                let w = g.barycentric[i];
                prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
                prop_assert!(w.iter().all(|v| *v >= -1e-6));
                prop_assert!(g.depth[i] >= cam.near && g.depth[i] <= cam.far);
                prop_assert!((g.normal[i].norm() - 1.0).abs() <= 1e-6);
            } else {
                prop_assert!(g.depth[i].is_infinite());
                prop_assert!(g.tri_id[i].is_none());
            }
        }
    }

    #[test]
    fn front_projection_is_affine_in_xy(x in -0.5f64..0.5, y in -0.5f64..0.5, z1 in -0.5f64..0.5, z2 in -0.5f64..0.5) {
        let cam = orthogonal_cameras(64, 0.55).swap_remove(5);
        let (px1, py1, _) = cam.project(&Vec3::new(x, y, z1));
        let (px2, py2, _) = cam.project(&Vec3::new(x, y, z2));
        prop_assert_eq!((px1, py1), (px2, py2));
        let scale = 64.0 / 1.1;
        prop_assert!((px1 - (32.0 - x * scale)).abs() < 1e-9 || (px1 - (32.0 + x * scale)).abs() < 1e-9);
        prop_assert!((py1 - (32.0 - y * scale)).abs() < 1e-9);
    }
}
