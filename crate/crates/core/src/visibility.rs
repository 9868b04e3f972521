//! Z-buffer depth rendering of the LoD mesh and wireframe-point culling.

use crate::camera::{Intrinsics, PoseSE3, Vec3};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::geometry::{Mesh, WireframePoints};

/// Depth slack (meters) for points lying on rendered surfaces.
pub const DEFAULT_VISIBILITY_EPS: f64 = 0.05;
const NEAR_PLANE: f64 = 1e-3;
const BAND_ROWS: usize = 16;

/// Per-pixel camera depth; `+inf` where no surface was rasterized.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
}

impl DepthMap {
    pub fn empty(width: usize, height: usize) -> Self {
        DepthMap {
            width,
            height,
            depth: vec![f64::INFINITY; width * height],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.width + x]
    }

    /// Bilinear depth at `(u, v)` using only finite neighbors.
    ///
    /// All four neighbors finite: plain bilinear blend. Mixed: the finite
    /// neighbor with the largest bilinear weight. None finite (or outside
    /// the image): `None`.
    pub fn interpolate(&self, u: f64, v: f64) -> Option<f64> {
        if !(u >= 0.0 && v >= 0.0) {
            return None;
        }
        let x0 = u.floor() as usize;
        let y0 = v.floor() as usize;
        if x0 >= self.width || y0 >= self.height {
            return None;
        }
        let (fx, fy) = (u - x0 as f64, v - y0 as f64);
        let sample = |x: usize, y: usize| {
            if x < self.width && y < self.height {
                self.at(x, y)
            } else {
                f64::INFINITY
            }
        };
        let taps = [
            (sample(x0, y0), (1.0 - fx) * (1.0 - fy)),
            (sample(x0 + 1, y0), fx * (1.0 - fy)),
            (sample(x0, y0 + 1), (1.0 - fx) * fy),
            (sample(x0 + 1, y0 + 1), fx * fy),
        ];
        if taps.iter().all(|(d, _)| d.is_finite()) {
            return Some(taps.iter().map(|(d, w)| d * w).sum());
        }
        let mut best: Option<(f64, f64)> = None;
        for &(d, w) in &taps {
            if d.is_finite() && best.map_or(true, |(_, bw)| w > bw) {
                best = Some((d, w));
            }
        }
        best.map(|(d, _)| d)
    }
}

/// A triangle after near-plane clipping, in pixel coordinates with inverse depth.
#[derive(Debug, Clone, Copy)]
struct ScreenTri {
    p: [(f64, f64); 3],
    inv_z: [f64; 3],
    area: f64,
    min_y: f64,
    max_y: f64,
}

fn clip_near(tri: [Vec3; 3]) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let a_in = a.z >= NEAR_PLANE;
        let b_in = b.z >= NEAR_PLANE;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (NEAR_PLANE - a.z) / (b.z - a.z);
            out.push(a + (b - a) * t);
        }
    }
    out
}

fn screen_triangles(mesh: &Mesh, k: &Intrinsics, pose: &PoseSE3) -> Vec<ScreenTri> {
    let mut tris = Vec::new();
    for world in mesh.triangles() {
        let cam = world.map(|p| pose.transform(&p));
        if cam.iter().all(|p| p.z < NEAR_PLANE) {
            continue;
        }
        let poly = clip_near(cam);
        for i in 1..poly.len().saturating_sub(1) {
            let verts = [poly[0], poly[i], poly[i + 1]];
            let p = verts.map(|c| k.pixel(&c));
            let area = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1);
            if area.abs() < 1e-12 {
                continue;
            }
            let ys = [p[0].1, p[1].1, p[2].1];
            tris.push(ScreenTri {
                p,
                inv_z: verts.map(|c| 1.0 / c.z),
                area,
                min_y: ys.iter().cloned().fold(f64::INFINITY, f64::min),
                max_y: ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            });
        }
    }
    tris
}

fn raster_band(tris: &[ScreenTri], width: usize, row0: usize, band: &mut [f64]) {
    let rows = band.len() / width;
    let (band_lo, band_hi) = (row0 as f64, (row0 + rows - 1) as f64);
    for t in tris {
        if t.max_y < band_lo || t.min_y > band_hi {
            continue;
        }
        let xs = [t.p[0].0, t.p[1].0, t.p[2].0];
        let min_x = xs.iter().cloned().fold(f64::INFINITY, f64::min).ceil().max(0.0);
        let max_x = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max).floor().min(width as f64 - 1.0);
        if min_x > max_x {
            continue;
        }
        let y_lo = t.min_y.ceil().max(band_lo) as usize;
        let y_hi = t.max_y.floor().min(band_hi);
        if y_hi < y_lo as f64 {
            continue;
        }
        let inv_area = 1.0 / t.area;
        let [a, b, c] = t.p;
        for y in y_lo..=y_hi as usize {
            let py = y as f64;
            let row = &mut band[(y - row0) * width..(y - row0 + 1) * width];
            for x in min_x as usize..=max_x as usize {
                let px = x as f64;
                // barycentric weights from signed sub-areas
                let w0 = ((b.0 - px) * (c.1 - py) - (c.0 - px) * (b.1 - py)) * inv_area;
                let w1 = ((c.0 - px) * (a.1 - py) - (a.0 - px) * (c.1 - py)) * inv_area;
                let w2 = 1.0 - w0 - w1;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let inv_z = w0 * t.inv_z[0] + w1 * t.inv_z[1] + w2 * t.inv_z[2];
                let d = 1.0 / inv_z;
                if d < row[x] {
                    row[x] = d;
                }
            }
        }
    }
}

/// Rasterizes every (fan-triangulated) face at pixel centers.
///
/// Depth is perspective-correct (screen-space interpolation of `1/z`). On
/// exact ties the first submitted face wins.
pub fn render_depth(mesh: &Mesh, k: &Intrinsics, pose: &PoseSE3, exec: Execution) -> DepthMap {
    let tris = screen_triangles(mesh, k, pose);
    let mut map = DepthMap::empty(k.width, k.height);
    if k.width == 0 {
        return map;
    }
    let width = k.width;
    exec::for_each_chunk_mut(exec, &mut map.depth, BAND_ROWS * width, |bi, band| {
        raster_band(&tris, width, bi * BAND_ROWS, band)
    });
    map
}

/// Frustum and occlusion test with a depth slack `eps`.
///
/// A point passes when it is in front of the camera, strictly inside the
/// image (`0 < u < width`, `0 < v < height`), and not behind the rendered
/// surface by more than `eps`. Pixels without geometry never occlude.
pub fn visibility_mask(
    points: &WireframePoints,
    k: &Intrinsics,
    pose: &PoseSE3,
    depth: &DepthMap,
    eps: f64,
) -> Result<Vec<bool>> {
    if !(eps >= 0.0) {
        return Err(Error::invalid(format!("eps must be non-negative, got {eps}")));
    }
    Ok(points
        .points
        .iter()
        .map(|p| {
            let pc = pose.transform(p);
            if !(pc.z > 0.0) {
                return false;
            }
            let (u, v) = k.pixel(&pc);
            if !(u > 0.0 && u < k.width as f64 && v > 0.0 && v < k.height as f64) {
                return false;
            }
            match depth.interpolate(u, v) {
                Some(d) => pc.z < d + eps,
                None => true,
            }
        })
        .collect())
}

pub fn visible_points(points: &WireframePoints, mask: &[bool]) -> Result<WireframePoints> {
    if mask.len() != points.len() {
        return Err(Error::LengthMismatch {
            expected: points.len(),
            actual: mask.len(),
        });
    }
    let mut out = WireframePoints::default();
    for ((p, &e), &keep) in points.points.iter().zip(&points.source_edge).zip(mask) {
        if keep {
            out.points.push(*p);
            out.source_edge.push(e);
        }
    }
    Ok(out)
}

/// Renders at `pose` and keeps the points that pass [`visibility_mask`].
pub fn cull_points(
    points: &WireframePoints,
    mesh: &Mesh,
    k: &Intrinsics,
    pose: &PoseSE3,
    eps: f64,
    exec: Execution,
) -> Result<WireframePoints> {
    let depth = render_depth(mesh, k, pose, exec);
    let mask = visibility_mask(points, k, pose, &depth, eps)?;
    visible_points(points, &mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{euler_to_pose, EulerPose};
    use crate::geometry::{box_faces, extract_wireframe, sample_points};
    use proptest::prelude::*;

    fn k() -> Intrinsics {
        Intrinsics::new(50.0, 50.0, 32.0, 24.0, 64, 48).unwrap()
    }

    /// Quad in the world plane `z = h`, large enough to fill a nadir view.
    fn plane_quad(h: f64, half: f64, base: usize) -> (Vec<Vec3>, Vec<usize>) {
        (
            vec![
                Vec3::new(-half, -half, h),
                Vec3::new(half, -half, h),
                Vec3::new(half, half, h),
                Vec3::new(-half, half, h),
            ],
            vec![base, base + 1, base + 2, base + 3],
        )
    }

    fn nadir(z: f64) -> PoseSE3 {
        euler_to_pose(&EulerPose::new(0.0, 0.0, z, 0.0, 0.0, 0.0))
    }

    #[test]
    fn fronto_parallel_plane() {
        let (v, f) = plane_quad(0.0, 100.0, 0);
        let mesh = Mesh::new(v, vec![f]).unwrap();
        let d = render_depth(&mesh, &k(), &nadir(20.0), Execution::Sequential);
        assert!(d.depth.iter().all(|&x| (x - 20.0).abs() < 1e-4));
    }

    #[test]
    fn nearer_surface_wins() {
        let (mut v, f0) = plane_quad(0.0, 100.0, 0);
        let (v1, f1) = plane_quad(10.0, 100.0, 4);
        v.extend(v1);
        let cam = nadir(20.0);
        let mesh = Mesh::new(v.clone(), vec![f0.clone(), f1.clone()]).unwrap();
        let d = render_depth(&mesh, &k(), &cam, Execution::Sequential);
        assert!(d.depth.iter().all(|&x| (x - 10.0).abs() < 1e-4));
        let swapped = Mesh::new(v, vec![f1, f0]).unwrap();
        assert_eq!(render_depth(&swapped, &k(), &cam, Execution::Sequential), d);
    }

    #[test]
    fn slanted_plane_matches_ray_cast() {
        // plane z = 0.3 x + 0.1 y, viewed from an oblique pose
        let pts = [(-200.0, -200.0), (200.0, -200.0), (200.0, 200.0), (-200.0, 200.0)];
        let v: Vec<Vec3> = pts.iter().map(|&(x, y)| Vec3::new(x, y, 0.3 * x + 0.1 * y)).collect();
        let mesh = Mesh::new(v, vec![vec![0, 1, 2, 3]]).unwrap();
        let pose = euler_to_pose(&EulerPose::new(3.0, -2.0, 60.0, 20.0, 10.0, -5.0));
        let kk = k();
        let d = render_depth(&mesh, &kk, &pose, Execution::Sequential);
        let c = pose.center();
        let normal = Vec3::new(-0.3, -0.1, 1.0);
        for y in 0..kk.height {
            for x in 0..kk.width {
                // camera ray through the pixel center, in world coordinates
                let ray_cam = Vec3::new((x as f64 - kk.cx) / kk.fx, (y as f64 - kk.cy) / kk.fy, 1.0);
                let ray = pose.rotation.transpose() * ray_cam;
                let s = -(normal.dot(&c)) / normal.dot(&ray);
                let expected_depth = s; // ray_cam has unit z
                assert!((d.at(x, y) - expected_depth).abs() < 1e-3, "{x},{y}");
            }
        }
    }

    #[test]
    fn band_parallel_bit_identical() {
        let mut verts = Vec::new();
        let mut faces = Vec::new();
        for i in 0..6 {
            let (v, f) = box_faces(
                Vec3::new(-30.0 + 11.0 * i as f64, -10.0 + 3.0 * i as f64, 0.0),
                Vec3::new(-22.0 + 11.0 * i as f64, 5.0 + 3.0 * i as f64, 5.0 + 4.0 * i as f64),
                verts.len(),
            );
            verts.extend(v);
            faces.extend(f);
        }
        let mesh = Mesh::new(verts, faces).unwrap();
        let pose = euler_to_pose(&EulerPose::new(0.0, 0.0, 80.0, 15.0, 12.0, 3.0));
        let a = render_depth(&mesh, &k(), &pose, Execution::Sequential);
        let b = render_depth(&mesh, &k(), &pose, Execution::Parallel);
        assert_eq!(a, b);
        assert!(a.depth.iter().filter(|d| d.is_finite()).all(|&d| d > 0.0));
    }

    fn wall_scene() -> (Mesh, PoseSE3) {
        // camera at origin looking along +x (world), wall at x = 20
        let v = vec![
            Vec3::new(20.0, -50.0, -50.0),
            Vec3::new(20.0, 50.0, -50.0),
            Vec3::new(20.0, 50.0, 50.0),
            Vec3::new(20.0, -50.0, 50.0),
        ];
        let mesh = Mesh::new(v, vec![vec![0, 1, 2, 3]]).unwrap();
        // camera z -> world +x
        let r = crate::camera::Mat3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0);
        (mesh, PoseSE3 { rotation: r, translation: Vec3::zeros() })
    }

    #[test]
    fn mask_cases() {
        let (mesh, pose) = wall_scene();
        let kk = k();
        let depth = render_depth(&mesh, &kk, &pose, Execution::Sequential);
        let pts = WireframePoints::from_points(vec![
            Vec3::new(10.0, 1.0, 1.0),  // in front of the wall
            Vec3::new(25.0, 1.0, 1.0),  // 5 m behind it
            Vec3::new(20.0, 1.3, -0.7), // on the wall
            Vec3::new(-5.0, 0.0, 0.0),  // behind the camera
            Vec3::new(10.0, 100.0, 0.0), // outside the frustum
        ]);
        let m = visibility_mask(&pts, &kk, &pose, &depth, 0.1).unwrap();
        assert_eq!(m, vec![true, false, true, false, false]);
        let open = DepthMap::empty(kk.width, kk.height);
        let m = visibility_mask(&pts, &kk, &pose, &open, 0.0).unwrap();
        assert_eq!(m, vec![true, true, true, false, false]);
        assert!(visibility_mask(&pts, &kk, &pose, &depth, -1.0).is_err());
    }

    #[test]
    fn filter_semantics() {
        let pts = WireframePoints::from_points((0..6).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect());
        assert_eq!(visible_points(&pts, &[true; 6]).unwrap(), pts);
        assert!(visible_points(&pts, &[false; 6]).unwrap().is_empty());
        let alt = visible_points(&pts, &[true, false, true, false, true, false]).unwrap();
        assert_eq!(alt.points.iter().map(|p| p.x).collect::<Vec<_>>(), vec![0.0, 2.0, 4.0]);
        assert!(matches!(visible_points(&pts, &[true; 5]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn depth_interpolation_rules() {
        let mut d = DepthMap::empty(2, 2);
        d.depth = vec![1.0, 3.0, 5.0, 7.0];
        assert_eq!(d.interpolate(0.5, 0.5), Some(4.0));
        d.depth[3] = f64::INFINITY;
        // nearest finite neighbor of (0.8, 0.1) is (1, 0)
        assert_eq!(d.interpolate(0.8, 0.1), Some(3.0));
        assert_eq!(DepthMap::empty(2, 2).interpolate(0.5, 0.5), None);
    }

    /// Analytic ray casting against axis-aligned boxes.
    fn ray_box_hit(origin: &Vec3, dir: &Vec3, min: &Vec3, max: &Vec3) -> Option<f64> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for a in 0..3 {
            if dir[a].abs() < 1e-15 {
                if origin[a] < min[a] || origin[a] > max[a] {
                    return None;
                }
                continue;
            }
            let ta = (min[a] - origin[a]) / dir[a];
            let tb = (max[a] - origin[a]) / dir[a];
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
        (t0 <= t1 && t1 > 0.0).then_some(t0.max(0.0))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn cube_edge_points_match_ray_cast(
            x in -20.0f64..20.0, y in -20.0f64..20.0, z in 40.0f64..90.0,
            yaw in -180.0f64..180.0, pitch in -25.0f64..25.0, roll in -10.0f64..10.0,
        ) {
            let boxes = [
                (Vec3::new(-10.0, -8.0, 0.0), Vec3::new(2.0, 6.0, 18.0)),
                (Vec3::new(6.0, -3.0, 0.0), Vec3::new(15.0, 12.0, 9.0)),
            ];
            let mut verts = Vec::new();
            let mut faces = Vec::new();
            for (lo, hi) in &boxes {
                let (v, f) = box_faces(*lo, *hi, verts.len());
                verts.extend(v);
                faces.extend(f);
            }
            let mesh = Mesh::new(verts, faces).unwrap();
            let kk = Intrinsics::new(120.0, 120.0, 80.0, 60.0, 160, 120).unwrap();
            let pose = euler_to_pose(&EulerPose::new(x, y, z, yaw, pitch, roll));
            let pts = sample_points(&extract_wireframe(&mesh, 10.0).unwrap(), 1.0).unwrap();
            let depth = render_depth(&mesh, &kk, &pose, Execution::Parallel);
            let mask = visibility_mask(&pts, &kk, &pose, &depth, DEFAULT_VISIBILITY_EPS).unwrap();
            let c = pose.center();
            let mut agree = 0usize;
            let mut checked = 0usize;
            for (p, &m) in pts.points.iter().zip(&mask) {
                let pc = pose.transform(p);
                if pc.z <= 0.0 { continue; }
                let (u, v) = kk.pixel(&pc);
                // stay off the image border and grazing configurations
                if !(u > 2.0 && u < kk.width as f64 - 3.0 && v > 2.0 && v < kk.height as f64 - 3.0) { continue; }
                // skip cells where the raster cannot resolve depth: silhouettes and grazing walls
                let (x0, y0) = (u.floor() as usize, v.floor() as usize);
                let taps = [depth.at(x0, y0), depth.at(x0 + 1, y0), depth.at(x0, y0 + 1), depth.at(x0 + 1, y0 + 1)];
                let lo = taps.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = taps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if !(hi - lo < 0.25) { continue; }
                let dir = (p - c).normalize();
                let dist = (p - c).norm();
                // unoccluded: the first surface hit is the point itself
                let first_hit = boxes.iter().filter_map(|(lo, hi)| ray_box_hit(&c, &dir, lo, hi)).fold(f64::INFINITY, f64::min);
                if first_hit >= dist - 1e-6 {
                    checked += 1;
                    if m { agree += 1; }
                } else if first_hit < dist - 5.0 {
                    checked += 1;
                    if !m { agree += 1; }
                }
            }
            prop_assert!(checked == 0 || agree as f64 >= 0.99 * checked as f64, "{agree}/{checked}");
        }

        #[test]
        fn mask_monotone_in_eps(e1 in 0.0f64..2.0, extra in 0.0f64..2.0) {
            let (mesh, pose) = wall_scene();
            let kk = k();
            let depth = render_depth(&mesh, &kk, &pose, Execution::Sequential);
            let pts = WireframePoints::from_points(
                (0..200).map(|i| Vec3::new(18.0 + (i % 20) as f64 * 0.25, (i as f64 * 0.37) % 8.0 - 4.0, (i as f64 * 0.53) % 6.0 - 3.0)).collect(),
            );
            let a = visibility_mask(&pts, &kk, &pose, &depth, e1).unwrap();
            let b = visibility_mask(&pts, &kk, &pose, &depth, e1 + extra).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(!x || *y);
            }
        }
    }
}
