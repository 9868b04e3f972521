//! LoD meshes, wireframe extraction and discrete wireframe points.

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::camera::Vec3;
use crate::error::{Error, Result};

pub const DEFAULT_MU_DEG: f64 = 10.0;
pub const DEFAULT_DELTA_M: f64 = 1.0;
pub const DEFAULT_POINT_LIMIT: usize = 2000;
/// Vertices closer than this are merged before adjacency is built.
pub const WELD_TOL: f64 = 1e-6;
const MIN_FACE_AREA: f64 = 1e-12;

/// Polygonal surface mesh in a local metric frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<Vec<usize>>,
}

impl Mesh {
    /// Builds a mesh, checking indices and face degeneracy.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<Vec<usize>>) -> Result<Self> {
        let mesh = Mesh { vertices, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(v) = self.vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh(format!("vertex {v} is not finite")));
        }
        for (fi, face) in self.faces.iter().enumerate() {
            if face.len() < 3 {
                return Err(Error::InvalidMesh(format!("face {fi} has fewer than 3 vertices")));
            }
            if let Some(&i) = face.iter().find(|&&i| i >= self.vertices.len()) {
                return Err(Error::InvalidMesh(format!("face {fi} references vertex {i}")));
            }
            face_normal(face, self).map_err(|_| Error::InvalidMesh(format!("face {fi}: degenerate face")))?;
        }
        Ok(())
    }

    /// Fan triangulation of every face, in face order.
    pub fn triangles(&self) -> impl Iterator<Item = [Vec3; 3]> + '_ {
        self.faces.iter().flat_map(move |f| {
            (1..f.len() - 1).map(move |k| {
                [
                    self.vertices[f[0]],
                    self.vertices[f[k]],
                    self.vertices[f[k + 1]],
                ]
            })
        })
    }
}

/// Newell-method unit normal; orientation follows the vertex winding.
pub fn face_normal(face: &[usize], mesh: &Mesh) -> Result<Vec3> {
    let mut n = Vec3::zeros();
    for (k, &i) in face.iter().enumerate() {
        let a = mesh.vertices[i];
        let b = mesh.vertices[face[(k + 1) % face.len()]];
        n.x += (a.y - b.y) * (a.z + b.z);
        n.y += (a.z - b.z) * (a.x + b.x);
        n.z += (a.x - b.x) * (a.y + b.y);
    }
    let twice_area = n.norm();
    if !(twice_area * 0.5 > MIN_FACE_AREA) {
        return Err(Error::DegenerateFace);
    }
    Ok(n / twice_area)
}

/// A salient 3D line of the LoD model.
#[derive(Debug, Clone, PartialEq)]
pub struct WireframeEdge {
    pub endpoints: [Vec3; 2],
    /// Normals of one (boundary) or two adjacent faces.
    pub adjacent_normals: Vec<Vec3>,
}

impl WireframeEdge {
    pub fn length(&self) -> f64 {
        (self.endpoints[1] - self.endpoints[0]).norm()
    }

    /// Angle between the adjacent face normals in degrees, if two faces adjoin.
    pub fn normal_angle_deg(&self) -> Option<f64> {
        match self.adjacent_normals.as_slice() {
            [a, b] => Some(angle_deg(a, b)),
            _ => None,
        }
    }
}

fn angle_deg(a: &Vec3, b: &Vec3) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Maps every vertex to a representative index; vertices within
/// [`WELD_TOL`] of an earlier vertex collapse onto it.
fn weld_vertices(vertices: &[Vec3]) -> Vec<usize> {
    let cell = |v: &Vec3| {
        [
            (v.x / WELD_TOL).floor() as i64,
            (v.y / WELD_TOL).floor() as i64,
            (v.z / WELD_TOL).floor() as i64,
        ]
    };
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let mut rep = Vec::with_capacity(vertices.len());
    for (i, v) in vertices.iter().enumerate() {
        let c = cell(v);
        let mut found = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(list) = grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) else {
                        continue;
                    };
                    for &j in list {
                        if (vertices[j] - v).norm() <= WELD_TOL && found.map_or(true, |f| j < f) {
                            found = Some(j);
                        }
                    }
                }
            }
        }
        match found {
            Some(j) => rep.push(j),
            None => {
                grid.entry(c).or_default().push(i);
                rep.push(i);
            }
        }
    }
    rep
}

/// Keeps boundary edges and edges whose adjacent face normals differ by more
/// than `mu_degrees`; `mu_degrees = 0` keeps every shared edge. Edges with
/// more than two faces are kept if any pair of faces exceeds the threshold.
pub fn extract_wireframe(mesh: &Mesh, mu_degrees: f64) -> Result<Vec<WireframeEdge>> {
    if !(mu_degrees >= 0.0 && mu_degrees < 180.0) {
        return Err(Error::invalid(format!("mu must lie in [0, 180), got {mu_degrees}")));
    }
    mesh.validate()?;
    let rep = weld_vertices(&mesh.vertices);
    let normals = mesh
        .faces
        .iter()
        .map(|f| face_normal(f, mesh))
        .collect::<Result<Vec<_>>>()?;

    // Keyed by welded vertex *positions* so the result does not depend on
    // vertex numbering.
    type Key = ([u64; 3], [u64; 3]);
    let pos_key = |i: usize| {
        let v = mesh.vertices[rep[i]];
        [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()]
    };
    let mut adjacency: BTreeMap<Key, (usize, usize, Vec<usize>)> = BTreeMap::new();
    for (fi, face) in mesh.faces.iter().enumerate() {
        for k in 0..face.len() {
            let a = rep[face[k]];
            let b = rep[face[(k + 1) % face.len()]];
            if a == b {
                continue;
            }
            let (ka, kb) = (pos_key(a), pos_key(b));
            let (key, lo, hi) = if ka <= kb { ((ka, kb), a, b) } else { ((kb, ka), b, a) };
            let entry = adjacency.entry(key).or_insert_with(|| (lo, hi, Vec::new()));
            if !entry.2.contains(&fi) {
                entry.2.push(fi);
            }
        }
    }

    let mut edges = Vec::new();
    for (lo, hi, faces) in adjacency.into_values() {
        let endpoints = [mesh.vertices[lo], mesh.vertices[hi]];
        if faces.len() == 1 {
            edges.push(WireframeEdge {
                endpoints,
                adjacent_normals: vec![normals[faces[0]]],
            });
            continue;
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..faces.len() {
            for j in i + 1..faces.len() {
                let ang = angle_deg(&normals[faces[i]], &normals[faces[j]]);
                if (ang > mu_degrees || mu_degrees == 0.0) && best.map_or(true, |b| ang > b.0) {
                    best = Some((ang, faces[i], faces[j]));
                }
            }
        }
        if let Some((_, a, b)) = best {
            edges.push(WireframeEdge {
                endpoints,
                adjacent_normals: vec![normals[a], normals[b]],
            });
        }
    }
    Ok(edges)
}

/// Discrete points on wireframe edges, each tagged with its source edge.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WireframePoints {
    pub points: Vec<Vec3>,
    pub source_edge: Vec<usize>,
}

impl WireframePoints {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn from_points(points: Vec<Vec3>) -> Self {
        let source_edge = vec![0; points.len()];
        WireframePoints {
            points,
            source_edge,
        }
    }
}

/// Number of segments an edge of `length` is cut into at spacing `delta`.
fn segment_count(length: f64, delta: f64) -> usize {
    // tolerance keeps exact multiples from picking up an extra segment
    ((length / delta - 1e-9).ceil() as usize).max(1)
}

/// Uniformly samples `ceil(L/δ)+1` points per edge, endpoints included.
pub fn sample_points(edges: &[WireframeEdge], delta: f64) -> Result<WireframePoints> {
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("delta must be positive, got {delta}")));
    }
    let mut out = WireframePoints::default();
    for (ei, e) in edges.iter().enumerate() {
        let [a, b] = e.endpoints;
        let n = segment_count(e.length(), delta);
        for k in 0..=n {
            let t = k as f64 / n as f64;
            out.points.push(a + (b - a) * t);
            out.source_edge.push(ei);
        }
    }
    Ok(out)
}

/// Uniform random subset of at most `limit` points, kept in original order.
pub fn subsample_points(points: &WireframePoints, limit: usize, seed: u64) -> Result<WireframePoints> {
    if limit == 0 {
        return Err(Error::invalid("point limit must be positive"));
    }
    if points.len() <= limit {
        return Ok(points.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, points.len(), limit).into_vec();
    idx.sort_unstable();
    Ok(WireframePoints {
        points: idx.iter().map(|&i| points.points[i]).collect(),
        source_edge: idx.iter().map(|&i| points.source_edge[i]).collect(),
    })
}

/// Axis-aligned box with outward-facing quads; handy for scenes and tests.
pub fn box_faces(min: Vec3, max: Vec3, base: usize) -> (Vec<Vec3>, Vec<Vec<usize>>) {
    let v = vec![
        Vec3::new(min.x, min.y, min.z),
        Vec3::new(max.x, min.y, min.z),
        Vec3::new(max.x, max.y, min.z),
        Vec3::new(min.x, max.y, min.z),
        Vec3::new(min.x, min.y, max.z),
        Vec3::new(max.x, min.y, max.z),
        Vec3::new(max.x, max.y, max.z),
        Vec3::new(min.x, max.y, max.z),
    ];
    let f = [
        [0, 3, 2, 1], // bottom, -z
        [4, 5, 6, 7], // top, +z
        [0, 1, 5, 4], // -y
        [1, 2, 6, 5], // +x
        [2, 3, 7, 6], // +y
        [3, 0, 4, 7], // -x
    ];
    let faces = f.iter().map(|q| q.iter().map(|i| i + base).collect()).collect();
    (v, faces)
}
