//! File formats: OBJ meshes, LODWF wireframes, pose/intrinsics CSV,
//! FPM1 probability maps, FDM1 depth dumps, FPV1 volume dumps and PPM overlays.

use std::fs;
use std::path::{Path, PathBuf};

use crate::camera::{EulerPose, Intrinsics, Vec3};
use crate::error::{Error, Result};
use crate::geometry::{Mesh, WireframeEdge};
use crate::oracle::{ProbabilityMap, ProbabilityMapPyramid, LEVEL_SCALES};
use crate::visibility::DepthMap;
use crate::volume::PoseVolume;

pub const PYRAMID_SUFFIXES: [&str; 4] = ["_l1", "_l2", "_l3", "_rf"];
pub const POSE_HEADER: [&str; 7] = ["name", "x", "y", "z", "yaw", "pitch", "roll"];
pub const INTRINSICS_HEADER: [&str; 6] = ["fx", "fy", "cx", "cy", "width", "height"];

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn parse_f64(tok: Option<&str>, src: &str, line: usize, what: &str) -> Result<f64> {
    let tok = tok.ok_or_else(|| Error::parse(src, line, format!("missing {what}")))?;
    tok.parse::<f64>()
        .map_err(|_| Error::parse(src, line, format!("bad {what} '{tok}'")))
}

/// Parses the `v` / `f` subset of Wavefront OBJ; other lines are ignored.
///
/// Face indices are 1-based; negative indices count back from the last
/// vertex seen. Anything after the first `/` in a face token is dropped.
pub fn parse_obj(text: &str, src: &str) -> Result<Mesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let mut toks = raw.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = parse_f64(toks.next(), src, line, "x")?;
                let y = parse_f64(toks.next(), src, line, "y")?;
                let z = parse_f64(toks.next(), src, line, "z")?;
                vertices.push(Vec3::new(x, y, z));
            }
            Some("f") => {
                let mut face = Vec::new();
                for tok in toks {
                    let idx = tok.split('/').next().unwrap_or("");
                    let n: i64 = idx
                        .parse()
                        .map_err(|_| Error::parse(src, line, format!("bad face index '{tok}'")))?;
                    let resolved = match n {
                        n if n > 0 => n - 1,
                        n if n < 0 => vertices.len() as i64 + n,
                        _ => -1,
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(Error::parse(src, line, format!("face index {n} out of range")));
                    }
                    face.push(resolved as usize);
                }
                if face.len() < 3 {
                    return Err(Error::parse(src, line, "face needs at least 3 vertices"));
                }
                faces.push(face);
            }
            _ => {}
        }
    }
    Mesh::new(vertices, faces)
}

pub fn read_obj(path: &Path) -> Result<Mesh> {
    parse_obj(&read_text(path)?, &path.display().to_string())
}

pub fn format_obj(mesh: &Mesh) -> String {
    let mut s = String::new();
    for v in &mesh.vertices {
        s.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    for f in &mesh.faces {
        s.push('f');
        for i in f {
            s.push_str(&format!(" {}", i + 1));
        }
        s.push('\n');
    }
    s
}

pub fn format_wireframe(edges: &[WireframeEdge]) -> String {
    let mut s = format!("LODWF 1 {}\n", edges.len());
    for e in edges {
        let [a, b] = e.endpoints;
        s.push_str(&format!("e {} {} {} {} {} {}\n", a.x, a.y, a.z, b.x, b.y, b.z));
    }
    s
}

/// Parses a LODWF file. Face normals are not stored, so the returned
/// edges have empty `adjacent_normals`.
pub fn parse_wireframe(text: &str, src: &str) -> Result<Vec<WireframeEdge>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(src, 1, "empty wireframe file"))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 3 || h[0] != "LODWF" || h[1] != "1" {
        return Err(Error::parse(src, 1, "expected header 'LODWF 1 <count>'"));
    }
    let count: usize = h[2]
        .parse()
        .map_err(|_| Error::parse(src, 1, "bad edge count"))?;
    let mut edges = Vec::with_capacity(count);
    for (i, raw) in lines {
        let line = i + 1;
        let mut toks = raw.split_whitespace();
        match toks.next() {
            None => continue,
            Some("e") => {}
            Some(t) => return Err(Error::parse(src, line, format!("unexpected record '{t}'"))),
        }
        let mut c = [0.0; 6];
        for (j, v) in c.iter_mut().enumerate() {
            *v = parse_f64(toks.next(), src, line, &format!("coordinate {}", j + 1))?;
        }
        edges.push(WireframeEdge {
            endpoints: [Vec3::new(c[0], c[1], c[2]), Vec3::new(c[3], c[4], c[5])],
            adjacent_normals: Vec::new(),
        });
    }
    if edges.len() != count {
        return Err(Error::parse(
            src,
            1,
            format!("header declares {count} edges, found {}", edges.len()),
        ));
    }
    Ok(edges)
}

pub fn read_wireframe(path: &Path) -> Result<Vec<WireframeEdge>> {
    parse_wireframe(&read_text(path)?, &path.display().to_string())
}

fn check_header(rdr: &mut csv::Reader<&[u8]>, want: &[&str], src: &str) -> Result<()> {
    let got = rdr
        .headers()
        .map_err(|e| Error::parse(src, 1, e.to_string()))?;
    let got: Vec<&str> = got.iter().map(str::trim).collect();
    if got != want {
        return Err(Error::parse(src, 1, format!("expected header '{}'", want.join(","))));
    }
    Ok(())
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

fn record_line(rec: &csv::StringRecord, fallback: usize) -> usize {
    rec.position().map(|p| p.line() as usize).unwrap_or(fallback)
}

/// Parses `name,x,y,z,yaw,pitch,roll` rows.
pub fn parse_poses(text: &str, src: &str) -> Result<Vec<(String, EulerPose)>> {
    let mut rdr = csv_reader(text);
    check_header(&mut rdr, &POSE_HEADER, src)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(src, i + 2, e.to_string()))?;
        let line = record_line(&rec, i + 2);
        if rec.len() != 7 {
            return Err(Error::parse(src, line, format!("expected 7 fields, got {}", rec.len())));
        }
        let name = rec[0].to_string();
        if name.is_empty() {
            return Err(Error::parse(src, line, "empty pose name"));
        }
        let mut v = [0.0; 6];
        for (j, x) in v.iter_mut().enumerate() {
            *x = parse_f64(rec.get(j + 1), src, line, POSE_HEADER[j + 1])?;
        }
        let pose = EulerPose::new(v[0], v[1], v[2], v[3], v[4], v[5]);
        if !pose.is_finite() {
            return Err(Error::parse(src, line, "non-finite pose"));
        }
        out.push((name, pose));
    }
    Ok(out)
}

pub fn read_poses(path: &Path) -> Result<Vec<(String, EulerPose)>> {
    parse_poses(&read_text(path)?, &path.display().to_string())
}

pub fn format_poses(poses: &[(String, EulerPose)]) -> String {
    let mut s = POSE_HEADER.join(",");
    s.push('\n');
    for (name, p) in poses {
        s.push_str(&format!(
            "{name},{},{},{},{},{},{}\n",
            p.x, p.y, p.z, p.yaw, p.pitch, p.roll
        ));
    }
    s
}

/// Parses a single-row `fx,fy,cx,cy,width,height` file.
pub fn parse_intrinsics(text: &str, src: &str) -> Result<Intrinsics> {
    let mut rdr = csv_reader(text);
    check_header(&mut rdr, &INTRINSICS_HEADER, src)?;
    let rec = rdr
        .records()
        .next()
        .ok_or_else(|| Error::parse(src, 2, "missing intrinsics row"))?
        .map_err(|e| Error::parse(src, 2, e.to_string()))?;
    let line = record_line(&rec, 2);
    if rec.len() != 6 {
        return Err(Error::parse(src, line, format!("expected 6 fields, got {}", rec.len())));
    }
    let f = |j: usize| parse_f64(rec.get(j), src, line, INTRINSICS_HEADER[j]);
    let dim = |j: usize| -> Result<usize> {
        rec[j]
            .parse()
            .map_err(|_| Error::parse(src, line, format!("bad {} '{}'", INTRINSICS_HEADER[j], &rec[j])))
    };
    Intrinsics::new(f(0)?, f(1)?, f(2)?, f(3)?, dim(4)?, dim(5)?)
}

pub fn read_intrinsics(path: &Path) -> Result<Intrinsics> {
    parse_intrinsics(&read_text(path)?, &path.display().to_string())
}

pub fn format_intrinsics(k: &Intrinsics) -> String {
    format!(
        "{}\n{},{},{},{},{},{}\n",
        INTRINSICS_HEADER.join(","),
        k.fx,
        k.fy,
        k.cx,
        k.cy,
        k.width,
        k.height
    )
}

fn encode_grid(magic: &[u8; 4], width: usize, height: usize, values: impl Iterator<Item = f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * width * height);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(width as u32).to_le_bytes());
    out.extend_from_slice(&(height as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn decode_grid(magic: &[u8; 4], bytes: &[u8], src: &str) -> Result<(usize, usize, Vec<f32>)> {
    if bytes.len() < 12 || &bytes[..4] != magic {
        return Err(Error::parse(
            src,
            0,
            format!("missing {} header", String::from_utf8_lossy(magic)),
        ));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() != 4 * width * height {
        return Err(Error::parse(
            src,
            0,
            format!("{width}x{height} payload needs {} bytes, found {}", 4 * width * height, body.len()),
        ));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((width, height, values))
}

pub fn encode_map(map: &ProbabilityMap) -> Vec<u8> {
    encode_grid(b"FPM1", map.width, map.height, map.values.iter().copied())
}

pub fn decode_map(bytes: &[u8], level_scale: f64, src: &str) -> Result<ProbabilityMap> {
    let (width, height, values) = decode_grid(b"FPM1", bytes, src)?;
    let map = ProbabilityMap {
        width,
        height,
        values,
        level_scale,
    };
    map.validate()?;
    Ok(map)
}

pub fn read_map(path: &Path, level_scale: f64) -> Result<ProbabilityMap> {
    decode_map(&read_bytes(path)?, level_scale, &path.display().to_string())
}

/// `<dir>/<stem><suffix>.fpm` for each pyramid slot.
pub fn pyramid_paths(dir: &Path, stem: &str) -> [PathBuf; 4] {
    PYRAMID_SUFFIXES.map(|s| dir.join(format!("{stem}{s}.fpm")))
}

pub fn write_pyramid(dir: &Path, stem: &str, pyramid: &ProbabilityMapPyramid) -> Result<()> {
    let paths = pyramid_paths(dir, stem);
    for (path, map) in paths.iter().zip(pyramid.levels.iter().chain([&pyramid.refined])) {
        write_bytes(path, &encode_map(map))?;
    }
    Ok(())
}

pub fn read_pyramid(dir: &Path, stem: &str) -> Result<ProbabilityMapPyramid> {
    let [p1, p2, p3, pr] = pyramid_paths(dir, stem);
    Ok(ProbabilityMapPyramid {
        levels: [
            read_map(&p1, LEVEL_SCALES[0])?,
            read_map(&p2, LEVEL_SCALES[1])?,
            read_map(&p3, LEVEL_SCALES[2])?,
        ],
        refined: read_map(&pr, 1.0)?,
    })
}

pub fn encode_depth(depth: &DepthMap) -> Vec<u8> {
    encode_grid(b"FDM1", depth.width, depth.height, depth.depth.iter().map(|&d| d as f32))
}

pub fn decode_depth(bytes: &[u8], src: &str) -> Result<DepthMap> {
    let (width, height, values) = decode_grid(b"FDM1", bytes, src)?;
    Ok(DepthMap {
        width,
        height,
        depth: values.into_iter().map(f64::from).collect(),
    })
}

/// `FPV1`, four u32 dims, then f32 cost and f32 prob arrays.
pub fn encode_volume(volume: &PoseVolume) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 8 * volume.cost.len());
    out.extend_from_slice(b"FPV1");
    for d in volume.grid.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    let prob: Vec<f64> = if volume.has_prob() {
        volume.prob.clone()
    } else {
        vec![0.0; volume.cost.len()]
    };
    for v in volume.cost.iter().chain(prob.iter()) {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

/// Binary P6 image from packed RGB.
pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Result<Vec<u8>> {
    if rgb.len() != 3 * width * height {
        return Err(Error::LengthMismatch {
            expected: 3 * width * height,
            actual: rgb.len(),
        });
    }
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{box_faces, extract_wireframe};

    fn cube_obj() -> String {
        let (v, f) = box_faces(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0), 0);
        format_obj(&Mesh::new(v, f).unwrap())
    }

    #[test]
    fn obj_round_trip_and_slashes() {
        let m = parse_obj(&cube_obj(), "cube").unwrap();
        assert_eq!(m.vertices.len(), 8);
        assert_eq!(m.faces.len(), 6);
        let text = "# tri\nv 0 0 0\nv 1 0 0\nvn 0 0 1\nv 0 1 0\nf 1/1/1 2//1 -1\n";
        let t = parse_obj(text, "t").unwrap();
        assert_eq!(t.faces, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn obj_errors_name_the_line() {
        let err = parse_obj("v 0 0 0\nv 1 0 0\nf 1 2 9\n", "m.obj").unwrap_err();
        assert!(err.to_string().starts_with("m.obj:3:"), "{err}");
        assert!(matches!(parse_obj("v 0 x 0\n", "m"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn wireframe_round_trip() {
        let m = parse_obj(&cube_obj(), "cube").unwrap();
        let edges = extract_wireframe(&m, 10.0).unwrap();
        let text = format_wireframe(&edges);
        assert!(text.starts_with("LODWF 1 12\n"));
        let back = parse_wireframe(&text, "w").unwrap();
        assert_eq!(back.len(), 12);
        for (a, b) in edges.iter().zip(&back) {
            assert_eq!(a.endpoints, b.endpoints);
        }
        assert!(parse_wireframe("LODWF 1 2\ne 0 0 0 1 1 1\n", "w").is_err());
    }

    #[test]
    fn pose_csv_round_trip() {
        let poses = vec![
            ("a".to_string(), EulerPose::new(1.5, -2.0, 100.0, 45.0, 10.0, -1.0)),
            ("b".to_string(), EulerPose::new(0.1, 0.2, 0.3, -179.5, 0.0, 0.0)),
        ];
        let text = format_poses(&poses);
        assert_eq!(parse_poses(&text, "p").unwrap(), poses);
    }

    #[test]
    fn pose_csv_errors_name_the_row() {
        let text = "name,x,y,z,yaw,pitch,roll\na,0,0,0,0,0,0\nb,0,zz,0,0,0,0\n";
        match parse_poses(text, "p.csv") {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains('y'));
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_poses("name,x,y\n", "p").is_err());
    }

    #[test]
    fn intrinsics_round_trip() {
        let k = Intrinsics::new(400.0, 410.0, 256.0, 240.0, 512, 480).unwrap();
        assert_eq!(parse_intrinsics(&format_intrinsics(&k), "k").unwrap(), k);
        assert!(parse_intrinsics("fx,fy,cx,cy,width,height\n1,1,0,0,0,5\n", "k").is_err());
    }

    #[test]
    fn map_round_trip_is_bit_exact() {
        let mut m = ProbabilityMap::zeros(5, 3, 0.5);
        for (i, v) in m.values.iter_mut().enumerate() {
            *v = i as f32 / 17.0;
        }
        let bytes = encode_map(&m);
        assert_eq!(&bytes[..4], b"FPM1");
        assert_eq!(bytes.len(), 12 + 4 * 15);
        assert_eq!(decode_map(&bytes, 0.5, "m").unwrap(), m);
        assert!(decode_map(&bytes[..20], 0.5, "m").is_err());
    }

    #[test]
    fn pyramid_files_use_suffixes() {
        let dir = tempfile::tempdir().unwrap();
        let k = Intrinsics::new(8.0, 8.0, 4.0, 4.0, 8, 8).unwrap();
        let level = |s: f64| {
            let kl = k.scaled(s);
            ProbabilityMap::filled(kl.width, kl.height, s, 0.25)
        };
        let p = ProbabilityMapPyramid {
            levels: [level(0.25), level(0.5), level(1.0)],
            refined: level(1.0),
        };
        write_pyramid(dir.path(), "q", &p).unwrap();
        for s in PYRAMID_SUFFIXES {
            assert!(dir.path().join(format!("q{s}.fpm")).exists());
        }
        assert_eq!(read_pyramid(dir.path(), "q").unwrap(), p);
    }

    #[test]
    fn depth_round_trip_keeps_infinity() {
        let mut d = DepthMap::empty(2, 2);
        d.depth[1] = 3.5;
        let back = decode_depth(&encode_depth(&d), "d").unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn ppm_header() {
        let ppm = encode_ppm(2, 1, &[0; 6]).unwrap();
        assert!(ppm.starts_with(b"P6\n2 1\n255\n"));
        assert!(encode_ppm(2, 2, &[0; 6]).is_err());
    }
}
