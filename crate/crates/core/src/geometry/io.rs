//! ASCII OBJ, PLY and XYZ readers and writers.
//!
//! Coordinates are written in Rust's shortest round-trip float notation, so
//! a save/load cycle reproduces every coordinate bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{PointCloud, TriangleMesh, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Obj,
    Ply,
    Xyz,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("obj") => Ok(Format::Obj),
            Some("ply") => Ok(Format::Ply),
            Some("xyz") | Some("txt") => Ok(Format::Xyz),
            _ => Err(Error::InvalidInput(format!(
                "{}: unknown file extension (expected .obj, .ply or .xyz)",
                path.display()
            ))),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_f64(path: &Path, line: usize, tok: Option<&str>) -> Result<f64> {
    let tok = tok.ok_or_else(|| parse_err(path, line, "missing coordinate"))?;
    tok.parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("invalid number {tok:?}")))
}

fn parse_xyz3<'a>(path: &Path, line: usize, toks: &mut impl Iterator<Item = &'a str>) -> Result<Vec3> {
    let x = parse_f64(path, line, toks.next())?;
    let y = parse_f64(path, line, toks.next())?;
    let z = parse_f64(path, line, toks.next())?;
    Ok(Vec3::new(x, y, z))
}

struct RawMesh {
    vertices: Vec<Vec3>,
    patches: Vec<[usize; 3]>,
}

fn parse_obj(path: &Path, text: &str) -> Result<RawMesh> {
    let mut vertices = Vec::new();
    let mut patches = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => vertices.push(parse_xyz3(path, line_no, &mut toks)?),
            Some("f") => {
                let idx: Vec<&str> = toks.collect();
                if idx.len() != 3 {
                    return Err(parse_err(
                        path,
                        line_no,
                        format!("face has {} vertices; only triangles are supported", idx.len()),
                    ));
                }
                let mut tri = [0usize; 3];
                for (slot, tok) in tri.iter_mut().zip(idx) {
                    let head = tok.split('/').next().unwrap_or("");
                    let i: i64 = head
                        .parse()
                        .map_err(|_| parse_err(path, line_no, format!("invalid face index {tok:?}")))?;
                    let resolved = if i > 0 {
                        i - 1
                    } else if i < 0 {
                        vertices.len() as i64 + i
                    } else {
                        -1
                    };
                    if resolved < 0 {
                        return Err(parse_err(path, line_no, format!("face index {i} out of range")));
                    }
                    *slot = resolved as usize;
                }
                patches.push(tri);
            }
            _ => {}
        }
    }
    Ok(RawMesh { vertices, patches })
}

fn parse_ply(path: &Path, text: &str) -> Result<RawMesh> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(parse_err(path, 1, "missing 'ply' magic")),
    }
    let mut n_vertices = 0usize;
    let mut n_faces = 0usize;
    let mut vertex_props: Vec<String> = Vec::new();
    let mut current = "";
    let mut body_start = 0;
    for (line_no, line) in lines.by_ref() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", fmt, ..] => {
                if *fmt != "ascii" {
                    return Err(parse_err(path, line_no, format!("unsupported PLY format {fmt}")));
                }
            }
            ["element", "vertex", n] => {
                current = "vertex";
                n_vertices = n
                    .parse()
                    .map_err(|_| parse_err(path, line_no, "invalid vertex count"))?;
            }
            ["element", "face", n] => {
                current = "face";
                n_faces = n
                    .parse()
                    .map_err(|_| parse_err(path, line_no, "invalid face count"))?;
            }
            ["element", other, _] => {
                return Err(parse_err(path, line_no, format!("unsupported element {other}")));
            }
            ["property", "list", ..] => {}
            ["property", _, name] if current == "vertex" => vertex_props.push(name.to_string()),
            ["end_header"] => {
                body_start = line_no;
                break;
            }
            _ => {}
        }
    }
    if body_start == 0 {
        return Err(parse_err(path, 1, "missing end_header"));
    }
    let pos = |name: &str| vertex_props.iter().position(|p| p == name);
    let (Some(ix), Some(iy), Some(iz)) = (pos("x"), pos("y"), pos("z")) else {
        return Err(parse_err(path, body_start, "vertex element lacks x/y/z properties"));
    };

    let mut vertices = Vec::with_capacity(n_vertices);
    let mut patches = Vec::with_capacity(n_faces);
    let mut body = lines.filter(|(_, l)| !l.is_empty());
    for _ in 0..n_vertices {
        let (line_no, line) = body
            .next()
            .ok_or_else(|| parse_err(path, body_start, "truncated vertex list"))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        let get = |i: usize| parse_f64(path, line_no, toks.get(i).copied());
        vertices.push(Vec3::new(get(ix)?, get(iy)?, get(iz)?));
    }
    for _ in 0..n_faces {
        let (line_no, line) = body
            .next()
            .ok_or_else(|| parse_err(path, body_start, "truncated face list"))?;
        let idx: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(path, line_no, "invalid face record"))?;
        match idx.as_slice() {
            [3, a, b, c] => patches.push([*a, *b, *c]),
            [n, ..] => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("face has {n} vertices; only triangles are supported"),
                ))
            }
            [] => return Err(parse_err(path, line_no, "empty face record")),
        }
    }
    Ok(RawMesh { vertices, patches })
}

fn parse_xyz(path: &Path, text: &str) -> Result<Vec<Vec3>> {
    let mut points = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty());
        points.push(parse_xyz3(path, k + 1, &mut toks)?);
    }
    Ok(points)
}

fn load_raw(path: &Path) -> Result<RawMesh> {
    let text = read(path)?;
    match Format::from_path(path)? {
        Format::Obj => parse_obj(path, &text),
        Format::Ply => parse_ply(path, &text),
        Format::Xyz => Ok(RawMesh {
            vertices: parse_xyz(path, &text)?,
            patches: Vec::new(),
        }),
    }
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    if Format::from_path(path)? == Format::Xyz {
        return Err(Error::InvalidInput(format!(
            "{}: XYZ files carry no connectivity",
            path.display()
        )));
    }
    let raw = load_raw(path)?;
    TriangleMesh::new(raw.vertices, raw.patches)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

/// Loads the points of an XYZ file, or the vertices of an OBJ/PLY file.
pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let raw = load_raw(path)?;
    PointCloud::new(raw.vertices).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn obj_text(vertices: &[Vec3], patches: &[[usize; 3]]) -> String {
    let mut s = String::with_capacity(vertices.len() * 48 + patches.len() * 24);
    for v in vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for [a, b, c] in patches {
        let _ = writeln!(s, "f {} {} {}", a + 1, b + 1, c + 1);
    }
    s
}

fn ply_text(vertices: &[Vec3], patches: &[[usize; 3]]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "ply\nformat ascii 1.0");
    let _ = writeln!(s, "element vertex {}", vertices.len());
    let _ = writeln!(s, "property double x\nproperty double y\nproperty double z");
    if !patches.is_empty() {
        let _ = writeln!(s, "element face {}", patches.len());
        let _ = writeln!(s, "property list uchar int vertex_indices");
    }
    let _ = writeln!(s, "end_header");
    for v in vertices {
        let _ = writeln!(s, "{} {} {}", v.x, v.y, v.z);
    }
    for [a, b, c] in patches {
        let _ = writeln!(s, "3 {a} {b} {c}");
    }
    s
}

pub fn save_mesh(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = match Format::from_path(path)? {
        Format::Obj => obj_text(mesh.vertices(), mesh.patches()),
        Format::Ply => ply_text(mesh.vertices(), mesh.patches()),
        Format::Xyz => {
            return Err(Error::InvalidInput(format!(
                "{}: XYZ files carry no connectivity",
                path.display()
            )))
        }
    };
    write(path, &text)
}

pub fn save_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = match Format::from_path(path)? {
        Format::Obj => obj_text(cloud.points(), &[]),
        Format::Ply => ply_text(cloud.points(), &[]),
        Format::Xyz => {
            let mut s = String::with_capacity(cloud.len() * 48);
            for p in cloud.points() {
                let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
            }
            s
        }
    };
    write(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_icosphere;

    #[test]
    fn mesh_round_trip_obj_and_ply() {
        let dir = tempfile::tempdir().unwrap();
        let m = build_icosphere(6, 12.5);
        for name in ["m.obj", "m.ply"] {
            let p = dir.path().join(name);
            save_mesh(&m, &p).unwrap();
            let back = load_mesh(&p).unwrap();
            assert_eq!(back.patches(), m.patches());
            for (a, b) in back.vertices().iter().zip(m.vertices()) {
                assert!((a - b).norm() < 1e-7);
            }
        }
    }

    #[test]
    fn xyz_cloud() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.xyz");
        fs::write(&p, "1 2 3\n# comment\n\n4.5 -6 7e-1\n0 0 0 0.1 0.2 0.3\n").unwrap();
        let c = load_cloud(&p).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.points()[1], Vec3::new(4.5, -6.0, 0.7));
    }

    #[test]
    fn quad_face_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.obj");
        fs::write(&p, "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n").unwrap();
        match load_mesh(&p) {
            Err(Error::Parse { line: 5, message, .. }) => assert!(message.contains("triangles")),
            other => panic!("expected parse error on line 5, got {other:?}"),
        }
    }

    #[test]
    fn malformed_number_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.xyz");
        fs::write(&p, "1 2 3\n1 two 3\n").unwrap();
        assert!(matches!(load_cloud(&p), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn obj_cloud_ignores_faces_and_slash_indices() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.obj");
        fs::write(&p, "v 0 0 0\nv 1 0 0\nvn 0 0 1\nv 0 1 0\nf 1//1 2//1 -1//1\n").unwrap();
        let m = load_mesh(&p).unwrap();
        assert_eq!(m.patches(), &[[0, 1, 2]]);
        assert_eq!(load_cloud(&p).unwrap().len(), 3);
    }

    #[test]
    fn out_of_range_face_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("o.obj");
        fs::write(&p, "v 0 0 0\nf 1 2 3\n").unwrap();
        assert!(load_mesh(&p).is_err());
    }

    #[test]
    fn ply_cloud_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ply");
        let c = PointCloud::new(vec![Vec3::new(0.1, 0.2, 0.3), Vec3::new(-1e-12, 5.0, 1e9)]).unwrap();
        save_cloud(&c, &p).unwrap();
        assert_eq!(load_cloud(&p).unwrap(), c);
    }
}
