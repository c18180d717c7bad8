use std::collections::hash_map::Entry;
use std::collections::HashMap;

use super::{TriangleMesh, Vec3};
use crate::error::{Error, Result};

/// Outward, counter-clockwise faces of [`icosahedron`].
pub const ICOSAHEDRON_FACES: [[usize; 3]; 20] = [
    [0, 11, 5],
    [0, 5, 1],
    [0, 1, 7],
    [0, 7, 10],
    [0, 10, 11],
    [1, 5, 9],
    [5, 11, 4],
    [11, 10, 2],
    [10, 7, 6],
    [7, 1, 8],
    [3, 9, 4],
    [3, 4, 2],
    [3, 2, 6],
    [3, 6, 8],
    [3, 8, 9],
    [4, 9, 5],
    [2, 4, 11],
    [6, 2, 10],
    [8, 6, 7],
    [9, 8, 1],
];

/// The 12 unit-length icosahedron vertices.
pub fn icosahedron() -> [Vec3; 12] {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    [
        Vec3::new(-1.0, phi, 0.0),
        Vec3::new(1.0, phi, 0.0),
        Vec3::new(-1.0, -phi, 0.0),
        Vec3::new(1.0, -phi, 0.0),
        Vec3::new(0.0, -1.0, phi),
        Vec3::new(0.0, 1.0, phi),
        Vec3::new(0.0, -1.0, -phi),
        Vec3::new(0.0, 1.0, -phi),
        Vec3::new(phi, 0.0, -1.0),
        Vec3::new(phi, 0.0, 1.0),
        Vec3::new(-phi, 0.0, -1.0),
        Vec3::new(-phi, 0.0, 1.0),
    ]
    .map(|v| v.normalize())
}

/// Geodesic icosphere of the given frequency: every icosahedron edge is split
/// into `frequency` segments, every face into `frequency²` triangles, and all
/// points are projected onto the sphere.
///
/// Vertex layout: indices `0..12` are the icosahedron corners, followed by
/// edge-interior points (30 edges, `frequency - 1` each) and face-interior
/// points. The result has `10·f² + 2` vertices and `20·f²` patches.
pub fn build_icosphere(frequency: usize, radius: f64) -> TriangleMesh {
    assert!(frequency >= 1, "frequency must be at least 1");
    let n = frequency;
    let base = icosahedron();
    let mut vertices: Vec<Vec3> = base.to_vec();

    let mut edges: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    let mut edge_order = Vec::new();
    for face in ICOSAHEDRON_FACES {
        for k in 0..3 {
            let (a, b) = (face[k], face[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            if let Entry::Vacant(e) = edges.entry(key) {
                e.insert(Vec::new());
                edge_order.push(key);
            }
        }
    }
    for key in &edge_order {
        let (p, q) = (base[key.0], base[key.1]);
        let ids = (1..n)
            .map(|k| {
                let t = k as f64 / n as f64;
                vertices.push((p * (1.0 - t) + q * t).normalize());
                vertices.len() - 1
            })
            .collect();
        edges.insert(*key, ids);
    }

    // Interior point k/n of the way from corner `p` to corner `q`.
    let edge_point = |p: usize, q: usize, k: usize| -> usize {
        if k == 0 {
            return p;
        }
        if k == n {
            return q;
        }
        let ids = &edges[&(p.min(q), p.max(q))];
        if p < q {
            ids[k - 1]
        } else {
            ids[n - k - 1]
        }
    };

    let mut patches = Vec::with_capacity(20 * n * n);
    for [a, b, c] in ICOSAHEDRON_FACES {
        let (pa, pb, pc) = (base[a], base[b], base[c]);
        // grid[i][j] is the point a + (b-a)·i/n + (c-a)·j/n.
        let mut grid = vec![vec![usize::MAX; n + 1]; n + 1];
        for i in 0..=n {
            for j in 0..=(n - i) {
                grid[i][j] = if j == 0 {
                    edge_point(a, b, i)
                } else if i == 0 {
                    edge_point(a, c, j)
                } else if i + j == n {
                    edge_point(b, c, j)
                } else {
                    let (s, t) = (i as f64 / n as f64, j as f64 / n as f64);
                    vertices.push((pa + (pb - pa) * s + (pc - pa) * t).normalize());
                    vertices.len() - 1
                };
            }
        }
        for i in 0..n {
            for j in 0..(n - i) {
                patches.push([grid[i][j], grid[i + 1][j], grid[i][j + 1]]);
                if i + j + 1 < n {
                    patches.push([grid[i + 1][j], grid[i + 1][j + 1], grid[i][j + 1]]);
                }
            }
        }
    }

    for v in &mut vertices {
        *v *= radius;
    }
    TriangleMesh::new(vertices, patches).expect("icosphere indices are valid")
}

/// Recovers the frequency of a mesh laid out by [`build_icosphere`] (at any
/// uniform scale and with any vertex coordinates beyond the 12 corners).
pub fn icosphere_frequency(mesh: &TriangleMesh) -> Result<usize> {
    let v = mesh.vertex_count();
    if v < 12 || (v - 2) % 10 != 0 {
        return Err(Error::NotIcosphere(format!("vertex count {v} is not 10n²+2")));
    }
    let n2 = (v - 2) / 10;
    let n = (n2 as f64).sqrt().round() as usize;
    if n * n != n2 {
        return Err(Error::NotIcosphere(format!("vertex count {v} is not 10n²+2")));
    }
    if mesh.patch_count() != 20 * n2 {
        return Err(Error::NotIcosphere(format!(
            "patch count {} is not 20n² for n = {n}",
            mesh.patch_count()
        )));
    }
    for (i, dir) in icosahedron().iter().enumerate() {
        let p = mesh.vertices()[i];
        let norm = p.norm();
        if norm == 0.0 || p.dot(dir) / norm < 1.0 - 1e-9 {
            return Err(Error::NotIcosphere(format!(
                "vertex {i} is not an icosahedron corner"
            )));
        }
    }
    Ok(n)
}
