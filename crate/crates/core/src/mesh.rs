//! Indexed polygon meshes: storage, edge/face incidence, Wavefront OBJ IO and
//! the elementary per-face quantities (centroid, Newell normal, area) every
//! other module builds on.
//!
//! Face vertex order is taken as authored; nothing here reorients faces.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Unordered vertex pair, stored with the smaller index first.
pub type EdgeKey = (usize, usize);

#[inline]
pub fn edge_key(a: usize, b: usize) -> EdgeKey {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Polygon mesh with arbitrary face degrees (triangles, quads, n-gons).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolyMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<Vec<usize>>,
}

impl PolyMesh {
    /// Builds a mesh, checking index bounds, cycle length and repeated indices.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<Vec<usize>>) -> Result<Self> {
        let mesh = PolyMesh { vertices, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        for (fi, face) in self.faces.iter().enumerate() {
            if face.len() < 3 {
                return Err(Error::Structure(format!(
                    "face {fi} has {} vertices, need at least 3",
                    face.len()
                )));
            }
            for (k, &v) in face.iter().enumerate() {
                if v >= nv {
                    return Err(Error::Structure(format!(
                        "face {fi} references vertex {v}, mesh has {nv}"
                    )));
                }
                if face[..k].contains(&v) {
                    return Err(Error::Structure(format!("face {fi} repeats vertex {v}")));
                }
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty() && self.faces.is_empty()
    }

    pub fn face_degree(&self, face: usize) -> usize {
        self.faces[face].len()
    }

    pub fn face_points(&self, face: usize) -> Vec<Vec3> {
        self.faces[face].iter().map(|&v| self.vertices[v]).collect()
    }

    pub fn is_triangle(&self, face: usize) -> bool {
        self.faces[face].len() == 3
    }

    /// Axis-aligned bounds `(min, max)`; `None` for a mesh without vertices.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        bounds_of(&self.vertices)
    }

    /// Sorted, deduplicated one-ring neighbours of every vertex.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for face in &self.faces {
            let n = face.len();
            for i in 0..n {
                let a = face[i];
                let b = face[(i + 1) % n];
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Faces incident to each vertex, in ascending face order.
    pub fn vertex_faces(&self) -> Vec<Vec<usize>> {
        let mut vf = vec![Vec::new(); self.vertices.len()];
        for (fi, face) in self.faces.iter().enumerate() {
            for &v in face {
                vf[v].push(fi);
            }
        }
        vf
    }

    /// One level of midpoint refinement. Every edge gets a midpoint; triangles
    /// split into four triangles, other faces into `degree` quads around the
    /// face centroid. Original vertices keep their indices and positions.
    pub fn refine_midpoint(&self) -> PolyMesh {
        let mut vertices = self.vertices.clone();
        let mut midpoints: BTreeMap<EdgeKey, usize> = BTreeMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
            *midpoints.entry(edge_key(a, b)).or_insert_with(|| {
                vertices.push((vertices[a] + vertices[b]) * 0.5);
                vertices.len() - 1
            })
        };
        let mut faces = Vec::new();
        for (fi, face) in self.faces.iter().enumerate() {
            let n = face.len();
            let mids: Vec<usize> = (0..n)
                .map(|i| mid(face[i], face[(i + 1) % n], &mut vertices))
                .collect();
            if n == 3 {
                faces.push(vec![face[0], mids[0], mids[2]]);
                faces.push(vec![mids[0], face[1], mids[1]]);
                faces.push(vec![mids[2], mids[1], face[2]]);
                faces.push(vec![mids[0], mids[1], mids[2]]);
            } else {
                vertices.push(face_centroid(self, fi));
                let c = vertices.len() - 1;
                for i in 0..n {
                    faces.push(vec![face[i], mids[i], c, mids[(i + n - 1) % n]]);
                }
            }
        }
        PolyMesh { vertices, faces }
    }
}

pub(crate) fn bounds_of(points: &[Vec3]) -> Option<(Vec3, Vec3)> {
    let first = points.first()?;
    let mut lo = *first;
    let mut hi = *first;
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    Some((lo, hi))
}

/// Edge → incident faces. Keys are ordered, incidence lists ascend by face.
#[derive(Debug, Clone, Default)]
pub struct EdgeFaceMap {
    map: BTreeMap<EdgeKey, Vec<usize>>,
}

impl EdgeFaceMap {
    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn faces(&self, a: usize, b: usize) -> &[usize] {
        self.map
            .get(&edge_key(a, b))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = (EdgeKey, &[usize])> + '_ {
        self.map.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    /// Edges with exactly two incident faces.
    pub fn internal_edges(&self) -> impl Iterator<Item = (EdgeKey, [usize; 2])> + '_ {
        self.map
            .iter()
            .filter(|(_, f)| f.len() == 2)
            .map(|(k, f)| (*k, [f[0], f[1]]))
    }

    /// Edges with exactly one incident face.
    pub fn boundary_edges(&self) -> impl Iterator<Item = (EdgeKey, usize)> + '_ {
        self.map
            .iter()
            .filter(|(_, f)| f.len() == 1)
            .map(|(k, f)| (*k, f[0]))
    }

    /// Total number of (edge, face) incidences.
    pub fn incidence_count(&self) -> usize {
        self.map.values().map(Vec::len).sum()
    }
}

pub fn build_edge_face_map(mesh: &PolyMesh) -> EdgeFaceMap {
    let mut map: BTreeMap<EdgeKey, Vec<usize>> = BTreeMap::new();
    for (fi, face) in mesh.faces.iter().enumerate() {
        let n = face.len();
        for i in 0..n {
            map.entry(edge_key(face[i], face[(i + 1) % n]))
                .or_default()
                .push(fi);
        }
    }
    // Faces are visited in ascending order, so each list is already sorted.
    EdgeFaceMap { map }
}

/// Centroid, unit Newell normal and area of one face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceGeometry {
    pub centroid: Vec3,
    pub newell_normal: Vec3,
    pub area: f64,
}

pub fn face_geometry(mesh: &PolyMesh, face: usize) -> Result<FaceGeometry> {
    let pts = mesh.face_points(face);
    let nv = newell_vector(&pts);
    let len = nv.norm();
    if !(len > 0.0) {
        return Err(Error::Degenerate(format!(
            "face {face} has zero Newell normal"
        )));
    }
    Ok(FaceGeometry {
        centroid: centroid_of(&pts),
        newell_normal: nv / len,
        area: 0.5 * len,
    })
}

/// Arithmetic mean of the face's vertex positions.
pub fn face_centroid(mesh: &PolyMesh, face: usize) -> Vec3 {
    let face = &mesh.faces[face];
    let mut acc = Vec3::zeros();
    for &v in face {
        acc += mesh.vertices[v];
    }
    acc / face.len() as f64
}

pub fn centroid_of(points: &[Vec3]) -> Vec3 {
    let mut acc = Vec3::zeros();
    for p in points {
        acc += p;
    }
    acc / points.len() as f64
}

/// Unnormalized Newell vector; its length is twice the (projected) area.
pub fn newell_vector(cycle: &[Vec3]) -> Vec3 {
    let n = cycle.len();
    let mut acc = Vec3::zeros();
    for i in 0..n {
        let p = cycle[i];
        let q = cycle[(i + 1) % n];
        acc.x += (p.y - q.y) * (p.z + q.z);
        acc.y += (p.z - q.z) * (p.x + q.x);
        acc.z += (p.x - q.x) * (p.y + q.y);
    }
    acc
}

/// Unit polygon normal by Newell's method.
pub fn newell_normal(cycle: &[Vec3]) -> Result<Vec3> {
    if cycle.len() < 3 {
        return Err(Error::Degenerate(format!(
            "cycle of length {} has no normal",
            cycle.len()
        )));
    }
    let v = newell_vector(cycle);
    let len = v.norm();
    if !(len > 0.0) || !len.is_finite() {
        return Err(Error::Degenerate("zero-magnitude Newell vector".into()));
    }
    Ok(v / len)
}

/// Uniformly rescales and recenters so the bounding box is centred at the
/// origin and its longest side spans exactly `[-1, 1]`.
pub fn normalize_unit_cube(mesh: &PolyMesh) -> Result<PolyMesh> {
    let (lo, hi) = mesh
        .bounds()
        .ok_or_else(|| Error::Degenerate("mesh has no vertices".into()))?;
    let extent = (hi - lo).max();
    if !(extent > 0.0) {
        return Err(Error::Degenerate("mesh has zero extent".into()));
    }
    let center = (lo + hi) * 0.5;
    let scale = 2.0 / extent;
    let vertices = mesh.vertices.iter().map(|p| (p - center) * scale).collect();
    Ok(PolyMesh {
        vertices,
        faces: mesh.faces.clone(),
    })
}

/// Parses the `v` / `f` subset of Wavefront OBJ. Face entries may carry
/// `/vt/vn` suffixes, which are dropped; negative (relative) indices are
/// resolved against the vertices seen so far.
pub fn parse_obj(text: &str) -> Result<PolyMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut parts = content.split_whitespace();
        match parts.next() {
            Some("v") => {
                let mut xyz = [0.0; 3];
                for slot in &mut xyz {
                    let tok = parts.next().ok_or_else(|| Error::Parse {
                        line,
                        msg: "vertex needs three coordinates".into(),
                    })?;
                    *slot = tok.parse().map_err(|_| Error::Parse {
                        line,
                        msg: format!("bad coordinate `{tok}`"),
                    })?;
                }
                vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
            Some("f") => {
                let mut face = Vec::new();
                for tok in parts {
                    let idx_str = tok.split('/').next().unwrap_or("");
                    let idx: i64 = idx_str.parse().map_err(|_| Error::Parse {
                        line,
                        msg: format!("bad face index `{tok}`"),
                    })?;
                    let resolved = match idx {
                        0 => {
                            return Err(Error::Parse {
                                line,
                                msg: "face index 0 is invalid in OBJ".into(),
                            })
                        }
                        i if i > 0 => (i - 1) as usize,
                        i => {
                            let back = (-i) as usize;
                            if back > vertices.len() {
                                return Err(Error::Structure(format!(
                                    "line {line}: relative index {i} precedes first vertex"
                                )));
                            }
                            vertices.len() - back
                        }
                    };
                    face.push(resolved);
                }
                if face.len() < 3 {
                    return Err(Error::Parse {
                        line,
                        msg: format!("face has {} indices, need at least 3", face.len()),
                    });
                }
                faces.push(face);
            }
            _ => {}
        }
    }
    PolyMesh::new(vertices, faces)
}

pub fn load_obj(path: impl AsRef<Path>) -> Result<PolyMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text)
}

/// OBJ text for `mesh`. Coordinates use the shortest representation that
/// parses back to the identical `f64`.
pub fn write_obj(mesh: &PolyMesh) -> String {
    let mut out = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for face in &mesh.faces {
        out.push('f');
        for &i in face {
            let _ = write!(out, " {}", i + 1);
        }
        out.push('\n');
    }
    out
}

pub fn save_obj(mesh: &PolyMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_obj(mesh)).map_err(|e| Error::io(path, e))
}
