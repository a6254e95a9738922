//! Triangle-to-quad conversion by globally optimal edge merging.
//!
//! Every internal edge shared by exactly two triangles is a merge candidate.
//! A candidate is scored by how rectangular its implied quad is (`q_angle`)
//! and by how orthogonal the removed edge is to the local principal
//! direction (`q_align`); candidates failing the geometric prefilter are
//! dropped, and the survivors form a graph over faces whose maximum-weight
//! matching decides which pairs merge.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matching::{greedy_matching, max_weight_matching, Matching, WeightedGraph};
use crate::mesh::{build_edge_face_map, newell_vector, EdgeFaceMap, EdgeKey, PolyMesh, Vec3};
use crate::verify::{interior_angles, verify_quad, VerifyConfig};

/// Relative eigengap below which the one-ring covariance is treated as
/// isotropic.
const EIGENGAP_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MergeMode {
    #[default]
    Global,
    Greedy,
}

impl FromStr for MergeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(MergeMode::Global),
            "greedy" => Ok(MergeMode::Greedy),
            _ => Err(Error::Config(format!(
                "unknown merge mode `{s}` (global|greedy)"
            ))),
        }
    }
}

impl fmt::Display for MergeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MergeMode::Global => "global",
            MergeMode::Greedy => "greedy",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorConfig {
    pub alpha1: f64,
    pub alpha2: f64,
    /// Angle, convexity and dihedral checks; the centroid check is never used here.
    pub verify: VerifyConfig,
    pub mode: MergeMode,
    /// When false only the normal-orientation gate is applied.
    pub prefilter: bool,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        OperatorConfig {
            alpha1: 0.8,
            alpha2: 0.2,
            verify: VerifyConfig {
                enable_centroid: false,
                ..VerifyConfig::default()
            },
            mode: MergeMode::Global,
            prefilter: true,
        }
    }
}

impl OperatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1 >= 0.0 && self.alpha2 >= 0.0) || !(self.alpha1 + self.alpha2 > 0.0) {
            return Err(Error::Config(format!(
                "alpha weights must be non-negative and not both zero, got ({}, {})",
                self.alpha1, self.alpha2
            )));
        }
        self.verify.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeCandidate {
    pub edge: EdgeKey,
    pub face_a: usize,
    pub face_b: usize,
    /// Implied quad: `(c, x, d, y)` where triangle A reads `(c, x, y)` from
    /// its off-edge vertex `c`, and `d` is B's off-edge vertex.
    pub quad: [usize; 4],
    pub q_angle: f64,
    pub q_align: f64,
    pub weight: f64,
}

/// Adjacency and per-face data reused across candidates.
pub struct MeshContext<'a> {
    pub mesh: &'a PolyMesh,
    pub edges: EdgeFaceMap,
    pub neighbors: Vec<Vec<usize>>,
    /// Unnormalized Newell vector per face (length = twice the area).
    pub face_newell: Vec<Vec3>,
}

impl<'a> MeshContext<'a> {
    pub fn new(mesh: &'a PolyMesh) -> Self {
        MeshContext {
            mesh,
            edges: build_edge_face_map(mesh),
            neighbors: mesh.vertex_neighbors(),
            face_newell: (0..mesh.faces.len())
                .map(|f| newell_vector(&mesh.face_points(f)))
                .collect(),
        }
    }
}

fn off_edge_rotation(face: &[usize], a: usize, b: usize) -> Option<[usize; 3]> {
    let k = face.iter().position(|&v| v != a && v != b)?;
    Some([face[k], face[(k + 1) % 3], face[(k + 2) % 3]])
}

fn candidates_from(mesh: &PolyMesh, efm: &EdgeFaceMap) -> Vec<MergeCandidate> {
    let mut out = Vec::new();
    for ((a, b), [fa, fb]) in efm.internal_edges() {
        if !(mesh.is_triangle(fa) && mesh.is_triangle(fb)) {
            continue;
        }
        let Some([c, x, y]) = off_edge_rotation(&mesh.faces[fa], a, b) else {
            continue;
        };
        let Some(&d) = mesh.faces[fb].iter().find(|&&v| v != a && v != b) else {
            continue;
        };
        if d == c {
            continue;
        }
        out.push(MergeCandidate {
            edge: (a, b),
            face_a: fa,
            face_b: fb,
            quad: [c, x, d, y],
            q_angle: 0.0,
            q_align: 0.0,
            weight: 0.0,
        });
    }
    out
}

/// One unscored candidate per internal edge shared by exactly two triangles,
/// in ascending edge-key order.
pub fn enumerate_candidates(mesh: &PolyMesh) -> Vec<MergeCandidate> {
    candidates_from(mesh, &build_edge_face_map(mesh))
}

/// `sum_i max(0, 90 - |theta_i - 90|) / 360` over interior angles in degrees.
pub fn q_angle_from_angles(angles: &[f64]) -> f64 {
    angles
        .iter()
        .map(|&t| (90.0 - (t - 90.0).abs()).max(0.0))
        .sum::<f64>()
        / 360.0
}

/// Rectangularity score of a quad in `[0, 1]`; degenerate quads score 0.
pub fn q_angle(quad: &[Vec3; 4]) -> f64 {
    match interior_angles(quad) {
        Ok(a) => q_angle_from_angles(&a),
        Err(_) => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalDirection {
    pub direction: Vec3,
    /// The covariance was isotropic (or empty) and the in-plane
    /// perpendicular of the edge was used instead.
    pub fallback: bool,
}

fn canonical_sign(v: Vec3) -> Vec3 {
    for k in 0..3 {
        if v[k] > 0.0 {
            return v;
        }
        if v[k] < 0.0 {
            return -v;
        }
    }
    v
}

fn any_perpendicular(n: &Vec3) -> Vec3 {
    let pick = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
        Vec3::x()
    } else if n.y.abs() <= n.z.abs() {
        Vec3::y()
    } else {
        Vec3::z()
    };
    n.cross(&pick).normalize()
}

/// Dominant in-plane direction of the one-ring around edge `(a, b)`.
///
/// The point set is the union of the one-rings of both endpoints; the
/// tangent plane normal is the area-weighted mean of the incident faces'
/// normals; points are taken relative to the edge midpoint, projected to the
/// plane, mean-centred, and the leading eigenvector of their 2x2 covariance
/// is returned (first nonzero component positive).
pub fn principal_direction_in(
    ctx: &MeshContext<'_>,
    a: usize,
    b: usize,
) -> Result<PrincipalDirection> {
    let mesh = ctx.mesh;
    let faces = ctx.edges.faces(a, b);
    if faces.is_empty() {
        return Err(Error::Structure(format!(
            "({a}, {b}) is not an edge of the mesh"
        )));
    }
    let pa = mesh.vertices[a];
    let pb = mesh.vertices[b];
    let d = pb - pa;
    if !(d.norm() > 0.0) {
        return Err(Error::Degenerate(format!(
            "edge ({a}, {b}) has zero length"
        )));
    }
    let mut n = Vec3::zeros();
    for &f in faces {
        n += ctx.face_newell[f];
    }
    if !(n.norm() > 0.0) {
        return Err(Error::Degenerate(format!(
            "edge ({a}, {b}) has no tangent plane"
        )));
    }
    let n = n.normalize();
    let d_in = d - n * d.dot(&n);
    let e1 = if d_in.norm() > 1e-12 * d.norm() {
        d_in.normalize()
    } else {
        any_perpendicular(&n)
    };
    let e2 = n.cross(&e1);
    let fallback_dir = || canonical_sign(n.cross(&d.normalize()).normalize());

    let mut ring: Vec<usize> = ctx.neighbors[a]
        .iter()
        .chain(&ctx.neighbors[b])
        .copied()
        .collect();
    ring.sort_unstable();
    ring.dedup();
    let mid = (pa + pb) * 0.5;
    let pts: Vec<(f64, f64)> = ring
        .iter()
        .map(|&v| {
            let r = mesh.vertices[v] - mid;
            (r.dot(&e1), r.dot(&e2))
        })
        .collect();
    let cnt = pts.len() as f64;
    let (mx, my) = pts
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p.0, sy + p.1));
    let (mx, my) = (mx / cnt, my / cnt);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in &pts {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let trace = sxx + syy;
    let half_gap = (((sxx - syy) * 0.5).powi(2) + sxy * sxy).sqrt();
    if !(trace > 0.0) || 2.0 * half_gap <= EIGENGAP_EPS * trace {
        return Ok(PrincipalDirection {
            direction: fallback_dir(),
            fallback: true,
        });
    }
    let lambda = (sxx + syy) * 0.5 + half_gap;
    // Pick the better-conditioned of the two eigenvector formulas.
    let (u, v) = if (lambda - syy).abs() >= (lambda - sxx).abs() {
        (lambda - syy, sxy)
    } else {
        (sxy, lambda - sxx)
    };
    let dir = (e1 * u + e2 * v).normalize();
    Ok(PrincipalDirection {
        direction: canonical_sign(dir),
        fallback: false,
    })
}

pub fn principal_direction(mesh: &PolyMesh, edge: EdgeKey) -> Result<PrincipalDirection> {
    principal_direction_in(&MeshContext::new(mesh), edge.0, edge.1)
}

/// `sqrt(1 - (d_e . f)^2)` for unit `d_e` along the edge.
pub fn q_align_from(edge_dir: &Vec3, principal: &Vec3) -> f64 {
    let c = edge_dir.normalize().dot(principal).clamp(-1.0, 1.0);
    (1.0 - c * c).max(0.0).sqrt()
}

pub fn q_align_in(ctx: &MeshContext<'_>, a: usize, b: usize) -> Result<f64> {
    let pd = principal_direction_in(ctx, a, b)?;
    Ok(q_align_from(
        &(ctx.mesh.vertices[b] - ctx.mesh.vertices[a]),
        &pd.direction,
    ))
}

pub fn q_align(mesh: &PolyMesh, edge: EdgeKey) -> Result<f64> {
    q_align_in(&MeshContext::new(mesh), edge.0, edge.1)
}

fn quad_points(mesh: &PolyMesh, q: &[usize; 4]) -> [Vec3; 4] {
    q.map(|v| mesh.vertices[v])
}

fn score_one(
    ctx: &MeshContext<'_>,
    mut c: MergeCandidate,
    cfg: &OperatorConfig,
) -> Option<MergeCandidate> {
    let na = ctx.face_newell[c.face_a];
    let nb = ctx.face_newell[c.face_b];
    if !(na.dot(&nb) > 0.0) {
        return None;
    }
    let pts = quad_points(ctx.mesh, &c.quad);
    if cfg.prefilter {
        let verify = VerifyConfig {
            enable_centroid: false,
            ..cfg.verify
        };
        if !verify_quad(&pts, None, &verify).passed {
            return None;
        }
    }
    c.q_angle = q_angle(&pts);
    c.q_align = q_align_in(ctx, c.edge.0, c.edge.1).ok()?;
    c.weight = cfg.alpha1 * c.q_angle + cfg.alpha2 * c.q_align;
    Some(c)
}

/// Scores candidates and keeps those passing the orientation gate
/// (`n_A . n_B > 0`) and, if enabled, the quad prefilter. Order is preserved.
pub fn score_and_prefilter(
    mesh: &PolyMesh,
    candidates: Vec<MergeCandidate>,
    cfg: &OperatorConfig,
) -> Vec<MergeCandidate> {
    let ctx = MeshContext::new(mesh);
    score_in(&ctx, candidates, cfg)
}

fn score_in(
    ctx: &MeshContext<'_>,
    candidates: Vec<MergeCandidate>,
    cfg: &OperatorConfig,
) -> Vec<MergeCandidate> {
    candidates
        .into_par_iter()
        .map(|c| score_one(ctx, c, cfg))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeResult {
    pub mesh: PolyMesh,
    /// Candidates that entered the matching graph, in candidate order.
    pub candidates: Vec<MergeCandidate>,
    pub matching: Matching,
    /// For each output face, the input faces it came from (1 or 2).
    pub sources: Vec<Vec<usize>>,
    pub merged: usize,
    pub triangles_left: usize,
}

impl MergeResult {
    pub fn total_weight(&self) -> f64 {
        self.matching.total_weight
    }

    pub fn summary(&self) -> String {
        format!(
            "merged={} triangles_left={} weight={:.6}",
            self.merged,
            self.triangles_left,
            self.total_weight()
        )
    }
}

/// Matching graph over faces (node = face index) for scored candidates.
/// A second candidate between the same pair of faces is dropped.
pub fn build_graph(
    face_count: usize,
    candidates: &[MergeCandidate],
) -> (WeightedGraph, Vec<usize>) {
    let mut seen = std::collections::HashSet::new();
    let mut edges = Vec::new();
    let mut kept = Vec::new();
    for (i, c) in candidates.iter().enumerate() {
        if seen.insert(crate::mesh::edge_key(c.face_a, c.face_b)) {
            edges.push(crate::matching::WeightedEdge {
                u: c.face_a,
                v: c.face_b,
                w: c.weight,
            });
            kept.push(i);
        }
    }
    (
        WeightedGraph {
            node_count: face_count,
            edges,
        },
        kept,
    )
}

/// Merges triangle pairs chosen by the matching. Output faces: merged quads
/// in candidate order, then untouched faces in input order. Vertex positions
/// are copied unchanged.
pub fn merge(mesh: &PolyMesh, cfg: &OperatorConfig) -> Result<MergeResult> {
    cfg.validate()?;
    mesh.validate()?;
    let ctx = MeshContext::new(mesh);
    let raw = candidates_from(mesh, &ctx.edges);
    let scored = score_in(&ctx, raw, cfg);
    let (graph, kept) = build_graph(mesh.faces.len(), &scored);
    let candidates: Vec<MergeCandidate> = kept.iter().map(|&i| scored[i].clone()).collect();
    let matching = match cfg.mode {
        MergeMode::Global => max_weight_matching(&graph),
        MergeMode::Greedy => greedy_matching(&graph),
    };
    let mut consumed = vec![false; mesh.faces.len()];
    let mut faces = Vec::new();
    let mut sources = Vec::new();
    for &ei in &matching.selected {
        let c = &candidates[ei];
        consumed[c.face_a] = true;
        consumed[c.face_b] = true;
        faces.push(c.quad.to_vec());
        sources.push(vec![c.face_a, c.face_b]);
    }
    let merged = faces.len();
    for (fi, face) in mesh.faces.iter().enumerate() {
        if !consumed[fi] {
            faces.push(face.clone());
            sources.push(vec![fi]);
        }
    }
    let triangles_left = faces.iter().filter(|f| f.len() == 3).count();
    Ok(MergeResult {
        mesh: PolyMesh {
            vertices: mesh.vertices.clone(),
            faces,
        },
        candidates,
        matching,
        sources,
        merged,
        triangles_left,
    })
}

/// Reverses any merged quad whose Newell normal points against the mean of
/// its two source triangles' normals.
pub fn enforce_normal_consistency(before: &PolyMesh, merged: &MergeResult) -> PolyMesh {
    let mut out = merged.mesh.clone();
    for (face, src) in out.faces.iter_mut().zip(&merged.sources) {
        if src.len() != 2 {
            continue;
        }
        let unit = |f: usize| {
            let n = newell_vector(&before.face_points(f));
            let l = n.norm();
            if l > 0.0 {
                n / l
            } else {
                n
            }
        };
        let reference = unit(src[0]) + unit(src[1]);
        let pts: Vec<Vec3> = face.iter().map(|&v| merged.mesh.vertices[v]).collect();
        if newell_vector(&pts).dot(&reference) < 0.0 {
            face[1..].reverse();
        }
    }
    out
}

/// `merge` followed by `enforce_normal_consistency`.
pub fn convert(mesh: &PolyMesh, cfg: &OperatorConfig) -> Result<MergeResult> {
    let mut result = merge(mesh, cfg)?;
    result.mesh = enforce_normal_consistency(mesh, &result);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::brute_force_matching;
    use crate::mesh::{edge_key, newell_normal};
    use crate::shapes::{cylinder, quad_grid, triangulated_grid};

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    fn two_triangles(fold_deg: f64) -> PolyMesh {
        // Shared edge along the y axis from (0,0,0) to (0,1,0); the second
        // triangle is rotated about it by `fold_deg`.
        let (s, c) = fold_deg.to_radians().sin_cos();
        PolyMesh::new(
            vec![
                v(0.0, 0.0, 0.0),
                v(0.0, 1.0, 0.0),
                v(-1.0, 0.0, 0.0),
                v(c, 1.0, s),
            ],
            vec![vec![2, 0, 1], vec![0, 3, 1]],
        )
        .unwrap()
    }

    #[test]
    fn candidate_counts() {
        let sq = triangulated_grid(1, 1);
        assert_eq!(enumerate_candidates(&sq).len(), 1);
        let tri = PolyMesh::new(
            vec![v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0)],
            vec![vec![0, 1, 2]],
        )
        .unwrap();
        assert!(enumerate_candidates(&tri).is_empty());

        let g = triangulated_grid(2, 2);
        // Census: count vertex pairs that appear as an edge of exactly two faces.
        let mut census = 0;
        for a in 0..g.vertices.len() {
            for b in a + 1..g.vertices.len() {
                let n = g
                    .faces
                    .iter()
                    .filter(|f| (0..3).any(|i| edge_key(f[i], f[(i + 1) % 3]) == (a, b)))
                    .count();
                census += usize::from(n == 2);
            }
        }
        assert_eq!(enumerate_candidates(&g).len(), census);
    }

    #[test]
    fn implied_quad_ordering() {
        // Triangles (a,b,c) = (0,1,2) and (1,0,3) share edge (0,1).
        let m = PolyMesh::new(
            vec![
                v(0.0, 0.0, 0.0),
                v(1.0, 1.0, 0.0),
                v(0.0, 1.0, 0.0),
                v(1.0, 0.0, 0.0),
            ],
            vec![vec![0, 1, 2], vec![1, 0, 3]],
        )
        .unwrap();
        let c = &enumerate_candidates(&m)[0];
        assert_eq!(c.quad, [2, 0, 3, 1]);
        let pts = quad_points(&m, &c.quad);
        assert!(newell_normal(&pts).unwrap().z > 0.0);
    }

    #[test]
    fn non_manifold_edges_are_skipped() {
        let m = PolyMesh::new(
            vec![
                v(0.0, 0.0, 0.0),
                v(1.0, 0.0, 0.0),
                v(0.5, 1.0, 0.0),
                v(0.5, -1.0, 0.0),
                v(0.5, 0.0, 1.0),
            ],
            vec![vec![0, 1, 2], vec![1, 0, 3], vec![0, 1, 4]],
        )
        .unwrap();
        assert!(enumerate_candidates(&m).is_empty());
    }

    #[test]
    fn q_angle_examples() {
        let sq = [
            v(0.0, 0.0, 0.0),
            v(1.0, 0.0, 0.0),
            v(1.0, 1.0, 0.0),
            v(0.0, 1.0, 0.0),
        ];
        assert_eq!(q_angle(&sq), 1.0);
        let straight = [
            v(0.0, 0.0, 0.0),
            v(1.0, 0.0, 0.0),
            v(1.0, 2.0, 0.0),
            v(-1.0, 0.0, 0.0),
        ];
        let a = interior_angles(&straight).unwrap();
        assert!((a[0] - 180.0).abs() < 1e-9 && (a[1] - 90.0).abs() < 1e-9);
        assert!((q_angle(&straight) - 0.5).abs() < 1e-12);
        assert!((q_angle_from_angles(&[90.0, 90.0, 80.0, 100.0]) - 340.0 / 360.0).abs() < 1e-15);
        let degenerate = [v(0.0, 0.0, 0.0); 4];
        assert_eq!(q_angle(&degenerate), 0.0);
    }

    #[test]
    fn q_align_examples() {
        let x = v(1.0, 0.0, 0.0);
        assert_eq!(q_align_from(&v(0.0, 2.0, 0.0), &x), 1.0);
        assert_eq!(q_align_from(&v(3.0, 0.0, 0.0), &x), 0.0);
        let f = v(0.6, 0.8, 0.0);
        assert!((q_align_from(&x, &f) - 0.8).abs() < 1e-15);
    }

    /// Power-iteration oracle on an explicitly built covariance of the
    /// union of one-rings projected to z = 0.
    fn oracle_direction(mesh: &PolyMesh, a: usize, b: usize) -> Vec3 {
        let nb = mesh.vertex_neighbors();
        let mut ring: Vec<usize> = nb[a].iter().chain(&nb[b]).copied().collect();
        ring.sort_unstable();
        ring.dedup();
        let pts: Vec<Vec3> = ring
            .iter()
            .map(|&i| v(mesh.vertices[i].x, mesh.vertices[i].y, 0.0))
            .collect();
        let mean = crate::mesh::centroid_of(&pts);
        let mut cov = nalgebra::Matrix3::<f64>::zeros();
        for p in &pts {
            let d = p - mean;
            cov += d * d.transpose();
        }
        let mut x = v(0.3, 0.7, 0.0);
        for _ in 0..500 {
            x = (cov * x).normalize();
        }
        canonical_sign(x)
    }

    #[test]
    fn principal_direction_on_stretched_grid() {
        let mut g = quad_grid(6, 6);
        for p in &mut g.vertices {
            p.x *= 3.0;
        }
        let (a, b) = (3 * 7 + 3, 3 * 7 + 4);
        let pd = principal_direction(&g, (a, b)).unwrap();
        assert!(!pd.fallback);
        assert!(
            (pd.direction - v(1.0, 0.0, 0.0)).norm() < 1e-6,
            "{:?}",
            pd.direction
        );
        assert!((pd.direction - oracle_direction(&g, a, b)).norm() < 1e-6);
    }

    #[test]
    fn principal_direction_isotropic_hexagon_falls_back() {
        let mut vertices = vec![v(0.0, 0.0, 0.0)];
        for k in 0..6 {
            let t = std::f64::consts::PI / 3.0 * k as f64;
            vertices.push(v(t.cos(), t.sin(), 0.0));
        }
        let faces = (0..6).map(|k| vec![0, 1 + k, 1 + (k + 1) % 6]).collect();
        let m = PolyMesh::new(vertices, faces).unwrap();
        let pd = principal_direction(&m, (0, 1)).unwrap();
        assert!(pd.fallback);
        assert!((pd.direction.norm() - 1.0).abs() < 1e-12);
        assert!(pd.direction.dot(&v(1.0, 0.0, 0.0)).abs() < 1e-12);
    }

    #[test]
    fn principal_direction_on_cylinder_is_axial() {
        // Circumferential spacing ~0.25, axial spacing 0.5.
        let cyl = cylinder(1.0, 4.0, 25, 8);
        let ctx = MeshContext::new(&cyl);
        let mut checked = 0;
        let interior = |v: usize| (25..25 * 8).contains(&v);
        for ((a, b), _) in ctx.edges.internal_edges() {
            if !(interior(a) && interior(b)) {
                continue;
            }
            let pd = principal_direction_in(&ctx, a, b).unwrap();
            let angle = pd
                .direction
                .dot(&Vec3::z())
                .abs()
                .clamp(0.0, 1.0)
                .acos()
                .to_degrees();
            assert!(angle < 5.0, "edge ({a},{b}) off axis by {angle}");
            checked += 1;
        }
        assert!(checked > 100);
    }

    #[test]
    fn prefilter_examples() {
        let cfg = OperatorConfig::default();
        let sq = triangulated_grid(1, 1);
        let s = score_and_prefilter(&sq, enumerate_candidates(&sq), &cfg);
        assert_eq!(s.len(), 1);
        let qa = q_align(&sq, s[0].edge).unwrap();
        assert!((s[0].weight - (0.8 + 0.2 * qa)).abs() < 1e-15);
        assert_eq!(s[0].q_angle, 1.0);

        let folded = two_triangles(90.0);
        assert!(score_and_prefilter(&folded, enumerate_candidates(&folded), &cfg).is_empty());
        let flat = two_triangles(0.0);
        assert_eq!(
            score_and_prefilter(&flat, enumerate_candidates(&flat), &cfg).len(),
            1
        );

        // Kite with a 160 degree corner at the vertex opposite the diagonal.
        let t = 80f64.to_radians();
        let kite = PolyMesh::new(
            vec![
                v(0.0, 0.0, 0.0),
                v(3.0, 0.0, 0.0),
                v(t.cos(), t.sin(), 0.0),
                v(t.cos(), -t.sin(), 0.0),
            ],
            vec![vec![0, 3, 1], vec![0, 1, 2]],
        )
        .unwrap();
        let c = enumerate_candidates(&kite);
        let angles = interior_angles(&quad_points(&kite, &c[0].quad)).unwrap();
        assert!(
            angles.iter().any(|&a| (a - 160.0).abs() < 1e-9),
            "{angles:?}"
        );
        assert!(score_and_prefilter(&kite, c, &cfg).is_empty());
    }

    #[test]
    fn grid_merges_back_to_squares() {
        let g = triangulated_grid(4, 4);
        let r = convert(&g, &OperatorConfig::default()).unwrap();
        assert_eq!(r.merged, 16);
        assert_eq!(r.triangles_left, 0);
        assert!(r.mesh.faces.iter().all(|f| f.len() == 4));
        assert_eq!(r.mesh.vertices, g.vertices);
        for fi in 0..r.mesh.faces.len() {
            assert!(newell_normal(&r.mesh.face_points(fi)).unwrap().z > 0.0);
        }
    }

    #[test]
    fn two_by_two_grid_optimum_matches_brute_force() {
        let g = triangulated_grid(2, 2);
        let cfg = OperatorConfig::default();
        let r = merge(&g, &cfg).unwrap();
        let (graph, _) = build_graph(g.faces.len(), &r.candidates);
        assert!(graph.edges.len() <= 24);
        assert_eq!(brute_force_matching(&graph).unwrap(), r.matching);
        assert_eq!(r.merged, 4);
    }

    #[test]
    fn odd_triangle_count_leaves_one() {
        let g = triangulated_grid(3, 1);
        let mut m = g.clone();
        m.faces.pop();
        let r = merge(&m, &OperatorConfig::default()).unwrap();
        assert!(r.triangles_left >= 1);
        let two = merge(&triangulated_grid(1, 1), &OperatorConfig::default()).unwrap();
        assert_eq!((two.merged, two.triangles_left), (1, 0));
        assert_eq!(two.summary().split_whitespace().next(), Some("merged=1"));
    }

    #[test]
    fn cw_triangle_is_not_merged() {
        let mut g = triangulated_grid(2, 2);
        g.faces[5].swap(1, 2);
        let r = convert(&g, &OperatorConfig::default()).unwrap();
        assert!(r.mesh.faces.contains(&g.faces[5]));
        for (face, src) in r.mesh.faces.iter().zip(&r.sources) {
            if src.len() == 2 {
                assert!(!src.contains(&5), "{face:?}");
            }
        }
    }

    #[test]
    fn inverted_quad_gets_flipped() {
        let g = triangulated_grid(1, 1);
        let mut r = merge(&g, &OperatorConfig::default()).unwrap();
        r.mesh.faces[0].reverse();
        let pts = r.mesh.face_points(0);
        assert!(newell_normal(&pts).unwrap().z < 0.0);
        let fixed = enforce_normal_consistency(&g, &r);
        assert!(newell_normal(&fixed.face_points(0)).unwrap().z > 0.0);
        let again = enforce_normal_consistency(&g, &merge(&g, &OperatorConfig::default()).unwrap());
        assert_eq!(
            again.faces[0],
            merge(&g, &OperatorConfig::default()).unwrap().mesh.faces[0]
        );
    }

    #[test]
    fn non_triangles_pass_through() {
        let mut m = triangulated_grid(2, 1);
        m.faces.push(vec![0, 1, 4, 3]);
        let r = merge(&m, &OperatorConfig::default()).unwrap();
        assert_eq!(r.mesh.faces.last(), Some(&vec![0, 1, 4, 3]));
    }

    #[test]
    fn quad_grid_untouched() {
        let q = quad_grid(3, 3);
        let r = merge(&q, &OperatorConfig::default()).unwrap();
        assert_eq!(r.mesh, q);
        assert_eq!(r.merged, 0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn noisy_grid() -> impl Strategy<Value = PolyMesh> {
            (2usize..6, 2usize..6, 0u64..1000, 0.0f64..0.35).prop_map(|(w, h, seed, amp)| {
                crate::shapes::jitter(&triangulated_grid(w, h), amp, seed)
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn preserves_geometry_and_coverage(m in noisy_grid(), greedy in any::<bool>()) {
                let cfg = OperatorConfig {
                    mode: if greedy { MergeMode::Greedy } else { MergeMode::Global },
                    ..Default::default()
                };
                let r = convert(&m, &cfg).unwrap();
                prop_assert_eq!(&r.mesh.vertices, &m.vertices);
                let mut covered: Vec<usize> = r.sources.iter().flatten().copied().collect();
                covered.sort_unstable();
                prop_assert_eq!(covered, (0..m.faces.len()).collect::<Vec<_>>());
                for (face, src) in r.mesh.faces.iter().zip(&r.sources) {
                    let mut verts: Vec<usize> = src.iter().flat_map(|&s| m.faces[s].clone()).collect();
                    verts.sort_unstable();
                    verts.dedup();
                    let mut fv = face.clone();
                    fv.sort_unstable();
                    prop_assert_eq!(fv, verts);
                }
            }

            #[test]
            fn global_at_least_greedy(m in noisy_grid()) {
                let g = merge(&m, &OperatorConfig::default()).unwrap();
                let gr = merge(&m, &OperatorConfig { mode: MergeMode::Greedy, ..Default::default() }).unwrap();
                prop_assert!(g.total_weight() >= gr.total_weight() - 1e-9);
            }

            #[test]
            fn deterministic(m in noisy_grid()) {
                let a = convert(&m, &OperatorConfig::default()).unwrap();
                let b = convert(&m, &OperatorConfig::default()).unwrap();
                prop_assert_eq!(a.mesh, b.mesh);
            }

            #[test]
            fn tightening_never_adds_candidates(m in noisy_grid(), lo in 30.0f64..60.0, hi in 100.0f64..140.0, dh in 5.0f64..45.0) {
                let base = OperatorConfig::default();
                let tight = OperatorConfig {
                    verify: VerifyConfig { theta_min: lo, theta_max: hi, dihedral_max: dh, ..base.verify },
                    ..base
                };
                let c = enumerate_candidates(&m);
                let n_base = score_and_prefilter(&m, c.clone(), &base).len();
                let n_tight = score_and_prefilter(&m, c, &tight).len();
                prop_assert!(n_tight <= n_base);
            }

            #[test]
            fn consistent_normals_on_closed_mesh(rings in 4usize..9, segs in 5usize..10) {
                let sphere = crate::shapes::triangulate_quads(&crate::shapes::uv_sphere(1.0, rings, segs));
                let r = convert(&sphere, &OperatorConfig::default()).unwrap();
                for (fi, src) in r.sources.iter().enumerate() {
                    let n = newell_vector(&r.mesh.face_points(fi));
                    let mut avg = Vec3::zeros();
                    for &s in src {
                        avg += newell_normal(&sphere.face_points(s)).unwrap();
                    }
                    prop_assert!(n.dot(&avg) > 0.0);
                }
            }
        }
    }
}
