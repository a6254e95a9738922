//! Goldberg polyhedra by the geodesic-dual route: Goldberg-Coxeter lattice
//! points of one fundamental triangle are mapped onto every icosahedron face,
//! projected to the unit sphere, triangulated by a convex hull, and the hull
//! is dualized.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use robust::{orient3d, Coord3D};

use crate::error::{Error, Result};
use crate::mesh::{
    build_edge_face_map, centroid_of, newell_normal, normalize_unit_cube, PolyMesh, Vec3,
};

/// Points closer than this after projection are one point.
pub const DEDUP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GoldbergParams {
    pub m: u32,
    pub n: u32,
}

impl GoldbergParams {
    pub fn new(m: u32, n: u32) -> Result<Self> {
        if m < n {
            return Err(Error::Config(format!(
                "Goldberg parameters need m >= n, got ({m}, {n})"
            )));
        }
        if m == 0 {
            return Err(Error::Config("Goldberg parameters (0, 0) are empty".into()));
        }
        Ok(GoldbergParams { m, n })
    }

    /// Triangulation number `m^2 + mn + n^2`.
    pub fn t(&self) -> u64 {
        let (m, n) = (self.m as u64, self.n as u64);
        m * m + m * n + n * n
    }

    /// All valid parameter pairs with `t_min <= T <= t_max`, ordered by T then m.
    pub fn with_t_in(t_min: u64, t_max: u64) -> Vec<GoldbergParams> {
        let mut out = Vec::new();
        let mut m = 1u32;
        while (m as u64) * (m as u64) <= t_max {
            for n in 0..=m {
                let p = GoldbergParams { m, n };
                if (t_min..=t_max).contains(&p.t()) {
                    out.push(p);
                }
            }
            m += 1;
        }
        out.sort_by_key(|p| (p.t(), p.m));
        out
    }
}

/// Integer pairs `(a, b)` inside the fundamental triangle with corners
/// `(0, 0)`, `(m, n)` and `(-n, m + n)` of the hexagonal lattice, in
/// lexicographic order.
pub fn lattice_points(p: &GoldbergParams) -> Vec<(i64, i64)> {
    let (m, n, t) = (p.m as i64, p.n as i64, p.t() as i64);
    let mut out = Vec::new();
    for a in -n..=m {
        for b in 0..=m + n {
            if (m + n) * a + n * b >= 0 && m * b - n * a >= 0 && t - m * a - (m + n) * b >= 0 {
                out.push((a, b));
            }
        }
    }
    out
}

/// Barycentric weights of a lattice point with respect to the fundamental
/// triangle's corners.
fn barycentric(p: &GoldbergParams, (a, b): (i64, i64)) -> [f64; 3] {
    let (m, n, t) = (p.m as f64, p.n as f64, p.t() as f64);
    let (a, b) = (a as f64, b as f64);
    let l1 = (a * (m + n) + b * n) / t;
    let l2 = (m * b - n * a) / t;
    [1.0 - l1 - l2, l1, l2]
}

/// Regular icosahedron inscribed in the unit sphere, faces counter-clockwise
/// seen from outside.
pub fn icosahedron() -> PolyMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices = Vec::with_capacity(12);
    for s1 in [-1.0, 1.0] {
        for s2 in [-1.0, 1.0] {
            vertices.push(Vec3::new(s1, s2 * phi, 0.0));
            vertices.push(Vec3::new(0.0, s1, s2 * phi));
            vertices.push(Vec3::new(s2 * phi, 0.0, s1));
        }
    }
    for v in &mut vertices {
        *v = v.normalize();
    }
    let hull = convex_hull(&vertices).expect("icosahedron vertices are in convex position");
    hull.to_mesh()
}

/// Maps the lattice onto every icosahedron face and projects radially to the
/// unit sphere. Images shared by neighbouring faces are merged within
/// `DEDUP_TOLERANCE`; output order is first appearance (face order, then
/// lattice order).
pub fn project_to_icosahedron(lattice: &[(i64, i64)], p: &GoldbergParams) -> Vec<Vec3> {
    let ico = icosahedron();
    let weights: Vec<[f64; 3]> = lattice.iter().map(|&ab| barycentric(p, ab)).collect();
    let per_face: Vec<Vec<Vec3>> = ico
        .faces
        .par_iter()
        .map(|f| {
            let (a, b, c) = (ico.vertices[f[0]], ico.vertices[f[1]], ico.vertices[f[2]]);
            weights
                .iter()
                .map(|w| (a * w[0] + b * w[1] + c * w[2]).normalize())
                .collect()
        })
        .collect();
    let cell = |x: f64| (x / DEDUP_TOLERANCE).round() as i64;
    let mut grid: HashMap<[i64; 3], usize> = HashMap::new();
    let mut out: Vec<Vec3> = Vec::new();
    for q in per_face.into_iter().flatten() {
        let key = [cell(q.x), cell(q.y), cell(q.z)];
        let mut found = false;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(&i) = grid.get(&[key[0] + dx, key[1] + dy, key[2] + dz]) {
                        if (out[i] - q).norm() <= DEDUP_TOLERANCE {
                            found = true;
                            break 'search;
                        }
                    }
                }
            }
        }
        if !found {
            grid.insert(key, out.len());
            out.push(q);
        }
    }
    out
}

/// Triangulated convex hull with faces counter-clockwise seen from outside.
/// `vertices` are the input points; points strictly inside the hull are
/// left unreferenced.
#[derive(Debug, Clone, PartialEq)]
pub struct HullMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl HullMesh {
    pub fn vertex_faces(&self) -> Vec<Vec<usize>> {
        let mut vf = vec![Vec::new(); self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            for &v in f {
                vf[v].push(fi);
            }
        }
        vf
    }

    pub fn to_mesh(&self) -> PolyMesh {
        PolyMesh {
            vertices: self.vertices.clone(),
            faces: self.faces.iter().map(|f| f.to_vec()).collect(),
        }
    }
}

fn coord(p: &Vec3) -> Coord3D<f64> {
    Coord3D {
        x: p.x,
        y: p.y,
        z: p.z,
    }
}

/// Exact orientation: positive when `d` lies below the plane of the
/// counter-clockwise triangle `(a, b, c)`, i.e. on its inner side.
fn orient(pts: &[Vec3], f: &[usize; 3], d: usize) -> f64 {
    orient3d(
        coord(&pts[f[0]]),
        coord(&pts[f[1]]),
        coord(&pts[f[2]]),
        coord(&pts[d]),
    )
}

/// Incremental convex hull with exact orientation predicates. A point
/// exactly coplanar with a face does not see it, which acts as a consistent
/// symbolic perturbation of every point towards the hull interior.
pub fn convex_hull(points: &[Vec3]) -> Result<HullMesh> {
    if points.len() < 4 {
        return Err(Error::Degenerate(format!(
            "hull needs at least 4 points, got {}",
            points.len()
        )));
    }
    let far = |from: &dyn Fn(&Vec3) -> f64| {
        (0..points.len())
            .max_by(|&a, &b| {
                from(&points[a])
                    .total_cmp(&from(&points[b]))
                    .then(b.cmp(&a))
            })
            .unwrap()
    };
    let i0 = 0;
    let i1 = far(&|p| (p - points[i0]).norm_squared());
    let d01 = points[i1] - points[i0];
    let i2 = far(&|p| d01.cross(&(p - points[i0])).norm_squared());
    let i3 = far(&|p| {
        orient3d(
            coord(&points[i0]),
            coord(&points[i1]),
            coord(&points[i2]),
            coord(p),
        )
        .abs()
    });
    let base = [i0, i1, i2];
    if points[i1] == points[i0] || d01.cross(&(points[i2] - points[i0])).norm_squared() == 0.0 {
        return Err(Error::Degenerate("hull input is collinear".into()));
    }
    if orient(points, &base, i3) == 0.0 {
        return Err(Error::Degenerate("hull input is coplanar".into()));
    }

    let mut faces: Vec<Option<[usize; 3]>> = Vec::new();
    let mut edge_face: HashMap<(usize, usize), usize> = HashMap::new();
    let add = |f: [usize; 3],
               faces: &mut Vec<Option<[usize; 3]>>,
               edge_face: &mut HashMap<(usize, usize), usize>| {
        let id = faces.len();
        for k in 0..3 {
            edge_face.insert((f[k], f[(k + 1) % 3]), id);
        }
        faces.push(Some(f));
    };
    let tet = [i0, i1, i2, i3];
    for skip in 0..4 {
        let mut f = [0usize; 3];
        let mut k = 0;
        for (j, &v) in tet.iter().enumerate() {
            if j != skip {
                f[k] = v;
                k += 1;
            }
        }
        if orient(points, &f, tet[skip]) < 0.0 {
            f.swap(1, 2);
        }
        add(f, &mut faces, &mut edge_face);
    }

    for p in 0..points.len() {
        if tet.contains(&p) {
            continue;
        }
        let visible: Vec<usize> = faces
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.filter(|f| orient(points, f, p) < 0.0).map(|_| i))
            .collect();
        if visible.is_empty() {
            continue;
        }
        let mut horizon = Vec::new();
        for &fi in &visible {
            let f = faces[fi].unwrap();
            for k in 0..3 {
                let (u, v) = (f[k], f[(k + 1) % 3]);
                let twin = edge_face[&(v, u)];
                if visible.binary_search(&twin).is_err() {
                    horizon.push((u, v));
                }
            }
        }
        for &fi in &visible {
            let f = faces[fi].take().unwrap();
            for k in 0..3 {
                edge_face.remove(&(f[k], f[(k + 1) % 3]));
            }
        }
        for (u, v) in horizon {
            add([u, v, p], &mut faces, &mut edge_face);
        }
    }
    Ok(HullMesh {
        vertices: points.to_vec(),
        faces: faces.into_iter().flatten().collect(),
    })
}

/// Where the dual vertex of a face goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DualPlacement {
    /// Face centroid projected to the unit sphere.
    #[default]
    SphereCentroid,
    /// Pole of the face plane `n . x = d`, i.e. `n / d`. Dual faces of a
    /// convex polyhedron around the origin are then exactly planar.
    Polar,
}

/// Topological dual of a closed, consistently oriented polygon mesh: one
/// vertex per face, one face per vertex listing the incident faces
/// counter-clockwise seen from outside. Vertices without incident faces are
/// skipped.
pub fn dual_of(mesh: &PolyMesh, placement: DualPlacement) -> Result<PolyMesh> {
    let mut edge_face: HashMap<(usize, usize), usize> = HashMap::new();
    for (fi, f) in mesh.faces.iter().enumerate() {
        for k in 0..f.len() {
            if edge_face.insert((f[k], f[(k + 1) % f.len()]), fi).is_some() {
                return Err(Error::Structure(format!(
                    "directed edge {}->{} used twice",
                    f[k],
                    f[(k + 1) % f.len()]
                )));
            }
        }
    }
    let vertices = mesh
        .faces
        .iter()
        .enumerate()
        .map(|(fi, f)| {
            let pts: Vec<Vec3> = f.iter().map(|&v| mesh.vertices[v]).collect();
            let c = centroid_of(&pts);
            match placement {
                DualPlacement::SphereCentroid => Ok(c.try_normalize(0.0).unwrap_or(c)),
                DualPlacement::Polar => {
                    let n = newell_normal(&pts)?;
                    let d = n.dot(&c);
                    if !(d > 0.0) {
                        return Err(Error::Degenerate(format!(
                            "face {fi} plane does not enclose the origin"
                        )));
                    }
                    Ok(n / d)
                }
            }
        })
        .collect::<Result<Vec<Vec3>>>()?;
    let vf = mesh.vertex_faces();
    let mut faces = Vec::new();
    for (v, incident) in vf.iter().enumerate() {
        let Some(&start) = incident.first() else {
            continue;
        };
        let mut cycle = vec![start];
        let mut cur = start;
        loop {
            let f = &mesh.faces[cur];
            let k = f.iter().position(|&x| x == v).unwrap();
            let prev = f[(k + f.len() - 1) % f.len()];
            let next = *edge_face
                .get(&(v, prev))
                .ok_or_else(|| Error::Structure(format!("vertex {v} is on an open boundary")))?;
            if next == start {
                break;
            }
            if cycle.len() >= incident.len() {
                return Err(Error::Structure(format!("vertex {v} is non-manifold")));
            }
            cycle.push(next);
            cur = next;
        }
        if cycle.len() != incident.len() {
            return Err(Error::Structure(format!("vertex {v} is non-manifold")));
        }
        faces.push(cycle);
    }
    Ok(PolyMesh { vertices, faces })
}

pub fn dual_mesh(hull: &HullMesh, placement: DualPlacement) -> Result<PolyMesh> {
    dual_of(&hull.to_mesh(), placement)
}

/// Goldberg polyhedron `GP(m, n)` around the origin (before normalization).
pub fn goldberg_sphere(p: &GoldbergParams, placement: DualPlacement) -> Result<PolyMesh> {
    let points = project_to_icosahedron(&lattice_points(p), p);
    dual_mesh(&convex_hull(&points)?, placement)
}

/// Goldberg polyhedron `GP(m, n)` with sphere-centroid dual vertices,
/// normalized to `[-1, 1]^3`.
pub fn goldberg(p: &GoldbergParams) -> Result<PolyMesh> {
    goldberg_with(p, DualPlacement::default())
}

pub fn goldberg_with(p: &GoldbergParams, placement: DualPlacement) -> Result<PolyMesh> {
    normalize_unit_cube(&goldberg_sphere(p, placement)?)
}

/// Largest distance of a face vertex from the face's Newell plane through
/// its centroid.
pub fn max_planarity_deviation(mesh: &PolyMesh) -> f64 {
    mesh.faces
        .iter()
        .map(|f| {
            let pts: Vec<Vec3> = f.iter().map(|&v| mesh.vertices[v]).collect();
            let c = centroid_of(&pts);
            match newell_normal(&pts) {
                Ok(n) => pts.iter().fold(0.0f64, |m, q| m.max(n.dot(&(q - c)).abs())),
                Err(_) => f64::INFINITY,
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountCheck {
    pub name: &'static str,
    pub expected: i64,
    pub actual: i64,
}

impl CountCheck {
    pub fn passed(&self) -> bool {
        self.expected == self.actual
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountReport {
    pub vertices: i64,
    pub edges: i64,
    pub faces: i64,
    pub checks: Vec<CountCheck>,
}

impl CountReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CountCheck::passed)
    }
}

impl fmt::Display for CountReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "counts: V={} E={} F={}",
            self.vertices, self.edges, self.faces
        )?;
        if self.passed() {
            return write!(f, " OK");
        }
        write!(f, " FAIL")?;
        for c in self.checks.iter().filter(|c| !c.passed()) {
            write!(f, " {}: expected {} got {};", c.name, c.expected, c.actual)?;
        }
        Ok(())
    }
}

/// Checks `V = 20T`, `E = 30T`, `F = 10T + 2`, 12 pentagons, `10T - 10`
/// hexagons and Euler characteristic 2.
pub fn validate_counts(mesh: &PolyMesh, p: &GoldbergParams) -> CountReport {
    let t = p.t() as i64;
    let v = mesh.vertices.len() as i64;
    let e = build_edge_face_map(mesh).len() as i64;
    let f = mesh.faces.len() as i64;
    let degree = |d: usize| mesh.faces.iter().filter(|x| x.len() == d).count() as i64;
    let checks = vec![
        CountCheck {
            name: "V",
            expected: 20 * t,
            actual: v,
        },
        CountCheck {
            name: "E",
            expected: 30 * t,
            actual: e,
        },
        CountCheck {
            name: "F",
            expected: 10 * t + 2,
            actual: f,
        },
        CountCheck {
            name: "pentagons",
            expected: 12,
            actual: degree(5),
        },
        CountCheck {
            name: "hexagons",
            expected: 10 * t - 10,
            actual: degree(6),
        },
        CountCheck {
            name: "euler",
            expected: 2,
            actual: v - e + f,
        },
    ];
    CountReport {
        vertices: v,
        edges: e,
        faces: f,
        checks,
    }
}
