//! Mesh evaluation: sampled Chamfer and Hausdorff distances, voxel IoU,
//! quad ratio, opposite-edge parallelism (OEP), edge-flow continuity (EFC)
//! and the feature-line based edge flow ratio (EFR).

use std::collections::HashSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rstar::RTree;

use crate::error::{Error, Result};
use crate::mesh::{bounds_of, build_edge_face_map, newell_vector, PolyMesh, Vec3};
use crate::shapes::fan_triangles;

/// Default sample count per mesh for Chamfer and Hausdorff distances.
pub const DEFAULT_SAMPLES: usize = 100_000;
/// Default voxel grid resolution for IoU.
pub const DEFAULT_IOU_RESOLUTION: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct SampledSurface {
    pub points: Vec<Vec3>,
}

impl SampledSurface {
    pub fn sample_count(&self) -> usize {
        self.points.len()
    }
}

fn triangle_area(t: &[Vec3; 3]) -> f64 {
    0.5 * (t[1] - t[0]).cross(&(t[2] - t[0])).norm()
}

/// Area-weighted uniform samples over the fan triangulation of every face.
pub fn sample_surface(mesh: &PolyMesh, n: usize, seed: u64) -> Result<SampledSurface> {
    if n == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let tris = fan_triangles(mesh);
    let areas: Vec<f64> = tris.iter().map(triangle_area).collect();
    if !(areas.iter().sum::<f64>() > 0.0) {
        return Err(Error::Degenerate("mesh has zero surface area".into()));
    }
    let pick = WeightedIndex::new(&areas).map_err(|e| Error::Degenerate(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            let [a, b, c] = tris[pick.sample(&mut rng)];
            let r1: f64 = rng.gen::<f64>().sqrt();
            let r2: f64 = rng.gen();
            a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2)
        })
        .collect();
    Ok(SampledSurface { points })
}

fn as_rows(points: &[Vec3]) -> Vec<[f64; 3]> {
    points.iter().map(|p| [p.x, p.y, p.z]).collect()
}

/// Distance from every point of `from` to its nearest point in `to`.
pub fn nearest_distances(from: &[Vec3], to: &[Vec3]) -> Vec<f64> {
    let tree = RTree::bulk_load(as_rows(to));
    from.par_iter()
        .map(|p| {
            let q = tree
                .nearest_neighbor(&[p.x, p.y, p.z])
                .expect("target set is non-empty");
            (Vec3::from(*q) - p).norm()
        })
        .collect()
}

fn require_points(a: &SampledSurface, b: &SampledSurface) -> Result<()> {
    if a.points.is_empty() || b.points.is_empty() {
        return Err(Error::UndefinedMetric(
            "distance between empty point sets".into(),
        ));
    }
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Symmetric mean nearest-neighbour distance (plain, not squared).
pub fn chamfer(a: &SampledSurface, b: &SampledSurface) -> Result<f64> {
    require_points(a, b)?;
    let ab = nearest_distances(&a.points, &b.points);
    let ba = nearest_distances(&b.points, &a.points);
    Ok(0.5 * (mean(&ab) + mean(&ba)))
}

pub fn hausdorff(a: &SampledSurface, b: &SampledSurface) -> Result<f64> {
    require_points(a, b)?;
    let ab = nearest_distances(&a.points, &b.points);
    let ba = nearest_distances(&b.points, &a.points);
    Ok(ab.iter().chain(&ba).fold(0.0, |m, &d| m.max(d)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IouReport {
    pub iou: f64,
    /// Neither mesh occupies any voxel; `iou` is then reported as 1.
    pub both_empty: bool,
}

fn cross2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Indices of voxel centres `lo + (t + 0.5) h` inside the span of `values`.
fn center_range(
    values: impl Iterator<Item = f64> + Clone,
    lo: f64,
    h: f64,
    res: usize,
) -> Option<std::ops::RangeInclusive<usize>> {
    let min = values.clone().fold(f64::INFINITY, f64::min);
    let max = values.fold(f64::NEG_INFINITY, f64::max);
    let first = ((min - lo) / h - 0.5).ceil().max(0.0);
    let last = ((max - lo) / h - 0.5).floor().min(res as f64 - 1.0);
    (first <= last).then_some(first as usize..=last as usize)
}

/// Occupancy by ray parity along `axis`, one ray through every column of
/// voxel centres. Ray origins carry a tiny irrational offset so rays never
/// pass exactly through shared edges.
fn parity_occupancy(tris: &[[Vec3; 3]], lo: &Vec3, h: &Vec3, res: usize, axis: usize) -> Vec<bool> {
    let (i, j) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let eps = [h[i] * 1.234_567e-7, h[j] * 7.654_321e-8];
    let mut hits: Vec<Vec<f64>> = vec![Vec::new(); res * res];
    for tri in tris {
        let p: Vec<[f64; 2]> = tri.iter().map(|v| [v[i], v[j]]).collect();
        let d = cross2(
            [p[1][0] - p[0][0], p[1][1] - p[0][1]],
            [p[2][0] - p[0][0], p[2][1] - p[0][1]],
        );
        if d == 0.0 {
            continue;
        }
        let (Some(ri), Some(rj)) = (
            center_range(p.iter().map(|q| q[0]), lo[i], h[i], res),
            center_range(p.iter().map(|q| q[1]), lo[j], h[j], res),
        ) else {
            continue;
        };
        for ti in ri.clone() {
            for tj in rj.clone() {
                let q = [
                    lo[i] + (ti as f64 + 0.5) * h[i] + eps[0],
                    lo[j] + (tj as f64 + 0.5) * h[j] + eps[1],
                ];
                let sub = |k: usize| [p[k][0] - q[0], p[k][1] - q[1]];
                let l0 = cross2(sub(1), sub(2)) / d;
                let l1 = cross2(sub(2), sub(0)) / d;
                let l2 = cross2(sub(0), sub(1)) / d;
                if l0 >= 0.0 && l1 >= 0.0 && l2 >= 0.0 {
                    hits[ti * res + tj]
                        .push(l0 * tri[0][axis] + l1 * tri[1][axis] + l2 * tri[2][axis]);
                }
            }
        }
    }
    let mut occ = vec![false; res * res * res];
    for (li, list) in hits.iter_mut().enumerate() {
        list.sort_by(f64::total_cmp);
        let (ti, tj) = (li / res, li % res);
        let mut crossed = 0;
        for tk in 0..res {
            let c = lo[axis] + (tk as f64 + 0.5) * h[axis];
            while crossed < list.len() && list[crossed] < c {
                crossed += 1;
            }
            if crossed % 2 == 1 {
                let mut idx = [0usize; 3];
                idx[i] = ti;
                idx[j] = tj;
                idx[axis] = tk;
                occ[(idx[0] * res + idx[1]) * res + idx[2]] = true;
            }
        }
    }
    occ
}

/// Voxel occupancy over the given box: a voxel is inside when at least two of
/// the three axis-aligned parity rays through its centre say so.
pub fn voxelize(mesh: &PolyMesh, lo: &Vec3, hi: &Vec3, res: usize) -> Vec<bool> {
    let extent = hi - lo;
    if res == 0 || extent.iter().any(|e| !(*e > 0.0)) {
        return vec![false; res * res * res];
    }
    let h = extent / res as f64;
    let tris = fan_triangles(mesh);
    let per_axis: Vec<Vec<bool>> = (0..3)
        .into_par_iter()
        .map(|axis| parity_occupancy(&tris, lo, &h, res, axis))
        .collect();
    (0..res * res * res)
        .map(|k| per_axis.iter().filter(|o| o[k]).count() >= 2)
        .collect()
}

/// Intersection over union of voxel occupancies on a `res`^3 grid spanning
/// the joint bounding box.
pub fn voxel_iou(a: &PolyMesh, b: &PolyMesh, res: usize) -> Result<IouReport> {
    if res == 0 {
        return Err(Error::Config("IoU resolution must be at least 1".into()));
    }
    let all: Vec<Vec3> = a.vertices.iter().chain(&b.vertices).copied().collect();
    let Some((lo, hi)) = bounds_of(&all) else {
        return Ok(IouReport {
            iou: 1.0,
            both_empty: true,
        });
    };
    let oa = voxelize(a, &lo, &hi, res);
    let ob = voxelize(b, &lo, &hi, res);
    let inter = oa.iter().zip(&ob).filter(|(x, y)| **x && **y).count();
    let union = oa.iter().zip(&ob).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        return Ok(IouReport {
            iou: 1.0,
            both_empty: true,
        });
    }
    Ok(IouReport {
        iou: inter as f64 / union as f64,
        both_empty: false,
    })
}

fn require_faces(mesh: &PolyMesh) -> Result<()> {
    if mesh.faces.is_empty() {
        return Err(Error::UndefinedMetric("mesh has no faces".into()));
    }
    Ok(())
}

/// Share of faces with exactly four vertices.
pub fn quad_ratio(mesh: &PolyMesh) -> Result<f64> {
    require_faces(mesh)?;
    Ok(mesh.faces.iter().filter(|f| f.len() == 4).count() as f64 / mesh.faces.len() as f64)
}

/// Share of faces with exactly three vertices.
pub fn triangle_ratio(mesh: &PolyMesh) -> Result<f64> {
    require_faces(mesh)?;
    Ok(mesh.faces.iter().filter(|f| f.len() == 3).count() as f64 / mesh.faces.len() as f64)
}

fn abs_cos(a: &Vec3, b: &Vec3) -> Option<f64> {
    let n = a.norm() * b.norm();
    (n > 0.0).then(|| (a.dot(b) / n).abs().min(1.0))
}

/// Mean over quads of the mean `|cos|` between the two pairs of opposite
/// edges. Quads with a zero-length edge are skipped.
pub fn oep(mesh: &PolyMesh) -> Result<f64> {
    let scores: Vec<f64> = mesh
        .faces
        .iter()
        .filter(|f| f.len() == 4)
        .filter_map(|f| {
            let e: Vec<Vec3> = (0..4)
                .map(|k| mesh.vertices[f[(k + 1) % 4]] - mesh.vertices[f[k]])
                .collect();
            Some(0.5 * (abs_cos(&e[0], &e[2])? + abs_cos(&e[1], &e[3])?))
        })
        .collect();
    if scores.is_empty() {
        return Err(Error::UndefinedMetric("OEP needs at least one quad".into()));
    }
    Ok(mean(&scores))
}

/// The vertex adjacent to `at` in `face` other than `other`.
fn rung_end(face: &[usize], at: usize, other: usize) -> Option<usize> {
    let n = face.len();
    let k = face.iter().position(|&v| v == at)?;
    let (prev, next) = (face[(k + n - 1) % n], face[(k + 1) % n]);
    if prev == other {
        Some(next)
    } else if next == other {
        Some(prev)
    } else {
        None
    }
}

/// Flow continuity across every edge shared by two quads. At each endpoint
/// of the shared edge, each quad has one transverse edge leaving it; the
/// score is `|cos|` between the two transverse edges, averaged over both
/// endpoints, then over all shared edges.
pub fn efc(mesh: &PolyMesh) -> Result<f64> {
    let efm = build_edge_face_map(mesh);
    let mut scores = Vec::new();
    for ((a, b), [fa, fb]) in efm.internal_edges() {
        let (qa, qb) = (&mesh.faces[fa], &mesh.faces[fb]);
        if qa.len() != 4 || qb.len() != 4 {
            continue;
        }
        let mut s = Vec::with_capacity(2);
        for (at, other) in [(a, b), (b, a)] {
            let (Some(ra), Some(rb)) = (rung_end(qa, at, other), rung_end(qb, at, other)) else {
                continue;
            };
            let p = mesh.vertices[at];
            if let Some(c) = abs_cos(&(p - mesh.vertices[ra]), &(mesh.vertices[rb] - p)) {
                s.push(c);
            }
        }
        if !s.is_empty() {
            scores.push(mean(&s));
        }
    }
    if scores.is_empty() {
        return Err(Error::UndefinedMetric(
            "EFC needs two edge-adjacent quads".into(),
        ));
    }
    Ok(mean(&scores))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Long,
    Loop,
}

/// Ordered polyline of ground-truth vertices. Loops do not repeat their
/// first point; closure is implied.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLine {
    pub kind: FeatureKind,
    pub vertices: Vec<usize>,
    pub points: Vec<Vec3>,
}

impl FeatureLine {
    pub fn is_closed(&self) -> bool {
        self.kind == FeatureKind::Loop
    }

    /// Points with the closing point appended for loops.
    pub fn open_polyline(&self) -> Vec<Vec3> {
        let mut p = self.points.clone();
        if self.is_closed() {
            p.push(self.points[0]);
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfrConfig {
    pub delta_long: f64,
    pub delta_loop: f64,
    pub ang_long: f64,
    pub ang_loop: f64,
    pub resample_m: usize,
    pub resample_ns: usize,
    pub tau: f64,
    pub sharp_dihedral_deg: f64,
}

impl Default for EfrConfig {
    fn default() -> Self {
        EfrConfig {
            delta_long: 0.05,
            delta_loop: 0.01,
            ang_long: 0.12,
            ang_loop: 0.78,
            resample_m: 100,
            resample_ns: 500,
            tau: 0.02,
            sharp_dihedral_deg: 30.0,
        }
    }
}

impl EfrConfig {
    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("delta_long", self.delta_long),
            ("delta_loop", self.delta_loop),
            ("ang_long", self.ang_long),
            ("ang_loop", self.ang_loop),
            ("tau", self.tau),
            ("sharp_dihedral_deg", self.sharp_dihedral_deg),
        ];
        for (name, v) in reals {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.resample_m < 2 || self.resample_ns < 2 {
            return Err(Error::Config("resample counts must be at least 2".into()));
        }
        Ok(())
    }

    fn delta(&self, kind: FeatureKind) -> f64 {
        match kind {
            FeatureKind::Long => self.delta_long,
            FeatureKind::Loop => self.delta_loop,
        }
    }

    fn angle(&self, kind: FeatureKind) -> f64 {
        match kind {
            FeatureKind::Long => self.ang_long,
            FeatureKind::Loop => self.ang_loop,
        }
    }
}

/// Boundary edges, non-manifold edges and edges whose adjacent face normals
/// differ by more than the sharp threshold, grouped into chains that break
/// at every vertex of hard degree other than two. Fully closed chains become
/// loops; open chains need at least three points to count as long features.
pub fn extract_feature_lines(gt: &PolyMesh, cfg: &EfrConfig) -> Vec<FeatureLine> {
    let efm = build_edge_face_map(gt);
    let normals: Vec<Option<Vec3>> = gt
        .faces
        .iter()
        .map(|f| {
            let pts: Vec<Vec3> = f.iter().map(|&v| gt.vertices[v]).collect();
            newell_vector(&pts).try_normalize(0.0)
        })
        .collect();
    let cos_sharp = cfg.sharp_dihedral_deg.to_radians().cos();
    let mut hard: Vec<(usize, usize)> = Vec::new();
    for ((a, b), faces) in efm.iter() {
        let is_hard = match faces {
            [_] => true,
            [f, g] => match (normals[*f], normals[*g]) {
                (Some(n), Some(m)) => n.dot(&m) < cos_sharp,
                _ => false,
            },
            _ => true,
        };
        if is_hard {
            hard.push((a, b));
        }
    }
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); gt.vertices.len()];
    for (e, &(a, b)) in hard.iter().enumerate() {
        adj[a].push((b, e));
        adj[b].push((a, e));
    }
    let mut used = vec![false; hard.len()];
    let mut lines = Vec::new();
    let walk = |start: usize, first_edge: usize, used: &mut Vec<bool>| -> Vec<usize> {
        let mut chain = vec![start];
        let mut cur = start;
        let mut e = first_edge;
        loop {
            used[e] = true;
            let (a, b) = hard[e];
            let next = if a == cur { b } else { a };
            chain.push(next);
            cur = next;
            if adj[cur].len() != 2 {
                break;
            }
            match adj[cur].iter().find(|&&(_, f)| !used[f]) {
                Some(&(_, f)) => e = f,
                None => break,
            }
        }
        chain
    };
    for (v, around) in adj.iter().enumerate() {
        if around.len() == 2 || around.is_empty() {
            continue;
        }
        for &(_, e) in around {
            if used[e] {
                continue;
            }
            let chain = walk(v, e, &mut used);
            if chain.len() >= 3 {
                lines.push(chain);
            }
        }
    }
    let mut loops = Vec::new();
    for e in 0..hard.len() {
        if used[e] {
            continue;
        }
        let start = hard[e].0.min(hard[e].1);
        let mut chain = walk(start, e, &mut used);
        if chain.first() == chain.last() {
            chain.pop();
        }
        loops.push(chain);
    }
    let make = |kind, vertices: Vec<usize>| FeatureLine {
        kind,
        points: vertices.iter().map(|&v| gt.vertices[v]).collect(),
        vertices,
    };
    lines
        .into_iter()
        .map(|c| make(FeatureKind::Long, c))
        .chain(
            loops
                .into_iter()
                .filter(|c| c.len() >= 3)
                .map(|c| make(FeatureKind::Loop, c)),
        )
        .collect()
}

/// `n` points spaced uniformly by arc length, endpoints included.
pub fn resample_polyline(points: &[Vec3], n: usize) -> Result<Vec<Vec3>> {
    if points.len() < 2 || n < 2 {
        return Err(Error::Degenerate(
            "resampling needs two points in and out".into(),
        ));
    }
    let mut cum = Vec::with_capacity(points.len());
    cum.push(0.0);
    for w in points.windows(2) {
        cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
    }
    let total = *cum.last().unwrap();
    if !(total > 0.0) {
        return Err(Error::Degenerate("polyline has zero length".into()));
    }
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n {
        if k == n - 1 {
            out.push(*points.last().unwrap());
            break;
        }
        let s = total * k as f64 / (n - 1) as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 {
            ((s - cum[seg]) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(points[seg] + (points[seg + 1] - points[seg]) * t);
    }
    Ok(out)
}

/// Minimum over forward and reversed pairing of the mean pointwise distance
/// after resampling both polylines to `ns` points.
pub fn curve_distance(p: &[Vec3], q: &[Vec3], ns: usize) -> Result<f64> {
    let a = resample_polyline(p, ns)?;
    let b = resample_polyline(q, ns)?;
    let fwd = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).sum::<f64>() / ns as f64;
    let rev = a
        .iter()
        .zip(b.iter().rev())
        .map(|(x, y)| (x - y).norm())
        .sum::<f64>()
        / ns as f64;
    Ok(fwd.min(rev))
}

/// Adjacency and per-component bounds of an output mesh, shared by all
/// feature traces against it.
pub struct ChainIndex<'a> {
    mesh: &'a PolyMesh,
    neighbors: Vec<Vec<usize>>,
    component: Vec<usize>,
    component_bounds: Vec<(Vec3, Vec3)>,
}

impl<'a> ChainIndex<'a> {
    pub fn new(mesh: &'a PolyMesh) -> Self {
        let neighbors = mesh.vertex_neighbors();
        let mut component = vec![usize::MAX; mesh.vertices.len()];
        let mut component_bounds = Vec::new();
        for s in 0..mesh.vertices.len() {
            if component[s] != usize::MAX {
                continue;
            }
            let id = component_bounds.len();
            let (mut lo, mut hi) = (mesh.vertices[s], mesh.vertices[s]);
            let mut stack = vec![s];
            component[s] = id;
            while let Some(v) = stack.pop() {
                lo = lo.inf(&mesh.vertices[v]);
                hi = hi.sup(&mesh.vertices[v]);
                for &u in &neighbors[v] {
                    if component[u] == usize::MAX {
                        component[u] = id;
                        stack.push(u);
                    }
                }
            }
            component_bounds.push((lo, hi));
        }
        ChainIndex {
            mesh,
            neighbors,
            component,
            component_bounds,
        }
    }
}

/// Output vertex chain matched to a feature line.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedChain {
    pub vertices: Vec<usize>,
    pub distance: f64,
}

fn tangents(samples: &[Vec3], closed: bool) -> Vec<Vec3> {
    let n = samples.len();
    (0..n)
        .map(|i| {
            let (a, b) = if closed {
                (samples[(i + n - 1) % n], samples[(i + 1) % n])
            } else {
                (samples[i.saturating_sub(1)], samples[(i + 1).min(n - 1)])
            };
            (b - a).try_normalize(0.0).unwrap_or_else(Vec3::zeros)
        })
        .collect()
}

/// Sample indices on the arc from `a` to `b`, both included; on a closed
/// feature the shorter way round.
fn arc_indices(a: usize, b: usize, n: usize, closed: bool) -> Vec<usize> {
    let (lo, hi) = (a.min(b), a.max(b));
    if closed && hi - lo > n - (hi - lo) {
        (hi..n).chain(0..=lo).collect()
    } else {
        (lo..=hi).collect()
    }
}

/// Greedy walk from `start`: next vertex is the unvisited nearby neighbour
/// whose direction best aligns with `s` times the local tangent, while that
/// angle stays within `max_angle`. The tangent is the best-aligned one over
/// the feature samples the step spans, so a walk can follow a kinked
/// polyline whose smoothed tangent at a kink points between the two sides.
fn greedy_walk(
    index: &ChainIndex,
    start: usize,
    s: f64,
    phi: &[Option<usize>],
    tans: &[Vec3],
    closed: bool,
    max_angle: f64,
) -> Vec<usize> {
    let verts = &index.mesh.vertices;
    let mut chain = vec![start];
    let mut visited = HashSet::from([start]);
    let mut cur = start;
    loop {
        let mut best: Option<(f64, usize)> = None;
        for &u in &index.neighbors[cur] {
            let Some(k) = phi[u] else { continue };
            if visited.contains(&u) {
                continue;
            }
            let Some(dir) = (verts[u] - verts[cur]).try_normalize(0.0) else {
                continue;
            };
            let angle_to = |t: &Vec3| (dir.dot(&(t * s))).clamp(-1.0, 1.0).acos();
            let kc = phi[cur].unwrap_or(k);
            let ang = arc_indices(kc, k, tans.len(), closed)
                .into_iter()
                .map(|i| angle_to(&tans[i]))
                .fold(f64::INFINITY, f64::min);
            if ang <= max_angle && best.is_none_or(|(b, bu)| ang < b || (ang == b && u < bu)) {
                best = Some((ang, u));
            }
        }
        match best {
            Some((_, u)) => {
                visited.insert(u);
                chain.push(u);
                cur = u;
            }
            None => return chain,
        }
    }
}

fn trace_with_index(
    feature: &FeatureLine,
    index: &ChainIndex,
    cfg: &EfrConfig,
) -> Result<Option<TracedChain>> {
    let closed = feature.is_closed();
    let poly = feature.open_polyline();
    let delta = cfg.delta(feature.kind);
    // At least `resample_m` samples, and no gap wider than `delta`, so every
    // point of the feature itself passes the proximity gate.
    let length: f64 = poly.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    let m = cfg.resample_m.max((length / delta).ceil() as usize + 1);
    let mut samples = resample_polyline(&poly, m + usize::from(closed))?;
    if closed {
        samples.pop();
    }
    let tans = tangents(&samples, closed);
    let max_angle = cfg.angle(feature.kind);
    let (flo, fhi) = bounds_of(&samples).expect("resampled feature is non-empty");
    let pad = Vec3::repeat(delta);
    let (flo, fhi) = (flo - pad, fhi + pad);

    let verts = &index.mesh.vertices;
    let mut phi: Vec<Option<usize>> = vec![None; verts.len()];
    let mut near = Vec::new();
    for (v, p) in verts.iter().enumerate() {
        let (clo, chi) = index.component_bounds[index.component[v]];
        let disjoint = (0..3).any(|k| chi[k] < flo[k] || clo[k] > fhi[k]);
        if disjoint || (0..3).any(|k| p[k] < flo[k] || p[k] > fhi[k]) {
            continue;
        }
        let (k, d) = samples
            .iter()
            .enumerate()
            .map(|(k, s)| (k, (p - s).norm()))
            .fold(
                (0, f64::INFINITY),
                |acc, x| if x.1 < acc.1 { x } else { acc },
            );
        if d < delta {
            phi[v] = Some(k);
            near.push(v);
        }
    }

    let first = feature.points[0];
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut best: Option<TracedChain> = None;
    for &start in &near {
        let fwd = greedy_walk(index, start, 1.0, &phi, &tans, closed, max_angle);
        let bwd = greedy_walk(index, start, -1.0, &phi, &tans, closed, max_angle);
        let mut both: Vec<usize> = bwd.iter().rev().copied().collect();
        both.extend(fwd.iter().skip(1).filter(|v| !bwd.contains(v)));
        for mut chain in [fwd, bwd, both] {
            if chain.len() < 2 {
                continue;
            }
            let is_loop = closed
                && chain.len() >= 3
                && index.neighbors[*chain.last().unwrap()]
                    .binary_search(&chain[0])
                    .is_ok();
            if is_loop {
                // Start at the vertex nearest the feature's first point and run
                // in the feature's direction so identical curves pair exactly.
                let k = (0..chain.len())
                    .min_by(|&a, &b| {
                        (verts[chain[a]] - first)
                            .norm()
                            .total_cmp(&(verts[chain[b]] - first).norm())
                    })
                    .unwrap();
                chain.rotate_left(k);
                let second = feature.points[1];
                let n = chain.len();
                if (verts[chain[n - 1]] - second).norm() < (verts[chain[1]] - second).norm() {
                    chain[1..].reverse();
                }
            } else if (verts[*chain.last().unwrap()] - first).norm()
                < (verts[chain[0]] - first).norm()
            {
                chain.reverse();
            }
            if !seen.insert(chain.clone()) {
                continue;
            }
            let mut q: Vec<Vec3> = chain.iter().map(|&v| verts[v]).collect();
            if is_loop {
                q.push(q[0]);
            }
            let Ok(d) = curve_distance(&poly, &q, cfg.resample_ns) else {
                continue;
            };
            if best.as_ref().is_none_or(|b| d < b.distance) {
                best = Some(TracedChain {
                    vertices: chain,
                    distance: d,
                });
            }
        }
    }
    Ok(best)
}

/// Best-matching output edge chain for one feature line, or `None` when no
/// chain of at least two vertices exists near it.
pub fn trace_chain(
    feature: &FeatureLine,
    out: &PolyMesh,
    cfg: &EfrConfig,
) -> Result<Option<TracedChain>> {
    trace_with_index(feature, &ChainIndex::new(out), cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfrReport {
    pub efr: f64,
    pub long_count: usize,
    pub loop_count: usize,
    /// Alignment score per feature, in extraction order; 0 when unmatched.
    pub scores: Vec<f64>,
}

/// Mean alignment score `exp(-d / tau)` over all ground-truth feature lines.
pub fn efr(gt: &PolyMesh, out: &PolyMesh, cfg: &EfrConfig) -> Result<EfrReport> {
    cfg.validate()?;
    let features = extract_feature_lines(gt, cfg);
    if features.is_empty() {
        return Err(Error::UndefinedMetric(
            "ground truth has no feature lines".into(),
        ));
    }
    let index = ChainIndex::new(out);
    let scores = features
        .par_iter()
        .map(|f| {
            Ok(match trace_with_index(f, &index, cfg)? {
                Some(c) => (-c.distance / cfg.tau).exp(),
                None => 0.0,
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(EfrReport {
        efr: mean(&scores),
        long_count: features
            .iter()
            .filter(|f| f.kind == FeatureKind::Long)
            .count(),
        loop_count: features
            .iter()
            .filter(|f| f.kind == FeatureKind::Loop)
            .count(),
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::normalize_unit_cube;
    use crate::shapes::{
        box_mesh, cube, cylinder, folded_sheet, quad_grid, triangulated_grid, uv_sphere,
    };

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    fn translated(m: &PolyMesh, d: Vec3) -> PolyMesh {
        let mut m = m.clone();
        for p in &mut m.vertices {
            *p += d;
        }
        m
    }

    /// Cube with every face split into 2x2 quads: 12 sharp edges of 3 points.
    fn split_cube() -> PolyMesh {
        cube().refine_midpoint()
    }

    #[test]
    fn sampling_is_uniform_and_area_weighted() {
        let sq = quad_grid(1, 1);
        let s = sample_surface(&sq, 10_000, 1).unwrap();
        let left = s.points.iter().filter(|p| p.x < 0.5).count() as f64;
        assert!((left - 5000.0).abs() < 3.0 * 50.0, "{left}");
        assert!(s
            .points
            .iter()
            .all(|p| p.z == 0.0 && (0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y)));

        let two = PolyMesh::new(
            vec![
                v(0.0, 0.0, 0.0),
                v(1.0, 0.0, 0.0),
                v(1.0, 1.0, 0.0),
                v(0.0, 1.0, 0.0),
                v(2.0, 0.0, 0.0),
                v(5.0, 0.0, 0.0),
                v(5.0, 1.0, 0.0),
                v(2.0, 1.0, 0.0),
            ],
            vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7]],
        )
        .unwrap();
        let s = sample_surface(&two, 10_000, 2).unwrap();
        let right = s.points.iter().filter(|p| p.x >= 2.0).count() as f64;
        let sigma = (10_000.0f64 * 0.75 * 0.25).sqrt();
        assert!((right - 7500.0).abs() < 3.0 * sigma, "{right}");

        assert_eq!(sample_surface(&sq, 1, 3).unwrap().sample_count(), 1);
        let flat = PolyMesh::new(
            vec![v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(2.0, 0.0, 0.0)],
            vec![vec![0, 1, 2]],
        )
        .unwrap();
        assert!(sample_surface(&flat, 10, 0).is_err());
        assert_eq!(
            sample_surface(&sq, 50, 9).unwrap(),
            sample_surface(&sq, 50, 9).unwrap()
        );
    }

    #[test]
    fn chamfer_and_hausdorff_examples() {
        let pts = |xs: &[f64]| SampledSurface {
            points: xs.iter().map(|&x| v(x, 0.0, 0.0)).collect(),
        };
        assert_eq!(chamfer(&pts(&[0.0]), &pts(&[1.0])).unwrap(), 1.0);
        assert_eq!(hausdorff(&pts(&[0.0, 10.0]), &pts(&[0.0])).unwrap(), 10.0);
        assert_eq!(
            hausdorff(&pts(&[0.0, 10.0]), &pts(&[0.0, 10.0])).unwrap(),
            0.0
        );
        assert!(chamfer(&pts(&[]), &pts(&[1.0])).is_err());

        let m = uv_sphere(0.5, 8, 12);
        let a = sample_surface(&m, 2000, 7).unwrap();
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        let b = sample_surface(&translated(&m, v(1.0, 0.0, 0.0)), 2000, 7).unwrap();
        let cd = chamfer(&a, &b).unwrap();
        assert!(cd > 0.0 && cd <= 1.0);
        assert!(hausdorff(&a, &b).unwrap() >= cd);
        assert_eq!(chamfer(&a, &b).unwrap(), chamfer(&b, &a).unwrap());
    }

    #[test]
    fn duplicate_points_do_not_break_nearest_queries() {
        let grid = quad_grid(20, 20);
        let mut pts = grid.vertices.clone();
        pts.extend(grid.vertices.iter().copied());
        let d = nearest_distances(&grid.vertices, &pts);
        assert!(d.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn iou_examples() {
        let c = cube();
        let r = voxel_iou(&c, &c, 32).unwrap();
        assert_eq!(r.iou, 1.0);
        assert!(!r.both_empty);
        assert_eq!(
            voxel_iou(&c, &translated(&c, v(3.0, 0.0, 0.0)), 32)
                .unwrap()
                .iou,
            0.0
        );
        let res = 60;
        let shifted = voxel_iou(&c, &translated(&c, v(0.5, 0.0, 0.0)), res)
            .unwrap()
            .iou;
        assert!((shifted - 1.0 / 3.0).abs() <= 2.0 / res as f64, "{shifted}");
        let other = voxel_iou(&translated(&c, v(0.5, 0.0, 0.0)), &c, res)
            .unwrap()
            .iou;
        assert_eq!(shifted, other);
        let empty = PolyMesh::default();
        assert!(voxel_iou(&empty, &empty, 8).unwrap().both_empty);
    }

    #[test]
    fn iou_of_sphere_matches_volume_fraction() {
        // Ball inscribed in its bounding cube fills pi/6 of it.
        let s = uv_sphere(1.0, 48, 96);
        let (lo, hi) = s.bounds().unwrap();
        let occ = voxelize(&s, &lo, &hi, 40);
        let frac = occ.iter().filter(|&&o| o).count() as f64 / occ.len() as f64;
        assert!((frac - std::f64::consts::PI / 6.0).abs() < 0.03, "{frac}");
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(quad_ratio(&cube()).unwrap(), 1.0);
        let mixed = PolyMesh::new(
            (0..6).map(|i| v(i as f64, (i % 2) as f64, 0.0)).collect(),
            vec![
                vec![0, 1, 2, 3],
                vec![1, 2, 3, 4],
                vec![0, 1, 2],
                vec![3, 4, 5],
            ],
        )
        .unwrap();
        assert_eq!(quad_ratio(&mixed).unwrap(), 0.5);
        let pent = PolyMesh::new(
            (0..5)
                .map(|i| v((i as f64).cos(), (i as f64).sin(), 0.0))
                .collect(),
            vec![vec![0, 1, 2, 3, 4]],
        )
        .unwrap();
        assert_eq!(quad_ratio(&pent).unwrap(), 0.0);
        for m in [mixed, pent, cube(), triangulated_grid(2, 2)] {
            let other =
                m.faces.iter().filter(|f| f.len() > 4).count() as f64 / m.faces.len() as f64;
            assert_eq!(
                quad_ratio(&m).unwrap() + triangle_ratio(&m).unwrap() + other,
                1.0
            );
        }
        assert!(quad_ratio(&PolyMesh::default()).is_err());
    }

    #[test]
    fn oep_examples() {
        let rect = PolyMesh::new(
            vec![
                v(0.0, 0.0, 0.0),
                v(3.0, 0.0, 0.0),
                v(3.0, 1.0, 0.0),
                v(0.0, 1.0, 0.0),
            ],
            vec![vec![0, 1, 2, 3]],
        )
        .unwrap();
        assert_eq!(oep(&rect).unwrap(), 1.0);
        let trap = PolyMesh::new(
            vec![
                v(0.0, 0.0, 0.0),
                v(2.0, 0.0, 0.0),
                v(1.0, 1.0, 0.0),
                v(0.0, 1.0, 0.0),
            ],
            vec![vec![0, 1, 2, 3]],
        )
        .unwrap();
        let want = (1.0 + std::f64::consts::FRAC_1_SQRT_2) / 2.0;
        assert!((oep(&trap).unwrap() - want).abs() < 1e-12);
        assert_eq!(oep(&quad_grid(5, 4)).unwrap(), 1.0);
        assert!(matches!(
            oep(&triangulated_grid(2, 2)),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn efc_examples() {
        assert_eq!(efc(&quad_grid(2, 1)).unwrap(), 1.0);
        assert_eq!(efc(&quad_grid(6, 5)).unwrap(), 1.0);
        let hinge = PolyMesh::new(
            vec![
                v(0.0, 0.0, 0.0),
                v(0.0, 1.0, 0.0),
                v(-1.0, 1.0, 0.0),
                v(-1.0, 0.0, 0.0),
                v(0.0, 0.0, 1.0),
                v(0.0, 1.0, 1.0),
            ],
            vec![vec![0, 1, 2, 3], vec![1, 0, 4, 5]],
        )
        .unwrap();
        assert!(efc(&hinge).unwrap().abs() < 1e-12);
        assert!(efc(&triangulated_grid(2, 2)).is_err());
    }

    #[test]
    fn oep_efc_invariant_under_similarity() {
        let m = crate::shapes::jitter(&quad_grid(4, 4), 0.15, 5);
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -0.7, 1.1);
        let moved = PolyMesh {
            vertices: m
                .vertices
                .iter()
                .map(|p| rot * (p * 2.5) + v(1.0, -2.0, 0.5))
                .collect(),
            faces: m.faces.clone(),
        };
        assert!((oep(&m).unwrap() - oep(&moved).unwrap()).abs() < 1e-12);
        assert!((efc(&m).unwrap() - efc(&moved).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn feature_line_examples() {
        let cfg = EfrConfig::default();
        let plane = extract_feature_lines(&quad_grid(4, 3), &cfg);
        assert_eq!(plane.len(), 1);
        assert_eq!(plane[0].kind, FeatureKind::Loop);
        assert_eq!(plane[0].points.len(), 14);

        let c = extract_feature_lines(&split_cube(), &cfg);
        assert_eq!(c.len(), 12);
        assert!(c
            .iter()
            .all(|f| f.kind == FeatureKind::Long && f.points.len() == 3));
        // On the plain cube every sharp edge is a two-point chain: no features.
        assert!(extract_feature_lines(&cube(), &cfg).is_empty());

        assert!(extract_feature_lines(&uv_sphere(1.0, 16, 24), &cfg).is_empty());
        let tube = extract_feature_lines(&cylinder(1.0, 2.0, 16, 4), &cfg);
        assert_eq!(tube.len(), 2);
        assert!(tube
            .iter()
            .all(|f| f.kind == FeatureKind::Loop && f.points.len() == 16));
    }

    #[test]
    fn curve_distance_examples() {
        let p = vec![v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(1.0, 2.0, 0.0)];
        assert_eq!(curve_distance(&p, &p, 500).unwrap(), 0.0);
        let r: Vec<Vec3> = p.iter().rev().copied().collect();
        assert!(curve_distance(&p, &r, 500).unwrap() < 1e-12);
        let a = vec![v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0)];
        let b = vec![v(0.0, 0.3, 0.0), v(1.0, 0.3, 0.0)];
        assert!((curve_distance(&a, &b, 500).unwrap() - 0.3).abs() < 1e-12);
        assert!(curve_distance(&a, &[v(1.0, 1.0, 1.0), v(1.0, 1.0, 1.0)], 10).is_err());
    }

    #[test]
    fn trace_chain_examples() {
        let cfg = EfrConfig::default();
        let gt = normalize_unit_cube(&split_cube()).unwrap();
        let features = extract_feature_lines(&gt, &cfg);
        for f in &features {
            let c = trace_chain(f, &gt, &cfg).unwrap().unwrap();
            assert_eq!(c.distance, 0.0);
            assert_eq!(c.vertices, f.vertices);
        }
        let f = &features[0];
        let dir = f.points[f.points.len() - 1] - f.points[0];
        let normal = dir.cross(&v(0.3, 0.5, 0.7)).normalize();
        let shifted = translated(&gt, normal * (2.0 * cfg.delta_long));
        assert!(trace_chain(f, &shifted, &cfg).unwrap().is_none());
        let fine = gt.refine_midpoint();
        for f in &features {
            let c = trace_chain(f, &fine, &cfg).unwrap().unwrap();
            assert!(c.distance < 1e-3, "{}", c.distance);
        }
    }

    #[test]
    fn efr_examples() {
        let cfg = EfrConfig::default();
        let meshes = [
            normalize_unit_cube(&split_cube()).unwrap(),
            normalize_unit_cube(&quad_grid(6, 4)).unwrap(),
            normalize_unit_cube(&folded_sheet(6, 4, 60.0)).unwrap(),
            normalize_unit_cube(&cylinder(1.0, 2.0, 20, 5)).unwrap(),
            normalize_unit_cube(&box_mesh(1.0, 2.0, 3.0).refine_midpoint()).unwrap(),
        ];
        for gt in &meshes {
            let r = efr(gt, gt, &cfg).unwrap();
            assert_eq!(r.efr, 1.0);
            assert_eq!(efr(gt, &PolyMesh::default(), &cfg).unwrap().efr, 0.0);
            let fine = efr(gt, &gt.refine_midpoint(), &cfg).unwrap();
            assert!(fine.efr > 0.95, "{fine:?}");
        }
        assert!(matches!(
            efr(&uv_sphere(1.0, 8, 12), &cube(), &cfg),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn kinked_features_match_themselves() {
        // Sharp-edge chains on a coarse lumpy surface turn by more than the
        // long-feature angle at most vertices.
        let gt = crate::shapes::lumpy_blob(10, 14);
        let cfg = EfrConfig::default();
        assert!(!extract_feature_lines(&gt, &cfg).is_empty());
        assert_eq!(efr(&gt, &gt, &cfg).unwrap().efr, 1.0);
    }

    #[test]
    fn arc_indices_take_the_short_way_round() {
        assert_eq!(arc_indices(5, 2, 10, false), vec![2, 3, 4, 5]);
        assert_eq!(arc_indices(1, 8, 10, true), vec![8, 9, 0, 1]);
        assert_eq!(arc_indices(1, 8, 10, false).len(), 8);
    }

    #[test]
    fn efr_shrinks_with_temperature() {
        let gt = normalize_unit_cube(&folded_sheet(6, 4, 60.0)).unwrap();
        let noisy = crate::shapes::jitter(&gt, 0.004, 3);
        let mut last = 1.0;
        for tau in [0.1, 0.05, 0.02, 0.01] {
            let e = efr(
                &gt,
                &noisy,
                &EfrConfig {
                    tau,
                    ..Default::default()
                },
            )
            .unwrap()
            .efr;
            assert!(e <= last);
            last = e;
        }
        assert!(last < 1.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn cd_hd_symmetric_and_ordered(seed in any::<u64>(), dx in -1.0f64..1.0) {
                let a = sample_surface(&uv_sphere(0.7, 6, 8), 400, seed).unwrap();
                let b = sample_surface(&translated(&box_mesh(1.0, 0.5, 0.8), v(dx, 0.0, 0.0)), 400, seed ^ 1).unwrap();
                let cd = chamfer(&a, &b).unwrap();
                let hd = hausdorff(&a, &b).unwrap();
                prop_assert_eq!(cd, chamfer(&b, &a).unwrap());
                prop_assert_eq!(hd, hausdorff(&b, &a).unwrap());
                prop_assert!(hd >= cd);
            }

            #[test]
            fn iou_symmetric_in_unit_range(dx in -1.5f64..1.5, dy in -0.5f64..0.5) {
                let a = cube();
                let b = translated(&box_mesh(0.7, 1.2, 0.9), v(dx, dy, 0.1));
                let ab = voxel_iou(&a, &b, 16).unwrap().iou;
                prop_assert!((0.0..=1.0).contains(&ab));
                prop_assert_eq!(ab, voxel_iou(&b, &a, 16).unwrap().iou);
            }
        }
    }
}
