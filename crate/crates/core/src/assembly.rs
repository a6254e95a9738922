//! Face assembly from anchors: every centroid retrieves its nearest vertices
//! in a feature space, candidate vertex subsets are enumerated from a growing
//! pool (progressive candidate face selection), and the first subset whose
//! ordered cycle passes geometric verification becomes the face. Quads are
//! tried before triangles.

use std::collections::{HashSet, VecDeque};
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

use crate::anchors::AnchorSet;
use crate::error::{Error, Result};
use crate::mesh::{centroid_of, newell_vector, PolyMesh, Vec3};
use crate::verify::{verify_quad, verify_tri, VerifyConfig};

/// Retrieval distance between a centroid and a vertex. Keys compare
/// lexicographically: `(primary, secondary)`.
pub trait FeatureSpace: Sync {
    fn distance(&self, centroid: usize, vertex: usize) -> (f64, f64);
    fn name(&self) -> &'static str;
}

/// Squared distance between raw coordinates.
pub struct EuclideanSpace<'a> {
    anchors: &'a AnchorSet,
}

impl<'a> EuclideanSpace<'a> {
    pub fn new(anchors: &'a AnchorSet) -> Self {
        EuclideanSpace { anchors }
    }
}

impl FeatureSpace for EuclideanSpace<'_> {
    fn distance(&self, c: usize, v: usize) -> (f64, f64) {
        let d = (self.anchors.centroids[c] - self.anchors.vertices[v]).norm_squared();
        (d, 0.0)
    }

    fn name(&self) -> &'static str {
        "euclidean"
    }
}

/// Per-anchor embedding vectors loaded from a feature file; squared
/// distance between embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct FileFeatures {
    pub dim: usize,
    pub vertices: Vec<Vec<f64>>,
    pub centroids: Vec<Vec<f64>>,
}

impl FileFeatures {
    /// Header `features <count> <dim>`, then `count` rows: all vertices, then
    /// all centroids, in anchor-file order.
    pub fn parse(text: &str, anchors: &AnchorSet) -> Result<Self> {
        let mut rows = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hl, header) = rows.next().ok_or_else(|| Error::Parse {
            line: 1,
            msg: "missing `features <count> <dim>` header".into(),
        })?;
        let h: Vec<&str> = header.split_whitespace().collect();
        let herr = || Error::Parse {
            line: hl,
            msg: "expected `features <count> <dim>`".into(),
        };
        if h.len() != 3 || h[0] != "features" {
            return Err(herr());
        }
        let count: usize = h[1].parse().map_err(|_| herr())?;
        let dim: usize = h[2].parse().map_err(|_| herr())?;
        if count != anchors.len() {
            return Err(Error::DimensionMismatch {
                left: anchors.len(),
                right: count,
            });
        }
        let mut vecs = Vec::with_capacity(count);
        for (ln, l) in rows {
            let v = l
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>().map_err(|_| Error::Parse {
                        line: ln,
                        msg: format!("bad number `{t}`"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: v.len(),
                });
            }
            vecs.push(v);
        }
        if vecs.len() != count {
            return Err(Error::Structure(format!(
                "header announces {count} feature rows, found {}",
                vecs.len()
            )));
        }
        let centroids = vecs.split_off(anchors.vertices.len());
        Ok(FileFeatures {
            dim,
            vertices: vecs,
            centroids,
        })
    }

    pub fn load(path: impl AsRef<Path>, anchors: &AnchorSet) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, anchors)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "features {} {}\n",
            self.vertices.len() + self.centroids.len(),
            self.dim
        );
        for v in self.vertices.iter().chain(&self.centroids) {
            out += &v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
            out.push('\n');
        }
        out
    }
}

impl FeatureSpace for FileFeatures {
    fn distance(&self, c: usize, v: usize) -> (f64, f64) {
        let d = self.centroids[c]
            .iter()
            .zip(&self.vertices[v])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (d, 0.0)
    }

    fn name(&self) -> &'static str {
        "file"
    }
}

/// Test double for a perfect encoder: distance 0 between a centroid and the
/// vertices of its ground-truth face, 1 otherwise, squared Euclidean distance
/// as tie-break. Centroid `i` is face `i` of the ground-truth mesh and vertex
/// indices are shared with it.
pub struct IncidenceOracle<'a> {
    anchors: &'a AnchorSet,
    face_sets: Vec<Vec<usize>>,
}

impl<'a> IncidenceOracle<'a> {
    pub fn new(gt: &PolyMesh, anchors: &'a AnchorSet) -> Result<Self> {
        if gt.faces.len() != anchors.centroids.len() || gt.vertices.len() != anchors.vertices.len()
        {
            return Err(Error::Structure(format!(
                "oracle mesh has {} vertices / {} faces, anchors have {} / {}",
                gt.vertices.len(),
                gt.faces.len(),
                anchors.vertices.len(),
                anchors.centroids.len()
            )));
        }
        let face_sets = gt
            .faces
            .iter()
            .map(|f| {
                let mut s = f.clone();
                s.sort_unstable();
                s
            })
            .collect();
        Ok(IncidenceOracle { anchors, face_sets })
    }
}

impl FeatureSpace for IncidenceOracle<'_> {
    fn distance(&self, c: usize, v: usize) -> (f64, f64) {
        let primary = if self.face_sets[c].binary_search(&v).is_ok() {
            0.0
        } else {
            1.0
        };
        let secondary = (self.anchors.centroids[c] - self.anchors.vertices[v]).norm_squared();
        (primary, secondary)
    }

    fn name(&self) -> &'static str {
        "oracle"
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyConfig {
    pub top_k: usize,
    pub pool_max: usize,
    pub verify: VerifyConfig,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        AssemblyConfig {
            top_k: 20,
            pool_max: 20,
            verify: VerifyConfig::default(),
        }
    }
}

impl AssemblyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k < 4 {
            return Err(Error::Config(format!(
                "top_k must be at least 4, got {}",
                self.top_k
            )));
        }
        if self.pool_max < 3 {
            return Err(Error::Config(format!(
                "pool_max must be at least 3, got {}",
                self.pool_max
            )));
        }
        self.verify.validate()
    }
}

fn cmp_key(a: (f64, f64), b: (f64, f64)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1))
}

/// The `k` vertices nearest to centroid `c`, ascending by distance, ties by
/// vertex index.
pub fn retrieve_topk(
    c: usize,
    anchors: &AnchorSet,
    fs: &dyn FeatureSpace,
    k: usize,
) -> Result<Vec<usize>> {
    if anchors.vertices.len() < 3 {
        return Err(Error::Degenerate(format!(
            "{} vertices cannot form a face",
            anchors.vertices.len()
        )));
    }
    let mut keyed: Vec<((f64, f64), usize)> = (0..anchors.vertices.len())
        .map(|v| (fs.distance(c, v), v))
        .collect();
    let k = k.min(keyed.len());
    let order =
        |a: &((f64, f64), usize), b: &((f64, f64), usize)| cmp_key(a.0, b.0).then(a.1.cmp(&b.1));
    if k < keyed.len() {
        keyed.select_nth_unstable_by(k, order);
        keyed.truncate(k);
    }
    keyed.sort_unstable_by(order);
    Ok(keyed.into_iter().map(|(_, v)| v).collect())
}

/// Progressive enumeration of `k`-subsets of a ranked shortlist. The pool
/// starts with the first `k` entries and grows by one up to `max_pool`; at
/// each size the subsets not tested before are yielded by ascending summed
/// (equivalently mean) distance, then by position. Items are shortlist
/// positions in ascending order.
pub struct Pcfs<'a> {
    dists: &'a [(f64, f64)],
    k: usize,
    max_pool: usize,
    pool: usize,
    pending: VecDeque<Vec<usize>>,
    seen: HashSet<Vec<usize>>,
}

impl<'a> Pcfs<'a> {
    pub fn new(dists: &'a [(f64, f64)], k: usize, pool_max: usize) -> Self {
        let max_pool = pool_max.min(dists.len());
        Pcfs {
            dists,
            k,
            max_pool,
            pool: k.saturating_sub(1),
            pending: VecDeque::new(),
            seen: HashSet::new(),
        }
    }

    /// Current pool size.
    pub fn pool_size(&self) -> usize {
        self.pool
    }

    fn grow(&mut self) {
        self.pool += 1;
        let mut fresh = Vec::new();
        let mut combo: Vec<usize> = (0..self.k).collect();
        loop {
            if !self.seen.contains(&combo) {
                fresh.push(combo.clone());
            }
            // Next combination of `k` out of `pool`, lexicographic.
            let mut i = self.k;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                if combo[i] < self.pool - self.k + i {
                    combo[i] += 1;
                    for j in i + 1..self.k {
                        combo[j] = combo[j - 1] + 1;
                    }
                    break;
                }
                if i == 0 {
                    i = usize::MAX;
                    break;
                }
            }
            if i == usize::MAX {
                break;
            }
        }
        let key = |c: &Vec<usize>| {
            c.iter().fold((0.0, 0.0), |acc, &i| {
                (acc.0 + self.dists[i].0, acc.1 + self.dists[i].1)
            })
        };
        let mut keyed: Vec<((f64, f64), Vec<usize>)> =
            fresh.into_iter().map(|c| (key(&c), c)).collect();
        keyed.sort_by(|a, b| cmp_key(a.0, b.0).then_with(|| a.1.cmp(&b.1)));
        for (_, c) in keyed {
            self.seen.insert(c.clone());
            self.pending.push_back(c);
        }
    }
}

impl Iterator for Pcfs<'_> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        loop {
            if let Some(c) = self.pending.pop_front() {
                return Some(c);
            }
            if self.k == 0 || self.pool >= self.max_pool {
                return None;
            }
            self.grow();
        }
    }
}

fn canonical_sign(v: Vec3) -> Vec3 {
    for k in 0..3 {
        if v[k] != 0.0 {
            return if v[k] > 0.0 { v } else { -v };
        }
    }
    v
}

/// Orders an unordered vertex set into a polygon cycle: polar angle about the
/// centroid in the best-fit plane, starting at the smallest vertex id, turning
/// counter-clockwise about the plane normal whose first nonzero component is
/// positive.
pub fn order_cycle(ids: &[usize], pts: &[Vec3]) -> Result<Vec<usize>> {
    if ids.len() != pts.len() || ids.len() < 3 {
        return Err(Error::Degenerate(
            "need at least 3 matching ids and points".into(),
        ));
    }
    let c = centroid_of(pts);
    let mut cov = Matrix3::zeros();
    for p in pts {
        let d = p - c;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let (l0, l1) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if !(l0 > 0.0) || l1 <= 1e-12 * l0 {
        return Err(Error::Degenerate("points are collinear".into()));
    }
    let n = canonical_sign(eig.eigenvectors.column(order[2]).into_owned());
    let u = eig.eigenvectors.column(order[0]).into_owned();
    let w = n.cross(&u);
    let mut polar: Vec<(f64, usize)> = pts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d = p - c;
            (d.dot(&w).atan2(d.dot(&u)), i)
        })
        .collect();
    polar.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for pair in polar.windows(2) {
        if pts[pair[0].1] == pts[pair[1].1] {
            return Err(Error::Degenerate("coincident points".into()));
        }
    }
    let mut cycle: Vec<usize> = polar.iter().map(|&(_, i)| i).collect();
    let start = (0..cycle.len()).min_by_key(|&k| ids[cycle[k]]).unwrap();
    cycle.rotate_left(start);
    let ordered: Vec<Vec3> = cycle.iter().map(|&i| pts[i]).collect();
    if newell_vector(&ordered).dot(&n) < 0.0 {
        cycle[1..].reverse();
    }
    Ok(cycle.into_iter().map(|i| ids[i]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    Quad,
    Tri,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledFace {
    pub centroid: usize,
    pub cycle: Vec<usize>,
    pub kind: FaceKind,
}

/// Statistics of one centroid's search, for inspection and tests.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchTrace {
    pub tested: Vec<Vec<usize>>,
}

fn try_subsets(
    c: usize,
    anchors: &AnchorSet,
    shortlist: &[usize],
    dists: &[(f64, f64)],
    k: usize,
    cfg: &AssemblyConfig,
    trace: &mut Option<&mut SearchTrace>,
) -> Option<Vec<usize>> {
    let c_gen = anchors.centroids[c];
    for subset in Pcfs::new(dists, k, cfg.pool_max) {
        let ids: Vec<usize> = subset.iter().map(|&i| shortlist[i]).collect();
        if let Some(t) = trace.as_deref_mut() {
            let mut sorted = ids.clone();
            sorted.sort_unstable();
            t.tested.push(sorted);
        }
        let pts: Vec<Vec3> = ids.iter().map(|&v| anchors.vertices[v]).collect();
        let Ok(cycle) = order_cycle(&ids, &pts) else {
            continue;
        };
        let cpts: Vec<Vec3> = cycle.iter().map(|&v| anchors.vertices[v]).collect();
        let passed = if k == 4 {
            verify_quad(
                &[cpts[0], cpts[1], cpts[2], cpts[3]],
                Some(&c_gen),
                &cfg.verify,
            )
            .passed
        } else {
            verify_tri(&[cpts[0], cpts[1], cpts[2]], Some(&c_gen), &cfg.verify).passed
        };
        if passed {
            return Some(cycle);
        }
    }
    None
}

fn assemble_face_traced(
    c: usize,
    anchors: &AnchorSet,
    fs: &dyn FeatureSpace,
    cfg: &AssemblyConfig,
    mut trace: Option<&mut SearchTrace>,
) -> Result<Option<AssembledFace>> {
    let shortlist = retrieve_topk(c, anchors, fs, cfg.top_k)?;
    let dists: Vec<(f64, f64)> = shortlist.iter().map(|&v| fs.distance(c, v)).collect();
    if let Some(cycle) = try_subsets(c, anchors, &shortlist, &dists, 4, cfg, &mut trace) {
        return Ok(Some(AssembledFace {
            centroid: c,
            cycle,
            kind: FaceKind::Quad,
        }));
    }
    Ok(
        try_subsets(c, anchors, &shortlist, &dists, 3, cfg, &mut trace).map(|cycle| {
            AssembledFace {
                centroid: c,
                cycle,
                kind: FaceKind::Tri,
            }
        }),
    )
}

/// Quad search over the PCFS enumeration, then triangle fallback. `None`
/// when no subset passes verification.
pub fn assemble_face(
    c: usize,
    anchors: &AnchorSet,
    fs: &dyn FeatureSpace,
    cfg: &AssemblyConfig,
) -> Result<Option<AssembledFace>> {
    assemble_face_traced(c, anchors, fs, cfg, None)
}

/// Like `assemble_face`, also recording every subset tested (as sorted
/// vertex ids).
pub fn assemble_face_with_trace(
    c: usize,
    anchors: &AnchorSet,
    fs: &dyn FeatureSpace,
    cfg: &AssemblyConfig,
) -> Result<(Option<AssembledFace>, SearchTrace)> {
    let mut trace = SearchTrace::default();
    let face = assemble_face_traced(c, anchors, fs, cfg, Some(&mut trace))?;
    Ok((face, trace))
}

#[derive(Debug, Clone)]
pub struct AssembledMesh {
    pub faces: Vec<AssembledFace>,
    pub unresolved: Vec<usize>,
    pub centroid_count: usize,
    pub duration: Duration,
}

impl AssembledMesh {
    /// Resolved centroids over all centroids.
    pub fn recon_rate(&self) -> f64 {
        if self.centroid_count == 0 {
            return 0.0;
        }
        self.faces.len() as f64 / self.centroid_count as f64
    }

    pub fn to_mesh(&self, anchors: &AnchorSet) -> PolyMesh {
        PolyMesh {
            vertices: anchors.vertices.clone(),
            faces: self.faces.iter().map(|f| f.cycle.clone()).collect(),
        }
    }
}

/// Assembles every centroid independently (in parallel); faces are reported
/// in centroid order.
pub fn assemble_mesh(
    anchors: &AnchorSet,
    fs: &dyn FeatureSpace,
    cfg: &AssemblyConfig,
) -> Result<AssembledMesh> {
    cfg.validate()?;
    if anchors.vertices.len() < 3 {
        return Err(Error::Degenerate(format!(
            "{} vertices cannot form a face",
            anchors.vertices.len()
        )));
    }
    if anchors.centroids.is_empty() {
        return Err(Error::Degenerate("no centroids to assemble".into()));
    }
    let start = Instant::now();
    let results: Vec<Result<Option<AssembledFace>>> = (0..anchors.centroids.len())
        .into_par_iter()
        .map(|c| assemble_face(c, anchors, fs, cfg))
        .collect();
    let mut faces = Vec::new();
    let mut unresolved = Vec::new();
    for (c, r) in results.into_iter().enumerate() {
        match r? {
            Some(f) => faces.push(f),
            None => unresolved.push(c),
        }
    }
    Ok(AssembledMesh {
        faces,
        unresolved,
        centroid_count: anchors.centroids.len(),
        duration: start.elapsed(),
    })
}

/// A thin strut quad (1 x 0.02) whose centroid sits right below a dense
/// blob of 24 points. Returns the anchors (strut corners are vertices 0..4,
/// the strut centroid is centroid 0) and the ground-truth mesh whose only
/// face is the strut.
pub fn strut_and_blob() -> (AnchorSet, PolyMesh) {
    let mut vertices = vec![
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(1.0, 0.02, 0.0),
        Vec3::new(0.0, 0.02, 0.0),
    ];
    for layer in 0..3 {
        for k in 0..8 {
            let t = std::f64::consts::TAU * k as f64 / 8.0 + 0.3 * layer as f64;
            let r = 0.02 + 0.015 * layer as f64;
            vertices.push(Vec3::new(
                0.5 + r * t.cos(),
                0.01 + r * t.sin(),
                0.03 + 0.02 * layer as f64,
            ));
        }
    }
    let gt = PolyMesh {
        vertices: vertices.clone(),
        faces: vec![vec![0, 1, 2, 3]],
    };
    let anchors = AnchorSet::from_mesh(&gt);
    (anchors, gt)
}
