//! Anchor sets: mesh vertices plus face centroids, the shared input of the
//! tokenizer and of face assembly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{face_centroid, PolyMesh, Vec3};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnchorSet {
    pub vertices: Vec<Vec3>,
    pub centroids: Vec<Vec3>,
}

impl AnchorSet {
    pub fn new(vertices: Vec<Vec3>, centroids: Vec<Vec3>) -> Self {
        AnchorSet {
            vertices,
            centroids,
        }
    }

    /// Mesh vertices followed by one centroid per face, in face order.
    pub fn from_mesh(mesh: &PolyMesh) -> Self {
        AnchorSet {
            vertices: mesh.vertices.clone(),
            centroids: (0..mesh.faces.len())
                .map(|f| face_centroid(mesh, f))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.vertices.len() + self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty() && self.centroids.is_empty()
    }

    /// All coordinates finite and inside `[-1, 1]`.
    pub fn check_normalized(&self) -> Result<()> {
        for (kind, list) in [("vertex", &self.vertices), ("centroid", &self.centroids)] {
            for (i, p) in list.iter().enumerate() {
                if p.iter().any(|c| !(-1.0..=1.0).contains(c)) {
                    return Err(Error::Range(format!(
                        "{kind} {i} = ({}, {}, {}) lies outside [-1, 1]^3",
                        p.x, p.y, p.z
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("anchors {} {}\n", self.vertices.len(), self.centroids.len());
        for p in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", p.x, p.y, p.z);
        }
        for p in &self.centroids {
            let _ = writeln!(out, "c {} {} {}", p.x, p.y, p.z);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut header: Option<(usize, usize)> = None;
        let mut set = AnchorSet::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let parts: Vec<&str> = content.split_whitespace().collect();
            let perr = |msg: String| Error::Parse { line, msg };
            match parts[0] {
                "anchors" => {
                    if header.is_some() || parts.len() != 3 {
                        return Err(perr("expected a single `anchors <nv> <nc>` header".into()));
                    }
                    let nv = parts[1]
                        .parse()
                        .map_err(|_| perr("bad vertex count".into()))?;
                    let nc = parts[2]
                        .parse()
                        .map_err(|_| perr("bad centroid count".into()))?;
                    header = Some((nv, nc));
                }
                kind @ ("v" | "c") => {
                    if header.is_none() {
                        return Err(perr("point before `anchors` header".into()));
                    }
                    if parts.len() != 4 {
                        return Err(perr("point needs three coordinates".into()));
                    }
                    let mut xyz = [0.0; 3];
                    for (slot, tok) in xyz.iter_mut().zip(&parts[1..]) {
                        *slot = tok
                            .parse()
                            .map_err(|_| perr(format!("bad coordinate `{tok}`")))?;
                    }
                    let p = Vec3::new(xyz[0], xyz[1], xyz[2]);
                    if kind == "v" {
                        if !set.centroids.is_empty() {
                            return Err(perr("vertex listed after centroids".into()));
                        }
                        set.vertices.push(p);
                    } else {
                        set.centroids.push(p);
                    }
                }
                other => return Err(perr(format!("unknown record `{other}`"))),
            }
        }
        let (nv, nc) = header.ok_or_else(|| Error::Parse {
            line: 1,
            msg: "missing `anchors` header".into(),
        })?;
        if nv != set.vertices.len() || nc != set.centroids.len() {
            return Err(Error::Structure(format!(
                "header announces {nv} vertices and {nc} centroids, found {} and {}",
                set.vertices.len(),
                set.centroids.len()
            )));
        }
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
