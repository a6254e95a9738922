//! Forward values of the triplet link loss with Top-K hard-negative mining,
//! its k and margin schedules, and farthest-point sampling for negative
//! pools.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::Vec3;

/// `||u - v||^2`.
pub fn sq_dist(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    Ok(u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// `d(A, P) - d(A, N)`; larger means a harder negative.
pub fn violation(d_ap: f64, d_an: f64) -> f64 {
    d_ap - d_an
}

/// Indices of the `min(k, len)` largest violations, ties by ascending index.
pub fn topk_hard_negatives(d_ap: f64, d_an: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..d_an.len()).collect();
    idx.sort_by(|&a, &b| {
        violation(d_ap, d_an[b])
            .total_cmp(&violation(d_ap, d_an[a]))
            .then(a.cmp(&b))
    });
    idx.truncate(k.min(d_an.len()));
    idx
}

fn hinge(d_ap: f64, d_an: f64, margin: f64) -> f64 {
    (d_ap - d_an + margin).max(0.0)
}

/// One anchor with its positive and its negative pool.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletGroup {
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingBatch {
    pub dim: usize,
    pub groups: Vec<TripletGroup>,
}

impl EmbeddingBatch {
    pub fn new(dim: usize, groups: Vec<TripletGroup>) -> Result<Self> {
        let b = EmbeddingBatch { dim, groups };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for g in &self.groups {
            for v in std::iter::once(&g.anchor)
                .chain(std::iter::once(&g.positive))
                .chain(&g.negatives)
            {
                if v.len() != self.dim {
                    return Err(Error::DimensionMismatch {
                        left: self.dim,
                        right: v.len(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Text format: `batch <M> <dim>`, then per anchor a `group <n_neg>` line
    /// followed by the anchor row, the positive row and `n_neg` negative rows.
    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        let last_line = text.lines().count().max(1);
        let mut cursor = 0usize;
        let mut next = |what: &str| -> Result<(usize, &str)> {
            let item = lines.get(cursor).copied().ok_or_else(|| Error::Parse {
                line: last_line,
                msg: format!("unexpected end of file, expected {what}"),
            })?;
            cursor += 1;
            Ok(item)
        };
        let (hl, header) = next("`batch <M> <dim>` header")?;
        let h: Vec<&str> = header.split_whitespace().collect();
        let herr = || Error::Parse {
            line: hl,
            msg: "expected `batch <M> <dim>`".into(),
        };
        if h.len() != 3 || h[0] != "batch" {
            return Err(herr());
        }
        let m: usize = h[1].parse().map_err(|_| herr())?;
        let dim: usize = h[2].parse().map_err(|_| herr())?;
        let parse_row = |(ln, l): (usize, &str)| -> Result<Vec<f64>> {
            let vals = l
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>().map_err(|_| Error::Parse {
                        line: ln,
                        msg: format!("bad number `{t}`"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: vals.len(),
                });
            }
            Ok(vals)
        };
        let mut groups = Vec::with_capacity(m);
        for _ in 0..m {
            let (gl, g) = next("`group <num_negatives>` line")?;
            let parts: Vec<&str> = g.split_whitespace().collect();
            let gerr = || Error::Parse {
                line: gl,
                msg: "expected `group <num_negatives>`".into(),
            };
            if parts.len() != 2 || parts[0] != "group" {
                return Err(gerr());
            }
            let n_neg: usize = parts[1].parse().map_err(|_| gerr())?;
            let anchor = parse_row(next("anchor row")?)?;
            let positive = parse_row(next("positive row")?)?;
            let negatives = (0..n_neg)
                .map(|_| parse_row(next("negative row")?))
                .collect::<Result<_>>()?;
            groups.push(TripletGroup {
                anchor,
                positive,
                negatives,
            });
        }
        EmbeddingBatch::new(dim, groups)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let row = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
        let mut out = format!("batch {} {}\n", self.groups.len(), self.dim);
        for g in &self.groups {
            out += &format!(
                "group {}\n{}\n{}\n",
                g.negatives.len(),
                row(&g.anchor),
                row(&g.positive)
            );
            for n in &g.negatives {
                out += &row(n);
                out.push('\n');
            }
        }
        out
    }
}

/// Per-anchor mean hinge over its Top-k hard negatives; `None` for an anchor
/// without negatives.
pub fn anchor_loss(d_ap: f64, d_an: &[f64], k: usize, margin: f64) -> Option<f64> {
    let hard = topk_hard_negatives(d_ap, d_an, k);
    if hard.is_empty() {
        return None;
    }
    let sum: f64 = hard.iter().map(|&i| hinge(d_ap, d_an[i], margin)).sum();
    Some(sum / hard.len() as f64)
}

/// Precomputed distances of one anchor: `d(A, P)` and `d(A, N_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorDistances {
    pub d_ap: f64,
    pub d_an: Vec<f64>,
}

pub fn batch_distances(batch: &EmbeddingBatch) -> Result<Vec<AnchorDistances>> {
    batch
        .groups
        .iter()
        .map(|g| {
            Ok(AnchorDistances {
                d_ap: sq_dist(&g.anchor, &g.positive)?,
                d_an: g
                    .negatives
                    .iter()
                    .map(|n| sq_dist(&g.anchor, n))
                    .collect::<Result<_>>()?,
            })
        })
        .collect()
}

/// Mean over anchors (those with at least one negative) of the mean hinge
/// `max(0, d(A,P) - d(A,N) + m)` over the Top-k hard negatives. Summation
/// runs in ascending anchor order.
pub fn triplet_loss_from_distances(
    dists: &[AnchorDistances],
    k: usize,
    margin: f64,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if !(margin > 0.0) {
        return Err(Error::Config(format!(
            "margin must be positive, got {margin}"
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for d in dists {
        if let Some(l) = anchor_loss(d.d_ap, &d.d_an, k, margin) {
            sum += l;
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

pub fn triplet_loss(batch: &EmbeddingBatch, k: usize, margin: f64) -> Result<f64> {
    triplet_loss_from_distances(&batch_distances(batch)?, k, margin)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiningSchedule {
    pub k_min: usize,
    pub k_max: usize,
    /// Growth of k per epoch.
    pub alpha: f64,
    pub margin_start: f64,
    pub margin_end: f64,
    pub total_epochs: usize,
}

impl MiningSchedule {
    /// Defaults with `alpha` chosen so that k reaches `k_max` at 60% of
    /// `total_epochs`.
    pub fn with_epochs(total_epochs: usize) -> Self {
        let (k_min, k_max) = (20, 50);
        MiningSchedule {
            k_min,
            k_max,
            alpha: (k_max - k_min) as f64 / (0.6 * total_epochs.max(1) as f64),
            margin_start: 0.2,
            margin_end: 0.3,
            total_epochs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_min > self.k_max || self.k_min == 0 {
            return Err(Error::Config(format!(
                "need 1 <= k_min <= k_max, got {} and {}",
                self.k_min, self.k_max
            )));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::Config("alpha must be non-negative".into()));
        }
        for m in [self.margin_start, self.margin_end] {
            if !(m > 0.0 && m < 1.0) {
                return Err(Error::Config(format!("margin {m} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

impl Default for MiningSchedule {
    fn default() -> Self {
        Self::with_epochs(100)
    }
}

/// `min(k_max, k_min + floor(alpha * t))`.
pub fn k_schedule(t: usize, s: &MiningSchedule) -> usize {
    let growth = (s.alpha * t as f64).floor();
    let k = s.k_min as f64 + growth;
    if k >= s.k_max as f64 {
        s.k_max
    } else {
        k as usize
    }
}

/// Cosine ramp from `margin_start` at t = 0 to `margin_end` at
/// `total_epochs`, clamped beyond.
pub fn margin_schedule(t: f64, s: &MiningSchedule) -> f64 {
    if s.total_epochs == 0 || t >= s.total_epochs as f64 {
        return s.margin_end;
    }
    let t = t.max(0.0);
    let ramp = (1.0 - (std::f64::consts::PI * t / s.total_epochs as f64).cos()) * 0.5;
    s.margin_start + (s.margin_end - s.margin_start) * ramp
}

/// Farthest-point sampling starting at `seed_index`; ties go to the lowest
/// index. Asking for more points than exist returns all of them.
pub fn fps_sample(points: &[Vec3], n: usize, seed_index: usize) -> Result<Vec<usize>> {
    if points.is_empty() || n == 0 {
        return Ok(Vec::new());
    }
    if seed_index >= points.len() {
        return Err(Error::Range(format!(
            "seed index {seed_index} outside {} points",
            points.len()
        )));
    }
    let n = n.min(points.len());
    let mut selected = vec![seed_index];
    let mut taken = vec![false; points.len()];
    taken[seed_index] = true;
    let mut min_d: Vec<f64> = points
        .iter()
        .map(|p| (p - points[seed_index]).norm_squared())
        .collect();
    while selected.len() < n {
        let mut best = usize::MAX;
        for i in 0..points.len() {
            if !taken[i] && (best == usize::MAX || min_d[i] > min_d[best]) {
                best = i;
            }
        }
        taken[best] = true;
        selected.push(best);
        let pb = points[best];
        for (i, d) in min_d.iter_mut().enumerate() {
            let nd = (points[i] - pb).norm_squared();
            if nd < *d {
                *d = nd;
            }
        }
    }
    Ok(selected)
}
