//! Geometric validity checks shared by tri-to-quad prefiltering and face
//! assembly: interior angle range, convexity, diagonal fold (dihedral) and
//! centroid tolerance.
//!
//! All thresholds are inclusive. Angle comparisons allow `ANGLE_SLACK_DEG` of
//! floating-point slack so that constructions landing exactly on a threshold
//! (a 45° fold, a 140° corner) are decided by the inequality and not by the
//! last bit of an `acos`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mesh::{centroid_of, newell_vector, Vec3};

pub const ANGLE_SLACK_DEG: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub theta_min: f64,
    pub theta_max: f64,
    pub dihedral_max: f64,
    pub tau_quad: f64,
    pub tau_tri: f64,
    pub enable_convexity: bool,
    pub enable_dihedral: bool,
    pub enable_centroid: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            theta_min: 30.0,
            theta_max: 140.0,
            dihedral_max: 45.0,
            tau_quad: 2e-3,
            tau_tri: 5e-3,
            enable_convexity: true,
            enable_dihedral: true,
            enable_centroid: true,
        }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.theta_min && self.theta_min < self.theta_max && self.theta_max < 360.0) {
            return Err(Error::Config(format!(
                "need 0 < theta_min < theta_max < 360, got [{}, {}]",
                self.theta_min, self.theta_max
            )));
        }
        if !(self.dihedral_max > 0.0 && self.dihedral_max <= 180.0) {
            return Err(Error::Config(format!(
                "dihedral_max must lie in (0, 180], got {}",
                self.dihedral_max
            )));
        }
        if !(self.tau_quad > 0.0 && self.tau_tri > 0.0) {
            return Err(Error::Config("centroid tolerances must be positive".into()));
        }
        Ok(())
    }

    /// Applies one `key = value` setting. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = || -> Result<f64> {
            value
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("{key}: `{value}` is not a number")))
        };
        let flag = || -> Result<bool> {
            match value {
                "true" | "1" | "yes" | "on" => Ok(true),
                "false" | "0" | "no" | "off" => Ok(false),
                _ => Err(Error::Config(format!("{key}: `{value}` is not a boolean"))),
            }
        };
        match key {
            "theta_min" => self.theta_min = num()?,
            "theta_max" => self.theta_max = num()?,
            "dihedral_max" => self.dihedral_max = num()?,
            "tau_quad" => self.tau_quad = num()?,
            "tau_tri" => self.tau_tri = num()?,
            "enable_convexity" => self.enable_convexity = flag()?,
            "enable_dihedral" => self.enable_dihedral = flag()?,
            "enable_centroid" => self.enable_centroid = flag()?,
            _ => return Err(Error::Config(format!("unknown verify key `{key}`"))),
        }
        Ok(())
    }

    /// Flat `key = value` text, one setting per line.
    pub fn to_kv_string(&self) -> String {
        format!(
            "theta_min = {}\ntheta_max = {}\ndihedral_max = {}\ntau_quad = {}\ntau_tri = {}\n\
             enable_convexity = {}\nenable_dihedral = {}\nenable_centroid = {}\n",
            self.theta_min,
            self.theta_max,
            self.dihedral_max,
            self.tau_quad,
            self.tau_tri,
            self.enable_convexity,
            self.enable_dihedral,
            self.enable_centroid
        )
    }
}

impl FromStr for VerifyConfig {
    type Err = Error;

    /// Parses flat `key = value` (or `key value`) lines on top of the defaults.
    fn from_str(s: &str) -> Result<Self> {
        let mut cfg = VerifyConfig::default();
        for line in s.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = split_kv(line)
                .ok_or_else(|| Error::Config(format!("cannot parse config line `{line}`")))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub(crate) fn split_kv(line: &str) -> Option<(&str, &str)> {
    if let Some((k, v)) = line.split_once('=') {
        return Some((k.trim(), v.trim()));
    }
    let mut it = line.splitn(2, char::is_whitespace);
    let k = it.next()?.trim();
    let v = it.next()?.trim();
    Some((k, v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Check {
    Angle,
    Convexity,
    Dihedral,
    Centroid,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Check::Angle => "angle",
            Check::Convexity => "convexity",
            Check::Dihedral => "dihedral",
            Check::Centroid => "centroid",
        })
    }
}

/// Outcome of `verify_quad` / `verify_tri`, with every measured value.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub passed: bool,
    pub failed: Vec<Check>,
    /// Interior angles in degrees (empty if the cycle was degenerate).
    pub angles: Vec<f64>,
    /// Largest diagonal fold angle in degrees (quads with the check enabled).
    pub max_fold: Option<f64>,
    pub centroid_distance: Option<f64>,
    pub degenerate: bool,
}

impl VerifyReport {
    fn finish(mut self) -> Self {
        self.failed.sort();
        self.failed.dedup();
        self.passed = self.failed.is_empty();
        self
    }
}

fn corner_angle(prev: Vec3, at: Vec3, next: Vec3) -> Option<(f64, Vec3)> {
    let a = next - at;
    let b = prev - at;
    let (la, lb) = (a.norm(), b.norm());
    if !(la > 0.0 && lb > 0.0) {
        return None;
    }
    let cos = (a.dot(&b) / (la * lb)).clamp(-1.0, 1.0);
    Some((cos.acos().to_degrees(), a.cross(&b)))
}

/// Interior angles of a polygon cycle in degrees, in `(0, 360)`.
///
/// Each angle is measured between the raw 3D edge vectors at the corner;
/// a corner whose turn opposes the cycle's Newell normal is reflex and is
/// reported as `360 - angle`.
pub fn polygon_angles(cycle: &[Vec3]) -> Result<Vec<f64>> {
    let n = cycle.len();
    if n < 3 {
        return Err(Error::Degenerate("polygon needs at least 3 corners".into()));
    }
    let normal = newell_vector(cycle);
    let oriented = normal.norm() > 0.0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (deg, cross) = corner_angle(cycle[(i + n - 1) % n], cycle[i], cycle[(i + 1) % n])
            .ok_or_else(|| Error::Degenerate(format!("coincident vertices at corner {i}")))?;
        if oriented && n > 3 && cross.dot(&normal) < 0.0 {
            out.push(360.0 - deg);
        } else {
            out.push(deg);
        }
    }
    Ok(out)
}

pub fn interior_angles(quad: &[Vec3; 4]) -> Result<[f64; 4]> {
    let a = polygon_angles(quad)?;
    Ok([a[0], a[1], a[2], a[3]])
}

pub fn triangle_angles(tri: &[Vec3; 3]) -> Result<[f64; 3]> {
    let a = polygon_angles(tri)?;
    Ok([a[0], a[1], a[2]])
}

pub fn check_angle_range(angles: &[f64], cfg: &VerifyConfig) -> bool {
    angles
        .iter()
        .all(|&a| a >= cfg.theta_min - ANGLE_SLACK_DEG && a <= cfg.theta_max + ANGLE_SLACK_DEG)
}

/// Successive edge cross products projected on the Newell normal must all be
/// strictly positive or all strictly negative. Degenerate normals fail.
pub fn check_convexity(quad: &[Vec3; 4]) -> bool {
    let normal = newell_vector(quad);
    if !(normal.norm() > 0.0) {
        return false;
    }
    let mut pos = 0;
    let mut neg = 0;
    for i in 0..4 {
        let e_in = quad[i] - quad[(i + 3) % 4];
        let e_out = quad[(i + 1) % 4] - quad[i];
        let s = e_in.cross(&e_out).dot(&normal);
        if s > 0.0 {
            pos += 1;
        } else if s < 0.0 {
            neg += 1;
        }
    }
    pos == 4 || neg == 4
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DihedralResult {
    pub passed: bool,
    /// Fold angles in degrees for the v0-v2 and v1-v3 splits.
    pub folds: Option<[f64; 2]>,
    pub degenerate: bool,
}

impl DihedralResult {
    pub fn max_fold(&self) -> Option<f64> {
        self.folds.map(|[a, b]| a.max(b))
    }
}

fn fold_angle(a: Vec3, b: Vec3, c: Vec3, d: Vec3) -> Option<f64> {
    // Triangles (a, b, c) and (a, c, d) share the diagonal a-c.
    let n1 = (b - a).cross(&(c - a));
    let n2 = (c - a).cross(&(d - a));
    let (l1, l2) = (n1.norm(), n2.norm());
    if !(l1 > 0.0 && l2 > 0.0) {
        return None;
    }
    Some(
        (n1.dot(&n2) / (l1 * l2))
            .clamp(-1.0, 1.0)
            .acos()
            .to_degrees(),
    )
}

/// Fold angle (angle between the two triangle normals, 0 = planar) along
/// both diagonals; passes when the larger one is at most `dihedral_max`.
pub fn check_dihedral(quad: &[Vec3; 4], cfg: &VerifyConfig) -> DihedralResult {
    let f02 = fold_angle(quad[0], quad[1], quad[2], quad[3]);
    let f13 = fold_angle(quad[1], quad[2], quad[3], quad[0]);
    match (f02, f13) {
        (Some(a), Some(b)) => DihedralResult {
            passed: a.max(b) <= cfg.dihedral_max + ANGLE_SLACK_DEG,
            folds: Some([a, b]),
            degenerate: false,
        },
        _ => DihedralResult {
            passed: false,
            folds: None,
            degenerate: true,
        },
    }
}

/// Distance between the cycle's arithmetic centroid and `c_gen`, compared
/// against `tau_quad` (4 points) or `tau_tri` (otherwise).
pub fn check_centroid_tolerance(cycle: &[Vec3], c_gen: &Vec3, cfg: &VerifyConfig) -> (bool, f64) {
    let dist = (centroid_of(cycle) - c_gen).norm();
    let tau = if cycle.len() == 4 {
        cfg.tau_quad
    } else {
        cfg.tau_tri
    };
    (dist <= tau, dist)
}

/// Runs every enabled check (angle, convexity, dihedral, then centroid when
/// `c_gen` is given) without short-circuiting.
pub fn verify_quad(quad: &[Vec3; 4], c_gen: Option<&Vec3>, cfg: &VerifyConfig) -> VerifyReport {
    let mut report = VerifyReport {
        passed: false,
        failed: Vec::new(),
        angles: Vec::new(),
        max_fold: None,
        centroid_distance: None,
        degenerate: false,
    };
    match interior_angles(quad) {
        Ok(angles) => {
            if !check_angle_range(&angles, cfg) {
                report.failed.push(Check::Angle);
            }
            report.angles = angles.to_vec();
        }
        Err(_) => {
            report.degenerate = true;
            report.failed.push(Check::Angle);
        }
    }
    if cfg.enable_convexity && !check_convexity(quad) {
        report.failed.push(Check::Convexity);
    }
    if cfg.enable_dihedral {
        let d = check_dihedral(quad, cfg);
        report.max_fold = d.max_fold();
        report.degenerate |= d.degenerate;
        if !d.passed {
            report.failed.push(Check::Dihedral);
        }
    }
    if let (true, Some(c)) = (cfg.enable_centroid, c_gen) {
        let (ok, dist) = check_centroid_tolerance(quad, c, cfg);
        report.centroid_distance = Some(dist);
        if !ok {
            report.failed.push(Check::Centroid);
        }
    }
    report.finish()
}

/// Triangles get the angle range and the centroid tolerance only.
pub fn verify_tri(tri: &[Vec3; 3], c_gen: Option<&Vec3>, cfg: &VerifyConfig) -> VerifyReport {
    let mut report = VerifyReport {
        passed: false,
        failed: Vec::new(),
        angles: Vec::new(),
        max_fold: None,
        centroid_distance: None,
        degenerate: false,
    };
    match triangle_angles(tri) {
        Ok(angles) if (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).norm() > 0.0 => {
            if !check_angle_range(&angles, cfg) {
                report.failed.push(Check::Angle);
            }
            report.angles = angles.to_vec();
        }
        _ => {
            report.degenerate = true;
            report.failed.push(Check::Angle);
        }
    }
    if let (true, Some(c)) = (cfg.enable_centroid, c_gen) {
        let (ok, dist) = check_centroid_tolerance(tri, c, cfg);
        report.centroid_distance = Some(dist);
        if !ok {
            report.failed.push(Check::Centroid);
        }
    }
    report.finish()
}
