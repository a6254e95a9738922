//! Small procedural meshes used by the CLI demos, the tests and the
//! acceptance suite.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mesh::{PolyMesh, Vec3};

/// Unit cube `[0,1]^3`, six outward-facing quads.
pub fn cube() -> PolyMesh {
    box_mesh(1.0, 1.0, 1.0)
}

/// Axis-aligned box `[0,sx]x[0,sy]x[0,sz]` as six outward-facing quads.
pub fn box_mesh(sx: f64, sy: f64, sz: f64) -> PolyMesh {
    let vertices = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 != 0 { sx } else { 0.0 },
                if i & 2 != 0 { sy } else { 0.0 },
                if i & 4 != 0 { sz } else { 0.0 },
            )
        })
        .collect();
    let faces = vec![
        vec![0, 2, 3, 1], // z = 0
        vec![4, 5, 7, 6], // z = 1
        vec![0, 1, 5, 4], // y = 0
        vec![2, 6, 7, 3], // y = 1
        vec![0, 4, 6, 2], // x = 0
        vec![1, 3, 7, 5], // x = 1
    ];
    PolyMesh { vertices, faces }
}

fn grid_vertices(w: usize, h: usize) -> Vec<Vec3> {
    let mut vertices = Vec::with_capacity((w + 1) * (h + 1));
    for j in 0..=h {
        for i in 0..=w {
            vertices.push(Vec3::new(i as f64, j as f64, 0.0));
        }
    }
    vertices
}

/// `w x h` unit quads in the z = 0 plane, counter-clockwise seen from +z.
pub fn quad_grid(w: usize, h: usize) -> PolyMesh {
    let idx = |i: usize, j: usize| j * (w + 1) + i;
    let mut faces = Vec::with_capacity(w * h);
    for j in 0..h {
        for i in 0..w {
            faces.push(vec![
                idx(i, j),
                idx(i + 1, j),
                idx(i + 1, j + 1),
                idx(i, j + 1),
            ]);
        }
    }
    PolyMesh {
        vertices: grid_vertices(w, h),
        faces,
    }
}

/// `quad_grid` with every cell split along the same diagonal.
pub fn triangulated_grid(w: usize, h: usize) -> PolyMesh {
    let idx = |i: usize, j: usize| j * (w + 1) + i;
    let mut faces = Vec::with_capacity(2 * w * h);
    for j in 0..h {
        for i in 0..w {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            faces.push(vec![a, b, c]);
            faces.push(vec![a, c, d]);
        }
    }
    PolyMesh {
        vertices: grid_vertices(w, h),
        faces,
    }
}

/// Splits every quad of `mesh` along its first diagonal; other faces are kept.
pub fn triangulate_quads(mesh: &PolyMesh) -> PolyMesh {
    let mut faces = Vec::new();
    for f in &mesh.faces {
        if f.len() == 4 {
            faces.push(vec![f[0], f[1], f[2]]);
            faces.push(vec![f[0], f[2], f[3]]);
        } else {
            faces.push(f.clone());
        }
    }
    PolyMesh {
        vertices: mesh.vertices.clone(),
        faces,
    }
}

/// Fan triangulation of every face (for sampling and ray casting).
pub fn fan_triangles(mesh: &PolyMesh) -> Vec<[Vec3; 3]> {
    let mut tris = Vec::new();
    for f in &mesh.faces {
        for k in 1..f.len() - 1 {
            tris.push([
                mesh.vertices[f[0]],
                mesh.vertices[f[k]],
                mesh.vertices[f[k + 1]],
            ]);
        }
    }
    tris
}

/// Latitude/longitude quad sphere with triangle fans at the poles, outward.
pub fn uv_sphere(radius: f64, rings: usize, segments: usize) -> PolyMesh {
    assert!(rings >= 2 && segments >= 3);
    let mut vertices = vec![Vec3::new(0.0, 0.0, radius)];
    for r in 1..rings {
        let theta = PI * r as f64 / rings as f64;
        for s in 0..segments {
            let phi = 2.0 * PI * s as f64 / segments as f64;
            vertices.push(
                radius
                    * Vec3::new(
                        theta.sin() * phi.cos(),
                        theta.sin() * phi.sin(),
                        theta.cos(),
                    ),
            );
        }
    }
    vertices.push(Vec3::new(0.0, 0.0, -radius));
    let south = vertices.len() - 1;
    let ring = |r: usize, s: usize| 1 + (r - 1) * segments + (s % segments);
    let mut faces = Vec::new();
    for s in 0..segments {
        faces.push(vec![0, ring(1, s), ring(1, s + 1)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            faces.push(vec![
                ring(r, s),
                ring(r + 1, s),
                ring(r + 1, s + 1),
                ring(r, s + 1),
            ]);
        }
    }
    for s in 0..segments {
        faces.push(vec![south, ring(rings - 1, s + 1), ring(rings - 1, s)]);
    }
    PolyMesh { vertices, faces }
}

/// Torus around the z axis as an outward quad mesh.
pub fn torus(major: f64, minor: f64, around: usize, tube: usize) -> PolyMesh {
    let mut vertices = Vec::with_capacity(around * tube);
    for i in 0..around {
        let u = 2.0 * PI * i as f64 / around as f64;
        for j in 0..tube {
            let v = 2.0 * PI * j as f64 / tube as f64;
            let r = major + minor * v.cos();
            vertices.push(Vec3::new(r * u.cos(), r * u.sin(), minor * v.sin()));
        }
    }
    let idx = |i: usize, j: usize| (i % around) * tube + (j % tube);
    let mut faces = Vec::new();
    for i in 0..around {
        for j in 0..tube {
            faces.push(vec![
                idx(i, j),
                idx(i + 1, j),
                idx(i + 1, j + 1),
                idx(i, j + 1),
            ]);
        }
    }
    PolyMesh { vertices, faces }
}

/// Open cylinder wall along z: `around` cells in the circumference, `rows`
/// cells along the axis of length `height`.
pub fn cylinder(radius: f64, height: f64, around: usize, rows: usize) -> PolyMesh {
    let mut vertices = Vec::new();
    for r in 0..=rows {
        let z = height * r as f64 / rows as f64;
        for s in 0..around {
            let phi = 2.0 * PI * s as f64 / around as f64;
            vertices.push(Vec3::new(radius * phi.cos(), radius * phi.sin(), z));
        }
    }
    let idx = |r: usize, s: usize| r * around + (s % around);
    let mut faces = Vec::new();
    for r in 0..rows {
        for s in 0..around {
            faces.push(vec![
                idx(r, s),
                idx(r, s + 1),
                idx(r + 1, s + 1),
                idx(r + 1, s),
            ]);
        }
    }
    PolyMesh { vertices, faces }
}

/// Quad grid over `[0,w]x[0,h]` bent upward along the line `x = w/2` by
/// `fold_deg` degrees.
pub fn folded_sheet(w: usize, h: usize, fold_deg: f64) -> PolyMesh {
    let mut m = quad_grid(w, h);
    let hinge = w as f64 / 2.0;
    let (s, c) = fold_deg.to_radians().sin_cos();
    for p in &mut m.vertices {
        if p.x > hinge {
            let d = p.x - hinge;
            p.x = hinge + d * c;
            p.z = d * s;
        }
    }
    m
}

/// Copy of `mesh` with every vertex displaced by a uniform random offset in
/// `[-amp, amp]^3`.
pub fn jitter(mesh: &PolyMesh, amp: f64, seed: u64) -> PolyMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = mesh.clone();
    for p in &mut m.vertices {
        *p += Vec3::new(
            rng.gen_range(-amp..=amp),
            rng.gen_range(-amp..=amp),
            rng.gen_range(-amp..=amp),
        );
    }
    m
}

/// Sphere whose radius is modulated by a few low-frequency lobes: regions of
/// positive and negative curvature on one closed surface.
pub fn lumpy_blob(rings: usize, segments: usize) -> PolyMesh {
    let mut m = uv_sphere(1.0, rings, segments);
    for p in &mut m.vertices {
        let n = p.normalize();
        let lobe = 0.25 * (3.0 * n.x).sin() * (2.0 * n.y).cos() + 0.15 * (4.0 * n.z).cos();
        *p = n * (1.0 + lobe);
    }
    m
}
