//! Synthetic genus-zero test surfaces.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::mesh::{MeshError, TriangleMesh, Vec3};

/// Angular width (radians) of the Gaussian bumps of [`three_bump`].
pub const BUMP_WIDTH: f64 = 0.35;

/// Regular tetrahedron with unit edges, centred at the origin.
pub fn tetrahedron() -> TriangleMesh {
    let h = 0.5 / 2f64.sqrt();
    TriangleMesh::new(
        vec![
            Vec3::new(0.5, 0.0, -h),
            Vec3::new(-0.5, 0.0, -h),
            Vec3::new(0.0, 0.5, h),
            Vec3::new(0.0, -0.5, h),
        ],
        vec![[0, 2, 3], [1, 3, 2], [0, 3, 1], [0, 1, 2]],
    )
}

/// Icosahedron inscribed in the unit sphere.
pub fn icosahedron() -> TriangleMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let vertices = raw.iter().map(|p| Vec3::new(p[0], p[1], p[2]).normalize()).collect();
    let triangles = vec![
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
    TriangleMesh::new(vertices, triangles)
}

fn project_unit(p: Vec3) -> Vec3 {
    p.normalize()
}

/// Icosahedron refined by repeated 1-to-4 splits with radial projection;
/// `20 * 4^subdivisions` faces.
pub fn icosphere(subdivisions: u32, radius: f64) -> TriangleMesh {
    let mut mesh = icosahedron();
    for _ in 0..subdivisions {
        mesh = mesh.midpoint_subdivide(Some(&project_unit));
    }
    mesh.scaled(radius)
}

/// Class-I geodesic sphere: every icosahedron face split into `frequency^2`
/// triangles, giving `10 f^2 + 2` vertices (1002 for `f = 10`).
pub fn geodesic_sphere(frequency: usize, radius: f64) -> TriangleMesh {
    let n = frequency.max(1);
    let base = icosahedron();
    let mut vertices = base.vertices.clone();
    let mut edge_points: HashMap<(usize, usize, usize), usize> = HashMap::new();
    let mut triangles = Vec::with_capacity(20 * n * n);
    for &[a, b, c] in &base.triangles {
        let mut ids = vec![vec![usize::MAX; n + 1]; n + 1];
        for i in 0..=n {
            for j in 0..=(n - i) {
                let edge_id = |u: usize, v: usize, k: usize, vertices: &mut Vec<Vec3>, map: &mut HashMap<_, _>| {
                    let (lo, hi, s) = if u < v { (u, v, k) } else { (v, u, n - k) };
                    *map.entry((lo, hi, s)).or_insert_with(|| {
                        let t = s as f64 / n as f64;
                        vertices.push(((1.0 - t) * base.vertices[lo] + t * base.vertices[hi]).normalize());
                        vertices.len() - 1
                    })
                };
                ids[i][j] = if i == 0 && j == 0 {
                    a
                } else if i == n {
                    b
                } else if j == n {
                    c
                } else if j == 0 {
                    edge_id(a, b, i, &mut vertices, &mut edge_points)
                } else if i == 0 {
                    edge_id(a, c, j, &mut vertices, &mut edge_points)
                } else if i + j == n {
                    edge_id(b, c, j, &mut vertices, &mut edge_points)
                } else {
                    let w = ((n - i - j) as f64 * base.vertices[a]
                        + i as f64 * base.vertices[b]
                        + j as f64 * base.vertices[c])
                        / n as f64;
                    vertices.push(w.normalize());
                    vertices.len() - 1
                };
            }
        }
        for i in 0..n {
            for j in 0..(n - i) {
                triangles.push([ids[i][j], ids[i + 1][j], ids[i][j + 1]]);
                if i + j + 2 <= n {
                    triangles.push([ids[i + 1][j], ids[i + 1][j + 1], ids[i][j + 1]]);
                }
            }
        }
    }
    TriangleMesh::new(vertices, triangles).scaled(radius)
}

/// Icosphere with coordinates scaled by the semi-axes `(a, b, c)`.
pub fn ellipsoid(a: f64, b: f64, c: f64, subdivisions: u32) -> TriangleMesh {
    icosphere(subdivisions, 1.0).map_vertices(|v| Vec3::new(a * v.x, b * v.y, c * v.z))
}

fn check_outward(mesh: &TriangleMesh) -> Result<(), MeshError> {
    mesh.ensure_genus_zero()?;
    match radially_folded(mesh).first() {
        Some(t) => Err(MeshError::Invalid(format!("triangle {t} is flipped"))),
        None => Ok(()),
    }
}

/// Triangles whose normal points toward the origin, i.e. folds of a mesh
/// that is meant to be star-shaped about the origin.
pub fn radially_folded(mesh: &TriangleMesh) -> Vec<usize> {
    (0..mesh.num_triangles())
        .filter(|&t| {
            let [a, b, c] = mesh.corners(t);
            (b - a).cross(&(c - a)).dot(&(a + b + c)) <= 0.0
        })
        .collect()
}

/// Unit icosphere with Gaussian radial noise of standard deviation
/// `noise_multiple * mean edge length`. Large noise folds triangles inward
/// (see [`radially_folded`]); only combinatorially invalid or degenerate
/// results are rejected.
pub fn noisy_sphere(subdivisions: u32, noise_multiple: f64, seed: u64) -> Result<TriangleMesh, MeshError> {
    let clean = icosphere(subdivisions, 1.0);
    if noise_multiple == 0.0 {
        return Ok(clean);
    }
    let sigma = noise_multiple.abs() * clean.mean_edge_length();
    let normal = Normal::new(0.0, sigma).map_err(|e| MeshError::Invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy = TriangleMesh::new(
        clean
            .vertices
            .iter()
            .map(|v| v * (1.0 + normal.sample(&mut rng)))
            .collect(),
        clean.triangles.clone(),
    );
    noisy.ensure_genus_zero()?;
    Ok(noisy)
}

/// Direction of the height-1.2 bump after rotating it by `theta` from `+y`
/// through `-x` toward `-y`.
pub fn bump_axis(theta: f64) -> Vec3 {
    Vec3::new(-theta.sin(), theta.cos(), 0.0)
}

/// Unit sphere with bumps of peak radius 1.2 (rotating, see [`bump_axis`]),
/// 1.4 along `+x` and 1.6 along `+z`.
pub fn three_bump(theta: f64, subdivisions: u32) -> TriangleMesh {
    let bumps = [(bump_axis(theta), 1.2), (Vec3::x(), 1.4), (Vec3::z(), 1.6)];
    icosphere(subdivisions, 1.0).map_vertices(|v| {
        let d = v.normalize();
        let scale: f64 = 1.0
            + bumps
                .iter()
                .map(|(axis, h)| {
                    let angle = d.cross(axis).norm().atan2(d.dot(axis));
                    (h - 1.0) * (-(angle / BUMP_WIDTH).powi(2)).exp()
                })
                .sum::<f64>();
        d * scale
    })
}

/// Convex hull of points in general position, oriented outward. Points that
/// end up strictly inside the hull are dropped.
pub fn convex_hull(points: &[Vec3]) -> Result<TriangleMesh, MeshError> {
    if points.len() < 4 {
        return Err(MeshError::Invalid("convex hull needs at least 4 points".into()));
    }
    let orient = |f: &[usize; 3], p: &Vec3| {
        let (a, b, c) = (points[f[0]], points[f[1]], points[f[2]]);
        (b - a).cross(&(c - a)).dot(&(p - a))
    };
    // Initial tetrahedron from the first non-degenerate quadruple.
    let i0 = 0;
    let i1 = (1..points.len())
        .find(|&i| (points[i] - points[i0]).norm() > 1e-12)
        .ok_or_else(|| MeshError::Invalid("coincident points".into()))?;
    let i2 = (1..points.len())
        .find(|&i| (points[i1] - points[i0]).cross(&(points[i] - points[i0])).norm() > 1e-12)
        .ok_or_else(|| MeshError::Invalid("collinear points".into()))?;
    let i3 = (1..points.len())
        .find(|&i| orient(&[i0, i1, i2], &points[i]).abs() > 1e-12)
        .ok_or_else(|| MeshError::Invalid("coplanar points".into()))?;
    let mut faces: Vec<[usize; 3]> = if orient(&[i0, i1, i2], &points[i3]) < 0.0 {
        vec![[i0, i1, i2], [i0, i3, i1], [i1, i3, i2], [i2, i3, i0]]
    } else {
        vec![[i0, i2, i1], [i0, i1, i3], [i1, i2, i3], [i2, i0, i3]]
    };
    let scale = points.iter().map(|p| p.norm()).fold(0.0, f64::max).max(1.0);
    let eps = 1e-12 * scale * scale * scale;
    for (p, point) in points.iter().enumerate() {
        if p == i0 || p == i1 || p == i2 || p == i3 {
            continue;
        }
        let visible: Vec<bool> = faces.iter().map(|f| orient(f, point) > eps).collect();
        if !visible.iter().any(|&v| v) {
            continue;
        }
        let mut directed: HashMap<(usize, usize), bool> = HashMap::new();
        for (f, &vis) in faces.iter().zip(&visible) {
            for k in 0..3 {
                directed.insert((f[k], f[(k + 1) % 3]), vis);
            }
        }
        let mut next = Vec::with_capacity(faces.len() + 2);
        for (f, &vis) in faces.iter().zip(&visible) {
            if !vis {
                next.push(*f);
                continue;
            }
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                if directed.get(&(b, a)) == Some(&false) {
                    next.push([a, b, p]);
                }
            }
        }
        faces = next;
    }
    // Compact away unused points.
    let mut remap = vec![usize::MAX; points.len()];
    let mut vertices = Vec::new();
    for f in &mut faces {
        for v in f.iter_mut() {
            if remap[*v] == usize::MAX {
                remap[*v] = vertices.len();
                vertices.push(points[*v]);
            }
            *v = remap[*v];
        }
    }
    Ok(TriangleMesh::new(vertices, faces))
}

/// Hull of `n` seeded uniform random points on the unit sphere.
pub fn random_sphere(n: usize, seed: u64) -> Result<TriangleMesh, MeshError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let points: Vec<Vec3> = (0..n)
        .map(|_| loop {
            let v = Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng));
            if v.norm() > 1e-9 {
                break v.normalize();
            }
        })
        .collect();
    let hull = convex_hull(&points)?;
    check_outward(&hull)?;
    Ok(hull)
}
