//! Unit-sphere geometry: stereographic coordinates, point location in a
//! spherical triangulation, and barycentric transfer back to a surface.

use num_complex::Complex64;
use thiserror::Error;

use crate::mesh::{TriangleMesh, Vec3};

/// Angular slack (radians) for triangle containment before falling back to
/// the nearest triangle.
pub const CONTAINMENT_TOLERANCE: f64 = 1e-9;

/// Coordinates this close to zero are treated as exact ties on an edge or vertex.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SphereError {
    #[error("cannot normalise a zero vector")]
    ZeroVector,
    #[error("spherical triangle {0} is flipped or degenerate")]
    FlippedTriangle(usize),
    #[error("spherical mesh has no triangles")]
    Empty,
}

/// A point on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePoint(Vec3);

impl SpherePoint {
    pub fn new(v: Vec3) -> Result<Self, SphereError> {
        let n = v.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(SphereError::ZeroVector);
        }
        Ok(Self(v / n))
    }

    /// Wraps a vector the caller guarantees to be of unit length.
    pub fn from_unit(v: Vec3) -> Self {
        Self(v)
    }

    pub fn north() -> Self {
        Self(Vec3::new(0.0, 0.0, 1.0))
    }

    pub fn south() -> Self {
        Self(Vec3::new(0.0, 0.0, -1.0))
    }

    pub fn vec(&self) -> &Vec3 {
        &self.0
    }

    pub fn into_vec(self) -> Vec3 {
        self.0
    }

    pub fn angle_to(&self, other: &SpherePoint) -> f64 {
        self.0.cross(&other.0).norm().atan2(self.0.dot(&other.0))
    }
}

/// A point of the extended complex plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtComplex {
    Finite(Complex64),
    Infinity,
}

impl ExtComplex {
    pub fn finite(re: f64, im: f64) -> Self {
        Self::Finite(Complex64::new(re, im))
    }

    pub fn as_finite(&self) -> Option<Complex64> {
        match self {
            Self::Finite(z) => Some(*z),
            Self::Infinity => None,
        }
    }
}

/// Projection from the north pole onto the equatorial plane: the south pole
/// maps to 0 and the north pole to infinity.
pub fn stereographic_project(p: &SpherePoint) -> ExtComplex {
    let v = p.vec();
    let denom = 1.0 - v.z;
    if denom <= 0.0 {
        return ExtComplex::Infinity;
    }
    if v.z > 0.0 {
        // (x + iy)/(1 - z) = (1 + z)/(x - iy), better conditioned near the north pole.
        let w = Complex64::new(v.x, -v.y);
        if w.norm_sqr() == 0.0 {
            return ExtComplex::Infinity;
        }
        return ExtComplex::Finite(Complex64::new(1.0 + v.z, 0.0) / w);
    }
    ExtComplex::Finite(Complex64::new(v.x / denom, v.y / denom))
}

pub fn inverse_stereographic(z: &ExtComplex) -> SpherePoint {
    match z {
        ExtComplex::Infinity => SpherePoint::north(),
        ExtComplex::Finite(z) => from_homogeneous(*z, Complex64::new(1.0, 0.0)),
    }
}

/// Homogeneous stereographic coordinates `(u, v)` with `z = u / v`, chosen to
/// be well conditioned everywhere on the sphere.
pub(crate) fn to_homogeneous(p: &Vec3) -> (Complex64, Complex64) {
    if p.z <= 0.0 {
        (Complex64::new(p.x, p.y), Complex64::new(1.0 - p.z, 0.0))
    } else {
        (Complex64::new(1.0 + p.z, 0.0), Complex64::new(p.x, -p.y))
    }
}

pub(crate) fn from_homogeneous(u: Complex64, v: Complex64) -> SpherePoint {
    let uu = u.norm_sqr();
    let vv = v.norm_sqr();
    let s = uu + vv;
    let w = u * v.conj();
    SpherePoint(Vec3::new(2.0 * w.re / s, 2.0 * w.im / s, (uu - vv) / s))
}

/// Round-metric area density in stereographic coordinates, `4 / (1 + |z|^2)^2`.
pub fn spherical_area_element_weight(z: Complex64) -> f64 {
    let d = 1.0 + z.norm_sqr();
    4.0 / (d * d)
}

/// Position inside a triangle of some mesh.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BarycentricLocation {
    pub triangle_id: usize,
    pub coords: [f64; 3],
}

/// Outcome of a point-location query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Located {
    pub location: BarycentricLocation,
    /// Set when no triangle contained the query within tolerance and the
    /// nearest triangle was used instead.
    pub fallback: bool,
}

/// Unnormalised chord-plane barycentric weights of `q` in triangle `(a, b, c)`:
/// triple products proportional to the coordinates of the ray/plane hit.
#[inline]
pub fn chord_weights(a: &Vec3, b: &Vec3, c: &Vec3, q: &Vec3) -> [f64; 3] {
    [q.dot(&b.cross(c)), a.dot(&q.cross(c)), a.dot(&b.cross(q))]
}

/// Barycentric coordinates of the intersection of the ray through `q` with
/// the plane of the chord triangle `(a, b, c)`, before any clamping.
pub fn chord_barycentric(a: &Vec3, b: &Vec3, c: &Vec3, q: &Vec3) -> [f64; 3] {
    let w = chord_weights(a, b, c, q);
    let s = w[0] + w[1] + w[2];
    [w[0] / s, w[1] / s, w[2] / s]
}

fn clamp_normalize(mut c: [f64; 3]) -> [f64; 3] {
    for x in &mut c {
        *x = x.max(0.0);
    }
    let s: f64 = c.iter().sum();
    if s > 0.0 {
        for x in &mut c {
            *x /= s;
        }
    } else {
        c = [1.0 / 3.0; 3];
    }
    c
}

/// Point locator over a spherical triangulation.
///
/// Queries start from a cube-map hint grid and walk across edges toward the
/// query, so the expected cost is constant for reasonably uniform meshes.
#[derive(Debug, Clone)]
pub struct SphereLocator {
    points: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    /// `neighbors[t][k]` is the triangle across the edge opposite corner `k`.
    neighbors: Vec<[usize; 3]>,
    /// Reciprocal lengths of the edge normals, so weights become angular sines.
    inv_edge_norm: Vec<[f64; 3]>,
    vertex_triangles: Vec<Vec<usize>>,
    grid_res: usize,
    grid: Vec<usize>,
}

impl SphereLocator {
    /// Builds a locator; every triangle must be positively oriented,
    /// `det(a, b, c) > 0` for corners seen counterclockwise from outside.
    pub fn build(points: &[SpherePoint], triangles: &[[usize; 3]]) -> Result<Self, SphereError> {
        if triangles.is_empty() {
            return Err(SphereError::Empty);
        }
        let pts: Vec<Vec3> = points.iter().map(|p| *p.vec()).collect();
        let mut inv_edge_norm = Vec::with_capacity(triangles.len());
        for (t, &[a, b, c]) in triangles.iter().enumerate() {
            let (pa, pb, pc) = (pts[a], pts[b], pts[c]);
            if !(pa.dot(&pb.cross(&pc)) > 0.0) {
                return Err(SphereError::FlippedTriangle(t));
            }
            inv_edge_norm.push([
                1.0 / pb.cross(&pc).norm(),
                1.0 / pc.cross(&pa).norm(),
                1.0 / pa.cross(&pb).norm(),
            ]);
        }
        let mesh = TriangleMesh::new(pts.clone(), triangles.to_vec());
        let vertex_triangles = mesh.vertex_triangles();
        let mut neighbors = vec![[usize::MAX; 3]; triangles.len()];
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
                neighbors[t][k] = vertex_triangles[a]
                    .iter()
                    .copied()
                    .find(|&s| s != t && triangles[s].contains(&b))
                    .unwrap_or(usize::MAX);
            }
        }
        let grid_res = ((triangles.len() as f64 / 12.0).sqrt().ceil() as usize).max(1);
        let mut locator = Self {
            points: pts,
            triangles: triangles.to_vec(),
            neighbors,
            inv_edge_norm,
            vertex_triangles,
            grid_res,
            grid: vec![0; 6 * grid_res * grid_res],
        };
        let mut start = 0;
        for cell in 0..locator.grid.len() {
            let q = locator.cell_center(cell);
            let t = locator.walk(start, &q).unwrap_or_else(|| locator.scan(&q).0);
            locator.grid[cell] = t;
            start = t;
        }
        Ok(locator)
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    fn cell_of(&self, q: &Vec3) -> usize {
        let (ax, ay, az) = (q.x.abs(), q.y.abs(), q.z.abs());
        let (face, u, v) = if ax >= ay && ax >= az {
            (if q.x > 0.0 { 0 } else { 1 }, q.y / ax, q.z / ax)
        } else if ay >= az {
            (if q.y > 0.0 { 2 } else { 3 }, q.x / ay, q.z / ay)
        } else {
            (if q.z > 0.0 { 4 } else { 5 }, q.x / az, q.y / az)
        };
        let n = self.grid_res;
        let i = (((u + 1.0) * 0.5 * n as f64) as usize).min(n - 1);
        let j = (((v + 1.0) * 0.5 * n as f64) as usize).min(n - 1);
        (face * n + i) * n + j
    }

    fn cell_center(&self, cell: usize) -> Vec3 {
        let n = self.grid_res;
        let face = cell / (n * n);
        let i = (cell / n) % n;
        let j = cell % n;
        let u = (i as f64 + 0.5) / n as f64 * 2.0 - 1.0;
        let v = (j as f64 + 0.5) / n as f64 * 2.0 - 1.0;
        let d = match face {
            0 => Vec3::new(1.0, u, v),
            1 => Vec3::new(-1.0, u, v),
            2 => Vec3::new(u, 1.0, v),
            3 => Vec3::new(u, -1.0, v),
            4 => Vec3::new(u, v, 1.0),
            _ => Vec3::new(u, v, -1.0),
        };
        d.normalize()
    }

    /// Signed angular sines of `q` against the three edges of triangle `t`.
    #[inline]
    fn edge_sines(&self, t: usize, q: &Vec3) -> [f64; 3] {
        let [a, b, c] = self.triangles[t];
        let w = chord_weights(&self.points[a], &self.points[b], &self.points[c], q);
        let inv = &self.inv_edge_norm[t];
        [w[0] * inv[0], w[1] * inv[1], w[2] * inv[2]]
    }

    /// Visibility walk from `start`; `None` if it fails to terminate.
    fn walk(&self, start: usize, q: &Vec3) -> Option<usize> {
        let mut t = start;
        let limit = 64 + 4 * (self.triangles.len() as f64).sqrt() as usize;
        for _ in 0..limit {
            let s = self.edge_sines(t, q);
            let mut worst = 0;
            for k in 1..3 {
                if s[k] < s[worst] {
                    worst = k;
                }
            }
            if s[worst] >= 0.0 {
                return Some(t);
            }
            let next = self.neighbors[t][worst];
            if next == usize::MAX {
                return None;
            }
            t = next;
        }
        None
    }

    /// Linear scan: the triangle whose worst edge sine is largest.
    fn scan(&self, q: &Vec3) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for t in 0..self.triangles.len() {
            let s = self.edge_sines(t, q);
            let m = s[0].min(s[1]).min(s[2]);
            if m > best.1 {
                best = (t, m);
            }
        }
        best
    }

    pub fn locate(&self, q: &SpherePoint) -> Located {
        let q = q.vec();
        let hint = self.grid[self.cell_of(q)];
        self.locate_from(hint, q)
    }

    /// Locates `q` starting the walk at triangle `hint`.
    pub fn locate_from(&self, hint: usize, q: &Vec3) -> Located {
        let (mut t, fallback) = match self.walk(hint.min(self.triangles.len() - 1), q) {
            Some(t) => (t, false),
            None => {
                let (t, m) = self.scan(q);
                (t, m < -CONTAINMENT_TOLERANCE)
            }
        };
        let s = self.edge_sines(t, q);
        if s.iter().any(|&x| x <= TIE_TOLERANCE) {
            // On an edge or vertex: the lowest-index containing triangle wins.
            for &v in &self.triangles[t] {
                for &c in &self.vertex_triangles[v] {
                    if c < t {
                        let sc = self.edge_sines(c, q);
                        if sc.iter().all(|&x| x >= -TIE_TOLERANCE) {
                            t = c;
                        }
                    }
                }
            }
        }
        let [a, b, c] = self.triangles[t];
        let raw = chord_barycentric(&self.points[a], &self.points[b], &self.points[c], q);
        Located {
            location: BarycentricLocation { triangle_id: t, coords: clamp_normalize(raw) },
            fallback,
        }
    }

    /// Exhaustive reference query, used to cross-check [`Self::locate`].
    pub fn locate_linear(&self, q: &SpherePoint) -> Located {
        let q = q.vec();
        let mut found = None;
        for t in 0..self.triangles.len() {
            let s = self.edge_sines(t, q);
            if s.iter().all(|&x| x >= -TIE_TOLERANCE) {
                found = Some(t);
                break;
            }
        }
        let (t, fallback) = match found {
            Some(t) => (t, false),
            None => {
                let (t, m) = self.scan(q);
                (t, m < -CONTAINMENT_TOLERANCE)
            }
        };
        let [a, b, c] = self.triangles[t];
        let raw = chord_barycentric(&self.points[a], &self.points[b], &self.points[c], q);
        Located {
            location: BarycentricLocation { triangle_id: t, coords: clamp_normalize(raw) },
            fallback,
        }
    }
}

/// Point on the flat surface triangle named by `loc`.
#[inline]
pub fn embed(surface: &TriangleMesh, loc: &BarycentricLocation) -> Vec3 {
    let [a, b, c] = surface.triangles[loc.triangle_id];
    let [b0, b1, b2] = loc.coords;
    surface.vertices[a] * b0 + surface.vertices[b] * b1 + surface.vertices[c] * b2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::icosphere;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_point(rng: &mut impl Rng) -> SpherePoint {
        loop {
            let v = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                return SpherePoint::from_unit(v / n);
            }
        }
    }

    fn unit_points(mesh: &TriangleMesh) -> Vec<SpherePoint> {
        mesh.vertices.iter().map(|v| SpherePoint::new(*v).unwrap()).collect()
    }

    #[test]
    fn poles_and_equator() {
        assert_eq!(stereographic_project(&SpherePoint::south()), ExtComplex::finite(0.0, 0.0));
        assert_eq!(stereographic_project(&SpherePoint::north()), ExtComplex::Infinity);
        let e = stereographic_project(&SpherePoint::from_unit(Vec3::new(1.0, 0.0, 0.0)));
        let z = e.as_finite().unwrap();
        assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn stereographic_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let p = random_point(&mut rng);
            let back = inverse_stereographic(&stereographic_project(&p));
            assert!((back.vec() - p.vec()).norm() < 1e-12);
        }
    }

    #[test]
    fn area_weight_values() {
        assert_eq!(spherical_area_element_weight(Complex64::new(0.0, 0.0)), 4.0);
        assert_eq!(spherical_area_element_weight(Complex64::new(1.0, 0.0)), 1.0);
    }

    #[test]
    fn area_weight_integrates_to_sphere_area() {
        // Midpoint rule on r = tan(t/2), t in (0, pi); dr = (1 + r^2)/2 dt.
        let n = 20_000;
        let h = std::f64::consts::PI / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            let t = (i as f64 + 0.5) * h;
            let r = (t / 2.0).tan();
            let w = spherical_area_element_weight(Complex64::new(r, 0.0));
            total += w * std::f64::consts::TAU * r * (1.0 + r * r) / 2.0 * h;
        }
        let expected = 4.0 * std::f64::consts::PI;
        assert!((total - expected).abs() / expected < 1e-3);
    }

    #[test]
    fn vertex_queries_hit_their_vertex() {
        let ico = icosphere(2, 1.0);
        let pts = unit_points(&ico);
        let loc = SphereLocator::build(&pts, &ico.triangles).unwrap();
        for (v, p) in pts.iter().enumerate() {
            let hit = loc.locate(p);
            assert!(!hit.fallback);
            let tri = ico.triangles[hit.location.triangle_id];
            let k = tri.iter().position(|&i| i == v).expect("incident triangle");
            assert!((hit.location.coords[k] - 1.0).abs() < 1e-12);
            // Lowest incident triangle wins the tie.
            let lowest = ico.vertex_triangles()[v][0];
            assert_eq!(hit.location.triangle_id, lowest);
            let back = embed(&ico, &hit.location);
            assert!((back - ico.vertices[v]).norm() < 1e-9);
        }
    }

    #[test]
    fn centroid_query() {
        let ico = icosphere(2, 1.0);
        let pts = unit_points(&ico);
        let loc = SphereLocator::build(&pts, &ico.triangles).unwrap();
        for t in [0, 17, 100, 319] {
            let [a, b, c] = ico.corners(t);
            let q = SpherePoint::new(a + b + c).unwrap();
            let hit = loc.locate(&q);
            assert_eq!(hit.location.triangle_id, t);
            for x in hit.location.coords {
                assert!((x - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn edge_midpoint_query() {
        let ico = icosphere(1, 1.0);
        let pts = unit_points(&ico);
        let loc = SphereLocator::build(&pts, &ico.triangles).unwrap();
        let [a, b, _] = ico.triangles[5];
        let q = SpherePoint::new(pts[a].vec() + pts[b].vec()).unwrap();
        let hit = loc.locate(&q);
        let mut c = hit.location.coords;
        c.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert!(c[0].abs() < 1e-12);
        assert!((c[1] - 0.5).abs() < 1e-12 && (c[2] - 0.5).abs() < 1e-12);
        let incident: Vec<usize> = (0..ico.num_triangles())
            .filter(|&t| ico.triangles[t].contains(&a) && ico.triangles[t].contains(&b))
            .collect();
        assert_eq!(hit.location.triangle_id, incident[0]);
    }

    #[test]
    fn flipped_triangle_is_rejected() {
        let ico = icosphere(1, 1.0);
        let pts = unit_points(&ico);
        let mut tris = ico.triangles.clone();
        tris[3].swap(0, 1);
        assert!(matches!(
            SphereLocator::build(&pts, &tris),
            Err(SphereError::FlippedTriangle(3))
        ));
    }

    #[test]
    fn random_queries_agree_with_linear_scan() {
        let ico = icosphere(5, 1.0);
        assert!(ico.num_triangles() >= 16_000);
        let pts = unit_points(&ico);
        let loc = SphereLocator::build(&pts, &ico.triangles).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..100_000 {
            let q = random_point(&mut rng);
            let hit = loc.locate(&q);
            assert!(!hit.fallback);
            let [a, b, c] = ico.triangles[hit.location.triangle_id];
            let raw = chord_barycentric(&pts[a].vec(), &pts[b].vec(), &pts[c].vec(), q.vec());
            assert!(raw.iter().all(|&x| x >= -1e-10));
            assert!((raw.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            if i % 1000 == 0 {
                let brute = loc.locate_linear(&q);
                assert_eq!(brute.location.triangle_id, hit.location.triangle_id);
            }
        }
    }

    #[test]
    fn embed_vertices_and_centroid() {
        let ico = icosphere(0, 2.0);
        let loc = BarycentricLocation { triangle_id: 4, coords: [1.0, 0.0, 0.0] };
        assert_eq!(embed(&ico, &loc), ico.vertices[ico.triangles[4][0]]);
        let loc = BarycentricLocation { triangle_id: 4, coords: [1.0 / 3.0; 3] };
        let [a, b, c] = ico.corners(4);
        assert!((embed(&ico, &loc) - (a + b + c) / 3.0).norm() < 1e-15);
    }
}
