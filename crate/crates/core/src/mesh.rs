//! Closed triangle meshes: validation, measurement and simple transforms.

use std::collections::HashMap;

use nalgebra::Vector3;
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Triangles whose area falls below this fraction of the mean triangle area
/// are reported as degenerate.
pub const DEGENERATE_AREA_FRACTION: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("non-triangular face at line {line}")]
    NonTriangularFace { line: usize },
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error("mesh has zero surface area")]
    ZeroArea,
    #[error("triangle {triangle} violates the strict triangle inequality")]
    TriangleInequality { triangle: usize },
    #[error("edge ({0}, {1}) is not an edge of the mesh")]
    UnknownEdge(usize, usize),
    #[error("edge ({0}, {1}) has no length assigned")]
    MissingEdgeLength(usize, usize),
    #[error("mesh rejected: {0}")]
    Invalid(String),
    #[error("scalar field has {got} values, mesh has {expected} vertices")]
    ScalarLength { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A triangle mesh given by vertex positions and counterclockwise (seen from
/// outside) vertex-index triples.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

/// Undirected edge list of a mesh with the incident triangles of every edge.
#[derive(Debug, Clone)]
pub struct EdgeTable {
    /// Sorted `(i, j)` pairs with `i < j`.
    pub edges: Vec<[usize; 2]>,
    /// Incident triangles per edge, in increasing triangle order.
    pub faces: Vec<Vec<usize>>,
}

impl EdgeTable {
    pub fn build(mesh: &TriangleMesh) -> Self {
        let mut map: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in mesh.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                map.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
        let mut entries: Vec<_> = map.into_iter().collect();
        entries.sort_unstable_by_key(|(k, _)| *k);
        let (edges, faces) = entries
            .into_iter()
            .map(|((i, j), f)| ([i, j], f))
            .unzip();
        Self { edges, faces }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn index_of(&self, i: usize, j: usize) -> Option<usize> {
        let key = [i.min(j), i.max(j)];
        self.edges.binary_search(&key).ok()
    }
}

/// Combinatorial and geometric findings about a mesh. Never mutates the mesh.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ValidationReport {
    pub is_closed: bool,
    pub is_manifold: bool,
    pub is_oriented: bool,
    pub is_nondegenerate: bool,
    pub euler_characteristic: i64,
    pub min_triangle_area: f64,
    pub min_edge_length: f64,
    pub defect_list: Vec<String>,
}

impl ValidationReport {
    /// Whether downstream modules accept the mesh as a closed genus-zero surface.
    pub fn is_accepted(&self) -> bool {
        self.is_closed
            && self.is_manifold
            && self.is_oriented
            && self.is_nondegenerate
            && self.euler_characteristic == 2
    }
}

/// Per-edge lengths satisfying the strict triangle inequality in every face.
#[derive(Debug, Clone)]
pub struct DiscreteMetric {
    pub edges: Vec<[usize; 2]>,
    pub lengths: Vec<f64>,
}

impl DiscreteMetric {
    /// Metric from externally supplied lengths keyed by undirected edge.
    pub fn from_lengths(
        mesh: &TriangleMesh,
        lengths: &HashMap<(usize, usize), f64>,
    ) -> Result<Self, MeshError> {
        let table = EdgeTable::build(mesh);
        let mut out = Vec::with_capacity(table.len());
        for &[i, j] in &table.edges {
            let l = lengths
                .get(&(i, j))
                .or_else(|| lengths.get(&(j, i)))
                .copied()
                .ok_or(MeshError::MissingEdgeLength(i, j))?;
            out.push(l);
        }
        let metric = Self { edges: table.edges, lengths: out };
        metric.check_triangles(mesh)?;
        Ok(metric)
    }

    pub fn length(&self, i: usize, j: usize) -> Option<f64> {
        let key = [i.min(j), i.max(j)];
        self.edges.binary_search(&key).ok().map(|k| self.lengths[k])
    }

    fn check_triangles(&self, mesh: &TriangleMesh) -> Result<(), MeshError> {
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let mut l = [0.0; 3];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                l[k] = self.length(a, b).ok_or(MeshError::UnknownEdge(a, b))?;
            }
            let max = l.iter().cloned().fold(0.0, f64::max);
            let tol = 1e-12 * max;
            for k in 0..3 {
                if l[(k + 1) % 3] + l[(k + 2) % 3] - l[k] <= tol || l[k] <= 0.0 {
                    return Err(MeshError::TriangleInequality { triangle: t });
                }
            }
        }
        Ok(())
    }
}

pub fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Self {
        Self { vertices, triangles }
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn corners(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area_of(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        triangle_area(&a, &b, &c)
    }

    pub fn triangle_areas(&self) -> Vec<f64> {
        (0..self.triangles.len()).map(|t| self.area_of(t)).collect()
    }

    /// Sum of flat triangle areas.
    pub fn surface_area(&self) -> f64 {
        self.triangle_areas().iter().sum()
    }

    pub fn edge_table(&self) -> EdgeTable {
        EdgeTable::build(self)
    }

    pub fn mean_edge_length(&self) -> f64 {
        let table = self.edge_table();
        if table.is_empty() {
            return 0.0;
        }
        let total: f64 = table
            .edges
            .iter()
            .map(|&[i, j]| (self.vertices[i] - self.vertices[j]).norm())
            .sum();
        total / table.len() as f64
    }

    /// Area-weighted centroid of the surface.
    pub fn area_centroid(&self) -> Vec3 {
        let mut acc = Vec3::zeros();
        let mut total = 0.0;
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.corners(t);
            let area = triangle_area(&a, &b, &c);
            acc += area * (a + b + c) / 3.0;
            total += area;
        }
        if total > 0.0 {
            acc / total
        } else {
            acc
        }
    }

    pub fn validate(&self) -> ValidationReport {
        let mut defects = Vec::new();
        let nv = self.vertices.len();

        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= nv) {
                defects.push(format!("triangle {t} references a missing vertex"));
            } else if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                defects.push(format!("triangle {t} repeats a vertex"));
            }
        }
        if !defects.is_empty() {
            return ValidationReport {
                is_closed: false,
                is_manifold: false,
                is_oriented: false,
                is_nondegenerate: false,
                euler_characteristic: 0,
                min_triangle_area: 0.0,
                min_edge_length: 0.0,
                defect_list: defects,
            };
        }

        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                *directed.entry((tri[k], tri[(k + 1) % 3])).or_default() += 1;
            }
        }
        let table = self.edge_table();
        let mut is_closed = true;
        let mut edge_manifold = true;
        let mut is_oriented = true;
        for (e, &[i, j]) in table.edges.iter().enumerate() {
            let n = table.faces[e].len();
            if n == 1 {
                is_closed = false;
                defects.push(format!("boundary edge ({i}, {j})"));
            } else if n > 2 {
                edge_manifold = false;
                defects.push(format!("edge ({i}, {j}) has {n} incident triangles"));
            }
            let fwd = directed.get(&(i, j)).copied().unwrap_or(0);
            let bwd = directed.get(&(j, i)).copied().unwrap_or(0);
            if n == 2 && (fwd != 1 || bwd != 1) {
                is_oriented = false;
                defects.push(format!("edge ({i}, {j}) has inconsistent orientation"));
            }
        }

        let mut vertex_manifold = true;
        if edge_manifold && is_oriented && is_closed {
            // Each vertex link must be a single cycle.
            let mut links: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nv];
            for tri in &self.triangles {
                for k in 0..3 {
                    links[tri[k]].push((tri[(k + 1) % 3], tri[(k + 2) % 3]));
                }
            }
            for (v, link) in links.iter().enumerate() {
                if link.is_empty() {
                    vertex_manifold = false;
                    defects.push(format!("vertex {v} is not referenced by any triangle"));
                    continue;
                }
                let next: HashMap<usize, usize> = link.iter().cloned().collect();
                let start = link[0].0;
                let mut cur = start;
                let mut steps = 0;
                loop {
                    match next.get(&cur) {
                        Some(&n) => cur = n,
                        None => break,
                    }
                    steps += 1;
                    if cur == start || steps > link.len() {
                        break;
                    }
                }
                if cur != start || steps != link.len() {
                    vertex_manifold = false;
                    defects.push(format!("vertex {v} has a non-disk neighbourhood"));
                }
            }
        }

        let areas = self.triangle_areas();
        let mean_area = if areas.is_empty() {
            0.0
        } else {
            areas.iter().sum::<f64>() / areas.len() as f64
        };
        let threshold = DEGENERATE_AREA_FRACTION * mean_area;
        let mut is_nondegenerate = mean_area > 0.0;
        for (t, &a) in areas.iter().enumerate() {
            if a <= threshold {
                is_nondegenerate = false;
                defects.push(format!("triangle {t} is degenerate (area {a:e})"));
            }
        }
        let min_triangle_area = areas.iter().cloned().fold(f64::INFINITY, f64::min);
        let min_edge_length = table
            .edges
            .iter()
            .map(|&[i, j]| (self.vertices[i] - self.vertices[j]).norm())
            .fold(f64::INFINITY, f64::min);

        let mut seen: HashMap<[u64; 3], usize> = HashMap::new();
        for (v, p) in self.vertices.iter().enumerate() {
            let key = [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
            if let Some(&first) = seen.get(&key) {
                defects.push(format!("vertex {v} duplicates vertex {first}"));
            } else {
                seen.insert(key, v);
            }
        }

        let euler = nv as i64 - table.len() as i64 + self.triangles.len() as i64;
        if euler != 2 {
            defects.push(format!("Euler characteristic {euler}, expected 2"));
        }

        ValidationReport {
            is_closed,
            is_manifold: edge_manifold && vertex_manifold,
            is_oriented,
            is_nondegenerate,
            euler_characteristic: euler,
            min_triangle_area,
            min_edge_length,
            defect_list: defects,
        }
    }

    /// Validates and returns an error describing the first defect on rejection.
    pub fn ensure_genus_zero(&self) -> Result<(), MeshError> {
        let report = self.validate();
        if report.is_accepted() {
            Ok(())
        } else {
            Err(MeshError::Invalid(
                report
                    .defect_list
                    .first()
                    .cloned()
                    .unwrap_or_else(|| "unknown defect".into()),
            ))
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| v * s).collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        Self {
            vertices: self.vertices.iter().map(f).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Scale by `1/sqrt(area)` so the surface has unit area.
    pub fn normalize_area(&self) -> Result<Self, MeshError> {
        let area = self.surface_area();
        if !(area > 0.0) || !area.is_finite() {
            return Err(MeshError::ZeroArea);
        }
        let s = 1.0 / area.sqrt();
        if s == 1.0 {
            return Ok(self.clone());
        }
        Ok(self.scaled(s))
    }

    /// Euclidean edge lengths of the embedding.
    pub fn discrete_metric(&self) -> Result<DiscreteMetric, MeshError> {
        let table = self.edge_table();
        let lengths = table
            .edges
            .iter()
            .map(|&[i, j]| (self.vertices[i] - self.vertices[j]).norm())
            .collect();
        let metric = DiscreteMetric { edges: table.edges, lengths };
        metric.check_triangles(self)?;
        Ok(metric)
    }

    /// `A_ij`: summed area of the triangles adjacent to each edge of `table`.
    pub fn edge_area_weights(&self, table: &EdgeTable) -> Vec<f64> {
        let areas = self.triangle_areas();
        table
            .faces
            .iter()
            .map(|f| f.iter().map(|&t| areas[t]).sum())
            .collect()
    }

    /// Mirror through the plane `z = 0`, reversing triangle order so the
    /// result stays outward oriented.
    pub fn reflect(&self) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| Vec3::new(v.x, v.y, -v.z)).collect(),
            triangles: self.triangles.iter().map(|&[a, b, c]| [c, b, a]).collect(),
        }
    }

    /// 1-to-4 midpoint split with welded midpoints. New vertices are passed
    /// through `projector` when given.
    pub fn midpoint_subdivide(&self, projector: Option<&dyn Fn(Vec3) -> Vec3>) -> Self {
        let mut vertices = self.vertices.clone();
        let mut mids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut triangles = Vec::with_capacity(self.triangles.len() * 4);
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            *mids.entry(key).or_insert_with(|| {
                let mut p = (vertices[a] + vertices[b]) * 0.5;
                if let Some(f) = projector {
                    p = f(p);
                }
                vertices.push(p);
                vertices.len() - 1
            })
        };
        for &[a, b, c] in &self.triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            triangles.push([a, ab, ca]);
            triangles.push([ab, b, bc]);
            triangles.push([ca, bc, c]);
            triangles.push([ab, bc, ca]);
        }
        Self { vertices, triangles }
    }

    /// Enclosed volume; positive for outward-oriented closed meshes.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|&[a, b, c]| {
                self.vertices[a].dot(&self.vertices[b].cross(&self.vertices[c])) / 6.0
            })
            .sum()
    }

    /// Triangles incident to each vertex, in increasing triangle order.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                out[v].push(t);
            }
        }
        out
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn unit_tetrahedron() -> TriangleMesh {
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

    fn cube() -> TriangleMesh {
        let v = (0..8)
            .map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
            .collect();
        let quads = [
            [0, 2, 3, 1],
            [4, 5, 7, 6],
            [0, 1, 5, 4],
            [2, 6, 7, 3],
            [0, 4, 6, 2],
            [1, 3, 7, 5],
        ];
        let triangles = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        TriangleMesh::new(v, triangles)
    }

    pub(crate) fn torus(n: usize, m: usize) -> TriangleMesh {
        let mut v = Vec::new();
        for i in 0..n {
            for j in 0..m {
                let u = i as f64 / n as f64 * std::f64::consts::TAU;
                let w = j as f64 / m as f64 * std::f64::consts::TAU;
                let r = 2.0 + w.cos();
                v.push(Vec3::new(r * u.cos(), r * u.sin(), w.sin()));
            }
        }
        let id = |i: usize, j: usize| (i % n) * m + (j % m);
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..m {
                t.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                t.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        TriangleMesh::new(v, t)
    }

    #[test]
    fn tetrahedron_has_unit_edges() {
        let m = unit_tetrahedron();
        let metric = m.discrete_metric().unwrap();
        assert_eq!(metric.lengths.len(), 6);
        for l in metric.lengths {
            assert!((l - 1.0).abs() < 1e-12, "{l}");
        }
    }

    #[test]
    fn tetrahedron_validates() {
        let m = unit_tetrahedron();
        let r = m.validate();
        assert!(r.is_accepted(), "{:?}", r.defect_list);
        assert!(m.signed_volume() > 0.0);
        assert_eq!(r.euler_characteristic, 2);
    }

    #[test]
    fn tetrahedron_area_is_sqrt3() {
        let a = unit_tetrahedron().surface_area();
        assert!((a - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cube_area_is_six() {
        let c = cube();
        assert!(c.validate().is_accepted(), "{:?}", c.validate().defect_list);
        assert!((c.surface_area() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn torus_has_euler_zero() {
        let r = torus(12, 8).validate();
        assert_eq!(r.euler_characteristic, 0);
        assert!(!r.is_accepted());
        assert!(r.is_closed && r.is_manifold && r.is_oriented);
    }

    #[test]
    fn deleted_face_is_not_closed() {
        let mut m = unit_tetrahedron();
        m.triangles.pop();
        let r = m.validate();
        assert!(!r.is_closed);
        assert!(!r.is_accepted());
    }

    #[test]
    fn flipped_face_is_not_oriented() {
        let mut m = unit_tetrahedron();
        m.triangles[0].swap(1, 2);
        assert!(!m.validate().is_oriented);
    }

    #[test]
    fn tetrahedron_edge_weights() {
        let m = unit_tetrahedron();
        let table = m.edge_table();
        let w = m.edge_area_weights(&table);
        for a in &w {
            assert!((a - 3f64.sqrt() / 2.0).abs() < 1e-12);
        }
        let total: f64 = w.iter().map(|a| a / 3.0).sum();
        assert!((total - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn weights_scale_quadratically() {
        let m = cube();
        let table = m.edge_table();
        let w = m.edge_area_weights(&table);
        let w3 = m.scaled(3.0).edge_area_weights(&table);
        for (a, b) in w.iter().zip(&w3) {
            assert!((b - 9.0 * a).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_area_gives_unit_area() {
        let m = cube().scaled(2.5);
        let n = m.normalize_area().unwrap();
        assert!((n.surface_area() - 1.0).abs() < 1e-12);
        let nn = n.normalize_area().unwrap();
        for (a, b) in n.vertices.iter().zip(&nn.vertices) {
            assert!((a - b).norm() <= 1e-12 * a.norm().max(1.0));
        }
    }

    #[test]
    fn normalize_zero_area_fails() {
        let m = TriangleMesh::new(vec![Vec3::zeros(); 3], vec![[0, 1, 2]]);
        assert!(matches!(m.normalize_area(), Err(MeshError::ZeroArea)));
    }

    #[test]
    fn metric_scales_linearly() {
        let m = cube();
        let a = m.discrete_metric().unwrap();
        let b = m.scaled(1.7).discrete_metric().unwrap();
        for (x, y) in a.lengths.iter().zip(&b.lengths) {
            assert!((y - 1.7 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn needle_triangle_is_rejected() {
        let m = TriangleMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.5, 1e-14, 0.0)],
            vec![[0, 1, 2]],
        );
        assert!(matches!(m.discrete_metric(), Err(MeshError::TriangleInequality { .. })));
    }

    #[test]
    fn external_lengths_are_validated() {
        let m = unit_tetrahedron();
        let mut lengths = HashMap::new();
        for &[i, j] in &m.edge_table().edges {
            lengths.insert((i, j), 1.0);
        }
        let metric = DiscreteMetric::from_lengths(&m, &lengths).unwrap();
        assert_eq!(metric.length(3, 0), Some(1.0));
        lengths.insert((0, 1), 2.5);
        assert!(DiscreteMetric::from_lengths(&m, &lengths).is_err());
    }

    #[test]
    fn reflect_is_an_involution() {
        let m = unit_tetrahedron();
        let r = m.reflect();
        assert!(r.validate().is_accepted());
        let rr = r.reflect();
        assert_eq!(rr.vertices, m.vertices);
        assert!((r.surface_area() - m.surface_area()).abs() < 1e-12);
    }

    #[test]
    fn subdivided_tetrahedron_counts() {
        let s = unit_tetrahedron().midpoint_subdivide(None);
        let r = s.validate();
        assert_eq!(s.num_vertices(), 10);
        assert_eq!(s.num_triangles(), 16);
        assert_eq!(s.edge_table().len(), 24);
        assert_eq!(r.euler_characteristic, 2);
        assert!(r.is_accepted());
    }

    #[test]
    fn flat_subdivision_keeps_area() {
        let c = cube();
        let s = c.midpoint_subdivide(None);
        assert!((s.surface_area() - c.surface_area()).abs() < 1e-12);
    }
}
