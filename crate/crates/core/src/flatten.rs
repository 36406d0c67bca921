//! Conformal maps from genus-zero meshes to the unit sphere via
//! conformalized mean curvature flow, followed by Möbius centering.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{MeshError, TriangleMesh, Vec3};
use crate::mobius::{center_vertices, MobiusError, MobiusTransform};
use crate::sparse::{pcg, CsrMatrix, SolveError};
use crate::sphere::{SphereError, SphereLocator, SpherePoint};

#[derive(Debug, Error)]
pub enum FlattenError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("flow did not converge in {steps} steps (last motion {motion:e})")]
    NotConverged { steps: usize, motion: f64 },
    #[error("{count} spherical triangles remain flipped after repair")]
    Flipped { count: usize },
    #[error("linear solve failed: {0}")]
    Solve(#[from] SolveError),
    #[error("centering failed: {0}")]
    Centering(#[from] MobiusError),
    #[error("locator: {0}")]
    Locator(#[from] SphereError),
    #[error("degenerate spherical triangle {0}")]
    DegenerateTriangle(usize),
    #[error("area-weighted mean QC error {mean:.4} exceeds the gate {gate}")]
    QualityGate { mean: f64, gate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlattenOptions {
    pub max_steps: usize,
    /// Stop once no vertex moves farther than this in one step (unit-sphere scale).
    pub motion_tolerance: f64,
    /// Initial flow time step, for a mesh normalised to area 4π.
    pub time_step: f64,
    pub min_time_step: f64,
    pub repair_passes: usize,
    pub stagnation_window: usize,
    pub qc_warn: f64,
    pub qc_fail: f64,
    /// Skip the flow when the input already lies on a sphere.
    pub inscribed_fast_path: bool,
    pub solver_tolerance: f64,
}

impl Default for FlattenOptions {
    fn default() -> Self {
        Self {
            max_steps: 2000,
            motion_tolerance: 1e-7,
            time_step: 0.5,
            min_time_step: 1e-6,
            repair_passes: 20,
            stagnation_window: 50,
            qc_warn: 1.10,
            qc_fail: 1.30,
            inscribed_fast_path: true,
            solver_tolerance: 1e-11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcReport {
    pub per_triangle: Vec<f64>,
    pub mean: f64,
    pub max: f64,
    pub area_weighted_mean: f64,
}

impl QcReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "mean": self.mean,
            "max": self.max,
            "area_weighted_mean": self.area_weighted_mean,
            "triangles": self.per_triangle.len(),
        })
    }
}

/// Ratio of singular values of the affine map taking triangle `src` to `dst`.
pub fn triangle_qc(src: [Vec3; 3], dst: [Vec3; 3]) -> Option<f64> {
    let frame = |p: [Vec3; 3]| -> Option<Matrix2<f64>> {
        let e1 = p[1] - p[0];
        let e2 = p[2] - p[0];
        let n = e1.cross(&e2);
        if !(n.norm() > 0.0) {
            return None;
        }
        let x = e1.normalize();
        let y = n.normalize().cross(&x);
        Some(Matrix2::new(e1.dot(&x), e2.dot(&x), e1.dot(&y), e2.dot(&y)))
    };
    let s = frame(src)?;
    let t = frame(dst)?;
    let j = t * s.try_inverse()?;
    let sv = j.singular_values();
    let (hi, lo) = (sv[0].max(sv[1]), sv[0].min(sv[1]));
    (lo > 0.0).then(|| (hi / lo).max(1.0))
}

/// Quasi-conformal error of the map from each source triangle to its chord
/// triangle on the sphere.
pub fn qc_report(source: &TriangleMesh, sphere: &[Vec3]) -> Result<QcReport, FlattenError> {
    let per_triangle = source
        .triangles
        .iter()
        .enumerate()
        .map(|(t, &[a, b, c])| {
            triangle_qc(source.corners(t), [sphere[a], sphere[b], sphere[c]])
                .ok_or(FlattenError::DegenerateTriangle(t))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let areas = source.triangle_areas();
    let total: f64 = areas.iter().sum();
    let n = per_triangle.len() as f64;
    Ok(QcReport {
        mean: per_triangle.iter().sum::<f64>() / n,
        max: per_triangle.iter().cloned().fold(1.0, f64::max),
        area_weighted_mean: per_triangle.iter().zip(&areas).map(|(q, a)| q * a).sum::<f64>() / total,
        per_triangle,
    })
}

/// A bijective map of a mesh's vertices onto the unit sphere, with a point
/// locator over the resulting spherical triangulation.
#[derive(Debug, Clone)]
pub struct SphericalParameterization {
    pub source: TriangleMesh,
    pub sphere_positions: Vec<SpherePoint>,
    pub centering: MobiusTransform,
    pub quality: QcReport,
    pub flow_steps: usize,
    pub warnings: Vec<String>,
    locator: SphereLocator,
}

impl SphericalParameterization {
    /// Assembles a parameterization from given sphere positions, checking
    /// orientation and computing quality; no centering is applied.
    pub fn from_positions(
        source: TriangleMesh,
        sphere_positions: Vec<SpherePoint>,
    ) -> Result<Self, FlattenError> {
        let pts: Vec<Vec3> = sphere_positions.iter().map(|p| *p.vec()).collect();
        let flipped = flipped_triangles(&pts, &source.triangles);
        if !flipped.is_empty() {
            return Err(FlattenError::Flipped { count: flipped.len() });
        }
        let locator = SphereLocator::build(&sphere_positions, &source.triangles)?;
        let quality = qc_report(&source, &pts)?;
        Ok(Self {
            source,
            sphere_positions,
            centering: MobiusTransform::identity(),
            quality,
            flow_steps: 0,
            warnings: Vec::new(),
            locator,
        })
    }

    pub fn locator(&self) -> &SphereLocator {
        &self.locator
    }

    pub fn sphere_vec(&self, i: usize) -> &Vec3 {
        self.sphere_positions[i].vec()
    }

    /// Composes every sphere position with `m`.
    pub fn transformed(&self, m: &MobiusTransform) -> Result<Self, FlattenError> {
        let moved = self.sphere_positions.iter().map(|p| m.apply(p)).collect();
        let mut out = Self::from_positions(self.source.clone(), moved)?;
        out.centering = m.compose(&self.centering);
        out.flow_steps = self.flow_steps;
        Ok(out)
    }

    pub fn sphere_mesh(&self) -> TriangleMesh {
        TriangleMesh::new(
            self.sphere_positions.iter().map(|p| *p.vec()).collect(),
            self.source.triangles.clone(),
        )
    }

    pub fn center_of_mass(&self) -> Vec3 {
        self.sphere_positions.iter().fold(Vec3::zeros(), |a, p| a + p.vec())
            / self.sphere_positions.len() as f64
    }

    /// Spherical mesh as OFF, for inspection.
    pub fn write_off<W: Write>(&self, w: W) -> Result<(), MeshError> {
        crate::io::write_mesh(w, &self.sphere_mesh(), None, crate::io::MeshFormat::Off)
    }
}

fn flipped_triangles(pts: &[Vec3], triangles: &[[usize; 3]]) -> Vec<usize> {
    triangles
        .iter()
        .enumerate()
        .filter(|(_, &[a, b, c])| !(pts[a].dot(&pts[b].cross(&pts[c])) > 0.0))
        .map(|(t, _)| t)
        .collect()
}

/// Cotangent stiffness matrix (positive semidefinite).
pub fn cotan_laplacian(mesh: &TriangleMesh) -> CsrMatrix {
    let mut triplets = Vec::with_capacity(mesh.num_triangles() * 12);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = mesh.corners(t);
        for k in 0..3 {
            let (i, j) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
            let u = p[(k + 1) % 3] - p[k];
            let v = p[(k + 2) % 3] - p[k];
            let w = 0.5 * u.dot(&v) / u.cross(&v).norm();
            triplets.push((i, j, -w));
            triplets.push((j, i, -w));
            triplets.push((i, i, w));
            triplets.push((j, j, w));
        }
    }
    CsrMatrix::from_triplets(mesh.num_vertices(), triplets)
}

/// Lumped (barycentric) vertex areas.
pub fn lumped_mass(vertices: &[Vec3], triangles: &[[usize; 3]]) -> Vec<f64> {
    let mut m = vec![0.0; vertices.len()];
    for &[a, b, c] in triangles {
        let area = 0.5 * (vertices[b] - vertices[a]).cross(&(vertices[c] - vertices[a])).norm();
        for v in [a, b, c] {
            m[v] += area / 3.0;
        }
    }
    m
}

/// Translates to the area centroid and scales to area 4π.
fn normalize_sphere_scale(vertices: &mut [Vec3], triangles: &[[usize; 3]]) {
    let mesh = TriangleMesh::new(vertices.to_vec(), triangles.to_vec());
    let c = mesh.area_centroid();
    let s = (4.0 * PI / mesh.surface_area()).sqrt();
    for v in vertices.iter_mut() {
        *v = (*v - c) * s;
    }
}

fn inscribed_directions(mesh: &TriangleMesh) -> Option<Vec<Vec3>> {
    let c = mesh.vertices.iter().fold(Vec3::zeros(), |a, v| a + v) / mesh.num_vertices() as f64;
    let radii: Vec<f64> = mesh.vertices.iter().map(|v| (v - c).norm()).collect();
    let r0 = radii[0];
    if r0 <= 0.0 || radii.iter().any(|r| (r - r0).abs() > 1e-9 * r0) {
        return None;
    }
    let dirs: Vec<Vec3> = mesh.vertices.iter().map(|v| (v - c) / r0).collect();
    flipped_triangles(&dirs, &mesh.triangles).is_empty().then_some(dirs)
}

struct FlowOutcome {
    dirs: Vec<Vec3>,
    steps: usize,
    /// Smallest per-step motion reached when the flow stopped improving.
    stagnated: Option<f64>,
}

/// Runs the flow to a round shape and returns Möbius-centred unit directions.
///
/// On irregular meshes the discrete flow has no exact fixed point: after the
/// shape rounds out, motion bottoms out and then grows as vertices slowly
/// concentrate. If motion has not improved for `stagnation_window` steps,
/// the iterate with the smallest motion is returned.
fn conformal_flow(mesh: &TriangleMesh, opts: &FlattenOptions) -> Result<FlowOutcome, FlattenError> {
    let stiffness = cotan_laplacian(mesh);
    let mut x = mesh.vertices.clone();
    normalize_sphere_scale(&mut x, &mesh.triangles);
    let mut dt = opts.time_step;
    let mut folded = radial_folds(&x, &mesh.triangles);
    let mut centred: Option<Vec<Vec3>> = None;
    let mut motion = f64::INFINITY;
    let mut calm = 0;
    struct Best {
        folded: usize,
        motion: f64,
        dirs: Vec<Vec3>,
        step: usize,
    }
    let mut best: Option<Best> = None;
    for step in 1..=opts.max_steps {
        let mass = lumped_mass(&x, &mesh.triangles);
        let system = stiffness.scaled(dt).add_diagonal(1.0, &mass);
        let rhs: [Vec<f64>; 3] =
            std::array::from_fn(|d| x.iter().zip(&mass).map(|(p, m)| p[d] * m).collect());
        let solved: Vec<Result<Vec<f64>, SolveError>> = (0..3)
            .into_par_iter()
            .map(|d| {
                let mut sol: Vec<f64> = x.iter().map(|p| p[d]).collect();
                pcg(&system, &rhs[d], &mut sol, opts.solver_tolerance, 20 * x.len().max(50))
                    .map(|_| sol)
            })
            .collect();
        let mut coords = Vec::with_capacity(3);
        for s in solved {
            coords.push(s?);
        }
        let mut next: Vec<Vec3> =
            (0..x.len()).map(|i| Vec3::new(coords[0][i], coords[1][i], coords[2][i])).collect();
        normalize_sphere_scale(&mut next, &mesh.triangles);
        let next_folded = radial_folds(&next, &mesh.triangles);
        if folded == 0 && next_folded > 0 && dt > opts.min_time_step {
            dt *= 0.5;
            calm = 0;
            continue;
        }
        calm += 1;
        if calm >= 5 && dt < opts.time_step {
            dt = (2.0 * dt).min(opts.time_step);
            calm = 0;
        }
        x = next;
        folded = next_folded;
        // Progress is measured on Möbius-centred directions so the flow's
        // drift along the Möbius group does not count as motion.
        let now = centred_directions(&x);
        motion = match (&centred, &now) {
            (Some(a), Some(b)) => a.iter().zip(b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max),
            _ => f64::INFINITY,
        };
        centred = now;
        if let Some(dirs) = centred.as_ref().filter(|_| motion.is_finite()) {
            if motion < opts.motion_tolerance && folded == 0 {
                return Ok(FlowOutcome { dirs: dirs.clone(), steps: step, stagnated: None });
            }
            if best.as_ref().is_none_or(|b| (folded, motion) < (b.folded, b.motion)) {
                best = Some(Best { folded, motion, dirs: dirs.clone(), step });
            }
        }
        if let Some(b) = best.as_ref().filter(|b| step - b.step >= opts.stagnation_window) {
            return Ok(FlowOutcome { dirs: b.dirs.clone(), steps: step, stagnated: Some(b.motion) });
        }
    }
    if let Some(b) = best {
        return Ok(FlowOutcome { dirs: b.dirs, steps: opts.max_steps, stagnated: Some(b.motion) });
    }
    Err(FlattenError::NotConverged { steps: opts.max_steps, motion })
}

fn centred_directions(x: &[Vec3]) -> Option<Vec<Vec3>> {
    let dirs: Vec<SpherePoint> = x.iter().map(|p| SpherePoint::new(*p)).collect::<Result<_, _>>().ok()?;
    let m = center_vertices(&dirs).ok()?;
    Some(dirs.iter().map(|p| m.apply_vec(p.vec())).collect())
}

fn radial_folds(x: &[Vec3], triangles: &[[usize; 3]]) -> usize {
    triangles
        .iter()
        .filter(|&&[a, b, c]| !((x[b] - x[a]).cross(&(x[c] - x[a])).dot(&(x[a] + x[b] + x[c])) > 0.0))
        .count()
}

/// Laplacian smoothing restricted to the stars of flipped triangles.
fn repair_flips(dirs: &mut [Vec3], mesh: &TriangleMesh, passes: usize) -> usize {
    let mut flipped = flipped_triangles(dirs, &mesh.triangles);
    if flipped.is_empty() {
        return 0;
    }
    let edges = mesh.edge_table();
    let mut neighbors = vec![Vec::new(); mesh.num_vertices()];
    for e in &edges.edges {
        neighbors[e[0]].push(e[1]);
        neighbors[e[1]].push(e[0]);
    }
    let mut region: Vec<usize> = flipped.iter().flat_map(|&t| mesh.triangles[t]).collect();
    for _ in 0..passes {
        region.sort_unstable();
        region.dedup();
        for _ in 0..10 {
            for &v in &region {
                let avg = neighbors[v].iter().fold(Vec3::zeros(), |a, &n| a + dirs[n]);
                if avg.norm() > 0.0 {
                    dirs[v] = avg.normalize();
                }
            }
        }
        flipped = flipped_triangles(dirs, &mesh.triangles);
        if flipped.is_empty() {
            return 0;
        }
        // Grow the smoothed region by one ring around what is still flipped.
        let ring: Vec<usize> = flipped
            .iter()
            .flat_map(|&t| mesh.triangles[t])
            .flat_map(|v| neighbors[v].iter().copied().chain([v]))
            .collect();
        region.extend(ring);
    }
    flipped.len()
}

/// Maps a genus-zero mesh conformally onto the unit sphere and Möbius-centres
/// the result so the vertex images have centre of mass at the origin.
pub fn conformal_to_sphere(
    mesh: &TriangleMesh,
    opts: &FlattenOptions,
) -> Result<SphericalParameterization, FlattenError> {
    mesh.ensure_genus_zero()?;
    let fast = if opts.inscribed_fast_path { inscribed_directions(mesh) } else { None };
    let mut warnings = Vec::new();
    let (mut dirs, steps) = match fast {
        Some(d) => (d, 0),
        None => {
            let flow = conformal_flow(mesh, opts)?;
            if let Some(m) = flow.stagnated {
                warnings.push(format!("flow stagnated at per-step motion {m:.3e}"));
            }
            (flow.dirs, flow.steps)
        }
    };
    let remaining = repair_flips(&mut dirs, mesh, opts.repair_passes);
    if remaining > 0 {
        return Err(FlattenError::Flipped { count: remaining });
    }
    let points: Vec<SpherePoint> = dirs.into_iter().map(SpherePoint::from_unit).collect();
    let centering = center_vertices(&points)?;
    let centred = points.iter().map(|p| centering.apply(p)).collect();
    let mut param = SphericalParameterization::from_positions(mesh.clone(), centred)?;
    param.centering = centering;
    param.flow_steps = steps;
    param.warnings = warnings;
    let mean = param.quality.area_weighted_mean;
    if mean > opts.qc_fail {
        return Err(FlattenError::QualityGate { mean, gate: opts.qc_fail });
    }
    if mean > opts.qc_warn {
        param
            .warnings
            .push(format!("area-weighted mean QC error {mean:.4} exceeds {}", opts.qc_warn));
    }
    Ok(param)
}
