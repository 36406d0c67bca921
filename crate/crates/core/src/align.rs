//! Ellipsoid-seeded steepest descent over Möbius transforms, producing the
//! symmetric distortion distance between two surfaces.

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{transfer, CorrespondenceMap, EnergyBreakdown, EnergyError, SurfacePair};
use crate::flatten::{conformal_to_sphere, FlattenError, FlattenOptions, SphericalParameterization};
use crate::mesh::{MeshError, TriangleMesh, Vec3};
use crate::mobius::{MobiusChart, MobiusError, MobiusTransform};
use crate::sphere::{BarycentricLocation, SpherePoint};

/// Relative tolerance under which two covariance eigenvalues count as equal.
pub const EIGEN_TIE_TOLERANCE: f64 = 1e-9;
/// Energies within this of each other are ties, resolved by seed order.
pub const ENERGY_TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum AlignError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("flattening failed: {0}")]
    Flatten(#[from] FlattenError),
    #[error("energy: {0}")]
    Energy(#[from] EnergyError),
    #[error("every seed failed ({0} tried)")]
    AllSeedsFailed(usize),
    #[error("seed construction: {0}")]
    Seed(#[from] MobiusError),
}

/// Extremal point of a mesh along one principal direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisPoint {
    pub position: Vec3,
    pub location: BarycentricLocation,
    /// The ray missed the surface and the nearest surface point was used.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisFrame {
    pub centroid: Vec3,
    /// Right-handed orthonormal principal axes, by descending variance.
    pub axes: [Vec3; 3],
    pub eigenvalues: [f64; 3],
    /// `points[k] = [+axis k, -axis k]` extremal points.
    pub points: [[AxisPoint; 2]; 3],
}

fn ray_triangle(origin: &Vec3, dir: &Vec3, tri: [Vec3; 3]) -> Option<(f64, [f64; 3])> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(&p) * inv;
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    let tol = 1e-12;
    if u < -tol || v < -tol || u + v > 1.0 + tol {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 0.0).then(|| {
        let (u, v) = (u.clamp(0.0, 1.0), v.clamp(0.0, 1.0));
        let w = (1.0 - u - v).max(0.0);
        let s = u + v + w;
        (t, [w / s, u / s, v / s])
    })
}

fn closest_on_triangle(p: &Vec3, tri: [Vec3; 3]) -> [f64; 3] {
    // Ericson, Real-Time Collision Detection, 5.1.5.
    let [a, b, c] = tri;
    let (ab, ac, ap) = (b - a, c - a, p - a);
    let (d1, d2) = (ab.dot(&ap), ac.dot(&ap));
    if d1 <= 0.0 && d2 <= 0.0 {
        return [1.0, 0.0, 0.0];
    }
    let bp = p - b;
    let (d3, d4) = (ab.dot(&bp), ac.dot(&bp));
    if d3 >= 0.0 && d4 <= d3 {
        return [0.0, 1.0, 0.0];
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return [1.0 - v, v, 0.0];
    }
    let cp = p - c;
    let (d5, d6) = (ab.dot(&cp), ac.dot(&cp));
    if d6 >= 0.0 && d5 <= d6 {
        return [0.0, 0.0, 1.0];
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return [1.0 - w, 0.0, w];
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return [0.0, 1.0 - w, w];
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    [1.0 - v - w, v, w]
}

fn extremal_point(mesh: &TriangleMesh, origin: &Vec3, dir: &Vec3) -> AxisPoint {
    let mut best: Option<(f64, usize, [f64; 3])> = None;
    for t in 0..mesh.num_triangles() {
        if let Some((d, coords)) = ray_triangle(origin, dir, mesh.corners(t)) {
            if best.is_none_or(|(bd, _, _)| d < bd) {
                best = Some((d, t, coords));
            }
        }
    }
    if let Some((_, t, coords)) = best {
        let location = BarycentricLocation { triangle_id: t, coords };
        return AxisPoint { position: crate::sphere::embed(mesh, &location), location, flagged: false };
    }
    // Nearest surface point to the ray.
    let mut nearest = (f64::INFINITY, 0, [1.0, 0.0, 0.0]);
    for t in 0..mesh.num_triangles() {
        let tri = mesh.corners(t);
        let centroid = (tri[0] + tri[1] + tri[2]) / 3.0;
        let along = (centroid - origin).dot(dir).max(0.0);
        let coords = closest_on_triangle(&(origin + dir * along), tri);
        let p = tri[0] * coords[0] + tri[1] * coords[1] + tri[2] * coords[2];
        let off = (p - origin) - dir * (p - origin).dot(dir).max(0.0);
        if off.norm() < nearest.0 {
            nearest = (off.norm(), t, coords);
        }
    }
    let location = BarycentricLocation { triangle_id: nearest.1, coords: nearest.2 };
    AxisPoint { position: crate::sphere::embed(mesh, &location), location, flagged: true }
}

/// Orthonormal basis of span(`basis`) closest to the world axes: the world
/// axes with the largest projections, in index order, Gram-Schmidt'd.
fn world_aligned(basis: &[Vec3]) -> Vec<Vec3> {
    let world = [Vec3::x(), Vec3::y(), Vec3::z()];
    let proj = |w: &Vec3| basis.iter().fold(Vec3::zeros(), |a, b| a + b * b.dot(w));
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&i, &j| proj(&world[j]).norm().total_cmp(&proj(&world[i]).norm()).then(i.cmp(&j)));
    let mut chosen: Vec<usize> = order[..basis.len()].to_vec();
    chosen.sort_unstable();
    let mut out: Vec<Vec3> = Vec::new();
    for i in chosen {
        let mut v = proj(&world[i]);
        for u in &out {
            v -= u * u.dot(&v);
        }
        out.push(v.normalize());
    }
    out
}

/// Principal axes of the area-weighted covariance of triangle centroids,
/// with the six extremal surface points along them.
pub fn ellipsoid_axes(mesh: &TriangleMesh) -> AxisFrame {
    let areas = mesh.triangle_areas();
    let total: f64 = areas.iter().sum();
    let centroid = mesh.area_centroid();
    let mut cov = Matrix3::zeros();
    for (t, a) in areas.iter().enumerate() {
        let [p, q, r] = mesh.corners(t);
        let d = (p + q + r) / 3.0 - centroid;
        cov += d * d.transpose() * (*a / total);
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors: Vec<Vec3> = order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    let scale = values[0].abs().max(f64::MIN_POSITIVE);
    let mut axes: Vec<Vec3> = Vec::with_capacity(3);
    let mut start = 0;
    while start < 3 {
        let mut end = start + 1;
        while end < 3 && (values[start] - values[end]).abs() <= EIGEN_TIE_TOLERANCE * scale {
            end += 1;
        }
        if end - start == 1 {
            axes.push(vectors[start]);
        } else {
            axes.extend(world_aligned(&vectors[start..end]));
        }
        start = end;
    }
    for a in axes.iter_mut().take(2) {
        let k = a.iamax();
        if a[k] < 0.0 {
            *a = -*a;
        }
    }
    axes[2] = axes[0].cross(&axes[1]).normalize();
    let axes = [axes[0], axes[1], axes[2]];
    let points = axes.map(|a| {
        [extremal_point(mesh, &centroid, &a), extremal_point(mesh, &centroid, &-a)]
    });
    AxisFrame { centroid, axes, eigenvalues: [values[0], values[1], values[2]], points }
}

fn sphere_image(param: &SphericalParameterization, loc: &BarycentricLocation) -> SpherePoint {
    let tri = param.source.triangles[loc.triangle_id];
    let p = (0..3).fold(Vec3::zeros(), |acc, k| acc + param.sphere_vec(tri[k]) * loc.coords[k]);
    SpherePoint::new(p).unwrap_or_else(|_| param.sphere_positions[tri[0]])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub id: usize,
    pub reflected: bool,
    pub mobius: MobiusTransform,
}

/// The 24 orientation-preserving assignments of the first frame's axis
/// points to the second's, each realised as the Möbius transform through the
/// three spherical images of `x+`, `y+`, `z+`.
pub fn initial_seeds(
    frame1: &AxisFrame,
    frame2: &AxisFrame,
    param1: &SphericalParameterization,
    param2: &SphericalParameterization,
    reflected: bool,
    first_id: usize,
) -> Vec<Result<Seed, MobiusError>> {
    let src = [0, 1, 2].map(|k| sphere_image(param1, &frame1.points[k][0].location));
    let signed = |axis: usize, sign: usize| (frame2.axes[axis] * if sign == 0 { 1.0 } else { -1.0 }, axis, sign);
    let mut out = Vec::with_capacity(24);
    for ax in 0..3 {
        for sx in 0..2 {
            let (u, _, _) = signed(ax, sx);
            for ay in (0..3).filter(|&a| a != ax) {
                for sy in 0..2 {
                    let (v, _, _) = signed(ay, sy);
                    let az = 3 - ax - ay;
                    let w = u.cross(&v);
                    let sz = if w.dot(&frame2.axes[az]) > 0.0 { 0 } else { 1 };
                    let dst = [(ax, sx), (ay, sy), (az, sz)]
                        .map(|(a, s)| sphere_image(param2, &frame2.points[a][s].location));
                    let id = first_id + out.len();
                    out.push(
                        MobiusTransform::from_three_points(src, dst)
                            .map(|mobius| Seed { id, reflected, mobius }),
                    );
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentOptions {
    pub gradient_step: f64,
    pub initial_step: f64,
    pub armijo: f64,
    pub shrink: f64,
    pub max_halvings: usize,
    pub gradient_tolerance: f64,
    pub relative_decrease_tolerance: f64,
    pub stall_window: usize,
    pub max_iterations: usize,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            gradient_step: 1e-5,
            initial_step: 0.1,
            armijo: 1e-4,
            shrink: 0.5,
            max_halvings: 30,
            gradient_tolerance: 1e-6,
            relative_decrease_tolerance: 1e-9,
            stall_window: 3,
            max_iterations: 500,
        }
    }
}

/// Spherical data for one surface, ready for pairwise comparisons.
#[derive(Debug, Clone)]
pub struct PreparedSurface {
    pub param: SphericalParameterization,
    pub frame: AxisFrame,
}

impl PreparedSurface {
    pub fn new(mesh: &TriangleMesh, opts: &FlattenOptions) -> Result<Self, FlattenError> {
        let param = conformal_to_sphere(mesh, opts)?;
        let frame = ellipsoid_axes(mesh);
        Ok(Self { param, frame })
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.param.source
    }
}

/// `E_sd` as a function of the Möbius transform between two prepared surfaces.
pub struct Objective<'a> {
    pub first: &'a SphericalParameterization,
    pub second: &'a SphericalParameterization,
    pub pair: SurfacePair<'a>,
}

impl<'a> Objective<'a> {
    pub fn new(first: &'a SphericalParameterization, second: &'a SphericalParameterization) -> Self {
        Self { first, second, pair: SurfacePair::new(&first.source, &second.source) }
    }

    pub fn correspondence(&self, m: &MobiusTransform) -> CorrespondenceMap {
        transfer(self.first, self.second, m)
    }

    pub fn breakdown(&self, m: &MobiusTransform) -> Result<(EnergyBreakdown, CorrespondenceMap), EnergyError> {
        let corr = self.correspondence(m);
        Ok((self.pair.symmetric_distortion(&corr)?, corr))
    }

    /// `e_sd`, or infinity where point location degenerates.
    pub fn energy(&self, m: &MobiusTransform) -> f64 {
        let corr = self.correspondence(m);
        match self.pair.check(&corr) {
            Ok(()) => {
                let f = self.pair.elastic_sum(&corr, crate::energy::Direction::Forward);
                let b = self.pair.elastic_sum(&corr, crate::energy::Direction::Backward);
                f.sqrt() + b.sqrt()
            }
            Err(_) => f64::INFINITY,
        }
    }

    /// Central-difference gradient in the chart at `base`.
    pub fn gradient(&self, base: &MobiusTransform, h: f64) -> [f64; 6] {
        std::array::from_fn(|k| {
            let mut plus = [0.0; 6];
            plus[k] = h;
            let mut minus = [0.0; 6];
            minus[k] = -h;
            let ep = self.energy(&MobiusChart::new(*base, plus).perturb());
            let em = self.energy(&MobiusChart::new(*base, minus).perturb());
            (ep - em) / (2.0 * h)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentResult {
    pub mobius: MobiusTransform,
    pub initial_energy: f64,
    pub energy: f64,
    pub iterations: usize,
    /// Stopped on the gradient or relative-decrease test.
    pub converged: bool,
    /// The line search exhausted its halvings; the iterate is the best found.
    pub stalled: bool,
    /// Energy after each accepted step, starting with the seed's.
    pub history: Vec<f64>,
}

/// Steepest descent with Armijo backtracking along the normalised negative
/// gradient in the six-parameter chart.
pub fn minimize(objective: &Objective, seed: &MobiusTransform, opts: &DescentOptions) -> DescentResult {
    let mut m = *seed;
    let mut e = objective.energy(&m);
    let initial_energy = e;
    let mut history = vec![e];
    let mut converged = false;
    let mut stalled = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations && e.is_finite() {
        let g = objective.gradient(&m, opts.gradient_step);
        let gnorm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if gnorm < opts.gradient_tolerance * (1.0 + e) || !gnorm.is_finite() {
            converged = gnorm.is_finite();
            break;
        }
        let dir = g.map(|x| -x / gnorm);
        let mut step = opts.initial_step;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial = MobiusChart::new(m, dir.map(|d| d * step)).perturb();
            let et = objective.energy(&trial);
            if et <= e - opts.armijo * step * gnorm && et < e {
                accepted = Some((trial, et));
                break;
            }
            step *= opts.shrink;
        }
        iterations += 1;
        let Some((next, en)) = accepted else {
            stalled = true;
            break;
        };
        m = next;
        e = en;
        history.push(e);
        let w = opts.stall_window;
        if history.len() > w {
            let old = history[history.len() - 1 - w];
            if (old - e) <= opts.relative_decrease_tolerance * old.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
    }
    DescentResult { mobius: m, initial_energy, energy: e, iterations, converged, stalled, history }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeedSelection {
    All,
    /// The first `n` seeds of each orientation class.
    First(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DsdOptions {
    pub normalize: bool,
    pub allow_reflection: bool,
    pub seeds: SeedSelection,
    pub flatten: FlattenOptions,
    pub descent: DescentOptions,
}

impl Default for DsdOptions {
    fn default() -> Self {
        Self {
            normalize: true,
            allow_reflection: false,
            seeds: SeedSelection::All,
            flatten: FlattenOptions::default(),
            descent: DescentOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub id: usize,
    pub reflected: bool,
    pub initial_energy: f64,
    pub energy: f64,
    pub iters: usize,
    pub converged: bool,
    pub stalled: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct DistanceResult {
    pub d_sd: f64,
    pub best_mobius: MobiusTransform,
    pub orientation_reversed: bool,
    pub per_seed: Vec<SeedOutcome>,
    pub energy: EnergyBreakdown,
    /// Map from the original first surface, with any reflection composed in.
    pub correspondence: CorrespondenceMap,
    pub warnings: Vec<String>,
}

impl DistanceResult {
    pub fn flagged_vertices(&self) -> usize {
        self.energy.flagged_forward + self.energy.flagged_backward
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "d_sd": self.d_sd,
            "orientation_reversed": self.orientation_reversed,
            "mobius": self.best_mobius.to_array(),
            "seeds": self.per_seed.iter().map(|s| serde_json::json!({
                "id": s.id,
                "energy": s.energy,
                "iters": s.iters,
                "converged": s.converged,
            })).collect::<Vec<_>>(),
            "flagged_vertices": self.flagged_vertices(),
            "energy": self.energy.to_json(),
        })
    }
}

fn select<T>(items: Vec<T>, sel: SeedSelection) -> Vec<T> {
    match sel {
        SeedSelection::All => items,
        SeedSelection::First(n) => items.into_iter().take(n).collect(),
    }
}

fn run_seeds(
    first: &PreparedSurface,
    second: &PreparedSurface,
    reflected: bool,
    first_id: usize,
    opts: &DsdOptions,
) -> Vec<(SeedOutcome, Option<MobiusTransform>)> {
    let objective = Objective::new(&first.param, &second.param);
    let seeds = select(
        initial_seeds(&first.frame, &second.frame, &first.param, &second.param, reflected, first_id),
        opts.seeds,
    );
    seeds
        .into_par_iter()
        .enumerate()
        .map(|(k, seed)| match seed {
            Ok(seed) => {
                let r = minimize(&objective, &seed.mobius, &opts.descent);
                let outcome = SeedOutcome {
                    id: seed.id,
                    reflected,
                    initial_energy: r.initial_energy,
                    energy: r.energy,
                    iters: r.iterations,
                    converged: r.converged,
                    stalled: r.stalled,
                    error: (!r.energy.is_finite()).then(|| "energy not finite".to_string()),
                };
                (outcome, r.energy.is_finite().then_some(r.mobius))
            }
            Err(e) => (
                SeedOutcome {
                    id: first_id + k,
                    reflected,
                    initial_energy: f64::NAN,
                    energy: f64::NAN,
                    iters: 0,
                    converged: false,
                    stalled: false,
                    error: Some(e.to_string()),
                },
                None,
            ),
        })
        .collect()
}

/// Rewrites a correspondence against `reflect(F1)` as one against `F1`:
/// reflection keeps vertex ids and reverses each triangle's corner order.
fn unreflect(mut corr: CorrespondenceMap) -> CorrespondenceMap {
    for l in &mut corr.backward {
        l.coords.reverse();
    }
    corr
}

/// Distance between two prepared surfaces; `first_reflected` is the
/// preparation of `reflect(first)` when reflections are allowed.
pub fn dsd_prepared(
    first: &PreparedSurface,
    first_reflected: Option<&PreparedSurface>,
    second: &PreparedSurface,
    opts: &DsdOptions,
) -> Result<DistanceResult, AlignError> {
    let mut runs = run_seeds(first, second, false, 0, opts);
    let n_oriented = runs.len();
    if let (true, Some(refl)) = (opts.allow_reflection, first_reflected) {
        runs.extend(run_seeds(refl, second, true, 24, opts));
    }
    let mut best: Option<(usize, f64)> = None;
    for (k, (outcome, m)) in runs.iter().enumerate() {
        if m.is_some() && best.is_none_or(|(_, e)| outcome.energy < e - ENERGY_TIE_TOLERANCE) {
            best = Some((k, outcome.energy));
        }
    }
    let Some((k, _)) = best else {
        return Err(AlignError::AllSeedsFailed(runs.len()));
    };
    let reflected = k >= n_oriented;
    let m = runs[k].1.expect("winner has a transform");
    let src = if reflected { first_reflected.expect("reflected runs need a surface") } else { first };
    let objective = Objective::new(&src.param, &second.param);
    let (energy, corr) = objective.breakdown(&m)?;
    let mut warnings: Vec<String> = first
        .param
        .warnings
        .iter()
        .chain(&second.param.warnings)
        .cloned()
        .collect();
    let failed = runs.iter().filter(|(o, _)| o.error.is_some()).count();
    if failed > 0 {
        warnings.push(format!("{failed} seeds failed"));
    }
    Ok(DistanceResult {
        d_sd: energy.e_sd,
        best_mobius: m,
        orientation_reversed: reflected,
        per_seed: runs.into_iter().map(|(o, _)| o).collect(),
        energy,
        correspondence: if reflected { unreflect(corr) } else { corr },
        warnings,
    })
}

fn prepare_mesh(mesh: &TriangleMesh, opts: &DsdOptions) -> Result<TriangleMesh, AlignError> {
    mesh.ensure_genus_zero()?;
    Ok(if opts.normalize { mesh.normalize_area()? } else { mesh.clone() })
}

/// Symmetric distortion distance between two genus-zero meshes.
pub fn dsd(mesh1: &TriangleMesh, mesh2: &TriangleMesh, opts: &DsdOptions) -> Result<DistanceResult, AlignError> {
    let m1 = prepare_mesh(mesh1, opts)?;
    let m2 = prepare_mesh(mesh2, opts)?;
    let (a, b) = rayon::join(
        || PreparedSurface::new(&m1, &opts.flatten),
        || PreparedSurface::new(&m2, &opts.flatten),
    );
    let (a, b) = (a?, b?);
    let refl = if opts.allow_reflection {
        Some(PreparedSurface::new(&m1.reflect(), &opts.flatten)?)
    } else {
        None
    };
    dsd_prepared(&a, refl.as_ref(), &b, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub i: usize,
    pub j: usize,
    pub d_sd: Option<f64>,
    pub orientation_reversed: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    /// `NaN` marks failed pairs.
    pub values: Vec<Vec<f64>>,
    pub pairs: Vec<PairSummary>,
}

impl DistanceMatrix {
    /// Square table headed by `names`; failed pairs are left empty.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W, names: &[String]) -> std::io::Result<()> {
        writeln!(out, "# gsd-csv v1 matrix size={}", self.values.len())?;
        let mut w = csv::Writer::from_writer(out);
        let header = std::iter::once("mesh".to_string()).chain(names.iter().cloned());
        w.write_record(header).map_err(std::io::Error::other)?;
        for (name, row) in names.iter().zip(&self.values) {
            let cells = row.iter().map(|&d| if d.is_nan() { String::new() } else { crate::io::sig9(d) });
            w.write_record(std::iter::once(name.clone()).chain(cells)).map_err(std::io::Error::other)?;
        }
        w.flush()
    }
}

/// All pairwise distances, each unordered pair computed once.
pub fn distance_matrix(meshes: &[TriangleMesh], opts: &DsdOptions) -> DistanceMatrix {
    let n = meshes.len();
    let prepared: Vec<Result<(PreparedSurface, Option<PreparedSurface>), String>> = meshes
        .par_iter()
        .map(|mesh| {
            let m = prepare_mesh(mesh, opts).map_err(|e| e.to_string())?;
            let p = PreparedSurface::new(&m, &opts.flatten).map_err(|e| e.to_string())?;
            let r = if opts.allow_reflection {
                Some(PreparedSurface::new(&m.reflect(), &opts.flatten).map_err(|e| e.to_string())?)
            } else {
                None
            };
            Ok((p, r))
        })
        .collect();
    let index: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let pairs: Vec<PairSummary> = index
        .par_iter()
        .map(|&(i, j)| {
            let result = match (&prepared[i], &prepared[j]) {
                (Ok((a, ar)), Ok((b, _))) => dsd_prepared(a, ar.as_ref(), b, opts).map_err(|e| e.to_string()),
                (Err(e), _) => Err(format!("mesh {i}: {e}")),
                (_, Err(e)) => Err(format!("mesh {j}: {e}")),
            };
            match result {
                Ok(r) => PairSummary {
                    i,
                    j,
                    d_sd: Some(r.d_sd),
                    orientation_reversed: r.orientation_reversed,
                    error: None,
                },
                Err(e) => PairSummary { i, j, d_sd: None, orientation_reversed: false, error: Some(e) },
            }
        })
        .collect();
    let mut values = vec![vec![0.0; n]; n];
    for p in &pairs {
        let d = p.d_sd.unwrap_or(f64::NAN);
        values[p.i][p.j] = d;
        values[p.j][p.i] = d;
    }
    DistanceMatrix { values, pairs }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricAudit {
    pub size: usize,
    pub max_diagonal: f64,
    pub max_symmetry_violation: f64,
    /// Largest `d(i,k) - d(i,j) - d(j,k)` over distinct ordered triples.
    pub max_triangle_violation: f64,
    /// The same violation divided by `d(i,k)`.
    pub max_relative_triangle_violation: f64,
    pub triangle_checks: usize,
    pub negative_entries: usize,
    pub missing_entries: usize,
}

pub fn metric_audit(d: &[Vec<f64>]) -> MetricAudit {
    let n = d.len();
    let mut audit = MetricAudit {
        size: n,
        max_diagonal: 0.0,
        max_symmetry_violation: 0.0,
        max_triangle_violation: f64::NEG_INFINITY,
        max_relative_triangle_violation: f64::NEG_INFINITY,
        triangle_checks: 0,
        negative_entries: 0,
        missing_entries: 0,
    };
    for i in 0..n {
        audit.max_diagonal = audit.max_diagonal.max(d[i][i].abs());
        for j in 0..n {
            if d[i][j].is_nan() {
                audit.missing_entries += 1;
                continue;
            }
            if d[i][j] < 0.0 {
                audit.negative_entries += 1;
            }
            audit.max_symmetry_violation = audit.max_symmetry_violation.max((d[i][j] - d[j][i]).abs());
        }
    }
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if i == j || j == k || i == k {
                    continue;
                }
                let v = d[i][k] - d[i][j] - d[j][k];
                if v.is_nan() {
                    continue;
                }
                audit.triangle_checks += 1;
                audit.max_triangle_violation = audit.max_triangle_violation.max(v);
                if d[i][k] > 0.0 {
                    audit.max_relative_triangle_violation =
                        audit.max_relative_triangle_violation.max(v / d[i][k]);
                }
            }
        }
    }
    if audit.triangle_checks == 0 {
        audit.max_triangle_violation = 0.0;
        audit.max_relative_triangle_violation = 0.0;
    }
    audit
}
