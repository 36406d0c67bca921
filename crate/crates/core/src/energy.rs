//! Vertex correspondences induced by Möbius transforms between spherical
//! parameterizations, and the discrete distortion energies evaluated on them.
//!
//! Every energy is an edge sum over the domain mesh of some function of the
//! stretch ratio `r = l(f(e)) / l(e)` weighted by `A_e / 3`, where `A_e` is
//! the total area of the two triangles sharing `e` and `l(f(e))` is the chord
//! length between the embedded images of the edge's endpoints.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flatten::SphericalParameterization;
use crate::mesh::{TriangleMesh, Vec3};
use crate::mobius::MobiusTransform;
use crate::sphere::{embed, BarycentricLocation, SpherePoint};

/// Largest tolerated fraction of vertices whose point location fell back to
/// the nearest triangle.
pub const MAX_FALLBACK_FRACTION: f64 = 1e-3;
pub const RATIO_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("{flagged} of {total} vertices needed fallback point location")]
    TooManyFallbacks { flagged: usize, total: usize },
    #[error("L^p exponent must be at least 1, got {0}")]
    InvalidExponent(f64),
    #[error("correspondence has {got} entries for a mesh with {expected} vertices")]
    SizeMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

/// Per-edge quantities of a mesh that every energy evaluation reuses.
#[derive(Debug, Clone)]
pub struct EdgeGeometry {
    pub edges: Vec<[usize; 2]>,
    pub lengths: Vec<f64>,
    /// `A_e / 3`; sums to the surface area.
    pub weights: Vec<f64>,
    pub area: f64,
}

impl EdgeGeometry {
    pub fn new(mesh: &TriangleMesh) -> Self {
        let table = mesh.edge_table();
        let weights: Vec<f64> = mesh.edge_area_weights(&table).iter().map(|a| a / 3.0).collect();
        let lengths = table
            .edges
            .iter()
            .map(|&[i, j]| (mesh.vertices[i] - mesh.vertices[j]).norm())
            .collect();
        Self { area: weights.iter().sum(), edges: table.edges, lengths, weights }
    }

    fn sum(&self, f: impl Fn(f64) -> f64, ratios: &[f64]) -> f64 {
        ratios.iter().zip(&self.weights).map(|(&r, w)| f(r) * w).sum()
    }
}

/// `f = c2^-1 ∘ m ∘ c1` and its inverse, sampled at the vertices of both meshes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceMap {
    pub mobius: MobiusTransform,
    /// Image of each vertex of the first mesh on the second.
    pub forward: Vec<BarycentricLocation>,
    /// Image of each vertex of the second mesh on the first.
    pub backward: Vec<BarycentricLocation>,
    pub forward_fallback: Vec<bool>,
    pub backward_fallback: Vec<bool>,
}

fn vertex_locations(mesh: &TriangleMesh) -> Vec<BarycentricLocation> {
    let mut loc = vec![None; mesh.num_vertices()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for (k, &v) in tri.iter().enumerate() {
            if loc[v].is_none() {
                let mut coords = [0.0; 3];
                coords[k] = 1.0;
                loc[v] = Some(BarycentricLocation { triangle_id: t, coords });
            }
        }
    }
    loc.into_iter()
        .map(|l| l.unwrap_or(BarycentricLocation { triangle_id: 0, coords: [1.0 / 3.0; 3] }))
        .collect()
}

impl CorrespondenceMap {
    /// Vertex `i` to vertex `i` between two meshes with shared connectivity.
    pub fn identity(mesh: &TriangleMesh) -> Self {
        let loc = vertex_locations(mesh);
        let n = loc.len();
        Self {
            mobius: MobiusTransform::identity(),
            forward: loc.clone(),
            backward: loc,
            forward_fallback: vec![false; n],
            backward_fallback: vec![false; n],
        }
    }

    /// The same correspondence seen from the other surface.
    pub fn swapped(&self) -> Self {
        Self {
            mobius: self.mobius.inverse(),
            forward: self.backward.clone(),
            backward: self.forward.clone(),
            forward_fallback: self.backward_fallback.clone(),
            backward_fallback: self.forward_fallback.clone(),
        }
    }

    pub fn flagged(&self, direction: Direction) -> usize {
        let flags = match direction {
            Direction::Forward => &self.forward_fallback,
            Direction::Backward => &self.backward_fallback,
        };
        flags.iter().filter(|&&f| f).count()
    }

    /// Versioned text export: one `triangle b0 b1 b2` row per vertex.
    pub fn write_table<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# gsd-corr v1")?;
        writeln!(w, "mobius {}", fmt_row(&self.mobius.to_array()))?;
        for (name, locs) in [("forward", &self.forward), ("backward", &self.backward)] {
            writeln!(w, "{name} {}", locs.len())?;
            for l in locs {
                writeln!(w, "{} {}", l.triangle_id, fmt_row(&l.coords))?;
            }
        }
        Ok(())
    }
}

fn fmt_row(v: &[f64]) -> String {
    v.iter().map(|x| crate::io::sig9(*x)).collect::<Vec<_>>().join(" ")
}

fn locate_all(
    from: &[SpherePoint],
    to: &SphericalParameterization,
    m: &MobiusTransform,
) -> (Vec<BarycentricLocation>, Vec<bool>) {
    from.par_iter()
        .map(|p| {
            let hit = to.locator().locate(&m.apply(p));
            (hit.location, hit.fallback)
        })
        .unzip()
}

/// Pushes each surface's vertices through `m` (or `m^-1`) and locates them on
/// the other surface's spherical mesh.
pub fn transfer(
    first: &SphericalParameterization,
    second: &SphericalParameterization,
    m: &MobiusTransform,
) -> CorrespondenceMap {
    let inv = m.inverse();
    let ((forward, forward_fallback), (backward, backward_fallback)) = rayon::join(
        || locate_all(&first.sphere_positions, second, m),
        || locate_all(&second.sphere_positions, first, &inv),
    );
    CorrespondenceMap { mobius: *m, forward, backward, forward_fallback, backward_fallback }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub e_sd: f64,
    pub forward_elastic: f64,
    pub backward_elastic: f64,
    pub flagged_forward: usize,
    pub flagged_backward: usize,
    #[serde(skip)]
    pub per_edge_forward: Vec<f64>,
    #[serde(skip)]
    pub per_edge_backward: Vec<f64>,
    #[serde(skip)]
    pub area_first: f64,
    #[serde(skip)]
    pub area_second: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistortionField {
    /// Mean `|r - 1|` over the forward edges incident to each vertex of the first mesh.
    pub on_first: Vec<f64>,
    /// `on_first` carried to the second mesh through the backward map.
    pub on_second: Vec<f64>,
}

/// Two meshes with their precomputed edge geometry; all energies are
/// evaluated against a [`CorrespondenceMap`] between them.
#[derive(Debug, Clone)]
pub struct SurfacePair<'a> {
    pub first: &'a TriangleMesh,
    pub second: &'a TriangleMesh,
    pub first_edges: EdgeGeometry,
    pub second_edges: EdgeGeometry,
}

impl<'a> SurfacePair<'a> {
    pub fn new(first: &'a TriangleMesh, second: &'a TriangleMesh) -> Self {
        Self {
            first,
            second,
            first_edges: EdgeGeometry::new(first),
            second_edges: EdgeGeometry::new(second),
        }
    }

    fn sides(&self, direction: Direction) -> (&EdgeGeometry, &TriangleMesh) {
        match direction {
            Direction::Forward => (&self.first_edges, self.second),
            Direction::Backward => (&self.second_edges, self.first),
        }
    }

    /// Stretch ratio of every domain edge.
    pub fn ratios(&self, corr: &CorrespondenceMap, direction: Direction) -> Vec<f64> {
        let (domain, codomain) = self.sides(direction);
        let images = match direction {
            Direction::Forward => &corr.forward,
            Direction::Backward => &corr.backward,
        };
        let points: Vec<Vec3> = images.iter().map(|l| embed(codomain, l)).collect();
        domain
            .edges
            .iter()
            .zip(&domain.lengths)
            .map(|(&[i, j], l)| (points[i] - points[j]).norm() / l)
            .collect()
    }

    pub fn check(&self, corr: &CorrespondenceMap) -> Result<(), EnergyError> {
        for (expected, got) in [
            (self.first.num_vertices(), corr.forward.len()),
            (self.second.num_vertices(), corr.backward.len()),
        ] {
            if expected != got {
                return Err(EnergyError::SizeMismatch { expected, got });
            }
        }
        let flagged = corr.flagged(Direction::Forward) + corr.flagged(Direction::Backward);
        let total = corr.forward.len() + corr.backward.len();
        if flagged as f64 > MAX_FALLBACK_FRACTION * total as f64 {
            return Err(EnergyError::TooManyFallbacks { flagged, total });
        }
        Ok(())
    }

    fn weigh(&self, corr: &CorrespondenceMap, direction: Direction, f: impl Fn(f64) -> f64) -> f64 {
        let (domain, _) = self.sides(direction);
        domain.sum(f, &self.ratios(corr, direction))
    }

    /// `L(f) = Σ (r - 1)^2 A/3`.
    pub fn elastic_sum(&self, corr: &CorrespondenceMap, direction: Direction) -> f64 {
        self.weigh(corr, direction, |r| (r - 1.0) * (r - 1.0))
    }

    /// `E_1 = Σ r A/3`.
    pub fn average_stretch(&self, corr: &CorrespondenceMap, direction: Direction) -> f64 {
        self.weigh(corr, direction, |r| r)
    }

    /// `E_D = Σ r^2 A/3`.
    pub fn dirichlet_energy(&self, corr: &CorrespondenceMap, direction: Direction) -> f64 {
        self.weigh(corr, direction, |r| r * r)
    }

    /// `[Σ |log r|^p A/3]^(1/p)`.
    pub fn lp_energy(
        &self,
        corr: &CorrespondenceMap,
        direction: Direction,
        p: f64,
    ) -> Result<f64, EnergyError> {
        if !(p >= 1.0) {
            return Err(EnergyError::InvalidExponent(p));
        }
        Ok(self.weigh(corr, direction, |r| r.max(RATIO_FLOOR).ln().abs().powf(p)).powf(1.0 / p))
    }

    /// `L(f) - (A_1 + A_2 - 2 E_1(f))`, which vanishes for conformal maps in
    /// the smooth setting.
    pub fn lemma_e1_residual(&self, corr: &CorrespondenceMap) -> f64 {
        let ratios = self.ratios(corr, Direction::Forward);
        let g = &self.first_edges;
        let elastic = g.sum(|r| (r - 1.0) * (r - 1.0), &ratios);
        let e1 = g.sum(|r| r, &ratios);
        elastic - (g.area + self.second_edges.area - 2.0 * e1)
    }

    pub fn symmetric_distortion(&self, corr: &CorrespondenceMap) -> Result<EnergyBreakdown, EnergyError> {
        self.check(corr)?;
        let (per_edge_forward, per_edge_backward) = rayon::join(
            || self.ratios(corr, Direction::Forward),
            || self.ratios(corr, Direction::Backward),
        );
        let elastic = |r: f64| (r - 1.0) * (r - 1.0);
        let forward_elastic = self.first_edges.sum(elastic, &per_edge_forward);
        let backward_elastic = self.second_edges.sum(elastic, &per_edge_backward);
        Ok(EnergyBreakdown {
            e_sd: forward_elastic.sqrt() + backward_elastic.sqrt(),
            forward_elastic,
            backward_elastic,
            flagged_forward: corr.flagged(Direction::Forward),
            flagged_backward: corr.flagged(Direction::Backward),
            per_edge_forward,
            per_edge_backward,
            area_first: self.first_edges.area,
            area_second: self.second_edges.area,
        })
    }

    pub fn distortion_field(&self, corr: &CorrespondenceMap) -> DistortionField {
        let ratios = self.ratios(corr, Direction::Forward);
        let n = self.first.num_vertices();
        let mut sum = vec![0.0; n];
        let mut count = vec![0usize; n];
        for (&[i, j], r) in self.first_edges.edges.iter().zip(&ratios) {
            for v in [i, j] {
                sum[v] += (r - 1.0).abs();
                count[v] += 1;
            }
        }
        let on_first: Vec<f64> =
            sum.iter().zip(&count).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect();
        let on_second = corr
            .backward
            .iter()
            .map(|l| {
                let tri = self.first.triangles[l.triangle_id];
                (0..3).map(|k| l.coords[k] * on_first[tri[k]]).sum()
            })
            .collect();
        DistortionField { on_first, on_second }
    }
}

impl EnergyBreakdown {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("breakdown serializes")
    }
}
