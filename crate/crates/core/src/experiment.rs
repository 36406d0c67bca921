//! Runners for the synthetic experiments: area rescaling, the ellipsoid
//! family, radial noise, subdivision invariance and chirality.
//!
//! Every run produces one row per (grid point, repetition). The CSV table is
//! byte-reproducible for a given configuration; wall-clock timings are kept
//! out of it and written to a separate timing table.

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::align::{dsd, DistanceResult, DsdOptions};
use crate::energy::SurfacePair;
use crate::io::{sig9, write_mesh, MeshFormat};
use crate::mesh::{MeshError, TriangleMesh};
use crate::oracle::rescaling_distance;
use crate::shapes::{ellipsoid, geodesic_sphere, icosphere, noisy_sphere, random_sphere, three_bump};

pub const CSV_VERSION: &str = "gsd-csv v1";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown experiment `{0}` (expected rescale, ellipsoid, noise, subdivision or chirality)")]
    UnknownKind(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    /// Unit sphere against spheres of the given radii, without area normalization.
    Rescale,
    /// Unit sphere against ellipsoids `(a, 1, 1)`.
    Ellipsoid,
    /// Noisy spheres against the clean sphere; grid values are noise multiples.
    Noise,
    /// A ~1000-vertex sphere against its own midpoint subdivisions; grid
    /// values are subdivision levels (level k gives 4^k times the faces).
    Subdivision,
    /// Three-bump surfaces at rotation angle θ against θ = 0, with and
    /// without reflections.
    Chirality,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] =
        [Self::Rescale, Self::Ellipsoid, Self::Noise, Self::Subdivision, Self::Chirality];

    pub fn name(self) -> &'static str {
        match self {
            Self::Rescale => "rescale",
            Self::Ellipsoid => "ellipsoid",
            Self::Noise => "noise",
            Self::Subdivision => "subdivision",
            Self::Chirality => "chirality",
        }
    }

    /// Column name of the grid parameter.
    pub fn parameter(self) -> &'static str {
        match self {
            Self::Rescale => "radius",
            Self::Ellipsoid => "a",
            Self::Noise => "noise_multiple",
            Self::Subdivision => "level",
            Self::Chirality => "theta",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ExperimentError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub grid: Vec<f64>,
    /// Icosphere subdivision level of the generated shapes. The subdivision
    /// experiment instead uses it as the geodesic frequency of its base mesh.
    pub resolution: u32,
    pub seed: u64,
    pub repetitions: usize,
    pub output_dir: Option<PathBuf>,
    pub dsd: DsdOptions,
}

impl ExperimentConfig {
    /// Default grid and resolution for each experiment.
    pub fn preset(kind: ExperimentKind) -> Self {
        let mut dsd = DsdOptions::default();
        let (grid, resolution) = match kind {
            ExperimentKind::Rescale => {
                dsd.normalize = false;
                (vec![1.0, 1.5, 2.0, 3.0], 3)
            }
            ExperimentKind::Ellipsoid => (vec![1.0, 1.2, 1.4, 1.6, 1.8, 2.0], 3),
            ExperimentKind::Noise => {
                // Edge-scale noise makes per-triangle conformality poor for
                // any map, so the hard gate would reject every noisy row.
                dsd.flatten.qc_fail = f64::INFINITY;
                (vec![0.0, 0.5, 1.0, 2.0, 4.0], 3)
            }
            ExperimentKind::Subdivision => (vec![0.0, 1.0, 2.0], 10),
            ExperimentKind::Chirality => {
                dsd.allow_reflection = true;
                let pi = std::f64::consts::PI;
                (vec![0.0, 0.25 * pi, 0.5 * pi, 0.75 * pi, pi], 3)
            }
        };
        Self { kind, grid, resolution, seed: 7, repetitions: 1, output_dir: None, dsd }
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        if self.repetitions == 0 {
            return Err(ExperimentError::Config("repetitions must be at least 1".into()));
        }
        if self.grid.is_empty() {
            return Err(ExperimentError::Config("empty parameter grid".into()));
        }
        let bad = |ok: fn(f64) -> bool| self.grid.iter().find(|&&v| !ok(v)).copied();
        let offending = match self.kind {
            ExperimentKind::Rescale | ExperimentKind::Ellipsoid => bad(|v| v > 0.0 && v.is_finite()),
            ExperimentKind::Noise => bad(|v| v >= 0.0 && v.is_finite()),
            ExperimentKind::Subdivision => bad(|v| v >= 0.0 && v.fract() == 0.0 && v <= 4.0),
            ExperimentKind::Chirality => bad(|v| (0.0..=std::f64::consts::PI).contains(&v)),
        };
        if let Some(v) = offending {
            return Err(ExperimentError::Config(format!(
                "grid value {v} is not valid for `{}`",
                self.kind.parameter()
            )));
        }
        if self.kind == ExperimentKind::Subdivision && self.resolution < 1 {
            return Err(ExperimentError::Config("geodesic frequency must be at least 1".into()));
        }
        Ok(())
    }

    fn header(&self) -> String {
        format!(
            "# {CSV_VERSION} experiment={} seed={} resolution={} repetitions={} normalize={} allow_reflection={} qc_gate={}",
            self.kind,
            self.seed,
            self.resolution,
            self.repetitions,
            self.dsd.normalize,
            self.dsd.allow_reflection,
            self.dsd.flatten.qc_fail,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub index: usize,
    pub repetition: usize,
    pub parameter: f64,
    /// Which surfaces were compared, e.g. `geodesic` or `random` base meshes.
    pub label: String,
    pub rng_seed: u64,
    /// Best distance over orientation-preserving seeds.
    pub d_sd: Option<f64>,
    /// Best distance including reflected seeds, when reflections are allowed.
    pub d_sd_unoriented: Option<f64>,
    pub orientation_reversed: Option<bool>,
    /// Closed-form value where the theory provides one.
    pub reference: Option<f64>,
    pub best_seed: Option<usize>,
    pub seed_energies: Vec<f64>,
    pub iterations: usize,
    pub flagged_vertices: usize,
    pub warnings: Vec<String>,
    pub error: Option<String>,
    pub runtime_seconds: f64,
}

impl ExperimentRow {
    pub fn is_flagged(&self) -> bool {
        self.error.is_none() && (!self.warnings.is_empty() || self.flagged_vertices > 0)
    }

    pub fn status(&self) -> &'static str {
        match (&self.error, self.is_flagged()) {
            (Some(_), _) => "failed",
            (None, true) => "flagged",
            (None, false) => "ok",
        }
    }

    fn note(&self) -> String {
        match &self.error {
            Some(e) => e.clone(),
            None => self.warnings.join("; "),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ExperimentRow>,
    /// Files written, in order.
    pub outputs: Vec<PathBuf>,
}

impl ExperimentReport {
    /// The CSV table as written to disk.
    pub fn to_csv(&self) -> Result<String, ExperimentError> {
        let mut out = Vec::new();
        write_csv(&mut out, &self.config, &self.rows)?;
        Ok(String::from_utf8(out).expect("csv output is utf-8"))
    }

    /// `d_sd` by grid point, averaged over repetitions that succeeded.
    pub fn mean_by_parameter(&self) -> Vec<(f64, Option<f64>)> {
        self.config
            .grid
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let vals: Vec<f64> =
                    self.rows.iter().filter(|r| r.index == i).filter_map(|r| r.d_sd).collect();
                (p, (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64))
            })
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let c = &self.config;
        serde_json::json!({
            "format": CSV_VERSION,
            "experiment": c.kind,
            "parameter": c.kind.parameter(),
            "grid": c.grid,
            "resolution": c.resolution,
            "seed": c.seed,
            "repetitions": c.repetitions,
            "normalize": c.dsd.normalize,
            "allow_reflection": c.dsd.allow_reflection,
            "qc_gate": if c.dsd.flatten.qc_fail.is_finite() { Some(c.dsd.flatten.qc_fail) } else { None },
            "substitutions": substitutions(c.kind),
            "rows": self.rows,
        })
    }
}

fn substitutions(kind: ExperimentKind) -> Vec<&'static str> {
    match kind {
        ExperimentKind::Subdivision => vec![
            "uniform 1000-point sphere replaced by a frequency-10 geodesic sphere (1002 vertices)",
            "random-placement base mesh is the convex hull of seeded uniform points, without point relaxation",
        ],
        ExperimentKind::Noise => vec!["noise is applied to a unit icosphere; the QC hard gate is disabled by default"],
        _ => Vec::new(),
    }
}

struct Job {
    index: usize,
    repetition: usize,
    parameter: f64,
    label: &'static str,
    rng_seed: u64,
}

fn jobs(config: &ExperimentConfig) -> Vec<Job> {
    let mut out = Vec::new();
    for (index, &parameter) in config.grid.iter().enumerate() {
        for repetition in 0..config.repetitions {
            let rng_seed = config.seed.wrapping_add(repetition as u64);
            let labels: &[&'static str] = match config.kind {
                ExperimentKind::Subdivision => &["geodesic", "random"],
                ExperimentKind::Rescale => &["unit-vs-radius"],
                ExperimentKind::Ellipsoid => &["sphere-vs-ellipsoid"],
                ExperimentKind::Noise => &["noisy-vs-round"],
                ExperimentKind::Chirality => &["theta-vs-zero"],
            };
            for &label in labels {
                out.push(Job { index, repetition, parameter, label, rng_seed });
            }
        }
    }
    out
}

fn surfaces(config: &ExperimentConfig, job: &Job) -> Result<(TriangleMesh, TriangleMesh), MeshError> {
    let res = config.resolution;
    Ok(match config.kind {
        ExperimentKind::Rescale => (icosphere(res, 1.0), icosphere(res, job.parameter)),
        ExperimentKind::Ellipsoid => (icosphere(res, 1.0), ellipsoid(job.parameter, 1.0, 1.0, res)),
        ExperimentKind::Noise => (noisy_sphere(res, job.parameter, job.rng_seed)?, icosphere(res, 1.0)),
        ExperimentKind::Subdivision => {
            let base = match job.label {
                "random" => random_sphere(1000, job.rng_seed)?,
                _ => geodesic_sphere(res as usize, 1.0),
            };
            let mut fine = base.clone();
            for _ in 0..job.parameter as u32 {
                fine = fine.midpoint_subdivide(None);
            }
            (base, fine)
        }
        ExperimentKind::Chirality => (three_bump(job.parameter, res), three_bump(0.0, res)),
    })
}

fn fill_from(row: &mut ExperimentRow, r: &DistanceResult, reflections: bool) {
    let oriented = r
        .per_seed
        .iter()
        .filter(|s| !s.reflected && s.energy.is_finite())
        .map(|s| s.energy)
        .fold(f64::INFINITY, f64::min);
    row.d_sd = if reflections { oriented.is_finite().then_some(oriented) } else { Some(r.d_sd) };
    if reflections {
        row.d_sd_unoriented = Some(r.d_sd);
        row.orientation_reversed = Some(r.orientation_reversed);
    }
    row.best_seed = r
        .per_seed
        .iter()
        .filter(|s| s.energy.is_finite())
        .min_by(|a, b| a.energy.total_cmp(&b.energy).then(a.id.cmp(&b.id)))
        .map(|s| s.id);
    row.seed_energies = r.per_seed.iter().map(|s| s.energy).collect();
    row.iterations = r.per_seed.iter().map(|s| s.iters).sum();
    row.flagged_vertices = r.flagged_vertices();
    row.warnings = r.warnings.clone();
}

fn prepared(mesh: &TriangleMesh, opts: &DsdOptions) -> Result<TriangleMesh, MeshError> {
    if opts.normalize {
        mesh.normalize_area()
    } else {
        Ok(mesh.clone())
    }
}

fn run_job(config: &ExperimentConfig, job: &Job, mesh_dir: Option<&Path>) -> ExperimentRow {
    let start = Instant::now();
    let mut row = ExperimentRow {
        index: job.index,
        repetition: job.repetition,
        parameter: job.parameter,
        label: job.label.to_string(),
        rng_seed: job.rng_seed,
        d_sd: None,
        d_sd_unoriented: None,
        orientation_reversed: None,
        reference: None,
        best_seed: None,
        seed_energies: Vec::new(),
        iterations: 0,
        flagged_vertices: 0,
        warnings: Vec::new(),
        error: None,
        runtime_seconds: 0.0,
    };
    let result = surfaces(config, job).map_err(|e| e.to_string()).and_then(|(m1, m2)| {
        if config.kind == ExperimentKind::Rescale {
            row.reference = rescaling_distance(m1.surface_area(), m2.surface_area()).ok();
        }
        let r = dsd(&m1, &m2, &config.dsd).map_err(|e| e.to_string())?;
        fill_from(&mut row, &r, config.dsd.allow_reflection);
        if let (true, Some(dir)) = (row.is_flagged(), mesh_dir) {
            let path = dir.join(mesh_file_name(config.kind, &row));
            write_field(&m1, &m2, &r, &config.dsd, &path).map_err(|e| e.to_string())?;
        }
        Ok(())
    });
    row.error = result.err();
    row.runtime_seconds = start.elapsed().as_secs_f64();
    row
}

fn mesh_file_name(kind: ExperimentKind, row: &ExperimentRow) -> String {
    format!("{kind}_row{}_{}_rep{}.ply", row.index, row.label, row.repetition)
}

/// Writes the first surface colored by its per-vertex distortion.
fn write_field(
    m1: &TriangleMesh,
    m2: &TriangleMesh,
    r: &DistanceResult,
    opts: &DsdOptions,
    path: &Path,
) -> Result<(), MeshError> {
    let (a, b) = (prepared(m1, opts)?, prepared(m2, opts)?);
    let field = SurfacePair::new(&a, &b).distortion_field(&r.correspondence);
    write_mesh(BufWriter::new(File::create(path)?), &a, Some(&field.on_first), MeshFormat::Ply)
}

fn opt(x: Option<f64>) -> String {
    x.map(sig9).unwrap_or_default()
}

fn write_csv<W: std::io::Write>(
    mut out: W,
    config: &ExperimentConfig,
    rows: &[ExperimentRow],
) -> Result<(), ExperimentError> {
    writeln!(out, "{}", config.header())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "row",
        "repetition",
        config.kind.parameter(),
        "label",
        "rng_seed",
        "d_sd",
        "d_sd_unoriented",
        "orientation_reversed",
        "reference",
        "best_seed",
        "iterations",
        "flagged_vertices",
        "seed_energies",
        "status",
        "note",
    ])?;
    for r in rows {
        w.write_record([
            r.index.to_string(),
            r.repetition.to_string(),
            sig9(r.parameter),
            r.label.clone(),
            r.rng_seed.to_string(),
            opt(r.d_sd),
            opt(r.d_sd_unoriented),
            r.orientation_reversed.map(|b| b.to_string()).unwrap_or_default(),
            opt(r.reference),
            r.best_seed.map(|s| s.to_string()).unwrap_or_default(),
            r.iterations.to_string(),
            r.flagged_vertices.to_string(),
            r.seed_energies.iter().map(|&e| sig9(e)).collect::<Vec<_>>().join(";"),
            r.status().to_string(),
            r.note(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_timing(path: &Path, config: &ExperimentConfig, rows: &[ExperimentRow]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["row", "repetition", config.kind.parameter(), "label", "runtime_seconds"])?;
    for r in rows {
        w.write_record([
            r.index.to_string(),
            r.repetition.to_string(),
            sig9(r.parameter),
            r.label.clone(),
            format!("{:.3}", r.runtime_seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every grid point (concurrently on the current rayon pool) and, when
/// an output directory is set, writes `<name>.csv`, `<name>.json`,
/// `<name>_timing.csv` and a colored PLY for each flagged row.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    config.validate()?;
    if let Some(dir) = &config.output_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mesh_dir = config.output_dir.as_deref();
    let rows: Vec<ExperimentRow> =
        jobs(config).par_iter().map(|job| run_job(config, job, mesh_dir)).collect();
    let mut report = ExperimentReport { config: config.clone(), rows, outputs: Vec::new() };
    if let Some(dir) = &config.output_dir {
        let name = config.kind.name();
        let csv_path = dir.join(format!("{name}.csv"));
        write_csv(BufWriter::new(File::create(&csv_path)?), config, &report.rows)?;
        let json_path = dir.join(format!("{name}.json"));
        serde_json::to_writer_pretty(BufWriter::new(File::create(&json_path)?), &report.to_json())
            .map_err(std::io::Error::from)?;
        let timing_path = dir.join(format!("{name}_timing.csv"));
        write_timing(&timing_path, config, &report.rows)?;
        report.outputs = vec![csv_path, json_path, timing_path];
        report.outputs.extend(
            report
                .rows
                .iter()
                .filter(|r| r.is_flagged())
                .map(|r| dir.join(mesh_file_name(config.kind, r))),
        );
    }
    Ok(report)
}
