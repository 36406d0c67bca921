use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

use gsd::align::{distance_matrix, dsd, metric_audit, AlignError, DsdOptions, SeedSelection};
use gsd::energy::SurfacePair;
use gsd::experiment::{run_experiment, ExperimentConfig, ExperimentError, ExperimentKind};
use gsd::flatten::{conformal_to_sphere, FlattenError};
use gsd::io::{load_mesh_file, save_mesh_file, sig9, MeshFormat};
use gsd::mesh::MeshError;
use gsd::oracle::{
    e1_scaling_any, elastic_identity, lambda_closed_form, quadrature_e1, rescaling_distance, LambdaKind,
    OracleError, QuadratureSpec,
};
use gsd::shapes;

/// Symmetric distortion distance between genus-zero surfaces.
#[derive(Parser)]
#[command(name = "gsd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Distance between two meshes.
    Compare {
        first: PathBuf,
        second: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Write the DistanceResult as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Write the per-vertex correspondence table.
        #[arg(long)]
        correspondence: Option<PathBuf>,
        /// Write the first mesh colored by distortion (PLY, or OFF/OBJ plus sidecar).
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Pairwise distances between all meshes in a directory.
    Matrix {
        dir: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Write the matrix as CSV (stdout otherwise).
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Check the metric axioms and print the report.
        #[arg(long)]
        audit: bool,
        /// Write per-pair summaries and the audit as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Closed-form and quadrature reference values.
    Oracle {
        #[command(subcommand)]
        query: OracleQuery,
    },
    /// Run one of the synthetic experiments.
    Experiment {
        /// rescale, ellipsoid, noise, subdivision or chirality.
        kind: ExperimentKind,
        /// Override the parameter grid (comma separated).
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        /// Subdivision level (geodesic frequency for `subdivision`).
        #[arg(long)]
        resolution: Option<u32>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        repetitions: usize,
        /// Directory for CSV, JSON, timing and colored meshes.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
        /// Write the CSV table here (stdout otherwise).
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write the JSON summary here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Conformally flatten one mesh to the unit sphere.
    Flatten {
        mesh: PathBuf,
        /// Write the spherical mesh.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Write the QC report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        qc_gate: Option<f64>,
        #[arg(long)]
        normalize: bool,
    },
    /// Write a synthetic test surface.
    Generate {
        #[arg(value_enum)]
        shape: Shape,
        output: PathBuf,
        #[arg(long, default_value_t = 3)]
        subdivisions: u32,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        /// Semi-axes for `ellipsoid`.
        #[arg(long, value_delimiter = ',', default_values_t = [2.0, 1.0, 1.0])]
        axes: Vec<f64>,
        /// Noise multiple for `noisy`.
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        /// Rotation angle for `three-bump`.
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Point count for `random`; frequency for `geodesic`.
        #[arg(long, default_value_t = 1000)]
        count: usize,
    },
    /// Report mesh validity.
    Validate { mesh: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    Icosphere,
    Geodesic,
    Ellipsoid,
    Noisy,
    ThreeBump,
    Random,
}

#[derive(Subcommand)]
enum OracleQuery {
    /// Closed-form E1 of the scaling z -> Az on the unit sphere.
    E1Scaling { a: f64 },
    /// E1 of z -> Az by quadrature.
    QuadratureE1 { a: f64 },
    /// Dilation of z -> z + B (translation) or z -> Az (scaling) at z.
    Lambda {
        #[arg(value_enum)]
        kind: LambdaChoice,
        parameter: f64,
        re: f64,
        #[arg(default_value_t = 0.0)]
        im: f64,
    },
    /// Distance 2|sqrt(A2) - sqrt(A1)| between spheres of the given areas.
    Rescaling { a1: f64, a2: f64 },
    /// Smooth elastic energy A1 + A2 - 2 E1.
    Elastic { a1: f64, a2: f64, e1: f64 },
}

#[derive(Clone, Copy, ValueEnum)]
enum LambdaChoice {
    Translation,
    Scaling,
}

#[derive(Args, Clone)]
struct Common {
    /// Rescale both surfaces to unit area first.
    #[arg(long)]
    normalize: bool,
    /// Also minimize over orientation-reversing alignments.
    #[arg(long)]
    allow_reflection: bool,
    /// Use only the first N seeds of each orientation class.
    #[arg(long)]
    seeds: Option<usize>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Hard-fail flattening above this area-weighted mean QC error.
    #[arg(long)]
    qc_gate: Option<f64>,
}

impl Common {
    fn apply(&self, mut opts: DsdOptions) -> DsdOptions {
        opts.normalize |= self.normalize;
        opts.allow_reflection |= self.allow_reflection;
        if let Some(n) = self.seeds {
            opts.seeds = SeedSelection::First(n);
        }
        if let Some(g) = self.qc_gate {
            opts.flatten.qc_fail = g;
        }
        opts
    }

    fn options(&self) -> DsdOptions {
        self.apply(DsdOptions { normalize: false, ..DsdOptions::default() })
    }
}

/// Exit status with a message.
struct Failure {
    code: u8,
    message: String,
}

const USAGE: u8 = 1;
const DATA: u8 = 2;
const NUMERICAL: u8 = 3;

impl Failure {
    fn new(code: u8, message: impl std::fmt::Display) -> Self {
        Self { code, message: message.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::new(DATA, e)
    }
}

impl From<MeshError> for Failure {
    fn from(e: MeshError) -> Self {
        Self::new(DATA, e)
    }
}

impl From<FlattenError> for Failure {
    fn from(e: FlattenError) -> Self {
        match e {
            FlattenError::Mesh(e) => e.into(),
            e => Self::new(NUMERICAL, e),
        }
    }
}

impl From<AlignError> for Failure {
    fn from(e: AlignError) -> Self {
        match e {
            AlignError::Mesh(e) => e.into(),
            AlignError::Flatten(e) => e.into(),
            e => Self::new(NUMERICAL, e),
        }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::NotConverged(_) => Self::new(NUMERICAL, e),
            e => Self::new(DATA, e),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::UnknownKind(_) | ExperimentError::Config(_) => Self::new(USAGE, e),
            e => Self::new(DATA, e),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::new(DATA, format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
    writeln!(w)?;
    Ok(())
}

fn load(path: &Path) -> Result<gsd::mesh::TriangleMesh, Failure> {
    load_mesh_file(path).map_err(|e| Failure::new(DATA, format!("{}: {e}", path.display())))
}

fn set_threads(threads: Option<usize>) -> Result<(), Failure> {
    if let Some(k) = threads {
        if k == 0 {
            return Err(Failure::new(USAGE, "--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Failure::new(USAGE, e))?;
    }
    Ok(())
}

fn compare(
    first: &Path,
    second: &Path,
    common: &Common,
    json: Option<&Path>,
    correspondence: Option<&Path>,
    field: Option<&Path>,
) -> Result<(), Failure> {
    let opts = common.options();
    let (m1, m2) = (load(first)?, load(second)?);
    let r = dsd(&m1, &m2, &opts)?;
    println!("d_sd {}", sig9(r.d_sd));
    if r.orientation_reversed {
        println!("orientation reversed");
    }
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = json {
        write_json(path, &r.to_json())?;
    }
    if let Some(path) = correspondence {
        r.correspondence.write_table(create(path)?)?;
    }
    if let Some(path) = field {
        let prep = |m: &gsd::mesh::TriangleMesh| if opts.normalize { m.normalize_area() } else { Ok(m.clone()) };
        let (a, b) = (prep(&m1)?, prep(&m2)?);
        let values = SurfacePair::new(&a, &b).distortion_field(&r.correspondence).on_first;
        save_mesh_file(path, &a, Some(&values))?;
    }
    Ok(())
}

fn matrix(dir: &Path, common: &Common, csv: Option<&Path>, audit: bool, json: Option<&Path>) -> Result<(), Failure> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Failure::new(DATA, format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && MeshFormat::from_path(p).is_ok())
        .collect();
    paths.sort();
    let meshes = paths.iter().map(|p| load(p)).collect::<Result<Vec<_>, _>>()?;
    let names: Vec<String> = paths
        .iter()
        .map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default())
        .collect();
    let m = distance_matrix(&meshes, &common.options());
    match csv {
        Some(path) => m.write_csv(create(path)?, &names)?,
        None => m.write_csv(std::io::stdout().lock(), &names)?,
    }
    let report = audit.then(|| metric_audit(&m.values));
    if let Some(a) = &report {
        println!("{}", serde_json::to_string_pretty(a).expect("audit serializes"));
    }
    if let Some(path) = json {
        write_json(path, &serde_json::json!({ "meshes": names, "pairs": m.pairs, "audit": report }))?;
    }
    let failed: Vec<_> = m.pairs.iter().filter_map(|p| p.error.as_ref().map(|e| (p.i, p.j, e))).collect();
    for (i, j, e) in &failed {
        eprintln!("pair ({}, {}) failed: {e}", names[*i], names[*j]);
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::new(NUMERICAL, format!("{} of {} pairs failed", failed.len(), m.pairs.len())))
    }
}

fn oracle(query: &OracleQuery) -> Result<(), Failure> {
    let value = match *query {
        OracleQuery::E1Scaling { a } => e1_scaling_any(a)?,
        OracleQuery::QuadratureE1 { a } => {
            let kind = LambdaKind::Scaling(Complex64::new(a, 0.0));
            quadrature_e1(&kind.transform(), &QuadratureSpec::default())?
        }
        OracleQuery::Lambda { kind, parameter, re, im } => {
            let p = Complex64::new(parameter, 0.0);
            let kind = match kind {
                LambdaChoice::Translation => LambdaKind::Translation(p),
                LambdaChoice::Scaling => LambdaKind::Scaling(p),
            };
            lambda_closed_form(kind, Complex64::new(re, im))
        }
        OracleQuery::Rescaling { a1, a2 } => rescaling_distance(a1, a2)?,
        OracleQuery::Elastic { a1, a2, e1 } => elastic_identity(a1, a2, e1),
    };
    println!("{}", sig9(value));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn experiment(
    kind: ExperimentKind,
    grid: Option<Vec<f64>>,
    resolution: Option<u32>,
    seed: u64,
    repetitions: usize,
    out: Option<PathBuf>,
    common: &Common,
    csv: Option<&Path>,
    json: Option<&Path>,
) -> Result<(), Failure> {
    let mut config = ExperimentConfig::preset(kind);
    config.grid = grid.unwrap_or(config.grid);
    config.resolution = resolution.unwrap_or(config.resolution);
    config.seed = seed;
    config.repetitions = repetitions;
    config.output_dir = out;
    config.dsd = common.apply(config.dsd);
    let report = run_experiment(&config)?;
    let table = report.to_csv()?;
    match csv {
        Some(path) => create(path)?.write_all(table.as_bytes())?,
        None => print!("{table}"),
    }
    if let Some(path) = json {
        write_json(path, &report.to_json())?;
    }
    let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} of {} rows failed", report.rows.len());
    }
    Ok(())
}

fn flatten(mesh: &Path, output: Option<&Path>, json: Option<&Path>, qc_gate: Option<f64>, normalize: bool) -> Result<(), Failure> {
    let mut m = load(mesh)?;
    m.ensure_genus_zero()?;
    if normalize {
        m = m.normalize_area()?;
    }
    let mut opts = gsd::flatten::FlattenOptions::default();
    if let Some(g) = qc_gate {
        opts.qc_fail = g;
    }
    let p = conformal_to_sphere(&m, &opts)?;
    println!("qc area-weighted mean {} max {} steps {}", sig9(p.quality.area_weighted_mean), sig9(p.quality.max), p.flow_steps);
    for w in &p.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = output {
        save_mesh_file(path, &p.sphere_mesh(), None)?;
    }
    if let Some(path) = json {
        write_json(path, &p.quality.to_json())?;
    }
    Ok(())
}

fn generate(shape: Shape, output: &Path, g: &Command) -> Result<(), Failure> {
    let Command::Generate { subdivisions, radius, axes, noise, theta, seed, count, .. } = g else {
        unreachable!("generate is only called for the generate command")
    };
    let mesh = match shape {
        Shape::Icosphere => shapes::icosphere(*subdivisions, *radius),
        Shape::Geodesic => shapes::geodesic_sphere((*count).max(1), *radius),
        Shape::Ellipsoid => match axes[..] {
            [a, b, c] if a > 0.0 && b > 0.0 && c > 0.0 => shapes::ellipsoid(a, b, c, *subdivisions),
            _ => return Err(Failure::new(USAGE, "--axes takes three positive values")),
        },
        Shape::Noisy => shapes::noisy_sphere(*subdivisions, *noise, *seed)?,
        Shape::ThreeBump => shapes::three_bump(*theta, *subdivisions),
        Shape::Random => shapes::random_sphere(*count, *seed)?,
    };
    mesh.ensure_genus_zero()?;
    save_mesh_file(output, &mesh, None)?;
    println!("{} vertices, {} triangles", mesh.num_vertices(), mesh.num_triangles());
    Ok(())
}

fn validate(path: &Path) -> Result<(), Failure> {
    let report = load(path)?.validate();
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if report.is_accepted() {
        Ok(())
    } else {
        Err(Failure::new(DATA, "mesh is not a valid closed genus-zero surface"))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Compare { first, second, common, json, correspondence, field } => {
            set_threads(common.threads)?;
            compare(first, second, common, json.as_deref(), correspondence.as_deref(), field.as_deref())
        }
        Command::Matrix { dir, common, csv, audit, json } => {
            set_threads(common.threads)?;
            matrix(dir, common, csv.as_deref(), *audit, json.as_deref())
        }
        Command::Oracle { query } => oracle(query),
        Command::Experiment { kind, grid, resolution, seed, repetitions, out, common, csv, json } => {
            set_threads(common.threads)?;
            experiment(
                *kind,
                grid.clone(),
                *resolution,
                *seed,
                *repetitions,
                out.clone(),
                common,
                csv.as_deref(),
                json.as_deref(),
            )
        }
        Command::Flatten { mesh, output, json, qc_gate, normalize } => {
            flatten(mesh, output.as_deref(), json.as_deref(), *qc_gate, *normalize)
        }
        g @ Command::Generate { shape, output, .. } => generate(*shape, output, g),
        Command::Validate { mesh } => validate(mesh),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
