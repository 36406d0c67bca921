//! ASCII OFF, OBJ and PLY readers and writers.
//!
//! Readers keep vertices and faces exactly as stored: nothing is welded,
//! reordered or repaired. Writers print coordinates with 9 significant digits.
//! Per-vertex scalars go into the PLY vertex element (`quality` plus a
//! white-to-red colour ramp) or, for OFF and OBJ, into a sidecar table that
//! starts with `# gsd-scalars v1 <count>`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::mesh::{MeshError, TriangleMesh, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self, MeshError> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        match ext.as_str() {
            "off" => Ok(Self::Off),
            "obj" => Ok(Self::Obj),
            "ply" => Ok(Self::Ply),
            _ => Err(MeshError::Unsupported(format!(
                "unknown mesh extension for {}",
                path.display()
            ))),
        }
    }
}

/// Formats like C's `%.9g`.
pub fn sig9(x: f64) -> String {
    fmt_g(x, 9)
}

pub(crate) fn fmt_g(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if exp < -4 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Non-empty lines with comments stripped, paired with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_f64(tok: Option<&str>, line: usize) -> Result<f64, MeshError> {
    let tok = tok.ok_or_else(|| MeshError::Parse { line, message: "missing number".into() })?;
    tok.parse().map_err(|_| MeshError::Parse { line, message: format!("invalid number {tok:?}") })
}

fn parse_usize(tok: Option<&str>, line: usize) -> Result<usize, MeshError> {
    let tok = tok.ok_or_else(|| MeshError::Parse { line, message: "missing index".into() })?;
    tok.parse().map_err(|_| MeshError::Parse { line, message: format!("invalid index {tok:?}") })
}

pub fn load_mesh<R: Read>(mut source: R, format: MeshFormat) -> Result<TriangleMesh, MeshError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    match format {
        MeshFormat::Off => parse_off(&text),
        MeshFormat::Obj => parse_obj(&text),
        MeshFormat::Ply => parse_ply(&text),
    }
}

pub fn load_mesh_file(path: impl AsRef<Path>) -> Result<TriangleMesh, MeshError> {
    let path = path.as_ref();
    let format = MeshFormat::from_path(path)?;
    load_mesh(BufReader::new(File::open(path)?), format)
}

fn check_index(i: usize, nv: usize, line: usize) -> Result<usize, MeshError> {
    if i < nv {
        Ok(i)
    } else {
        Err(MeshError::Parse { line, message: format!("vertex index {i} out of range") })
    }
}

fn parse_off(text: &str) -> Result<TriangleMesh, MeshError> {
    let mut lines = content_lines(text);
    let (line, header) = lines
        .next()
        .ok_or(MeshError::Parse { line: 1, message: "empty file".into() })?;
    let mut tokens = header.split_whitespace();
    let magic = tokens.next().unwrap_or("");
    if magic != "OFF" {
        return Err(MeshError::Parse { line, message: format!("expected OFF header, got {magic:?}") });
    }
    let rest: Vec<&str> = tokens.collect();
    let (line, counts) = if rest.is_empty() {
        let (l, c) = lines
            .next()
            .ok_or(MeshError::Parse { line, message: "missing element counts".into() })?;
        (l, c.split_whitespace().collect::<Vec<_>>())
    } else {
        (line, rest)
    };
    let mut counts = counts.into_iter();
    let nv = parse_usize(counts.next(), line)?;
    let nf = parse_usize(counts.next(), line)?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, l) = lines
            .next()
            .ok_or(MeshError::Parse { line, message: "unexpected end of vertex list".into() })?;
        let mut t = l.split_whitespace();
        vertices.push(Vec3::new(
            parse_f64(t.next(), line)?,
            parse_f64(t.next(), line)?,
            parse_f64(t.next(), line)?,
        ));
    }
    let mut triangles = Vec::with_capacity(nf);
    let mut last = line;
    for _ in 0..nf {
        let (line, l) = lines
            .next()
            .ok_or(MeshError::Parse { line: last, message: "unexpected end of face list".into() })?;
        last = line;
        let mut t = l.split_whitespace();
        let n = parse_usize(t.next(), line)?;
        if n != 3 {
            return Err(MeshError::NonTriangularFace { line });
        }
        let mut tri = [0; 3];
        for v in &mut tri {
            *v = check_index(parse_usize(t.next(), line)?, nv, line)?;
        }
        triangles.push(tri);
    }
    Ok(TriangleMesh::new(vertices, triangles))
}

fn parse_obj(text: &str) -> Result<TriangleMesh, MeshError> {
    let mut vertices = Vec::new();
    let mut raw_faces = Vec::new();
    for (line, l) in content_lines(text) {
        let mut t = l.split_whitespace();
        match t.next() {
            Some("v") => vertices.push(Vec3::new(
                parse_f64(t.next(), line)?,
                parse_f64(t.next(), line)?,
                parse_f64(t.next(), line)?,
            )),
            Some("f") => {
                let refs: Vec<&str> = t.collect();
                if refs.len() != 3 {
                    return Err(MeshError::NonTriangularFace { line });
                }
                let mut tri = [0i64; 3];
                for (k, r) in refs.iter().enumerate() {
                    let idx = r.split('/').next().unwrap_or("");
                    tri[k] = idx.parse().map_err(|_| MeshError::Parse {
                        line,
                        message: format!("invalid face reference {r:?}"),
                    })?;
                }
                raw_faces.push((line, tri, vertices.len()));
            }
            _ => {}
        }
    }
    let nv = vertices.len();
    let mut triangles = Vec::with_capacity(raw_faces.len());
    for (line, tri, seen) in raw_faces {
        let mut out = [0usize; 3];
        for k in 0..3 {
            let i = tri[k];
            let resolved = if i > 0 {
                i - 1
            } else if i < 0 {
                seen as i64 + i
            } else {
                -1
            };
            if resolved < 0 {
                return Err(MeshError::Parse { line, message: format!("invalid vertex index {i}") });
            }
            out[k] = check_index(resolved as usize, nv, line)?;
        }
        triangles.push(out);
    }
    Ok(TriangleMesh::new(vertices, triangles))
}

struct PlyElement {
    name: String,
    count: usize,
    props: Vec<PlyProp>,
}

enum PlyProp {
    Scalar(String),
    List(String),
}

fn parse_ply(text: &str) -> Result<TriangleMesh, MeshError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(MeshError::Parse { line: 1, message: "missing ply magic".into() }),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut header_end = 0;
    for (line, l) in lines.by_ref() {
        let mut t = l.split_whitespace();
        match t.next() {
            Some("format") => {
                let f = t.next().unwrap_or("");
                if f != "ascii" {
                    return Err(MeshError::Unsupported(format!("PLY format {f} (only ascii)")));
                }
            }
            Some("element") => {
                let name = t.next().unwrap_or("").to_string();
                let count = parse_usize(t.next(), line)?;
                elements.push(PlyElement { name, count, props: Vec::new() });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or(MeshError::Parse {
                    line,
                    message: "property before element".into(),
                })?;
                let kind = t.next().unwrap_or("");
                if kind == "list" {
                    t.next();
                    t.next();
                    el.props.push(PlyProp::List(t.next().unwrap_or("").to_string()));
                } else {
                    el.props.push(PlyProp::Scalar(t.next().unwrap_or("").to_string()));
                }
            }
            Some("end_header") => {
                header_end = line;
                break;
            }
            _ => {}
        }
    }
    if header_end == 0 {
        return Err(MeshError::Parse { line: 1, message: "missing end_header".into() });
    }
    let mut body = lines.filter(|(_, l)| !l.is_empty());
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut last = header_end;
    for el in &elements {
        for _ in 0..el.count {
            let (line, l) = body.next().ok_or(MeshError::Parse {
                line: last,
                message: format!("unexpected end of {} data", el.name),
            })?;
            last = line;
            let toks: Vec<&str> = l.split_whitespace().collect();
            match el.name.as_str() {
                "vertex" => {
                    let mut xyz = [f64::NAN; 3];
                    let mut pos = 0;
                    for p in &el.props {
                        match p {
                            PlyProp::Scalar(name) => {
                                let v = parse_f64(toks.get(pos).copied(), line)?;
                                match name.as_str() {
                                    "x" => xyz[0] = v,
                                    "y" => xyz[1] = v,
                                    "z" => xyz[2] = v,
                                    _ => {}
                                }
                                pos += 1;
                            }
                            PlyProp::List(_) => {
                                let n = parse_usize(toks.get(pos).copied(), line)?;
                                pos += 1 + n;
                            }
                        }
                    }
                    if xyz.iter().any(|v| v.is_nan()) {
                        return Err(MeshError::Parse { line, message: "vertex lacks x/y/z".into() });
                    }
                    vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
                }
                "face" => {
                    let mut pos = 0;
                    let mut tri = None;
                    for p in &el.props {
                        match p {
                            PlyProp::List(name) => {
                                let n = parse_usize(toks.get(pos).copied(), line)?;
                                if name == "vertex_indices" || name == "vertex_index" {
                                    if n != 3 {
                                        return Err(MeshError::NonTriangularFace { line });
                                    }
                                    let mut t = [0; 3];
                                    for (k, v) in t.iter_mut().enumerate() {
                                        *v = parse_usize(toks.get(pos + 1 + k).copied(), line)?;
                                    }
                                    tri = Some(t);
                                }
                                pos += 1 + n;
                            }
                            PlyProp::Scalar(_) => pos += 1,
                        }
                    }
                    let tri = tri.ok_or(MeshError::Parse {
                        line,
                        message: "face lacks vertex_indices".into(),
                    })?;
                    triangles.push(tri);
                }
                _ => {}
            }
        }
    }
    let nv = vertices.len();
    for tri in &triangles {
        for &i in tri {
            check_index(i, nv, last)?;
        }
    }
    Ok(TriangleMesh::new(vertices, triangles))
}

/// White-to-red ramp over the scalar range; a constant field maps to white.
pub fn heat_color(value: f64, min: f64, max: f64) -> [u8; 3] {
    let t = if max > min { ((value - min) / (max - min)).clamp(0.0, 1.0) } else { 0.0 };
    let fade = (255.0 * (1.0 - t)).round() as u8;
    [255, fade, fade]
}

fn check_scalars(mesh: &TriangleMesh, scalars: Option<&[f64]>) -> Result<(), MeshError> {
    match scalars {
        Some(s) if s.len() != mesh.num_vertices() => {
            Err(MeshError::ScalarLength { expected: mesh.num_vertices(), got: s.len() })
        }
        _ => Ok(()),
    }
}

/// Writes the mesh. Scalars are embedded only for PLY; use
/// [`write_scalar_sidecar`] for the other formats.
pub fn write_mesh<W: Write>(
    mut out: W,
    mesh: &TriangleMesh,
    scalars: Option<&[f64]>,
    format: MeshFormat,
) -> Result<(), MeshError> {
    check_scalars(mesh, scalars)?;
    let p = |v: &Vec3| format!("{} {} {}", sig9(v.x), sig9(v.y), sig9(v.z));
    match format {
        MeshFormat::Off => {
            writeln!(out, "OFF")?;
            writeln!(out, "{} {} 0", mesh.num_vertices(), mesh.num_triangles())?;
            for v in &mesh.vertices {
                writeln!(out, "{}", p(v))?;
            }
            for [a, b, c] in &mesh.triangles {
                writeln!(out, "3 {a} {b} {c}")?;
            }
        }
        MeshFormat::Obj => {
            for v in &mesh.vertices {
                writeln!(out, "v {}", p(v))?;
            }
            for [a, b, c] in &mesh.triangles {
                writeln!(out, "f {} {} {}", a + 1, b + 1, c + 1)?;
            }
        }
        MeshFormat::Ply => {
            writeln!(out, "ply")?;
            writeln!(out, "format ascii 1.0")?;
            writeln!(out, "element vertex {}", mesh.num_vertices())?;
            writeln!(out, "property double x")?;
            writeln!(out, "property double y")?;
            writeln!(out, "property double z")?;
            if scalars.is_some() {
                writeln!(out, "property double quality")?;
                writeln!(out, "property uchar red")?;
                writeln!(out, "property uchar green")?;
                writeln!(out, "property uchar blue")?;
            }
            writeln!(out, "element face {}", mesh.num_triangles())?;
            writeln!(out, "property list uchar int vertex_indices")?;
            writeln!(out, "end_header")?;
            let range = scalars.map(|s| {
                let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (min, max)
            });
            for (i, v) in mesh.vertices.iter().enumerate() {
                match (scalars, range) {
                    (Some(s), Some((lo, hi))) => {
                        let [r, g, b] = heat_color(s[i], lo, hi);
                        writeln!(out, "{} {} {r} {g} {b}", p(v), sig9(s[i]))?;
                    }
                    _ => writeln!(out, "{}", p(v))?,
                }
            }
            for [a, b, c] in &mesh.triangles {
                writeln!(out, "3 {a} {b} {c}")?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_scalar_sidecar<W: Write>(mut out: W, scalars: &[f64]) -> Result<(), MeshError> {
    writeln!(out, "# gsd-scalars v1 {}", scalars.len())?;
    for s in scalars {
        writeln!(out, "{}", sig9(*s))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_scalar_sidecar<R: Read>(source: R) -> Result<Vec<f64>, MeshError> {
    let mut lines = BufReader::new(source).lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => l?,
        None => return Err(MeshError::Parse { line: 1, message: "empty scalar table".into() }),
    };
    let count = header
        .strip_prefix("# gsd-scalars v1 ")
        .and_then(|c| c.trim().parse::<usize>().ok())
        .ok_or(MeshError::Parse { line: 1, message: "bad gsd-scalars header".into() })?;
    let mut values = Vec::with_capacity(count);
    for (i, l) in lines {
        let l = l?;
        if l.trim().is_empty() {
            continue;
        }
        values.push(parse_f64(Some(l.trim()), i + 1)?);
    }
    if values.len() != count {
        return Err(MeshError::Parse {
            line: values.len() + 1,
            message: format!("expected {count} scalars, found {}", values.len()),
        });
    }
    Ok(values)
}

/// Path of the sidecar scalar table written next to an OFF/OBJ file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".scalars");
    PathBuf::from(s)
}

/// Saves a mesh, choosing the format from the extension. Scalars go into the
/// PLY body or a `.scalars` sidecar next to OFF/OBJ files.
pub fn save_mesh_file(
    path: impl AsRef<Path>,
    mesh: &TriangleMesh,
    scalars: Option<&[f64]>,
) -> Result<(), MeshError> {
    let path = path.as_ref();
    let format = MeshFormat::from_path(path)?;
    check_scalars(mesh, scalars)?;
    let embedded = if format == MeshFormat::Ply { scalars } else { None };
    write_mesh(BufWriter::new(File::create(path)?), mesh, embedded, format)?;
    if let (Some(s), false) = (scalars, format == MeshFormat::Ply) {
        write_scalar_sidecar(BufWriter::new(File::create(sidecar_path(path))?), s)?;
    }
    Ok(())
}
