//! Conformally map a genus-zero mesh to the unit sphere and report the
//! quasi-conformal quality.
//!
//! Run with `cargo run --release --example conformal_flatten -- [mesh] [out.off]`.

use gsd::flatten::{conformal_to_sphere, FlattenOptions};
use gsd::io::{load_mesh_file, save_mesh_file};
use gsd::shapes::ellipsoid;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mesh = match std::env::args().nth(1) {
        Some(path) => load_mesh_file(path)?,
        None => ellipsoid(1.5, 1.0, 0.8, 3),
    };
    mesh.ensure_genus_zero()?;
    let param = conformal_to_sphere(&mesh.normalize_area()?, &FlattenOptions::default())?;
    let qc = &param.quality;
    println!("flow steps {}", param.flow_steps);
    println!("QC mean {:.4}  max {:.4}  area-weighted {:.4}", qc.mean, qc.max, qc.area_weighted_mean);
    println!("center of mass after centering {:.2e}", param.center_of_mass().norm());
    for w in &param.warnings {
        println!("warning: {w}");
    }
    if let Some(out) = std::env::args().nth(2) {
        // Per-vertex mean of the incident triangles' QC error.
        let mut sum = vec![0.0; mesh.num_vertices()];
        let mut count = vec![0.0; mesh.num_vertices()];
        for (tri, q) in mesh.triangles.iter().zip(&qc.per_triangle) {
            for &v in tri {
                sum[v] += q;
                count[v] += 1.0;
            }
        }
        let per_vertex: Vec<f64> = sum.iter().zip(&count).map(|(s, c)| s / c).collect();
        save_mesh_file(&out, &param.sphere_mesh(), Some(&per_vertex))?;
        println!("wrote {out}");
    }
    Ok(())
}
