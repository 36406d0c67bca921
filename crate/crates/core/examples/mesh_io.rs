//! Build, validate, save and reload a mesh; inspect its edge structure.
//!
//! Run with `cargo run --example mesh_io -- [path.off|.obj|.ply]`.

use gsd::io::{load_mesh_file, save_mesh_file};
use gsd::shapes::ellipsoid;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mesh = match std::env::args().nth(1) {
        Some(path) => load_mesh_file(path)?,
        None => ellipsoid(2.0, 1.0, 1.0, 2),
    };
    let report = mesh.validate();
    println!("vertices {}  triangles {}", mesh.num_vertices(), mesh.num_triangles());
    println!("closed {}  manifold {}  oriented {}", report.is_closed, report.is_manifold, report.is_oriented);
    println!("euler characteristic {}  accepted {}", report.euler_characteristic, report.is_accepted());
    println!("area {:.6}  mean edge {:.6}", mesh.surface_area(), mesh.mean_edge_length());

    // Each triangle hands a third of its area to each of its three edges.
    let table = mesh.edge_table();
    let weights = mesh.edge_area_weights(&table);
    println!("edges {}  sum of edge weights / 3 = {:.6}", table.len(), weights.iter().sum::<f64>() / 3.0);

    let normalized = mesh.normalize_area()?;
    println!("normalized area {:.12}", normalized.surface_area());

    let dir = tempfile_dir()?;
    for ext in ["off", "obj", "ply"] {
        let path = dir.join(format!("mesh.{ext}"));
        save_mesh_file(&path, &mesh, None)?;
        let back = load_mesh_file(&path)?;
        println!("{ext}: round trip keeps {} triangles", back.num_triangles());
    }
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join("gsd-mesh-io-example");
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
