//! Pairwise distances over a family of ellipsoids and an audit of the
//! metric axioms.

use gsd::align::{distance_matrix, metric_audit, DsdOptions};
use gsd::shapes::ellipsoid;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let axes = [1.0, 1.25, 1.5, 2.0];
    let meshes: Vec<_> = axes.iter().map(|&a| ellipsoid(a, 1.0, 1.0, 3)).collect();
    let names: Vec<String> = axes.iter().map(|a| format!("a={a}")).collect();
    let m = distance_matrix(&meshes, &DsdOptions::default());
    m.write_csv(std::io::stdout().lock(), &names)?;

    let audit = metric_audit(&m.values);
    println!("max |d(i,i)|            {:.2e}", audit.max_diagonal);
    println!("max symmetry violation  {:.2e}", audit.max_symmetry_violation);
    println!(
        "max triangle violation  {:.2e} ({:.2}% relative) over {} checks",
        audit.max_triangle_violation,
        100.0 * audit.max_relative_triangle_violation,
        audit.triangle_checks
    );

    // A matrix that breaks the triangle inequality, for contrast.
    let bad = vec![vec![0.0, 1.0, 10.0], vec![1.0, 0.0, 1.0], vec![10.0, 1.0, 0.0]];
    println!("hand-built matrix violation {}", metric_audit(&bad).max_triangle_violation);
    Ok(())
}
