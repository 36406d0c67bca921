//! Symmetric distortion distance between two surfaces, with the per-seed
//! optimization record and optional exports.
//!
//! Run with `cargo run --release --example surface_distance -- [a.off b.off]`.

use gsd::align::{dsd, DsdOptions};
use gsd::io::load_mesh_file;
use gsd::shapes::{ellipsoid, icosphere};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (first, second) = match &args[..] {
        [a, b, ..] => (load_mesh_file(a)?, load_mesh_file(b)?),
        _ => (icosphere(3, 1.0), ellipsoid(1.6, 1.0, 1.0, 3)),
    };
    let r = dsd(&first, &second, &DsdOptions::default())?;
    println!("d_sd = {:.6} (areas normalized to 1)", r.d_sd);
    println!("forward elastic {:.6}  backward elastic {:.6}", r.energy.forward_elastic, r.energy.backward_elastic);
    println!("best transform {:?}", r.best_mobius.to_array());
    let best = r.per_seed.iter().filter(|s| s.energy.is_finite()).min_by(|a, b| a.energy.total_cmp(&b.energy));
    if let Some(s) = best {
        println!("winning seed {} after {} iterations (from {:.6})", s.id, s.iters, s.initial_energy);
    }
    println!("{} seeds, {} flagged vertices", r.per_seed.len(), r.flagged_vertices());
    for w in &r.warnings {
        println!("warning: {w}");
    }
    let unnormalized = dsd(&first, &second.scaled(2.0), &DsdOptions { normalize: false, ..DsdOptions::default() })?;
    println!("without normalization, doubling the second surface gives {:.6}", unnormalized.d_sd);
    Ok(())
}
