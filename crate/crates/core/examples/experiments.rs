//! Run one of the synthetic experiments on a reduced grid and print the
//! CSV table.
//!
//! Run with `cargo run --release --example experiments -- [rescale|ellipsoid|noise|subdivision|chirality] [out-dir]`.

use gsd::align::SeedSelection;
use gsd::experiment::{run_experiment, ExperimentConfig, ExperimentKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let kind: ExperimentKind = std::env::args().nth(1).as_deref().unwrap_or("ellipsoid").parse()?;
    let mut config = ExperimentConfig::preset(kind);
    config.output_dir = std::env::args().nth(2).map(Into::into);
    if config.output_dir.is_none() {
        // A quick pass: coarser meshes and fewer seeds than the presets.
        config.dsd.seeds = SeedSelection::First(8);
        if kind != ExperimentKind::Subdivision {
            config.resolution = 2;
        }
    }
    let report = run_experiment(&config)?;
    print!("{}", report.to_csv()?);
    for (p, d) in report.mean_by_parameter() {
        match d {
            Some(d) => println!("{} = {p:<8} d_sd {d:.5}", kind.parameter()),
            None => println!("{} = {p:<8} failed", kind.parameter()),
        }
    }
    for path in &report.outputs {
        println!("wrote {}", path.display());
    }
    Ok(())
}
