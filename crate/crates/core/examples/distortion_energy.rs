//! Elastic, stretch and Dirichlet energies of a Möbius correspondence
//! between two spheres, checked against the smooth identity
//! `E_el = A1 + A2 - 2 E1`.

use gsd::energy::{transfer, Direction, SurfacePair};
use gsd::flatten::{conformal_to_sphere, FlattenOptions};
use gsd::mobius::MobiusTransform;
use gsd::oracle::{e1_scaling, elastic_identity};
use gsd::shapes::icosphere;
use num_complex::Complex64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mesh = icosphere(4, 1.0);
    let param = conformal_to_sphere(&mesh, &FlattenOptions::default())?;
    let pair = SurfacePair::new(&mesh, &mesh);
    let a = 2.0;
    let m = MobiusTransform::scaling(Complex64::new(a, 0.0))?;
    let corr = transfer(&param, &param, &m);

    let e1 = pair.average_stretch(&corr, Direction::Forward);
    println!("E1 discrete {:.5}  closed form {:.5}", e1, e1_scaling(a)?);
    let area = mesh.surface_area();
    println!(
        "elastic discrete {:.5}  smooth identity {:.5}",
        pair.elastic_sum(&corr, Direction::Forward),
        elastic_identity(area, area, e1)
    );
    println!("lemma residual {:.2e}", pair.lemma_e1_residual(&corr));
    println!("Dirichlet {:.5}  L2 of log-stretch {:.5}", pair.dirichlet_energy(&corr, Direction::Forward), pair.lp_energy(&corr, Direction::Forward, 2.0)?);

    let b = pair.symmetric_distortion(&corr)?;
    println!("E_sd {:.5} (forward {:.5}, backward {:.5})", b.e_sd, b.forward_elastic, b.backward_elastic);

    let field = pair.distortion_field(&corr);
    let worst = field.on_first.iter().cloned().fold(0.0, f64::max);
    println!("largest per-vertex |r - 1|: {worst:.4}");
    Ok(())
}
