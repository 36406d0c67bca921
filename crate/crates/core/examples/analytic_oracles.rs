//! Closed-form values from the smooth theory next to quadrature and the
//! discrete pipeline.

use gsd::oracle::{
    e1_scaling, e1_scaling_any, elastic_identity, lambda_closed_form, quadrature_e1, rescaling_distance,
    LambdaKind, QuadratureSpec,
};
use num_complex::Complex64;
use std::f64::consts::PI;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let z = Complex64::new(1.0, 0.0);
    println!("lambda translation B=1 at 0: {}", lambda_closed_form(LambdaKind::Translation(z), Complex64::new(0.0, 0.0)));
    println!("lambda scaling A=2 at 1:     {}", lambda_closed_form(LambdaKind::Scaling(Complex64::new(2.0, 0.0)), z));

    let spec = QuadratureSpec::default();
    println!("{:>6} {:>14} {:>14} {:>10}", "A", "closed form", "quadrature", "rel. diff");
    for a in [1.1, 1.5, 2.0, 5.0, 10.0] {
        let exact = e1_scaling(a)?;
        let quad = quadrature_e1(&LambdaKind::Scaling(Complex64::new(a, 0.0)).transform(), &spec)?;
        println!("{a:>6} {exact:>14.9} {quad:>14.9} {:>10.1e}", (quad - exact).abs() / exact);
    }
    println!("E1(1/2) = E1(2): {}", e1_scaling_any(0.5)? == e1_scaling(2.0)?);
    println!("smooth elastic energy for A=2: {:.6}", elastic_identity(4.0 * PI, 4.0 * PI, e1_scaling(2.0)?));
    println!("spheres of radius 1 and 2: d_sd = {:.6}", rescaling_distance(4.0 * PI, 16.0 * PI)?);
    Ok(())
}
