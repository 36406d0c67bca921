//! Möbius transformations of the sphere: composition, dilation, three-point
//! fitting and center-of-mass normalization.

use gsd::mesh::Vec3;
use gsd::mobius::{center_vertices, MobiusChart, MobiusTransform};
use gsd::sphere::SpherePoint;
use num_complex::Complex64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scale = MobiusTransform::scaling(Complex64::new(2.0, 0.0))?;
    let shift = MobiusTransform::translation(Complex64::new(1.0, 0.0));
    println!("dilation of z -> 2z at z = 1: {:.6}", scale.dilation_at(Complex64::new(1.0, 0.0)));
    println!("dilation of z -> z + 1 at z = 0: {:.6}", shift.dilation_at(Complex64::new(0.0, 0.0)));

    // Dilation is a cocycle: lambda_{g o f}(p) = lambda_g(f(p)) * lambda_f(p).
    let p = SpherePoint::new(Vec3::new(0.2, 0.4, -0.9))?;
    let composed = shift.compose(&scale);
    let chain = shift.dilation(&scale.apply(&p)) * scale.dilation(&p);
    println!("cocycle: {:.12} vs {:.12}", composed.dilation(&p), chain);

    let rot = MobiusTransform::rotation(&Vec3::z(), std::f64::consts::FRAC_PI_2);
    println!("quarter turn sends +x to {:?}", rot.apply_vec(&Vec3::x()));

    let src = [SpherePoint::north(), SpherePoint::south(), SpherePoint::new(Vec3::x())?];
    let dst = [SpherePoint::new(Vec3::y())?, SpherePoint::new(-Vec3::y())?, SpherePoint::north()];
    let fit = MobiusTransform::from_three_points(src, dst)?;
    for (s, d) in src.iter().zip(&dst) {
        println!("three-point fit error {:.2e}", (fit.apply(s).vec() - d.vec()).norm());
    }

    let chart = MobiusChart::new(MobiusTransform::identity(), [0.1, 0.0, -0.2, 0.0, 0.3, 0.0]);
    println!("chart point as 8 reals {:?}", chart.perturb().to_array());

    // Points crowded near the north pole get spread back out.
    let crowded: Vec<SpherePoint> = (0..200)
        .map(|k| {
            let t = k as f64 * 0.61803398875 * std::f64::consts::TAU;
            let z = 1.0 - 0.5 * (k as f64 + 0.5) / 200.0;
            let r = (1.0 - z * z).sqrt();
            SpherePoint::new(Vec3::new(r * t.cos(), r * t.sin(), z))
        })
        .collect::<Result<_, _>>()?;
    let mean = |pts: &[SpherePoint]| pts.iter().fold(Vec3::zeros(), |a, p| a + p.vec()) / pts.len() as f64;
    let m = center_vertices(&crowded)?;
    let centred: Vec<SpherePoint> = crowded.iter().map(|p| m.apply(p)).collect();
    println!("center of mass {:.3} -> {:.2e}", mean(&crowded).norm(), mean(&centred).norm());
    Ok(())
}
