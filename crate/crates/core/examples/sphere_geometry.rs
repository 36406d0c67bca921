//! Stereographic coordinates, spherical point location and barycentric
//! embedding.

use gsd::mesh::Vec3;
use gsd::shapes::icosphere;
use gsd::sphere::{embed, inverse_stereographic, stereographic_project, ExtComplex, SphereLocator, SpherePoint};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = SpherePoint::new(Vec3::new(1.0, 2.0, 2.0))?;
    let z = stereographic_project(&p);
    println!("{:?} projects to {z:?}", p.vec());
    let back = inverse_stereographic(&z);
    println!("and back to {:?}", back.vec());
    println!("north pole maps to {:?}", stereographic_project(&SpherePoint::north()));
    println!("z = 0 maps to {:?}", inverse_stereographic(&ExtComplex::finite(0.0, 0.0)).vec());

    let mesh = icosphere(3, 1.0);
    let points: Vec<SpherePoint> =
        mesh.vertices.iter().map(|v| SpherePoint::new(*v)).collect::<Result<_, _>>()?;
    let locator = SphereLocator::build(&points, &mesh.triangles)?;
    let q = SpherePoint::new(Vec3::new(0.3, -0.5, 0.8))?;
    let found = locator.locate(&q);
    println!(
        "query lies in triangle {} with coordinates {:?} (fallback: {})",
        found.location.triangle_id, found.location.coords, found.fallback
    );
    let on_mesh = embed(&mesh, &found.location);
    println!("embedded point {:?}, direction error {:.2e}", on_mesh, (on_mesh.normalize() - q.vec()).norm());
    Ok(())
}
