//! Randomized invariants across the pipeline.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::align::{dsd, DsdOptions, Objective, PreparedSurface, SeedSelection};
use crate::energy::{transfer, CorrespondenceMap, Direction, SurfacePair};
use crate::flatten::{conformal_to_sphere, FlattenOptions, SphericalParameterization};
use crate::mesh::{TriangleMesh, Vec3};
use crate::mobius::{MobiusChart, MobiusTransform};
use crate::oracle::{e1_scaling, lambda_closed_form, LambdaKind};
use crate::shapes::{ellipsoid, icosphere, noisy_sphere, three_bump};
use crate::sphere::{embed, inverse_stereographic, stereographic_project, SphereLocator, SpherePoint};
use nalgebra::{Rotation3, Unit};
use num_complex::Complex64;
use proptest::prelude::*;
use proptest::strategy::ValueTree;

fn unit_vector() -> impl Strategy<Value = Vec3> {
    (-1.0f64..1.0, 0.0f64..(2.0 * PI)).prop_map(|(z, t)| {
        let r = (1.0 - z * z).sqrt();
        Vec3::new(r * t.cos(), r * t.sin(), z)
    })
}

fn sphere_point() -> impl Strategy<Value = SpherePoint> {
    unit_vector().prop_map(SpherePoint::from_unit)
}

fn complex(range: f64) -> impl Strategy<Value = Complex64> {
    (-range..range, -range..range).prop_map(|(a, b)| Complex64::new(a, b))
}

/// Möbius transforms of moderate size: a random point of the chart.
fn mobius(size: f64) -> impl Strategy<Value = MobiusTransform> {
    proptest::array::uniform6(-size..size).prop_map(|o| MobiusChart::new(MobiusTransform::identity(), o).perturb())
}

fn rotation() -> impl Strategy<Value = Rotation3<f64>> {
    (unit_vector(), 0.0f64..PI).prop_map(|(axis, angle)| Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle))
}

fn close(a: &Vec3, b: &Vec3, tol: f64) -> bool {
    (a - b).norm() <= tol
}

fn family() -> impl Strategy<Value = TriangleMesh> {
    prop_oneof![
        (0.6f64..2.0, 0.6f64..2.0, 0.6f64..2.0).prop_map(|(a, b, c)| ellipsoid(a, b, c, 2)),
        (0.0f64..PI).prop_map(|t| three_bump(t, 2)),
        (0.0f64..1.0, any::<u64>()).prop_map(|(n, s)| noisy_sphere(2, n, s).unwrap()),
    ]
}

fn ico3() -> &'static (TriangleMesh, SphericalParameterization) {
    static CELL: OnceLock<(TriangleMesh, SphericalParameterization)> = OnceLock::new();
    CELL.get_or_init(|| {
        let m = icosphere(3, 1.0);
        let p = conformal_to_sphere(&m, &FlattenOptions::default()).unwrap();
        (m, p)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // mesh_core

    #[test]
    fn generated_meshes_are_genus_zero(mesh in family()) {
        let report = mesh.validate();
        prop_assert!(report.is_accepted(), "{:?}", report.defect_list);
        let table = mesh.edge_table();
        let v = mesh.num_vertices() as i64;
        let e = table.len() as i64;
        let f = mesh.num_triangles() as i64;
        prop_assert_eq!(v - e + f, 2);
        prop_assert!(table.faces.iter().all(|adj| adj.len() == 2));
    }

    #[test]
    fn edge_weights_sum_to_area(mesh in family()) {
        let table = mesh.edge_table();
        let sum: f64 = mesh.edge_area_weights(&table).iter().sum::<f64>() / 3.0;
        let area = mesh.surface_area();
        prop_assert!((sum - area).abs() <= 1e-10 * area);
    }

    #[test]
    fn normalize_is_idempotent(mesh in family(), s in 0.1f64..10.0) {
        let once = mesh.scaled(s).normalize_area().unwrap();
        let twice = once.normalize_area().unwrap();
        for (a, b) in once.vertices.iter().zip(&twice.vertices) {
            prop_assert!((a - b).norm() <= 1e-12 * a.norm().max(1.0));
        }
        prop_assert!((twice.surface_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reflect_is_an_involution(mesh in family()) {
        let r = mesh.reflect();
        prop_assert!(r.validate().is_accepted());
        prop_assert_eq!(r.reflect().vertices, mesh.vertices);
    }

    #[test]
    fn metric_commutes_with_scaling(mesh in family(), s in 0.1f64..10.0) {
        let m = mesh.discrete_metric().unwrap();
        let ms = mesh.scaled(s).discrete_metric().unwrap();
        for [i, j] in mesh.edge_table().edges {
            let (a, b) = (m.length(i, j).unwrap(), ms.length(i, j).unwrap());
            prop_assert!((b - s * a).abs() <= 1e-12 * b);
        }
    }

    // sphere_geom

    #[test]
    fn stereographic_round_trip(p in sphere_point()) {
        let back = inverse_stereographic(&stereographic_project(&p));
        prop_assert!(close(back.vec(), p.vec(), 1e-12));
    }

    #[test]
    fn located_coordinates_are_barycentric(q in sphere_point()) {
        let (mesh, param) = ico3();
        let found = param.locator().locate(&q);
        let c = found.location.coords;
        prop_assert!(!found.fallback);
        prop_assert!((c.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        prop_assert!(c.iter().all(|&x| x >= -1e-10));
        let hit = embed(mesh, &found.location).normalize();
        prop_assert!(hit.dot(q.vec()) > 0.999);
    }

    #[test]
    fn vertex_queries_embed_to_their_vertex(mesh in family()) {
        let pts: Vec<SpherePoint> = mesh.vertices.iter().map(|v| SpherePoint::new(*v).unwrap()).collect();
        // Radial projection is a valid spherical mesh for the star-shaped,
        // unfolded members of the family.
        if let Ok(locator) = SphereLocator::build(&pts, &mesh.triangles) {
            for (i, p) in pts.iter().enumerate() {
                let at = embed(&mesh, &locator.locate(p).location);
                prop_assert!(close(&at, &mesh.vertices[i], 1e-9), "vertex {}", i);
            }
        }
    }

    // mobius

    #[test]
    fn group_axioms(a in mobius(1.5), b in mobius(1.5), c in mobius(1.5), p in sphere_point()) {
        let left = a.compose(&b).compose(&c);
        let right = a.compose(&b.compose(&c));
        prop_assert!(left.distance(&right) <= 1e-9 * (1.0 + left.distance(&MobiusTransform::identity())));
        prop_assert!(a.compose(&a.inverse()).distance(&MobiusTransform::identity()) <= 1e-10);
        prop_assert!(a.compose(&MobiusTransform::identity()).distance(&a) <= 1e-10);
        prop_assert!((a.compose(&b).det() - Complex64::new(1.0, 0.0)).norm() <= 1e-10);
        let q = a.compose(&b).apply(&p);
        prop_assert!(close(q.vec(), a.apply(&b.apply(&p)).vec(), 1e-9));
    }

    #[test]
    fn dilation_cocycle(a in mobius(1.5), b in mobius(1.5), p in sphere_point()) {
        let lhs = a.compose(&b).dilation(&p);
        let rhs = a.dilation(&b.apply(&p)) * b.dilation(&p);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.max(1.0));
        let inv = a.inverse().dilation(&a.apply(&p));
        prop_assert!((inv * a.dilation(&p) - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn rotations_are_isometries(axis in unit_vector(), angle in -PI..PI, p in sphere_point()) {
        let r = MobiusTransform::rotation(&axis, angle);
        prop_assert!((r.dilation(&p) - 1.0).abs() <= 1e-10);
        let expected = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle) * p.vec();
        prop_assert!(close(&r.apply_vec(p.vec()), &expected, 1e-10));
    }

    // analytic_oracles

    #[test]
    fn closed_form_lambda_matches_dilation(b in complex(5.0), z in complex(10.0)) {
        for kind in [LambdaKind::Translation(b), LambdaKind::Scaling(b)] {
            if b.norm() < 1e-3 { continue; }
            let closed = lambda_closed_form(kind, z);
            let direct = kind.transform().dilation_at(z);
            prop_assert!((closed - direct).abs() <= 1e-10 * closed.max(1.0), "{:?} at {}", kind, z);
        }
    }

    #[test]
    fn e1_is_decreasing(a in 1.0001f64..1e4, t in 1.0001f64..2.0) {
        prop_assert!(e1_scaling(a * t).unwrap() < e1_scaling(a).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // distortion_energy

    #[test]
    fn energies_are_symmetric_and_nonnegative(m in mobius(0.8)) {
        let (mesh, param) = ico3();
        let pair = SurfacePair::new(mesh, mesh);
        let corr = transfer(param, param, &m);
        let swapped = transfer(param, param, &m.inverse());
        let a = pair.symmetric_distortion(&corr).unwrap();
        let b = pair.symmetric_distortion(&swapped).unwrap();
        prop_assert!((a.e_sd - b.e_sd).abs() <= 1e-12 * a.e_sd.max(1.0));
        prop_assert!((a.e_sd - (a.forward_elastic.sqrt() + a.backward_elastic.sqrt())).abs() <= 1e-12 * a.e_sd.max(1.0));
        prop_assert!(a.forward_elastic >= 0.0 && a.backward_elastic >= 0.0);
        prop_assert!(pair.average_stretch(&corr, Direction::Forward) >= 0.0);
        prop_assert!(pair.lp_energy(&corr, Direction::Forward, 2.0).unwrap() >= 0.0);
        // Swapping the map also swaps the two directions.
        let c = pair.symmetric_distortion(&corr.swapped()).unwrap();
        prop_assert!((c.forward_elastic - a.backward_elastic).abs() <= 1e-12 * a.e_sd.max(1.0));
    }

    #[test]
    fn scaling_target_scales_ratios(m in mobius(0.8), s in 0.3f64..3.0) {
        let (mesh, param) = ico3();
        let big = mesh.scaled(s);
        let corr = transfer(param, param, &m);
        let base = SurfacePair::new(mesh, mesh).ratios(&corr, Direction::Forward);
        let pair = SurfacePair::new(mesh, &big);
        let scaled = pair.ratios(&corr, Direction::Forward);
        for (r, rs) in base.iter().zip(&scaled) {
            prop_assert!((rs - s * r).abs() <= 1e-12 * rs.max(1.0));
        }
        let table = mesh.edge_table();
        let w = mesh.edge_area_weights(&table);
        let direct: f64 = base.iter().zip(&w).map(|(r, a)| (s * r - 1.0).powi(2) * a / 3.0).sum();
        let e = pair.elastic_sum(&corr, Direction::Forward);
        prop_assert!((e - direct).abs() <= 1e-10 * e.max(1.0));
    }

    #[test]
    fn identity_ratios_vanish(mesh in family()) {
        let pair = SurfacePair::new(&mesh, &mesh);
        let corr = CorrespondenceMap::identity(&mesh);
        let b = pair.symmetric_distortion(&corr).unwrap();
        prop_assert!(b.e_sd <= 1e-12);
        prop_assert!(pair.lp_energy(&corr, Direction::Forward, 3.0).unwrap() <= 1e-12);
    }

    #[test]
    fn composition_bound(f in mobius(0.6), g in mobius(0.6), r2 in 0.7f64..1.4, r3 in 0.7f64..1.4) {
        let (mesh, param) = ico3();
        let (m2, m3) = (mesh.scaled(r2), mesh.scaled(r3));
        let l = |target: &TriangleMesh, m: &MobiusTransform, source: &TriangleMesh| {
            SurfacePair::new(source, target).elastic_sum(&transfer(param, param, m), Direction::Forward).sqrt()
        };
        let lf = l(&m2, &f, mesh);
        let lg = l(&m3, &g, &m2);
        let lgf = l(&m3, &g.compose(&f), mesh);
        prop_assert!(lgf <= lf + lg + 0.03 * lgf, "{} > {} + {}", lgf, lf, lg);
    }

    // conformal_flatten

    #[test]
    fn flattening_is_bijective_and_centred(mesh in family()) {
        let mesh = mesh.normalize_area().unwrap();
        let opts = FlattenOptions { qc_fail: f64::INFINITY, ..FlattenOptions::default() };
        match conformal_to_sphere(&mesh, &opts) {
            Ok(p) => {
                let pts: Vec<Vec3> = p.sphere_positions.iter().map(|q| *q.vec()).collect();
                for [a, b, c] in &mesh.triangles {
                    prop_assert!(pts[*a].dot(&pts[*b].cross(&pts[*c])) > 0.0);
                }
                prop_assert!(p.center_of_mass().norm() <= 1e-6);
                prop_assert!(p.quality.per_triangle.iter().all(|&q| q >= 1.0));
            }
            // Failing loudly is allowed; a silent flipped output is not.
            Err(e) => prop_assert!(!e.to_string().is_empty()),
        }
    }
}

fn prepared(mesh: &TriangleMesh) -> PreparedSurface {
    PreparedSurface::new(&mesh.normalize_area().unwrap(), &FlattenOptions::default()).unwrap()
}

#[test]
fn gradient_matches_subgroup_differences() {
    let a = prepared(&ellipsoid(1.4, 1.0, 0.9, 3));
    let b = prepared(&three_bump(0.7, 3));
    let objective = Objective::new(&a.param, &b.param);
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let strategy = mobius(0.5);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let base = strategy.new_tree(&mut runner).unwrap().current();
        let g = objective.gradient(&base, 1e-5);
        // Central differences along the named one-parameter subgroups: chart
        // axes 0..3 are boosts, 3..6 rotations, about x, y, z.
        let h = 1e-5;
        let axes = [Vec3::x(), Vec3::y(), Vec3::z()];
        let moved = |k: usize, t: f64| {
            let step = if k < 3 {
                MobiusTransform::boost(&axes[k], t)
            } else {
                MobiusTransform::rotation(&axes[k - 3], t)
            };
            objective.energy(&step.compose(&base))
        };
        let fd: Vec<f64> = (0..6).map(|k| (moved(k, h) - moved(k, -h)) / (2.0 * h)).collect();
        let norm = fd.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm.is_finite() && norm > 0.0, "degenerate gradient at {base:?}");
        let diff = g.iter().zip(&fd).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(diff / norm);
    }
    assert!(worst <= 1e-4, "worst relative gradient mismatch {worst:e}");
}

fn quick() -> DsdOptions {
    DsdOptions { seeds: SeedSelection::First(8), ..DsdOptions::default() }
}

#[test]
fn seed_dominance_and_consistency() {
    let r = dsd(&ellipsoid(1.3, 1.0, 0.8, 3), &three_bump(0.4, 3), &DsdOptions::default()).unwrap();
    let best_seed = r.per_seed.iter().map(|s| s.initial_energy).fold(f64::INFINITY, f64::min);
    let best_final = r.per_seed.iter().map(|s| s.energy).fold(f64::INFINITY, f64::min);
    assert!(r.d_sd <= best_seed + 1e-12);
    assert!((r.d_sd - best_final).abs() <= 1e-12);
    assert!((r.d_sd - r.energy.e_sd).abs() <= 1e-12);
    for s in &r.per_seed {
        assert!(s.energy <= s.initial_energy);
    }
}

#[test]
fn rigid_motion_invariance() {
    let first = three_bump(0.9, 3);
    let second = ellipsoid(1.5, 1.1, 0.9, 3);
    let reference = dsd(&first, &second, &quick()).unwrap().d_sd;
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let motion = (rotation(), proptest::array::uniform3(-3.0f64..3.0));
    for _ in 0..3 {
        let (rot, t) = motion.new_tree(&mut runner).unwrap().current();
        let moved = first.map_vertices(|v| rot * v + Vec3::from(t));
        let d = dsd(&moved, &second, &quick()).unwrap().d_sd;
        assert!((d - reference).abs() <= 0.01 * reference, "{d} vs {reference}");
    }
}

#[test]
fn self_distance_and_symmetry() {
    let shapes = [ellipsoid(1.6, 1.0, 1.0, 3), three_bump(1.0, 3), noisy_sphere(3, 0.3, 11).unwrap()];
    for m in &shapes {
        let d = dsd(m, m, &quick()).unwrap().d_sd;
        assert!(d <= 1e-6 * m.normalize_area().unwrap().surface_area().sqrt(), "self distance {d}");
    }
    let ab = dsd(&shapes[0], &shapes[1], &DsdOptions::default()).unwrap().d_sd;
    let ba = dsd(&shapes[1], &shapes[0], &DsdOptions::default()).unwrap().d_sd;
    assert!((ab - ba).abs() <= 1e-3 * ab, "{ab} vs {ba}");
}
