//! Closed-form values from the smooth theory and quadrature over the
//! stereographic plane, for anchoring the discrete pipeline.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mobius::MobiusTransform;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("closed form needs A > 1, got {0} (E1(A) = E1(1/A))")]
    ScalingOutOfRange(f64),
    #[error("quadrature needs at least {min} {what} nodes")]
    TooFewNodes { what: &'static str, min: usize },
    #[error("quadrature unconverged: halving radial nodes changes the result by {0:e} (relative)")]
    NotConverged(f64),
    #[error("areas must be positive")]
    NonPositiveArea,
}

/// The two normal forms of Möbius maps whose dilation has a closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaKind {
    /// `z -> z + B`
    Translation(Complex64),
    /// `z -> A z`
    Scaling(Complex64),
}

impl LambdaKind {
    pub fn transform(&self) -> MobiusTransform {
        match *self {
            Self::Translation(b) => MobiusTransform::translation(b),
            Self::Scaling(a) => MobiusTransform::scaling(a).expect("nonzero scale"),
        }
    }
}

pub fn lambda_closed_form(kind: LambdaKind, z: Complex64) -> f64 {
    let r2 = z.norm_sqr();
    match kind {
        LambdaKind::Translation(b) => (1.0 + r2) / (1.0 + (z + b).norm_sqr()),
        LambdaKind::Scaling(a) => a.norm() * (1.0 + r2) / (1.0 + a.norm_sqr() * r2),
    }
}

/// `E_1` of `z -> A z` on the unit sphere: `8 π A ln A / (A^2 - 1)`.
pub fn e1_scaling(a: f64) -> Result<f64, OracleError> {
    if !(a > 1.0) || !a.is_finite() {
        return Err(OracleError::ScalingOutOfRange(a));
    }
    Ok(8.0 * PI * a * a.ln() / (a * a - 1.0))
}

/// [`e1_scaling`] extended to all `A > 0` through `E_1(A) = E_1(1/A)`, with
/// the limit `4π` at `A = 1`.
pub fn e1_scaling_any(a: f64) -> Result<f64, OracleError> {
    if !(a > 0.0) {
        return Err(OracleError::ScalingOutOfRange(a));
    }
    if a == 1.0 {
        Ok(4.0 * PI)
    } else {
        e1_scaling(if a > 1.0 { a } else { 1.0 / a })
    }
}

/// Tensor quadrature on the sphere in stereographic polar coordinates:
/// composite Gauss-Legendre in the polar angle `θ` (with `r = tan(θ/2)`,
/// measured from the south pole `z = 0`) and the trapezoid rule in `φ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub radial_nodes: usize,
    pub angular_nodes: usize,
    /// Outer radius in the plane; infinity covers the whole sphere.
    pub cutoff: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { radial_nodes: 1024, angular_nodes: 512, cutoff: f64::INFINITY }
    }
}

const PANEL_ORDER: usize = 16;

fn integrate_sphere(spec: &QuadratureSpec, f: impl Fn(Complex64) -> f64 + Sync) -> Result<f64, OracleError> {
    if spec.radial_nodes < PANEL_ORDER {
        return Err(OracleError::TooFewNodes { what: "radial", min: PANEL_ORDER });
    }
    if spec.angular_nodes < 4 {
        return Err(OracleError::TooFewNodes { what: "angular", min: 4 });
    }
    let theta_max = if spec.cutoff.is_finite() { 2.0 * spec.cutoff.atan() } else { PI };
    let panels = spec.radial_nodes / PANEL_ORDER;
    let rule = GaussLegendre::new(NonZeroUsize::new(PANEL_ORDER).unwrap());
    let dphi = 2.0 * PI / spec.angular_nodes as f64;
    let ring = |theta: f64| -> f64 {
        let r = (0.5 * theta).tan();
        let s: f64 = (0..spec.angular_nodes)
            .map(|k| f(Complex64::from_polar(r, k as f64 * dphi)))
            .sum();
        // 4/(1+r^2)^2 r dr = sin θ dθ
        s * dphi * theta.sin()
    };
    let h = theta_max / panels as f64;
    Ok((0..panels)
        .map(|p| rule.integrate(p as f64 * h, (p + 1) as f64 * h, ring))
        .sum())
}

/// `∫ λ_m dA` over the unit sphere.
pub fn quadrature_e1(m: &MobiusTransform, spec: &QuadratureSpec) -> Result<f64, OracleError> {
    let value = integrate_sphere(spec, |z| m.dilation_at(z))?;
    let coarse = QuadratureSpec { radial_nodes: spec.radial_nodes / 2, ..*spec };
    if coarse.radial_nodes >= PANEL_ORDER {
        let check = integrate_sphere(&coarse, |z| m.dilation_at(z))?;
        let rel = (value - check).abs() / value.abs().max(f64::MIN_POSITIVE);
        if rel > 1e-6 {
            return Err(OracleError::NotConverged(rel));
        }
    }
    Ok(value)
}

/// Smooth `∫ (λ - 1)^2 dA` for a Möbius self-map of the unit sphere.
pub fn quadrature_elastic(m: &MobiusTransform, spec: &QuadratureSpec) -> Result<f64, OracleError> {
    integrate_sphere(spec, |z| (m.dilation_at(z) - 1.0).powi(2))
}

/// `d_sd` between two round spheres of the given areas.
pub fn rescaling_distance(a1: f64, a2: f64) -> Result<f64, OracleError> {
    if !(a1 > 0.0 && a2 > 0.0) {
        return Err(OracleError::NonPositiveArea);
    }
    Ok(2.0 * (a2.sqrt() - a1.sqrt()).abs())
}

/// Elastic energy of a conformal map with average stretch `e1`:
/// `A_1 + A_2 - 2 E_1`.
pub fn elastic_identity(a1: f64, a2: f64, e1: f64) -> f64 {
    a2 + a1 - 2.0 * e1
}
