//! Möbius transformations of the sphere, stored as unit-determinant 2x2
//! complex matrices acting in stereographic coordinates.
//!
//! Points are pushed through the matrix in homogeneous coordinates
//! `(u, v)` with `z = u / v`, so neither pole needs special casing. With
//! `ad - bc = 1` the round-metric dilation of `m` at `z = u / v` is
//!
//! ```text
//! lambda = (|u|^2 + |v|^2) / (|a u + b v|^2 + |c u + d v|^2)
//! ```
//!
//! which equals `|m'(z)| (1 + |z|^2) / (1 + |m(z)|^2)` wherever both are finite.

use nalgebra::Matrix3;
use num_complex::Complex64;
use thiserror::Error;

use crate::mesh::Vec3;
use crate::sphere::{from_homogeneous, to_homogeneous, ExtComplex, SpherePoint};

pub const CENTER_TOLERANCE: f64 = 1e-8;
pub const CENTER_MAX_ITERATIONS: usize = 1000;

#[derive(Debug, Error)]
pub enum MobiusError {
    #[error("matrix is singular")]
    Singular,
    #[error("input points {0} and {1} coincide")]
    CoincidentPoints(usize, usize),
    #[error("centering did not converge: |center| = {norm:e} after {iterations} iterations")]
    CenteringFailed { norm: f64, iterations: usize },
    #[error("centering needs at least 4 points, got {0}")]
    TooFewPoints(usize),
}

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);
const ONE: C = C::new(1.0, 0.0);
const I: C = C::new(0.0, 1.0);

/// `z -> (a z + b) / (c z + d)` with `ad - bc = 1`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(into = "[f64; 8]", try_from = "[f64; 8]")]
pub struct MobiusTransform {
    pub a: C,
    pub b: C,
    pub c: C,
    pub d: C,
}

impl From<MobiusTransform> for [f64; 8] {
    fn from(m: MobiusTransform) -> Self {
        m.to_array()
    }
}

impl TryFrom<[f64; 8]> for MobiusTransform {
    type Error = MobiusError;

    fn try_from(v: [f64; 8]) -> Result<Self, Self::Error> {
        Self::from_array(v)
    }
}

impl Default for MobiusTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl MobiusTransform {
    /// Normalises `(a, b, c, d)` to unit determinant.
    pub fn new(a: C, b: C, c: C, d: C) -> Result<Self, MobiusError> {
        let det = a * d - b * c;
        let scale = (a.norm_sqr() + b.norm_sqr() + c.norm_sqr() + d.norm_sqr()).max(f64::MIN_POSITIVE);
        if !(det.norm() > 1e-300) || det.norm() < 1e-14 * scale || !det.is_finite() {
            return Err(MobiusError::Singular);
        }
        let s = det.sqrt().inv();
        Ok(Self { a: a * s, b: b * s, c: c * s, d: d * s })
    }

    fn renormalized(a: C, b: C, c: C, d: C) -> Self {
        Self::new(a, b, c, d).expect("product of unit-determinant matrices is invertible")
    }

    pub fn identity() -> Self {
        Self { a: ONE, b: ZERO, c: ZERO, d: ONE }
    }

    /// `z -> A z`.
    pub fn scaling(factor: C) -> Result<Self, MobiusError> {
        Self::new(factor, ZERO, ZERO, ONE)
    }

    /// `z -> z + B`.
    pub fn translation(shift: C) -> Self {
        Self::renormalized(ONE, shift, ZERO, ONE)
    }

    /// Right-handed rotation of the sphere about `axis` by `angle` radians.
    pub fn rotation(axis: &Vec3, angle: f64) -> Self {
        let n = axis.normalize();
        exp_traceless(scale(generator(&n), I * (0.5 * angle)))
    }

    /// Hyperbolic translation pushing mass toward `axis` with the given
    /// rapidity (angular speed 1 at the equator of the axis).
    pub fn boost(axis: &Vec3, rapidity: f64) -> Self {
        let n = axis.normalize();
        exp_traceless(scale(generator(&n), C::new(0.5 * rapidity, 0.0)))
    }

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.a.re, self.a.im, self.b.re, self.b.im, self.c.re, self.c.im, self.d.re, self.d.im,
        ]
    }

    pub fn from_array(v: [f64; 8]) -> Result<Self, MobiusError> {
        Self::new(C::new(v[0], v[1]), C::new(v[2], v[3]), C::new(v[4], v[5]), C::new(v[6], v[7]))
    }

    pub fn det(&self) -> C {
        self.a * self.d - self.b * self.c
    }

    pub fn apply_vec(&self, p: &Vec3) -> Vec3 {
        let (u, v) = to_homogeneous(p);
        from_homogeneous(self.a * u + self.b * v, self.c * u + self.d * v).into_vec()
    }

    pub fn apply(&self, p: &SpherePoint) -> SpherePoint {
        SpherePoint::from_unit(self.apply_vec(p.vec()))
    }

    /// Action on the extended complex plane.
    pub fn apply_complex(&self, z: &ExtComplex) -> ExtComplex {
        let (num, den) = match z {
            ExtComplex::Infinity => (self.a, self.c),
            ExtComplex::Finite(z) => (self.a * z + self.b, self.c * z + self.d),
        };
        if den.norm() == 0.0 {
            ExtComplex::Infinity
        } else {
            ExtComplex::Finite(num / den)
        }
    }

    pub fn dilation_vec(&self, p: &Vec3) -> f64 {
        let (u, v) = to_homogeneous(p);
        let nu = self.a * u + self.b * v;
        let nv = self.c * u + self.d * v;
        (u.norm_sqr() + v.norm_sqr()) / (nu.norm_sqr() + nv.norm_sqr())
    }

    /// Conformal factor of the map with respect to the round metric.
    pub fn dilation(&self, p: &SpherePoint) -> f64 {
        self.dilation_vec(p.vec())
    }

    /// Dilation at a finite stereographic coordinate.
    pub fn dilation_at(&self, z: C) -> f64 {
        let nu = self.a * z + self.b;
        let nv = self.c * z + self.d;
        (1.0 + z.norm_sqr()) / (nu.norm_sqr() + nv.norm_sqr())
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self::renormalized(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )
    }

    pub fn inverse(&self) -> Self {
        Self::renormalized(self.d, -self.b, -self.c, self.a)
    }

    /// Frobenius distance between matrices, minimised over the sign ambiguity
    /// of `SL(2, C)`.
    pub fn distance(&self, other: &Self) -> f64 {
        let diff = |s: f64| {
            ((self.a - other.a * s).norm_sqr()
                + (self.b - other.b * s).norm_sqr()
                + (self.c - other.c * s).norm_sqr()
                + (self.d - other.d * s).norm_sqr())
            .sqrt()
        };
        diff(1.0).min(diff(-1.0))
    }

    /// The unique transform sending `p[i]` to `q[i]` for `i = 0, 1, 2`.
    pub fn from_three_points(p: [SpherePoint; 3], q: [SpherePoint; 3]) -> Result<Self, MobiusError> {
        let to_standard = |pts: &[SpherePoint; 3]| -> Result<Self, MobiusError> {
            for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                if (pts[i].vec() - pts[j].vec()).norm() < 1e-12 {
                    return Err(MobiusError::CoincidentPoints(i, j));
                }
            }
            let h: Vec<(C, C)> = pts
                .iter()
                .map(|p| {
                    let (u, v) = to_homogeneous(p.vec());
                    let n = (u.norm_sqr() + v.norm_sqr()).sqrt();
                    (u / n, v / n)
                })
                .collect();
            let (u1, v1) = h[0];
            let (u2, v2) = h[1];
            let (u3, v3) = h[2];
            // Rows proportional to (z - z1) and (z - z3), scaled so z2 -> 1.
            let k3 = v3 * u2 - u3 * v2;
            let k1 = v1 * u2 - u1 * v2;
            Self::new(v1 * k3, -u1 * k3, v3 * k1, -u3 * k1)
        };
        let tp = to_standard(&p)?;
        let tq = to_standard(&q)?;
        Ok(tq.inverse().compose(&tp))
    }
}

fn generator(n: &Vec3) -> [[C; 2]; 2] {
    // n_x Gx + n_y Gy + n_z Gz with Gx = [[0,1],[1,0]], Gy = [[0,i],[-i,0]],
    // Gz = diag(1,-1); boosts along +axis and right-handed rotations.
    [
        [C::new(n.z, 0.0), C::new(n.x, n.y)],
        [C::new(n.x, -n.y), C::new(-n.z, 0.0)],
    ]
}

fn scale(m: [[C; 2]; 2], s: C) -> [[C; 2]; 2] {
    [[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]]
}

/// Exponential of a traceless 2x2 matrix `X`: since `X^2 = s^2 I` with
/// `s^2 = -det X`, `exp X = cosh(s) I + sinh(s)/s X`.
fn exp_traceless(x: [[C; 2]; 2]) -> MobiusTransform {
    let s2 = x[0][0] * x[0][0] + x[0][1] * x[1][0];
    let s = s2.sqrt();
    let (ch, shc) = if s.norm() < 1e-4 {
        (ONE + s2 / 2.0 + s2 * s2 / 24.0, ONE + s2 / 6.0 + s2 * s2 / 120.0)
    } else {
        (s.cosh(), s.sinh() / s)
    };
    MobiusTransform::renormalized(
        ch + shc * x[0][0],
        shc * x[0][1],
        shc * x[1][0],
        ch + shc * x[1][1],
    )
}

/// Six real coordinates around a base transform: `offset[0..3]` is a boost
/// vector, `offset[3..6]` a rotation vector, combined as
/// `exp(½ (w + iθ)·G) ∘ base`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobiusChart {
    pub base: MobiusTransform,
    pub offset: [f64; 6],
}

impl MobiusChart {
    pub fn new(base: MobiusTransform, offset: [f64; 6]) -> Self {
        Self { base, offset }
    }

    pub fn at(base: MobiusTransform) -> Self {
        Self { base, offset: [0.0; 6] }
    }

    pub fn perturb(&self) -> MobiusTransform {
        if self.offset.iter().all(|&x| x == 0.0) {
            return self.base;
        }
        let o = &self.offset;
        let w = C::new;
        let x = [
            [w(o[2], o[5]), w(o[0] - o[4], o[1] + o[3])],
            [w(o[0] + o[4], -o[1] + o[3]), w(-o[2], -o[5])],
        ];
        exp_traceless(scale(x, C::new(0.5, 0.0))).compose(&self.base)
    }
}

/// Finds a Möbius transform that moves the Euclidean centre of mass of
/// `points` to the origin, by damped Newton steps over boosts.
pub fn center_vertices(points: &[SpherePoint]) -> Result<MobiusTransform, MobiusError> {
    if points.len() < 4 {
        return Err(MobiusError::TooFewPoints(points.len()));
    }
    let n = points.len() as f64;
    let centroid = |m: &MobiusTransform| -> (Vec3, Vec<Vec3>) {
        let moved: Vec<Vec3> = points.iter().map(|p| m.apply_vec(p.vec())).collect();
        let c = moved.iter().fold(Vec3::zeros(), |acc, p| acc + p) / n;
        (c, moved)
    };
    let mut m = MobiusTransform::identity();
    let (mut c, mut moved) = centroid(&m);
    for iteration in 0..CENTER_MAX_ITERATIONS {
        if c.norm() <= CENTER_TOLERANCE {
            return Ok(m);
        }
        // d(centroid)/d(boost vector) = mean(I - p p^T).
        let mut jac = Matrix3::zeros();
        for p in &moved {
            jac += Matrix3::identity() - p * p.transpose();
        }
        jac /= n;
        let step = jac
            .lu()
            .solve(&(-c))
            .filter(|s| s.iter().all(|x| x.is_finite()))
            .unwrap_or(-c);
        let mut length = step.norm().min(2.0);
        let dir = step / step.norm();
        let mut improved = false;
        for _ in 0..40 {
            let trial = MobiusTransform::boost(&dir, length).compose(&m);
            let (tc, tmoved) = centroid(&trial);
            if tc.norm() < c.norm() {
                m = trial;
                c = tc;
                moved = tmoved;
                improved = true;
                break;
            }
            length *= 0.5;
        }
        if !improved {
            return Err(MobiusError::CenteringFailed { norm: c.norm(), iterations: iteration });
        }
    }
    if c.norm() <= CENTER_TOLERANCE {
        Ok(m)
    } else {
        Err(MobiusError::CenteringFailed { norm: c.norm(), iterations: CENTER_MAX_ITERATIONS })
    }
}
