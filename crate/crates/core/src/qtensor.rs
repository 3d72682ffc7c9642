//! Pointwise Q-tensor algebra.
//!
//! A [`QTensor`] is a symmetric traceless 3×3 matrix stored as five
//! coefficients in the orthonormal basis
//!
//! ```text
//! E1 = (2 e3⊗e3 − e1⊗e1 − e2⊗e2) / √6
//! E2 = (e1⊗e1 − e2⊗e2) / √2
//! E3 = (e1⊗e2 + e2⊗e1) / √2
//! E4 = (e1⊗e3 + e3⊗e1) / √2
//! E5 = (e2⊗e3 + e3⊗e2) / √2
//! ```
//!
//! so that `tr(Ei Ej) = δij`. The Euclidean norm of the coefficient vector is
//! the Frobenius norm `|Q| = √tr(Q²)`, and gradients with respect to the
//! coefficients are the traceless-projected matrix gradients.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::bulk::MaterialParams;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat3, Vec3};

const SQRT2: f64 = std::f64::consts::SQRT_2;
const SQRT6: f64 = 2.449_489_742_783_178;

/// Below this norm the biaxiality parameter is reported as 0.
pub const BETA_NORM_FLOOR: f64 = 1e-8;

/// Tolerance on `|n| = 1` for caller-supplied directors.
pub const UNIT_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QTensor(pub [f64; 5]);

impl QTensor {
    pub const ZERO: QTensor = QTensor([0.0; 5]);

    pub fn new(coeffs: [f64; 5]) -> Self {
        QTensor(coeffs)
    }

    pub fn coeffs(&self) -> &[f64; 5] {
        &self.0
    }

    /// Projects the symmetric part of `m` onto the traceless subspace.
    pub fn from_matrix(m: &Mat3) -> Self {
        let s01 = 0.5 * (m[(0, 1)] + m[(1, 0)]);
        let s02 = 0.5 * (m[(0, 2)] + m[(2, 0)]);
        let s12 = 0.5 * (m[(1, 2)] + m[(2, 1)]);
        QTensor([
            (2.0 * m[(2, 2)] - m[(0, 0)] - m[(1, 1)]) / SQRT6,
            (m[(0, 0)] - m[(1, 1)]) / SQRT2,
            SQRT2 * s01,
            SQRT2 * s02,
            SQRT2 * s12,
        ])
    }

    pub fn to_matrix(&self) -> Mat3 {
        let [q1, q2, q3, q4, q5] = self.0;
        let d = q1 / SQRT6;
        let e = q2 / SQRT2;
        let xy = q3 / SQRT2;
        let xz = q4 / SQRT2;
        let yz = q5 / SQRT2;
        Mat3::new(e - d, xy, xz, xy, -e - d, yz, xz, yz, 2.0 * d)
    }

    /// `s (n⊗n − Id/3)`.
    pub fn from_uniaxial(s: f64, n: &Vec3) -> Result<Self> {
        let len = n.norm();
        if !len.is_finite() || (len - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "director must have unit length, got |n| = {len}"
            )));
        }
        Ok(Self::uniaxial_unchecked(s, n))
    }

    pub(crate) fn uniaxial_unchecked(s: f64, n: &Vec3) -> Self {
        // The traceless projection removes the Id/3 term exactly.
        QTensor::from_matrix(&(n * n.transpose() * s))
    }

    /// `s (n⊗n − Id/3) + r (m⊗m − Id/3)`.
    pub fn from_sr(s: f64, r: f64, n: &Vec3, m: &Vec3) -> Self {
        Self::uniaxial_unchecked(s, n) + Self::uniaxial_unchecked(r, m)
    }

    /// `S (n⊗n − Id/3) + R (m⊗m − p⊗p)`.
    pub fn from_sr_cap(big_s: f64, big_r: f64, n: &Vec3, m: &Vec3, p: &Vec3) -> Self {
        let diff = m * m.transpose() - p * p.transpose();
        Self::uniaxial_unchecked(big_s, n) + QTensor::from_matrix(&(diff * big_r))
    }

    pub fn dot(&self, other: &QTensor) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    /// `tr(Q²)`.
    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    /// Frobenius norm `√tr(Q²)`.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn det(&self) -> f64 {
        self.to_matrix().determinant()
    }

    /// Returns `(tr Q², tr Q³)`.
    ///
    /// For traceless matrices `tr Q³ = 3 det Q`, and `tr Q⁴ = (tr Q²)²/2`.
    pub fn trace_powers(&self) -> (f64, f64) {
        (self.norm_sq(), 3.0 * self.det())
    }

    /// Traceless part of `Q²`.
    pub fn square_traceless(&self) -> QTensor {
        let m = self.to_matrix();
        QTensor::from_matrix(&(m * m))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn scaled(&self, s: f64) -> QTensor {
        *self * s
    }
}

impl Add for QTensor {
    type Output = QTensor;
    fn add(self, rhs: QTensor) -> QTensor {
        let mut out = self;
        out += rhs;
        out
    }
}

impl AddAssign for QTensor {
    fn add_assign(&mut self, rhs: QTensor) {
        for (a, b) in self.0.iter_mut().zip(rhs.0.iter()) {
            *a += b;
        }
    }
}

impl Sub for QTensor {
    type Output = QTensor;
    fn sub(self, rhs: QTensor) -> QTensor {
        let mut out = self;
        out -= rhs;
        out
    }
}

impl SubAssign for QTensor {
    fn sub_assign(&mut self, rhs: QTensor) {
        for (a, b) in self.0.iter_mut().zip(rhs.0.iter()) {
            *a -= b;
        }
    }
}

impl Mul<f64> for QTensor {
    type Output = QTensor;
    fn mul(self, s: f64) -> QTensor {
        QTensor(self.0.map(|x| x * s))
    }
}

impl Neg for QTensor {
    type Output = QTensor;
    fn neg(self) -> QTensor {
        QTensor(self.0.map(|x| -x))
    }
}

/// Spectral decomposition with eigenvalues sorted descending.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenSystem {
    pub values: [f64; 3],
    pub vectors: [Vec3; 3],
}

impl EigenSystem {
    pub fn reconstruct(&self) -> QTensor {
        let m: Mat3 = self
            .values
            .iter()
            .zip(self.vectors.iter())
            .map(|(l, v)| v * v.transpose() * *l)
            .sum();
        QTensor::from_matrix(&m)
    }

    /// Smallest pairwise eigenvalue gap.
    pub fn min_gap(&self) -> f64 {
        (self.values[0] - self.values[1]).min(self.values[1] - self.values[2])
    }
}

fn canonical_eigensystem() -> EigenSystem {
    EigenSystem {
        values: [0.0; 3],
        vectors: [Vec3::x(), Vec3::y(), Vec3::z()],
    }
}

/// Flips `v` so its first component with magnitude above `1e-12` is positive.
fn fix_sign(v: Vec3) -> Vec3 {
    match v.iter().find(|c| c.abs() > 1e-12) {
        Some(c) if *c < 0.0 => -v,
        _ => v,
    }
}

/// Eigen-decomposition of a Q-tensor.
///
/// Eigenvalues come from the trigonometric (Cardano) solution of the
/// characteristic polynomial `λ³ − (tr Q²/2) λ − det Q`, polished by one
/// Newton step. The eigenvalue farthest from the other two gets its
/// eigenvector from the best-conditioned cross product of rows of `Q − λI`;
/// the remaining pair is resolved by a single Jacobi rotation in the
/// orthogonal plane, whose starting frame is built from the coordinate axis
/// least aligned with the isolated eigenvector. Exact ties therefore give a
/// reproducible frame, and `Q = 0` returns the canonical basis. Every
/// eigenvector has its first non-negligible component made positive.
pub fn eigen(q: &QTensor) -> EigenSystem {
    let t2 = q.norm_sq();
    if t2 == 0.0 || !t2.is_finite() {
        return canonical_eigensystem();
    }
    let m = q.to_matrix();
    let det = m.determinant();

    let p = (t2 / 6.0).sqrt();
    let r = (det / (2.0 * p * p * p)).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let third = 2.0 * std::f64::consts::FRAC_PI_3;
    let mut l = [2.0 * p * phi.cos(), 0.0, 2.0 * p * (phi + third).cos()];
    l[1] = -l[0] - l[2];
    for x in l.iter_mut() {
        let f = *x * *x * *x - 0.5 * t2 * *x - det;
        let df = 3.0 * *x * *x - 0.5 * t2;
        if df.abs() > 1e-12 * t2 {
            let y = *x - f / df;
            let fy = y * y * y - 0.5 * t2 * y - det;
            if fy.abs() < f.abs() {
                *x = y;
            }
        }
    }

    let isolated = if l[0] - l[1] >= l[1] - l[2] { l[0] } else { l[2] };
    let v = isolated_eigenvector(&m, isolated);

    // Orthonormal frame of the complement of v.
    let axis = (0..3)
        .min_by(|&a, &b| v[a].abs().partial_cmp(&v[b].abs()).unwrap())
        .unwrap();
    let mut e = Vec3::zeros();
    e[axis] = 1.0;
    let u = linalg::normalize(&(e - v * e.dot(&v))).unwrap_or_else(Vec3::x);
    let w = v.cross(&u);

    let mu = m * u;
    let mw = m * w;
    let a = u.dot(&mu);
    let b = u.dot(&mw);
    let c = w.dot(&mw);
    let theta = if b == 0.0 { 0.0 } else { 0.5 * (2.0 * b).atan2(a - c) };
    let (sn, cs) = theta.sin_cos();
    let u2 = u * cs + w * sn;
    let w2 = w * cs - u * sn;

    let mut pairs: Vec<(f64, Vec3)> = [v, u2, w2]
        .into_iter()
        .map(|x| {
            let x = linalg::normalize(&x).unwrap_or(x);
            (x.dot(&(m * x)), fix_sign(x))
        })
        .collect();
    // Stable sort keeps the isolated-first order on exact ties.
    pairs.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(std::cmp::Ordering::Equal));
    EigenSystem {
        values: [pairs[0].0, pairs[1].0, pairs[2].0],
        vectors: [pairs[0].1, pairs[1].1, pairs[2].1],
    }
}

fn isolated_eigenvector(m: &Mat3, lambda: f64) -> Vec3 {
    let a = m - Mat3::identity() * lambda;
    let row = |i: usize| a.row(i).transpose();
    let candidates = [row(0).cross(&row(1)), row(0).cross(&row(2)), row(1).cross(&row(2))];
    let best = candidates
        .iter()
        .max_by(|x, y| x.norm_squared().partial_cmp(&y.norm_squared()).unwrap())
        .unwrap();
    linalg::normalize(best).unwrap_or_else(Vec3::x)
}

/// One of the twelve regions of the eigenvalue plane used by the
/// `(s, r)` representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    /// 1 through 6.
    pub index: u8,
    pub positive: bool,
}

impl Region {
    pub fn reflected(self) -> Region {
        Region {
            index: self.index,
            positive: !self.positive,
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R{}{}", self.index, if self.positive { '+' } else { '-' })
    }
}

/// Which of the three eigenvectors plays the role of `n` and `m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    First,
    Second,
    Third,
}

/// Result of classifying an eigenvalue pair `(λ1, λ2)` (with `λ3 = −λ1 − λ2`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionFormula {
    pub region: Region,
    pub s: f64,
    pub r: f64,
    pub n: Slot,
    pub m: Slot,
}

/// Classifies `(λ1, λ2)` into the first matching region in the order
/// R1+…R6+, R1−…R6− and applies that region's linear formulas.
pub fn classify_pair(l1: f64, l2: f64) -> RegionFormula {
    use Slot::*;
    // Positive-half regions, evaluated at (x, y); negative regions reuse them
    // at (−x, −y) with the same (linear) formulas.
    fn positive(x: f64, y: f64) -> Option<(u8, Slot, Slot)> {
        if x <= 0.0 && y >= -2.0 * x {
            Some((1, Second, First))
        } else if y <= 0.0 && x >= -2.0 * y {
            Some((2, First, Second))
        } else if y <= 0.0 && y >= x {
            Some((3, Third, Second))
        } else if x <= 0.0 && x >= y {
            Some((4, Third, First))
        } else if x <= 0.0 && -2.0 * x >= y && y >= -x {
            Some((5, Second, Third))
        } else if y <= 0.0 && -2.0 * y >= x && x >= -y {
            Some((6, First, Third))
        } else {
            None
        }
    }
    fn formulas(index: u8, x: f64, y: f64) -> (f64, f64) {
        // (s, r)
        match index {
            1 => (2.0 * y + x, 2.0 * x + y),
            2 => (2.0 * x + y, 2.0 * y + x),
            3 => (-2.0 * x - y, y - x),
            4 => (-2.0 * y - x, x - y),
            5 => (y - x, -2.0 * x - y),
            _ => (x - y, -2.0 * y - x),
        }
    }
    let (index, positive_half, n, m) = if let Some((i, n, m)) = positive(l1, l2) {
        (i, true, n, m)
    } else if let Some((i, n, m)) = positive(-l1, -l2) {
        (i, false, n, m)
    } else {
        // Unreachable for finite input: the twelve closed regions cover the plane.
        (2, true, First, Second)
    };
    let (s, r) = formulas(index, l1, l2);
    RegionFormula {
        region: Region {
            index,
            positive: positive_half,
        },
        s,
        r,
        n,
        m,
    }
}

/// `Q = s (n⊗n − Id/3) + r (m⊗m − Id/3)` with `0 ≤ r ≤ s/2` or `s/2 ≤ r ≤ 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SrRep {
    pub s: f64,
    pub r: f64,
    pub n: Vec3,
    pub m: Vec3,
    pub region: Region,
}

impl SrRep {
    pub fn reconstruct(&self) -> QTensor {
        QTensor::from_sr(self.s, self.r, &self.n, &self.m)
    }
}

/// `Q = S (n⊗n − Id/3) + R (m⊗m − p⊗p)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SrCapRep {
    pub s: f64,
    pub r: f64,
    pub n: Vec3,
    pub m: Vec3,
    pub p: Vec3,
}

impl SrCapRep {
    pub fn reconstruct(&self) -> QTensor {
        QTensor::from_sr_cap(self.s, self.r, &self.n, &self.m, &self.p)
    }
}

/// Eigen-pairs ordered by decreasing |λ|; ties keep descending-value order.
///
/// Negating `Q` negates every eigenvalue without changing this order, so the
/// selected pair reflects through the origin and `(s, r) → (−s, −r)`.
fn by_magnitude(es: &EigenSystem) -> [(f64, Vec3); 3] {
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| {
        es.values[b]
            .abs()
            .partial_cmp(&es.values[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    idx.map(|i| (es.values[i], es.vectors[i]))
}

pub fn decompose_sr(q: &QTensor) -> SrRep {
    let es = eigen(q);
    let pairs = by_magnitude(&es);
    let f = classify_pair(pairs[0].0, pairs[1].0);
    let pick = |slot: Slot| match slot {
        Slot::First => pairs[0].1,
        Slot::Second => pairs[1].1,
        Slot::Third => pairs[2].1,
    };
    SrRep {
        s: f.s,
        r: f.r,
        n: pick(f.n),
        m: pick(f.m),
        region: f.region,
    }
}

/// Second representation. `n` is the eigenvector whose eigenvalue is
/// farthest from zero, `m` the middle eigenvector and `p` the remaining one,
/// so that `r = 2R` and `s = S + R` hold against [`decompose_sr`].
/// For `Q` with a non-positive middle eigenvalue, `n` is the leading
/// eigenvector.
pub fn decompose_sr_cap(q: &QTensor) -> SrCapRep {
    let es = eigen(q);
    let [l1, l2, l3] = es.values;
    let (ln, lm, n, m, p) = if l1 >= -l3 {
        (l1, l2, es.vectors[0], es.vectors[1], es.vectors[2])
    } else {
        (l3, l2, es.vectors[2], es.vectors[1], es.vectors[0])
    };
    SrCapRep {
        s: 1.5 * ln,
        r: 0.5 * (2.0 * lm + ln),
        n,
        m,
        p,
    }
}

/// `1 − 6 (tr Q³)² / (tr Q²)³` without clamping; 0 below [`BETA_NORM_FLOOR`].
pub fn biaxiality_unclamped(q: &QTensor) -> f64 {
    let (t2, t3) = q.trace_powers();
    if t2.sqrt() <= BETA_NORM_FLOOR {
        return 0.0;
    }
    1.0 - 6.0 * t3 * t3 / (t2 * t2 * t2)
}

/// Biaxiality parameter in `[0, 1]`.
pub fn biaxiality(q: &QTensor) -> f64 {
    biaxiality_unclamped(q).clamp(0.0, 1.0)
}

/// `(tr Q²)³ − 6 (tr Q³)²`; vanishes exactly on uniaxial and isotropic tensors.
pub fn biaxiality_poly(q: &QTensor) -> f64 {
    let (t2, t3) = q.trace_powers();
    t2 * t2 * t2 - 6.0 * t3 * t3
}

/// Nearest point of the bulk minimum manifold, `s₊ (n⊗n − Id/3)` with `n`
/// the leading eigenvector. Requires `S > 8|R|`.
pub fn project_to_uniaxial(q: &QTensor, params: &MaterialParams) -> Result<QTensor> {
    let cap = decompose_sr_cap(q);
    if !(cap.s > 8.0 * cap.r.abs()) {
        return Err(Error::DegenerateProjection { s: cap.s, r: cap.r });
    }
    Ok(QTensor::uniaxial_unchecked(params.s_plus, &cap.n))
}
