//! Quartic bulk potential, its shifted form, gradient and lower bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qtensor::{self, QTensor};

const SQRT6: f64 = 2.449_489_742_783_178;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
    /// Elastic constant.
    pub l: f64,
    pub s_plus: f64,
    pub s_minus: f64,
    /// `f_B` at `s₊ (n⊗n − Id/3)`, the global minimum of the potential.
    pub f_min: f64,
}

impl MaterialParams {
    pub fn new(a2: f64, b2: f64, c2: f64, l: f64) -> Result<Self> {
        for (name, v) in [("a2", a2), ("b2", b2), ("c2", c2), ("L", l)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        let disc = (b2 * b2 + 24.0 * a2 * c2).sqrt();
        let s_plus = (b2 + disc) / (4.0 * c2);
        let s_minus = (b2 - disc) / (4.0 * c2);
        let mut p = MaterialParams {
            a2,
            b2,
            c2,
            l,
            s_plus,
            s_minus,
            f_min: 0.0,
        };
        p.f_min = p.f_uniaxial(s_plus);
        Ok(p)
    }

    pub fn with_l(&self, l: f64) -> Result<Self> {
        Self::new(self.a2, self.b2, self.c2, l)
    }

    /// `√(2/3) s₊`, the norm of every tensor on the minimum manifold.
    pub fn q_min_norm(&self) -> f64 {
        (2.0f64 / 3.0).sqrt() * self.s_plus
    }

    /// Bulk potential along `s (n⊗n − Id/3)`: `s²(−9a² − 2b²s + 3c²s²)/27`.
    pub fn f_uniaxial(&self, s: f64) -> f64 {
        s * s * (-9.0 * self.a2 - 2.0 * self.b2 * s + 3.0 * self.c2 * s * s) / 27.0
    }

    /// Derivative of [`MaterialParams::f_uniaxial`]; its roots are `0, s₊, s₋`.
    pub fn df_uniaxial(&self, s: f64) -> f64 {
        2.0 * s * (-3.0 * self.a2 - self.b2 * s + 2.0 * self.c2 * s * s) / 9.0
    }

    /// `(2c²s₊²/3 + a²)/2`, the curvature of the potential across `Q_min`.
    fn norm_curvature(&self) -> f64 {
        0.5 * (2.0 * self.c2 * self.s_plus * self.s_plus / 3.0 + self.a2)
    }
}

/// `−(a²/2) tr Q² − (b²/3) tr Q³ + (c²/4) (tr Q²)²`.
pub fn f_bulk(q: &QTensor, p: &MaterialParams) -> f64 {
    let (t2, t3) = q.trace_powers();
    -0.5 * p.a2 * t2 - p.b2 / 3.0 * t3 + 0.25 * p.c2 * t2 * t2
}

/// `f_B(Q) − f_min ≥ 0`.
pub fn f_bulk_shifted(q: &QTensor, p: &MaterialParams) -> f64 {
    f_bulk(q, p) - p.f_min
}

/// `−a²Q − b²(Q² − tr(Q²) Id/3) + c² tr(Q²) Q`.
///
/// This is the derivative of [`f_bulk`] with respect to the basis
/// coefficients; stationary points of the energy satisfy `L ΔQ = G(Q)`.
pub fn bulk_gradient(q: &QTensor, p: &MaterialParams) -> QTensor {
    let t2 = q.norm_sq();
    *q * (-p.a2 + p.c2 * t2) - q.square_traceless() * p.b2
}

/// Lower bound `K (|Q| − √(2/3)s₊)² + b²/(6√6) β |Q|³` with
/// `K = (2c²s₊²/3 + a²)/2`.
///
/// The bound is exact on `Q_min` but is not a valid lower bound for every
/// tensor: it overestimates `f̃_B` on uniaxial states with `0 < s < s₊`.
pub fn bound_beta(q: &QTensor, p: &MaterialParams) -> f64 {
    let norm = q.norm();
    let d = norm - p.q_min_norm();
    p.norm_curvature() * d * d + p.b2 / (6.0 * SQRT6) * qtensor::biaxiality(q) * norm.powi(3)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundCase {
    /// `0 ≤ r ≤ s/2`, `s ≤ s₊`.
    I,
    /// `0 ≤ r ≤ s/2`, `s > s₊`.
    II,
    /// `s/2 ≤ r ≤ 0`.
    III,
}

impl std::fmt::Display for BoundCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BoundCase::I => "i",
            BoundCase::II => "ii",
            BoundCase::III => "iii",
        })
    }
}

/// Coefficient of the biaxial term in the large-`s` bound.
///
/// Equals `η / (12√12)` with `η = min β(γ)/(γ²(1−γ)²)` over `γ ∈ (0, 1/2]`,
/// rounded down; see [`derive_tau`].
pub const TAU: f64 = 0.1623;

/// Numerical derivation of [`TAU`]: minimizes `β(γ)/(γ²(1−γ)²)` on a fine
/// grid of `γ = r/s`, with `β = 2s²r²(s−r)² / (tr Q²)³` evaluated in the
/// factored form so the small-`γ` end does not cancel.
pub fn derive_tau() -> f64 {
    let steps = 100_000;
    let eta = (1..=steps)
        .map(|k| 0.5 * k as f64 / steps as f64)
        .map(|g| {
            let t2 = 2.0 / 3.0 * (1.0 - g + g * g);
            let beta = 2.0 * g * g * (1.0 - g) * (1.0 - g) / t2.powi(3);
            beta / (g * g * (1.0 - g) * (1.0 - g))
        })
        .fold(f64::INFINITY, f64::min);
    eta / (12.0 * 12f64.sqrt())
}

/// Case-wise lower bound on `f̃_B` from the `(s, r)` representation.
pub fn bound_sr(q: &QTensor, p: &MaterialParams) -> (BoundCase, f64) {
    let rep = qtensor::decompose_sr(q);
    let (s, r) = (rep.s, rep.r);
    let sp = p.s_plus;
    if !rep.region.positive {
        let value = -p.a2 * p.a2 / (4.0 * p.c2) - sp.powi(3) / 3.0 * (p.b2 / 9.0 - p.c2 * sp / 3.0);
        return (BoundCase::III, value);
    }
    if s <= sp {
        let value = (sp - s).powi(2) * (p.c2 * sp * sp + 3.0 * p.a2) / 27.0
            + r * (s - r) / 9.0 * (3.0 * p.a2 + p.b2 * s - 2.0 * p.c2 * s * s)
            + 5.0 * p.b2 * r * r * s / 27.0;
        return (BoundCase::I, value);
    }
    // |Q| ranges over [s/√2, √(2/3) s] as r sweeps [0, s/2]; the distance of
    // the minimum-manifold norm to that interval bounds the radial term.
    let target = p.q_min_norm();
    let lo = s / std::f64::consts::SQRT_2;
    let hi = (2.0f64 / 3.0).sqrt() * s;
    let dist = if target < lo {
        lo - target
    } else if target > hi {
        target - hi
    } else {
        0.0
    };
    let g = r / s;
    let value = p.norm_curvature() * dist * dist + TAU * p.b2 * sp.powi(3) * g * g * (1.0 - g).powi(2);
    (BoundCase::II, value)
}
