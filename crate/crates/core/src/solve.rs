//! Energy minimizers for the Q-tensor and director problems.
//!
//! Both solvers run gradient descent with Barzilai–Borwein steps and Armijo
//! backtracking, and only ever touch interior nodes. Trial steps are accepted
//! on an energy difference assembled from per-edge and per-node increments
//! rather than by subtracting two totals, which keeps the acceptance test
//! meaningful when the residual is many orders below the energy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bulk::MaterialParams;
use crate::error::{Error, Result};
use crate::field::{self, plane_sum, DirectorField, Grid3, QField};
use crate::linalg::{self, Vec3};
use crate::qtensor::QTensor;

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    Fixed,
    AdaptiveCurvature,
}

impl StepRule {
    pub fn name(&self) -> &'static str {
        match self {
            StepRule::Fixed => "fixed",
            StepRule::AdaptiveCurvature => "adaptive-curvature",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(StepRule::Fixed),
            "adaptive-curvature" => Ok(StepRule::AdaptiveCurvature),
            other => Err(Error::InvalidInput(format!("unknown step rule '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Stop once the residual max-norm is at or below this.
    pub tol_residual: f64,
    pub step_rule: StepRule,
    /// Multiplier on the stability-limited step `1 / (12L/h² + bulk curvature)`.
    pub initial_step: f64,
    pub seed: u64,
    /// Energy is appended to the trace every `log_every` accepted steps.
    pub log_every: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 200_000,
            tol_residual: 1e-8,
            step_rule: StepRule::AdaptiveCurvature,
            initial_step: 1.0,
            seed: 0,
            log_every: 100,
        }
    }
}

impl SolverOptions {
    /// Defaults with the residual tolerance `1e-8 a² s₊`.
    pub fn for_params(p: &MaterialParams) -> Self {
        SolverOptions {
            tol_residual: 1e-8 * p.a2 * p.s_plus,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol_residual > 0.0) {
            return Err(Error::InvalidInput("tol_residual must be positive".into()));
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidInput("max_iters must be at least 1".into()));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(Error::InvalidInput("initial_step must be positive".into()));
        }
        if self.log_every < 1 {
            return Err(Error::InvalidInput("log_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_energy: f64,
    pub final_residual: f64,
    /// `(iteration, energy)`; energies are the initial value plus the
    /// accumulated accepted decrements.
    pub energy_trace: Vec<(usize, f64)>,
    pub converged: bool,
    pub max_q_norm: f64,
    pub failure: Option<String>,
}

impl SolveReport {
    pub fn into_result(self) -> Result<SolveReport> {
        match &self.failure {
            Some(msg) => Err(Error::Solver(msg.clone())),
            None => Ok(self),
        }
    }
}

/// Abstract problem for the descent driver: a state on interior nodes, a
/// mass-scaled descent direction, and an exact energy increment.
trait Problem {
    type State: Clone + Sync;

    fn energy(&self, x: &Self::State) -> f64;
    /// Returns `(max-norm, direction)` where the direction is `−∇E / h³`
    /// (projected onto the constraint tangent space where relevant).
    fn direction(&self, x: &Self::State) -> (f64, Self::State);
    fn step(&self, x: &Self::State, d: &Self::State, alpha: f64) -> Self::State;
    /// `E(y) − E(x)` assembled without cancellation against the totals.
    fn energy_delta(&self, x: &Self::State, y: &Self::State) -> f64;
    /// `Σ a·b` over interior nodes.
    fn inner(&self, a: &Self::State, b: &Self::State) -> f64;
    fn diff(&self, a: &Self::State, b: &Self::State) -> Self::State;
    fn h3(&self) -> f64;
}

fn descend<P: Problem>(problem: &P, x0: P::State, alpha0: f64, opts: &SolverOptions) -> (P::State, SolveReport) {
    let mut x = x0;
    let mut energy = problem.energy(&x);
    let mut trace = vec![(0, energy)];
    let (mut rmax, mut d) = problem.direction(&x);
    let mut alpha = alpha0;
    let mut iterations = 0;
    let mut failure = None;
    let h3 = problem.h3();

    if !energy.is_finite() || !rmax.is_finite() {
        failure = Some("non-finite initial energy or residual".to_string());
    }

    while failure.is_none() && rmax > opts.tol_residual && iterations < opts.max_iters {
        let slope = h3 * problem.inner(&d, &d);
        let mut trial = alpha;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let y = problem.step(&x, &d, trial);
            let delta = problem.energy_delta(&x, &y);
            if delta.is_finite() && delta <= -ARMIJO_C1 * trial * slope {
                accepted = Some((y, delta));
                break;
            }
            trial *= 0.5;
        }
        let Some((y, delta)) = accepted else {
            failure = Some(format!(
                "step underflow at iteration {iterations} with residual {rmax:e}"
            ));
            break;
        };
        iterations += 1;
        energy += delta;
        let (rmax_new, d_new) = problem.direction(&y);
        alpha = match opts.step_rule {
            StepRule::Fixed => alpha0,
            StepRule::AdaptiveCurvature => {
                let s = problem.diff(&y, &x);
                let yd = problem.diff(&d, &d_new);
                let ss = problem.inner(&s, &s);
                let sy = problem.inner(&s, &yd);
                if sy > 0.0 && (ss / sy).is_finite() {
                    (ss / sy).clamp(1e-3 * alpha0, 1e6 * alpha0)
                } else {
                    (2.0 * trial).min(1e6 * alpha0)
                }
            }
        };
        x = y;
        d = d_new;
        rmax = rmax_new;
        if !rmax.is_finite() {
            failure = Some(format!("non-finite residual at iteration {iterations}"));
        }
        if iterations % opts.log_every == 0 {
            trace.push((iterations, energy));
            log::debug!("iteration {iterations}: energy {energy:e}, residual {rmax:e}");
        }
    }
    if trace.last().map(|t| t.0) != Some(iterations) {
        trace.push((iterations, energy));
    }
    let converged = failure.is_none() && rmax <= opts.tol_residual;
    let final_energy = problem.energy(&x);
    (
        x,
        SolveReport {
            iterations,
            final_energy,
            final_residual: rmax,
            energy_trace: trace,
            converged,
            max_q_norm: 0.0,
            failure,
        },
    )
}

struct QProblem<'a> {
    grid: Grid3,
    p: &'a MaterialParams,
}

impl QProblem<'_> {
    fn field(&self, values: &[QTensor]) -> QField {
        QField {
            grid: self.grid,
            values: values.to_vec(),
        }
    }
}

fn bulk_delta(q: &QTensor, q2: &QTensor, p: &MaterialParams) -> f64 {
    let d = (*q2 - *q).to_matrix();
    let a = q.to_matrix();
    let b = q2.to_matrix();
    let sum = a + b;
    let dt2 = (d * sum).trace();
    let quad = b * b + b * a + a * a;
    let dt3 = (d * quad).trace();
    let t2sum = q.norm_sq() + q2.norm_sq();
    -0.5 * p.a2 * dt2 - p.b2 / 3.0 * dt3 + 0.25 * p.c2 * dt2 * t2sum
}

/// `Σ_edges w (|Δb|² − |Δa|²)` in factored form, with the change of the
/// difference taken from nodal displacements,, plus `Σ_interior node(a, b)`.
fn assembled_delta<T, E, N>(grid: &Grid3, a: &[T], b: &[T], edge: E, node: N) -> (f64, f64)
where
    T: Sync,
    E: Fn(&T, &T, &T, &T) -> f64 + Sync + Send,
    N: Fn(&T, &T) -> f64 + Sync + Send,
{
    let strides = grid.strides();
    let dims = grid.dims();
    let partial: Vec<(f64, f64)> = (0..grid.nz)
        .into_par_iter()
        .map(|k| {
            let mut e = 0.0;
            let mut n = 0.0;
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    let idx = grid.index(i, j, k);
                    let c = [i, j, k];
                    let interior = !grid.is_boundary(i, j, k);
                    for axis in 0..3 {
                        if c[axis] + 1 < dims[axis] {
                            let o = idx + strides[axis];
                            if interior || !grid.is_boundary_idx(o) {
                                e += grid.edge_weight(idx, axis) * edge(&a[idx], &a[o], &b[idx], &b[o]);
                            }
                        }
                    }
                    if interior {
                        n += node(&a[idx], &b[idx]);
                    }
                }
            }
            (e, n)
        })
        .collect();
    partial.iter().fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1))
}

impl Problem for QProblem<'_> {
    type State = Vec<QTensor>;

    fn energy(&self, x: &Vec<QTensor>) -> f64 {
        field::total_energy(&self.field(x), self.p)
    }

    fn direction(&self, x: &Vec<QTensor>) -> (f64, Vec<QTensor>) {
        field::el_residual(&self.field(x), self.p)
    }

    fn step(&self, x: &Vec<QTensor>, d: &Vec<QTensor>, alpha: f64) -> Vec<QTensor> {
        let g = &self.grid;
        let mut out = x.clone();
        out.par_chunks_mut(g.plane_len()).enumerate().for_each(|(k, plane)| {
            if k == 0 || k + 1 == g.nz {
                return;
            }
            for j in 1..g.ny - 1 {
                for i in 1..g.nx - 1 {
                    let o = i + g.nx * j;
                    plane[o] += d[g.index(i, j, k)] * alpha;
                }
            }
        });
        out
    }

    fn energy_delta(&self, x: &Vec<QTensor>, y: &Vec<QTensor>) -> f64 {
        let (e, n) = assembled_delta(
            &self.grid,
            x,
            y,
            |a0, a1, b0, b1| {
                let change = (*b1 - *a1) - (*b0 - *a0);
                change.dot(&((*b1 - *b0) + (*a1 - *a0)))
            },
            |a, b| bulk_delta(a, b, self.p),
        );
        0.5 * self.p.l * self.grid.h * e + self.grid.h.powi(3) * n
    }

    fn inner(&self, a: &Vec<QTensor>, b: &Vec<QTensor>) -> f64 {
        let g = &self.grid;
        plane_sum(g, |k| {
            let off = k * g.plane_len();
            (off..off + g.plane_len()).map(|i| a[i].dot(&b[i])).sum()
        })
    }

    fn diff(&self, a: &Vec<QTensor>, b: &Vec<QTensor>) -> Vec<QTensor> {
        a.iter().zip(b).map(|(x, y)| *x - *y).collect()
    }

    fn h3(&self) -> f64 {
        self.grid.h.powi(3)
    }
}

/// Stability-limited step for the Q problem.
fn q_base_step(f: &QField, p: &MaterialParams, opts: &SolverOptions) -> f64 {
    let m = f.max_norm().max(p.q_min_norm());
    let curvature = 12.0 * p.l / (f.grid.h * f.grid.h) + p.a2 + 2.0 * p.b2 * m + 3.0 * p.c2 * m * m;
    opts.initial_step / curvature
}

/// Minimizes the Landau–de Gennes energy with the boundary of `f0` frozen.
pub fn minimize_q(f0: &QField, p: &MaterialParams, opts: &SolverOptions) -> (QField, SolveReport) {
    if let Err(e) = opts.validate() {
        let report = SolveReport {
            iterations: 0,
            final_energy: field::total_energy(f0, p),
            final_residual: f64::NAN,
            energy_trace: vec![],
            converged: false,
            max_q_norm: f0.max_norm(),
            failure: Some(e.to_string()),
        };
        return (f0.clone(), report);
    }
    let problem = QProblem { grid: f0.grid, p };
    let alpha0 = q_base_step(f0, p, opts);
    let (values, mut report) = descend(&problem, f0.values.clone(), alpha0, opts);
    let out = QField { grid: f0.grid, values };
    report.max_q_norm = out.max_norm();
    (out, report)
}

struct DirectorProblem {
    grid: Grid3,
}

fn tangential_laplacian(grid: &Grid3, n: &[Vec3]) -> Vec<Vec3> {
    let inv_h2 = 1.0 / (grid.h * grid.h);
    field::map_interior(grid, |idx| {
        let lap = field::laplacian_at(grid, n, idx, |c, a, b, d, e, f, g| {
            (a + b + d + e + f + g - c * 6.0) * inv_h2
        });
        let r = lap * 2.0;
        let v = n[idx];
        r - (v * r.dot(&v) / v.dot(&v))
    })
}

impl Problem for DirectorProblem {
    type State = Vec<Vec3>;

    fn energy(&self, x: &Vec<Vec3>) -> f64 {
        field::dirichlet_energy_director(&DirectorField {
            grid: self.grid,
            values: x.clone(),
        })
    }

    fn direction(&self, x: &Vec<Vec3>) -> (f64, Vec<Vec3>) {
        let t = tangential_laplacian(&self.grid, x);
        let max = t.iter().map(Vec3::norm).fold(0.0, f64::max);
        (max, t)
    }

    fn step(&self, x: &Vec<Vec3>, d: &Vec<Vec3>, alpha: f64) -> Vec<Vec3> {
        let g = &self.grid;
        let mut out = x.clone();
        out.par_chunks_mut(g.plane_len()).enumerate().for_each(|(k, plane)| {
            if k == 0 || k + 1 == g.nz {
                return;
            }
            for j in 1..g.ny - 1 {
                for i in 1..g.nx - 1 {
                    let o = i + g.nx * j;
                    // Below this step length the norm change is under rounding,
                    // and renormalizing would only inject noise into the energy.
                    let t = d[g.index(i, j, k)];
                    let moved = plane[o] + (t * alpha);
                    plane[o] = if alpha * alpha * t.dot(&t) < 1e-16 {
                        moved
                    } else {
                        linalg::normalize(&moved).unwrap_or(plane[o])
                    };
                }
            }
        });
        out
    }

    fn energy_delta(&self, x: &Vec<Vec3>, y: &Vec<Vec3>) -> f64 {
        let (e, _) = assembled_delta(
            &self.grid,
            x,
            y,
            |a0, a1, b0, b1| {
                let change = (b1 - a1) - (b0 - a0);
                let sum = (b1 - b0) + (a1 - a0);
                change.dot(&sum)
            },
            |_, _| 0.0,
        );
        self.grid.h * e
    }

    fn inner(&self, a: &Vec<Vec3>, b: &Vec<Vec3>) -> f64 {
        let g = &self.grid;
        plane_sum(g, |k| {
            let off = k * g.plane_len();
            (off..off + g.plane_len()).map(|i| a[i].dot(&b[i])).sum()
        })
    }

    fn diff(&self, a: &Vec<Vec3>, b: &Vec<Vec3>) -> Vec<Vec3> {
        a.iter().zip(b).map(|(x, y)| x - y).collect()
    }

    fn h3(&self) -> f64 {
        self.grid.h.powi(3)
    }
}

/// Projected descent on the discrete Dirichlet energy of a unit-vector field.
pub fn minimize_director(d0: &DirectorField, opts: &SolverOptions) -> (DirectorField, SolveReport) {
    let problem = DirectorProblem { grid: d0.grid };
    let failure = opts.validate().err().map(|e| e.to_string());
    if let Some(msg) = failure {
        let report = SolveReport {
            iterations: 0,
            final_energy: field::dirichlet_energy_director(d0),
            final_residual: f64::NAN,
            energy_trace: vec![],
            converged: false,
            max_q_norm: 0.0,
            failure: Some(msg),
        };
        return (d0.clone(), report);
    }
    let alpha0 = opts.initial_step * d0.grid.h * d0.grid.h / 24.0;
    let (values, report) = descend(&problem, d0.values.clone(), alpha0, opts);
    (DirectorField { grid: d0.grid, values }, report)
}

/// `Q⁰ = s₊ (n⊗n − Id/3)` nodewise.
pub fn limiting_map(d: &DirectorField, p: &MaterialParams) -> QField {
    let values = d
        .values
        .iter()
        .map(|n| QTensor::uniaxial_unchecked(p.s_plus, n))
        .collect();
    QField { grid: d.grid, values }
}

/// Solves the discrete Laplace equation for each component with the boundary
/// of `values` held fixed, by conjugate gradients.
fn harmonic_extend_scalar(grid: &Grid3, values: &mut [f64]) {
    let inv_h2 = 1.0 / (grid.h * grid.h);
    let apply = |x: &[f64]| -> Vec<f64> {
        // −Δ_h on interior unknowns with zero boundary.
        field::map_interior(grid, |idx| {
            -field::laplacian_at(grid, x, idx, |c, a, b, d, e, f, g| {
                (a + b + d + e + f + g - 6.0 * c) * inv_h2
            })
        })
    };
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };

    // Right-hand side: Δ_h of the boundary lift.
    let mut lift = values.to_vec();
    for idx in grid.interior_indices() {
        lift[idx] = 0.0;
    }
    let mut r: Vec<f64> = apply(&lift).into_iter().map(|v| -v).collect();
    let mut x = vec![0.0; grid.len()];
    let mut pdir = r.clone();
    let mut rr = dot(&r, &r);
    let tol = 1e-24 * rr.max(1e-300);
    for _ in 0..grid.len() {
        if rr <= tol {
            break;
        }
        let ap = apply(&pdir);
        let pap = dot(&pdir, &ap);
        if pap <= 0.0 {
            break;
        }
        let a = rr / pap;
        for i in 0..x.len() {
            x[i] += a * pdir[i];
            r[i] -= a * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..pdir.len() {
            pdir[i] = r[i] + beta * pdir[i];
        }
        rr = rr_new;
    }
    for idx in grid.interior_indices() {
        values[idx] = x[idx];
    }
}

/// Harmonic extension of the boundary directors, renormalized nodewise;
/// nodes where the extension nearly vanishes fall back to `e₃`.
pub fn harmonic_director(d: &DirectorField) -> DirectorField {
    let grid = d.grid;
    let mut comps: Vec<Vec<f64>> = (0..3).map(|m| d.values.iter().map(|v| v[m]).collect()).collect();
    for c in comps.iter_mut() {
        harmonic_extend_scalar(&grid, c);
    }
    let values = (0..grid.len())
        .map(|idx| {
            if grid.is_boundary_idx(idx) {
                return d.values[idx];
            }
            let v = Vec3::new(comps[0][idx], comps[1][idx], comps[2][idx]);
            if v.norm() < 1e-6 {
                Vec3::z()
            } else {
                linalg::normalize(&v).unwrap_or_else(Vec3::z)
            }
        })
        .collect();
    DirectorField { grid, values }
}

/// Default starting field: the limiting map of the harmonically extended
/// boundary director.
pub fn initial_q(boundary: &DirectorField, p: &MaterialParams) -> QField {
    limiting_map(&harmonic_director(boundary), p)
}

/// Convenience check used by callers that need a hard failure.
pub fn require_converged(report: &SolveReport) -> Result<()> {
    if report.converged {
        Ok(())
    } else {
        Err(Error::Solver(report.failure.clone().unwrap_or_else(|| {
            format!(
                "not converged after {} iterations (residual {:e})",
                report.iterations, report.final_residual
            )
        })))
    }
}
