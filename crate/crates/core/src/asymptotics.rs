//! The vanishing-elasticity experiment: minimizers for a decreasing sequence
//! of elastic constants compared against the limiting uniaxial harmonic map.

use serde::{Deserialize, Serialize};

use crate::bulk::{self, MaterialParams};
use crate::error::{Error, Result};
use crate::field::{self, DirectorField, Grid3, QField, Scenario};
use crate::linalg::Vec3;
use crate::qtensor;
use crate::solve::{self, SolveReport, SolverOptions};

/// Nodes with `|Q|` below this fraction of `√(2/3)s₊` seed the detected
/// singular set.
pub const SINGULAR_NORM_FRACTION: f64 = 0.3;
/// Dilation of the detected singular set, in cells.
pub const SINGULAR_DILATION: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub grid: Grid3,
    pub scenario: Scenario,
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
    /// Strictly decreasing elastic constants.
    pub l_values: Vec<f64>,
    /// Distance of the compact set from the boundary and the singular set.
    pub margin: f64,
    /// Biaxiality threshold for `Ω^λ`.
    pub lambda: f64,
    pub warm_start: bool,
    pub solver: SolverOptions,
}

impl SweepConfig {
    /// Unit-cube sweep with `L = 0.1 · 2^{−k}`, `k = 0..8`, and unit material constants.
    pub fn new(scenario: Scenario, n: usize) -> Result<Self> {
        let grid = Grid3::unit_cube(n)?;
        let p = MaterialParams::new(1.0, 1.0, 1.0, 1.0)?;
        Ok(SweepConfig {
            grid,
            scenario,
            a2: 1.0,
            b2: 1.0,
            c2: 1.0,
            l_values: geometric_l(0.1, 0.5, 8),
            margin: 0.25,
            lambda: 0.5,
            warm_start: true,
            solver: SolverOptions::for_params(&p),
        })
    }

    pub fn params(&self, l: f64) -> Result<MaterialParams> {
        MaterialParams::new(self.a2, self.b2, self.c2, l)
    }

    pub fn validate(&self) -> Result<()> {
        self.params(1.0)?;
        self.solver.validate()?;
        if self.l_values.is_empty() {
            return Err(Error::Config("l_values must not be empty".into()));
        }
        if self.l_values.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::Config("l_values must be positive".into()));
        }
        if self.l_values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("l_values must be strictly decreasing".into()));
        }
        if !(self.margin >= 2.0 * self.grid.h) {
            return Err(Error::Config(format!(
                "margin {} is below two cells ({})",
                self.margin,
                2.0 * self.grid.h
            )));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Config(format!("lambda must lie in (0, 1), got {}", self.lambda)));
        }
        Ok(())
    }
}

/// `first · ratio^k` for `k = 0..count`.
pub fn geometric_l(first: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| first * ratio.powi(k as i32)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub l: f64,
    pub energy: f64,
    pub elastic_energy: f64,
    /// `∫ f̃_B / L`.
    pub bulk_over_l: f64,
    /// Total energy of the limiting map at this `L`.
    pub limit_energy: f64,
    pub w12_dist_to_q0: f64,
    pub sup_k_dist: f64,
    pub sup_k_bulk: f64,
    pub sup_k_norm_dev: f64,
    pub sup_boundary_collar_bulk: f64,
    pub max_beta_k: f64,
    pub max_eig_err_sq_k: f64,
    pub omega_star_measure: f64,
    pub omega_lambda_measure: f64,
    pub boundary_normal_deriv_sq: f64,
    pub monotonicity_violation: f64,
    /// Allowed violation: `5 h ·` mean energy density.
    pub monotonicity_budget: f64,
    pub boundary_monotonicity: f64,
    pub max_q_norm: f64,
    pub min_eigen_gap_k: f64,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    pub start: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Slopes {
    pub sup_k_bulk: Option<f64>,
    pub max_beta_k: Option<f64>,
    pub max_eig_err_sq_k: Option<f64>,
    pub norm_deviation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: SweepConfig,
    pub code_version: String,
    pub warm_start: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub records: Vec<ConvergenceRecord>,
    pub slopes: Option<Slopes>,
    /// Discrete `∫ |∇n⁰|²` of the limiting director.
    pub reference_energy: f64,
    pub director: SolveReport,
    pub k_size: usize,
    pub domain_volume: f64,
    pub partial: bool,
    pub failure: Option<String>,
    pub provenance: Provenance,
}

#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub report: ConvergenceReport,
    pub director: DirectorField,
    pub limit: QField,
    pub fields: Vec<QField>,
}

/// Interior nodes at least `margin` from the boundary and from the singular
/// set. The singular set is `known_singularity` when given; otherwise the
/// nodes of `f_ref` with `|Q| < 0.3 √(2/3) s₊`, dilated by two cells.
pub fn compact_set(
    f_ref: &QField,
    p: &MaterialParams,
    margin: f64,
    known_singularity: Option<Vec3>,
) -> Result<Vec<usize>> {
    let g = &f_ref.grid;
    if !(margin >= 2.0 * g.h) {
        return Err(Error::Config(format!("margin {margin} is below two cells")));
    }
    let singular = singular_points(f_ref, p, known_singularity);
    let m2 = margin * margin;
    let k: Vec<usize> = g
        .interior_indices()
        .filter(|&idx| {
            let x = g.position_of(idx);
            g.distance_to_boundary(&x) >= margin
                && singular.iter().all(|s| {
                    let d = x - s;
                    d.dot(&d) >= m2
                })
        })
        .collect();
    if k.is_empty() {
        return Err(Error::Config(format!("compact set is empty for margin {margin}")));
    }
    Ok(k)
}

fn singular_points(f: &QField, p: &MaterialParams, known: Option<Vec3>) -> Vec<Vec3> {
    if let Some(c) = known {
        return vec![c];
    }
    let g = &f.grid;
    let threshold = SINGULAR_NORM_FRACTION * p.q_min_norm();
    let seeds: Vec<[usize; 3]> = (0..g.len())
        .filter(|&idx| f.values[idx].norm() < threshold)
        .map(|idx| g.coords(idx))
        .collect();
    let mut marked = vec![false; g.len()];
    let dil = SINGULAR_DILATION as isize;
    let dims = g.dims();
    for c in seeds {
        for dk in -dil..=dil {
            for dj in -dil..=dil {
                for di in -dil..=dil {
                    let q = [c[0] as isize + di, c[1] as isize + dj, c[2] as isize + dk];
                    if (0..3).all(|a| q[a] >= 0 && (q[a] as usize) < dims[a]) {
                        marked[g.index(q[0] as usize, q[1] as usize, q[2] as usize)] = true;
                    }
                }
            }
        }
    }
    (0..g.len()).filter(|&i| marked[i]).map(|i| g.position_of(i)).collect()
}

/// `max_{x ∈ K, i} |λᵢ(fL(x)) − λᵢ(f0(x))|²` with both spectra sorted descending.
pub fn eigenvalue_errors(fl: &QField, f0: &QField, k: &[usize]) -> Result<f64> {
    field::check_same_grid(&fl.grid, &f0.grid)?;
    Ok(k.iter()
        .map(|&idx| {
            let a = qtensor::eigen(&fl.values[idx]).values;
            let b = qtensor::eigen(&f0.values[idx]).values;
            (0..3).map(|i| (a[i] - b[i]).powi(2)).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max))
}

/// Measures (trapezoid-weighted) of `{|Q| ≤ ½√(2/3)s₊}` and
/// `{|Q| ≥ ½√(2/3)s₊, β(Q) > λ}`.
pub fn region_measures(f: &QField, p: &MaterialParams, lambda: f64) -> Result<(f64, f64)> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidInput(format!("lambda must lie in (0, 1), got {lambda}")));
    }
    let g = &f.grid;
    let h3 = g.h.powi(3);
    let cut = 0.5 * p.q_min_norm();
    let mut star = 0.0;
    let mut lam = 0.0;
    for (idx, q) in f.values.iter().enumerate() {
        let w = g.node_weight(idx) * h3;
        if q.norm() <= cut {
            star += w;
        } else if qtensor::biaxiality(q) > lambda {
            lam += w;
        }
    }
    Ok((star, lam))
}

/// Smallest difference `𝓕(Q, x, R) − 𝓕(Q, x, r)` over consecutive radii and
/// all centres; non-negative when the normalized energy is monotone.
pub fn monotonicity_audit(f: &QField, p: &MaterialParams, centers: &[Vec3], radii: &[f64]) -> Result<f64> {
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("radii must be increasing".into()));
    }
    let mut worst = f64::INFINITY;
    for c in centers {
        let values = radii
            .iter()
            .map(|&r| field::normalized_energy(f, p, c, r))
            .collect::<Result<Vec<_>>>()?;
        for w in values.windows(2) {
            worst = worst.min(w[1] - w[0]);
        }
    }
    Ok(worst)
}

/// Boundary variant at face-centre points: `min (𝓔_R − 𝓔_r)/(R − r)` where
/// `𝓔_r` is the normalized energy of `Ω ∩ B(x, r)`. Reported only.
pub fn boundary_monotonicity(f: &QField, p: &MaterialParams, radii: &[f64]) -> f64 {
    let g = &f.grid;
    let h3 = g.h.powi(3);
    let centers = face_centers(g);
    let mut worst = f64::INFINITY;
    for c in &centers {
        let e: Vec<f64> = radii
            .iter()
            .map(|&r| {
                let r2 = r * r;
                let sum: f64 = (0..g.len())
                    .filter(|&idx| {
                        let d = g.position_of(idx) - c;
                        d.dot(&d) <= r2
                    })
                    .map(|idx| g.node_weight(idx) * field::energy_density(f, p, idx))
                    .sum();
                sum * h3 / r
            })
            .collect();
        for (w, rw) in e.windows(2).zip(radii.windows(2)) {
            worst = worst.min((w[1] - w[0]) / (rw[1] - rw[0]));
        }
    }
    worst
}

/// Node positions at the centres of the six faces.
pub fn face_centers(g: &Grid3) -> Vec<Vec3> {
    let [nx, ny, nz] = g.dims();
    let (ci, cj, ck) = (nx / 2, ny / 2, nz / 2);
    [
        (0, cj, ck),
        (nx - 1, cj, ck),
        (ci, 0, ck),
        (ci, ny - 1, ck),
        (ci, cj, 0),
        (ci, cj, nz - 1),
    ]
    .into_iter()
    .map(|(i, j, k)| g.position(i, j, k))
    .collect()
}

/// `h² Σ |∂_ν Q|²` over face nodes whose tangential indices lie in
/// `[2, n − 3]`, with one-sided normal differences.
pub fn boundary_normal_energy(f: &QField) -> f64 {
    let g = &f.grid;
    let dims = g.dims();
    let strides = g.strides();
    let mut sum = 0.0;
    for axis in 0..3 {
        let (t1, t2) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in [0, dims[axis] - 1] {
            for a in 2..dims[t1].saturating_sub(2) {
                for b in 2..dims[t2].saturating_sub(2) {
                    let mut c = [0usize; 3];
                    c[axis] = side;
                    c[t1] = a;
                    c[t2] = b;
                    let idx = g.index(c[0], c[1], c[2]);
                    let inner = if side == 0 {
                        idx + strides[axis]
                    } else {
                        idx - strides[axis]
                    };
                    let d = (f.values[inner] - f.values[idx]) * (1.0 / g.h);
                    sum += d.norm_sq();
                }
            }
        }
    }
    g.h * g.h * sum
}

/// Minimum pairwise eigenvalue gap at each node.
pub fn eigen_gap_map(f: &QField) -> Vec<f64> {
    f.values.iter().map(|q| qtensor::eigen(q).min_gap()).collect()
}

/// Least-squares slope of `log y` against `log x`; `None` when fewer than two
/// points or any value is non-positive.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// `max/min` of `value / L` over the last `last` records. Identically zero
/// values are perfectly stable (ratio 1); a zero mixed with positive values
/// is unbounded.
pub fn stability_ratio(l: &[f64], values: &[f64], last: usize) -> f64 {
    let n = l.len().min(values.len());
    let start = n.saturating_sub(last);
    let ratios: Vec<f64> = (start..n).map(|i| values[i] / l[i]).collect();
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        1.0
    } else if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Median of the `L` values.
fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn fit_slopes(records: &[ConvergenceRecord]) -> Slopes {
    let med = median(&records.iter().map(|r| r.l).collect::<Vec<_>>());
    let tail: Vec<&ConvergenceRecord> = records.iter().filter(|r| r.l <= med).collect();
    let ls: Vec<f64> = tail.iter().map(|r| r.l).collect();
    let fit = |f: fn(&ConvergenceRecord) -> f64| {
        let ys: Vec<f64> = tail.iter().map(|r| f(r)).collect();
        loglog_slope(&ls, &ys)
    };
    Slopes {
        sup_k_bulk: fit(|r| r.sup_k_bulk),
        max_beta_k: fit(|r| r.max_beta_k),
        max_eig_err_sq_k: fit(|r| r.max_eig_err_sq_k),
        norm_deviation: fit(|r| r.sup_k_norm_dev),
    }
}

/// Ball centres and radii for the interior monotonicity audit: the box centre
/// and four points offset by a tenth of the box along x and y, with radii
/// from a tenth to a quarter of the smallest box side.
pub fn audit_geometry(g: &Grid3) -> (Vec<Vec3>, Vec<f64>) {
    let c = g.center();
    let ext = g.extent();
    let side = (0..3).map(|a| ext[a] - g.origin[a]).fold(f64::INFINITY, f64::min);
    let off = 0.1 * side;
    let centers = vec![
        c,
        Vec3::new(c[0] + off, c[1], c[2]),
        Vec3::new(c[0] - off, c[1], c[2]),
        Vec3::new(c[0], c[1] + off, c[2]),
        Vec3::new(c[0], c[1] - off, c[2]),
    ];
    let radii = vec![0.1 * side, 0.15 * side, 0.2 * side, 0.25 * side];
    (centers, radii)
}

struct Geometry {
    k: Vec<usize>,
    collar: Vec<usize>,
}

fn geometry(cfg: &SweepConfig, f_ref: &QField, p: &MaterialParams) -> Result<Geometry> {
    let g = &f_ref.grid;
    let known = cfg.scenario.singular_point(g);
    let k = compact_set(f_ref, p, cfg.margin, known)?;
    let singular = singular_points(f_ref, p, known);
    let m2 = cfg.margin * cfg.margin;
    let collar = g
        .interior_indices()
        .filter(|&idx| {
            let x = g.position_of(idx);
            g.distance_to_boundary(&x) < cfg.margin
                && singular.iter().all(|s| {
                    let d = x - s;
                    d.dot(&d) >= m2
                })
        })
        .collect();
    Ok(Geometry { k, collar })
}

fn measure(
    cfg: &SweepConfig,
    p: &MaterialParams,
    f: &QField,
    q0: &QField,
    geo: &Geometry,
    rep: &SolveReport,
    start: &str,
) -> Result<ConvergenceRecord> {
    let g = &f.grid;
    let qmn = p.q_min_norm();
    let over = |set: &[usize], m: &dyn Fn(usize) -> f64| set.iter().map(|&i| m(i)).fold(0.0, f64::max);
    let elastic = field::elastic_energy(f, p);
    let bulk = field::bulk_energy(f, p);
    let (omega_star, omega_lambda) = region_measures(f, p, cfg.lambda)?;
    let (centers, radii) = audit_geometry(g);
    let interior: Vec<usize> = g.interior_indices().collect();
    let mean_density = interior.iter().map(|&i| field::energy_density(f, p, i)).sum::<f64>() / interior.len() as f64;
    let boundary_radii: Vec<f64> = radii.iter().map(|r| 0.6 * r).collect();
    Ok(ConvergenceRecord {
        l: p.l,
        energy: elastic + bulk,
        elastic_energy: elastic,
        bulk_over_l: bulk / p.l,
        limit_energy: field::total_energy(q0, p),
        w12_dist_to_q0: field::w12_distance(f, q0)?,
        sup_k_dist: over(&geo.k, &|i| (f.values[i] - q0.values[i]).norm()),
        sup_k_bulk: over(&geo.k, &|i| bulk::f_bulk_shifted(&f.values[i], p)),
        sup_k_norm_dev: over(&geo.k, &|i| (f.values[i].norm() - qmn).abs()),
        sup_boundary_collar_bulk: over(&geo.collar, &|i| bulk::f_bulk_shifted(&f.values[i], p)),
        max_beta_k: over(&geo.k, &|i| qtensor::biaxiality(&f.values[i])),
        max_eig_err_sq_k: eigenvalue_errors(f, q0, &geo.k)?,
        omega_star_measure: omega_star,
        omega_lambda_measure: omega_lambda,
        boundary_normal_deriv_sq: boundary_normal_energy(f),
        monotonicity_violation: monotonicity_audit(f, p, &centers, &radii)?,
        monotonicity_budget: 5.0 * g.h * mean_density,
        boundary_monotonicity: boundary_monotonicity(f, p, &boundary_radii),
        max_q_norm: f.max_norm(),
        min_eigen_gap_k: geo
            .k
            .iter()
            .map(|&i| qtensor::eigen(&f.values[i]).min_gap())
            .fold(f64::INFINITY, f64::min),
        converged: rep.converged,
        iterations: rep.iterations,
        final_residual: rep.final_residual,
        start: start.to_string(),
    })
}

/// Runs the sweep and keeps every solved field.
pub fn run_sweep_with_fields(cfg: &SweepConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let grid = cfg.grid;
    let p_first = cfg.params(cfg.l_values[0])?;

    let boundary = cfg.scenario.director_field(&grid);
    let (director, dir_report) = solve::minimize_director(&solve::harmonic_director(&boundary), &cfg.solver);
    let q0 = solve::limiting_map(&director, &p_first);
    let reference_energy = field::dirichlet_energy_director(&director);

    let mut fields: Vec<QField> = Vec::with_capacity(cfg.l_values.len());
    let mut reports: Vec<(SolveReport, String)> = Vec::new();
    let mut failure = dir_report.failure.clone().map(|m| format!("director solve: {m}"));
    for &l in &cfg.l_values {
        if failure.is_some() {
            break;
        }
        let p = cfg.params(l)?;
        let (start, label) = match fields.last() {
            Some(prev) if cfg.warm_start => {
                if field::total_energy(prev, &p) < field::total_energy(&q0, &p) {
                    (prev.clone(), "warm")
                } else {
                    (q0.clone(), "limit")
                }
            }
            _ => (q0.clone(), "limit"),
        };
        let (f, rep) = solve::minimize_q(&start, &p, &cfg.solver);
        if let Some(m) = &rep.failure {
            failure = Some(format!("solve at L = {l}: {m}"));
        }
        fields.push(f);
        reports.push((rep, label.to_string()));
    }

    let f_ref = fields.last().unwrap_or(&q0);
    let geo = geometry(cfg, f_ref, &p_first)?;
    let mut records = Vec::with_capacity(fields.len());
    for ((f, (rep, label)), &l) in fields.iter().zip(&reports).zip(&cfg.l_values) {
        let p = cfg.params(l)?;
        records.push(measure(cfg, &p, f, &q0, &geo, rep, label)?);
    }
    let partial = failure.is_some();
    let slopes = if partial { None } else { Some(fit_slopes(&records)) };
    let report = ConvergenceReport {
        records,
        slopes,
        reference_energy,
        director: dir_report,
        k_size: geo.k.len(),
        domain_volume: grid.volume(),
        partial,
        failure,
        provenance: Provenance {
            config: cfg.clone(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            warm_start: cfg.warm_start,
        },
    };
    Ok(SweepOutput {
        report,
        director,
        limit: q0,
        fields,
    })
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<ConvergenceReport> {
    run_sweep_with_fields(cfg).map(|o| o.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat3;
    use crate::QTensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(l: f64) -> MaterialParams {
        MaterialParams::new(1.0, 1.0, 1.0, l).unwrap()
    }

    #[test]
    fn compact_set_examples() {
        let p = unit(1.0);
        let g = Grid3::unit_cube(21).unwrap();
        let q0 = solve::limiting_map(&Scenario::Constant.director_field(&g), &p);
        let k = compact_set(&q0, &p, 0.25, None).unwrap();
        let expect = g
            .interior_indices()
            .filter(|&i| g.distance_to_boundary(&g.position_of(i)) >= 0.25)
            .count();
        assert_eq!(k.len(), expect);

        let c = field::hedgehog_center(&g);
        let k = compact_set(&q0, &p, 0.25, Some(c)).unwrap();
        assert!(k.iter().all(|&i| (g.position_of(i) - c).norm() >= 0.25));
        assert!(k.len() < expect);

        assert!(matches!(compact_set(&q0, &p, 0.9, None), Err(Error::Config(_))));
        assert!(matches!(compact_set(&q0, &p, g.h, None), Err(Error::Config(_))));
    }

    #[test]
    fn detected_singular_set_excludes_low_norm_core() {
        let p = unit(1.0);
        let g = Grid3::unit_cube(21).unwrap();
        let c = g.center();
        let f = QField::from_fn(g, |x| {
            let r = (x - c).norm();
            let s = if r < 0.1 { 0.0 } else { p.s_plus };
            QTensor::from_uniaxial(s, &Vec3::new(0.0, 0.0, 1.0)).unwrap()
        });
        let k = compact_set(&f, &p, 0.2, None).unwrap();
        assert!(k.iter().all(|&i| (g.position_of(i) - c).norm() >= 0.2 + 0.1 - 1e-12));
    }

    #[test]
    fn eigenvalue_error_examples() {
        let p = unit(1.0);
        let g = Grid3::unit_cube(11).unwrap();
        let f0 = solve::limiting_map(&Scenario::Rotation.director_field(&g), &p);
        let all: Vec<usize> = (0..g.len()).collect();
        assert_eq!(eigenvalue_errors(&f0, &f0, &all).unwrap(), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let eps = 0.05;
        let pert: Vec<QTensor> = (0..g.len())
            .map(|_| {
                let mut v = [0.0; 5];
                v[rng.gen_range(0..5)] = if rng.gen_bool(0.5) { eps } else { -eps };
                QTensor(v)
            })
            .collect();
        let fl = QField::new(g, f0.values.iter().zip(&pert).map(|(a, b)| *a + *b).collect()).unwrap();
        let nodes: Vec<usize> = (0..1000).map(|_| rng.gen_range(0..g.len())).collect();
        assert!(eigenvalue_errors(&fl, &f0, &nodes).unwrap() <= eps * eps + 1e-15);
    }

    #[test]
    fn region_measure_examples() {
        let p = unit(1.0);
        let g = Grid3::unit_cube(9).unwrap();
        let q0 = solve::limiting_map(&Scenario::Hedgehog.director_field(&g), &p);
        assert_eq!(region_measures(&q0, &p, 0.5).unwrap(), (0.0, 0.0));
        let (s, l) = region_measures(&QField::constant(g, QTensor::ZERO), &p, 0.5).unwrap();
        assert!((s - g.volume()).abs() < 1e-12);
        assert_eq!(l, 0.0);
        let biaxial = QTensor::from_matrix(&Mat3::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0));
        let (s, l) = region_measures(&QField::constant(g, biaxial), &p, 0.5).unwrap();
        assert_eq!(s, 0.0);
        assert!((l - g.volume()).abs() < 1e-12);
        assert!(region_measures(&q0, &p, 1.0).is_err());
    }

    #[test]
    fn monotonicity_of_constant_fields() {
        let p = unit(0.5);
        let g = Grid3::unit_cube(21).unwrap();
        let (centers, radii) = audit_geometry(&g);
        let zero = QField::constant(g, QTensor::ZERO);
        assert!(monotonicity_audit(&zero, &p, &centers, &radii).unwrap() > 0.0);
        let qmin = QField::constant(g, QTensor::from_uniaxial(p.s_plus, &Vec3::new(1.0, 0.0, 0.0)).unwrap());
        assert!(monotonicity_audit(&qmin, &p, &centers, &radii).unwrap().abs() < 1e-12);
        assert!(monotonicity_audit(&zero, &p, &[g.center()], &[0.2, 0.1]).is_err());
        assert!(monotonicity_audit(&zero, &p, &[g.center()], &[0.48]).is_err());
    }

    #[test]
    fn boundary_normal_energy_examples() {
        let g = Grid3::unit_cube(9).unwrap();
        assert_eq!(boundary_normal_energy(&QField::constant(g, QTensor([0.3; 5]))), 0.0);
        // Varies only along x: zero normal difference on the y and z faces,
        // nonzero on the x faces.
        let f = QField::from_fn(g, |x| QTensor([x[0], 0.0, 0.0, 0.0, 0.0]));
        let e = boundary_normal_energy(&f);
        let per_face = ((9 - 4) * (9 - 4)) as f64 * g.h * g.h;
        assert!((e - 2.0 * per_face).abs() < 1e-12);
    }

    #[test]
    fn slope_and_stability_helpers() {
        let l = [0.1, 0.05, 0.025, 0.0125];
        let y: Vec<f64> = l.iter().map(|v| 3.0 * v * v).collect();
        assert!((loglog_slope(&l, &y).unwrap() - 2.0).abs() < 1e-12);
        assert!(loglog_slope(&l, &[1.0, 0.0, 1.0, 1.0]).is_none());
        let lin: Vec<f64> = l.iter().map(|v| 2.0 * v).collect();
        assert!((stability_ratio(&l, &lin, 4) - 1.0).abs() < 1e-12);
        assert_eq!(stability_ratio(&l, &[0.0; 4], 4), 1.0);
        assert_eq!(stability_ratio(&l, &[0.0, 1.0, 0.0, 1.0], 4), f64::INFINITY);
        assert_eq!(median(&[3.0, 1.0, 2.0, 4.0]), 2.5);
    }

    #[test]
    fn sweep_config_validation() {
        let mut cfg = SweepConfig::new(Scenario::Constant, 16).unwrap();
        assert!(cfg.validate().is_ok());
        cfg.l_values = vec![0.1, 0.2];
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.l_values = vec![0.1];
        cfg.margin = cfg.grid.h;
        assert!(cfg.validate().is_err());
        cfg.margin = 0.25;
        cfg.lambda = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn constant_sweep_is_exact() {
        let mut cfg = SweepConfig::new(Scenario::Constant, 10).unwrap();
        cfg.l_values = geometric_l(0.1, 0.5, 3);
        let report = run_sweep(&cfg).unwrap();
        assert!(!report.partial);
        for r in &report.records {
            assert!(r.energy < 1e-8);
            assert!(r.sup_k_dist < 1e-6);
            assert_eq!(r.omega_star_measure, 0.0);
            assert_eq!(r.omega_lambda_measure, 0.0);
            assert!(r.max_beta_k < 1e-10);
        }
        assert_eq!(report.reference_energy, 0.0);
    }
}
