//! Box grids, Q-tensor and director fields, and the discrete energies.
//!
//! Nodes are numbered `i + nx (j + ny k)`. The outermost shell of nodes
//! carries frozen Dirichlet data; everything else is interior.
//!
//! Gradient energies are sums over axis-aligned edges of squared forward
//! differences. Each edge is weighted by the trapezoid factor of its
//! transverse coordinates (1/2 per coordinate lying on a boundary face), so
//! that `Σ_edges w |ΔQ/h|² h³` integrates linear fields exactly over the box.
//! Every edge touching an interior node has weight 1, so the gradient of the
//! elastic energy with respect to interior values is the 7-point Laplacian.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bulk::{self, MaterialParams};
use crate::error::{Error, Result};
use crate::linalg::{self, Vec3};
use crate::qtensor::{QTensor, UNIT_TOLERANCE};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid3 {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub origin: Vec3,
    pub h: f64,
}

impl Grid3 {
    pub fn new(nx: usize, ny: usize, nz: usize, origin: Vec3, h: f64) -> Result<Self> {
        if nx < 3 || ny < 3 || nz < 3 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 3 nodes per axis, got {nx}x{ny}x{nz}"
            )));
        }
        if !(h > 0.0 && h.is_finite()) || origin.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid spacing {h} or origin")));
        }
        Ok(Grid3 { nx, ny, nz, origin, h })
    }

    /// `n³` nodes on `[0, 1]³`.
    pub fn unit_cube(n: usize) -> Result<Self> {
        Self::cube(n, 1.0)
    }

    /// `n³` nodes on `[0, length]³`.
    pub fn cube(n: usize, length: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidInput(format!("grid needs n >= 3, got {n}")));
        }
        Self::new(n, n, n, Vec3::zeros(), length / (n - 1) as f64)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    /// Offset between neighbouring nodes along each axis.
    pub fn strides(&self) -> [usize; 3] {
        [1, self.nx, self.nx * self.ny]
    }

    pub fn plane_len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.nx;
        let j = (idx / self.nx) % self.ny;
        let k = idx / (self.nx * self.ny);
        [i, j, k]
    }

    pub fn position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.h
    }

    pub fn position_of(&self, idx: usize) -> Vec3 {
        let [i, j, k] = self.coords(idx);
        self.position(i, j, k)
    }

    /// Upper corner of the box.
    pub fn extent(&self) -> Vec3 {
        self.position(self.nx - 1, self.ny - 1, self.nz - 1)
    }

    pub fn center(&self) -> Vec3 {
        let hi = self.extent();
        (self.origin + hi) * 0.5
    }

    pub fn volume(&self) -> f64 {
        let h = self.h;
        (self.nx - 1) as f64 * h * (self.ny - 1) as f64 * h * (self.nz - 1) as f64 * h
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize, k: usize) -> bool {
        i == 0 || j == 0 || k == 0 || i + 1 == self.nx || j + 1 == self.ny || k + 1 == self.nz
    }

    #[inline]
    pub fn is_boundary_idx(&self, idx: usize) -> bool {
        let [i, j, k] = self.coords(idx);
        self.is_boundary(i, j, k)
    }

    pub fn boundary_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|idx| self.is_boundary_idx(idx)).collect()
    }

    pub fn interior_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&idx| !self.is_boundary_idx(idx))
    }

    pub fn boundary_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&idx| self.is_boundary_idx(idx))
    }

    /// Trapezoid quadrature weight of a node (product of 1/2 per face it lies on).
    pub fn node_weight(&self, idx: usize) -> f64 {
        let c = self.coords(idx);
        let d = self.dims();
        (0..3)
            .map(|a| if c[a] == 0 || c[a] + 1 == d[a] { 0.5 } else { 1.0 })
            .product()
    }

    /// Weight of the edge leaving `idx` along `axis`.
    pub fn edge_weight(&self, idx: usize, axis: usize) -> f64 {
        let c = self.coords(idx);
        let d = self.dims();
        (0..3)
            .filter(|&a| a != axis)
            .map(|a| if c[a] == 0 || c[a] + 1 == d[a] { 0.5 } else { 1.0 })
            .product()
    }

    /// Distance from a point to the nearest face of the box.
    pub fn distance_to_boundary(&self, x: &Vec3) -> f64 {
        let hi = self.extent();
        (0..3)
            .map(|a| (x[a] - self.origin[a]).min(hi[a] - x[a]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn same_shape(&self, other: &Grid3) -> bool {
        self.dims() == other.dims() && self.h == other.h && self.origin == other.origin
    }
}

/// Sums `f(k)` over z-planes in parallel, combining the partial sums in plane order.
pub(crate) fn plane_sum<F>(grid: &Grid3, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let partial: Vec<f64> = (0..grid.nz).into_par_iter().map(f).collect();
    partial.iter().sum()
}

/// Σ over edges of `w_e · |v(e⁺) − v(e⁻)|²`, for any nodal quantity.
fn edge_sum<T, D>(grid: &Grid3, values: &[T], diff_sq: D) -> f64
where
    T: Sync,
    D: Fn(&T, &T) -> f64 + Sync + Send,
{
    let strides = grid.strides();
    let dims = grid.dims();
    plane_sum(grid, |k| {
        let mut acc = 0.0;
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let idx = grid.index(i, j, k);
                let c = [i, j, k];
                for axis in 0..3 {
                    if c[axis] + 1 < dims[axis] {
                        let w = grid.edge_weight(idx, axis);
                        acc += w * diff_sq(&values[idx + strides[axis]], &values[idx]);
                    }
                }
            }
        }
        acc
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct QField {
    pub grid: Grid3,
    pub values: Vec<QTensor>,
}

impl QField {
    pub fn new(grid: Grid3, values: Vec<QTensor>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(QField { grid, values })
    }

    pub fn constant(grid: Grid3, q: QTensor) -> Self {
        QField {
            grid,
            values: vec![q; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid3, f: impl Fn(Vec3) -> QTensor) -> Self {
        let values = (0..grid.len()).map(|idx| f(grid.position_of(idx))).collect();
        QField { grid, values }
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(QTensor::norm).fold(0.0, f64::max)
    }

    /// Copy of `self` with every boundary value taken from `other`.
    pub fn with_boundary_of(&self, other: &QField) -> Result<QField> {
        check_same_grid(&self.grid, &other.grid)?;
        let mut out = self.clone();
        for idx in self.grid.boundary_indices() {
            out.values[idx] = other.values[idx];
        }
        Ok(out)
    }

    /// Copy of `self` with all interior values set to `q`.
    pub fn with_interior(&self, q: QTensor) -> QField {
        let mut out = self.clone();
        for idx in self.grid.interior_indices() {
            out.values[idx] = q;
        }
        out
    }

    /// Node-centred `|∇Q|²`: per axis, the mean of the squared one-sided
    /// differences available at the node.
    pub fn grad_sq_at(&self, idx: usize) -> f64 {
        node_grad_sq(&self.grid, &self.values, idx, |a, b| (*a - *b).norm_sq())
    }
}

pub(crate) fn check_same_grid(a: &Grid3, b: &Grid3) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "grids differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )))
    }
}

fn node_grad_sq<T>(grid: &Grid3, values: &[T], idx: usize, diff_sq: impl Fn(&T, &T) -> f64) -> f64 {
    let c = grid.coords(idx);
    let dims = grid.dims();
    let strides = grid.strides();
    let h2 = grid.h * grid.h;
    (0..3)
        .map(|a| {
            let mut sum = 0.0;
            let mut count = 0.0;
            if c[a] + 1 < dims[a] {
                sum += diff_sq(&values[idx + strides[a]], &values[idx]);
                count += 1.0;
            }
            if c[a] > 0 {
                sum += diff_sq(&values[idx], &values[idx - strides[a]]);
                count += 1.0;
            }
            sum / (count * h2)
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectorField {
    pub grid: Grid3,
    pub values: Vec<Vec3>,
}

impl DirectorField {
    /// Validates lengths and unit norms.
    pub fn new(grid: Grid3, values: Vec<Vec3>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} directors for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some((idx, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| (v.norm() - 1.0).abs() > UNIT_TOLERANCE || !v.norm().is_finite())
        {
            return Err(Error::InvalidInput(format!(
                "director at node {idx} has length {}",
                v.norm()
            )));
        }
        Ok(DirectorField { grid, values })
    }

    pub fn from_fn(grid: Grid3, f: impl Fn(Vec3) -> Vec3) -> Result<Self> {
        let values = (0..grid.len()).map(|idx| f(grid.position_of(idx))).collect();
        Self::new(grid, values)
    }

    pub fn grad_sq_at(&self, idx: usize) -> f64 {
        node_grad_sq(&self.grid, &self.values, idx, |a, b| {
            let d = a - b;
            d.dot(&d)
        })
    }
}

/// Boundary director scenarios on a box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// `n = e₃`.
    Constant,
    /// `n = (cos πx', sin πx', 0)` with `x'` the normalized first coordinate.
    Rotation,
    /// `n = (x − x_c)/|x − x_c|`.
    Hedgehog,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Constant => "constant",
            Scenario::Rotation => "rotation",
            Scenario::Hedgehog => "hedgehog",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Scenario::Constant),
            "rotation" => Ok(Scenario::Rotation),
            "hedgehog" => Ok(Scenario::Hedgehog),
            other => Err(Error::InvalidInput(format!("unknown scenario '{other}'"))),
        }
    }

    /// Known singular point of the limiting map, if any.
    pub fn singular_point(&self, grid: &Grid3) -> Option<Vec3> {
        match self {
            Scenario::Hedgehog => Some(hedgehog_center(grid)),
            _ => None,
        }
    }

    pub fn director(&self, grid: &Grid3, x: &Vec3) -> Vec3 {
        match self {
            Scenario::Constant => Vec3::z(),
            Scenario::Rotation => {
                let span = grid.extent()[0] - grid.origin[0];
                let t = std::f64::consts::PI * (x[0] - grid.origin[0]) / span;
                Vec3::new(t.cos(), t.sin(), 0.0)
            }
            Scenario::Hedgehog => {
                let c = hedgehog_center(grid);
                linalg::normalize(&(x - c)).unwrap_or_else(Vec3::z)
            }
        }
    }

    /// Director over the whole grid (the boundary values are the anchoring data).
    pub fn director_field(&self, grid: &Grid3) -> DirectorField {
        let values = (0..grid.len())
            .map(|idx| self.director(grid, &grid.position_of(idx)))
            .collect();
        DirectorField { grid: *grid, values }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Cell centre nearest the box centre, so that every node is at least
/// `√3 h/2` away from it.
pub fn hedgehog_center(grid: &Grid3) -> Vec3 {
    let d = grid.dims();
    Vec3::from_fn(|a, _| grid.origin[a] + grid.h * (((d[a] - 1) / 2) as f64 + 0.5))
}

/// Field whose boundary nodes hold `s₊ (n_b⊗n_b − Id/3)` and interior is zero.
pub fn boundary_from_director(grid: &Grid3, n_b: impl Fn(&Vec3) -> Vec3, p: &MaterialParams) -> Result<QField> {
    let mut values = vec![QTensor::ZERO; grid.len()];
    for idx in grid.boundary_indices() {
        let n = n_b(&grid.position_of(idx));
        values[idx] = QTensor::from_uniaxial(p.s_plus, &n)?;
    }
    Ok(QField { grid: *grid, values })
}

/// `(L/2) Σ_edges w |ΔQ|² h`.
pub fn elastic_energy(f: &QField, p: &MaterialParams) -> f64 {
    0.5 * p.l * f.grid.h * edge_sum(&f.grid, &f.values, |a, b| (*a - *b).norm_sq())
}

/// `Σ_interior f̃_B(Q) h³`.
pub fn bulk_energy(f: &QField, p: &MaterialParams) -> f64 {
    let g = &f.grid;
    let h3 = g.h.powi(3);
    plane_sum(g, |k| {
        if k == 0 || k + 1 == g.nz {
            return 0.0;
        }
        let mut acc = 0.0;
        for j in 1..g.ny - 1 {
            for i in 1..g.nx - 1 {
                acc += bulk::f_bulk_shifted(&f.values[g.index(i, j, k)], p);
            }
        }
        acc * h3
    })
}

pub fn total_energy(f: &QField, p: &MaterialParams) -> f64 {
    elastic_energy(f, p) + bulk_energy(f, p)
}

/// 7-point Laplacian at an interior node.
#[inline]
pub(crate) fn laplacian_at<T, A>(grid: &Grid3, values: &[T], idx: usize, combine: A) -> T
where
    A: Fn(&T, &T, &T, &T, &T, &T, &T) -> T,
{
    let [sx, sy, sz] = grid.strides();
    combine(
        &values[idx],
        &values[idx + sx],
        &values[idx - sx],
        &values[idx + sy],
        &values[idx - sy],
        &values[idx + sz],
        &values[idx - sz],
    )
}

fn q_laplacian(grid: &Grid3, values: &[QTensor], idx: usize) -> QTensor {
    let inv_h2 = 1.0 / (grid.h * grid.h);
    laplacian_at(grid, values, idx, |c, a, b, d, e, f, g| {
        let mut out = [0.0; 5];
        for (m, o) in out.iter_mut().enumerate() {
            *o = (a.0[m] + b.0[m] + d.0[m] + e.0[m] + f.0[m] + g.0[m] - 6.0 * c.0[m]) * inv_h2;
        }
        QTensor(out)
    })
}

/// Applies `f` at every interior node in parallel, leaving zero on the boundary.
pub(crate) fn map_interior<T, F>(grid: &Grid3, f: F) -> Vec<T>
where
    T: Default + Clone + Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let mut out = vec![T::default(); grid.len()];
    out.par_chunks_mut(grid.plane_len()).enumerate().for_each(|(k, plane)| {
        if k == 0 || k + 1 == grid.nz {
            return;
        }
        for j in 1..grid.ny - 1 {
            for i in 1..grid.nx - 1 {
                plane[i + grid.nx * j] = f(grid.index(i, j, k));
            }
        }
    });
    out
}

/// Per interior node `L Δ_h Q − G(Q)`; returns the largest norm and the field
/// (zero on the boundary).
pub fn el_residual(f: &QField, p: &MaterialParams) -> (f64, Vec<QTensor>) {
    let g = &f.grid;
    let res = map_interior(g, |idx| {
        q_laplacian(g, &f.values, idx) * p.l - bulk::bulk_gradient(&f.values[idx], p)
    });
    let max = res.iter().map(QTensor::norm).fold(0.0, f64::max);
    (max, res)
}

/// Exact gradient of [`total_energy`] with respect to interior coefficients:
/// `h³ (−L Δ_h Q + G(Q))`; zero on the boundary.
pub fn energy_gradient(f: &QField, p: &MaterialParams) -> Vec<QTensor> {
    let h3 = f.grid.h.powi(3);
    el_residual(f, p).1.into_iter().map(|r| r * (-h3)).collect()
}

/// `Σ_edges w |Δn|² h`, the discrete `∫ |∇n|²`.
pub fn dirichlet_energy_director(d: &DirectorField) -> f64 {
    d.grid.h
        * edge_sum(&d.grid, &d.values, |a, b| {
            let v = a - b;
            v.dot(&v)
        })
}

/// `e_L = |∇Q|²/2 + f̃_B/L` with the node-centred gradient.
pub fn energy_density(f: &QField, p: &MaterialParams, idx: usize) -> f64 {
    0.5 * f.grad_sq_at(idx) + bulk::f_bulk_shifted(&f.values[idx], p) / p.l
}

/// `(1/r) Σ_{|x − c| ≤ r} e_L h³`.
pub fn normalized_energy(f: &QField, p: &MaterialParams, center: &Vec3, radius: f64) -> Result<f64> {
    let g = &f.grid;
    if !(radius > 0.0) {
        return Err(Error::Domain(format!("radius must be positive, got {radius}")));
    }
    if g.distance_to_boundary(center) < radius + g.h {
        return Err(Error::Domain(format!(
            "ball of radius {radius} at {center:?} is not inside the interior by one cell"
        )));
    }
    let h3 = g.h.powi(3);
    let r2 = radius * radius;
    let sum = plane_sum(g, |k| {
        let mut acc = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let x = g.position(i, j, k);
                let d = x - center;
                if d.dot(&d) <= r2 {
                    acc += energy_density(f, p, g.index(i, j, k));
                }
            }
        }
        acc
    });
    Ok(sum * h3 / radius)
}

/// Discrete `W^{1,2}` distance with trapezoid node weights.
pub fn w12_distance(f: &QField, g: &QField) -> Result<f64> {
    check_same_grid(&f.grid, &g.grid)?;
    let grid = &f.grid;
    let diff: Vec<QTensor> = f.values.iter().zip(&g.values).map(|(a, b)| *a - *b).collect();
    let h3 = grid.h.powi(3);
    let l2 = plane_sum(grid, |k| {
        (0..grid.plane_len())
            .map(|o| {
                let idx = k * grid.plane_len() + o;
                grid.node_weight(idx) * diff[idx].norm_sq()
            })
            .sum::<f64>()
    }) * h3;
    let h1 = grid.h * edge_sum(grid, &diff, |a, b| (*a - *b).norm_sq());
    Ok((l2 + h1).sqrt())
}
