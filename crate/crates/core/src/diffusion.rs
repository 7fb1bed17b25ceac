//! Diffusion stage on a uniform periodic 2-D grid.
//!
//! Each species is advanced with the semi-implicit scheme
//!
//! ```text
//! (rho' - rho) / dt = div_h( A_h[D(rho)] grad_h rho' )
//! ```
//!
//! where `A_h` averages the cell coefficients onto the cell faces. The
//! resulting five-point system is symmetric positive definite and is solved
//! with Jacobi-preconditioned conjugate gradients.

use rayon::prelude::*;
use thiserror::Error;

/// Chunk length for deterministic parallel reductions.
const CHUNK: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffusionError {
    #[error("conjugate gradients did not converge in {iters} iterations (relative residual {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },
    #[error("diffusion step lost positivity (min {min:e})")]
    PositivityLost { min: f64 },
    #[error("field must be strictly positive (found {min:e})")]
    NonPositiveInput { min: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid diffusion model: {0}")]
    InvalidModel(String),
}

/// Square periodic grid. Point `(i, j)` sits at `origin + (i h, j h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub extent: f64,
    pub origin: f64,
}

impl Grid {
    pub fn new(nx: usize, extent: f64, origin: f64) -> Result<Self, DiffusionError> {
        if nx < 2 {
            return Err(DiffusionError::InvalidGrid(format!("nx = {nx} < 2")));
        }
        if !(extent > 0.0) || !extent.is_finite() || !origin.is_finite() {
            return Err(DiffusionError::InvalidGrid(format!(
                "extent {extent}, origin {origin}"
            )));
        }
        Ok(Self { nx, extent, origin })
    }

    pub fn h(&self) -> f64 {
        self.extent / self.nx as f64
    }

    pub fn len(&self) -> usize {
        self.nx * self.nx
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Linear index, x fastest.
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.h()
    }

    pub fn point(&self, k: usize) -> (f64, f64) {
        (self.coord(k % self.nx), self.coord(k / self.nx))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len(), "field size does not match grid");
        Self { grid, values }
    }

    pub fn constant(grid: Grid, v: f64) -> Self {
        Self::new(grid, vec![v; grid.len()])
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|k| {
                let (x, y) = grid.point(k);
                f(x, y)
            })
            .collect();
        Self { grid, values }
    }

    /// Mean of `f` over the cell `[x - h/2, x + h/2]^2` around each grid
    /// point, by an `n x n` midpoint rule.
    pub fn cell_average(grid: Grid, n: usize, f: impl Fn(f64, f64) -> f64 + Sync) -> Self {
        let h = grid.h();
        let offsets: Vec<f64> = (0..n).map(|a| ((a as f64 + 0.5) / n as f64 - 0.5) * h).collect();
        let values = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let (x, y) = grid.point(k);
                let mut sum = 0.0;
                for dy in &offsets {
                    for dx in &offsets {
                        sum += f(x + dx, y + dy);
                    }
                }
                sum / (n * n) as f64
            })
            .collect();
        Self { grid, values }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `h^2 sum v`.
    pub fn integral(&self) -> f64 {
        let h = self.grid.h();
        h * h * sum(&self.values)
    }
}

/// Diffusion coefficient law `D(rho)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiffusionModel {
    /// No diffusion.
    None,
    Constant(f64),
    /// `D(rho) = scale * m * rho^(m-1)`, so that `div(D grad rho) = scale * lap(rho^m)`.
    PowerLaw { m: f64, scale: f64 },
}

impl DiffusionModel {
    pub fn validate(&self) -> Result<(), DiffusionError> {
        match *self {
            Self::None => Ok(()),
            Self::Constant(d) if d >= 0.0 && d.is_finite() => Ok(()),
            Self::PowerLaw { m, scale } if m >= 1.0 && scale > 0.0 && scale.is_finite() => Ok(()),
            other => Err(DiffusionError::InvalidModel(format!("{other:?}"))),
        }
    }

    pub fn is_active(&self) -> bool {
        match *self {
            Self::None => false,
            Self::Constant(d) => d > 0.0,
            Self::PowerLaw { .. } => true,
        }
    }

    pub fn coefficient(&self, rho: f64) -> f64 {
        match *self {
            Self::None => 0.0,
            Self::Constant(d) => d,
            Self::PowerLaw { m, scale } => scale * m * rho.powf(m - 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionOptions {
    /// Relative residual tolerance of the linear solve.
    pub cg_tol: f64,
    /// Iteration cap; `None` means `10 nx^2`.
    pub cg_max_iters: Option<usize>,
}

impl Default for DiffusionOptions {
    fn default() -> Self {
        Self {
            cg_tol: 1e-11,
            cg_max_iters: None,
        }
    }
}

/// Face values of the coefficient: `x[k]` sits between `k` and its `+x`
/// neighbour, `y[k]` between `k` and its `+y` neighbour.
#[derive(Debug, Clone, PartialEq)]
pub struct Faces {
    pub nx: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Arithmetic mean of neighbouring cell values, periodic in both directions.
pub fn staggered_average(field: &ScalarField) -> Faces {
    let nx = field.grid.nx;
    let v = &field.values;
    let mut x = vec![0.0; v.len()];
    let mut y = vec![0.0; v.len()];
    for j in 0..nx {
        let jp = (j + 1) % nx;
        for i in 0..nx {
            let ip = (i + 1) % nx;
            let k = j * nx + i;
            x[k] = 0.5 * (v[k] + v[j * nx + ip]);
            y[k] = 0.5 * (v[k] + v[jp * nx + i]);
        }
    }
    Faces { nx, x, y }
}

fn sum(v: &[f64]) -> f64 {
    v.par_chunks(CHUNK)
        .map(|c| c.iter().sum::<f64>())
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

/// `out = v - (dt/h^2) div(faces grad v)`, row by row.
fn apply_into(faces: &Faces, lambda: f64, v: &[f64], out: &mut [f64]) {
    let nx = faces.nx;
    out.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        let jm = (j + nx - 1) % nx;
        let jp = (j + 1) % nx;
        for (i, o) in row.iter_mut().enumerate() {
            let im = (i + nx - 1) % nx;
            let ip = (i + 1) % nx;
            let k = j * nx + i;
            let vk = v[k];
            let flux = faces.x[k] * (v[j * nx + ip] - vk) - faces.x[j * nx + im] * (vk - v[j * nx + im])
                + faces.y[k] * (v[jp * nx + i] - vk)
                - faces.y[jm * nx + i] * (vk - v[jm * nx + i]);
            *o = vk - lambda * flux;
        }
    });
}

fn diagonal(faces: &Faces, lambda: f64) -> Vec<f64> {
    let nx = faces.nx;
    (0..nx * nx)
        .map(|k| {
            let (i, j) = (k % nx, k / nx);
            let im = (i + nx - 1) % nx;
            let jm = (j + nx - 1) % nx;
            1.0 + lambda
                * (faces.x[k] + faces.x[j * nx + im] + faces.y[k] + faces.y[jm * nx + i])
        })
        .collect()
}

/// Applies the semi-implicit diffusion operator to `v`.
pub fn apply_operator(faces: &Faces, dt: f64, h: f64, v: &ScalarField) -> ScalarField {
    let mut out = vec![0.0; v.values.len()];
    apply_into(faces, dt / (h * h), &v.values, &mut out);
    ScalarField::new(v.grid, out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub field: ScalarField,
    pub iters: usize,
    pub residual: f64,
}

/// Solves `A v = rhs` by Jacobi-preconditioned conjugate gradients,
/// starting from `v = rhs`, until `|A v - rhs|_2 <= tol |rhs|_2`.
pub fn cg_solve(
    faces: &Faces,
    dt: f64,
    h: f64,
    rhs: &ScalarField,
    tol: f64,
    max_iters: usize,
) -> Result<CgSolution, DiffusionError> {
    let lambda = dt / (h * h);
    let n = rhs.values.len();
    let b = &rhs.values;
    let bnorm = dot(b, b).sqrt();
    let mut x = b.clone();
    if bnorm == 0.0 {
        return Ok(CgSolution {
            field: ScalarField::new(rhs.grid, x),
            iters: 0,
            residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = diagonal(faces, lambda).iter().map(|d| 1.0 / d).collect();
    let mut ax = vec![0.0; n];
    apply_into(faces, lambda, &x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let target = tol * bnorm;
    let mut rnorm = dot(&r, &r).sqrt();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut iters = 0;
    while rnorm > target {
        if iters >= max_iters {
            return Err(DiffusionError::NoConvergence {
                iters,
                residual: rnorm / bnorm,
            });
        }
        iters += 1;
        apply_into(faces, lambda, &p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        x.par_iter_mut()
            .zip(r.par_iter_mut())
            .zip(p.par_iter().zip(ap.par_iter()))
            .for_each(|((x, r), (p, ap))| {
                *x += alpha * p;
                *r -= alpha * ap;
            });
        rnorm = dot(&r, &r).sqrt();
        z.par_iter_mut()
            .zip(r.par_iter().zip(inv_diag.par_iter()))
            .for_each(|(z, (r, d))| *z = r * d);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut()
            .zip(z.par_iter())
            .for_each(|(p, z)| *p = z + beta * *p);
    }
    // Recompute the true residual; the recursive one drifts.
    apply_into(faces, lambda, &x, &mut ax);
    let true_res = b
        .iter()
        .zip(&ax)
        .map(|(b, a)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt();
    Ok(CgSolution {
        field: ScalarField::new(rhs.grid, x),
        iters,
        residual: true_res / bnorm,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionOutcome {
    pub field: ScalarField,
    pub cg_iters: usize,
}

/// One semi-implicit step of `rho_t = div(D(rho) grad rho)`.
///
/// The coefficient is evaluated at the input field. On loss of positivity
/// after the inexact solve the step is retried once with `tol / 100`.
pub fn diffusion_step(
    field: &ScalarField,
    model: &DiffusionModel,
    dt: f64,
    opts: &DiffusionOptions,
) -> Result<DiffusionOutcome, DiffusionError> {
    let min = field.min();
    if !(min > 0.0) {
        return Err(DiffusionError::NonPositiveInput { min });
    }
    if !model.is_active() {
        return Ok(DiffusionOutcome {
            field: field.clone(),
            cg_iters: 0,
        });
    }
    let coeff = ScalarField::new(
        field.grid,
        field.values.par_iter().map(|&r| model.coefficient(r)).collect(),
    );
    let faces = staggered_average(&coeff);
    let h = field.grid.h();
    let cap = opts
        .cg_max_iters
        .unwrap_or(10 * field.grid.nx * field.grid.nx);
    let mut tol = opts.cg_tol;
    let mut total = 0;
    for attempt in 0..2 {
        let sol = cg_solve(&faces, dt, h, field, tol, cap)?;
        total += sol.iters;
        let new_min = sol.field.min();
        if new_min > 0.0 {
            return Ok(DiffusionOutcome {
                field: sol.field,
                cg_iters: total,
            });
        }
        if attempt == 1 {
            return Err(DiffusionError::PositivityLost { min: new_min });
        }
        tol /= 100.0;
    }
    unreachable!()
}

/// `h^2 sum (rho ln rho + C rho)`.
pub fn entropy(field: &ScalarField, c: f64) -> f64 {
    let h = field.grid.h();
    h * h
        * field
            .values
            .iter()
            .map(|&r| r * r.ln() + c * r)
            .sum::<f64>()
}

/// Discrete maximum principle with an absolute `slack`.
pub fn max_principle_holds(before: &ScalarField, after: &ScalarField, slack: f64) -> bool {
    after.min() >= before.min() - slack && after.max() <= before.max() + slack
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn unit_grid(nx: usize) -> Grid {
        Grid::new(nx, 1.0, 0.0).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(1, 1.0, 0.0).is_err());
        assert!(Grid::new(4, 0.0, 0.0).is_err());
        let g = Grid::new(4, 2.0, -1.0).unwrap();
        assert_eq!(g.h(), 0.5);
        assert_eq!(g.point(g.index(1, 2)), (-0.5, 0.0));
    }

    #[test]
    fn averages() {
        let g = unit_grid(4);
        let f = staggered_average(&ScalarField::constant(g, 3.0));
        assert!(f.x.iter().chain(&f.y).all(|&v| v == 3.0));

        // (1, 3) along x with wrap
        let g = unit_grid(2);
        let field = ScalarField::new(g, vec![1.0, 3.0, 1.0, 3.0]);
        let f = staggered_average(&field);
        assert_eq!(f.x, vec![2.0; 4]);
        assert_eq!(f.y, vec![1.0, 3.0, 1.0, 3.0]);
    }

    #[test]
    fn constants_are_fixed_points() {
        let g = unit_grid(8);
        let coeff = ScalarField::from_fn(g, |x, y| 1.0 + x * y);
        let faces = staggered_average(&coeff);
        let v = ScalarField::constant(g, 2.5);
        let av = apply_operator(&faces, 0.1, g.h(), &v);
        for a in &av.values {
            assert_abs_diff_eq!(*a, 2.5, epsilon = 1e-13);
        }
        let sol = cg_solve(&faces, 0.1, g.h(), &v, 1e-11, 1000).unwrap();
        assert_eq!(sol.iters, 0);
        assert_eq!(sol.field.values, v.values);
    }

    #[test]
    fn fourier_mode_is_an_eigenvector() {
        let nx = 16;
        let g = unit_grid(nx);
        let (d, dt, h) = (0.3, 0.05, g.h());
        let lam = (2.0 - 2.0 * (2.0 * PI * h).cos()) / (h * h);
        let faces = staggered_average(&ScalarField::constant(g, d));
        let v = ScalarField::from_fn(g, |x, _| (2.0 * PI * x).cos());
        let av = apply_operator(&faces, dt, h, &v);
        for (a, b) in av.values.iter().zip(&v.values) {
            assert_abs_diff_eq!(*a, (1.0 + dt * d * lam) * b, epsilon = 1e-12);
        }
        let sol = cg_solve(&faces, dt, h, &v, 1e-13, 1000).unwrap();
        for (a, b) in sol.field.values.iter().zip(&v.values) {
            assert_abs_diff_eq!(*a, b / (1.0 + dt * d * lam), epsilon = 1e-12);
        }
    }

    #[test]
    fn iteration_cap_is_reported() {
        let g = unit_grid(16);
        let faces = staggered_average(&ScalarField::constant(g, 1.0));
        let rhs = ScalarField::from_fn(g, |x, y| 1.0 + (x * 7.0).sin() * (y * 3.0).cos());
        let err = cg_solve(&faces, 1.0, g.h(), &rhs, 1e-14, 1).unwrap_err();
        assert!(matches!(err, DiffusionError::NoConvergence { iters: 1, .. }));
    }

    #[test]
    fn diffusion_step_edge_cases() {
        let g = unit_grid(8);
        let opts = DiffusionOptions::default();
        let c = ScalarField::constant(g, 0.7);
        let out = diffusion_step(&c, &DiffusionModel::Constant(1.0), 0.1, &opts).unwrap();
        assert_eq!(out.field.values, c.values);

        let bad = ScalarField::new(g, {
            let mut v = vec![1.0; 64];
            v[3] = 0.0;
            v
        });
        assert!(matches!(
            diffusion_step(&bad, &DiffusionModel::Constant(1.0), 0.1, &opts),
            Err(DiffusionError::NonPositiveInput { .. })
        ));

        let f = ScalarField::from_fn(g, |x, _| 1.0 + 0.5 * (2.0 * PI * x).sin());
        let out = diffusion_step(&f, &DiffusionModel::None, 0.1, &opts).unwrap();
        assert_eq!(out.field, f);
    }

    #[test]
    fn model_coefficients() {
        let pm = DiffusionModel::PowerLaw { m: 4.0, scale: 1.0 };
        assert_abs_diff_eq!(pm.coefficient(0.5), 4.0 * 0.125);
        assert!(DiffusionModel::PowerLaw { m: 0.5, scale: 1.0 }
            .validate()
            .is_err());
        assert!(DiffusionModel::Constant(-1.0).validate().is_err());
        assert!(!DiffusionModel::Constant(0.0).is_active());
    }
}
