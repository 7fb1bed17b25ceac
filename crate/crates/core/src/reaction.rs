//! Reaction stage: one implicit step of the kinetics at every mesh point.
//!
//! Per cell the update is the minimizer of the strictly convex function
//!
//! ```text
//! J(R) = sum_l [ (R_l + eta_l dt) ln(R_l / (eta_l dt) + 1) - R_l ] + F(c0 + sigma R)
//! ```
//!
//! over the admissible set `{ c0 + sigma R > 0, R_l + eta_l dt > 0 }`, where
//! `eta_l = k-_l prod c0^beta` is frozen at the start of the step. The
//! stationarity condition of `J` is the semi-implicit scheme
//! `ln(R_l / (eta_l dt) + 1) = -sum_i sigma_il mu_i(c0 + sigma R)`.
//!
//! The minimizer is found by gradient descent with Barzilai-Borwein steps and
//! a backtracking search that keeps every iterate strictly admissible and `J`
//! non-increasing.

use rayon::prelude::*;
use thiserror::Error;

use crate::network::{Concentration, ReactionNetwork};
use crate::splitting::SpeciesField;

const STEP_MIN: f64 = 1e-12;
const STEP_MAX: f64 = 1e12;
/// Backtracking attempts before an iteration is declared stalled.
const MAX_BACKTRACKS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionSolveOptions {
    /// Max-norm of the gradient at which the descent stops.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Step shrink factor used by the backtracking search.
    pub backtrack_factor: f64,
    /// Relative interior margin; 0 requires strict inequalities only.
    pub admissibility_margin: f64,
}

impl Default for ReactionSolveOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-10,
            max_iters: 500,
            backtrack_factor: 0.5,
            admissibility_margin: 0.0,
        }
    }
}

impl ReactionSolveOptions {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.grad_tol > 0.0) {
            return Err(format!("grad_tol must be positive, got {}", self.grad_tol));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(format!(
                "backtrack_factor must lie in (0, 1), got {}",
                self.backtrack_factor
            ));
        }
        if !(self.admissibility_margin >= 0.0 && self.admissibility_margin < 1.0) {
            return Err(format!(
                "admissibility_margin must lie in [0, 1), got {}",
                self.admissibility_margin
            ));
        }
        if self.max_iters == 0 {
            return Err("max_iters must be at least 1".into());
        }
        Ok(())
    }
}

/// Frozen data of one cell for one reaction step.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionCellState {
    pub c0: Vec<f64>,
    /// `eta_l = k-_l prod_i c0_i^beta_il`.
    pub eta: Vec<f64>,
    pub dt: f64,
}

impl ReactionCellState {
    pub fn new(net: &ReactionNetwork, c0: &Concentration, dt: f64) -> Self {
        Self::from_slice(net, c0.as_slice(), dt)
    }

    pub(crate) fn from_slice(net: &ReactionNetwork, c0: &[f64], dt: f64) -> Self {
        let eta = (0..net.num_reactions())
            .map(|l| net.backward_flux(l, c0))
            .collect();
        Self {
            c0: c0.to_vec(),
            eta,
            dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSolution {
    /// Reaction trajectory increments over the step.
    pub r: Vec<f64>,
    pub c_star: Vec<f64>,
    pub iters: usize,
    /// Max-norm of the gradient at `r`.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ReactionError {
    #[error("trajectory lies outside the admissible set")]
    Inadmissible,
    #[error(
        "gradient norm {:.3e} above tolerance after {} iterations", best.grad_norm, best.iters
    )]
    MaxIterations { best: CellSolution },
    #[error("cell {cell}: {source}")]
    Cell {
        cell: usize,
        #[source]
        source: Box<ReactionError>,
    },
    #[error("cell {cell}: reaction step lost positivity (min {min:e})")]
    PositivityLost { cell: usize, min: f64 },
    #[error("cell {cell}: free energy increased from {before} to {after}")]
    EnergyIncrease { cell: usize, before: f64, after: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageStats {
    pub max_iters: usize,
    pub total_iters: usize,
}

/// Scratch buffers and frozen data for evaluating `J` and its gradient.
struct CellProblem<'a> {
    net: &'a ReactionNetwork,
    state: &'a ReactionCellState,
    /// `eta_l * dt`.
    scale: Vec<f64>,
    margin: f64,
}

impl<'a> CellProblem<'a> {
    fn new(net: &'a ReactionNetwork, state: &'a ReactionCellState, margin: f64) -> Self {
        let scale = state.eta.iter().map(|e| e * state.dt).collect();
        Self {
            net,
            state,
            scale,
            margin,
        }
    }

    fn concentrations(&self, r: &[f64], c: &mut [f64]) {
        c.copy_from_slice(&self.state.c0);
        for (t, &rl) in self.net.terms().iter().zip(r) {
            for &(i, s) in &t.net {
                c[i] += s as f64 * rl;
            }
        }
    }

    /// Fills `c` and reports whether `r` is strictly admissible.
    fn admissible(&self, r: &[f64], c: &mut [f64]) -> bool {
        if r.iter().any(|v| !v.is_finite()) {
            return false;
        }
        self.concentrations(r, c);
        let m = self.margin;
        c.iter().zip(&self.state.c0).all(|(ci, c0)| *ci > m * c0)
            && r.iter()
                .zip(&self.scale)
                .all(|(rl, s)| rl + s > m * s)
    }

    /// `J(r)` given `c = c0 + sigma r`.
    fn objective(&self, r: &[f64], c: &[f64]) -> f64 {
        let dissipation: f64 = r
            .iter()
            .zip(&self.scale)
            .map(|(&rl, &s)| (rl + s) * (rl / s).ln_1p() - rl)
            .sum();
        dissipation + self.net.free_energy_of(c)
    }

    fn gradient(&self, r: &[f64], c: &[f64], g: &mut [f64]) {
        let u = self.net.internal_energy();
        for (l, t) in self.net.terms().iter().enumerate() {
            let affinity: f64 = t
                .net
                .iter()
                .map(|&(i, s)| s as f64 * (c[i].ln() + u[i]))
                .sum();
            g[l] = (r[l] / self.scale[l]).ln_1p() + affinity;
        }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |s, x| s.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Value of the convex reaction-step objective at `r`.
pub fn objective(
    net: &ReactionNetwork,
    state: &ReactionCellState,
    r: &[f64],
) -> Result<f64, ReactionError> {
    let p = CellProblem::new(net, state, 0.0);
    let mut c = vec![0.0; net.num_species()];
    if r.len() != net.num_reactions() || !p.admissible(r, &mut c) {
        return Err(ReactionError::Inadmissible);
    }
    Ok(p.objective(r, &c))
}

/// Analytic gradient of [`objective`]; its zero is the reaction-step scheme.
pub fn gradient(
    net: &ReactionNetwork,
    state: &ReactionCellState,
    r: &[f64],
) -> Result<Vec<f64>, ReactionError> {
    let p = CellProblem::new(net, state, 0.0);
    let mut c = vec![0.0; net.num_species()];
    if r.len() != net.num_reactions() || !p.admissible(r, &mut c) {
        return Err(ReactionError::Inadmissible);
    }
    let mut g = vec![0.0; r.len()];
    p.gradient(r, &c, &mut g);
    Ok(g)
}

/// Minimizes the reaction-step objective for a single cell.
///
/// The descent starts from the explicit mass-action step `dt * r(c0)`, damped
/// until admissible. The first step length is `1 / (1 + |g|_inf)`, later ones
/// use the BB1 quotient `s.s / s.y` (BB2 `s.y / y.y` when `s.y <= 0`) clamped
/// to `[1e-12, 1e12]`. Every trial point is backtracked until it is strictly
/// admissible and does not increase `J`.
///
/// If the gradient tolerance is not met, [`ReactionError::MaxIterations`]
/// carries the best iterate.
pub fn solve_cell(
    net: &ReactionNetwork,
    state: &ReactionCellState,
    opts: &ReactionSolveOptions,
) -> Result<CellSolution, ReactionError> {
    let m = net.num_reactions();
    let n = net.num_species();
    if m == 0 {
        return Ok(CellSolution {
            r: Vec::new(),
            c_star: state.c0.clone(),
            iters: 0,
            grad_norm: 0.0,
        });
    }
    let p = CellProblem::new(net, state, opts.admissibility_margin);
    let mut c = vec![0.0; n];
    let mut c_trial = vec![0.0; n];

    let mut x = net.rates_of(&state.c0);
    x.iter_mut().for_each(|v| *v *= state.dt);
    let mut damping = 0;
    while !p.admissible(&x, &mut c) {
        x.iter_mut().for_each(|v| *v *= opts.backtrack_factor);
        damping += 1;
        if damping > MAX_BACKTRACKS {
            x.iter_mut().for_each(|v| *v = 0.0);
            if !p.admissible(&x, &mut c) {
                return Err(ReactionError::Inadmissible);
            }
        }
    }
    let mut j = p.objective(&x, &c);
    let mut g = vec![0.0; m];
    p.gradient(&x, &c, &mut g);
    let mut gnorm = inf_norm(&g);
    let mut step = 1.0 / (1.0 + gnorm);

    let mut trial = vec![0.0; m];
    let mut g_trial = vec![0.0; m];
    let mut s = vec![0.0; m];
    let mut y = vec![0.0; m];
    let mut iters = 0;

    while gnorm > opts.grad_tol && iters < opts.max_iters {
        iters += 1;
        let mut t = step;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            for k in 0..m {
                trial[k] = x[k] - t * g[k];
            }
            if p.admissible(&trial, &mut c_trial) {
                let j_trial = p.objective(&trial, &c_trial);
                if j_trial <= j + 1e-14 * (1.0 + j.abs()) {
                    j = j_trial;
                    accepted = true;
                    break;
                }
            }
            t *= opts.backtrack_factor;
        }
        if !accepted {
            break;
        }
        p.gradient(&trial, &c_trial, &mut g_trial);
        for k in 0..m {
            s[k] = trial[k] - x[k];
            y[k] = g_trial[k] - g[k];
        }
        let sy = dot(&s, &y);
        let raw = if sy > 0.0 {
            dot(&s, &s) / sy
        } else {
            let yy = dot(&y, &y);
            if yy > 0.0 {
                sy / yy
            } else {
                STEP_MAX
            }
        };
        step = if raw.is_finite() {
            raw.clamp(STEP_MIN, STEP_MAX)
        } else {
            STEP_MAX
        };
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut g, &mut g_trial);
        std::mem::swap(&mut c, &mut c_trial);
        gnorm = inf_norm(&g);
    }

    let solution = CellSolution {
        r: x,
        c_star: c,
        iters,
        grad_norm: gnorm,
    };
    if gnorm > opts.grad_tol {
        return Err(ReactionError::MaxIterations { best: solution });
    }
    Ok(solution)
}

/// Applies [`solve_cell`] independently at every cell of `field`.
///
/// Cells are solved in parallel; each touches only its own data, so the
/// result does not depend on scheduling. After the solve, positivity and the
/// per-cell energy bound `F(c*) <= F(c0) + 1e-12 (1 + |F(c0)|)` are checked.
pub fn reaction_stage(
    net: &ReactionNetwork,
    field: &SpeciesField,
    dt: f64,
    opts: &ReactionSolveOptions,
) -> Result<(SpeciesField, StageStats), ReactionError> {
    let ncells = field.num_cells();
    let nspec = field.num_species();
    let results: Vec<Result<(Vec<f64>, usize), ReactionError>> = (0..ncells)
        .into_par_iter()
        .map(|cell| {
            let c0 = field.cell(cell);
            let state = ReactionCellState::from_slice(net, &c0, dt);
            let sol = solve_cell(net, &state, opts).map_err(|e| ReactionError::Cell {
                cell,
                source: Box::new(e),
            })?;
            let min = sol.c_star.iter().copied().fold(f64::INFINITY, f64::min);
            if !(min > 0.0) {
                return Err(ReactionError::PositivityLost { cell, min });
            }
            let before = net.free_energy_of(&c0);
            let after = net.free_energy_of(&sol.c_star);
            if after > before + 1e-12 * (1.0 + before.abs()) {
                return Err(ReactionError::EnergyIncrease {
                    cell,
                    before,
                    after,
                });
            }
            Ok((sol.c_star, sol.iters))
        })
        .collect();

    let mut out = field.clone();
    let mut stats = StageStats::default();
    for (cell, res) in results.into_iter().enumerate() {
        let (c_star, iters) = res?;
        for (i, v) in c_star.into_iter().enumerate().take(nspec) {
            out.species_mut(i)[cell] = v;
        }
        stats.max_iters = stats.max_iters.max(iters);
        stats.total_iters += iters;
    }
    Ok((out, stats))
}
