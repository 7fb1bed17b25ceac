//! Error norms, convergence orders and energy-series checks.

use thiserror::Error;

use crate::diffusion::{Grid, ScalarField};
use crate::splitting::{StepReport, ENERGY_SLACK};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("grids differ: {0:?} vs {1:?}")]
    GridMismatch(Grid, Grid),
    #[error("grids share no lattice points")]
    NoCommonPoints,
    #[error("need matching lists of length >= {min}, got {a} and {b}")]
    Length { min: usize, a: usize, b: usize },
    #[error("resolutions must be strictly decreasing")]
    NotDecreasing,
    #[error("entry {0} is zero or not finite")]
    ZeroEntry(usize),
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTableRow {
    pub dt: Option<f64>,
    pub h: Option<f64>,
    pub species: String,
    pub linf_error: f64,
    pub order: Option<f64>,
    pub cpu_seconds: f64,
}

pub fn linf_error(a: &ScalarField, b: &ScalarField) -> Result<f64, DiagnosticsError> {
    if a.grid != b.grid {
        return Err(DiagnosticsError::GridMismatch(a.grid, b.grid));
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .fold(0.0, |m, (x, y)| m.max((x - y).abs())))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Max difference over the lattice points two grids of the same periodic
/// domain have in common (points at `origin + k * extent / gcd(nx_a, nx_b)`).
pub fn linf_on_common_points(a: &ScalarField, b: &ScalarField) -> Result<f64, DiagnosticsError> {
    let (ga, gb) = (a.grid, b.grid);
    if ga.extent != gb.extent || ga.origin != gb.origin {
        return Err(DiagnosticsError::GridMismatch(ga, gb));
    }
    let g = gcd(ga.nx, gb.nx);
    if g == 0 {
        return Err(DiagnosticsError::NoCommonPoints);
    }
    let (sa, sb) = (ga.nx / g, gb.nx / g);
    let mut m: f64 = 0.0;
    for j in 0..g {
        for i in 0..g {
            let va = a.values[ga.index(i * sa, j * sa)];
            let vb = b.values[gb.index(i * sb, j * sb)];
            m = m.max((va - vb).abs());
        }
    }
    Ok(m)
}

fn check_lists(errors: &[f64], steps: &[f64], min: usize) -> Result<(), DiagnosticsError> {
    if errors.len() != steps.len() || errors.len() < min {
        return Err(DiagnosticsError::Length {
            min,
            a: errors.len(),
            b: steps.len(),
        });
    }
    if steps.windows(2).any(|w| !(w[1] < w[0])) || steps.iter().any(|s| !(*s > 0.0)) {
        return Err(DiagnosticsError::NotDecreasing);
    }
    if let Some(k) = errors.iter().position(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(DiagnosticsError::ZeroEntry(k));
    }
    Ok(())
}

/// `order_k = ln(e_{k-1}/e_k) / ln(dt_{k-1}/dt_k)`, one entry per consecutive pair.
pub fn temporal_order(errors: &[f64], dts: &[f64]) -> Result<Vec<f64>, DiagnosticsError> {
    check_lists(errors, dts, 2)?;
    Ok(errors
        .windows(2)
        .zip(dts.windows(2))
        .map(|(e, d)| (e[0] / e[1]).ln() / (d[0] / d[1]).ln())
        .collect())
}

/// Cauchy-test orders for a second-order method.
///
/// `diffs[k] = |u_{h_k} - u_{h_{k+1}}|`, so `diffs.len() == hs.len() - 1`.
/// For each interior resolution `h_j`,
///
/// ```text
/// A* = (1 - h_j^2/h_{j-1}^2) / (1 - h_{j+1}^2/h_j^2)
/// order = ln( diffs[j-1] / (A* diffs[j]) ) / ln(h_{j-1}/h_j)
/// ```
pub fn cauchy_spatial_order(diffs: &[f64], hs: &[f64]) -> Result<Vec<f64>, DiagnosticsError> {
    if hs.len() < 3 || diffs.len() + 1 != hs.len() {
        return Err(DiagnosticsError::Length {
            min: 3,
            a: diffs.len(),
            b: hs.len(),
        });
    }
    if hs.windows(2).any(|w| !(w[1] < w[0])) || hs.iter().any(|s| !(*s > 0.0)) {
        return Err(DiagnosticsError::NotDecreasing);
    }
    if let Some(k) = diffs.iter().position(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(DiagnosticsError::ZeroEntry(k));
    }
    Ok((1..hs.len() - 1)
        .map(|j| {
            let (hm, h, hp) = (hs[j - 1], hs[j], hs[j + 1]);
            let a_star = (1.0 - h * h / (hm * hm)) / (1.0 - hp * hp / (h * h));
            (diffs[j - 1] / (a_star * diffs[j])).ln() / (hm / h).ln()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnergyCheck {
    Pass,
    /// Index of the first report whose energy exceeds its predecessor's.
    Fail { index: usize, before: f64, after: f64 },
}

impl EnergyCheck {
    pub fn passed(&self) -> bool {
        matches!(self, EnergyCheck::Pass)
    }
}

pub fn verify_energy_series(reports: &[StepReport]) -> EnergyCheck {
    verify_energies(&reports.iter().map(|r| r.energy).collect::<Vec<_>>())
}

/// Same check on a bare energy series.
pub fn verify_energies(energies: &[f64]) -> EnergyCheck {
    for (k, w) in energies.windows(2).enumerate() {
        if w[1] > w[0] + ENERGY_SLACK * (1.0 + w[0].abs()) {
            return EnergyCheck::Fail {
                index: k + 1,
                before: w[0],
                after: w[1],
            };
        }
    }
    EnergyCheck::Pass
}
