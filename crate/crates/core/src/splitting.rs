//! Operator-splitting driver: reaction stage, then diffusion stage, per step.
//!
//! Both stages dissipate the same discrete free energy
//! `F_h(c) = cell_measure * sum_cells F(c_cell)`, so the driver checks after
//! every step that `F_h` has not increased (up to `1e-10 (1 + |F_h|)`), that
//! every concentration is positive and that the domain-integrated invariants
//! have not drifted.

use rayon::prelude::*;
use thiserror::Error;

use crate::diffusion::{
    diffusion_step, DiffusionError, DiffusionModel, DiffusionOptions, Grid, ScalarField,
};
use crate::network::{NetworkError, ReactionNetwork};
use crate::reaction::{reaction_stage, ReactionError, ReactionSolveOptions};

/// Relative slack on the energy inequality per step.
pub const ENERGY_SLACK: f64 = 1e-10;
/// Relative drift allowed on domain-integrated invariants.
pub const INVARIANT_DRIFT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    /// Spatially homogeneous kinetics: one cell of unit measure.
    SingleCell,
    Periodic(Grid),
}

impl Domain {
    pub fn num_cells(&self) -> usize {
        match self {
            Domain::SingleCell => 1,
            Domain::Periodic(g) => g.len(),
        }
    }

    pub fn cell_measure(&self) -> f64 {
        match self {
            Domain::SingleCell => 1.0,
            Domain::Periodic(g) => g.h() * g.h(),
        }
    }

    pub fn grid(&self) -> Option<&Grid> {
        match self {
            Domain::SingleCell => None,
            Domain::Periodic(g) => Some(g),
        }
    }
}

/// Concentrations of every species on a common domain, stored species-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesField {
    domain: Domain,
    values: Vec<Vec<f64>>,
}

impl SpeciesField {
    pub fn new(domain: Domain, values: Vec<Vec<f64>>) -> Result<Self, NetworkError> {
        let n = domain.num_cells();
        if let Some(bad) = values.iter().find(|v| v.len() != n) {
            return Err(NetworkError::Shape(format!(
                "species field has {} values, domain has {n} cells",
                bad.len()
            )));
        }
        for v in &values {
            crate::network::check_positive(v)?;
        }
        Ok(Self { domain, values })
    }

    /// Single-cell field from one concentration vector.
    pub fn single_cell(c: &[f64]) -> Result<Self, NetworkError> {
        Self::new(Domain::SingleCell, c.iter().map(|&v| vec![v]).collect())
    }

    /// Samples one function of `(x, y)` per species on `grid`.
    pub fn from_fns<F: Fn(f64, f64) -> f64>(
        grid: Grid,
        fns: &[F],
    ) -> Result<Self, NetworkError> {
        let values = fns
            .iter()
            .map(|f| ScalarField::from_fn(grid, f).values)
            .collect();
        Self::new(Domain::Periodic(grid), values)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn num_species(&self) -> usize {
        self.values.len()
    }

    pub fn num_cells(&self) -> usize {
        self.domain.num_cells()
    }

    pub fn species(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub(crate) fn species_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i]
    }

    /// Concentration vector at one cell.
    pub fn cell(&self, k: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[k]).collect()
    }

    pub fn min(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Species `i` as a grid field, if the domain is a grid.
    pub fn scalar_field(&self, i: usize) -> Option<ScalarField> {
        self.domain
            .grid()
            .map(|g| ScalarField::new(*g, self.values[i].clone()))
    }

    /// `cell_measure * sum_cells e^T c` for every invariant of `net`.
    pub fn integrated_invariants(&self, net: &ReactionNetwork) -> Vec<f64> {
        self.weighted_invariants(net, false)
    }

    /// Same with `|e|`; a positive scale for relative drift checks.
    fn invariant_scales(&self, net: &ReactionNetwork) -> Vec<f64> {
        self.weighted_invariants(net, true)
    }

    fn weighted_invariants(&self, net: &ReactionNetwork, abs: bool) -> Vec<f64> {
        let w = self.domain.cell_measure();
        net.invariant_basis()
            .iter()
            .map(|e| {
                let s: f64 = e
                    .iter()
                    .zip(&self.values)
                    .map(|(&ei, v)| {
                        let ei = if abs { ei.abs() } else { ei };
                        if ei == 0.0 {
                            0.0
                        } else {
                            ei * v.iter().sum::<f64>()
                        }
                    })
                    .sum();
                w * s
            })
            .collect()
    }
}

/// Discrete free energy `cell_measure * sum_cells F(c)`.
pub fn discrete_energy(net: &ReactionNetwork, field: &SpeciesField) -> Result<f64, NetworkError> {
    if field.num_species() != net.num_species() {
        return Err(NetworkError::WrongLength {
            expected: net.num_species(),
            got: field.num_species(),
        });
    }
    let min = field.min();
    if !(min > 0.0) {
        return Err(NetworkError::NonPositiveConcentration {
            index: 0,
            value: min,
        });
    }
    Ok(energy_of(net, field))
}

fn energy_of(net: &ReactionNetwork, field: &SpeciesField) -> f64 {
    let u = net.internal_energy();
    let s: f64 = field
        .values
        .iter()
        .zip(u)
        .map(|(v, &ui)| {
            v.par_chunks(4096)
                .map(|c| c.iter().map(|&x| x * (x.ln() - 1.0) + x * ui).sum::<f64>())
                .collect::<Vec<_>>()
                .iter()
                .sum::<f64>()
        })
        .sum();
    field.domain.cell_measure() * s
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub network: ReactionNetwork,
    /// One model per species, in network order.
    pub diffusion: Vec<DiffusionModel>,
    pub initial: SpeciesField,
    pub dt: f64,
    pub t_end: f64,
    pub reaction: ReactionSolveOptions,
    pub diffusion_opts: DiffusionOptions,
    /// Record a report every this many steps (the final step is always kept).
    pub report_every: usize,
    /// Snapshot cadence in time units; `None` disables snapshots.
    pub snapshot_every: Option<f64>,
}

impl Problem {
    pub fn new(
        network: ReactionNetwork,
        diffusion: Vec<DiffusionModel>,
        initial: SpeciesField,
        dt: f64,
        t_end: f64,
    ) -> Result<Self, DriverError> {
        let p = Self {
            network,
            diffusion,
            initial,
            dt,
            t_end,
            reaction: ReactionSolveOptions::default(),
            diffusion_opts: DiffusionOptions::default(),
            report_every: 1,
            snapshot_every: Some(0.05),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DriverError> {
        let invalid = |s: String| Err(DriverError::InvalidProblem(s));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return invalid(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= self.dt) {
            return invalid(format!("t_end {} is shorter than dt {}", self.t_end, self.dt));
        }
        let n = self.network.num_species();
        if self.diffusion.len() != n || self.initial.num_species() != n {
            return invalid(format!(
                "network has {n} species, {} diffusion models, {} initial fields",
                self.diffusion.len(),
                self.initial.num_species()
            ));
        }
        for d in &self.diffusion {
            d.validate()
                .map_err(|e| DriverError::InvalidProblem(e.to_string()))?;
        }
        self.reaction.validate().map_err(DriverError::InvalidProblem)?;
        if self.report_every == 0 {
            return invalid("report_every must be at least 1".into());
        }
        if let Some(s) = self.snapshot_every {
            if !(s > 0.0) {
                return invalid(format!("snapshot cadence must be positive, got {s}"));
            }
        }
        Ok(())
    }

    /// Number of steps, `ceil(t_end / dt)`.
    pub fn num_steps(&self) -> usize {
        ((self.t_end / self.dt) - 1e-9).ceil().max(1.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub time: f64,
    pub energy: f64,
    pub min_conc: f64,
    /// Domain-integrated invariants, one per basis vector.
    pub invariants: Vec<f64>,
    /// Max descent iterations over all cells.
    pub reaction_iters: usize,
    /// Max CG iterations over all species.
    pub cg_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AssertionKind {
    EnergyIncrease { before: f64, after: f64 },
    Positivity { min: f64 },
    InvariantDrift { index: usize, drift: f64 },
}

impl std::fmt::Display for AssertionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::EnergyIncrease { before, after } => {
                write!(f, "energy increased from {before} to {after}")
            }
            Self::Positivity { min } => write!(f, "minimum concentration {min:e} is not positive"),
            Self::InvariantDrift { index, drift } => {
                write!(f, "invariant {index} drifted by {drift:e} (relative)")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("step {step}: reaction stage: {source}")]
    Reaction {
        step: usize,
        #[source]
        source: ReactionError,
    },
    #[error("step {step}: diffusion stage (species {species}): {source}")]
    Diffusion {
        step: usize,
        species: usize,
        #[source]
        source: DiffusionError,
    },
    #[error("step {step}: assertion failed: {kind}")]
    AssertionFailed { step: usize, kind: AssertionKind },
}

impl DriverError {
    /// True for failures of a structural guarantee (positivity, energy
    /// decay, invariant conservation) as opposed to bad input or a solver cap.
    pub fn is_assertion(&self) -> bool {
        match self {
            Self::AssertionFailed { .. } => true,
            Self::Reaction { source, .. } => {
                let mut e = source;
                while let ReactionError::Cell { source, .. } = e {
                    e = source;
                }
                matches!(
                    e,
                    ReactionError::PositivityLost { .. } | ReactionError::EnergyIncrease { .. }
                )
            }
            Self::Diffusion { source, .. } => matches!(source, DiffusionError::PositivityLost { .. }),
            Self::InvalidProblem(_) => false,
        }
    }
}

fn energy_increased(before: f64, after: f64) -> bool {
    after > before + ENERGY_SLACK * (1.0 + before.abs())
}

fn check_invariants(
    step: usize,
    reference: &[f64],
    scales: &[f64],
    current: &[f64],
) -> Result<(), DriverError> {
    for (index, ((r, s), c)) in reference.iter().zip(scales).zip(current).enumerate() {
        let drift = (c - r).abs() / s.max(f64::MIN_POSITIVE);
        if drift > INVARIANT_DRIFT {
            return Err(DriverError::AssertionFailed {
                step,
                kind: AssertionKind::InvariantDrift { index, drift },
            });
        }
    }
    Ok(())
}

fn report_for(
    net: &ReactionNetwork,
    field: &SpeciesField,
    step: usize,
    time: f64,
    reaction_iters: usize,
    cg_iters: usize,
) -> StepReport {
    StepReport {
        step,
        time,
        energy: energy_of(net, field),
        min_conc: field.min(),
        invariants: field.integrated_invariants(net),
        reaction_iters,
        cg_iters,
    }
}

/// Diffusion stage for every species; species are independent.
pub fn diffusion_stage(
    diffusion: &[DiffusionModel],
    field: &SpeciesField,
    dt: f64,
    opts: &DiffusionOptions,
) -> Result<(SpeciesField, usize), (usize, DiffusionError)> {
    let grid = match field.domain() {
        Domain::SingleCell => return Ok((field.clone(), 0)),
        Domain::Periodic(g) => *g,
    };
    let results: Vec<_> = field
        .values
        .par_iter()
        .zip(diffusion.par_iter())
        .enumerate()
        .map(|(i, (v, model))| {
            let sf = ScalarField::new(grid, v.clone());
            diffusion_step(&sf, model, dt, opts).map_err(|e| (i, e))
        })
        .collect();
    let mut out = field.clone();
    let mut cg = 0;
    for (i, r) in results.into_iter().enumerate() {
        let o = r?;
        cg = cg.max(o.cg_iters);
        out.values[i] = o.field.values;
    }
    Ok((out, cg))
}

/// Advances `field` by one step (index `step`, ending at `step * dt`).
pub fn split_step(
    problem: &Problem,
    field: &SpeciesField,
    step: usize,
) -> Result<(SpeciesField, StepReport), DriverError> {
    let net = &problem.network;
    let before = energy_of(net, field);
    let (mid, rstats) = reaction_stage(net, field, problem.dt, &problem.reaction)
        .map_err(|source| DriverError::Reaction { step, source })?;
    let (next, cg_iters) =
        diffusion_stage(&problem.diffusion, &mid, problem.dt, &problem.diffusion_opts).map_err(
            |(species, source)| DriverError::Diffusion {
                step,
                species,
                source,
            },
        )?;
    let report = report_for(
        net,
        &next,
        step,
        step as f64 * problem.dt,
        rstats.max_iters,
        cg_iters,
    );
    if !(report.min_conc > 0.0) {
        return Err(DriverError::AssertionFailed {
            step,
            kind: AssertionKind::Positivity {
                min: report.min_conc,
            },
        });
    }
    if energy_increased(before, report.energy) {
        return Err(DriverError::AssertionFailed {
            step,
            kind: AssertionKind::EnergyIncrease {
                before,
                after: report.energy,
            },
        });
    }
    check_invariants(
        step,
        &field.integrated_invariants(net),
        &field.invariant_scales(net),
        &report.invariants,
    )?;
    Ok((next, report))
}

/// Receives read-only views of the run as it progresses.
pub trait Observer {
    fn report(&mut self, _report: &StepReport) {}
    fn snapshot(&mut self, _time: f64, _field: &SpeciesField) {}
}

/// Keeps every snapshot in memory.
#[derive(Debug, Default)]
pub struct SnapshotRecorder {
    pub snapshots: Vec<(f64, SpeciesField)>,
}

impl Observer for SnapshotRecorder {
    fn snapshot(&mut self, time: f64, field: &SpeciesField) {
        self.snapshots.push((time, field.clone()));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Reports at the configured cadence, starting with step 0.
    pub reports: Vec<StepReport>,
    pub final_field: SpeciesField,
    pub final_time: f64,
}

/// Runs `problem` to `t_end`, checking every driver invariant after each step.
pub fn run(problem: &Problem, observers: &mut [&mut dyn Observer]) -> Result<Trajectory, DriverError> {
    problem.validate()?;
    let net = &problem.network;
    let steps = problem.num_steps();
    let mut field = problem.initial.clone();
    let initial_invariants = field.integrated_invariants(net);
    let scales = field.invariant_scales(net);

    let first = report_for(net, &field, 0, 0.0, 0, 0);
    let mut reports = vec![first.clone()];
    for o in observers.iter_mut() {
        o.report(&first);
    }
    let mut next_snapshot = 0.0;
    let emit_snapshot = |t: f64, f: &SpeciesField, obs: &mut [&mut dyn Observer]| {
        for o in obs.iter_mut() {
            o.snapshot(t, f);
        }
    };
    if let Some(every) = problem.snapshot_every {
        emit_snapshot(0.0, &field, observers);
        next_snapshot = every;
    }

    let mut energy = first.energy;
    for step in 1..=steps {
        let (next, report) = split_step(problem, &field, step)?;
        if energy_increased(energy, report.energy) {
            return Err(DriverError::AssertionFailed {
                step,
                kind: AssertionKind::EnergyIncrease {
                    before: energy,
                    after: report.energy,
                },
            });
        }
        check_invariants(step, &initial_invariants, &scales, &report.invariants)?;
        energy = report.energy;
        field = next;
        let time = report.time;
        if step % problem.report_every == 0 || step == steps {
            for o in observers.iter_mut() {
                o.report(&report);
            }
            reports.push(report);
        }
        if let Some(every) = problem.snapshot_every {
            if time >= next_snapshot - 1e-9 * problem.dt || step == steps {
                emit_snapshot(time, &field, observers);
                while next_snapshot <= time + 1e-9 * problem.dt {
                    next_snapshot += every;
                }
            }
        }
    }
    Ok(Trajectory {
        reports,
        final_field: field,
        final_time: steps as f64 * problem.dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn isomerization(a: f64) -> ReactionNetwork {
        ReactionNetwork::new(
            vec!["X1".into(), "X2".into()],
            vec![vec![1], vec![0]],
            vec![vec![0], vec![1]],
            vec![a],
            vec![1.0],
        )
        .unwrap()
    }

    #[test]
    fn single_cell_energy() {
        let net = ReactionNetwork::new(vec!["A".into()], vec![vec![]], vec![vec![]], vec![], vec![])
            .unwrap();
        let f = SpeciesField::single_cell(&[1.0]).unwrap();
        assert_abs_diff_eq!(discrete_energy(&net, &f).unwrap(), -1.0);
    }

    #[test]
    fn field_rejects_non_positive_values() {
        assert!(SpeciesField::single_cell(&[1.0, -1.0]).is_err());
        let g = Grid::new(2, 1.0, 0.0).unwrap();
        assert!(SpeciesField::new(Domain::Periodic(g), vec![vec![1.0; 3]]).is_err());
    }

    #[test]
    fn problem_validation() {
        let net = isomerization(2.0);
        let init = SpeciesField::single_cell(&[1.0, 1.0]).unwrap();
        let d = vec![DiffusionModel::None; 2];
        assert!(Problem::new(net.clone(), d.clone(), init.clone(), -0.1, 1.0).is_err());
        assert!(Problem::new(net.clone(), d.clone(), init.clone(), 0.1, 0.05).is_err());
        let p = Problem::new(net, d, init, 0.1, 1.0).unwrap();
        assert_eq!(p.num_steps(), 10);
    }

    #[test]
    fn equilibrium_field_is_stationary() {
        let net = isomerization(2.0);
        let g = Grid::new(6, 1.0, 0.0).unwrap();
        let init = SpeciesField::new(Domain::Periodic(g), vec![vec![0.5; 36], vec![1.0; 36]])
            .unwrap();
        let p = Problem::new(
            net,
            vec![DiffusionModel::Constant(0.1); 2],
            init.clone(),
            0.1,
            0.3,
        )
        .unwrap();
        let traj = run(&p, &mut []).unwrap();
        assert_eq!(traj.reports.len(), 4);
        for (a, b) in traj.final_field.species(0).iter().zip(init.species(0)) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn snapshots_follow_cadence() {
        let net = isomerization(2.0);
        let init = SpeciesField::single_cell(&[1.0, 0.1]).unwrap();
        let mut p = Problem::new(net, vec![DiffusionModel::None; 2], init, 0.01, 0.2).unwrap();
        p.snapshot_every = Some(0.05);
        let mut rec = SnapshotRecorder::default();
        run(&p, &mut [&mut rec]).unwrap();
        let times: Vec<f64> = rec.snapshots.iter().map(|s| s.0).collect();
        assert_eq!(times.len(), 5);
        for (t, want) in times.iter().zip([0.0, 0.05, 0.1, 0.15, 0.2]) {
            assert_abs_diff_eq!(*t, want, epsilon = 1e-12);
        }
    }
}
