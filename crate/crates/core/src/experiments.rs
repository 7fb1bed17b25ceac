//! Convergence studies and preset reproduction runs that write CSV output.

use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::csv_io::{self, CsvIoError};
use crate::diagnostics::{
    cauchy_spatial_order, linf_error, linf_on_common_points, temporal_order, DiagnosticsError,
    ErrorTableRow,
};
use crate::presets::PresetError;
use crate::splitting::{run, DriverError, Observer, SpeciesField, StepReport, Trajectory};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Preset(#[from] PresetError),
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Csv(#[from] CsvIoError),
    #[error("{0}")]
    Unsupported(String),
}

impl ExperimentError {
    pub fn is_assertion(&self) -> bool {
        matches!(self, Self::Driver(e) if e.is_assertion())
    }
}

/// Runs `cfg` with snapshots disabled.
pub fn run_quiet(cfg: &RunConfig) -> Result<(Trajectory, f64), ExperimentError> {
    let mut p = cfg.to_problem()?;
    p.snapshot_every = None;
    let start = Instant::now();
    let traj = run(&p, &mut [])?;
    Ok((traj, start.elapsed().as_secs_f64()))
}

/// Exact solution of `X1 <-> X2` with rates `a` and 1.
pub fn linear_ode_exact(a: f64, c0: [f64; 2], t: f64) -> [f64; 2] {
    let total = c0[0] + c0[1];
    let c1_inf = total / (a + 1.0);
    let c1 = (1.0 + (c0[0] / c1_inf - 1.0) * (-(a + 1.0) * t).exp()) * c1_inf;
    [c1, total - c1]
}

/// Max-norm error at `t_end` against the exact solution, one row per `dt`.
pub fn linear_ode_sweep(cfg: &RunConfig, dts: &[f64]) -> Result<Vec<ErrorTableRow>, ExperimentError> {
    let net = cfg.network()?;
    if net.num_species() != 2 || net.num_reactions() != 1 || net.stoich()[0][0] != -1 {
        return Err(ExperimentError::Unsupported(
            "linear sweep needs a single reaction X1 -> X2".into(),
        ));
    }
    let a = net.k_plus()[0] / net.k_minus()[0];
    let init = cfg.initial_field()?.cell(0);
    let mut errors = Vec::new();
    let mut times = Vec::new();
    for &dt in dts {
        let mut c = cfg.clone();
        c.dt = dt;
        let (traj, secs) = run_quiet(&c)?;
        // Time-scale of the exact solution is set by k_minus.
        let exact = linear_ode_exact(a, [init[0], init[1]], traj.final_time * net.k_minus()[0]);
        let got = traj.final_field.cell(0);
        errors.push((got[0] - exact[0]).abs().max((got[1] - exact[1]).abs()));
        times.push(secs);
    }
    let orders = temporal_order(&errors, dts)?;
    Ok(dts
        .iter()
        .enumerate()
        .map(|(k, &dt)| ErrorTableRow {
            dt: Some(dt),
            h: None,
            species: "max".into(),
            linf_error: errors[k],
            order: k.checked_sub(1).map(|j| orders[j]),
            cpu_seconds: times[k],
        })
        .collect())
}

fn rows_for_species(
    names: &[String],
    errors: &[Vec<f64>],
    orders: &[Vec<f64>],
    steps: &[f64],
    times: &[f64],
    temporal: bool,
) -> Vec<ErrorTableRow> {
    let mut rows = Vec::new();
    for (s, name) in names.iter().enumerate() {
        for k in 0..errors[s].len() {
            let order = if temporal {
                k.checked_sub(1).map(|j| orders[s][j])
            } else {
                k.checked_sub(1).and_then(|j| orders[s].get(j).copied())
            };
            rows.push(ErrorTableRow {
                dt: temporal.then_some(steps[k]),
                h: (!temporal).then_some(steps[k]),
                species: name.clone(),
                linf_error: errors[s][k],
                order,
                cpu_seconds: times[k],
            });
        }
    }
    rows
}

/// Errors of each `dt` run against a run with `ref_dt`, all on `cfg`'s grid.
pub fn temporal_convergence(
    cfg: &RunConfig,
    ref_dt: f64,
    dts: &[f64],
) -> Result<Vec<ErrorTableRow>, ExperimentError> {
    if cfg.domain.is_none() {
        return Err(ExperimentError::Unsupported(
            "temporal study needs a spatial domain".into(),
        ));
    }
    let mut reference = cfg.clone();
    reference.dt = ref_dt;
    let (ref_traj, _) = run_quiet(&reference)?;
    let names = cfg.species_names();
    let mut errors = vec![Vec::new(); names.len()];
    let mut times = Vec::new();
    for &dt in dts {
        let mut c = cfg.clone();
        c.dt = dt;
        let (traj, secs) = run_quiet(&c)?;
        for (s, errs) in errors.iter_mut().enumerate() {
            errs.push(linf_error(
                &traj.final_field.scalar_field(s).expect("grid"),
                &ref_traj.final_field.scalar_field(s).expect("grid"),
            )?);
        }
        times.push(secs);
    }
    let orders = errors
        .iter()
        .map(|e| temporal_order(e, dts))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(rows_for_species(&names, &errors, &orders, dts, &times, true))
}

/// Cauchy study: runs on each `nx` with `dt = h^2`; row `k` holds the
/// difference between resolutions `k` and `k + 1` on their common points and
/// the order at resolution `k`.
pub fn spatial_cauchy(cfg: &RunConfig, nxs: &[usize]) -> Result<Vec<ErrorTableRow>, ExperimentError> {
    let dom = cfg.domain.ok_or_else(|| {
        ExperimentError::Unsupported("spatial study needs a spatial domain".into())
    })?;
    let mut finals: Vec<SpeciesField> = Vec::new();
    let mut hs = Vec::new();
    let mut times = Vec::new();
    for &nx in nxs {
        let mut c = cfg.clone();
        let h = dom.extent / nx as f64;
        c.domain = Some(crate::config::DomainConfig { nx, ..dom });
        c.dt = h * h;
        let (traj, secs) = run_quiet(&c)?;
        finals.push(traj.final_field);
        hs.push(h);
        times.push(secs);
    }
    let names = cfg.species_names();
    let mut diffs = vec![Vec::new(); names.len()];
    for (s, d) in diffs.iter_mut().enumerate() {
        for w in finals.windows(2) {
            d.push(linf_on_common_points(
                &w[0].scalar_field(s).expect("grid"),
                &w[1].scalar_field(s).expect("grid"),
            )?);
        }
    }
    let orders = diffs
        .iter()
        .map(|d| cauchy_spatial_order(d, &hs))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(rows_for_species(
        &names,
        &diffs,
        &orders,
        &hs[..hs.len() - 1],
        &times[..times.len() - 1],
        false,
    ))
}

struct CsvOutput {
    dir: PathBuf,
    single_cell: bool,
    snapshots: usize,
    series: Vec<(f64, Vec<f64>)>,
    error: Option<CsvIoError>,
}

impl Observer for CsvOutput {
    fn snapshot(&mut self, time: f64, field: &SpeciesField) {
        if self.single_cell {
            self.series.push((time, field.cell(0)));
            return;
        }
        if self.error.is_some() {
            return;
        }
        let path = self
            .dir
            .join("snapshots")
            .join(format!("snapshot_{:04}.csv", self.snapshots));
        self.snapshots += 1;
        if let Err(e) = csv_io::write_snapshot(&path, field) {
            self.error = Some(e);
        }
    }
}

/// Files written by [`run_to_dir`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub reports: Vec<StepReport>,
    pub final_field: SpeciesField,
    pub snapshot_times: Vec<f64>,
    pub files: Vec<PathBuf>,
}

/// Runs `cfg` and writes `reports.csv`, `snapshots/snapshot_NNNN.csv` (or
/// `series.csv` for a single cell) and `snapshot_times.csv` into `out`.
pub fn run_to_dir(cfg: &RunConfig, out: &Path) -> Result<RunOutput, ExperimentError> {
    let mut p = cfg.to_problem()?;
    let single_cell = cfg.domain.is_none();
    if single_cell {
        p.snapshot_every = Some(p.snapshot_every.unwrap_or(p.dt));
    }
    let mut obs = CsvOutput {
        dir: out.to_path_buf(),
        single_cell,
        snapshots: 0,
        series: Vec::new(),
        error: None,
    };
    let mut times = TimeLog::default();
    let traj = run(&p, &mut [&mut obs, &mut times])?;
    if let Some(e) = obs.error {
        return Err(e.into());
    }
    let mut files = Vec::new();
    let reports = out.join("reports.csv");
    csv_io::write_reports(&reports, &traj.reports)?;
    files.push(reports);
    if single_cell {
        let series = out.join("series.csv");
        csv_io::write_series(&series, &cfg.species_names(), &obs.series)?;
        files.push(series);
    } else if !times.0.is_empty() {
        let path = out.join("snapshot_times.csv");
        let rows: Vec<(f64, Vec<f64>)> = times
            .0
            .iter()
            .enumerate()
            .map(|(k, &t)| (t, vec![k as f64]))
            .collect();
        csv_io::write_series(&path, &["index".to_string()], &rows)?;
        files.push(path);
        files.extend((0..obs.snapshots).map(|k| {
            out.join("snapshots")
                .join(format!("snapshot_{k:04}.csv"))
        }));
    }
    Ok(RunOutput {
        reports: traj.reports,
        final_field: traj.final_field,
        snapshot_times: times.0,
        files,
    })
}

#[derive(Default)]
struct TimeLog(Vec<f64>);

impl Observer for TimeLog {
    fn snapshot(&mut self, time: f64, _field: &SpeciesField) {
        self.0.push(time);
    }
}

/// Time steps of the kinetics sweep, `1/20 .. 1/320`.
pub const LINEAR_ODE_DTS: [f64; 5] = [1.0 / 20.0, 1.0 / 40.0, 1.0 / 80.0, 1.0 / 160.0, 1.0 / 320.0];
/// Time steps of the reaction-diffusion temporal study, `1/25 .. 1/400`.
pub const TEMPORAL_DTS: [f64; 5] = [1.0 / 25.0, 1.0 / 50.0, 1.0 / 100.0, 1.0 / 200.0, 1.0 / 400.0];
pub const TEMPORAL_REF_DT: f64 = 1.0 / 1600.0;
pub const TEMPORAL_REF_NX: usize = 400;
pub const STUDY_T_END: f64 = 0.2;
/// Grid sizes of the Cauchy study on `(-1, 1)^2`: `h = 1/20 .. 1/60`.
pub const CAUCHY_NXS: [usize; 5] = [40, 60, 80, 100, 120];

/// Runs a preset config into `out`; the kinetics preset also writes its
/// error table.
pub fn reproduce(cfg: &RunConfig, out: &Path) -> Result<RunOutput, ExperimentError> {
    let mut output = run_to_dir(cfg, out)?;
    if cfg.name.as_deref() == Some("linear-ode") {
        let rows = linear_ode_sweep(cfg, &LINEAR_ODE_DTS)?;
        let path = out.join("error_table.csv");
        csv_io::write_error_table(&path, &rows)?;
        output.files.push(path);
    }
    Ok(output)
}
