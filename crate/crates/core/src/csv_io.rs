//! CSV files for step reports, field snapshots, time series and error tables.
//!
//! Floats are written as `{:.16e}`, which round-trips every `f64` exactly.

use std::fs::File;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::diagnostics::ErrorTableRow;
use crate::splitting::{Domain, SpeciesField, StepReport};

#[derive(Debug, Error)]
pub enum CsvIoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

struct Ctx<'a>(&'a Path);

impl Ctx<'_> {
    fn csv(&self, source: csv::Error) -> CsvIoError {
        CsvIoError::Csv {
            path: self.0.to_path_buf(),
            source,
        }
    }

    fn format(&self, msg: impl Into<String>) -> CsvIoError {
        CsvIoError::Format {
            path: self.0.to_path_buf(),
            msg: msg.into(),
        }
    }

    fn writer(&self) -> Result<csv::Writer<File>, CsvIoError> {
        if let Some(dir) = self.0.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|source| CsvIoError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
        csv::Writer::from_path(self.0).map_err(|e| self.csv(e))
    }

    fn reader(&self) -> Result<csv::Reader<File>, CsvIoError> {
        let file = File::open(self.0).map_err(|source| CsvIoError::Io {
            path: self.0.to_path_buf(),
            source,
        })?;
        Ok(csv::Reader::from_reader(file))
    }

    fn f64(&self, s: &str) -> Result<f64, CsvIoError> {
        s.trim()
            .parse()
            .map_err(|_| self.format(format!("bad number '{s}'")))
    }

    fn opt_f64(&self, s: &str) -> Result<Option<f64>, CsvIoError> {
        if s.trim().is_empty() {
            Ok(None)
        } else {
            self.f64(s).map(Some)
        }
    }

    fn usize(&self, s: &str) -> Result<usize, CsvIoError> {
        s.trim()
            .parse()
            .map_err(|_| self.format(format!("bad integer '{s}'")))
    }

    fn finish(&self, mut w: csv::Writer<File>) -> Result<(), CsvIoError> {
        w.flush().map_err(|source| CsvIoError::Io {
            path: self.0.to_path_buf(),
            source,
        })
    }
}

/// `step,time,energy,min_conc,reaction_iters,cg_iters,inv_1..inv_K`
pub fn write_reports(path: &Path, reports: &[StepReport]) -> Result<(), CsvIoError> {
    let ctx = Ctx(path);
    let mut w = ctx.writer()?;
    let k = reports.first().map_or(0, |r| r.invariants.len());
    let mut header: Vec<String> = ["step", "time", "energy", "min_conc", "reaction_iters", "cg_iters"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=k).map(|i| format!("inv_{i}")));
    w.write_record(&header).map_err(|e| ctx.csv(e))?;
    for r in reports {
        if r.invariants.len() != k {
            return Err(ctx.format("reports disagree on the number of invariants"));
        }
        let mut rec = vec![
            r.step.to_string(),
            fmt(r.time),
            fmt(r.energy),
            fmt(r.min_conc),
            r.reaction_iters.to_string(),
            r.cg_iters.to_string(),
        ];
        rec.extend(r.invariants.iter().map(|&v| fmt(v)));
        w.write_record(&rec).map_err(|e| ctx.csv(e))?;
    }
    ctx.finish(w)
}

pub fn read_reports(path: &Path) -> Result<Vec<StepReport>, CsvIoError> {
    let ctx = Ctx(path);
    let mut r = ctx.reader()?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| ctx.csv(e))?;
        if rec.len() < 6 {
            return Err(ctx.format("report row has fewer than 6 columns"));
        }
        out.push(StepReport {
            step: ctx.usize(&rec[0])?,
            time: ctx.f64(&rec[1])?,
            energy: ctx.f64(&rec[2])?,
            min_conc: ctx.f64(&rec[3])?,
            reaction_iters: ctx.usize(&rec[4])?,
            cg_iters: ctx.usize(&rec[5])?,
            invariants: rec.iter().skip(6).map(|s| ctx.f64(s)).collect::<Result<_, _>>()?,
        });
    }
    Ok(out)
}

/// `i,j,x,y,c_1..c_N`; a single cell is written as `0,0,0,0,...`.
pub fn write_snapshot(path: &Path, field: &SpeciesField) -> Result<(), CsvIoError> {
    let ctx = Ctx(path);
    let mut w = ctx.writer()?;
    let n = field.num_species();
    let mut header: Vec<String> = ["i", "j", "x", "y"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=n).map(|i| format!("c_{i}")));
    w.write_record(&header).map_err(|e| ctx.csv(e))?;
    for k in 0..field.num_cells() {
        let (i, j, x, y) = match field.domain() {
            Domain::SingleCell => (0, 0, 0.0, 0.0),
            Domain::Periodic(g) => {
                let (x, y) = g.point(k);
                (k % g.nx, k / g.nx, x, y)
            }
        };
        let mut rec = vec![i.to_string(), j.to_string(), fmt(x), fmt(y)];
        rec.extend((0..n).map(|s| fmt(field.species(s)[k])));
        w.write_record(&rec).map_err(|e| ctx.csv(e))?;
    }
    ctx.finish(w)
}

/// Reads a snapshot back onto `domain`; every cell must appear exactly once.
pub fn read_snapshot(path: &Path, domain: Domain) -> Result<SpeciesField, CsvIoError> {
    let ctx = Ctx(path);
    let mut r = ctx.reader()?;
    let n = r.headers().map_err(|e| ctx.csv(e))?.len().saturating_sub(4);
    if n == 0 {
        return Err(ctx.format("snapshot has no species columns"));
    }
    let cells = domain.num_cells();
    let mut values = vec![vec![f64::NAN; cells]; n];
    let mut seen = vec![false; cells];
    for rec in r.records() {
        let rec = rec.map_err(|e| ctx.csv(e))?;
        let (i, j) = (ctx.usize(&rec[0])?, ctx.usize(&rec[1])?);
        let k = match domain {
            Domain::SingleCell if i == 0 && j == 0 => 0,
            Domain::Periodic(g) if i < g.nx && j < g.nx => g.index(i, j),
            _ => return Err(ctx.format(format!("cell ({i}, {j}) is outside the domain"))),
        };
        if std::mem::replace(&mut seen[k], true) {
            return Err(ctx.format(format!("cell ({i}, {j}) appears twice")));
        }
        for (s, vals) in values.iter_mut().enumerate() {
            vals[k] = ctx.f64(&rec[4 + s])?;
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(ctx.format("snapshot does not cover every cell"));
    }
    SpeciesField::new(domain, values).map_err(|e| ctx.format(e.to_string()))
}

/// `time,<name_1>..<name_N>` for single-cell runs.
pub fn write_series(
    path: &Path,
    names: &[String],
    series: &[(f64, Vec<f64>)],
) -> Result<(), CsvIoError> {
    let ctx = Ctx(path);
    let mut w = ctx.writer()?;
    let mut header = vec!["time".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(|e| ctx.csv(e))?;
    for (t, c) in series {
        let mut rec = vec![fmt(*t)];
        rec.extend(c.iter().map(|&v| fmt(v)));
        w.write_record(&rec).map_err(|e| ctx.csv(e))?;
    }
    ctx.finish(w)
}

/// `dt,h,species,linf_error,order,cpu_seconds`; absent values are empty cells.
pub fn write_error_table(path: &Path, rows: &[ErrorTableRow]) -> Result<(), CsvIoError> {
    let ctx = Ctx(path);
    let mut w = ctx.writer()?;
    w.write_record(["dt", "h", "species", "linf_error", "order", "cpu_seconds"])
        .map_err(|e| ctx.csv(e))?;
    for r in rows {
        w.write_record([
            fmt_opt(r.dt),
            fmt_opt(r.h),
            r.species.clone(),
            fmt(r.linf_error),
            fmt_opt(r.order),
            fmt(r.cpu_seconds),
        ])
        .map_err(|e| ctx.csv(e))?;
    }
    ctx.finish(w)
}

pub fn read_error_table(path: &Path) -> Result<Vec<ErrorTableRow>, CsvIoError> {
    let ctx = Ctx(path);
    let mut r = ctx.reader()?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| ctx.csv(e))?;
        if rec.len() != 6 {
            return Err(ctx.format("error-table row must have 6 columns"));
        }
        out.push(ErrorTableRow {
            dt: ctx.opt_f64(&rec[0])?,
            h: ctx.opt_f64(&rec[1])?,
            species: rec[2].to_string(),
            linf_error: ctx.f64(&rec[3])?,
            order: ctx.opt_f64(&rec[4])?,
            cpu_seconds: ctx.f64(&rec[5])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::Grid;

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.csv");
        let g = Grid::new(5, 2.0, -1.0).unwrap();
        let fns: [&dyn Fn(f64, f64) -> f64; 2] = [
            &|x, y| 1.0 + 0.3 * (x * 7.0).sin() * y,
            &|x, _| 0.1 + x * x,
        ];
        let field = SpeciesField::from_fns(g, &fns).unwrap();
        write_snapshot(&path, &field).unwrap();
        assert_eq!(read_snapshot(&path, *field.domain()).unwrap(), field);

        let single = SpeciesField::single_cell(&[0.8, 1.0 / 3.0]).unwrap();
        write_snapshot(&path, &single).unwrap();
        assert_eq!(read_snapshot(&path, Domain::SingleCell).unwrap(), single);
        assert!(read_snapshot(&path, Domain::Periodic(g)).is_err());
    }

    #[test]
    fn error_table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/table.csv");
        let rows = vec![
            ErrorTableRow {
                dt: Some(0.04),
                h: None,
                species: "U".into(),
                linf_error: 0.1117,
                order: None,
                cpu_seconds: 5.9,
            },
            ErrorTableRow {
                dt: Some(0.02),
                h: Some(1.0 / 60.0),
                species: "V".into(),
                linf_error: 1.0 / 3.0,
                order: Some(0.8858),
                cpu_seconds: 0.0,
            },
        ];
        write_error_table(&path, &rows).unwrap();
        assert_eq!(read_error_table(&path).unwrap(), rows);
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = read_reports(Path::new("/nonexistent/reports.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/reports.csv"));
    }
}
