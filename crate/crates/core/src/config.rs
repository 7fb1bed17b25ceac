//! Plain-text run configuration.
//!
//! ```text
//! # comment
//! [domain]
//! extent = 2
//! nx = 100
//! origin = -1
//! sampling = average            # or point
//!
//! [time]
//! dt = 0.01
//! t_end = 1
//!
//! [species.U]
//! diffusion = constant:0.2        # or powerlaw:<m>:<scale>, or none
//! initial = 1 + tanh(x)
//!
//! [reaction.1]
//! equation = U + 2V -> 3V
//! k_plus = 1
//! k_minus = 0.1
//!
//! [solver]
//! grad_tol = 1e-10
//!
//! [output]
//! dir = out
//! ```
//!
//! Without a `[domain]` section the problem is a single well-mixed cell.
//! Species are ordered as their sections appear.

use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;

use crate::diffusion::{DiffusionModel, DiffusionOptions, Grid, ScalarField};
use crate::expr::Expr;
use crate::network::ReactionNetwork;
use crate::reaction::ReactionSolveOptions;
use crate::splitting::{Domain, Problem, SpeciesField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainConfig {
    pub extent: f64,
    pub nx: usize,
    pub origin: f64,
    pub sampling: Sampling,
}

/// How initial expressions are turned into grid values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Sampling {
    /// Value at the grid point.
    Point,
    /// Mean over the cell around the grid point.
    #[default]
    Average,
}

/// Midpoint-rule points per cell side for [`Sampling::Average`].
pub const AVERAGE_SUBSAMPLES: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesConfig {
    pub name: String,
    pub diffusion: DiffusionModel,
    pub initial: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionConfig {
    pub index: u32,
    pub equation: String,
    pub k_plus: f64,
    pub k_minus: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub report_every: usize,
    pub snapshot_every: Option<f64>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            report_every: 1,
            snapshot_every: Some(0.05),
        }
    }
}

/// Command-line overrides for `dt`, `nx` and `t_end`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub nx: Option<usize>,
    pub tmax: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Preset name, if the config came from one (or sets one).
    pub name: Option<String>,
    pub domain: Option<DomainConfig>,
    pub dt: f64,
    pub t_end: f64,
    pub species: Vec<SpeciesConfig>,
    pub reactions: Vec<ReactionConfig>,
    pub reaction_opts: ReactionSolveOptions,
    pub diffusion_opts: DiffusionOptions,
    pub output: OutputConfig,
}

type DomainDraft = (Option<f64>, Option<usize>, Option<f64>, Sampling);
type ReactionDraft = (u32, Option<String>, Option<f64>, Option<f64>);

#[derive(Default)]
struct Draft {
    name: Option<String>,
    domain: Option<DomainDraft>,
    dt: Option<f64>,
    t_end: Option<f64>,
    species: Vec<(String, Option<DiffusionModel>, Option<Expr>)>,
    reactions: Vec<ReactionDraft>,
    reaction_opts: ReactionSolveOptions,
    diffusion_opts: DiffusionOptions,
    output: OutputConfig,
}

enum Section {
    None,
    Domain,
    Time,
    Species(usize),
    Reaction(usize),
    Solver,
    Output,
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64, ConfigError> {
    v.parse::<f64>().map_err(|_| ConfigError::Parse {
        line,
        message: format!("{key}: expected a number, got '{v}'"),
    })
}

fn parse_usize(line: usize, key: &str, v: &str) -> Result<usize, ConfigError> {
    v.parse::<usize>().map_err(|_| ConfigError::Parse {
        line,
        message: format!("{key}: expected a non-negative integer, got '{v}'"),
    })
}

/// `constant:<D>`, `powerlaw:<m>:<scale>` or `none`.
pub fn parse_diffusion(v: &str) -> Result<DiffusionModel, String> {
    let parts: Vec<&str> = v.split(':').map(str::trim).collect();
    let num = |s: &str| s.parse::<f64>().map_err(|_| format!("bad number '{s}'"));
    match parts.as_slice() {
        ["none"] => Ok(DiffusionModel::None),
        ["constant", d] => Ok(DiffusionModel::Constant(num(d)?)),
        ["powerlaw", m, scale] => Ok(DiffusionModel::PowerLaw {
            m: num(m)?,
            scale: num(scale)?,
        }),
        _ => Err(format!(
            "expected constant:<D>, powerlaw:<m>:<scale> or none, got '{v}'"
        )),
    }
}

pub fn format_diffusion(d: &DiffusionModel) -> String {
    match d {
        DiffusionModel::None => "none".into(),
        DiffusionModel::Constant(v) => format!("constant:{v}"),
        DiffusionModel::PowerLaw { m, scale } => format!("powerlaw:{m}:{scale}"),
    }
}

/// Species and stoichiometric coefficients on one side of an equation.
pub type Side = Vec<(String, u32)>;

/// Parses one side of an equation, e.g. `U + 2V`, into `(species, coefficient)`.
fn parse_side(side: &str) -> Result<Side, String> {
    let mut out: Vec<(String, u32)> = Vec::new();
    for term in side.split('+') {
        let term = term.trim();
        if term.is_empty() {
            return Err(format!("empty term in '{side}'"));
        }
        let split = term
            .find(|c: char| !c.is_ascii_digit())
            .ok_or_else(|| format!("term '{term}' has no species"))?;
        let (coef, name) = term.split_at(split);
        let coef = if coef.is_empty() {
            1
        } else {
            coef.parse::<u32>().map_err(|_| format!("bad coefficient in '{term}'"))?
        };
        let name = name.trim();
        if !valid_name(name) {
            return Err(format!("bad species name '{name}'"));
        }
        if coef == 0 {
            continue;
        }
        match out.iter_mut().find(|(n, _)| n == name) {
            Some(e) => e.1 += coef,
            None => out.push((name.to_string(), coef)),
        }
    }
    Ok(out)
}

/// Parses `reactants -> products` (or `<=>`).
pub fn parse_equation(eq: &str) -> Result<(Side, Side), String> {
    let (lhs, rhs) = eq
        .split_once("<=>")
        .or_else(|| eq.split_once("->"))
        .ok_or_else(|| format!("equation '{eq}' needs '->' or '<=>'"))?;
    Ok((parse_side(lhs)?, parse_side(rhs)?))
}

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut d = Draft::default();
    let mut section = Section::None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let perr = |message: String| ConfigError::Parse { line, message };
        if let Some(inner) = content.strip_prefix('[') {
            let name = inner
                .strip_suffix(']')
                .ok_or_else(|| perr("unterminated section header".into()))?
                .trim();
            section = match name {
                "domain" => {
                    if d.domain.is_some() {
                        return Err(perr("duplicate [domain]".into()));
                    }
                    d.domain = Some((None, None, None, Sampling::default()));
                    Section::Domain
                }
                "time" => Section::Time,
                "solver" => Section::Solver,
                "output" => Section::Output,
                _ => {
                    if let Some(sp) = name.strip_prefix("species.") {
                        if !valid_name(sp) {
                            return Err(perr(format!("bad species name '{sp}'")));
                        }
                        if d.species.iter().any(|s| s.0 == sp) {
                            return Err(perr(format!("duplicate species '{sp}'")));
                        }
                        d.species.push((sp.to_string(), None, None));
                        Section::Species(d.species.len() - 1)
                    } else if let Some(ix) = name.strip_prefix("reaction.") {
                        let ix: u32 = ix
                            .parse()
                            .map_err(|_| perr(format!("bad reaction index '{ix}'")))?;
                        if d.reactions.iter().any(|r| r.0 == ix) {
                            return Err(perr(format!("duplicate reaction {ix}")));
                        }
                        d.reactions.push((ix, None, None, None));
                        Section::Reaction(d.reactions.len() - 1)
                    } else {
                        return Err(perr(format!("unknown section [{name}]")));
                    }
                }
            };
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| perr(format!("expected 'key = value', got '{content}'")))?;
        let unknown = || perr(format!("unknown key '{key}'"));
        match section {
            Section::None => return Err(perr("key outside of any section".into())),
            Section::Domain => {
                let dom = d.domain.as_mut().unwrap();
                match key {
                    "extent" => dom.0 = Some(parse_f64(line, key, value)?),
                    "nx" => dom.1 = Some(parse_usize(line, key, value)?),
                    "origin" => dom.2 = Some(parse_f64(line, key, value)?),
                    "sampling" => {
                        dom.3 = match value {
                            "point" => Sampling::Point,
                            "average" => Sampling::Average,
                            _ => {
                                return Err(perr(format!(
                                    "sampling: expected 'point' or 'average', got '{value}'"
                                )))
                            }
                        }
                    }
                    _ => return Err(unknown()),
                }
            }
            Section::Time => match key {
                "dt" => d.dt = Some(parse_f64(line, key, value)?),
                "t_end" => d.t_end = Some(parse_f64(line, key, value)?),
                _ => return Err(unknown()),
            },
            Section::Species(i) => match key {
                "diffusion" => d.species[i].1 = Some(parse_diffusion(value).map_err(perr)?),
                "initial" => {
                    d.species[i].2 =
                        Some(Expr::parse(value).map_err(|e| perr(format!("initial: {e}")))?)
                }
                _ => return Err(unknown()),
            },
            Section::Reaction(i) => match key {
                "equation" => {
                    parse_equation(value).map_err(perr)?;
                    d.reactions[i].1 = Some(value.to_string());
                }
                "k_plus" => d.reactions[i].2 = Some(parse_f64(line, key, value)?),
                "k_minus" => d.reactions[i].3 = Some(parse_f64(line, key, value)?),
                _ => return Err(unknown()),
            },
            Section::Solver => match key {
                "grad_tol" => d.reaction_opts.grad_tol = parse_f64(line, key, value)?,
                "max_iters" => d.reaction_opts.max_iters = parse_usize(line, key, value)?,
                "backtrack_factor" => {
                    d.reaction_opts.backtrack_factor = parse_f64(line, key, value)?
                }
                "admissibility_margin" => {
                    d.reaction_opts.admissibility_margin = parse_f64(line, key, value)?
                }
                "cg_tol" => d.diffusion_opts.cg_tol = parse_f64(line, key, value)?,
                "cg_max_iters" => {
                    d.diffusion_opts.cg_max_iters = Some(parse_usize(line, key, value)?)
                }
                _ => return Err(unknown()),
            },
            Section::Output => match key {
                "dir" => d.output.dir = Some(PathBuf::from(value)),
                "name" => d.name = Some(value.to_string()),
                "report_every" => d.output.report_every = parse_usize(line, key, value)?,
                "snapshot_every" => {
                    d.output.snapshot_every = if value == "none" {
                        None
                    } else {
                        Some(parse_f64(line, key, value)?)
                    }
                }
                _ => return Err(unknown()),
            },
        }
    }
    finish(d)
}

fn finish(d: Draft) -> Result<RunConfig, ConfigError> {
    let domain = match d.domain {
        None => None,
        Some((extent, nx, origin, sampling)) => Some(DomainConfig {
            extent: extent.ok_or_else(|| invalid("domain.extent", "missing"))?,
            nx: nx.ok_or_else(|| invalid("domain.nx", "missing"))?,
            origin: origin.unwrap_or(0.0),
            sampling,
        }),
    };
    let species = d
        .species
        .into_iter()
        .map(|(name, diffusion, initial)| {
            Ok(SpeciesConfig {
                diffusion: diffusion.unwrap_or(DiffusionModel::None),
                initial: initial
                    .ok_or_else(|| invalid(format!("species.{name}.initial"), "missing"))?,
                name,
            })
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;
    let reactions = d
        .reactions
        .into_iter()
        .map(|(index, eq, kp, km)| {
            let field = |k: &str| format!("reaction.{index}.{k}");
            Ok(ReactionConfig {
                index,
                equation: eq.ok_or_else(|| invalid(field("equation"), "missing"))?,
                k_plus: kp.ok_or_else(|| invalid(field("k_plus"), "missing"))?,
                k_minus: km.ok_or_else(|| invalid(field("k_minus"), "missing"))?,
            })
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;
    let cfg = RunConfig {
        name: d.name,
        domain,
        dt: d.dt.ok_or_else(|| invalid("time.dt", "missing"))?,
        t_end: d.t_end.ok_or_else(|| invalid("time.t_end", "missing"))?,
        species,
        reactions,
        reaction_opts: d.reaction_opts,
        diffusion_opts: d.diffusion_opts,
        output: d.output,
    };
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid("time.dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= self.dt) || !self.t_end.is_finite() {
            return Err(invalid(
                "time.t_end",
                format!("must be at least dt, got {}", self.t_end),
            ));
        }
        if self.species.is_empty() {
            return Err(invalid("species", "at least one species is required"));
        }
        if let Some(dom) = &self.domain {
            Grid::new(dom.nx, dom.extent, dom.origin)
                .map_err(|e| invalid("domain", e.to_string()))?;
        }
        for s in &self.species {
            s.diffusion
                .validate()
                .map_err(|e| invalid(format!("species.{}.diffusion", s.name), e.to_string()))?;
            if self.domain.is_none() && s.initial.is_spatial() {
                return Err(invalid(
                    format!("species.{}.initial", s.name),
                    "depends on x or y but there is no [domain]",
                ));
            }
        }
        for r in &self.reactions {
            let field = |k: &str| format!("reaction.{}.{k}", r.index);
            let (lhs, rhs) = parse_equation(&r.equation).map_err(|e| invalid(field("equation"), e))?;
            for (name, _) in lhs.iter().chain(&rhs) {
                if !self.species.iter().any(|s| &s.name == name) {
                    return Err(invalid(field("equation"), format!("unknown species '{name}'")));
                }
            }
            if !(r.k_plus > 0.0) {
                return Err(invalid(field("k_plus"), "must be positive"));
            }
            if !(r.k_minus > 0.0) {
                return Err(invalid(field("k_minus"), "must be positive"));
            }
        }
        self.reaction_opts
            .validate()
            .map_err(|e| invalid("solver", e))?;
        if !(self.diffusion_opts.cg_tol > 0.0) {
            return Err(invalid("solver.cg_tol", "must be positive"));
        }
        if self.output.report_every == 0 {
            return Err(invalid("output.report_every", "must be at least 1"));
        }
        if let Some(s) = self.output.snapshot_every {
            if !(s > 0.0) {
                return Err(invalid("output.snapshot_every", "must be positive"));
            }
        }
        Ok(())
    }

    /// Applies command-line overrides and re-validates.
    pub fn apply_overrides(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        if let Some(dt) = o.dt {
            self.dt = dt;
        }
        if let Some(t) = o.tmax {
            self.t_end = t;
        }
        if let Some(nx) = o.nx {
            match &mut self.domain {
                Some(d) => d.nx = nx,
                None => return Err(invalid("domain.nx", "single-cell problem has no grid")),
            }
        }
        self.validate()
    }

    pub fn species_names(&self) -> Vec<String> {
        self.species.iter().map(|s| s.name.clone()).collect()
    }

    pub fn network(&self) -> Result<ReactionNetwork, ConfigError> {
        let names = self.species_names();
        let n = names.len();
        let m = self.reactions.len();
        let mut alpha = vec![vec![0u32; m]; n];
        let mut beta = vec![vec![0u32; m]; n];
        for (l, r) in self.reactions.iter().enumerate() {
            let (lhs, rhs) = parse_equation(&r.equation)
                .map_err(|e| invalid(format!("reaction.{}.equation", r.index), e))?;
            for (mat, side) in [(&mut alpha, lhs), (&mut beta, rhs)] {
                for (name, coef) in side {
                    let i = names.iter().position(|s| *s == name).ok_or_else(|| {
                        invalid(
                            format!("reaction.{}.equation", r.index),
                            format!("unknown species '{name}'"),
                        )
                    })?;
                    mat[i][l] += coef;
                }
            }
        }
        ReactionNetwork::new(
            names,
            alpha,
            beta,
            self.reactions.iter().map(|r| r.k_plus).collect(),
            self.reactions.iter().map(|r| r.k_minus).collect(),
        )
        .map_err(|e| invalid("reactions", e.to_string()))
    }

    pub fn grid(&self) -> Option<Grid> {
        self.domain
            .map(|d| Grid::new(d.nx, d.extent, d.origin).expect("validated grid"))
    }

    pub fn initial_field(&self) -> Result<SpeciesField, ConfigError> {
        let field = match self.grid() {
            None => SpeciesField::single_cell(
                &self
                    .species
                    .iter()
                    .map(|s| s.initial.eval(0.0, 0.0))
                    .collect::<Vec<_>>(),
            ),
            Some(g) => {
                let sampling = self.domain.map(|d| d.sampling).unwrap_or_default();
                let values = self
                    .species
                    .iter()
                    .map(|s| {
                        let f = |x, y| s.initial.eval(x, y);
                        match sampling {
                            Sampling::Point => ScalarField::from_fn(g, f).values,
                            Sampling::Average => {
                                ScalarField::cell_average(g, AVERAGE_SUBSAMPLES, f).values
                            }
                        }
                    })
                    .collect();
                SpeciesField::new(Domain::Periodic(g), values)
            }
        };
        field.map_err(|e| invalid("initial", e.to_string()))
    }

    pub fn to_problem(&self) -> Result<Problem, ConfigError> {
        let network = self.network()?;
        let initial = self.initial_field()?;
        let mut p = Problem::new(
            network,
            self.species.iter().map(|s| s.diffusion).collect(),
            initial,
            self.dt,
            self.t_end,
        )
        .map_err(|e| invalid("problem", e.to_string()))?;
        p.reaction = self.reaction_opts.clone();
        p.diffusion_opts = self.diffusion_opts.clone();
        p.report_every = self.output.report_every;
        p.snapshot_every = self.output.snapshot_every;
        Ok(p)
    }

    /// Canonical text form; `parse_config(&cfg.to_text()) == cfg`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(d) = &self.domain {
            let _ = writeln!(
                s,
                "[domain]\nextent = {}\nnx = {}\norigin = {}\nsampling = {}\n",
                d.extent,
                d.nx,
                d.origin,
                match d.sampling {
                    Sampling::Point => "point",
                    Sampling::Average => "average",
                }
            );
        }
        let _ = writeln!(s, "[time]\ndt = {}\nt_end = {}\n", self.dt, self.t_end);
        for sp in &self.species {
            let _ = writeln!(
                s,
                "[species.{}]\ndiffusion = {}\ninitial = {}\n",
                sp.name,
                format_diffusion(&sp.diffusion),
                sp.initial
            );
        }
        for r in &self.reactions {
            let _ = writeln!(
                s,
                "[reaction.{}]\nequation = {}\nk_plus = {}\nk_minus = {}\n",
                r.index, r.equation, r.k_plus, r.k_minus
            );
        }
        let o = &self.reaction_opts;
        let _ = writeln!(
            s,
            "[solver]\ngrad_tol = {}\nmax_iters = {}\nbacktrack_factor = {}\nadmissibility_margin = {}\ncg_tol = {}",
            o.grad_tol, o.max_iters, o.backtrack_factor, o.admissibility_margin, self.diffusion_opts.cg_tol
        );
        if let Some(c) = self.diffusion_opts.cg_max_iters {
            let _ = writeln!(s, "cg_max_iters = {c}");
        }
        let _ = writeln!(s, "\n[output]");
        if let Some(n) = &self.name {
            let _ = writeln!(s, "name = {n}");
        }
        if let Some(dir) = &self.output.dir {
            let _ = writeln!(s, "dir = {}", dir.display());
        }
        let _ = writeln!(s, "report_every = {}", self.output.report_every);
        match self.output.snapshot_every {
            Some(v) => {
                let _ = writeln!(s, "snapshot_every = {v}");
            }
            None => {
                let _ = writeln!(s, "snapshot_every = none");
            }
        }
        s
    }
}
