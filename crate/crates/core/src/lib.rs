//! Structure-preserving operator splitting for reaction-diffusion systems
//! with mass-action kinetics and detailed balance.
//!
//! Each time step runs a reaction stage ([`reaction`]) that minimizes a
//! strictly convex function of the reaction trajectories in every cell,
//! followed by a semi-implicit diffusion stage ([`diffusion`]) on a periodic
//! grid. Both stages dissipate the same discrete free energy and preserve
//! positivity; [`splitting`] checks this after every step.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod csv_io;
pub mod diagnostics;
pub mod diffusion;
pub mod experiments;
pub mod expr;
pub mod network;
pub mod presets;
pub mod reaction;
pub mod splitting;

pub use config::{parse_config, RunConfig};
pub use diffusion::{DiffusionModel, DiffusionOptions, Grid, ScalarField};
pub use network::{Concentration, ReactionNetwork};
pub use presets::preset;
pub use reaction::ReactionSolveOptions;
pub use splitting::{Domain, Problem, SpeciesField, StepReport};
