//! Built-in experiment configurations.

use thiserror::Error;

use crate::config::{parse_config, ConfigError, RunConfig};

pub const PRESET_NAMES: [&str; 4] = ["linear-ode", "michaelis-menten", "autocatalytic", "pme-coupled"];

#[derive(Debug, Error)]
pub enum PresetError {
    #[error("unknown preset '{0}' (expected one of linear-ode, michaelis-menten, autocatalytic, pme-coupled)")]
    UnknownPreset(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Linear pair `X1 <-> X2` with `k_plus = a = 2`, `k_minus = 1`.
const LINEAR_ODE: &str = "
[time]
dt = 0.05
t_end = 1

[species.X1]
initial = 1
[species.X2]
initial = 0.1

[reaction.1]
equation = X1 -> X2
k_plus = 2
k_minus = 1

[output]
name = linear-ode
snapshot_every = none
";

const MICHAELIS_MENTEN: &str = "
[time]
dt = 0.02
t_end = 20

[species.E]
initial = 0.8
[species.S]
initial = 1
[species.ES]
initial = 0.01
[species.EP]
initial = 0.01
[species.P]
initial = 0.01

[reaction.1]
equation = E + S -> ES
k_plus = 1
k_minus = 0.5

[reaction.2]
equation = ES -> EP
k_plus = 100
k_minus = 1

[reaction.3]
equation = EP -> E + P
k_plus = 100
k_minus = 1

[output]
name = michaelis-menten
snapshot_every = none
";

const AUTOCATALYTIC: &str = "
[domain]
extent = 2
nx = 100
origin = -1

[time]
dt = 0.01
t_end = 1

[species.U]
diffusion = constant:0.2
initial = (-tanh((sqrt(x*x + y*y) - 0.4) / 0.01) + 1) / 2 + 1
[species.V]
diffusion = constant:0.1
initial = (tanh((sqrt(x*x + y*y) - 0.4) / 0.01) + 1) / 2 + 1

[reaction.1]
equation = U + 2V -> 3V
k_plus = 1
k_minus = 0.1

[output]
name = autocatalytic
snapshot_every = 0.05
";

const PME_COUPLED: &str = "
[domain]
extent = 2
nx = 100
origin = -1

[time]
dt = 0.01
t_end = 1

[species.A]
diffusion = powerlaw:4:1
initial = indicator(-0.2, 0.2, -0.2, 0.2, 1, 0.01)
[species.B]
diffusion = constant:0.01
initial = (1 - tanh((sqrt((x - 0.4)*(x - 0.4) + (y - 0.4)*(y - 0.4)) - 0.1) / 0.1)) / 2 + 0.005

[reaction.1]
equation = A -> B
k_plus = 2
k_minus = 1

[output]
name = pme-coupled
snapshot_every = 0.05
";

pub fn preset_text(name: &str) -> Result<&'static str, PresetError> {
    Ok(match name {
        "linear-ode" => LINEAR_ODE,
        "michaelis-menten" => MICHAELIS_MENTEN,
        "autocatalytic" => AUTOCATALYTIC,
        "pme-coupled" => PME_COUPLED,
        _ => return Err(PresetError::UnknownPreset(name.to_string())),
    })
}

pub fn preset(name: &str) -> Result<RunConfig, PresetError> {
    Ok(parse_config(preset_text(name)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_build_problems() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            assert_eq!(cfg.name.as_deref(), Some(name));
            let p = cfg.to_problem().unwrap();
            assert!(p.initial.min() > 0.0, "{name}");
            assert_eq!(parse_config(&cfg.to_text()).unwrap(), cfg);
        }
        assert!(matches!(preset("brusselator"), Err(PresetError::UnknownPreset(_))));
    }

    #[test]
    fn michaelis_menten_invariants() {
        let p = preset("michaelis-menten").unwrap().to_problem().unwrap();
        assert_eq!(p.num_steps(), 1000);
        let c = p.initial.cell(0);
        approx::assert_abs_diff_eq!(c[0] + c[2] + c[3], 0.82, epsilon = 1e-15);
        approx::assert_abs_diff_eq!(c[1] + c[2] + c[3] + c[4], 1.03, epsilon = 1e-15);
    }
}
