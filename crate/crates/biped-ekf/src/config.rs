//! Experiment configuration files.
//!
//! The format is flat `key = value` text: one assignment per line, `#`
//! starts a comment, blank lines are ignored. Every key has a default, so
//! an empty file is a valid configuration and [`template`] emits a fully
//! documented file of the defaults.
//!
//! Simulation-side and filter-side noise are separate sections on purpose:
//! the densities used to corrupt the data are the truth of the experiment,
//! while the filter's densities are its tuning, and the two only coincide
//! when nobody has retuned anything.

use std::path::PathBuf;

use thiserror::Error;

use crate::experiment::{InitMode, RunConfig};
use crate::filter::FilterConfig;
use crate::gait::{BaseRotation, GaitConfig};
use crate::model::{FilterMode, NoiseConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: FilterMode,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Dataset stem to run on. When absent, commands that need data
    /// generate it from `gait` and `sim_noise` first.
    pub dataset: Option<PathBuf>,
    /// Length of the stationary window used for initialization, seconds.
    pub init_window: f64,
    pub gait: GaitConfig,
    pub sim_noise: NoiseConfig,
    pub filter_noise: NoiseConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: FilterMode::FlatFoot,
            seed: 7,
            out_dir: PathBuf::from("out"),
            dataset: None,
            init_window: 0.8,
            gait: GaitConfig::default(),
            sim_noise: NoiseConfig::default(),
            filter_noise: NoiseConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// The filter-side configuration this experiment runs with.
    pub fn run_config(&self) -> RunConfig {
        let mut cfg = RunConfig::new(self.mode);
        cfg.filter = FilterConfig {
            noise: self.filter_noise.clone(),
            ..FilterConfig::default()
        };
        cfg.init = InitMode::Rest {
            window: self.init_window,
        };
        cfg
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: {key}: {msg}")]
    BadValue {
        line: usize,
        key: String,
        msg: String,
    },
}

fn parse_noise(
    noise: &mut NoiseConfig,
    field: &str,
    value: f64,
) -> Result<(), String> {
    match field {
        "accel_density" => noise.accel_density = value,
        "gyro_density" => noise.gyro_density = value,
        "foot_pos_density" => noise.foot_pos_density = value,
        "foot_rot_density" => noise.foot_rot_density = value,
        "accel_bias_density" => noise.accel_bias_density = value,
        "gyro_bias_density" => noise.gyro_bias_density = value,
        "kin_pos_std" => noise.kin_pos_std = value,
        "kin_rot_std" => noise.kin_rot_std = value,
        other => return Err(format!("no noise field named {other:?}")),
    }
    Ok(())
}

/// Parse a configuration from text. Unset keys keep their defaults.
pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    let mut rot = BaseRotation::default();
    let mut rot_enabled = false;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        let (key, value) = stripped.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            text: stripped.to_string(),
        })?;
        let key = key.trim();
        let value = value.trim();
        let bad = |msg: String| ConfigError::BadValue {
            line,
            key: key.to_string(),
            msg,
        };
        let as_f64 = || value.parse::<f64>().map_err(|e| bad(e.to_string()));
        let as_usize = || value.parse::<usize>().map_err(|e| bad(e.to_string()));
        let as_bool = || match value {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(bad(format!("expected true or false, got {other:?}"))),
        };

        match key {
            "mode" => {
                cfg.mode = match value {
                    "point" => FilterMode::PointFoot,
                    "flat" => FilterMode::FlatFoot,
                    other => return Err(bad(format!("expected point or flat, got {other:?}"))),
                }
            }
            "seed" => cfg.seed = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            "out_dir" => cfg.out_dir = PathBuf::from(value),
            "dataset" => cfg.dataset = Some(PathBuf::from(value)),
            "init_window" => cfg.init_window = as_f64()?,
            "gait.step_length" => cfg.gait.step_length = as_f64()?,
            "gait.step_duration" => cfg.gait.step_duration = as_f64()?,
            "gait.double_support_fraction" => cfg.gait.double_support_fraction = as_f64()?,
            "gait.body_height" => cfg.gait.body_height = as_f64()?,
            "gait.lateral_sway_amplitude" => cfg.gait.lateral_sway_amplitude = as_f64()?,
            "gait.step_height" => cfg.gait.step_height = as_f64()?,
            "gait.stance_width" => cfg.gait.stance_width = as_f64()?,
            "gait.lead_in" => cfg.gait.lead_in = as_f64()?,
            "gait.lead_out" => cfg.gait.lead_out = as_f64()?,
            "gait.n_steps" => cfg.gait.n_steps = as_usize()?,
            "gait.n_feet" => cfg.gait.n_feet = as_usize()?,
            "gait.dt" => cfg.gait.dt = as_f64()?,
            "gait.rotation.enable" => rot_enabled = as_bool()?,
            "gait.rotation.roll_amplitude" => rot.roll_amplitude = as_f64()?,
            "gait.rotation.pitch_amplitude" => rot.pitch_amplitude = as_f64()?,
            "gait.rotation.yaw_amplitude" => rot.yaw_amplitude = as_f64()?,
            "gait.rotation.frequency" => rot.frequency = as_f64()?,
            "gait.rotation.ramp" => rot.ramp = as_f64()?,
            _ => {
                if let Some(field) = key.strip_prefix("sim_noise.") {
                    parse_noise(&mut cfg.sim_noise, field, as_f64()?).map_err(bad)?;
                } else if let Some(field) = key.strip_prefix("filter_noise.") {
                    parse_noise(&mut cfg.filter_noise, field, as_f64()?).map_err(bad)?;
                } else {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_string(),
                    });
                }
            }
        }
    }

    cfg.gait.base_rotation = rot_enabled.then_some(rot);
    Ok(cfg)
}

/// Load a configuration file.
pub fn load(path: &std::path::Path) -> Result<ExperimentConfig, Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse(&text)?)
}

/// A fully documented configuration file holding the defaults.
pub fn template() -> String {
    let c = ExperimentConfig::default();
    let g = &c.gait;
    let n = &c.sim_noise;
    let r = BaseRotation::default();
    format!(
        "\
# Experiment configuration. One `key = value` per line, `#` comments.
# Every key is optional; this file lists the defaults.

# Filter variant: point (position-only foot states) or flat (adds foot
# orientation states and rotational kinematic measurements).
mode = flat

# Seed for the sensor noise stream.
seed = {seed}

# Output directory for datasets, traces and reports.
out_dir = {out_dir}

# Dataset stem to run on (expects <stem>.csv and <stem>.meta.json).
# When unset, commands generate data from the gait section below.
#dataset = out/walk

# Stationary window used for initialization, seconds.
init_window = {init_window}

# Walking script.
gait.step_length = {step_length}
gait.step_duration = {step_duration}
gait.double_support_fraction = {dsf}
gait.body_height = {body_height}
gait.lateral_sway_amplitude = {sway}
gait.step_height = {step_height}
gait.stance_width = {stance_width}
gait.lead_in = {lead_in}
gait.lead_out = {lead_out}
gait.n_steps = {n_steps}
gait.n_feet = {n_feet}
gait.dt = {dt}

# Optional base rotation program layered on the gait (sinusoidal Euler
# angles with detuned frequencies). Used for bias-observability studies.
gait.rotation.enable = false
gait.rotation.roll_amplitude = {rra}
gait.rotation.pitch_amplitude = {rpa}
gait.rotation.yaw_amplitude = {rya}
gait.rotation.frequency = {rf}
gait.rotation.ramp = {rramp}

# Noise injected into the simulated sensors. Densities are per root hertz;
# kin_*_std are per-sample standard deviations.
sim_noise.accel_density = {ad}
sim_noise.gyro_density = {gd}
sim_noise.foot_pos_density = {fpd}
sim_noise.foot_rot_density = {frd}
sim_noise.accel_bias_density = {abd}
sim_noise.gyro_bias_density = {gbd}
sim_noise.kin_pos_std = {kps}
sim_noise.kin_rot_std = {krs}

# Noise the filter assumes. Defaults to the simulation values; tune
# independently when studying mismatch.
filter_noise.accel_density = {ad}
filter_noise.gyro_density = {gd}
filter_noise.foot_pos_density = {fpd}
filter_noise.foot_rot_density = {frd}
filter_noise.accel_bias_density = {abd}
filter_noise.gyro_bias_density = {gbd}
filter_noise.kin_pos_std = {kps}
filter_noise.kin_rot_std = {krs}
",
        seed = c.seed,
        out_dir = c.out_dir.display(),
        init_window = c.init_window,
        step_length = g.step_length,
        step_duration = g.step_duration,
        dsf = g.double_support_fraction,
        body_height = g.body_height,
        sway = g.lateral_sway_amplitude,
        step_height = g.step_height,
        stance_width = g.stance_width,
        lead_in = g.lead_in,
        lead_out = g.lead_out,
        n_steps = g.n_steps,
        n_feet = g.n_feet,
        dt = g.dt,
        rra = r.roll_amplitude,
        rpa = r.pitch_amplitude,
        rya = r.yaw_amplitude,
        rf = r.frequency,
        rramp = r.ramp,
        ad = n.accel_density,
        gd = n.gyro_density,
        fpd = n.foot_pos_density,
        frd = n.foot_rot_density,
        abd = n.accel_bias_density,
        gbd = n.gyro_bias_density,
        kps = n.kin_pos_std,
        krs = n.kin_rot_std,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_parses_back_to_the_defaults() {
        let cfg = parse(&template()).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn empty_text_is_the_default_config() {
        assert_eq!(parse("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn overrides_comments_and_spacing_are_honored() {
        let text = "
# a comment
mode = point
seed=42
gait.n_steps = 3   # trailing comment
gait.rotation.enable = true
gait.rotation.yaw_amplitude = 0.5
filter_noise.kin_pos_std = 0.02
";
        let cfg = parse(text).unwrap();
        assert_eq!(cfg.mode, FilterMode::PointFoot);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.gait.n_steps, 3);
        let rot = cfg.gait.base_rotation.expect("rotation enabled");
        assert_eq!(rot.yaw_amplitude, 0.5);
        assert_eq!(rot.roll_amplitude, BaseRotation::default().roll_amplitude);
        assert_eq!(cfg.filter_noise.kin_pos_std, 0.02);
        assert_eq!(cfg.sim_noise.kin_pos_std, 0.01);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_reported_with_lines() {
        match parse("gait.step_lenght = 0.3") {
            Err(ConfigError::UnknownKey { line: 1, key }) => {
                assert_eq!(key, "gait.step_lenght");
            }
            other => panic!("expected UnknownKey, got {other:?}"),
        }
        match parse("\nseed = banana") {
            Err(ConfigError::BadValue { line: 2, .. }) => {}
            other => panic!("expected BadValue, got {other:?}"),
        }
        match parse("just some words") {
            Err(ConfigError::Syntax { line: 1, .. }) => {}
            other => panic!("expected Syntax, got {other:?}"),
        }
    }
}
