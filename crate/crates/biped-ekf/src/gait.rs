//! Scripted walking kinematics.
//!
//! The generator produces ground-truth base and feet trajectories for a
//! flat-ground walk: stand for a lead-in, take `n_steps` alternating steps,
//! stand again. Every quantity the sensors need (velocity, acceleration,
//! body-frame angular velocity) is evaluated in closed form from the same
//! polynomials that define the positions, so truth derivatives are exact
//! rather than numerically differenced. Feet in stance are held by copying
//! the stored position, which makes them constant to the last bit.
//!
//! This is kinematic scripting, not a dynamics simulation: the estimator
//! only ever sees inertial and kinematic signals, so contact forces and
//! balance control add nothing here.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::so3::UnitQuat;

/// Fastest base or swing-foot speed the generator will accept, in m/s.
const SPEED_LIMIT: f64 = 10.0;

/// Optional base rotation layered on top of the translation script.
///
/// Each Euler angle follows its own sinusoid; the three frequencies are
/// deliberately detuned from one another so a generic configuration never
/// keeps the angular velocity aligned with a fixed axis. Amplitudes of zero
/// switch individual axes off, which is how a pure yaw wobble is specified.
/// The program ramps in smoothly after the lead-in so the initialization
/// window stays genuinely stationary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseRotation {
    pub roll_amplitude: f64,
    pub pitch_amplitude: f64,
    pub yaw_amplitude: f64,
    /// Base frequency in Hz; roll runs at this rate, pitch and yaw at
    /// detuned multiples of it.
    pub frequency: f64,
    /// Ramp-in duration in seconds, measured from the end of the lead-in.
    pub ramp: f64,
}

impl Default for BaseRotation {
    fn default() -> Self {
        Self {
            roll_amplitude: 0.1,
            pitch_amplitude: 0.1,
            yaw_amplitude: 0.2,
            frequency: 0.5,
            ramp: 1.0,
        }
    }
}

/// Walking gait parameters. All durations in seconds, lengths in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitConfig {
    /// Distance between successive footfalls of opposite feet.
    pub step_length: f64,
    /// Duration of one step cycle (one double support plus one swing).
    pub step_duration: f64,
    /// Share of the step cycle spent with both feet planted, in (0, 1).
    pub double_support_fraction: f64,
    pub body_height: f64,
    /// Peak lateral lean toward the stance foot during each step.
    pub lateral_sway_amplitude: f64,
    /// Peak swing-foot clearance above the ground.
    pub step_height: f64,
    /// Lateral distance from the body centerline to each foot.
    pub stance_width: f64,
    /// Standing time before the first step; the filter initializes here.
    pub lead_in: f64,
    /// Standing time after the last step.
    pub lead_out: f64,
    pub n_steps: usize,
    /// Feet on the robot. Walking needs two; a stationary script also
    /// accepts one.
    pub n_feet: usize,
    pub dt: f64,
    pub base_rotation: Option<BaseRotation>,
}

impl Default for GaitConfig {
    fn default() -> Self {
        Self {
            step_length: 0.3,
            step_duration: 0.8,
            double_support_fraction: 0.25,
            body_height: 0.8,
            lateral_sway_amplitude: 0.04,
            step_height: 0.05,
            stance_width: 0.1,
            lead_in: 1.0,
            lead_out: 1.0,
            n_steps: 8,
            n_feet: 2,
            dt: 1e-3,
            base_rotation: None,
        }
    }
}

/// One foot of a truth sample.
#[derive(Debug, Clone, Copy)]
pub struct FootTruth {
    pub p: Vector3<f64>,
    pub z: UnitQuat,
    pub contact: bool,
}

/// Ground truth at one timestep. `v` and `a` are the exact derivatives of
/// `r`; `omega` is the body-frame angular velocity consistent with `q`.
#[derive(Debug, Clone)]
pub struct TruthSample {
    pub t: f64,
    pub r: Vector3<f64>,
    pub v: Vector3<f64>,
    pub a: Vector3<f64>,
    pub q: UnitQuat,
    pub omega: Vector3<f64>,
    pub feet: Vec<FootTruth>,
}

#[derive(Debug, Error)]
pub enum GaitError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("double_support_fraction must lie in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("walking requires exactly 2 feet, got {0}")]
    BadFeet(usize),
    #[error("{name} = {value} is not a whole number of dt = {dt} steps")]
    NotMultipleOfDt {
        name: &'static str,
        value: f64,
        dt: f64,
    },
    #[error("infeasible gait: peak {what} speed {speed:.2} m/s exceeds {SPEED_LIMIT}")]
    TooFast { what: &'static str, speed: f64 },
}

/// Quintic smoothstep: 0 to 1 with zero velocity and acceleration at both
/// ends, which is what keeps the concatenated segments C².
fn smoothstep(s: f64) -> f64 {
    s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
}

fn smoothstep_d1(s: f64) -> f64 {
    30.0 * s * s * (1.0 + s * (-2.0 + s))
}

fn smoothstep_d2(s: f64) -> f64 {
    60.0 * s * (1.0 + s * (-3.0 + 2.0 * s))
}

/// Smooth bump with triple roots at both ends: 64 s^3 (1-s)^3, peaking at
/// 1 for s = 1/2. Used for swing-foot clearance and lateral sway, both of
/// which must return to zero with vanishing velocity and acceleration.
fn bump(s: f64) -> f64 {
    64.0 * (s * (1.0 - s)).powi(3)
}

fn bump_d1(s: f64) -> f64 {
    192.0 * (s * (1.0 - s)).powi(2) * (1.0 - 2.0 * s)
}

fn bump_d2(s: f64) -> f64 {
    // d2/ds2 of 64 (s^3 - 3 s^4 + 3 s^5 - s^6).
    64.0 * s * (6.0 + s * (-36.0 + s * (60.0 - 30.0 * s)))
}

fn steps_of(name: &'static str, value: f64, dt: f64) -> Result<usize, GaitError> {
    let n = value / dt;
    let rounded = n.round();
    if (n - rounded).abs() > 1e-6 * n.abs().max(1.0) {
        return Err(GaitError::NotMultipleOfDt { name, value, dt });
    }
    Ok(rounded as usize)
}

/// Value and first two derivatives of one scalar channel.
#[derive(Clone, Copy, Default)]
struct Channel {
    x: f64,
    v: f64,
    a: f64,
}

impl GaitConfig {
    fn validate(&self) -> Result<(), GaitError> {
        for (name, value) in [
            ("step_length", self.step_length),
            ("step_duration", self.step_duration),
            ("body_height", self.body_height),
            ("dt", self.dt),
        ] {
            if value <= 0.0 {
                return Err(GaitError::NonPositive { name, value });
            }
        }
        for (name, value) in [
            ("lateral_sway_amplitude", self.lateral_sway_amplitude),
            ("step_height", self.step_height),
            ("stance_width", self.stance_width),
            ("lead_in", self.lead_in),
            ("lead_out", self.lead_out),
        ] {
            if value < 0.0 {
                return Err(GaitError::NonPositive { name, value });
            }
        }
        let beta = self.double_support_fraction;
        if !(beta > 0.0 && beta < 1.0) {
            return Err(GaitError::BadFraction(beta));
        }
        if self.n_steps > 0 && self.n_feet != 2 {
            return Err(GaitError::BadFeet(self.n_feet));
        }
        if self.n_feet == 0 || self.n_feet > 2 {
            return Err(GaitError::BadFeet(self.n_feet));
        }

        // Peak speeds under the quintic profile: max |S'| = 15/8 at
        // midpoint. The body covers at most one step length per cycle, the
        // swing foot up to two per swing phase.
        let peak_body = 1.875 * self.step_length / self.step_duration;
        let swing_time = (1.0 - beta) * self.step_duration;
        let peak_swing = 1.875 * 2.0 * self.step_length / swing_time;
        if self.n_steps > 0 && peak_body > SPEED_LIMIT {
            return Err(GaitError::TooFast {
                what: "base",
                speed: peak_body,
            });
        }
        if self.n_steps > 0 && peak_swing > SPEED_LIMIT {
            return Err(GaitError::TooFast {
                what: "swing foot",
                speed: peak_swing,
            });
        }
        Ok(())
    }

    /// Total duration in seconds.
    pub fn duration(&self) -> f64 {
        self.lead_in + self.n_steps as f64 * self.step_duration + self.lead_out
    }
}

/// Evaluate the base rotation program at time `t` (seconds from dataset
/// start): orientation quaternion plus body-frame angular velocity.
fn rotation_at(rot: &BaseRotation, lead_in: f64, t: f64) -> (UnitQuat, Vector3<f64>) {
    let tr = t - lead_in;
    if tr <= 0.0 {
        return (UnitQuat::identity(), Vector3::zeros());
    }
    // Smooth amplitude ramp so the angular rate starts from zero.
    let (env, env_d) = if rot.ramp > 0.0 && tr < rot.ramp {
        let s = tr / rot.ramp;
        (smoothstep(s), smoothstep_d1(s) / rot.ramp)
    } else {
        (1.0, 0.0)
    };

    let two_pi = std::f64::consts::TAU;
    // Detuned rates keep the rotation axis wandering.
    let wr = two_pi * rot.frequency;
    let wp = two_pi * rot.frequency * 1.31;
    let wy = two_pi * rot.frequency * 0.73;

    let angle = |amp: f64, w: f64, phase: f64| -> (f64, f64) {
        let s = (w * tr + phase).sin();
        let c = (w * tr + phase).cos();
        (amp * env * s, amp * (env_d * s + env * w * c))
    };
    let (roll, roll_d) = angle(rot.roll_amplitude, wr, 0.0);
    let (pitch, pitch_d) = angle(rot.pitch_amplitude, wp, 0.4);
    let (yaw, yaw_d) = angle(rot.yaw_amplitude, wy, 1.1);

    let q = UnitQuat::from_euler_zyx(roll, pitch, yaw);
    // Body rates from aerospace-sequence Euler rates.
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let omega = Vector3::new(
        roll_d - yaw_d * sp,
        pitch_d * cr + yaw_d * cp * sr,
        -pitch_d * sr + yaw_d * cp * cr,
    );
    (q, omega)
}

/// Generate the ground-truth trajectory for `cfg`.
///
/// Samples run from t = 0 to the full duration inclusive, spaced `dt`
/// apart. The robot starts standing at r = (0, 0, body_height) with the
/// feet under the hips, walks `n_steps` alternating steps of `step_length`
/// (the first and last are half-length in body travel so the gait starts
/// and ends with the feet side by side), and stands again.
pub fn generate_truth(cfg: &GaitConfig) -> Result<Vec<TruthSample>, GaitError> {
    cfg.validate()?;
    let dt = cfg.dt;
    let n_in = steps_of("lead_in", cfg.lead_in, dt)?;
    let n_out = steps_of("lead_out", cfg.lead_out, dt)?;
    let n_ds = steps_of(
        "double support phase",
        cfg.double_support_fraction * cfg.step_duration,
        dt,
    )?;
    let n_cycle = steps_of("step_duration", cfg.step_duration, dt)?;
    let n_ss = n_cycle - n_ds;
    if n_ss == 0 || (cfg.n_steps > 0 && n_ds == 0) {
        return Err(GaitError::NotMultipleOfDt {
            name: "support phase",
            value: cfg.double_support_fraction * cfg.step_duration,
            dt,
        });
    }

    let total = n_in + cfg.n_steps * n_cycle + n_out;
    let mut out = Vec::with_capacity(total + 1);

    // Footfall plan. Foot 0 is the left (+y), foot 1 the right (-y); the
    // right foot swings first. Step k lands the swing foot at
    // min(k+1, n_steps-1) * step_length, which joins the feet on the final
    // step; a single-step gait just leaves them apart.
    let l = cfg.step_length;
    let target_x = |k: usize| -> f64 {
        if cfg.n_steps >= 2 {
            (k + 1).min(cfg.n_steps - 1) as f64 * l
        } else {
            l
        }
    };

    // Body x waypoints: midpoint of the planted feet at each step boundary.
    let mut body_x = Vec::with_capacity(cfg.n_steps + 1);
    let mut foot_x = [0.0_f64; 2];
    body_x.push(0.0);
    for k in 0..cfg.n_steps {
        foot_x[(k + 1) % 2] = target_x(k);
        body_x.push(0.5 * (foot_x[0] + foot_x[1]));
    }

    let mut feet: Vec<FootTruth> = (0..cfg.n_feet)
        .map(|i| FootTruth {
            p: Vector3::new(0.0, cfg.stance_width * if i == 0 { 1.0 } else { -1.0 }, 0.0),
            z: UnitQuat::identity(),
            contact: true,
        })
        .collect();
    if cfg.n_feet == 1 {
        // A lone foot still sits off the centerline so the leg lever arm
        // is nonzero.
        feet[0].p = Vector3::new(0.0, cfg.stance_width, 0.0);
    }

    let mut swing_from = 0.0;

    for i in 0..=total {
        let t = i as f64 * dt;

        // Locate the sample within the script. Boundary samples belong to
        // the segment they begin; positions agree across the seam anyway.
        let mut x = Channel::default();
        let mut y = Channel::default();
        let walking = i >= n_in && i < n_in + cfg.n_steps * n_cycle;
        if walking {
            let j = i - n_in;
            let k = j / n_cycle;
            let jc = j % n_cycle;
            let s_cycle = jc as f64 / n_cycle as f64;
            let t_cycle = cfg.step_duration;

            let dx = body_x[k + 1] - body_x[k];
            x = Channel {
                x: body_x[k] + dx * smoothstep(s_cycle),
                v: dx * smoothstep_d1(s_cycle) / t_cycle,
                a: dx * smoothstep_d2(s_cycle) / (t_cycle * t_cycle),
            };

            // Lean toward the stance foot: foot 0 (+y) when the right
            // foot swings (even k), foot 1 (-y) otherwise.
            let side = if k % 2 == 0 { 1.0 } else { -1.0 };
            let amp = cfg.lateral_sway_amplitude * side;
            y = Channel {
                x: amp * bump(s_cycle),
                v: amp * bump_d1(s_cycle) / t_cycle,
                a: amp * bump_d2(s_cycle) / (t_cycle * t_cycle),
            };

            let swing = (k + 1) % 2;
            if jc == 0 {
                // New cycle: land the previous swing foot on its target
                // (the polynomial is flat there, so the snap is far below
                // sensor resolution) and remember where this cycle's swing
                // foot starts from.
                if k > 0 {
                    let landed = k % 2;
                    feet[landed].p.x = target_x(k - 1);
                    feet[landed].p.z = 0.0;
                    feet[landed].contact = true;
                }
                swing_from = feet[swing].p.x;
            }
            if jc >= n_ds {
                let s = (jc - n_ds) as f64 / n_ss as f64;
                feet[swing].contact = false;
                feet[swing].p.x = swing_from + (target_x(k) - swing_from) * smoothstep(s);
                feet[swing].p.z = cfg.step_height * bump(s);
            } else {
                feet[swing].contact = true;
            }
        } else {
            let past = i >= n_in + cfg.n_steps * n_cycle;
            x.x = if past { body_x[cfg.n_steps] } else { 0.0 };
            if past && cfg.n_steps > 0 {
                // Make sure the last swing foot reads as landed during the
                // lead-out, including at the boundary sample itself.
                let swing = cfg.n_steps % 2;
                feet[swing].contact = true;
                feet[swing].p.x = target_x(cfg.n_steps - 1);
                feet[swing].p.z = 0.0;
            }
        }

        let (q, omega) = match &cfg.base_rotation {
            Some(rot) => rotation_at(rot, cfg.lead_in, t),
            None => (UnitQuat::identity(), Vector3::zeros()),
        };

        out.push(TruthSample {
            t,
            r: Vector3::new(x.x, y.x, cfg.body_height),
            v: Vector3::new(x.v, y.v, 0.0),
            a: Vector3::new(x.a, y.a, 0.0),
            q,
            omega,
            feet: feet.clone(),
        });
    }
    Ok(out)
}

/// Per-sample contact flags, in the layout the schedule utilities expect.
pub fn contact_flags(truth: &[TruthSample]) -> Vec<Vec<bool>> {
    truth
        .iter()
        .map(|s| s.feet.iter().map(|f| f.contact).collect())
        .collect()
}
