//! Noisy sensor streams from ground truth.
//!
//! The IMU model is thermal white noise plus an integrated random walk
//! bias on both the accelerometer and the gyroscope. Densities are given
//! per root hertz, so a thermal sample at rate 1/dt gets std
//! `density / sqrt(dt)` and a random walk increment gets `density *
//! sqrt(dt)`. Kinematic foot measurements are the body-frame foot pose
//! with white position noise and a small left-attached rotation.
//!
//! Noise is scaled from unit normals, which makes a zero density produce
//! exactly zero perturbation rather than a degenerate distribution, and
//! the whole stream is a pure function of (truth, noise, seed).

use nalgebra::Vector3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::contact::{self, ContactEvent};
use crate::gait::TruthSample;
use crate::model::{FootKinematics, ImuSample, NoiseConfig};
use crate::so3::UnitQuat;

/// Per-sample standard deviation of a thermal noise term with the given
/// density, sampled at interval `dt`.
pub fn thermal_std(density: f64, dt: f64) -> f64 {
    density / dt.sqrt()
}

/// Per-step standard deviation of a random walk increment with the given
/// density, integrated over `dt`.
pub fn walk_std(density: f64, dt: f64) -> f64 {
    density * dt.sqrt()
}

/// Everything the estimator consumes, plus the hidden truth of the biases
/// for error reporting.
#[derive(Debug, Clone)]
pub struct SensorStream {
    pub seed: u64,
    pub dt: f64,
    pub imu: Vec<ImuSample>,
    /// Kinematic measurements per timestep, one entry per foot in contact.
    pub kin: Vec<Vec<(usize, FootKinematics)>>,
    pub events: Vec<ContactEvent>,
    /// Contact flags at the first sample; the event list carries every
    /// later change.
    pub initial_contact: Vec<bool>,
    /// True accelerometer bias at each timestep.
    pub b_f: Vec<Vector3<f64>>,
    /// True gyroscope bias at each timestep.
    pub b_w: Vec<Vector3<f64>>,
}

fn noise_vec(rng: &mut ChaCha8Rng, std: f64) -> Vector3<f64> {
    let z0: f64 = rng.sample(StandardNormal);
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    Vector3::new(std * z0, std * z1, std * z2)
}

/// Corrupt a truth trajectory into sensor signals.
///
/// The biases start at zero and drift; the bias used at step k is the
/// value before that step's increment, so the first sample is bias-free.
/// Every foot flagged in contact gets one kinematic measurement per step,
/// including the touchdown step itself.
pub fn synthesize_sensors(truth: &[TruthSample], noise: &NoiseConfig, seed: u64) -> SensorStream {
    assert!(truth.len() >= 2, "need at least two samples");
    let dt = truth[1].t - truth[0].t;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let s_f = thermal_std(noise.accel_density, dt);
    let s_w = thermal_std(noise.gyro_density, dt);
    let s_bf = walk_std(noise.accel_bias_density, dt);
    let s_bw = walk_std(noise.gyro_bias_density, dt);
    let s_kp = noise.kin_pos_std;
    let s_kq = noise.kin_rot_std;

    let gravity = Vector3::new(0.0, 0.0, -crate::model::STANDARD_GRAVITY);

    let n = truth.len();
    let mut imu = Vec::with_capacity(n);
    let mut kin = Vec::with_capacity(n);
    let mut b_f = Vec::with_capacity(n);
    let mut b_w = Vec::with_capacity(n);
    let mut bias_f = Vector3::zeros();
    let mut bias_w = Vector3::zeros();

    for s in truth {
        let c = s.q.rotation_matrix();
        let f = c * (s.a - gravity) + bias_f + noise_vec(&mut rng, s_f);
        let w = s.omega + bias_w + noise_vec(&mut rng, s_w);
        imu.push(ImuSample { f, omega: w });
        b_f.push(bias_f);
        b_w.push(bias_w);
        bias_f += noise_vec(&mut rng, s_bf);
        bias_w += noise_vec(&mut rng, s_bw);

        let mut row: Vec<(usize, FootKinematics)> = Vec::new();
        for (foot, ft) in s.feet.iter().enumerate() {
            if !ft.contact {
                continue;
            }
            let pos = c * (ft.p - s.r) + noise_vec(&mut rng, s_kp);
            let rot = UnitQuat::exp(&noise_vec(&mut rng, s_kq))
                .mul(&s.q.mul(&ft.z.inverse()));
            row.push((foot, FootKinematics { pos, rot }));
        }
        kin.push(row);
    }

    let times: Vec<f64> = truth.iter().map(|s| s.t).collect();
    let flags: Vec<Vec<bool>> = truth
        .iter()
        .map(|s| s.feet.iter().map(|f| f.contact).collect())
        .collect();
    let events = contact::events_from_flags(&times, &flags);

    SensorStream {
        seed,
        dt,
        imu,
        kin,
        events,
        initial_contact: flags[0].clone(),
        b_f,
        b_w,
    }
}

/// Specific-force spread below which a window counts as stationary. The
/// default thermal noise alone contributes about 0.025 m/s² per axis;
/// walking accelerations are two orders larger.
const STATIONARY_ACCEL_STD: f64 = 0.2;

/// Aggregates of an initial rest window, as needed for filter startup.
#[derive(Debug, Clone)]
pub struct RestSummary {
    /// Mean measured specific force over the window.
    pub mean_f: Vector3<f64>,
    /// The first kinematic measurement of each foot in contact at t = 0.
    pub kin: Vec<(usize, FootKinematics)>,
    /// Largest per-axis standard deviation of the specific force.
    pub accel_spread: f64,
    pub stationary: bool,
}

/// Summarize the first `window` seconds of a stream for initialization.
/// Warns (and flags) when the accelerometer spread says the robot was not
/// actually at rest.
pub fn rest_summary(stream: &SensorStream, window: f64) -> RestSummary {
    let n = ((window / stream.dt).round() as usize)
        .clamp(1, stream.imu.len());
    let mut mean = Vector3::zeros();
    for s in &stream.imu[..n] {
        mean += s.f;
    }
    mean /= n as f64;
    let mut var = Vector3::zeros();
    for s in &stream.imu[..n] {
        let d = s.f - mean;
        var += d.component_mul(&d);
    }
    var /= n as f64;
    let accel_spread = var.max().sqrt();
    let stationary = accel_spread < STATIONARY_ACCEL_STD;
    if !stationary {
        log::warn!(
            "initialization window is not stationary: accel spread {accel_spread:.3} m/s^2"
        );
    }
    RestSummary {
        mean_f: mean,
        kin: stream.kin[0].clone(),
        accel_spread,
        stationary,
    }
}
