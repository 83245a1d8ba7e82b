//! Process and measurement models for a floating base observed through an
//! IMU and leg kinematics.
//!
//! The estimated state is
//!
//! ```text
//! x = (r, v, q, p_1 .. p_N, b_f, b_w [, z_1 .. z_N])
//! ```
//!
//! with base position `r` and velocity `v` in world coordinates, a
//! world-to-body attitude quaternion `q`, one world-frame contact position
//! `p_i` per foot, accelerometer and gyroscope biases in body coordinates,
//! and, in flat-foot mode only, one world-to-foot orientation `z_i` per
//! foot. The IMU enters as a control input: the accelerometer supplies the
//! specific force `f` and the gyroscope the body rate `omega`, both offset
//! by their slowly drifting biases. Leg kinematics act as measurements of
//! the foot pose relative to the body: a position `s_p = C(q)(p - r)` and,
//! for flat feet, an orientation `s_z = q (*) z^-1`, where `(*)` is the
//! quaternion product and `C` the world-to-body rotation matrix.
//!
//! The filter itself works on the error state
//!
//! ```text
//! dx = (dr, dv, dphi, dp_1 .. dp_N, db_f, db_w [, dth_1 .. dth_N])
//! ```
//!
//! where rotational errors are rotation vectors attached on the left,
//! `q = exp(dphi) (*) q_hat`, and everything else is plain addition. All
//! Jacobians in this module are taken with respect to that error state; the
//! finite-difference tests at the bottom pin them against the nonlinear
//! propagation and measurement maps.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::ekf::LinearizedSystem;
use crate::so3::{skew, UnitQuat};

/// Standard gravity magnitude used throughout, m/s^2.
pub const STANDARD_GRAVITY: f64 = 9.81;

/// Which foot geometry the filter assumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    /// Feet are point contacts: only contact positions are estimated and
    /// kinematics contribute position measurements.
    PointFoot,
    /// Feet are rigid bodies that stay put when loaded: contact
    /// orientations are estimated too, and kinematics contribute both
    /// position and rotation measurements.
    FlatFoot,
}

/// One IMU readout in body coordinates.
#[derive(Debug, Clone, Copy)]
pub struct ImuSample {
    /// Specific force reported by the accelerometer.
    pub f: Vector3<f64>,
    /// Angular rate reported by the gyroscope.
    pub omega: Vector3<f64>,
}

/// Foot pose relative to the body, as produced by forward kinematics.
#[derive(Debug, Clone, Copy)]
pub struct FootKinematics {
    /// Foot position in body coordinates.
    pub pos: Vector3<f64>,
    /// Foot orientation in body coordinates. Ignored in point-foot mode.
    pub rot: UnitQuat,
}

/// Estimated quantities for one foot.
#[derive(Debug, Clone, Copy)]
pub struct FootState {
    /// Contact position in world coordinates.
    pub p: Vector3<f64>,
    /// World-to-foot orientation. Carried but unused in point-foot mode.
    pub z: UnitQuat,
}

impl Default for FootState {
    fn default() -> Self {
        Self {
            p: Vector3::zeros(),
            z: UnitQuat::identity(),
        }
    }
}

/// Full filter state.
#[derive(Debug, Clone)]
pub struct FilterState {
    /// Base position, world coordinates.
    pub r: Vector3<f64>,
    /// Base velocity, world coordinates.
    pub v: Vector3<f64>,
    /// World-to-body attitude.
    pub q: UnitQuat,
    pub feet: Vec<FootState>,
    /// Accelerometer bias, body coordinates.
    pub b_f: Vector3<f64>,
    /// Gyroscope bias, body coordinates.
    pub b_w: Vector3<f64>,
}

impl FilterState {
    pub fn new(n_feet: usize) -> Self {
        Self {
            r: Vector3::zeros(),
            v: Vector3::zeros(),
            q: UnitQuat::identity(),
            feet: vec![FootState::default(); n_feet],
            b_f: Vector3::zeros(),
            b_w: Vector3::zeros(),
        }
    }
}

/// Noise intensities for the process and measurement models.
///
/// The `*_density` entries are continuous-time white noise densities
/// (units per root hertz); they are squared to build the spectral density
/// matrix `Q_c`. The `kin_*_std` entries are discrete standard deviations
/// of the kinematic measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Accelerometer white noise density, m/s^2/sqrt(Hz).
    pub accel_density: f64,
    /// Gyroscope white noise density, rad/s/sqrt(Hz).
    pub gyro_density: f64,
    /// Contact position random walk density, m/sqrt(Hz).
    pub foot_pos_density: f64,
    /// Contact orientation random walk density, rad/sqrt(Hz). Flat-foot
    /// mode only.
    pub foot_rot_density: f64,
    /// Accelerometer bias random walk density, m/s^3/sqrt(Hz).
    pub accel_bias_density: f64,
    /// Gyroscope bias random walk density, rad/s^2/sqrt(Hz).
    pub gyro_bias_density: f64,
    /// Kinematic foot position measurement standard deviation, m.
    pub kin_pos_std: f64,
    /// Kinematic foot rotation measurement standard deviation, rad.
    pub kin_rot_std: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            accel_density: 0.00078,
            gyro_density: 0.000523,
            foot_pos_density: 0.001,
            foot_rot_density: 0.01,
            accel_bias_density: 0.0001,
            gyro_bias_density: 0.000618,
            kin_pos_std: 0.01,
            kin_rot_std: 0.01,
        }
    }
}

/// The model proper: state layout, propagation, linearization, and the
/// kinematic measurement map for a given foot count and geometry.
#[derive(Debug, Clone)]
pub struct BipedModel {
    pub mode: FilterMode,
    pub n_feet: usize,
    /// Gravity in world coordinates.
    pub gravity: Vector3<f64>,
}

impl BipedModel {
    pub fn new(mode: FilterMode, n_feet: usize) -> Self {
        assert!(n_feet >= 1, "need at least one foot");
        Self {
            mode,
            n_feet,
            gravity: Vector3::new(0.0, 0.0, -STANDARD_GRAVITY),
        }
    }

    /// Dimension of the error state.
    pub fn error_dim(&self) -> usize {
        match self.mode {
            FilterMode::PointFoot => 15 + 3 * self.n_feet,
            FilterMode::FlatFoot => 15 + 6 * self.n_feet,
        }
    }

    /// Dimension of the process noise vector.
    pub fn noise_dim(&self) -> usize {
        match self.mode {
            FilterMode::PointFoot => 12 + 3 * self.n_feet,
            FilterMode::FlatFoot => 12 + 6 * self.n_feet,
        }
    }

    /// Measurement rows contributed by one foot in contact.
    pub fn rows_per_foot(&self) -> usize {
        match self.mode {
            FilterMode::PointFoot => 3,
            FilterMode::FlatFoot => 6,
        }
    }

    // Error state layout. Rotational contact errors sit at the tail so the
    // point-foot layout is a prefix of the flat-foot one.
    pub fn idx_r(&self) -> usize {
        0
    }
    pub fn idx_v(&self) -> usize {
        3
    }
    pub fn idx_phi(&self) -> usize {
        6
    }
    pub fn idx_foot_pos(&self, foot: usize) -> usize {
        debug_assert!(foot < self.n_feet);
        9 + 3 * foot
    }
    pub fn idx_bf(&self) -> usize {
        9 + 3 * self.n_feet
    }
    pub fn idx_bw(&self) -> usize {
        12 + 3 * self.n_feet
    }
    pub fn idx_foot_rot(&self, foot: usize) -> usize {
        debug_assert!(matches!(self.mode, FilterMode::FlatFoot));
        debug_assert!(foot < self.n_feet);
        15 + 3 * self.n_feet + 3 * foot
    }

    /// Advance the nominal state by one IMU step of `dt` seconds.
    ///
    /// Velocity and attitude use a zero-order hold on the bias-compensated
    /// IMU inputs; position additionally keeps the half-step acceleration
    /// term. Contact states and biases are constant across prediction.
    pub fn propagate_state(&self, s: &mut FilterState, imu: &ImuSample, dt: f64) {
        let f_hat = imu.f - s.b_f;
        let w_hat = imu.omega - s.b_w;
        let a = s.q.rotation_matrix().transpose() * f_hat + self.gravity;
        s.r += s.v * dt + a * (0.5 * dt * dt);
        s.v += a * dt;
        s.q = UnitQuat::exp(&(w_hat * dt)).mul(&s.q);
    }

    /// Continuous-time linearization about the current state and inputs.
    ///
    /// `foot_noise_scale` multiplies the contact random walk densities per
    /// foot; passing 1.0 keeps the configured values and a large factor
    /// effectively releases a foot that is off the ground.
    pub fn linearize(
        &self,
        s: &FilterState,
        imu: &ImuSample,
        noise: &NoiseConfig,
        foot_noise_scale: &[f64],
    ) -> LinearizedSystem {
        assert_eq!(foot_noise_scale.len(), self.n_feet);
        let nd = self.error_dim();
        let nw = self.noise_dim();
        let c = s.q.rotation_matrix();
        let ct = c.transpose();
        let f_hat = imu.f - s.b_f;
        let w_hat = imu.omega - s.b_w;
        let eye = Matrix3::identity();

        let mut f = DMatrix::zeros(nd, nd);
        set_block(&mut f, self.idx_r(), self.idx_v(), &eye);
        set_block(&mut f, self.idx_v(), self.idx_phi(), &(-ct * skew(&f_hat)));
        set_block(&mut f, self.idx_v(), self.idx_bf(), &(-ct));
        set_block(&mut f, self.idx_phi(), self.idx_phi(), &(-skew(&w_hat)));
        set_block(&mut f, self.idx_phi(), self.idx_bw(), &(-eye));

        let mut l = DMatrix::zeros(nd, nw);
        set_block(&mut l, self.idx_v(), 0, &(-ct));
        set_block(&mut l, self.idx_phi(), 3, &(-eye));
        for i in 0..self.n_feet {
            set_block(&mut l, self.idx_foot_pos(i), 6 + 3 * i, &ct);
        }
        set_block(&mut l, self.idx_bf(), 6 + 3 * self.n_feet, &eye);
        set_block(&mut l, self.idx_bw(), 9 + 3 * self.n_feet, &eye);
        if matches!(self.mode, FilterMode::FlatFoot) {
            for i in 0..self.n_feet {
                set_block(&mut l, self.idx_foot_rot(i), 12 + 3 * self.n_feet + 3 * i, &eye);
            }
        }

        let mut q_diag = DVector::zeros(nw);
        for k in 0..3 {
            q_diag[k] = noise.accel_density.powi(2);
            q_diag[3 + k] = noise.gyro_density.powi(2);
            q_diag[6 + 3 * self.n_feet + k] = noise.accel_bias_density.powi(2);
            q_diag[9 + 3 * self.n_feet + k] = noise.gyro_bias_density.powi(2);
        }
        for i in 0..self.n_feet {
            let wp = noise.foot_pos_density * foot_noise_scale[i];
            for k in 0..3 {
                q_diag[6 + 3 * i + k] = wp * wp;
            }
            if matches!(self.mode, FilterMode::FlatFoot) {
                let wz = noise.foot_rot_density * foot_noise_scale[i];
                for k in 0..3 {
                    q_diag[12 + 3 * self.n_feet + 3 * i + k] = wz * wz;
                }
            }
        }

        LinearizedSystem {
            f,
            l,
            q: DMatrix::from_diagonal(&q_diag),
        }
    }

    /// Foot pose relative to the body predicted from the current state.
    pub fn predict_kinematics(&self, s: &FilterState, foot: usize) -> FootKinematics {
        let c = s.q.rotation_matrix();
        FootKinematics {
            pos: c * (s.feet[foot].p - s.r),
            rot: s.q.mul(&s.feet[foot].z.inverse()),
        }
    }

    /// Jacobian of the stacked kinematic measurements for the given feet
    /// (ascending order expected), with respect to the error state.
    pub fn measurement_jacobian(&self, s: &FilterState, feet: &[usize]) -> DMatrix<f64> {
        let rows = feet.len() * self.rows_per_foot();
        let mut h = DMatrix::zeros(rows, self.error_dim());
        let c = s.q.rotation_matrix();
        let eye = Matrix3::identity();
        for (k, &i) in feet.iter().enumerate() {
            let row = k * self.rows_per_foot();
            set_block(&mut h, row, self.idx_r(), &(-c));
            set_block(&mut h, row, self.idx_phi(), &skew(&(c * (s.feet[i].p - s.r))));
            set_block(&mut h, row, self.idx_foot_pos(i), &c);
            if matches!(self.mode, FilterMode::FlatFoot) {
                let s_z = s.q.mul(&s.feet[i].z.inverse());
                set_block(&mut h, row + 3, self.idx_phi(), &eye);
                set_block(&mut h, row + 3, self.idx_foot_rot(i), &(-s_z.rotation_matrix()));
            }
        }
        h
    }

    /// Stacked innovation for the given foot measurements: measured minus
    /// predicted position, plus the left-error rotation vector
    /// `log(s_meas (*) s_pred^-1)` in flat-foot mode.
    pub fn innovation(&self, s: &FilterState, meas: &[(usize, FootKinematics)]) -> DVector<f64> {
        let mut y = DVector::zeros(meas.len() * self.rows_per_foot());
        for (k, (foot, m)) in meas.iter().enumerate() {
            let row = k * self.rows_per_foot();
            let pred = self.predict_kinematics(s, *foot);
            y.rows_mut(row, 3).copy_from(&(m.pos - pred.pos));
            if matches!(self.mode, FilterMode::FlatFoot) {
                let e = m.rot.mul(&pred.rot.inverse()).log();
                y.rows_mut(row + 3, 3).copy_from(&e);
            }
        }
        y
    }

    /// Absorb an error-state correction into the nominal state.
    pub fn retract(&self, s: &mut FilterState, delta: &DVector<f64>) {
        assert_eq!(delta.len(), self.error_dim());
        s.r += delta.fixed_rows::<3>(self.idx_r());
        s.v += delta.fixed_rows::<3>(self.idx_v());
        s.q = UnitQuat::exp(&delta.fixed_rows::<3>(self.idx_phi()).into()).mul(&s.q);
        for i in 0..self.n_feet {
            s.feet[i].p += delta.fixed_rows::<3>(self.idx_foot_pos(i));
        }
        s.b_f += delta.fixed_rows::<3>(self.idx_bf());
        s.b_w += delta.fixed_rows::<3>(self.idx_bw());
        if matches!(self.mode, FilterMode::FlatFoot) {
            for i in 0..self.n_feet {
                let dth: Vector3<f64> = delta.fixed_rows::<3>(self.idx_foot_rot(i)).into();
                s.feet[i].z = UnitQuat::exp(&dth).mul(&s.feet[i].z);
            }
        }
    }

    /// Error vector `a (-) b` such that `retract(b, result)` recovers `a`
    /// to first order (exactly, for the rotational blocks).
    pub fn error_between(&self, a: &FilterState, b: &FilterState) -> DVector<f64> {
        let mut d = DVector::zeros(self.error_dim());
        d.rows_mut(self.idx_r(), 3).copy_from(&(a.r - b.r));
        d.rows_mut(self.idx_v(), 3).copy_from(&(a.v - b.v));
        d.rows_mut(self.idx_phi(), 3)
            .copy_from(&a.q.mul(&b.q.inverse()).log());
        for i in 0..self.n_feet {
            d.rows_mut(self.idx_foot_pos(i), 3)
                .copy_from(&(a.feet[i].p - b.feet[i].p));
        }
        d.rows_mut(self.idx_bf(), 3).copy_from(&(a.b_f - b.b_f));
        d.rows_mut(self.idx_bw(), 3).copy_from(&(a.b_w - b.b_w));
        if matches!(self.mode, FilterMode::FlatFoot) {
            for i in 0..self.n_feet {
                d.rows_mut(self.idx_foot_rot(i), 3)
                    .copy_from(&a.feet[i].z.mul(&b.feet[i].z.inverse()).log());
            }
        }
        d
    }
}

fn set_block(m: &mut DMatrix<f64>, row: usize, col: usize, b: &Matrix3<f64>) {
    m.view_mut((row, col), (3, 3)).copy_from(b);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ekf::{discretize, Discretization};
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn rand_vec(rng: &mut StdRng, scale: f64) -> Vector3<f64> {
        Vector3::new(
            scale * (rng.random::<f64>() - 0.5),
            scale * (rng.random::<f64>() - 0.5),
            scale * (rng.random::<f64>() - 0.5),
        )
    }

    fn random_state(rng: &mut StdRng, model: &BipedModel) -> FilterState {
        let mut s = FilterState::new(model.n_feet);
        s.r = rand_vec(rng, 2.0);
        s.v = rand_vec(rng, 1.0);
        s.q = UnitQuat::exp(&rand_vec(rng, 2.0));
        for foot in &mut s.feet {
            foot.p = s.r + rand_vec(rng, 0.8) - Vector3::new(0.0, 0.0, 0.6);
            foot.z = UnitQuat::exp(&rand_vec(rng, 1.0));
        }
        s.b_f = rand_vec(rng, 0.05);
        s.b_w = rand_vec(rng, 0.01);
        s
    }

    fn random_imu(rng: &mut StdRng) -> ImuSample {
        // Specific force near gravity magnitude, moderate body rates.
        ImuSample {
            f: Vector3::new(0.0, 0.0, STANDARD_GRAVITY) + rand_vec(rng, 2.0),
            omega: rand_vec(rng, 1.0),
        }
    }

    /// Central-difference Jacobian of the one-step discrete propagation,
    /// taken in the error space on both sides.
    fn fd_transition(
        model: &BipedModel,
        s: &FilterState,
        imu: &ImuSample,
        dt: f64,
        eps: f64,
    ) -> DMatrix<f64> {
        let n = model.error_dim();
        let mut j = DMatrix::zeros(n, n);
        for col in 0..n {
            let mut dp = DVector::zeros(n);
            dp[col] = eps;
            let mut sp = s.clone();
            model.retract(&mut sp, &dp);
            model.propagate_state(&mut sp, imu, dt);
            dp[col] = -eps;
            let mut sm = s.clone();
            model.retract(&mut sm, &dp);
            model.propagate_state(&mut sm, imu, dt);
            j.set_column(col, &(model.error_between(&sp, &sm) / (2.0 * eps)));
        }
        j
    }

    /// Central-difference Jacobian of the stacked measurement map, with the
    /// rotational part differenced through the left-error logarithm.
    fn fd_measurement(
        model: &BipedModel,
        s: &FilterState,
        feet: &[usize],
        eps: f64,
    ) -> DMatrix<f64> {
        let n = model.error_dim();
        let rows = feet.len() * model.rows_per_foot();
        let mut j = DMatrix::zeros(rows, n);
        for col in 0..n {
            let mut d = DVector::zeros(n);
            d[col] = eps;
            let mut sp = s.clone();
            model.retract(&mut sp, &d);
            d[col] = -eps;
            let mut sm = s.clone();
            model.retract(&mut sm, &d);
            for (k, &foot) in feet.iter().enumerate() {
                let row = k * model.rows_per_foot();
                let mp = model.predict_kinematics(&sp, foot);
                let mm = model.predict_kinematics(&sm, foot);
                let dpos = (mp.pos - mm.pos) / (2.0 * eps);
                for r in 0..3 {
                    j[(row + r, col)] = dpos[r];
                }
                if matches!(model.mode, FilterMode::FlatFoot) {
                    let drot = mp.rot.mul(&mm.rot.inverse()).log() / (2.0 * eps);
                    for r in 0..3 {
                        j[(row + 3 + r, col)] = drot[r];
                    }
                }
            }
        }
        j
    }

    fn assert_blocks_close(actual: &DMatrix<f64>, fd: &DMatrix<f64>, tol: f64) {
        assert_eq!(actual.shape(), fd.shape());
        let (rows, cols) = actual.shape();
        for br in (0..rows).step_by(3) {
            for bc in (0..cols).step_by(3) {
                let a = actual.view((br, bc), (3, 3));
                let f = fd.view((br, bc), (3, 3));
                let denom = f.norm().max(1.0);
                let err = (a - f).norm() / denom;
                assert!(
                    err < tol,
                    "block ({br},{bc}) off by {err:.3e} (tol {tol:.1e})"
                );
            }
        }
        let whole = (actual - fd).norm() / fd.norm();
        assert!(whole < tol, "whole-matrix error {whole:.3e}");
    }

    #[test]
    fn transition_jacobian_matches_finite_differences() {
        let dt = 1e-3;
        let eps = 1e-6;
        for (mode, n_feet, seed) in [
            (FilterMode::PointFoot, 1, 7u64),
            (FilterMode::PointFoot, 2, 8),
            (FilterMode::FlatFoot, 2, 9),
        ] {
            let model = BipedModel::new(mode, n_feet);
            let mut rng = StdRng::seed_from_u64(seed);
            for _ in 0..5 {
                let s = random_state(&mut rng, &model);
                let imu = random_imu(&mut rng);
                let sys = model.linearize(&s, &imu, &NoiseConfig::default(), &vec![1.0; n_feet]);
                let (f_k, _) = discretize(&sys, dt, Discretization::FirstOrder);
                let fd = fd_transition(&model, &s, &imu, dt, eps);
                assert_blocks_close(&f_k, &fd, 1e-5);
            }
        }
    }

    #[test]
    fn measurement_jacobian_matches_finite_differences() {
        let eps = 1e-6;
        for (mode, n_feet, feet, seed) in [
            (FilterMode::PointFoot, 1, vec![0usize], 21u64),
            (FilterMode::PointFoot, 2, vec![0, 1], 22),
            (FilterMode::FlatFoot, 2, vec![0, 1], 23),
            (FilterMode::FlatFoot, 2, vec![1], 24),
        ] {
            let model = BipedModel::new(mode, n_feet);
            let mut rng = StdRng::seed_from_u64(seed);
            for _ in 0..5 {
                let s = random_state(&mut rng, &model);
                let h = model.measurement_jacobian(&s, &feet);
                let fd = fd_measurement(&model, &s, &feet, eps);
                let worst = (&h - &fd).abs().max();
                assert!(worst < 1e-7, "max abs deviation {worst:.3e}");
            }
        }
    }

    #[test]
    fn stationary_transition_has_expected_gravity_coupling() {
        // Level body at rest: specific force is +g up in body coordinates.
        // Tilting about +y swings the sensed force toward +x, so after dt
        // seconds the x velocity error picks up +|g| dt per radian of
        // pitch error. The transposed pairing gets the opposite sign.
        let model = BipedModel::new(FilterMode::PointFoot, 1);
        let s = FilterState::new(1);
        let imu = ImuSample {
            f: Vector3::new(0.0, 0.0, STANDARD_GRAVITY),
            omega: Vector3::zeros(),
        };
        let dt = 1e-3;
        let sys = model.linearize(&s, &imu, &NoiseConfig::default(), &[1.0]);
        let (f_k, _) = discretize(&sys, dt, Discretization::FirstOrder);
        let vx = model.idx_v();
        let phi = model.idx_phi();
        assert_relative_eq!(f_k[(vx, phi + 1)], STANDARD_GRAVITY * dt, epsilon = 1e-12);
        assert_relative_eq!(f_k[(vx + 1, phi)], -STANDARD_GRAVITY * dt, epsilon = 1e-12);
        assert_relative_eq!(f_k[(vx + 2, phi)], 0.0, epsilon = 1e-12);
        // Position integrates velocity.
        assert_relative_eq!(f_k[(model.idx_r(), model.idx_v())], dt, epsilon = 1e-15);
    }

    #[test]
    fn process_noise_attitude_entry_matches_hand_value() {
        // At one millisecond steps the attitude diagonal of Q_k is the
        // squared gyro density times dt, up to a dt^2 bias term.
        let model = BipedModel::new(FilterMode::PointFoot, 1);
        let s = FilterState::new(1);
        let imu = ImuSample {
            f: Vector3::new(0.0, 0.0, STANDARD_GRAVITY),
            omega: Vector3::zeros(),
        };
        let noise = NoiseConfig::default();
        let dt = 1e-3;
        let sys = model.linearize(&s, &imu, &noise, &[1.0]);
        let (_, q_k) = discretize(&sys, dt, Discretization::FirstOrder);
        let i = model.idx_phi();
        let expected = noise.gyro_density.powi(2) * dt;
        assert_relative_eq!(q_k[(i, i)], expected, max_relative = 1e-4);
        assert_relative_eq!(q_k[(i, i)], 2.736e-10, max_relative = 1e-3);
        // Swing inflation scales the contact walk by the factor squared.
        let sys_sw = model.linearize(&s, &imu, &noise, &[1000.0]);
        let j = model.idx_foot_pos(0);
        let ratio = sys_sw.q[(6, 6)] / sys.q[(6, 6)];
        assert_relative_eq!(ratio, 1e6, max_relative = 1e-10);
        let (_, q_k_sw) = discretize(&sys_sw, dt, Discretization::FirstOrder);
        assert!(q_k_sw[(j, j)] > 1e5 * q_k[(j, j)]);
    }

    #[test]
    fn propagation_matches_quadrature_reference() {
        // With constant body-frame inputs the attitude solution is exact,
        // so integrating dr = v, dv = C^T f + g with fine Runge-Kutta
        // steps gives a trustworthy reference. One millisecond prediction
        // steps should track it closely, and the velocity error should
        // shrink linearly with the step size.
        let model = BipedModel::new(FilterMode::PointFoot, 1);
        let f = Vector3::new(0.3, -0.2, STANDARD_GRAVITY + 0.5);
        let omega = Vector3::new(0.2, -0.4, 0.3);
        let q0 = UnitQuat::exp(&Vector3::new(0.1, 0.2, -0.3));
        let v0 = Vector3::new(0.4, -0.1, 0.2);
        let g = model.gravity;

        let reference = |t_end: f64| -> (Vector3<f64>, Vector3<f64>) {
            let steps = 20_000;
            let h = t_end / steps as f64;
            let accel = |t: f64| -> Vector3<f64> {
                let q = UnitQuat::exp(&(omega * t)).mul(&q0);
                q.rotation_matrix().transpose() * f + g
            };
            let mut r = Vector3::zeros();
            let mut v = v0;
            for k in 0..steps {
                let t = k as f64 * h;
                // Classic fourth-order step; the RHS depends on time only.
                let (a1, a2, a4) = (accel(t), accel(t + 0.5 * h), accel(t + h));
                let k1v = a1;
                let k2v = a2;
                let k3v = a2;
                let k4v = a4;
                let k1r = v;
                let k2r = v + k1v * (0.5 * h);
                let k3r = v + k2v * (0.5 * h);
                let k4r = v + k3v * h;
                r += (k1r + k2r * 2.0 + k3r * 2.0 + k4r) * (h / 6.0);
                v += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
            }
            (r, v)
        };

        let propagate = |dt: f64, t_end: f64| -> (Vector3<f64>, Vector3<f64>) {
            let mut s = FilterState::new(1);
            s.q = q0;
            s.v = v0;
            let imu = ImuSample { f, omega };
            let steps = (t_end / dt).round() as usize;
            for _ in 0..steps {
                model.propagate_state(&mut s, &imu, dt);
            }
            (s.r, s.v)
        };

        let t_end = 0.2;
        let (r_ref, v_ref) = reference(t_end);
        // The hold-at-start-of-step inputs leave a first-order velocity
        // error of roughly |omega x f| T dt / 2, about 5e-4 here.
        let (r1, v1) = propagate(1e-3, t_end);
        assert!((r1 - r_ref).norm() < 2e-4, "{:e}", (r1 - r_ref).norm());
        assert!((v1 - v_ref).norm() < 2e-3, "{:e}", (v1 - v_ref).norm());

        let (_, v2) = propagate(5e-4, t_end);
        let e1 = (v1 - v_ref).norm();
        let e2 = (v2 - v_ref).norm();
        let ratio = e1 / e2;
        assert!(
            (1.6..2.6).contains(&ratio),
            "expected first-order convergence, got ratio {ratio:.2}"
        );
    }

    #[test]
    fn error_state_layout_and_dimensions() {
        let point = BipedModel::new(FilterMode::PointFoot, 2);
        assert_eq!(point.error_dim(), 21);
        assert_eq!(point.noise_dim(), 18);
        assert_eq!(point.idx_foot_pos(1), 12);
        assert_eq!(point.idx_bf(), 15);
        assert_eq!(point.idx_bw(), 18);

        let flat = BipedModel::new(FilterMode::FlatFoot, 2);
        assert_eq!(flat.error_dim(), 27);
        assert_eq!(flat.noise_dim(), 24);
        assert_eq!(flat.idx_foot_rot(0), 21);
        assert_eq!(flat.idx_foot_rot(1), 24);

        let single = BipedModel::new(FilterMode::PointFoot, 1);
        assert_eq!(single.error_dim(), 18);
        let single_flat = BipedModel::new(FilterMode::FlatFoot, 1);
        assert_eq!(single_flat.error_dim(), 21);
    }

    #[test]
    fn retract_and_error_between_are_inverse() {
        let model = BipedModel::new(FilterMode::FlatFoot, 2);
        let mut rng = StdRng::seed_from_u64(31);
        for _ in 0..50 {
            let s = random_state(&mut rng, &model);
            let delta = DVector::from_fn(model.error_dim(), |_, _| 0.3 * (rng.random::<f64>() - 0.5));
            let mut s2 = s.clone();
            model.retract(&mut s2, &delta);
            let back = model.error_between(&s2, &s);
            assert_relative_eq!(back, delta, epsilon = 1e-12);
        }
    }

    #[test]
    fn innovation_vanishes_at_perfect_kinematics() {
        let model = BipedModel::new(FilterMode::FlatFoot, 2);
        let mut rng = StdRng::seed_from_u64(77);
        let s = random_state(&mut rng, &model);
        let meas: Vec<_> = (0..2).map(|i| (i, model.predict_kinematics(&s, i))).collect();
        let y = model.innovation(&s, &meas);
        assert!(y.abs().max() < 1e-14);
    }

    #[test]
    fn innovation_is_linear_in_small_state_errors() {
        // Measurements generated from a perturbed state should produce an
        // innovation close to H times the perturbation.
        let model = BipedModel::new(FilterMode::FlatFoot, 2);
        let mut rng = StdRng::seed_from_u64(99);
        for _ in 0..20 {
            let s = random_state(&mut rng, &model);
            let delta = DVector::from_fn(model.error_dim(), |_, _| 1e-4 * (rng.random::<f64>() - 0.5));
            let mut s_true = s.clone();
            model.retract(&mut s_true, &delta);
            let meas: Vec<_> = (0..2).map(|i| (i, model.predict_kinematics(&s_true, i))).collect();
            let y = model.innovation(&s, &meas);
            let h = model.measurement_jacobian(&s, &[0, 1]);
            let lin = &h * &delta;
            assert!((y - lin).abs().max() < 1e-8);
        }
    }
}
