//! The assembled estimator: strapdown prediction at IMU rate, kinematic
//! updates for feet in contact, and the contact lifecycle.
//!
//! Liftoff does not change the state vector. The lifted foot keeps its
//! blocks, its kinematic rows are dropped from updates, and its random walk
//! densities are multiplied by a large factor so the covariance block grows
//! until the foot is trusted again. Touchdown writes the foot pose straight
//! from the kinematic measurement and rebuilds the corresponding covariance
//! block by propagating base uncertainty and measurement noise through that
//! reset relation.

use log::warn;
use nalgebra::{DMatrix, DVector, Vector3};

use crate::ekf::{
    self, Discretization, EkfError, StateManifold, UpdateConfig, UpdateOutcome,
};
use crate::model::{
    BipedModel, FilterMode, FilterState, FootKinematics, ImuSample, NoiseConfig,
};
use crate::so3::{skew, UnitQuat};

/// How the kinematic measurement covariance is built from the configured
/// standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasNoiseMode {
    /// `R = std^2`: the standard deviations describe one sample. This is
    /// the default and matches how the simulator draws kinematic noise.
    Discrete,
    /// `R = std^2 / dt`: the standard deviations are treated as densities
    /// of a continuous measurement stream.
    ContinuousScaled,
}

/// What the touchdown reset writes into the foot covariance block.
#[derive(Debug, Clone, Copy)]
pub enum TouchdownPrior {
    /// First-order propagation of the current base uncertainty and the
    /// kinematic measurement noise through the reset relations.
    Kinematic,
    /// A fixed diagonal block, ignoring the base uncertainty.
    Uninformative { pos_std: f64, rot_std: f64 },
}

/// Contact lifecycle tuning.
#[derive(Debug, Clone, Copy)]
pub struct ContactConfig {
    /// Multiplier on the foot random walk densities while off the ground.
    pub inflation_factor: f64,
    /// Zero the covariance between a freshly reset foot block and the rest
    /// of the state.
    pub zero_cross_on_reset: bool,
    pub touchdown_prior: TouchdownPrior,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self {
            inflation_factor: 1e3,
            zero_cross_on_reset: true,
            touchdown_prior: TouchdownPrior::Kinematic,
        }
    }
}

/// Initial standard deviations, applied on the diagonal of `P`.
///
/// These describe the quality of the rest initialization: position is
/// defined as the origin (so only the kinematic height carries noise),
/// velocity is zero on a stationary robot, roll and pitch come from the
/// averaged specific force, yaw is zero by convention, and the biases start
/// at zero with room to move.
#[derive(Debug, Clone, Copy)]
pub struct InitConfig {
    pub sigma_r_xy: f64,
    pub sigma_r_z: f64,
    pub sigma_v: f64,
    pub sigma_tilt: f64,
    pub sigma_yaw: f64,
    pub sigma_bf: f64,
    pub sigma_bw: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            sigma_r_xy: 1e-3,
            sigma_r_z: 1e-2,
            sigma_v: 1e-3,
            sigma_tilt: 1e-3,
            sigma_yaw: 1e-6,
            sigma_bf: 1e-2,
            sigma_bw: 1e-3,
        }
    }
}

/// Everything the filter needs besides the model geometry.
#[derive(Debug, Clone)]
pub struct FilterConfig {
    /// Filter-side noise tuning. Independent of whatever the simulator
    /// actually injected.
    pub noise: NoiseConfig,
    pub meas_noise_mode: MeasNoiseMode,
    pub discretization: Discretization,
    pub update: UpdateConfig,
    pub contact: ContactConfig,
    pub init: InitConfig,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            noise: NoiseConfig::default(),
            meas_noise_mode: MeasNoiseMode::Discrete,
            discretization: Discretization::FirstOrder,
            update: UpdateConfig::default(),
            contact: ContactConfig::default(),
            init: InitConfig::default(),
        }
    }
}

/// Outcome of one kinematic update call.
#[derive(Debug, Clone)]
pub struct KinUpdate {
    /// Feet whose measurements were actually used.
    pub used_feet: Vec<usize>,
    /// Stacked innovation length, `rows_per_foot * used_feet.len()`.
    pub rows: usize,
    /// Update diagnostics; `None` when no foot was eligible.
    pub outcome: Option<UpdateOutcome>,
}

struct Retractor<'a> {
    model: &'a BipedModel,
    state: &'a mut FilterState,
}

impl StateManifold for Retractor<'_> {
    fn retract(&mut self, delta: &DVector<f64>) {
        self.model.retract(self.state, delta);
    }
}

pub struct BipedFilter {
    model: BipedModel,
    state: FilterState,
    p: DMatrix<f64>,
    in_contact: Vec<bool>,
    cfg: FilterConfig,
    dt: f64,
}

impl BipedFilter {
    /// A filter with zeroed state and covariance; call
    /// [`initialize_at_rest`](Self::initialize_at_rest) or
    /// [`set_estimate`](Self::set_estimate) before stepping it.
    pub fn new(mode: FilterMode, n_feet: usize, cfg: FilterConfig, dt: f64) -> Self {
        assert!(dt > 0.0, "dt must be positive");
        let model = BipedModel::new(mode, n_feet);
        let nd = model.error_dim();
        Self {
            state: FilterState::new(n_feet),
            p: DMatrix::zeros(nd, nd),
            in_contact: vec![false; n_feet],
            model,
            cfg,
            dt,
        }
    }

    pub fn model(&self) -> &BipedModel {
        &self.model
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn config(&self) -> &FilterConfig {
        &self.cfg
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn in_contact(&self) -> &[bool] {
        &self.in_contact
    }

    pub fn contact_feet(&self) -> Vec<usize> {
        (0..self.model.n_feet)
            .filter(|&i| self.in_contact[i])
            .collect()
    }

    /// Overwrite state, covariance and contact flags wholesale.
    pub fn set_estimate(&mut self, state: FilterState, p: DMatrix<f64>, in_contact: Vec<bool>) {
        assert_eq!(state.feet.len(), self.model.n_feet);
        assert_eq!(p.nrows(), self.model.error_dim());
        assert_eq!(p.ncols(), self.model.error_dim());
        assert_eq!(in_contact.len(), self.model.n_feet);
        self.state = state;
        self.p = p;
        self.in_contact = in_contact;
    }

    /// Initialize from a stationary pose.
    ///
    /// `mean_f` is the specific force averaged over a rest window; roll and
    /// pitch come from aligning it with gravity and yaw is defined to be
    /// zero. The horizontal position is defined as the origin, the height
    /// is chosen so the measured feet sit on the ground plane, and
    /// velocity and both biases start at zero. Feet are then planted
    /// through the regular touchdown reset, which also fills in their
    /// covariance blocks.
    pub fn initialize_at_rest(&mut self, mean_f: &Vector3<f64>, kin: &[(usize, FootKinematics)]) {
        let g = mean_f.norm();
        assert!(g > 1e-6, "mean specific force is degenerate");
        let roll = mean_f.y.atan2(mean_f.z);
        let pitch = (-mean_f.x / g).clamp(-1.0, 1.0).asin();

        let mut state = FilterState::new(self.model.n_feet);
        state.q = UnitQuat::from_euler_zyx(roll, pitch, 0.0);
        let ct = state.q.rotation_matrix().transpose();
        let mut height = 0.0;
        for (_, m) in kin {
            height -= (ct * m.pos).z;
        }
        state.r = Vector3::new(0.0, 0.0, height / kin.len() as f64);

        let nd = self.model.error_dim();
        let mut p = DMatrix::zeros(nd, nd);
        let init = &self.cfg.init;
        let m = &self.model;
        for (idx, sigma) in [
            (m.idx_r(), init.sigma_r_xy),
            (m.idx_r() + 1, init.sigma_r_xy),
            (m.idx_r() + 2, init.sigma_r_z),
            (m.idx_v(), init.sigma_v),
            (m.idx_v() + 1, init.sigma_v),
            (m.idx_v() + 2, init.sigma_v),
            (m.idx_phi(), init.sigma_tilt),
            (m.idx_phi() + 1, init.sigma_tilt),
            (m.idx_phi() + 2, init.sigma_yaw),
        ] {
            p[(idx, idx)] = sigma * sigma;
        }
        for k in 0..3 {
            p[(m.idx_bf() + k, m.idx_bf() + k)] = init.sigma_bf * init.sigma_bf;
            p[(m.idx_bw() + k, m.idx_bw() + k)] = init.sigma_bw * init.sigma_bw;
        }

        self.state = state;
        self.p = p;
        self.in_contact = vec![false; self.model.n_feet];
        for (foot, meas) in kin {
            self.on_touchdown(*foot, meas);
        }
    }

    /// One strapdown step: linearize about the current state, advance the
    /// nominal state, and propagate the covariance. Lifted feet get their
    /// random walk densities inflated here.
    pub fn predict(&mut self, imu: &ImuSample) {
        let scales: Vec<f64> = self
            .in_contact
            .iter()
            .map(|&c| if c { 1.0 } else { self.cfg.contact.inflation_factor })
            .collect();
        let sys = self.model.linearize(&self.state, imu, &self.cfg.noise, &scales);
        let (f_k, q_k) = ekf::discretize(&sys, self.dt, self.cfg.discretization);
        self.model.propagate_state(&mut self.state, imu, self.dt);
        self.p = ekf::propagate_covariance(&self.p, &f_k, &q_k);
    }

    /// Fuse kinematic measurements. Feet not currently in contact are
    /// dropped (with a warning), so the innovation only stacks rows for
    /// loaded feet.
    pub fn update(&mut self, meas: &[(usize, FootKinematics)]) -> Result<KinUpdate, EkfError> {
        let mut used: Vec<(usize, FootKinematics)> = Vec::with_capacity(meas.len());
        for &(foot, m) in meas {
            if self.in_contact[foot] {
                used.push((foot, m));
            } else {
                warn!("dropping kinematic measurement of foot {foot}: not in contact");
            }
        }
        let used_feet: Vec<usize> = used.iter().map(|(f, _)| *f).collect();
        let rows = used_feet.len() * self.model.rows_per_foot();
        if used.is_empty() {
            return Ok(KinUpdate {
                used_feet,
                rows,
                outcome: None,
            });
        }

        let h = self.model.measurement_jacobian(&self.state, &used_feet);
        let y = self.model.innovation(&self.state, &used);
        let r = self.measurement_covariance(used_feet.len());
        let mut retractor = Retractor {
            model: &self.model,
            state: &mut self.state,
        };
        let outcome = ekf::update(&mut retractor, &mut self.p, &y, &h, &r, &self.cfg.update)?;
        Ok(KinUpdate {
            used_feet,
            rows,
            outcome: Some(outcome),
        })
    }

    /// Mark a foot as off the ground. Its measurements stop being used and
    /// its covariance block starts growing through the inflated process
    /// noise. A liftoff of an already lifted foot is ignored.
    pub fn on_liftoff(&mut self, foot: usize) {
        if !self.in_contact[foot] {
            warn!("liftoff of foot {foot} ignored: already off the ground");
            return;
        }
        self.in_contact[foot] = false;
    }

    /// Plant a foot: write its pose from the kinematic measurement and
    /// rebuild its covariance block. A touchdown of a planted foot is
    /// ignored.
    ///
    /// The reset relations are `p = r + C^T s_p` and, in flat-foot mode,
    /// `z = s_z^-1 (*) q`. To first order the new foot errors are
    ///
    /// ```text
    /// dp  = dr - C^T [s_p]x dphi - C^T n_p
    /// dth = C(s_z)^T (dphi + n_q)
    /// ```
    ///
    /// so the kinematic prior is `J P J^T` plus the measurement noise
    /// mapped through the same rows, which lands as `std^2 I` on the foot
    /// diagonal.
    pub fn on_touchdown(&mut self, foot: usize, meas: &FootKinematics) {
        if self.in_contact[foot] {
            warn!("touchdown of foot {foot} ignored: already in contact");
            return;
        }
        let ct = self.state.q.rotation_matrix().transpose();
        self.state.feet[foot].p = self.state.r + ct * meas.pos;
        let flat = matches!(self.model.mode, FilterMode::FlatFoot);
        if flat {
            self.state.feet[foot].z = meas.rot.inverse().mul(&self.state.q);
        }

        let nd = self.model.error_dim();
        let ip = self.model.idx_foot_pos(foot);
        let (var_pos, var_rot) = self.kin_variances();
        match self.cfg.contact.touchdown_prior {
            TouchdownPrior::Kinematic => {
                let mut j = DMatrix::identity(nd, nd);
                for a in 0..3 {
                    for b in 0..3 {
                        j[(ip + a, ip + b)] = 0.0;
                    }
                    j[(ip + a, self.model.idx_r() + a)] = 1.0;
                }
                let dpos_dphi = -ct * skew(&meas.pos);
                for a in 0..3 {
                    for b in 0..3 {
                        j[(ip + a, self.model.idx_phi() + b)] = dpos_dphi[(a, b)];
                    }
                }
                if flat {
                    let ith = self.model.idx_foot_rot(foot);
                    let dth_dphi = meas.rot.rotation_matrix().transpose();
                    for a in 0..3 {
                        for b in 0..3 {
                            j[(ith + a, ith + b)] = 0.0;
                            j[(ith + a, self.model.idx_phi() + b)] = dth_dphi[(a, b)];
                        }
                    }
                }
                self.p = &j * &self.p * j.transpose();
                for a in 0..3 {
                    self.p[(ip + a, ip + a)] += var_pos;
                }
                if flat {
                    let ith = self.model.idx_foot_rot(foot);
                    for a in 0..3 {
                        self.p[(ith + a, ith + a)] += var_rot;
                    }
                }
            }
            TouchdownPrior::Uninformative { pos_std, rot_std } => {
                for a in 0..3 {
                    for k in 0..nd {
                        self.p[(ip + a, k)] = 0.0;
                        self.p[(k, ip + a)] = 0.0;
                    }
                    self.p[(ip + a, ip + a)] = pos_std * pos_std;
                }
                if flat {
                    let ith = self.model.idx_foot_rot(foot);
                    for a in 0..3 {
                        for k in 0..nd {
                            self.p[(ith + a, k)] = 0.0;
                            self.p[(k, ith + a)] = 0.0;
                        }
                        self.p[(ith + a, ith + a)] = rot_std * rot_std;
                    }
                }
            }
        }
        if self.cfg.contact.zero_cross_on_reset {
            self.zero_foot_cross(foot);
        }
        ekf::symmetrize(&mut self.p);
        self.in_contact[foot] = true;
    }

    fn kin_variances(&self) -> (f64, f64) {
        let n = &self.cfg.noise;
        match self.cfg.meas_noise_mode {
            MeasNoiseMode::Discrete => (n.kin_pos_std.powi(2), n.kin_rot_std.powi(2)),
            MeasNoiseMode::ContinuousScaled => (
                n.kin_pos_std.powi(2) / self.dt,
                n.kin_rot_std.powi(2) / self.dt,
            ),
        }
    }

    fn measurement_covariance(&self, n_used: usize) -> DMatrix<f64> {
        let rpf = self.model.rows_per_foot();
        let (var_pos, var_rot) = self.kin_variances();
        let mut r = DMatrix::zeros(n_used * rpf, n_used * rpf);
        for k in 0..n_used {
            for a in 0..3 {
                r[(k * rpf + a, k * rpf + a)] = var_pos;
            }
            if rpf == 6 {
                for a in 3..6 {
                    r[(k * rpf + a, k * rpf + a)] = var_rot;
                }
            }
        }
        r
    }

    fn foot_block_rows(&self, foot: usize) -> Vec<usize> {
        let mut rows: Vec<usize> = (self.model.idx_foot_pos(foot)
            ..self.model.idx_foot_pos(foot) + 3)
            .collect();
        if matches!(self.model.mode, FilterMode::FlatFoot) {
            rows.extend(self.model.idx_foot_rot(foot)..self.model.idx_foot_rot(foot) + 3);
        }
        rows
    }

    fn zero_foot_cross(&mut self, foot: usize) {
        let rows = self.foot_block_rows(foot);
        let nd = self.model.error_dim();
        for &i in &rows {
            for k in 0..nd {
                if !rows.contains(&k) {
                    self.p[(i, k)] = 0.0;
                    self.p[(k, i)] = 0.0;
                }
            }
        }
    }
}
