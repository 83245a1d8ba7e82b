//! Error-state Kalman filter core.
//!
//! This module is deliberately ignorant of legged robots. It covers the
//! generic machinery: turning a continuous-time linearization into a
//! discrete transition pair `(F_k, Q_k)`, propagating a covariance, and
//! applying a measurement update in Joseph form. The concrete state plugs
//! in through [`StateManifold`], which injects an error-space correction
//! back into whatever representation the state uses (plain addition for
//! vector blocks, an exponential-map retraction for rotational ones).
//!
//! All matrices are dynamically sized so the same code serves filters with
//! different numbers of tracked feet.

use nalgebra::linalg::Cholesky;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Continuous-time linearization of a process model,
/// `d/dt delta_x = F delta_x + L w`, where `w` is white noise with
/// spectral density `Q` (units squared per Hz).
pub struct LinearizedSystem {
    pub f: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

/// How to convert a [`LinearizedSystem`] into a discrete-time pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discretization {
    /// Truncated series: `F_k = I + F dt` and
    /// `Q_k = F_k L Q L^T F_k^T dt`. Cheap, and accurate enough at
    /// millisecond steps; this is what the filter runs by default.
    FirstOrder,
    /// Exact zero-order-hold discretization via the block matrix
    /// exponential (Van Loan). Used as a cross-check and for tests.
    Exact,
}

/// Discretize a continuous-time linearization over a step of `dt` seconds.
///
/// Returns `(F_k, Q_k)`.
pub fn discretize(
    sys: &LinearizedSystem,
    dt: f64,
    method: Discretization,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = sys.f.nrows();
    assert_eq!(sys.f.ncols(), n, "F must be square");
    assert_eq!(sys.l.nrows(), n, "L row count must match F");
    assert_eq!(sys.q.nrows(), sys.q.ncols(), "Q must be square");
    assert_eq!(sys.l.ncols(), sys.q.nrows(), "L columns must match Q");
    assert!(dt > 0.0, "dt must be positive");

    let lql = &sys.l * &sys.q * sys.l.transpose();
    match method {
        Discretization::FirstOrder => {
            let f_k = DMatrix::identity(n, n) + &sys.f * dt;
            let q_k = &f_k * &lql * f_k.transpose() * dt;
            (f_k, q_k)
        }
        Discretization::Exact => {
            // Van Loan: exponentiate dt * [[-F, L Q L^T], [0, F^T]];
            // the lower-right block is F_k^T and F_k times the upper-right
            // block is Q_k.
            let mut g = DMatrix::zeros(2 * n, 2 * n);
            g.view_mut((0, 0), (n, n)).copy_from(&(-&sys.f * dt));
            g.view_mut((0, n), (n, n)).copy_from(&(&lql * dt));
            g.view_mut((n, n), (n, n)).copy_from(&(sys.f.transpose() * dt));
            let e = g.exp();
            let f_k = e.view((n, n), (n, n)).transpose();
            let q_k = &f_k * e.view((0, n), (n, n));
            let mut q_k = q_k;
            symmetrize(&mut q_k);
            (f_k, q_k)
        }
    }
}

/// One covariance prediction step, `P <- F P F^T + Q`, resymmetrized.
pub fn propagate_covariance(
    p: &DMatrix<f64>,
    f_k: &DMatrix<f64>,
    q_k: &DMatrix<f64>,
) -> DMatrix<f64> {
    let mut next = f_k * p * f_k.transpose() + q_k;
    symmetrize(&mut next);
    next
}

/// A state that accepts additive corrections in its error space.
///
/// `delta` is laid out exactly like the rows of the covariance; the
/// implementor decides how each block is absorbed (vector addition,
/// quaternion retraction, and so on).
pub trait StateManifold {
    fn retract(&mut self, delta: &DVector<f64>);
}

/// Knobs for the measurement update.
#[derive(Debug, Clone, Copy)]
pub struct UpdateConfig {
    /// Reject the update when the innovation covariance has a spectral
    /// condition number above this.
    pub condition_limit: f64,
    /// Optional chi-square gate on the normalized innovation squared.
    /// `None` disables gating.
    pub nis_gate: Option<f64>,
}

impl Default for UpdateConfig {
    fn default() -> Self {
        Self {
            condition_limit: 1e12,
            nis_gate: None,
        }
    }
}

/// Diagnostics from a successful update.
#[derive(Debug, Clone, Copy)]
pub struct UpdateOutcome {
    /// Normalized innovation squared, `y^T S^-1 y`.
    pub nis: f64,
}

#[derive(Debug, Error)]
pub enum EkfError {
    #[error("innovation covariance is ill-conditioned (condition number {cond:.3e})")]
    IllConditionedInnovation { cond: f64 },
    #[error("update gated out (NIS {nis:.3} exceeds gate {gate:.3})")]
    GatedOut { nis: f64, gate: f64 },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Apply one measurement update in place.
///
/// `innovation` is the measured-minus-predicted residual already expressed
/// in the measurement error space, `h` its Jacobian with respect to the
/// state error, and `r` the discrete measurement noise covariance. On
/// success the state is retracted by `K y` and the covariance is replaced
/// by the Joseph form `(I - K H) P (I - K H)^T + K R K^T`, which stays
/// symmetric positive semidefinite even with a suboptimal gain.
///
/// A gated or rejected update leaves both state and covariance untouched.
pub fn update<S: StateManifold>(
    state: &mut S,
    p: &mut DMatrix<f64>,
    innovation: &DVector<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    cfg: &UpdateConfig,
) -> Result<UpdateOutcome, EkfError> {
    let n = p.nrows();
    let m = h.nrows();
    if h.ncols() != n {
        return Err(EkfError::DimensionMismatch {
            context: "measurement Jacobian columns",
            expected: n,
            got: h.ncols(),
        });
    }
    if innovation.len() != m {
        return Err(EkfError::DimensionMismatch {
            context: "innovation length",
            expected: m,
            got: innovation.len(),
        });
    }
    if r.nrows() != m || r.ncols() != m {
        return Err(EkfError::DimensionMismatch {
            context: "measurement noise rows",
            expected: m,
            got: r.nrows(),
        });
    }

    let mut s = h * &*p * h.transpose() + r;
    symmetrize(&mut s);
    if !s.iter().all(|x| x.is_finite()) {
        return Err(EkfError::NonFinite("innovation covariance"));
    }

    let eigs = s.clone().symmetric_eigenvalues();
    let lo = eigs.min();
    let hi = eigs.max();
    if lo <= 0.0 || hi / lo > cfg.condition_limit {
        let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        return Err(EkfError::IllConditionedInnovation { cond });
    }

    let chol = Cholesky::new(s).ok_or(EkfError::IllConditionedInnovation { cond: hi / lo })?;

    let nis = innovation.dot(&chol.solve(innovation));
    if let Some(gate) = cfg.nis_gate {
        if nis > gate {
            return Err(EkfError::GatedOut { nis, gate });
        }
    }

    // K = P H^T S^-1, computed as (S^-1 H P)^T to reuse the factorization.
    let k = chol.solve(&(h * &*p)).transpose();
    let delta = &k * innovation;
    if !delta.iter().all(|x| x.is_finite()) {
        return Err(EkfError::NonFinite("state correction"));
    }

    let ikh = DMatrix::identity(n, n) - &k * h;
    let mut next = &ikh * &*p * ikh.transpose() + &k * r * k.transpose();
    symmetrize(&mut next);
    *p = next;
    state.retract(&delta);

    Ok(UpdateOutcome { nis })
}

/// Force exact symmetry in place, `M <- (M + M^T) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Largest absolute asymmetry, `max_ij |M_ij - M_ji|`.
pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Check that `P + shift I` admits a Cholesky factorization, i.e. that the
/// spectrum of `P` sits above `-shift`.
pub fn is_psd_within(p: &DMatrix<f64>, shift: f64) -> bool {
    let n = p.nrows();
    let shifted = p + DMatrix::identity(n, n) * shift;
    Cholesky::new(shifted).is_some()
}
