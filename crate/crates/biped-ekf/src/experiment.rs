//! Running a filter over a dataset.
//!
//! The loop keeps the estimate aligned with sample times: contact events
//! land first, then the kinematic update for that row, then the record,
//! then one IMU prediction to the next row. A touchdown consumes its row's
//! measurement for the reset, so that foot sits out the regular update on
//! the same row rather than being counted twice.

use nalgebra::{DMatrix, DVector, Vector3};
use thiserror::Error;

use crate::contact::ContactKind;
use crate::dataset::Dataset;
use crate::ekf::{is_psd_within, max_asymmetry, EkfError};
use crate::filter::{BipedFilter, FilterConfig};
use crate::model::{FilterMode, FilterState, FootKinematics};
use crate::sensors::rest_summary;
use crate::so3::UnitQuat;

/// How the filter gets its starting estimate.
#[derive(Debug, Clone, Copy)]
pub enum InitMode {
    /// Aggregate an initial stationary window: attitude from the mean
    /// specific force, feet from the first kinematic row.
    Rest { window: f64 },
    /// Copy the first truth sample and give every error state the same
    /// standard deviation. For controlled experiments.
    Truth { sigma: f64 },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: FilterMode,
    pub filter: FilterConfig,
    pub init: InitMode,
    /// Fuse kinematic measurements. Off means pure strapdown integration
    /// (contact events still maintain the foot bookkeeping).
    pub with_updates: bool,
    /// Verify state finiteness and covariance health every step.
    pub check_health: bool,
}

impl RunConfig {
    pub fn new(mode: FilterMode) -> Self {
        Self {
            mode,
            filter: FilterConfig::default(),
            init: InitMode::Rest { window: 0.8 },
            with_updates: true,
            check_health: true,
        }
    }
}

/// Marginal standard deviations of the base-related error states.
#[derive(Debug, Clone, Copy)]
pub struct SigmaRecord {
    pub r: Vector3<f64>,
    pub v: Vector3<f64>,
    pub phi: Vector3<f64>,
    pub b_f: Vector3<f64>,
    pub b_w: Vector3<f64>,
}

/// The estimate after the update at one sample time.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub t: f64,
    pub r: Vector3<f64>,
    pub v: Vector3<f64>,
    pub q: UnitQuat,
    pub b_f: Vector3<f64>,
    pub b_w: Vector3<f64>,
    pub sigma: SigmaRecord,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub mode: FilterMode,
    pub records: Vec<RunRecord>,
    pub updates: usize,
    /// Hash of the dataset the run consumed, for pairing outputs.
    pub dataset_hash: String,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("step {step}: {source}")]
    Update {
        step: usize,
        #[source]
        source: EkfError,
    },
    #[error("step {step}: non-finite state")]
    NonFinite { step: usize },
    #[error("step {step}: covariance asymmetry {value:.3e}")]
    Asymmetric { step: usize, value: f64 },
    #[error("step {step}: covariance lost positive semidefiniteness")]
    NotPsd { step: usize },
    #[error("step {step}: touchdown of foot {foot} has no kinematic measurement")]
    MissingTouchdown { step: usize, foot: usize },
}

fn sigma_record(filter: &BipedFilter) -> SigmaRecord {
    let p = filter.covariance();
    let m = filter.model();
    let pull = |idx: usize| {
        Vector3::new(
            p[(idx, idx)].max(0.0).sqrt(),
            p[(idx + 1, idx + 1)].max(0.0).sqrt(),
            p[(idx + 2, idx + 2)].max(0.0).sqrt(),
        )
    };
    SigmaRecord {
        r: pull(m.idx_r()),
        v: pull(m.idx_v()),
        phi: pull(m.idx_phi()),
        b_f: pull(m.idx_bf()),
        b_w: pull(m.idx_bw()),
    }
}

fn state_is_finite(s: &FilterState) -> bool {
    let mut ok = s.r.iter().chain(s.v.iter()).all(|v| v.is_finite())
        && s.b_f.iter().chain(s.b_w.iter()).all(|v| v.is_finite())
        && s.q.to_array().iter().all(|v| v.is_finite());
    for f in &s.feet {
        ok &= f.p.iter().all(|v| v.is_finite());
        ok &= f.z.to_array().iter().all(|v| v.is_finite());
    }
    ok
}

/// Run one filter over one dataset.
pub fn run_filter(ds: &Dataset, cfg: &RunConfig) -> Result<RunResult, RunError> {
    let n_feet = ds.meta.n_feet;
    let dt = ds.meta.dt;
    let mut filter = BipedFilter::new(cfg.mode, n_feet, cfg.filter.clone(), dt);

    match cfg.init {
        InitMode::Rest { window } => {
            let summary = rest_summary(&ds.stream, window);
            filter.initialize_at_rest(&summary.mean_f, &summary.kin);
        }
        InitMode::Truth { sigma } => {
            let t0 = &ds.truth[0];
            let mut state = FilterState::new(n_feet);
            state.r = t0.r;
            state.v = t0.v;
            state.q = t0.q;
            state.b_f = ds.stream.b_f[0];
            state.b_w = ds.stream.b_w[0];
            for (i, ft) in t0.feet.iter().enumerate() {
                state.feet[i].p = ft.p;
                state.feet[i].z = ft.z;
            }
            let nd = filter.model().error_dim();
            let p = DMatrix::identity(nd, nd) * sigma * sigma;
            filter.set_estimate(state, p, ds.stream.initial_contact.clone());
        }
    }

    let n = ds.truth.len();
    let mut records = Vec::with_capacity(n);
    let mut updates = 0_usize;
    let mut next_event = 0_usize;
    let events = &ds.stream.events;
    let mut reset_now: Vec<usize> = Vec::new();

    for i in 0..n {
        let t = ds.truth[i].t;

        reset_now.clear();
        while next_event < events.len() && events[next_event].t <= t + 0.5 * dt {
            let ev = &events[next_event];
            next_event += 1;
            match ev.kind {
                ContactKind::Liftoff => filter.on_liftoff(ev.foot),
                ContactKind::Touchdown => {
                    let meas = ds.stream.kin[i]
                        .iter()
                        .find(|(f, _)| *f == ev.foot)
                        .map(|(_, m)| *m)
                        .ok_or(RunError::MissingTouchdown {
                            step: i,
                            foot: ev.foot,
                        })?;
                    filter.on_touchdown(ev.foot, &meas);
                    reset_now.push(ev.foot);
                }
            }
        }

        if cfg.with_updates {
            let row: Vec<(usize, FootKinematics)> = ds.stream.kin[i]
                .iter()
                .filter(|(f, _)| !reset_now.contains(f))
                .copied()
                .collect();
            if !row.is_empty() {
                filter
                    .update(&row)
                    .map_err(|source| RunError::Update { step: i, source })?;
                updates += 1;
            }
        }

        if cfg.check_health {
            if !state_is_finite(filter.state()) {
                return Err(RunError::NonFinite { step: i });
            }
            let asym = max_asymmetry(filter.covariance());
            if asym > 1e-10 {
                return Err(RunError::Asymmetric { step: i, value: asym });
            }
            if !is_psd_within(filter.covariance(), 1e-9) {
                return Err(RunError::NotPsd { step: i });
            }
        }

        let s = filter.state();
        records.push(RunRecord {
            t,
            r: s.r,
            v: s.v,
            q: s.q,
            b_f: s.b_f,
            b_w: s.b_w,
            sigma: sigma_record(&filter),
        });

        if i + 1 < n {
            filter.predict(&ds.stream.imu[i]);
        }
    }

    Ok(RunResult {
        mode: cfg.mode,
        records,
        updates,
        dataset_hash: ds.meta.csv_hash.clone(),
    })
}

/// Body-frame attitude error between an estimate and the truth, in the
/// same coordinates as the filter's covariance: truth = exp(err) (*) est.
pub fn attitude_error(truth: &UnitQuat, est: &UnitQuat) -> Vector3<f64> {
    truth.mul(&est.inverse()).log()
}

/// Stack the base errors of a run against its dataset's truth, one row of
/// (r, v, phi) per sample. Yaw convention differences are NOT removed
/// here; see the report layer for that.
pub fn base_errors(ds: &Dataset, run: &RunResult) -> Vec<DVector<f64>> {
    run.records
        .iter()
        .zip(&ds.truth)
        .map(|(rec, tr)| {
            let mut e = DVector::zeros(9);
            e.fixed_rows_mut::<3>(0).copy_from(&(tr.r - rec.r));
            e.fixed_rows_mut::<3>(3).copy_from(&(tr.v - rec.v));
            e.fixed_rows_mut::<3>(6)
                .copy_from(&attitude_error(&tr.q, &rec.q));
            e
        })
        .collect()
}
