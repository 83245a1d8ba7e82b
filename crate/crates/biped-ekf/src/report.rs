//! Error reports and comparison tables.
//!
//! Orientation errors are reported as aerospace-sequence Euler angles
//! (yaw-pitch-roll, extracted in that order): that is what plots and error
//! tables conventionally show, and the convention is fixed here once.
//! Absolute yaw is unobservable for these filters, so the yaw column is
//! reported with the initial offset between estimate and truth removed;
//! drift after that offset is real error.
//!
//! Traces written by [`save_trace`] round-trip exactly, like datasets, and
//! carry the hash of the dataset they were produced from. The comparison
//! writer refuses traces from different datasets.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{fnv1a, Dataset};
use crate::experiment::{RunRecord, RunResult, SigmaRecord};
use crate::model::FilterMode;
use crate::so3::UnitQuat;
use nalgebra::Vector3;

/// Quantities of the error table, in report order.
pub const QUANTITIES: [&str; 9] = [
    "r_x", "r_y", "r_z", "v_x", "v_y", "v_z", "roll", "pitch", "yaw",
];

const UNITS: [&str; 9] = [
    "m", "m", "m", "m/s", "m/s", "m/s", "rad", "rad", "rad",
];

/// Support phase of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Double,
    Single,
    Airborne,
}

impl Phase {
    pub fn label(self) -> &'static str {
        match self {
            Phase::Double => "double",
            Phase::Single => "single",
            Phase::Airborne => "airborne",
        }
    }

    pub fn of_contacts(in_contact: usize) -> Self {
        match in_contact {
            0 => Phase::Airborne,
            1 => Phase::Single,
            _ => Phase::Double,
        }
    }
}

/// RMS and maximum absolute error per quantity over some set of samples.
#[derive(Debug, Clone, Default)]
pub struct ErrorStats {
    pub rms: [f64; 9],
    pub max_abs: [f64; 9],
    pub samples: usize,
}

impl ErrorStats {
    fn accumulate(&mut self, e: &[f64; 9]) {
        for k in 0..9 {
            self.rms[k] += e[k] * e[k];
            self.max_abs[k] = self.max_abs[k].max(e[k].abs());
        }
        self.samples += 1;
    }

    fn finish(&mut self) {
        if self.samples > 0 {
            for k in 0..9 {
                self.rms[k] = (self.rms[k] / self.samples as f64).sqrt();
            }
        }
    }
}

/// Per-quantity error summary of one run, overall and split by support
/// phase.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub mode: FilterMode,
    pub overall: ErrorStats,
    pub single_support: ErrorStats,
    pub double_support: ErrorStats,
    /// The initial yaw discrepancy that was subtracted out.
    pub yaw_offset: f64,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("trace sidecar: {0}")]
    Json(#[from] serde_json::Error),
    #[error("trace has {got} rows, dataset has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("traces come from different datasets ({a} vs {b})")]
    DatasetMismatch { a: String, b: String },
    #[error("trace file: row {row}: {msg}")]
    Row { row: usize, msg: String },
    #[error("trace CSV hash does not match its sidecar")]
    HashMismatch,
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut x = a % std::f64::consts::TAU;
    if x > std::f64::consts::PI {
        x -= std::f64::consts::TAU;
    } else if x < -std::f64::consts::PI {
        x += std::f64::consts::TAU;
    }
    x
}

fn error_row(ds: &Dataset, rec: &RunRecord, i: usize, yaw_offset: f64) -> [f64; 9] {
    let tr = &ds.truth[i];
    let (er, ep, ey) = rec.q.euler_zyx();
    let (tr_r, tr_p, tr_y) = tr.q.euler_zyx();
    [
        rec.r.x - tr.r.x,
        rec.r.y - tr.r.y,
        rec.r.z - tr.r.z,
        rec.v.x - tr.v.x,
        rec.v.y - tr.v.y,
        rec.v.z - tr.v.z,
        wrap_angle(er - tr_r),
        wrap_angle(ep - tr_p),
        wrap_angle(ey - tr_y - yaw_offset),
    ]
}

fn phase_of(ds: &Dataset, i: usize) -> Phase {
    let n = ds.truth[i].feet.iter().filter(|f| f.contact).count();
    Phase::of_contacts(n)
}

/// Summarize a run against the dataset it consumed.
pub fn error_report(ds: &Dataset, run: &RunResult) -> ErrorReport {
    assert_eq!(run.records.len(), ds.truth.len());
    let (_, _, ey0) = run.records[0].q.euler_zyx();
    let (_, _, ty0) = ds.truth[0].q.euler_zyx();
    let yaw_offset = wrap_angle(ey0 - ty0);

    let mut overall = ErrorStats::default();
    let mut single = ErrorStats::default();
    let mut double = ErrorStats::default();
    for (i, rec) in run.records.iter().enumerate() {
        let e = error_row(ds, rec, i, yaw_offset);
        overall.accumulate(&e);
        match phase_of(ds, i) {
            Phase::Single => single.accumulate(&e),
            Phase::Double => double.accumulate(&e),
            Phase::Airborne => {}
        }
    }
    overall.finish();
    single.finish();
    double.finish();
    ErrorReport {
        mode: run.mode,
        overall,
        single_support: single,
        double_support: double,
        yaw_offset,
    }
}

/// Render a report as a fixed-width text table.
pub fn format_report(rep: &ErrorReport) -> String {
    let mut out = String::new();
    let mode = match rep.mode {
        FilterMode::PointFoot => "point foot",
        FilterMode::FlatFoot => "flat foot",
    };
    let _ = writeln!(out, "error report ({mode} filter)");
    let _ = writeln!(
        out,
        "yaw reported with initial offset of {:+.3e} rad removed",
        rep.yaw_offset
    );
    let _ = writeln!(
        out,
        "{:<8} {:>6} {:>12} {:>12} {:>12} {:>12}",
        "quantity", "unit", "rms", "max", "rms(single)", "rms(double)"
    );
    for k in 0..9 {
        let _ = writeln!(
            out,
            "{:<8} {:>6} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            QUANTITIES[k],
            UNITS[k],
            rep.overall.rms[k],
            rep.overall.max_abs[k],
            rep.single_support.rms[k],
            rep.double_support.rms[k],
        );
    }
    let _ = writeln!(
        out,
        "samples: {} total, {} single support, {} double support",
        rep.overall.samples, rep.single_support.samples, rep.double_support.samples
    );
    out
}

/// Render a report as CSV (one row per quantity).
pub fn report_csv(rep: &ErrorReport) -> String {
    let mut out =
        String::from("quantity,unit,rms,max_abs,rms_single_support,rms_double_support\n");
    for k in 0..9 {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            QUANTITIES[k],
            UNITS[k],
            rep.overall.rms[k],
            rep.overall.max_abs[k],
            rep.single_support.rms[k],
            rep.double_support.rms[k],
        );
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceMeta {
    mode: FilterMode,
    dataset_hash: String,
    n_rows: usize,
    updates: usize,
    csv_hash: String,
}

/// The trace CSV and sidecar paths for a stem: `stem.csv`, `stem.meta.json`.
pub fn trace_paths(stem: &Path) -> (PathBuf, PathBuf) {
    crate::dataset::paths_for(stem)
}

fn push_vec3(line: &mut String, v: &Vector3<f64>) {
    let _ = write!(line, ",{},{},{}", v.x, v.y, v.z);
}

/// Write a run as `stem.csv` plus `stem.meta.json`.
pub fn save_trace(stem: &Path, run: &RunResult) -> Result<(), ReportError> {
    let mut csv = String::from(
        "t,r_x,r_y,r_z,v_x,v_y,v_z,q_x,q_y,q_z,q_w,bf_x,bf_y,bf_z,bw_x,bw_y,bw_z,\
         sig_r_x,sig_r_y,sig_r_z,sig_v_x,sig_v_y,sig_v_z,sig_phi_x,sig_phi_y,sig_phi_z,\
         sig_bf_x,sig_bf_y,sig_bf_z,sig_bw_x,sig_bw_y,sig_bw_z\n",
    );
    for rec in &run.records {
        let mut line = format!("{}", rec.t);
        push_vec3(&mut line, &rec.r);
        push_vec3(&mut line, &rec.v);
        for v in rec.q.to_array() {
            let _ = write!(line, ",{v}");
        }
        push_vec3(&mut line, &rec.b_f);
        push_vec3(&mut line, &rec.b_w);
        push_vec3(&mut line, &rec.sigma.r);
        push_vec3(&mut line, &rec.sigma.v);
        push_vec3(&mut line, &rec.sigma.phi);
        push_vec3(&mut line, &rec.sigma.b_f);
        push_vec3(&mut line, &rec.sigma.b_w);
        line.push('\n');
        csv.push_str(&line);
    }
    let meta = TraceMeta {
        mode: run.mode,
        dataset_hash: run.dataset_hash.clone(),
        n_rows: run.records.len(),
        updates: run.updates,
        csv_hash: format!("{:016x}", fnv1a(csv.as_bytes())),
    };
    let (csv_path, meta_path) = trace_paths(stem);
    if let Some(dir) = csv_path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(csv_path, csv)?;
    fs::write(meta_path, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Load a trace written by [`save_trace`].
pub fn load_trace(stem: &Path) -> Result<RunResult, ReportError> {
    let (csv_path, meta_path) = trace_paths(stem);
    let meta: TraceMeta = serde_json::from_str(&fs::read_to_string(meta_path)?)?;
    let csv = fs::read_to_string(csv_path)?;
    if format!("{:016x}", fnv1a(csv.as_bytes())) != meta.csv_hash {
        return Err(ReportError::HashMismatch);
    }
    let mut records = Vec::with_capacity(meta.n_rows);
    for (row, line) in csv.lines().skip(1).enumerate() {
        let mut values = Vec::with_capacity(32);
        for field in line.split(',') {
            values.push(field.parse::<f64>().map_err(|e| ReportError::Row {
                row,
                msg: e.to_string(),
            })?);
        }
        if values.len() != 32 {
            return Err(ReportError::Row {
                row,
                msg: format!("{} fields, expected 32", values.len()),
            });
        }
        let v3 = |at: usize| Vector3::new(values[at], values[at + 1], values[at + 2]);
        records.push(RunRecord {
            t: values[0],
            r: v3(1),
            v: v3(4),
            q: UnitQuat::new_unchecked(v3(7), values[10]),
            b_f: v3(11),
            b_w: v3(14),
            sigma: SigmaRecord {
                r: v3(17),
                v: v3(20),
                phi: v3(23),
                b_f: v3(26),
                b_w: v3(29),
            },
        });
    }
    if records.len() != meta.n_rows {
        return Err(ReportError::LengthMismatch {
            expected: meta.n_rows,
            got: records.len(),
        });
    }
    Ok(RunResult {
        mode: meta.mode,
        records,
        updates: meta.updates,
        dataset_hash: meta.dataset_hash,
    })
}

/// Merge one or more runs against their dataset into a plot-ready CSV:
/// time, phase label, per-run estimates and errors, and difference columns
/// against the first run. All runs must come from the given dataset.
pub fn write_comparison(
    path: &Path,
    ds: &Dataset,
    runs: &[&RunResult],
) -> Result<(), ReportError> {
    assert!(!runs.is_empty());
    for run in runs {
        if run.dataset_hash != ds.meta.csv_hash {
            return Err(ReportError::DatasetMismatch {
                a: run.dataset_hash.clone(),
                b: ds.meta.csv_hash.clone(),
            });
        }
        if run.records.len() != ds.truth.len() {
            return Err(ReportError::LengthMismatch {
                expected: ds.truth.len(),
                got: run.records.len(),
            });
        }
    }

    let mut header = String::from("t,phase");
    for (k, run) in runs.iter().enumerate() {
        let tag = match run.mode {
            FilterMode::PointFoot => format!("run{k}_point"),
            FilterMode::FlatFoot => format!("run{k}_flat"),
        };
        for q in QUANTITIES {
            header.push_str(&format!(",{tag}_{q}"));
        }
        for q in QUANTITIES {
            header.push_str(&format!(",{tag}_err_{q}"));
        }
    }
    for k in 1..runs.len() {
        for q in QUANTITIES {
            header.push_str(&format!(",diff{k}_{q}"));
        }
    }
    header.push('\n');

    let yaw_offsets: Vec<f64> = runs
        .iter()
        .map(|run| {
            let (_, _, ey0) = run.records[0].q.euler_zyx();
            let (_, _, ty0) = ds.truth[0].q.euler_zyx();
            wrap_angle(ey0 - ty0)
        })
        .collect();

    let mut out = String::with_capacity(ds.truth.len() * 128);
    out.push_str(&header);
    for i in 0..ds.truth.len() {
        let mut line = format!("{},{}", ds.truth[i].t, phase_of(ds, i).label());
        let mut values: Vec<[f64; 9]> = Vec::with_capacity(runs.len());
        for (k, run) in runs.iter().enumerate() {
            let rec = &run.records[i];
            let (roll, pitch, yaw) = rec.q.euler_zyx();
            let est = [
                rec.r.x, rec.r.y, rec.r.z, rec.v.x, rec.v.y, rec.v.z, roll, pitch, yaw,
            ];
            for v in est {
                let _ = write!(line, ",{v}");
            }
            let err = error_row(ds, rec, i, yaw_offsets[k]);
            for v in err {
                let _ = write!(line, ",{v}");
            }
            values.push(est);
        }
        for k in 1..runs.len() {
            for q in 0..9 {
                let _ = write!(line, ",{}", values[k][q] - values[0][q]);
            }
        }
        line.push('\n');
        out.push_str(&line);
    }
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{run_filter, InitMode, RunConfig};
    use crate::gait::{generate_truth, GaitConfig};
    use crate::model::NoiseConfig;
    use crate::sensors::synthesize_sensors;

    fn walk_dataset(n_steps: usize, seed: u64) -> Dataset {
        let gait = GaitConfig {
            n_steps,
            lead_in: 0.5,
            lead_out: 0.5,
            ..GaitConfig::default()
        };
        let noise = NoiseConfig::default();
        let truth = generate_truth(&gait).unwrap();
        let stream = synthesize_sensors(&truth, &noise, seed);
        Dataset::in_memory(&gait, &noise, truth, stream)
    }

    #[test]
    fn perfect_estimate_reports_zero_error() {
        let gait = GaitConfig {
            n_steps: 0,
            ..GaitConfig::default()
        };
        let noise = NoiseConfig {
            accel_density: 0.0,
            gyro_density: 0.0,
            foot_pos_density: 0.0,
            foot_rot_density: 0.0,
            accel_bias_density: 0.0,
            gyro_bias_density: 0.0,
            kin_pos_std: 0.0,
            kin_rot_std: 0.0,
        };
        let truth = generate_truth(&gait).unwrap();
        let stream = synthesize_sensors(&truth, &noise, 0);
        let ds = Dataset::in_memory(&gait, &noise, truth, stream);
        let mut cfg = RunConfig::new(FilterMode::PointFoot);
        cfg.init = InitMode::Truth { sigma: 1e-6 };
        let run = run_filter(&ds, &cfg).unwrap();
        let rep = error_report(&ds, &run);
        for k in 0..9 {
            assert!(rep.overall.rms[k] < 1e-12);
            assert!(rep.overall.max_abs[k] < 1e-12);
        }
        // Standing on both feet the whole time.
        assert_eq!(rep.double_support.samples, rep.overall.samples);
        assert_eq!(rep.single_support.samples, 0);
    }

    #[test]
    fn constant_yaw_offset_is_removed_from_the_yaw_column() {
        let ds = walk_dataset(2, 1);
        let mut cfg = RunConfig::new(FilterMode::FlatFoot);
        cfg.init = InitMode::Truth { sigma: 1e-6 };
        let base = run_filter(&ds, &cfg).unwrap();
        let mut spun = base.clone();
        let spin = UnitQuat::from_euler_zyx(0.0, 0.0, 0.3);
        for rec in &mut spun.records {
            rec.q = rec.q.mul(&spin);
        }
        let rep_base = error_report(&ds, &base);
        let rep_spun = error_report(&ds, &spun);
        // The spin shows up in the offset, not in the error column: after
        // removal both runs report the same yaw drift.
        assert!((rep_spun.yaw_offset - rep_base.yaw_offset - 0.3).abs() < 1e-9);
        assert!(
            (rep_spun.overall.rms[8] - rep_base.overall.rms[8]).abs() < 1e-12,
            "yaw rms {} vs {}",
            rep_spun.overall.rms[8],
            rep_base.overall.rms[8]
        );
        assert!((rep_spun.overall.rms[6] - rep_base.overall.rms[6]).abs() < 1e-9);
    }

    #[test]
    fn phases_partition_a_walking_dataset() {
        let ds = walk_dataset(3, 2);
        let run = run_filter(&ds, &RunConfig::new(FilterMode::FlatFoot)).unwrap();
        let rep = error_report(&ds, &run);
        assert!(rep.single_support.samples > 0);
        assert!(rep.double_support.samples > 0);
        assert_eq!(
            rep.single_support.samples + rep.double_support.samples,
            rep.overall.samples
        );
        let text = format_report(&rep);
        assert!(text.contains("yaw"));
        assert!(report_csv(&rep).lines().count() == 10);
    }

    #[test]
    fn traces_round_trip_and_compare_to_zero() {
        let ds = walk_dataset(2, 3);
        let run = run_filter(&ds, &RunConfig::new(FilterMode::PointFoot)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("trace");
        save_trace(&stem, &run).unwrap();
        let loaded = load_trace(&stem).unwrap();
        assert_eq!(loaded.records.len(), run.records.len());
        for (a, b) in loaded.records.iter().zip(&run.records) {
            assert_eq!(a.r, b.r);
            assert_eq!(a.q.to_array(), b.q.to_array());
            assert_eq!(a.sigma.b_w, b.sigma.b_w);
        }

        let path = dir.path().join("compare.csv");
        write_comparison(&path, &ds, &[&run, &loaded]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        let diff_start = header.split(',').position(|c| c == "diff1_r_x").unwrap();
        let mut rows = 0;
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            for c in &fields[diff_start..] {
                assert_eq!(*c, "0", "nonzero difference column");
            }
            rows += 1;
        }
        assert_eq!(rows, ds.truth.len());
    }

    #[test]
    fn comparison_rejects_traces_from_another_dataset() {
        let ds = walk_dataset(2, 3);
        let run = run_filter(&ds, &RunConfig::new(FilterMode::PointFoot)).unwrap();
        let mut foreign = run.clone();
        foreign.dataset_hash = "deadbeef".into();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("compare.csv");
        match write_comparison(&path, &ds, &[&run, &foreign]) {
            Err(ReportError::DatasetMismatch { .. }) => {}
            other => panic!("expected DatasetMismatch, got {other:?}"),
        }
    }
}
