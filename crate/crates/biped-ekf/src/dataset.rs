//! Dataset files: a columnar CSV with one row per timestep and a JSON
//! sidecar describing it.
//!
//! Floats are written with the shortest representation that parses back to
//! the identical bits, so a save/load cycle is exact. The sidecar records
//! the generating configuration, the column schema, and an FNV-1a hash of
//! the CSV bytes; the loader recomputes the hash and refuses files that do
//! not belong together.
//!
//! Kinematic measurements only exist while a foot is in contact. Their
//! cells are left empty on airborne rows rather than filled with sentinel
//! values.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact;
use crate::gait::{FootTruth, GaitConfig, TruthSample};
use crate::model::{FootKinematics, ImuSample, NoiseConfig};
use crate::sensors::SensorStream;
use crate::so3::UnitQuat;

pub const FORMAT_VERSION: u32 = 1;

/// Sidecar contents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub version: u32,
    pub dt: f64,
    pub n_feet: usize,
    pub n_rows: usize,
    pub seed: u64,
    pub gait: GaitConfig,
    pub noise: NoiseConfig,
    pub columns: Vec<String>,
    /// FNV-1a 64 of the CSV file bytes, lowercase hex.
    pub csv_hash: String,
}

/// A loaded dataset: truth and sensors, exactly as generated.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub truth: Vec<TruthSample>,
    pub stream: SensorStream,
}

impl Dataset {
    /// Wrap freshly generated data without touching the filesystem. The
    /// hash field stays empty; it only means something for saved files.
    pub fn in_memory(
        gait: &GaitConfig,
        noise: &NoiseConfig,
        truth: Vec<TruthSample>,
        stream: SensorStream,
    ) -> Self {
        let meta = DatasetMeta {
            version: FORMAT_VERSION,
            dt: stream.dt,
            n_feet: gait.n_feet,
            n_rows: truth.len(),
            seed: stream.seed,
            gait: gait.clone(),
            noise: noise.clone(),
            columns: column_names(gait.n_feet),
            csv_hash: String::new(),
        };
        Self { meta, truth, stream }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("sidecar: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("CSV header does not match the sidecar schema")]
    HeaderMismatch,
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
    #[error("sidecar says {meta} rows, CSV has {csv}")]
    RowCount { meta: usize, csv: usize },
    #[error("CSV hash {computed} does not match sidecar {expected}; files do not belong together")]
    HashMismatch { expected: String, computed: String },
}

/// FNV-1a, 64 bit. Small, stable, and good enough to pair a CSV with its
/// sidecar; this is an integrity check, not a cryptographic one.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// The CSV and sidecar paths for a dataset stem: `stem.csv` and
/// `stem.meta.json`.
pub fn paths_for(stem: &Path) -> (PathBuf, PathBuf) {
    let mut csv = stem.as_os_str().to_owned();
    csv.push(".csv");
    let mut meta = stem.as_os_str().to_owned();
    meta.push(".meta.json");
    (PathBuf::from(csv), PathBuf::from(meta))
}

fn column_names(n_feet: usize) -> Vec<String> {
    let mut cols: Vec<String> = vec!["t".into()];
    let push_vec = |cols: &mut Vec<String>, base: &str| {
        for ax in ["x", "y", "z"] {
            cols.push(format!("{base}_{ax}"));
        }
    };
    let push_quat = |cols: &mut Vec<String>, base: &str| {
        for ax in ["x", "y", "z", "w"] {
            cols.push(format!("{base}_{ax}"));
        }
    };
    push_vec(&mut cols, "truth_r");
    push_vec(&mut cols, "truth_v");
    push_vec(&mut cols, "truth_a");
    push_quat(&mut cols, "truth_q");
    push_vec(&mut cols, "truth_w");
    for f in 0..n_feet {
        push_vec(&mut cols, &format!("foot{f}_p"));
        push_quat(&mut cols, &format!("foot{f}_z"));
        cols.push(format!("foot{f}_contact"));
    }
    push_vec(&mut cols, "imu_f");
    push_vec(&mut cols, "imu_w");
    for f in 0..n_feet {
        push_vec(&mut cols, &format!("kin{f}_p"));
        push_quat(&mut cols, &format!("kin{f}_z"));
    }
    push_vec(&mut cols, "bias_f");
    push_vec(&mut cols, "bias_w");
    cols
}

fn push_f64(line: &mut String, v: f64) {
    let _ = write!(line, ",{v}");
}

fn push_vec3(line: &mut String, v: &Vector3<f64>) {
    for k in 0..3 {
        push_f64(line, v[k]);
    }
}

fn push_quat(line: &mut String, q: &UnitQuat) {
    for v in q.to_array() {
        push_f64(line, v);
    }
}

/// Render the CSV text for a generated dataset.
fn render_csv(truth: &[TruthSample], stream: &SensorStream, n_feet: usize) -> String {
    let mut out = String::with_capacity(truth.len() * 64);
    out.push_str(&column_names(n_feet).join(","));
    out.push('\n');
    for (i, s) in truth.iter().enumerate() {
        let mut line = format!("{}", s.t);
        push_vec3(&mut line, &s.r);
        push_vec3(&mut line, &s.v);
        push_vec3(&mut line, &s.a);
        push_quat(&mut line, &s.q);
        push_vec3(&mut line, &s.omega);
        for ft in &s.feet {
            push_vec3(&mut line, &ft.p);
            push_quat(&mut line, &ft.z);
            let _ = write!(line, ",{}", ft.contact as u8);
        }
        push_vec3(&mut line, &stream.imu[i].f);
        push_vec3(&mut line, &stream.imu[i].omega);
        for f in 0..n_feet {
            match stream.kin[i].iter().find(|(foot, _)| *foot == f) {
                Some((_, m)) => {
                    push_vec3(&mut line, &m.pos);
                    push_quat(&mut line, &m.rot);
                }
                None => line.push_str(",,,,,,,"),
            }
        }
        push_vec3(&mut line, &stream.b_f[i]);
        push_vec3(&mut line, &stream.b_w[i]);
        line.push('\n');
        out.push_str(&line);
    }
    out
}

/// Write `stem.csv` and `stem.meta.json`.
pub fn save(
    stem: &Path,
    gait: &GaitConfig,
    noise: &NoiseConfig,
    truth: &[TruthSample],
    stream: &SensorStream,
) -> Result<DatasetMeta, DatasetError> {
    let n_feet = gait.n_feet;
    let csv = render_csv(truth, stream, n_feet);
    let meta = DatasetMeta {
        version: FORMAT_VERSION,
        dt: stream.dt,
        n_feet,
        n_rows: truth.len(),
        seed: stream.seed,
        gait: gait.clone(),
        noise: noise.clone(),
        columns: column_names(n_feet),
        csv_hash: format!("{:016x}", fnv1a(csv.as_bytes())),
    };
    let (csv_path, meta_path) = paths_for(stem);
    if let Some(dir) = csv_path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(csv_path, csv)?;
    fs::write(meta_path, serde_json::to_string_pretty(&meta)?)?;
    Ok(meta)
}

struct RowReader<'a> {
    fields: Vec<&'a str>,
    row: usize,
    at: usize,
}

impl<'a> RowReader<'a> {
    fn f64(&mut self) -> Result<f64, DatasetError> {
        let s = self.fields[self.at];
        self.at += 1;
        s.parse().map_err(|e| DatasetError::Row {
            row: self.row,
            msg: format!("column {}: {e}", self.at - 1),
        })
    }

    fn vec3(&mut self) -> Result<Vector3<f64>, DatasetError> {
        Ok(Vector3::new(self.f64()?, self.f64()?, self.f64()?))
    }

    fn quat(&mut self) -> Result<UnitQuat, DatasetError> {
        let x = self.f64()?;
        let y = self.f64()?;
        let z = self.f64()?;
        let w = self.f64()?;
        // The writer serialized a unit quaternion; renormalizing here
        // would disturb the restored bits.
        Ok(UnitQuat::new_unchecked(Vector3::new(x, y, z), w))
    }

    fn flag(&mut self) -> Result<bool, DatasetError> {
        let s = self.fields[self.at];
        self.at += 1;
        match s {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(DatasetError::Row {
                row: self.row,
                msg: format!("bad contact flag {other:?}"),
            }),
        }
    }

    fn maybe_kin(&mut self) -> Result<Option<FootKinematics>, DatasetError> {
        if self.fields[self.at].is_empty() {
            self.at += 7;
            return Ok(None);
        }
        Ok(Some(FootKinematics {
            pos: self.vec3()?,
            rot: self.quat()?,
        }))
    }
}

/// Load a dataset saved by [`save`], verifying the hash pairing first.
pub fn load(stem: &Path) -> Result<Dataset, DatasetError> {
    let (csv_path, meta_path) = paths_for(stem);
    let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(meta_path)?)?;
    if meta.version != FORMAT_VERSION {
        return Err(DatasetError::Version(meta.version));
    }
    let csv = fs::read_to_string(csv_path)?;
    let computed = format!("{:016x}", fnv1a(csv.as_bytes()));
    if computed != meta.csv_hash {
        return Err(DatasetError::HashMismatch {
            expected: meta.csv_hash.clone(),
            computed,
        });
    }

    let mut lines = csv.lines();
    let header = lines.next().unwrap_or("");
    if header != meta.columns.join(",") {
        return Err(DatasetError::HeaderMismatch);
    }
    let n_cols = meta.columns.len();

    let mut truth = Vec::with_capacity(meta.n_rows);
    let mut imu = Vec::with_capacity(meta.n_rows);
    let mut kin = Vec::with_capacity(meta.n_rows);
    let mut b_f = Vec::with_capacity(meta.n_rows);
    let mut b_w = Vec::with_capacity(meta.n_rows);

    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_cols {
            return Err(DatasetError::Row {
                row,
                msg: format!("{} fields, expected {n_cols}", fields.len()),
            });
        }
        let mut r = RowReader { fields, row, at: 0 };
        let t = r.f64()?;
        let pos = r.vec3()?;
        let v = r.vec3()?;
        let a = r.vec3()?;
        let q = r.quat()?;
        let omega = r.vec3()?;
        let mut feet = Vec::with_capacity(meta.n_feet);
        for _ in 0..meta.n_feet {
            feet.push(FootTruth {
                p: r.vec3()?,
                z: r.quat()?,
                contact: r.flag()?,
            });
        }
        let f = r.vec3()?;
        let w = r.vec3()?;
        let mut kin_row = Vec::new();
        for foot in 0..meta.n_feet {
            if let Some(m) = r.maybe_kin()? {
                kin_row.push((foot, m));
            }
        }
        b_f.push(r.vec3()?);
        b_w.push(r.vec3()?);

        truth.push(TruthSample {
            t,
            r: pos,
            v,
            a,
            q,
            omega,
            feet,
        });
        imu.push(ImuSample { f, omega: w });
        kin.push(kin_row);
    }

    if truth.len() != meta.n_rows {
        return Err(DatasetError::RowCount {
            meta: meta.n_rows,
            csv: truth.len(),
        });
    }

    let times: Vec<f64> = truth.iter().map(|s| s.t).collect();
    let flags: Vec<Vec<bool>> = truth
        .iter()
        .map(|s| s.feet.iter().map(|f| f.contact).collect())
        .collect();
    let events = contact::events_from_flags(&times, &flags);

    let stream = SensorStream {
        seed: meta.seed,
        dt: meta.dt,
        imu,
        kin,
        events,
        initial_contact: flags[0].clone(),
        b_f,
        b_w,
    };
    Ok(Dataset { meta, truth, stream })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gait::{generate_truth, BaseRotation};
    use crate::sensors::synthesize_sensors;

    fn sample_dataset() -> (GaitConfig, NoiseConfig, Vec<TruthSample>, SensorStream) {
        let gait = GaitConfig {
            n_steps: 2,
            lead_in: 0.2,
            lead_out: 0.2,
            base_rotation: Some(BaseRotation::default()),
            ..GaitConfig::default()
        };
        let noise = NoiseConfig::default();
        let truth = generate_truth(&gait).unwrap();
        let stream = synthesize_sensors(&truth, &noise, 12345);
        (gait, noise, truth, stream)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (gait, noise, truth, stream) = sample_dataset();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("walk");
        save(&stem, &gait, &noise, &truth, &stream).unwrap();
        let loaded = load(&stem).unwrap();

        assert_eq!(loaded.meta.n_rows, truth.len());
        assert_eq!(loaded.meta.seed, 12345);
        assert_eq!(loaded.stream.events, stream.events);
        assert_eq!(loaded.stream.initial_contact, stream.initial_contact);
        for i in 0..truth.len() {
            let (a, b) = (&loaded.truth[i], &truth[i]);
            assert_eq!(a.t, b.t);
            assert_eq!(a.r, b.r);
            assert_eq!(a.v, b.v);
            assert_eq!(a.a, b.a);
            assert_eq!(a.q.to_array(), b.q.to_array());
            assert_eq!(a.omega, b.omega);
            for f in 0..2 {
                assert_eq!(a.feet[f].p, b.feet[f].p);
                assert_eq!(a.feet[f].z.to_array(), b.feet[f].z.to_array());
                assert_eq!(a.feet[f].contact, b.feet[f].contact);
            }
            assert_eq!(loaded.stream.imu[i].f, stream.imu[i].f);
            assert_eq!(loaded.stream.imu[i].omega, stream.imu[i].omega);
            assert_eq!(loaded.stream.b_f[i], stream.b_f[i]);
            assert_eq!(loaded.stream.b_w[i], stream.b_w[i]);
            assert_eq!(loaded.stream.kin[i].len(), stream.kin[i].len());
            for k in 0..stream.kin[i].len() {
                assert_eq!(loaded.stream.kin[i][k].0, stream.kin[i][k].0);
                assert_eq!(loaded.stream.kin[i][k].1.pos, stream.kin[i][k].1.pos);
                assert_eq!(
                    loaded.stream.kin[i][k].1.rot.to_array(),
                    stream.kin[i][k].1.rot.to_array()
                );
            }
        }
    }

    #[test]
    fn tampered_csv_is_rejected() {
        let (gait, noise, truth, stream) = sample_dataset();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("walk");
        save(&stem, &gait, &noise, &truth, &stream).unwrap();
        let (csv_path, _) = paths_for(&stem);
        let mut text = fs::read_to_string(&csv_path).unwrap();
        text.push_str("tail\n");
        fs::write(&csv_path, text).unwrap();
        match load(&stem) {
            Err(DatasetError::HashMismatch { .. }) => {}
            other => panic!("expected HashMismatch, got {other:?}"),
        }
    }

    #[test]
    fn airborne_rows_have_empty_kinematic_cells() {
        let (gait, noise, truth, stream) = sample_dataset();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("walk");
        save(&stem, &gait, &noise, &truth, &stream).unwrap();
        let (csv_path, _) = paths_for(&stem);
        let text = fs::read_to_string(csv_path).unwrap();
        // Some row must contain an empty cell pair from a swing phase.
        assert!(text.contains(",,"));
        // And a specific airborne sample loads back as a missing entry.
        let i = truth
            .iter()
            .position(|s| !s.feet[1].contact)
            .expect("gait has a swing phase");
        let loaded = load(&stem).unwrap();
        assert!(loaded.stream.kin[i].iter().all(|(f, _)| *f != 1));
    }

    #[test]
    fn hash_is_the_reference_fnv1a() {
        // Reference values from the FNV test vectors.
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }
}
