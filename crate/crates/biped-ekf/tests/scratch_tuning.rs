use biped_ekf::dataset::Dataset;
use biped_ekf::experiment::{attitude_error, run_filter, RunConfig};
use biped_ekf::gait::{generate_truth, BaseRotation, GaitConfig};
use biped_ekf::model::{FilterMode, NoiseConfig};
use biped_ekf::report::error_report;
use biped_ekf::sensors::synthesize_sensors;

#[test]
#[ignore]
fn probe_nominal_walk() {
    for (rp, yaw) in [(0.03, 0.2), (0.05, 0.2), (0.02, 0.15), (0.05, 0.1)] {
        let gait = GaitConfig {
            n_steps: 147,
            base_rotation: Some(BaseRotation {
                roll_amplitude: rp,
                pitch_amplitude: rp,
                yaw_amplitude: yaw,
                ..BaseRotation::default()
            }),
            ..GaitConfig::default()
        };
        let noise = NoiseConfig::default();
        for seed in [42u64, 7, 99] {
            let truth = generate_truth(&gait).unwrap();
            let stream = synthesize_sensors(&truth, &noise, seed);
            let ds = Dataset::in_memory(&gait, &noise, truth.clone(), stream);
            let mut yaws = Vec::new();
            let mut worst_cov = 1.0f64;
            let mut oks = Vec::new();
            for mode in [FilterMode::PointFoot, FilterMode::FlatFoot] {
                let mut cfg = RunConfig::new(mode);
                cfg.filter.contact.zero_cross_on_reset = false;
                cfg.filter.init.sigma_bw = 1e-2;
                let run = run_filter(&ds, &cfg).unwrap();
                let rep = error_report(&ds, &run);
                let r = &rep.overall.rms;
                let mut hit = [0usize; 6];
                let n = run.records.len();
                for (rec, tr) in run.records.iter().zip(&ds.truth) {
                    let dv = rec.v - tr.v;
                    let dphi = attitude_error(&tr.q, &rec.q);
                    let ch = [
                        (dv.x, rec.sigma.v.x),
                        (dv.y, rec.sigma.v.y),
                        (dv.z, rec.sigma.v.z),
                        (dphi.x, rec.sigma.phi.x),
                        (dphi.y, rec.sigma.phi.y),
                        (rec.r.z - tr.r.z, rec.sigma.r.z),
                    ];
                    for (k, (e, s)) in ch.iter().enumerate() {
                        if e.abs() <= 3.0 * s {
                            hit[k] += 1;
                        }
                    }
                }
                for h in hit {
                    worst_cov = worst_cov.min(h as f64 / n as f64);
                }
                yaws.push(r[8]);
                oks.push((r[0], r[1]));
            }
            println!(
                "rp={rp} yaw={yaw} seed={seed}: point yaw {:.4} flat yaw {:.4} ratio {:.3} | rx {:.3}/{:.3} ry {:.3}/{:.3} | worst cov {:.2}%",
                yaws[0],
                yaws[1],
                yaws[1] / yaws[0],
                oks[1].0,
                oks[0].0,
                oks[1].1,
                oks[0].1,
                100.0 * worst_cov
            );
        }
    }
}
