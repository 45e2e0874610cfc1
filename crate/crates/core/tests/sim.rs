mod common;

use common::{random_model, Prior};
use mcckf::model::{satellite_model, LtiModel};
use mcckf::sim::{
    load_trajectory, save_trajectory, shot_schedule, simulate, ProcessTargets, ShotNoiseSpec,
    ShotTargets,
};
use mcckf::{Error, Mat};

fn satellite() -> LtiModel {
    satellite_model(0.63e-2).unwrap()
}

#[test]
fn file_roundtrip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.json");
    let t = simulate(&satellite(), 300, Some(&ShotNoiseSpec::default()), 7).unwrap();
    save_trajectory(&t, &path).unwrap();
    let back = load_trajectory(&path).unwrap();
    assert_eq!(back, t);
    assert_eq!(back.measurement_digest(), t.measurement_digest());
    assert_eq!(back.states.len(), 301);
}

#[test]
fn truncated_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.json");
    let t = simulate(&satellite(), 20, None, 1).unwrap();
    save_trajectory(&t, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, &text[..text.len() / 2]).unwrap();
    assert!(matches!(load_trajectory(&path), Err(Error::Json { .. })));
}

#[test]
fn inconsistent_lengths_are_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.json");
    let mut t = simulate(&satellite(), 20, None, 1).unwrap();
    t.measurements.pop();
    save_trajectory(&t, &path).unwrap();
    assert!(matches!(load_trajectory(&path), Err(Error::Data(_))));
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_trajectory(std::path::Path::new("/nonexistent/t.json")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
}

#[test]
fn measurements_are_consistent_with_stored_noise() {
    let model = satellite();
    let t = simulate(&model, 300, Some(&ShotNoiseSpec::default()), 5).unwrap();
    for k in 0..=300 {
        let hx = model.h.mul(&t.state(k)).unwrap();
        let v = Mat::column(&t.measurement_noise[k]);
        let diff = t.measurement(k).sub(&hx.add(&v).unwrap()).unwrap();
        assert!(diff.max_abs() <= 1e-12 * (1.0 + hx.max_abs()), "k={k}");
    }
    for k in 0..300 {
        let next = model
            .f
            .mul(&t.state(k))
            .unwrap()
            .add(&model.g.mul(&Mat::column(&t.process_noise[k])).unwrap())
            .unwrap();
        assert!(next.sub(&t.state(k + 1)).unwrap().max_abs() <= 1e-12 * (1.0 + next.max_abs()));
    }
}

#[test]
fn deterministic_channels_stay_noise_free() {
    // only channel 4 has nonzero variance, so only it receives impulses
    let t = simulate(&satellite(), 300, Some(&ShotNoiseSpec::default()), 9).unwrap();
    for w in &t.process_noise {
        assert_eq!(&w[..3], &[0.0, 0.0, 0.0]);
    }
}

#[test]
fn schedule_depends_only_on_seed_spec_and_length() {
    let spec = ShotNoiseSpec::default();
    let a = shot_schedule(&spec, 300, 2, 17).unwrap();
    let b = shot_schedule(&spec, 300, 2, 17).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.instants.len(), 28);
    assert!(a
        .impulses
        .iter()
        .flatten()
        .all(|m| [0.0, 1.0, 2.0, 3.0].contains(m)));

    // the schedule does not depend on the model
    let t1 = simulate(&satellite(), 300, Some(&spec), 17).unwrap();
    let t2 = simulate(&satellite_model(0.63e-4).unwrap(), 300, Some(&spec), 17).unwrap();
    assert_eq!(t1.corrupted_instants, t2.corrupted_instants);
    assert_eq!(t1.corrupted_instants, a.instants);
}

#[test]
fn impulses_appear_only_at_corrupted_instants() {
    let model = satellite();
    let spec = ShotNoiseSpec {
        magnitudes: vec![1000.0],
        ..ShotNoiseSpec::default()
    };
    let t = simulate(&model, 300, Some(&spec), 4).unwrap();
    let big: Vec<usize> = (0..=300)
        .filter(|&k| t.measurement_noise[k][0] > 500.0)
        .collect();
    assert_eq!(big, t.corrupted_instants);
    let big_w: Vec<usize> = (0..300)
        .filter(|&k| t.process_noise[k][3] > 500.0)
        .collect();
    assert_eq!(big_w, t.corrupted_instants);
}

#[test]
fn measurement_only_targets_leave_process_noise_alone() {
    let spec = ShotNoiseSpec {
        magnitudes: vec![1000.0],
        targets: ShotTargets {
            measurement: true,
            process: ProcessTargets::None,
        },
        ..ShotNoiseSpec::default()
    };
    let t = simulate(&satellite(), 300, Some(&spec), 4).unwrap();
    assert!(t.process_noise.iter().all(|w| w[3].abs() < 1.0));
}

#[test]
fn bad_shot_specs_are_rejected() {
    let model = satellite();
    let cases = [
        ShotNoiseSpec {
            fraction: 1.5,
            ..ShotNoiseSpec::default()
        },
        ShotNoiseSpec {
            window_start: 300,
            ..ShotNoiseSpec::default()
        },
        ShotNoiseSpec {
            magnitudes: vec![],
            ..ShotNoiseSpec::default()
        },
        ShotNoiseSpec {
            targets: ShotTargets {
                measurement: true,
                process: ProcessTargets::Channels(vec![4]),
            },
            ..ShotNoiseSpec::default()
        },
    ];
    for spec in cases {
        let err = simulate(&model, 300, Some(&spec), 0).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)), "{spec:?}: {err}");
    }
    assert!(simulate(&model, 0, None, 0).is_err());
}

#[test]
fn process_noise_covariance_matches_q() {
    let model = random_model(3, Prior::Full);
    let n = 100_000;
    let t = simulate(&model, n, None, 21).unwrap();
    let q = model.noise_dim();
    let mut cov = Mat::zeros(q, q);
    for w in &t.process_noise {
        let w = Mat::column(w);
        cov.add_scaled_assign(1.0 / n as f64, &w.mul_t(&w).unwrap())
            .unwrap();
    }
    let rel = cov.sub(&model.q).unwrap().frobenius_norm() / model.q.frobenius_norm();
    assert!(rel < 0.05, "relative error {rel}");

    let m = model.meas_dim();
    let mut rcov = Mat::zeros(m, m);
    for v in &t.measurement_noise {
        let v = Mat::column(v);
        rcov.add_scaled_assign(1.0 / (n + 1) as f64, &v.mul_t(&v).unwrap())
            .unwrap();
    }
    let rel = rcov.sub(&model.r).unwrap().frobenius_norm() / model.r.frobenius_norm();
    assert!(rel < 0.05, "relative error {rel}");
}
