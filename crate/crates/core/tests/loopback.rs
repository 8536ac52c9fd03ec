mod common;

use std::time::Duration;

use common::{data_samples, run_loopback, LoopbackSetup};
use keygen_energy::meter::{Segment, SimProfile};
use keygen_energy::results::SessionStatus;
use keygen_energy::runner::ExperimentSpec;

#[test]
fn null_run_end_to_end() {
    let out = run_loopback(LoopbackSetup::null_run(10));
    assert_eq!(out.report.iterations_completed, 10);
    assert_eq!(out.data_files.len(), 1);
    assert_eq!(out.stored.len(), 1);
    let row = &out.rows[0];
    assert_eq!(row.status, SessionStatus::Ok);
    assert_eq!(row.algorithm, "NULL");

    let samples = data_samples(&out.data_files[0]);
    let span = samples.last().unwrap().0 - samples[0].0;
    assert!((row.gross_joules - 5.0 * span).abs() <= 7.2, "{} vs {}", row.gross_joules, 5.0 * span);
    assert!((samples.last().unwrap().1 - row.gross_joules).abs() <= 0.05);
}

#[test]
fn longer_run_tracks_the_integral() {
    let mut setup = LoopbackSetup::null_run(400);
    setup.speedup = 20.0;
    let out = run_loopback(setup);
    let row = &out.rows[0];
    let samples = data_samples(&out.data_files[0]);
    let span = samples.last().unwrap().0 - samples[0].0;
    assert!(span > 1.5, "{span}");
    assert!((row.gross_joules - 5.0 * span).abs() <= 7.2);
    assert!(samples.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 >= w[0].1));
}

#[test]
fn lost_stop_is_truncated_by_idle_timeout() {
    let profile = SimProfile::new(vec![
        Segment { duration: 1.5, power: 5.0 },
        Segment { duration: 1.0, power: 0.0 },
    ])
    .unwrap();
    let out = run_loopback(LoopbackSetup {
        profile,
        spec: ExperimentSpec::new("NULL", 10).with_settle(Duration::from_secs(1)),
        speedup: 10.0,
        drop_stop: true,
        idle_timeout: Duration::from_secs(3),
    });
    assert_eq!(out.stored.len(), 1);
    assert_eq!(out.rows[0].status, SessionStatus::Truncated);
    assert_eq!(out.stored[0].status, SessionStatus::Truncated);
}
