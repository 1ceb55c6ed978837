use dbl_core::headway::{headways, BusPosition};
use dbl_core::reference::{self, toy_config};
use dbl_core::sim::{run_simulation_with, SimOptions};
use dbl_core::{run_simulation, DeploymentPattern, Line, LookaheadController, NullController, ReplicationSeed};
use proptest::prelude::*;

fn quiet_ring(n_stops: usize, n_buses: usize) -> Line {
    let mut cfg = toy_config(n_stops, n_buses, &[], 0.0);
    for seg in &mut cfg.segments {
        seg.noise_sigma_s = Some(0.0);
    }
    Line::new(cfg).unwrap()
}

#[test]
fn same_seed_same_outcome() {
    let line = reference::line();
    let ctl = LookaheadController::new(&line, 2, 0.5).unwrap();
    let pattern = line.preset("5BLS").unwrap();
    let seed = ReplicationSeed::new(42, 3);
    let a = run_simulation(&line, &pattern, &ctl, seed).unwrap();
    let b = run_simulation(&line, &pattern, &ctl, seed).unwrap();
    assert_eq!(a, b);
    let c = run_simulation(&line, &pattern, &ctl, ReplicationSeed::new(42, 4)).unwrap();
    assert_ne!(a.ctp_records, c.ctp_records);
}

#[test]
fn passengers_are_conserved_and_capacity_holds() {
    let line = reference::line();
    let max_capacity = line.buses.iter().map(|b| b.capacity).max().unwrap() as usize;
    for rep in 0..4 {
        let out = run_simulation(&line, &DeploymentPattern::empty(), &NullController, ReplicationSeed::new(9, rep)).unwrap();
        let p = out.passengers;
        assert!(p.generated > 0);
        assert_eq!(p.generated, p.completed + p.onboard_at_end + p.waiting_at_end);
        assert_eq!(p.completed, out.completed_trips.len());
        assert!(p.max_load <= max_capacity);
        for trip in &out.completed_trips {
            assert!(trip.wait_s >= 0.0 && trip.ride_s > 0.0, "{trip:?}");
        }
    }
}

#[test]
fn trajectories_move_forward_one_stop_at_a_time() {
    let line = reference::line();
    let out = run_simulation(&line, &DeploymentPattern::empty(), &NullController, ReplicationSeed::new(1, 0)).unwrap();
    let n = line.n_stops();
    for points in &out.trajectories {
        for w in points.windows(2) {
            assert_eq!(w[1].stop, (w[0].stop + 1) % n);
            assert!(w[1].arrival_s > w[0].departure_s);
        }
        for p in points {
            assert!(p.departure_s >= p.arrival_s);
        }
    }
}

#[test]
fn uncontrolled_headways_add_up_to_one_lap() {
    let line = reference::line();
    let out = run_simulation(&line, &DeploymentPattern::empty(), &NullController, ReplicationSeed::new(5, 0)).unwrap();
    let lap = line.lap_time_s();
    let mut last = f64::NEG_INFINITY;
    for rec in &out.ctp_records {
        let sum: f64 = rec.headways.iter().sum();
        assert!((sum - lap).abs() < 1e-6, "{sum} vs {lap}");
        assert!(rec.time_s >= last);
        assert!(rec.time_s <= line.horizon_s);
        last = rec.time_s;
    }
}

#[test]
fn one_record_per_departure() {
    let line = reference::line();
    let out = run_simulation(&line, &DeploymentPattern::empty(), &NullController, ReplicationSeed::new(8, 0)).unwrap();
    let departures = out
        .trajectories
        .iter()
        .flatten()
        .filter(|p| p.departure_s <= line.horizon_s)
        .count();
    assert_eq!(out.ctp_records.len(), departures);
}

#[test]
fn noiseless_empty_ring_repeats_every_lap() {
    let line = quiet_ring(6, 3);
    let out = run_simulation(&line, &DeploymentPattern::empty(), &NullController, ReplicationSeed::new(0, 0)).unwrap();
    let lap = line.lap_time_s();
    for points in &out.trajectories {
        let at_first: Vec<f64> = points.iter().filter(|p| p.stop == 0).map(|p| p.arrival_s).collect();
        assert!(at_first.len() >= 3);
        for w in at_first.windows(2) {
            assert!((w[1] - w[0] - lap).abs() < 1e-6);
        }
    }
    for rec in &out.ctp_records {
        for h in &rec.headways {
            assert!((h - lap / 3.0).abs() < 1e-6, "{h}");
        }
    }
    assert!(!out.bunched);
}

#[test]
fn pinned_buses_are_reported_as_bunched() {
    // two buses starting at the same stop drive together forever
    let mut cfg = toy_config(6, 2, &[], 0.0);
    for seg in &mut cfg.segments {
        seg.noise_sigma_s = Some(0.0);
    }
    cfg.buses[1].initial_stop = cfg.buses[0].initial_stop;
    let line = Line::new(cfg).unwrap();
    let out = run_simulation(&line, &DeploymentPattern::empty(), &NullController, ReplicationSeed::new(0, 0)).unwrap();
    assert!(out.bunched);
}

#[test]
fn position_samples_are_kept_on_request() {
    let line = quiet_ring(4, 2);
    let options = SimOptions {
        keep_samples: true,
        ..SimOptions::default()
    };
    let out = run_simulation_with(&line, &DeploymentPattern::empty(), &NullController, ReplicationSeed::new(0, 0), &options).unwrap();
    assert_eq!(out.samples.len(), (line.horizon_s / 10.0) as usize + 1);
    assert!(out.samples.iter().all(|s| s.offsets_km.len() == 2));
}

proptest! {
    #[test]
    fn headways_ignore_a_common_shift_on_a_uniform_ring(
        offsets in prop::collection::vec(0.0f64..8.0, 2..6),
        shift in 0.0f64..8.0,
    ) {
        let line = quiet_ring(8, 2);
        let at = |xs: &[f64]| xs.iter().map(|&x| BusPosition::at(line.wrap(x))).collect::<Vec<_>>();
        let shifted: Vec<f64> = offsets.iter().map(|x| x + shift).collect();
        let a = headways(&line, &at(&offsets));
        let b = headways(&line, &at(&shifted));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-6, "{} vs {}", x, y);
        }
    }

    #[test]
    fn unregulated_headways_sum_to_a_lap(offsets in prop::collection::vec(0.0f64..21.35, 2..12)) {
        let line = reference::line();
        let pos: Vec<_> = offsets.iter().map(|&x| BusPosition::at(line.wrap(x))).collect();
        let sum: f64 = headways(&line, &pos).iter().sum();
        prop_assert!((sum - line.lap_time_s()).abs() < 1e-6);
    }
}
