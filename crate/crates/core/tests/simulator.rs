mod common;

use common::oracle_sim_counts;
use evlink::event::{Polarity, SensorGeometry};
use evlink::ingest::{simulate_dvs, IntensityFrame, MotionTrajectory, SimulatorConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn frame(w: u32, h: u32, px: Vec<f64>) -> IntensityFrame {
    IntensityFrame::new(SensorGeometry::new(w, h).unwrap(), px).unwrap()
}

#[test]
fn constant_image_is_silent() {
    let img = frame(16, 16, vec![0.4; 256]);
    let traj = MotionTrajectory::circular(290_000, 2.0, 90_000).unwrap();
    assert!(simulate_dvs(&img, &traj, &SimulatorConfig::default()).unwrap().is_empty());
}

#[test]
fn step_edge_events_follow_the_edge() {
    let (w, h) = (32u32, 8u32);
    let px = (0..w * h).map(|i| if i % w < 10 { 0.2 } else { 0.8 }).collect();
    let img = frame(w, h, px);
    let traj = MotionTrajectory::linear(100_000, 12.0, 0.0).unwrap();
    let s = simulate_dvs(&img, &traj, &SimulatorConfig::default()).unwrap();
    assert!(!s.is_empty());
    for e in s.events() {
        let (dx, _) = traj.offset_at(e.t as f64);
        let edge = 9.5 + dx;
        assert!((e.x as f64 - edge).abs() <= 1.0, "{e:?} edge {edge}");
        // dark region moves right over bright pixels
        assert_eq!(e.p, Polarity::Off);
    }
}

#[test]
fn counts_match_log_difference_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..10 {
        let px: Vec<f64> = (0..256).map(|_| rng.gen_range(0.0..1.0)).collect();
        let img = frame(16, 16, px.clone());
        let traj = if trial % 2 == 0 {
            MotionTrajectory::circular(60_000, 2.5, 30_000).unwrap()
        } else {
            MotionTrajectory::linear(40_000, 3.0, -1.5).unwrap()
        };
        let cfg = SimulatorConfig::default();
        let s = simulate_dvs(&img, &traj, &cfg).unwrap();
        let offsets: Vec<(f64, f64)> = traj
            .sample_times(cfg.frame_rate)
            .into_iter()
            .map(|t| traj.offset_at(t))
            .collect();
        let oracle = oracle_sim_counts(&px, 16, 16, &offsets, cfg.threshold, cfg.epsilon);
        let mut got = vec![(0u32, 0u32); 256];
        for e in s.events() {
            let slot = &mut got[(e.y * 16 + e.x) as usize];
            match e.p {
                Polarity::On => slot.0 += 1,
                Polarity::Off => slot.1 += 1,
            }
        }
        assert_eq!(got, oracle, "trial {trial}");
    }
}

#[test]
fn higher_threshold_never_adds_events() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let px: Vec<f64> = (0..256).map(|_| rng.gen_range(0.05..1.0)).collect();
    let img = frame(16, 16, px);
    let traj = MotionTrajectory::circular(90_000, 2.0, 90_000).unwrap();
    let mut last = usize::MAX;
    for c in [0.1, 0.2, 0.3, 0.5, 0.8] {
        let cfg = SimulatorConfig {
            threshold: c,
            ..Default::default()
        };
        let n = simulate_dvs(&img, &traj, &cfg).unwrap().len();
        assert!(n <= last, "C = {c}: {n} > {last}");
        last = n;
    }
}
