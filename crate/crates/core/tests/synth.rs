use csi_humidity::labels::{class_set, ClassLabel, Resolution};
use csi_humidity::stats::pearson;
use csi_humidity::synth::{generate_series, humidity_trajectory, ScenarioConfig};
use proptest::prelude::*;

fn short() -> ScenarioConfig {
    ScenarioConfig {
        ramp_end: 50.0,
        depletion_duration: 3600.0,
        ..Default::default()
    }
}

#[test]
fn clean_mean_amplitude_falls_with_humidity() {
    let run = generate_series(&ScenarioConfig::default()).unwrap();
    let truth = run.clean.humidity().unwrap();
    let r = pearson(&run.clean.mean_trace(), truth);
    assert!(r < -0.9, "correlation {r}");
}

#[test]
fn default_trajectory_shape() {
    let cfg = ScenarioConfig::default();
    let traj = humidity_trajectory(&cfg);
    assert_eq!(cfg.plateau_count(), 31);
    assert!(traj
        .iter()
        .all(|&(_, h)| (cfg.ramp_start..=cfg.ramp_end).contains(&h)));
    let ramp_frames = (31.0 * cfg.dwell() * cfg.frame_rate) as usize;
    let mut levels: Vec<f64> = traj[..ramp_frames].iter().map(|p| p.1).collect();
    levels.dedup();
    assert_eq!(levels.len(), 31);
    assert_eq!(levels[0], 40.0);
    assert_eq!(levels[30], 70.0);
    let end = traj.last().unwrap().1;
    assert!(
        (end - cfg.ramp_start).abs() <= 0.01 * cfg.ramp_start,
        "decay ends at {end}"
    );
}

#[test]
fn disturbance_log_is_periodic_and_disjoint() {
    let cfg = short();
    let run = generate_series(&cfg).unwrap();
    let events = &run.log.events;
    assert_eq!(
        events.len(),
        (cfg.duration() / cfg.pr_period).floor() as usize
    );
    for e in events {
        assert!(e.start >= 0.0 && e.end <= cfg.duration() && e.start < e.end);
        let len = e.end - e.start;
        assert!((cfg.pr_min_duration..=cfg.pr_max_duration).contains(&len));
    }
    assert!(events.windows(2).all(|w| w[0].end <= w[1].start));
}

#[test]
fn exact_labels_give_the_full_class_set() {
    let cfg = ScenarioConfig {
        label_noise_std: 0.0,
        ..Default::default()
    };
    let run = generate_series(&cfg).unwrap();
    let ramp_frames = (cfg.plateau_count() as f64 * cfg.dwell() * cfg.frame_rate) as usize;
    let labels = &run.noisy.humidity().unwrap()[..ramp_frames];
    let set = class_set(labels, Resolution::new(5).unwrap()).unwrap();
    assert_eq!(
        set,
        (40..=70).step_by(5).map(ClassLabel).collect::<Vec<_>>()
    );
}

#[test]
fn processes_draw_from_independent_streams() {
    let a = generate_series(&short()).unwrap();
    let b = generate_series(&ScenarioConfig {
        label_noise_std: 0.0,
        ..short()
    })
    .unwrap();
    assert_eq!(a.noisy.amps(), b.noisy.amps());
    assert_eq!(a.log, b.log);
    assert_ne!(a.noisy.humidity(), b.noisy.humidity());
}

#[test]
fn scenario_file_round_trip() {
    let cfg = short();
    assert_eq!(ScenarioConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    assert!(ScenarioConfig::from_toml("ramp_start = 80.0").is_err());
    assert!(ScenarioConfig::from_toml("unknown_key = 1").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn seeded_runs_are_reproducible(seed in any::<u64>()) {
        let cfg = ScenarioConfig { ramp_end: 42.0, depletion_duration: 600.0, seed, ..Default::default() };
        let (a, b) = (generate_series(&cfg).unwrap(), generate_series(&cfg).unwrap());
        prop_assert_eq!(a.noisy, b.noisy);
        prop_assert_eq!(a.clean, b.clean);
        prop_assert_eq!(a.log, b.log);
    }
}
