use fedfair::fl::{run_fair_fedavg, run_fedavg, Simulation};
use fedfair::ingest::{generate_synthetic, SyntheticSpec};
use fedfair::{FLConfig, FairRegConfig};

fn config(rounds: usize, fraction: f64) -> FLConfig {
    FLConfig {
        rounds,
        client_fraction: fraction,
        batch_size: 32,
        seed: 5,
        ..FLConfig::default()
    }
}

#[test]
fn fifty_one_clients_at_fraction_point_two_sample_ten() {
    let fed = generate_synthetic(&SyntheticSpec::two_group("SEX", 51, 40, [0.6, 0.4], 3)).unwrap();
    let cfg = config(4, 0.2);
    assert_eq!(cfg.participants(51), 10);
    let sim = Simulation::new(&fed, &cfg, None).unwrap();
    let mut seen = Vec::new();
    for r in 0..4 {
        let picked = sim.sample(r);
        assert_eq!(picked.len(), 10);
        let mut sorted = picked.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 10, "sampling without replacement");
        seen.push(picked);
    }
    assert!(seen.windows(2).any(|w| w[0] != w[1]), "rounds draw different clients");
    let (_, history) = run_fedavg(&fed, &cfg).unwrap();
    assert!(history.rounds.iter().all(|r| r.participants.len() == 10));
}

#[test]
fn runs_are_reproducible() {
    let fed = generate_synthetic(&SyntheticSpec::two_group("SEX", 5, 120, [0.7, 0.3], 8)).unwrap();
    let cfg = config(6, 0.6);
    let (a, ha) = run_fedavg(&fed, &cfg).unwrap();
    let (b, hb) = run_fedavg(&fed, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    let other = FLConfig { seed: 6, ..cfg };
    let (c, _) = run_fedavg(&fed, &other).unwrap();
    assert_ne!(a, c);
}

#[test]
fn fair_history_echoes_the_target_and_has_a_dd_column() {
    let fed = generate_synthetic(&SyntheticSpec::two_group("SEX", 4, 150, [0.7, 0.3], 2)).unwrap();
    let fair = FairRegConfig {
        lambda: 0.5,
        target_dd: 0.05,
        target_attr: "SEX".into(),
    };
    let (_, history) = run_fair_fedavg(&fed, &config(5, 1.0), &fair).unwrap();
    let csv = history.to_csv();
    assert_eq!(
        csv.lines().next().unwrap(),
        "round,participants,sizes,train_accuracy,validation_accuracy,dd_SEX"
    );
    assert_eq!(csv.lines().count(), 6);
    let json: serde_json::Value = serde_json::from_str(&history.to_json().unwrap()).unwrap();
    assert_eq!(json["fair"]["target_dd"], 0.05);
    assert_eq!(json["fair"]["target_attr"], "SEX");
    assert!(json["target_met"].is_boolean());

    let (_, plain) = run_fedavg(&fed, &config(5, 1.0)).unwrap();
    assert!(plain.fair.is_none() && plain.target_met.is_none());
}

#[test]
fn invalid_settings_are_rejected() {
    let fed = generate_synthetic(&SyntheticSpec::two_group("SEX", 2, 60, [0.5, 0.5], 1)).unwrap();
    assert!(run_fedavg(&fed, &config(0, 1.0)).is_err());
    assert!(run_fedavg(&fed, &config(2, 0.0)).is_err());
    let fair = FairRegConfig {
        lambda: 1.5,
        target_dd: 0.05,
        target_attr: "SEX".into(),
    };
    assert!(run_fair_fedavg(&fed, &config(2, 1.0), &fair).is_err());
}
