use std::path::PathBuf;

use fracsource::ExperimentConfig;

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn reference_config_is_the_default() {
    let c = ExperimentConfig::load(&shipped("reference.toml")).unwrap();
    assert_eq!(c, ExperimentConfig::default());
}

#[test]
fn noisy_config_differs_only_in_noise_and_output() {
    let c = ExperimentConfig::load(&shipped("noisy.toml")).unwrap();
    assert_eq!(c.noise.level, 0.01);
    assert_eq!(c.noise.seed, 42);
    let mut d = c.clone();
    d.noise = Default::default();
    d.output = Default::default();
    assert_eq!(d, ExperimentConfig::default());
}

#[test]
fn shipped_configs_round_trip() {
    for name in ["reference.toml", "noisy.toml"] {
        let c = ExperimentConfig::load(&shipped(name)).unwrap();
        c.experiment().unwrap();
        let text = c.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml(), text);
        assert_eq!(back.hash(), c.hash());
    }
}
