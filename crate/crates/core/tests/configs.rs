mod common;

use std::path::PathBuf;

use red_seis::experiments::ExperimentConfig;
use red_seis::train::TrainConfig;

fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

#[test]
fn example_experiment_configs_parse() {
    let dir = workspace_root().join("configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let text = std::fs::read_to_string(&path).unwrap();
            ExperimentConfig::from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 4);
}

#[test]
fn bank_training_configs_parse() {
    for name in ["wide.json", "low.json"] {
        let text = std::fs::read_to_string(common::bank_dir().join(name)).unwrap();
        let cfg = TrainConfig::from_json(&text).unwrap();
        assert_eq!((cfg.depth, cfg.channels, cfg.steps_per_epoch), (5, 16, Some(2000)));
    }
}
