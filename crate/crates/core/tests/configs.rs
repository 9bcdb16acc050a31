use std::path::PathBuf;

use mpdp::agent::{Hyperparams, RunConfig};

fn shipped(name: &str) -> RunConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    RunConfig::from_json_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn pendulum_desk_config_is_the_desk_preset() {
    let cfg = shipped("pendulum-desk.json");
    assert_eq!(cfg.env, "pendulum");
    assert_eq!(cfg.steps, 30_000);
    assert_eq!(cfg.hyperparams, Hyperparams::desk_scale());
    cfg.hyperparams.validate().unwrap();
}
