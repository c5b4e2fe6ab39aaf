use std::path::PathBuf;

use sba_harness::{load_config, parse_config, to_toml, HarnessError, ModelSpec};

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

const SMALL: &str = r#"
T = 5
n0 = 5
m0 = 5
reps = 3
seed = 11

[model]
kind = "quadratic"
designs = 4

[streams]
families = ["exponential", "exponential"]
theta = [2.0, 1.0]
costs = [1.0, 1.0]

[[partitions]]
streams = [0, 1]
budget = 10.0

[simulation]
budget = 20.0
"#;

#[test]
fn shipped_configs_round_trip() {
    for name in ["quadratic_two_budget.toml", "quadratic_given.toml", "inventory_s2.toml", "inventory_s4.toml"] {
        let cfg = load_config(&shipped(name)).unwrap();
        let again = parse_config(&to_toml(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again, "{name}");
    }
}

#[test]
fn shipped_configs_describe_the_benchmarks() {
    let q = load_config(&shipped("quadratic_two_budget.toml")).unwrap();
    assert_eq!((q.stream_count(), q.design_count(), q.stages), (6, 21, 400));
    let layout = q.layout().unwrap();
    assert_eq!(layout.partitions.iter().filter(|p| p.given).count(), 3);
    assert_eq!(layout.partitions[1].budget, 20.0);
    let inv = load_config(&shipped("inventory_s4.toml")).unwrap();
    assert!(matches!(inv.model, ModelSpec::Inventory { periods: 6, .. }));
    assert_eq!(inv.layout().unwrap().partitions[0].streams, vec![0, 1]);
}

#[test]
fn missing_stage_count_names_the_field() {
    let text = SMALL.replace("T = 5\n", "");
    let err = parse_config(&text).unwrap_err();
    assert!(matches!(err, HarnessError::Config(_)));
    assert!(err.to_string().contains("`T`"), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn schema_errors_point_at_the_line() {
    let text = SMALL.replace("reps = 3", "reps = \"three\"");
    let err = parse_config(&text).unwrap_err().to_string();
    assert!(err.contains("line 5"), "{err}");
    assert!(err.contains("reps"), "{err}");
}

#[test]
fn invalid_values_are_rejected() {
    let cases = [
        SMALL.replace("reps = 3", "reps = 0"),
        SMALL.replace("designs = 4", "designs = 0"),
        SMALL.replace("budget = 20.0", "budget = -1.0"),
        SMALL.replace("costs = [1.0, 1.0]", "costs = [1.0, 0.0]"),
        SMALL.replace("n0 = 5", "n0 = 1"),
        SMALL.replace("streams = [0, 1]\nbudget = 10.0", "streams = [0, 1]\nbatch = 10"),
        SMALL.replace("kind = \"quadratic\"", "kind = \"queue\""),
        SMALL.replace("seed = 11", "seed = 11\nwarmup = 3"),
    ];
    for (i, text) in cases.iter().enumerate() {
        assert!(matches!(parse_config(text), Err(HarnessError::Config(_))), "case {i}");
    }
}

#[test]
fn scalar_and_vector_parameters_are_both_accepted() {
    let cfg = parse_config(&SMALL.replace("theta = [2.0, 1.0]", "theta = [[2.0], 1.0]")).unwrap();
    assert_eq!(cfg.theta(), vec![vec![2.0], vec![1.0]]);
}
