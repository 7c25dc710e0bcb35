use std::fs;

use cavround::plot::speed_envelope;
use cavround::scenario::{
    export_results, load_run_record, parse_scenario, run_record, serialize_scenario,
};
use cavround::sim::{compute_metrics, run};

const TWO_PATHS: &str = r#"
[[paths]]
id = 1
length = 2.0
nodes = [{ id = 1, station = 0.8 }]

[[paths]]
id = 2
length = 2.4
nodes = [{ id = 1, station = 1.5 }]

[[arrivals]]
vehicle = 1
path = 1
time = 0.0
speed = 0.1

[[arrivals]]
vehicle = 2
path = 2
time = 0.5
speed = 0.12

[[arrivals]]
vehicle = 3
path = 1
time = 7.0
speed = 0.09
"#;

#[test]
fn exported_tables_load_back_exactly() {
    let spec = parse_scenario(TWO_PATHS).unwrap();
    let result = run(&spec).unwrap();
    let metrics = compute_metrics(&result).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = export_results(&result, Some(&metrics), dir.path()).unwrap();
    assert_eq!(manifest.len(), 10);
    assert!(manifest.iter().all(|p| p.is_file()));

    let loaded = load_run_record(dir.path()).unwrap();
    assert_eq!(loaded, run_record(&result));
    assert_eq!(loaded.schedule.len(), 3);
    assert_eq!(
        loaded
            .trajectories
            .iter()
            .filter(|r| r.vehicle == 2)
            .count(),
        result.traces[1].samples.len()
    );
}

#[test]
fn exported_scenario_round_trips() {
    let spec = parse_scenario(TWO_PATHS).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let result = run(&spec).unwrap();
    export_results(&result, None, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("scenario.toml")).unwrap();
    assert_eq!(text, serialize_scenario(&spec));
    assert_eq!(parse_scenario(&text).unwrap(), spec);
    assert!(!dir.path().join("metrics.json").exists());
}

#[test]
fn envelope_brackets_average_and_respects_limits() {
    let spec = parse_scenario(TWO_PATHS).unwrap();
    let rec = run_record(&run(&spec).unwrap());
    let env = speed_envelope(&rec);
    assert!(!env.is_empty());
    for e in &env {
        assert!(e.v_min <= e.v_avg && e.v_avg <= e.v_max, "{e:?}");
        assert!(e.v_min >= spec.params.v_min - 1e-9 && e.v_max <= spec.params.v_max + 1e-9);
    }
    // path 1 has two vehicles until the faster one leaves
    assert_eq!(env.iter().find(|e| e.path == 1).unwrap().vehicles, 2);
}
