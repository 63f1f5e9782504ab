//! End-to-end checks of the `convsim` binary.

use std::process::Command;

fn convsim(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_convsim"))
        .args(args)
        .output()
        .expect("binary should run")
}

fn stdout(args: &[&str]) -> String {
    let out = convsim(args);
    assert!(
        out.status.success(),
        "convsim {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn cost_report_is_deterministic() {
    let a = stdout(&["cost", "--builtin", "vgg16"]);
    let b = stdout(&["cost", "--builtin", "vgg16"]);
    assert_eq!(a, b);
    assert!(a.lines().count() == 15); // header + 13 layers + total
}

#[test]
fn csv_and_json_agree() {
    let csv = stdout(&["cost", "--builtin", "resnet50"]);
    let json = stdout(&["cost", "--builtin", "resnet50", "--format", "json"]);
    let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
    let rows = parsed["rows"].as_array().unwrap();
    let csv_rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len() + 1, csv_rows.len());
    for (jr, cr) in rows.iter().zip(&csv_rows) {
        let cols: Vec<&str> = cr.split(',').collect();
        assert_eq!(jr["layer"].as_str().unwrap(), cols[0]);
        assert_eq!(jr["cycles"].as_u64().unwrap().to_string(), cols[2]);
        assert_eq!(jr["dram_w_reads"].as_u64().unwrap().to_string(), cols[5]);
    }
    let total_cycles: u64 = rows.iter().map(|r| r["cycles"].as_u64().unwrap()).sum();
    assert_eq!(parsed["totals"]["cycles"].as_u64().unwrap(), total_cycles);
}

#[test]
fn simulate_matches_cost_counters() {
    let cost = stdout(&["cost", "--builtin", "resnet50-sparse"]);
    let sim = stdout(&["simulate", "--builtin", "resnet50-sparse"]);
    for (c, s) in cost.lines().skip(1).zip(sim.lines().skip(1)) {
        let cc: Vec<&str> = c.split(',').collect();
        let sc: Vec<&str> = s.split(',').collect();
        // layer, mode, cycles, stalls and the three DRAM counters agree.
        assert_eq!(&cc[..7], &sc[..7]);
    }
}

#[test]
fn network_round_trips_through_json() {
    let dir = std::env::temp_dir().join("convsim-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("net.json");
    let json = stdout(&["network", "--builtin", "vgg16"]);
    std::fs::write(&path, &json).unwrap();
    let from_file = stdout(&["cost", "--network", path.to_str().unwrap()]);
    let builtin = stdout(&["cost", "--builtin", "vgg16"]);
    assert_eq!(from_file, builtin);
}

#[test]
fn pruned_flag_equals_sparse_builtin() {
    let a = stdout(&["cost", "--builtin", "resnet50", "--pruned"]);
    let b = stdout(&["cost", "--builtin", "resnet50-sparse"]);
    assert_eq!(a, b);
}

#[test]
fn verify_passes_and_reports() {
    let out = convsim(&["verify", "--cases", "8"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        text.lines().filter(|l| l.starts_with("ok seed=")).count(),
        8
    );
    assert!(text.contains("8 randomized layers, 0 failure(s)"));
}

#[test]
fn sweep_emits_one_row_per_value() {
    let out = stdout(&[
        "sweep",
        "--builtin",
        "vgg16",
        "--param",
        "u",
        "--values",
        "32,64,128",
    ]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("param,value"));
    assert!(lines.iter().skip(1).all(|l| l.starts_with("u,")));
}

#[test]
fn trace_file_matches_reported_cycles() {
    let dir = std::env::temp_dir().join("convsim-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let trace = dir.join("trace.csv");
    // A one-layer network keeps the trace small.
    let net =
        r#"{"name":"tiny","layers":[{"name":"only","il":8,"ic":2,"fl":3,"k":4,"s":1,"z":1}]}"#;
    let net_path = dir.join("tiny.json");
    std::fs::write(&net_path, net).unwrap();
    let report = stdout(&[
        "simulate",
        "--network",
        net_path.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    let traced: u64 = std::fs::read_to_string(&trace)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap())
        .sum();
    let layer_cycles: u64 = report
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(traced, layer_cycles);
}

#[test]
fn errors_exit_nonzero() {
    assert!(!convsim(&["cost", "--builtin", "alexnet"]).status.success());
    assert!(!convsim(&["cost"]).status.success());
    assert!(!convsim(&[
        "sweep",
        "--builtin",
        "vgg16",
        "--param",
        "bogus",
        "--values",
        "1"
    ])
    .status
    .success());
    assert!(!convsim(&["cost", "--builtin", "vgg16", "--pruned"])
        .status
        .success());
}
