use std::process::{Command, Output};

fn rwre(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rwre"))
        .args(args)
        .current_dir(concat!(env!("CARGO_MANIFEST_DIR"), "/../.."))
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn classify_emits_report_json() {
    let o = rwre(&["classify", "--config", "configs/binary_half.toml", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["classification"], "CriticalNull_NegDrift");
    assert_eq!(v["kappa"], "+inf");
    assert_eq!(v["schema_version"], "rwre-report/1");
}

#[test]
fn classify_csv_has_header_and_row() {
    let o = rwre(&["classify", "--law", "ternary_half", "--format", "csv"]);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("rho_one,"));
    assert!(lines[1].contains("1.58496250072"));
}

#[test]
fn missing_seed_is_a_usage_error() {
    for cmd in ["walk", "cascade", "network", "couple", "sample-tree"] {
        let o = rwre(&[cmd, "--law", "binary_half", "--steps", "10", "--depth", "2"]);
        assert_eq!(o.status.code(), Some(2), "{cmd}");
    }
    let o = rwre(&["verify", "--suite", "core", "--replicas", "100"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_problems_exit_2() {
    let o = rwre(&["classify", "--config", "configs/does_not_exist.toml"]);
    assert_eq!(o.status.code(), Some(2));
    let o = rwre(&["classify", "--law", "no_such_law"]);
    assert_eq!(o.status.code(), Some(2));
    let o = rwre(&["verify", "--suite", "everything", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
    // IMT walks need a critical law.
    let o = rwre(&[
        "walk",
        "--law",
        "binary_one",
        "--imt",
        "--steps",
        "10",
        "--seed",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_is_byte_identical_across_runs_and_workers() {
    let args = [
        "verify",
        "--suite",
        "core",
        "--seed",
        "7",
        "--law",
        "two_atom_critical",
        "--replicas",
        "2000",
    ];
    let a = rwre(&args);
    assert_eq!(
        a.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&a.stderr)
    );
    let b = rwre(&args);
    let mut with_workers = vec!["--workers", "3"];
    with_workers.extend_from_slice(&args);
    let c = rwre(&with_workers);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["schema_version"], "rwre-report/1");
    assert_eq!(v["passed"], true);
}

#[test]
fn stochastic_commands_are_reproducible() {
    let runs: [&[&str]; 5] = [
        &[
            "walk",
            "--law",
            "two_atom_critical",
            "--steps",
            "500",
            "--seed",
            "4",
            "--imt",
        ],
        &[
            "cascade",
            "--law",
            "two_atom_critical",
            "--seed",
            "4",
            "--depth",
            "6",
            "--replicas",
            "200",
        ],
        &[
            "network",
            "--law",
            "two_atom_critical",
            "--seed",
            "4",
            "--depth",
            "5",
            "--replicas",
            "3",
        ],
        &[
            "couple",
            "--law",
            "two_atom_critical",
            "--seed",
            "4",
            "--steps",
            "3000",
        ],
        &[
            "sample-tree",
            "--law",
            "two_atom_critical",
            "--seed",
            "4",
            "--depth",
            "3",
            "--ray-len",
            "2",
        ],
    ];
    for args in runs {
        let a = rwre(args);
        assert_eq!(
            a.status.code(),
            Some(0),
            "{args:?}: {}",
            String::from_utf8_lossy(&a.stderr)
        );
        let mut w = vec!["--workers", "2"];
        w.extend_from_slice(args);
        let b = rwre(&w);
        assert_eq!(a.stdout, b.stdout, "{args:?}");
        assert!(!a.stdout.is_empty());
    }
}

#[test]
fn couple_writes_excursion_table() {
    let o = rwre(&[
        "couple",
        "--law",
        "binary_half",
        "--seed",
        "2",
        "--steps",
        "2000",
        "--at",
        "100,500",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["command"], "couple");
    let ex = v["excursions"].as_array().unwrap();
    assert!(!ex.is_empty());
    for e in ex {
        if let (Some(eta), Some(eta_t)) = (e["eta"].as_u64(), e["eta_tilde"].as_u64()) {
            assert_eq!(
                eta - e["tau"].as_u64().unwrap(),
                eta_t - e["tau_tilde"].as_u64().unwrap()
            );
        }
    }
    assert_eq!(v["discrepancies"].as_array().unwrap().len(), 2);
}

#[test]
fn out_flag_writes_file() {
    let dir = std::env::temp_dir().join(format!("rwre-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("walk.csv");
    let o = rwre(&[
        "walk",
        "--law",
        "binary_half",
        "--steps",
        "20",
        "--seed",
        "1",
        "--format",
        "csv",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 22);
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn size_cap_from_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_rwre"))
        .args([
            "sample-tree",
            "--law",
            "binary_half",
            "--seed",
            "1",
            "--depth",
            "12",
        ])
        .env("RWRE_SIZE_CAP", "100")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = Command::new(env!("CARGO_BIN_EXE_rwre"))
        .args(["classify", "--law", "binary_half"])
        .env("RWRE_SIZE_CAP", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
