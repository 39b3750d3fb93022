use std::path::Path;
use std::process::Command;

use obstacle_cli::{run, Command as Cmd, RunConfig, RunOptions};

fn obstacle(dir: &Path, config: &str, args: &[&str]) -> (i32, String) {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_obstacle"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

const ORACLE_INSTANCE: &str = r#"
[grid]
n = 31
[f]
g = "1"
reaction = { kind = "affine", slope = 1.0 }
[mu]
density = "-3"
atoms = [{ position = 0.6, weight = 0.5 }]
[barriers]
h1 = "0.1*sin(pi*x) - 0.02"
[verify]
envelope_samples = 30
oracle = true
"#;

#[test]
fn trivial_solve_writes_zero_solution() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = obstacle(
        dir.path(),
        "[grid]\nn = 9\n[barriers]\nh1 = \"-1\"\nh2 = \"1\"\n",
        &["solve", "--quiet"],
    );
    assert_eq!(code, 0);
    let mut rdr = csv::Reader::from_path(dir.path().join("out/solution.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["x", "u", "h1", "h2", "nu"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 9);
    for r in &rows {
        assert_eq!(r[1].parse::<f64>().unwrap(), 0.0);
        assert_eq!(r[4].parse::<f64>().unwrap(), 0.0);
    }
    let diag: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/diagnostics.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(diag["active_lower"], 0);
    assert_eq!(diag["n"], 9);
}

#[test]
fn missing_barriers_are_written_as_infinite() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = obstacle(
        dir.path(),
        "[grid]\nn = 3\n[mu]\ndensity = \"1\"\n",
        &["solve", "--quiet"],
    );
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(dir.path().join("out/solution.csv")).unwrap();
    assert!(text.lines().nth(1).unwrap().contains(",-inf,inf,"));
}

#[test]
fn verify_passes_on_oracle_instance() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = obstacle(
        dir.path(),
        ORACLE_INSTANCE,
        &["verify", "--quiet", "--seed", "3"],
    );
    assert_eq!(code, 0, "{err}");
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/verification.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["all_passed"], true);
    assert_eq!(report["seed"], 3);
    let names: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    for expected in [
        "complementarity",
        "norm_bound_one_sided",
        "envelope_minimality",
        "lewy_stampacchia",
        "oracle_agreement",
    ] {
        assert!(names.contains(&expected), "{expected}");
    }
}

#[test]
fn sweep_is_monotone_under_doubling() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = obstacle(dir.path(), ORACLE_INSTANCE, &["sweep", "--quiet"]);
    assert_eq!(code, 0);
    let mut rdr = csv::Reader::from_path(dir.path().join("out/sweep.csv")).unwrap();
    assert_eq!(
        rdr.headers().unwrap(),
        vec!["n", "sup_error", "min_step", "max_step"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert!(rows.len() > 5);
    let mut prev_n = -1.0;
    for (j, r) in rows.iter().enumerate() {
        let n: f64 = r[0].parse().unwrap();
        assert!(n > prev_n);
        if j >= 2 {
            assert_eq!(n, 2.0 * prev_n);
        }
        prev_n = n;
        if j > 0 {
            assert!(r[2].parse::<f64>().unwrap() >= -1e-8);
        }
    }
}

#[test]
fn exit_codes_name_the_failure() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = obstacle(
        dir.path(),
        "[grid]\nn = 9\n[mu]\ndensity = \"sin(\"\n",
        &["solve"],
    );
    assert_eq!(code, 2);
    assert!(err.contains("mu.density"), "{err}");

    let (code, err) = obstacle(
        dir.path(),
        "[grid]\nn = 9\n[barriers]\nh1 = \"1\"\nh2 = \"0\"\n",
        &["solve"],
    );
    assert_eq!(code, 3);
    assert!(err.contains("(H6)"), "{err}");

    let table =
        "[grid]\nn = 9\n[f]\nreaction = { kind = \"table\", knots = [[-1.0, -1.0], [1.0, 1.0]] }\n";
    let (code, err) = obstacle(dir.path(), table, &["solve"]);
    assert_eq!(code, 3);
    assert!(err.contains("(H1)"), "{err}");

    let stalled = format!("{ORACLE_INSTANCE}\n[solver]\nj_max = 1\n");
    let (code, err) = obstacle(dir.path(), &stalled, &["solve"]);
    assert_eq!(code, 4);
    assert!(err.contains("(H5)"), "{err}");

    let (code, _) = obstacle(dir.path(), "[grid]\nn = 9\n", &[]);
    assert_eq!(code, 2);

    let fractional_mc = "[grid]\nn = 15\n[operator]\nkind = \"spectral_fractional\"\nalpha = 1.0\n[mc]\nn_paths = 100\n";
    let (code, _) = obstacle(dir.path(), fractional_mc, &["mc-check"]);
    assert_eq!(code, 3);

    let (code, _) = obstacle(
        dir.path(),
        "command = \"refine\"\n[grid]\nn = 9\n[refine]\nsizes = [7, 15]\nband_tol = 1e-9\n",
        &["--quiet"],
    );
    assert_eq!(code, 1);
}

#[test]
fn exit_status_matches_every_pass_fail_pattern() {
    let base = RunConfig::from_toml(ORACLE_INSTANCE).unwrap();
    let dir = tempfile::tempdir().unwrap();
    // Families whose tolerance can be pushed negative to force a failure.
    for mask in 0u32..32 {
        let mut cfg = base.clone();
        cfg.verify.envelope_samples = 5;
        if mask & 1 != 0 {
            cfg.verify.complementarity_rel = -1e6;
        }
        if mask & 2 != 0 {
            cfg.verify.norm_tol = -1e6;
        }
        if mask & 4 != 0 {
            cfg.verify.energy_tol = -1e6;
        }
        if mask & 8 != 0 {
            cfg.verify.lewy_stampacchia_tol = -1e6;
        }
        if mask & 16 != 0 {
            cfg.verify.oracle_tol = -1e6;
        }
        let opts = RunOptions {
            command: Cmd::Verify,
            out_dir: dir.path().join(format!("m{mask}")),
            seed: 0,
            tol: None,
        };
        let outcome = run(&cfg, &opts).unwrap();
        assert_eq!(outcome.passed, mask == 0, "mask {mask:05b}");
        let report: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(opts.out_dir.join("verification.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(report["all_passed"], mask == 0);
        let failed_families = report["checks"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|c| c["passed"] == false)
            .map(|c| {
                let name = c["name"].as_str().unwrap();
                match name {
                    "complementarity" => 0,
                    "norm_bound_one_sided" => 1,
                    n if n.starts_with("energy_truncation") => 2,
                    "lewy_stampacchia" => 3,
                    "oracle_agreement" => 4,
                    other => panic!("unexpected failure {other}"),
                }
            })
            .fold(0u32, |m, b| m | (1 << b));
        assert_eq!(failed_families, mask);
    }
}

#[test]
fn same_seed_same_bytes_different_seed_differs() {
    let cfg = format!("{ORACLE_INSTANCE}\n[mc]\nn_paths = 500\n");
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let read = |d: &Path| std::fs::read(d.join("out/mc.json")).unwrap();
    for (d, seed) in dirs.iter().zip(["1", "1", "2"]) {
        assert_eq!(
            obstacle(d.path(), &cfg, &["mc-check", "--quiet", "--seed", seed]).0,
            0
        );
    }
    assert_eq!(read(dirs[0].path()), read(dirs[1].path()));
    assert_ne!(read(dirs[0].path()), read(dirs[2].path()));
}

#[test]
fn tol_flag_overrides_continuation_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, ORACLE_INSTANCE).unwrap();
    let steps = |tol: &str| {
        let out = dir.path().join(format!("o{tol}"));
        let status = Command::new(env!("CARGO_BIN_EXE_obstacle"))
            .args(["solve", "--quiet", "--tol", tol, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        let diag: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("diagnostics.json")).unwrap())
                .unwrap();
        diag["continuation_steps"].as_u64().unwrap()
    };
    assert!(steps("1e-3") < steps("1e-9"));
}
