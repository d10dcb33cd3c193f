//! Binary-level checks: determinism, error reporting, resource output.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use slchs::complexity::full_budget;
use slchs_cli::experiments::resources::params;
use slchs_cli::ExperimentConfig;

const SYSTEM: &str = r#"
seed = 4
t_end = 1.0

[system]
f1 = [[-1.0, 0.0], [0.0, -1.0]]
f2 = [[0.0, 0.2, 0.0, 0.0], [0.0, 0.0, 0.0, -0.2]]
theta = [[1.0, 0.0], [0.0, 1.0]]
sigma = [[0.03, 0.0], [0.0, 0.03]]
x_init = [0.2, -0.2]

[carleman]
orders = [1, 2]
paths = 6
dt_max = 0.02

[ou_stats]
paths = 300
steps = 20
sup_paths = 100
sup_grid = 100
"#;

const RESOURCES: &str = r#"
[resources]
n = 2
order = 2
t = 1.0
eps = 1e-2
delta = 0.1
beta = 0.7
f1_norm = 1.0
f2_norm = 0.2
sigma_f = 0.05
lambda_min = 1.0
eps_sweep = [1e-1, 1e-3]
"#;

fn slchs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slchs")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

fn run_ok(sub: &str, cfg: &str, out: &Path, extra: &[&str]) {
    let mut args = vec![sub, "--config", cfg, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = slchs(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sys.toml", SYSTEM);
    for sub in ["carleman-convergence", "ou-stats"] {
        let run = |tag: &str| dir.path().join(format!("{sub}-{tag}"));
        let (a, b, c) = (run("a"), run("b"), run("c"));
        run_ok(sub, &cfg, &a, &["--threads", "1"]);
        run_ok(sub, &cfg, &b, &["--threads", "1"]);
        run_ok(sub, &cfg, &c, &["--threads", "2"]);
        let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert!(names.iter().any(|n| n.to_string_lossy().ends_with(".csv")));
        for n in &names {
            let x = fs::read(a.join(n)).unwrap();
            assert_eq!(x, fs::read(b.join(n)).unwrap(), "{sub} {n:?}");
            if n.to_string_lossy().ends_with(".csv") {
                assert_eq!(x, fs::read(c.join(n)).unwrap(), "{sub} {n:?} across thread counts");
            }
        }
    }
}

#[test]
fn csv_header_records_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sys.toml", SYSTEM);
    let out = dir.path().join("o");
    run_ok("carleman-convergence", &cfg, &out, &["--seed", "9"]);
    let csv = fs::read_to_string(out.join("carleman_orders.csv")).unwrap();
    let first = csv.lines().next().unwrap();
    assert!(first.starts_with("# subcommand=carleman-convergence config_sha256="), "{first}");
    assert!(first.ends_with("seed=9"), "{first}");
}

#[test]
fn malformed_config_exits_2_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let short_state = SYSTEM.replace("x_init = [0.2, -0.2]", "x_init = [0.2]");
    let cases = ["seed = 1\nbogus = 3\n", "[resources]\nn = 2\n", "seed = \"x\"\n", short_state.as_str()];
    for (i, body) in cases.iter().enumerate() {
        let cfg = write(dir.path(), &format!("bad{i}.toml"), body);
        let o = slchs(&["carleman-convergence", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "case {i}");
        let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
        assert_eq!(err["error"], "config", "case {i}");
        assert_eq!(err["exit_code"], 2);
        assert!(!err["message"].as_str().unwrap().is_empty());
    }
    let missing = dir.path().join("missing.toml");
    let o = slchs(&["carleman-convergence", "--config", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    // The requested subcommand's section is absent.
    let cfg = write(dir.path(), "res.toml", RESOURCES);
    let o = slchs(&["dyson-bench", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    // Unknown subcommand is a usage error.
    assert_eq!(slchs(&["nope", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn resources_json_matches_the_calculator() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write(dir.path(), "res.toml", RESOURCES);
    let out = dir.path().join("r");
    run_ok("resources", &cfg_path, &out, &[]);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let b = &summary["results"]["budget"];
    let cfg = ExperimentConfig::from_toml(RESOURCES).unwrap();
    let want = full_budget(&params(cfg.resources.as_ref().unwrap(), 1e-2)).unwrap();
    assert_eq!(b["n_u"], want.n_u);
    assert_eq!(b["m"], want.m);
    assert_eq!(b["segments"], want.segments);
    assert_eq!(b["dyson_order"], want.dyson_order);
    assert_eq!(b["samples"], serde_json::json!(want.samples));
    assert_eq!(b["n_q"].as_f64().unwrap(), want.query.n_q);
    assert_eq!(b["h1"].as_f64().unwrap(), want.h1);
    let sweep = fs::read_to_string(out.join("resources_sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 4);
}
