use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use consensus_latency::ct_single::optimal_point;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_consensus-latency"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn config_path(name: &str) -> String {
    format!("{}/configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn total_of(csv: &str) -> f64 {
    let line = csv.lines().find(|l| l.starts_with("total,")).expect("total row");
    line.split(',').nth(2).unwrap().parse().unwrap()
}

#[test]
fn figure_configs_run() {
    for (sub, cfg) in [
        ("stability", "fig_stability_region.toml"),
        ("variance", "fig_ct_single_optvar.toml"),
        ("optimize", "fig_dt_single.toml"),
        ("tradeoff", "fig_ct_double_optvar.toml"),
        ("variance", "fig_dt_double.toml"),
    ] {
        let out = run(&[sub, &config_path(cfg)]);
        assert_eq!(out.status.code(), Some(0), "{sub} {cfg}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn tradeoff_reports_interior_minimum() {
    let out = run(&["tradeoff", &config_path("fig_ct_single_optvar.toml"), "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let n_star = doc["manifest"]["summary"]["n_star_exact"].as_u64().unwrap();
    assert!(n_star > 1 && n_star < 24, "{n_star}");
    assert_eq!(doc["rows"].as_array().unwrap().len(), 24);
}

#[test]
fn missing_gains_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "model = \"ct-single\"\nN = 10\nn = 2\n[delay]\nkind = \"linear\"\n");
    let out = run(&["variance", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gains.k"));
}

#[test]
fn malformed_config_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "model = \"ct-single\"\nN = 10\nn = 2\nbogus = 1\n[delay]\nkind = \"linear\"\n");
    let out = run(&["stability", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bogus") && err.contains("line 4"), "{err}");
}

#[test]
fn normalized_and_physical_eta_together_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "model = \"ct-double\"\nN = 10\nn = 1\n[delay]\nkind = \"linear\"\n[gains]\nk = [0.1]\neta = 2.0\neta_normalized = 2.0\n",
    );
    assert_eq!(run(&["variance", &cfg]).status.code(), Some(2));
}

#[test]
fn unstable_gains_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "model = \"ct-single\"\nN = 10\nn = 1\n[delay]\nkind = \"linear\"\n[gains]\nk = [2.0]\n");
    assert_eq!(run(&["variance", &cfg]).status.code(), Some(3));
    let stab = run(&["stability", &cfg]);
    assert_eq!(stab.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&stab.stdout).contains("false"));
}

#[test]
fn infeasible_discrete_double_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    // η = 4 destabilizes the velocity loop for every λ
    let cfg = write(
        dir.path(),
        "c.toml",
        "model = \"dt-double\"\nN = 10\nn = 1\nsampling_time = 1.0\n[delay]\nkind = \"linear\"\n[gains]\nk = [0.1]\neta = 4.0\n",
    );
    assert_eq!(run(&["optimize", &cfg]).status.code(), Some(3));
}

#[test]
fn recursive_and_moment_matching_totals_agree() {
    let cfg = config_path("fig_dt_single.toml");
    let rec = run(&["variance", &cfg, "--method", "recursive"]);
    let mm = run(&["variance", &cfg, "--method", "moment-matching"]);
    assert_eq!(rec.status.code(), Some(0));
    let (a, b) = (total_of(&String::from_utf8_lossy(&rec.stdout)), total_of(&String::from_utf8_lossy(&mm.stdout)));
    assert!((a - b).abs() <= 1e-9 * b, "{a} vs {b}");
}

#[test]
fn method_not_available_for_model() {
    let out = run(&["variance", &config_path("fig_ct_single_optvar.toml"), "--method", "recursive"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fully_connected_optimum_total() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "model = \"ct-single\"\nN = 5\nn = 2\n[delay]\nkind = \"constant\"\nscale = 0.7\n",
    );
    let out = run(&["optimize", &cfg, "--method", "exact", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let obj = doc["rows"][0]["objective"].as_f64().unwrap();
    let expected = 4.0 * optimal_point(0.7).unwrap().c_star * 0.7;
    assert!((obj - expected).abs() < 1e-10 * expected, "{obj} vs {expected}");
}

#[test]
fn three_ring_gain_is_a_third_of_the_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "model = \"ct-single\"\nN = 3\nn = 1\n[delay]\nkind = \"constant\"\n");
    let out = run(&["optimize", &cfg, "--method", "exact", "--format", "json"]);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let k = doc["rows"][0]["k_1"].as_f64().unwrap();
    let lambda_star = optimal_point(1.0).unwrap().lambda_star;
    assert!((k - lambda_star / 3.0).abs() < 1e-9, "{k}");
}

#[test]
fn simulate_is_byte_identical_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "model = \"ct-single\"\nN = 6\nn = 1\n[delay]\nkind = \"constant\"\nscale = 0.5\n[gains]\nk = [0.3]\n\
         [sim]\nsteps_per_delay = 16\nhorizon = 200.0\nreplicates = 4\nseed = 5\ntrajectory_stride = 50\n",
    );
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let traj = dir.path().join("t.csv");
    for out in [&a, &b] {
        let o = run(&["simulate", &cfg, "--output", out.to_str().unwrap(), "--trajectory", traj.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["subcommand"], "simulate");
    assert_eq!(manifest["config_digest"].as_str().unwrap().len(), 64);
    let t = fs::read_to_string(&traj).unwrap();
    assert!(t.starts_with("time,x_1,x_2,x_3,x_4,x_5,x_6\n"));

    let reseeded = run(&["simulate", &cfg, "--seed", "6"]);
    assert_ne!(reseeded.stdout, fs::read(&a).unwrap());
}

#[test]
fn set_overrides_win() {
    let cfg = config_path("fig_ct_single_optvar.toml");
    let out = run(&["tradeoff", &cfg, "--set", "tradeoff.n_max=3"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 4);
}

#[test]
fn numbers_round_trip() {
    let out = run(&["variance", &config_path("fig_ct_single_optvar.toml")]);
    let text = String::from_utf8_lossy(&out.stdout);
    let field = text.lines().nth(1).unwrap().split(',').nth(2).unwrap();
    let v: f64 = field.parse().unwrap();
    assert_eq!(format!("{v:.16e}"), field);
}

#[test]
fn help_lists_keys_per_subcommand() {
    for (sub, key) in [("stability", "stability.lambdas"), ("variance", "variance.method"), ("optimize", "optimize.method"), ("tradeoff", "tradeoff.n_min"), ("simulate", "sim.replicates")] {
        let out = run(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0));
        assert!(String::from_utf8_lossy(&out.stdout).contains(key), "{sub}");
    }
}
