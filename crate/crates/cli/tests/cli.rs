use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cautious_cli::output::OnlineSummary;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cautious-opt"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const BOWL: &str = r#"{
    "basis": [{"kind": "constant"}, {"kind": "coordinate", "index": 0},
              {"kind": "coordinate", "index": 1}, {"kind": "squared_norm"}],
    "n": 2,
    "noise": {"kind": "ball", "q": Q},
    "stencil": [[0, 0], [1, 0], [0, 1], [-1, -1]],
    "z0": [3, 3],
    "iterations": ITER,
    "seed": 4,
    "oracle": {"kind": "synthetic", "gamma_hat": [1, 0, 0, 1], "noise_mode": "MODE"},
    "output_dir": "out"
}"#;

fn bowl_config(dir: &Path, q: f64, mode: &str, iterations: usize) -> PathBuf {
    let text = BOWL.replace("Q", &q.to_string()).replace("MODE", mode).replace("ITER", &iterations.to_string());
    let path = dir.join("bowl.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn scalar_config(dir: &Path, replay: &str, iterations: usize) -> PathBuf {
    std::fs::write(dir.join("replay.csv"), replay).unwrap();
    let text = format!(
        r#"{{"basis": [{{"kind": "constant"}}], "n": 1, "noise": {{"kind": "ball", "q": 1.0}},
            "stencil": [[-1], [1]], "z0": [0], "iterations": {iterations}, "seed": 0,
            "oracle": {{"kind": "replay", "path": "replay.csv"}}, "polytope": [[-1], [1]], "output_dir": "out"}}"#
    );
    let path = dir.join("scalar.json");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn scalar_regression_interval() {
    let cfg = configs().join("scalar.json");
    let o = bin().args(["--config", cfg.to_str().unwrap(), "--format", "csv", "regress"]).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let row: Vec<f64> = out.lines().nth(1).unwrap().split(',').skip(2).map(|x| x.parse().unwrap()).collect();
    assert_eq!(row, vec![2.0, 1.0, 3.0]);
}

#[test]
fn scalar_bounds_at_z0() {
    let cfg = configs().join("scalar.json");
    let o = bin().args(["--config", cfg.to_str().unwrap(), "--format", "csv", "bound"]).output().unwrap();
    assert!(o.status.success());
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), "z_1,phi_minus,phi_lse,phi_plus,uncertainty");
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(row, vec![0.0, 1.0, 2.0, 3.0, 2.0]);
}

#[test]
fn bound_at_points_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bowl_config(dir.path(), 0.0, "zero", 1);
    std::fs::write(dir.path().join("pts.csv"), "z_1,z_2\n0,0\n1,2\n").unwrap();
    let o = run_in(dir.path(), &["--config", cfg.to_str().unwrap(), "--format", "csv", "bound", "--points", "pts.csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Vec<Vec<f64>> =
        stdout(&o).lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 2);
    // zero noise: the bounds collapse onto 1 + ‖z‖²
    for (r, want) in rows.iter().zip([1.0, 6.0]) {
        assert!((r[2] - want).abs() < 1e-9 && (r[4] - want).abs() < 1e-9 && r[5].abs() < 1e-9, "{r:?}");
    }
}

#[test]
fn zero_noise_online_tracks_the_truth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bowl_config(dir.path(), 0.0, "zero", 6);
    let o = run_in(dir.path(), &["--config", cfg.to_str().unwrap(), "--format", "csv", "online"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/online_seed4.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let (z1, z2, bound, phi) = (col("z_1"), col("z_2"), col("bound"), col("phi_hat_at_zk"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert!((r[bound] - r[phi]).abs() < 1e-9, "{r:?}");
        assert!((r[phi] - (1.0 + r[z1].powi(2) + r[z2].powi(2))).abs() < 1e-12);
    }
    assert!(rows.windows(2).all(|w| w[1][bound] <= w[0][bound] + 1e-9));
}

#[test]
fn summary_json_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bowl_config(dir.path(), 30.0, "uniform", 3);
    let o = run_in(dir.path(), &["--config", cfg.to_str().unwrap(), "--force", "--format", "json-lines", "online"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("out/online_seed4.json")).unwrap();
    let s: OnlineSummary = serde_json::from_str(&text).unwrap();
    assert_eq!(s.seed, 4);
    assert_eq!(s.iterations, 3);
    assert_eq!(serde_json::to_string_pretty(&s).unwrap().trim(), text.trim());
    let line: OnlineSummary = serde_json::from_str(stdout(&o).lines().next().unwrap()).unwrap();
    assert_eq!(line.final_bound, s.final_bound);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bowl_config(dir.path(), 30.0, "uniform", 2);
    let args = |seed: &str| {
        let o = run_in(dir.path(), &["--config", cfg.to_str().unwrap(), "--force", "--seed", seed, "--format", "csv", "online"]);
        assert!(o.status.success());
        std::fs::read_to_string(dir.path().join(format!("out/online_seed{seed}.csv"))).unwrap()
    };
    assert_ne!(args("1"), args("2"));
}

#[test]
fn unforced_online_refuses_uncertified_convexity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bowl_config(dir.path(), 30.0, "uniform", 2);
    let o = run_in(dir.path(), &["--config", cfg.to_str().unwrap(), "--seed", "0", "online"]);
    if !o.status.success() {
        assert_eq!(o.status.code(), Some(3));
        assert!(String::from_utf8_lossy(&o.stderr).contains("--force"));
    }
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{\"n\": 1}").unwrap();
    let o = run_in(dir.path(), &["--config", "bad.json", "regress"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run_in(dir.path(), &["--config", "missing.json", "regress"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run_in(dir.path(), &["regress"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn disjoint_replay_batches_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    // around 2 and around 10: no common parameter
    let cfg = scalar_config(dir.path(), "z_1,y\n-1,2\n1,2\n-1,10\n1,10\n", 1);
    let o = run_in(dir.path(), &["--config", cfg.to_str().unwrap(), "--force", "online"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn replay_at_wrong_points_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scalar_config(dir.path(), "z_1,y\n-1,2\n1,2\n-0.5,2\n0.5,2\n", 1);
    let o = run_in(dir.path(), &["--config", cfg.to_str().unwrap(), "--force", "online"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn overlapping_replay_batches_shrink_the_interval() {
    let dir = tempfile::tempdir().unwrap();
    // 2(γ − 2)² ≤ 1 and 2(γ − 3)² ≤ 1
    // (each row reports the bound before that step's batch is added)
    let cfg = scalar_config(dir.path(), "z_1,y\n-1,2\n1,2\n-1,3\n1,3\n-1,3\n1,3\n", 2);
    let o = run_in(dir.path(), &["--config", cfg.to_str().unwrap(), "--force", "--format", "csv", "online"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/online_seed0.csv")).unwrap();
    let last: Vec<f64> = csv.lines().last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    let h = 0.5f64.sqrt();
    assert!((last[2] - (2.0 + h)).abs() < 1e-7, "{last:?}");
    assert!((last[3] - (2.0 * h - 1.0)).abs() < 1e-7, "{last:?}");
}
