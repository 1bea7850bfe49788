use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = "\
# tiny sweep that finishes in well under a second
G = 8
M = 10
N = 4, 6
L_s = 1
L_p = 3
A_degrees = 10
snr_db = 20
trials = 2
seed = 5
algorithms = em_ep, em_ep_b, em_ep_no_gr
n_em = 6
";

fn emep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emep")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_one_row_per_algorithm_point_trial() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.cfg", SMALL);
    let out = dir.path().join("out.csv");
    let res = emep(&["run", "--config", s(&cfg), "--out", s(&out), "--jobs", "1"]);
    assert_eq!(res.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "algorithm,sweep_name,sweep_value,trial,nmse_num,nmse_den,em_iters,ep_iters_total,wall_ms,error_flag"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3 * 2 * 2);
    assert!(rows[0].starts_with("em_ep,N,4,0,"));
    assert!(rows.iter().all(|r| r.ends_with(",,0")), "timing column empty and no flags");
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("em_ep_no_gr"));
}

#[test]
fn csv_is_identical_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.cfg", SMALL);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert_eq!(emep(&["run", "--config", s(&cfg), "--out", s(&a), "--jobs", "1"]).status.code(), Some(0));
    assert_eq!(emep(&["run", "--config", s(&cfg), "--out", s(&b), "--jobs", "4"]).status.code(), Some(0));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn overrides_change_trials_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.cfg", SMALL);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = |out: &Path, seed: &'static str| {
        emep(&["run", "--config", s(&cfg), "--out", s(out), "--trials", "1", "--seed", seed]).status.code()
    };
    assert_eq!(args(&a, "1"), Some(0));
    assert_eq!(args(&b, "2"), Some(0));
    let a = std::fs::read_to_string(&a).unwrap();
    assert_eq!(a.lines().count(), 1 + 3 * 2);
    assert_ne!(a, std::fs::read_to_string(&b).unwrap());
}

#[test]
fn config_errors_exit_with_two_and_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", &format!("{SMALL}colour = blue\n"));
    let res = emep(&["run", "--config", s(&cfg), "--out", s(&dir.path().join("x.csv"))]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 13"));

    let missing = emep(&["run", "--config", s(&dir.path().join("nope.cfg"))]);
    assert_eq!(missing.status.code(), Some(2));

    let usage = emep(&["run"]);
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.cfg", &SMALL.replace("trials = 2", "trials = 1"));
    let out = dir.path().join("missing-dir").join("out.csv");
    assert_eq!(emep(&["run", "--config", s(&cfg), "--out", s(&out)]).status.code(), Some(3));
}

#[test]
fn converge_trace_length_matches_em_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("N = 4, 6", "N = 6");
    let cfg = write_config(dir.path(), "one.cfg", &text);
    let trace = dir.path().join("trace.csv");
    let res = emep(&["converge", "--config", s(&cfg), "--out", s(&trace)]);
    assert_eq!(res.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let runs = dir.path().join("runs.csv");
    assert_eq!(emep(&["run", "--config", s(&cfg), "--out", s(&runs)]).status.code(), Some(0));

    let trace = std::fs::read_to_string(&trace).unwrap();
    assert!(trace.starts_with("algorithm,trial,em_iter,mu_change,xi_error_db,ep_iters,error_flag\n"));
    for row in std::fs::read_to_string(&runs).unwrap().lines().skip(1) {
        let f: Vec<&str> = row.split(',').collect();
        let (alg, trial, em_iters) = (f[0], f[3], f[6]);
        let n = trace
            .lines()
            .filter(|l| l.starts_with(&format!("{alg},{trial},")))
            .count();
        assert_eq!(n.to_string(), em_iters, "{alg} trial {trial}");
    }
}

#[test]
fn converge_rejects_a_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.cfg", SMALL);
    assert_eq!(emep(&["converge", "--config", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let res = emep(&["selftest"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stdout));
    assert_eq!(String::from_utf8_lossy(&res.stdout).lines().count(), 5);
}
