use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMOKE: &str = r#"
[experiment]
name = "smoke"
budget = 100

[[env]]
kind = "linear"
n = 2
d = 3
seeds = [0]

[[planner]]
name = "nonzero"
kind = "nonzero"
"#;

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nonzero-bench"))
        .args(args)
        .env_remove("NONZERO_OUT")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    bench(&args)
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn without_timestamp(text: &str) -> String {
    text.lines()
        .filter(|l| !l.contains("generated_at"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn smoke_run_writes_trace_and_summary() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "smoke.toml", SMOKE);
    let out = tmp.path().join("out");
    let o = run("run", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let trace = std::fs::read_to_string(out.join("smoke/nonzero/0/trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 100);
    let summary = std::fs::read_to_string(out.join("smoke/summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert!(lines.next().unwrap().starts_with("# schema=nonzero-summary/1 generated_at="));
    assert_eq!(lines.next().unwrap(), "exp,planner,seed,metric,value");
    assert!(summary.contains("smoke,nonzero,0,final_value,4\n"));
    assert!(out.join("smoke/summary.json").exists());

    let v = bench(&["verify", "--deterministic", "--trace", out.join("smoke/nonzero/0/trace.jsonl").to_str().unwrap()]);
    assert!(v.status.success(), "{}", String::from_utf8_lossy(&v.stdout));
}

#[test]
fn oracle_metric_beyond_cap_exits_3() {
    let tmp = TempDir::new().unwrap();
    let text = SMOKE.replace("n = 2\nd = 3", "n = 8\nd = 10").replace("budget = 100", "budget = 5");
    let text = text.replace("budget = 5", "budget = 5\nmetrics = [\"final_value\", \"hitting_time\"]");
    let cfg = write_config(tmp.path(), "big.toml", &text);
    let o = run("run", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hitting_time"));

    let o = run("oracle", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn oracle_free_metrics_run_beyond_cap() {
    let tmp = TempDir::new().unwrap();
    let text = SMOKE
        .replace("n = 2\nd = 3", "n = 8\nd = 10")
        .replace("budget = 100", "budget = 20\nmetrics = [\"final_value\", \"env_queries\"]");
    let cfg = write_config(tmp.path(), "big.toml", &text);
    let o = run("run", &cfg, &tmp.path().join("out"), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn same_config_twice_gives_identical_files() {
    let tmp = TempDir::new().unwrap();
    let text = format!("{SMOKE}\n[[planner]]\nname = \"ucb\"\nkind = \"flat_ucb\"\n");
    let cfg = write_config(tmp.path(), "smoke.toml", &text);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run("matrix", &cfg, &a, &["--parallel", "1"]).status.success());
    assert!(run("matrix", &cfg, &b, &["--parallel", "4"]).status.success());
    let files = files_under(&a);
    assert_eq!(files, files_under(&b));
    assert!(files.len() >= 6);
    for f in files {
        let x = std::fs::read_to_string(a.join(&f)).unwrap();
        let y = std::fs::read_to_string(b.join(&f)).unwrap();
        assert_eq!(without_timestamp(&x), without_timestamp(&y), "{}", f.display());
    }
}

#[test]
fn matrix_counts_traces_and_rows() {
    let tmp = TempDir::new().unwrap();
    let text = format!("{}\n[[planner]]\nname = \"ucb\"\nkind = \"flat_ucb\"\n", SMOKE.replace("seeds = [0]", "seeds = [1, 2]"));
    let cfg = write_config(tmp.path(), "m.toml", &text);
    let out = tmp.path().join("out");
    let o = run("matrix", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let traces = files_under(&out).into_iter().filter(|p| p.ends_with("trace.jsonl")).count();
    assert_eq!(traces, 4);
    let csv = std::fs::read_to_string(out.join("smoke/comparison.csv")).unwrap();
    let data: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(data.len(), 2);
    assert!(out.join("smoke/comparison.txt").exists());
}

#[test]
fn overrides_and_overwrite() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "smoke.toml", SMOKE);
    let out = tmp.path().join("out");
    assert!(run("run", &cfg, &out, &["--seeds", "3,4", "--budget", "10"]).status.success());
    let trace = std::fs::read_to_string(out.join("smoke/nonzero/4/trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 10);
    assert!(!out.join("smoke/nonzero/0").exists());

    let o = run("run", &cfg, &out, &[]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("overwriting"));
    assert!(!out.join("smoke/nonzero/4").exists());
}

#[test]
fn config_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let no_planner = SMOKE.split("[[planner]]").next().unwrap().to_string();
    let cfg = write_config(tmp.path(), "empty.toml", &no_planner);
    assert_eq!(run("run", &cfg, &out, &[]).status.code(), Some(2));
    assert_eq!(run("matrix", &cfg, &out, &[]).status.code(), Some(2));

    let one = write_config(tmp.path(), "one.toml", SMOKE);
    assert_eq!(run("matrix", &one, &out, &[]).status.code(), Some(2));

    let typo = write_config(tmp.path(), "typo.toml", &SMOKE.replace("budget", "bugdet"));
    assert_eq!(run("run", &typo, &out, &[]).status.code(), Some(2));

    let missing = tmp.path().join("missing.toml");
    assert_eq!(run("run", &missing, &out, &[]).status.code(), Some(2));
}

#[test]
fn oracle_dumps_sets() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "smoke.toml", SMOKE);
    let out = tmp.path().join("out");
    let o = run("oracle", &cfg, &out, &[]);
    assert!(o.status.success());
    let dump: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("smoke/oracle/linear_n2_d3_0.json")).unwrap()).unwrap();
    assert_eq!(dump["members"], serde_json::json!([[2, 2]]));
    assert_eq!(dump["global_value"], serde_json::json!(4.0));
}

#[test]
fn verify_flags_a_corrupted_trace() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "smoke.toml", SMOKE);
    let out = tmp.path().join("out");
    assert!(run("run", &cfg, &out, &[]).status.success());
    let path = out.join("smoke/nonzero/0/trace.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    let broken: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
    std::fs::write(&path, broken).unwrap();
    let v = bench(&["verify", "--trace", path.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(1));
}
