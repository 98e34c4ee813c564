use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const QUADRATIC: &str = r#"
[problem]
family = "quadratic"
workers = 4
samples = 64
dim = 10
heterogeneity = 1.0
seed = 0

[algorithm]
name = "pr-spider-finite"
auto = { eps = 0.05, period = 4 }

[run]
seeds = [0, 1]
output_dir = "out"
report_eps = [0.1, 0.05]
"#;

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_prspider"))
            .args(args)
            .env("PRSPIDER_OUTPUT_ROOT", self.dir.path())
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }

    fn read(&self, rel: &str) -> String {
        std::fs::read_to_string(self.path(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
    }
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().to_string()).collect()
}

/// Median of `metric` at the given axis value and eps from a sweep stats table.
fn stat(stats: &str, value: &str, eps: &str, metric: &str) -> f64 {
    stats
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect::<Vec<_>>())
        .find(|c| c[1] == value && c[2] == eps && c[3] == metric)
        .unwrap_or_else(|| panic!("no row {value} {eps} {metric}"))[4]
        .parse()
        .unwrap()
}

#[test]
fn run_writes_traces_and_summary() {
    let ws = Workspace::new();
    let cfg = ws.write("q.toml", QUADRATIC);
    let out = ws.run(&["run", arg(&cfg)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let sidecar: serde_json::Value = serde_json::from_str(&ws.read("out/pr-spider-finite-seed0.json")).unwrap();
    let records = sidecar["records"].as_u64().unwrap() as usize;
    let resolved = &sidecar["config"]["resolved"];
    assert!(resolved.is_object());
    let csv = ws.read("out/pr-spider-finite-seed0.csv");
    assert_eq!(csv.lines().count(), records + 1);
    let summary = ws.read("out/summary.csv");
    assert_eq!(summary.lines().count(), 1 + 2 * 2);
    assert!(column(&summary, "hit_s").iter().all(|v| v != "none"));
    assert!(ws.path("out/summary_stats.csv").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let ws = Workspace::new();
    let a = ws.write("a.toml", &QUADRATIC.replace("\"out\"", "\"a\""));
    let b = ws.write("b.toml", &QUADRATIC.replace("\"out\"", "\"b\"").replace("report_eps", "parallel = true\nreport_eps"));
    assert_eq!(ws.run(&["run", arg(&a)]).status.code(), Some(0));
    assert_eq!(ws.run(&["run", arg(&b)]).status.code(), Some(0));
    for seed in 0..2 {
        let name = format!("pr-spider-finite-seed{seed}.csv");
        assert_eq!(ws.read(&format!("a/{name}")), ws.read(&format!("b/{name}")));
    }
}

#[test]
fn zero_step_run_reports_no_hits() {
    let ws = Workspace::new();
    let cfg = ws.write(
        "z.toml",
        r#"
[problem]
family = "sigmoid"
workers = 2
samples = 16
dim = 4
seed = 1

[algorithm]
name = "pr-spider-finite"
params = { gamma = 0.0, period = 2, epoch_len = 4, batch = 1, epochs = 3 }

[run]
output_dir = "z"
report_eps = [1e-8]
"#,
    );
    assert_eq!(ws.run(&["run", arg(&cfg)]).status.code(), Some(0));
    let summary = ws.read("z/summary.csv");
    assert_eq!(column(&summary, "hit_s"), vec!["none"]);
}

#[test]
fn malformed_config_exits_two_with_line() {
    let ws = Workspace::new();
    let cfg = ws.write("bad.toml", "[problem]\nfamily = \"quadratic\"\nworkers = = 4\n");
    let out = ws.run(&["run", arg(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
    let unknown = ws.write("unknown.toml", &QUADRATIC.replace("dim = 10", "dim = 10\ncolour = 3"));
    assert_eq!(ws.run(&["run", arg(&unknown)]).status.code(), Some(2));
    assert_eq!(ws.run(&["sweep", arg(&cfg)]).status.code(), Some(2));
}

#[test]
fn divergence_exits_three_with_partial_trace() {
    let ws = Workspace::new();
    let cfg = ws.write(
        "div.toml",
        r#"
[problem]
family = "quadratic"
workers = 2
samples = 8
dim = 3
seed = 0

[algorithm]
name = "pr-spider-finite"
params = { gamma = 50.0, period = 1, epoch_len = 2000, batch = 2, epochs = 2, allow_large_step = true }

[run]
output_dir = "div"
"#,
    );
    let out = ws.run(&["run", arg(&cfg)]);
    assert_eq!(out.status.code(), Some(3));
    let csv = ws.read("div/pr-spider-finite-seed0.csv");
    let rows = csv.lines().count() - 1;
    assert!(rows > 0 && rows < 4000, "{rows}");
}

#[test]
fn sidecar_reruns_to_the_same_trace() {
    let ws = Workspace::new();
    let cfg = ws.write("q.toml", &QUADRATIC.replace("seeds = [0, 1]", "seeds = [1]"));
    assert_eq!(ws.run(&["run", arg(&cfg)]).status.code(), Some(0));
    let original = ws.read("out/pr-spider-finite-seed1.csv");
    let sidecar = ws.write("sidecar.json", &ws.read("out/pr-spider-finite-seed1.json"));
    std::fs::remove_dir_all(ws.path("out")).unwrap();
    let out = ws.run(&["run", arg(&sidecar)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(ws.read("out/pr-spider-finite-seed1.csv"), original);
}

#[test]
fn longer_period_cuts_rounds_at_fixed_step() {
    let ws = Workspace::new();
    let cfg = ws.write(
        "i.toml",
        r#"
[problem]
family = "quadratic"
workers = 4
samples = 64
dim = 10
seed = 0

[algorithm]
name = "pr-spider-finite"
params = { gamma = 0.03125, period = 1, epoch_len = 48, batch = 1, epochs = 40 }

[run]
seeds = [0, 1, 2]
output_dir = "sweep"
report_eps = [0.05]
"#,
    );
    let out = ws.run(&["sweep", arg(&cfg), "--axis", "I", "--values", "1,2,4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stats = ws.read("sweep/sweep_I_stats.csv");
    let comm: Vec<f64> = ["1", "2", "4"].iter().map(|v| stat(&stats, v, "0.05", "comm_at_eps")).collect();
    let ifo: Vec<f64> = ["1", "2", "4"].iter().map(|v| stat(&stats, v, "0.05", "ifo_at_eps")).collect();
    assert!(comm.windows(2).all(|w| w[1] < w[0]), "{comm:?}");
    let (lo, hi) = ifo.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    assert!(hi <= 2.0 * lo, "{ifo:?}");
}

#[test]
fn worker_sweep_keeps_total_samples() {
    let ws = Workspace::new();
    let cfg = ws.write("n.toml", &QUADRATIC.replace("samples = 64", "samples = 128").replace("workers = 4", "workers = 8"));
    let out = ws.run(&["sweep", arg(&cfg), "--axis", "N", "--values", "2,4", "--fixed-total"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = ws.read("out/sweep_N.csv");
    assert_eq!(table.lines().count(), 1 + 2 * 2 * 2);
    let stats = ws.read("out/sweep_N_stats.csv");
    let two = stat(&stats, "2", "0.05", "per_node_ifo");
    let four = stat(&stats, "4", "0.05", "per_node_ifo");
    assert!(four < two, "{two} {four}");
}

#[test]
fn verify_passes_and_notices_a_broken_restart() {
    let ws = Workspace::new();
    let out = ws.run(&["verify", "--suite", "problems"]);
    assert_eq!(out.status.code(), Some(0));
    let last = String::from_utf8_lossy(&out.stdout).lines().last().unwrap().to_string();
    let summary: serde_json::Value = serde_json::from_str(&last).unwrap();
    assert_eq!(summary["failed"], 0);
    let out = ws.run(&["verify", "--suite", "finite", "--inject", "skip-restart"]);
    assert_eq!(out.status.code(), Some(4));
}
