//! `prspider run | sweep | verify`.
//!
//! Exit codes: 0 success, 2 config error, 3 divergence, 4 verification failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::harness::{first_hit, Fault, FirstHit, MetricsTrace};
use crate::verify::{run_verify, VerifyOptions, VerifySuite};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "prspider", version, about = "PR-SPIDER and distributed SGD baselines on a simulated worker-server fabric")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every seed of a config and write traces plus a summary.
    Run {
        /// TOML config, or a JSON sidecar from an earlier run.
        config: PathBuf,
    },
    /// Rerun a config across values of one axis and tabulate first hits.
    Sweep {
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
        /// For axis N: keep the total sample count N*n of the base config fixed.
        #[arg(long)]
        fixed_total: bool,
    },
    /// Run the built-in property suites and print one JSON line per check.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        suite: SuiteArg,
        /// Deliberately break the algorithm to confirm the checks notice.
        #[arg(long, value_enum)]
        inject: Option<InjectArg>,
        #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2])]
        seeds: Vec<u64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    #[value(name = "N")]
    Workers,
    #[value(name = "I")]
    Period,
    #[value(name = "eps")]
    Eps,
    #[value(name = "heterogeneity")]
    Heterogeneity,
}

impl Axis {
    fn label(self) -> &'static str {
        match self {
            Axis::Workers => "N",
            Axis::Period => "I",
            Axis::Eps => "eps",
            Axis::Heterogeneity => "heterogeneity",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    Finite,
    Online,
    Problems,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InjectArg {
    SkipRestart,
}

/// Parse `args` (including the program name) and execute; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Run { config } => cmd_run(&config),
        Command::Sweep {
            config,
            axis,
            values,
            fixed_total,
        } => cmd_sweep(&config, axis, &values, fixed_total),
        Command::Verify { suite, inject, seeds } => cmd_verify(suite, inject, seeds),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Diverged(_) => EXIT_DIVERGED,
        _ => EXIT_CONFIG,
    }
}

fn fmt_hit(hit: Option<&FirstHit>, f: impl Fn(&FirstHit) -> String) -> String {
    hit.map(f).unwrap_or_else(|| "none".into())
}

fn median_min_max(values: &[Option<u64>]) -> (String, String, String) {
    let mut v: Vec<f64> = values
        .iter()
        .map(|x| x.map(|u| u as f64).unwrap_or(f64::INFINITY))
        .collect();
    if v.is_empty() {
        return ("none".into(), "none".into(), "none".into());
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let k = v.len();
    let med = if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) };
    let show = |x: f64| if x.is_finite() { format!("{x}") } else { "none".into() };
    (show(med), show(v[0]), show(v[k - 1]))
}

fn trace_stem(cfg: &ExperimentConfig, seed: u64) -> String {
    format!("{}-seed{seed}", cfg.algorithm.name.as_str())
}

fn write_trace(dir: &Path, stem: &str, trace: &MetricsTrace) -> Result<()> {
    trace.write_csv(&dir.join(format!("{stem}.csv")))?;
    trace.write_sidecar(&dir.join(format!("{stem}.json")))
}

const SUMMARY_HEADER: &str =
    "seed,eps,hit_s,hit_t,ifo_total,comm_rounds,per_node_ifo,ifo_single_charge,comm_vectors,min_fos,outcome";

fn cmd_run(path: &Path) -> Result<i32> {
    let cfg = ExperimentConfig::load(path)?;
    let suite = cfg.build_suite()?;
    let resolved = cfg.resolve(&suite)?;
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir)?;
    let eps_list = cfg.report_eps();
    let workers = suite.workers() as u64;

    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    let mut per_eps: Vec<(Vec<Option<u64>>, Vec<Option<u64>>)> = vec![(Vec::new(), Vec::new()); eps_list.len()];
    let mut diverged = None;
    for &seed in &cfg.run.seeds {
        let stem = trace_stem(&cfg, seed);
        let trace = match resolved.execute(&cfg, &suite, seed, cfg.run_options()) {
            Ok(t) => t,
            Err(Error::Diverged(t)) => {
                diverged = Some(seed);
                *t
            }
            Err(e) => return Err(e),
        };
        write_trace(&dir, &stem, &trace)?;
        let min = trace.min_fos().map(|v| format!("{v:e}")).unwrap_or_else(|| "none".into());
        let outcome = serde_json::to_value(trace.outcome).expect("outcome serializes");
        let outcome = outcome.as_str().unwrap_or("completed");
        for (k, &eps) in eps_list.iter().enumerate() {
            let hit = first_hit(&trace, eps);
            let h = hit.as_ref();
            let _ = writeln!(
                summary,
                "{seed},{eps},{},{},{},{},{},{},{},{min},{outcome}",
                fmt_hit(h, |h| h.s.to_string()),
                fmt_hit(h, |h| h.t.to_string()),
                fmt_hit(h, |h| h.ifo_total.to_string()),
                fmt_hit(h, |h| h.comm_rounds.to_string()),
                fmt_hit(h, |h| (h.ifo_total / workers).to_string()),
                fmt_hit(h, |h| h.ifo_single_charge.to_string()),
                fmt_hit(h, |h| h.comm_vectors.to_string()),
            );
            per_eps[k].0.push(hit.map(|h| h.ifo_total));
            per_eps[k].1.push(hit.map(|h| h.comm_rounds));
        }
        if eps_list.is_empty() {
            let _ = writeln!(summary, "{seed},none,none,none,none,none,none,none,none,{min},{outcome}");
        }
        if diverged.is_some() {
            break;
        }
    }
    std::fs::write(dir.join("summary.csv"), &summary)?;

    let mut stats = String::from("eps,metric,median,min,max\n");
    for (k, eps) in eps_list.iter().enumerate() {
        for (name, vals) in [("ifo_at_eps", &per_eps[k].0), ("comm_at_eps", &per_eps[k].1)] {
            let (med, lo, hi) = median_min_max(vals);
            let _ = writeln!(stats, "{eps},{name},{med},{lo},{hi}");
        }
    }
    std::fs::write(dir.join("summary_stats.csv"), &stats)?;
    print!("{stats}");
    println!("wrote {}", dir.display());

    if let Some(seed) = diverged {
        eprintln!("error: run diverged (seed {seed}); partial trace written");
        return Ok(EXIT_DIVERGED);
    }
    Ok(EXIT_OK)
}

/// A copy of `base` with one axis set to `value`.
fn with_axis(base: &ExperimentConfig, axis: Axis, value: f64, fixed_total: Option<usize>) -> Result<ExperimentConfig> {
    let mut c = base.clone();
    let as_count = |v: f64| -> Result<usize> {
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::Config(format!("axis {} needs positive integers, got {v}", axis.label())))
        }
    };
    match axis {
        Axis::Workers => {
            let n_workers = as_count(value)?;
            c.problem.workers = n_workers;
            if let Some(total) = fixed_total {
                if total % n_workers != 0 {
                    return Err(Error::Config(format!(
                        "--fixed-total: N*n = {total} is not divisible by N = {n_workers}"
                    )));
                }
                c.problem.samples = Some(total / n_workers);
            }
        }
        Axis::Period => {
            let period = as_count(value)?;
            let a = &mut c.algorithm;
            if let Some(auto) = &mut a.auto {
                auto.period = period;
            } else if let Some(p) = &mut a.params {
                p.period = period;
            } else if let Some(s) = &mut a.sgd {
                s.period = period;
            }
        }
        Axis::Eps => {
            let auto = c
                .algorithm
                .auto
                .as_mut()
                .ok_or_else(|| Error::Config("axis eps needs algorithm.auto".into()))?;
            auto.eps = value;
            c.run.report_eps = vec![value];
        }
        Axis::Heterogeneity => c.problem.heterogeneity = value,
    }
    c.validate()?;
    Ok(c)
}

const SWEEP_HEADER: &str =
    "axis,value,seed,eps,ifo_at_eps,comm_at_eps,per_node_ifo,ifo_single_charge,comm_vectors";

fn cmd_sweep(path: &Path, axis: Axis, values: &[f64], fixed_total: bool) -> Result<i32> {
    let base = ExperimentConfig::load(path)?;
    let fixed = match (fixed_total, axis) {
        (false, _) => None,
        (true, Axis::Workers) => {
            let n = base
                .problem
                .samples
                .ok_or_else(|| Error::Config("--fixed-total needs a finite-sum problem".into()))?;
            Some(n * base.problem.workers)
        }
        (true, _) => return Err(Error::Config("--fixed-total only applies to axis N".into())),
    };
    let dir = base.output_dir();
    std::fs::create_dir_all(&dir)?;
    let label = axis.label();

    let mut table = String::from(SWEEP_HEADER);
    table.push('\n');
    let mut stats = String::from("axis,value,eps,metric,median,min,max\n");
    for &value in values {
        let cfg = with_axis(&base, axis, value, fixed)?;
        let suite = cfg.build_suite()?;
        let resolved = cfg.resolve(&suite)?;
        let eps_list = cfg.report_eps();
        if eps_list.is_empty() {
            return Err(Error::Config("sweep needs run.report_eps or algorithm.auto.eps".into()));
        }
        let smallest = eps_list.iter().copied().fold(f64::INFINITY, f64::min);
        let mut opts = cfg.run_options();
        opts.stop_below = Some(opts.stop_below.map_or(smallest, |s| s.min(smallest)));
        let workers = suite.workers() as u64;

        let mut cols: Vec<[Vec<Option<u64>>; 3]> = vec![Default::default(); eps_list.len()];
        for &seed in &cfg.run.seeds {
            let trace = match resolved.execute(&cfg, &suite, seed, opts) {
                Ok(t) => t,
                Err(Error::Diverged(t)) => {
                    let stem = format!("sweep-{label}-{value}-{}", trace_stem(&cfg, seed));
                    write_trace(&dir, &stem, &t)?;
                    std::fs::write(dir.join(format!("sweep_{label}.csv")), &table)?;
                    eprintln!("error: run diverged ({label} = {value}, seed {seed}); partial trace written");
                    return Ok(EXIT_DIVERGED);
                }
                Err(e) => return Err(e),
            };
            for (k, &eps) in eps_list.iter().enumerate() {
                let hit = first_hit(&trace, eps);
                let h = hit.as_ref();
                let _ = writeln!(
                    table,
                    "{label},{value},{seed},{eps},{},{},{},{},{}",
                    fmt_hit(h, |h| h.ifo_total.to_string()),
                    fmt_hit(h, |h| h.comm_rounds.to_string()),
                    fmt_hit(h, |h| (h.ifo_total / workers).to_string()),
                    fmt_hit(h, |h| h.ifo_single_charge.to_string()),
                    fmt_hit(h, |h| h.comm_vectors.to_string()),
                );
                cols[k][0].push(hit.map(|h| h.ifo_total));
                cols[k][1].push(hit.map(|h| h.comm_rounds));
                cols[k][2].push(hit.map(|h| h.ifo_total / workers));
            }
        }
        for (k, eps) in eps_list.iter().enumerate() {
            for (name, vals) in ["ifo_at_eps", "comm_at_eps", "per_node_ifo"].iter().zip(&cols[k]) {
                let (med, lo, hi) = median_min_max(vals);
                let _ = writeln!(stats, "{label},{value},{eps},{name},{med},{lo},{hi}");
            }
        }
    }
    std::fs::write(dir.join(format!("sweep_{label}.csv")), &table)?;
    std::fs::write(dir.join(format!("sweep_{label}_stats.csv")), &stats)?;
    print!("{stats}");
    println!("wrote {}", dir.display());
    Ok(EXIT_OK)
}

fn cmd_verify(suite: SuiteArg, inject: Option<InjectArg>, seeds: Vec<u64>) -> Result<i32> {
    let selector = match suite {
        SuiteArg::Finite => VerifySuite::Finite,
        SuiteArg::Online => VerifySuite::Online,
        SuiteArg::Problems => VerifySuite::Problems,
        SuiteArg::All => VerifySuite::All,
    };
    let opts = VerifyOptions {
        seeds,
        fault: inject.map(|InjectArg::SkipRestart| Fault::SkipRestart),
    };
    let checks = run_verify(selector, &opts)?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    for c in &checks {
        println!("{}", c.to_json_line());
    }
    println!(
        "{}",
        serde_json::json!({ "checks": checks.len(), "failed": failed, "passed": failed == 0 })
    );
    Ok(if failed == 0 { EXIT_OK } else { EXIT_VERIFY })
}
