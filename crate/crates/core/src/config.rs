//! Experiment configuration: TOML in, resolved runs out.
//!
//! ```toml
//! [problem]
//! family = "quadratic"   # or "sigmoid"
//! workers = 4            # alias: N
//! samples = 64           # alias: n; omit and set online = true for sampler-only suites
//! dim = 10               # alias: d
//! heterogeneity = 1.0
//! seed = 0
//!
//! [algorithm]
//! name = "pr-spider-finite"   # pr-spider-online | par-sgd | par-restarted-sgd
//! auto = { eps = 0.05, period = 4 }
//!
//! [run]
//! seeds = [0, 1, 2]
//! output_dir = "runs/quadratic"
//! metrics_every = 1
//! report_eps = [0.1, 0.05]
//! ```
//!
//! Explicit settings replace `auto` with `[algorithm.params]` (PR-SPIDER) or
//! `[algorithm.sgd]` (baselines).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithms::{
    choose_params_finite, choose_params_online, run_local_sgd, run_pr_spider_finite_with, run_pr_spider_online_with,
    HyperParams, SgdParams,
};
use crate::error::{Error, Result};
use crate::harness::{MetricsTrace, NoObserver, RunOptions};
use crate::problems::{make_suite, Family, ProblemSuite, SampleCount};

/// Overrides the root that relative output directories resolve against.
pub const OUTPUT_ROOT_ENV: &str = "PRSPIDER_OUTPUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub run: RunConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub family: Family,
    #[serde(alias = "N")]
    pub workers: usize,
    #[serde(alias = "n", default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default)]
    pub online: bool,
    #[serde(alias = "d")]
    pub dim: usize,
    #[serde(default)]
    pub heterogeneity: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmName {
    PrSpiderFinite,
    PrSpiderOnline,
    ParSgd,
    ParRestartedSgd,
}

impl AlgorithmName {
    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmName::PrSpiderFinite => "pr-spider-finite",
            AlgorithmName::PrSpiderOnline => "pr-spider-online",
            AlgorithmName::ParSgd => "par-sgd",
            AlgorithmName::ParRestartedSgd => "par-restarted-sgd",
        }
    }

    fn is_spider(self) -> bool {
        matches!(self, AlgorithmName::PrSpiderFinite | AlgorithmName::PrSpiderOnline)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub name: AlgorithmName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auto: Option<AutoParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<SpiderParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sgd: Option<SgdParams>,
}

/// Inputs to the automatic parameter rules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoParams {
    pub eps: f64,
    #[serde(default = "one")]
    pub period: usize,
    /// Baselines only: per-worker minibatch.
    #[serde(default = "one")]
    pub batch: usize,
    /// Baselines only: iteration count; defaults to the PR-SPIDER horizon rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
}

fn one() -> usize {
    1
}

/// Explicit PR-SPIDER settings; `workers` comes from the problem block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpiderParams {
    pub gamma: f64,
    pub period: usize,
    pub epoch_len: usize,
    pub batch: usize,
    pub epochs: usize,
    /// Required for online runs; finite-sum runs ignore it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restart_batch: Option<usize>,
    #[serde(default)]
    pub allow_large_step: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "one")]
    pub metrics_every: usize,
    /// Accuracies reported in the summary; defaults to the auto eps.
    #[serde(default)]
    pub report_eps: Vec<f64>,
    #[serde(default)]
    pub parallel: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_below: Option<f64>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seeds: default_seeds(),
            output_dir: default_output_dir(),
            metrics_every: 1,
            report_eps: Vec::new(),
            parallel: false,
            stop_below: None,
        }
    }
}

/// Settings after the parameter rules ran against a concrete suite.
#[derive(Clone, Debug, PartialEq)]
pub enum Resolved {
    Spider { hp: HyperParams, online: bool },
    Sgd(SgdParams),
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Accepts a bare config object or a run sidecar carrying one under `config`.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| {
            Error::Config(format!("JSON parse error at line {}, column {}: {e}", e.line(), e.column()))
        })?;
        let mut inner = value.get("config").cloned().unwrap_or(value);
        if let Some(e) = inner.get("experiment") {
            inner = e.clone();
        }
        let cfg: ExperimentConfig = serde_json::from_value(inner).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads TOML, or JSON when the file ends in `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        };
        parsed.map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Structural checks that do not need the problem suite.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(Error::Config(format!("{key}: {msg}")));
        let p = &self.problem;
        if p.workers == 0 {
            return bad("problem.workers", "must be >= 1");
        }
        if p.dim == 0 {
            return bad("problem.dim", "must be >= 1");
        }
        if !(p.heterogeneity.is_finite() && p.heterogeneity >= 0.0) {
            return bad("problem.heterogeneity", "must be finite and >= 0");
        }
        match (p.samples, p.online) {
            (Some(_), true) => return bad("problem.samples", "must be omitted when online = true"),
            (None, false) => return bad("problem.samples", "required unless online = true"),
            (Some(0), false) => return bad("problem.samples", "must be >= 1"),
            _ => {}
        }

        let a = &self.algorithm;
        let given = [a.auto.is_some(), a.params.is_some(), a.sgd.is_some()]
            .iter()
            .filter(|b| **b)
            .count();
        if given != 1 {
            return bad("algorithm", "give exactly one of auto, params or sgd");
        }
        if a.name.is_spider() && a.sgd.is_some() {
            return bad("algorithm.sgd", "only valid for par-sgd and par-restarted-sgd");
        }
        if !a.name.is_spider() && a.params.is_some() {
            return bad("algorithm.params", "only valid for pr-spider-finite and pr-spider-online");
        }
        if a.name == AlgorithmName::PrSpiderFinite && p.online {
            return bad("algorithm.name", "pr-spider-finite needs a finite-sum problem (online = false)");
        }
        if let Some(auto) = &a.auto {
            if !(auto.eps.is_finite() && auto.eps > 0.0) {
                return bad("algorithm.auto.eps", "must be positive");
            }
            if auto.period == 0 || auto.batch == 0 || auto.horizon == Some(0) {
                return bad("algorithm.auto", "period, batch and horizon must be >= 1");
            }
            if a.name == AlgorithmName::ParSgd && auto.period != 1 {
                return bad("algorithm.auto.period", "par-sgd averages every iteration; use 1");
            }
        }
        if let Some(sp) = &a.params {
            if a.name == AlgorithmName::PrSpiderOnline && sp.restart_batch.is_none() {
                return bad("algorithm.params.restart_batch", "required for pr-spider-online");
            }
        }
        if let Some(sg) = &a.sgd {
            if a.name == AlgorithmName::ParSgd && sg.period != 1 {
                return bad("algorithm.sgd.period", "par-sgd averages every iteration; use 1");
            }
        }

        let r = &self.run;
        if r.seeds.is_empty() {
            return bad("run.seeds", "must list at least one seed");
        }
        if r.report_eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return bad("run.report_eps", "entries must be positive");
        }
        if r.stop_below.is_some_and(|e| !(e.is_finite() && e >= 0.0)) {
            return bad("run.stop_below", "must be finite and >= 0");
        }
        Ok(())
    }

    pub fn sample_count(&self) -> SampleCount {
        match self.problem.samples {
            Some(n) if !self.problem.online => SampleCount::Finite(n),
            _ => SampleCount::Online,
        }
    }

    pub fn build_suite(&self) -> Result<ProblemSuite> {
        let p = &self.problem;
        make_suite(p.family, p.workers, self.sample_count(), p.dim, p.heterogeneity, p.seed)
            .map_err(|e| Error::Config(format!("problem: {e}")))
    }

    /// Accuracies for the summary: `run.report_eps`, else the auto eps.
    pub fn report_eps(&self) -> Vec<f64> {
        if !self.run.report_eps.is_empty() {
            return self.run.report_eps.clone();
        }
        self.algorithm.auto.as_ref().map(|a| vec![a.eps]).unwrap_or_default()
    }

    /// Apply the parameter rules (or take the explicit settings) for `suite`.
    pub fn resolve(&self, suite: &ProblemSuite) -> Result<Resolved> {
        let a = &self.algorithm;
        let cfg_err = |e: Error| Error::Config(format!("algorithm: {e}"));
        let n = suite.workers();
        match a.name {
            AlgorithmName::PrSpiderFinite | AlgorithmName::PrSpiderOnline => {
                let online = a.name == AlgorithmName::PrSpiderOnline;
                let hp = if let Some(auto) = &a.auto {
                    if online {
                        choose_params_online(
                            n,
                            suite.variance_bound(),
                            auto.period,
                            suite.smoothness(),
                            suite.gap_bound(),
                            auto.eps,
                        )
                    } else {
                        let SampleCount::Finite(samples) = suite.sample_count() else {
                            return Err(Error::Config("pr-spider-finite needs a finite-sum problem".into()));
                        };
                        choose_params_finite(n, samples, auto.period, suite.smoothness(), suite.gap_bound(), auto.eps)
                    }
                    .map_err(cfg_err)?
                } else {
                    let sp = a.params.as_ref().expect("validated");
                    let restart_batch = match (online, sp.restart_batch, suite.sample_count()) {
                        (true, Some(nb), _) => nb,
                        (false, _, SampleCount::Finite(samples)) => samples,
                        _ => return Err(Error::Config("algorithm.params.restart_batch: missing".into())),
                    };
                    HyperParams {
                        gamma: sp.gamma,
                        period: sp.period,
                        epoch_len: sp.epoch_len,
                        batch: sp.batch,
                        epochs: sp.epochs,
                        restart_batch,
                        workers: n,
                        allow_large_step: sp.allow_large_step,
                    }
                };
                hp.validate(suite).map_err(cfg_err)?;
                Ok(Resolved::Spider { hp, online })
            }
            AlgorithmName::ParSgd | AlgorithmName::ParRestartedSgd => {
                let p = if let Some(auto) = &a.auto {
                    let gamma = HyperParams::step_bound(suite.smoothness(), auto.period);
                    let horizon = auto.horizon.unwrap_or_else(|| {
                        let t = 2.0 * suite.gap_bound() / (gamma * auto.eps);
                        (t.ceil() as usize).max(1)
                    });
                    SgdParams {
                        gamma,
                        batch: auto.batch,
                        period: auto.period,
                        horizon,
                    }
                } else {
                    *a.sgd.as_ref().expect("validated")
                };
                if p.batch == 0 || p.period == 0 || p.horizon == 0 {
                    return Err(Error::Config("algorithm.sgd: batch, period and horizon must be >= 1".into()));
                }
                if !(p.gamma.is_finite() && p.gamma >= 0.0) {
                    return Err(Error::Config("algorithm.sgd.gamma: must be finite and >= 0".into()));
                }
                Ok(Resolved::Sgd(p))
            }
        }
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            parallel: self.run.parallel,
            metrics_every: self.run.metrics_every,
            fault: None,
            stop_below: self.run.stop_below,
        }
    }

    /// Output directory, rooted at `$PRSPIDER_OUTPUT_ROOT` when that is set
    /// and the configured path is relative.
    pub fn output_dir(&self) -> PathBuf {
        let dir = &self.run.output_dir;
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
            _ => dir.clone(),
        }
    }

    /// The same experiment pinned to one seed; its JSON is the rerun recipe.
    pub fn for_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.run.seeds = vec![seed];
        c
    }
}

impl Resolved {
    /// Run one seed. The trace's config echo is the single-seed experiment
    /// config together with the resolved settings.
    pub fn execute(
        &self,
        cfg: &ExperimentConfig,
        suite: &ProblemSuite,
        seed: u64,
        opts: RunOptions,
    ) -> Result<MetricsTrace> {
        let result = match self {
            Resolved::Spider { hp, online: false } => run_pr_spider_finite_with(suite, hp, seed, opts, &mut NoObserver),
            Resolved::Spider { hp, online: true } => run_pr_spider_online_with(suite, hp, seed, opts, &mut NoObserver),
            Resolved::Sgd(p) => run_local_sgd(suite, p, seed, opts, &mut NoObserver, cfg.algorithm.name.as_str()),
        };
        let echo = |resolved: serde_json::Value| {
            serde_json::json!({
                "experiment": cfg.for_seed(seed).to_json(),
                "resolved": resolved,
            })
        };
        match result {
            Ok(mut trace) => {
                trace.config_echo = echo(std::mem::take(&mut trace.config_echo));
                Ok(trace)
            }
            Err(Error::Diverged(mut trace)) => {
                trace.config_echo = echo(std::mem::take(&mut trace.config_echo));
                Err(Error::Diverged(trace))
            }
            Err(e) => Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[problem]
family = "quadratic"
N = 2
n = 8
d = 3

[algorithm]
name = "pr-spider-finite"
auto = { eps = 0.5, period = 2 }
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.problem.workers, 2);
        assert_eq!(c.problem.samples, Some(8));
        assert_eq!(c.run.seeds, vec![0]);
        assert_eq!(c.run.metrics_every, 1);
        assert_eq!(c.report_eps(), vec![0.5]);
        let suite = c.build_suite().unwrap();
        match c.resolve(&suite).unwrap() {
            Resolved::Spider { hp, online } => {
                assert!(!online);
                assert_eq!(hp.period, 2);
                assert_eq!(hp.epoch_len, 8);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let broken = MINIMAL.replace("d = 3", "d = = 3");
        let msg = ExperimentConfig::from_toml_str(&broken).unwrap_err().to_string();
        assert!(msg.contains("line 6"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let extra = MINIMAL.replace("d = 3", "d = 3\nbogus = 1");
        assert!(matches!(ExperimentConfig::from_toml_str(&extra), Err(Error::Config(_))));
    }

    #[test]
    fn incompatible_choices_are_rejected() {
        let online = MINIMAL.replace("n = 8", "online = true");
        let msg = ExperimentConfig::from_toml_str(&online).unwrap_err().to_string();
        assert!(msg.contains("algorithm.name"), "{msg}");

        let both = MINIMAL.replace(
            "auto = { eps = 0.5, period = 2 }",
            "auto = { eps = 0.5 }\nsgd = { gamma = 0.1, batch = 1, period = 1, horizon = 5 }",
        );
        assert!(ExperimentConfig::from_toml_str(&both).is_err());

        let missing = MINIMAL.replace("n = 8\n", "");
        assert!(ExperimentConfig::from_toml_str(&missing).is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap().for_seed(7);
        let text = serde_json::to_string(&serde_json::json!({ "config": c.to_json(), "seed": 7 })).unwrap();
        assert_eq!(ExperimentConfig::from_json_str(&text).unwrap(), c);
        let nested = serde_json::json!({ "config": { "experiment": c.to_json(), "resolved": {} } });
        assert_eq!(ExperimentConfig::from_json_str(&nested.to_string()).unwrap(), c);
        assert_eq!(ExperimentConfig::from_json_str(&c.to_json().to_string()).unwrap(), c);
    }

    #[test]
    fn sgd_auto_uses_step_rule() {
        let text = MINIMAL.replace("pr-spider-finite", "par-restarted-sgd");
        let c = ExperimentConfig::from_toml_str(&text).unwrap();
        let suite = c.build_suite().unwrap();
        let Resolved::Sgd(p) = c.resolve(&suite).unwrap() else {
            panic!("expected sgd")
        };
        assert_eq!(p.gamma, 1.0 / 16.0);
        assert_eq!(p.period, 2);
        assert_eq!(p.batch, 1);
    }
}
