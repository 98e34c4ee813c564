//! PR-SPIDER (finite-sum and online restarts) and the distributed SGD baselines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{is_averaging_step, EstimatorState};
use crate::harness::{
    Coordinator, Fault, MetricsTrace, NoObserver, Observer, Payload, RunOptions, SyncKind, INIT_EPOCH,
};
use crate::problems::{ProblemSuite, SampleCount};

pub use crate::harness::WorkerState;

/// PR-SPIDER inputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Step size.
    pub gamma: f64,
    /// Averaging period `I`.
    pub period: usize,
    /// Epoch length `m`.
    pub epoch_len: usize,
    /// Inner estimator batch `B`.
    pub batch: usize,
    /// Epoch count `S`.
    pub epochs: usize,
    /// Restart batch `n_b` (online restarts only).
    pub restart_batch: usize,
    /// Worker count `N`.
    pub workers: usize,
    /// Permit `gamma > 1/(8 L I)`.
    #[serde(default)]
    pub allow_large_step: bool,
}

impl HyperParams {
    /// Total inner iterations `T = S * m`.
    pub fn horizon(&self) -> usize {
        self.epochs * self.epoch_len
    }

    /// Largest step the auto rule allows: `1 / (8 L I)`.
    pub fn step_bound(smoothness: f64, period: usize) -> f64 {
        1.0 / (8.0 * smoothness * period as f64)
    }

    pub fn validate(&self, suite: &ProblemSuite) -> Result<()> {
        if self.workers != suite.workers() {
            return Err(Error::invalid(format!(
                "hyperparameters expect {} workers, suite has {}",
                self.workers,
                suite.workers()
            )));
        }
        for (name, v) in [
            ("period", self.period),
            ("epoch_len", self.epoch_len),
            ("batch", self.batch),
            ("epochs", self.epochs),
            ("restart_batch", self.restart_batch),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be >= 1")));
            }
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::invalid("gamma must be finite and >= 0"));
        }
        let bound = Self::step_bound(suite.smoothness(), self.period);
        if self.gamma > bound * (1.0 + 1e-12) && !self.allow_large_step {
            return Err(Error::invalid(format!(
                "gamma = {} exceeds 1/(8 L I) = {bound}; set allow_large_step to override",
                self.gamma
            )));
        }
        Ok(())
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

/// Ceiling that ignores representation error just above an integer.
fn ceil_int(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r.max(0.0) as usize
    } else {
        x.ceil().max(0.0) as usize
    }
}

fn derive_params(
    workers: usize,
    samples: usize,
    period: usize,
    smoothness: f64,
    gap_bound: f64,
    eps: f64,
) -> HyperParams {
    let nn = (workers * samples) as f64;
    let epoch_len = round_half_up(period as f64 * nn.sqrt()).max(1);
    let batch = round_half_up((samples as f64 / workers as f64).sqrt() / period as f64).clamp(1, samples);
    let gamma = HyperParams::step_bound(smoothness, period);
    let horizon = ceil_int(2.0 * gap_bound / (gamma * eps));
    let epochs = horizon.div_ceil(epoch_len).max(1);
    HyperParams {
        gamma,
        period,
        epoch_len,
        batch,
        epochs,
        restart_batch: samples,
        workers,
        allow_large_step: false,
    }
}

fn check_auto_inputs(workers: usize, period: usize, smoothness: f64, gap_bound: f64, eps: f64) -> Result<()> {
    if workers == 0 || period == 0 {
        return Err(Error::invalid("N and I must be >= 1"));
    }
    if !(smoothness > 0.0 && smoothness.is_finite()) {
        return Err(Error::invalid("L must be positive"));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("eps must be positive"));
    }
    if !(gap_bound >= 0.0 && gap_bound.is_finite()) {
        return Err(Error::invalid("gap bound must be finite and >= 0"));
    }
    Ok(())
}

/// Finite-sum rule: `m = I sqrt(N n)`, `B = sqrt(n / N) / I`, `gamma = 1/(8 L I)`,
/// `T = 2 gap / (gamma eps)`, `S = ceil(T / m)`.
pub fn choose_params_finite(
    workers: usize,
    samples: usize,
    period: usize,
    smoothness: f64,
    gap_bound: f64,
    eps: f64,
) -> Result<HyperParams> {
    check_auto_inputs(workers, period, smoothness, gap_bound, eps)?;
    if samples == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    Ok(derive_params(workers, samples, period, smoothness, gap_bound, eps))
}

/// Online rule: `n_b = ceil(4 sigma^2 / (N eps))`, then the finite rule with `n = n_b`.
pub fn choose_params_online(
    workers: usize,
    sigma: f64,
    period: usize,
    smoothness: f64,
    gap_bound: f64,
    eps: f64,
) -> Result<HyperParams> {
    check_auto_inputs(workers, period, smoothness, gap_bound, eps)?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("sigma must be finite and >= 0"));
    }
    let restart_batch = ceil_int(4.0 * sigma * sigma / (workers as f64 * eps)).max(1);
    Ok(derive_params(workers, restart_batch, period, smoothness, gap_bound, eps))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Restart {
    /// Exact local gradients.
    Full,
    /// `n_b`-sample stochastic gradients.
    Batch(usize),
}

fn spider_echo(name: &str, suite: &ProblemSuite, hp: &HyperParams, seed: u64) -> serde_json::Value {
    serde_json::json!({
        "algorithm": name,
        "hyperparams": hp,
        "workers": suite.workers(),
        "dim": suite.dim(),
        "seed": seed,
    })
}

pub fn run_pr_spider_finite(suite: &ProblemSuite, hp: &HyperParams, seed: u64) -> Result<MetricsTrace> {
    run_pr_spider_finite_with(suite, hp, seed, RunOptions::default(), &mut NoObserver)
}

pub fn run_pr_spider_finite_with(
    suite: &ProblemSuite,
    hp: &HyperParams,
    seed: u64,
    opts: RunOptions,
    observer: &mut dyn Observer,
) -> Result<MetricsTrace> {
    if !suite.is_finite_sum() {
        return Err(Error::Unsupported(
            "finite-sum PR-SPIDER needs enumerable samples; use the online variant".into(),
        ));
    }
    run_pr_spider(suite, hp, seed, Restart::Full, opts, observer, "pr-spider-finite")
}

pub fn run_pr_spider_online(suite: &ProblemSuite, hp: &HyperParams, seed: u64) -> Result<MetricsTrace> {
    run_pr_spider_online_with(suite, hp, seed, RunOptions::default(), &mut NoObserver)
}

/// Works on any suite: finite-sum suites are sampled uniformly with replacement.
pub fn run_pr_spider_online_with(
    suite: &ProblemSuite,
    hp: &HyperParams,
    seed: u64,
    opts: RunOptions,
    observer: &mut dyn Observer,
) -> Result<MetricsTrace> {
    run_pr_spider(
        suite,
        hp,
        seed,
        Restart::Batch(hp.restart_batch),
        opts,
        observer,
        "pr-spider-online",
    )
}

fn restart_gradients(coord: &mut Coordinator<'_>, restart: Restart, epoch: u64, iteration: u64) -> Result<()> {
    let seed = coord.seed();
    coord.each_worker(move |w, obj| {
        w.est.v = match restart {
            Restart::Full => obj.full_gradient(&w.x, &mut w.ifo)?,
            Restart::Batch(nb) => {
                let mut rng = w.stream(seed, epoch, iteration);
                obj.batch_gradient(&w.x, nb, &mut rng, &mut w.ifo)?
            }
        };
        Ok(())
    })
}

fn local_step(coord: &mut Coordinator<'_>, gamma: f64) -> Result<()> {
    coord.each_worker(move |w, _| {
        w.x.add_scaled(-gamma, &w.est.v);
        Ok(())
    })
}

fn run_pr_spider(
    suite: &ProblemSuite,
    hp: &HyperParams,
    seed: u64,
    restart: Restart,
    opts: RunOptions,
    observer: &mut dyn Observer,
    name: &str,
) -> Result<MetricsTrace> {
    hp.validate(suite)?;
    let echo = spider_echo(name, suite, hp, seed);
    let (gamma, period, m, batch) = (hp.gamma, hp.period, hp.epoch_len, hp.batch);
    let skip_restart = opts.fault == Some(Fault::SkipRestart);
    let mut coord = Coordinator::new(suite, seed, opts, observer);

    // v^0 = (1/N) sum_i grad f_i(x^0): one gradient round.
    restart_gradients(&mut coord, restart, INIT_EPOCH, 0)?;
    coord.sync(Payload::Gradients, SyncKind::Init)?;
    coord.check_finite(&echo)?;

    for s in 0..hp.epochs {
        coord.each_worker(|w, _| {
            w.epoch = s;
            w.est = EstimatorState::restart(w.est.v.clone(), w.x.clone());
            Ok(())
        })?;
        coord.epoch_start(s);
        coord.record(s, 0)?;
        if coord.stopped() {
            break;
        }
        local_step(&mut coord, gamma)?;
        coord.check_finite(&echo)?;
        coord.stepped(s, 0);

        for t in 1..m {
            coord.each_worker(|w, obj| {
                let mut rng = w.stream(seed, s as u64, t as u64);
                let x = w.x.clone();
                w.est.advance(obj, &x, batch, &mut rng, &mut w.ifo)
            })?;
            if is_averaging_step(t, period) {
                coord.sync(Payload::Both, SyncKind::InEpoch)?;
            }
            coord.check_finite(&echo)?;
            coord.record(s, t)?;
            if coord.stopped() {
                break;
            }
            local_step(&mut coord, gamma)?;
            coord.check_finite(&echo)?;
            coord.stepped(s, t);
        }

        if coord.stopped() {
            break;
        }
        if s + 1 < hp.epochs && !skip_restart {
            coord.sync(Payload::Iterates, SyncKind::EpochIterates)?;
            restart_gradients(&mut coord, restart, s as u64, m as u64)?;
            coord.sync(Payload::Gradients, SyncKind::EpochGradients)?;
            coord.check_finite(&echo)?;
        }
    }
    Ok(coord.finish(echo))
}

/// Baseline settings shared by both SGD variants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdParams {
    pub gamma: f64,
    pub batch: usize,
    /// Iterations between iterate averages.
    pub period: usize,
    pub horizon: usize,
}

/// Every worker steps on its own `batch`-sample gradient from the common
/// iterate, then the server averages the iterates. One round per iteration.
/// A batch equal to a finite worker's sample count is one pass over its data.
pub fn run_parallel_minibatch_sgd(
    suite: &ProblemSuite,
    gamma: f64,
    batch: usize,
    horizon: usize,
    seed: u64,
) -> Result<MetricsTrace> {
    let p = SgdParams { gamma, batch, period: 1, horizon };
    run_local_sgd(suite, &p, seed, RunOptions::default(), &mut NoObserver, "par-sgd")
}

/// Local SGD with iterate averaging every `period` iterations (and once more
/// at the end if `horizon` is not a multiple), so `ceil(horizon / period)` rounds.
pub fn run_parallel_restarted_sgd(
    suite: &ProblemSuite,
    gamma: f64,
    batch: usize,
    period: usize,
    horizon: usize,
    seed: u64,
) -> Result<MetricsTrace> {
    let p = SgdParams { gamma, batch, period, horizon };
    run_local_sgd(suite, &p, seed, RunOptions::default(), &mut NoObserver, "par-restarted-sgd")
}

pub fn run_local_sgd(
    suite: &ProblemSuite,
    p: &SgdParams,
    seed: u64,
    opts: RunOptions,
    observer: &mut dyn Observer,
    name: &str,
) -> Result<MetricsTrace> {
    if p.batch == 0 || p.period == 0 || p.horizon == 0 {
        return Err(Error::invalid("batch, period and horizon must be >= 1"));
    }
    if !(p.gamma.is_finite() && p.gamma >= 0.0) {
        return Err(Error::invalid("gamma must be finite and >= 0"));
    }
    let echo = serde_json::json!({
        "algorithm": name,
        "sgd": p,
        "workers": suite.workers(),
        "dim": suite.dim(),
        "seed": seed,
    });
    let (gamma, batch, period) = (p.gamma, p.batch, p.period);
    let mut coord = Coordinator::new(suite, seed, opts, observer);
    for k in 0..p.horizon {
        let (s, t) = (k / period, k % period);
        coord.each_worker(|w, _| {
            w.epoch = s;
            w.est.t = t;
            Ok(())
        })?;
        if t == 0 {
            coord.epoch_start(s);
        }
        coord.record(s, t)?;
        if coord.stopped() {
            break;
        }
        coord.each_worker(|w, obj| {
            let g = if obj.sample_count() == SampleCount::Finite(batch) {
                obj.full_gradient(&w.x, &mut w.ifo)?
            } else {
                let mut rng = w.stream(seed, 0, k as u64);
                obj.batch_gradient(&w.x, batch, &mut rng, &mut w.ifo)?
            };
            w.x.add_scaled(-gamma, &g);
            w.est.v = g;
            Ok(())
        })?;
        coord.check_finite(&echo)?;
        if (k + 1) % period == 0 || k + 1 == p.horizon {
            coord.sync(Payload::Iterates, SyncKind::Periodic)?;
        }
        coord.stepped(s, t);
    }
    Ok(coord.finish(echo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::make_quadratic_suite;

    #[test]
    fn finite_rule_examples() {
        let hp = choose_params_finite(4, 64, 4, 1.0, 1.0, 0.1).unwrap();
        assert_eq!(hp.epoch_len, 64);
        assert_eq!(hp.batch, 1);
        assert_eq!(choose_params_finite(4, 64, 8, 1.0, 1.0, 0.1).unwrap().gamma, 1.0 / 64.0);
        let tiny = choose_params_finite(1, 1, 1, 1.0, 1.0, 0.1).unwrap();
        assert_eq!((tiny.epoch_len, tiny.batch), (1, 1));
        // T = ceil(2 * 1 / (1/8 * 0.1)) = 160, S = ceil(160 / 1)
        assert_eq!(tiny.epochs, 160);
        assert_eq!(tiny.horizon(), 160);
    }

    #[test]
    fn online_rule_examples() {
        let hp = choose_params_online(4, 2.0, 4, 1.0, 1.0, 0.1).unwrap();
        assert_eq!(hp.restart_batch, 40);
        assert_eq!(choose_params_online(4, 0.0, 4, 1.0, 1.0, 0.1).unwrap().restart_batch, 1);
        // n_b = 64: sigma^2 = 64 * N * eps / 4
        let hp = choose_params_online(4, (64.0f64 * 4.0 * 0.1 / 4.0).sqrt(), 4, 1.0, 1.0, 0.1).unwrap();
        assert_eq!(hp.restart_batch, 64);
        assert_eq!((hp.epoch_len, hp.batch), (64, 1));
    }

    #[test]
    fn batch_is_clamped_to_sample_count() {
        let hp = choose_params_finite(1, 4, 1, 1.0, 1.0, 1.0).unwrap();
        // sqrt(4 / 1) / 1 = 2
        assert_eq!(hp.batch, 2);
        let hp = choose_params_finite(64, 1, 1, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(hp.batch, 1);
    }

    #[test]
    fn bad_auto_inputs() {
        assert!(choose_params_finite(4, 64, 4, 1.0, 1.0, 0.0).is_err());
        assert!(choose_params_online(4, -1.0, 4, 1.0, 1.0, 0.1).is_err());
        assert!(choose_params_finite(0, 64, 4, 1.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn oversized_step_needs_override() {
        let s = make_quadratic_suite(2, SampleCount::Finite(4), 2, 0.0, 1).unwrap();
        let mut hp = choose_params_finite(2, 4, 2, 1.0, 1.0, 0.5).unwrap();
        hp.gamma = 1.0;
        assert!(hp.validate(&s).is_err());
        hp.allow_large_step = true;
        assert!(hp.validate(&s).is_ok());
        hp.workers = 3;
        assert!(hp.validate(&s).is_err());
    }

    #[test]
    fn finite_variant_rejects_online_suite() {
        let s = make_quadratic_suite(2, SampleCount::Online, 2, 0.0, 1).unwrap();
        let hp = choose_params_online(2, 1.0, 1, 1.0, 1.0, 0.5).unwrap();
        assert!(matches!(run_pr_spider_finite(&s, &hp, 0), Err(Error::Unsupported(_))));
        assert!(run_pr_spider_online(&s, &hp, 0).is_ok());
    }

    #[test]
    fn oversized_step_diverges_loudly() {
        let s = make_quadratic_suite(2, SampleCount::Finite(4), 2, 0.0, 1).unwrap();
        let hp = HyperParams {
            gamma: 1e3,
            period: 1,
            epoch_len: 50,
            batch: 1,
            epochs: 40,
            restart_batch: 4,
            workers: 2,
            allow_large_step: true,
        };
        match run_pr_spider_finite(&s, &hp, 1) {
            Err(Error::Diverged(tr)) => {
                assert!(!tr.records.is_empty());
                assert_eq!(tr.outcome, crate::harness::Outcome::Diverged);
                assert!(tr.records.len() < hp.horizon());
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn trace_length_is_horizon() {
        let s = make_quadratic_suite(3, SampleCount::Finite(9), 2, 1.0, 1).unwrap();
        let hp = HyperParams {
            gamma: 0.01,
            period: 2,
            epoch_len: 5,
            batch: 2,
            epochs: 3,
            restart_batch: 9,
            workers: 3,
            allow_large_step: false,
        };
        let tr = run_pr_spider_finite(&s, &hp, 1).unwrap();
        assert_eq!(tr.records.len(), 15);
        let keys: Vec<_> = tr.records.iter().map(|r| (r.s, r.t)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn sgd_rejects_zero_sizes() {
        let s = make_quadratic_suite(1, SampleCount::Finite(2), 1, 0.0, 1).unwrap();
        assert!(run_parallel_minibatch_sgd(&s, 0.1, 0, 5, 0).is_err());
        assert!(run_parallel_restarted_sgd(&s, 0.1, 1, 0, 5, 0).is_err());
        assert!(run_parallel_restarted_sgd(&s, 0.1, 1, 1, 0, 0).is_err());
    }
}
