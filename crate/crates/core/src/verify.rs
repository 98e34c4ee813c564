//! Built-in property suites: restart exactness, consensus after averaging,
//! the exact-GD degeneracy, the averaged-iterate recursion, counter closed
//! forms, restart-batch variance, the one-sided stationarity bound, and
//! certificates for the advertised problem constants.
//!
//! Every check reports a measured value against a tolerance so that the CLI
//! can print machine-readable lines.

use serde::Serialize;

use crate::algorithms::{
    choose_params_finite, choose_params_online, run_pr_spider_finite_with, run_pr_spider_online_with, HyperParams,
};
use crate::error::{Error, Result};
use crate::harness::{
    Broadcast, Fault, MetricsRecord, NoObserver, Observer, RoundView, RunOptions, SyncKind,
};
use crate::numerics::{mean_reduce, sq_dist, sq_norm, ParamVector, RngStream, StreamId};
use crate::problems::{make_suite, Family, IfoCounter, ProblemSuite, Sample, SampleCount};

const VERIFY_STREAM: u64 = 0x7665_7269_6679;

/// Which group of checks to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerifySuite {
    Finite,
    Online,
    Problems,
    All,
}

impl std::str::FromStr for VerifySuite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "finite" => Ok(VerifySuite::Finite),
            "online" => Ok(VerifySuite::Online),
            "problems" => Ok(VerifySuite::Problems),
            "all" => Ok(VerifySuite::All),
            other => Err(Error::invalid(format!(
                "unknown verify suite '{other}' (expected finite, online, problems or all)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">")]
    Above,
}

/// Outcome of one property check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub relation: Relation,
    pub tolerance: f64,
}

impl Check {
    pub fn at_most(suite: &'static str, name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Check {
            suite,
            name: name.into(),
            passed: measured <= tolerance,
            measured,
            relation: Relation::AtMost,
            tolerance,
        }
    }

    pub fn above(suite: &'static str, name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Check {
            suite,
            name: name.into(),
            passed: measured > tolerance,
            measured,
            relation: Relation::Above,
            tolerance,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("checks serialize")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOptions {
    pub seeds: Vec<u64>,
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seeds: vec![0, 1, 2],
            fault: None,
        }
    }
}

fn mean_of<'a>(xs: impl IntoIterator<Item = &'a ParamVector>) -> ParamVector {
    mean_reduce(xs).expect("at least one worker")
}

/// `(1/N) sum_i grad f_i(x_i)` at each worker's own iterate.
fn local_gradient_mean(view: &RoundView<'_>) -> ParamVector {
    let grads: Vec<ParamVector> = view
        .workers
        .iter()
        .zip(view.suite.objectives())
        .map(|(w, o)| o.exact_gradient(&w.x))
        .collect();
    mean_of(&grads)
}

/// Largest `|| v_bar_0 - (1/N) sum_i grad f_i(x_{i,0}) ||` seen at any epoch start.
#[derive(Default)]
pub struct RestartErrorProbe {
    pub max_error: f64,
    pub epochs_seen: usize,
}

impl Observer for RestartErrorProbe {
    fn on_epoch_start(&mut self, _epoch: usize, view: &RoundView<'_>) {
        let v_bar = mean_of(view.workers.iter().map(|w| &w.est.v));
        let err = sq_dist(&v_bar, &local_gradient_mean(view)).sqrt();
        self.max_error = self.max_error.max(err);
        self.epochs_seen += 1;
    }
}

/// Spread of iterates and estimates right after every averaging event, plus a
/// count of broadcasts that were not copied bit for bit.
#[derive(Default)]
pub struct ConsensusProbe {
    pub max_x_spread: f64,
    pub max_v_spread: f64,
    pub mismatches: usize,
    pub syncs: usize,
}

impl Observer for ConsensusProbe {
    fn on_sync(&mut self, _kind: SyncKind, b: &Broadcast, view: &RoundView<'_>) {
        self.syncs += 1;
        if let Some(x) = &b.x {
            let spread: f64 = view.workers.iter().map(|w| sq_dist(&w.x, x)).sum();
            self.max_x_spread = self.max_x_spread.max(spread);
            self.mismatches += view.workers.iter().filter(|w| &w.x != x).count();
        }
        if let Some(v) = &b.v {
            let spread: f64 = view.workers.iter().map(|w| sq_dist(&w.est.v, v)).sum();
            self.max_v_spread = self.max_v_spread.max(spread);
            self.mismatches += view.workers.iter().filter(|w| &w.est.v != v).count();
        }
    }
}

/// Checks `x_bar_{t+1} = x_bar_t - gamma v_bar_t` across every local step.
pub struct AverageIterateProbe {
    gamma: f64,
    pending: Option<(ParamVector, ParamVector)>,
    pub max_error: f64,
    pub steps: usize,
}

impl AverageIterateProbe {
    pub fn new(gamma: f64) -> Self {
        AverageIterateProbe {
            gamma,
            pending: None,
            max_error: 0.0,
            steps: 0,
        }
    }
}

impl Observer for AverageIterateProbe {
    fn on_record(&mut self, _r: &MetricsRecord, view: &RoundView<'_>) {
        let x_bar = mean_of(view.workers.iter().map(|w| &w.x));
        let v_bar = mean_of(view.workers.iter().map(|w| &w.est.v));
        self.pending = Some((x_bar, v_bar));
    }

    fn on_step(&mut self, _s: usize, _t: usize, view: &RoundView<'_>) {
        if let Some((x_bar, v_bar)) = self.pending.take() {
            let mut expect = x_bar;
            expect.add_scaled(-self.gamma, &v_bar);
            let now = mean_of(view.workers.iter().map(|w| &w.x));
            self.max_error = self.max_error.max(sq_dist(&now, &expect).sqrt());
            self.steps += 1;
        }
    }
}

/// Averaged iterate at every record, in trace order.
#[derive(Default)]
pub struct IterateRecorder {
    pub iterates: Vec<ParamVector>,
}

impl Observer for IterateRecorder {
    fn on_record(&mut self, _r: &MetricsRecord, view: &RoundView<'_>) {
        self.iterates.push(mean_of(view.workers.iter().map(|w| &w.x)));
    }
}

/// Captures the server average of the initial gradient round.
#[derive(Default)]
pub struct InitDirection {
    pub v: Option<ParamVector>,
}

impl Observer for InitDirection {
    fn on_sync(&mut self, kind: SyncKind, b: &Broadcast, _view: &RoundView<'_>) {
        if kind == SyncKind::Init {
            self.v.clone_from(&b.v);
        }
    }
}

/// Communication rounds of a full PR-SPIDER run:
/// one init round, `floor((m-1)/I)` in-epoch syncs per epoch, two per restart.
pub fn closed_form_rounds(epochs: usize, epoch_len: usize, period: usize) -> u64 {
    let s = epochs as u64;
    1 + s * ((epoch_len as u64 - 1) / period as u64) + 2 * (s - 1)
}

/// Total IFOs of a full PR-SPIDER run with `restart_samples` per worker per
/// gradient round (`n` for finite sums, `n_b` online).
pub fn closed_form_ifo(workers: usize, restart_samples: usize, epochs: usize, epoch_len: usize, batch: usize) -> u64 {
    let (nw, nr, s, m, b) = (
        workers as u64,
        restart_samples as u64,
        epochs as u64,
        epoch_len as u64,
        batch as u64,
    );
    nw * nr + s * (m - 1) * nw * 2 * b + (s - 1) * nw * nr
}

/// Right-hand side of the min-over-trajectory stationarity bound:
/// `2 gap / (T gamma)`, plus `2 sigma^2 / (N n_b)` for batch restarts.
pub fn stationarity_bound(suite: &ProblemSuite, hp: &HyperParams, online: bool) -> f64 {
    let t = hp.horizon() as f64;
    let mut bound = 2.0 * suite.gap_bound() / (t * hp.gamma);
    if online {
        let sigma = suite.variance_bound();
        bound += 2.0 * sigma * sigma / (suite.workers() as f64 * hp.restart_batch as f64);
    }
    bound
}

/// Monte-Carlo mean of `|| v_bar_0 - grad f(x0) ||^2` over `restarts` seeded
/// batch restarts, driven through the online algorithm's own init round.
pub fn restart_variance(suite: &ProblemSuite, restart_batch: usize, restarts: usize, base_seed: u64) -> Result<f64> {
    let hp = HyperParams {
        gamma: 0.0,
        period: 1,
        epoch_len: 1,
        batch: 1,
        epochs: 1,
        restart_batch,
        workers: suite.workers(),
        allow_large_step: false,
    };
    let opts = RunOptions {
        metrics_every: 0,
        ..RunOptions::default()
    };
    let exact = suite.true_global_gradient(suite.initial_point());
    let mut total = 0.0;
    for r in 0..restarts {
        let mut probe = InitDirection::default();
        run_pr_spider_online_with(suite, &hp, base_seed.wrapping_add(r as u64), opts, &mut probe)?;
        let v = probe.v.ok_or_else(|| Error::Internal("init round not observed".into()))?;
        total += sq_dist(&v, &exact);
    }
    Ok(total / restarts as f64)
}

/// Deterministic gradient descent on the global objective, with the gradient
/// assembled by enumerating every sample of every worker.
pub fn gradient_descent_oracle(suite: &ProblemSuite, gamma: f64, steps: usize) -> Result<Vec<ParamVector>> {
    let mut x = suite.initial_point().clone();
    let mut out = Vec::with_capacity(steps);
    let mut scratch = IfoCounter::new();
    for _ in 0..steps {
        out.push(x.clone());
        let mut g = ParamVector::zeros(x.dim());
        let mut count = 0usize;
        for obj in suite.objectives() {
            let n = match obj.sample_count() {
                SampleCount::Finite(n) => n,
                SampleCount::Online => return Err(Error::Unsupported("oracle needs finite sums".into())),
            };
            let mut local = ParamVector::zeros(x.dim());
            for j in 0..n {
                local.add_scaled(1.0 / n as f64, &obj.stochastic_gradient(&x, &Sample::index(j), &mut scratch)?);
            }
            g.add_scaled(1.0, &local);
            count += 1;
        }
        x.add_scaled(-gamma / count as f64, &g);
    }
    Ok(out)
}

fn quadratic(workers: usize, samples: SampleCount, het: f64, seed: u64) -> Result<ProblemSuite> {
    make_suite(Family::Quadratic, workers, samples, 10, het, seed)
}

fn sigmoid(workers: usize, samples: SampleCount, het: f64, seed: u64) -> Result<ProblemSuite> {
    make_suite(Family::Sigmoid, workers, samples, 10, het, seed)
}

fn finite_checks(opts: &VerifyOptions, out: &mut Vec<Check>) -> Result<()> {
    const SUITE: &str = "finite";
    let run_opts = RunOptions {
        fault: opts.fault,
        ..RunOptions::default()
    };

    let mut e0 = 0.0f64;
    let mut spread = (0.0f64, 0.0f64, 0usize);
    let mut avg = 0.0f64;
    let mut rounds_err = 0u64;
    let mut ifo_err = 0u64;
    let mut bound_slack = f64::NEG_INFINITY;
    let mut stationary = 0.0f64;
    for &seed in &opts.seeds {
        let problems = [
            (quadratic(4, SampleCount::Finite(64), 1.0, seed)?, 0.05),
            (sigmoid(4, SampleCount::Finite(64), 1.0, seed)?, 0.01),
        ];
        for (suite, eps) in &problems {
            let hp = choose_params_finite(4, 64, 4, suite.smoothness(), suite.gap_bound(), *eps)?;

            let mut probe = RestartErrorProbe::default();
            let trace = run_pr_spider_finite_with(suite, &hp, seed, run_opts, &mut probe)?;
            e0 = e0.max(probe.max_error);
            rounds_err = rounds_err.max(trace.ledger.rounds.abs_diff(closed_form_rounds(
                hp.epochs,
                hp.epoch_len,
                hp.period,
            )));
            ifo_err = ifo_err.max(trace.ifo_final.abs_diff(closed_form_ifo(
                4,
                64,
                hp.epochs,
                hp.epoch_len,
                hp.batch,
            )));
            let min = trace.min_fos().unwrap_or(f64::INFINITY);
            bound_slack = bound_slack.max(min - stationarity_bound(suite, &hp, false));

            // short run with an uneven period to exercise both sync kinds
            let short = HyperParams {
                epochs: 3,
                period: 3,
                epoch_len: 16,
                batch: 2,
                gamma: HyperParams::step_bound(suite.smoothness(), 3),
                ..hp
            };
            let mut c = ConsensusProbe::default();
            run_pr_spider_finite_with(suite, &short, seed, run_opts, &mut c)?;
            spread.0 = spread.0.max(c.max_x_spread);
            spread.1 = spread.1.max(c.max_v_spread);
            spread.2 += c.mismatches;

            let mut a = AverageIterateProbe::new(short.gamma);
            run_pr_spider_finite_with(suite, &short, seed, run_opts, &mut a)?;
            avg = avg.max(a.max_error);

            let still = HyperParams { gamma: 0.0, ..short };
            let trace = run_pr_spider_finite_with(suite, &still, seed, run_opts, &mut NoObserver)?;
            let fos0 = sq_norm(&suite.value_and_gradient(suite.initial_point()).1);
            for r in &trace.records {
                stationary = stationary.max((r.fos - fos0).abs());
            }
        }
    }

    out.push(Check::at_most(SUITE, "restart_estimate_error", e0, 1e-10));
    out.push(Check::at_most(SUITE, "consensus_iterates_after_sync", spread.0, 0.0));
    out.push(Check::at_most(SUITE, "consensus_estimates_after_sync", spread.1, 0.0));
    out.push(Check::at_most(SUITE, "broadcast_copy_mismatches", spread.2 as f64, 0.0));
    out.push(Check::at_most(SUITE, "average_iterate_recursion", avg, 1e-12));
    out.push(Check::at_most(SUITE, "comm_rounds_closed_form_gap", rounds_err as f64, 0.0));
    out.push(Check::at_most(SUITE, "ifo_closed_form_gap", ifo_err as f64, 0.0));
    out.push(Check::at_most(SUITE, "min_fos_minus_bound", bound_slack, 0.0));
    out.push(Check::at_most(SUITE, "zero_step_fos_drift", stationary, 0.0));

    // exact GD degeneracy: B = n, I = 1 on quadratics
    let mut gd = 0.0f64;
    for &seed in &opts.seeds {
        let suite = quadratic(3, SampleCount::Finite(8), 1.0, seed)?;
        let hp = HyperParams {
            gamma: HyperParams::step_bound(1.0, 1),
            period: 1,
            epoch_len: 50,
            batch: 8,
            epochs: 4,
            restart_batch: 8,
            workers: 3,
            allow_large_step: false,
        };
        let mut rec = IterateRecorder::default();
        let run = RunOptions {
            metrics_every: 0,
            ..run_opts
        };
        run_pr_spider_finite_with(&suite, &hp, seed, run, &mut rec)?;
        let oracle = gradient_descent_oracle(&suite, hp.gamma, hp.horizon())?;
        if rec.iterates.len() != oracle.len() {
            gd = f64::INFINITY;
        }
        for (a, b) in rec.iterates.iter().zip(&oracle) {
            gd = gd.max(sq_dist(a, b).sqrt());
        }
    }
    out.push(Check::at_most(SUITE, "gradient_descent_degeneracy", gd, 1e-12));
    Ok(())
}

fn online_checks(opts: &VerifyOptions, out: &mut Vec<Check>) -> Result<()> {
    const SUITE: &str = "online";
    let run_opts = RunOptions {
        fault: opts.fault,
        ..RunOptions::default()
    };
    const RESTARTS: usize = 500;
    let allowance = 1.0 + 3.0 / (RESTARTS as f64).sqrt();

    for (label, family, het) in [("quadratic", Family::Quadratic, 0.0), ("sigmoid", Family::Sigmoid, 1.0)] {
        let seed = opts.seeds.first().copied().unwrap_or(0);
        let suite = make_suite(family, 4, SampleCount::Online, 10, het, seed)?;
        let sigma = suite.variance_bound();
        let hp = choose_params_online(4, sigma, 4, suite.smoothness(), suite.gap_bound(), 0.1)?;
        let measured = restart_variance(&suite, hp.restart_batch, RESTARTS, seed)?;
        let bound = sigma * sigma / (4.0 * hp.restart_batch as f64) * allowance;
        out.push(Check::at_most(SUITE, format!("restart_variance_{label}"), measured, bound));
    }

    let mut spread = (0.0f64, 0.0f64, 0usize);
    let mut rounds_err = 0u64;
    let mut ifo_err = 0u64;
    let mut bound_slack = f64::NEG_INFINITY;
    for &seed in &opts.seeds {
        let problems = [
            (quadratic(4, SampleCount::Online, 1.0, seed)?, 0.5),
            (sigmoid(4, SampleCount::Online, 1.0, seed)?, 0.05),
        ];
        for (suite, eps) in &problems {
            let hp = choose_params_online(4, suite.variance_bound(), 4, suite.smoothness(), suite.gap_bound(), *eps)?;
            let mut c = ConsensusProbe::default();
            let trace = run_pr_spider_online_with(suite, &hp, seed, run_opts, &mut c)?;
            spread.0 = spread.0.max(c.max_x_spread);
            spread.1 = spread.1.max(c.max_v_spread);
            spread.2 += c.mismatches;
            rounds_err = rounds_err.max(trace.ledger.rounds.abs_diff(closed_form_rounds(
                hp.epochs,
                hp.epoch_len,
                hp.period,
            )));
            ifo_err = ifo_err.max(trace.ifo_final.abs_diff(closed_form_ifo(
                4,
                hp.restart_batch,
                hp.epochs,
                hp.epoch_len,
                hp.batch,
            )));
            let min = trace.min_fos().unwrap_or(f64::INFINITY);
            bound_slack = bound_slack.max(min - stationarity_bound(suite, &hp, true));
        }
    }
    out.push(Check::at_most(SUITE, "consensus_iterates_after_sync", spread.0, 0.0));
    out.push(Check::at_most(SUITE, "consensus_estimates_after_sync", spread.1, 0.0));
    out.push(Check::at_most(SUITE, "broadcast_copy_mismatches", spread.2 as f64, 0.0));
    out.push(Check::at_most(SUITE, "comm_rounds_closed_form_gap", rounds_err as f64, 0.0));
    out.push(Check::at_most(SUITE, "ifo_closed_form_gap", ifo_err as f64, 0.0));
    out.push(Check::at_most(SUITE, "min_fos_minus_bound", bound_slack, 0.0));
    Ok(())
}

fn random_point(rng: &mut RngStream, dim: usize, radius: f64) -> ParamVector {
    ParamVector::new((0..dim).map(|_| rng.uniform(-radius, radius)).collect())
}

/// Worst `||grad f(x;xi) - grad f(y;xi)|| / (L ||x - y||)` over `trials` random triples.
pub fn smoothness_ratio(suite: &ProblemSuite, trials: usize, seed: u64) -> Result<f64> {
    let mut rng = RngStream::new(seed ^ VERIFY_STREAM, StreamId::new(0, 1, 0));
    let mut scratch = IfoCounter::new();
    let mut worst = 0.0f64;
    for k in 0..trials {
        let obj = suite.objective(k % suite.workers());
        let x = random_point(&mut rng, suite.dim(), 3.0);
        let y = random_point(&mut rng, suite.dim(), 3.0);
        let xi = obj.draw(&mut rng);
        let gx = obj.stochastic_gradient(&x, &xi, &mut scratch)?;
        let gy = obj.stochastic_gradient(&y, &xi, &mut scratch)?;
        let lhs = sq_dist(&gx, &gy).sqrt();
        let rhs = obj.smoothness() * sq_dist(&x, &y).sqrt();
        if rhs > 0.0 {
            worst = worst.max(lhs / rhs);
        }
    }
    Ok(worst)
}

/// Worst `(E ||grad f_i(x;xi) - grad f(x)||^2 - 3 se) / sigma^2` over `points`
/// random `x` per worker, with the expectation estimated from `draws` samples.
pub fn variance_ratio(suite: &ProblemSuite, points: usize, draws: usize, seed: u64) -> Result<f64> {
    let mut rng = RngStream::new(seed ^ VERIFY_STREAM, StreamId::new(0, 2, 0));
    let mut scratch = IfoCounter::new();
    let mut worst = 0.0f64;
    for obj in suite.objectives() {
        let sigma2 = obj.variance_bound().powi(2);
        for _ in 0..points {
            let x = random_point(&mut rng, suite.dim(), 3.0);
            let g = suite.true_global_gradient(&x);
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..draws {
                let xi = obj.draw(&mut rng);
                let e = sq_dist(&obj.stochastic_gradient(&x, &xi, &mut scratch)?, &g);
                sum += e;
                sum_sq += e * e;
            }
            let n = draws as f64;
            let mean = sum / n;
            let se = ((sum_sq / n - mean * mean).max(0.0) / n).sqrt();
            let ratio = if sigma2 > 0.0 {
                (mean - 3.0 * se) / sigma2
            } else if mean - 3.0 * se > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            worst = worst.max(ratio);
        }
    }
    Ok(worst)
}

/// Worst relative central-difference error `|fd - g| / max(1, |g|)` over
/// `trials` random `(x, k)` on the per-sample objectives, with `h = 1e-5`.
pub fn finite_difference_error(suite: &ProblemSuite, trials: usize, seed: u64) -> Result<f64> {
    const H: f64 = 1e-5;
    let mut rng = RngStream::new(seed ^ VERIFY_STREAM, StreamId::new(0, 3, 0));
    let mut scratch = IfoCounter::new();
    let mut worst = 0.0f64;
    for k in 0..trials {
        let obj = suite.objective(k % suite.workers());
        let x = random_point(&mut rng, suite.dim(), 2.0);
        let coord = rng.index(suite.dim());
        let xi = obj.draw(&mut rng);
        let (_, g) = obj.ifo(&x, &xi, &mut scratch)?;
        let mut plus = x.clone();
        plus.as_mut_slice()[coord] += H;
        let mut minus = x.clone();
        minus.as_mut_slice()[coord] -= H;
        let fd = (obj.ifo(&plus, &xi, &mut scratch)?.0 - obj.ifo(&minus, &xi, &mut scratch)?.0) / (2.0 * H);
        worst = worst.max((fd - g[coord]).abs() / g[coord].abs().max(1.0));
    }
    Ok(worst)
}

/// Worst gap between the enumerated sample-gradient mean and the full
/// gradient (finite sums only), over `points` random `x` per worker.
pub fn enumeration_bias(suite: &ProblemSuite, points: usize, seed: u64) -> Result<f64> {
    let mut rng = RngStream::new(seed ^ VERIFY_STREAM, StreamId::new(0, 4, 0));
    let mut scratch = IfoCounter::new();
    let mut worst = 0.0f64;
    for obj in suite.objectives() {
        let SampleCount::Finite(n) = obj.sample_count() else {
            return Err(Error::Unsupported("enumeration needs a finite sum".into()));
        };
        for _ in 0..points {
            let x = random_point(&mut rng, suite.dim(), 3.0);
            let mut mean = ParamVector::zeros(suite.dim());
            for j in 0..n {
                mean.add_scaled(1.0 / n as f64, &obj.stochastic_gradient(&x, &Sample::index(j), &mut scratch)?);
            }
            let full = obj.full_gradient(&x, &mut scratch)?;
            worst = worst.max(sq_dist(&mean, &full).sqrt());
        }
    }
    Ok(worst)
}

fn problem_checks(opts: &VerifyOptions, out: &mut Vec<Check>) -> Result<()> {
    const SUITE: &str = "problems";
    let seed = opts.seeds.first().copied().unwrap_or(0);
    for (family, fname) in [(Family::Quadratic, "quadratic"), (Family::Sigmoid, "sigmoid")] {
        for (samples, sname) in [(SampleCount::Finite(32), "finite"), (SampleCount::Online, "online")] {
            let suite = make_suite(family, 3, samples, 6, 1.0, seed)?;
            let tag = format!("{fname}_{sname}");
            out.push(Check::at_most(
                SUITE,
                format!("smoothness_ratio_{tag}"),
                smoothness_ratio(&suite, 10_000, seed)?,
                1.0 + 1e-12,
            ));
            out.push(Check::at_most(
                SUITE,
                format!("variance_ratio_{tag}"),
                variance_ratio(&suite, 100, 200, seed)?,
                1.0,
            ));
            out.push(Check::at_most(
                SUITE,
                format!("finite_difference_{tag}"),
                finite_difference_error(&suite, 100, seed)?,
                1e-6,
            ));
            if suite.is_finite_sum() {
                out.push(Check::at_most(
                    SUITE,
                    format!("enumeration_bias_{tag}"),
                    enumeration_bias(&suite, 20, seed)?,
                    1e-12,
                ));
            }
        }
    }
    Ok(())
}

/// Run the selected property suites.
pub fn run_verify(suite: VerifySuite, opts: &VerifyOptions) -> Result<Vec<Check>> {
    if opts.seeds.is_empty() {
        return Err(Error::invalid("verify needs at least one seed"));
    }
    let mut out = Vec::new();
    if matches!(suite, VerifySuite::Problems | VerifySuite::All) {
        problem_checks(opts, &mut out)?;
    }
    if matches!(suite, VerifySuite::Finite | VerifySuite::All) {
        finite_checks(opts, &mut out)?;
    }
    if matches!(suite, VerifySuite::Online | VerifySuite::All) {
        online_checks(opts, &mut out)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms_on_small_cases() {
        // S = 1: only the init round
        assert_eq!(closed_form_rounds(1, 8, 4), 2);
        assert_eq!(closed_form_rounds(1, 1, 1), 1);
        // S = 3, m = 8, I = 4: 1 + 3 * 1 + 4
        assert_eq!(closed_form_rounds(3, 8, 4), 8);
        // N = 2, n = 5, S = 2, m = 3, B = 1: 10 + 2*2*2*2 + 10
        assert_eq!(closed_form_ifo(2, 5, 2, 3, 1), 36);
    }

    #[test]
    fn check_relations() {
        assert!(Check::at_most("x", "a", 1.0, 1.0).passed);
        assert!(!Check::at_most("x", "a", f64::NAN, 1.0).passed);
        assert!(Check::above("x", "a", 2.0, 1.0).passed);
        assert!(!Check::above("x", "a", 1.0, 1.0).passed);
        let line = Check::at_most("finite", "k", 0.5, 1.0).to_json_line();
        assert!(line.contains("\"relation\":\"<=\""), "{line}");
    }

    #[test]
    fn suite_names_parse() {
        assert_eq!("online".parse::<VerifySuite>().unwrap(), VerifySuite::Online);
        assert!("bogus".parse::<VerifySuite>().is_err());
    }

    #[test]
    fn gd_oracle_first_step() {
        let s = ProblemSuite::quadratic_from_centers(
            vec![vec![ParamVector::new(vec![0.0])], vec![ParamVector::new(vec![2.0])]],
            ParamVector::new(vec![3.0]),
        )
        .unwrap();
        let xs = gradient_descent_oracle(&s, 0.5, 3).unwrap();
        // grad f(3) = 2, so x1 = 2; then x2 = 1.5
        assert_eq!(xs[1][0], 2.0);
        assert_eq!(xs[2][0], 1.5);
    }
}
