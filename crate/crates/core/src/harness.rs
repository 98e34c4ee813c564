//! Simulated worker-server fabric.
//!
//! The [`Coordinator`] owns the worker states, the communication ledger and the
//! trace. Worker phases may run on the rayon pool; syncs, metrics and trace
//! writes happen on the coordinator between phases.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::EstimatorState;
use crate::numerics::{mean_reduce, sq_dist, sq_norm, ParamVector, RngStream, StreamId};
use crate::problems::{IfoCounter, LocalObjective, ProblemSuite};

pub const CSV_HEADER: &str = "s,t,f_bar,grad_sq,consensus,fos,ifo_total,comm_rounds";

/// Epoch key reserved for the initial gradient round.
pub const INIT_EPOCH: u64 = u64::MAX;

/// One worker's local state.
#[derive(Clone, Debug)]
pub struct WorkerState {
    pub id: usize,
    pub x: ParamVector,
    pub est: EstimatorState,
    pub ifo: IfoCounter,
    pub epoch: usize,
}

impl WorkerState {
    pub fn new(id: usize, x0: ParamVector) -> Self {
        let dim = x0.dim();
        WorkerState {
            id,
            est: EstimatorState::restart(ParamVector::zeros(dim), x0.clone()),
            x: x0,
            ifo: IfoCounter::new(),
            epoch: 0,
        }
    }

    /// The random stream for this worker at `(epoch, iteration)`.
    pub fn stream(&self, seed: u64, epoch: u64, iteration: u64) -> RngStream {
        RngStream::new(seed, StreamId::new(self.id, epoch, iteration))
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.est.v.is_finite()
    }
}

/// Communication tally.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommLedger {
    /// Synchronized exchange events.
    pub rounds: u64,
    /// Number of `d`-vectors each worker shipped up, summed over rounds.
    pub bytes_equivalent: u64,
}

/// What travels in a sync round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Payload {
    Iterates,
    Estimates,
    Both,
    /// Freshly computed local gradients, carried in each worker's estimate slot.
    Gradients,
}

impl Payload {
    pub fn vectors(self) -> u64 {
        match self {
            Payload::Both => 2,
            _ => 1,
        }
    }

    fn moves_iterates(self) -> bool {
        matches!(self, Payload::Iterates | Payload::Both)
    }

    fn moves_estimates(self) -> bool {
        matches!(self, Payload::Estimates | Payload::Both | Payload::Gradients)
    }
}

/// Server reply of one sync round.
#[derive(Clone, Debug, PartialEq)]
pub struct Broadcast {
    pub x: Option<ParamVector>,
    pub v: Option<ParamVector>,
}

/// Average the requested payload across workers, overwrite every worker's
/// copy with the average, and charge one round.
pub fn sync_round(workers: &mut [WorkerState], payload: Payload, ledger: &mut CommLedger) -> Result<Broadcast> {
    let first = workers
        .first()
        .ok_or_else(|| Error::Internal("sync round with no workers".into()))?;
    let (epoch, t) = (first.epoch, first.est.t);
    if let Some(w) = workers.iter().find(|w| w.epoch != epoch || w.est.t != t) {
        return Err(Error::Internal(format!(
            "barrier violation: worker {} at (s={}, t={}), worker {} at (s={epoch}, t={t})",
            w.id, w.epoch, w.est.t, first.id
        )));
    }
    let x = if payload.moves_iterates() {
        let avg = mean_reduce(workers.iter().map(|w| &w.x))?;
        for w in workers.iter_mut() {
            w.x.clone_from(&avg);
        }
        Some(avg)
    } else {
        None
    };
    let v = if payload.moves_estimates() {
        let avg = mean_reduce(workers.iter().map(|w| &w.est.v))?;
        for w in workers.iter_mut() {
            w.est.v.clone_from(&avg);
        }
        Some(avg)
    } else {
        None
    };
    ledger.rounds += 1;
    ledger.bytes_equivalent += payload.vectors();
    Ok(Broadcast { x, v })
}

/// Stationarity measurements at the current worker iterates.
#[derive(Clone, Debug, PartialEq)]
pub struct FosEval {
    pub x_bar: ParamVector,
    pub f_bar: f64,
    pub grad_sq: f64,
    pub consensus: f64,
}

impl FosEval {
    pub fn fos(&self) -> f64 {
        self.grad_sq + self.consensus
    }
}

/// `||grad f(x_bar)||^2` and `(1/N) sum_i ||x_i - x_bar||^2` via the metrics
/// oracle; charges neither IFOs nor rounds.
pub fn evaluate_fos(suite: &ProblemSuite, workers: &[WorkerState]) -> Result<FosEval> {
    evaluate_fos_at(suite, workers.iter().map(|w| &w.x).collect::<Vec<_>>().as_slice())
}

pub fn evaluate_fos_at(suite: &ProblemSuite, points: &[&ParamVector]) -> Result<FosEval> {
    let x_bar = mean_reduce(points.iter().copied())?;
    let consensus = points.iter().map(|x| sq_dist(x, &x_bar)).sum::<f64>() / points.len() as f64;
    let (f_bar, grad) = suite.value_and_gradient(&x_bar);
    Ok(FosEval {
        f_bar,
        grad_sq: sq_norm(&grad),
        consensus,
        x_bar,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub s: usize,
    pub t: usize,
    pub f_bar: f64,
    pub grad_sq: f64,
    pub consensus: f64,
    pub fos: f64,
    pub ifo_total: u64,
    pub comm_rounds: u64,
    /// IFOs spent in paired estimator differences (already inside `ifo_total`).
    pub ifo_paired: u64,
    /// Vector units shipped so far.
    pub comm_vectors: u64,
}

impl MetricsRecord {
    /// IFO count with each paired estimator sample charged once instead of twice.
    pub fn ifo_single_charge(&self) -> u64 {
        self.ifo_total - self.ifo_paired / 2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Completed,
    Diverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsTrace {
    pub records: Vec<MetricsRecord>,
    pub config_echo: serde_json::Value,
    pub seed: u64,
    pub outcome: Outcome,
    pub ledger: CommLedger,
    pub ifo_final: u64,
}

impl MetricsTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            // `{}` on f64 prints the shortest string that round-trips.
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.s, r.t, r.f_bar, r.grad_sq, r.consensus, r.fos, r.ifo_total, r.comm_rounds
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    /// Config, seed and run totals; enough to rerun the experiment.
    pub fn sidecar(&self) -> serde_json::Value {
        serde_json::json!({
            "config": self.config_echo,
            "seed": self.seed,
            "outcome": self.outcome,
            "records": self.records.len(),
            "comm_rounds": self.ledger.rounds,
            "bytes_equivalent": self.ledger.bytes_equivalent,
            "ifo_total": self.ifo_final,
        })
    }

    pub fn write_sidecar(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.sidecar()).expect("json values serialize");
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    /// Smallest FoS value over the trace (NaN entries skipped).
    pub fn min_fos(&self) -> Option<f64> {
        self.records
            .iter()
            .map(|r| r.fos)
            .filter(|v| !v.is_nan())
            .min_by(|a, b| a.total_cmp(b))
    }
}

/// Where a trace first reached an `eps`-FoS point, with counters at that moment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstHit {
    pub index: usize,
    pub s: usize,
    pub t: usize,
    pub ifo_total: u64,
    pub comm_rounds: u64,
    pub ifo_single_charge: u64,
    pub comm_vectors: u64,
}

pub fn first_hit(trace: &MetricsTrace, eps: f64) -> Option<FirstHit> {
    first_hit_in(&trace.records, eps)
}

pub fn first_hit_in(records: &[MetricsRecord], eps: f64) -> Option<FirstHit> {
    records.iter().enumerate().find(|(_, r)| r.fos <= eps).map(|(index, r)| FirstHit {
        index,
        s: r.s,
        t: r.t,
        ifo_total: r.ifo_total,
        comm_rounds: r.comm_rounds,
        ifo_single_charge: r.ifo_single_charge(),
        comm_vectors: r.comm_vectors,
    })
}

/// Test hooks that break the algorithm on purpose.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Skip the epoch-end iterate average and gradient recomputation.
    SkipRestart,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Run worker phases on the rayon pool.
    pub parallel: bool,
    /// Evaluate metrics at every `k`-th record; 0 disables metrics entirely.
    pub metrics_every: usize,
    pub fault: Option<Fault>,
    /// End the run at the first record whose FoS value is at most this.
    pub stop_below: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            parallel: false,
            metrics_every: 1,
            fault: None,
            stop_below: None,
        }
    }
}

/// Read-only view handed to observers.
pub struct RoundView<'a> {
    pub suite: &'a ProblemSuite,
    pub workers: &'a [WorkerState],
    pub ledger: &'a CommLedger,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyncKind {
    Init,
    InEpoch,
    EpochIterates,
    EpochGradients,
    Periodic,
}

/// Hooks into a run. All methods default to no-ops.
pub trait Observer {
    fn on_epoch_start(&mut self, _epoch: usize, _view: &RoundView<'_>) {}
    fn on_sync(&mut self, _kind: SyncKind, _broadcast: &Broadcast, _view: &RoundView<'_>) {}
    fn on_record(&mut self, _record: &MetricsRecord, _view: &RoundView<'_>) {}
    /// After the local step that follows record `(s, t)`.
    fn on_step(&mut self, _s: usize, _t: usize, _view: &RoundView<'_>) {}
}

pub struct NoObserver;
impl Observer for NoObserver {}

pub struct Coordinator<'a> {
    suite: &'a ProblemSuite,
    workers: Vec<WorkerState>,
    ledger: CommLedger,
    records: Vec<MetricsRecord>,
    opts: RunOptions,
    seed: u64,
    stopped: bool,
    observer: &'a mut dyn Observer,
}

impl<'a> Coordinator<'a> {
    pub fn new(suite: &'a ProblemSuite, seed: u64, opts: RunOptions, observer: &'a mut dyn Observer) -> Self {
        let workers = (0..suite.workers())
            .map(|i| WorkerState::new(i, suite.initial_point().clone()))
            .collect();
        Coordinator {
            suite,
            workers,
            ledger: CommLedger::default(),
            records: Vec::new(),
            opts,
            seed,
            stopped: false,
            observer,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn options(&self) -> &RunOptions {
        &self.opts
    }

    pub fn workers(&self) -> &[WorkerState] {
        &self.workers
    }

    pub fn ledger(&self) -> &CommLedger {
        &self.ledger
    }

    pub fn ifo_total(&self) -> u64 {
        self.workers.iter().map(|w| w.ifo.total).sum()
    }

    fn ifo_paired(&self) -> u64 {
        self.workers.iter().map(|w| w.ifo.paired).sum()
    }

    fn split(&mut self) -> (&mut dyn Observer, RoundView<'_>) {
        (
            &mut *self.observer,
            RoundView {
                suite: self.suite,
                workers: &self.workers,
                ledger: &self.ledger,
            },
        )
    }

    /// Run `f` on every worker with its objective. Each worker only touches its
    /// own state and streams, so serial and parallel execution agree bitwise.
    pub fn each_worker<F>(&mut self, f: F) -> Result<()>
    where
        F: Fn(&mut WorkerState, &LocalObjective) -> Result<()> + Sync + Send,
    {
        let objectives = self.suite.objectives();
        if self.opts.parallel {
            self.workers
                .par_iter_mut()
                .zip(objectives.par_iter())
                .try_for_each(|(w, o)| f(w, o))
        } else {
            self.workers.iter_mut().zip(objectives).try_for_each(|(w, o)| f(w, o))
        }
    }

    pub fn sync(&mut self, payload: Payload, kind: SyncKind) -> Result<Broadcast> {
        let b = sync_round(&mut self.workers, payload, &mut self.ledger)?;
        let (obs, view) = self.split();
        obs.on_sync(kind, &b, &view);
        Ok(b)
    }

    pub fn epoch_start(&mut self, epoch: usize) {
        let (obs, view) = self.split();
        obs.on_epoch_start(epoch, &view);
    }

    pub fn stepped(&mut self, s: usize, t: usize) {
        let (obs, view) = self.split();
        obs.on_step(s, t, &view);
    }

    /// Append the record for `(s, t)`.
    pub fn record(&mut self, s: usize, t: usize) -> Result<()> {
        let index = self.records.len();
        let every = self.opts.metrics_every;
        let (f_bar, grad_sq, consensus) = if every > 0 && index % every == 0 {
            let e = evaluate_fos(self.suite, &self.workers)?;
            (e.f_bar, e.grad_sq, e.consensus)
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        let rec = MetricsRecord {
            s,
            t,
            f_bar,
            grad_sq,
            consensus,
            fos: grad_sq + consensus,
            ifo_total: self.ifo_total(),
            comm_rounds: self.ledger.rounds,
            ifo_paired: self.ifo_paired(),
            comm_vectors: self.ledger.bytes_equivalent,
        };
        if self.opts.stop_below.is_some_and(|eps| rec.fos <= eps) {
            self.stopped = true;
        }
        let (obs, view) = self.split();
        obs.on_record(&rec, &view);
        self.records.push(rec);
        Ok(())
    }

    /// True once a record has met `stop_below`.
    pub fn stopped(&self) -> bool {
        self.stopped
    }

    /// Abort with the partial trace if any worker holds a non-finite value.
    pub fn check_finite(&self, config_echo: &serde_json::Value) -> Result<()> {
        if self.workers.iter().all(WorkerState::is_finite) {
            return Ok(());
        }
        let mut trace = self.snapshot(config_echo.clone());
        trace.outcome = Outcome::Diverged;
        Err(Error::Diverged(Box::new(trace)))
    }

    fn snapshot(&self, config_echo: serde_json::Value) -> MetricsTrace {
        MetricsTrace {
            records: self.records.clone(),
            config_echo,
            seed: self.seed,
            outcome: Outcome::Completed,
            ledger: self.ledger,
            ifo_final: self.ifo_total(),
        }
    }

    pub fn finish(self, config_echo: serde_json::Value) -> MetricsTrace {
        MetricsTrace {
            ifo_final: self.ifo_total(),
            records: self.records,
            config_echo,
            seed: self.seed,
            outcome: Outcome::Completed,
            ledger: self.ledger,
        }
    }
}
