//! Synthetic objective families with closed-form gradients and certified
//! smoothness / variance constants.
//!
//! * `quadratic`: `f_i(x; xi) = 0.5 * ||x - c_xi||^2`. `L = 1`, the global
//!   minimiser is the grand mean of all centers.
//! * `sigmoid`: `f_i(x; xi) = phi(<a_xi, x> - b_xi)` with `phi(t) = t^2 / (1 + t^2)`.
//!   Nonconvex, nonnegative, `L = 2 * max ||a||^2` since `sup |phi''| = 2`.
//!
//! Each family comes in a finite-sum flavour (n enumerable samples per worker)
//! and an online flavour (sampler only, closed-form expectation kept for the
//! metrics oracle).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{mean_reduce, sq_dist, sq_norm, ParamVector, RngStream, RunningMean, StreamId};

/// Number of hidden atoms behind an online sigmoid worker distribution.
pub const SIGMOID_POPULATION: usize = 1024;

/// `sup_t |phi'(t)|`, attained at `t = 1/sqrt(3)`: `9 / (8 sqrt 3)`.
pub const SIGMOID_MAX_SLOPE: f64 = 0.649_519_052_838_329;

/// `sup_t |phi''(t)|`, attained at `t = 0`.
pub const SIGMOID_MAX_CURVATURE: f64 = 2.0;

const QUADRATIC_NOISE_HALF_WIDTH: f64 = 1.0;
const SIGMOID_LABEL_NOISE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Quadratic,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleCount {
    Finite(usize),
    Online,
}

/// Per-evaluation tally owned by one worker.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IfoCounter {
    /// Every oracle access.
    pub total: u64,
    /// The subset spent inside paired-difference estimator steps.
    pub paired: u64,
}

impl IfoCounter {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Handle for one sample `xi`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample(SampleRepr);

#[derive(Clone, Debug, PartialEq)]
enum SampleRepr {
    Index(usize),
    Center(ParamVector),
}

impl Sample {
    /// The `j`-th sample of a finite-sum objective.
    pub fn index(j: usize) -> Self {
        Sample(SampleRepr::Index(j))
    }
}

#[derive(Clone, Debug)]
struct SigmoidData {
    a: Vec<ParamVector>,
    b: Vec<f64>,
}

impl SigmoidData {
    fn residual(&self, j: usize, x: &ParamVector) -> f64 {
        self.a[j].dot(x) - self.b[j]
    }

    fn value(&self, j: usize, x: &ParamVector) -> f64 {
        phi(self.residual(j, x))
    }

    fn gradient(&self, j: usize, x: &ParamVector) -> ParamVector {
        self.a[j].scale(phi_prime(self.residual(j, x)))
    }

    fn max_sq_norm(&self) -> f64 {
        self.a.iter().map(sq_norm).fold(0.0, f64::max)
    }

    fn mean_gradient(&self, x: &ParamVector) -> ParamVector {
        let mut acc = ParamVector::zeros(x.dim());
        for (a, b) in self.a.iter().zip(&self.b) {
            acc.add_scaled(phi_prime(a.dot(x) - b), a);
        }
        acc.scale(1.0 / self.a.len() as f64)
    }

    fn mean_value_and_gradient(&self, x: &ParamVector) -> (f64, ParamVector) {
        let mut value = 0.0;
        let mut acc = ParamVector::zeros(x.dim());
        for (a, b) in self.a.iter().zip(&self.b) {
            let r = a.dot(x) - b;
            value += phi(r);
            acc.add_scaled(phi_prime(r), a);
        }
        let n = self.a.len() as f64;
        (value / n, acc.scale(1.0 / n))
    }

    fn mean_value(&self, x: &ParamVector) -> f64 {
        let n = self.a.len() as f64;
        (0..self.a.len()).map(|j| self.value(j, x)).sum::<f64>() / n
    }
}

#[derive(Clone, Debug)]
enum LocalKind {
    QuadraticFinite { centers: Vec<ParamVector>, mean: ParamVector },
    QuadraticOnline { mean: ParamVector, half_width: f64 },
    SigmoidFinite(SigmoidData),
    SigmoidOnline(SigmoidData),
}

/// One worker's `f_i` with its oracle.
#[derive(Clone, Debug)]
pub struct LocalObjective {
    worker_id: usize,
    dim: usize,
    smoothness: f64,
    variance_bound: f64,
    kind: LocalKind,
}

impl LocalObjective {
    pub fn worker_id(&self) -> usize {
        self.worker_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    /// `sigma` such that `E ||grad f_i(x; xi) - grad f(x)||^2 <= sigma^2`.
    pub fn variance_bound(&self) -> f64 {
        self.variance_bound
    }

    pub fn family(&self) -> Family {
        match self.kind {
            LocalKind::QuadraticFinite { .. } | LocalKind::QuadraticOnline { .. } => Family::Quadratic,
            LocalKind::SigmoidFinite(_) | LocalKind::SigmoidOnline(_) => Family::Sigmoid,
        }
    }

    pub fn sample_count(&self) -> SampleCount {
        match &self.kind {
            LocalKind::QuadraticFinite { centers, .. } => SampleCount::Finite(centers.len()),
            LocalKind::SigmoidFinite(d) => SampleCount::Finite(d.a.len()),
            LocalKind::QuadraticOnline { .. } | LocalKind::SigmoidOnline(_) => SampleCount::Online,
        }
    }

    pub fn is_finite_sum(&self) -> bool {
        matches!(self.sample_count(), SampleCount::Finite(_))
    }

    /// One i.i.d. draw from `D_i` (uniform over the samples for finite sums).
    pub fn draw(&self, rng: &mut RngStream) -> Sample {
        match &self.kind {
            LocalKind::QuadraticFinite { centers, .. } => Sample::index(rng.index(centers.len())),
            LocalKind::SigmoidFinite(d) | LocalKind::SigmoidOnline(d) => {
                Sample(SampleRepr::Index(rng.index(d.a.len())))
            }
            LocalKind::QuadraticOnline { mean, half_width } => {
                let c = mean
                    .as_slice()
                    .iter()
                    .map(|m| m + rng.uniform(-half_width, *half_width))
                    .collect::<Vec<_>>();
                Sample(SampleRepr::Center(ParamVector::new(c)))
            }
        }
    }

    /// The oracle: returns `(f_i(x; xi), grad f_i(x; xi))` and charges one IFO.
    pub fn ifo(&self, x: &ParamVector, sample: &Sample, counter: &mut IfoCounter) -> Result<(f64, ParamVector)> {
        if x.dim() != self.dim {
            return Err(Error::invalid(format!("point has dim {}, objective has {}", x.dim(), self.dim)));
        }
        let out = match (&self.kind, &sample.0) {
            (LocalKind::QuadraticFinite { centers, .. }, SampleRepr::Index(j)) => {
                let c = centers
                    .get(*j)
                    .ok_or_else(|| Error::invalid(format!("sample {j} out of range 0..{}", centers.len())))?;
                (0.5 * sq_dist(x, c), x.sub(c))
            }
            (LocalKind::QuadraticOnline { .. }, SampleRepr::Center(c)) => (0.5 * sq_dist(x, c), x.sub(c)),
            (LocalKind::SigmoidFinite(d) | LocalKind::SigmoidOnline(d), SampleRepr::Index(j)) => {
                if *j >= d.a.len() {
                    return Err(Error::invalid(format!("sample {j} out of range 0..{}", d.a.len())));
                }
                (d.value(*j, x), d.gradient(*j, x))
            }
            _ => return Err(Error::invalid("sample handle does not belong to this objective")),
        };
        counter.total += 1;
        Ok(out)
    }

    pub fn stochastic_gradient(&self, x: &ParamVector, sample: &Sample, counter: &mut IfoCounter) -> Result<ParamVector> {
        self.ifo(x, sample, counter).map(|(_, g)| g)
    }

    /// `(1/n) sum_j grad f_i(x; xi_j)`; charges `n` IFOs. Finite sums only.
    pub fn full_gradient(&self, x: &ParamVector, counter: &mut IfoCounter) -> Result<ParamVector> {
        let n = match self.sample_count() {
            SampleCount::Finite(n) => n,
            SampleCount::Online => {
                return Err(Error::Unsupported("full gradient of an online objective".into()));
            }
        };
        let mut acc = RunningMean::new();
        for j in 0..n {
            acc.push(&self.stochastic_gradient(x, &Sample::index(j), counter)?);
        }
        Ok(acc.finish().expect("n >= 1"))
    }

    /// Average of `batch` i.i.d. stochastic gradients at `x`; charges `batch` IFOs.
    pub fn batch_gradient(
        &self,
        x: &ParamVector,
        batch: usize,
        rng: &mut RngStream,
        counter: &mut IfoCounter,
    ) -> Result<ParamVector> {
        if batch == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        let mut acc = RunningMean::new();
        for _ in 0..batch {
            let s = self.draw(rng);
            acc.push(&self.stochastic_gradient(x, &s, counter)?);
        }
        Ok(acc.finish().expect("batch >= 1"))
    }

    /// Exact `grad f_i(x)` for the metrics oracle. Not charged.
    pub fn exact_gradient(&self, x: &ParamVector) -> ParamVector {
        match &self.kind {
            LocalKind::QuadraticFinite { mean, .. } | LocalKind::QuadraticOnline { mean, .. } => x.sub(mean),
            LocalKind::SigmoidFinite(d) | LocalKind::SigmoidOnline(d) => d.mean_gradient(x),
        }
    }

    /// `(f_i(x), grad f_i(x))` in one pass. Not charged.
    pub fn exact_value_and_gradient(&self, x: &ParamVector) -> (f64, ParamVector) {
        match &self.kind {
            LocalKind::SigmoidFinite(d) | LocalKind::SigmoidOnline(d) => d.mean_value_and_gradient(x),
            _ => (self.exact_value(x), self.exact_gradient(x)),
        }
    }

    /// Exact `f_i(x)`. Not charged.
    pub fn exact_value(&self, x: &ParamVector) -> f64 {
        match &self.kind {
            LocalKind::QuadraticFinite { centers, .. } => {
                centers.iter().map(|c| 0.5 * sq_dist(x, c)).sum::<f64>() / centers.len() as f64
            }
            LocalKind::QuadraticOnline { mean, half_width } => {
                // E 0.5||x - m - u||^2 with u ~ U[-w, w]^d
                0.5 * sq_dist(x, mean) + 0.5 * self.dim as f64 * half_width * half_width / 3.0
            }
            LocalKind::SigmoidFinite(d) | LocalKind::SigmoidOnline(d) => d.mean_value(x),
        }
    }
}

/// `phi(t) = t^2 / (1 + t^2)`.
pub fn phi(t: f64) -> f64 {
    let t2 = t * t;
    t2 / (1.0 + t2)
}

/// `phi'(t) = 2t / (1 + t^2)^2`.
pub fn phi_prime(t: f64) -> f64 {
    let s = 1.0 + t * t;
    2.0 * t / (s * s)
}

/// The N local objectives plus shared start point and optimum information.
#[derive(Clone, Debug)]
pub struct ProblemSuite {
    objectives: Vec<LocalObjective>,
    optimum_value: f64,
    optimum_exact: bool,
    initial_point: ParamVector,
    grand_mean: Option<ParamVector>,
}

impl ProblemSuite {
    /// Finite-sum quadratic suite from explicit centers (`centers[i][j]` is
    /// sample `j` of worker `i`).
    pub fn quadratic_from_centers(centers: Vec<Vec<ParamVector>>, initial_point: ParamVector) -> Result<Self> {
        let dim = initial_point.dim();
        check_layout(&centers, dim)?;
        let n = centers[0].len();
        if centers.iter().any(|c| c.len() != n) {
            return Err(Error::invalid("all workers must hold the same number of samples"));
        }
        let worker_means = centers
            .iter()
            .map(|c| mean_reduce(c))
            .collect::<Result<Vec<_>>>()?;
        let grand = mean_reduce(&worker_means)?;
        let spread = centers
            .iter()
            .flatten()
            .map(|c| sq_dist(c, &grand))
            .sum::<f64>()
            / (centers.len() * n) as f64;
        let objectives = centers
            .into_iter()
            .zip(worker_means)
            .enumerate()
            .map(|(i, (cs, mean))| {
                let var = cs.iter().map(|c| sq_dist(c, &grand)).sum::<f64>() / n as f64;
                LocalObjective {
                    worker_id: i,
                    dim,
                    smoothness: 1.0,
                    variance_bound: var.sqrt(),
                    kind: LocalKind::QuadraticFinite { centers: cs, mean },
                }
            })
            .collect();
        Ok(ProblemSuite {
            objectives,
            optimum_value: 0.5 * spread,
            optimum_exact: true,
            initial_point,
            grand_mean: Some(grand),
        })
    }

    /// Online quadratic suite: worker `i` draws centers `means[i] + U[-w, w]^d`.
    pub fn quadratic_online(means: Vec<ParamVector>, half_width: f64, initial_point: ParamVector) -> Result<Self> {
        let dim = initial_point.dim();
        if means.is_empty() {
            return Err(Error::invalid("suite needs at least one worker"));
        }
        if means.iter().any(|m| m.dim() != dim) {
            return Err(Error::invalid("worker mean dimension mismatch"));
        }
        if !(half_width >= 0.0 && half_width.is_finite()) {
            return Err(Error::invalid("half width must be finite and >= 0"));
        }
        let grand = mean_reduce(&means)?;
        let noise_var = dim as f64 * half_width * half_width / 3.0;
        let shift = means.iter().map(|m| sq_dist(m, &grand)).sum::<f64>() / means.len() as f64;
        let objectives = means
            .into_iter()
            .enumerate()
            .map(|(i, mean)| LocalObjective {
                worker_id: i,
                dim,
                smoothness: 1.0,
                variance_bound: (noise_var + sq_dist(&mean, &grand)).sqrt(),
                kind: LocalKind::QuadraticOnline { mean, half_width },
            })
            .collect();
        Ok(ProblemSuite {
            objectives,
            optimum_value: 0.5 * (shift + noise_var),
            optimum_exact: true,
            initial_point,
            grand_mean: Some(grand),
        })
    }

    /// Sigmoid-loss suite from explicit `(a, b)` samples per worker. With
    /// `online = true` the samples become a hidden population reachable only
    /// through the sampler.
    pub fn sigmoid_from_samples(
        samples: Vec<Vec<(ParamVector, f64)>>,
        online: bool,
        initial_point: ParamVector,
    ) -> Result<Self> {
        let dim = initial_point.dim();
        let as_vectors: Vec<Vec<ParamVector>> = samples
            .iter()
            .map(|w| w.iter().map(|(a, _)| a.clone()).collect())
            .collect();
        check_layout(&as_vectors, dim)?;
        let objectives: Vec<LocalObjective> = samples
            .into_iter()
            .enumerate()
            .map(|(i, w)| {
                let (a, b): (Vec<_>, Vec<_>) = w.into_iter().unzip();
                let data = SigmoidData { a, b };
                let max_a2 = data.max_sq_norm();
                LocalObjective {
                    worker_id: i,
                    dim,
                    smoothness: SIGMOID_MAX_CURVATURE * max_a2,
                    // ||g_xi|| <= G and ||grad f|| <= G_global; filled in below.
                    variance_bound: SIGMOID_MAX_SLOPE * max_a2.sqrt(),
                    kind: if online {
                        LocalKind::SigmoidOnline(data)
                    } else {
                        LocalKind::SigmoidFinite(data)
                    },
                }
            })
            .collect();
        let global_slope = objectives.iter().map(|o| o.variance_bound).fold(0.0, f64::max);
        let objectives = objectives
            .into_iter()
            .map(|mut o| {
                o.variance_bound += global_slope;
                o
            })
            .collect();
        Ok(ProblemSuite {
            objectives,
            optimum_value: 0.0,
            optimum_exact: false,
            initial_point,
            grand_mean: None,
        })
    }

    pub fn objectives(&self) -> &[LocalObjective] {
        &self.objectives
    }

    pub fn objective(&self, i: usize) -> &LocalObjective {
        &self.objectives[i]
    }

    pub fn workers(&self) -> usize {
        self.objectives.len()
    }

    pub fn dim(&self) -> usize {
        self.initial_point.dim()
    }

    pub fn family(&self) -> Family {
        self.objectives[0].family()
    }

    pub fn sample_count(&self) -> SampleCount {
        self.objectives[0].sample_count()
    }

    pub fn is_finite_sum(&self) -> bool {
        self.objectives[0].is_finite_sum()
    }

    pub fn initial_point(&self) -> &ParamVector {
        &self.initial_point
    }

    /// `f*` for quadratics, a certified lower bound (0) for sigmoid suites.
    pub fn optimum_value(&self) -> f64 {
        self.optimum_value
    }

    pub fn optimum_is_exact(&self) -> bool {
        self.optimum_exact
    }

    /// Largest per-worker smoothness constant.
    pub fn smoothness(&self) -> f64 {
        self.objectives.iter().map(|o| o.smoothness).fold(0.0, f64::max)
    }

    pub fn variance_bound(&self) -> f64 {
        self.objectives.iter().map(|o| o.variance_bound).fold(0.0, f64::max)
    }

    /// Minimiser of the quadratic families.
    pub fn grand_mean(&self) -> Option<&ParamVector> {
        self.grand_mean.as_ref()
    }

    /// Upper bound on `f(x0) - f*`.
    pub fn gap_bound(&self) -> f64 {
        (self.value(&self.initial_point) - self.optimum_value).max(0.0)
    }

    /// `f(x) = (1/N) sum_i f_i(x)`, exact.
    pub fn value(&self, x: &ParamVector) -> f64 {
        self.objectives.iter().map(|o| o.exact_value(x)).sum::<f64>() / self.workers() as f64
    }

    /// `(f(x), grad f(x))`, sharing one pass over the samples where possible.
    pub fn value_and_gradient(&self, x: &ParamVector) -> (f64, ParamVector) {
        if self.grand_mean.is_some() {
            return (self.value(x), self.true_global_gradient(x));
        }
        let mut value = 0.0;
        let mut grads = Vec::with_capacity(self.workers());
        for o in &self.objectives {
            let (v, g) = o.exact_value_and_gradient(x);
            value += v;
            grads.push(g);
        }
        let grad = mean_reduce(&grads).expect("suite has workers");
        (value / self.workers() as f64, grad)
    }

    /// `grad f(x)` through the closed form; never touches IFO counters.
    pub fn true_global_gradient(&self, x: &ParamVector) -> ParamVector {
        match &self.grand_mean {
            Some(c) => x.sub(c),
            None => mean_reduce(&self.objectives.iter().map(|o| o.exact_gradient(x)).collect::<Vec<_>>())
                .expect("suite has workers"),
        }
    }
}

fn check_layout(per_worker: &[Vec<ParamVector>], dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    if per_worker.is_empty() {
        return Err(Error::invalid("suite needs at least one worker"));
    }
    for w in per_worker {
        if w.is_empty() {
            return Err(Error::invalid("each worker needs at least one sample"));
        }
        if w.iter().any(|v| v.dim() != dim) {
            return Err(Error::invalid("sample dimension mismatch"));
        }
    }
    Ok(())
}

// Stream ids used while generating suites; disjoint from the algorithm's
// (epoch, iteration) keys because construction uses a separate seed domain.
const GEN_DOMAIN: u64 = 0x5eed_0f_5717e5;

fn gen_stream(seed: u64, worker: usize, purpose: u64) -> RngStream {
    RngStream::new(seed ^ GEN_DOMAIN, StreamId::new(worker, purpose, 0))
}

fn uniform_vec(rng: &mut RngStream, dim: usize, half_width: f64) -> ParamVector {
    ParamVector::new((0..dim).map(|_| rng.uniform(-half_width, half_width)).collect())
}

fn initial_point(seed: u64, dim: usize) -> ParamVector {
    let mut rng = gen_stream(seed, usize::MAX, 0);
    ParamVector::new((0..dim).map(|_| 2.0 + rng.uniform(-0.5, 0.5)).collect())
}

fn worker_shifts(seed: u64, workers: usize, dim: usize, heterogeneity: f64) -> Vec<ParamVector> {
    (0..workers)
        .map(|i| uniform_vec(&mut gen_stream(seed, i, 1), dim, 1.0).scale(heterogeneity))
        .collect()
}

fn check_shape(workers: usize, n: Option<usize>, dim: usize, heterogeneity: f64) -> Result<()> {
    if workers == 0 || dim == 0 || n == Some(0) {
        return Err(Error::invalid("N, n and d must all be >= 1"));
    }
    if !(heterogeneity >= 0.0 && heterogeneity.is_finite()) {
        return Err(Error::invalid("heterogeneity must be finite and >= 0"));
    }
    Ok(())
}

/// Quadratic suite: worker `i` has centers `mu_i + U[-1, 1]^d` with
/// `mu_i = heterogeneity * U[-1, 1]^d`.
pub fn make_quadratic_suite(
    workers: usize,
    samples: SampleCount,
    dim: usize,
    heterogeneity: f64,
    seed: u64,
) -> Result<ProblemSuite> {
    let n = match samples {
        SampleCount::Finite(n) => Some(n),
        SampleCount::Online => None,
    };
    check_shape(workers, n, dim, heterogeneity)?;
    let shifts = worker_shifts(seed, workers, dim, heterogeneity);
    let x0 = initial_point(seed, dim);
    match n {
        Some(n) => {
            let centers = shifts
                .iter()
                .enumerate()
                .map(|(i, mu)| {
                    let mut rng = gen_stream(seed, i, 2);
                    (0..n)
                        .map(|_| {
                            let mut c = uniform_vec(&mut rng, dim, QUADRATIC_NOISE_HALF_WIDTH);
                            c.add_scaled(1.0, mu);
                            c
                        })
                        .collect()
                })
                .collect();
            ProblemSuite::quadratic_from_centers(centers, x0)
        }
        None => ProblemSuite::quadratic_online(shifts, QUADRATIC_NOISE_HALF_WIDTH, x0),
    }
}

/// Sigmoid-loss regression suite: `a ~ U[-1, 1]^d / sqrt(d)` (so `||a|| <= 1`),
/// `b = <a, w_i> + U[-0.1, 0.1]` with worker targets `w_i = w + heterogeneity * U[-1, 1]^d`.
/// Online suites sample from a hidden population of [`SIGMOID_POPULATION`] atoms.
pub fn make_nonconvex_suite(
    workers: usize,
    samples: SampleCount,
    dim: usize,
    heterogeneity: f64,
    seed: u64,
) -> Result<ProblemSuite> {
    let (n, online) = match samples {
        SampleCount::Finite(n) => (n, false),
        SampleCount::Online => (SIGMOID_POPULATION, true),
    };
    check_shape(workers, Some(n), dim, heterogeneity)?;
    let base = uniform_vec(&mut gen_stream(seed, usize::MAX, 3), dim, 1.0);
    let shifts = worker_shifts(seed, workers, dim, heterogeneity);
    let scale = 1.0 / (dim as f64).sqrt();
    let data = shifts
        .iter()
        .enumerate()
        .map(|(i, mu)| {
            let mut target = base.clone();
            target.add_scaled(1.0, mu);
            let mut rng = gen_stream(seed, i, 4);
            (0..n)
                .map(|_| {
                    let a = uniform_vec(&mut rng, dim, 1.0).scale(scale);
                    let b = a.dot(&target) + rng.uniform(-SIGMOID_LABEL_NOISE, SIGMOID_LABEL_NOISE);
                    (a, b)
                })
                .collect()
        })
        .collect();
    ProblemSuite::sigmoid_from_samples(data, online, initial_point(seed, dim))
}

/// Dispatch on family.
pub fn make_suite(
    family: Family,
    workers: usize,
    samples: SampleCount,
    dim: usize,
    heterogeneity: f64,
    seed: u64,
) -> Result<ProblemSuite> {
    match family {
        Family::Quadratic => make_quadratic_suite(workers, samples, dim, heterogeneity, seed),
        Family::Sigmoid => make_nonconvex_suite(workers, samples, dim, heterogeneity, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec())
    }

    #[test]
    fn single_center_quadratic() {
        let s = ProblemSuite::quadratic_from_centers(vec![vec![pv(&[3.0])]], pv(&[0.0])).unwrap();
        assert_eq!(s.optimum_value(), 0.0);
        assert_eq!(s.value(&pv(&[3.0])), 0.0);
        assert_eq!(s.true_global_gradient(&pv(&[3.0])), pv(&[0.0]));
        let mut c = IfoCounter::new();
        let g = s.objective(0).stochastic_gradient(&pv(&[5.0]), &Sample::index(0), &mut c).unwrap();
        assert_eq!(g, pv(&[2.0]));
        assert_eq!(c.total, 1);
    }

    #[test]
    fn two_worker_quadratic_minimum() {
        let s = ProblemSuite::quadratic_from_centers(vec![vec![pv(&[0.0])], vec![pv(&[2.0])]], pv(&[0.0]))
            .unwrap();
        // brute force over a grid: f(x) = 0.5 * [0.5 x^2 + 0.5 (x - 2)^2]
        let f = |x: f64| 0.5 * (0.5 * x * x + 0.5 * (x - 2.0) * (x - 2.0));
        let (best_x, best_f) = (0..=4000)
            .map(|k| -1.0 + k as f64 * 1e-3)
            .map(|x| (x, f(x)))
            .fold((0.0, f64::INFINITY), |acc, p| if p.1 < acc.1 { p } else { acc });
        assert!((best_x - 1.0).abs() < 1e-9);
        assert!((best_f - 0.5).abs() < 1e-12);
        assert!((s.optimum_value() - 0.5).abs() < 1e-15);
        assert!((s.value(&pv(&[1.0])) - 0.5).abs() < 1e-15);
        assert_eq!(s.true_global_gradient(&pv(&[1.0])), pv(&[0.0]));
    }

    #[test]
    fn full_gradient_of_two_centers() {
        let s = ProblemSuite::quadratic_from_centers(vec![vec![pv(&[0.0]), pv(&[2.0])]], pv(&[0.0])).unwrap();
        let mut c = IfoCounter::new();
        let g = s.objective(0).full_gradient(&pv(&[1.0]), &mut c).unwrap();
        assert_eq!(g, pv(&[0.0]));
        assert_eq!(c.total, 2);
    }

    #[test]
    fn generated_quadratic_is_stationary_at_grand_mean() {
        let s = make_quadratic_suite(3, SampleCount::Finite(7), 4, 1.5, 9).unwrap();
        let c = s.grand_mean().unwrap().clone();
        assert!(sq_norm(&s.true_global_gradient(&c)).sqrt() < 1e-12);
        // and the mean of exact local gradients agrees
        let mut counter = IfoCounter::new();
        let fulls: Vec<_> = s.objectives().iter().map(|o| o.full_gradient(&c, &mut counter).unwrap()).collect();
        assert!(sq_norm(&mean_reduce(&fulls).unwrap()).sqrt() < 1e-12);
        assert_eq!(counter.total, 21);
        assert!((s.value(&c) - s.optimum_value()).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_sample_is_rejected() {
        let s = make_quadratic_suite(1, SampleCount::Finite(3), 2, 0.0, 1).unwrap();
        let mut c = IfoCounter::new();
        let x = ParamVector::zeros(2);
        assert!(matches!(
            s.objective(0).stochastic_gradient(&x, &Sample::index(3), &mut c),
            Err(Error::InvalidArgument(_))
        ));
        assert_eq!(c.total, 0);
    }

    #[test]
    fn online_objective_has_no_full_gradient() {
        let s = make_quadratic_suite(2, SampleCount::Online, 3, 0.5, 1).unwrap();
        let mut c = IfoCounter::new();
        assert!(matches!(
            s.objective(0).full_gradient(&ParamVector::zeros(3), &mut c),
            Err(Error::Unsupported(_))
        ));
        // index handles do not address online quadratic samples
        assert!(s.objective(0).stochastic_gradient(&ParamVector::zeros(3), &Sample::index(0), &mut c).is_err());
        let s = make_nonconvex_suite(2, SampleCount::Online, 3, 0.5, 1).unwrap();
        assert!(matches!(
            s.objective(1).full_gradient(&ParamVector::zeros(3), &mut c),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn sigmoid_is_flat_at_zero_residual() {
        let s = ProblemSuite::sigmoid_from_samples(vec![vec![(pv(&[1.0]), 0.0)]], false, pv(&[0.0])).unwrap();
        let mut c = IfoCounter::new();
        let g = s.objective(0).stochastic_gradient(&pv(&[0.0]), &Sample::index(0), &mut c).unwrap();
        assert_eq!(g, pv(&[0.0]));
        assert_eq!(s.smoothness(), 2.0);
    }

    #[test]
    fn online_sigmoid_symmetric_pair_has_zero_gradient_at_origin() {
        let s = ProblemSuite::sigmoid_from_samples(
            vec![vec![(pv(&[0.7]), 0.0), (pv(&[-0.7]), 0.0)]],
            true,
            pv(&[0.0]),
        )
        .unwrap();
        assert_eq!(s.true_global_gradient(&pv(&[0.0])), pv(&[0.0]));
    }

    #[test]
    fn slope_and_curvature_constants() {
        let t = 1.0 / 3f64.sqrt();
        assert!((phi_prime(t) - SIGMOID_MAX_SLOPE).abs() < 1e-15);
        let grid_max = (-20_000..=20_000)
            .map(|k| phi_prime(k as f64 * 1e-3).abs())
            .fold(0.0, f64::max);
        assert!(grid_max <= SIGMOID_MAX_SLOPE + 1e-15);
        // phi'' by differencing phi' on a grid never exceeds 2
        let h = 1e-5;
        let curv = (-5_000..=5_000)
            .map(|k| {
                let x = k as f64 * 1e-3;
                ((phi_prime(x + h) - phi_prime(x - h)) / (2.0 * h)).abs()
            })
            .fold(0.0, f64::max);
        assert!(curv <= SIGMOID_MAX_CURVATURE + 1e-6 && curv > 1.999);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = make_nonconvex_suite(2, SampleCount::Finite(5), 3, 1.0, 4).unwrap();
        let b = make_nonconvex_suite(2, SampleCount::Finite(5), 3, 1.0, 4).unwrap();
        let x = pv(&[0.1, -0.2, 0.3]);
        assert_eq!(a.true_global_gradient(&x), b.true_global_gradient(&x));
        assert_eq!(a.initial_point(), b.initial_point());
        let c = make_nonconvex_suite(2, SampleCount::Finite(5), 3, 1.0, 5).unwrap();
        assert_ne!(a.true_global_gradient(&x), c.true_global_gradient(&x));
    }

    #[test]
    fn heterogeneity_zero_gives_shared_worker_means() {
        let s = make_quadratic_suite(3, SampleCount::Online, 2, 0.0, 2).unwrap();
        let x = pv(&[0.5, 0.5]);
        let g0 = s.objective(0).exact_gradient(&x);
        for o in s.objectives() {
            assert_eq!(o.exact_gradient(&x), g0);
        }
        // sigma^2 = d * w^2 / 3 exactly
        assert!((s.variance_bound().powi(2) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn bad_shapes_rejected() {
        assert!(make_quadratic_suite(0, SampleCount::Finite(1), 1, 0.0, 0).is_err());
        assert!(make_quadratic_suite(1, SampleCount::Finite(0), 1, 0.0, 0).is_err());
        assert!(make_quadratic_suite(1, SampleCount::Finite(1), 0, 0.0, 0).is_err());
        assert!(make_nonconvex_suite(1, SampleCount::Finite(1), 1, -1.0, 0).is_err());
    }
}
