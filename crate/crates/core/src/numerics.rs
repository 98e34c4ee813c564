//! Dense vector arithmetic and keyed random streams.
//!
//! Every reduction runs in worker-index order so results are bit-identical
//! across runs and across thread counts.

use std::ops::Index;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in `R^d`. Iterates, gradients and estimates all share this type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(data: Vec<f64>) -> Self {
        ParamVector(data)
    }

    pub fn zeros(dim: usize) -> Self {
        ParamVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// `self - other`, componentwise.
    pub fn sub(&self, other: &ParamVector) -> ParamVector {
        debug_assert_eq!(self.dim(), other.dim());
        ParamVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// In-place `self += a * y`.
    pub fn add_scaled(&mut self, a: f64, y: &ParamVector) {
        debug_assert_eq!(self.dim(), y.dim());
        for (xi, yi) in self.0.iter_mut().zip(&y.0) {
            *xi += a * yi;
        }
    }

    pub fn scale(&self, a: f64) -> ParamVector {
        ParamVector(self.0.iter().map(|v| a * v).collect())
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        ParamVector(v)
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

/// Componentwise arithmetic mean over `vectors`, accumulated left to right.
///
/// Uses the running-mean update `m_k = m_{k-1} + (x_k - m_{k-1}) / k`, so a list
/// of identical vectors reduces to that vector bit for bit.
pub fn mean_reduce<'a, I>(vectors: I) -> Result<ParamVector>
where
    I: IntoIterator<Item = &'a ParamVector>,
{
    let mut iter = vectors.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::invalid("mean_reduce over an empty list"))?;
    let mut mean = first.clone();
    for (k, v) in iter.enumerate() {
        if v.dim() != mean.dim() {
            return Err(Error::invalid(format!(
                "mean_reduce dimension mismatch: {} vs {}",
                mean.dim(),
                v.dim()
            )));
        }
        let count = (k + 2) as f64;
        for (m, x) in mean.0.iter_mut().zip(&v.0) {
            *m += (x - *m) / count;
        }
    }
    Ok(mean)
}

/// Running mean of a sequence produced on the fly.
#[derive(Debug, Clone)]
pub(crate) struct RunningMean {
    mean: Option<ParamVector>,
    count: usize,
}

impl RunningMean {
    pub(crate) fn new() -> Self {
        RunningMean { mean: None, count: 0 }
    }

    pub(crate) fn push(&mut self, v: &ParamVector) {
        self.count += 1;
        match &mut self.mean {
            None => self.mean = Some(v.clone()),
            Some(mean) => {
                let count = self.count as f64;
                for (m, x) in mean.0.iter_mut().zip(&v.0) {
                    *m += (x - *m) / count;
                }
            }
        }
    }

    pub(crate) fn finish(self) -> Option<ParamVector> {
        self.mean
    }
}

/// Returns `x + a * y`.
pub fn axpy(x: &ParamVector, a: f64, y: &ParamVector) -> Result<ParamVector> {
    if x.dim() != y.dim() {
        return Err(Error::invalid(format!(
            "axpy dimension mismatch: {} vs {}",
            x.dim(),
            y.dim()
        )));
    }
    if !a.is_finite() {
        return Err(Error::invalid("axpy with non-finite scalar"));
    }
    Ok(ParamVector(
        x.0.iter().zip(&y.0).map(|(xi, yi)| xi + a * yi).collect(),
    ))
}

pub fn sq_norm(x: &ParamVector) -> f64 {
    x.0.iter().map(|v| v * v).sum()
}

/// `||x - y||^2` without allocating.
pub fn sq_dist(x: &ParamVector, y: &ParamVector) -> f64 {
    debug_assert_eq!(x.dim(), y.dim());
    x.0.iter().zip(&y.0).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Identifies one independent draw sequence: which worker, which epoch, which
/// inner iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub worker: u64,
    pub epoch: u64,
    pub iteration: u64,
}

impl StreamId {
    pub fn new(worker: usize, epoch: u64, iteration: u64) -> Self {
        StreamId {
            worker: worker as u64,
            epoch,
            iteration,
        }
    }
}

/// Draws for one `(seed, stream)` key. Two streams with the same key replay
/// the same sequence; the key is hashed into a fresh ChaCha8 state so distinct
/// keys do not share any generator state.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    id: StreamId,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, id: StreamId) -> Self {
        let mut state = seed;
        let mut key = [0u8; 32];
        let words = [
            splitmix64(&mut state),
            splitmix64(&mut state) ^ mix(id.worker.wrapping_add(0x243f_6a88_85a3_08d3)),
            splitmix64(&mut state) ^ mix(id.epoch.wrapping_add(0x1319_8a2e_0370_7344)),
            splitmix64(&mut state) ^ mix(id.iteration.wrapping_add(0xa409_3822_299f_31d0)),
        ];
        for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        RngStream {
            seed,
            id,
            rng: ChaCha8Rng::from_seed(key),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    /// Uniform index in `[0, n)`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    /// Uniform real in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.rng.gen::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.gen()
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    mix(*state)
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
