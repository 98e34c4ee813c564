//! Recursive SPIDER gradient tracking and the in-epoch averaging schedule.

use crate::error::{Error, Result};
use crate::numerics::{ParamVector, RngStream, RunningMean};
use crate::problems::{IfoCounter, LocalObjective};

/// A worker's current gradient estimate `v_t` and the point `x_{t-1}` it was
/// last advanced from.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorState {
    pub v: ParamVector,
    pub x_prev: ParamVector,
    pub t: usize,
}

impl EstimatorState {
    /// Epoch start: `v_0` is the restart direction handed over by the server.
    pub fn restart(v0: ParamVector, x0: ParamVector) -> Self {
        EstimatorState { v: v0, x_prev: x0, t: 0 }
    }

    /// In-place form of [`spider_update`].
    pub fn advance(
        &mut self,
        obj: &LocalObjective,
        x_curr: &ParamVector,
        batch: usize,
        rng: &mut RngStream,
        counter: &mut IfoCounter,
    ) -> Result<()> {
        if batch == 0 {
            return Err(Error::invalid("estimator batch size must be >= 1"));
        }
        if x_curr.dim() != self.x_prev.dim() || self.v.dim() != self.x_prev.dim() {
            return Err(Error::invalid("estimator dimension mismatch"));
        }
        // Both evaluations share the draw.
        let mut diff = RunningMean::new();
        for _ in 0..batch {
            let sample = obj.draw(rng);
            let now = obj.stochastic_gradient(x_curr, &sample, counter)?;
            let before = obj.stochastic_gradient(&self.x_prev, &sample, counter)?;
            diff.push(&now.sub(&before));
        }
        counter.paired += 2 * batch as u64;
        self.v.add_scaled(1.0, &diff.finish().expect("batch >= 1"));
        self.x_prev.clone_from(x_curr);
        self.t += 1;
        Ok(())
    }
}

/// `v_new = v_old + (1/B) sum_{xi in batch} [grad f_i(x_curr; xi) - grad f_i(x_prev; xi)]`.
///
/// Draws `B` i.i.d. samples from `rng` and charges `2B` IFOs.
pub fn spider_update(
    state: &EstimatorState,
    obj: &LocalObjective,
    x_curr: &ParamVector,
    batch: usize,
    rng: &mut RngStream,
    counter: &mut IfoCounter,
) -> Result<EstimatorState> {
    let mut next = state.clone();
    next.advance(obj, x_curr, batch, rng, counter)?;
    Ok(next)
}

/// Most recent averaging index at or before `ell`: `ell` itself when it is a
/// multiple of `period`, otherwise the largest multiple strictly below.
pub fn tau(ell: usize, period: usize) -> usize {
    assert!(period >= 1, "averaging period must be >= 1");
    ell - ell % period
}

pub fn is_averaging_step(t: usize, period: usize) -> bool {
    assert!(period >= 1, "averaging period must be >= 1");
    t % period == 0
}
