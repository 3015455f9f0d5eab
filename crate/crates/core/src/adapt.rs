//! Success-rate tracking and the optimistic/pessimistic selection rule.
//!
//! Each node keeps a window of its own recent outcomes (`sigma_local`) and a
//! window of `sigma_local` values piggybacked on messages it received. The
//! overall rate is their weighted mean; a node goes optimistic for an
//! `r`-molecule capture iff `sigma^r >= s`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Optimistic,
    Pessimistic,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Optimistic => "optimistic",
            Mode::Pessimistic => "pessimistic",
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AdaptError {
    #[error("success rate {0} outside [0, 1]")]
    SigmaOutOfRange(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackerParams {
    pub w_local: usize,
    pub w_remote: usize,
    pub local_weight: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        TrackerParams { w_local: 30, w_remote: 30, local_weight: 0.3 }
    }
}

#[derive(Clone, Debug)]
pub struct SuccessTracker {
    params: TrackerParams,
    local: VecDeque<bool>,
    successes: usize,
    remote: VecDeque<f64>,
    remote_sum: f64,
}

impl SuccessTracker {
    pub fn new(params: TrackerParams) -> Self {
        assert!(params.w_local >= 1, "local window must hold at least one outcome");
        assert!((0.0..=1.0).contains(&params.local_weight), "local weight must be in [0, 1]");
        SuccessTracker {
            params,
            local: VecDeque::with_capacity(params.w_local),
            successes: 0,
            remote: VecDeque::with_capacity(params.w_remote),
            remote_sum: 0.0,
        }
    }

    pub fn params(&self) -> TrackerParams {
        self.params
    }

    pub fn record_outcome(&mut self, success: bool) {
        if self.local.len() == self.params.w_local
            && self.local.pop_front() == Some(true) {
                self.successes -= 1;
            }
        self.local.push_back(success);
        if success {
            self.successes += 1;
        }
    }

    pub fn record_remote_sigma(&mut self, sigma: f64) -> Result<(), AdaptError> {
        if !(0.0..=1.0).contains(&sigma) {
            return Err(AdaptError::SigmaOutOfRange(sigma));
        }
        if self.params.w_remote == 0 {
            return Ok(());
        }
        if self.remote.len() == self.params.w_remote {
            self.remote.pop_front();
        }
        self.remote.push_back(sigma);
        // recompute rather than subtract to keep the sum free of drift
        self.remote_sum = self.remote.iter().sum();
        Ok(())
    }

    pub fn remote_sigmas(&self) -> impl Iterator<Item = f64> + '_ {
        self.remote.iter().copied()
    }

    /// 1.0 on an empty history.
    pub fn sigma_local(&self) -> f64 {
        if self.local.is_empty() {
            1.0
        } else {
            self.successes as f64 / self.local.len() as f64
        }
    }

    pub fn sigma_overall(&self) -> f64 {
        let local = self.sigma_local();
        if self.remote.is_empty() {
            return local;
        }
        let w = self.params.local_weight;
        let remote = self.remote_sum / self.remote.len() as f64;
        (w * local + (1.0 - w) * remote).clamp(0.0, 1.0)
    }

    pub fn choose_protocol(&self, arity: usize, threshold: f64) -> Mode {
        choose_protocol(self.sigma_overall(), arity, threshold)
    }
}

/// Optimistic iff `sigma^arity >= threshold`.
pub fn choose_protocol(sigma: f64, arity: usize, threshold: f64) -> Mode {
    assert!(arity >= 1);
    if sigma.powi(arity as i32) >= threshold {
        Mode::Optimistic
    } else {
        Mode::Pessimistic
    }
}
