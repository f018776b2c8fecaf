//! Non-cooperative reference algorithms.
//!
//! IND-BARBAR is not a separate implementation: it is [`DemabarAgent`] run
//! with [`DemabarParams::solo`] on a self-only neighbourhood (see
//! [`ind_barbar_agent`]).

use crate::demabar::{DemabarAgent, DemabarParams};
use crate::scalar::Scalar;
use crate::topology::NeighborhoodStats;

/// Default exploration coefficient of the UCB index.
pub const UCB_COEF: f64 = 1.5;

/// A learner that needs no communication: pick an arm, then observe.
///
/// External algorithms (DRAA, MA-BARBAT, resilient decentralised UCB,
/// IND-FTRL) plug in here.
pub trait Baseline<S: Scalar>: Send {
    fn select_arm(&mut self, t: u64, rng: &mut dyn rand::RngCore) -> usize;
    fn observe(&mut self, arm: usize, reward: S);
    /// Arms the learner may pull in round `t` given its history.
    fn support(&self, t: u64) -> Vec<usize>;
}

/// UCB1-style learner with a configurable exploration coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct UcbState<S> {
    counts: Vec<u64>,
    sums: Vec<S>,
    coef: S,
}

impl<S: Scalar> UcbState<S> {
    pub fn new(arms: usize, coef: S) -> Self {
        UcbState { counts: vec![0; arms], sums: vec![S::zero(); arms], coef }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn means(&self) -> Vec<S> {
        self.counts
            .iter()
            .zip(&self.sums)
            .map(|(&n, &s)| if n == 0 { S::zero() } else { s / S::lit(n as f64) })
            .collect()
    }

    /// Index of every arm at round `t`; unplayed arms have infinite index.
    pub fn index(&self, t: u64) -> Vec<S> {
        let log_t = S::lit((t.max(1) as f64).ln());
        self.counts
            .iter()
            .zip(&self.sums)
            .map(|(&n, &s)| {
                if n == 0 {
                    S::infinity()
                } else {
                    let n = S::lit(n as f64);
                    s / n + (self.coef * log_t / n).sqrt()
                }
            })
            .collect()
    }

    /// Round-robin over unplayed arms, then the highest index (lowest arm on ties).
    pub fn choose(&self, t: u64) -> usize {
        if let Some(k) = self.counts.iter().position(|&n| n == 0) {
            return k;
        }
        let index = self.index(t);
        let mut best = 0;
        for (k, &v) in index.iter().enumerate() {
            if v > index[best] {
                best = k;
            }
        }
        best
    }

    pub fn record(&mut self, arm: usize, reward: S) {
        self.counts[arm] += 1;
        self.sums[arm] = self.sums[arm] + reward;
    }
}

impl<S: Scalar> Baseline<S> for UcbState<S> {
    fn select_arm(&mut self, t: u64, _rng: &mut dyn rand::RngCore) -> usize {
        self.choose(t)
    }

    fn observe(&mut self, arm: usize, reward: S) {
        self.record(arm, reward);
    }

    fn support(&self, t: u64) -> Vec<usize> {
        vec![self.choose(t)]
    }
}

/// A DeMABAR agent with no neighbours, no trimming and `w = 0`.
pub fn ind_barbar_agent<S: Scalar>(id: usize, agents: usize, arms: usize, lambda: S) -> DemabarAgent<S> {
    DemabarAgent::new(id, arms, DemabarParams::solo(lambda), &NeighborhoodStats::solo(agents))
}
