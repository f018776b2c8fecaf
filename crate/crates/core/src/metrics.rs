//! Pseudo-regret, communication cost and across-trial aggregates.

use crate::engine::RoundLog;
use crate::scalar::Scalar;

/// Cumulative pseudo-regret of agent `i` after each round.
pub fn regret_curve<S: Scalar>(log: &RoundLog<S>, i: usize) -> Vec<S> {
    let mut acc = S::zero();
    (1..=log.horizon)
        .map(|t| {
            acc = acc + log.gaps[log.pull(t, i)];
            acc
        })
        .collect()
}

/// Sum of the gaps of agent `i`'s pulls in rounds `1..=t`.
pub fn pseudo_regret<S: Scalar>(log: &RoundLog<S>, i: usize, t: u64) -> S {
    (1..=t).fold(S::zero(), |acc, s| acc + log.gaps[log.pull(s, i)])
}

/// Number of pulls of each arm by agent `i` in rounds `1..=t`.
pub fn pull_tallies<S: Scalar>(log: &RoundLog<S>, i: usize, t: u64) -> Vec<u64> {
    let mut n = vec![0u64; log.means.len()];
    for s in 1..=t {
        n[log.pull(s, i)] += 1;
    }
    n
}

/// `sum_k gap_k * n_k`: pseudo-regret from the pull tallies.
pub fn regret_from_tallies<S: Scalar>(log: &RoundLog<S>, i: usize, t: u64) -> S {
    pull_tallies(log, i, t)
        .iter()
        .zip(&log.gaps)
        .fold(S::zero(), |acc, (&n, &g)| acc + S::lit(n as f64) * g)
}

/// `t * mu_best - sum of the true means of the pulled arms`.
pub fn reward_shortfall<S: Scalar>(log: &RoundLog<S>, i: usize, t: u64) -> S {
    let best = log.means.iter().copied().fold(S::neg_infinity(), S::max);
    let got = (1..=t).fold(S::zero(), |acc, s| acc + log.mean_of_pull(s, i));
    S::lit(t as f64) * best - got
}

/// Total broadcast events.
pub fn comm_cost<S>(log: &RoundLog<S>) -> u64 {
    log.broadcasts.iter().map(|&b| u64::from(b)).sum()
}

/// Cumulative broadcast events after each round.
pub fn comm_cost_curve<S>(log: &RoundLog<S>) -> Vec<u64> {
    let mut acc = 0u64;
    log.broadcasts
        .iter()
        .map(|&b| {
            acc += u64::from(b);
            acc
        })
        .collect()
}

/// Pointwise mean of equal-length curves.
pub fn average_curve<S: Scalar>(curves: &[&[S]]) -> Vec<S> {
    assert!(!curves.is_empty(), "need at least one curve");
    let n = S::lit(curves.len() as f64);
    (0..curves[0].len())
        .map(|t| curves.iter().fold(S::zero(), |acc, c| acc + c[t]) / n)
        .collect()
}

/// Pointwise mean and sample standard deviation across trials.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretCurve<S> {
    pub mean: Vec<S>,
    pub std: Vec<S>,
    pub trials: usize,
}

impl<S: Scalar> RegretCurve<S> {
    /// Standard error of the mean at each round.
    pub fn standard_error(&self) -> Vec<S> {
        let root = S::lit(self.trials as f64).sqrt();
        self.std.iter().map(|&s| s / root).collect()
    }
}

/// Mean and sample std (n - 1 denominator; zero for a single trial).
pub fn aggregate<S: Scalar>(curves: &[Vec<S>]) -> RegretCurve<S> {
    assert!(!curves.is_empty(), "need at least one trial");
    let len = curves[0].len();
    assert!(curves.iter().all(|c| c.len() == len), "curves differ in length");
    let n = curves.len();
    let nf = S::lit(n as f64);
    let mut mean = Vec::with_capacity(len);
    let mut std = Vec::with_capacity(len);
    for t in 0..len {
        let m = curves.iter().fold(S::zero(), |acc, c| acc + c[t]) / nf;
        let s = if n > 1 {
            let ss = curves.iter().fold(S::zero(), |acc, c| acc + (c[t] - m) * (c[t] - m));
            (ss / S::lit((n - 1) as f64)).sqrt()
        } else {
            S::zero()
        };
        mean.push(m);
        std.push(s);
    }
    RegretCurve { mean, std, trials: n }
}
