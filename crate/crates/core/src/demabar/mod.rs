//! The DeMABAR agent.
//!
//! Agents run in synchronised epochs. In epoch `m` an agent samples arms
//! from a distribution proportional to its planned pull counts, then spends
//! `w` communication rounds pulling its fallback arm while flooding its
//! reward sums to the `w`-neighbourhood. The collected reports are filtered
//! per arm ([`filter`]) and turned into the gap estimates for epoch `m + 1`.

pub mod filter;
pub mod relay;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::{pow2_neg, pow4_epoch, Scalar, Tolerance};
use crate::topology::NeighborhoodStats;

pub use filter::{filter_arm, ArmEstimate, Report};
pub use relay::{EpochMessage, Mailboxes};

/// How the exploration constant is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaRule {
    Named(LambdaName),
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaName {
    /// `2^9 ln(2 V T)`, the value the regret analysis assumes.
    Theory,
    /// `5 ln(4 V^2 T)`, the value used for the simulated comparisons.
    Experiment,
}

impl LambdaRule {
    pub const THEORY: LambdaRule = LambdaRule::Named(LambdaName::Theory);
    pub const EXPERIMENT: LambdaRule = LambdaRule::Named(LambdaName::Experiment);

    pub fn value(&self, agents: usize, horizon: u64) -> f64 {
        let v = agents as f64;
        let t = horizon as f64;
        match self {
            LambdaRule::Named(LambdaName::Theory) => 512.0 * (2.0 * v * t).ln(),
            LambdaRule::Named(LambdaName::Experiment) => 5.0 * (4.0 * v * v * t).ln(),
            LambdaRule::Fixed(x) => *x,
        }
    }
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule::THEORY
    }
}

/// Hyperparameters shared by every agent of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemabarParams<S> {
    pub alpha: Tolerance,
    pub w: u32,
    pub lambda: S,
}

impl<S: Scalar> DemabarParams<S> {
    pub fn new(alpha: Tolerance, w: u32, lambda: S) -> Self {
        DemabarParams { alpha, w, lambda }
    }

    /// Single-agent degenerate mode: no collaboration, no trimming.
    pub fn solo(lambda: S) -> Self {
        DemabarParams { alpha: Tolerance::ZERO, w: 0, lambda }
    }
}

/// Instance-independent epoch lengths, identical for every agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSchedule<S> {
    params: DemabarParams<S>,
    arms: usize,
    global_min: usize,
}

/// Round boundaries of one epoch (1-based, inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpochWindow {
    pub epoch: u32,
    pub explore_start: u64,
    pub explore_end: u64,
    /// Last communication round; equals `explore_end` when `w = 0`.
    pub end: u64,
}

impl<S: Scalar> EpochSchedule<S> {
    pub fn new(params: DemabarParams<S>, arms: usize, stats: &NeighborhoodStats) -> Self {
        EpochSchedule { params, arms, global_min: stats.global_min }
    }

    /// `N_m = ceil(lambda K 4^(m-1) / ((1 - 2 alpha) v_min))`.
    pub fn length(&self, m: u32) -> u64 {
        let keep = self.params.alpha.keep_factor::<S>();
        let raw = self.params.lambda * S::lit(self.arms as f64) * pow4_epoch::<S>(m)
            / (keep * S::lit(self.global_min as f64));
        raw.ceil().as_f64() as u64
    }

    /// Windows of every epoch that starts within the horizon.
    pub fn windows(&self, horizon: u64) -> Vec<EpochWindow> {
        let mut out = Vec::new();
        let mut clock = 0u64;
        let mut m = 1;
        while clock < horizon {
            let explore_end = clock + self.length(m);
            let end = explore_end + u64::from(self.params.w);
            out.push(EpochWindow { epoch: m, explore_start: clock + 1, explore_end, end });
            clock = end;
            m += 1;
        }
        out
    }

    /// Number of epochs whose filter step runs within the horizon.
    pub fn completed_epochs(&self, horizon: u64) -> usize {
        self.windows(horizon).iter().filter(|w| w.end <= horizon).count()
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DemabarError {
    #[error("observation {value} on arm {arm} outside [0, 1]")]
    ObservationOutOfRange { arm: usize, value: f64 },
    #[error("arm {arm} out of range for {arms} arms")]
    ArmOutOfRange { arm: usize, arms: usize },
    #[error("epoch {got} started out of order (expected {expected})")]
    EpochOutOfOrder { expected: u32, got: u32 },
}

/// Violation of a per-epoch plan invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanViolation {
    NegativePlan { arm: usize, value: f64 },
    PlanSum { sum: f64, epoch_length: u64 },
    ProbabilitySum(f64),
    GapFloor { arm: usize, gap: f64 },
}

/// Per-agent DeMABAR state.
#[derive(Debug, Clone)]
pub struct DemabarAgent<S> {
    id: usize,
    params: DemabarParams<S>,
    neighborhood: usize,
    local_min: usize,
    schedule: EpochSchedule<S>,
    epoch: u32,
    /// Gap estimates from the previous epoch.
    gaps: Vec<S>,
    /// `r_k - Delta_k / 8` from the last gap update, used to break fallback ties.
    scores: Option<Vec<S>>,
    planned: Vec<S>,
    sampling: Vec<S>,
    sampler: Option<WeightedIndex<f64>>,
    fallback: usize,
    epoch_length: u64,
    sums: Vec<S>,
}

impl<S: Scalar> DemabarAgent<S> {
    pub fn new(id: usize, arms: usize, params: DemabarParams<S>, stats: &NeighborhoodStats) -> Self {
        assert!(arms >= 1, "need at least one arm");
        DemabarAgent {
            id,
            params,
            neighborhood: stats.sizes[id],
            local_min: stats.local_min[id],
            schedule: EpochSchedule::new(params, arms, stats),
            epoch: 0,
            gaps: vec![S::one(); arms],
            scores: None,
            planned: vec![S::zero(); arms],
            sampling: vec![S::zero(); arms],
            sampler: None,
            fallback: 0,
            epoch_length: 0,
            sums: vec![S::zero(); arms],
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn arms(&self) -> usize {
        self.gaps.len()
    }

    pub fn params(&self) -> &DemabarParams<S> {
        &self.params
    }

    pub fn schedule(&self) -> &EpochSchedule<S> {
        &self.schedule
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    /// Gap estimates in force: those computed at the end of the previous epoch.
    pub fn gaps(&self) -> &[S] {
        &self.gaps
    }

    pub fn planned(&self) -> &[S] {
        &self.planned
    }

    pub fn sampling(&self) -> &[S] {
        &self.sampling
    }

    pub fn fallback_arm(&self) -> usize {
        self.fallback
    }

    pub fn epoch_length(&self) -> u64 {
        self.epoch_length
    }

    pub fn sums(&self) -> &[S] {
        &self.sums
    }

    pub fn neighborhood_size(&self) -> usize {
        self.neighborhood
    }

    /// Plans epoch `m`: epoch length, per-arm budgets, fallback arm and the
    /// sampling distribution. Resets the reward sums.
    pub fn begin_epoch(&mut self, m: u32) -> Result<(), DemabarError> {
        if m != self.epoch + 1 {
            return Err(DemabarError::EpochOutOfOrder { expected: self.epoch + 1, got: m });
        }
        self.epoch = m;
        let n_m = self.schedule.length(m);
        let floor = pow2_neg::<S>(m - 1);

        let eligible = |k: usize| self.gaps[k] == floor;
        let fallback = match &self.scores {
            None => (0..self.arms()).find(|&k| eligible(k)),
            Some(scores) => (0..self.arms())
                .filter(|&k| eligible(k))
                .fold(None, |best: Option<usize>, k| match best {
                    Some(b) if scores[b] >= scores[k] => Some(b),
                    _ => Some(k),
                }),
        }
        .expect("the best-scoring arm always has the minimum gap estimate");
        self.fallback = fallback;

        let lambda = self.params.lambda;
        let denom = self.params.alpha.keep_factor::<S>() * S::lit(self.local_min as f64);
        let cap = lambda * pow4_epoch::<S>(m);
        let sixteen = S::lit(16.0);
        let mut others = S::zero();
        for k in 0..self.arms() {
            if k == fallback {
                continue;
            }
            let g = self.gaps[k];
            let n = (sixteen * lambda / (g * g)).min(cap) / denom;
            self.planned[k] = n;
            others = others + n;
        }
        let total = S::lit(n_m as f64);
        self.planned[fallback] = total - others;
        debug_assert!(self.planned[fallback] >= S::zero());

        for k in 0..self.arms() {
            self.sampling[k] = self.planned[k] / total;
        }
        let weights: Vec<f64> = self.sampling.iter().map(|p| p.as_f64().max(0.0)).collect();
        self.sampler = Some(WeightedIndex::new(weights).expect("fallback arm has positive weight"));
        self.epoch_length = n_m;
        self.sums.iter_mut().for_each(|s| *s = S::zero());
        Ok(())
    }

    /// Draws the arm for one exploration round.
    pub fn sample_arm<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sampler.as_ref().expect("begin_epoch not called").sample(rng)
    }

    /// Arms this agent may pull in an exploration round.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.sampling.iter().enumerate().filter(|(_, p)| **p > S::zero()).map(|(k, _)| k)
    }

    pub fn record_observation(&mut self, arm: usize, reward: S) -> Result<(), DemabarError> {
        if arm >= self.arms() {
            return Err(DemabarError::ArmOutOfRange { arm, arms: self.arms() });
        }
        if !(reward >= S::zero() && reward <= S::one()) {
            return Err(DemabarError::ObservationOutOfRange { arm, value: reward.as_f64() });
        }
        self.sums[arm] = self.sums[arm] + reward;
        Ok(())
    }

    pub fn make_message(&self) -> EpochMessage<S> {
        EpochMessage {
            origin: self.id,
            epoch: self.epoch,
            sums: self.sums.clone(),
            counts: self.planned.clone(),
            hops_remaining: self.params.w,
        }
    }

    /// Count threshold for arm `k`: `lambda Delta^-2 / ((1 - 2 alpha) |N_w(i)|)`.
    pub fn threshold(&self, k: usize) -> S {
        let g = self.gaps[k];
        self.params.lambda
            / (g * g)
            / (self.params.alpha.keep_factor::<S>() * S::lit(self.neighborhood as f64))
    }

    /// Robust per-arm reward estimates from the epoch's inbox.
    ///
    /// The inbox should hold one message per member of the neighbourhood;
    /// the agent's own message is added if missing. With nothing but its own
    /// message the agent works on its own statistics alone.
    pub fn filter_epoch<'a, I>(&self, inbox: I) -> Vec<ArmEstimate<S>>
    where
        I: IntoIterator<Item = &'a EpochMessage<S>>,
    {
        let mut messages: Vec<&EpochMessage<S>> =
            inbox.into_iter().filter(|m| m.epoch == self.epoch).collect();
        let own = self.make_message();
        if !messages.iter().any(|m| m.origin == self.id) {
            messages.push(&own);
        }
        let size = if messages.len() == 1 { 1 } else { self.neighborhood };
        (0..self.arms())
            .map(|k| {
                let reports: Vec<Report<S>> = messages
                    .iter()
                    .map(|m| Report::new(m.sums[k], m.counts[k]))
                    .collect();
                filter_arm(&reports, self.threshold(k), self.params.alpha, size)
            })
            .collect()
    }

    /// Turns the filtered estimates into the next epoch's gap estimates.
    pub fn update_gaps(&mut self, estimates: &[S]) {
        assert_eq!(estimates.len(), self.arms());
        let eighth = S::lit(0.125);
        let scores: Vec<S> = estimates
            .iter()
            .zip(&self.gaps)
            .map(|(&r, &g)| r - eighth * g)
            .collect();
        let best = scores.iter().copied().fold(S::neg_infinity(), S::max);
        let floor = pow2_neg::<S>(self.epoch);
        for (g, &r) in self.gaps.iter_mut().zip(estimates) {
            *g = floor.max(best - r);
        }
        self.scores = Some(scores);
    }

    /// Filter step followed by the gap update; returns the estimates used.
    pub fn finish_epoch<'a, I>(&mut self, inbox: I) -> Vec<ArmEstimate<S>>
    where
        I: IntoIterator<Item = &'a EpochMessage<S>>,
    {
        let estimates = self.filter_epoch(inbox);
        let values: Vec<S> = estimates.iter().map(|e| e.value).collect();
        self.update_gaps(&values);
        estimates
    }

    /// Checks the plan invariants of the current epoch.
    pub fn check_plan(&self) -> Result<(), PlanViolation> {
        let total: f64 = self.planned.iter().map(|x| x.as_f64()).sum();
        for (arm, &x) in self.planned.iter().enumerate() {
            if x < S::zero() {
                return Err(PlanViolation::NegativePlan { arm, value: x.as_f64() });
            }
        }
        let n = self.epoch_length as f64;
        let tol = if S::epsilon().as_f64() > 1e-10 { 1e-4 } else { 1e-9 };
        if (total - n).abs() > tol * n.max(1.0) {
            return Err(PlanViolation::PlanSum { sum: total, epoch_length: self.epoch_length });
        }
        let p: f64 = self.sampling.iter().map(|x| x.as_f64()).sum();
        let ptol = if S::epsilon().as_f64() > 1e-10 { 1e-5 } else { 1e-12 };
        if (p - 1.0).abs() > ptol {
            return Err(PlanViolation::ProbabilitySum(p));
        }
        let floor = pow2_neg::<S>(self.epoch - 1);
        for (arm, &g) in self.gaps.iter().enumerate() {
            if g < floor {
                return Err(PlanViolation::GapFloor { arm, gap: g.as_f64() });
            }
        }
        Ok(())
    }
}
