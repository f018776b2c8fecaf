//! Stochastic bandit instances and per-round reward matrices.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EnvironmentError {
    #[error("need at least {min} arms, got {got}")]
    TooFewArms { min: usize, got: usize },
    #[error("arm {arm} mean {mean} outside [0, 1]")]
    MeanOutOfRange { arm: usize, mean: f64 },
    #[error("mean range [{0}, {1}] is not a sub-interval of [0, 1]")]
    BadRange(f64, f64),
    #[error("explicit means list has {got} entries, expected {expected}")]
    MeansLength { expected: usize, got: usize },
    #[error("gaussian sigma must be finite and non-negative, got {0}")]
    BadSigma(f64),
}

/// Reward distribution family shared by all arms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RewardFamily {
    Gaussian { sigma: f64 },
    Bernoulli,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    #[default]
    Gaussian,
    Bernoulli,
}

/// Instance description from the experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub arms: usize,
    #[serde(default)]
    pub family: FamilyName,
    /// Standard deviation of Gaussian rewards.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Explicit arm means; drawn uniformly from `mean_range` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub means: Option<Vec<f64>>,
    #[serde(default = "default_mean_range")]
    pub mean_range: (f64, f64),
    /// Clip sampled rewards to [0, 1].
    #[serde(default = "default_true")]
    pub clip: bool,
}

fn default_sigma() -> f64 {
    0.01
}

fn default_mean_range() -> (f64, f64) {
    (0.1, 0.9)
}

fn default_true() -> bool {
    true
}

impl InstanceSpec {
    pub fn gaussian(arms: usize, sigma: f64) -> Self {
        InstanceSpec {
            arms,
            family: FamilyName::Gaussian,
            sigma,
            means: None,
            mean_range: default_mean_range(),
            clip: true,
        }
    }

    pub fn bernoulli(arms: usize) -> Self {
        InstanceSpec { family: FamilyName::Bernoulli, ..InstanceSpec::gaussian(arms, default_sigma()) }
    }

    pub fn reward_family(&self) -> RewardFamily {
        match self.family {
            FamilyName::Gaussian => RewardFamily::Gaussian { sigma: self.sigma },
            FamilyName::Bernoulli => RewardFamily::Bernoulli,
        }
    }

    pub fn with_means(mut self, means: Vec<f64>) -> Self {
        self.arms = means.len();
        self.means = Some(means);
        self
    }

    pub fn validate(&self) -> Result<(), EnvironmentError> {
        if self.arms < 2 {
            return Err(EnvironmentError::TooFewArms { min: 2, got: self.arms });
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(EnvironmentError::BadSigma(self.sigma));
        }
        let (lo, hi) = self.mean_range;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(EnvironmentError::BadRange(lo, hi));
        }
        if let Some(means) = &self.means {
            if means.len() != self.arms {
                return Err(EnvironmentError::MeansLength { expected: self.arms, got: means.len() });
            }
            check_means(means)?;
        }
        Ok(())
    }
}

fn check_means(means: &[f64]) -> Result<(), EnvironmentError> {
    for (arm, &mean) in means.iter().enumerate() {
        if !(0.0..=1.0).contains(&mean) {
            return Err(EnvironmentError::MeanOutOfRange { arm, mean });
        }
    }
    Ok(())
}

/// A K-armed stochastic bandit with its derived gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditInstance<S> {
    means: Vec<S>,
    family: RewardFamily,
    clip: bool,
    optimal_arm: usize,
    gaps: Vec<S>,
    min_gap: Option<S>,
}

impl<S: Scalar> BanditInstance<S> {
    pub fn new(means: Vec<f64>, family: RewardFamily, clip: bool) -> Result<Self, EnvironmentError> {
        if means.is_empty() {
            return Err(EnvironmentError::TooFewArms { min: 1, got: 0 });
        }
        check_means(&means)?;
        let means: Vec<S> = means.into_iter().map(S::lit).collect();
        let mut optimal_arm = 0;
        for (k, &m) in means.iter().enumerate() {
            if m > means[optimal_arm] {
                optimal_arm = k;
            }
        }
        let best = means[optimal_arm];
        let gaps: Vec<S> = means.iter().map(|&m| best - m).collect();
        let min_gap = gaps
            .iter()
            .copied()
            .filter(|g| *g > S::zero())
            .fold(None, |acc: Option<S>, g| Some(acc.map_or(g, |a| a.min(g))));
        Ok(BanditInstance { means, family, clip, optimal_arm, gaps, min_gap })
    }

    pub fn arm_count(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[S] {
        &self.means
    }

    pub fn mean(&self, arm: usize) -> S {
        self.means[arm]
    }

    pub fn family(&self) -> RewardFamily {
        self.family
    }

    pub fn optimal_arm(&self) -> usize {
        self.optimal_arm
    }

    pub fn gaps(&self) -> &[S] {
        &self.gaps
    }

    pub fn gap(&self, arm: usize) -> S {
        self.gaps[arm]
    }

    /// Smallest positive gap; `None` when every arm is optimal.
    pub fn min_gap(&self) -> Option<S> {
        self.min_gap
    }

    pub fn is_degenerate(&self) -> bool {
        self.min_gap.is_none()
    }

    /// Draws one V×K reward matrix: entry `(i, k)` is an independent sample
    /// of arm `k`. Every entry is drawn even if most are never observed, so
    /// the stream position depends only on the round index.
    pub fn sample_rewards<R: Rng + ?Sized>(&self, rng: &mut R, agents: usize) -> RewardMatrix<S> {
        let k = self.arm_count();
        let mut data = Vec::with_capacity(agents * k);
        for _ in 0..agents {
            for &mean in &self.means {
                let x = match self.family {
                    RewardFamily::Gaussian { sigma } => {
                        let z: f64 = rng.sample(StandardNormal);
                        mean.as_f64() + sigma * z
                    }
                    RewardFamily::Bernoulli => {
                        if rng.random::<f64>() < mean.as_f64() {
                            1.0
                        } else {
                            0.0
                        }
                    }
                };
                let x = if self.clip { x.clamp(0.0, 1.0) } else { x };
                data.push(S::lit(x));
            }
        }
        RewardMatrix { agents, arms: k, data }
    }
}

/// Draws (or copies) the arm means and builds the instance.
pub fn sample_instance<S: Scalar, R: Rng + ?Sized>(
    spec: &InstanceSpec,
    rng: &mut R,
) -> Result<BanditInstance<S>, EnvironmentError> {
    spec.validate()?;
    let means = match &spec.means {
        Some(m) => m.clone(),
        None => {
            let (lo, hi) = spec.mean_range;
            (0..spec.arms).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect()
        }
    };
    BanditInstance::new(means, spec.reward_family(), spec.clip)
}

/// Row-major V×K matrix of rewards (or corrupted rewards) for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardMatrix<S> {
    agents: usize,
    arms: usize,
    data: Vec<S>,
}

impl<S: Scalar> RewardMatrix<S> {
    pub fn from_rows(rows: Vec<Vec<S>>) -> Self {
        let agents = rows.len();
        let arms = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == arms), "ragged reward matrix");
        RewardMatrix { agents, arms, data: rows.into_iter().flatten().collect() }
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn get(&self, agent: usize, arm: usize) -> S {
        self.data[agent * self.arms + arm]
    }

    pub fn set(&mut self, agent: usize, arm: usize, value: S) {
        self.data[agent * self.arms + arm] = value;
    }

    pub fn row(&self, agent: usize) -> &[S] {
        &self.data[agent * self.arms..(agent + 1) * self.arms]
    }

    pub fn row_mut(&mut self, agent: usize) -> &mut [S] {
        &mut self.data[agent * self.arms..(agent + 1) * self.arms]
    }
}
