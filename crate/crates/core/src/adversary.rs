//! Budgeted reward corruption and Byzantine agent behaviour.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::demabar::EpochMessage;
use crate::environment::{BanditInstance, RewardMatrix};
use crate::scalar::{pow4_epoch, Scalar, Tolerance};
use crate::topology::NeighborhoodStats;

/// Arms with mean at or below this value are the attacker's targets.
pub const TARGET_THRESHOLD: f64 = 0.5;

/// When the targeted attack fires on a non-target entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trigger {
    /// Every non-target entry is pushed to zero.
    #[default]
    Always,
    /// Only entries whose realised reward is exactly one (Bernoulli rewards).
    RewardOne,
}

/// Which entries of an attacked agent's reward vector the attack touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    /// The whole vector, whatever the agent will pull.
    Row,
    /// Only arms the agent can pull this round given its history.
    #[default]
    Support,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TargetedAttack {
    #[serde(default)]
    pub trigger: Trigger,
    #[serde(default)]
    pub scope: Scope,
}

/// Budget accounting for the corruption adversary.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionLedger<S> {
    budget: S,
    spent: S,
    attackable: Vec<bool>,
}

impl<S: Scalar> CorruptionLedger<S> {
    pub fn new(budget: S, agents: &[usize], agent_count: usize) -> Self {
        let mut attackable = vec![false; agent_count];
        for &a in agents {
            attackable[a] = true;
        }
        CorruptionLedger { budget, spent: S::zero(), attackable }
    }

    pub fn budget(&self) -> S {
        self.budget
    }

    pub fn spent(&self) -> S {
        self.spent
    }

    /// Budget left; rounding residue below a few ulps of the budget counts as none.
    pub fn remaining(&self) -> S {
        let left = self.budget - self.spent;
        if left <= S::lit(4.0) * S::epsilon() * self.budget.max(S::one()) {
            S::zero()
        } else {
            left
        }
    }

    pub fn is_exhausted(&self) -> bool {
        self.remaining() <= S::zero()
    }

    pub fn is_attackable(&self, agent: usize) -> bool {
        self.attackable[agent]
    }

    /// Moves `row` towards `desired`, charging `max_k |new_k - old_k|`.
    ///
    /// When the full move would overrun the budget every displacement is
    /// truncated to the remaining budget, which is then spent exactly (up to
    /// rounding, never above the budget). Returns the charge.
    pub fn apply(&mut self, row: &mut [S], desired: &[S]) -> S {
        let remaining = self.remaining();
        if remaining <= S::zero() {
            return S::zero();
        }
        let mut allowance = remaining;
        for _ in 0..16 {
            let candidate: Vec<S> = row
                .iter()
                .zip(desired)
                .map(|(&r, &d)| {
                    let shift = (d - r).max(-allowance).min(allowance);
                    (r + shift).max(S::zero()).min(S::one())
                })
                .collect();
            let charge = row
                .iter()
                .zip(&candidate)
                .map(|(&r, &c)| (c - r).abs())
                .fold(S::zero(), S::max);
            if self.spent + charge <= self.budget {
                row.copy_from_slice(&candidate);
                self.spent = self.spent + charge;
                return charge;
            }
            allowance = allowance - (self.spent + charge - self.budget) - S::epsilon() * allowance;
            if allowance <= S::zero() {
                break;
            }
        }
        S::zero()
    }
}

/// Per-round corruption charge `sum_i max_k |corrupted - clean|`, recomputed
/// from the two matrices.
pub fn corruption_charge<S: Scalar>(clean: &RewardMatrix<S>, corrupted: &RewardMatrix<S>) -> Vec<S> {
    (0..clean.agents())
        .map(|i| {
            clean
                .row(i)
                .iter()
                .zip(corrupted.row(i))
                .map(|(&a, &b)| (b - a).abs())
                .fold(S::zero(), S::max)
        })
        .collect()
}

/// Applies the targeted attack to one round.
///
/// `support(i)` lists the arms agent `i` may pull this round; it is only
/// consulted for [`Scope::Support`]. Returns the corrupted matrix and the
/// per-agent charges.
pub fn targeted_attack<S, F>(
    attack: TargetedAttack,
    instance: &BanditInstance<S>,
    rewards: &RewardMatrix<S>,
    ledger: &mut CorruptionLedger<S>,
    mut support: F,
) -> (RewardMatrix<S>, Vec<S>)
where
    S: Scalar,
    F: FnMut(usize) -> Vec<usize>,
{
    let mut out = rewards.clone();
    let mut charges = vec![S::zero(); rewards.agents()];
    if ledger.is_exhausted() {
        return (out, charges);
    }
    let threshold = S::lit(TARGET_THRESHOLD);
    let arms = rewards.arms();
    for i in 0..rewards.agents() {
        if !ledger.is_attackable(i) || ledger.is_exhausted() {
            continue;
        }
        let mut in_scope = vec![attack.scope == Scope::Row; arms];
        if attack.scope == Scope::Support {
            for k in support(i) {
                in_scope[k] = true;
            }
        }
        let row = out.row_mut(i);
        let desired: Vec<S> = (0..arms)
            .map(|k| {
                let fires = match attack.trigger {
                    Trigger::Always => true,
                    Trigger::RewardOne => row[k] == S::one(),
                };
                if in_scope[k] && instance.mean(k) > threshold && fires {
                    S::zero()
                } else {
                    row[k]
                }
            })
            .collect();
        if desired.iter().zip(row.iter()).all(|(d, r)| d == r) {
            continue;
        }
        charges[i] = ledger.apply(row, &desired);
    }
    (out, charges)
}

/// How a Byzantine agent forges its reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ByzantineAttack {
    /// Reports `1 - mu_k` with an inflated pull count.
    Adaptive,
    /// Adds `N(beta_{i,k}, scale)` noise to each reported average, drawn
    /// independently per recipient.
    Gaussian { scale: f64, noise: NoiseParam },
}

/// Whether the Gaussian attack's noise scale is a variance or a standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseParam {
    #[default]
    Variance,
    Std,
}

impl ByzantineAttack {
    pub fn gaussian() -> Self {
        ByzantineAttack::Gaussian { scale: 0.001, noise: NoiseParam::Variance }
    }
}

/// Normal agents `i` with `|byz ∩ N_1(i)| > alpha |N_1(i)|`.
pub fn overexposed_agents(byzantine: &[usize], alpha: Tolerance, one_hop: &NeighborhoodStats) -> Vec<usize> {
    let n = one_hop.sizes.len();
    let is_byz = mask(byzantine, n);
    (0..n)
        .filter(|&i| !is_byz[i])
        .filter(|&i| {
            let bad = one_hop.neighborhoods[i].iter().filter(|&&j| is_byz[j]).count();
            !alpha.admits(bad, one_hop.sizes[i])
        })
        .collect()
}

fn mask(agents: &[usize], n: usize) -> Vec<bool> {
    let mut m = vec![false; n];
    for &a in agents {
        m[a] = true;
    }
    m
}

/// Forges Byzantine messages for one trial.
#[derive(Debug, Clone)]
pub struct ByzantineForger<S> {
    attack: ByzantineAttack,
    means: Vec<S>,
    /// `biases[j][k]` for sender `j`; empty rows for normal agents.
    biases: Vec<Vec<S>>,
    lambda: S,
    keep: S,
    local_min: Vec<usize>,
}

impl<S: Scalar> ByzantineForger<S> {
    /// `biases[j]` must hold one entry per arm for every Byzantine sender `j`
    /// when the attack is Gaussian.
    pub fn new(
        attack: ByzantineAttack,
        instance: &BanditInstance<S>,
        biases: Vec<Vec<S>>,
        lambda: S,
        alpha: Tolerance,
        stats: &NeighborhoodStats,
    ) -> Self {
        ByzantineForger {
            attack,
            means: instance.means().to_vec(),
            biases,
            lambda,
            keep: alpha.keep_factor(),
            local_min: stats.local_min.clone(),
        }
    }

    /// Largest per-arm count an honest recipient could plan in epoch `m`;
    /// reporting it keeps the message past the count filter.
    pub fn count_cap(&self, recipient: usize, m: u32) -> S {
        self.lambda * pow4_epoch::<S>(m) / (self.keep * S::lit(self.local_min[recipient] as f64))
    }

    /// What a Byzantine sender would report if it were honest and knew the
    /// true means: `mu_k` at the inflated count.
    pub fn honest_message(&self, sender: usize, recipient: usize, m: u32, w: u32) -> EpochMessage<S> {
        let cap = self.count_cap(recipient, m);
        EpochMessage {
            origin: sender,
            epoch: m,
            sums: self.means.iter().map(|&mu| mu * cap).collect(),
            counts: vec![cap; self.means.len()],
            hops_remaining: w,
        }
    }

    pub fn forge<R: Rng + ?Sized>(
        &self,
        honest: &EpochMessage<S>,
        recipient: usize,
        rng: &mut R,
    ) -> EpochMessage<S> {
        let mut msg = honest.clone();
        match self.attack {
            ByzantineAttack::Adaptive => {
                let cap = self.count_cap(recipient, honest.epoch);
                for (k, &mu) in self.means.iter().enumerate() {
                    msg.counts[k] = cap;
                    msg.sums[k] = (S::one() - mu) * cap;
                }
            }
            ByzantineAttack::Gaussian { scale, noise } => {
                let std = match noise {
                    NoiseParam::Variance => scale.sqrt(),
                    NoiseParam::Std => scale,
                };
                let bias = &self.biases[honest.origin];
                for k in 0..msg.sums.len() {
                    let z: f64 = rng.sample(StandardNormal);
                    let c = S::lit(bias[k].as_f64() + std * z);
                    msg.sums[k] = msg.sums[k] + c * msg.counts[k];
                }
            }
        }
        msg
    }
}

/// Draws the per-arm Gaussian-attack biases `beta_{i,k} ~ U(0, 1)`.
pub fn draw_biases<S: Scalar, R: Rng + ?Sized>(arms: usize, rng: &mut R) -> Vec<S> {
    (0..arms).map(|_| S::lit(rng.random::<f64>())).collect()
}

/// A Byzantine agent's arm: uniform over all arms.
pub fn byzantine_arm_choice<R: Rng + ?Sized>(arms: usize, rng: &mut R) -> usize {
    rng.random_range(0..arms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::RewardFamily;
    use crate::topology::Topology;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn inst(means: &[f64]) -> BanditInstance<f64> {
        BanditInstance::new(means.to_vec(), RewardFamily::Gaussian { sigma: 0.01 }, true).unwrap()
    }

    const ROW: TargetedAttack = TargetedAttack { trigger: Trigger::Always, scope: Scope::Row };

    fn no_support(_: usize) -> Vec<usize> {
        Vec::new()
    }

    #[test]
    fn zero_budget_is_identity() {
        let i = inst(&[0.9, 0.2]);
        let m = RewardMatrix::from_rows(vec![vec![0.9, 0.2], vec![0.8, 0.1]]);
        let mut ledger = CorruptionLedger::new(0.0, &[0, 1], 2);
        let (out, charges) = targeted_attack(ROW, &i, &m, &mut ledger, no_support);
        assert_eq!(out, m);
        assert_eq!(charges, vec![0.0, 0.0]);
    }

    #[test]
    fn direct_charge() {
        let mut ledger = CorruptionLedger::new(5.0, &[0], 3);
        let mut row = vec![0.8, 0.3];
        let c = ledger.apply(&mut row, &[0.0, 0.3]);
        assert_eq!(c, 0.8);
        assert_eq!(ledger.spent(), 0.8);
        assert_eq!(row, vec![0.0, 0.3]);
    }

    #[test]
    fn targeted_rule_application() {
        let i = inst(&[0.9, 0.2]);
        let m = RewardMatrix::from_rows(vec![vec![0.899, 0.2]]);
        let mut ledger = CorruptionLedger::new(10.0, &[0], 1);
        let (out, charges) = targeted_attack(ROW, &i, &m, &mut ledger, no_support);
        assert_eq!(out.row(0), &[0.0, 0.2]);
        assert_eq!(charges[0], 0.899);
    }

    #[test]
    fn all_targets_is_identity() {
        let i = inst(&[0.5, 0.2, 0.4]);
        let m = RewardMatrix::from_rows(vec![vec![0.51, 0.2, 0.4]]);
        let mut ledger = CorruptionLedger::new(10.0, &[0], 1);
        let (out, _) = targeted_attack(ROW, &i, &m, &mut ledger, no_support);
        assert_eq!(out, m);
        assert_eq!(ledger.spent(), 0.0);
    }

    #[test]
    fn truncation_spends_exact_budget() {
        let i = inst(&[0.9, 0.2]);
        let m = RewardMatrix::from_rows(vec![vec![0.9, 0.2]]);
        let mut ledger = CorruptionLedger::new(0.4, &[0], 1);
        let (out, charges) = targeted_attack(ROW, &i, &m, &mut ledger, no_support);
        assert!((out.get(0, 0) - 0.5).abs() < 1e-12);
        assert!((charges[0] - 0.4).abs() < 1e-12);
        assert!(ledger.spent() <= 0.4);
        assert!(ledger.is_exhausted() || ledger.remaining() < 1e-12);
    }

    #[test]
    fn hand_trace_five_rounds() {
        // V=1, K=2, mu=(0.9, 0.3), C = 2.0; rewards fixed at 0.9/0.3 each round.
        let i = inst(&[0.9, 0.3]);
        let m = RewardMatrix::from_rows(vec![vec![0.9, 0.3]]);
        let mut ledger = CorruptionLedger::new(2.0, &[0], 1);
        let mut observed = Vec::new();
        for _ in 0..5 {
            let (out, c) = targeted_attack(ROW, &i, &m, &mut ledger, no_support);
            assert_eq!(out.get(0, 1), 0.3);
            observed.push((out.get(0, 0), c[0]));
        }
        // 0.9 + 0.9 = 1.8, then 0.2 left: 0.9 -> 0.7, then nothing.
        assert_eq!(observed[0], (0.0, 0.9));
        assert_eq!(observed[1], (0.0, 0.9));
        assert!((observed[2].0 - 0.7).abs() < 1e-12 && (observed[2].1 - 0.2).abs() < 1e-12);
        assert_eq!(observed[3], (0.9, 0.0));
        assert_eq!(observed[4], (0.9, 0.0));
        assert!(ledger.spent() <= 2.0 && ledger.spent() > 2.0 - 1e-12);
    }

    #[test]
    fn unattacked_agents_untouched() {
        let i = inst(&[0.9, 0.2]);
        let m = RewardMatrix::from_rows(vec![vec![0.9, 0.2], vec![0.9, 0.2]]);
        let mut ledger = CorruptionLedger::new(10.0, &[1], 2);
        let (out, charges) = targeted_attack(ROW, &i, &m, &mut ledger, no_support);
        assert_eq!(out.row(0), m.row(0));
        assert_eq!(out.row(1), &[0.0, 0.2]);
        assert_eq!(charges, corruption_charge(&m, &out));
    }

    #[test]
    fn reward_one_trigger() {
        let i = BanditInstance::<f64>::new(vec![0.9, 0.8, 0.2], RewardFamily::Bernoulli, true).unwrap();
        let m = RewardMatrix::from_rows(vec![vec![1.0, 0.0, 1.0]]);
        let attack = TargetedAttack { trigger: Trigger::RewardOne, scope: Scope::Row };
        let mut ledger = CorruptionLedger::new(10.0, &[0], 1);
        let (out, c) = targeted_attack(attack, &i, &m, &mut ledger, no_support);
        assert_eq!(out.row(0), &[0.0, 0.0, 1.0]);
        assert_eq!(c[0], 1.0);
    }

    #[test]
    fn support_scope_only_touches_pullable_arms() {
        let i = inst(&[0.9, 0.8, 0.2]);
        let m = RewardMatrix::from_rows(vec![vec![0.9, 0.8, 0.2]]);
        let attack = TargetedAttack { trigger: Trigger::Always, scope: Scope::Support };
        let mut ledger = CorruptionLedger::new(10.0, &[0], 1);
        let (out, c) = targeted_attack(attack, &i, &m, &mut ledger, |_| vec![1]);
        assert_eq!(out.row(0), &[0.9, 0.0, 0.2]);
        assert_eq!(c[0], 0.8);
        let (out, c) = targeted_attack(attack, &i, &m, &mut ledger, |_| vec![2]);
        assert_eq!(out, m);
        assert_eq!(c[0], 0.0);
    }

    #[test]
    fn ledger_monotone_and_bounded_random() {
        let i = inst(&[0.9, 0.7, 0.6, 0.3]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ledger = CorruptionLedger::new(3.3, &[0, 2], 3);
        let mut total = 0.0;
        let mut last = 0.0;
        for _ in 0..100 {
            let m = i.sample_rewards(&mut rng, 3);
            let (out, c) = targeted_attack(ROW, &i, &m, &mut ledger, no_support);
            assert_eq!(c, corruption_charge(&m, &out));
            for x in c {
                total += x;
            }
            assert!(ledger.spent() >= last);
            assert!(ledger.spent() <= ledger.budget());
            last = ledger.spent();
        }
        assert_eq!(total, ledger.spent());
    }

    fn forger(attack: ByzantineAttack, biases: Vec<Vec<f64>>) -> (ByzantineForger<f64>, EpochMessage<f64>) {
        let t = Topology::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let stats = t.neighborhood_stats(1);
        let i = inst(&[0.9, 0.3]);
        let f = ByzantineForger::new(attack, &i, biases, 10.0, Tolerance::one_third(), &stats);
        let honest = f.honest_message(1, 0, 2, 1);
        (f, honest)
    }

    #[test]
    fn adaptive_mirrors_means() {
        let (f, honest) = forger(ByzantineAttack::Adaptive, vec![]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let msg = f.forge(&honest, 0, &mut rng);
        let avg = msg.sums[0] / msg.counts[0];
        assert!((avg - 0.1).abs() < 1e-12);
        assert!((msg.sums[1] / msg.counts[1] - 0.7).abs() < 1e-12);
        // cap = 10 * 4 / ((1/3) * 2)
        assert!((msg.counts[0] - 60.0).abs() < 1e-9);
    }

    #[test]
    fn gaussian_degenerate_is_honest() {
        let attack = ByzantineAttack::Gaussian { scale: 0.0, noise: NoiseParam::Variance };
        let (f, honest) = forger(attack, vec![vec![], vec![0.0, 0.0], vec![]]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(f.forge(&honest, 2, &mut rng), honest);
    }

    #[test]
    fn gaussian_bias_mean() {
        let (f, honest) = forger(ByzantineAttack::gaussian(), vec![vec![], vec![0.5, 0.5], vec![]]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let base = honest.sums[0] / honest.counts[0];
        let mut sum = 0.0;
        for _ in 0..n {
            let m = f.forge(&honest, 0, &mut rng);
            sum += m.sums[0] / m.counts[0] - base;
        }
        assert!((sum / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn gaussian_differs_per_recipient() {
        let (f, honest) = forger(ByzantineAttack::gaussian(), vec![vec![], vec![0.5, 0.5], vec![]]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = f.forge(&honest, 0, &mut rng);
        let b = f.forge(&honest, 2, &mut rng);
        assert_ne!(a.sums, b.sums);
    }

    #[test]
    fn arm_choice_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!((0..100).all(|_| byzantine_arm_choice(1, &mut rng) == 0));
        let mut counts = [0usize; 10];
        let n = 100_000;
        for _ in 0..n {
            counts[byzantine_arm_choice(10, &mut rng)] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.1).abs() < 0.01);
        }
    }

    #[test]
    fn exposure_check() {
        let ring = Topology::from_edges(6, (0..6).map(|i| (i, (i + 1) % 6))).unwrap();
        let stats = ring.neighborhood_stats(1);
        assert!(overexposed_agents(&[0], Tolerance::one_third(), &stats).is_empty());
        // node 1 sees both 0 and 2
        assert_eq!(overexposed_agents(&[0, 2], Tolerance::one_third(), &stats), vec![1]);
    }
}
