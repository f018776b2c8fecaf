//! Round-synchronous trial execution and multi-trial orchestration.
//!
//! Every round runs the same phases in order: the environment draws a V×K
//! reward matrix, the corruption adversary edits it, every agent pulls, and
//! normal agents observe their (possibly corrupted) reward. DeMABAR epochs
//! end with `w` communication rounds in which agents pull their fallback arm
//! and flood messages one hop per round; the filter and gap update run once
//! the last hop has been delivered. Communication rounds count against the
//! horizon.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adversary::{
    byzantine_arm_choice, draw_biases, targeted_attack, ByzantineAttack, ByzantineForger, CorruptionLedger,
    TargetedAttack,
};
use crate::baselines::{Baseline, UcbState};
use crate::config::{AlgorithmName, ByzantineKind, ConfigError, ExperimentConfig, ThreatModel};
use crate::demabar::{DemabarAgent, DemabarError, DemabarParams, EpochMessage, EpochSchedule, Mailboxes};
use crate::environment::{sample_instance, BanditInstance, EnvironmentError, RewardMatrix};
use crate::metrics::{aggregate, average_curve, comm_cost_curve, regret_curve, RegretCurve};
use crate::rng::{stream, Role, StreamKey};
use crate::scalar::Scalar;
use crate::topology::{NeighborhoodStats, Topology};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("instance: {0}")]
    Environment(#[from] EnvironmentError),
    #[error("agent {agent}: {source}")]
    Agent { agent: usize, source: DemabarError },
    #[error("agent_order must be a permutation of 0..{0}")]
    BadOrder(usize),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Gap estimates produced at the end of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord<S> {
    pub epoch: u32,
    pub start: u64,
    /// Last round of the epoch, communication included.
    pub end: u64,
    /// Whether the filter step ran within the horizon.
    pub completed: bool,
    /// `gaps[i][k]`: agent `i`'s estimate after the update; empty for Byzantine agents.
    pub gaps: Vec<Vec<S>>,
    pub fallback: Vec<Option<usize>>,
    pub filter_resets: u64,
}

/// Everything that happened in one trial.
///
/// Per-round per-agent entries are stored round-major: `(t - 1) * agents + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog<S> {
    pub agents: usize,
    pub horizon: u64,
    pub normal: Vec<bool>,
    pub means: Vec<S>,
    pub gaps: Vec<S>,
    pub pulls: Vec<u32>,
    pub observed: Vec<S>,
    /// Corruption charge `max_k |corrupted - clean|` per agent and round.
    pub corruption: Vec<S>,
    /// Broadcast events per round.
    pub broadcasts: Vec<u32>,
    pub epochs: Vec<EpochRecord<S>>,
    pub corruption_spent: S,
    /// Invariant violations found while running; empty on a healthy run.
    pub violations: Vec<String>,
}

impl<S: Scalar> RoundLog<S> {
    fn new(agents: usize, horizon: u64, normal: Vec<bool>, instance: &BanditInstance<S>) -> Self {
        let cells = agents * horizon as usize;
        RoundLog {
            agents,
            horizon,
            normal,
            means: instance.means().to_vec(),
            gaps: instance.gaps().to_vec(),
            pulls: vec![0; cells],
            observed: vec![S::zero(); cells],
            corruption: vec![S::zero(); cells],
            broadcasts: vec![0; horizon as usize],
            epochs: Vec::new(),
            corruption_spent: S::zero(),
            violations: Vec::new(),
        }
    }

    fn idx(&self, t: u64, i: usize) -> usize {
        debug_assert!(t >= 1 && t <= self.horizon);
        (t as usize - 1) * self.agents + i
    }

    pub fn pull(&self, t: u64, i: usize) -> usize {
        self.pulls[self.idx(t, i)] as usize
    }

    pub fn mean_of_pull(&self, t: u64, i: usize) -> S {
        self.means[self.pull(t, i)]
    }

    pub fn observed(&self, t: u64, i: usize) -> S {
        self.observed[self.idx(t, i)]
    }

    pub fn corruption(&self, t: u64, i: usize) -> S {
        self.corruption[self.idx(t, i)]
    }

    pub fn normal_agents(&self) -> Vec<usize> {
        (0..self.agents).filter(|&i| self.normal[i]).collect()
    }

    pub fn completed_epochs(&self) -> usize {
        self.epochs.iter().filter(|e| e.completed).count()
    }

    pub fn filter_resets(&self) -> u64 {
        self.epochs.iter().map(|e| e.filter_resets).sum()
    }
}

/// Knobs that must not change a trial's outcome.
#[derive(Debug, Clone, Default)]
pub struct TrialOptions {
    /// Order in which agents are visited within each phase.
    pub agent_order: Option<Vec<usize>>,
}

/// Validates `cfg` and runs trial `trial`.
pub fn run_trial<S: Scalar>(cfg: &ExperimentConfig, trial: u64) -> Result<RoundLog<S>, EngineError> {
    run_trial_with(cfg, trial, &TrialOptions::default())
}

pub fn run_trial_with<S: Scalar>(
    cfg: &ExperimentConfig,
    trial: u64,
    opts: &TrialOptions,
) -> Result<RoundLog<S>, EngineError> {
    cfg.validate()?;
    execute(cfg, trial, opts)
}

fn execute<S: Scalar>(cfg: &ExperimentConfig, trial: u64, opts: &TrialOptions) -> Result<RoundLog<S>, EngineError> {
    let rng = |role| stream(cfg.seed, StreamKey { trial, role });
    let topology = cfg.build_topology(trial)?;
    let v = topology.node_count();
    let instance: BanditInstance<S> = sample_instance(&cfg.instance, &mut rng(Role::Instance))?;

    let mut normal = vec![true; v];
    for &j in cfg.threat.byzantine_agents() {
        normal[j] = false;
    }
    let order = match &opts.agent_order {
        Some(order) => {
            let mut sorted = order.clone();
            sorted.sort_unstable();
            if sorted != (0..v).collect::<Vec<_>>() {
                return Err(EngineError::BadOrder(v));
            }
            order.clone()
        }
        None => (0..v).collect(),
    };

    let attack = match &cfg.threat {
        ThreatModel::Corruption { budget, trigger, scope, .. } => Some((
            TargetedAttack { trigger: *trigger, scope: *scope },
            CorruptionLedger::new(S::lit(*budget), &cfg.threat.corrupted_agents(v), v),
        )),
        _ => None,
    };

    let mut world = World {
        log: RoundLog::new(v, cfg.horizon, normal.clone(), &instance),
        instance,
        normal,
        order,
        env_rng: rng(Role::Environment),
        agent_rng: (0..v).map(|i| rng(Role::Agent(i as u32))).collect(),
        byz_rng: (0..v).map(|i| rng(Role::Byzantine(i as u32))).collect(),
        attack,
    };

    let lambda = S::lit(cfg.lambda());
    match cfg.algorithm.name {
        AlgorithmName::Demabar => {
            let params = DemabarParams::new(cfg.algorithm.alpha, cfg.algorithm.w, lambda);
            let stats = topology.neighborhood_stats(cfg.algorithm.w);
            let forger = byzantine_forger(cfg, &world, lambda, &topology, trial);
            run_epochs(&mut world, &topology, params, &stats, forger.as_ref())?;
        }
        AlgorithmName::IndBarbar => {
            run_epochs(&mut world, &topology, DemabarParams::solo(lambda), &NeighborhoodStats::solo(v), None)?;
        }
        AlgorithmName::IndUcb => {
            let coef = S::lit(cfg.algorithm.ucb_coef);
            let learners: Vec<Option<Box<dyn Baseline<S>>>> = (0..v)
                .map(|i| {
                    world.normal[i].then(|| Box::new(UcbState::new(world.instance.arm_count(), coef)) as Box<dyn Baseline<S>>)
                })
                .collect();
            run_independent(&mut world, learners);
        }
        other => unreachable!("{other:?} rejected by validation"),
    }

    let mut log = world.log;
    if let Some((_, ledger)) = &world.attack {
        log.corruption_spent = ledger.spent();
    }
    Ok(log)
}

fn byzantine_forger<S: Scalar>(
    cfg: &ExperimentConfig,
    world: &World<S>,
    lambda: S,
    topology: &Topology,
    trial: u64,
) -> Option<ByzantineForger<S>> {
    let ThreatModel::Byzantine { agents, attack, noise_scale, noise, biases } = &cfg.threat else {
        return None;
    };
    let arms = world.instance.arm_count();
    let attack = match attack {
        ByzantineKind::Adaptive => ByzantineAttack::Adaptive,
        ByzantineKind::Gaussian => ByzantineAttack::Gaussian { scale: *noise_scale, noise: *noise },
    };
    let mut rng = stream(cfg.seed, StreamKey { trial, role: Role::Adversary });
    let mut rows = vec![Vec::new(); world.log.agents];
    for (n, &j) in agents.iter().enumerate() {
        rows[j] = match biases {
            Some(b) => b[n].iter().map(|&x| S::lit(x)).collect(),
            None => draw_biases(arms, &mut rng),
        };
    }
    let stats = topology.neighborhood_stats(1);
    Some(ByzantineForger::new(attack, &world.instance, rows, lambda, cfg.algorithm.alpha, &stats))
}

struct World<S> {
    instance: BanditInstance<S>,
    normal: Vec<bool>,
    order: Vec<usize>,
    env_rng: ChaCha8Rng,
    agent_rng: Vec<ChaCha8Rng>,
    byz_rng: Vec<ChaCha8Rng>,
    attack: Option<(TargetedAttack, CorruptionLedger<S>)>,
    log: RoundLog<S>,
}

impl<S: Scalar> World<S> {
    /// Environment and adversary phases. `support(i)` is queried only when
    /// the attack is restricted to pullable arms.
    fn rewards(&mut self, support: impl FnMut(usize) -> Vec<usize>) -> (RewardMatrix<S>, Vec<S>) {
        let v = self.log.agents;
        let clean = self.instance.sample_rewards(&mut self.env_rng, v);
        match &mut self.attack {
            Some((attack, ledger)) => {
                let out = targeted_attack(*attack, &self.instance, &clean, ledger, support);
                if ledger.spent() > ledger.budget() {
                    self.log.violations.push(format!("corruption budget overrun: {}", ledger.spent()));
                }
                out
            }
            None => (clean, vec![S::zero(); v]),
        }
    }

    /// Pull and observation phases. Returns `(agent, arm, reward)` for every
    /// normal agent.
    fn pull(
        &mut self,
        t: u64,
        rewards: &RewardMatrix<S>,
        charges: &[S],
        mut choose: impl FnMut(usize, &mut ChaCha8Rng) -> usize,
    ) -> Vec<(usize, usize, S)> {
        let arms = self.instance.arm_count();
        let mut out = Vec::with_capacity(self.order.len());
        for &i in &self.order {
            let arm = if self.normal[i] {
                choose(i, &mut self.agent_rng[i])
            } else {
                byzantine_arm_choice(arms, &mut self.byz_rng[i])
            };
            let idx = self.log.idx(t, i);
            let r = rewards.get(i, arm);
            self.log.pulls[idx] = arm as u32;
            self.log.observed[idx] = r;
            self.log.corruption[idx] = charges[i];
            if self.normal[i] {
                out.push((i, arm, r));
            }
        }
        out
    }
}

fn run_epochs<S: Scalar>(
    world: &mut World<S>,
    topology: &Topology,
    params: DemabarParams<S>,
    stats: &NeighborhoodStats,
    forger: Option<&ByzantineForger<S>>,
) -> Result<(), EngineError> {
    let v = world.log.agents;
    let horizon = world.log.horizon;
    let arms = world.instance.arm_count();
    let w = params.w;
    let schedule = EpochSchedule::new(params, arms, stats);
    let mut agents: Vec<Option<DemabarAgent<S>>> = (0..v)
        .map(|i| world.normal[i].then(|| DemabarAgent::new(i, arms, params, stats)))
        .collect();
    let mut mailboxes = Mailboxes::new(v);
    let order = world.order.clone();

    let mut t = 1u64;
    let mut m = 0u32;
    while t <= horizon {
        m += 1;
        let length = schedule.length(m);
        let start = t;
        for &i in &order {
            let Some(a) = agents[i].as_mut() else { continue };
            a.begin_epoch(m).map_err(|source| EngineError::Agent { agent: i, source })?;
            if let Err(e) = a.check_plan() {
                world.log.violations.push(format!("agent {i} epoch {m}: {e:?}"));
            }
            if a.epoch_length() != length || a.epoch() != m {
                world.log.violations.push(format!("agent {i} out of sync in epoch {m}"));
            }
        }
        let mut record = EpochRecord {
            epoch: m,
            start,
            end: start + length + u64::from(w) - 1,
            completed: false,
            gaps: Vec::new(),
            fallback: agents.iter().map(|a| a.as_ref().map(|a| a.fallback_arm())).collect(),
            filter_resets: 0,
        };

        let explore_end = (start + length - 1).min(horizon);
        while t <= explore_end {
            let scope = |i: usize| agents[i].as_ref().map_or_else(Vec::new, |a| a.support().collect());
            let (rewards, charges) = world.rewards(scope);
            let pulls = world.pull(t, &rewards, &charges, |i, rng| {
                agents[i].as_ref().expect("normal agent").sample_arm(rng)
            });
            for (i, arm, r) in pulls {
                agents[i]
                    .as_mut()
                    .expect("normal agent")
                    .record_observation(arm, r)
                    .map_err(|source| EngineError::Agent { agent: i, source })?;
            }
            t += 1;
        }

        if t <= horizon && w > 0 {
            let own: Vec<EpochMessage<S>> = (0..v)
                .map(|j| match (&agents[j], forger) {
                    (Some(a), _) => a.make_message(),
                    (None, Some(f)) => f.honest_message(j, j, m, w),
                    (None, None) => unreachable!("byzantine agents always have a forger"),
                })
                .collect();
            mailboxes.start(&own);
            for _ in 0..w {
                if t > horizon {
                    break;
                }
                let fallback = |i: usize| agents[i].as_ref().map_or_else(Vec::new, |a| vec![a.fallback_arm()]);
                let (rewards, charges) = world.rewards(fallback);
                // Rewards of communication rounds are not recorded.
                world.pull(t, &rewards, &charges, |i, _| agents[i].as_ref().expect("normal agent").fallback_arm());
                let normal = &world.normal;
                let byz_rng = &mut world.byz_rng;
                let sent = mailboxes.relay_round(topology, &own, |sender, recipient, msg| match forger {
                    Some(f) if !normal[sender] && msg.origin == sender => {
                        let honest = f.honest_message(sender, recipient, m, msg.hops_remaining);
                        f.forge(&honest, recipient, &mut byz_rng[sender])
                    }
                    _ => msg.clone(),
                });
                world.log.broadcasts[t as usize - 1] = sent as u32;
                t += 1;
            }
        }

        if record.end <= horizon {
            record.completed = true;
            record.gaps = vec![Vec::new(); v];
            for &i in &order {
                let Some(a) = agents[i].as_mut() else { continue };
                let estimates = if w > 0 { a.finish_epoch(mailboxes.inbox(i)) } else { a.finish_epoch([]) };
                record.filter_resets += estimates.iter().filter(|e| e.reset).count() as u64;
                record.gaps[i] = a.gaps().to_vec();
            }
        }
        world.log.epochs.push(record);
    }
    Ok(())
}

fn run_independent<S: Scalar>(world: &mut World<S>, mut learners: Vec<Option<Box<dyn Baseline<S>>>>) {
    for t in 1..=world.log.horizon {
        let (rewards, charges) =
            world.rewards(|i| learners[i].as_ref().map_or_else(Vec::new, |l| l.support(t)));
        let pulls = world.pull(t, &rewards, &charges, |i, rng| {
            learners[i].as_mut().expect("normal agent").select_arm(t, rng)
        });
        for (i, arm, r) in pulls {
            learners[i].as_mut().expect("normal agent").observe(arm, r);
        }
    }
}

/// Compact per-trial outcome kept by [`run_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary<S> {
    pub trial: u64,
    /// Cumulative pseudo-regret per round, `None` for Byzantine agents.
    pub agent_curves: Vec<Option<Vec<S>>>,
    /// Mean over normal agents of `agent_curves`.
    pub average: Vec<S>,
    /// Cumulative broadcasts per round.
    pub comm: Vec<u64>,
    pub gaps: Vec<S>,
    pub epochs: Vec<EpochRecord<S>>,
    pub corruption_spent: S,
    pub violations: Vec<String>,
}

impl<S: Scalar> TrialSummary<S> {
    pub fn from_log(trial: u64, log: RoundLog<S>) -> Self {
        let agent_curves: Vec<Option<Vec<S>>> =
            (0..log.agents).map(|i| log.normal[i].then(|| regret_curve(&log, i))).collect();
        let normal: Vec<&[S]> = agent_curves.iter().flatten().map(|c| c.as_slice()).collect();
        let average = average_curve(&normal);
        TrialSummary {
            trial,
            average,
            comm: comm_cost_curve(&log),
            agent_curves,
            gaps: log.gaps,
            epochs: log.epochs,
            corruption_spent: log.corruption_spent,
            violations: log.violations,
        }
    }

    pub fn completed_epochs(&self) -> usize {
        self.epochs.iter().filter(|e| e.completed).count()
    }

    pub fn filter_resets(&self) -> u64 {
        self.epochs.iter().map(|e| e.filter_resets).sum()
    }
}

/// All trials of one config plus their aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult<S> {
    pub trials: Vec<TrialSummary<S>>,
    /// Across-trial statistics of the all-agent average curve.
    pub average: RegretCurve<S>,
    /// Across-trial statistics per agent; `None` for Byzantine agents.
    pub per_agent: Vec<Option<RegretCurve<S>>>,
    /// Mean cumulative communication cost per round.
    pub comm: Vec<S>,
}

impl<S: Scalar> ExperimentResult<S> {
    pub fn horizon(&self) -> usize {
        self.average.mean.len()
    }

    pub fn final_mean(&self) -> S {
        *self.average.mean.last().expect("horizon >= 1")
    }
}

/// Runs every trial of `cfg`, on `jobs` threads (all cores when `None`).
/// Results do not depend on `jobs`.
pub fn run_experiment<S: Scalar>(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<ExperimentResult<S>, EngineError> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| EngineError::ThreadPool(e.to_string()))?;
    let opts = TrialOptions::default();
    let trials: Vec<TrialSummary<S>> = pool.install(|| {
        (0..cfg.trials as u64)
            .into_par_iter()
            .map(|trial| execute(cfg, trial, &opts).map(|log| TrialSummary::from_log(trial, log)))
            .collect::<Result<_, _>>()
    })?;
    for t in &trials {
        if !t.violations.is_empty() {
            log::warn!("trial {}: {} invariant violations", t.trial, t.violations.len());
        }
    }
    Ok(summarize(trials))
}

/// Aggregates per-trial summaries.
pub fn summarize<S: Scalar>(trials: Vec<TrialSummary<S>>) -> ExperimentResult<S> {
    assert!(!trials.is_empty(), "need at least one trial");
    let averages: Vec<Vec<S>> = trials.iter().map(|t| t.average.clone()).collect();
    let agents = trials[0].agent_curves.len();
    let per_agent = (0..agents)
        .map(|i| {
            let curves: Option<Vec<Vec<S>>> = trials.iter().map(|t| t.agent_curves[i].clone()).collect();
            curves.map(|c| aggregate(&c))
        })
        .collect();
    let horizon = trials[0].comm.len();
    let n = S::lit(trials.len() as f64);
    let comm = (0..horizon)
        .map(|r| trials.iter().fold(S::zero(), |acc, t| acc + S::lit(t.comm[r] as f64)) / n)
        .collect();
    ExperimentResult { average: aggregate(&averages), per_agent, comm, trials }
}
