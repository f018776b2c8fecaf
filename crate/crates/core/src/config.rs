//! Experiment configuration: TOML schema, defaults and validation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversary::{overexposed_agents, NoiseParam, Scope, Trigger};
use crate::baselines::UCB_COEF;
use crate::demabar::LambdaRule;
use crate::environment::InstanceSpec;
use crate::rng::{stream, Role, StreamKey};
use crate::scalar::Tolerance;
use crate::topology::{build_graph, GraphSpec, Topology};

/// A rejected config, naming the offending field.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("cannot parse config: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmName {
    Demabar,
    IndBarbar,
    IndUcb,
    // Plugin slots without an implementation.
    Draa,
    MaBarbat,
    ResilientUcb,
    IndFtrl,
}

impl AlgorithmName {
    pub fn is_implemented(self) -> bool {
        matches!(self, AlgorithmName::Demabar | AlgorithmName::IndBarbar | AlgorithmName::IndUcb)
    }

    /// True for the epoch-based learners that reject rewards outside [0, 1].
    pub fn needs_unit_rewards(self) -> bool {
        matches!(self, AlgorithmName::Demabar | AlgorithmName::IndBarbar)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub name: AlgorithmName,
    #[serde(default)]
    pub alpha: Tolerance,
    /// Collaboration distance.
    #[serde(default = "default_w")]
    pub w: u32,
    #[serde(default = "default_lambda")]
    pub lambda: LambdaRule,
    #[serde(default = "default_ucb_coef")]
    pub ucb_coef: f64,
}

fn default_w() -> u32 {
    1
}

fn default_lambda() -> LambdaRule {
    LambdaRule::EXPERIMENT
}

fn default_ucb_coef() -> f64 {
    UCB_COEF
}

impl AlgorithmSpec {
    pub fn named(name: AlgorithmName) -> Self {
        AlgorithmSpec {
            name,
            alpha: Tolerance::default(),
            w: default_w(),
            lambda: default_lambda(),
            ucb_coef: default_ucb_coef(),
        }
    }
}

impl Default for AlgorithmSpec {
    fn default() -> Self {
        AlgorithmSpec::named(AlgorithmName::Demabar)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionAttack {
    #[default]
    Targeted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ByzantineKind {
    Adaptive,
    Gaussian,
}

/// Who the adversary is and what it does.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ThreatModel {
    #[default]
    None,
    Corruption {
        /// Total corruption budget C.
        budget: f64,
        /// Attacked agents; every agent when both this and `fraction` are absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        agents: Option<Vec<usize>>,
        /// Attack the first `round(fraction * V)` agents instead of a list.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fraction: Option<f64>,
        #[serde(default)]
        attack: CorruptionAttack,
        #[serde(default)]
        trigger: Trigger,
        #[serde(default)]
        scope: Scope,
    },
    Byzantine {
        agents: Vec<usize>,
        attack: ByzantineKind,
        #[serde(default = "default_noise_scale")]
        noise_scale: f64,
        #[serde(default)]
        noise: NoiseParam,
        /// Per-agent per-arm biases of the Gaussian attack; drawn U(0, 1) when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        biases: Option<Vec<Vec<f64>>>,
    },
}

fn default_noise_scale() -> f64 {
    0.001
}

impl ThreatModel {
    pub fn corruption(budget: f64, agents: Option<Vec<usize>>) -> Self {
        ThreatModel::Corruption {
            budget,
            agents,
            fraction: None,
            attack: CorruptionAttack::Targeted,
            trigger: Trigger::default(),
            scope: Scope::default(),
        }
    }

    pub fn byzantine(agents: Vec<usize>, attack: ByzantineKind) -> Self {
        ThreatModel::Byzantine {
            agents,
            attack,
            noise_scale: default_noise_scale(),
            noise: NoiseParam::default(),
            biases: None,
        }
    }

    /// Attacked agents of a corruption threat for a network of `agents` nodes.
    pub fn corrupted_agents(&self, agents: usize) -> Vec<usize> {
        match self {
            ThreatModel::Corruption { agents: Some(list), .. } => list.clone(),
            ThreatModel::Corruption { fraction: Some(f), .. } => (0..(f * agents as f64).round() as usize).collect(),
            ThreatModel::Corruption { .. } => (0..agents).collect(),
            _ => Vec::new(),
        }
    }

    pub fn byzantine_agents(&self) -> &[usize] {
        match self {
            ThreatModel::Byzantine { agents, .. } => agents,
            _ => &[],
        }
    }
}

/// One experiment: graph, instance, algorithm, threat, horizon and seeding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Horizon T, communication rounds included.
    pub horizon: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    pub topology: GraphSpec,
    pub instance: InstanceSpec,
    #[serde(default)]
    pub algorithm: AlgorithmSpec,
    #[serde(default)]
    pub threat: ThreatModel,
}

fn default_trials() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(topology: GraphSpec, instance: InstanceSpec, horizon: u64) -> Self {
        ExperimentConfig {
            horizon,
            trials: 1,
            seed: 0,
            topology,
            instance,
            algorithm: AlgorithmSpec::default(),
            threat: ThreatModel::None,
        }
    }

    pub fn agent_count(&self) -> usize {
        self.topology.node_count()
    }

    pub fn lambda(&self) -> f64 {
        self.algorithm.lambda.value(self.agent_count(), self.horizon)
    }

    /// Builds the trial's graph. Random generators use the trial's topology stream.
    pub fn build_topology(&self, trial: u64) -> Result<Topology, ConfigError> {
        let mut rng = stream(self.seed, StreamKey { trial, role: Role::Topology });
        build_graph(&self.topology, &mut rng).map_err(|e| invalid("topology", e.to_string()))
    }

    /// Checks ranges and cross-field consistency.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.horizon == 0 {
            return Err(invalid("horizon", "must be at least 1"));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        let topology = self.build_topology(0)?;
        let v = topology.node_count();
        self.instance.validate().map_err(|e| invalid("instance", e.to_string()))?;

        let alg = &self.algorithm;
        if !alg.name.is_implemented() {
            return Err(invalid("algorithm.name", format!("{:?} is a plugin slot with no implementation", alg.name)));
        }
        if alg.w > topology.diameter() {
            return Err(invalid(
                "algorithm.w",
                format!("{} exceeds the graph diameter {}", alg.w, topology.diameter()),
            ));
        }
        let lambda = self.lambda();
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(invalid("algorithm.lambda", format!("must be positive, got {lambda}")));
        }
        if !alg.ucb_coef.is_finite() || alg.ucb_coef < 0.0 {
            return Err(invalid("algorithm.ucb_coef", "must be finite and non-negative"));
        }
        if !self.instance.clip && alg.name.needs_unit_rewards() {
            return Err(invalid("instance.clip", "unclipped rewards are only supported by ind-ucb"));
        }

        match &self.threat {
            ThreatModel::None => {}
            ThreatModel::Corruption { budget, agents, fraction, .. } => {
                if !budget.is_finite() || *budget < 0.0 {
                    return Err(invalid("threat.budget", "must be finite and non-negative"));
                }
                if agents.is_some() && fraction.is_some() {
                    return Err(invalid("threat.agents", "give either agents or fraction, not both"));
                }
                if let Some(list) = agents {
                    check_agent_list("threat.agents", list, v)?;
                }
                if let Some(f) = fraction {
                    if !(0.0..=1.0).contains(f) {
                        return Err(invalid("threat.fraction", "must lie in [0, 1]"));
                    }
                }
            }
            ThreatModel::Byzantine { agents, noise_scale, biases, attack, .. } => {
                if alg.w != 1 {
                    return Err(invalid("algorithm.w", "byzantine threat requires w = 1"));
                }
                check_agent_list("threat.agents", agents, v)?;
                if agents.len() >= v {
                    return Err(invalid("threat.agents", "at least one agent must be normal"));
                }
                if !noise_scale.is_finite() || *noise_scale < 0.0 {
                    return Err(invalid("threat.noise_scale", "must be finite and non-negative"));
                }
                if let Some(b) = biases {
                    if *attack != ByzantineKind::Gaussian {
                        return Err(invalid("threat.biases", "only used by the gaussian attack"));
                    }
                    if b.len() != agents.len() || b.iter().any(|row| row.len() != self.instance.arms) {
                        return Err(invalid("threat.biases", "need one row of K biases per byzantine agent"));
                    }
                }
                if alg.name == AlgorithmName::Demabar {
                    let exposed = overexposed_agents(agents, alg.alpha, &topology.neighborhood_stats(1));
                    if !exposed.is_empty() {
                        log::warn!("agents {exposed:?} have more than alpha byzantine neighbours");
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }
}

fn check_agent_list(field: &str, list: &[usize], v: usize) -> Result<(), ConfigError> {
    let mut seen = vec![false; v];
    for &a in list {
        if a >= v {
            return Err(invalid(field, format!("agent {a} out of range for {v} agents")));
        }
        if std::mem::replace(&mut seen[a], true) {
            return Err(invalid(field, format!("agent {a} listed twice")));
        }
    }
    Ok(())
}

/// Parses and validates a config string.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig = toml::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
horizon = 1000
seed = 7

[topology]
kind = "complete"
nodes = 4

[instance]
arms = 3

[algorithm]
name = "demabar"
"#;

    fn field_of(err: ConfigError) -> String {
        match err {
            ConfigError::Invalid { field, .. } => field,
            other => panic!("expected a field error, got {other}"),
        }
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config_str(MINIMAL).unwrap();
        assert_eq!(cfg.trials, 1);
        assert_eq!(cfg.algorithm.alpha, Tolerance::one_third());
        assert_eq!(cfg.algorithm.w, 1);
        assert_eq!(cfg.algorithm.lambda, LambdaRule::EXPERIMENT);
        assert_eq!(cfg.threat, ThreatModel::None);
        assert_eq!(cfg.instance.sigma, 0.01);
        assert!(cfg.instance.clip);
    }

    #[test]
    fn round_trip() {
        let mut cfg = parse_config_str(MINIMAL).unwrap();
        cfg.threat = ThreatModel::corruption(12.5, Some(vec![0, 2]));
        cfg.algorithm.lambda = LambdaRule::Fixed(33.25);
        let back = parse_config_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);

        cfg.threat = ThreatModel::Byzantine {
            agents: vec![1],
            attack: ByzantineKind::Gaussian,
            noise_scale: 0.002,
            noise: NoiseParam::Std,
            biases: Some(vec![vec![0.1, 0.2, 0.3]]),
        };
        cfg.topology = GraphSpec::Edges { nodes: 4, edges: vec![(0, 1), (1, 2), (2, 3), (3, 0)] };
        let back = parse_config_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn alpha_half_rejected() {
        let text = MINIMAL.replace("name = \"demabar\"", "name = \"demabar\"\nalpha = 0.5");
        assert!(matches!(toml::from_str::<ExperimentConfig>(&text), Err(_)));
        let text = MINIMAL.replace("name = \"demabar\"", "name = \"demabar\"\nalpha = \"1/2\"");
        let err = parse_config_str(&text).unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");
    }

    #[test]
    fn byzantine_needs_w_one() {
        let text = r#"
horizon = 100
[topology]
kind = "path"
nodes = 5
[instance]
arms = 2
[algorithm]
name = "demabar"
w = 2
[threat]
model = "byzantine"
agents = [0]
attack = "adaptive"
"#;
        assert_eq!(field_of(parse_config_str(text).unwrap_err()), "algorithm.w");
        assert!(parse_config_str(&text.replace("w = 2", "w = 1")).is_ok());
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = MINIMAL.replace("seed = 7", "seed = 7\nbogus = 1");
        let err = parse_config_str(&text).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let text = MINIMAL.replace("arms = 3", "arms = 3\nwidth = 2");
        assert!(parse_config_str(&text).unwrap_err().to_string().contains("width"));
    }

    #[test]
    fn range_errors_name_the_field() {
        let cases = [
            (MINIMAL.replace("horizon = 1000", "horizon = 0"), "horizon"),
            (MINIMAL.replace("seed = 7", "seed = 7\ntrials = 0"), "trials"),
            (MINIMAL.replace("name = \"demabar\"", "name = \"demabar\"\nw = 2"), "algorithm.w"),
            (MINIMAL.replace("name = \"demabar\"", "name = \"draa\""), "algorithm.name"),
            (MINIMAL.replace("arms = 3", "arms = 3\nclip = false"), "instance.clip"),
            (MINIMAL.replace("arms = 3", "arms = 1"), "instance"),
            (MINIMAL.replace("nodes = 4", "nodes = 0"), "topology"),
            (format!("{MINIMAL}\n[threat]\nmodel = \"corruption\"\nbudget = -1.0\n"), "threat.budget"),
            (format!("{MINIMAL}\n[threat]\nmodel = \"corruption\"\nbudget = 1.0\nagents = [9]\n"), "threat.agents"),
            (
                format!("{MINIMAL}\n[threat]\nmodel = \"byzantine\"\nagents = [0, 1, 2, 3]\nattack = \"adaptive\"\n"),
                "threat.agents",
            ),
        ];
        for (text, field) in cases {
            assert_eq!(field_of(parse_config_str(&text).unwrap_err()), field, "{text}");
        }
    }

    #[test]
    fn negative_w_is_a_parse_error() {
        let text = MINIMAL.replace("name = \"demabar\"", "name = \"demabar\"\nw = -1");
        assert!(matches!(parse_config_str(&text), Err(ConfigError::Syntax(_))));
    }

    #[test]
    fn clip_off_allowed_for_ucb() {
        let text = MINIMAL.replace("arms = 3", "arms = 3\nclip = false").replace("\"demabar\"", "\"ind-ucb\"");
        assert!(parse_config_str(&text).is_ok());
    }

    #[test]
    fn corrupted_agent_selection() {
        assert_eq!(ThreatModel::corruption(1.0, None).corrupted_agents(3), vec![0, 1, 2]);
        assert_eq!(ThreatModel::corruption(1.0, Some(vec![2])).corrupted_agents(3), vec![2]);
        let frac = ThreatModel::Corruption {
            budget: 1.0,
            agents: None,
            fraction: Some(0.3),
            attack: CorruptionAttack::Targeted,
            trigger: Trigger::Always,
            scope: Scope::Row,
        };
        assert_eq!(frac.corrupted_agents(10), vec![0, 1, 2]);
    }
}
