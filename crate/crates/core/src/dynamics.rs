//! Synchronous opinion dynamics with bots and distorted monitoring.
//!
//! Every agent reads the same pre-step layers. At time `t + 1` a regular agent
//! applies its rule to its own opinion at `t - 1` and to the perceived
//! opinions of its neighbors at `t`. The unobserved opinion at time `-1` is
//! taken to be the opinion at time `0`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError, GraphSpec, NodeId};
use crate::rule::{LocalRule, RuleError, UpdateRule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error("invalid initial distribution: {0}")]
    Initial(String),
    #[error("distortion parameter must be finite and non-negative, got {0}")]
    Distortion(f64),
    #[error("bot placed on node {node}, but the graph has {node_count} nodes")]
    BotOutOfRange { node: NodeId, node_count: usize },
    #[error("probe node {node} out of range for {node_count} nodes")]
    ProbeOutOfRange { node: NodeId, node_count: usize },
    #[error("horizon must be at least 1")]
    Horizon,
    #[error("limit detection needs tolerance >= 0 and window >= 1")]
    Detection,
}

/// Zero-mean private noise added to the state of the world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Noise {
    /// Uniform on `[-half_width, half_width]`.
    Uniform { half_width: f64 },
    /// `±half_width` with probability one half each.
    TwoPoint { half_width: f64 },
    Degenerate,
}

impl Noise {
    /// The bound `K` on `|x_i|`.
    pub fn bound(&self) -> f64 {
        match *self {
            Noise::Uniform { half_width } | Noise::TwoPoint { half_width } => half_width,
            Noise::Degenerate => 0.0,
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            Noise::Uniform { half_width } => rng.random_range(-half_width..=half_width),
            Noise::TwoPoint { half_width } => {
                if rng.random_bool(0.5) {
                    half_width
                } else {
                    -half_width
                }
            }
            Noise::Degenerate => 0.0,
        }
    }
}

/// `A_{i,0} = mu + x_i` with i.i.d. noise `x_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDistribution {
    pub mu: f64,
    pub noise: Noise,
    /// If set, every updated opinion is clamped into this range.
    #[serde(default)]
    pub clip_range: Option<(f64, f64)>,
}

impl InitialDistribution {
    pub fn validate(&self) -> Result<(), SimError> {
        let k = self.noise.bound();
        if !self.mu.is_finite() {
            return Err(SimError::Initial(format!("mu must be finite, got {}", self.mu)));
        }
        if !(k.is_finite() && (k > 0.0 || matches!(self.noise, Noise::Degenerate))) {
            return Err(SimError::Initial(format!("noise bound K must be positive, got {k}")));
        }
        if let Some((lo, hi)) = self.clip_range {
            if !(lo <= self.mu - k && self.mu + k <= hi) {
                return Err(SimError::Initial(format!(
                    "clip range [{lo}, {hi}] does not contain mu ± K = [{}, {}]",
                    self.mu - k,
                    self.mu + k
                )));
            }
        }
        Ok(())
    }

    /// Draws `n` initial opinions from `ChaCha8(seed)`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>, SimError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..n).map(|_| self.mu + self.noise.sample(&mut rng)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AgentRole {
    Regular,
    /// Holds the given opinion forever.
    Bot(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bot {
    pub node: NodeId,
    pub value: f64,
}

/// Expands a bot list into per-agent roles.
pub fn roles_from_bots(node_count: usize, bots: &[Bot]) -> Result<Vec<AgentRole>, SimError> {
    let mut roles = vec![AgentRole::Regular; node_count];
    for bot in bots {
        if bot.node >= node_count {
            return Err(SimError::BotOutOfRange {
                node: bot.node,
                node_count,
            });
        }
        roles[bot.node] = AgentRole::Bot(bot.value);
    }
    Ok(roles)
}

/// How agents misperceive their neighbors' opinions. Own opinions are always
/// seen exactly.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distortion {
    #[default]
    None,
    PlusBias { beta: f64 },
    MinusBias { beta: f64 },
    /// Independent uniform error on `[-beta, beta]` per (observer, neighbor, step).
    UniformNoise { beta: f64 },
    /// `±beta` with a random sign per (observer, neighbor, step), from its own seed.
    PerStepAdversarial { beta: f64, seed: u64 },
}

impl Distortion {
    pub fn beta(&self) -> f64 {
        match *self {
            Distortion::None => 0.0,
            Distortion::PlusBias { beta }
            | Distortion::MinusBias { beta }
            | Distortion::UniformNoise { beta }
            | Distortion::PerStepAdversarial { beta, .. } => beta,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let beta = self.beta();
        if beta.is_finite() && beta >= 0.0 {
            Ok(())
        } else {
            Err(SimError::Distortion(beta))
        }
    }

    /// Distorts `values` in place. Random kinds take exactly one `u64` from
    /// `rng` per value; `rng` must be the observer's stream for this step.
    pub fn perceive(&self, values: &mut [f64], rng: &mut impl RngCore) {
        match *self {
            Distortion::None => {}
            Distortion::PlusBias { beta } => values.iter_mut().for_each(|v| *v += beta),
            Distortion::MinusBias { beta } => values.iter_mut().for_each(|v| *v -= beta),
            Distortion::UniformNoise { beta } => values.iter_mut().for_each(|v| {
                // 53 random bits mapped onto [-beta, beta)
                let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                *v += beta * (2.0 * u - 1.0);
            }),
            Distortion::PerStepAdversarial { beta, .. } => values.iter_mut().for_each(|v| {
                if rng.next_u64() >> 63 == 1 {
                    *v += beta
                } else {
                    *v -= beta
                }
            }),
        }
    }

    fn is_random(&self) -> bool {
        matches!(self, Distortion::UniformNoise { .. } | Distortion::PerStepAdversarial { .. })
    }
}

/// Counter-addressed randomness for distortion: observer `i` at step `t`
/// reads stream `t + 1` of `ChaCha8(seed)` from word `2 i max_degree` on, so
/// runs that share a seed share their perception errors.
#[derive(Debug, Clone)]
struct PerceptionStreams {
    base: ChaCha8Rng,
    slots: usize,
}

impl PerceptionStreams {
    fn new(seed: u64, max_degree: usize) -> Self {
        PerceptionStreams {
            base: ChaCha8Rng::seed_from_u64(seed),
            slots: max_degree,
        }
    }

    fn for_step(&self, t: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(t.wrapping_add(1));
        rng.set_word_pos(0);
        rng
    }

    /// Skips the unused tail of an agent's slot block.
    fn skip(rng: &mut ChaCha8Rng, count: usize) {
        for _ in 0..count {
            rng.next_u64();
        }
    }
}

/// The opinion layers at times `t`, `t - 1` and `t - 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpinionState {
    pub t: u64,
    pub now: Vec<f64>,
    pub prev: Vec<f64>,
    pub prev2: Vec<f64>,
}

impl OpinionState {
    /// State at `t = 0`, with the earlier layers set to the initial opinions.
    pub fn initial(opinions: Vec<f64>) -> Self {
        OpinionState {
            t: 0,
            prev: opinions.clone(),
            prev2: opinions.clone(),
            now: opinions,
        }
    }

    /// Every opinion equals its value two steps back, exactly. Deterministic
    /// dynamics in such a state repeat with period two forever.
    pub fn is_frozen(&self) -> bool {
        self.now == self.prev2
    }

    pub fn node_count(&self) -> usize {
        self.now.len()
    }
}

/// Samples the initial opinions and overrides bots with their constants.
pub fn sample_initial(
    graph: &Graph,
    init: &InitialDistribution,
    roles: &[AgentRole],
    seed: u64,
) -> Result<OpinionState, SimError> {
    let mut opinions = init.sample(graph.node_count(), seed)?;
    for (x, role) in opinions.iter_mut().zip(roles) {
        if let AgentRole::Bot(c) = *role {
            *x = c;
        }
    }
    Ok(OpinionState::initial(opinions))
}

/// A single trajectory being stepped forward.
#[derive(Debug, Clone)]
pub struct Simulation<'g, R = UpdateRule> {
    graph: &'g Graph,
    rule: R,
    roles: Vec<AgentRole>,
    distortion: Distortion,
    streams: Option<PerceptionStreams>,
    clip: Option<(f64, f64)>,
    state: OpinionState,
    next: Vec<f64>,
    perceived: Vec<f64>,
    /// Never drawn from: deterministic distortions ignore their rng.
    idle: ChaCha8Rng,
}

impl<'g, R: LocalRule> Simulation<'g, R> {
    /// Starts from `opinions` at `t = 0`. Regular agents' opinions are mapped
    /// through the rule's initial projection and bots are pinned to their values.
    pub fn new(
        graph: &'g Graph,
        rule: R,
        roles: Vec<AgentRole>,
        distortion: Distortion,
        noise_seed: u64,
        opinions: Vec<f64>,
    ) -> Self {
        assert_eq!(roles.len(), graph.node_count(), "one role per node");
        assert_eq!(opinions.len(), graph.node_count(), "one opinion per node");
        let opinions = opinions
            .into_iter()
            .zip(&roles)
            .map(|(x, role)| match *role {
                AgentRole::Bot(c) => c,
                AgentRole::Regular => rule.initial_value(x),
            })
            .collect();
        let seed = match distortion {
            Distortion::PerStepAdversarial { seed, .. } => seed,
            _ => noise_seed,
        };
        Simulation {
            graph,
            rule,
            roles,
            streams: distortion
                .is_random()
                .then(|| PerceptionStreams::new(seed, graph.max_degree())),
            distortion,
            clip: None,
            state: OpinionState::initial(opinions),
            next: vec![0.0; graph.node_count()],
            perceived: Vec::with_capacity(graph.max_degree()),
            idle: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn with_clip(mut self, clip: Option<(f64, f64)>) -> Self {
        self.clip = clip;
        self
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn state(&self) -> &OpinionState {
        &self.state
    }

    pub fn roles(&self) -> &[AgentRole] {
        &self.roles
    }

    pub fn t(&self) -> u64 {
        self.state.t
    }

    /// Advances every agent by one synchronous step.
    pub fn step(&mut self) {
        let t = self.state.t;
        let mut noise = self.streams.as_ref().map(|s| (s.for_step(t), s.slots));
        for i in 0..self.graph.node_count() {
            self.next[i] = match self.roles[i] {
                AgentRole::Bot(c) => {
                    if let Some((rng, slots)) = &mut noise {
                        PerceptionStreams::skip(rng, *slots);
                    }
                    c
                }
                AgentRole::Regular => {
                    self.perceived.clear();
                    self.perceived
                        .extend(self.graph.neighbors(i).iter().map(|&j| self.state.now[j]));
                    match &mut noise {
                        Some((rng, slots)) => {
                            self.distortion.perceive(&mut self.perceived, rng);
                            PerceptionStreams::skip(rng, *slots - self.perceived.len());
                        }
                        None => self.distortion.perceive(&mut self.perceived, &mut self.idle),
                    }
                    let x = self.rule.update(self.state.prev[i], &self.perceived);
                    match self.clip {
                        Some((lo, hi)) => x.clamp(lo, hi),
                        None => x,
                    }
                }
            };
        }
        // prev2 <- prev, prev <- now, now <- next
        std::mem::swap(&mut self.state.prev2, &mut self.state.prev);
        std::mem::swap(&mut self.state.prev, &mut self.state.now);
        std::mem::swap(&mut self.state.now, &mut self.next);
        self.state.t += 1;
    }

    pub fn into_state(self) -> OpinionState {
        self.state
    }
}

/// What a run keeps besides its final state.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    /// Every layer for every agent.
    Full,
    /// Only the final state.
    #[default]
    LastTwo,
    Probes { nodes: Vec<NodeId> },
}

/// Finite-horizon stand-in for alternate convergence: the run is considered
/// converged once no opinion has moved by more than `tolerance` against its
/// same-parity predecessor for `window` steps of each parity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitDetection {
    pub tolerance: f64,
    pub window: u64,
}

impl Default for LimitDetection {
    fn default() -> Self {
        LimitDetection {
            tolerance: 1e-6,
            window: 200,
        }
    }
}

/// Tracks `max_i |A_{i,t} - A_{i,t-2}|` step by step.
#[derive(Debug, Clone)]
pub struct ConvergenceMonitor {
    detection: LimitDetection,
    quiet_steps: u64,
    last_movement: f64,
}

impl ConvergenceMonitor {
    pub fn new(detection: LimitDetection) -> Self {
        ConvergenceMonitor {
            detection,
            quiet_steps: 0,
            last_movement: f64::INFINITY,
        }
    }

    /// Feeds the state right after a step.
    pub fn observe(&mut self, state: &OpinionState) {
        let movement = state
            .now
            .iter()
            .zip(&state.prev2)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        self.last_movement = movement;
        if movement <= self.detection.tolerance {
            self.quiet_steps += 1;
        } else {
            self.quiet_steps = 0;
        }
    }

    pub fn converged(&self) -> bool {
        self.quiet_steps >= 2 * self.detection.window
    }

    pub fn last_movement(&self) -> f64 {
        self.last_movement
    }
}

/// Everything needed to reproduce one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub graph: GraphSpec,
    pub rule: UpdateRule,
    #[serde(default)]
    pub bots: Vec<Bot>,
    #[serde(default)]
    pub distortion: Distortion,
    pub init: InitialDistribution,
    pub horizon: u64,
    pub seed: u64,
    #[serde(default)]
    pub record: Record,
    /// Stop early once the run has alternately converged.
    #[serde(default)]
    pub stop_on_convergence: Option<LimitDetection>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.graph.validate()?;
        self.rule.validate()?;
        self.distortion.validate()?;
        self.init.validate()?;
        if self.horizon == 0 {
            return Err(SimError::Horizon);
        }
        let n = self.graph.node_count();
        if let Some(bot) = self.bots.iter().find(|b| b.node >= n) {
            return Err(SimError::BotOutOfRange {
                node: bot.node,
                node_count: n,
            });
        }
        if let Record::Probes { nodes } = &self.record {
            if let Some(&node) = nodes.iter().find(|&&p| p >= n) {
                return Err(SimError::ProbeOutOfRange { node, node_count: n });
            }
        }
        if let Some(d) = self.stop_on_convergence {
            if !(d.tolerance >= 0.0) || d.window == 0 {
                return Err(SimError::Detection);
            }
        }
        Ok(())
    }

    /// Builds the simulation on an already generated graph.
    pub fn simulation<'g>(&self, graph: &'g Graph) -> Result<Simulation<'g>, SimError> {
        let roles = roles_from_bots(graph.node_count(), &self.bots)?;
        let initial = sample_initial(graph, &self.init, &roles, self.seed)?;
        Ok(Simulation::new(
            graph,
            self.rule.clone(),
            roles,
            self.distortion,
            self.seed,
            initial.now,
        )
        .with_clip(self.init.clip_range))
    }
}

/// Opinions of selected agents over time: `values[k][t]` for `nodes[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSeries {
    pub nodes: Vec<NodeId>,
    pub values: Vec<Vec<f64>>,
}

impl ProbeSeries {
    pub fn series(&self, node: NodeId) -> Option<&[f64]> {
        self.nodes
            .iter()
            .position(|&n| n == node)
            .map(|k| self.values[k].as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub config: SimConfig,
    /// Row `t` holds every agent's opinion at time `t` (full recording only).
    pub layers: Option<Vec<Vec<f64>>>,
    pub probes: Option<ProbeSeries>,
    pub final_state: OpinionState,
    /// Step at which early stopping detected convergence, if it did.
    pub converged_at: Option<u64>,
}

/// Generates the graph and runs the configured trajectory.
pub fn run(config: &SimConfig) -> Result<Trajectory, SimError> {
    config.validate()?;
    let graph = Graph::generate(&config.graph)?;
    run_on(&graph, config)
}

/// Runs on a graph the caller already built from `config.graph`.
pub fn run_on(graph: &Graph, config: &SimConfig) -> Result<Trajectory, SimError> {
    config.validate()?;
    let mut sim = config.simulation(graph)?;
    let mut layers = matches!(config.record, Record::Full).then(|| vec![sim.state().now.clone()]);
    let mut probes = match &config.record {
        Record::Probes { nodes } => Some(ProbeSeries {
            nodes: nodes.clone(),
            values: nodes.iter().map(|&n| vec![sim.state().now[n]]).collect(),
        }),
        _ => None,
    };
    let mut monitor = config.stop_on_convergence.map(ConvergenceMonitor::new);
    let mut converged_at = None;
    while sim.t() < config.horizon {
        sim.step();
        if let Some(layers) = &mut layers {
            layers.push(sim.state().now.clone());
        }
        if let Some(p) = &mut probes {
            for (k, &n) in p.nodes.iter().enumerate() {
                p.values[k].push(sim.state().now[n]);
            }
        }
        if let Some(m) = &mut monitor {
            m.observe(sim.state());
            if m.converged() {
                converged_at = Some(sim.t());
                break;
            }
        }
    }
    Ok(Trajectory {
        config: config.clone(),
        layers,
        probes,
        final_state: sim.into_state(),
        converged_at,
    })
}
