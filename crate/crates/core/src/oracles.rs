//! Exact and statistical reference values.
//!
//! Plain DeGroot dynamics is an average over a random walk: the opinion of
//! `i` at time `t` is the expected initial opinion at the walk's position
//! `R_t`, with bots acting as absorbing states. The walk DPs here are
//! computed independently of the simulation engine so the two can be
//! compared.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{roles_from_bots, run_on, Bot, LimitDetection, OpinionState, SimConfig, SimError};
use crate::graph::{Graph, GraphError, NodeId};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("eccentricity of node {node} is {eccentricity}, below the largest requested time {t}")]
    Eccentricity { node: NodeId, eccentricity: usize, t: u64 },
    #[error("time range must be nonempty with t >= 1, got {0}..={1}")]
    TimeRange(u64, u64),
    #[error("delta and eps must be positive, got delta={delta}, eps={eps}")]
    NonPositive { delta: f64, eps: f64 },
    #[error("horizon n = {n} is below 1: delta too small relative to eps")]
    Horizon { n: i64 },
    #[error("need at least {need} samples, got {have}")]
    TooShort { have: usize, need: usize },
    #[error("need at least one replication")]
    Replications,
    #[error("delta must be positive and rho in (0, 1), got delta={delta}, rho={rho}")]
    Criterion { delta: f64, rho: f64 },
}

/// Law of a random walk from `origin` after `t` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkDistribution {
    pub origin: NodeId,
    pub t: u64,
    pub probs: Vec<f64>,
    /// Mass sitting on absorbing nodes (0 for a plain walk).
    pub absorbed: f64,
}

impl WalkDistribution {
    /// `p_t = max_j Pr(R_t = j)`.
    pub fn p_max(&self) -> f64 {
        self.probs.iter().fold(0.0, |m, &p| m.max(p))
    }

    pub fn sum_squares(&self) -> f64 {
        self.probs.iter().map(|p| p * p).sum()
    }
}

fn propagate(graph: &Graph, absorbing: &[bool], probs: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for (j, &p) in probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        if absorbing[j] {
            out[j] += p;
            continue;
        }
        let nbrs = graph.neighbors(j);
        let share = p / nbrs.len() as f64;
        for &k in nbrs {
            out[k] += share;
        }
    }
}

/// Walk laws at every time in `0..=t_max`, handed to `visit` one by one.
fn walk_laws(
    graph: &Graph,
    bots: &[NodeId],
    origin: NodeId,
    t_max: u64,
    mut visit: impl FnMut(u64, &[f64]),
) -> Result<Vec<f64>, OracleError> {
    graph.check_node(origin)?;
    let mut absorbing = vec![false; graph.node_count()];
    for &b in bots {
        graph.check_node(b)?;
        absorbing[b] = true;
    }
    let mut probs = vec![0.0; graph.node_count()];
    probs[origin] = 1.0;
    let mut next = probs.clone();
    visit(0, &probs);
    for t in 1..=t_max {
        propagate(graph, &absorbing, &probs, &mut next);
        std::mem::swap(&mut probs, &mut next);
        visit(t, &probs);
    }
    Ok(probs)
}

/// Law of the simple random walk from `i` after `t` steps, by exact DP.
pub fn walk_distribution(graph: &Graph, i: NodeId, t: u64) -> Result<WalkDistribution, OracleError> {
    absorbing_walk_distribution(graph, &[], i, t)
}

/// As [`walk_distribution`], but the walk stops once it reaches a bot.
pub fn absorbing_walk_distribution(
    graph: &Graph,
    bots: &[NodeId],
    i: NodeId,
    t: u64,
) -> Result<WalkDistribution, OracleError> {
    let probs = walk_laws(graph, bots, i, t, |_, _| {})?;
    let absorbed = bots.iter().map(|&b| probs[b]).sum();
    Ok(WalkDistribution {
        origin: i,
        t,
        probs,
        absorbed,
    })
}

/// DeGroot opinion of `i` at time `t` as the walk average
/// `B_{i,t} = sum_j Pr(R_t = j) B_{j,0}`; bots hold their values throughout.
pub fn degroot_closed_form(
    graph: &Graph,
    initial: &[f64],
    bots: &[Bot],
    i: NodeId,
    t: u64,
) -> Result<f64, OracleError> {
    let mut opinions = initial.to_vec();
    for bot in bots {
        graph.check_node(bot.node)?;
        opinions[bot.node] = bot.value;
    }
    let nodes: Vec<NodeId> = bots.iter().map(|b| b.node).collect();
    let law = absorbing_walk_distribution(graph, &nodes, i, t)?;
    Ok(law.probs.iter().zip(&opinions).map(|(p, x)| p * x).sum())
}

/// Log-log decay of `p_t` from one origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub origin: NodeId,
    pub t_min: u64,
    pub t_max: u64,
    /// Least-squares slope of `ln p_t` against `ln t`.
    pub slope: f64,
    pub intercept: f64,
    /// `max_t p_t sqrt(t) / d` over the range, `d` the largest degree.
    pub constant: f64,
    pub samples: Vec<(u64, f64)>,
}

/// Fits the decay exponent of `p_t` for `t` in `t_min..=t_max`. The graph must
/// look infinite from `i` up to `t_max`: its eccentricity at `i` must reach it.
pub fn p_t_decay_fit(graph: &Graph, i: NodeId, t_min: u64, t_max: u64) -> Result<DecayFit, OracleError> {
    if t_min == 0 || t_max < t_min {
        return Err(OracleError::TimeRange(t_min, t_max));
    }
    graph.check_node(i)?;
    let eccentricity = graph.eccentricity(i);
    if (eccentricity as u64) < t_max {
        return Err(OracleError::Eccentricity {
            node: i,
            eccentricity,
            t: t_max,
        });
    }
    let mut samples = Vec::new();
    walk_laws(graph, &[], i, t_max, |t, probs| {
        if t >= t_min {
            samples.push((t, probs.iter().fold(0.0f64, |m, &p| m.max(p))));
        }
    })?;
    let d = graph.max_degree() as f64;
    let constant = samples.iter().map(|&(t, p)| p * (t as f64).sqrt() / d).fold(0.0, f64::max);
    let xs: Vec<f64> = samples.iter().map(|&(t, _)| (t as f64).ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|&(_, p)| p.ln()).collect();
    let (slope, intercept) = least_squares(&xs, &ys);
    Ok(DecayFit {
        origin: i,
        t_min,
        t_max,
        slope,
        intercept,
        constant,
        samples,
    })
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return (0.0, my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Hoeffding bounds on `Pr(B - E B <= -delta)` for `B = sum_j p_j X_j` with
/// independent `X_j` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBound {
    /// `exp(-delta^2 / (2 sum p_j^2))`.
    pub bound: f64,
    /// `exp(-delta^2 / (2 max p_j))`, implied since `sum p_j^2 <= max p_j`.
    pub weak_bound: f64,
}

pub fn hoeffding_tail_bound(delta: f64, probs: &[f64]) -> TailBound {
    let sq: f64 = probs.iter().map(|p| p * p).sum();
    let max = probs.iter().fold(0.0f64, |m, &p| m.max(p));
    TailBound {
        bound: (-delta * delta / (2.0 * sq)).exp(),
        weak_bound: (-delta * delta / (2.0 * max)).exp(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonRho {
    /// `n = floor(delta / (3 eps) - 1)`.
    pub n: u64,
    /// `delta^2.5 / (d sqrt(eps))`.
    pub exponent: f64,
    /// `exp(-c1 * exponent)` when a constant was supplied.
    pub rho1: Option<f64>,
}

pub fn horizon_and_rho1(delta: f64, eps: f64, d: usize, c1: Option<f64>) -> Result<HorizonRho, OracleError> {
    if !(delta > 0.0 && eps > 0.0) {
        return Err(OracleError::NonPositive { delta, eps });
    }
    let mut q = delta / (3.0 * eps);
    // δ = 0.3, ε = 0.01 must give exactly 10 despite rounding
    if (q - q.round()).abs() <= 1e-9 * q {
        q = q.round();
    }
    let n = (q - 1.0).floor() as i64;
    if n < 1 {
        return Err(OracleError::Horizon { n });
    }
    let exponent = delta.powf(2.5) / (d as f64 * eps.sqrt());
    Ok(HorizonRho {
        n: n as u64,
        exponent,
        rho1: c1.map(|c| (-c * exponent).exp()),
    })
}

/// Even and odd limits of one opinion series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitEstimate {
    pub z_even: f64,
    pub z_odd: f64,
    pub converged: bool,
    /// Largest `|A_{t+2} - A_t|` over the detection window.
    pub window_delta: f64,
}

/// Estimates the even/odd limits of `series` (indexed from time 0). The last
/// `window` same-parity differences of each parity must stay within `tolerance`.
pub fn limit_estimate(series: &[f64], detection: LimitDetection) -> Result<LimitEstimate, OracleError> {
    let need = (2 * detection.window as usize).max(3);
    if series.len() < need {
        return Err(OracleError::TooShort {
            have: series.len(),
            need,
        });
    }
    let diffs = series.len() - 2;
    let from = diffs.saturating_sub(2 * detection.window as usize);
    let window_delta = (from..diffs).map(|t| (series[t + 2] - series[t]).abs()).fold(0.0, f64::max);
    let last = series.len() - 1;
    let (z_even, z_odd) = if last % 2 == 0 {
        (series[last], series[last - 1])
    } else {
        (series[last - 1], series[last])
    };
    Ok(LimitEstimate {
        z_even,
        z_odd,
        converged: window_delta <= detection.tolerance,
        window_delta,
    })
}

/// Even/odd opinions of every agent taken from a final state.
pub fn parity_pairs(state: &OpinionState) -> (Vec<f64>, Vec<f64>) {
    if state.t % 2 == 0 {
        (state.now.clone(), state.prev.clone())
    } else {
        (state.prev.clone(), state.now.clone())
    }
}

/// `max(|z_even - mu|, |z_odd - mu|)`.
pub fn learning_error(z_even: f64, z_odd: f64, mu: f64) -> f64 {
    (z_even - mu).abs().max((z_odd - mu).abs())
}

/// 95% Wilson score interval for `k` successes out of `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wilson {
    pub frequency: f64,
    pub low: f64,
    pub high: f64,
    pub half_width: f64,
}

pub fn wilson_interval(k: u64, n: u64) -> Wilson {
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    Wilson {
        frequency: p,
        low: (center - half).max(0.0),
        high: (center + half).min(1.0),
        half_width: half,
    }
}

/// Distance past which agents are held to the learning criterion:
/// `ceil(gamma^-1.00001)`, capped at half the graph radius so that a
/// nonempty set of agents remains audited.
pub fn default_exempt_radius(graph_radius: usize, gamma_eff: f64) -> usize {
    let formula = gamma_eff.powf(-1.00001).ceil();
    let cap = graph_radius / 2;
    if formula.is_finite() && formula < cap as f64 {
        formula as usize
    } else {
        cap
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningCriterion {
    pub delta: f64,
    pub rho: f64,
    pub exempt_radius: usize,
    pub mu: f64,
}

impl LearningCriterion {
    pub fn validate(&self) -> Result<(), OracleError> {
        if !(self.delta > 0.0 && self.rho > 0.0 && self.rho < 1.0) {
            return Err(OracleError::Criterion {
                delta: self.delta,
                rho: self.rho,
            });
        }
        Ok(())
    }
}

/// Limits of every agent in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub seed: u64,
    pub converged: bool,
    pub steps: u64,
    pub z_even: Vec<f64>,
    pub z_odd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningEstimate {
    pub criterion: LearningCriterion,
    pub replications: usize,
    pub seeds: Vec<u64>,
    /// Agents farther than the exempt radius from every bot.
    pub audited: Vec<NodeId>,
    /// Per audited agent: replications with error above delta (or no convergence).
    pub failures: Vec<u64>,
    pub max_frequency: f64,
    /// Largest `frequency + half_width` over audited agents.
    pub max_padded: f64,
    pub fraction_passing: f64,
    pub pass: bool,
    pub non_converged: usize,
    /// Mean max-norm learning error over replications and audited agents.
    pub mean_error: f64,
    #[serde(skip)]
    pub raw: Vec<Replication>,
}

impl LearningEstimate {
    pub fn wilson(&self, k: usize) -> Wilson {
        wilson_interval(self.failures[k], self.replications as u64)
    }
}

/// Agents farther than `exempt_radius` from every bot (all agents if there are none).
pub fn audited_agents(graph: &Graph, bots: &[NodeId], exempt_radius: usize) -> Vec<NodeId> {
    if bots.is_empty() {
        return (0..graph.node_count()).collect();
    }
    let dist = graph.distances_from_set(bots);
    (0..graph.node_count()).filter(|&j| dist[j] > exempt_radius).collect()
}

impl LearningEstimate {
    /// Tallies replications against the criterion. A replication that did not
    /// converge counts as a failure for every audited agent.
    pub fn from_replications(criterion: LearningCriterion, audited: Vec<NodeId>, raw: Vec<Replication>) -> Self {
        let mu = criterion.mu;
        let mut failures = vec![0u64; audited.len()];
        let mut error_sum = 0.0;
        for rep in &raw {
            for (k, &j) in audited.iter().enumerate() {
                let err = learning_error(rep.z_even[j], rep.z_odd[j], mu);
                error_sum += err;
                if !rep.converged || err > criterion.delta {
                    failures[k] += 1;
                }
            }
        }
        let n = raw.len() as u64;
        let padded: Vec<f64> = failures
            .iter()
            .map(|&k| {
                let w = wilson_interval(k, n);
                w.frequency + w.half_width
            })
            .collect();
        let passing = padded.iter().filter(|&&p| p <= criterion.rho).count();
        let cells = (audited.len() * raw.len()) as f64;
        LearningEstimate {
            criterion,
            replications: raw.len(),
            seeds: raw.iter().map(|r| r.seed).collect(),
            max_frequency: failures.iter().map(|&k| k as f64 / n as f64).fold(0.0, f64::max),
            max_padded: padded.iter().copied().fold(0.0, f64::max),
            fraction_passing: if audited.is_empty() {
                0.0
            } else {
                passing as f64 / audited.len() as f64
            },
            pass: !audited.is_empty() && passing == audited.len(),
            non_converged: raw.iter().filter(|r| !r.converged).count(),
            mean_error: if cells > 0.0 { error_sum / cells } else { 0.0 },
            audited,
            failures,
            raw,
        }
    }
}

/// Runs `replications` copies of the template with seeds `base_seed + k`,
/// in parallel, each stopping at alternate convergence.
pub fn replicate(
    graph: &Graph,
    template: &SimConfig,
    replications: usize,
    base_seed: u64,
) -> Result<Vec<Replication>, OracleError> {
    if replications == 0 {
        return Err(OracleError::Replications);
    }
    let mut config = template.clone();
    config.stop_on_convergence.get_or_insert_with(LimitDetection::default);
    config.validate()?;
    roles_from_bots(graph.node_count(), &config.bots)?;
    let seeds: Vec<u64> = (0..replications as u64).map(|k| base_seed.wrapping_add(k)).collect();
    let raw = seeds
        .par_iter()
        .map(|&seed| {
            let mut c = config.clone();
            c.seed = seed;
            let traj = run_on(graph, &c)?;
            let (z_even, z_odd) = parity_pairs(&traj.final_state);
            Ok(Replication {
                seed,
                converged: traj.converged_at.is_some(),
                steps: traj.final_state.t,
                z_even,
                z_odd,
            })
        })
        .collect::<Result<_, SimError>>()?;
    Ok(raw)
}

/// Monte Carlo estimate of `(delta, rho)`-learning over agents outside the
/// exempt radius around the template's bots.
pub fn learning_estimate(
    graph: &Graph,
    template: &SimConfig,
    criterion: &LearningCriterion,
    replications: usize,
    base_seed: u64,
) -> Result<LearningEstimate, OracleError> {
    criterion.validate()?;
    let raw = replicate(graph, template, replications, base_seed)?;
    let bots: Vec<NodeId> = template.bots.iter().map(|b| b.node).collect();
    let audited = audited_agents(graph, &bots, criterion.exempt_radius);
    Ok(LearningEstimate::from_replications(*criterion, audited, raw))
}
