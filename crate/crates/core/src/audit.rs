//! Runtime checks for the convergence machinery of robust dynamics.
//!
//! The Lyapunov function centered at `i` with ratio `r` is
//! `L(t) = sum over ordered neighbor pairs (j, k) of w(j,k) (A_{j,t+1} - A_{k,t})^2`
//! with `w(j,k) = r^d(i,(j,k))`. Every undirected edge contributes twice.
//! For `(γ, η)`-robust trajectories and `r >= 1 - γ`, `L` never increases and
//! bounds the same-parity variation of `A_i`.

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{AgentRole, Distortion, Simulation};
use crate::graph::{Graph, GraphError, NodeId};
use crate::rule::{LocalRule, ValueGrid};

/// Absolute tolerance for inequality audits, scaled by the compared magnitudes.
pub const SLACK: f64 = 1e-9;

/// Default number of uniform grid points for the robustness predicate.
pub const DEFAULT_V_GRID: usize = 33;

/// Number of incremental Lyapunov updates between full recomputations.
pub const RECOMPUTE_EVERY: u64 = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuditError {
    #[error("robustness parameters must be positive, got eps={eps}, gamma={gamma}, eta={eta}")]
    NonPositive { eps: f64, gamma: f64, eta: f64 },
    #[error("gamma must not exceed eps (gamma={gamma}, eps={eps})")]
    GammaAboveEps { eps: f64, gamma: f64 },
    #[error("ε-DeGroot needs 0 < gamma < eps, got gamma={gamma}, eps={eps}")]
    GammaNotBelowEps { eps: f64, gamma: f64 },
    #[error("beta must satisfy 0 <= beta < gamma (beta={beta}, gamma={gamma})")]
    BetaNotBelowGamma { beta: f64, gamma: f64 },
    #[error("Lyapunov ratio must lie in (0, 1), got {0}")]
    Ratio(f64),
    #[error("need at least 3 grid points, got {0}")]
    GridPoints(usize),
    #[error("recording covers times {have_from}..={have_to}, need {need_from}..={need_to}")]
    Window {
        have_from: u64,
        have_to: u64,
        need_from: u64,
        need_to: u64,
    },
    #[error("variation needs b > a, got a={a}, b={b}")]
    EmptyRange { a: u64, b: u64 },
    #[error("layers disagree in length")]
    LayerLength,
    #[error("initial opinions are not pointwise ordered at agent {0}")]
    NotOrdered(NodeId),
    #[error("granular degree bound must be at least 1")]
    Degree,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// `(ε, γ, η)`: approximate averaging within ε and robustness with `(γ, η)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessParams {
    pub eps: f64,
    pub gamma: f64,
    pub eta: f64,
}

impl RobustnessParams {
    pub fn new(eps: f64, gamma: f64, eta: f64) -> Result<Self, AuditError> {
        if !(eps > 0.0 && gamma > 0.0 && eta > 0.0) {
            return Err(AuditError::NonPositive { eps, gamma, eta });
        }
        if gamma > eps {
            return Err(AuditError::GammaAboveEps { eps, gamma });
        }
        Ok(RobustnessParams { eps, gamma, eta })
    }
}

/// ε-DeGroot is `(ε, γ, 2(ε - γ))`-robust for every `γ` in `(0, ε)`.
pub fn eps_degroot_params(eps: f64, gamma: f64) -> Result<RobustnessParams, AuditError> {
    if !(gamma > 0.0 && gamma < eps) {
        return Err(AuditError::GammaNotBelowEps { eps, gamma });
    }
    RobustnessParams::new(eps, gamma, 2.0 * (eps - gamma))
}

/// Parameters that hold for the same rule under β-distorted monitoring:
/// `(ε + β, γ - β, η)`, valid for `0 <= β < γ`.
pub fn beta_reduction(params: RobustnessParams, beta: f64) -> Result<RobustnessParams, AuditError> {
    if !(beta >= 0.0 && beta < params.gamma) {
        return Err(AuditError::BetaNotBelowGamma {
            beta,
            gamma: params.gamma,
        });
    }
    Ok(RobustnessParams {
        eps: params.eps + beta,
        gamma: params.gamma - beta,
        eta: params.eta,
    })
}

/// Robustness constants of a W-granular DeGroot rule on graphs of degree at most `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GranularParams {
    /// Covering radius `ε(W)` of `[0, 1]`.
    pub eps_w: f64,
    /// Packing radius `ρ(W)`: half the smallest gap.
    pub rho_w: f64,
    /// The rule is `2 ε(W)`-averaging.
    pub averaging_eps: f64,
    /// `γ = η = ρ(W^d ∪ W^2)`.
    pub gamma: f64,
    pub eta: f64,
    /// `W^d ∪ W^2`, sorted.
    pub averages: Vec<f64>,
}

impl GranularParams {
    pub fn robustness(&self) -> RobustnessParams {
        RobustnessParams {
            eps: self.averaging_eps,
            gamma: self.gamma,
            eta: self.eta,
        }
    }
}

pub fn covering_radius(grid: &ValueGrid) -> f64 {
    let w = grid.values();
    let interior = w.windows(2).map(|p| (p[1] - p[0]) / 2.0).fold(0.0, f64::max);
    interior.max(w[0]).max(1.0 - w[w.len() - 1])
}

/// Half the smallest gap; a singleton packs at any radius and gets 1.
pub fn packing_radius(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 1.0;
    }
    values.windows(2).map(|p| (p[1] - p[0]) / 2.0).fold(f64::INFINITY, f64::min)
}

/// Computes `ε(W)`, `ρ(W)` and `γ = η = ρ(W^d ∪ W^2)`, where `W^d` holds every
/// average of at most `d` elements of `W`. Averages are enumerated exactly.
pub fn granular_params(grid: &ValueGrid, d: usize) -> Result<GranularParams, AuditError> {
    if d == 0 {
        return Err(AuditError::Degree);
    }
    let elems: Vec<BigRational> = grid
        .values()
        .iter()
        .map(|&x| BigRational::from_float(x).expect("grid values are finite"))
        .collect();
    let mut averages = std::collections::BTreeSet::new();
    // sums of k-element multisets, built up one element at a time
    let mut sums: std::collections::BTreeSet<(usize, BigRational)> =
        elems.iter().enumerate().map(|(idx, x)| (idx, x.clone())).collect();
    for k in 1..=d.max(2) {
        for (_, s) in &sums {
            averages.insert(s / BigRational::from_integer(k.into()));
        }
        if k == d.max(2) {
            break;
        }
        let mut grown = std::collections::BTreeSet::new();
        for (last, s) in &sums {
            for (idx, x) in elems.iter().enumerate().skip(*last) {
                grown.insert((idx, s + x));
            }
        }
        sums = grown;
    }
    let exact: Vec<&BigRational> = averages.iter().collect();
    let gap = exact
        .windows(2)
        .map(|p| (p[1] - p[0]) / BigRational::from_integer(2.into()))
        .min()
        .map_or(1.0, |q| q.to_f64().unwrap());
    let averages: Vec<f64> = averages.iter().map(|q| q.to_f64().unwrap()).collect();
    let eps_w = covering_radius(grid);
    Ok(GranularParams {
        eps_w,
        rho_w: packing_radius(grid.values()),
        averaging_eps: 2.0 * eps_w,
        gamma: gap,
        eta: gap,
        averages,
    })
}

/// Center and ratio of a Lyapunov function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovConfig {
    pub center: NodeId,
    pub ratio: f64,
}

/// Edge weights `r^d(i,e)` laid out along each node's adjacency list.
#[derive(Debug, Clone)]
pub struct EdgeWeights {
    config: LyapunovConfig,
    /// `incident[j][idx]` weighs the edge to `graph.neighbors(j)[idx]`.
    incident: Vec<Vec<f64>>,
    mass: f64,
}

impl EdgeWeights {
    pub fn new(graph: &Graph, config: LyapunovConfig) -> Result<Self, AuditError> {
        graph.check_node(config.center)?;
        let r = config.ratio;
        if !(r > 0.0 && r < 1.0) {
            return Err(AuditError::Ratio(r));
        }
        let dist = graph.distances_from(config.center);
        let incident = (0..graph.node_count())
            .map(|j| {
                graph
                    .neighbors(j)
                    .iter()
                    .map(|&k| r.powi(dist[j].min(dist[k]) as i32))
                    .collect()
            })
            .collect();
        Ok(EdgeWeights {
            config,
            incident,
            mass: graph.weight_mass(config.center, r),
        })
    }

    pub fn config(&self) -> LyapunovConfig {
        self.config
    }

    /// `M_i(r)`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn incident(&self, j: NodeId) -> &[f64] {
        &self.incident[j]
    }
}

/// `L_{i,r}(t)` from the layers at `t` and `t + 1`.
pub fn lyapunov(graph: &Graph, weights: &EdgeWeights, layer_t: &[f64], layer_t1: &[f64]) -> f64 {
    (0..graph.node_count())
        .map(|j| j_plus(graph, weights, j, layer_t, layer_t1))
        .sum()
}

/// `J^+_j(t) = sum_{k in N_j} w(j,k) (A_{j,t+1} - A_{k,t})^2`.
pub fn j_plus(graph: &Graph, weights: &EdgeWeights, j: NodeId, layer_t: &[f64], layer_t1: &[f64]) -> f64 {
    cross_term(graph, weights, j, layer_t1[j], layer_t)
}

/// `J^-_j(t) = sum_{k in N_j} w(j,k) (A_{j,t-1} - A_{k,t})^2`.
pub fn j_minus(graph: &Graph, weights: &EdgeWeights, j: NodeId, layer_t: &[f64], layer_tm1: &[f64]) -> f64 {
    cross_term(graph, weights, j, layer_tm1[j], layer_t)
}

fn cross_term(graph: &Graph, weights: &EdgeWeights, j: NodeId, own: f64, others: &[f64]) -> f64 {
    graph
        .neighbors(j)
        .iter()
        .zip(weights.incident(j))
        .map(|(&k, &w)| {
            let diff = own - others[k];
            w * diff * diff
        })
        .sum()
}

/// Exact-arithmetic Lyapunov pieces for certifying identities on small graphs.
pub mod exact {
    use super::*;

    fn q(x: f64) -> BigRational {
        BigRational::from_float(x).expect("finite opinion")
    }

    fn weight(ratio: &BigRational, d: usize) -> BigRational {
        num_traits::pow(ratio.clone(), d)
    }

    fn cross(graph: &Graph, dist: &[usize], ratio: &BigRational, j: NodeId, own: f64, others: &[f64]) -> BigRational {
        graph.neighbors(j).iter().fold(BigRational::zero(), |acc, &k| {
            let diff = q(own) - q(others[k]);
            acc + weight(ratio, dist[j].min(dist[k])) * &diff * &diff
        })
    }

    /// `L(t)` summed edge by edge (both orientations), exactly.
    pub fn lyapunov(graph: &Graph, config: LyapunovConfig, layer_t: &[f64], layer_t1: &[f64]) -> BigRational {
        let dist = graph.distances_from(config.center);
        let ratio = q(config.ratio);
        graph.edges().iter().fold(BigRational::zero(), |acc, &(j, k)| {
            let w = weight(&ratio, dist[j].min(dist[k]));
            let a = q(layer_t1[j]) - q(layer_t[k]);
            let b = q(layer_t1[k]) - q(layer_t[j]);
            acc + w * (&a * &a + &b * &b)
        })
    }

    /// `sum_j J^+_j(t)`, exactly.
    pub fn sum_j_plus(graph: &Graph, config: LyapunovConfig, layer_t: &[f64], layer_t1: &[f64]) -> BigRational {
        let dist = graph.distances_from(config.center);
        let ratio = q(config.ratio);
        (0..graph.node_count()).fold(BigRational::zero(), |acc, j| {
            acc + cross(graph, &dist, &ratio, j, layer_t1[j], layer_t)
        })
    }

    /// `sum_j J^-_j(t)` with `layer_t` at time `t` and `layer_tm1` at `t - 1`, exactly.
    pub fn sum_j_minus(graph: &Graph, config: LyapunovConfig, layer_t: &[f64], layer_tm1: &[f64]) -> BigRational {
        let dist = graph.distances_from(config.center);
        let ratio = q(config.ratio);
        (0..graph.node_count()).fold(BigRational::zero(), |acc, j| {
            acc + cross(graph, &dist, &ratio, j, layer_tm1[j], layer_t)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    Monotonicity,
    ApproximateAveraging,
    Robustness,
    Lyapunov,
    Variation,
    TotalVariation,
}

/// Where a check failed (or came closest to failing).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub agent: Option<NodeId>,
    pub time: Option<u64>,
    pub v: Option<f64>,
}

impl Witness {
    pub fn at(agent: NodeId, time: u64) -> Self {
        Witness {
            agent: Some(agent),
            time: Some(time),
            v: None,
        }
    }
}

/// Result of one audit, possibly aggregated over many checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub condition: Condition,
    pub pass: bool,
    /// Largest amount by which an inequality was exceeded (0 if none were).
    pub worst_violation: f64,
    /// Location of the first failure, if any.
    pub witness: Option<Witness>,
    pub checks: u64,
}

impl AuditReport {
    pub fn passing(condition: Condition) -> Self {
        AuditReport {
            condition,
            pass: true,
            worst_violation: 0.0,
            witness: None,
            checks: 0,
        }
    }

    /// Records one inequality `lhs <= rhs` checked with the given slack.
    pub fn check(&mut self, lhs: f64, rhs: f64, slack: f64, witness: Witness) {
        self.checks += 1;
        let excess = lhs - rhs;
        if excess > 0.0 {
            self.worst_violation = self.worst_violation.max(excess);
        }
        if excess > slack && self.pass {
            self.pass = false;
            self.witness = Some(witness);
        }
    }

    /// Folds another report on the same condition into this one.
    pub fn absorb(&mut self, other: &AuditReport) {
        self.checks += other.checks;
        self.worst_violation = self.worst_violation.max(other.worst_violation);
        if self.pass && !other.pass {
            self.pass = false;
            self.witness = other.witness;
        }
    }

    fn located(mut self, agent: NodeId, time: u64) -> Self {
        if let Some(w) = &mut self.witness {
            w.agent = Some(agent);
            w.time = Some(time);
        }
        self
    }
}

fn slack_for(magnitudes: &[f64]) -> f64 {
    SLACK * magnitudes.iter().fold(1.0f64, |m, x| m.max(x.abs()))
}

/// Checks `η |x_new - x_prev2| <= (x_prev2 - v)^2 - (x_new - v)^2` for `v` in
/// `[y - γ, y + γ]`, on a uniform grid of `grid_points` and at both endpoints.
/// The right side is affine in `v`, so an endpoint is always the worst case.
pub fn check_a3(
    x_prev2: f64,
    y: f64,
    x_new: f64,
    params: &RobustnessParams,
    grid_points: usize,
) -> Result<AuditReport, AuditError> {
    if grid_points < 3 {
        return Err(AuditError::GridPoints(grid_points));
    }
    let mut report = AuditReport::passing(Condition::Robustness);
    let lhs = params.eta * (x_new - x_prev2).abs();
    let (lo, hi) = (y - params.gamma, y + params.gamma);
    let worst = if x_prev2 >= x_new { hi } else { lo };
    let grid = (0..grid_points).map(|k| lo + (hi - lo) * k as f64 / (grid_points - 1) as f64);
    for v in std::iter::once(worst).chain([lo, hi]).chain(grid) {
        let (a, b) = ((x_prev2 - v).powi(2), (x_new - v).powi(2));
        report.check(
            lhs,
            a - b,
            slack_for(&[lhs, a, b]),
            Witness {
                agent: None,
                time: None,
                v: Some(v),
            },
        );
    }
    Ok(report)
}

/// Checks `|x_new - y_true| <= ε`.
pub fn check_a2(x_new: f64, y_true: f64, eps: f64) -> AuditReport {
    let mut report = AuditReport::passing(Condition::ApproximateAveraging);
    report.check(
        (x_new - y_true).abs(),
        eps,
        slack_for(&[x_new, y_true, eps]),
        Witness {
            agent: None,
            time: None,
            v: None,
        },
    );
    report
}

fn neighbor_average(graph: &Graph, j: NodeId, layer: &[f64]) -> f64 {
    let nbrs = graph.neighbors(j);
    nbrs.iter().map(|&k| layer[k]).sum::<f64>() / nbrs.len() as f64
}

/// Audits (A2) and (A3) for every regular agent's update in the step that
/// produced `now` from `prev` (neighbors) and `prev2` (own opinion), using the
/// true neighbor average. Bots are skipped. `eps = None` skips (A2).
#[allow(clippy::too_many_arguments)]
pub fn audit_step(
    graph: &Graph,
    roles: &[AgentRole],
    time: u64,
    prev2: &[f64],
    prev: &[f64],
    now: &[f64],
    params: &RobustnessParams,
    check_averaging: bool,
    grid_points: usize,
) -> Result<(AuditReport, AuditReport), AuditError> {
    let mut a2 = AuditReport::passing(Condition::ApproximateAveraging);
    let mut a3 = AuditReport::passing(Condition::Robustness);
    for j in 0..graph.node_count() {
        if matches!(roles[j], AgentRole::Bot(_)) {
            continue;
        }
        let y = neighbor_average(graph, j, prev);
        if check_averaging {
            a2.absorb(&check_a2(now[j], y, params.eps).located(j, time));
        }
        a3.absorb(&check_a3(prev2[j], y, now[j], params, grid_points)?.located(j, time));
    }
    Ok((a2, a3))
}

/// How the upper initial field is obtained from the lower one in a coupling check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    Identical,
    Raise { agent: NodeId, amount: f64 },
    /// Every agent raised by an independent uniform amount in `[0, max]`.
    RandomRaise { max: f64, seed: u64 },
}

impl Perturbation {
    pub fn apply(&self, lower: &[f64]) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut upper = lower.to_vec();
        match *self {
            Perturbation::Identical => {}
            Perturbation::Raise { agent, amount } => upper[agent] += amount.abs(),
            Perturbation::RandomRaise { max, seed } => {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                for x in &mut upper {
                    *x += rng.random_range(0.0..=max.abs());
                }
            }
        }
        upper
    }
}

/// Runs two coupled trajectories from pointwise ordered initial fields, with
/// shared roles and shared perception randomness, and checks that the order
/// survives every one of `steps` steps.
#[allow(clippy::too_many_arguments)]
pub fn check_a1_coupling<R: LocalRule + Clone>(
    graph: &Graph,
    rule: R,
    roles: &[AgentRole],
    distortion: Distortion,
    noise_seed: u64,
    lower: Vec<f64>,
    upper: Vec<f64>,
    steps: u64,
) -> Result<AuditReport, AuditError> {
    if lower.len() != upper.len() || lower.len() != graph.node_count() {
        return Err(AuditError::LayerLength);
    }
    if let Some(j) = (0..lower.len()).find(|&j| lower[j] > upper[j]) {
        return Err(AuditError::NotOrdered(j));
    }
    let mut lo = Simulation::new(graph, rule.clone(), roles.to_vec(), distortion, noise_seed, lower);
    let mut hi = Simulation::new(graph, rule, roles.to_vec(), distortion, noise_seed, upper);
    let mut report = AuditReport::passing(Condition::Monotonicity);
    let compare = |lo: &Simulation<R>, hi: &Simulation<R>, report: &mut AuditReport| {
        let t = lo.t();
        for (j, (a, b)) in lo.state().now.iter().zip(&hi.state().now).enumerate() {
            // ordering must hold exactly; no slack
            report.check(
                *a,
                *b,
                0.0,
                Witness {
                    agent: Some(j),
                    time: Some(t),
                    v: None,
                },
            );
        }
    };
    compare(&lo, &hi, &mut report);
    for _ in 0..steps {
        lo.step();
        hi.step();
        compare(&lo, &hi, &mut report);
    }
    Ok(report)
}

/// `V_a^b = sum_{a < t < b} |A_{t+1} - A_{t-1}|` for a series starting at time `start`.
pub fn variation(series: &[f64], start: u64, a: u64, b: u64) -> Result<f64, AuditError> {
    if b <= a {
        return Err(AuditError::EmptyRange { a, b });
    }
    let end = start + series.len() as u64;
    if series.is_empty() || a < start || b >= end {
        return Err(AuditError::Window {
            have_from: start,
            have_to: end.saturating_sub(1),
            need_from: a,
            need_to: b,
        });
    }
    let at = |t: u64| series[(t - start) as usize];
    Ok((a + 1..b).map(|t| (at(t + 1) - at(t - 1)).abs()).sum())
}

/// Lyapunov and variation audits for one center over recorded layers
/// (`layers[t]` is the full opinion vector at time `t`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationAudit {
    pub center: NodeId,
    pub ratio: f64,
    pub mass: f64,
    /// `L(t)` for `t = a..b`.
    pub lyapunov: Vec<f64>,
    pub variation: f64,
    /// `η^{-1} (L(a) - L(b-1))`.
    pub budget: f64,
    pub monotone: AuditReport,
    pub bound: AuditReport,
}

/// Checks `V_a^b[A_i] <= η^{-1}(L(a) - L(b-1))` with `r = 1 - γ`, and that
/// `L(t)` does not increase on `[a, b-1]`.
pub fn check_variation_bound(
    graph: &Graph,
    center: NodeId,
    gamma: f64,
    eta: f64,
    layers: &[Vec<f64>],
    a: u64,
    b: u64,
) -> Result<VariationAudit, AuditError> {
    if b <= a {
        return Err(AuditError::EmptyRange { a, b });
    }
    if b as usize >= layers.len() {
        return Err(AuditError::Window {
            have_from: 0,
            have_to: layers.len().saturating_sub(1) as u64,
            need_from: a,
            need_to: b,
        });
    }
    let weights = EdgeWeights::new(
        graph,
        LyapunovConfig {
            center,
            ratio: 1.0 - gamma,
        },
    )?;
    let series: Vec<f64> = (a..b)
        .map(|t| lyapunov(graph, &weights, &layers[t as usize], &layers[t as usize + 1]))
        .collect();
    let slack = SLACK * weights.mass();
    let mut monotone = AuditReport::passing(Condition::Lyapunov);
    for (k, pair) in series.windows(2).enumerate() {
        monotone.check(
            pair[1],
            pair[0],
            slack,
            Witness {
                agent: Some(center),
                time: Some(a + k as u64 + 1),
                v: None,
            },
        );
    }
    let own: Vec<f64> = layers.iter().map(|l| l[center]).collect();
    let v = variation(&own, 0, a, b)?;
    let budget = (series[0] - series[series.len() - 1]) / eta;
    let mut bound = AuditReport::passing(Condition::Variation);
    bound.check(
        v,
        budget,
        slack / eta,
        Witness {
            agent: Some(center),
            time: Some(b),
            v: None,
        },
    );
    Ok(VariationAudit {
        center,
        ratio: 1.0 - gamma,
        mass: weights.mass(),
        lyapunov: series,
        variation: v,
        budget,
        monotone,
        bound,
    })
}

/// Streaming version of [`check_variation_bound`] for runs too large to record.
///
/// Feed it the simulation state after every step. `L` is updated from the
/// agents that moved (`L(t) - L(t-1) = sum_j J^+_j(t) - J^-_j(t)`) and fully
/// recomputed every [`RECOMPUTE_EVERY`] steps.
#[derive(Debug, Clone)]
pub struct LyapunovTracker {
    weights: EdgeWeights,
    eta: f64,
    /// `(t, L(t))` of the latest value.
    current: Option<(u64, f64)>,
    first: Option<f64>,
    variation: f64,
    series: Vec<f64>,
    keep_series: bool,
    monotone: AuditReport,
    since_recompute: u64,
    max_drift: f64,
}

impl LyapunovTracker {
    pub fn new(graph: &Graph, center: NodeId, gamma: f64, eta: f64) -> Result<Self, AuditError> {
        let weights = EdgeWeights::new(
            graph,
            LyapunovConfig {
                center,
                ratio: 1.0 - gamma,
            },
        )?;
        Ok(LyapunovTracker {
            weights,
            eta,
            current: None,
            first: None,
            variation: 0.0,
            series: Vec::new(),
            keep_series: false,
            monotone: AuditReport::passing(Condition::Lyapunov),
            since_recompute: 0,
            max_drift: 0.0,
        })
    }

    pub fn keep_series(mut self) -> Self {
        self.keep_series = true;
        self
    }

    /// Takes the state right after a step (`now` at time `t >= 1`).
    pub fn observe(&mut self, graph: &Graph, state: &crate::dynamics::OpinionState) {
        let t = state.t;
        if t == 0 {
            return;
        }
        // L(t-1) uses the layers at t-1 (prev) and t (now)
        let value = match self.current {
            None => lyapunov(graph, &self.weights, &state.prev, &state.now),
            Some((_, last)) => {
                self.since_recompute += 1;
                let i = self.weights.config.center;
                self.variation += (state.now[i] - state.prev2[i]).abs();
                let mut delta = 0.0;
                for j in 0..graph.node_count() {
                    if state.now[j] != state.prev2[j] {
                        delta += j_plus(graph, &self.weights, j, &state.prev, &state.now)
                            - j_minus(graph, &self.weights, j, &state.prev, &state.prev2);
                    }
                }
                let incremental = last + delta;
                if self.since_recompute >= RECOMPUTE_EVERY {
                    self.since_recompute = 0;
                    let full = lyapunov(graph, &self.weights, &state.prev, &state.now);
                    self.max_drift = self.max_drift.max((full - incremental).abs());
                    full
                } else {
                    incremental
                }
            }
        };
        if let Some((tl, last)) = self.current {
            self.monotone.check(
                value,
                last,
                SLACK * self.weights.mass(),
                Witness {
                    agent: Some(self.weights.config.center),
                    time: Some(tl + 1),
                    v: None,
                },
            );
        }
        if self.first.is_none() {
            self.first = Some(value);
        }
        if self.keep_series {
            self.series.push(value);
        }
        self.current = Some((t - 1, value));
    }

    /// Latest `L` value and its time index.
    pub fn current(&self) -> Option<(u64, f64)> {
        self.current
    }

    /// Largest gap seen between incremental and full recomputation.
    pub fn max_drift(&self) -> f64 {
        self.max_drift
    }

    pub fn mass(&self) -> f64 {
        self.weights.mass()
    }

    /// `η^{-1} L(T)`: bound on all remaining same-parity movement of the center.
    pub fn tail_budget(&self) -> f64 {
        self.current.map_or(f64::INFINITY, |(_, l)| l / self.eta)
    }

    pub fn finish(&self) -> VariationAudit {
        let last = self.current.map_or(0.0, |(_, l)| l);
        let first = self.first.unwrap_or(0.0);
        let budget = (first - last) / self.eta;
        let mut bound = AuditReport::passing(Condition::Variation);
        let slack = SLACK * self.weights.mass();
        bound.check(
            self.variation,
            budget,
            slack / self.eta,
            Witness {
                agent: Some(self.weights.config.center),
                time: self.current.map(|(t, _)| t + 1),
                v: None,
            },
        );
        VariationAudit {
            center: self.weights.config.center,
            ratio: self.weights.config.ratio,
            mass: self.weights.mass(),
            lyapunov: self.series.clone(),
            variation: self.variation,
            budget,
            monotone: self.monotone.clone(),
            bound,
        }
    }
}

/// Total-variation distance between the uniform law on `N_j` and the law
/// proportional to the Lyapunov weights `r^d(i,(j,k))`.
pub fn tv_weight_gap(graph: &Graph, i: NodeId, j: NodeId, r: f64) -> Result<f64, AuditError> {
    graph.check_node(j)?;
    let weights = EdgeWeights::new(graph, LyapunovConfig { center: i, ratio: r })?;
    let w = weights.incident(j);
    let total: f64 = w.iter().sum();
    let u = 1.0 / w.len() as f64;
    Ok(w.iter().map(|&x| (u - x / total).max(0.0)).sum())
}

/// Checks `tv_weight_gap <= 1 - r`, and `<= (1 - r)/2` when `r >= 1/2`.
pub fn check_tv_gap(graph: &Graph, i: NodeId, j: NodeId, r: f64) -> Result<AuditReport, AuditError> {
    let gap = tv_weight_gap(graph, i, j, r)?;
    let limit = if r >= 0.5 { (1.0 - r) / 2.0 } else { 1.0 - r };
    let mut report = AuditReport::passing(Condition::TotalVariation);
    report.check(
        gap,
        limit,
        SLACK,
        Witness {
            agent: Some(j),
            time: None,
            v: None,
        },
    );
    Ok(report)
}
