use degroot_core::audit::{
    audit_step, beta_reduction, eps_degroot_params, granular_params, AuditReport, Condition, LyapunovTracker,
    RobustnessParams, Witness,
};
use degroot_core::dynamics::{roles_from_bots, ConvergenceMonitor};
use degroot_core::oracles::{
    audited_agents, default_exempt_radius, degroot_closed_form, learning_error, learning_estimate, p_t_decay_fit,
    parity_pairs,
    LearningCriterion, LearningEstimate, Replication,
};
use degroot_core::{
    AgentRole, Distortion, Graph, GraphSpec, NodeId, OpinionState, Record, Simulation, UpdateRule, ValueGrid,
};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::io::TrajectoryFile;
use crate::result::{Line, PlotKind, ScenarioResult, Series, ZRecord};
use crate::validate::validate;
use crate::LabError;

/// Runs the scenario named in `cfg`. Deterministic given the config.
pub fn run_scenario(cfg: &ExperimentConfig) -> Result<ScenarioResult, LabError> {
    let diagnostics = validate(cfg);
    if !diagnostics.is_empty() {
        return Err(LabError::Invalid(diagnostics));
    }
    let mut result = ScenarioResult::new(cfg);
    match cfg.scenario.as_str() {
        "fragility-bot" => fragility_bot(cfg, &mut result)?,
        "fragility-bias" => fragility_bias(cfg, &mut result)?,
        "robust-bot" => learning_sweep(cfg, &mut result, true)?,
        "eps-sweep" => learning_sweep(cfg, &mut result, false)?,
        "robust-distortion" => robust_distortion(cfg, &mut result)?,
        "granular-majority" => granular_majority(cfg, &mut result)?,
        "rw-decay" => rw_decay(cfg, &mut result)?,
        "lyapunov-audit" => lyapunov_audit(cfg, &mut result)?,
        other => return Err(LabError::UnknownScenario(other.to_string())),
    }
    result.conclude();
    Ok(result)
}

/// `1, 2, 4, ...` up to `horizon`, plus `horizon` itself.
fn log_times(horizon: u64) -> Vec<u64> {
    let mut times: Vec<u64> = std::iter::successors(Some(1u64), |t| t.checked_mul(2))
        .take_while(|&t| t < horizon)
        .collect();
    times.push(horizon);
    times
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Min, quartiles and max of opinions over time.
struct Fan {
    times: Vec<f64>,
    rows: Vec<[f64; 5]>,
}

impl Fan {
    fn new() -> Self {
        Fan {
            times: Vec::new(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, t: u64, opinions: &[f64]) {
        if self.times.last() == Some(&(t as f64)) {
            return;
        }
        let mut sorted = opinions.to_vec();
        sorted.sort_by(f64::total_cmp);
        self.times.push(t as f64);
        self.rows.push([0.0, 0.25, 0.5, 0.75, 1.0].map(|q| quantile(&sorted, q)));
    }

    fn series(&self, name: &str, annotation: String) -> Series {
        let labels = ["min", "q25", "median", "q75", "max"];
        Series {
            name: name.into(),
            kind: PlotKind::Fan,
            x_label: "t".into(),
            y_label: "opinion".into(),
            lines: labels
                .iter()
                .enumerate()
                .map(|(k, label)| Line {
                    label: label.to_string(),
                    points: self.times.iter().zip(&self.rows).map(|(&t, r)| (t, r[k])).collect(),
                })
                .collect(),
            annotation: Some(annotation),
        }
    }
}

fn fragility_bot(cfg: &ExperimentConfig, result: &mut ScenarioResult) -> Result<(), LabError> {
    let graph = Graph::generate(&cfg.graph)?;
    let target = cfg.bots[0].value;
    let tolerance = cfg.consensus_tolerance.unwrap_or(1e-3);
    let mut sim = cfg
        .sim_config(UpdateRule::DeGroot, cfg.distortion, Record::LastTwo)
        .simulation(&graph)?;
    let initial = sim.state().now.clone();

    let mut checkpoints: Vec<u64> = cfg.checkpoints.iter().copied().filter(|&t| t <= cfg.horizon).collect();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let oracle: Vec<Vec<f64>> = checkpoints
        .iter()
        .map(|&t| {
            (0..graph.node_count())
                .into_par_iter()
                .map(|i| degroot_closed_form(&graph, &initial, &cfg.bots, i, t))
                .collect::<Result<Vec<f64>, _>>()
        })
        .collect::<Result<_, _>>()?;

    let gap = |s: &OpinionState| s.now.iter().fold(0.0f64, |m, x| m.max((x - target).abs()));
    let fan_times = log_times(cfg.horizon);
    let mut fan = Fan::new();
    fan.push(0, &sim.state().now);
    let mut worst_oracle = 0.0f64;
    let mut reached = None;
    while sim.t() < cfg.horizon {
        sim.step();
        let t = sim.t();
        if let Some(k) = checkpoints.iter().position(|&c| c == t) {
            let diff = sim
                .state()
                .now
                .iter()
                .zip(&oracle[k])
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            result.metric(format!("oracle_diff/t={t}"), diff);
            worst_oracle = worst_oracle.max(diff);
        }
        if fan_times.binary_search(&t).is_ok() {
            fan.push(t, &sim.state().now);
        }
        if reached.is_none() && gap(sim.state()) <= tolerance {
            reached = Some(t);
            fan.push(t, &sim.state().now);
            if checkpoints.last().is_none_or(|&c| c <= t) {
                break;
            }
        }
    }
    result.metric("final_max_gap", gap(sim.state()));
    result.metric("steps", sim.t() as f64);
    result.metric("consensus_step", reached.map_or(-1.0, |t| t as f64));
    result.metric("oracle_max_diff", worst_oracle);
    result.at_most("max_gap_to_bot", gap(sim.state()), tolerance);
    if !checkpoints.is_empty() {
        result.at_most("oracle_max_diff", worst_oracle, 1e-9);
    }
    result.series.push(fan.series("opinions", format!("DeGroot with a bot at {target}")));
    Ok(())
}

fn fragility_bias(cfg: &ExperimentConfig, result: &mut ScenarioResult) -> Result<(), LabError> {
    let graph = Graph::generate(&cfg.graph)?;
    let margin = cfg.divergence_margin.unwrap_or(10.0);
    let mut sim = cfg
        .sim_config(UpdateRule::DeGroot, cfg.distortion, Record::LastTwo)
        .simulation(&graph)?;
    let initial_max = sim.state().now.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = initial_max + margin;
    let min = |s: &OpinionState| s.now.iter().copied().fold(f64::INFINITY, f64::min);
    let mut fan = Fan::new();
    fan.push(0, &sim.state().now);
    let fan_times = log_times(cfg.horizon);
    let mut crossed = None;
    while sim.t() < cfg.horizon {
        sim.step();
        if fan_times.binary_search(&sim.t()).is_ok() {
            fan.push(sim.t(), &sim.state().now);
        }
        if min(sim.state()) > threshold {
            crossed = Some(sim.t());
            fan.push(sim.t(), &sim.state().now);
            break;
        }
    }
    result.metric("initial_max", initial_max);
    result.metric("final_min", min(sim.state()));
    result.metric("steps_to_threshold", crossed.map_or(-1.0, |t| t as f64));
    result.at_least("final_min_minus_threshold", min(sim.state()) - threshold, f64::MIN_POSITIVE);
    result.series.push(fan.series("opinions", format!("DeGroot under β = {}", cfg.distortion.beta())));
    Ok(())
}

/// Criterion and exempt radius at a swept ε.
fn criterion_for(cfg: &ExperimentConfig, graph_radius: usize, eps: f64) -> LearningCriterion {
    let c = cfg.criterion.expect("validated");
    let gamma_eff = cfg.gamma_for(eps) - cfg.distortion_for(eps).beta();
    LearningCriterion {
        delta: c.delta,
        rho: c.rho,
        exempt_radius: c
            .exempt_radius
            .unwrap_or_else(|| default_exempt_radius(graph_radius, gamma_eff)),
        mu: cfg.init.mu,
    }
}

fn record_estimate(result: &mut ScenarioResult, prefix: &str, est: &LearningEstimate) {
    result.metric(format!("{prefix}/mean_error"), est.mean_error);
    result.metric(format!("{prefix}/max_frequency"), est.max_frequency);
    result.metric(format!("{prefix}/max_padded_frequency"), est.max_padded);
    result.metric(format!("{prefix}/fraction_passing"), est.fraction_passing);
    result.metric(format!("{prefix}/audited_agents"), est.audited.len() as f64);
    result.metric(format!("{prefix}/exempt_radius"), est.criterion.exempt_radius as f64);
    result.metric(format!("{prefix}/non_converged"), est.non_converged as f64);
    result.metric(
        format!("{prefix}/max_steps"),
        est.raw.iter().map(|r| r.steps).max().unwrap_or(0) as f64,
    );
    // diagnostics only: the error of the final state, whether or not it converged
    let (mut worst_count, mut max_error) = (0usize, 0.0f64);
    for &j in &est.audited {
        let errors = est
            .raw
            .iter()
            .map(|r| learning_error(r.z_even[j], r.z_odd[j], est.criterion.mu));
        let mut above = 0;
        for e in errors {
            max_error = max_error.max(e);
            above += (e > est.criterion.delta) as usize;
        }
        worst_count = worst_count.max(above);
    }
    result.metric(format!("{prefix}/max_error"), max_error);
    result.metric(
        format!("{prefix}/final_state_max_frequency"),
        worst_count as f64 / est.raw.len().max(1) as f64,
    );
    for rep in &est.raw {
        result.z_records.push(ZRecord {
            label: prefix.to_string(),
            seed: rep.seed,
            converged: rep.converged,
            agents: est.audited.clone(),
            z_even: est.audited.iter().map(|&j| rep.z_even[j]).collect(),
            z_odd: est.audited.iter().map(|&j| rep.z_odd[j]).collect(),
        });
    }
}

fn learning_sweep(cfg: &ExperimentConfig, result: &mut ScenarioResult, judge_target: bool) -> Result<(), LabError> {
    let graph = Graph::generate(&cfg.graph)?;
    let radius = graph.radius();
    let mut eps_values = cfg.eps_values();
    let target = cfg.rule.eps().expect("validated");
    if !eps_values.contains(&target) {
        eps_values.push(target);
    }
    eps_values.sort_by(|a, b| b.total_cmp(a));
    let mut trend = Vec::new();
    for &eps in &eps_values {
        let criterion = criterion_for(cfg, radius, eps);
        let mut template = cfg.sim_config(UpdateRule::EpsDeGroot { eps }, cfg.distortion_for(eps), Record::LastTwo);
        template.stop_on_convergence = Some(cfg.detection);
        let est = learning_estimate(&graph, &template, &criterion, cfg.replications, cfg.seed)?;
        let prefix = format!("eps={eps}");
        record_estimate(result, &prefix, &est);
        result.at_most(format!("{prefix}/non_converged"), est.non_converged as f64, 0.0);
        if judge_target && eps == target {
            result.at_most(format!("{prefix}/max_padded_frequency"), est.max_padded, criterion.rho);
        }
        trend.push((eps, est.mean_error));
    }
    // mean learning error must not grow as ε shrinks
    let worst_rise = trend.windows(2).map(|w| w[1].1 - w[0].1).fold(f64::NEG_INFINITY, f64::max);
    if trend.len() > 1 {
        result.metric("trend/worst_rise", worst_rise);
        result.at_most("trend/worst_rise", worst_rise, 0.0);
    }
    result.series.push(Series {
        name: "learning_error".into(),
        kind: PlotKind::Sweep,
        x_label: "eps".into(),
        y_label: "mean learning error".into(),
        lines: vec![Line {
            label: "mean ‖Z − (μ,μ)‖∞".into(),
            points: trend.clone(),
        }],
        annotation: Some("learning error against ε".into()),
    });
    Ok(())
}

/// Reads the opinions of a stopped, exactly frozen run at a later time.
fn frozen_layer(state: &OpinionState, t: u64) -> &[f64] {
    if (t - state.t) % 2 == 0 {
        &state.now
    } else {
        &state.prev
    }
}

struct Variant<'g> {
    sim: Simulation<'g>,
    monitor: ConvergenceMonitor,
    stopped: bool,
}

impl<'g> Variant<'g> {
    fn advance(&mut self) {
        if self.stopped {
            return;
        }
        self.sim.step();
        self.monitor.observe(self.sim.state());
        // deterministic dynamics repeat forever once frozen
        if self.monitor.converged() && self.sim.state().is_frozen() {
            self.stopped = true;
        }
    }

    fn layer(&self, t: u64) -> &[f64] {
        frozen_layer(self.sim.state(), t)
    }

    fn replication(&self, seed: u64) -> Replication {
        let (z_even, z_odd) = parity_pairs(self.sim.state());
        Replication {
            seed,
            converged: self.monitor.converged(),
            steps: self.sim.t(),
            z_even,
            z_odd,
        }
    }
}

fn robust_distortion(cfg: &ExperimentConfig, result: &mut ScenarioResult) -> Result<(), LabError> {
    let graph = Graph::generate(&cfg.graph)?;
    let radius = graph.radius();
    let seeds: Vec<u64> = (0..cfg.replications as u64).map(|k| cfg.seed.wrapping_add(k)).collect();
    let bots: Vec<NodeId> = cfg.bots.iter().map(|b| b.node).collect();
    for eps in cfg.eps_values() {
        let rule = UpdateRule::EpsDeGroot { eps };
        let noise = cfg.distortion_for(eps);
        let beta = noise.beta();
        let kinds = [noise, Distortion::PlusBias { beta }, Distortion::MinusBias { beta }];
        let outcomes: Vec<([Replication; 3], AuditReport)> = seeds
            .par_iter()
            .map(|&seed| -> Result<_, LabError> {
                let mut variants = kinds
                    .iter()
                    .map(|&d| {
                        let mut c = cfg.sim_config(rule.clone(), d, Record::LastTwo);
                        c.seed = seed;
                        Ok(Variant {
                            sim: c.simulation(&graph)?,
                            monitor: ConvergenceMonitor::new(cfg.detection),
                            stopped: false,
                        })
                    })
                    .collect::<Result<Vec<_>, LabError>>()?;
                let mut bracket = AuditReport::passing(Condition::Monotonicity);
                for t in 1..=cfg.horizon {
                    variants.iter_mut().for_each(Variant::advance);
                    let (mid, hi, lo) = (variants[0].layer(t), variants[1].layer(t), variants[2].layer(t));
                    for j in 0..mid.len() {
                        bracket.check(lo[j], mid[j], 0.0, Witness::at(j, t));
                        bracket.check(mid[j], hi[j], 0.0, Witness::at(j, t));
                    }
                    if variants.iter().all(|v| v.monitor.converged()) {
                        break;
                    }
                }
                let reps = [0, 1, 2].map(|k| variants[k].replication(seed));
                Ok((reps, bracket))
            })
            .collect::<Result<_, _>>()?;

        let criterion = criterion_for(cfg, radius, eps);
        let audited = audited_agents(&graph, &bots, criterion.exempt_radius);
        let mut bracket = AuditReport::passing(Condition::Monotonicity);
        for (_, b) in &outcomes {
            bracket.absorb(b);
        }
        result.audit(format!("eps={eps}/bracket"), bracket);
        for (k, name) in ["noise", "plus", "minus"].iter().enumerate() {
            let raw: Vec<Replication> = outcomes.iter().map(|(reps, _)| reps[k].clone()).collect();
            let est = LearningEstimate::from_replications(criterion, audited.clone(), raw);
            let prefix = format!("eps={eps}/{name}");
            record_estimate(result, &prefix, &est);
            result.at_most(format!("{prefix}/non_converged"), est.non_converged as f64, 0.0);
            result.at_most(format!("{prefix}/max_padded_frequency"), est.max_padded, criterion.rho);
        }
    }
    Ok(())
}

/// Majority vote over `{0, 1}` with ties keeping the opinion from two steps back.
fn majority_step(graph: &Graph, prev2: &[u8], prev: &[u8]) -> Vec<u8> {
    (0..graph.node_count())
        .map(|i| {
            let nbrs = graph.neighbors(i);
            let ones = nbrs.iter().filter(|&&j| prev[j] == 1).count();
            match (2 * ones).cmp(&nbrs.len()) {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => 0,
                std::cmp::Ordering::Equal => prev2[i],
            }
        })
        .collect()
}

fn granular_majority(cfg: &ExperimentConfig, result: &mut ScenarioResult) -> Result<(), LabError> {
    let grid = ValueGrid::new(vec![0.0, 1.0]).expect("static grid");
    let rule = UpdateRule::Granular { values: grid.clone() };
    let mut mismatches = 0u64;
    let mut compared = 0u64;
    let mut first_mismatch = None;
    let mut max_degree = 0;
    for k in 0..cfg.replications {
        let spec = match cfg.graph {
            GraphSpec::RandomRegular { n, degree, seed } => GraphSpec::RandomRegular {
                n,
                degree: cfg.degrees.get(k % cfg.degrees.len().max(1)).copied().unwrap_or(degree),
                seed: seed.wrapping_add(k as u64),
            },
            ref other => other.clone(),
        };
        let graph = Graph::generate(&spec)?;
        max_degree = max_degree.max(graph.max_degree());
        let roles = roles_from_bots(graph.node_count(), &cfg.bots)?;
        let raw = cfg.init.sample(graph.node_count(), cfg.seed.wrapping_add(k as u64))?;
        let mut sim = Simulation::new(&graph, rule.clone(), roles.clone(), cfg.distortion, cfg.seed, raw.clone());
        let start: Vec<u8> = raw
            .iter()
            .zip(&roles)
            .map(|(&x, role)| match role {
                AgentRole::Bot(c) => (*c > 0.5) as u8,
                AgentRole::Regular => (x > 0.5) as u8,
            })
            .collect();
        let (mut prev2, mut prev) = (start.clone(), start);
        for t in 1..=cfg.horizon {
            sim.step();
            let mut next = majority_step(&graph, &prev2, &prev);
            for (i, role) in roles.iter().enumerate() {
                if let AgentRole::Bot(c) = role {
                    next[i] = (*c > 0.5) as u8;
                }
            }
            for (i, (&x, &b)) in sim.state().now.iter().zip(&next).enumerate() {
                compared += 1;
                if x != b as f64 {
                    mismatches += 1;
                    first_mismatch.get_or_insert((k, t, i));
                }
            }
            prev2 = std::mem::replace(&mut prev, next);
        }
    }
    let two = granular_params(&grid, 2)?;
    let at_degree = granular_params(&grid, max_degree.max(1))?;
    result.metric("graphs", cfg.replications as f64);
    result.metric("compared_updates", compared as f64);
    result.metric("mismatches", mismatches as f64);
    if let Some((k, t, i)) = first_mismatch {
        result.metric("first_mismatch/graph", k as f64);
        result.metric("first_mismatch/t", t as f64);
        result.metric("first_mismatch/agent", i as f64);
    }
    result.metric("params_d2/gamma", two.gamma);
    result.metric("params_d2/eta", two.eta);
    result.metric("params_dmax/gamma", at_degree.gamma);
    result.metric("params/eps_w", two.eps_w);
    result.at_most("mismatches", mismatches as f64, 0.0);
    result.at_most("params_d2/gamma_error", (two.gamma - 0.25).abs() + (two.eta - 0.25).abs(), 0.0);
    Ok(())
}

fn central_node(graph: &Graph) -> NodeId {
    let ecc = graph.eccentricities();
    (0..ecc.len()).min_by_key(|&i| ecc[i]).unwrap_or(0)
}

fn rw_decay(cfg: &ExperimentConfig, result: &mut ScenarioResult) -> Result<(), LabError> {
    let graph = Graph::generate(&cfg.graph)?;
    let fit_cfg = cfg.fit.expect("validated");
    let origin = fit_cfg.origin.unwrap_or_else(|| central_node(&graph));
    let fit = p_t_decay_fit(&graph, origin, fit_cfg.t_min, fit_cfg.t_max)?;
    result.metric("origin", origin as f64);
    result.metric("slope", fit.slope);
    result.metric("intercept", fit.intercept);
    result.metric("empirical_constant", fit.constant);
    result.at_least("slope_lower", fit.slope, fit_cfg.slope_min);
    result.at_most("slope_upper", fit.slope, fit_cfg.slope_max);
    result.at_most("empirical_constant_finite", fit.constant, f64::MAX);
    let points: Vec<(f64, f64)> = fit.samples.iter().map(|&(t, p)| (t as f64, p)).collect();
    let fitted = points
        .iter()
        .map(|&(t, _)| (t, (fit.intercept + fit.slope * t.ln()).exp()))
        .collect();
    result.series.push(Series {
        name: "p_t".into(),
        kind: PlotKind::LogLog,
        x_label: "t".into(),
        y_label: "p_t".into(),
        lines: vec![
            Line {
                label: "p_t".into(),
                points,
            },
            Line {
                label: "fit".into(),
                points: fitted,
            },
        ],
        annotation: Some(format!("fitted slope {:.4}", fit.slope)),
    });
    Ok(())
}

fn default_centers(n: usize) -> Vec<NodeId> {
    let k = n.min(5);
    (0..k).map(|c| c * n / k).collect()
}

struct AuditRun {
    a2: AuditReport,
    a3: AuditReport,
    monotone: AuditReport,
    bound: AuditReport,
    converged_at: Option<u64>,
    tail_budget: f64,
    drift: f64,
    slack_ratio: f64,
    series: Vec<f64>,
    layers: Option<Vec<Vec<f64>>>,
}

fn lyapunov_audit(cfg: &ExperimentConfig, result: &mut ScenarioResult) -> Result<(), LabError> {
    let graph = Graph::generate(&cfg.graph)?;
    let eps = cfg.rule.eps().expect("validated");
    let base = eps_degroot_params(eps, cfg.gamma_for(eps))?;
    let beta = cfg.distortion.beta();
    let params: RobustnessParams = if beta > 0.0 { beta_reduction(base, beta)? } else { base };
    let centers = if cfg.probes.is_empty() {
        default_centers(graph.node_count())
    } else {
        cfg.probes.clone()
    };
    let seeds: Vec<u64> = (0..cfg.replications as u64).map(|k| cfg.seed.wrapping_add(k)).collect();
    let runs: Vec<AuditRun> = seeds
        .par_iter()
        .enumerate()
        .map(|(k, &seed)| -> Result<AuditRun, LabError> {
            let mut c = cfg.sim_config(cfg.rule.clone(), cfg.distortion, Record::LastTwo);
            c.seed = seed;
            let mut sim = c.simulation(&graph)?;
            let mut trackers = centers
                .iter()
                .enumerate()
                .map(|(m, &i)| {
                    let t = LyapunovTracker::new(&graph, i, params.gamma, params.eta)?;
                    Ok(if k == 0 && m == 0 { t.keep_series() } else { t })
                })
                .collect::<Result<Vec<_>, LabError>>()?;
            let mut a2 = AuditReport::passing(Condition::ApproximateAveraging);
            let mut a3 = AuditReport::passing(Condition::Robustness);
            let mut monitor = ConvergenceMonitor::new(cfg.detection);
            let mut converged_at = None;
            let mut layers = (k == 0 && cfg.trajectory.is_some()).then(|| vec![sim.state().now.clone()]);
            let roles = sim.roles().to_vec();
            while sim.t() < cfg.horizon {
                sim.step();
                let s = sim.state();
                let (r2, r3) = audit_step(&graph, &roles, s.t, &s.prev2, &s.prev, &s.now, &params, true, cfg.v_grid)?;
                a2.absorb(&r2);
                a3.absorb(&r3);
                for tr in &mut trackers {
                    tr.observe(&graph, s);
                }
                monitor.observe(s);
                if converged_at.is_none() && monitor.converged() {
                    converged_at = Some(s.t);
                }
                if let Some(l) = &mut layers {
                    l.push(s.now.clone());
                }
            }
            let mut monotone = AuditReport::passing(Condition::Lyapunov);
            let mut bound = AuditReport::passing(Condition::Variation);
            let (mut tail_budget, mut drift, mut slack_ratio) = (0.0f64, 0.0f64, 0.0f64);
            let mut series = Vec::new();
            for (m, tr) in trackers.iter().enumerate() {
                let v = tr.finish();
                monotone.absorb(&v.monotone);
                bound.absorb(&v.bound);
                tail_budget = tail_budget.max(tr.tail_budget());
                drift = drift.max(tr.max_drift());
                if v.budget > 0.0 {
                    slack_ratio = slack_ratio.max(v.variation / v.budget);
                }
                if m == 0 {
                    series = v.lyapunov;
                }
            }
            Ok(AuditRun {
                a2,
                a3,
                monotone,
                bound,
                converged_at,
                tail_budget,
                drift,
                slack_ratio,
                series,
                layers,
            })
        })
        .collect::<Result<_, _>>()?;

    let mut reports = [
        AuditReport::passing(Condition::ApproximateAveraging),
        AuditReport::passing(Condition::Robustness),
        AuditReport::passing(Condition::Lyapunov),
        AuditReport::passing(Condition::Variation),
    ];
    for run in &runs {
        for (agg, r) in reports.iter_mut().zip([&run.a2, &run.a3, &run.monotone, &run.bound]) {
            agg.absorb(r);
        }
    }
    let [a2, a3, monotone, bound] = reports;
    result.audit("approximate_averaging", a2);
    result.audit("robustness", a3);
    result.audit("lyapunov_monotone", monotone);
    result.audit("variation_bound", bound);
    let converged = runs.iter().filter(|r| r.converged_at.is_some()).count();
    result.metric("params/eps", params.eps);
    result.metric("params/gamma", params.gamma);
    result.metric("params/eta", params.eta);
    result.metric("replications", runs.len() as f64);
    result.metric("centers", centers.len() as f64);
    result.metric("converged_runs", converged as f64);
    result.metric(
        "latest_convergence_step",
        runs.iter().filter_map(|r| r.converged_at).max().map_or(-1.0, |t| t as f64),
    );
    result.metric("max_tail_budget", runs.iter().map(|r| r.tail_budget).fold(0.0, f64::max));
    result.metric("max_incremental_drift", runs.iter().map(|r| r.drift).fold(0.0, f64::max));
    result.metric("max_variation_over_budget", runs.iter().map(|r| r.slack_ratio).fold(0.0, f64::max));
    result.at_least("converged_runs", converged as f64, runs.len() as f64);
    if let Some(first) = runs.first() {
        let step = (first.series.len() / 2000).max(1);
        let points = first
            .series
            .iter()
            .enumerate()
            .step_by(step)
            .map(|(t, &l)| (t as f64, l))
            .collect();
        result.series.push(Series {
            name: "lyapunov".into(),
            kind: PlotKind::Decay,
            x_label: "t".into(),
            y_label: "L(t)".into(),
            lines: vec![Line {
                label: format!("center {}", centers[0]),
                points,
            }],
            annotation: Some(format!("L(t), r = 1 − {}", params.gamma)),
        });
    }
    if let Some(layers) = runs.into_iter().next().and_then(|r| r.layers) {
        let mut config = cfg.sim_config(cfg.rule.clone(), cfg.distortion, Record::Full);
        config.seed = cfg.seed;
        result.trajectory = Some(TrajectoryFile { config, layers });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_times_end_at_horizon() {
        assert_eq!(log_times(10), vec![1, 2, 4, 8, 10]);
        assert_eq!(log_times(1), vec![1]);
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.0);
        assert_eq!(quantile(&v, 0.125), 0.5);
    }

    #[test]
    fn majority_ties_keep_old_opinion() {
        let g = Graph::generate(&GraphSpec::Cycle { n: 4 }).unwrap();
        // nodes 1 and 3 see one vote each way and keep their prev2 opinion
        let next = majority_step(&g, &[0, 1, 0, 0], &[1, 0, 0, 0]);
        assert_eq!(next, vec![0, 1, 0, 0]);
    }
}
