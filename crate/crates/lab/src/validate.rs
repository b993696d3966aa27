use degroot_core::oracles::horizon_and_rho1;
use degroot_core::{Distortion, Graph, UpdateRule};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SCENARIOS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

fn diag(field: &str, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        field: field.to_string(),
        message: message.into(),
    }
}

/// Parses and validates TOML text; parse failures become a single diagnostic.
pub fn validate_text(text: &str) -> Vec<Diagnostic> {
    match ExperimentConfig::from_toml(text) {
        Ok(cfg) => validate(&cfg),
        Err(e) => vec![diag("<parse>", e.to_string())],
    }
}

/// Every constraint violation in `cfg`. Empty means the config can run.
pub fn validate(cfg: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let scenario = cfg.scenario.as_str();
    if !SCENARIOS.contains(&scenario) {
        out.push(diag(
            "scenario",
            format!("unknown scenario {scenario:?}; known: {}", SCENARIOS.join(", ")),
        ));
    }
    if cfg.replications == 0 {
        out.push(diag("replications", "need at least one replication"));
    }
    if cfg.horizon == 0 {
        out.push(diag("horizon", "horizon must be at least 1"));
    }
    if let Err(e) = cfg.graph.validate() {
        out.push(diag("graph", e.to_string()));
    }
    if let Err(e) = cfg.rule.validate() {
        out.push(diag("rule", e.to_string()));
    }
    if let Err(e) = cfg.init.validate() {
        out.push(diag("init", e.to_string()));
    }
    if let Err(e) = cfg.distortion.validate() {
        out.push(diag("distortion", e.to_string()));
    }
    if !(cfg.detection.tolerance >= 0.0) || cfg.detection.window == 0 {
        out.push(diag("detection", "need tolerance >= 0 and window >= 1"));
    }
    if cfg.v_grid < 3 {
        out.push(diag("v_grid", "need at least 3 grid points"));
    }
    let n = cfg.graph.node_count();
    for bot in &cfg.bots {
        if bot.node >= n {
            out.push(diag("bots", format!("bot node {} out of range for {n} nodes", bot.node)));
        }
    }
    for &p in &cfg.probes {
        if p >= n {
            out.push(diag("probes", format!("probe node {p} out of range for {n} nodes")));
        }
    }

    if let UpdateRule::EpsDeGroot { eps } = cfg.rule {
        let gamma = cfg.gamma_for(eps);
        check_margins(&mut out, "gamma", eps, gamma, cfg.distortion.beta());
        if let Some(c) = &cfg.criterion {
            if c.delta > 0.0 && horizon_and_rho1(c.delta, eps, 1, None).is_err() {
                out.push(diag(
                    "criterion.delta",
                    format!("n = ⌊δ/(3ε) − 1⌋ must be ≥ 1 (δ={}, ε={eps})", c.delta),
                ));
            }
        }
    }
    if let Some(sweep) = &cfg.sweep {
        if sweep.eps.is_empty() || sweep.eps.iter().any(|&e| !(e > 0.0)) {
            out.push(diag("sweep.eps", "sweep needs positive ε values"));
        }
        if !(sweep.gamma_ratio > 0.0 && sweep.gamma_ratio < 1.0) {
            out.push(diag("sweep.gamma_ratio", "γ/ε must lie in (0, 1)"));
        }
        if let Some(b) = sweep.beta_ratio {
            if !(b >= 0.0 && b < sweep.gamma_ratio) {
                out.push(diag("sweep.beta_ratio", "β must be < γ (β∈[0,γ))"));
            }
        }
    }
    if let Some(c) = &cfg.criterion {
        if !(c.delta > 0.0) {
            out.push(diag("criterion.delta", "δ must be positive"));
        }
        if !(c.rho > 0.0 && c.rho < 1.0) {
            out.push(diag("criterion.rho", "ρ must lie in (0, 1)"));
        }
        if let (Some(r), true) = (c.exempt_radius, cfg.graph.validate().is_ok()) {
            if let Ok(g) = Graph::generate(&cfg.graph) {
                if g.radius() < r {
                    out.push(diag(
                        "criterion.exempt_radius",
                        format!("graph radius {} is below the exempt radius {r}", g.radius()),
                    ));
                }
            }
        }
    }

    scenario_requirements(cfg, &mut out);
    out
}

fn check_margins(out: &mut Vec<Diagnostic>, field: &str, eps: f64, gamma: f64, beta: f64) {
    if gamma > eps {
        out.push(diag(field, format!("γ≤ε required (γ={gamma}, ε={eps})")));
    } else if !(gamma > 0.0 && gamma < eps) {
        out.push(diag(field, format!("0<γ<ε required so that η = 2(ε−γ) > 0 (γ={gamma}, ε={eps})")));
    }
    if beta >= gamma {
        out.push(diag("distortion", format!("β must be < γ (β∈[0,γ)), got β={beta}, γ={gamma}")));
    }
}

fn scenario_requirements(cfg: &ExperimentConfig, out: &mut Vec<Diagnostic>) {
    let is_eps = matches!(cfg.rule, UpdateRule::EpsDeGroot { .. });
    match cfg.scenario.as_str() {
        "fragility-bot" => {
            if cfg.rule != UpdateRule::DeGroot {
                out.push(diag("rule", "fragility-bot runs plain DeGroot"));
            }
            if cfg.bots.is_empty() {
                out.push(diag("bots", "fragility-bot needs a bot"));
            }
        }
        "fragility-bias" => {
            if cfg.rule != UpdateRule::DeGroot {
                out.push(diag("rule", "fragility-bias runs plain DeGroot"));
            }
            if !matches!(cfg.distortion, Distortion::PlusBias { .. }) {
                out.push(diag("distortion", "fragility-bias needs plus_bias"));
            }
            if cfg.init.clip_range.is_some() {
                out.push(diag("init.clip_range", "fragility-bias must run unclipped"));
            }
        }
        "robust-bot" | "robust-distortion" | "eps-sweep" => {
            if !is_eps {
                out.push(diag("rule", format!("{} runs ε-DeGroot", cfg.scenario)));
            }
            if cfg.criterion.is_none() {
                out.push(diag("criterion", "learning scenarios need a criterion"));
            }
            if cfg.scenario == "robust-distortion" && !matches!(cfg.distortion, Distortion::UniformNoise { .. }) {
                out.push(diag("distortion", "robust-distortion needs uniform_noise"));
            }
            if cfg.scenario == "eps-sweep" && cfg.sweep.is_none() {
                out.push(diag("sweep", "eps-sweep needs a sweep"));
            }
            if let Some(sweep) = &cfg.sweep {
                for &e in &sweep.eps {
                    let (g, b) = (cfg.gamma_for(e), cfg.distortion_for(e).beta());
                    if e > 0.0 && !(b < g && g < e) {
                        out.push(diag("sweep", format!("need β < γ < ε at ε={e} (β={b}, γ={g})")));
                    }
                }
            }
        }
        "granular-majority" => {
            if !matches!(cfg.rule, UpdateRule::Granular { ref values } if values.values() == [0.0, 1.0]) {
                out.push(diag("rule", "granular-majority runs granular DeGroot on W = {0, 1}"));
            }
        }
        "rw-decay" => match &cfg.fit {
            None => out.push(diag("fit", "rw-decay needs a fit range")),
            Some(f) => {
                if f.t_min == 0 || f.t_max < f.t_min {
                    out.push(diag("fit", "need 1 ≤ t_min ≤ t_max"));
                }
                if f.slope_min > f.slope_max {
                    out.push(diag("fit", "slope_min must not exceed slope_max"));
                }
                if f.origin.is_some_and(|o| o >= cfg.graph.node_count()) {
                    out.push(diag("fit.origin", "origin out of range"));
                }
            }
        },
        "lyapunov-audit" => {
            if !is_eps {
                out.push(diag("rule", "lyapunov-audit runs ε-DeGroot"));
            }
        }
        _ => {}
    }
}
