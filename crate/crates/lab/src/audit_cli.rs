//! Audits a recorded trajectory file against robustness parameters.

use std::path::Path;

use degroot_core::audit::{
    audit_step, beta_reduction, check_variation_bound, AuditReport, Condition, RobustnessParams,
};
use degroot_core::dynamics::roles_from_bots;
use degroot_core::{Graph, NodeId};
use serde::{Deserialize, Serialize};

use crate::io::TrajectoryFile;
use crate::result::NamedAudit;
use crate::LabError;

/// The `--params` file of `degroot-lab audit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditParams {
    pub eps: f64,
    pub gamma: f64,
    /// Defaults to `2(ε − γ)`.
    #[serde(default)]
    pub eta: Option<f64>,
    /// Monitoring distortion the trajectory was produced under.
    #[serde(default)]
    pub beta: f64,
    /// Lyapunov centers; five evenly spaced agents when empty.
    #[serde(default)]
    pub centers: Vec<NodeId>,
    #[serde(default = "default_grid")]
    pub v_grid: usize,
    #[serde(default = "yes")]
    pub check_averaging: bool,
}

fn default_grid() -> usize {
    33
}

fn yes() -> bool {
    true
}

impl AuditParams {
    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::Io(path.to_path_buf(), e.to_string()))?;
        toml::from_str(&text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn robustness(&self) -> Result<RobustnessParams, LabError> {
        let base = RobustnessParams::new(self.eps, self.gamma, self.eta.unwrap_or(2.0 * (self.eps - self.gamma)))?;
        Ok(if self.beta > 0.0 { beta_reduction(base, self.beta)? } else { base })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryAudit {
    pub pass: bool,
    pub params: RobustnessParams,
    pub steps: usize,
    pub audits: Vec<NamedAudit>,
    /// `(center, V, budget)` per center.
    pub variation: Vec<(NodeId, f64, f64)>,
}

pub fn audit_trajectory(traj: &TrajectoryFile, params: &AuditParams) -> Result<TrajectoryAudit, LabError> {
    let robust = params.robustness()?;
    let graph = Graph::generate(&traj.config.graph)?;
    let roles = roles_from_bots(graph.node_count(), &traj.config.bots)?;
    let layers = &traj.layers;
    let mut a2 = AuditReport::passing(Condition::ApproximateAveraging);
    let mut a3 = AuditReport::passing(Condition::Robustness);
    for t in 1..layers.len() {
        let (r2, r3) = audit_step(
            &graph,
            &roles,
            t as u64,
            &layers[t.saturating_sub(2)],
            &layers[t - 1],
            &layers[t],
            &robust,
            params.check_averaging,
            params.v_grid,
        )?;
        a2.absorb(&r2);
        a3.absorb(&r3);
    }
    let centers = if params.centers.is_empty() {
        let n = graph.node_count();
        let k = n.min(5);
        (0..k).map(|c| c * n / k).collect()
    } else {
        params.centers.clone()
    };
    let mut monotone = AuditReport::passing(Condition::Lyapunov);
    let mut bound = AuditReport::passing(Condition::Variation);
    let mut variation = Vec::new();
    if layers.len() >= 2 {
        for &center in &centers {
            graph.check_node(center)?;
            let v = check_variation_bound(
                &graph,
                center,
                robust.gamma,
                robust.eta,
                layers,
                0,
                layers.len() as u64 - 1,
            )?;
            monotone.absorb(&v.monotone);
            bound.absorb(&v.bound);
            variation.push((center, v.variation, v.budget));
        }
    }
    let audits: Vec<NamedAudit> = [
        ("approximate_averaging", a2),
        ("robustness", a3),
        ("lyapunov_monotone", monotone),
        ("variation_bound", bound),
    ]
    .into_iter()
    .map(|(name, report)| NamedAudit {
        name: name.into(),
        report,
    })
    .collect();
    Ok(TrajectoryAudit {
        pass: audits.iter().all(|a| a.report.pass),
        params: robust,
        steps: layers.len(),
        audits,
        variation,
    })
}
