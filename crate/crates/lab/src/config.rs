use std::path::{Path, PathBuf};

use degroot_core::{Bot, Distortion, GraphSpec, InitialDistribution, LimitDetection, NodeId, Record, SimConfig, UpdateRule};
use serde::{Deserialize, Serialize};

use crate::LabError;

pub const SCENARIOS: &[&str] = &[
    "fragility-bot",
    "fragility-bias",
    "robust-bot",
    "robust-distortion",
    "granular-majority",
    "rw-decay",
    "lyapunov-audit",
    "eps-sweep",
];

/// One experiment, as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub seed: u64,
    #[serde(default = "one")]
    pub replications: usize,
    pub horizon: u64,
    pub graph: GraphSpec,
    pub rule: UpdateRule,
    /// Robustness margin for ε-DeGroot; defaults to `0.95 ε`.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub bots: Vec<Bot>,
    #[serde(default)]
    pub distortion: Distortion,
    pub init: InitialDistribution,
    #[serde(default)]
    pub criterion: Option<CriterionConfig>,
    #[serde(default)]
    pub detection: LimitDetection,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    /// Lyapunov centers / plotted agents.
    #[serde(default)]
    pub probes: Vec<NodeId>,
    /// Times at which trajectories are compared against oracles.
    #[serde(default)]
    pub checkpoints: Vec<u64>,
    /// fragility-bot: distance to the bot value that counts as consensus.
    #[serde(default)]
    pub consensus_tolerance: Option<f64>,
    /// fragility-bias: how far above the initial maximum the minimum must climb.
    #[serde(default)]
    pub divergence_margin: Option<f64>,
    #[serde(default)]
    pub fit: Option<FitConfig>,
    /// granular-majority: degrees cycled through when generating the graphs.
    #[serde(default)]
    pub degrees: Vec<usize>,
    #[serde(default = "default_v_grid")]
    pub v_grid: usize,
    #[serde(default)]
    pub trajectory: Option<TrajectoryFormat>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn one() -> usize {
    1
}

fn default_v_grid() -> usize {
    degroot_core::audit::DEFAULT_V_GRID
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriterionConfig {
    pub delta: f64,
    pub rho: f64,
    /// Overrides the default exempt radius around bots.
    #[serde(default)]
    pub exempt_radius: Option<usize>,
}

/// ε values to sweep; γ and β scale with ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub eps: Vec<f64>,
    #[serde(default = "default_gamma_ratio")]
    pub gamma_ratio: f64,
    #[serde(default)]
    pub beta_ratio: Option<f64>,
}

fn default_gamma_ratio() -> f64 {
    0.95
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Defaults to the graph's central node.
    #[serde(default)]
    pub origin: Option<NodeId>,
    pub t_min: u64,
    pub t_max: u64,
    pub slope_min: f64,
    pub slope_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryFormat {
    Csv,
    Binary,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, LabError> {
        toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::Io(path.to_path_buf(), e.to_string()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    /// `γ` at a given ε: the explicit value for the rule's own ε, otherwise
    /// the sweep ratio (0.95 by default) times ε.
    pub fn gamma_for(&self, eps: f64) -> f64 {
        if let (Some(g), Some(e)) = (self.gamma, self.rule.eps()) {
            if e == eps {
                return g;
            }
        }
        self.sweep.as_ref().map_or(0.95, |s| s.gamma_ratio) * eps
    }

    /// Same distortion kind with `β` rescaled for a swept ε.
    pub fn distortion_for(&self, eps: f64) -> Distortion {
        let ratio = match (&self.sweep, self.rule.eps()) {
            (Some(SweepConfig { beta_ratio: Some(r), .. }), _) => *r,
            (_, Some(e)) if e > 0.0 => self.distortion.beta() / e,
            _ => return self.distortion,
        };
        let beta = ratio * eps;
        match self.distortion {
            Distortion::None => Distortion::None,
            Distortion::PlusBias { .. } => Distortion::PlusBias { beta },
            Distortion::MinusBias { .. } => Distortion::MinusBias { beta },
            Distortion::UniformNoise { .. } => Distortion::UniformNoise { beta },
            Distortion::PerStepAdversarial { seed, .. } => Distortion::PerStepAdversarial { beta, seed },
        }
    }

    /// ε values to run: the sweep if present, otherwise the rule's own ε.
    pub fn eps_values(&self) -> Vec<f64> {
        match (&self.sweep, self.rule.eps()) {
            (Some(s), _) => s.eps.clone(),
            (None, Some(e)) => vec![e],
            (None, None) => Vec::new(),
        }
    }

    /// Engine configuration for one trajectory.
    pub fn sim_config(&self, rule: UpdateRule, distortion: Distortion, record: Record) -> SimConfig {
        SimConfig {
            graph: self.graph.clone(),
            rule,
            bots: self.bots.clone(),
            distortion,
            init: self.init.clone(),
            horizon: self.horizon,
            seed: self.seed,
            record,
            stop_on_convergence: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ROBUST: &str = r#"
scenario = "robust-bot"
seed = 7
replications = 20
horizon = 50000
graph = { kind = "torus", width = 101, height = 101 }
rule = { kind = "eps_degroot", eps = 0.005 }
bots = [{ node = 0, value = 1.0 }]
init = { mu = 0.5, noise = { kind = "uniform", half_width = 0.5 } }
criterion = { delta = 0.2, rho = 0.1 }
sweep = { eps = [0.05, 0.02, 0.01, 0.005], gamma_ratio = 0.95 }
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml(ROBUST).unwrap();
        assert_eq!(cfg.rule, UpdateRule::EpsDeGroot { eps: 0.005 });
        assert_eq!(cfg.detection, LimitDetection::default());
        assert_eq!(cfg.v_grid, 33);
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn gamma_scales_with_swept_eps() {
        let cfg = ExperimentConfig::from_toml(ROBUST).unwrap();
        assert!((cfg.gamma_for(0.05) - 0.0475).abs() < 1e-15);
        assert!((cfg.gamma_for(0.005) - 0.00475).abs() < 1e-15);
    }

    #[test]
    fn distortion_rescales() {
        let mut cfg = ExperimentConfig::from_toml(ROBUST).unwrap();
        cfg.distortion = Distortion::UniformNoise { beta: 0.0045 };
        match cfg.distortion_for(0.05) {
            Distortion::UniformNoise { beta } => assert!((beta - 0.045).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{ROBUST}\nbogus = 1\n");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }
}
