use std::collections::BTreeMap;

use degroot_core::audit::AuditReport;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::io::TrajectoryFile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedAudit {
    pub name: String,
    pub report: AuditReport,
}

/// A scalar compared against a threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    /// `"<="` or `">="`.
    pub relation: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    /// Opinion quantiles over time.
    Fan,
    /// A decaying series on linear axes.
    Decay,
    /// Points and a fitted line on log-log axes.
    LogLog,
    /// Learning error against ε.
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub kind: PlotKind,
    pub x_label: String,
    pub y_label: String,
    pub lines: Vec<Line>,
    #[serde(default)]
    pub annotation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the config's canonical TOML form.
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    pub config: ExperimentConfig,
}

impl Provenance {
    pub fn of(config: &ExperimentConfig) -> Self {
        let digest = Sha256::digest(config.to_toml().as_bytes());
        Provenance {
            config_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            seed: config.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
        }
    }
}

/// Raw limits of one replication, kept for CSV export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZRecord {
    pub label: String,
    pub seed: u64,
    pub converged: bool,
    pub agents: Vec<usize>,
    pub z_even: Vec<f64>,
    pub z_odd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: String,
    pub pass: bool,
    pub metrics: BTreeMap<String, f64>,
    pub audits: Vec<NamedAudit>,
    pub checks: Vec<Check>,
    pub series: Vec<Series>,
    pub provenance: Provenance,
    #[serde(skip)]
    pub z_records: Vec<ZRecord>,
    #[serde(skip)]
    pub trajectory: Option<TrajectoryFile>,
}

impl ScenarioResult {
    pub fn new(config: &ExperimentConfig) -> Self {
        ScenarioResult {
            scenario: config.scenario.clone(),
            pass: false,
            metrics: BTreeMap::new(),
            audits: Vec::new(),
            checks: Vec::new(),
            series: Vec::new(),
            provenance: Provenance::of(config),
            z_records: Vec::new(),
            trajectory: None,
        }
    }

    pub fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), value);
    }

    pub fn audit(&mut self, name: impl Into<String>, report: AuditReport) {
        self.audits.push(NamedAudit {
            name: name.into(),
            report,
        });
    }

    pub fn at_most(&mut self, name: impl Into<String>, value: f64, limit: f64) {
        self.checks.push(Check {
            name: name.into(),
            value,
            limit,
            relation: "<=".into(),
            pass: value <= limit,
        });
    }

    pub fn at_least(&mut self, name: impl Into<String>, value: f64, limit: f64) {
        self.checks.push(Check {
            name: name.into(),
            value,
            limit,
            relation: ">=".into(),
            pass: value >= limit,
        });
    }

    /// Sets the verdict from the audits and checks alone.
    pub fn conclude(&mut self) {
        self.pass = self.audits.iter().all(|a| a.report.pass) && self.checks.iter().all(|c| c.pass);
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn audit_report(&self, name: &str) -> Option<&AuditReport> {
        self.audits.iter().find(|a| a.name == name).map(|a| &a.report)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    /// `metric,value` lines in name order.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (k, v) in &self.metrics {
            out.push_str(&format!("{k},{v:?}\n"));
        }
        out
    }
}
