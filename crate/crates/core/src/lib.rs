//! Opinion dynamics on bounded-degree graphs: classic DeGroot averaging, the
//! ε-DeGroot projection rule and W-granular DeGroot, together with bots,
//! distorted monitoring, and runtime checks of the convergence machinery
//! (Lyapunov functions, variation bounds, robustness conditions) and
//! random-walk oracles for the DeGroot baseline.

pub mod audit;
pub mod dynamics;
pub mod graph;
pub mod oracles;
pub mod rule;

pub use dynamics::{
    run, run_on, AgentRole, Bot, Distortion, InitialDistribution, LimitDetection, Noise, OpinionState, Record,
    SimConfig, SimError, Simulation, Trajectory,
};
pub use graph::{Graph, GraphError, GraphSpec, GrowthProfile, NodeId};
pub use rule::{LocalRule, UpdateRule, ValueGrid};
