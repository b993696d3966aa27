//! Local update rules: DeGroot, ε-DeGroot and W-granular DeGroot.

use std::cmp::Ordering;

use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuleError {
    #[error("epsilon must be positive and finite, got {0}")]
    Epsilon(f64),
    #[error("granular value set must be nonempty")]
    EmptyGrid,
    #[error("granular value set must lie in [0, 1], found {0}")]
    GridOutOfRange(f64),
    #[error("granular value set must be strictly increasing")]
    GridNotSorted,
    #[error("cannot average an empty neighbor list")]
    NoNeighbors,
}

/// A finite, strictly increasing set of admissible opinions inside `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ValueGrid(Vec<f64>);

impl ValueGrid {
    pub fn new(values: Vec<f64>) -> Result<Self, RuleError> {
        if values.is_empty() {
            return Err(RuleError::EmptyGrid);
        }
        if let Some(&bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(RuleError::GridOutOfRange(bad));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(RuleError::GridNotSorted);
        }
        Ok(ValueGrid(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn contains(&self, x: f64) -> bool {
        self.0.binary_search_by(|w| w.total_cmp(&x)).is_ok()
    }

    /// `π(anchor, x)`: the element of the grid nearest to `x`.
    ///
    /// A tie between the two bracketing elements goes to the one nearer the
    /// anchor, and to the smaller one if the anchor sits exactly between them.
    pub fn project(&self, anchor: f64, x: f64) -> f64 {
        let w = &self.0;
        let upper = w.partition_point(|&v| v < x);
        if upper == 0 {
            return w[0];
        }
        if upper == w.len() {
            return w[w.len() - 1];
        }
        let (lo, hi) = (w[upper - 1], w[upper]);
        if hi == x {
            return hi;
        }
        let (to_lo, to_hi) = (x - lo, hi - x);
        if to_lo < to_hi {
            lo
        } else if to_hi < to_lo {
            hi
        } else {
            tie_break(anchor, lo, hi)
        }
    }

    /// `π(anchor, mean(values))` for grid-valued `values`. Averages within
    /// rounding distance of a midpoint are settled exactly, so a true tie is
    /// never broken by floating-point error.
    pub fn project_mean(&self, anchor: f64, values: &[f64]) -> f64 {
        let avg = mean(values);
        let w = &self.0;
        let upper = w.partition_point(|&v| v < avg);
        if upper == 0 || upper == w.len() {
            return self.project(anchor, avg);
        }
        let (lo, hi) = (w[upper - 1], w[upper]);
        if ((avg - lo) - (hi - avg)).abs() > NEAR_TIE {
            return self.project(anchor, avg);
        }
        let q = |x: f64| BigRational::from_float(x).expect("finite opinion");
        let twice_sum = values.iter().fold(BigRational::zero(), |acc, &v| acc + q(v)) * BigRational::from_integer(2.into());
        let midpoint_sum = (q(lo) + q(hi)) * BigRational::from_integer(values.len().into());
        match twice_sum.cmp(&midpoint_sum) {
            Ordering::Less => lo,
            Ordering::Greater => hi,
            Ordering::Equal => tie_break(anchor, lo, hi),
        }
    }
}

/// Averages of values in `[0, 1]` this close to a midpoint are rechecked exactly.
const NEAR_TIE: f64 = 1e-12;

/// The nearer of `lo` and `hi` to `anchor`, `lo` when equidistant.
fn tie_break(anchor: f64, lo: f64, hi: f64) -> f64 {
    if (hi - anchor).abs() < (lo - anchor).abs() {
        hi
    } else {
        lo
    }
}

impl TryFrom<Vec<f64>> for ValueGrid {
    type Error = RuleError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        ValueGrid::new(values)
    }
}

impl From<ValueGrid> for Vec<f64> {
    fn from(grid: ValueGrid) -> Self {
        grid.0
    }
}

/// The opinion-update rules the engine knows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UpdateRule {
    #[serde(rename = "degroot")]
    DeGroot,
    #[serde(rename = "eps_degroot")]
    EpsDeGroot { eps: f64 },
    Granular { values: ValueGrid },
}

impl UpdateRule {
    pub fn validate(&self) -> Result<(), RuleError> {
        match *self {
            UpdateRule::EpsDeGroot { eps } if !(eps > 0.0 && eps.is_finite()) => Err(RuleError::Epsilon(eps)),
            _ => Ok(()),
        }
    }

    pub fn eps(&self) -> Option<f64> {
        match *self {
            UpdateRule::EpsDeGroot { eps } => Some(eps),
            _ => None,
        }
    }
}

/// A rule that maps an agent's own opinion from two steps back and the opinions
/// it perceives from its neighbors one step back to its new opinion.
pub trait LocalRule {
    fn update(&self, own_prev2: f64, neighbors: &[f64]) -> f64;

    /// Maps a sampled initial opinion into the rule's state space.
    fn initial_value(&self, x: f64) -> f64 {
        x
    }
}

impl LocalRule for UpdateRule {
    fn update(&self, own_prev2: f64, neighbors: &[f64]) -> f64 {
        match self {
            UpdateRule::DeGroot => mean(neighbors),
            UpdateRule::EpsDeGroot { eps } => eps_degroot_value(own_prev2, mean(neighbors), *eps),
            UpdateRule::Granular { values } => granular_value(own_prev2, neighbors, values),
        }
    }

    fn initial_value(&self, x: f64) -> f64 {
        match self {
            UpdateRule::Granular { values } => values.project(0.0, x),
            _ => x,
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Arithmetic mean of the neighbors' opinions.
pub fn degroot_value(neighbors: &[f64]) -> Result<f64, RuleError> {
    if neighbors.is_empty() {
        return Err(RuleError::NoNeighbors);
    }
    Ok(mean(neighbors))
}

/// Projects `own_prev2` onto `[avg - eps, avg + eps]`.
pub fn eps_degroot_value(own_prev2: f64, avg: f64, eps: f64) -> f64 {
    own_prev2.max(avg - eps).min(avg + eps)
}

/// `π(anchor, x)` over `grid`.
pub fn granular_project(anchor: f64, x: f64, grid: &ValueGrid) -> f64 {
    grid.project(anchor, x)
}

/// Projects every observation with anchor 0, averages, then projects the
/// average with the agent's own earlier opinion as anchor.
pub fn granular_value(own_prev2: f64, observed: &[f64], grid: &ValueGrid) -> f64 {
    let projected: Vec<f64> = observed.iter().map(|&x| grid.project(0.0, x)).collect();
    grid.project_mean(own_prev2, &projected)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(v: &[f64]) -> ValueGrid {
        ValueGrid::new(v.to_vec()).unwrap()
    }

    #[test]
    fn degroot_means() {
        assert_eq!(degroot_value(&[0.0, 1.0]).unwrap(), 0.5);
        assert_eq!(degroot_value(&[0.3]).unwrap(), 0.3);
        assert_eq!(degroot_value(&[0.1, 0.2, 0.3, 0.4]).unwrap(), 0.25);
        assert_eq!(degroot_value(&[]), Err(RuleError::NoNeighbors));
    }

    #[test]
    fn eps_degroot_cases() {
        assert_eq!(eps_degroot_value(0.55, 0.5, 0.1), 0.55);
        assert_eq!(eps_degroot_value(0.9, 0.5, 0.1), 0.6);
        assert_eq!(eps_degroot_value(0.2, 0.5, 0.1), 0.4);
    }

    #[test]
    fn exact_midpoint_average_is_a_tie() {
        // (0.35 + 0.72) / 2 rounds off the midpoint in floating point
        let w = grid(&[0.0, 0.07, 0.35, 0.72]);
        assert_eq!(granular_value(0.72, &[0.72, 0.35], &w), 0.72);
        assert_eq!(granular_value(0.35, &[0.72, 0.35], &w), 0.35);
        assert_eq!(granular_value(0.0, &[0.72, 0.35], &w), 0.35);
    }

    #[test]
    fn projection_ties_follow_anchor() {
        let w = grid(&[0.0, 0.5, 1.0]);
        assert_eq!(granular_project(0.0, 0.25, &w), 0.0);
        assert_eq!(granular_project(1.0, 0.25, &w), 0.5);
        assert_eq!(granular_project(1.0, 0.6, &w), 0.5);
        // anchor equidistant from both candidates: the smaller wins
        assert_eq!(granular_project(0.5, 0.5, &grid(&[0.25, 0.75])), 0.25);
        assert_eq!(granular_project(0.0, -3.0, &w), 0.0);
        assert_eq!(granular_project(0.0, 7.0, &w), 1.0);
    }

    #[test]
    fn granular_examples() {
        let bits = grid(&[0.0, 1.0]);
        assert_eq!(granular_value(0.0, &[1.0, 1.0, 0.0], &bits), 1.0);
        assert_eq!(granular_value(0.0, &[1.0, 0.0], &bits), 0.0);
        assert_eq!(granular_value(1.0, &[1.0, 0.0], &bits), 1.0);
        let thirds = grid(&[0.0, 0.5, 1.0]);
        assert_eq!(granular_value(0.0, &[0.6, 0.6], &thirds), 0.5);
    }

    #[test]
    fn grid_validation() {
        assert_eq!(ValueGrid::new(vec![]), Err(RuleError::EmptyGrid));
        assert_eq!(ValueGrid::new(vec![0.5, 0.5]), Err(RuleError::GridNotSorted));
        assert_eq!(ValueGrid::new(vec![0.0, 1.5]), Err(RuleError::GridOutOfRange(1.5)));
        assert!(UpdateRule::EpsDeGroot { eps: 0.0 }.validate().is_err());
    }

    #[test]
    fn rule_serde_shape() {
        let rule: UpdateRule = serde_json::from_str(r#"{"kind":"granular","values":[0.0,1.0]}"#).unwrap();
        assert_eq!(rule, UpdateRule::Granular { values: grid(&[0.0, 1.0]) });
        assert!(serde_json::from_str::<UpdateRule>(r#"{"kind":"granular","values":[1.0,0.0]}"#).is_err());
    }
}
