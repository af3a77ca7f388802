//! Run-level configuration shared by the simulator, the learner and the harness.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::passivity::TankConfig;

/// Which CMDP constraints terminate an episode.
///
/// Written as `agnostic`, `Eb<b>` (tank budget `b` J) or `Eb<b>-Ef<f>`
/// (budget `b` J and flow limit `−f/10` W). The force constraint is always on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ConstraintSet {
    Agnostic,
    Budget { budget: u32 },
    BudgetFlow { budget: u32, flow_tenths: u32 },
}

impl ConstraintSet {
    pub fn budget_monitored(&self) -> bool {
        !matches!(self, ConstraintSet::Agnostic)
    }

    pub fn flow_monitored(&self) -> bool {
        matches!(self, ConstraintSet::BudgetFlow { .. })
    }

    /// Tank budget implied by the label, if any.
    pub fn budget(&self) -> Option<f64> {
        match *self {
            ConstraintSet::Agnostic => None,
            ConstraintSet::Budget { budget } | ConstraintSet::BudgetFlow { budget, .. } => {
                Some(f64::from(budget))
            }
        }
    }

    /// Flow limit implied by the label, W (negative), if any.
    pub fn flow_limit(&self) -> Option<f64> {
        match *self {
            ConstraintSet::BudgetFlow { flow_tenths, .. } => Some(-f64::from(flow_tenths) / 10.0),
            _ => None,
        }
    }
}

impl fmt::Display for ConstraintSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ConstraintSet::Agnostic => f.write_str("agnostic"),
            ConstraintSet::Budget { budget } => write!(f, "Eb{budget}"),
            ConstraintSet::BudgetFlow {
                budget,
                flow_tenths,
            } => write!(f, "Eb{budget}-Ef{flow_tenths}"),
        }
    }
}

impl FromStr for ConstraintSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad run config `{s}` (want agnostic, Eb<b> or Eb<b>-Ef<f>)"));
        if s.eq_ignore_ascii_case("agnostic") {
            return Ok(ConstraintSet::Agnostic);
        }
        let rest = s.strip_prefix("Eb").or_else(|| s.strip_prefix("eb")).ok_or_else(bad)?;
        let (b, f) = match rest.split_once('-') {
            Some((b, f)) => {
                let f = f.strip_prefix("Ef").or_else(|| f.strip_prefix("ef")).ok_or_else(bad)?;
                (b, Some(f))
            }
            None => (rest, None),
        };
        let budget: u32 = b.parse().map_err(|_| bad())?;
        if budget == 0 {
            return Err(bad());
        }
        Ok(match f {
            None => ConstraintSet::Budget { budget },
            Some(f) => ConstraintSet::BudgetFlow {
                budget,
                flow_tenths: f.parse().map_err(|_| bad())?,
            },
        })
    }
}

impl TryFrom<String> for ConstraintSet {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ConstraintSet> for String {
    fn from(c: ConstraintSet) -> String {
        c.to_string()
    }
}

/// One experimental condition: constraints, tank, layer, force limit, seed, maze.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub constraints: ConstraintSet,
    /// Tank used when the label does not fix the budget or the flow limit.
    pub tank: TankConfig,
    /// Passivity layer on the action stream.
    pub layer: bool,
    /// Contact-force threshold, N.
    pub force_limit: f64,
    pub seed: u64,
    /// Built-in maze id or path to a maze file.
    pub maze: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            constraints: ConstraintSet::Agnostic,
            tank: TankConfig::default(),
            layer: false,
            force_limit: 40.0,
            seed: 0,
            maze: "corridor".to_string(),
        }
    }
}

impl RunConfig {
    pub fn new(constraints: ConstraintSet) -> Self {
        RunConfig {
            constraints,
            ..Default::default()
        }
    }

    pub fn with_layer(mut self, on: bool) -> Self {
        self.layer = on;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_maze(mut self, maze: impl Into<String>) -> Self {
        self.maze = maze.into();
        self
    }

    /// Effective tank: label values override the base tank, the layer flag
    /// sets both filters.
    pub fn tank_config(&self) -> TankConfig {
        let mut t = self.tank;
        if let Some(b) = self.constraints.budget() {
            t.e_max = b;
        }
        if let Some(f) = self.constraints.flow_limit() {
            t.flow_min = f;
        }
        t.with_layer(self.layer)
    }

    pub fn validate(&self) -> Result<()> {
        self.tank_config().validate()?;
        if !(self.force_limit > 0.0 && self.force_limit.is_finite()) {
            return Err(Error::invalid("force_limit", "must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_labels() {
        assert_eq!("agnostic".parse::<ConstraintSet>().unwrap(), ConstraintSet::Agnostic);
        assert_eq!(
            "Eb4".parse::<ConstraintSet>().unwrap(),
            ConstraintSet::Budget { budget: 4 }
        );
        let c: ConstraintSet = "Eb8-Ef7".parse().unwrap();
        assert_eq!(c.budget(), Some(8.0));
        assert_eq!(c.flow_limit(), Some(-0.7));
        assert_eq!(c.to_string(), "Eb8-Ef7");
        for bad in ["", "Eb", "Eb-Ef7", "Ef7", "Eb4-7", "Eb0", "Ebx"] {
            assert!(bad.parse::<ConstraintSet>().is_err(), "{bad}");
        }
    }

    #[test]
    fn tank_follows_label() {
        let r = RunConfig::new("Eb8-Ef7".parse().unwrap());
        let t = r.tank_config();
        assert_eq!((t.e_max, t.flow_min), (8.0, -0.7));
        assert!(!t.layer_enabled());
        let t = RunConfig::default().with_layer(true).tank_config();
        assert_eq!((t.e_max, t.flow_min), (6.0, -0.5));
        assert!(t.enabled_budget && t.enabled_flow);
    }
}
