//! Continual-learning strategies as plug-ins around one training step:
//! MIR replay, LwF distillation and HAT task masking, usable in any
//! combination.

mod hat;
mod lwf;
mod replay;
mod state;
mod step;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use hat::{hat_cumulate, hat_gates, hat_scale_gradients, HatState};
pub use lwf::{lwf_loss, TeacherSnapshot};
pub use replay::{buffer_update, mir_select, MirParams, ReplayBuffer, ReplayItem};
pub use state::{load_state, save_state, StrategyState};
pub use step::{compose_step, StepReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[serde(alias = "MIR")]
    Mir,
    #[serde(alias = "LWF", alias = "LwF")]
    Lwf,
    #[serde(alias = "HAT")]
    Hat,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Mir, Strategy::Lwf, Strategy::Hat];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Mir => "mir",
            Strategy::Lwf => "lwf",
            Strategy::Hat => "hat",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown strategy {s:?}; valid names: mir, lwf, hat"
                ))
            })
    }
}

/// A subset of {MIR, LwF, HAT}; empty means naive fine-tuning.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct StrategySet(BTreeSet<Strategy>);

impl StrategySet {
    pub fn naive() -> Self {
        Self::default()
    }

    pub fn of(items: &[Strategy]) -> Self {
        StrategySet(items.iter().copied().collect())
    }

    pub fn contains(&self, s: Strategy) -> bool {
        self.0.contains(&s)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Strategy> + '_ {
        self.0.iter().copied()
    }

    /// All eight subsets, naive first.
    pub fn all_subsets() -> Vec<StrategySet> {
        (0..8u8)
            .map(|bits| {
                StrategySet(
                    Strategy::ALL
                        .into_iter()
                        .enumerate()
                        .filter(|(i, _)| bits & (1 << i) != 0)
                        .map(|(_, s)| s)
                        .collect(),
                )
            })
            .collect()
    }
}

impl fmt::Display for StrategySet {
    /// `naive`, or member names joined by `+` in mir, lwf, hat order.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("naive");
        }
        let names: Vec<&str> = self.0.iter().map(|s| s.name()).collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for StrategySet {
    type Err = Error;

    /// Accepts `naive`, an empty string, or names joined by `+` or `,`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("naive") {
            return Ok(Self::naive());
        }
        s.split(['+', ','])
            .map(|p| p.trim().parse())
            .collect::<Result<BTreeSet<_>>>()
            .map(StrategySet)
    }
}

impl TryFrom<Vec<String>> for StrategySet {
    type Error = Error;

    fn try_from(v: Vec<String>) -> Result<Self> {
        v.iter()
            .map(|s| s.parse())
            .collect::<Result<BTreeSet<_>>>()
            .map(StrategySet)
    }
}

impl From<StrategySet> for Vec<String> {
    fn from(s: StrategySet) -> Self {
        s.0.iter().map(|x| x.name().to_string()).collect()
    }
}

/// Strategy hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategyParams {
    /// Replay buffer capacity.
    pub capacity: usize,
    /// Replayed items per step; `None` uses the batch size.
    pub k: Option<usize>,
    /// Step size of MIR's virtual update.
    pub eta_virtual: f64,
    /// Buffer items scored per step; `None` scores the whole buffer.
    pub n_candidates: Option<usize>,
    pub temperature: f64,
    pub alpha_lwf: f64,
    /// Distill only over classes of tasks seen so far instead of the full head.
    pub lwf_seen_classes_only: bool,
    /// HAT gate slope.
    pub s: f64,
}

impl Default for StrategyParams {
    fn default() -> Self {
        StrategyParams {
            capacity: 500,
            k: None,
            eta_virtual: 0.1,
            n_candidates: None,
            temperature: 2.0,
            alpha_lwf: 1.0,
            lwf_seen_classes_only: false,
            s: 50.0,
        }
    }
}

impl StrategyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_virtual > 0.0) || !(self.temperature > 0.0) || !(self.s > 0.0) {
            return Err(Error::Config(
                "eta_virtual, temperature and s must be positive".into(),
            ));
        }
        if !(self.alpha_lwf >= 0.0) {
            return Err(Error::Config("alpha_lwf must be non-negative".into()));
        }
        if self.n_candidates == Some(0) {
            return Err(Error::Config("n_candidates must be at least 1".into()));
        }
        Ok(())
    }
}
