//! Controllers behind one contract: classical heuristics, the look-ahead
//! oracle, and an adapter for external processes.

pub mod external;
pub mod heuristics;
pub mod oracle;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interface::{serialize, CompletionText, SlotObservation};
use crate::model::{CacheState, JointAction, RequestSlot};
use crate::traffic::Instance;

pub use external::{External, ExternalConfig};
pub use heuristics::{Heuristic, HeuristicBooks, HeuristicKind};
pub use oracle::{best_action, oracle_joint, Oracle};

/// Uniform controller contract. Per slot the harness calls
/// `observe_requests`, then `decide`, then `observe_transition` if the
/// decision was executed.
pub trait Policy: Send {
    fn name(&self) -> String;

    /// Prepares for a rollout over `instance`.
    fn reset(&mut self, instance: &Instance) -> Result<()>;

    fn observe_requests(&mut self, _t: usize, _requests: &RequestSlot) {}

    fn observe_transition(&mut self, _t: usize, _before: &CacheState, _after: &CacheState) {}

    /// Horizon of the frozen future this policy reads. Only oracles peek.
    fn lookahead(&self) -> Option<usize> {
        None
    }

    fn decide(
        &mut self,
        obs: &SlotObservation,
        peek: Option<&[RequestSlot]>,
    ) -> Result<CompletionText>;
}

/// Keeps the warm-started cache forever.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoOp;

impl Policy for NoOp {
    fn name(&self) -> String {
        "noop".to_string()
    }

    fn reset(&mut self, _instance: &Instance) -> Result<()> {
        Ok(())
    }

    fn decide(
        &mut self,
        obs: &SlotObservation,
        _peek: Option<&[RequestSlot]>,
    ) -> Result<CompletionText> {
        serialize(&JointAction::all_noop(obs.cache().num_bs()))
    }
}

/// Policy selector: `lru`, `lfu`, `fifo`, `noop`, `oracle:H[:gamma]` or
/// `extern:<command>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PolicySpec {
    Lru,
    Lfu,
    Fifo,
    NoOp,
    Oracle { horizon: usize, discount: f64 },
    Extern { command: String },
}

pub const DEFAULT_ORACLE_DISCOUNT: f64 = 0.9;

impl PolicySpec {
    pub fn build(&self, extern_timeout: Duration) -> Result<Box<dyn Policy>> {
        Ok(match self {
            PolicySpec::Lru => Box::new(Heuristic::new(HeuristicKind::Lru)),
            PolicySpec::Lfu => Box::new(Heuristic::new(HeuristicKind::Lfu)),
            PolicySpec::Fifo => Box::new(Heuristic::new(HeuristicKind::Fifo)),
            PolicySpec::NoOp => Box::new(NoOp),
            PolicySpec::Oracle { horizon, discount } => Box::new(Oracle::new(*horizon, *discount)?),
            PolicySpec::Extern { command } => Box::new(External::new(ExternalConfig::from_command(
                command,
                extern_timeout,
            )?)),
        })
    }
}

impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown policy {s:?}"));
        Ok(match s {
            "lru" => PolicySpec::Lru,
            "lfu" => PolicySpec::Lfu,
            "fifo" => PolicySpec::Fifo,
            "noop" => PolicySpec::NoOp,
            _ => {
                if let Some(command) = s.strip_prefix("extern:") {
                    if command.trim().is_empty() {
                        return Err(Error::Config("extern: needs a command".into()));
                    }
                    PolicySpec::Extern {
                        command: command.to_string(),
                    }
                } else if let Some(rest) = s.strip_prefix("oracle:") {
                    let (h, g) = match rest.split_once(':') {
                        Some((h, g)) => (h, Some(g)),
                        None => (rest, None),
                    };
                    let horizon: usize = h.parse().map_err(|_| bad())?;
                    let discount = match g {
                        Some(g) => g.parse().map_err(|_| bad())?,
                        None => DEFAULT_ORACLE_DISCOUNT,
                    };
                    Oracle::new(horizon, discount)?;
                    PolicySpec::Oracle { horizon, discount }
                } else {
                    return Err(bad());
                }
            }
        })
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Lru => f.write_str("lru"),
            PolicySpec::Lfu => f.write_str("lfu"),
            PolicySpec::Fifo => f.write_str("fifo"),
            PolicySpec::NoOp => f.write_str("noop"),
            PolicySpec::Oracle { horizon, discount } if *discount == DEFAULT_ORACLE_DISCOUNT => {
                write!(f, "oracle:{horizon}")
            }
            PolicySpec::Oracle { horizon, discount } => write!(f, "oracle:{horizon}:{discount}"),
            PolicySpec::Extern { command } => write!(f, "extern:{command}"),
        }
    }
}

impl TryFrom<String> for PolicySpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PolicySpec> for String {
    fn from(p: PolicySpec) -> String {
        p.to_string()
    }
}
