//! Look-ahead value, shaped completion reward and group-relative advantage.

mod pbrs;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interface::{parse, SlotObservation};
use crate::model::{apply, check_transition, hit_rate, AssociationGraph, CacheState, JointAction, RequestSlot};

pub use pbrs::{joint_space_size, verify_pbrs, JointSpace, PbrsReport};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub horizon: usize,
    pub discount: f64,
    pub lambda_fmt: f64,
    pub lambda_opp: f64,
    pub epsilon: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            horizon: 10,
            discount: 0.9,
            lambda_fmt: -1.0,
            lambda_opp: -0.2,
            epsilon: 1e-4,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("reward: {m}")));
        if self.horizon < 1 {
            return bad("horizon must be at least 1");
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad("discount must lie in (0, 1]");
        }
        if !(self.lambda_fmt < 0.0) {
            return bad("lambda_fmt must be negative");
        }
        if !(self.lambda_opp < 0.0) {
            return bad("lambda_opp must be negative");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        Ok(())
    }
}

/// Normalized discounted mean of the hit rates of `cache` against the first
/// `horizon` slots of `peek`.
pub fn lookahead_value(
    cache: &CacheState,
    peek: &[RequestSlot],
    graph: &AssociationGraph,
    horizon: usize,
    discount: f64,
) -> Result<f64> {
    if peek.len() < horizon || horizon == 0 {
        return Err(Error::ShortLookahead {
            needed: horizon.max(1),
            available: peek.len(),
        });
    }
    let mut weight = 1.0;
    let (mut num, mut den) = (0.0, 0.0);
    for q in &peek[..horizon] {
        num += weight * hit_rate(cache, q, graph)?;
        den += weight;
        weight *= discount;
    }
    Ok(num / den)
}

/// `lookahead_value(after) - lookahead_value(before)` for a legal transition.
pub fn delta_perf(
    before: &CacheState,
    after: &CacheState,
    peek: &[RequestSlot],
    graph: &AssociationGraph,
    cfg: &RewardConfig,
) -> Result<f64> {
    if !check_transition(before, after) {
        return Err(Error::Transition(
            "delta_perf needs a single-swap transition".into(),
        ));
    }
    if before == after {
        return Ok(0.0);
    }
    let a = lookahead_value(after, peek, graph, cfg.horizon, cfg.discount)?;
    let b = lookahead_value(before, peek, graph, cfg.horizon, cfg.discount)?;
    Ok(a - b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    ValidWrite,
    ValidNoop,
    Invalid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub delta: f64,
    pub penalty: f64,
    pub total: f64,
    pub class: Classification,
    /// The expert wrote at some BS.
    pub expert_witness: bool,
}

/// Scores a completion against the frozen future. Invalid text gets
/// `lambda_fmt`; an all-NoOp answer while the expert writes gets
/// `lambda_opp`; the sum is clipped to [-1, 1].
pub fn score_completion(
    text: &str,
    obs: &SlotObservation,
    peek: &[RequestSlot],
    graph: &AssociationGraph,
    expert: &JointAction,
    cfg: &RewardConfig,
) -> Result<RewardBreakdown> {
    let expert_witness = expert.is_valid() && !expert.is_all_noop();
    let action = parse(text, obs);
    let (delta, penalty, class) = match &action {
        JointAction::Invalid(_) => (0.0, cfg.lambda_fmt, Classification::Invalid),
        a if a.is_all_noop() => {
            let penalty = if expert_witness { cfg.lambda_opp } else { 0.0 };
            (0.0, penalty, Classification::ValidNoop)
        }
        a => {
            let after = apply(obs.cache(), a, obs)?;
            let delta = delta_perf(obs.cache(), &after, peek, graph, cfg)?;
            (delta, 0.0, Classification::ValidWrite)
        }
    };
    Ok(RewardBreakdown {
        delta,
        penalty,
        total: (delta + penalty).clamp(-1.0, 1.0),
        class,
        expert_witness,
    })
}

/// `(r_i - mean) / (std + epsilon)` with the population standard deviation.
pub fn group_advantage(rewards: &[f64], epsilon: f64) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let scale = var.sqrt() + epsilon;
    rewards.iter().map(|r| (r - mean) / scale).collect()
}
