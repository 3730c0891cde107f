//! Executable checks of the shaping guarantees and of joint action-space
//! growth.

use serde::Serialize;

use crate::dataset::{expert_trajectory, ExpertConfig};
use crate::error::Result;
use crate::interface::{serialize, SlotObservation};
use crate::model::{
    feasible_actions, nominal_action_count, with_replacement, BsAction, JointAction,
};
use crate::traffic::Instance;

use super::{delta_perf, lookahead_value, score_completion, RewardConfig};

const MAX_LISTED: usize = 50;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PbrsReport {
    pub seed: u64,
    pub slots: Vec<usize>,
    pub bs_checks: usize,
    pub write_pairs: usize,
    pub demotion_cases: usize,
    pub argmax_violations: usize,
    pub order_violations: usize,
    pub demotion_violations: usize,
    /// First violations in readable form.
    pub violations: Vec<String>,
    pub notes: Vec<String>,
}

impl PbrsReport {
    pub fn passed(&self) -> bool {
        self.argmax_violations == 0 && self.order_violations == 0 && self.demotion_violations == 0
    }

    fn flag(&mut self, message: String) {
        if self.violations.len() < MAX_LISTED {
            self.violations.push(message);
        }
    }
}

fn argmax_set(values: &[f64]) -> Vec<usize> {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..values.len()).filter(|&i| values[i] == best).collect()
}

/// Checks, at `samples` full-cache slots spread over the evaluation window
/// of the expert trajectory and for every BS:
/// (i) the actions maximizing the gain are exactly those maximizing the
/// post-action potential; (ii) shaped rewards order writes as the gain does;
/// (iii) when a positive-gain write exists and the expert writes, every such
/// write scores above zero and NoOp below zero.
pub fn verify_pbrs(instance: &Instance, cfg: &RewardConfig, samples: usize) -> Result<PbrsReport> {
    let mut report = PbrsReport {
        seed: instance.seed,
        ..PbrsReport::default()
    };
    if cfg.lambda_opp >= 0.0 {
        report.notes.push(format!(
            "lambda_opp = {} is not negative; strict demotion cannot hold",
            cfg.lambda_opp
        ));
    }
    if samples == 0 {
        return Ok(report);
    }
    let expert_cfg = ExpertConfig {
        horizon: cfg.horizon,
        discount: cfg.discount,
        warmup: instance.config.warmup,
    };
    let stride = (instance.config.slots / samples).max(1);
    let graph = &instance.graph;
    let mut index = 0usize;
    expert_trajectory(instance, &expert_cfg, |step| {
        let take = step.all_full && index.is_multiple_of(stride);
        index += 1;
        if !take {
            return Ok(true);
        }
        report.slots.push(step.slot);
        let obs = &step.observation;
        let cache = obs.cache();
        for b in 0..cache.num_bs() {
            report.bs_checks += 1;
            let actions = feasible_actions(cache, b, obs);
            let mut potential = Vec::with_capacity(actions.len());
            let mut gain = Vec::with_capacity(actions.len());
            let mut shaped = Vec::with_capacity(actions.len());
            for a in &actions {
                let after = with_replacement(cache, b, a);
                potential.push(lookahead_value(&after, step.peek, graph, cfg.horizon, cfg.discount)?);
                gain.push(delta_perf(cache, &after, step.peek, graph, cfg)?);
                let text = serialize(&single(obs, b, *a))?;
                shaped.push(
                    score_completion(text.as_str(), obs, step.peek, graph, &step.expert, cfg)?.total,
                );
            }
            let (ga, pa) = (argmax_set(&gain), argmax_set(&potential));
            if ga != pa {
                report.argmax_violations += 1;
                report.flag(format!(
                    "slot {} BS {}: argmax gain {ga:?} != argmax potential {pa:?}",
                    step.slot,
                    b + 1
                ));
            }
            // actions[0] is NoOp; the rest are writes
            for i in 1..actions.len() {
                for j in i + 1..actions.len() {
                    report.write_pairs += 1;
                    let by_gain = gain[i].partial_cmp(&gain[j]);
                    let by_shaped = shaped[i].partial_cmp(&shaped[j]);
                    if by_gain != by_shaped {
                        report.order_violations += 1;
                        report.flag(format!(
                            "slot {} BS {}: {:?} vs {:?} ordered {by_gain:?} by gain, {by_shaped:?} by shaped reward",
                            step.slot,
                            b + 1,
                            actions[i],
                            actions[j]
                        ));
                    }
                }
            }
            let witness = !step.expert.is_all_noop();
            for i in 1..actions.len() {
                if gain[i] > 0.0 && witness {
                    report.demotion_cases += 1;
                    if !(shaped[i] > 0.0 && 0.0 > shaped[0]) {
                        report.demotion_violations += 1;
                        report.flag(format!(
                            "slot {} BS {}: write {:?} shaped {} vs NoOp shaped {}",
                            step.slot,
                            b + 1,
                            actions[i],
                            shaped[i],
                            shaped[0]
                        ));
                    }
                }
            }
        }
        Ok(report.slots.len() < samples)
    })?;
    Ok(report)
}

fn single(obs: &SlotObservation, bs: usize, action: BsAction) -> JointAction {
    let mut actions = vec![BsAction::NoOp; obs.cache().num_bs()];
    actions[bs] = action;
    JointAction::Valid(actions)
}

/// Size of the joint action space at one state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct JointSpace {
    /// Feasible actions per BS.
    pub factors: Vec<usize>,
    /// `C_b * |R_t^(b)| + 1` per BS, counting already-cached requests.
    pub nominal_factors: Vec<usize>,
    /// Product of `factors`, saturating at `u128::MAX`.
    pub product: u128,
    pub nominal_product: u128,
    /// Every factor is at least 2.
    pub bound_applies: bool,
    /// `product >= 2^B`, when the bound applies.
    pub bound_holds: Option<bool>,
}

pub fn joint_space_size(obs: &SlotObservation) -> JointSpace {
    let cache = obs.cache();
    let nb = cache.num_bs();
    let factors: Vec<usize> = (0..nb).map(|b| feasible_actions(cache, b, obs).len()).collect();
    let nominal_factors: Vec<usize> = (0..nb).map(|b| nominal_action_count(cache, b, obs)).collect();
    let product_of = |v: &[usize]| v.iter().fold(1u128, |p, &x| p.saturating_mul(x as u128));
    let product = product_of(&factors);
    let bound_applies = factors.iter().all(|&x| x >= 2);
    let bound_holds = bound_applies.then(|| nb >= 128 || product >= 1u128 << nb);
    JointSpace {
        nominal_product: product_of(&nominal_factors),
        factors,
        nominal_factors,
        product,
        bound_applies,
        bound_holds,
    }
}
