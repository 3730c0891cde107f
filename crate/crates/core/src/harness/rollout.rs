use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interface::parse;
use crate::model::{apply, hit_rate, JointAction};
use crate::policies::Policy;
use crate::traffic::{Instance, WarmStart};

/// Prefix-average checkpoints are taken every this many slots.
pub const CHECKPOINT_EVERY: usize = 50;

/// Result of one policy on one frozen instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    pub seed: u64,
    pub instance_hash: String,
    /// Hit rate of every evaluated slot, in order.
    pub series: Vec<f64>,
    /// `(t, prefix average at t)` for t = 50, 100, ... up to the rollout
    /// length (or the length itself when shorter than 50).
    pub checkpoints: Vec<(usize, f64)>,
    /// Mean of the checkpoint prefix averages.
    pub checkpoint_mean: f64,
    /// Mean of the whole series.
    pub series_mean: f64,
    pub writes: usize,
    pub invalid: usize,
    pub invalid_by_kind: BTreeMap<String, usize>,
    /// Wall-clock decision latency per slot, microseconds. Not part of the
    /// serialized report so that reports stay reproducible.
    #[serde(skip)]
    pub latency_us: Vec<u64>,
}

pub fn prefix_averages(series: &[f64]) -> Vec<f64> {
    let mut sum = 0.0;
    series
        .iter()
        .enumerate()
        .map(|(i, x)| {
            sum += x;
            sum / (i + 1) as f64
        })
        .collect()
}

pub fn checkpoint_slots(len: usize) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    if len < CHECKPOINT_EVERY {
        return vec![len];
    }
    (1..=len / CHECKPOINT_EVERY).map(|k| k * CHECKPOINT_EVERY).collect()
}

impl EvalReport {
    pub(crate) fn summarize(&mut self) {
        let prefix = prefix_averages(&self.series);
        self.checkpoints = checkpoint_slots(self.series.len())
            .into_iter()
            .map(|t| (t, prefix[t - 1]))
            .collect();
        self.checkpoint_mean = mean(self.checkpoints.iter().map(|c| c.1));
        self.series_mean = mean(self.series.iter().copied());
    }

    /// Recomputes the prefix checkpoints from the series.
    pub fn consistent(&self) -> bool {
        let prefix = prefix_averages(&self.series);
        let slots = checkpoint_slots(self.series.len());
        slots.len() == self.checkpoints.len()
            && slots
                .iter()
                .zip(&self.checkpoints)
                .all(|(&t, &(ct, v))| t == ct && (prefix[t - 1] - v).abs() <= 1e-12)
    }
}

pub(crate) fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Rolls `policy` out for `slots` slots from the warm start.
///
/// Per slot `t`: the frequency tracker folds in `Q^(t)`, the hit rate of
/// the current cache against `Q^(t)` is recorded, the policy sees the
/// observation and answers, and a Valid answer is executed after the
/// single-swap audit. Invalid answers leave the cache unchanged.
pub fn rollout(
    instance: &Instance,
    warm: &WarmStart<'_>,
    policy: &mut dyn Policy,
    slots: usize,
) -> Result<EvalReport> {
    let mut env = warm.environment.clone();
    if !std::ptr::eq(env.instance(), instance) {
        return Err(Error::Config("warm start belongs to another instance".into()));
    }
    let available = env.trace_len() - env.slot();
    let reserve = policy.lookahead().unwrap_or(0);
    if slots + reserve > available {
        return Err(Error::Config(format!(
            "{slots} slots plus look-ahead {reserve} exceed the {available} remaining trace slots"
        )));
    }
    policy.reset(instance)?;
    for step in &warm.steps {
        policy.observe_requests(step.slot, env.requests(step.slot));
        policy.observe_transition(step.slot, &step.before, &step.after);
    }

    let mut report = EvalReport {
        policy: policy.name(),
        seed: instance.seed,
        instance_hash: instance.hash()?,
        series: Vec::with_capacity(slots),
        checkpoints: Vec::new(),
        checkpoint_mean: 0.0,
        series_mean: 0.0,
        writes: 0,
        invalid: 0,
        invalid_by_kind: BTreeMap::new(),
        latency_us: Vec::with_capacity(slots),
    };
    for _ in 0..slots {
        let t = env.begin_slot()?;
        let requests = env.requests(t);
        report
            .series
            .push(hit_rate(env.cache(), requests, &instance.graph)?);
        policy.observe_requests(t, requests);
        let obs = env.observation();
        let peek = match policy.lookahead() {
            Some(h) => Some(env.peek(t, h)?),
            None => None,
        };
        let start = Instant::now();
        let completion = policy.decide(&obs, peek)?;
        report.latency_us.push(start.elapsed().as_micros() as u64);

        match parse(completion.as_str(), &obs) {
            JointAction::Invalid(reason) => {
                report.invalid += 1;
                *report
                    .invalid_by_kind
                    .entry(reason.kind.to_string())
                    .or_default() += 1;
                log::debug!("{} slot {t}: invalid: {}", report.policy, reason.detail);
            }
            action => {
                let before = env.cache().clone();
                let after = apply(&before, &action, &obs)?;
                env.commit(after.clone())?;
                report.writes += action
                    .actions()
                    .map_or(0, |a| a.iter().filter(|x| !x.is_noop()).count());
                policy.observe_transition(t, &before, &after);
            }
        }
    }
    report.summarize();
    Ok(report)
}
