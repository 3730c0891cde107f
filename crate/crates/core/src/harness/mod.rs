//! Frozen-trajectory evaluation: rollouts, multi-seed runs, sweeps and
//! report tables.

mod config;
mod report;
mod rollout;
mod sweep;
mod verify;

use std::time::Duration;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::policies::PolicySpec;
use crate::traffic::{warm_up, Instance, InstanceConfig};

pub use config::{RunConfig, CONFIG_VERSION};
pub use config::{InstanceSpec, Preset};
pub use report::{aggregate, read_reports, write_reports, write_sweep, AggregateRow};
pub use rollout::{
    checkpoint_slots, prefix_averages, rollout, EvalReport, CHECKPOINT_EVERY,
};
pub use sweep::{sweep, SweepAxis, SweepRow};
pub use verify::{
    check_growth, run_verify, sample_observations, GrowthSummary, VerifyConfig, VerifyReport,
};

/// Runs every policy on one instance, all from the same warm start.
pub fn evaluate_instance(
    instance: &Instance,
    policies: &[PolicySpec],
    slots: usize,
    extern_timeout: Duration,
) -> Result<Vec<EvalReport>> {
    let hash = instance.hash()?;
    log::info!("seed {} instance {hash}", instance.seed);
    let warm = warm_up(instance, instance.config.warmup)?;
    let reports = policies
        .par_iter()
        .map(|spec| {
            let mut policy = spec.build(extern_timeout)?;
            rollout::rollout(instance, &warm, policy.as_mut(), slots)
        })
        .collect::<Result<Vec<_>>>()?;
    for r in &reports {
        if r.instance_hash != hash {
            return Err(Error::Config(format!(
                "policy {} saw instance {} instead of {hash}",
                r.policy, r.instance_hash
            )));
        }
    }
    Ok(reports)
}

/// Builds one instance per seed and evaluates every policy on it. Reports
/// come back ordered by seed, then by policy order.
pub fn evaluate(
    config: &InstanceConfig,
    seeds: &[u64],
    policies: &[PolicySpec],
    slots: usize,
    extern_timeout: Duration,
) -> Result<Vec<EvalReport>> {
    let per_seed = seeds
        .par_iter()
        .map(|&seed| {
            let instance = Instance::build(config, seed)?;
            evaluate_instance(&instance, policies, slots, extern_timeout)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}
