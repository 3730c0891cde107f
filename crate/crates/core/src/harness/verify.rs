use serde::Serialize;

use crate::dataset::{expert_trajectory, ExpertConfig};
use crate::error::Result;
use crate::interface::fuzz::{fuzz_parser, round_trip, FuzzReport, RoundTripReport};
use crate::interface::SlotObservation;
use crate::reward::{joint_space_size, verify_pbrs, PbrsReport, RewardConfig};
use crate::traffic::{Instance, InstanceConfig};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub seeds: Vec<u64>,
    /// Full-cache slots per seed for the shaping checks.
    pub samples: usize,
    pub fuzz_cases: usize,
    pub round_trips: usize,
    /// Observations per instance fed to the fuzzer.
    pub fuzz_states: usize,
    pub reward: RewardConfig,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seeds: vec![1, 2, 3],
            samples: 20,
            fuzz_cases: 100_000,
            round_trips: 1_000,
            fuzz_states: 30,
            reward: RewardConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GrowthSummary {
    pub num_bs: usize,
    pub slots: usize,
    /// Slots where every BS had at least two feasible actions.
    pub bound_applicable: usize,
    pub bound_violations: usize,
    pub min_product: Option<u128>,
    pub max_product: Option<u128>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub pbrs: Vec<PbrsReport>,
    pub growth: Vec<GrowthSummary>,
    pub fuzz: FuzzReport,
    pub round_trip: RoundTripReport,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.pbrs.iter().all(PbrsReport::passed)
            && self.growth.iter().all(|g| g.bound_violations == 0)
            && self.fuzz.passed()
            && self.round_trip.failures == 0
    }
}

/// Joint action-space growth over every slot of the expert trajectory.
pub fn check_growth(instance: &Instance) -> Result<GrowthSummary> {
    let mut g = GrowthSummary {
        num_bs: instance.num_bs(),
        ..GrowthSummary::default()
    };
    let horizon = instance.config.horizon;
    expert_trajectory(
        instance,
        &ExpertConfig {
            horizon,
            discount: 0.9,
            warmup: instance.config.warmup,
        },
        |step| {
            let js = joint_space_size(&step.observation);
            g.slots += 1;
            if let Some(holds) = js.bound_holds {
                g.bound_applicable += 1;
                if !holds {
                    g.bound_violations += 1;
                }
                g.min_product = Some(g.min_product.map_or(js.product, |m| m.min(js.product)));
                g.max_product = Some(g.max_product.map_or(js.product, |m| m.max(js.product)));
            }
            Ok(true)
        },
    )?;
    Ok(g)
}

/// Observations spread over the expert trajectory of `instance`.
pub fn sample_observations(instance: &Instance, count: usize) -> Result<Vec<SlotObservation>> {
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return Ok(out);
    }
    let stride = (instance.config.slots / count).max(1);
    let mut i = 0usize;
    expert_trajectory(instance, &ExpertConfig::for_instance(instance), |step| {
        if i.is_multiple_of(stride) {
            out.push(step.observation.clone());
        }
        i += 1;
        Ok(out.len() < count)
    })?;
    Ok(out)
}

/// Shaping checks on two-BS seeds, growth checks at both default scales,
/// and parser fuzzing over states drawn from both.
pub fn run_verify(cfg: &VerifyConfig) -> Result<VerifyReport> {
    use rayon::prelude::*;
    let two: Vec<Instance> = cfg
        .seeds
        .iter()
        .map(|&s| Instance::build(&InstanceConfig::two_bs(), s))
        .collect::<Result<_>>()?;
    let five: Vec<Instance> = cfg
        .seeds
        .iter()
        .map(|&s| Instance::build(&InstanceConfig::five_bs(), s))
        .collect::<Result<_>>()?;
    let pbrs = two
        .par_iter()
        .map(|inst| verify_pbrs(inst, &cfg.reward, cfg.samples))
        .collect::<Result<Vec<_>>>()?;
    let growth = two
        .par_iter()
        .chain(five.par_iter())
        .map(check_growth)
        .collect::<Result<Vec<_>>>()?;
    let observations: Vec<SlotObservation> = two
        .par_iter()
        .chain(five.par_iter())
        .map(|inst| sample_observations(inst, cfg.fuzz_states))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    Ok(VerifyReport {
        pbrs,
        growth,
        fuzz: fuzz_parser(&observations, cfg.fuzz_cases, seed),
        round_trip: round_trip(&observations, cfg.round_trips, seed),
    })
}
