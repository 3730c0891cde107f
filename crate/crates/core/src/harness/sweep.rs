use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policies::PolicySpec;
use crate::traffic::{Instance, InstanceConfig};

use super::evaluate_instance;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    CacheCapacity,
    LibrarySize,
    ZipfAlpha,
    Users,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::CacheCapacity => "cache_capacity",
            SweepAxis::LibrarySize => "library_size",
            SweepAxis::ZipfAlpha => "zipf_alpha",
            SweepAxis::Users => "users",
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &InstanceConfig, value: f64) -> Result<InstanceConfig> {
        let integer = || {
            if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as u32)
            } else {
                Err(Error::Config(format!("{} needs a positive integer, got {value}", self.as_str())))
            }
        };
        let mut cfg = base.clone();
        match self {
            SweepAxis::CacheCapacity => cfg = cfg.with_capacity(integer()? as usize),
            SweepAxis::LibrarySize => cfg.library_size = integer()?,
            SweepAxis::ZipfAlpha => cfg.zipf_alpha = value,
            SweepAxis::Users => cfg.num_users = integer()? as usize,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cache_capacity" => Ok(SweepAxis::CacheCapacity),
            "library_size" => Ok(SweepAxis::LibrarySize),
            "zipf_alpha" => Ok(SweepAxis::ZipfAlpha),
            "users" => Ok(SweepAxis::Users),
            _ => Err(Error::Config(format!(
                "unknown sweep axis {s:?} (cache_capacity | library_size | zipf_alpha | users)"
            ))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One cell of a sweep table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub policy: String,
    pub seed: u64,
    pub checkpoint_mean: f64,
    pub series_mean: f64,
    pub invalid: usize,
}

/// Regenerates the instance for every `(value, seed)` and evaluates all
/// policies on it. Rows are ordered by value, seed, policy.
pub fn sweep(
    base: &InstanceConfig,
    axis: SweepAxis,
    values: &[f64],
    seeds: &[u64],
    policies: &[PolicySpec],
    slots: usize,
    extern_timeout: Duration,
) -> Result<Vec<SweepRow>> {
    let configs = values
        .iter()
        .map(|&v| axis.apply(base, v).map(|c| (v, c)))
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<(f64, &InstanceConfig, u64)> = configs
        .iter()
        .flat_map(|(v, c)| seeds.iter().map(move |&s| (*v, c, s)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(value, cfg, seed)| {
            let instance = Instance::build(cfg, seed)?;
            let reports = evaluate_instance(&instance, policies, slots, extern_timeout)?;
            Ok(reports
                .into_iter()
                .map(|r| SweepRow {
                    axis,
                    value,
                    policy: r.policy,
                    seed,
                    checkpoint_mean: r.checkpoint_mean,
                    series_mean: r.series_mean,
                    invalid: r.invalid,
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}
