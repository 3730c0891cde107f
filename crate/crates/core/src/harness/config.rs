use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policies::PolicySpec;
use crate::reward::RewardConfig;
use crate::traffic::InstanceConfig;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    TwoBs,
    FiveBs,
}

impl Preset {
    pub fn config(self) -> InstanceConfig {
        match self {
            Preset::TwoBs => InstanceConfig::two_bs(),
            Preset::FiveBs => InstanceConfig::five_bs(),
        }
    }
}

/// A preset with optional overrides.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceSpec {
    pub preset: Preset,
    pub num_users: Option<usize>,
    pub library_size: Option<u32>,
    /// Same capacity at every BS.
    pub capacity: Option<usize>,
    pub groups: Option<usize>,
    pub zipf_alpha: Option<f64>,
    pub windows: Option<Vec<usize>>,
    pub warmup: Option<usize>,
    /// Rollout length `T`.
    pub slots: Option<usize>,
    /// Look-ahead reserve at the end of the trace.
    pub horizon: Option<usize>,
}

impl InstanceSpec {
    pub fn resolve(&self) -> Result<InstanceConfig> {
        let mut c = self.preset.config();
        if let Some(v) = self.num_users {
            c.num_users = v;
        }
        if let Some(v) = self.library_size {
            c.library_size = v;
        }
        if let Some(v) = self.capacity {
            c = c.with_capacity(v);
        }
        if let Some(v) = self.groups {
            c.groups = v;
        }
        if let Some(v) = self.zipf_alpha {
            c.zipf_alpha = v;
        }
        if let Some(v) = &self.windows {
            c.windows = v.clone();
        }
        if let Some(v) = self.warmup {
            c.warmup = v;
        }
        if let Some(v) = self.slots {
            c.slots = v;
        }
        if let Some(v) = self.horizon {
            c.horizon = v;
        }
        c.validate()?;
        Ok(c)
    }
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

fn default_policies() -> Vec<PolicySpec> {
    ["oracle:1", "lru", "lfu", "fifo"]
        .iter()
        .map(|s| s.parse().expect("built-in spec"))
        .collect()
}

fn default_timeout_ms() -> u64 {
    30_000
}

/// Everything a `run` needs. Serialized as a versioned TOML document:
///
/// ```toml
/// version = 1
/// seeds = [1, 2, 3]
/// policies = ["oracle:1", "lru", "lfu", "fifo"]
/// output_dir = "out"
/// sft_records = 0
///
/// [instance]
/// preset = "two_bs"
/// slots = 300
///
/// [reward]
/// horizon = 10
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub instance: InstanceSpec,
    /// Pre-built instance documents; when present they replace `instance`
    /// and `seeds`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub instance_files: Vec<PathBuf>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicySpec>,
    #[serde(default)]
    pub reward: RewardConfig,
    #[serde(default = "default_timeout_ms")]
    pub extern_timeout_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Demonstration records to export per seed (0 = none).
    #[serde(default)]
    pub sft_records: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            instance: InstanceSpec::default(),
            instance_files: Vec::new(),
            seeds: default_seeds(),
            policies: default_policies(),
            reward: RewardConfig::default(),
            extern_timeout_ms: default_timeout_ms(),
            output_dir: None,
            sft_records: 0,
        }
    }
}

impl RunConfig {
    pub fn extern_timeout(&self) -> Duration {
        Duration::from_millis(self.extern_timeout_ms)
    }

    pub fn validate(&self) -> Result<InstanceConfig> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.reward.validate()?;
        if self.policies.is_empty() {
            return Err(Error::Config("no policies configured".into()));
        }
        if self.seeds.is_empty() && self.instance_files.is_empty() {
            return Err(Error::Config("no seeds configured".into()));
        }
        let cfg = self.instance.resolve()?;
        check_reserve(&cfg, &self.policies)?;
        Ok(cfg)
    }
}

/// The look-ahead of every oracle must fit in the trace reserve.
pub(crate) fn check_reserve(cfg: &InstanceConfig, policies: &[PolicySpec]) -> Result<()> {
    for p in policies {
        if let PolicySpec::Oracle { horizon, .. } = p {
            if *horizon > cfg.horizon {
                return Err(Error::Config(format!(
                    "policy {p} looks {horizon} slots ahead but the trace reserve is {}",
                    cfg.horizon
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = RunConfig::default().validate().unwrap();
        assert_eq!(cfg, InstanceConfig::two_bs());
    }

    #[test]
    fn overrides_apply() {
        let spec = InstanceSpec {
            preset: Preset::FiveBs,
            capacity: Some(20),
            zipf_alpha: Some(0.8),
            slots: Some(50),
            ..InstanceSpec::default()
        };
        let c = spec.resolve().unwrap();
        assert_eq!(c.num_bs, 5);
        assert_eq!(c.capacities, vec![20; 5]);
        assert_eq!(c.zipf_alpha, 0.8);
        assert_eq!(c.slots, 50);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = RunConfig {
            version: 2,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        c.version = 1;
        c.policies = vec!["oracle:20".parse().unwrap()];
        assert!(c.validate().is_err());
        c.policies.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = RunConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), c);
        assert!(serde_json::from_str::<RunConfig>(r#"{"version":1,"bogus":3}"#).is_err());
    }
}
