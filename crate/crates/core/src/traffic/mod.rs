//! Frozen task instances: geometric topology with overlapping coverage,
//! grouped-Zipf demand, the pre-drawn request trace and the warm-start.
//!
//! Every random draw comes from ChaCha8 seeded with the instance seed, with
//! one independent stream per concern (see [`Stream`]), so the same
//! `(config, seed)` pair yields the same instance on every machine.

mod env;
mod tracker;
mod zipf;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{AssociationGraph, FileId, Point, RequestSlot};

pub use env::{warm_start, warm_up, Environment, WarmStart, WarmupStep, WARMUP_DISCOUNT, WARMUP_HORIZON};
pub(crate) use env::top_uncached;
pub use tracker::FrequencyTracker;
pub use zipf::{zipf_pmf, ZipfSampler};

pub const INSTANCE_SCHEMA: &str = "coopcache.instance/v1";

const USER_RESAMPLE_LIMIT: usize = 10_000;
const OVERLAP_RESAMPLE_LIMIT: usize = 100;

/// Independent ChaCha8 stream ids.
#[derive(Clone, Copy, Debug)]
#[repr(u64)]
pub enum Stream {
    Topology = 1,
    Groups = 2,
    Permutations = 3,
    Trace = 4,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// BS placement on the unit-square service area.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub bs_positions: Vec<Point>,
    pub radius: f64,
}

impl Layout {
    /// Two BSs side by side, five BSs as four corners plus a center; other
    /// counts fall back to a grid whose radius guarantees neighbour overlap.
    pub fn default_for(num_bs: usize) -> Layout {
        let p = Point::new;
        match num_bs {
            1 => Layout {
                bs_positions: vec![p(0.5, 0.5)],
                radius: 0.5,
            },
            2 => Layout {
                bs_positions: vec![p(0.35, 0.5), p(0.65, 0.5)],
                radius: 0.40,
            },
            5 => Layout {
                bs_positions: vec![
                    p(0.25, 0.25),
                    p(0.75, 0.25),
                    p(0.25, 0.75),
                    p(0.75, 0.75),
                    p(0.5, 0.5),
                ],
                radius: 0.38,
            },
            n => {
                let cols = (1..=n).find(|c| c * c >= n).unwrap_or(1);
                let rows = n.div_ceil(cols);
                let (sx, sy) = (1.0 / cols as f64, 1.0 / rows as f64);
                let bs_positions = (0..n)
                    .map(|i| p(((i % cols) as f64 + 0.5) * sx, ((i / cols) as f64 + 0.5) * sy))
                    .collect();
                Layout {
                    bs_positions,
                    radius: 0.75 * sx.max(sy),
                }
            }
        }
    }
}

/// Parameters of a task instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceConfig {
    pub num_bs: usize,
    pub num_users: usize,
    pub library_size: u32,
    /// Per-BS capacity `C_b`.
    pub capacities: Vec<usize>,
    pub groups: usize,
    pub zipf_alpha: f64,
    /// History windows for frequency features.
    pub windows: Vec<usize>,
    /// Warm-start length `T_w`.
    pub warmup: usize,
    /// Evaluated rollout slots `T`.
    pub slots: usize,
    /// Look-ahead reserve `H` appended to the trace.
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<Layout>,
}

impl InstanceConfig {
    /// Defaults of the two-BS scenario.
    pub fn two_bs() -> Self {
        InstanceConfig {
            num_bs: 2,
            num_users: 20,
            library_size: 100,
            capacities: vec![10; 2],
            groups: 3,
            zipf_alpha: 1.2,
            windows: vec![10, 100, 1000],
            warmup: 100,
            slots: 300,
            horizon: 10,
            layout: None,
        }
    }

    /// Defaults of the five-BS scenario.
    pub fn five_bs() -> Self {
        InstanceConfig {
            num_bs: 5,
            num_users: 40,
            capacities: vec![10; 5],
            ..Self::two_bs()
        }
    }

    pub fn with_capacity(mut self, capacity: usize) -> Self {
        self.capacities = vec![capacity; self.num_bs];
        self
    }

    pub fn trace_len(&self) -> usize {
        self.warmup + self.slots + self.horizon
    }

    pub fn resolved_layout(&self) -> Layout {
        self.layout
            .clone()
            .unwrap_or_else(|| Layout::default_for(self.num_bs))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_bs == 0 {
            return fail("at least one BS required".into());
        }
        if self.num_users == 0 {
            return fail("at least one user required".into());
        }
        if self.capacities.len() != self.num_bs {
            return fail(format!(
                "{} capacities for {} BSs",
                self.capacities.len(),
                self.num_bs
            ));
        }
        let max_c = self.capacities.iter().copied().max().unwrap_or(0);
        if self.library_size as usize <= max_c {
            return fail(format!(
                "library size {} must exceed every capacity (max {max_c})",
                self.library_size
            ));
        }
        if !(self.zipf_alpha > 0.0 && self.zipf_alpha.is_finite()) {
            return fail(format!("zipf alpha must be positive, got {}", self.zipf_alpha));
        }
        if self.groups == 0 {
            return fail("at least one popularity group required".into());
        }
        if self.windows.is_empty() || self.windows.contains(&0) {
            return fail("history windows must be non-empty and positive".into());
        }
        if let Some(layout) = &self.layout {
            if layout.bs_positions.len() != self.num_bs {
                return fail("layout has wrong number of BS positions".into());
            }
            if !(layout.radius > 0.0) {
                return fail("coverage radius must be positive".into());
            }
        }
        Ok(())
    }
}

/// Grouped-Zipf demand: each group ranks the library by its own permutation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandModel {
    pub alpha: f64,
    /// `permutations[g][r]` is the file at zero-based rank `r` for group `g`.
    pub permutations: Vec<Vec<FileId>>,
    pub user_groups: Vec<usize>,
}

impl DemandModel {
    pub fn groups(&self) -> usize {
        self.permutations.len()
    }

    /// Request probability of every file for group `g`, indexed by
    /// `FileId::index`.
    pub fn file_probabilities(&self, g: usize) -> Vec<f64> {
        let perm = &self.permutations[g];
        let pmf = zipf_pmf(perm.len(), self.alpha);
        let mut out = vec![0.0; perm.len()];
        for (rank, f) in perm.iter().enumerate() {
            out[f.index()] = pmf[rank];
        }
        out
    }
}

/// A frozen task: topology, demand tables and the full request trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub schema: String,
    pub seed: u64,
    pub config: InstanceConfig,
    pub graph: AssociationGraph,
    pub demand: DemandModel,
    /// `trace[t - 1][u]` is the file requested by user `u` at slot `t`.
    pub trace: Vec<Vec<FileId>>,
}

impl Instance {
    pub fn build(config: &InstanceConfig, seed: u64) -> Result<Instance> {
        config.validate()?;
        let mut config = config.clone();
        let layout = config.resolved_layout();
        config.layout = Some(layout.clone());

        let graph = sample_topology(&config, &layout, seed)?;

        let mut rng = stream_rng(seed, Stream::Groups);
        let user_groups: Vec<usize> = (0..config.num_users)
            .map(|_| rng.gen_range(0..config.groups))
            .collect();

        let mut rng = stream_rng(seed, Stream::Permutations);
        let permutations = (0..config.groups)
            .map(|_| {
                let mut perm: Vec<FileId> = (0..config.library_size as usize)
                    .map(FileId::from_index)
                    .collect();
                perm.shuffle(&mut rng);
                perm
            })
            .collect();
        let demand = DemandModel {
            alpha: config.zipf_alpha,
            permutations,
            user_groups,
        };

        let sampler = ZipfSampler::new(config.library_size as usize, config.zipf_alpha);
        let mut rng = stream_rng(seed, Stream::Trace);
        let trace = (0..config.trace_len())
            .map(|_| {
                demand
                    .user_groups
                    .iter()
                    .map(|&g| demand.permutations[g][sampler.sample(&mut rng)])
                    .collect()
            })
            .collect();

        Ok(Instance {
            schema: INSTANCE_SCHEMA.to_string(),
            seed,
            config,
            graph,
            demand,
            trace,
        })
    }

    pub fn num_bs(&self) -> usize {
        self.config.num_bs
    }

    pub fn trace_len(&self) -> usize {
        self.trace.len()
    }

    /// Requests of one-based slot `t`.
    pub fn request_slot(&self, t: usize) -> Result<RequestSlot> {
        let files = self
            .trace
            .get(t.wrapping_sub(1))
            .ok_or_else(|| Error::Dimension(format!("slot {t} outside trace")))?;
        RequestSlot::from_user_files(files, &self.graph)
    }

    pub fn request_slots(&self) -> Result<Vec<RequestSlot>> {
        (1..=self.trace_len()).map(|t| self.request_slot(t)).collect()
    }

    /// Canonical document: compact JSON in declaration key order plus a
    /// trailing newline.
    pub fn to_canonical_string(&self) -> Result<String> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_canonical_str(text: &str) -> Result<Instance> {
        let instance: Instance = serde_json::from_str(text)?;
        instance.validate()?;
        Ok(instance)
    }

    /// SHA-256 of the canonical document, hex encoded.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_canonical_string()?.as_bytes())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_canonical_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Instance> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_canonical_str(&text)
    }

    fn validate(&self) -> Result<()> {
        if self.schema != INSTANCE_SCHEMA {
            return Err(Error::Config(format!("unsupported schema tag {:?}", self.schema)));
        }
        self.config.validate()?;
        let c = &self.config;
        self.graph.validate()?;
        if self.graph.num_bs() != c.num_bs || self.graph.num_users() != c.num_users {
            return Err(Error::Dimension("graph does not match config".into()));
        }
        if self.demand.user_groups.len() != c.num_users
            || self.demand.permutations.len() != c.groups
            || self.demand.user_groups.iter().any(|&g| g >= c.groups)
        {
            return Err(Error::Dimension("demand model does not match config".into()));
        }
        for perm in &self.demand.permutations {
            let mut seen = vec![false; c.library_size as usize];
            if perm.len() != seen.len() {
                return Err(Error::Dimension("permutation length differs from F".into()));
            }
            for f in perm {
                match seen.get_mut(f.index()) {
                    Some(s) if !*s => *s = true,
                    _ => return Err(Error::Dimension("group ranking is not a permutation".into())),
                }
            }
        }
        if self.trace.len() != c.trace_len() {
            return Err(Error::Dimension(format!(
                "trace has {} slots, expected {}",
                self.trace.len(),
                c.trace_len()
            )));
        }
        for row in &self.trace {
            if row.len() != c.num_users || row.iter().any(|f| f.get() > c.library_size) {
                return Err(Error::Dimension("malformed trace row".into()));
            }
        }
        Ok(())
    }
}

fn sample_topology(config: &InstanceConfig, layout: &Layout, seed: u64) -> Result<AssociationGraph> {
    let mut rng = stream_rng(seed, Stream::Topology);
    let need_overlap = config.num_bs >= 2;
    for _ in 0..OVERLAP_RESAMPLE_LIMIT {
        let mut users = Vec::with_capacity(config.num_users);
        for u in 0..config.num_users {
            let mut placed = None;
            for _ in 0..USER_RESAMPLE_LIMIT {
                let p = Point::new(rng.gen::<f64>(), rng.gen::<f64>());
                let covered = layout
                    .bs_positions
                    .iter()
                    .any(|&b| b.distance_squared(p) <= layout.radius * layout.radius);
                if covered {
                    placed = Some(p);
                    break;
                }
            }
            users.push(placed.ok_or_else(|| {
                Error::Config(format!("user {u} could not be placed inside any coverage disc"))
            })?);
        }
        let graph = AssociationGraph::geometric(layout.bs_positions.clone(), users, layout.radius);
        if !need_overlap || graph.coverage().iter().any(|s| s.len() >= 2) {
            return Ok(graph);
        }
    }
    Err(Error::Config(
        "layout never produced a user covered by two BSs".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AdmissibleSets;

    fn small() -> InstanceConfig {
        InstanceConfig {
            slots: 20,
            warmup: 5,
            ..InstanceConfig::two_bs()
        }
    }

    #[test]
    fn defaults() {
        let two = InstanceConfig::two_bs();
        assert_eq!(
            (two.num_bs, two.num_users, two.library_size, two.groups),
            (2, 20, 100, 3)
        );
        assert_eq!(two.capacities, vec![10, 10]);
        assert_eq!(two.zipf_alpha, 1.2);
        assert_eq!(two.windows, vec![10, 100, 1000]);
        let five = InstanceConfig::five_bs();
        assert_eq!((five.num_bs, five.num_users), (5, 40));
        assert_eq!(five.capacities, vec![10; 5]);
    }

    #[test]
    fn build_is_deterministic() {
        let a = Instance::build(&small(), 7).unwrap();
        let b = Instance::build(&small(), 7).unwrap();
        assert_eq!(a.to_canonical_string().unwrap(), b.to_canonical_string().unwrap());
        let c = Instance::build(&small(), 8).unwrap();
        assert_ne!(a.hash().unwrap(), c.hash().unwrap());
    }

    #[test]
    fn every_user_covered_with_overlap() {
        for seed in 0..20 {
            for cfg in [InstanceConfig::two_bs(), InstanceConfig::five_bs()] {
                let inst = Instance::build(&cfg, seed).unwrap();
                assert!(inst.graph.coverage().iter().all(|s| !s.is_empty()));
                assert!(inst.graph.coverage().iter().any(|s| s.len() >= 2));
                assert_eq!(inst.trace.len(), cfg.trace_len());
            }
        }
    }

    #[test]
    fn fallback_layout_covers() {
        let cfg = InstanceConfig {
            num_bs: 4,
            capacities: vec![5; 4],
            ..small()
        };
        let inst = Instance::build(&cfg, 3).unwrap();
        assert_eq!(inst.graph.bs_positions().len(), 4);
        assert!(inst.graph.coverage().iter().any(|s| s.len() >= 2));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let inst = Instance::build(&InstanceConfig::five_bs(), 2).unwrap();
        let text = inst.to_canonical_string().unwrap();
        let back = Instance::from_canonical_str(&text).unwrap();
        assert_eq!(back, inst);
        assert_eq!(back.to_canonical_string().unwrap(), text);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = small();
        c.library_size = 10;
        assert!(matches!(Instance::build(&c, 1), Err(Error::Config(_))));
        let mut c = small();
        c.zipf_alpha = 0.0;
        assert!(Instance::build(&c, 1).is_err());
        let mut c = small();
        c.capacities = vec![10];
        assert!(Instance::build(&c, 1).is_err());
        let mut c = small();
        c.layout = Some(Layout {
            bs_positions: vec![Point::new(5.0, 5.0), Point::new(6.0, 6.0)],
            radius: 0.1,
        });
        assert!(matches!(Instance::build(&c, 1), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_tampered_documents() {
        let inst = Instance::build(&small(), 1).unwrap();
        let mut bad = inst.clone();
        bad.schema = "other/v9".into();
        assert!(Instance::from_canonical_str(&bad.to_canonical_string().unwrap()).is_err());
        let mut bad = inst.clone();
        bad.trace.pop();
        assert!(Instance::from_canonical_str(&bad.to_canonical_string().unwrap()).is_err());
        let mut bad = inst;
        bad.demand.permutations[0][0] = bad.demand.permutations[0][1];
        assert!(Instance::from_canonical_str(&bad.to_canonical_string().unwrap()).is_err());
    }

    #[test]
    fn group_probabilities_sum_to_one() {
        let inst = Instance::build(&small(), 4).unwrap();
        for g in 0..inst.demand.groups() {
            let s: f64 = inst.demand.file_probabilities(g).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn per_group_trace_frequencies_match_pmf() {
        let cfg = InstanceConfig {
            num_users: 30,
            library_size: 40,
            capacities: vec![5, 5],
            warmup: 0,
            slots: 12_000,
            horizon: 0,
            ..InstanceConfig::two_bs()
        };
        let inst = Instance::build(&cfg, 9).unwrap();
        for g in 0..inst.demand.groups() {
            let users: Vec<usize> = (0..cfg.num_users)
                .filter(|&u| inst.demand.user_groups[u] == g)
                .collect();
            let mut counts = vec![0usize; 40];
            let mut total = 0;
            for row in &inst.trace {
                for &u in &users {
                    counts[row[u].index()] += 1;
                    total += 1;
                }
            }
            if total < 100_000 {
                continue;
            }
            let p = inst.demand.file_probabilities(g);
            let linf = counts
                .iter()
                .zip(&p)
                .map(|(&c, &q)| (c as f64 / total as f64 - q).abs())
                .fold(0.0, f64::max);
            assert!(linf <= 0.01, "group {g}: {linf}");
        }
    }

    #[test]
    fn request_slots_follow_trace() {
        let inst = Instance::build(&small(), 5).unwrap();
        let slot = inst.request_slot(3).unwrap();
        for (u, f) in inst.trace[2].iter().enumerate() {
            for &b in inst.graph.covering(u) {
                assert!(slot.is_admissible(b, *f));
            }
        }
        assert!(inst.request_slot(0).is_err());
        assert!(inst.request_slot(inst.trace_len() + 1).is_err());
    }
}
