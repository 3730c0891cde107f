use std::sync::Arc;

use crate::error::{Error, Result};
use crate::interface::SlotObservation;
use crate::model::{check_transition, AdmissibleSets, CacheState, FileId, RequestSlot};
use crate::policies::oracle;

use super::{FrequencyTracker, Instance};

/// Horizon of the look-ahead expert used by the warm-start prefill.
pub const WARMUP_HORIZON: usize = 10;
pub const WARMUP_DISCOUNT: f64 = 0.9;

/// Slot-stepping state over a frozen instance.
///
/// Per slot `t`: [`Environment::begin_slot`] folds `Q^(t)` into the
/// frequency tracker while the cache still holds `X^(t)`; after a decision,
/// [`Environment::commit`] installs `X^(t+1)`.
#[derive(Clone, Debug)]
pub struct Environment<'a> {
    instance: &'a Instance,
    requests: Arc<Vec<RequestSlot>>,
    cache: CacheState,
    tracker: FrequencyTracker,
    slot: usize,
}

impl<'a> Environment<'a> {
    pub fn new(instance: &'a Instance) -> Result<Self> {
        let c = &instance.config;
        Ok(Environment {
            instance,
            requests: Arc::new(instance.request_slots()?),
            cache: CacheState::empty(&c.capacities, c.library_size),
            tracker: FrequencyTracker::new(c.num_bs, c.library_size, &c.windows),
            slot: 0,
        })
    }

    pub fn instance(&self) -> &'a Instance {
        self.instance
    }

    pub fn cache(&self) -> &CacheState {
        &self.cache
    }

    pub fn tracker(&self) -> &FrequencyTracker {
        &self.tracker
    }

    /// Last slot whose requests were folded in (0 before the first slot).
    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn trace_len(&self) -> usize {
        self.requests.len()
    }

    /// Requests of one-based slot `t`.
    pub fn requests(&self, t: usize) -> &RequestSlot {
        &self.requests[t - 1]
    }

    /// The frozen future `Q^(t+1..=t+h)`.
    pub fn peek(&self, t: usize, h: usize) -> Result<&[RequestSlot]> {
        let available = self.requests.len().saturating_sub(t);
        if h > available {
            return Err(Error::ShortLookahead {
                needed: h,
                available,
            });
        }
        Ok(&self.requests[t..t + h])
    }

    /// Starts the next slot and returns its index.
    pub fn begin_slot(&mut self) -> Result<usize> {
        let t = self.slot + 1;
        if t > self.requests.len() {
            return Err(Error::Dimension(format!("trace exhausted at slot {t}")));
        }
        self.tracker.advance(&self.requests[t - 1]);
        self.slot = t;
        Ok(t)
    }

    pub fn observation(&self) -> SlotObservation {
        SlotObservation::new(self.slot, &self.cache, self.requests(self.slot), &self.tracker)
    }

    /// Installs the next placement after auditing the single-swap constraint.
    pub fn commit(&mut self, next: CacheState) -> Result<()> {
        if !check_transition(&self.cache, &next) {
            return Err(Error::Transition(format!(
                "slot {}: transition violates capacity or single-swap limit",
                self.slot
            )));
        }
        self.cache = next;
        Ok(())
    }
}

/// One warm-up transition, kept so policies can replay their books.
#[derive(Clone, Debug)]
pub struct WarmupStep {
    pub slot: usize,
    pub before: CacheState,
    pub after: CacheState,
}

#[derive(Clone, Debug)]
pub struct WarmStart<'a> {
    pub environment: Environment<'a>,
    pub steps: Vec<WarmupStep>,
}

/// Runs the expert prefill for `warmup` slots. A BS with empty slots gets the
/// most-requested uncached file (ties to the lower id) in its lowest empty
/// slot; a full BS follows the look-ahead oracle.
pub fn warm_up(instance: &Instance, warmup: usize) -> Result<WarmStart<'_>> {
    let mut env = Environment::new(instance)?;
    if warmup > env.trace_len() {
        return Err(Error::Config(format!(
            "warm-up of {warmup} slots exceeds trace of {}",
            env.trace_len()
        )));
    }
    let mut steps = Vec::with_capacity(warmup);
    for _ in 0..warmup {
        let t = env.begin_slot()?;
        let before = env.cache().clone();
        let requests = env.requests(t);
        let horizon = WARMUP_HORIZON.min(env.trace_len() - t);
        let mut after = before.clone();
        for b in 0..before.num_bs() {
            if !before.is_full(b) {
                if let Some(file) = top_uncached(&before, b, requests) {
                    let slot = before.slots(b).iter().position(Option::is_none).unwrap() + 1;
                    after.insert_into_empty(b, slot, file)?;
                }
            } else if horizon > 0 {
                let peek = env.peek(t, horizon)?;
                let (action, _) = oracle::best_action(
                    &before,
                    b,
                    requests,
                    peek,
                    &instance.graph,
                    horizon,
                    WARMUP_DISCOUNT,
                )?;
                after = crate::model::with_replacement(&after, b, &action);
            }
        }
        env.commit(after.clone())?;
        steps.push(WarmupStep {
            slot: t,
            before,
            after,
        });
    }
    Ok(WarmStart {
        environment: env,
        steps,
    })
}

/// The post-warm-up cache and frequency tracker every policy starts from.
pub fn warm_start(instance: &Instance) -> Result<(CacheState, FrequencyTracker)> {
    let w = warm_up(instance, instance.config.warmup)?;
    Ok((w.environment.cache, w.environment.tracker))
}

/// Highest-count requested file not cached at `bs`; ties go to the lower id.
pub(crate) fn top_uncached<A: AdmissibleSets + ?Sized>(
    cache: &CacheState,
    bs: usize,
    requests: &A,
) -> Option<FileId> {
    requests
        .counts(bs)
        .iter()
        .filter(|(f, _)| !cache.holds(bs, **f))
        .max_by(|(fa, ca), (fb, cb)| ca.cmp(cb).then(fb.cmp(fa)))
        .map(|(f, _)| *f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::InstanceConfig;

    #[test]
    fn default_warmup_fills_every_cache() {
        for cfg in [InstanceConfig::two_bs(), InstanceConfig::five_bs()] {
            for seed in 1..=3 {
                let inst = Instance::build(&cfg, seed).unwrap();
                let (cache, tracker) = warm_start(&inst).unwrap();
                assert!(cache.all_full(), "seed {seed}");
                assert_eq!(tracker.slot(), 100);
            }
        }
    }

    #[test]
    fn zero_warmup_is_empty() {
        let cfg = InstanceConfig {
            warmup: 0,
            ..InstanceConfig::two_bs()
        };
        let inst = Instance::build(&cfg, 1).unwrap();
        let (cache, tracker) = warm_start(&inst).unwrap();
        assert_eq!(cache, CacheState::empty(&[10, 10], 100));
        assert_eq!(tracker.slot(), 0);
    }

    #[test]
    fn warm_start_is_deterministic() {
        let inst = Instance::build(&InstanceConfig::five_bs(), 2).unwrap();
        let a = warm_up(&inst, 100).unwrap();
        let b = warm_up(&inst, 100).unwrap();
        assert_eq!(a.environment.cache(), b.environment.cache());
        for (x, y) in a.steps.iter().zip(&b.steps) {
            assert_eq!(x.after, y.after);
        }
    }

    #[test]
    fn fill_prefers_highest_count_then_lower_id() {
        use crate::model::AssociationGraph;
        let g = AssociationGraph::from_coverage(1, vec![vec![0]; 5]).unwrap();
        let ids = |v: &[u32]| -> Vec<FileId> { v.iter().map(|&x| FileId::new(x).unwrap()).collect() };
        let slot = RequestSlot::from_user_files(&ids(&[9, 4, 4, 9, 2]), &g).unwrap();
        let cache = CacheState::empty(&[3], 10);
        assert_eq!(top_uncached(&cache, 0, &slot), FileId::new(4));
        let cache = CacheState::from_slots(vec![vec![FileId::new(4), None, None]], 10).unwrap();
        assert_eq!(top_uncached(&cache, 0, &slot), FileId::new(9));
    }

    #[test]
    fn every_warmup_transition_is_legal() {
        let inst = Instance::build(&InstanceConfig::two_bs(), 3).unwrap();
        let w = warm_up(&inst, 100).unwrap();
        for s in &w.steps {
            assert!(check_transition(&s.before, &s.after));
        }
    }
}
