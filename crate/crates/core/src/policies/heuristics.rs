use crate::error::{Error, Result};
use crate::interface::{serialize, CompletionText, SlotObservation};
use crate::model::{AdmissibleSets, BsAction, CacheState, FileId, JointAction, RequestSlot};
use crate::traffic::{top_uncached, Instance};

use super::Policy;

/// Per-BS, per-file bookkeeping shared by the classical policies.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HeuristicBooks {
    /// Last slot in which the file was requested at the BS (0 = never).
    pub last_access: Vec<Vec<usize>>,
    /// Cumulative request count.
    pub counts: Vec<Vec<u64>>,
    /// Slot in which the file was last inserted at the BS (0 = never).
    pub inserted_at: Vec<Vec<usize>>,
}

impl HeuristicBooks {
    pub fn new(num_bs: usize, library_size: u32) -> Self {
        let f = library_size as usize;
        HeuristicBooks {
            last_access: vec![vec![0; f]; num_bs],
            counts: vec![vec![0; f]; num_bs],
            inserted_at: vec![vec![0; f]; num_bs],
        }
    }

    pub fn record_requests(&mut self, t: usize, requests: &RequestSlot) {
        for b in 0..requests.num_bs() {
            for (f, &n) in requests.counts(b) {
                self.last_access[b][f.index()] = t;
                self.counts[b][f.index()] += n as u64;
            }
        }
    }

    pub fn record_transition(&mut self, t: usize, before: &CacheState, after: &CacheState) {
        for b in 0..after.num_bs() {
            for (old, new) in before.slots(b).iter().zip(after.slots(b)) {
                if let (Some(f), true) = (new, old != new) {
                    self.inserted_at[b][f.index()] = t;
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeuristicKind {
    Lru,
    Lfu,
    Fifo,
}

/// Classical replacement: insert the most-requested uncached file of the
/// slot in place of the victim chosen by the kind's key (ties to the lower
/// file id).
#[derive(Clone, Debug)]
pub struct Heuristic {
    kind: HeuristicKind,
    books: Option<HeuristicBooks>,
}

impl Heuristic {
    pub fn new(kind: HeuristicKind) -> Self {
        Heuristic { kind, books: None }
    }

    pub fn books(&self) -> Option<&HeuristicBooks> {
        self.books.as_ref()
    }

    fn key(&self, books: &HeuristicBooks, b: usize, f: FileId) -> u64 {
        match self.kind {
            HeuristicKind::Lru => books.last_access[b][f.index()] as u64,
            HeuristicKind::Lfu => books.counts[b][f.index()],
            HeuristicKind::Fifo => books.inserted_at[b][f.index()] as u64,
        }
    }

    pub fn choose(&self, obs: &SlotObservation, books: &HeuristicBooks) -> JointAction {
        let cache = obs.cache();
        let actions = (0..cache.num_bs())
            .map(|b| {
                if !cache.is_full(b) {
                    return BsAction::NoOp;
                }
                let Some(insert) = top_uncached(cache, b, obs) else {
                    return BsAction::NoOp;
                };
                let victim = cache
                    .files(b)
                    .min_by_key(|&f| (self.key(books, b, f), f))
                    .expect("full cache");
                BsAction::Replace {
                    slot: cache.slot_of(b, victim).expect("cached"),
                    insert,
                    evict: victim,
                }
            })
            .collect();
        JointAction::Valid(actions)
    }
}

impl Policy for Heuristic {
    fn name(&self) -> String {
        match self.kind {
            HeuristicKind::Lru => "lru",
            HeuristicKind::Lfu => "lfu",
            HeuristicKind::Fifo => "fifo",
        }
        .to_string()
    }

    fn reset(&mut self, instance: &Instance) -> Result<()> {
        self.books = Some(HeuristicBooks::new(
            instance.num_bs(),
            instance.config.library_size,
        ));
        Ok(())
    }

    fn observe_requests(&mut self, t: usize, requests: &RequestSlot) {
        if let Some(books) = &mut self.books {
            books.record_requests(t, requests);
        }
    }

    fn observe_transition(&mut self, t: usize, before: &CacheState, after: &CacheState) {
        if let Some(books) = &mut self.books {
            books.record_transition(t, before, after);
        }
    }

    fn decide(
        &mut self,
        obs: &SlotObservation,
        _peek: Option<&[RequestSlot]>,
    ) -> Result<CompletionText> {
        let books = self
            .books
            .as_ref()
            .ok_or_else(|| Error::Config(format!("{} used before reset", self.name())))?;
        serialize(&self.choose(obs, books))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AssociationGraph;

    fn fid(x: u32) -> FileId {
        FileId::new(x).unwrap()
    }

    struct Fixture {
        obs: SlotObservation,
        books: HeuristicBooks,
    }

    // One BS holding {1, 2}; the current slot requests `now`.
    fn fixture(now: &[u32]) -> Fixture {
        let g = AssociationGraph::from_coverage(1, vec![vec![0]; now.len()]).unwrap();
        let ids: Vec<FileId> = now.iter().map(|&f| fid(f)).collect();
        let slot = RequestSlot::from_user_files(&ids, &g).unwrap();
        let cache = CacheState::from_slots(vec![vec![Some(fid(1)), Some(fid(2))]], 9).unwrap();
        Fixture {
            obs: SlotObservation::bare(20, &cache, &slot),
            books: HeuristicBooks::new(1, 9),
        }
    }

    fn swap(slot: usize, out: u32, insert: u32) -> JointAction {
        JointAction::Valid(vec![BsAction::Replace {
            slot,
            insert: fid(insert),
            evict: fid(out),
        }])
    }

    #[test]
    fn lru_evicts_least_recent() {
        let mut f = fixture(&[3]);
        f.books.last_access[0][0] = 15;
        f.books.last_access[0][1] = 19;
        assert_eq!(Heuristic::new(HeuristicKind::Lru).choose(&f.obs, &f.books), swap(1, 1, 3));
        f.books.last_access[0][0] = 19;
        f.books.last_access[0][1] = 15;
        assert_eq!(Heuristic::new(HeuristicKind::Lru).choose(&f.obs, &f.books), swap(2, 2, 3));
    }

    #[test]
    fn noop_without_candidate() {
        let f = fixture(&[1, 2, 2]);
        for kind in [HeuristicKind::Lru, HeuristicKind::Lfu, HeuristicKind::Fifo] {
            assert_eq!(Heuristic::new(kind).choose(&f.obs, &f.books), JointAction::all_noop(1));
        }
    }

    #[test]
    fn ties_go_to_lower_id() {
        let f = fixture(&[3]);
        for kind in [HeuristicKind::Lru, HeuristicKind::Lfu, HeuristicKind::Fifo] {
            assert_eq!(Heuristic::new(kind).choose(&f.obs, &f.books), swap(1, 1, 3));
        }
        // the cache order does not matter, only the id
        let g = AssociationGraph::from_coverage(1, vec![vec![0]]).unwrap();
        let slot = RequestSlot::from_user_files(&[fid(3)], &g).unwrap();
        let cache = CacheState::from_slots(vec![vec![Some(fid(7)), Some(fid(4))]], 9).unwrap();
        let obs = SlotObservation::bare(5, &cache, &slot);
        let books = HeuristicBooks::new(1, 9);
        assert_eq!(Heuristic::new(HeuristicKind::Lfu).choose(&obs, &books), swap(2, 4, 3));
    }

    #[test]
    fn lfu_and_fifo_keys() {
        let mut f = fixture(&[3]);
        f.books.counts[0][0] = 9;
        f.books.counts[0][1] = 4;
        f.books.inserted_at[0][0] = 8;
        f.books.inserted_at[0][1] = 2;
        assert_eq!(Heuristic::new(HeuristicKind::Lfu).choose(&f.obs, &f.books), swap(2, 2, 3));
        assert_eq!(Heuristic::new(HeuristicKind::Fifo).choose(&f.obs, &f.books), swap(2, 2, 3));
        f.books.inserted_at[0][0] = 1;
        assert_eq!(Heuristic::new(HeuristicKind::Fifo).choose(&f.obs, &f.books), swap(1, 1, 3));
    }

    #[test]
    fn candidate_is_highest_count_then_lower_id() {
        let f = fixture(&[6, 5, 6, 5, 4, 4, 4]);
        assert_eq!(Heuristic::new(HeuristicKind::Lru).choose(&f.obs, &f.books), swap(1, 1, 4));
        let f = fixture(&[6, 5, 6, 5]);
        assert_eq!(Heuristic::new(HeuristicKind::Lru).choose(&f.obs, &f.books), swap(1, 1, 5));
    }

    #[test]
    fn insertion_book_tracks_changed_slots() {
        let mut books = HeuristicBooks::new(1, 9);
        let a = CacheState::from_slots(vec![vec![Some(fid(1)), None]], 9).unwrap();
        let b = CacheState::from_slots(vec![vec![Some(fid(1)), Some(fid(5))]], 9).unwrap();
        let c = CacheState::from_slots(vec![vec![Some(fid(6)), Some(fid(5))]], 9).unwrap();
        books.record_transition(3, &a, &b);
        books.record_transition(7, &b, &c);
        assert_eq!(books.inserted_at[0][4], 3);
        assert_eq!(books.inserted_at[0][5], 7);
        assert_eq!(books.inserted_at[0][0], 0);
    }
}
