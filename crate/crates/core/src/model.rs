//! Domain types for caches, requests and actions, plus the cooperative
//! hit-rate metric and the constraint checkers every other module builds on.
//!
//! Conventions: BS indices are zero-based in code and one-based in text;
//! cache slot indices are one-based everywhere (`1..=C_b`); file ids are
//! dense one-based integers (`1..=F`).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, FeasibilityError, Result, Rule};

/// Identifier of a content file, `1..=F`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct FileId(u32);

impl FileId {
    pub fn new(id: u32) -> Option<Self> {
        (id >= 1).then_some(FileId(id))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// Zero-based position in a length-`F` array.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(index: usize) -> Self {
        FileId(index as u32 + 1)
    }
}

impl TryFrom<u32> for FileId {
    type Error = String;

    fn try_from(value: u32) -> std::result::Result<Self, Self::Error> {
        FileId::new(value).ok_or_else(|| "file ids start at 1".to_string())
    }
}

impl From<FileId> for u32 {
    fn from(id: FileId) -> u32 {
        id.0
    }
}

impl fmt::Display for FileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    /// Squared Euclidean distance; plain IEEE arithmetic keeps coverage
    /// decisions identical on every platform.
    pub fn distance_squared(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Fixed user-to-BS coverage: `coverage[u]` is the ascending set of BSs
/// serving user `u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssociationGraph {
    num_bs: usize,
    radius: f64,
    bs_positions: Vec<Point>,
    user_positions: Vec<Point>,
    coverage: Vec<Vec<usize>>,
}

impl AssociationGraph {
    /// Connects every user to all BSs within `radius`.
    pub fn geometric(bs_positions: Vec<Point>, user_positions: Vec<Point>, radius: f64) -> Self {
        let coverage = user_positions
            .iter()
            .map(|&u| covering(&bs_positions, u, radius))
            .collect();
        AssociationGraph {
            num_bs: bs_positions.len(),
            radius,
            bs_positions,
            user_positions,
            coverage,
        }
    }

    /// Builds a graph directly from coverage sets, without geometry.
    pub fn from_coverage(num_bs: usize, coverage: Vec<Vec<usize>>) -> Result<Self> {
        let mut coverage = coverage;
        for (u, set) in coverage.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            if let Some(&b) = set.last() {
                if b >= num_bs {
                    return Err(Error::Dimension(format!(
                        "user {u} covered by BS index {b} but only {num_bs} BSs exist"
                    )));
                }
            }
        }
        Ok(AssociationGraph {
            num_bs,
            radius: 0.0,
            bs_positions: Vec::new(),
            user_positions: Vec::new(),
            coverage,
        })
    }

    pub fn num_bs(&self) -> usize {
        self.num_bs
    }

    pub fn num_users(&self) -> usize {
        self.coverage.len()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn bs_positions(&self) -> &[Point] {
        &self.bs_positions
    }

    pub fn user_positions(&self) -> &[Point] {
        &self.user_positions
    }

    /// BSs covering user `u`, ascending.
    pub fn covering(&self, u: usize) -> &[usize] {
        &self.coverage[u]
    }

    pub fn coverage(&self) -> &[Vec<usize>] {
        &self.coverage
    }

    /// Geometric graphs must have coverage consistent with positions.
    pub(crate) fn validate(&self) -> Result<()> {
        if self.bs_positions.is_empty() {
            return Ok(());
        }
        if self.bs_positions.len() != self.num_bs || self.user_positions.len() != self.coverage.len() {
            return Err(Error::Dimension("graph positions disagree with coverage".into()));
        }
        for (u, &p) in self.user_positions.iter().enumerate() {
            if covering(&self.bs_positions, p, self.radius) != self.coverage[u] {
                return Err(Error::Dimension(format!(
                    "coverage of user {u} does not match its position"
                )));
            }
        }
        Ok(())
    }
}

fn covering(bs_positions: &[Point], user: Point, radius: f64) -> Vec<usize> {
    bs_positions
        .iter()
        .enumerate()
        .filter(|(_, &p)| p.distance_squared(user) <= radius * radius)
        .map(|(b, _)| b)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Request {
    pub user: usize,
    pub file: FileId,
}

/// Anything that exposes per-BS admissible insertion sets.
pub trait AdmissibleSets {
    fn num_bs(&self) -> usize;

    /// Request counts `n_{b,f}` at BS `b`; only positive counts are stored.
    fn counts(&self, bs: usize) -> &BTreeMap<FileId, u32>;

    fn is_admissible(&self, bs: usize, file: FileId) -> bool {
        self.counts(bs).contains_key(&file)
    }
}

/// The user-request pairs of one slot with the per-BS counts derived from
/// the association graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RequestSlot {
    requests: Vec<Request>,
    counts: Vec<BTreeMap<FileId, u32>>,
}

impl RequestSlot {
    pub fn new(requests: Vec<Request>, graph: &AssociationGraph) -> Result<Self> {
        let mut counts = vec![BTreeMap::new(); graph.num_bs()];
        for r in &requests {
            if r.user >= graph.num_users() {
                return Err(Error::Dimension(format!(
                    "request from user {} but graph has {} users",
                    r.user,
                    graph.num_users()
                )));
            }
            for &b in graph.covering(r.user) {
                *counts[b].entry(r.file).or_insert(0) += 1;
            }
        }
        Ok(RequestSlot { requests, counts })
    }

    /// One request per user: user `u` asks for `files[u]`.
    pub fn from_user_files(files: &[FileId], graph: &AssociationGraph) -> Result<Self> {
        let requests = files
            .iter()
            .enumerate()
            .map(|(user, &file)| Request { user, file })
            .collect();
        Self::new(requests, graph)
    }

    pub fn requests(&self) -> &[Request] {
        &self.requests
    }

    pub fn num_requests(&self) -> usize {
        self.requests.len()
    }

    pub fn all_counts(&self) -> &[BTreeMap<FileId, u32>] {
        &self.counts
    }
}

impl AdmissibleSets for RequestSlot {
    fn num_bs(&self) -> usize {
        self.counts.len()
    }

    fn counts(&self, bs: usize) -> &BTreeMap<FileId, u32> {
        &self.counts[bs]
    }
}

/// Global placement: per-BS ordered slots plus the derived binary matrix X.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CacheState {
    library_size: u32,
    slots: Vec<Vec<Option<FileId>>>,
    occupancy: Vec<Vec<bool>>,
}

impl CacheState {
    pub fn empty(capacities: &[usize], library_size: u32) -> Self {
        CacheState {
            library_size,
            slots: capacities.iter().map(|&c| vec![None; c]).collect(),
            occupancy: vec![vec![false; library_size as usize]; capacities.len()],
        }
    }

    /// Builds a cache from explicit slot lists, rejecting duplicates and
    /// out-of-library files.
    pub fn from_slots(slots: Vec<Vec<Option<FileId>>>, library_size: u32) -> Result<Self> {
        let mut occupancy = vec![vec![false; library_size as usize]; slots.len()];
        for (b, row) in slots.iter().enumerate() {
            for f in row.iter().flatten() {
                if f.get() > library_size {
                    return Err(Error::Dimension(format!(
                        "file {f} outside library of size {library_size}"
                    )));
                }
                if std::mem::replace(&mut occupancy[b][f.index()], true) {
                    return Err(Error::Dimension(format!("file {f} cached twice at BS {}", b + 1)));
                }
            }
        }
        Ok(CacheState {
            library_size,
            slots,
            occupancy,
        })
    }

    pub fn num_bs(&self) -> usize {
        self.slots.len()
    }

    pub fn library_size(&self) -> u32 {
        self.library_size
    }

    pub fn capacity(&self, bs: usize) -> usize {
        self.slots[bs].len()
    }

    pub fn capacities(&self) -> Vec<usize> {
        self.slots.iter().map(Vec::len).collect()
    }

    pub fn slots(&self, bs: usize) -> &[Option<FileId>] {
        &self.slots[bs]
    }

    pub fn holds(&self, bs: usize, file: FileId) -> bool {
        self.occupancy[bs]
            .get(file.index())
            .copied()
            .unwrap_or(false)
    }

    /// Files cached at `bs`, in slot order.
    pub fn files(&self, bs: usize) -> impl Iterator<Item = FileId> + '_ {
        self.slots[bs].iter().flatten().copied()
    }

    pub fn occupancy(&self, bs: usize) -> usize {
        self.slots[bs].iter().filter(|s| s.is_some()).count()
    }

    pub fn is_full(&self, bs: usize) -> bool {
        self.slots[bs].iter().all(Option::is_some)
    }

    pub fn all_full(&self) -> bool {
        (0..self.num_bs()).all(|b| self.is_full(b))
    }

    /// One-based slot holding `file` at `bs`.
    pub fn slot_of(&self, bs: usize, file: FileId) -> Option<usize> {
        self.slots[bs]
            .iter()
            .position(|&s| s == Some(file))
            .map(|i| i + 1)
    }

    /// Row `x_b` of the occupancy matrix, indexed by `FileId::index`.
    pub fn row(&self, bs: usize) -> &[bool] {
        &self.occupancy[bs]
    }

    /// Places `file` into an empty one-based `slot`. Only the warm-up
    /// prefill uses this path.
    pub fn insert_into_empty(&mut self, bs: usize, slot: usize, file: FileId) -> Result<()> {
        if file.get() > self.library_size {
            return Err(Error::Dimension(format!("file {file} outside library")));
        }
        if self.holds(bs, file) {
            return Err(FeasibilityError {
                bs,
                rule: Rule::Duplication,
                detail: format!("file {file} already cached"),
            }
            .into());
        }
        match self.slots[bs].get_mut(slot.wrapping_sub(1)) {
            Some(cell @ None) => {
                *cell = Some(file);
                self.occupancy[bs][file.index()] = true;
                Ok(())
            }
            _ => Err(Error::Transition(format!(
                "slot {slot} of BS {} is not an empty slot",
                bs + 1
            ))),
        }
    }

    /// Overwrites one-based `slot` with `file` without any feasibility check.
    pub(crate) fn overwrite(&mut self, bs: usize, slot: usize, file: FileId) {
        if let Some(old) = self.slots[bs][slot - 1] {
            self.occupancy[bs][old.index()] = false;
        }
        self.slots[bs][slot - 1] = Some(file);
        self.occupancy[bs][file.index()] = true;
    }

    fn same_shape(&self, other: &CacheState) -> bool {
        self.library_size == other.library_size && self.capacities() == other.capacities()
    }
}

/// A single BS decision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BsAction {
    NoOp,
    /// Evict `evict` from one-based `slot` and store `insert` there.
    Replace {
        slot: usize,
        insert: FileId,
        evict: FileId,
    },
}

impl BsAction {
    pub fn is_noop(&self) -> bool {
        matches!(self, BsAction::NoOp)
    }
}

/// Machine-readable cause of an Invalid parse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidKind {
    Syntax,
    Count,
    Order,
    Admissibility,
    Duplication,
    Consistency,
}

impl InvalidKind {
    pub const ALL: [InvalidKind; 6] = [
        InvalidKind::Syntax,
        InvalidKind::Count,
        InvalidKind::Order,
        InvalidKind::Admissibility,
        InvalidKind::Duplication,
        InvalidKind::Consistency,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InvalidKind::Syntax => "syntax",
            InvalidKind::Count => "count",
            InvalidKind::Order => "order",
            InvalidKind::Admissibility => "admissibility",
            InvalidKind::Duplication => "duplication",
            InvalidKind::Consistency => "consistency",
        }
    }
}

impl From<Rule> for InvalidKind {
    fn from(rule: Rule) -> Self {
        match rule {
            Rule::Admissibility => InvalidKind::Admissibility,
            Rule::Duplication => InvalidKind::Duplication,
            Rule::Consistency => InvalidKind::Consistency,
        }
    }
}

impl fmt::Display for InvalidKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvalidReason {
    pub kind: InvalidKind,
    pub detail: String,
}

/// One decision per BS in ascending BS order, or the distinguished Invalid
/// value produced by the parser.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum JointAction {
    Valid(Vec<BsAction>),
    Invalid(InvalidReason),
}

impl JointAction {
    pub fn all_noop(num_bs: usize) -> Self {
        JointAction::Valid(vec![BsAction::NoOp; num_bs])
    }

    pub fn is_valid(&self) -> bool {
        matches!(self, JointAction::Valid(_))
    }

    pub fn is_all_noop(&self) -> bool {
        matches!(self, JointAction::Valid(a) if a.iter().all(BsAction::is_noop))
    }

    pub fn actions(&self) -> Option<&[BsAction]> {
        match self {
            JointAction::Valid(a) => Some(a),
            JointAction::Invalid(_) => None,
        }
    }

    pub fn invalid_kind(&self) -> Option<InvalidKind> {
        match self {
            JointAction::Invalid(r) => Some(r.kind),
            JointAction::Valid(_) => None,
        }
    }
}

/// Number of satisfied requests and number of requests in the slot.
pub fn hit_count(
    cache: &CacheState,
    requests: &RequestSlot,
    graph: &AssociationGraph,
) -> Result<(usize, usize)> {
    if cache.num_bs() != graph.num_bs() || requests.num_bs() != graph.num_bs() {
        return Err(Error::Dimension(format!(
            "cache has {} BSs, requests {}, graph {}",
            cache.num_bs(),
            requests.num_bs(),
            graph.num_bs()
        )));
    }
    let mut hits = 0;
    for r in requests.requests() {
        if r.user >= graph.num_users() {
            return Err(Error::Dimension(format!("user {} not in graph", r.user)));
        }
        if r.file.get() > cache.library_size() {
            return Err(Error::Dimension(format!("file {} outside library", r.file)));
        }
        if graph.covering(r.user).iter().any(|&b| cache.holds(b, r.file)) {
            hits += 1;
        }
    }
    Ok((hits, requests.num_requests()))
}

/// Cooperative hit rate: the fraction of requests whose file is cached at
/// some BS covering the requesting user. An empty slot scores 0.
pub fn hit_rate(cache: &CacheState, requests: &RequestSlot, graph: &AssociationGraph) -> Result<f64> {
    let (hits, total) = hit_count(cache, requests, graph)?;
    Ok(if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    })
}

/// Checks one BS action against the admissibility, non-duplication and
/// consistency rules.
pub fn check_bs_action<A: AdmissibleSets + ?Sized>(
    cache: &CacheState,
    bs: usize,
    action: &BsAction,
    requests: &A,
) -> Result<(), FeasibilityError> {
    let BsAction::Replace {
        slot,
        insert,
        evict,
    } = *action
    else {
        return Ok(());
    };
    let fail = |rule, detail: String| Err(FeasibilityError { bs, rule, detail });
    if !requests.is_admissible(bs, insert) {
        return fail(
            Rule::Admissibility,
            format!("file {insert} is not requested this slot"),
        );
    }
    if cache.holds(bs, insert) {
        return fail(Rule::Duplication, format!("file {insert} is already cached"));
    }
    match cache.slots(bs).get(slot.wrapping_sub(1)) {
        Some(Some(stored)) if *stored == evict => {}
        Some(Some(stored)) => {
            return fail(
                Rule::Consistency,
                format!("slot {slot} holds file {stored}, not {evict}"),
            )
        }
        Some(None) => return fail(Rule::Consistency, format!("slot {slot} is empty")),
        None => {
            return fail(
                Rule::Consistency,
                format!("slot {slot} outside 1..={}", cache.capacity(bs)),
            )
        }
    }
    if !cache.is_full(bs) {
        return fail(
            Rule::Consistency,
            "eviction from a cache with empty slots".to_string(),
        );
    }
    Ok(())
}

/// Executes a valid joint action. Every component must pass feasibility.
pub fn apply<A: AdmissibleSets + ?Sized>(
    cache: &CacheState,
    action: &JointAction,
    requests: &A,
) -> Result<CacheState> {
    let JointAction::Valid(actions) = action else {
        return Err(Error::InvalidAction);
    };
    if actions.len() != cache.num_bs() || requests.num_bs() != cache.num_bs() {
        return Err(Error::Dimension(format!(
            "{} actions for {} BSs",
            actions.len(),
            cache.num_bs()
        )));
    }
    for (b, a) in actions.iter().enumerate() {
        check_bs_action(cache, b, a, requests)?;
    }
    let mut next = cache.clone();
    for (b, a) in actions.iter().enumerate() {
        if let BsAction::Replace { slot, insert, .. } = *a {
            next.overwrite(b, slot, insert);
        }
    }
    Ok(next)
}

/// Copy of `cache` with a single feasible replacement applied at `bs`.
pub(crate) fn with_replacement(cache: &CacheState, bs: usize, action: &BsAction) -> CacheState {
    let mut next = cache.clone();
    if let BsAction::Replace { slot, insert, .. } = *action {
        next.overwrite(bs, slot, insert);
    }
    next
}

/// Every feasible action at `bs`: NoOp first, then replacements ordered by
/// `(slot, insert)`. Replacements exist only when the cache is full.
pub fn feasible_actions<A: AdmissibleSets + ?Sized>(
    cache: &CacheState,
    bs: usize,
    requests: &A,
) -> Vec<BsAction> {
    let mut actions = vec![BsAction::NoOp];
    if !cache.is_full(bs) {
        return actions;
    }
    let candidates: Vec<FileId> = requests
        .counts(bs)
        .keys()
        .copied()
        .filter(|&f| !cache.holds(bs, f))
        .collect();
    for (i, stored) in cache.slots(bs).iter().enumerate() {
        let evict = stored.expect("full cache");
        actions.extend(candidates.iter().map(|&insert| BsAction::Replace {
            slot: i + 1,
            insert,
            evict,
        }));
    }
    actions
}

/// The nominal local action-space size `C_b * |R_t^(b)| + 1`, which counts
/// requested files even when they are already cached.
pub fn nominal_action_count<A: AdmissibleSets + ?Sized>(
    cache: &CacheState,
    bs: usize,
    requests: &A,
) -> usize {
    cache.capacity(bs) * requests.counts(bs).len() + 1
}

/// Per-BS Hamming distance between two placements.
pub fn hamming(prev: &CacheState, next: &CacheState, bs: usize) -> usize {
    prev.row(bs)
        .iter()
        .zip(next.row(bs))
        .filter(|(a, b)| a != b)
        .count()
}

/// True iff every BS changes at most two matrix entries and `next` respects
/// capacity.
pub fn check_transition(prev: &CacheState, next: &CacheState) -> bool {
    if !prev.same_shape(next) {
        return false;
    }
    (0..prev.num_bs()).all(|b| hamming(prev, next, b) <= 2 && next.occupancy(b) <= next.capacity(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fid(id: u32) -> FileId {
        FileId::new(id).unwrap()
    }

    fn cache(rows: &[&[u32]], f: u32) -> CacheState {
        CacheState::from_slots(
            rows.iter()
                .map(|r| r.iter().map(|&x| (x > 0).then(|| fid(x))).collect())
                .collect(),
            f,
        )
        .unwrap()
    }

    fn slot(graph: &AssociationGraph, files: &[u32]) -> RequestSlot {
        let files: Vec<FileId> = files.iter().map(|&f| fid(f)).collect();
        RequestSlot::from_user_files(&files, graph).unwrap()
    }

    #[test]
    fn cooperative_hit_rate_example() {
        // u1 -> {BS1} wants 3, u2 -> {BS1, BS2} wants 7, u3 -> {BS2} wants 9.
        let graph = AssociationGraph::from_coverage(2, vec![vec![0], vec![0, 1], vec![1]]).unwrap();
        let c = cache(&[&[3], &[7]], 10);
        let r = slot(&graph, &[3, 7, 9]);
        assert_eq!(hit_count(&c, &r, &graph).unwrap(), (2, 3));
        assert!((hit_rate(&c, &r, &graph).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn hit_rate_empty_and_full() {
        let graph = AssociationGraph::from_coverage(2, vec![vec![0], vec![0, 1], vec![1]]).unwrap();
        let r = slot(&graph, &[3, 7, 9]);
        let empty = CacheState::empty(&[2, 2], 10);
        assert_eq!(hit_rate(&empty, &r, &graph).unwrap(), 0.0);
        let all = cache(&[&[3, 7], &[9, 0]], 10);
        assert_eq!(hit_rate(&all, &r, &graph).unwrap(), 1.0);
        let none = RequestSlot::new(vec![], &graph).unwrap();
        assert_eq!(hit_rate(&all, &none, &graph).unwrap(), 0.0);
    }

    #[test]
    fn hit_rate_rejects_mismatched_dimensions() {
        let graph = AssociationGraph::from_coverage(2, vec![vec![0]]).unwrap();
        let r = slot(&graph, &[1]);
        let c = CacheState::empty(&[1, 1, 1], 10);
        assert!(matches!(hit_rate(&c, &r, &graph), Err(Error::Dimension(_))));
        let small = CacheState::empty(&[1, 1], 0);
        assert!(matches!(hit_rate(&small, &r, &graph), Err(Error::Dimension(_))));
        assert!(RequestSlot::new(vec![Request { user: 4, file: fid(1) }], &graph).is_err());
    }

    #[test]
    fn request_counts_follow_coverage() {
        let graph = AssociationGraph::from_coverage(2, vec![vec![0], vec![0, 1], vec![1], vec![1]]).unwrap();
        let r = slot(&graph, &[5, 5, 5, 6]);
        assert_eq!(r.counts(0).get(&fid(5)), Some(&2));
        assert_eq!(r.counts(1).get(&fid(5)), Some(&2));
        assert_eq!(r.counts(1).get(&fid(6)), Some(&1));
        assert!(!r.is_admissible(0, fid(6)));
        let covered_by_1 = 3;
        assert_eq!(r.counts(1).values().sum::<u32>(), covered_by_1);
    }

    #[test]
    fn apply_single_swap() {
        let graph = AssociationGraph::from_coverage(1, vec![vec![0]]).unwrap();
        let c = cache(&[&[4, 7, 9]], 10);
        let r = slot(&graph, &[5]);
        let a = JointAction::Valid(vec![BsAction::Replace {
            slot: 2,
            insert: fid(5),
            evict: fid(7),
        }]);
        let next = apply(&c, &a, &r).unwrap();
        assert_eq!(next, cache(&[&[4, 5, 9]], 10));
        assert!(check_transition(&c, &next));
    }

    #[test]
    fn apply_noop_is_identity_and_invalid_is_rejected() {
        let graph = AssociationGraph::from_coverage(2, vec![vec![0, 1]]).unwrap();
        let c = cache(&[&[1, 2], &[3, 4]], 10);
        let r = slot(&graph, &[5]);
        assert_eq!(apply(&c, &JointAction::all_noop(2), &r).unwrap(), c);
        let invalid = JointAction::Invalid(InvalidReason {
            kind: InvalidKind::Syntax,
            detail: String::new(),
        });
        assert!(matches!(apply(&c, &invalid, &r), Err(Error::InvalidAction)));
        assert!(matches!(
            apply(&c, &JointAction::all_noop(3), &r),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn apply_reports_each_rule() {
        let graph = AssociationGraph::from_coverage(1, vec![vec![0], vec![0]]).unwrap();
        let c = cache(&[&[4, 7, 9]], 10);
        let r = slot(&graph, &[5, 9]);
        let run = |slot, insert, evict| {
            let a = JointAction::Valid(vec![BsAction::Replace {
                slot,
                insert: fid(insert),
                evict: fid(evict),
            }]);
            match apply(&c, &a, &r) {
                Err(Error::Feasibility(e)) => Some(e.rule),
                Ok(_) => None,
                Err(e) => panic!("unexpected {e}"),
            }
        };
        assert_eq!(run(2, 5, 8), Some(Rule::Consistency));
        assert_eq!(run(2, 6, 7), Some(Rule::Admissibility));
        assert_eq!(run(2, 9, 7), Some(Rule::Duplication));
        assert_eq!(run(4, 5, 7), Some(Rule::Consistency));
        assert_eq!(run(0, 5, 7), Some(Rule::Consistency));
        assert_eq!(run(2, 5, 7), None);
    }

    #[test]
    fn eviction_from_partial_cache_is_rejected() {
        let graph = AssociationGraph::from_coverage(1, vec![vec![0]]).unwrap();
        let c = cache(&[&[4, 0]], 10);
        let r = slot(&graph, &[5]);
        let a = JointAction::Valid(vec![BsAction::Replace {
            slot: 1,
            insert: fid(5),
            evict: fid(4),
        }]);
        assert!(apply(&c, &a, &r).is_err());
        assert_eq!(feasible_actions(&c, 0, &r), vec![BsAction::NoOp]);
    }

    #[test]
    fn feasible_action_counts() {
        // C=10, |R|=4, none cached -> 41 actions.
        let graph = AssociationGraph::from_coverage(1, vec![vec![0]; 4]).unwrap();
        let c = cache(&[&[1, 2, 3, 4, 5, 6, 7, 8, 9, 10]], 100);
        let r = slot(&graph, &[11, 12, 13, 14]);
        assert_eq!(feasible_actions(&c, 0, &r).len(), 41);
        assert_eq!(nominal_action_count(&c, 0, &r), 41);

        // R subset of cache -> only NoOp; the nominal count still counts them.
        let r = slot(&graph, &[1, 2, 3, 3]);
        assert_eq!(feasible_actions(&c, 0, &r), vec![BsAction::NoOp]);
        assert_eq!(nominal_action_count(&c, 0, &r), 31);
    }

    #[test]
    fn feasible_actions_small_enumeration() {
        // Brute force: all (z, in, out) triples filtered by the three rules.
        let graph = AssociationGraph::from_coverage(1, vec![vec![0], vec![0]]).unwrap();
        let c = cache(&[&[1, 2]], 5);
        let r = slot(&graph, &[2, 3]);
        let mut brute = vec![BsAction::NoOp];
        for z in 1..=2usize {
            for fin in 1..=5u32 {
                for fout in 1..=5u32 {
                    let a = BsAction::Replace {
                        slot: z,
                        insert: fid(fin),
                        evict: fid(fout),
                    };
                    if check_bs_action(&c, 0, &a, &r).is_ok() {
                        brute.push(a);
                    }
                }
            }
        }
        let got = feasible_actions(&c, 0, &r);
        assert_eq!(got, brute);
        assert_eq!(
            got,
            vec![
                BsAction::NoOp,
                BsAction::Replace { slot: 1, insert: fid(3), evict: fid(1) },
                BsAction::Replace { slot: 2, insert: fid(3), evict: fid(2) },
            ]
        );
    }

    #[test]
    fn transition_checks() {
        let a = cache(&[&[1, 2, 3], &[4, 5, 6]], 10);
        assert!(check_transition(&a, &a));
        let one_swap = cache(&[&[1, 9, 3], &[4, 5, 6]], 10);
        assert!(check_transition(&a, &one_swap));
        let two_swaps = cache(&[&[8, 9, 3], &[4, 5, 6]], 10);
        assert!(!check_transition(&a, &two_swaps));
        // Moving a file between slots leaves X unchanged.
        let reordered = cache(&[&[3, 2, 1], &[4, 5, 6]], 10);
        assert!(check_transition(&a, &reordered));
        let other_shape = cache(&[&[1, 2, 3]], 10);
        assert!(!check_transition(&a, &other_shape));
    }

    #[test]
    fn from_slots_rejects_duplicates() {
        assert!(CacheState::from_slots(vec![vec![Some(fid(1)), Some(fid(1))]], 5).is_err());
        assert!(CacheState::from_slots(vec![vec![Some(fid(6))]], 5).is_err());
    }

    #[derive(Debug, Clone)]
    struct Small {
        graph: AssociationGraph,
        cache: CacheState,
        files: Vec<FileId>,
    }

    fn small_instance() -> impl Strategy<Value = Small> {
        (1usize..=3, 2u32..=10, 1usize..=8, 1usize..=4).prop_flat_map(|(b, f, u, c)| {
            let coverage = prop::collection::vec(prop::collection::btree_set(0..b, 1..=b), u);
            let rows = prop::collection::vec(prop::collection::vec(prop::option::of(1..=f), c), b);
            let files = prop::collection::vec(1..=f, u);
            (coverage, rows, files).prop_map(move |(coverage, rows, files)| {
                let graph = AssociationGraph::from_coverage(
                    b,
                    coverage.into_iter().map(|s| s.into_iter().collect()).collect(),
                )
                .unwrap();
                let slots = rows
                    .into_iter()
                    .map(|row| {
                        let mut seen = std::collections::HashSet::new();
                        row.into_iter()
                            .map(|x| x.filter(|v| seen.insert(*v)).map(fid))
                            .collect()
                    })
                    .collect();
                Small {
                    graph,
                    cache: CacheState::from_slots(slots, f).unwrap(),
                    files: files.into_iter().map(fid).collect(),
                }
            })
        })
    }

    proptest! {
        #[test]
        fn hit_rate_matches_brute_force(s in small_instance()) {
            let r = RequestSlot::from_user_files(&s.files, &s.graph).unwrap();
            let mut hits = 0;
            for (u, f) in s.files.iter().enumerate() {
                let mut hit = false;
                for &b in s.graph.covering(u) {
                    for cached in s.cache.slots(b).iter().flatten() {
                        if cached == f {
                            hit = true;
                        }
                    }
                }
                hits += hit as usize;
            }
            let expected = hits as f64 / s.files.len() as f64;
            prop_assert_eq!(hit_rate(&s.cache, &r, &s.graph).unwrap(), expected);
        }

        #[test]
        fn hit_rate_monotone_under_enlargement(s in small_instance(), extra in 1u32..=10) {
            let r = RequestSlot::from_user_files(&s.files, &s.graph).unwrap();
            let before = hit_rate(&s.cache, &r, &s.graph).unwrap();
            let extra = fid(extra.min(s.cache.library_size()));
            for b in 0..s.cache.num_bs() {
                let mut slots: Vec<Vec<Option<FileId>>> =
                    (0..s.cache.num_bs()).map(|i| s.cache.slots(i).to_vec()).collect();
                if s.cache.holds(b, extra) {
                    continue;
                }
                slots[b].push(Some(extra));
                let bigger = CacheState::from_slots(slots, s.cache.library_size()).unwrap();
                prop_assert!(hit_rate(&bigger, &r, &s.graph).unwrap() >= before);
            }
        }

        #[test]
        fn enumerated_actions_always_apply(s in small_instance()) {
            let r = RequestSlot::from_user_files(&s.files, &s.graph).unwrap();
            for b in 0..s.cache.num_bs() {
                for a in feasible_actions(&s.cache, b, &r) {
                    let mut joint = vec![BsAction::NoOp; s.cache.num_bs()];
                    joint[b] = a;
                    let next = apply(&s.cache, &JointAction::Valid(joint), &r).unwrap();
                    prop_assert!(check_transition(&s.cache, &next));
                    for i in 0..next.num_bs() {
                        prop_assert!(next.occupancy(i) <= next.capacity(i));
                    }
                }
            }
        }
    }
}
