//! The deterministic state-to-prompt encoder and the grammar-strict
//! text-to-action parser.
//!
//! Decision lines (ASCII, case-sensitive, one per BS, ascending):
//!
//! ```text
//! BS <b>: NOOP
//! BS <b>: SWAP slot=<z> out=<f_out> in=<f_in>
//! ```

pub mod fuzz;
mod parse;
mod prompt;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{AdmissibleSets, CacheState, FileId, RequestSlot};
use crate::traffic::FrequencyTracker;

pub use parse::{parse, serialize};
pub use prompt::{decode_prompt, encode, render_rate, INSTRUCTIONS};

/// Exact appearance rate `hits / span`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Rate {
    pub hits: u32,
    pub span: u32,
}

impl Rate {
    pub fn value(self) -> f64 {
        if self.span == 0 {
            0.0
        } else {
            self.hits as f64 / self.span as f64
        }
    }
}

/// Snapshot of the decision state at one slot: placement, per-BS request
/// counts and frequency features of every cached or requested file.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotObservation {
    slot: usize,
    cache: CacheState,
    requests: Vec<BTreeMap<FileId, u32>>,
    windows: Vec<usize>,
    frequencies: Vec<BTreeMap<FileId, Vec<Rate>>>,
}

impl SlotObservation {
    pub fn new(
        slot: usize,
        cache: &CacheState,
        requests: &RequestSlot,
        tracker: &FrequencyTracker,
    ) -> Self {
        let windows = tracker.windows().to_vec();
        let frequencies = (0..cache.num_bs())
            .map(|b| {
                let mut relevant: Vec<FileId> = cache.files(b).collect();
                relevant.extend(requests.counts(b).keys());
                relevant
                    .into_iter()
                    .map(|f| {
                        let rates = (0..windows.len())
                            .map(|wi| Rate {
                                hits: tracker.count(b, f, wi),
                                span: tracker.span(wi) as u32,
                            })
                            .collect();
                        (f, rates)
                    })
                    .collect()
            })
            .collect();
        SlotObservation {
            slot,
            cache: cache.clone(),
            requests: requests.all_counts().to_vec(),
            windows,
            frequencies,
        }
    }

    /// Observation without frequency features.
    pub fn bare(slot: usize, cache: &CacheState, requests: &RequestSlot) -> Self {
        SlotObservation {
            slot,
            cache: cache.clone(),
            requests: requests.all_counts().to_vec(),
            windows: Vec::new(),
            frequencies: vec![BTreeMap::new(); cache.num_bs()],
        }
    }

    pub(crate) fn from_parts(
        slot: usize,
        cache: CacheState,
        requests: Vec<BTreeMap<FileId, u32>>,
        windows: Vec<usize>,
        frequencies: Vec<BTreeMap<FileId, Vec<Rate>>>,
    ) -> Self {
        SlotObservation {
            slot,
            cache,
            requests,
            windows,
            frequencies,
        }
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn cache(&self) -> &CacheState {
        &self.cache
    }

    pub fn windows(&self) -> &[usize] {
        &self.windows
    }

    /// Frequency features of the relevant files at `bs`, one rate per window.
    pub fn frequencies(&self, bs: usize) -> &BTreeMap<FileId, Vec<Rate>> {
        &self.frequencies[bs]
    }

    /// Same observation at a different slot index.
    pub fn with_slot(&self, slot: usize) -> Self {
        SlotObservation {
            slot,
            ..self.clone()
        }
    }
}

impl AdmissibleSets for SlotObservation {
    fn num_bs(&self) -> usize {
        self.requests.len()
    }

    fn counts(&self, bs: usize) -> &BTreeMap<FileId, u32> {
        &self.requests[bs]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptText(String);

impl PromptText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn byte_len(&self) -> usize {
        self.0.len()
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for PromptText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Raw text produced by a policy; arbitrary input to the parser.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CompletionText(pub String);

impl CompletionText {
    pub fn new(text: impl Into<String>) -> Self {
        CompletionText(text.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CompletionText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
