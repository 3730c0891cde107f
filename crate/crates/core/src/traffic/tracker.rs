use std::collections::VecDeque;

use crate::model::{AdmissibleSets, FileId, RequestSlot};

/// Multi-window appearance rates `phi_{b,f}(w)`: the fraction of the last
/// `min(w, t)` slots in which file `f` was in the admissible set of BS `b`.
///
/// Counts are kept exactly; `rate` is `count / min(w, t)`.
#[derive(Clone, Debug)]
pub struct FrequencyTracker {
    windows: Vec<usize>,
    library_size: usize,
    slot: usize,
    // per processed slot, per BS: admissible files
    history: VecDeque<Vec<Vec<FileId>>>,
    // [window][bs][file index]
    counts: Vec<Vec<Vec<u32>>>,
}

impl FrequencyTracker {
    pub fn new(num_bs: usize, library_size: u32, windows: &[usize]) -> Self {
        FrequencyTracker {
            windows: windows.to_vec(),
            library_size: library_size as usize,
            slot: 0,
            history: VecDeque::new(),
            counts: vec![vec![vec![0; library_size as usize]; num_bs]; windows.len()],
        }
    }

    pub fn windows(&self) -> &[usize] {
        &self.windows
    }

    /// Number of slots folded in so far (the current `t`).
    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn num_bs(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    /// Folds the admissible sets of the next slot in.
    pub fn advance(&mut self, requests: &RequestSlot) {
        self.slot += 1;
        let sets: Vec<Vec<FileId>> = (0..requests.num_bs())
            .map(|b| requests.counts(b).keys().copied().collect())
            .collect();
        self.history.push_back(sets);
        let len = self.history.len();
        for (wi, &w) in self.windows.iter().enumerate() {
            let counts = &mut self.counts[wi];
            for (b, files) in self.history[len - 1].iter().enumerate() {
                for f in files {
                    counts[b][f.index()] += 1;
                }
            }
            if len > w {
                for (b, files) in self.history[len - 1 - w].iter().enumerate() {
                    for f in files {
                        counts[b][f.index()] -= 1;
                    }
                }
            }
        }
        let keep = self.windows.iter().copied().max().unwrap_or(0);
        while self.history.len() > keep {
            self.history.pop_front();
        }
    }

    /// Number of slots in window `window_index` containing `file` at `bs`.
    pub fn count(&self, bs: usize, file: FileId, window_index: usize) -> u32 {
        if file.index() >= self.library_size {
            return 0;
        }
        self.counts[window_index][bs][file.index()]
    }

    /// The denominator `min(w, t)`.
    pub fn span(&self, window_index: usize) -> usize {
        self.windows[window_index].min(self.slot)
    }

    pub fn rate(&self, bs: usize, file: FileId, window_index: usize) -> f64 {
        match self.span(window_index) {
            0 => 0.0,
            span => self.count(bs, file, window_index) as f64 / span as f64,
        }
    }
}
