//! Per-(stream, policy) window assembly at the cloud.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::abe::{compute_sum, AbeError, TransformedCiphertext, WindowSum};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AccumulatorError {
    #[error("key {k} belongs to window {index}, which is already closed (next is {next})")]
    Stale { k: u64, index: u64, next: u64 },
    #[error("key {k} belongs to window {index}, more than one window ahead of {next}")]
    TooFarAhead { k: u64, index: u64, next: u64 },
    #[error("key {k} was already ingested")]
    Duplicate { k: u64 },
    #[error("window sum: {0}")]
    Sum(#[from] AbeError),
}

#[derive(Debug, Default, Clone)]
struct Slot {
    entries: BTreeMap<u64, BTreeMap<String, TransformedCiphertext>>,
    since: Option<Instant>,
}

impl Slot {
    fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A completed window: one aggregate per user that has all `β` entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlushedWindow {
    pub index: u64,
    pub sums: Vec<(String, WindowSum)>,
}

/// Buffers transformed ciphertexts of window `next` (and, to tolerate
/// reordering across one boundary, of window `next + 1`) until all `β`
/// keys of window `next` are present.
///
/// A missing tuple stalls its window: nothing is ever emitted for it, and
/// without [`expire_stalled`](Self::expire_stalled) nothing after it either.
#[derive(Debug, Clone)]
pub struct WindowAccumulator {
    alpha: u64,
    beta: u32,
    next: u64,
    current: Slot,
    lookahead: Slot,
}

impl WindowAccumulator {
    pub fn new(alpha: u64, beta: u32) -> Self {
        assert!(beta > 0, "window size must be positive");
        WindowAccumulator { alpha, beta, next: 0, current: Slot::default(), lookahead: Slot::default() }
    }

    pub fn alpha(&self) -> u64 {
        self.alpha
    }

    pub fn beta(&self) -> u32 {
        self.beta
    }

    /// Index of the window being filled.
    pub fn next_index(&self) -> u64 {
        self.next
    }

    /// First key of window `index`.
    pub fn window_start(&self, index: u64) -> u64 {
        self.alpha + index * self.beta as u64
    }

    /// All buffered ciphertexts, in key order.
    pub fn buffered(&self) -> impl Iterator<Item = (&u64, &String, &TransformedCiphertext)> + '_ {
        self.current
            .entries
            .iter()
            .chain(&self.lookahead.entries)
            .flat_map(|(k, users)| users.iter().map(move |(u, c)| (k, u, c)))
    }

    pub fn buffered_keys(&self) -> usize {
        self.current.entries.len() + self.lookahead.entries.len()
    }

    /// Records key `k` with every subscribed user's transformed ciphertext
    /// for it, and returns every window this completes. The key counts
    /// towards its window even when `entries` is empty, so windows keep
    /// advancing while nobody is subscribed. Keys below `α` are dropped
    /// without a trace.
    pub fn insert(
        &mut self,
        k: u64,
        entries: impl IntoIterator<Item = (String, TransformedCiphertext)>,
        now: Instant,
    ) -> Result<Vec<FlushedWindow>, AccumulatorError> {
        if k < self.alpha {
            return Ok(Vec::new());
        }
        let index = (k - self.alpha) / self.beta as u64;
        let slot = if index == self.next {
            &mut self.current
        } else if index == self.next + 1 {
            &mut self.lookahead
        } else if index < self.next {
            return Err(AccumulatorError::Stale { k, index, next: self.next });
        } else {
            return Err(AccumulatorError::TooFarAhead { k, index, next: self.next });
        };
        if slot.entries.contains_key(&k) {
            return Err(AccumulatorError::Duplicate { k });
        }
        slot.entries.insert(k, entries.into_iter().collect());
        slot.since.get_or_insert(now);
        self.drain_full()
    }

    fn drain_full(&mut self) -> Result<Vec<FlushedWindow>, AccumulatorError> {
        let mut out = Vec::new();
        while self.current.entries.len() == self.beta as usize {
            out.push(self.flush_current()?);
        }
        Ok(out)
    }

    fn flush_current(&mut self) -> Result<FlushedWindow, AccumulatorError> {
        let slot = std::mem::take(&mut self.current);
        let index = self.next;
        self.advance();
        let mut per_user: BTreeMap<&str, Vec<TransformedCiphertext>> = BTreeMap::new();
        for users in slot.entries.values() {
            for (u, c) in users {
                per_user.entry(u).or_default().push(*c);
            }
        }
        let mut sums = Vec::new();
        for (u, window) in per_user {
            // Users subscribed mid-window lack early entries and get nothing.
            if window.len() == self.beta as usize {
                sums.push((u.to_string(), compute_sum(&window, self.alpha, self.beta)?));
            }
        }
        Ok(FlushedWindow { index, sums })
    }

    fn advance(&mut self) {
        self.next += 1;
        self.current = std::mem::take(&mut self.lookahead);
    }

    /// Drops window `next` if the oldest buffered entry has waited at least
    /// `timeout`, without emitting anything for it. Returns the dropped
    /// indices and any window completed by the move.
    pub fn expire_stalled(
        &mut self,
        now: Instant,
        timeout: Duration,
    ) -> Result<(Vec<u64>, Vec<FlushedWindow>), AccumulatorError> {
        let mut dropped = Vec::new();
        let mut flushed = Vec::new();
        loop {
            let oldest = match (self.current.since, self.lookahead.since) {
                (Some(a), Some(b)) => a.min(b),
                (a, b) => match a.or(b) {
                    Some(t) => t,
                    None => break,
                },
            };
            if now.duration_since(oldest) < timeout {
                break;
            }
            dropped.push(self.next);
            self.advance();
            flushed.extend(self.drain_full()?);
            if self.current.is_empty() && self.lookahead.is_empty() {
                break;
            }
        }
        Ok((dropped, flushed))
    }
}
