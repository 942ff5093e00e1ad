use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LinkConfig;

/// One direction of a delayed link, in integer microseconds.
///
/// Each item is due at `send + delay + U(-jitter, jitter)`, raised to the
/// previous item's due time so the direction stays FIFO.
#[derive(Debug, Clone)]
pub struct DelayLine<T> {
    delay_us: u64,
    jitter_us: u64,
    rng: ChaCha8Rng,
    last_due: u64,
    queue: VecDeque<(u64, T)>,
}

impl<T> DelayLine<T> {
    pub fn new(config: &LinkConfig, seed: u64) -> Self {
        Self {
            delay_us: config.one_way_delay_ms * 1000,
            jitter_us: config.jitter_ms * 1000,
            rng: ChaCha8Rng::seed_from_u64(seed),
            last_due: 0,
            queue: VecDeque::new(),
        }
    }

    /// Queues `item` sent at `now_us`; returns its delivery time.
    pub fn push(&mut self, now_us: u64, item: T) -> u64 {
        let jitter = if self.jitter_us > 0 {
            self.rng.random_range(-(self.jitter_us as i64)..=self.jitter_us as i64)
        } else {
            0
        };
        let due = (now_us + self.delay_us).saturating_add_signed(jitter);
        let due = due.max(self.last_due).max(now_us);
        self.last_due = due;
        self.queue.push_back((due, item));
        due
    }

    /// Removes and returns every item due at or before `now_us`, in order.
    pub fn pop_due(&mut self, now_us: u64) -> Vec<T> {
        let mut out = Vec::new();
        while self.queue.front().is_some_and(|(due, _)| *due <= now_us) {
            out.push(self.queue.pop_front().expect("front exists").1);
        }
        out
    }

    pub fn next_due(&self) -> Option<u64> {
        self.queue.front().map(|(due, _)| *due)
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }
}
