use std::cmp::Ordering;
use std::collections::BinaryHeap;

struct Scheduled<E> {
    at: u64,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl<E> Eq for Scheduled<E> {}

impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Scheduled<E> {
    // reversed so the max-heap pops the earliest event first
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

/// Virtual millisecond clock with an event queue. Events fire in time order; equal
/// times fire in scheduling order.
pub struct SimClock<E> {
    now: u64,
    seq: u64,
    queue: BinaryHeap<Scheduled<E>>,
}

impl<E> SimClock<E> {
    pub fn new(start_ms: u64) -> Self {
        SimClock { now: start_ms, seq: 0, queue: BinaryHeap::new() }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    /// Schedules `event` at `at`, or now if `at` is already past.
    pub fn schedule(&mut self, at: u64, event: E) {
        let at = at.max(self.now);
        self.queue.push(Scheduled { at, seq: self.seq, event });
        self.seq += 1;
    }

    pub fn peek_time(&self) -> Option<u64> {
        self.queue.peek().map(|s| s.at)
    }

    /// Removes the next event and advances the clock to its time.
    pub fn pop(&mut self) -> Option<(u64, E)> {
        let s = self.queue.pop()?;
        self.now = s.at;
        Some((s.at, s.event))
    }

    /// Moves the clock forward without firing anything. Never moves it back.
    pub fn advance_to(&mut self, t: u64) {
        self.now = self.now.max(t);
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }
}
