//! Per-node interval books: which tasks occupy a node and when.
//!
//! Usage is piecewise constant between interval endpoints, so a placement is feasible
//! iff capacity holds at the candidate start and at every interval start inside the
//! candidate window.

/// Slack used for memory comparisons; core counts compare exactly.
pub(crate) fn within(used: f64, capacity: f64) -> bool {
    used <= capacity + 1e-9 * capacity.abs().max(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
    pub cores: u32,
    pub memory: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Capacity {
    pub cores: u32,
    pub memory: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NodeBook {
    intervals: Vec<Interval>,
}

impl NodeBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Latest end time on this node (0 when idle).
    pub fn frontier(&self) -> f64 {
        self.intervals.iter().map(|iv| iv.end).fold(0.0, f64::max)
    }

    pub fn insert(&mut self, interval: Interval) {
        self.intervals.push(interval);
    }

    /// Removes the most recently inserted interval.
    pub fn pop(&mut self) -> Option<Interval> {
        self.intervals.pop()
    }

    /// Cores and memory in use at instant `t` (half-open intervals).
    pub fn usage_at(&self, t: f64) -> (u64, f64) {
        self.intervals
            .iter()
            .filter(|iv| iv.start <= t && t < iv.end)
            .fold((0u64, 0.0), |(c, m), iv| (c + iv.cores as u64, m + iv.memory))
    }

    fn fits_window(&self, start: f64, end: f64, cores: u32, memory: f64, cap: Capacity) -> bool {
        let ok_at = |t: f64| {
            let (c, m) = self.usage_at(t);
            c + cores as u64 <= cap.cores as u64 && within(m + memory, cap.memory)
        };
        ok_at(start)
            && self
                .intervals
                .iter()
                .filter(|iv| iv.start > start && iv.start < end)
                .all(|iv| ok_at(iv.start))
    }

    /// Smallest `t >= ready` at which a `duration`-long request fits next to the
    /// booked intervals, or `None` when the request alone exceeds `cap`.
    ///
    /// Candidates are `ready` and every interval end after it.
    pub fn earliest_start(
        &self,
        ready: f64,
        duration: f64,
        cores: u32,
        memory: f64,
        cap: Capacity,
    ) -> Option<f64> {
        if cores > cap.cores || !within(memory, cap.memory) {
            return None;
        }
        let mut candidates: Vec<f64> = std::iter::once(ready)
            .chain(self.intervals.iter().map(|iv| iv.end).filter(|&e| e > ready))
            .collect();
        candidates.sort_by(f64::total_cmp);
        candidates.dedup();
        candidates
            .into_iter()
            .find(|&t| self.fits_window(t, t + duration, cores, memory, cap))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CAP: Capacity = Capacity {
        cores: 4,
        memory: 16.0,
    };

    fn iv(start: f64, end: f64, cores: u32) -> Interval {
        Interval {
            start,
            end,
            cores,
            memory: 0.0,
        }
    }

    #[test]
    fn empty_node_starts_immediately() {
        assert_eq!(NodeBook::new().earliest_start(0.0, 5.0, 1, 1.0, CAP), Some(0.0));
        assert_eq!(NodeBook::new().earliest_start(3.5, 5.0, 1, 1.0, CAP), Some(3.5));
    }

    #[test]
    fn blocked_until_full_interval_ends() {
        let mut b = NodeBook::new();
        b.insert(iv(0.0, 10.0, 4));
        assert_eq!(b.earliest_start(0.0, 2.0, 1, 0.0, CAP), Some(10.0));
    }

    #[test]
    fn oversized_request_is_infeasible() {
        assert_eq!(NodeBook::new().earliest_start(0.0, 1.0, 5, 0.0, CAP), None);
        assert_eq!(NodeBook::new().earliest_start(0.0, 1.0, 1, 17.0, CAP), None);
    }

    #[test]
    fn backfills_into_a_gap() {
        let mut b = NodeBook::new();
        b.insert(iv(0.0, 2.0, 4));
        b.insert(iv(5.0, 9.0, 4));
        assert_eq!(b.earliest_start(0.0, 3.0, 2, 0.0, CAP), Some(2.0));
        // Too long for the gap.
        assert_eq!(b.earliest_start(0.0, 4.0, 2, 0.0, CAP), Some(9.0));
    }

    #[test]
    fn shares_cores_when_capacity_allows() {
        let mut b = NodeBook::new();
        b.insert(iv(0.0, 10.0, 2));
        assert_eq!(b.earliest_start(0.0, 3.0, 2, 0.0, CAP), Some(0.0));
        assert_eq!(b.earliest_start(0.0, 3.0, 3, 0.0, CAP), Some(10.0));
    }

    #[test]
    fn memory_is_a_second_dimension() {
        let mut b = NodeBook::new();
        b.insert(Interval {
            start: 0.0,
            end: 4.0,
            cores: 1,
            memory: 12.0,
        });
        assert_eq!(b.earliest_start(0.0, 1.0, 1, 8.0, CAP), Some(4.0));
        assert_eq!(b.earliest_start(0.0, 1.0, 1, 4.0, CAP), Some(0.0));
    }
}
