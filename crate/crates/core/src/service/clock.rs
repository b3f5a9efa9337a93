//! Absolute-deadline tick scheduling.

use std::time::{Duration, Instant};

use super::protocol::TimingStats;

/// Ticks at whole multiples of `period` from a fixed start, so lateness in one
/// tick does not shift the following ones.
#[derive(Clone, Debug)]
pub struct TickClock {
    start: Instant,
    period: Duration,
    next: u64,
    stats: TimingStats,
    lateness_sum: f64,
}

/// Lateness within this bound counts as on time.
pub const ON_TIME_MS: f64 = 2.0;
/// Sleep this close to a deadline, then spin.
const SPIN: Duration = Duration::from_micros(300);

impl TickClock {
    pub fn new(rate: f64) -> Self {
        TickClock {
            start: Instant::now(),
            period: Duration::from_secs_f64(1.0 / rate),
            next: 0,
            stats: TimingStats::default(),
            lateness_sum: 0.0,
        }
    }

    /// Restarts the schedule from now.
    pub fn restart(&mut self) {
        self.start = Instant::now();
        self.next = 0;
    }

    pub fn deadline(&self, k: u64) -> Instant {
        self.start + self.period.mul_f64(k as f64)
    }

    /// Blocks until the next tick is due and returns its index. `idle` runs
    /// while waiting and may be called several times.
    pub fn wait<F: FnMut()>(&mut self, mut idle: F) -> u64 {
        let k = self.next;
        let deadline = self.deadline(k);
        loop {
            idle();
            let now = Instant::now();
            if now >= deadline {
                break;
            }
            let left = deadline - now;
            if left > SPIN {
                std::thread::sleep((left - SPIN).min(Duration::from_millis(1)));
            } else {
                std::hint::spin_loop();
            }
        }
        self.record(Instant::now().saturating_duration_since(deadline));
        self.next += 1;
        k
    }

    fn record(&mut self, late: Duration) {
        let ms = late.as_secs_f64() * 1e3;
        self.stats.ticks += 1;
        if ms <= ON_TIME_MS {
            self.stats.on_time += 1;
        }
        self.stats.max_lateness_ms = self.stats.max_lateness_ms.max(ms);
        self.lateness_sum += ms;
        self.stats.mean_lateness_ms = self.lateness_sum / self.stats.ticks as f64;
    }

    pub fn stats(&self) -> TimingStats {
        self.stats
    }
}
