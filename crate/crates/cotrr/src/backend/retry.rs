use std::time::Duration;

use rand::Rng;

/// Exponential backoff with full jitter: before retry `n` (1-based) the
/// client sleeps a uniform random duration in `[0, initial * factor^(n-1)]`,
/// capped at `max_delay`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub max_attempts: u32,
    pub initial: Duration,
    pub factor: f64,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            initial: Duration::from_secs(1),
            factor: 2.0,
            max_delay: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    /// Upper bound of the jitter window before retry `retry` (1-based).
    pub fn ceiling(&self, retry: u32) -> Duration {
        let scale = self.factor.powi(retry.saturating_sub(1) as i32);
        let secs = (self.initial.as_secs_f64() * scale).min(self.max_delay.as_secs_f64());
        Duration::from_secs_f64(secs.max(0.0))
    }

    pub fn delay(&self, retry: u32, rng: &mut impl Rng) -> Duration {
        let ceiling = self.ceiling(retry).as_secs_f64();
        if ceiling <= 0.0 {
            return Duration::ZERO;
        }
        Duration::from_secs_f64(rng.random_range(0.0..=ceiling))
    }
}
