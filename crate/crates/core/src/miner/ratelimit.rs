use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Token bucket shared by concurrent fetchers.
#[derive(Debug)]
pub struct RateLimiter {
    rate: f64,
    burst: f64,
    state: Mutex<Bucket>,
}

#[derive(Debug)]
struct Bucket {
    tokens: f64,
    last: Option<Instant>,
}

impl RateLimiter {
    pub const DEFAULT_RPS: f64 = 5.0;

    /// `rate` requests per second with a burst of `max(rate, 1)`. A rate of
    /// zero or less disables limiting.
    pub fn new(rate: f64) -> Self {
        let burst = rate.max(1.0);
        RateLimiter {
            rate,
            burst,
            state: Mutex::new(Bucket {
                tokens: burst,
                last: None,
            }),
        }
    }

    pub fn unlimited() -> Self {
        Self::new(0.0)
    }

    pub fn is_unlimited(&self) -> bool {
        self.rate <= 0.0
    }

    /// Take one token at time `now`, returning how long the caller must wait
    /// before proceeding.
    pub fn reserve_at(&self, now: Instant) -> Duration {
        if self.is_unlimited() {
            return Duration::ZERO;
        }
        let mut b = self.state.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(last) = b.last {
            let elapsed = now.saturating_duration_since(last).as_secs_f64();
            b.tokens = (b.tokens + elapsed * self.rate).min(self.burst);
        }
        b.last = Some(now.max(b.last.unwrap_or(now)));
        b.tokens -= 1.0;
        if b.tokens >= 0.0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(-b.tokens / self.rate)
        }
    }

    /// Block until a request may be sent.
    pub fn acquire(&self) {
        if self.is_unlimited() {
            return;
        }
        let wait = self.reserve_at(Instant::now());
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}
