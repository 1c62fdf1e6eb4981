//! Admission control: token-bucket rate limiting plus an in-flight cap.
//!
//! Over any window the number of admitted requests never exceeds
//! `rate * window + burst`; the in-flight cap bounds outstanding work.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

/// Pure token-bucket arithmetic, driven by explicit timestamps so the bound
/// can be property-tested without a wall clock.
#[derive(Debug, Clone)]
pub struct TokenBucket {
    rate_per_sec: f64,
    burst: f64,
    tokens: f64,
    last_refill: f64,
}

impl TokenBucket {
    /// Starts full: an initial burst of up to `burst` requests is allowed.
    pub fn new(rate_per_sec: f64, burst: f64) -> Self {
        assert!(rate_per_sec > 0.0 && burst >= 1.0);
        TokenBucket {
            rate_per_sec,
            burst,
            tokens: burst,
            last_refill: 0.0,
        }
    }

    fn refill(&mut self, now_secs: f64) {
        if now_secs > self.last_refill {
            self.tokens =
                (self.tokens + (now_secs - self.last_refill) * self.rate_per_sec).min(self.burst);
            self.last_refill = now_secs;
        }
    }

    /// Take one token at `now_secs`, or report how long to wait.
    pub fn try_acquire(&mut self, now_secs: f64) -> Result<(), Duration> {
        self.refill(now_secs);
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            Ok(())
        } else {
            let deficit = 1.0 - self.tokens;
            Err(Duration::from_secs_f64(deficit / self.rate_per_sec))
        }
    }
}

struct LimiterState {
    bucket: TokenBucket,
    in_flight: usize,
}

/// Thread-safe limiter shared by all workers of a run.
pub struct RateLimiter {
    state: Mutex<LimiterState>,
    max_in_flight: usize,
    cond: Condvar,
    epoch: Instant,
}

impl RateLimiter {
    pub fn new(requests_per_second: f64, max_in_flight: usize) -> Self {
        RateLimiter {
            state: Mutex::new(LimiterState {
                bucket: TokenBucket::new(requests_per_second, max_in_flight.max(1) as f64),
                in_flight: 0,
            }),
            max_in_flight: max_in_flight.max(1),
            cond: Condvar::new(),
            epoch: Instant::now(),
        }
    }

    /// Block until both a rate token and an in-flight slot are available.
    /// The returned guard releases the slot on drop.
    pub fn admit(&self) -> InFlightGuard<'_> {
        let mut state = self.state.lock().unwrap();
        loop {
            while state.in_flight >= self.max_in_flight {
                state = self.cond.wait(state).unwrap();
            }
            let now = self.epoch.elapsed().as_secs_f64();
            match state.bucket.try_acquire(now) {
                Ok(()) => {
                    state.in_flight += 1;
                    return InFlightGuard { limiter: self };
                }
                Err(wait) => {
                    drop(state);
                    std::thread::sleep(wait.min(Duration::from_millis(50)));
                    state = self.state.lock().unwrap();
                }
            }
        }
    }

    pub fn in_flight(&self) -> usize {
        self.state.lock().unwrap().in_flight
    }
}

/// RAII slot held while a request is outstanding.
pub struct InFlightGuard<'a> {
    limiter: &'a RateLimiter,
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut state = self.limiter.state.lock().unwrap();
        state.in_flight -= 1;
        drop(state);
        self.limiter.cond.notify_one();
    }
}
