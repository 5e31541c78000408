use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Time source for rate limiting and backoff, swappable in tests.
pub trait Clock: Send + Sync {
    /// Time elapsed since the clock's own origin.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Virtual clock: `sleep` advances time instantly.
#[derive(Debug, Default)]
pub struct ManualClock {
    now: Mutex<Duration>,
}

impl ManualClock {
    pub fn advance(&self, d: Duration) {
        *self.now.lock().unwrap() += d;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn sleep(&self, d: Duration) {
        self.advance(d);
    }
}

/// Spaces calls at least `1 / rps` apart. Callers are serialized through a
/// mutex, so the guarantee holds across threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Option<Duration>>,
}

impl RateLimiter {
    /// `rps` of `f64::INFINITY` disables limiting.
    pub fn new(rps: f64) -> Self {
        assert!(rps > 0.0, "requests per second must be positive");
        let interval = if rps.is_infinite() {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(1.0 / rps)
        };
        RateLimiter {
            interval,
            next_slot: Mutex::new(None),
        }
    }

    pub fn interval(&self) -> Duration {
        self.interval
    }

    /// Blocks until the caller may issue one request.
    pub fn acquire(&self, clock: &dyn Clock) {
        let mut next = self.next_slot.lock().unwrap();
        let now = clock.now();
        let slot = match *next {
            Some(n) if n > now => {
                clock.sleep(n - now);
                n
            }
            _ => now,
        };
        *next = Some(slot + self.interval);
    }
}
