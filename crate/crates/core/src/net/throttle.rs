//! Sender-side rate limiting.

use std::io::{self, Write};
use std::thread;
use std::time::{Duration, Instant};

/// Smallest bucket, one Ethernet MTU.
pub const MIN_BUCKET_BYTES: f64 = 1500.0;
/// Bucket depth expressed as time at the refill rate.
pub const BUCKET_DEPTH: Duration = Duration::from_millis(10);

static ZEROS: [u8; 64 * 1024] = [0; 64 * 1024];

/// Token bucket in bytes. Starts empty, so a transfer of `n` bytes that
/// begins with a fresh bucket never completes before `n / rate`.
#[derive(Debug, Clone)]
pub struct TokenBucket {
    rate_bps: f64,
    capacity: f64,
    tokens: f64,
    last: Instant,
}

impl TokenBucket {
    pub fn new(rate_bps: f64) -> Self {
        assert!(
            rate_bps.is_finite() && rate_bps > 0.0,
            "rate must be positive, got {rate_bps}"
        );
        TokenBucket {
            rate_bps,
            capacity: MIN_BUCKET_BYTES.max(rate_bps * BUCKET_DEPTH.as_secs_f64()),
            tokens: 0.0,
            last: Instant::now(),
        }
    }

    pub fn rate_bps(&self) -> f64 {
        self.rate_bps
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    fn refill(&mut self, now: Instant) {
        let elapsed = now.saturating_duration_since(self.last).as_secs_f64();
        self.tokens = (self.tokens + elapsed * self.rate_bps).min(self.capacity);
        self.last = now;
    }

    /// Takes `n` tokens (at most one bucket's worth) and returns how long the
    /// caller must wait before they are covered. The balance may go negative.
    pub fn reserve(&mut self, n: f64, now: Instant) -> Duration {
        debug_assert!(n <= self.capacity);
        self.refill(now);
        self.tokens -= n;
        if self.tokens >= 0.0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(-self.tokens / self.rate_bps)
        }
    }
}

/// Sends `payload_bytes` zero bytes through a fresh token bucket at `rate_bps`.
pub fn throttle<W: Write>(w: &mut W, payload_bytes: u64, rate_bps: f64) -> io::Result<Duration> {
    let start = Instant::now();
    let mut bucket = TokenBucket::new(rate_bps);
    let chunk_max = (bucket.capacity() as u64).clamp(1, ZEROS.len() as u64);
    let mut remaining = payload_bytes;
    while remaining > 0 {
        let n = remaining.min(chunk_max);
        let wait = bucket.reserve(n as f64, Instant::now());
        if !wait.is_zero() {
            thread::sleep(wait);
        }
        w.write_all(&ZEROS[..n as usize])?;
        remaining -= n;
    }
    w.flush()?;
    Ok(start.elapsed())
}
