//! Seeded, lossy, delayed byte link standing in for the Bluetooth serial
//! connection.
//!
//! Loss is decided per `send` call, so a frame is either delivered whole or
//! not at all. Every call carries the simulation time; the link owns no
//! timers.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkConfig {
    pub base_latency_ms: f64,
    /// Uniform extra delay in `[0, jitter_ms]`.
    pub jitter_ms: f64,
    pub drop_probability: f64,
    /// Half-open `[start, end)` intervals, seconds, during which sends are lost.
    pub disconnect_windows: Vec<(f64, f64)>,
    pub seed: u64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self { base_latency_ms: 0.0, jitter_ms: 0.0, drop_probability: 0.0, disconnect_windows: Vec::new(), seed: 0 }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.base_latency_ms >= 0.0 && self.base_latency_ms.is_finite()) {
            return Err(format!("base latency must be >= 0, got {}", self.base_latency_ms));
        }
        if !(self.jitter_ms >= 0.0 && self.jitter_ms.is_finite()) {
            return Err(format!("jitter must be >= 0, got {}", self.jitter_ms));
        }
        if !(0.0..1.0).contains(&self.drop_probability) {
            return Err(format!("drop probability must be in [0, 1), got {}", self.drop_probability));
        }
        let mut prev_end = f64::NEG_INFINITY;
        for &(start, end) in &self.disconnect_windows {
            if !(start < end) || start < prev_end {
                return Err(format!("disconnect windows must be ordered and non-overlapping at ({start}, {end})"));
            }
            prev_end = end;
        }
        Ok(())
    }

    pub fn is_disconnected(&self, now: f64) -> bool {
        self.disconnect_windows.iter().any(|&(s, e)| s <= now && now < e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendOutcome {
    Queued,
    Dropped,
    Disconnected,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub sent_bytes: usize,
    pub delivered_bytes: usize,
    pub dropped_bytes: usize,
    pub disconnected_bytes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub at: f64,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone)]
struct InFlight {
    deliver_at: f64,
    seq: u64,
    bytes: Vec<u8>,
}

impl PartialEq for InFlight {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for InFlight {}

impl PartialOrd for InFlight {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for InFlight {
    // Reversed: BinaryHeap is a max-heap and we pop the earliest delivery.
    fn cmp(&self, other: &Self) -> Ordering {
        other.deliver_at.total_cmp(&self.deliver_at).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// One direction of the link.
#[derive(Debug, Clone)]
pub struct Link {
    config: LinkConfig,
    rng: ChaCha8Rng,
    queue: BinaryHeap<InFlight>,
    seq: u64,
    stats: LinkStats,
}

impl Link {
    /// `stream` selects an independent random sequence under the same seed.
    pub fn new(config: LinkConfig, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(stream);
        Self { config, rng, queue: BinaryHeap::new(), seq: 0, stats: LinkStats::default() }
    }

    pub fn config(&self) -> &LinkConfig {
        &self.config
    }

    pub fn stats(&self) -> LinkStats {
        self.stats
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }

    pub fn send(&mut self, bytes: &[u8], now: f64) -> SendOutcome {
        // Both draws happen on every call so the random stream position
        // depends only on the number of sends.
        let drop_draw: f64 = self.rng.random();
        let jitter_draw: f64 = self.rng.random();
        self.stats.sent_bytes += bytes.len();
        if self.config.is_disconnected(now) {
            self.stats.disconnected_bytes += bytes.len();
            return SendOutcome::Disconnected;
        }
        if drop_draw < self.config.drop_probability {
            self.stats.dropped_bytes += bytes.len();
            return SendOutcome::Dropped;
        }
        let delay_ms = self.config.base_latency_ms + self.config.jitter_ms * jitter_draw;
        self.queue.push(InFlight { deliver_at: now + delay_ms / 1000.0, seq: self.seq, bytes: bytes.to_vec() });
        self.seq += 1;
        SendOutcome::Queued
    }

    /// Every block due by `now`, in delivery order.
    pub fn poll_deliveries(&mut self, now: f64) -> Vec<Delivery> {
        let mut out = Vec::new();
        while self.queue.peek().is_some_and(|f| f.deliver_at <= now) {
            let f = self.queue.pop().expect("peeked");
            self.stats.delivered_bytes += f.bytes.len();
            out.push(Delivery { at: f.deliver_at, bytes: f.bytes });
        }
        out
    }

    pub fn poll(&mut self, now: f64) -> Vec<u8> {
        self.poll_deliveries(now).into_iter().flat_map(|d| d.bytes).collect()
    }
}

/// App-to-device and device-to-app directions sharing one configuration,
/// each with its own random stream.
#[derive(Debug, Clone)]
pub struct DuplexLink {
    pub uplink: Link,
    pub downlink: Link,
}

impl DuplexLink {
    pub fn new(config: LinkConfig) -> Self {
        Self { uplink: Link::new(config.clone(), 0), downlink: Link::new(config, 1) }
    }
}
