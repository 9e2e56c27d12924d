use mima_twin::link::{DuplexLink, Link, LinkConfig, SendOutcome};
use proptest::prelude::*;

fn cfg(latency: f64, jitter: f64, drop: f64, seed: u64) -> LinkConfig {
    LinkConfig { base_latency_ms: latency, jitter_ms: jitter, drop_probability: drop, disconnect_windows: vec![], seed }
}

/// Send one numbered message every 10 ms for `n` messages, polling each
/// step, and return (send index, delivery time) pairs.
fn drive(link: &mut Link, n: u32) -> Vec<(u32, f64)> {
    let mut out = Vec::new();
    let mut now = 0.0;
    for i in 0..n {
        link.send(&i.to_be_bytes(), now);
        for d in link.poll_deliveries(now) {
            out.push((u32::from_be_bytes(d.bytes.try_into().unwrap()), d.at));
        }
        now += 0.01;
    }
    for d in link.poll_deliveries(f64::INFINITY) {
        out.push((u32::from_be_bytes(d.bytes.try_into().unwrap()), d.at));
    }
    out
}

proptest! {
    #[test]
    fn same_seed_same_history(seed in any::<u64>(), drop in 0.0f64..0.5, jitter in 0.0f64..50.0) {
        let a = drive(&mut Link::new(cfg(20.0, jitter, drop, seed), 0), 300);
        let b = drive(&mut Link::new(cfg(20.0, jitter, drop, seed), 0), 300);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn lossless_link_is_a_permutation(seed in any::<u64>(), jitter in 0.0f64..80.0) {
        let got = drive(&mut Link::new(cfg(20.0, jitter, 0.0, seed), 0), 200);
        let mut ids: Vec<u32> = got.iter().map(|(i, _)| *i).collect();
        ids.sort_unstable();
        prop_assert_eq!(ids, (0..200).collect::<Vec<_>>());
        // delivered in time order, each within [latency, latency + jitter]
        prop_assert!(got.windows(2).all(|w| w[0].1 <= w[1].1));
        for (i, at) in got {
            let sent = f64::from(i) * 0.01;
            let delay_ms = (at - sent) * 1000.0;
            prop_assert!(delay_ms >= 20.0 - 1e-6 && delay_ms <= 20.0 + jitter + 1e-6);
        }
    }

    #[test]
    fn lossy_link_delivers_a_subset(seed in any::<u64>(), drop in 0.0f64..1.0) {
        let mut link = Link::new(cfg(5.0, 0.0, drop, seed), 0);
        let got = drive(&mut link, 200);
        let s = link.stats();
        prop_assert_eq!(s.sent_bytes, 800);
        prop_assert_eq!(s.delivered_bytes + s.dropped_bytes, 800);
        prop_assert_eq!(got.len() * 4, s.delivered_bytes);
        // zero jitter keeps order
        prop_assert!(got.windows(2).all(|w| w[0].0 < w[1].0));
    }
}

#[test]
fn drop_rate_matches_probability() {
    let mut link = Link::new(cfg(0.0, 0.0, 0.2, 42), 0);
    let n = 20_000;
    let dropped = (0..n).filter(|_| link.send(&[0], 0.0) == SendOutcome::Dropped).count();
    let p = dropped as f64 / f64::from(n);
    // 0.2 +- 4 sigma
    assert!((p - 0.2).abs() < 4.0 * (0.2f64 * 0.8 / f64::from(n)).sqrt(), "{p}");
}

#[test]
fn disconnect_window_is_half_open() {
    let mut c = cfg(0.0, 0.0, 0.0, 1);
    c.disconnect_windows = vec![(10.0, 20.0)];
    let mut link = Link::new(c, 0);
    assert_eq!(link.send(&[1], 9.999), SendOutcome::Queued);
    assert_eq!(link.send(&[2], 10.0), SendOutcome::Disconnected);
    assert_eq!(link.send(&[3], 19.999), SendOutcome::Disconnected);
    assert_eq!(link.send(&[4], 20.0), SendOutcome::Queued);
    assert_eq!(link.poll(f64::INFINITY), vec![1, 4]);
    assert_eq!(link.stats().disconnected_bytes, 2);
}

#[test]
fn nothing_arrives_early() {
    let mut link = Link::new(cfg(20.0, 0.0, 0.0, 1), 0);
    link.send(b"abc", 1.0);
    assert!(link.poll(1.019).is_empty());
    assert_eq!(link.in_flight(), 1);
    assert_eq!(link.poll(1.020), b"abc");
}

#[test]
fn directions_draw_independently() {
    let c = cfg(0.0, 30.0, 0.3, 9);
    let mut d = DuplexLink::new(c);
    let up = drive(&mut d.uplink, 100);
    let down = drive(&mut d.downlink, 100);
    assert_ne!(up, down);
}

#[test]
fn invalid_configs_are_reported() {
    assert!(cfg(-1.0, 0.0, 0.0, 0).validate().is_err());
    assert!(cfg(0.0, 0.0, 1.5, 0).validate().is_err());
    let mut c = cfg(0.0, 0.0, 0.0, 0);
    c.disconnect_windows = vec![(5.0, 2.0)];
    assert!(c.validate().is_err());
}
