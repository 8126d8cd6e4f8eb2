//! Property harnesses shared by the property tests and the acceptance suite.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use shadownet::analytics::RectRegion;
use shadownet::dsr::{uses_link, DsrAction, DsrAgent, DsrConfig, RouteCache};
use shadownet::engine::{run, Position, ScenarioConfig, ShadowingMode, Simulation};
use shadownet::frame::{
    is_loop_free, DataPacket, Dest, Frame, FrameKind, NodeId, Packet, Route, RouteRequest,
};
use shadownet::mac::{Mac, MacAction, MacParams, MacTimer};
use shadownet::propagation::PropagationModel;
use shadownet::SimTime;

pub const PROPERTY_CASES: u32 = 1000;

/// Runs `test` on `cases` inputs drawn from `strategy`.
pub fn check<S, F>(cases: u32, strategy: S, test: F) -> Result<(), String>
where
    S: Strategy,
    S::Value: std::fmt::Debug,
    F: Fn(S::Value) -> Result<(), TestCaseError>,
{
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- MAC

#[derive(Debug, Clone)]
pub enum MacOp {
    Enqueue { broadcast: bool, to: u32 },
    CarrierStart,
    CarrierEnd,
    Receive { kind: FrameKind, src: u32, to_me: bool, duration_us: u32 },
    Advance { us: u32 },
}

pub fn mac_op() -> impl Strategy<Value = MacOp> {
    let kind = prop_oneof![
        Just(FrameKind::Rts),
        Just(FrameKind::Cts),
        Just(FrameKind::Ack),
        Just(FrameKind::Data),
    ];
    prop_oneof![
        2 => (any::<bool>(), 1u32..4).prop_map(|(broadcast, to)| MacOp::Enqueue { broadcast, to }),
        1 => Just(MacOp::CarrierStart),
        1 => Just(MacOp::CarrierEnd),
        3 => (kind, 1u32..4, any::<bool>(), 0u32..5000)
            .prop_map(|(kind, src, to_me, duration_us)| MacOp::Receive { kind, src, to_me, duration_us }),
        4 => (1u32..3000).prop_map(|us| MacOp::Advance { us }),
    ]
}

pub fn mac_case() -> impl Strategy<Value = (Vec<MacOp>, u32, u64)> {
    (prop::collection::vec(mac_op(), 1..120), 1u32..13, any::<u64>())
}

struct MacHarness {
    mac: Mac,
    now: SimTime,
    timers: Vec<(SimTime, u64, MacTimer)>,
    tx_end: Option<SimTime>,
    seq: u64,
    sensed: u32,
    rng: ChaCha8Rng,
    enqueued: u64,
    finished: u64,
    queue_drops: u64,
    last_nav: SimTime,
    attempts: u32,
    broadcasts_on_air: HashMap<u32, u32>,
    limit: u32,
}

fn data_packet(to: u32) -> Packet {
    Packet::Data(DataPacket {
        id: 0,
        flow: 0,
        created: SimTime::ZERO,
        bytes: 512,
        route: vec![NodeId(0), NodeId(to)],
        hop: 0,
    })
}

fn rreq_packet() -> Packet {
    Packet::Rreq(RouteRequest {
        origin: NodeId(0),
        seq: 0,
        target: NodeId(7),
        record: vec![NodeId(0)],
    })
}

impl MacHarness {
    fn new(limit: u32, seed: u64) -> Self {
        let params = MacParams {
            long_retry_limit: limit,
            short_retry_limit: limit,
            queue_capacity: 8,
            ..MacParams::default()
        };
        MacHarness {
            mac: Mac::new(NodeId(0), params),
            now: SimTime::ZERO,
            timers: Vec::new(),
            tx_end: None,
            seq: 0,
            sensed: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            enqueued: 0,
            finished: 0,
            queue_drops: 0,
            last_nav: SimTime::ZERO,
            attempts: 0,
            broadcasts_on_air: HashMap::new(),
            limit,
        }
    }

    fn absorb(&mut self, out: Vec<MacAction>, from_contention: bool, busy_before: bool) -> Result<(), TestCaseError> {
        for a in out {
            match a {
                MacAction::Transmit(f) => {
                    prop_assert!(self.tx_end.is_none(), "two transmissions overlap");
                    if from_contention {
                        prop_assert!(!busy_before, "contention won on a busy medium");
                    }
                    if f.kind == FrameKind::Rts {
                        self.attempts += 1;
                        prop_assert!(self.attempts <= self.limit, "more attempts than the retry limit");
                    }
                    if f.is_broadcast() {
                        let n = self.broadcasts_on_air.entry(f.seq).or_insert(0);
                        *n += 1;
                        prop_assert_eq!(*n, 1, "broadcast transmitted twice");
                        prop_assert_eq!(f.duration, SimTime::ZERO);
                    }
                    self.tx_end = Some(self.now + f.tx_time);
                }
                MacAction::Schedule { at, timer } => {
                    prop_assert!(at >= self.now, "timer scheduled in the past");
                    self.seq += 1;
                    self.timers.push((at, self.seq, timer));
                }
                MacAction::Sent(_) | MacAction::LinkFailure(_) => {
                    self.finished += 1;
                    self.attempts = 0;
                }
                MacAction::QueueDrop(_) => self.queue_drops += 1,
                MacAction::Deliver(_) => {}
            }
        }
        Ok(())
    }

    fn invariants(&mut self) -> Result<(), TestCaseError> {
        let m = &self.mac;
        let p = m.params();
        prop_assert!(m.nav_expiry() >= self.last_nav, "NAV moved backwards");
        self.last_nav = m.nav_expiry();
        prop_assert!(m.retry_count() <= p.long_retry_limit);
        prop_assert!(m.backoff_slots() <= m.contention_window());
        let mut cw = p.cw_min;
        while cw != m.contention_window() {
            prop_assert!(cw < p.cw_max, "window {} outside the doubling sequence", m.contention_window());
            cw = p.next_window(cw);
        }
        prop_assert_eq!(
            self.enqueued,
            self.finished + self.queue_drops + m.queue_len() as u64,
            "frames lost inside the MAC"
        );
        Ok(())
    }

    fn advance_to(&mut self, target: SimTime) -> Result<(), TestCaseError> {
        loop {
            self.timers.sort_by_key(|t| (t.0, t.1));
            let next_timer = self.timers.first().map(|t| t.0);
            let next = match (next_timer, self.tx_end) {
                (Some(a), Some(b)) => a.min(b),
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => break,
            };
            if next > target {
                break;
            }
            self.now = next;
            let mut out = Vec::new();
            if self.tx_end == Some(next) {
                self.tx_end = None;
                self.mac.on_tx_end(next, &mut self.rng, &mut out);
                self.absorb(out, false, false)?;
            } else {
                let (_, _, timer) = self.timers.remove(0);
                let busy = self.mac.medium_busy(next);
                self.mac.on_timer(timer, next, &mut self.rng, &mut out);
                self.absorb(out, matches!(timer, MacTimer::Contention(_)), busy)?;
            }
            self.invariants()?;
        }
        self.now = target;
        Ok(())
    }

    fn apply(&mut self, op: MacOp) -> Result<(), TestCaseError> {
        let now = self.now;
        let mut out = Vec::new();
        match op {
            MacOp::Enqueue { broadcast, to } => {
                let (dst, packet) = if broadcast {
                    (Dest::Broadcast, rreq_packet())
                } else {
                    (Dest::Node(NodeId(to)), data_packet(to))
                };
                self.enqueued += 1;
                self.mac.enqueue(dst, packet, now, &mut self.rng, &mut out);
            }
            MacOp::CarrierStart => {
                self.sensed += 1;
                self.mac.on_carrier_start(now, &mut out);
            }
            MacOp::CarrierEnd => {
                if self.sensed == 0 {
                    return Ok(());
                }
                self.sensed -= 1;
                self.mac.on_carrier_end(now, &mut out);
            }
            MacOp::Receive { kind, src, to_me, duration_us } => {
                let dst = if to_me { NodeId(0) } else { NodeId(9) };
                let packet = (kind == FrameKind::Data).then(|| data_packet(0));
                let frame = Frame {
                    kind,
                    src: NodeId(src),
                    dst: Dest::Node(dst),
                    duration: SimTime::from_micros(duration_us as u64),
                    payload_bytes: 40,
                    tx_time: SimTime::from_micros(300),
                    seq: self.seq as u32,
                    packet,
                };
                self.seq += 1;
                self.mac.on_frame_received(frame, now, &mut self.rng, &mut out);
            }
            MacOp::Advance { us } => {
                return self.advance_to(now + SimTime::from_micros(us as u64));
            }
        }
        self.absorb(out, false, false)?;
        self.invariants()
    }
}

/// Random stimulus sequences never break the MAC invariants.
pub fn mac_invariants((ops, limit, seed): (Vec<MacOp>, u32, u64)) -> Result<(), TestCaseError> {
    let mut h = MacHarness::new(limit, seed);
    for op in ops {
        h.apply(op)?;
    }
    // drain: with the medium left alone every frame reaches a terminal state
    while h.sensed > 0 {
        h.sensed -= 1;
        let mut out = Vec::new();
        h.mac.on_carrier_end(h.now, &mut out);
        h.absorb(out, false, false)?;
    }
    let horizon = h.now + SimTime::from_millis(60_000);
    h.advance_to(horizon)?;
    prop_assert_eq!(h.mac.queue_len(), 0, "frames stuck in an idle MAC");
    prop_assert!(h.enqueued == 0 || h.finished + h.queue_drops > 0);
    Ok(())
}

/// With every response missing, the window follows 31, 63, ... capped at
/// cw_max, and the frame is dropped after exactly `limit` attempts.
pub fn window_sequence((limit, seed): (u32, u64)) -> Result<(), TestCaseError> {
    let mut h = MacHarness::new(limit, seed);
    let mut out = Vec::new();
    h.enqueued += 1;
    h.mac.enqueue(Dest::Node(NodeId(1)), data_packet(1), SimTime::ZERO, &mut h.rng, &mut out);
    h.absorb(out, false, false)?;
    let mut windows = Vec::new();
    let mut last_attempts = 0;
    while h.mac.queue_len() > 0 {
        if h.attempts > last_attempts {
            windows.push(h.mac.contention_window());
            last_attempts = h.attempts;
        }
        let next = h.now + SimTime::from_micros(500);
        h.advance_to(next)?;
    }
    prop_assert_eq!(windows.len(), limit as usize);
    prop_assert_eq!(h.mac.counters().retry_drops, 1);
    prop_assert_eq!(h.mac.counters().rts_sent, limit as u64);
    let p = MacParams::default();
    let mut expected = vec![p.cw_min];
    while expected.len() < windows.len() {
        let last = *expected.last().unwrap();
        expected.push(p.next_window(last));
    }
    prop_assert_eq!(windows, expected);
    Ok(())
}

// ---------------------------------------------------------------- DSR

#[derive(Debug, Clone)]
pub enum CacheOp {
    Insert(Vec<u32>),
    Invalidate(u32, u32),
}

pub fn cache_ops() -> impl Strategy<Value = Vec<CacheOp>> {
    let route = (any::<bool>(), prop::collection::vec(0u32..8, 1..7)).prop_map(|(own, mut r)| {
        if own {
            r.insert(0, 0);
        }
        r
    });
    prop::collection::vec(
        prop_oneof![
            3 => route.prop_map(CacheOp::Insert),
            1 => (0u32..8, 0u32..8).prop_map(|(a, b)| CacheOp::Invalidate(a, b)),
        ],
        1..60,
    )
}

fn ids(v: &[u32]) -> Route {
    v.iter().map(|&i| NodeId(i)).collect()
}

/// Cached routes are well formed, selection is shortest-valid, and broken
/// links stay unused until re-learned.
pub fn cache_invariants(ops: Vec<CacheOp>) -> Result<(), TestCaseError> {
    let owner = NodeId(0);
    let mut cache = RouteCache::new(owner);
    let mut broken: HashSet<(NodeId, NodeId)> = HashSet::new();
    for op in ops {
        match op {
            CacheOp::Insert(r) => {
                let r = ids(&r);
                let ok = cache.insert(&r);
                prop_assert_eq!(ok, r.len() >= 2 && r[0] == owner && is_loop_free(&r));
                if ok {
                    broken.retain(|&(a, b)| !uses_link(&r, a, b));
                }
            }
            CacheOp::Invalidate(a, b) => {
                cache.invalidate_link(NodeId(a), NodeId(b));
                broken.insert((NodeId(a), NodeId(b)));
            }
        }
        for (dst, c) in cache.iter() {
            prop_assert_eq!(c.hops[0], owner);
            prop_assert_eq!(c.hops.last(), Some(dst));
            prop_assert!(is_loop_free(&c.hops));
        }
        for d in 1..8 {
            let dst = NodeId(d);
            let best = cache.best(dst);
            let shortest = cache.routes(dst).iter().filter(|c| c.valid).map(|c| c.hops.len()).min();
            prop_assert_eq!(best.map(Vec::len), shortest);
            if let Some(b) = best {
                prop_assert!(cache.routes(dst).iter().any(|c| c.valid && &c.hops == b));
                for &(x, y) in &broken {
                    prop_assert!(!uses_link(b, x, y), "broken link {x}-{y} selected");
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct IncomingRequest {
    pub origin: u32,
    pub seq: u32,
    pub to_me: bool,
    pub relays: Vec<u32>,
}

pub fn request_stream() -> impl Strategy<Value = Vec<IncomingRequest>> {
    prop::collection::vec(
        (0u32..6, 0u32..3, prop::bool::weighted(0.3), prop::collection::vec(0u32..10, 0..5)).prop_map(
            |(origin, seq, to_me, relays)| IncomingRequest {
                origin,
                seq,
                to_me,
                relays,
            },
        ),
        1..80,
    )
}

/// An agent rebroadcasts each request round at most once, never loops,
/// and as the target answers each distinct record exactly once.
pub fn request_handling(stream: Vec<IncomingRequest>) -> Result<(), TestCaseError> {
    let me = NodeId(5);
    let mut agent = DsrAgent::new(me, DsrConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut rebroadcasts: HashMap<(NodeId, u32), u32> = HashMap::new();
    let mut answered: HashSet<(NodeId, u32, Route)> = HashSet::new();
    for req in stream {
        let origin = NodeId(req.origin);
        let mut record = vec![origin];
        for r in req.relays {
            let r = NodeId(r);
            if !record.contains(&r) {
                record.push(r);
            }
        }
        let target = if req.to_me { me } else { NodeId(42) };
        let incoming = RouteRequest {
            origin,
            seq: req.seq,
            target,
            record: record.clone(),
        };
        let mut out = Vec::new();
        agent.on_route_request(incoming, SimTime::ZERO, &mut rng, &mut out);
        for a in out {
            let DsrAction::Send { to, packet, .. } = a else { continue };
            match packet {
                Packet::Rreq(q) => {
                    prop_assert_eq!(to, Dest::Broadcast);
                    prop_assert!(!record.contains(&me) && origin != me);
                    prop_assert!(is_loop_free(&q.record));
                    prop_assert_eq!(q.record.last(), Some(&me));
                    let n = rebroadcasts.entry((origin, req.seq)).or_insert(0);
                    *n += 1;
                    prop_assert_eq!(*n, 1, "request rebroadcast twice");
                }
                Packet::Rrep(rep) => {
                    prop_assert!(req.to_me);
                    prop_assert!(is_loop_free(&rep.route));
                    prop_assert_eq!(rep.route[0], origin);
                    prop_assert_eq!(rep.route.last(), Some(&me));
                    prop_assert!(answered.insert((origin, req.seq, record.clone())), "record answered twice");
                }
                other => prop_assert!(false, "unexpected packet {other:?}"),
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- engine

pub fn small_config() -> impl Strategy<Value = ScenarioConfig> {
    (
        4usize..12,
        60.0f64..400.0,
        60.0f64..400.0,
        prop_oneof![Just(PropagationModel::TwoRay), Just(PropagationModel::Shadowing)],
        prop_oneof![Just(ShadowingMode::PerFrame), Just(ShadowingMode::PerLink)],
        any::<u64>(),
        1u32..13,
        1.0f64..4.0,
        8u64..25,
    )
        .prop_map(|(n, a, b, model, mode, seed, retry, rate, secs)| {
            let region = RectRegion::new(a, b).unwrap();
            let mut c = ScenarioConfig::new(region, n, model);
            c.shadowing_mode = mode;
            c.seed = seed;
            c.mac.long_retry_limit = retry;
            c.connections = (n / 2).min(3);
            c.cbr_rate = rate;
            c.sim_duration = SimTime::from_millis(secs * 1000);
            c.start_window = SimTime::from_millis(2000);
            c
        })
}

pub fn determinism(config: ScenarioConfig) -> Result<(), TestCaseError> {
    let a = run(&config).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let b = run(&config).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(a, b);
    Ok(())
}

/// Every originated packet ends in exactly one bucket, and events run in
/// non-decreasing time order.
pub fn conservation(config: ScenarioConfig) -> Result<(), TestCaseError> {
    let mut sim = Simulation::new(config).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let mut last = SimTime::ZERO;
    while sim.step() {
        prop_assert!(sim.now() >= last, "time went backwards");
        last = sim.now();
    }
    let r = sim.report();
    prop_assert_eq!(r.n_sent, r.accounted());
    prop_assert_eq!(r.unaccounted, 0);
    prop_assert_eq!(r.drops.misroute, 0);
    if r.n_sent > 0 {
        prop_assert!((r.delivery_ratio - r.n_recvd as f64 / r.n_sent as f64).abs() < 1e-15);
    }
    Ok(())
}

/// Nodes packed inside the two-ray range never lose a frame to the threshold.
pub fn tworay_in_range(positions: Vec<(f64, f64)>, seed: u64) -> Result<(), TestCaseError> {
    let n = positions.len();
    let region = RectRegion::new(100.0, 100.0).unwrap();
    let mut c = ScenarioConfig::new(region, n, PropagationModel::TwoRay);
    c.positions = Some(positions.into_iter().map(|(x, y)| Position { x, y }).collect());
    c.seed = seed;
    c.connections = n / 2;
    c.sim_duration = SimTime::from_millis(15_000);
    let r = run(&c).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(r.frame_losses.subthreshold, 0);
    Ok(())
}

pub fn packed_positions() -> impl Strategy<Value = (Vec<(f64, f64)>, u64)> {
    (prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), 2..10), any::<u64>())
}
