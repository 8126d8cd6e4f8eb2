//! Dynamic Source Routing agent.
//!
//! Each node owns a [`DsrAgent`]. Like the MAC, the agent is driven by the
//! engine and answers with [`DsrAction`]s. Routes are learned only from
//! replies the node originates or forwards (no overhearing), there is no
//! packet salvaging, and links are assumed symmetric so replies and errors
//! travel back along the reversed route record.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use rand::Rng;

use crate::frame::{
    is_loop_free, DataPacket, Dest, NodeId, Packet, Route, RouteError, RouteReply, RouteRequest,
};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DsrConfig {
    pub send_buffer_capacity: usize,
    pub send_buffer_timeout: SimTime,
    /// Wait before the first discovery retry; doubles on every retry.
    pub discovery_timeout: SimTime,
    pub discovery_timeout_max: SimTime,
    /// Intermediate nodes answer requests from their own cache.
    pub reply_from_cache: bool,
    /// Upper bound of the uniform delay before re-broadcasting a request.
    pub broadcast_jitter: SimTime,
}

impl Default for DsrConfig {
    fn default() -> Self {
        DsrConfig {
            send_buffer_capacity: 64,
            send_buffer_timeout: SimTime::from_millis(30_000),
            discovery_timeout: SimTime::from_millis(500),
            discovery_timeout_max: SimTime::from_millis(10_000),
            reply_from_cache: true,
            broadcast_jitter: SimTime::from_millis(10),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DropCause {
    /// MAC transmit queue full.
    Ifq,
    /// Send buffer overflow or expiry while waiting for a route.
    NoRoute,
    /// Next hop unreachable after the MAC gave up.
    LinkBreak,
    /// Node is not on the packet's source route.
    Misroute,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DsrAction {
    /// Hand a packet to the MAC, now or after a jitter delay (`at > now`).
    Send { to: Dest, packet: Packet, at: SimTime },
    Schedule { at: SimTime, timer: DsrTimer },
    Delivered(DataPacket),
    Dropped { packet_id: u64, cause: DropCause },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DsrTimer {
    Discovery { target: NodeId, gen: u64 },
    BufferExpiry,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CachedRoute {
    pub hops: Route,
    pub valid: bool,
}

/// Path cache keyed by destination. Every stored route starts at the owner.
#[derive(Debug, Clone)]
pub struct RouteCache {
    owner: NodeId,
    entries: BTreeMap<NodeId, Vec<CachedRoute>>,
}

impl RouteCache {
    pub fn new(owner: NodeId) -> Self {
        RouteCache {
            owner,
            entries: BTreeMap::new(),
        }
    }

    /// Adds `route` and each of its prefixes. Returns false if the route
    /// does not start at the owner, is shorter than one hop or loops.
    pub fn insert(&mut self, route: &[NodeId]) -> bool {
        if route.len() < 2 || route[0] != self.owner || !is_loop_free(route) {
            return false;
        }
        for end in 2..=route.len() {
            let prefix = &route[..end];
            let list = self.entries.entry(prefix[end - 1]).or_default();
            match list.iter_mut().find(|c| c.hops == prefix) {
                Some(existing) => existing.valid = true,
                None => list.push(CachedRoute {
                    hops: prefix.to_vec(),
                    valid: true,
                }),
            }
        }
        true
    }

    /// Shortest valid route to `dst`; ties go to the earliest learned.
    pub fn best(&self, dst: NodeId) -> Option<&Route> {
        self.entries
            .get(&dst)?
            .iter()
            .filter(|c| c.valid)
            .min_by_key(|c| c.hops.len())
            .map(|c| &c.hops)
    }

    pub fn routes(&self, dst: NodeId) -> &[CachedRoute] {
        self.entries.get(&dst).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Marks every route using the link `a`-`b` (either direction) invalid.
    pub fn invalidate_link(&mut self, a: NodeId, b: NodeId) -> usize {
        let mut n = 0;
        for c in self.entries.values_mut().flatten() {
            if c.valid && uses_link(&c.hops, a, b) {
                c.valid = false;
                n += 1;
            }
        }
        n
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &CachedRoute)> {
        self.entries.iter().flat_map(|(d, v)| v.iter().map(move |c| (d, c)))
    }
}

pub fn uses_link(route: &[NodeId], a: NodeId, b: NodeId) -> bool {
    route
        .windows(2)
        .any(|w| (w[0] == a && w[1] == b) || (w[0] == b && w[1] == a))
}

/// Application payload waiting for a route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Payload {
    pub id: u64,
    pub flow: u32,
    pub dest: NodeId,
    pub bytes: u32,
    pub created: SimTime,
}

#[derive(Debug, Clone, Copy)]
struct Discovery {
    gen: u64,
    timeout: SimTime,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DsrCounters {
    pub discoveries: u64,
    pub rreq_sent: u64,
    pub rreq_received: u64,
    pub rrep_sent: u64,
    pub rrep_received: u64,
    pub rerr_sent: u64,
    pub rerr_received: u64,
    pub cache_replies: u64,
    pub duplicate_requests: u64,
}

#[derive(Debug, Clone)]
pub struct DsrAgent {
    id: NodeId,
    config: DsrConfig,
    cache: RouteCache,
    send_buffer: VecDeque<Payload>,
    seen_requests: HashSet<(NodeId, u32)>,
    answered_records: HashSet<(NodeId, u32, Route)>,
    next_request_seq: u32,
    discoveries: HashMap<NodeId, Discovery>,
    discovery_gen: u64,
    counters: DsrCounters,
}

impl DsrAgent {
    pub fn new(id: NodeId, config: DsrConfig) -> Self {
        DsrAgent {
            id,
            config,
            cache: RouteCache::new(id),
            send_buffer: VecDeque::new(),
            seen_requests: HashSet::new(),
            answered_records: HashSet::new(),
            next_request_seq: 0,
            discoveries: HashMap::new(),
            discovery_gen: 0,
            counters: DsrCounters::default(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn cache(&self) -> &RouteCache {
        &self.cache
    }

    pub fn cache_mut(&mut self) -> &mut RouteCache {
        &mut self.cache
    }

    pub fn counters(&self) -> &DsrCounters {
        &self.counters
    }

    pub fn buffered(&self) -> impl Iterator<Item = &Payload> {
        self.send_buffer.iter()
    }

    pub fn discovery_pending(&self, target: NodeId) -> bool {
        self.discoveries.contains_key(&target)
    }

    /// A local application hands over a payload for `payload.dest`.
    pub fn originate<R: Rng + ?Sized>(
        &mut self,
        payload: Payload,
        now: SimTime,
        rng: &mut R,
        out: &mut Vec<DsrAction>,
    ) {
        debug_assert_ne!(payload.dest, self.id);
        if let Some(route) = self.cache.best(payload.dest) {
            let packet = data_packet(&payload, route.clone());
            out.push(send_to(route[1], Packet::Data(packet), now));
            return;
        }
        if self.send_buffer.len() >= self.config.send_buffer_capacity {
            out.push(DsrAction::Dropped {
                packet_id: payload.id,
                cause: DropCause::NoRoute,
            });
        } else {
            if self.send_buffer.is_empty() {
                out.push(DsrAction::Schedule {
                    at: now + self.config.send_buffer_timeout,
                    timer: DsrTimer::BufferExpiry,
                });
            }
            self.send_buffer.push_back(Payload {
                created: now,
                ..payload
            });
        }
        if !self.discoveries.contains_key(&payload.dest) {
            self.start_discovery(payload.dest, self.config.discovery_timeout, now, rng, out);
        }
    }

    fn start_discovery<R: Rng + ?Sized>(
        &mut self,
        target: NodeId,
        timeout: SimTime,
        now: SimTime,
        _rng: &mut R,
        out: &mut Vec<DsrAction>,
    ) {
        let seq = self.next_request_seq;
        self.next_request_seq += 1;
        self.seen_requests.insert((self.id, seq));
        self.discovery_gen += 1;
        self.discoveries.insert(
            target,
            Discovery {
                gen: self.discovery_gen,
                timeout,
            },
        );
        self.counters.discoveries += 1;
        self.counters.rreq_sent += 1;
        out.push(DsrAction::Send {
            to: Dest::Broadcast,
            packet: Packet::Rreq(RouteRequest {
                origin: self.id,
                seq,
                target,
                record: vec![self.id],
            }),
            at: now,
        });
        out.push(DsrAction::Schedule {
            at: now + timeout,
            timer: DsrTimer::Discovery {
                target,
                gen: self.discovery_gen,
            },
        });
    }

    pub fn on_timer<R: Rng + ?Sized>(
        &mut self,
        timer: DsrTimer,
        now: SimTime,
        rng: &mut R,
        out: &mut Vec<DsrAction>,
    ) {
        match timer {
            DsrTimer::Discovery { target, gen } => {
                let Some(d) = self.discoveries.get(&target).copied() else {
                    return;
                };
                if d.gen != gen {
                    return;
                }
                self.discoveries.remove(&target);
                if !self.send_buffer.iter().any(|p| p.dest == target) {
                    return;
                }
                if self.cache.best(target).is_some() {
                    self.flush(target, now, out);
                } else {
                    let next = (d.timeout * 2).min(self.config.discovery_timeout_max);
                    self.start_discovery(target, next, now, rng, out);
                }
            }
            DsrTimer::BufferExpiry => {
                let timeout = self.config.send_buffer_timeout;
                while let Some(front) = self.send_buffer.front() {
                    if front.created + timeout > now {
                        break;
                    }
                    out.push(DsrAction::Dropped {
                        packet_id: front.id,
                        cause: DropCause::NoRoute,
                    });
                    self.send_buffer.pop_front();
                }
                if let Some(front) = self.send_buffer.front() {
                    out.push(DsrAction::Schedule {
                        at: front.created + timeout,
                        timer: DsrTimer::BufferExpiry,
                    });
                }
            }
        }
    }

    /// Dispatches every buffered payload for `target` in FIFO order.
    fn flush(&mut self, target: NodeId, now: SimTime, out: &mut Vec<DsrAction>) {
        let Some(route) = self.cache.best(target).cloned() else {
            return;
        };
        self.discoveries.remove(&target);
        let mut kept = VecDeque::with_capacity(self.send_buffer.len());
        for p in self.send_buffer.drain(..) {
            if p.dest == target {
                out.push(send_to(route[1], Packet::Data(data_packet(&p, route.clone())), now));
            } else {
                kept.push_back(p);
            }
        }
        self.send_buffer = kept;
    }

    /// A packet arrived from the MAC.
    pub fn on_receive<R: Rng + ?Sized>(
        &mut self,
        packet: Packet,
        now: SimTime,
        rng: &mut R,
        out: &mut Vec<DsrAction>,
    ) {
        match packet {
            Packet::Rreq(req) => self.on_route_request(req, now, rng, out),
            Packet::Rrep(rep) => self.on_route_reply(rep, now, out),
            Packet::Rerr(err) => self.on_route_error(err, now, out),
            Packet::Data(d) => self.forward_data(d, now, out),
        }
    }

    pub fn on_route_request<R: Rng + ?Sized>(
        &mut self,
        mut req: RouteRequest,
        now: SimTime,
        rng: &mut R,
        out: &mut Vec<DsrAction>,
    ) {
        self.counters.rreq_received += 1;
        if req.origin == self.id || req.record.contains(&self.id) {
            return;
        }
        if req.target == self.id {
            // the target answers every distinct record it hears
            if !self
                .answered_records
                .insert((req.origin, req.seq, req.record.clone()))
            {
                return;
            }
            let mut route = req.record;
            route.push(self.id);
            let path: Route = route.iter().rev().copied().collect();
            self.send_reply(route, path, now, out);
            return;
        }
        if !self.seen_requests.insert((req.origin, req.seq)) {
            self.counters.duplicate_requests += 1;
            return;
        }
        if self.config.reply_from_cache {
            if let Some(suffix) = self.cache.best(req.target) {
                let mut route = req.record.clone();
                route.extend_from_slice(suffix);
                if is_loop_free(&route) {
                    let mut back = req.record;
                    back.push(self.id);
                    back.reverse();
                    self.counters.cache_replies += 1;
                    self.send_reply(route, back, now, out);
                    return;
                }
            }
        }
        req.record.push(self.id);
        self.counters.rreq_sent += 1;
        let jitter = self.config.broadcast_jitter.as_nanos();
        let delay = if jitter == 0 {
            0
        } else {
            rng.random_range(0..=jitter)
        };
        out.push(DsrAction::Send {
            to: Dest::Broadcast,
            packet: Packet::Rreq(req),
            at: now + SimTime::from_nanos(delay),
        });
    }

    fn send_reply(&mut self, route: Route, path: Route, now: SimTime, out: &mut Vec<DsrAction>) {
        self.counters.rrep_sent += 1;
        let next = path[1];
        out.push(send_to(
            next,
            Packet::Rrep(RouteReply { route, path, hop: 0 }),
            now,
        ));
    }

    pub fn on_route_reply(&mut self, mut rep: RouteReply, now: SimTime, out: &mut Vec<DsrAction>) {
        if rep.path.get(rep.hop + 1) != Some(&self.id) {
            return;
        }
        rep.hop += 1;
        if rep.hop + 1 == rep.path.len() {
            self.counters.rrep_received += 1;
            if self.cache.insert(&rep.route) {
                let target = *rep.route.last().expect("reply carries a route");
                self.flush(target, now, out);
            }
            return;
        }
        if let Some(pos) = rep.route.iter().position(|&n| n == self.id) {
            self.cache.insert(&rep.route[pos..]);
        }
        let next = rep.path[rep.hop + 1];
        out.push(send_to(next, Packet::Rrep(rep), now));
    }

    pub fn on_route_error(&mut self, mut err: RouteError, now: SimTime, out: &mut Vec<DsrAction>) {
        if err.path.get(err.hop + 1) != Some(&self.id) {
            return;
        }
        err.hop += 1;
        let (a, b) = err.broken_link;
        self.cache.invalidate_link(a, b);
        if err.hop + 1 == err.path.len() {
            self.counters.rerr_received += 1;
            return;
        }
        let next = err.path[err.hop + 1];
        out.push(send_to(next, Packet::Rerr(err), now));
    }

    pub fn forward_data(&mut self, mut d: DataPacket, now: SimTime, out: &mut Vec<DsrAction>) {
        if d.route.get(d.hop + 1) != Some(&self.id) {
            out.push(DsrAction::Dropped {
                packet_id: d.id,
                cause: DropCause::Misroute,
            });
            return;
        }
        d.hop += 1;
        if d.hop + 1 == d.route.len() {
            out.push(DsrAction::Delivered(d));
        } else {
            let next = d.route[d.hop + 1];
            out.push(send_to(next, Packet::Data(d), now));
        }
    }

    /// The MAC gave up on `packet` toward `next_hop`.
    pub fn on_link_failure(
        &mut self,
        next_hop: NodeId,
        packet: Packet,
        now: SimTime,
        out: &mut Vec<DsrAction>,
    ) {
        self.cache.invalidate_link(self.id, next_hop);
        let Packet::Data(d) = packet else {
            return;
        };
        out.push(DsrAction::Dropped {
            packet_id: d.id,
            cause: DropCause::LinkBreak,
        });
        if d.origin() == self.id {
            return;
        }
        let path: Route = d.route[..=d.hop].iter().rev().copied().collect();
        self.counters.rerr_sent += 1;
        out.push(send_to(
            path[1],
            Packet::Rerr(RouteError {
                broken_link: (self.id, next_hop),
                path,
                hop: 0,
            }),
            now,
        ));
    }
}

fn send_to(next: NodeId, packet: Packet, at: SimTime) -> DsrAction {
    DsrAction::Send {
        to: Dest::Node(next),
        packet,
        at,
    }
}

fn data_packet(p: &Payload, route: Route) -> DataPacket {
    DataPacket {
        id: p.id,
        flow: p.flow,
        created: p.created,
        bytes: p.bytes,
        route,
        hop: 0,
    }
}
