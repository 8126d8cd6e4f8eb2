//! The event loop tying channel, MAC and routing together.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dsr::{DropCause, DsrAction, DsrAgent, DsrTimer, Payload};
use crate::error::ConfigError;
use crate::frame::{Dest, Frame, NodeId, Packet};
use crate::mac::{Mac, MacAction, MacTimer};
use crate::time::SimTime;

use super::channel::{Channel, Reception};
use super::event::EventQueue;
use super::metrics::{ControlCounts, DataDrops, FrameLosses, MacTotals, MetricsReport};
use super::scenario::{generate_topology, sample_flows, Position, ScenarioConfig};
use super::{stream_rng, streams};

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    RxStart { node: u32, tx: u64, candidate: bool },
    RxEnd { node: u32, tx: u64, candidate: bool },
    TxEnd { node: u32 },
    Mac { node: u32, timer: MacTimer },
    Dsr { node: u32, timer: DsrTimer },
    /// Delayed hand-over of a routing packet to the MAC.
    Send { node: u32, to: Dest, packet: Packet },
    Traffic { flow: u32 },
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fate {
    Pending,
    Received,
    Dropped(DropCause),
}

#[derive(Debug, Clone, Copy)]
pub struct Flow {
    pub src: NodeId,
    pub dst: NodeId,
    pub interval: SimTime,
}

#[derive(Debug)]
struct Airborne {
    frame: Frame,
    listeners: u32,
}

#[derive(Debug)]
pub struct Node {
    pub mac: Mac,
    pub dsr: DsrAgent,
    /// Candidate receptions in progress: (transmission, collided).
    receiving: Vec<(u64, bool)>,
}

/// One simulation run, steppable for inspection.
pub struct Simulation {
    config: ScenarioConfig,
    now: SimTime,
    end: SimTime,
    finished: bool,
    queue: EventQueue<Event>,
    nodes: Vec<Node>,
    positions: Vec<Position>,
    channel: Channel,
    flows: Vec<Flow>,
    air: HashMap<u64, Airborne>,
    next_tx: u64,
    fates: Vec<Fate>,
    delay_sum: f64,
    losses: FrameLosses,
    rng_channel: ChaCha8Rng,
    rng_mac: ChaCha8Rng,
    rng_dsr: ChaCha8Rng,
    events: u64,
}

impl Simulation {
    /// Validates `config` and schedules traffic; no event runs yet.
    pub fn new(config: ScenarioConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let seed = config.seed;
        let positions = generate_topology(&config);
        let mut link_rng = stream_rng(seed, streams::LINK_SHADOWING);
        let channel = Channel::new(
            &positions,
            config.propagation,
            config.shadowing_mode,
            &config.radio,
            &mut link_rng,
        );
        let nodes = (0..config.node_count as u32)
            .map(|i| Node {
                mac: Mac::new(NodeId(i), config.mac),
                dsr: DsrAgent::new(NodeId(i), config.dsr),
                receiving: Vec::new(),
            })
            .collect();

        let mut traffic_rng = stream_rng(seed, streams::TRAFFIC);
        let interval = SimTime::from_secs_f64(1.0 / config.cbr_rate).max(SimTime::from_nanos(1));
        let flows: Vec<Flow> = sample_flows(&config, &mut traffic_rng)
            .into_iter()
            .map(|(src, dst)| Flow { src, dst, interval })
            .collect();
        let end = config.sim_duration;
        let mut queue = EventQueue::new();
        let window = config.start_window.as_nanos();
        for (i, _) in flows.iter().enumerate() {
            let start = SimTime::from_nanos(traffic_rng.random_range(0..=window));
            if start < end {
                queue.push(start, Event::Traffic { flow: i as u32 });
            }
        }
        queue.push(end, Event::End);

        Ok(Simulation {
            now: SimTime::ZERO,
            end,
            finished: false,
            queue,
            nodes,
            positions,
            channel,
            flows,
            air: HashMap::new(),
            next_tx: 0,
            fates: Vec::new(),
            delay_sum: 0.0,
            losses: FrameLosses::default(),
            rng_channel: stream_rng(seed, streams::CHANNEL),
            rng_mac: stream_rng(seed, streams::MAC),
            rng_dsr: stream_rng(seed, streams::ROUTING),
            events: 0,
            config,
        })
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn flows(&self) -> &[Flow] {
        &self.flows
    }

    pub fn channel(&self) -> &Channel {
        &self.channel
    }

    /// Executes one event. Returns false once the end marker is reached.
    pub fn step(&mut self) -> bool {
        if self.finished {
            return false;
        }
        let Some((at, event)) = self.queue.pop() else {
            self.finished = true;
            return false;
        };
        debug_assert!(at >= self.now, "event scheduled in the past");
        self.now = at;
        if event == Event::End {
            self.finished = true;
            return false;
        }
        self.events += 1;
        self.dispatch(event);
        true
    }

    pub fn run_to_end(mut self) -> MetricsReport {
        while self.step() {}
        self.report()
    }

    fn dispatch(&mut self, event: Event) {
        let now = self.now;
        let mut out = Vec::new();
        match event {
            Event::Traffic { flow } => {
                let f = self.flows[flow as usize];
                let id = self.fates.len() as u64;
                self.fates.push(Fate::Pending);
                let payload = Payload {
                    id,
                    flow,
                    dest: f.dst,
                    bytes: self.config.payload_bytes,
                    created: now,
                };
                let mut acts = Vec::new();
                self.nodes[f.src.index()]
                    .dsr
                    .originate(payload, now, &mut self.rng_dsr, &mut acts);
                self.apply_dsr(f.src.index(), acts, &mut out);
                self.drain_mac(f.src.index(), out);
                let next = now + f.interval;
                if next < self.end {
                    self.queue.push(next, Event::Traffic { flow });
                }
            }
            Event::Send { node, to, packet } => {
                let n = node as usize;
                self.nodes[n]
                    .mac
                    .enqueue(to, packet, now, &mut self.rng_mac, &mut out);
                self.drain_mac(n, out);
            }
            Event::Dsr { node, timer } => {
                let n = node as usize;
                let mut acts = Vec::new();
                self.nodes[n]
                    .dsr
                    .on_timer(timer, now, &mut self.rng_dsr, &mut acts);
                self.apply_dsr(n, acts, &mut out);
                self.drain_mac(n, out);
            }
            Event::Mac { node, timer } => {
                let n = node as usize;
                self.nodes[n]
                    .mac
                    .on_timer(timer, now, &mut self.rng_mac, &mut out);
                self.drain_mac(n, out);
            }
            Event::TxEnd { node } => {
                let n = node as usize;
                self.nodes[n].mac.on_tx_end(now, &mut self.rng_mac, &mut out);
                self.drain_mac(n, out);
            }
            Event::RxStart { node, tx, candidate } => {
                let n = node as usize;
                let state = &mut self.nodes[n];
                if candidate {
                    let collided = state.mac.is_transmitting() || !state.receiving.is_empty();
                    if collided {
                        for r in &mut state.receiving {
                            r.1 = true;
                        }
                    }
                    state.receiving.push((tx, collided));
                }
                state.mac.on_carrier_start(now, &mut out);
                self.drain_mac(n, out);
            }
            Event::RxEnd { node, tx, candidate } => {
                let n = node as usize;
                if candidate {
                    let state = &mut self.nodes[n];
                    let pos = state
                        .receiving
                        .iter()
                        .position(|r| r.0 == tx)
                        .expect("reception was registered at its start");
                    let (_, collided) = state.receiving.swap_remove(pos);
                    let frame = &self.air[&tx].frame;
                    if !collided {
                        let frame = frame.clone();
                        state
                            .mac
                            .on_frame_received(frame, now, &mut self.rng_mac, &mut out);
                    } else if frame.addressed_to(NodeId(node)) {
                        self.losses.collision += 1;
                    }
                }
                self.nodes[n].mac.on_carrier_end(now, &mut out);
                if let Some(a) = self.air.get_mut(&tx) {
                    a.listeners -= 1;
                    if a.listeners == 0 {
                        self.air.remove(&tx);
                    }
                }
                self.drain_mac(n, out);
            }
            Event::End => unreachable!("handled by step"),
        }
    }

    /// Carries out MAC actions of `node` until none are left.
    fn drain_mac(&mut self, node: usize, mut out: Vec<MacAction>) {
        while !out.is_empty() {
            let batch = std::mem::take(&mut out);
            for action in batch {
                self.apply_mac(node, action, &mut out);
            }
        }
    }

    fn apply_mac(&mut self, node: usize, action: MacAction, out: &mut Vec<MacAction>) {
        let now = self.now;
        match action {
            MacAction::Transmit(frame) => self.transmit(node, frame),
            MacAction::Schedule { at, timer } => {
                debug_assert!(at >= now);
                self.queue.push(
                    at,
                    Event::Mac {
                        node: node as u32,
                        timer,
                    },
                );
            }
            MacAction::Deliver(frame) => {
                let Some(packet) = frame.packet else { return };
                let mut acts = Vec::new();
                self.nodes[node]
                    .dsr
                    .on_receive(packet, now, &mut self.rng_dsr, &mut acts);
                self.apply_dsr(node, acts, out);
            }
            MacAction::Sent(_) => {}
            MacAction::LinkFailure(frame) => {
                self.losses.retry += 1;
                if let (Some(next), Some(packet)) = (frame.dst.node(), frame.packet) {
                    let mut acts = Vec::new();
                    self.nodes[node]
                        .dsr
                        .on_link_failure(next, packet, now, &mut acts);
                    self.apply_dsr(node, acts, out);
                }
            }
            MacAction::QueueDrop(frame) => {
                if let Some(Packet::Data(d)) = frame.packet {
                    self.drop_packet(d.id, DropCause::Ifq);
                }
            }
        }
    }

    fn apply_dsr(&mut self, node: usize, actions: Vec<DsrAction>, out: &mut Vec<MacAction>) {
        let now = self.now;
        for action in actions {
            match action {
                DsrAction::Send { to, packet, at } => {
                    if at <= now {
                        self.nodes[node]
                            .mac
                            .enqueue(to, packet, now, &mut self.rng_mac, out);
                    } else {
                        self.queue.push(
                            at,
                            Event::Send {
                                node: node as u32,
                                to,
                                packet,
                            },
                        );
                    }
                }
                DsrAction::Schedule { at, timer } => self.queue.push(
                    at,
                    Event::Dsr {
                        node: node as u32,
                        timer,
                    },
                ),
                DsrAction::Delivered(d) => {
                    let fate = &mut self.fates[d.id as usize];
                    if *fate != Fate::Received {
                        *fate = Fate::Received;
                        self.delay_sum += (now - d.created).as_secs_f64();
                    }
                }
                DsrAction::Dropped { packet_id, cause } => self.drop_packet(packet_id, cause),
            }
        }
    }

    fn drop_packet(&mut self, id: u64, cause: DropCause) {
        let fate = &mut self.fates[id as usize];
        if *fate == Fate::Pending {
            *fate = Fate::Dropped(cause);
        }
    }

    /// Puts `frame` on the air from `node`.
    fn transmit(&mut self, node: usize, frame: Frame) {
        let now = self.now;
        let tx = self.next_tx;
        self.next_tx += 1;
        let end = now + frame.tx_time;
        self.queue.push(end, Event::TxEnd { node: node as u32 });
        // half duplex: whatever we were receiving is lost
        for r in &mut self.nodes[node].receiving {
            r.1 = true;
        }
        let mut listeners = 0;
        for j in 0..self.nodes.len() {
            if j == node {
                continue;
            }
            let power = self.channel.sample_power(node, j, &mut self.rng_channel);
            let class = self.channel.classify(power);
            if class != Reception::Candidate && frame.addressed_to(NodeId(j as u32)) {
                self.losses.subthreshold += 1;
            }
            if class == Reception::Silent {
                continue;
            }
            let candidate = class == Reception::Candidate;
            let delay = self.channel.delay(node, j);
            let target = j as u32;
            self.queue.push(
                now + delay,
                Event::RxStart {
                    node: target,
                    tx,
                    candidate,
                },
            );
            self.queue.push(
                end + delay,
                Event::RxEnd {
                    node: target,
                    tx,
                    candidate,
                },
            );
            listeners += 1;
        }
        if listeners > 0 {
            self.air.insert(tx, Airborne { frame, listeners });
        }
    }

    pub fn report(&self) -> MetricsReport {
        let mut drops = DataDrops::default();
        let mut n_recvd = 0;
        let mut pending = Vec::new();
        for (id, fate) in self.fates.iter().enumerate() {
            match fate {
                Fate::Received => n_recvd += 1,
                Fate::Dropped(c) => drops.record(*c),
                Fate::Pending => pending.push(id as u64),
            }
        }
        let held = self.held_packets();
        let unaccounted = pending.iter().filter(|id| !held.contains(id)).count() as u64;

        let mut control = ControlCounts::default();
        let mut mac = MacTotals::default();
        for n in &self.nodes {
            let c = n.dsr.counters();
            control.discoveries += c.discoveries;
            control.rreq_sent += c.rreq_sent;
            control.rrep_sent += c.rrep_sent;
            control.rerr_sent += c.rerr_sent;
            control.cache_replies += c.cache_replies;
            let m = n.mac.counters();
            mac.rts_sent += m.rts_sent;
            mac.cts_sent += m.cts_sent;
            mac.data_sent += m.data_sent;
            mac.ack_sent += m.ack_sent;
            mac.broadcasts_sent += m.broadcasts_sent;
            mac.cts_timeouts += m.cts_timeouts;
            mac.ack_timeouts += m.ack_timeouts;
            mac.queue_drops += m.queue_drops;
        }
        let n_sent = self.fates.len() as u64;
        MetricsReport {
            seed: self.config.seed,
            n_sent,
            n_recvd,
            delivery_ratio: if n_sent > 0 {
                n_recvd as f64 / n_sent as f64
            } else {
                0.0
            },
            drops,
            in_flight_at_end: pending.len() as u64,
            unaccounted,
            frame_losses: self.losses,
            control,
            mac,
            mean_delay_s: if n_recvd > 0 {
                self.delay_sum / n_recvd as f64
            } else {
                0.0
            },
            events: self.events,
        }
    }

    /// Ids of data packets sitting in a send buffer, a MAC queue or a
    /// delayed hand-over.
    fn held_packets(&self) -> HashSet<u64> {
        let mut held = HashSet::new();
        for n in &self.nodes {
            held.extend(n.dsr.buffered().map(|p| p.id));
            held.extend(
                n.mac
                    .queued()
                    .filter_map(|f| f.packet.as_ref()?.data().map(|d| d.id)),
            );
        }
        for (_, e) in self.queue.pending() {
            if let Event::Send {
                packet: Packet::Data(d),
                ..
            } = e
            {
                held.insert(d.id);
            }
        }
        held
    }
}
