//! Per-node IEEE 802.11 DCF state machine.
//!
//! The MAC is a pure state machine: every entry point takes the current
//! time and pushes [`MacAction`]s for the engine to carry out (start a
//! transmission, arm a timer, hand a frame upward). Timers carry a
//! generation number so that re-arming implicitly cancels the old one.
//!
//! Contention follows the usual decrement-to-zero rule: the medium must be
//! idle for DIFS, then the backoff counter runs one slot at a time, freezing
//! whenever the medium turns busy and resuming after another idle DIFS.
//! Unicast frames larger than the RTS threshold use RTS/CTS/DATA/ACK;
//! broadcasts go out once, with no reservation and no acknowledgement.

use std::collections::{HashMap, VecDeque};

use rand::Rng;

use crate::error::ConfigError;
use crate::frame::{Dest, Frame, FrameKind, NodeId, Packet};
use crate::time::SimTime;

pub const RTS_BYTES: u32 = 20;
pub const CTS_BYTES: u32 = 14;
pub const ACK_BYTES: u32 = 14;
/// MAC header plus FCS added to every data-bearing MPDU.
pub const MAC_HEADER_BYTES: u32 = 28;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacParams {
    pub slot_time: SimTime,
    pub sifs: SimTime,
    pub difs: SimTime,
    pub cw_min: u32,
    pub cw_max: u32,
    /// Attempt limit for frames sent with an RTS/CTS reservation.
    pub long_retry_limit: u32,
    /// Attempt limit for frames sent with basic access (no RTS).
    pub short_retry_limit: u32,
    pub data_rate_bps: u64,
    /// Unicast MPDUs larger than this many bytes are preceded by RTS.
    pub rts_threshold: u32,
    /// PHY preamble and header time added to every frame.
    pub phy_overhead: SimTime,
    pub queue_capacity: usize,
}

impl Default for MacParams {
    fn default() -> Self {
        MacParams {
            slot_time: SimTime::from_micros(20),
            sifs: SimTime::from_micros(10),
            difs: SimTime::from_micros(50),
            cw_min: 31,
            cw_max: 1023,
            long_retry_limit: 7,
            short_retry_limit: 7,
            data_rate_bps: 2_000_000,
            rts_threshold: 0,
            phy_overhead: SimTime::from_micros(192),
            queue_capacity: 50,
        }
    }
}

impl MacParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.sifs == SimTime::ZERO || self.difs <= self.sifs {
            return Err(ConfigError::invalid("mac", "need difs > sifs > 0"));
        }
        if self.difs != self.sifs + self.slot_time * 2 {
            return Err(ConfigError::invalid(
                "mac",
                format!(
                    "difs ({}) must equal sifs + 2 slots ({})",
                    self.difs,
                    self.sifs + self.slot_time * 2
                ),
            ));
        }
        if self.cw_min > self.cw_max {
            return Err(ConfigError::invalid("mac", "cw_min must not exceed cw_max"));
        }
        if self.long_retry_limit == 0 || self.short_retry_limit == 0 {
            return Err(ConfigError::invalid("mac", "retry limits must be at least 1"));
        }
        if self.data_rate_bps == 0 {
            return Err(ConfigError::invalid("mac", "data rate must be positive"));
        }
        if self.queue_capacity == 0 {
            return Err(ConfigError::invalid("mac", "queue capacity must be positive"));
        }
        Ok(())
    }

    /// Airtime of an MPDU of `bytes` bytes.
    pub fn tx_time(&self, bytes: u32) -> SimTime {
        let ns = (bytes as u128 * 8 * 1_000_000_000).div_ceil(self.data_rate_bps as u128);
        self.phy_overhead + SimTime::from_nanos(ns as u64)
    }

    /// Window after a frame ends within which its response must finish.
    pub fn response_timeout(&self, response_bytes: u32) -> SimTime {
        self.sifs + self.tx_time(response_bytes) + self.slot_time
    }

    /// Next window in the binary exponential sequence 31, 63, 127, ...
    pub fn next_window(&self, cw: u32) -> u32 {
        (2 * (cw + 1) - 1).min(self.cw_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MacPhase {
    /// Nothing queued.
    Idle,
    /// Frame pending, medium idle, waiting out DIFS.
    DifsWait,
    /// Counting down backoff slots.
    Backoff,
    /// Frame pending but the medium (physical or NAV) is busy.
    Deferring,
    /// Own contention-won transmission (RTS, basic DATA or broadcast) in
    /// progress, or the DATA that follows a CTS is about to go out.
    Transmitting,
    AwaitCts,
    AwaitAck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MacTimer {
    Contention(u64),
    Timeout(u64),
    SifsTx(u64),
    NavEnd,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MacAction {
    /// Put this frame on the air now.
    Transmit(Frame),
    Schedule { at: SimTime, timer: MacTimer },
    /// A data-bearing frame (data or routing) arrived for the upper layer.
    Deliver(Frame),
    /// Unicast frame acknowledged, or broadcast sent.
    Sent(Frame),
    /// Retry limit exhausted; the frame is discarded.
    LinkFailure(Frame),
    /// Transmit queue full; the frame was not accepted.
    QueueDrop(Frame),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MacCounters {
    pub rts_sent: u64,
    pub cts_sent: u64,
    pub data_sent: u64,
    pub ack_sent: u64,
    pub broadcasts_sent: u64,
    pub cts_timeouts: u64,
    pub ack_timeouts: u64,
    pub retry_drops: u64,
    pub queue_drops: u64,
    pub duplicates: u64,
}

#[derive(Debug, Clone)]
pub struct Mac {
    id: NodeId,
    params: MacParams,
    queue: VecDeque<Frame>,
    phase: MacPhase,
    nav_expiry: SimTime,
    sensed: u32,
    on_air: Option<FrameKind>,
    backoff_slots: u32,
    backoff_started: SimTime,
    cw: u32,
    retry_count: u32,
    contention_gen: u64,
    timeout_gen: u64,
    sifs_gen: u64,
    sifs_frame: Option<Frame>,
    next_seq: u32,
    last_seq: HashMap<NodeId, u32>,
    counters: MacCounters,
}

impl Mac {
    pub fn new(id: NodeId, params: MacParams) -> Self {
        Mac {
            id,
            params,
            queue: VecDeque::new(),
            phase: MacPhase::Idle,
            nav_expiry: SimTime::ZERO,
            sensed: 0,
            on_air: None,
            backoff_slots: 0,
            backoff_started: SimTime::ZERO,
            cw: params.cw_min,
            retry_count: 0,
            contention_gen: 0,
            timeout_gen: 0,
            sifs_gen: 0,
            sifs_frame: None,
            next_seq: 0,
            last_seq: HashMap::new(),
            counters: MacCounters::default(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn params(&self) -> &MacParams {
        &self.params
    }

    pub fn phase(&self) -> MacPhase {
        self.phase
    }

    pub fn nav_expiry(&self) -> SimTime {
        self.nav_expiry
    }

    pub fn contention_window(&self) -> u32 {
        self.cw
    }

    pub fn backoff_slots(&self) -> u32 {
        self.backoff_slots
    }

    pub fn retry_count(&self) -> u32 {
        self.retry_count
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn queued(&self) -> impl Iterator<Item = &Frame> {
        self.queue.iter()
    }

    pub fn current_frame(&self) -> Option<&Frame> {
        self.queue.front()
    }

    pub fn is_transmitting(&self) -> bool {
        self.on_air.is_some()
    }

    pub fn counters(&self) -> &MacCounters {
        &self.counters
    }

    /// Physical or virtual carrier sense reports the channel busy. Our own
    /// transmission counts as busy.
    pub fn medium_busy(&self, now: SimTime) -> bool {
        self.sensed > 0 || self.on_air.is_some() || now < self.nav_expiry
    }

    /// Wraps a network-layer packet in an MPDU and queues it.
    pub fn enqueue<R: Rng + ?Sized>(
        &mut self,
        dst: Dest,
        packet: Packet,
        now: SimTime,
        rng: &mut R,
        out: &mut Vec<MacAction>,
    ) {
        let bytes = packet.size_bytes() + MAC_HEADER_BYTES;
        let frame = Frame {
            kind: packet.frame_kind(),
            src: self.id,
            dst,
            duration: SimTime::ZERO,
            payload_bytes: bytes,
            tx_time: self.params.tx_time(bytes),
            seq: self.next_seq,
            packet: Some(packet),
        };
        self.next_seq = self.next_seq.wrapping_add(1);
        self.enqueue_frame(frame, now, rng, out);
    }

    pub fn enqueue_frame<R: Rng + ?Sized>(
        &mut self,
        frame: Frame,
        now: SimTime,
        rng: &mut R,
        out: &mut Vec<MacAction>,
    ) {
        debug_assert_eq!(frame.src, self.id);
        if self.queue.len() >= self.params.queue_capacity {
            self.counters.queue_drops += 1;
            out.push(MacAction::QueueDrop(frame));
            return;
        }
        self.queue.push_back(frame);
        if self.phase == MacPhase::Idle {
            self.start_backoff(rng);
            self.phase = MacPhase::Deferring;
            self.reevaluate(now, out);
        }
    }

    /// Draws a fresh backoff count, uniform over `[0, cw]`.
    pub fn start_backoff<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.backoff_slots = rng.random_range(0..=self.cw);
    }

    pub fn on_carrier_start(&mut self, now: SimTime, out: &mut Vec<MacAction>) {
        self.sensed += 1;
        self.reevaluate(now, out);
    }

    pub fn on_carrier_end(&mut self, now: SimTime, out: &mut Vec<MacAction>) {
        debug_assert!(self.sensed > 0);
        self.sensed = self.sensed.saturating_sub(1);
        self.reevaluate(now, out);
    }

    /// Reacts to a change of the medium state.
    fn reevaluate(&mut self, now: SimTime, out: &mut Vec<MacAction>) {
        let busy = self.medium_busy(now);
        match self.phase {
            MacPhase::DifsWait | MacPhase::Backoff if busy => {
                if self.phase == MacPhase::Backoff {
                    let elapsed = now.saturating_sub(self.backoff_started).as_nanos();
                    let slots = elapsed / self.params.slot_time.as_nanos().max(1);
                    self.backoff_slots -= (slots as u32).min(self.backoff_slots);
                }
                self.contention_gen += 1;
                self.phase = MacPhase::Deferring;
            }
            MacPhase::Deferring if !busy => {
                self.contention_gen += 1;
                self.phase = MacPhase::DifsWait;
                out.push(MacAction::Schedule {
                    at: now + self.params.difs,
                    timer: MacTimer::Contention(self.contention_gen),
                });
            }
            _ => {}
        }
    }

    pub fn on_timer<R: Rng + ?Sized>(
        &mut self,
        timer: MacTimer,
        now: SimTime,
        rng: &mut R,
        out: &mut Vec<MacAction>,
    ) {
        match timer {
            MacTimer::Contention(gen) if gen == self.contention_gen => match self.phase {
                MacPhase::DifsWait if self.backoff_slots == 0 => self.transmit_head(now, out),
                MacPhase::DifsWait => {
                    self.phase = MacPhase::Backoff;
                    self.backoff_started = now;
                    self.contention_gen += 1;
                    out.push(MacAction::Schedule {
                        at: now + self.params.slot_time * self.backoff_slots as u64,
                        timer: MacTimer::Contention(self.contention_gen),
                    });
                }
                MacPhase::Backoff => {
                    self.backoff_slots = 0;
                    self.transmit_head(now, out);
                }
                _ => {}
            },
            MacTimer::Timeout(gen) if gen == self.timeout_gen => {
                if matches!(self.phase, MacPhase::AwaitCts | MacPhase::AwaitAck) {
                    self.on_timeout(now, rng, out);
                }
            }
            MacTimer::SifsTx(gen) if gen == self.sifs_gen => {
                if let Some(frame) = self.sifs_frame.take() {
                    if self.on_air.is_none() {
                        self.put_on_air(frame, out);
                        // a pending DIFS or backoff must freeze under our own response
                        self.reevaluate(now, out);
                    }
                }
            }
            MacTimer::NavEnd => self.reevaluate(now, out),
            _ => {}
        }
    }

    fn uses_rts(&self, frame: &Frame) -> bool {
        !frame.is_broadcast() && frame.payload_bytes > self.params.rts_threshold
    }

    fn transmit_head(&mut self, now: SimTime, out: &mut Vec<MacAction>) {
        debug_assert!(!self.medium_busy(now), "contention won on a busy medium");
        let head = self.queue.front().expect("contending without a frame").clone();
        self.phase = MacPhase::Transmitting;
        let p = self.params;
        let frame = if head.is_broadcast() {
            head
        } else if self.uses_rts(&head) {
            let duration = p.sifs * 3 + p.tx_time(CTS_BYTES) + head.tx_time + p.tx_time(ACK_BYTES);
            self.control_frame(FrameKind::Rts, head.dst, duration, RTS_BYTES)
        } else {
            Frame {
                duration: p.sifs + p.tx_time(ACK_BYTES),
                ..head
            }
        };
        self.put_on_air(frame, out);
    }

    fn control_frame(&self, kind: FrameKind, dst: Dest, duration: SimTime, bytes: u32) -> Frame {
        Frame {
            kind,
            src: self.id,
            dst,
            duration,
            payload_bytes: bytes,
            tx_time: self.params.tx_time(bytes),
            seq: 0,
            packet: None,
        }
    }

    fn put_on_air(&mut self, frame: Frame, out: &mut Vec<MacAction>) {
        match frame.kind {
            FrameKind::Rts => self.counters.rts_sent += 1,
            FrameKind::Cts => self.counters.cts_sent += 1,
            FrameKind::Ack => self.counters.ack_sent += 1,
            _ if frame.is_broadcast() => self.counters.broadcasts_sent += 1,
            _ => self.counters.data_sent += 1,
        }
        self.on_air = Some(frame.kind);
        out.push(MacAction::Transmit(frame));
    }

    /// Our transmission left the antenna.
    pub fn on_tx_end<R: Rng + ?Sized>(&mut self, now: SimTime, rng: &mut R, out: &mut Vec<MacAction>) {
        let Some(kind) = self.on_air.take() else {
            return;
        };
        if self.phase == MacPhase::Transmitting && !matches!(kind, FrameKind::Cts | FrameKind::Ack) {
            let head_broadcast = self.queue.front().is_some_and(Frame::is_broadcast);
            if head_broadcast {
                self.finish_head(now, rng, out, true);
            } else if kind == FrameKind::Rts {
                self.await_response(MacPhase::AwaitCts, now + self.params.response_timeout(CTS_BYTES), out);
            } else {
                self.await_response(MacPhase::AwaitAck, now + self.params.response_timeout(ACK_BYTES), out);
            }
        }
        self.reevaluate(now, out);
    }

    fn await_response(&mut self, phase: MacPhase, deadline: SimTime, out: &mut Vec<MacAction>) {
        self.phase = phase;
        self.timeout_gen += 1;
        out.push(MacAction::Schedule {
            at: deadline,
            timer: MacTimer::Timeout(self.timeout_gen),
        });
    }

    fn can_respond(&self, now: SimTime) -> bool {
        self.on_air.is_none()
            && self.sifs_frame.is_none()
            && !matches!(
                self.phase,
                MacPhase::Transmitting | MacPhase::AwaitCts | MacPhase::AwaitAck
            )
            && now >= self.nav_expiry
    }

    fn schedule_sifs(&mut self, frame: Frame, now: SimTime, out: &mut Vec<MacAction>) {
        self.sifs_gen += 1;
        self.sifs_frame = Some(frame);
        out.push(MacAction::Schedule {
            at: now + self.params.sifs,
            timer: MacTimer::SifsTx(self.sifs_gen),
        });
    }

    /// A frame was decoded cleanly at this node.
    pub fn on_frame_received<R: Rng + ?Sized>(
        &mut self,
        frame: Frame,
        now: SimTime,
        rng: &mut R,
        out: &mut Vec<MacAction>,
    ) {
        if frame.is_broadcast() {
            out.push(MacAction::Deliver(frame));
            return;
        }
        if !frame.addressed_to(self.id) {
            self.update_nav(now + frame.duration, now, out);
            return;
        }
        let p = self.params;
        match frame.kind {
            FrameKind::Rts => {
                if self.can_respond(now) {
                    let remaining = frame
                        .duration
                        .saturating_sub(p.sifs + p.tx_time(CTS_BYTES));
                    let cts = self.control_frame(FrameKind::Cts, Dest::Node(frame.src), remaining, CTS_BYTES);
                    self.schedule_sifs(cts, now, out);
                }
            }
            FrameKind::Cts => {
                let expected = self.queue.front().map(|f| f.dst);
                // a CTS heard mid-transmission cannot be answered; let the timeout retry
                if self.phase == MacPhase::AwaitCts
                    && self.on_air.is_none()
                    && expected == Some(Dest::Node(frame.src))
                {
                    self.timeout_gen += 1;
                    self.phase = MacPhase::Transmitting;
                    let head = self.queue.front().expect("awaiting CTS without a frame");
                    let data = Frame {
                        duration: p.sifs + p.tx_time(ACK_BYTES),
                        ..head.clone()
                    };
                    self.sifs_gen += 1;
                    self.sifs_frame = Some(data);
                    out.push(MacAction::Schedule {
                        at: now + p.sifs,
                        timer: MacTimer::SifsTx(self.sifs_gen),
                    });
                }
            }
            FrameKind::Ack => {
                let expected = self.queue.front().map(|f| f.dst);
                if self.phase == MacPhase::AwaitAck && expected == Some(Dest::Node(frame.src)) {
                    self.timeout_gen += 1;
                    self.finish_head(now, rng, out, true);
                }
            }
            FrameKind::Data | FrameKind::Rreq | FrameKind::Rrep | FrameKind::Rerr => {
                if self.on_air.is_none() && self.sifs_frame.is_none() {
                    let ack = self.control_frame(FrameKind::Ack, Dest::Node(frame.src), SimTime::ZERO, ACK_BYTES);
                    self.schedule_sifs(ack, now, out);
                }
                if self.last_seq.get(&frame.src) == Some(&frame.seq) {
                    self.counters.duplicates += 1;
                } else {
                    self.last_seq.insert(frame.src, frame.seq);
                    out.push(MacAction::Deliver(frame));
                }
            }
        }
    }

    fn update_nav(&mut self, until: SimTime, now: SimTime, out: &mut Vec<MacAction>) {
        if until > self.nav_expiry {
            self.nav_expiry = until;
            out.push(MacAction::Schedule {
                at: until,
                timer: MacTimer::NavEnd,
            });
            self.reevaluate(now, out);
        }
    }

    /// The CTS or ACK we were waiting for never arrived.
    pub fn on_timeout<R: Rng + ?Sized>(&mut self, now: SimTime, rng: &mut R, out: &mut Vec<MacAction>) {
        match self.phase {
            MacPhase::AwaitCts => self.counters.cts_timeouts += 1,
            MacPhase::AwaitAck => self.counters.ack_timeouts += 1,
            _ => return,
        }
        self.retry_count += 1;
        let limit = match self.queue.front() {
            Some(f) if self.uses_rts(f) => self.params.long_retry_limit,
            _ => self.params.short_retry_limit,
        };
        if self.retry_count >= limit {
            self.counters.retry_drops += 1;
            self.finish_head(now, rng, out, false);
        } else {
            self.cw = self.params.next_window(self.cw);
            self.start_backoff(rng);
            self.phase = MacPhase::Deferring;
            self.reevaluate(now, out);
        }
    }

    /// Retires the head frame and moves on to the next one.
    fn finish_head<R: Rng + ?Sized>(&mut self, now: SimTime, rng: &mut R, out: &mut Vec<MacAction>, ok: bool) {
        let frame = self.queue.pop_front().expect("finishing without a frame");
        out.push(if ok {
            MacAction::Sent(frame)
        } else {
            MacAction::LinkFailure(frame)
        });
        self.retry_count = 0;
        self.cw = self.params.cw_min;
        if self.queue.is_empty() {
            self.phase = MacPhase::Idle;
        } else {
            self.start_backoff(rng);
            self.phase = MacPhase::Deferring;
            self.reevaluate(now, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{DataPacket, RouteRequest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn data(to: u32) -> Packet {
        Packet::Data(DataPacket {
            id: 0,
            flow: 0,
            created: SimTime::ZERO,
            bytes: 512,
            route: vec![NodeId(0), NodeId(to)],
            hop: 0,
        })
    }

    fn rreq() -> Packet {
        Packet::Rreq(RouteRequest {
            origin: NodeId(0),
            seq: 0,
            target: NodeId(9),
            record: vec![NodeId(0)],
        })
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn timers(out: &[MacAction]) -> Vec<(SimTime, MacTimer)> {
        out.iter()
            .filter_map(|a| match a {
                MacAction::Schedule { at, timer } => Some((*at, *timer)),
                _ => None,
            })
            .collect()
    }

    fn transmitted(out: &[MacAction]) -> Vec<Frame> {
        out.iter()
            .filter_map(|a| match a {
                MacAction::Transmit(f) => Some(f.clone()),
                _ => None,
            })
            .collect()
    }

    /// Runs contention timers until the MAC transmits.
    fn win_contention(mac: &mut Mac, mut now: SimTime, rng: &mut ChaCha8Rng, mut out: Vec<MacAction>) -> (SimTime, Frame) {
        loop {
            if let Some(f) = transmitted(&out).pop() {
                return (now, f);
            }
            let (at, timer) = *timers(&out)
                .iter()
                .rfind(|(_, t)| matches!(t, MacTimer::Contention(_)))
                .expect("no contention timer armed");
            now = at;
            out.clear();
            mac.on_timer(timer, now, rng, &mut out);
        }
    }

    #[test]
    fn params_validation() {
        assert!(MacParams::default().validate().is_ok());
        let bad = MacParams {
            difs: SimTime::from_micros(60),
            ..MacParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = MacParams {
            cw_min: 2000,
            ..MacParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = MacParams {
            long_retry_limit: 0,
            ..MacParams::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn window_doubling_sequence() {
        let p = MacParams::default();
        let mut cw = p.cw_min;
        let mut seq = vec![cw];
        for _ in 0..7 {
            cw = p.next_window(cw);
            seq.push(cw);
        }
        assert_eq!(seq, vec![31, 63, 127, 255, 511, 1023, 1023, 1023]);
    }

    #[test]
    fn enqueue_on_idle_medium_waits_difs() {
        let mut mac = Mac::new(NodeId(0), MacParams::default());
        let mut out = Vec::new();
        mac.enqueue(Dest::Node(NodeId(1)), data(1), SimTime::ZERO, &mut rng(), &mut out);
        assert_eq!(mac.phase(), MacPhase::DifsWait);
        assert_eq!(mac.contention_window(), 31);
        assert!(mac.backoff_slots() <= 31);
        assert_eq!(timers(&out)[0].0, SimTime::from_micros(50));
    }

    #[test]
    fn enqueue_on_busy_medium_defers() {
        let mut mac = Mac::new(NodeId(0), MacParams::default());
        let mut out = Vec::new();
        mac.on_carrier_start(SimTime::ZERO, &mut out);
        mac.enqueue(Dest::Node(NodeId(1)), data(1), SimTime::ZERO, &mut rng(), &mut out);
        assert_eq!(mac.phase(), MacPhase::Deferring);
        assert!(timers(&out).is_empty());
        mac.on_carrier_end(SimTime::from_micros(300), &mut out);
        assert_eq!(mac.phase(), MacPhase::DifsWait);
    }

    #[test]
    fn queue_overflow_drops_the_51st_frame() {
        let mut mac = Mac::new(NodeId(0), MacParams::default());
        let mut out = Vec::new();
        let mut r = rng();
        for _ in 0..50 {
            mac.enqueue(Dest::Node(NodeId(1)), data(1), SimTime::ZERO, &mut r, &mut out);
        }
        out.clear();
        mac.enqueue(Dest::Node(NodeId(1)), data(1), SimTime::ZERO, &mut r, &mut out);
        assert!(matches!(out.as_slice(), [MacAction::QueueDrop(_)]));
        assert_eq!(mac.queue_len(), 50);
        assert_eq!(mac.counters().queue_drops, 1);
    }

    #[test]
    fn zero_backoff_transmits_right_after_difs() {
        let mut mac = Mac::new(NodeId(0), MacParams::default());
        let mut out = Vec::new();
        let mut r = rng();
        mac.enqueue(Dest::Broadcast, rreq(), SimTime::ZERO, &mut r, &mut out);
        mac.backoff_slots = 0;
        let (at, timer) = timers(&out)[0];
        out.clear();
        mac.on_timer(timer, at, &mut r, &mut out);
        let sent = transmitted(&out);
        assert_eq!(sent.len(), 1);
        assert_eq!(sent[0].kind, FrameKind::Rreq);
        assert_eq!(at, SimTime::from_micros(50));
    }

    #[test]
    fn backoff_freezes_and_resumes() {
        let p = MacParams::default();
        let mut mac = Mac::new(NodeId(0), p);
        let mut out = Vec::new();
        let mut r = rng();
        mac.enqueue(Dest::Broadcast, rreq(), SimTime::ZERO, &mut r, &mut out);
        mac.backoff_slots = 10;
        let (at, timer) = timers(&out)[0];
        out.clear();
        mac.on_timer(timer, at, &mut r, &mut out);
        assert_eq!(mac.phase(), MacPhase::Backoff);
        // busy after 3.5 slots: 3 whole slots consumed
        let busy_at = at + SimTime::from_micros(70);
        mac.on_carrier_start(busy_at, &mut out);
        assert_eq!(mac.phase(), MacPhase::Deferring);
        assert_eq!(mac.backoff_slots(), 7);
        out.clear();
        let idle_at = busy_at + SimTime::from_micros(500);
        mac.on_carrier_end(idle_at, &mut out);
        let (frozen_until, _) = timers(&out)[0];
        assert_eq!(frozen_until, idle_at + p.difs);
        let (sent_at, _) = win_contention(&mut mac, idle_at, &mut r, out);
        assert_eq!(sent_at, idle_at + p.difs + p.slot_time * 7);
    }

    #[test]
    fn overheard_rts_sets_nav_monotonically() {
        let mut mac = Mac::new(NodeId(5), MacParams::default());
        let mut out = Vec::new();
        let mut r = rng();
        let now = SimTime::from_millis(1);
        let rts = |dur| Frame {
            kind: FrameKind::Rts,
            src: NodeId(1),
            dst: Dest::Node(NodeId(2)),
            duration: dur,
            payload_bytes: RTS_BYTES,
            tx_time: SimTime::from_micros(272),
            seq: 0,
            packet: None,
        };
        mac.on_frame_received(rts(SimTime::from_millis(3)), now, &mut r, &mut out);
        assert_eq!(mac.nav_expiry(), now + SimTime::from_millis(3));
        assert!(mac.medium_busy(now + SimTime::from_millis(2)));
        mac.on_frame_received(rts(SimTime::from_millis(1)), now, &mut r, &mut out);
        assert_eq!(mac.nav_expiry(), now + SimTime::from_millis(3));
        assert!(!mac.medium_busy(now + SimTime::from_millis(3)));
    }

    #[test]
    fn medium_idle_without_carriers_or_nav() {
        let mac = Mac::new(NodeId(0), MacParams::default());
        assert!(!mac.medium_busy(SimTime::from_millis(5)));
    }

    #[test]
    fn rts_gets_cts_after_sifs_and_data_gets_ack() {
        let p = MacParams::default();
        let mut rx = Mac::new(NodeId(2), p);
        let mut out = Vec::new();
        let mut r = rng();
        let now = SimTime::from_millis(1);
        let rts = Frame {
            kind: FrameKind::Rts,
            src: NodeId(1),
            dst: Dest::Node(NodeId(2)),
            duration: SimTime::from_millis(3),
            payload_bytes: RTS_BYTES,
            tx_time: p.tx_time(RTS_BYTES),
            seq: 0,
            packet: None,
        };
        rx.on_frame_received(rts, now, &mut r, &mut out);
        let (at, timer) = timers(&out)[0];
        assert_eq!(at, now + p.sifs);
        out.clear();
        rx.on_timer(timer, at, &mut r, &mut out);
        let cts = &transmitted(&out)[0];
        assert_eq!(cts.kind, FrameKind::Cts);
        assert_eq!(cts.dst, Dest::Node(NodeId(1)));
        assert_eq!(cts.duration, SimTime::from_millis(3) - p.sifs - p.tx_time(CTS_BYTES));
        out.clear();
        rx.on_tx_end(at + cts.tx_time, &mut r, &mut out);

        let t = SimTime::from_millis(4);
        let frame = Frame {
            kind: FrameKind::Data,
            src: NodeId(1),
            dst: Dest::Node(NodeId(2)),
            duration: p.sifs + p.tx_time(ACK_BYTES),
            payload_bytes: 600,
            tx_time: p.tx_time(600),
            seq: 3,
            packet: Some(data(2)),
        };
        out.clear();
        rx.on_frame_received(frame.clone(), t, &mut r, &mut out);
        assert!(out.iter().any(|a| matches!(a, MacAction::Deliver(_))));
        assert_eq!(timers(&out)[0].0, t + p.sifs);
        // a retransmission of the same frame is acknowledged, not delivered twice
        let (at, timer) = timers(&out)[0];
        out.clear();
        rx.on_timer(timer, at, &mut r, &mut out);
        rx.on_tx_end(at + p.tx_time(ACK_BYTES), &mut r, &mut out);
        out.clear();
        rx.on_frame_received(frame, SimTime::from_millis(6), &mut r, &mut out);
        assert!(!out.iter().any(|a| matches!(a, MacAction::Deliver(_))));
        assert_eq!(rx.counters().duplicates, 1);
    }

    #[test]
    fn full_exchange_from_sender_side() {
        let p = MacParams::default();
        let mut tx = Mac::new(NodeId(1), p);
        let mut r = rng();
        let mut out = Vec::new();
        tx.enqueue(Dest::Node(NodeId(2)), data(2), SimTime::ZERO, &mut r, &mut out);
        let (t0, rts) = win_contention(&mut tx, SimTime::ZERO, &mut r, out);
        assert_eq!(rts.kind, FrameKind::Rts);
        let mut out = Vec::new();
        let t1 = t0 + rts.tx_time;
        tx.on_tx_end(t1, &mut r, &mut out);
        assert_eq!(tx.phase(), MacPhase::AwaitCts);
        // CTS arrives just inside the timeout window
        let deadline = timers(&out)[0].0;
        assert_eq!(deadline, t1 + p.response_timeout(CTS_BYTES));
        let cts = Frame {
            kind: FrameKind::Cts,
            src: NodeId(2),
            dst: Dest::Node(NodeId(1)),
            duration: SimTime::ZERO,
            payload_bytes: CTS_BYTES,
            tx_time: p.tx_time(CTS_BYTES),
            seq: 0,
            packet: None,
        };
        out.clear();
        let t2 = deadline - SimTime::from_nanos(1);
        tx.on_frame_received(cts, t2, &mut r, &mut out);
        assert_eq!(tx.retry_count(), 0);
        let (at, timer) = timers(&out)[0];
        assert_eq!(at, t2 + p.sifs);
        out.clear();
        // the stale CTS timeout no longer fires
        tx.on_timer(MacTimer::Timeout(1), deadline, &mut r, &mut out);
        assert_eq!(tx.retry_count(), 0);
        tx.on_timer(timer, at, &mut r, &mut out);
        let data_frame = transmitted(&out).pop().unwrap();
        assert_eq!(data_frame.kind, FrameKind::Data);
        out.clear();
        tx.on_tx_end(at + data_frame.tx_time, &mut r, &mut out);
        assert_eq!(tx.phase(), MacPhase::AwaitAck);
        let ack = Frame {
            kind: FrameKind::Ack,
            src: NodeId(2),
            dst: Dest::Node(NodeId(1)),
            duration: SimTime::ZERO,
            payload_bytes: ACK_BYTES,
            tx_time: p.tx_time(ACK_BYTES),
            seq: 0,
            packet: None,
        };
        out.clear();
        tx.on_frame_received(ack, at + data_frame.tx_time + SimTime::from_micros(300), &mut r, &mut out);
        assert!(out.iter().any(|a| matches!(a, MacAction::Sent(_))));
        assert_eq!(tx.phase(), MacPhase::Idle);
    }

    fn exhaust(limit: u32) -> (u32, Vec<u32>) {
        let p = MacParams {
            long_retry_limit: limit,
            ..MacParams::default()
        };
        let mut tx = Mac::new(NodeId(1), p);
        let mut r = rng();
        let mut out = Vec::new();
        let mut now = SimTime::ZERO;
        tx.enqueue(Dest::Node(NodeId(2)), data(2), now, &mut r, &mut out);
        let mut attempts = 0;
        let mut windows = Vec::new();
        loop {
            windows.push(tx.contention_window());
            let (t, rts) = win_contention(&mut tx, now, &mut r, std::mem::take(&mut out));
            attempts += 1;
            now = t + rts.tx_time;
            tx.on_tx_end(now, &mut r, &mut out);
            let (deadline, timer) = timers(&out)
                .into_iter()
                .rfind(|(_, t)| matches!(t, MacTimer::Timeout(_)))
                .unwrap();
            out.clear();
            now = deadline;
            tx.on_timer(timer, now, &mut r, &mut out);
            if out.iter().any(|a| matches!(a, MacAction::LinkFailure(_))) {
                assert_eq!(tx.phase(), MacPhase::Idle);
                assert_eq!(tx.retry_count(), 0);
                return (attempts, windows);
            }
            assert!(tx.retry_count() < limit);
        }
    }

    #[test]
    fn retry_limit_seven_drops_after_seven_attempts() {
        let (attempts, windows) = exhaust(7);
        assert_eq!(attempts, 7);
        assert_eq!(windows, vec![31, 63, 127, 255, 511, 1023, 1023]);
    }

    #[test]
    fn retry_limit_twelve_adds_five_attempts() {
        assert_eq!(exhaust(12).0, 12);
    }

    #[test]
    fn broadcast_goes_out_once_without_rts() {
        let mut mac = Mac::new(NodeId(0), MacParams::default());
        let mut r = rng();
        let mut out = Vec::new();
        mac.enqueue(Dest::Broadcast, rreq(), SimTime::ZERO, &mut r, &mut out);
        let (t, f) = win_contention(&mut mac, SimTime::ZERO, &mut r, out);
        assert_eq!(f.kind, FrameKind::Rreq);
        assert_eq!(f.duration, SimTime::ZERO);
        let mut out = Vec::new();
        mac.on_tx_end(t + f.tx_time, &mut r, &mut out);
        assert!(matches!(out[0], MacAction::Sent(_)));
        assert!(timers(&out).is_empty());
        assert_eq!(mac.phase(), MacPhase::Idle);
        assert_eq!(mac.counters().rts_sent, 0);
    }
}
