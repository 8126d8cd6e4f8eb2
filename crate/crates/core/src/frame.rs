//! Over-the-air units and the routing packets they carry.

use std::fmt;

use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dest {
    Node(NodeId),
    Broadcast,
}

impl Dest {
    pub fn node(self) -> Option<NodeId> {
        match self {
            Dest::Node(n) => Some(n),
            Dest::Broadcast => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameKind {
    Rts,
    Cts,
    Data,
    Ack,
    Rreq,
    Rrep,
    Rerr,
}

impl FrameKind {
    pub fn is_control(self) -> bool {
        matches!(self, FrameKind::Rts | FrameKind::Cts | FrameKind::Ack)
    }
}

/// A route as a node-id sequence, first element is the sender side.
pub type Route = Vec<NodeId>;

pub fn is_loop_free(route: &[NodeId]) -> bool {
    route
        .iter()
        .enumerate()
        .all(|(i, n)| !route[..i].contains(n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataPacket {
    /// Unique per run; used for fate accounting.
    pub id: u64,
    pub flow: u32,
    pub created: SimTime,
    pub bytes: u32,
    /// Full source route, origin first.
    pub route: Route,
    /// Index in `route` of the node currently holding the packet.
    pub hop: usize,
}

impl DataPacket {
    pub fn origin(&self) -> NodeId {
        self.route[0]
    }

    pub fn destination(&self) -> NodeId {
        *self.route.last().expect("source route is never empty")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteRequest {
    pub origin: NodeId,
    pub seq: u32,
    pub target: NodeId,
    /// Accumulated route record, origin first.
    pub record: Route,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteReply {
    /// Discovered route from the requesting origin to the target.
    pub route: Route,
    /// Source route the reply travels on, replier first, origin last.
    pub path: Route,
    pub hop: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteError {
    /// Upstream and downstream end of the failed link.
    pub broken_link: (NodeId, NodeId),
    /// Nodes to notify, detecting node first, stranded packet's source last.
    pub path: Route,
    pub hop: usize,
}

/// Network-layer payload of a frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Packet {
    Data(DataPacket),
    Rreq(RouteRequest),
    Rrep(RouteReply),
    Rerr(RouteError),
}

impl Packet {
    pub fn frame_kind(&self) -> FrameKind {
        match self {
            Packet::Data(_) => FrameKind::Data,
            Packet::Rreq(_) => FrameKind::Rreq,
            Packet::Rrep(_) => FrameKind::Rrep,
            Packet::Rerr(_) => FrameKind::Rerr,
        }
    }

    /// Network-layer size: IP header, DSR option header and 4 bytes per
    /// listed address, plus the application payload for data.
    pub fn size_bytes(&self) -> u32 {
        const IP: u32 = 20;
        const DSR: u32 = 4;
        let addrs = |r: &Route| 4 * r.len() as u32;
        match self {
            Packet::Data(d) => IP + DSR + addrs(&d.route) + d.bytes,
            Packet::Rreq(r) => IP + DSR + 8 + addrs(&r.record),
            Packet::Rrep(r) => IP + DSR + 4 + addrs(&r.route) + addrs(&r.path),
            Packet::Rerr(r) => IP + DSR + 12 + addrs(&r.path),
        }
    }

    pub fn data(&self) -> Option<&DataPacket> {
        match self {
            Packet::Data(d) => Some(d),
            _ => None,
        }
    }
}

/// One MAC transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub kind: FrameKind,
    pub src: NodeId,
    pub dst: Dest,
    /// NAV reservation carried in the header.
    pub duration: SimTime,
    /// MPDU size on air (MAC header included, PHY preamble excluded).
    pub payload_bytes: u32,
    pub tx_time: SimTime,
    /// Per-sender sequence number for duplicate filtering.
    pub seq: u32,
    pub packet: Option<Packet>,
}

impl Frame {
    pub fn is_broadcast(&self) -> bool {
        self.dst == Dest::Broadcast
    }

    pub fn addressed_to(&self, node: NodeId) -> bool {
        self.dst == Dest::Node(node)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loop_detection() {
        let r = |v: &[u32]| v.iter().map(|&i| NodeId(i)).collect::<Vec<_>>();
        assert!(is_loop_free(&r(&[1, 6, 7, 5])));
        assert!(!is_loop_free(&r(&[1, 6, 1, 5])));
        assert!(is_loop_free(&[]));
    }
}
